//! Turns a parsed config into library calls and files.

use std::any::Any;

use jumpflow::brackets::{bracket_chain, Convention, GridSpec};
use jumpflow::coeffs::{families, CoefficientSet};
use jumpflow::flow::{moment_report, DefectObserver, SimConfig, Simulator};
use jumpflow::kernel::{self, DuhamelOptions};
use jumpflow::levy::{LevyModel, Profile};
use jumpflow::malliavin::{laplace_scan, Covariance};
use jumpflow::operator::{Operator, OperatorKind, OperatorSpec, Resolution, TestFunction};
use jumpflow::reversal::{reversal_check, ReversalMode};
use jumpflow::{par, Matrix, Vector};
use serde_json::{json, Value};

use crate::config::*;
use crate::output::{coord_header, Csv, OutputDir};
use crate::CliError;

/// Largest state dimension the runner dispatches to.
pub const MAX_DIM: usize = 3;

/// Runs the configured task, writes its CSV (if any) and returns the body of
/// the JSON sidecar.
pub fn execute(cfg: &ExperimentConfig, out: &OutputDir) -> Result<Value, CliError> {
    match cfg.system.dim {
        1 => Runner::<1>::new(cfg)?.run(out),
        2 => Runner::<2>::new(cfg)?.run(out),
        3 => Runner::<3>::new(cfg)?.run(out),
        d => Err(CliError::Validation(format!("system.dim: must lie in 1..={MAX_DIM}, got {d}"))),
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn vector<const D: usize>(field: &str, v: &[f64]) -> Result<Vector<D>, CliError> {
    if v.len() != D {
        return Err(invalid(format!("{field}: expected {D} components, got {}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(invalid(format!("{field}: components must be finite")));
    }
    Ok(Vector::<D>::from_column_slice(v))
}

fn matrix<const D: usize>(field: &str, v: &[f64]) -> Result<Matrix<D>, CliError> {
    if v.len() != D * D {
        return Err(invalid(format!("{field}: expected {} entries (row-major), got {}", D * D, v.len())));
    }
    Ok(Matrix::<D>::from_row_slice(v))
}

fn points<const D: usize>(field: &str, pts: &[Vec<f64>]) -> Result<Vec<Vector<D>>, CliError> {
    if pts.is_empty() {
        return Err(invalid(format!("{field}: at least one point is required")));
    }
    pts.iter().enumerate().map(|(i, p)| vector::<D>(&format!("{field}[{i}]"), p)).collect()
}

/// Reinterprets a fixed-dimension family as dimension `D` when they agree.
fn exact_dim<const D: usize, const E: usize>(c: CoefficientSet<E>, family: &str) -> Result<CoefficientSet<D>, CliError> {
    let boxed: Box<dyn Any> = Box::new(c);
    boxed
        .downcast::<CoefficientSet<D>>()
        .map(|b| *b)
        .map_err(|_| invalid(format!("system.dim: family {family} needs dim = {E}")))
}

pub fn coefficients<const D: usize>(s: &SystemConfig) -> Result<CoefficientSet<D>, CliError> {
    let needs_matrix = || s.matrix.as_deref().ok_or_else(|| invalid("system.matrix: required for this family"));
    match s.family {
        Family::Constant => Ok(families::constant(matrix::<D>("system.matrix", needs_matrix()?)?)),
        Family::Additive => Ok(families::additive()),
        Family::Linear => Ok(families::linear(matrix::<D>("system.matrix", needs_matrix()?)?)),
        Family::Kinetic => exact_dim(families::kinetic_scaled(s.drift.unwrap_or(1.0)), "kinetic"),
        Family::Multiplicative => exact_dim(families::multiplicative(s.s, s.drift.unwrap_or(0.5)), "multiplicative"),
        Family::Sine => exact_dim(families::sine(s.s, s.drift.unwrap_or(0.5)), "sine"),
    }
}

pub fn levy_model<const D: usize>(l: &LevyConfig) -> Result<LevyModel<D>, CliError> {
    let profile = match l.profile {
        ProfileName::Smooth => Profile::Smooth,
        ProfileName::Hard => Profile::HardCutoff { radius: l.radius.unwrap_or(0.5 * l.delta) },
    };
    let m = LevyModel::<D>::new(l.alpha, l.delta, profile, l.trunc_low).map_err(|e| invalid(format!("levy: {e}")))?;
    Ok(if l.silent { m.silenced() } else { m })
}

pub fn test_function<const D: usize>(f: &FunctionSpec) -> Result<TestFunction<D>, CliError> {
    let p = "task_params.function";
    Ok(match f {
        FunctionSpec::Constant { value } => TestFunction::Constant(*value),
        FunctionSpec::Linear { v } => TestFunction::Linear(vector(&format!("{p}.v"), v)?),
        FunctionSpec::Quadratic { q } => TestFunction::Quadratic(matrix(&format!("{p}.q"), q)?),
        FunctionSpec::Cos { k } => TestFunction::Cos(vector(&format!("{p}.k"), k)?),
        FunctionSpec::Tanh { k } => TestFunction::Tanh(vector(&format!("{p}.k"), k)?),
        FunctionSpec::Gaussian { center, width } => {
            if !(*width > 0.0) {
                return Err(invalid(format!("{p}.width: must be positive")));
            }
            TestFunction::Gaussian { center: vector(&format!("{p}.center"), center)?, width: *width }
        }
        FunctionSpec::Bump { center, radius } => {
            if !(*radius > 0.0) {
                return Err(invalid(format!("{p}.radius: must be positive")));
            }
            TestFunction::Bump { center: vector(&format!("{p}.center"), center)?, radius: *radius }
        }
        FunctionSpec::SmoothStep { coord, at, scale } => {
            if *coord >= D {
                return Err(invalid(format!("{p}.coord: must be below {D}")));
            }
            if !(*scale > 0.0) {
                return Err(invalid(format!("{p}.scale: must be positive")));
            }
            TestFunction::SmoothStep { coord: *coord, at: *at, scale: *scale }
        }
    })
}

fn grid_spec<const D: usize>(g: &BoxGrid) -> Result<GridSpec<D>, CliError> {
    Ok(GridSpec::new(
        vector("task_params.grid.lo", &g.lo)?,
        vector("task_params.grid.hi", &g.hi)?,
        g.spacing,
    ))
}

fn axis(field: &str, a: &AxisSpec) -> Result<Vec<f64>, CliError> {
    let v = match a {
        AxisSpec::Uniform { lo, hi, n } => {
            if *n < 2 || !(hi > lo) {
                return Err(invalid(format!("{field}: uniform axis needs n ≥ 2 and hi > lo")));
            }
            kernel::uniform_axis(*lo, *hi, *n)
        }
        AxisSpec::Stretched { half, core, n } => {
            if *n < 2 || !(*half > 0.0 && *core > 0.0) {
                return Err(invalid(format!("{field}: stretched axis needs n ≥ 2, half > 0, core > 0")));
            }
            kernel::stretched_axis(*half, *core, *n)
        }
        AxisSpec::Points { values } => values.clone(),
    };
    if v.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid(format!("{field}: axis must be strictly increasing")));
    }
    Ok(v)
}

fn axes<const D: usize>(field: &str, specs: &[AxisSpec]) -> Result<Vec<Vec<f64>>, CliError> {
    if specs.len() != D {
        return Err(invalid(format!("{field}: expected {D} axes, got {}", specs.len())));
    }
    specs.iter().enumerate().map(|(i, a)| axis(&format!("{field}[{i}]"), a)).collect()
}

fn resolution(r: ResolutionName) -> Resolution {
    match r {
        ResolutionName::Fine => Resolution::FINE,
        ResolutionName::Coarse => Resolution::COARSE,
    }
}

fn lib<T>(r: jumpflow::Result<T>) -> Result<T, CliError> {
    r.map_err(CliError::from)
}

fn with_coords<const D: usize>(x: &Vector<D>, rest: &[f64]) -> Vec<f64> {
    x.iter().copied().chain(rest.iter().copied()).collect()
}

fn opt(v: Option<f64>) -> Value {
    v.map(Value::from).unwrap_or(Value::Null)
}

struct Runner<'a, const D: usize> {
    cfg: &'a ExperimentConfig,
    c: CoefficientSet<D>,
    m: LevyModel<D>,
    sim: SimConfig,
}

impl<'a, const D: usize> Runner<'a, D> {
    fn new(cfg: &'a ExperimentConfig) -> Result<Self, CliError> {
        let c = coefficients::<D>(&cfg.system)?;
        let m = levy_model::<D>(&cfg.levy)?;
        let sim = cfg.sim.to_sim();
        sim.validate().map_err(|e| invalid(format!("sim: {e}")))?;
        Ok(Runner { cfg, c, m, sim })
    }

    /// Structural checks on the states the task will visit, before any
    /// simulation starts.
    fn check(&self, states: &[Vector<D>], simulates: bool) -> Result<(), CliError> {
        self.c.validate(&self.m, states).map_err(|e| invalid(format!("system: {e}")))?;
        if simulates {
            Simulator::new(&self.c, &self.m, &self.sim).map_err(|e| invalid(format!("levy: {e}")))?;
        }
        Ok(())
    }

    fn check_time(&self, field: &str, t: f64) -> Result<(), CliError> {
        if !(t >= 0.0 && t <= self.sim.t_end.min(1.0)) {
            return Err(invalid(format!("{field}: must lie in [0, sim.t_end], got {t}")));
        }
        Ok(())
    }

    fn run(&self, out: &OutputDir) -> Result<Value, CliError> {
        let name = self.cfg.task.name();
        let csv_name = format!("{name}.csv");
        let (csv, summary) = match self.cfg.task {
            Task::Simulate => self.simulate(out)?,
            Task::CheckUh => (None, self.check_uh()?),
            Task::MalliavinScan => self.malliavin_scan()?,
            Task::ReversalCheck => (None, self.reversal()?),
            Task::ApplyOperator => self.apply_operator()?,
            Task::Semigroup => self.semigroup()?,
            Task::Density => self.density()?,
            Task::Duhamel => self.duhamel()?,
            Task::GeneratorCheck => self.generator()?,
            Task::GradientScan => self.gradient()?,
        };
        if let Some(csv) = csv {
            out.write_csv(&csv_name, &csv)?;
        }
        Ok(summary)
    }

    fn simulate(&self, out: &OutputDir) -> Result<(Option<Csv>, Value), CliError> {
        let p: SimulateParams = self.cfg.params()?;
        let x0 = vector::<D>("task_params.x0", &p.x0)?;
        self.check(&[x0], true)?;
        let sim_cfg = self.sim.clone().with_jacobians(p.jacobians);
        let sim = lib(Simulator::new(&self.c, &self.m, &sim_cfg))?;
        let rows = par::map(sim_cfg.n_paths, |i| {
            let mut obs = DefectObserver::default();
            let (s, jumps) = if p.jacobians {
                sim.path(&x0, i as u64, &mut obs)?
            } else {
                sim.path(&x0, i as u64, &mut ())?
            };
            Ok((s.x, jumps.len(), obs.max_defect))
        });
        let rows = lib(rows.into_iter().collect::<jumpflow::Result<Vec<_>>>())?;
        let mut header = vec!["path".to_string()];
        header.extend(coord_header("x", D));
        header.push("n_jumps".into());
        if p.jacobians {
            header.push("max_inverse_defect".into());
        }
        let mut csv = Csv::new(header);
        for (i, (x, n, defect)) in rows.iter().enumerate() {
            let mut r = with_coords(x, &[*n as f64]);
            r.insert(0, i as f64);
            if p.jacobians {
                r.push(*defect);
            }
            csv.push(r);
        }
        let mut summary = json!({
            "max_inverse_defect": if p.jacobians { Value::from(rows.iter().map(|r| r.2).fold(0.0, f64::max)) } else { Value::Null },
            "mean_jumps": rows.iter().map(|r| r.1 as f64).sum::<f64>() / rows.len() as f64,
        });
        if p.jacobians {
            let moments = lib(moment_report(&self.c, &self.m, &sim_cfg, &x0))?;
            summary["moments"] = moments
                .iter()
                .map(|r| {
                    json!({"p": r.p, "jacobian": r.jacobian.mean, "jacobian_stderr": r.jacobian.stderr,
                           "inverse": r.inverse.mean, "inverse_stderr": r.inverse.stderr})
                })
                .collect();
        }
        if p.dump_paths {
            let mut lines = String::new();
            for i in 0..sim_cfg.n_paths {
                let rec = lib(sim.record(&x0, i as u64))?;
                let states: Vec<&[f64]> = rec.states.iter().map(|s| s.as_slice()).collect();
                let jumps: Vec<Value> =
                    rec.jumps.iter().map(|j| json!({"time": j.time, "z": j.z.as_slice(), "big": j.big})).collect();
                let line = json!({
                    "x0": rec.x0.as_slice(),
                    "times": rec.times,
                    "states": states,
                    "jacobian": rec.jacobian.as_ref().map(|v| v.iter().map(|m| m.as_slice().to_vec()).collect::<Vec<_>>()),
                    "inverse_jacobian": rec.inverse_jacobian.as_ref().map(|v| v.iter().map(|m| m.as_slice().to_vec()).collect::<Vec<_>>()),
                    "jumps": jumps,
                    "jump_nodes": rec.jump_nodes,
                    "rng_tag": [rec.rng_tag.0, rec.rng_tag.1],
                });
                lines.push_str(&line.to_string());
                lines.push('\n');
            }
            out.write_text("paths.jsonl", &lines)?;
        }
        Ok((Some(csv), summary))
    }

    fn check_uh(&self) -> Result<Value, CliError> {
        let p: CheckUhParams = self.cfg.params()?;
        let grid = grid_spec::<D>(&p.grid)?;
        let convention = match p.convention {
            ConventionName::NablaBLeft => Convention::NablaBLeft,
            ConventionName::BNablaRight => Convention::BNablaRight,
        };
        let chain = bracket_chain(&self.c, p.j0, convention, &grid).map_err(|e| match e {
            jumpflow::Error::Config(m) => invalid(format!("task_params: {m}")),
            other => other.into(),
        })?;
        let r = lib(chain.check_uh())?;
        Ok(json!({
            "c0": r.c0,
            "witness_x": r.witness_x.as_slice(),
            "witness_u": r.witness_u.as_slice(),
            "grid_spec": {"lo": grid.lo.as_slice(), "hi": grid.hi.as_slice(), "spacing": grid.spacing, "points": chain.points.len()},
            "convention": convention.as_str(),
            "j0": p.j0,
            "sampling_gap": r.sampling_gap,
            "sampling_consistent": r.sampling_consistent,
        }))
    }

    fn malliavin_scan(&self) -> Result<(Option<Csv>, Value), CliError> {
        let p: MalliavinScanParams = self.cfg.params()?;
        let x0 = vector::<D>("task_params.x0", &p.x0)?;
        let u = vector::<D>("task_params.u", &p.u)?;
        if (u.norm() - 1.0).abs() > 1e-9 {
            return Err(invalid("task_params.u: must be a unit covector"));
        }
        if p.lambdas.is_empty() || p.lambdas.iter().any(|l| !(*l >= 0.0)) {
            return Err(invalid("task_params.lambdas: need nonnegative values"));
        }
        self.check(&[x0], true)?;
        let which = match p.covariance {
            CovarianceName::JumpWeighted => Covariance::JumpWeighted,
            CovarianceName::Reduced => Covariance::Reduced,
        };
        let l = lib(laplace_scan(&self.c, &self.m, &self.sim, &x0, &u, &p.lambdas, which))?;
        let mut csv = Csv::new(["lambda", "estimate", "stderr"]);
        for k in 0..p.lambdas.len() {
            csv.push(vec![l.scan.abscissae[k], l.scan.ordinates[k], l.scan.stderr[k]]);
        }
        Ok((
            Some(csv),
            json!({
                "gamma_hat": opt(l.scan.fitted_exponent),
                "gamma_stderr": opt(Some(l.scan.exponent_stderr).filter(|v| v.is_finite())),
                "fit_range": [l.scan.fit_window.0, l.scan.fit_window.1],
                "monotone": l.monotone,
                "strictly_decreasing": l.strictly_decreasing,
                "min_decrease_z": opt(Some(l.min_decrease_z).filter(|v| v.is_finite())),
                "t": self.sim.t_end,
            }),
        ))
    }

    fn reversal(&self) -> Result<Value, CliError> {
        let p: ReversalParams = self.cfg.params()?;
        let x0 = vector::<D>("task_params.x0", &p.x0)?;
        self.check(&[x0], true)?;
        let mode = match p.mode {
            ModeName::Reduced => ReversalMode::Reduced,
            ModeName::Full => ReversalMode::Full,
        };
        let r = lib(reversal_check(&self.c, &self.m, &self.sim, &x0, mode))?;
        Ok(json!({
            "n_paths": r.n_paths,
            "max_roundtrip_error": r.max_roundtrip_error,
            "mean_roundtrip_error": r.mean_roundtrip_error,
        }))
    }

    fn operator(&self, kind: OperatorKind, res: ResolutionName, cut: Option<f64>) -> Result<Operator<D>, CliError> {
        let mut spec = OperatorSpec::new(kind, self.m.clone(), self.c.clone()).with_resolution(resolution(res));
        if let Some(cut) = cut {
            spec = spec.with_cut(cut);
        }
        Operator::new(spec).map_err(|e| match e {
            jumpflow::Error::Config(m) => invalid(format!("task_params: {m}")),
            other => other.into(),
        })
    }

    fn apply_operator(&self) -> Result<(Option<Csv>, Value), CliError> {
        let p: ApplyOperatorParams = self.cfg.params()?;
        let f = test_function::<D>(&p.function)?;
        let pts = lib(grid_spec::<D>(&p.grid)?.points()).map_err(|e| invalid(format!("task_params.grid: {e}")))?;
        self.check(&pts, false)?;
        let kind = match p.operator {
            OperatorName::SmallJump => OperatorKind::SmallJumpL0,
            OperatorName::BigJump => OperatorKind::BigJumpScriptL,
            OperatorName::Full => OperatorKind::Full,
        };
        let op = self.operator(kind, p.resolution, p.pv_inner_cut)?;
        let vals = par::map(pts.len(), |i| op.apply(&f, &pts[i]));
        let vals = lib(vals.into_iter().collect::<jumpflow::Result<Vec<f64>>>())?;
        let mut header = coord_header("x", D);
        header.push("value".into());
        let mut csv = Csv::new(header);
        for (x, v) in pts.iter().zip(&vals) {
            csv.push(with_coords(x, &[*v]));
        }
        let (inner, outer) = op.node_counts();
        Ok((Some(csv), json!({"points": pts.len(), "small_jump_nodes": inner, "big_jump_nodes": outer})))
    }

    fn semigroup(&self) -> Result<(Option<Csv>, Value), CliError> {
        let p: SemigroupParams = self.cfg.params()?;
        let f = test_function::<D>(&p.function)?;
        let xs = points::<D>("task_params.points", &p.points)?;
        self.check_time("task_params.t", p.t)?;
        self.check(&xs, true)?;
        let s = lib(kernel::semigroup(&self.c, &self.m, &self.sim, &f, p.t, &xs))?;
        let mut header = coord_header("x", D);
        header.extend(["value".to_string(), "stderr".to_string()]);
        let mut csv = Csv::new(header);
        for k in 0..xs.len() {
            csv.push(with_coords(&xs[k], &[s.values[k], s.stderr[k]]));
        }
        Ok((Some(csv), json!({"t": p.t})))
    }

    fn density(&self) -> Result<(Option<Csv>, Value), CliError> {
        let p: DensityParams = self.cfg.params()?;
        let x0 = vector::<D>("task_params.x0", &p.x0)?;
        if !(p.t > 0.0) {
            return Err(invalid("task_params.t: must be positive"));
        }
        self.check_time("task_params.t", p.t)?;
        let grid = match &p.axes {
            Some(a) => Some(axes::<D>("task_params.axes", a)?),
            None => None,
        };
        if let Some(h) = p.bandwidth {
            if !(h > 0.0) {
                return Err(invalid("task_params.bandwidth: must be positive"));
            }
        }
        self.check(&[x0], true)?;
        let d = lib(kernel::density(&self.c, &self.m, &self.sim, p.t, &x0, grid, p.bandwidth))?;
        let mut header = coord_header("y", D);
        header.push("rho".into());
        let mut csv = Csv::new(header);
        for (flat, rho) in d.rho_hat.iter().enumerate() {
            let mut row = Vec::with_capacity(D + 1);
            let mut rem = flat;
            for a in &d.y_grid {
                row.push(a[rem % a.len()]);
                rem /= a.len();
            }
            row.push(*rho);
            csv.push(row);
        }
        Ok((Some(csv), json!({"t": p.t, "mass": d.mass, "bandwidth": d.bandwidth.as_slice()})))
    }

    fn duhamel(&self) -> Result<(Option<Csv>, Value), CliError> {
        let p: DuhamelParams = self.cfg.params()?;
        let f = test_function::<D>(&p.function)?;
        let xs = points::<D>("task_params.points", &p.points)?;
        self.check_time("task_params.t", p.t)?;
        if p.time_nodes < 1 || p.batches < 2 {
            return Err(invalid("task_params: need time_nodes ≥ 1 and batches ≥ 2"));
        }
        let mut opts = DuhamelOptions::new(p.time_nodes, axes::<D>("task_params.axes", &p.axes)?);
        opts.batches = p.batches;
        self.check(&xs, true)?;
        let op = if p.no_big_jumps {
            None
        } else {
            Some(self.operator(OperatorKind::BigJumpScriptL, p.resolution, None)?)
        };
        let r = lib(kernel::duhamel(&self.c, &self.m, &self.sim, &f, p.t, &xs, op.as_ref(), &opts))?;
        let mut header = coord_header("x", D);
        header.extend(["value", "stderr", "unperturbed"].map(String::from));
        let mut csv = Csv::new(header);
        for k in 0..xs.len() {
            csv.push(with_coords(&xs[k], &[r.estimate.values[k], r.estimate.stderr[k], r.unperturbed.values[k]]));
        }
        Ok((Some(csv), json!({"t": p.t, "sweeps": r.sweeps, "last_change": r.last_change})))
    }

    fn generator(&self) -> Result<(Option<Csv>, Value), CliError> {
        let p: GeneratorParams = self.cfg.params()?;
        let f = test_function::<D>(&p.function)?;
        let xs = points::<D>("task_params.points", &p.points)?;
        if !(p.h > 0.0 && p.t - p.h > 0.0 && p.t + p.h <= 1.0) {
            return Err(invalid("task_params: need 0 < t - h and t + h ≤ 1"));
        }
        self.check(&xs, true)?;
        let kind = if p.full { OperatorKind::Full } else { OperatorKind::SmallJumpL0 };
        let op = self.operator(kind, p.resolution, None)?;
        let r = lib(kernel::generator_residual(&self.c, &self.m, &self.sim, &f, p.t, &xs, &op, p.h))?;
        let mut header = coord_header("x", D);
        header.extend(["time_derivative", "operator", "residual", "stderr", "bias", "fit_rms"].map(String::from));
        let mut csv = Csv::new(header);
        for row in &r.rows {
            csv.push(with_coords(
                &row.x,
                &[row.time_derivative, row.operator, row.residual, row.stderr, row.bias, row.fit_rms],
            ));
        }
        Ok((
            Some(csv),
            json!({"t": p.t, "h": r.h, "max_residual": r.max_residual, "scale": r.scale,
                   "relative": r.relative, "noise_floor": r.noise_floor}),
        ))
    }

    fn gradient(&self) -> Result<(Option<Csv>, Value), CliError> {
        let p: GradientParams = self.cfg.params()?;
        let f = test_function::<D>(&p.function)?;
        let xs = points::<D>("task_params.points", &p.points)?;
        if !(p.order == 1 || p.order == 2) {
            return Err(invalid("task_params.order: must be 1 or 2"));
        }
        if p.times.is_empty() {
            return Err(invalid("task_params.times: at least one time is required"));
        }
        for (i, t) in p.times.iter().enumerate() {
            if !(*t > 0.0) {
                return Err(invalid(format!("task_params.times[{i}]: must be positive")));
            }
            self.check_time(&format!("task_params.times[{i}]"), *t)?;
        }
        self.check(&xs, true)?;
        let g = lib(kernel::gradient_decay_scan(&self.c, &self.m, &self.sim, &f, &p.times, p.order, &xs))?;
        let mut csv = Csv::new(["t", "sup_norm", "stderr"]);
        for k in 0..g.scan.abscissae.len() {
            csv.push(vec![g.scan.abscissae[k], g.scan.ordinates[k], g.scan.stderr[k]]);
        }
        Ok((
            Some(csv),
            json!({
                "order": g.order,
                "fitted_exponent": opt(g.scan.fitted_exponent),
                "exponent_stderr": opt(Some(g.scan.exponent_stderr).filter(|v| v.is_finite())),
                "confidence": g.confidence.map(|(a, b)| vec![a, b]),
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn system(family: Family, dim: usize) -> SystemConfig {
        SystemConfig { family, dim, matrix: None, s: 0.4, drift: None }
    }

    #[test]
    fn fixed_dimension_families() {
        assert!(coefficients::<2>(&system(Family::Kinetic, 2)).is_ok());
        let e = coefficients::<1>(&system(Family::Kinetic, 1)).unwrap_err();
        assert!(e.to_string().contains("dim = 2"), "{e}");
        assert!(coefficients::<1>(&system(Family::Sine, 1)).is_ok());
        assert!(coefficients::<3>(&system(Family::Multiplicative, 3)).is_err());
    }

    #[test]
    fn matrix_families_need_a_matrix() {
        assert!(coefficients::<2>(&system(Family::Linear, 2)).is_err());
        let mut s = system(Family::Linear, 2);
        s.matrix = Some(vec![0.0, 1.0, 0.0, 0.0]);
        let c = coefficients::<2>(&s).unwrap();
        assert_eq!(c.drift(&Vector::<2>::new(0.0, 3.0)), Vector::<2>::new(3.0, 0.0));
        s.matrix = Some(vec![1.0; 3]);
        assert!(coefficients::<2>(&s).is_err());
    }

    #[test]
    fn function_specs_check_lengths() {
        assert!(test_function::<2>(&FunctionSpec::Cos { k: vec![1.0] }).is_err());
        assert!(test_function::<1>(&FunctionSpec::SmoothStep { coord: 1, at: 0.0, scale: 1.0 }).is_err());
        let f = test_function::<1>(&FunctionSpec::Cos { k: vec![2.0] }).unwrap();
        use jumpflow::operator::ScalarField;
        assert_eq!(f.value(&Vector::<1>::new(0.0)), 1.0);
    }

    #[test]
    fn axes_validate() {
        assert!(axis("a", &AxisSpec::Points { values: vec![0.0, 0.0] }).is_err());
        assert_eq!(axis("a", &AxisSpec::Uniform { lo: 0.0, hi: 1.0, n: 3 }).unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(axes::<2>("a", &[AxisSpec::Uniform { lo: 0.0, hi: 1.0, n: 3 }]).is_err());
    }
}
