//! Malliavin covariance matrices along paths, Bismut jump-size perturbations
//! and the integration-by-parts identity `E[D_v F] = -E[F div(v)]`.
//!
//! The direction is `v_j(s,z) = ζ(z) U(X_{s-},z)^T K_{s-}^T e_j`, for which
//! `D_{v_j} X_t = J_t Σ_t e_j` with
//! `Σ_t = Σ_{jumps} ζ(z) K_{s-} U U^T K_{s-}^T`.
//!
//! The compensator of the divergence is evaluated with the divergence
//! theorem: on the truncated measure `ν(dz) = κ dz` on `ε < |z| < δ`,
//! `∫(⟨∇log κ, v⟩ + div_z v) κ dz = -∮_{|z|=ε} κ v·ẑ dS`, which reduces the
//! time integrand to `-(K_s w(X_s))_j` with
//! `w(x) = ∮_{|z|=ε} κ ζ U(x,z) ẑ dS`.

use crate::coeffs::CoefficientSet;
use crate::flow::{Jump, Observer, PathRecord, Simulator, Skeleton, State};
use crate::levy::{CutoffZeta, LevyModel};
use crate::linalg;
use crate::par;
use crate::quad;
use crate::stats::{line_fit, Estimate, ScanResult};
use crate::{Error, Matrix, Result, Vector};

/// Default finite-difference size of the jump perturbation.
pub const DEFAULT_EPS: f64 = 1e-5;
/// Relative step of the central differences for `div_z v`.
pub const DIV_STEP: f64 = 1e-6;
/// Angular resolution of the surface rule for `w`.
pub const SURFACE_RES: usize = 32;

/// Summary of the Malliavin objects of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct MalliavinReport<const D: usize> {
    pub reduced_matrix: Matrix<D>,
    pub jump_weighted_matrix: Matrix<D>,
    /// Smallest eigenvalue of the reduced matrix.
    pub min_eigenvalue: f64,
    /// `div(v_j)` for `j = 1..d`.
    pub divergence_values: Vector<D>,
}

/// The per-jump data needed to perturb a path in direction `v_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpSensitivity<const D: usize> {
    /// Position in the path's jump list.
    pub index: usize,
    /// `K_{s-} U(X_{s-}, z)`.
    pub ku: Matrix<D>,
    pub zeta: f64,
}

impl<const D: usize> JumpSensitivity<D> {
    /// `v_j(s, z)` at the recorded jump.
    pub fn direction(&self, j: usize) -> Vector<D> {
        self.ku.row(j).transpose() * self.zeta
    }
}

#[derive(Debug, Clone)]
enum SurfaceTerm<const D: usize> {
    Zero,
    Constant(Vector<D>),
    Varying(Vec<(Vector<D>, f64)>),
}

/// Streaming accumulator of `Σ̂_t`, `Σ_t` and `div(v_j)` along a solve.
#[derive(Debug, Clone)]
pub struct MalliavinObserver<'a, const D: usize> {
    coeffs: &'a CoefficientSet<D>,
    model: &'a LevyModel<D>,
    zeta: CutoffZeta,
    integrals: bool,
    surface: SurfaceTerm<D>,
    prev: Option<(f64, Matrix<D>, Vector<D>)>,
    jump_counter: usize,
    pub reduced: Matrix<D>,
    pub jump_weighted: Matrix<D>,
    /// `Σ_jumps (⟨∇log κ, v_j⟩ + div_z v_j)`.
    pub div_jumps: Vector<D>,
    /// `∫_0^t K_s w(X_s) ds` (the negated compensator).
    pub div_compensator: Vector<D>,
    pub sensitivities: Vec<JumpSensitivity<D>>,
    pub error: Option<Error>,
}

impl<'a, const D: usize> MalliavinObserver<'a, D> {
    /// `integrals` switches on the time integrals (`Σ̂_t` and the divergence
    /// compensator), which need every substep.
    pub fn new(c: &'a CoefficientSet<D>, m: &'a LevyModel<D>, integrals: bool) -> Result<Self> {
        let eps = m.trunc_low();
        let u_const_in_z = c.is_state_independent() && c.is_linear_in_z();
        let surface = if m.is_silent() || eps <= 0.0 || u_const_in_z || !integrals {
            SurfaceTerm::Zero
        } else {
            let rule: Vec<(Vector<D>, f64)> = quad::sphere_rule::<D>(SURFACE_RES)?
                .into_iter()
                .map(|(u, w)| {
                    let z = u * eps;
                    let weight = w * eps.powi(D as i32 - 1) * m.radial_density(eps) * CutoffZeta::new(m.delta()).radial(eps);
                    (z, weight)
                })
                .collect();
            if c.is_state_independent() {
                let x = Vector::<D>::zeros();
                SurfaceTerm::Constant(surface_w(c, &rule, &x)?)
            } else {
                SurfaceTerm::Varying(rule)
            }
        };
        Ok(MalliavinObserver {
            coeffs: c,
            model: m,
            zeta: CutoffZeta::new(m.delta()),
            integrals,
            surface,
            prev: None,
            jump_counter: 0,
            reduced: Matrix::<D>::zeros(),
            jump_weighted: Matrix::<D>::zeros(),
            div_jumps: Vector::<D>::zeros(),
            div_compensator: Vector::<D>::zeros(),
            sensitivities: Vec::new(),
            error: None,
        })
    }

    /// `div(v_j)` for every `j`.
    pub fn divergence(&self) -> Vector<D> {
        self.div_jumps + self.div_compensator
    }

    pub fn finish(self) -> Result<Self> {
        match self.error {
            Some(e) => Err(e),
            None => Ok(self),
        }
    }

    fn w(&self, x: &Vector<D>) -> Result<Vector<D>> {
        match &self.surface {
            SurfaceTerm::Zero => Ok(Vector::<D>::zeros()),
            SurfaceTerm::Constant(w) => Ok(*w),
            SurfaceTerm::Varying(rule) => surface_w(self.coeffs, rule, x),
        }
    }

    fn node_terms(&self, s: &State<D>) -> Result<(Matrix<D>, Vector<D>)> {
        let b = self.coeffs.b1(&s.x);
        let kb = s.k * b;
        Ok((kb * kb.transpose(), s.k * self.w(&s.x)?))
    }

    /// `(Σ ζ K U U^T K^T, Σ(⟨∇log κ, v_j⟩ + div v_j), sensitivity)` of one jump.
    fn jump_terms(&self, pre: &State<D>, z: &Vector<D>) -> Result<Option<(Matrix<D>, Vector<D>, Matrix<D>, f64)>> {
        let zeta = self.zeta.value(z);
        if zeta == 0.0 {
            return Ok(None);
        }
        let c = self.coeffs;
        let ku = pre.k * c.u_matrix(&pre.x, z)?;
        let sigma = ku * ku.transpose() * zeta;
        // V(z) has columns v_j: V = ζ (K U)^T.
        let v = ku.transpose() * zeta;
        let glk = self.model.grad_log_density(z)?;
        let mut div = v.transpose() * glk;
        if c.is_state_independent() && c.is_linear_in_z() {
            div += ku * self.zeta.gradient(z);
        } else {
            let h = DIV_STEP * z.norm();
            for k in 0..D {
                let mut zp = *z;
                let mut zm = *z;
                zp[k] += h;
                zm[k] -= h;
                let vp = (pre.k * c.u_matrix(&pre.x, &zp)?).transpose() * self.zeta.value(&zp);
                let vm = (pre.k * c.u_matrix(&pre.x, &zm)?).transpose() * self.zeta.value(&zm);
                let dv = (vp - vm) / (2.0 * h);
                for j in 0..D {
                    div[j] += dv[(k, j)];
                }
            }
        }
        Ok(Some((sigma, div, ku, zeta)))
    }
}

/// `w(x) = Σ_nodes weight · U(x, z) ẑ` on the inner truncation sphere.
fn surface_w<const D: usize>(c: &CoefficientSet<D>, rule: &[(Vector<D>, f64)], x: &Vector<D>) -> Result<Vector<D>> {
    let mut acc = Vector::<D>::zeros();
    for (z, w) in rule {
        acc += c.u_matrix(x, z)? * z.normalize() * *w;
    }
    Ok(acc)
}

impl<const D: usize> Observer<D> for MalliavinObserver<'_, D> {
    fn substeps(&self) -> bool {
        self.integrals
    }

    fn on_node(&mut self, t: f64, s: &State<D>) {
        if !self.integrals || self.error.is_some() {
            return;
        }
        match self.node_terms(s) {
            Ok((g, kw)) => {
                if let Some((t0, g0, kw0)) = self.prev {
                    let h = t - t0;
                    self.reduced += (g0 + g) * (0.5 * h);
                    self.div_compensator += (kw0 + kw) * (0.5 * h);
                }
                self.prev = Some((t, g, kw));
            }
            Err(e) => self.error = Some(e),
        }
    }

    fn on_jump(&mut self, t: f64, z: &Vector<D>, pre: &State<D>, post: &State<D>) {
        let index = self.jump_counter;
        self.jump_counter += 1;
        if self.error.is_some() {
            return;
        }
        match self.jump_terms(pre, z) {
            Ok(Some((sigma, div, ku, zeta))) => {
                self.jump_weighted += sigma;
                self.div_jumps += div;
                self.sensitivities.push(JumpSensitivity { index, ku, zeta });
            }
            Ok(None) => {}
            Err(e) => {
                self.error = Some(e);
                return;
            }
        }
        if self.integrals {
            match self.node_terms(post) {
                Ok((g, kw)) => self.prev = Some((t, g, kw)),
                Err(e) => self.error = Some(e),
            }
        }
    }
}

fn require_jacobians<const D: usize>(path: &PathRecord<D>) -> Result<()> {
    if path.jacobian.is_none() || path.inverse_jacobian.is_none() {
        return Err(Error::config("Malliavin quantities need recorded Jacobians"));
    }
    Ok(())
}

fn replayed<'a, const D: usize>(
    path: &PathRecord<D>,
    c: &'a CoefficientSet<D>,
    m: &'a LevyModel<D>,
) -> Result<MalliavinObserver<'a, D>> {
    require_jacobians(path)?;
    let mut obs = MalliavinObserver::new(c, m, true)?;
    path.replay(&mut obs);
    obs.finish()
}

/// `Σ̂_t = ∫_0^t K_s (∇_zσ ∇_zσ^T)(X_s, 0) K_s^T ds` by the trapezoid rule on
/// the record's grid (left limits at jump nodes).
pub fn reduced_matrix<const D: usize>(path: &PathRecord<D>, c: &CoefficientSet<D>) -> Result<Matrix<D>> {
    Ok(reduced_matrix_series(path, c)?.last().map_or(Matrix::<D>::zeros(), |p| p.1))
}

/// `(t_i, Σ̂_{t_i})` at every node of the record.
pub fn reduced_matrix_series<const D: usize>(path: &PathRecord<D>, c: &CoefficientSet<D>) -> Result<Vec<(f64, Matrix<D>)>> {
    require_jacobians(path)?;
    let mut out = Vec::with_capacity(path.times.len());
    let mut acc = Matrix::<D>::zeros();
    let g = |s: &State<D>| {
        let kb = s.k * c.b1(&s.x);
        kb * kb.transpose()
    };
    out.push((path.times[0], acc));
    for i in 1..path.times.len() {
        let h = path.times[i] - path.times[i - 1];
        acc += (g(&path.state_at(i - 1)) + g(&path.left_limit(i))) * (0.5 * h);
        out.push((path.times[i], acc));
    }
    Ok(out)
}

/// `Σ_t = Σ_{jumps} ζ(z_i) K_{s_i-} (U U^T)(X_{s_i-}, z_i) K_{s_i-}^T`.
pub fn jump_weighted_matrix<const D: usize>(
    path: &PathRecord<D>,
    c: &CoefficientSet<D>,
    m: &LevyModel<D>,
) -> Result<Matrix<D>> {
    require_jacobians(path)?;
    let mut obs = MalliavinObserver::new(c, m, false)?;
    path.replay(&mut obs);
    Ok(obs.finish()?.jump_weighted)
}

/// All Malliavin quantities of a recorded path.
pub fn malliavin_report<const D: usize>(
    path: &PathRecord<D>,
    c: &CoefficientSet<D>,
    m: &LevyModel<D>,
) -> Result<MalliavinReport<D>> {
    let obs = replayed(path, c, m)?;
    let (lam, _) = linalg::min_eigen(&obs.reduced);
    Ok(MalliavinReport {
        reduced_matrix: obs.reduced,
        jump_weighted_matrix: obs.jump_weighted,
        min_eigenvalue: lam,
        divergence_values: obs.divergence(),
    })
}

/// `div(v_j)` of a recorded path.
pub fn divergence<const D: usize>(path: &PathRecord<D>, c: &CoefficientSet<D>, m: &LevyModel<D>, j: usize) -> Result<f64> {
    if j >= D {
        return Err(Error::config(format!("direction index {j} out of range")));
    }
    Ok(replayed(path, c, m)?.divergence()[j])
}

/// The compensator of `div(v_j)` by direct quadrature over `(s, z)`:
/// `-∫_0^t ∫ (⟨∇log κ, v_j⟩ + div_z v_j) ν(dz) ds`, left-point rule in time
/// with the path frozen on each grid cell. Slow; an oracle for the surface
/// formula.
pub fn compensator_by_volume<const D: usize>(
    path: &PathRecord<D>,
    c: &CoefficientSet<D>,
    m: &LevyModel<D>,
    j: usize,
    order: usize,
    sphere_res: usize,
) -> Result<f64> {
    require_jacobians(path)?;
    let obs = MalliavinObserver::new(c, m, false)?;
    let rule = m.node_rule(m.trunc_low(), 0.5 * m.delta(), order, sphere_res)?;
    let mut total = 0.0;
    for i in 0..path.times.len() - 1 {
        let h = path.times[i + 1] - path.times[i];
        let s = path.state_at(i);
        let mut inner = 0.0;
        for (z, w) in &rule.nodes {
            if let Some((_, div, _, _)) = obs.jump_terms(&s, z)? {
                inner += div[j] * w;
            }
        }
        total -= inner * h;
    }
    Ok(total)
}

/// The skeleton re-solved with `z_i ← z_i + eps v_j(s_i, z_i)`;
/// returns `(X^eps_t - X_t) / eps` with both legs solved the same way.
pub fn pathwise_derivative<const D: usize>(
    skeleton: &Skeleton<'_, D>,
    model: &LevyModel<D>,
    x0: &Vector<D>,
    jumps: &[Jump<D>],
    sensitivities: &[JumpSensitivity<D>],
    t_end: f64,
    j: usize,
    eps: f64,
) -> Result<Vector<D>> {
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::config(format!("perturbation size must lie in [1e-7, 1e-3], got {eps}")));
    }
    let base = skeleton.run(x0, jumps, 0.0, t_end, &mut ())?;
    let mut perturbed = jumps.to_vec();
    for s in sensitivities {
        let z = perturbed[s.index].z + s.direction(j) * eps;
        if z.norm() >= model.delta() {
            return Err(Error::domain(format!("perturbed jump {z:?} leaves the support")));
        }
        perturbed[s.index].z = z;
    }
    let moved = skeleton.run(x0, &perturbed, 0.0, t_end, &mut ())?;
    Ok((moved.x - base.x) / eps)
}

/// Everything the Monte-Carlo checks need from one path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathMalliavin<const D: usize> {
    pub x_t: Vector<D>,
    pub j_t: Matrix<D>,
    pub reduced: Matrix<D>,
    pub jump_weighted: Matrix<D>,
    pub divergence: Vector<D>,
    /// Column `j` = finite-difference `D_{v_j} X_t` (when requested).
    pub fd_derivative: Option<Matrix<D>>,
}

impl<const D: usize> PathMalliavin<D> {
    /// `J_t Σ_t`, whose columns are `D_{v_j}X_t`.
    pub fn closed_form_derivative(&self) -> Matrix<D> {
        self.j_t * self.jump_weighted
    }
}

/// Options of [`analyze_path`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Analysis {
    /// Compute `Σ̂_t` and the divergence compensator (needs every substep).
    pub integrals: bool,
    /// Finite-difference perturbation size, if the oracle is wanted.
    pub fd_eps: Option<f64>,
}

pub fn analyze_path<const D: usize>(
    sim: &Simulator<'_, D>,
    x0: &Vector<D>,
    index: u64,
    opts: Analysis,
) -> Result<PathMalliavin<D>> {
    let c = sim.coeffs();
    let mut obs = MalliavinObserver::new(c, sim.model, opts.integrals)?;
    let (state, jumps) = sim.path(x0, index, &mut obs)?;
    let obs = obs.finish()?;
    let fd_derivative = match opts.fd_eps {
        Some(eps) => {
            let mut m = Matrix::<D>::zeros();
            for j in 0..D {
                let col = pathwise_derivative(
                    &sim.skeleton,
                    sim.model,
                    x0,
                    &jumps,
                    &obs.sensitivities,
                    sim.cfg.t_end,
                    j,
                    eps,
                )?;
                m.set_column(j, &col);
            }
            Some(m)
        }
        None => None,
    };
    Ok(PathMalliavin {
        x_t: state.x,
        j_t: state.j,
        reduced: obs.reduced,
        jump_weighted: obs.jump_weighted,
        divergence: obs.divergence(),
        fd_derivative,
    })
}

/// Bounded test functionals of `X_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Functional {
    One,
    /// `tanh(x_i)`.
    TanhCoord(usize),
}

impl Functional {
    pub fn value<const D: usize>(&self, x: &Vector<D>) -> f64 {
        match *self {
            Functional::One => 1.0,
            Functional::TanhCoord(i) => x[i].tanh(),
        }
    }

    pub fn gradient<const D: usize>(&self, x: &Vector<D>) -> Vector<D> {
        let mut g = Vector::<D>::zeros();
        if let Functional::TanhCoord(i) = *self {
            g[i] = 1.0 - x[i].tanh().powi(2);
        }
        g
    }

    pub fn label(&self) -> String {
        match self {
            Functional::One => "one".into(),
            Functional::TanhCoord(i) => format!("tanh_x{}", i + 1),
        }
    }
}

/// Two sides of `E[D_{v_j}F] = -E[F div(v_j)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IbpResult {
    pub functional: Functional,
    pub direction: usize,
    pub lhs: Estimate,
    pub rhs: Estimate,
    /// Standard error of the per-path difference `lhs_i - rhs_i`.
    pub stderr: f64,
}

impl IbpResult {
    pub fn gap(&self) -> f64 {
        self.lhs.mean - self.rhs.mean
    }

    /// `|lhs - rhs|` in pooled standard errors.
    pub fn z_score(&self) -> f64 {
        if self.stderr == 0.0 {
            if self.gap() == 0.0 { 0.0 } else { f64::INFINITY }
        } else {
            self.gap().abs() / self.stderr
        }
    }
}

/// Both sides of the integration-by-parts identity for several
/// `(functional, direction)` pairs on one shared set of paths. With
/// `fd_eps = Some(eps)` `D_{v_j}X_t` comes from the perturbation oracle,
/// otherwise from `J_tΣ_t`.
pub fn ibp_test<const D: usize>(
    c: &CoefficientSet<D>,
    m: &LevyModel<D>,
    cfg: &crate::flow::SimConfig,
    x0: &Vector<D>,
    pairs: &[(Functional, usize)],
    fd_eps: Option<f64>,
) -> Result<Vec<IbpResult>> {
    for (_, j) in pairs {
        if *j >= D {
            return Err(Error::config(format!("direction index {j} out of range")));
        }
    }
    let sim = Simulator::new(c, m, &cfg.clone().with_jacobians(true))?;
    let opts = Analysis { integrals: true, fd_eps };
    let per_path = par::map(cfg.n_paths, |i| {
        let a = analyze_path(&sim, x0, i as u64, opts).map_err(|e| e.context(format!("path {i}")))?;
        let dx = a.fd_derivative.unwrap_or_else(|| a.closed_form_derivative());
        let mut row = Vec::with_capacity(pairs.len());
        for (f, j) in pairs {
            let lhs = f.gradient(&a.x_t).dot(&dx.column(*j));
            let rhs = -f.value(&a.x_t) * a.divergence[*j];
            row.push((lhs, rhs));
        }
        Ok(row)
    });
    let per_path = per_path.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(pairs
        .iter()
        .enumerate()
        .map(|(k, (f, j))| {
            let l: Vec<f64> = per_path.iter().map(|r| r[k].0).collect();
            let r: Vec<f64> = per_path.iter().map(|r| r[k].1).collect();
            let d: Vec<f64> = l.iter().zip(&r).map(|(a, b)| a - b).collect();
            IbpResult {
                functional: *f,
                direction: *j,
                lhs: Estimate::from_samples(&l),
                rhs: Estimate::from_samples(&r),
                stderr: Estimate::from_samples(&d).stderr,
            }
        })
        .collect())
}

/// Which covariance matrix a Laplace scan uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Covariance {
    JumpWeighted,
    Reduced,
}

/// Laplace transform curve `λ ↦ E exp(-λ u Σ u^T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceScan {
    pub scan: ScanResult,
    /// Estimates nonincreasing in `λ`.
    pub monotone: bool,
    /// Each consecutive decrease exceeds 4 standard errors of the paired
    /// difference.
    pub strictly_decreasing: bool,
    /// Smallest paired decrease in standard errors.
    pub min_decrease_z: f64,
}

/// Lower and upper estimate bounds of the exponent fit window.
pub const LAPLACE_FIT_WINDOW: (f64, f64) = (1e-6, 0.9);

/// `γ̂` from `log(-log E)` against `log λ` on the points with
/// `E ∈ [1e-6, 0.9]`.
pub fn fit_laplace_exponent(lambdas: &[f64], est: &[f64]) -> (Option<f64>, f64) {
    let (lo, hi) = LAPLACE_FIT_WINDOW;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (l, e) in lambdas.iter().zip(est) {
        if *l > 0.0 && *e >= lo && *e <= hi {
            xs.push(l.ln());
            ys.push((-e.ln()).ln());
        }
    }
    match line_fit(&xs, &ys, None) {
        Some(f) => (Some(f.slope), f.slope_stderr),
        None => (None, f64::NAN),
    }
}

pub fn laplace_scan<const D: usize>(
    c: &CoefficientSet<D>,
    m: &LevyModel<D>,
    cfg: &crate::flow::SimConfig,
    x0: &Vector<D>,
    u: &Vector<D>,
    lambdas: &[f64],
    which: Covariance,
) -> Result<LaplaceScan> {
    let sim = Simulator::new(c, m, &cfg.clone().with_jacobians(true))?;
    let opts = Analysis { integrals: which == Covariance::Reduced, fd_eps: None };
    let quad_forms = par::map(cfg.n_paths, |i| {
        let a = analyze_path(&sim, x0, i as u64, opts)?;
        let s = match which {
            Covariance::JumpWeighted => a.jump_weighted,
            Covariance::Reduced => a.reduced,
        };
        Ok((u.transpose() * s * u)[0].max(0.0))
    });
    let q = quad_forms.into_iter().collect::<Result<Vec<f64>>>()?;
    let curves: Vec<Vec<f64>> = lambdas.iter().map(|l| q.iter().map(|qi| (-l * qi).exp()).collect()).collect();
    let est: Vec<Estimate> = curves.iter().map(|c| Estimate::from_samples(c)).collect();
    let mut monotone = true;
    let mut strict = true;
    let mut min_z = f64::INFINITY;
    for k in 1..lambdas.len() {
        if est[k].mean > est[k - 1].mean {
            monotone = false;
        }
        if lambdas[k] > lambdas[k - 1] {
            let d: Vec<f64> = curves[k - 1].iter().zip(&curves[k]).map(|(a, b)| a - b).collect();
            let e = Estimate::from_samples(&d);
            let z = if e.stderr > 0.0 { e.mean / e.stderr } else if e.mean > 0.0 { f64::INFINITY } else { 0.0 };
            min_z = min_z.min(z);
            if z <= 4.0 {
                strict = false;
            }
        }
    }
    let means: Vec<f64> = est.iter().map(|e| e.mean).collect();
    let (gamma, gamma_err) = fit_laplace_exponent(lambdas, &means);
    Ok(LaplaceScan {
        scan: ScanResult {
            abscissae: lambdas.to_vec(),
            ordinates: means,
            stderr: est.iter().map(|e| e.stderr).collect(),
            fitted_exponent: gamma,
            exponent_stderr: gamma_err,
            fit_window: LAPLACE_FIT_WINDOW,
        },
        monotone,
        strictly_decreasing: strict,
        min_decrease_z: min_z,
    })
}
