//! Time reversal of a realized path: from `X_T(x0)` the backward equation
//! with drift `-hat b` (plus the `hat σ` compensator) and jumps
//! `x ← x - hat σ(x,z)` at the reversed times `T - s_i` returns to `x0`.
//!
//! The reversal acts on the finite jump record of the truncated measure, where
//! it is an exact algebraic identity; the drift ODE is the only error source.

use crate::brackets::GridSpec;
use crate::coeffs::{reversed_coefficients, CoefficientSet};
use crate::flow::{Jump, PathRecord, SimConfig, Simulator, Skeleton};
use crate::kernel;
use crate::levy::LevyModel;
use crate::operator::ScalarField;
use crate::par;
use crate::{Error, Result, Vector};

/// How the backward drift is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReversalMode {
    /// Negated effective forward drift. Exact rewrite of the full form for
    /// compensator-free coefficients, where `-hat b + ∫hat σ dν = -b`.
    #[default]
    Reduced,
    /// `-hat b(x) + ∫hat σ(x,z)ν(dz)` on the node rule of the truncated
    /// measure used forward.
    Full,
}

/// A forward path together with its reversal.
#[derive(Debug, Clone, PartialEq)]
pub struct ReversedRun<const D: usize> {
    pub forward: PathRecord<D>,
    /// Jump `i` of the reversed record sits at `T - s_{n-1-i}` with the same
    /// mark.
    pub reversed_jumps: Vec<Jump<D>>,
    /// `(time, hat X)` at the start, around every reversed jump and at `T`.
    pub backward_states: Vec<(f64, Vector<D>)>,
    pub roundtrip_error: f64,
}

/// `Δ hat L_t = Δ L_{T-t}`: the record read backwards.
pub fn reverse_jumps<const D: usize>(jumps: &[Jump<D>], t_end: f64) -> Vec<Jump<D>> {
    jumps.iter().rev().map(|j| Jump { time: t_end - j.time, z: j.z, big: j.big }).collect()
}

struct Backward<'a, const D: usize> {
    drift: Box<dyn Fn(&Vector<D>) -> Result<Vector<D>> + Sync + 'a>,
    c: &'a CoefficientSet<D>,
    dt_max: f64,
}

impl<'a, const D: usize> Backward<'a, D> {
    fn new(c: &'a CoefficientSet<D>, m: &LevyModel<D>, mode: ReversalMode, dt_max: f64) -> Result<Self> {
        if !(dt_max > 0.0) {
            return Err(Error::config("backward dt_max must be positive"));
        }
        let drift: Box<dyn Fn(&Vector<D>) -> Result<Vector<D>> + Sync + 'a> = match mode {
            ReversalMode::Reduced => {
                let sk = Skeleton::new(c, m, dt_max, false)?;
                Box::new(move |x: &Vector<D>| Ok(-sk.drift(x)))
            }
            ReversalMode::Full => {
                let rc = reversed_coefficients(c, m)?;
                Box::new(move |x: &Vector<D>| rc.backward_drift(x))
            }
        };
        Ok(Backward { drift, c, dt_max })
    }

    fn segment(&self, y: &mut Vector<D>, len: f64) -> Result<()> {
        if len <= 0.0 {
            return Ok(());
        }
        let n = ((len / self.dt_max) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let h = len / n as f64;
        let f = &self.drift;
        for _ in 0..n {
            let k1 = f(y)?;
            let k2 = f(&(*y + k1 * (0.5 * h)))?;
            let k3 = f(&(*y + k2 * (0.5 * h)))?;
            let k4 = f(&(*y + k3 * h))?;
            *y += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::numerics("backward drift produced a non-finite state"));
        }
        Ok(())
    }

    /// Runs the backward equation on `[0, t_end]`; `states` collects nodes
    /// when given.
    fn run(
        &self,
        start: Vector<D>,
        reversed: &[Jump<D>],
        t_end: f64,
        mut states: Option<&mut Vec<(f64, Vector<D>)>>,
    ) -> Result<Vector<D>> {
        let mut y = start;
        let mut t = 0.0;
        if let Some(s) = states.as_deref_mut() {
            s.push((0.0, y));
        }
        for j in reversed {
            self.segment(&mut y, j.time - t)?;
            if let Some(s) = states.as_deref_mut() {
                s.push((j.time, y));
            }
            y -= self.c.hat_sigma(&y, &j.z)?;
            if let Some(s) = states.as_deref_mut() {
                s.push((j.time, y));
            }
            t = j.time;
        }
        self.segment(&mut y, t_end - t)?;
        if let Some(s) = states {
            s.push((t_end, y));
        }
        Ok(y)
    }
}

/// Reverses `path` and integrates the backward equation with the forward
/// substep.
pub fn reverse_and_check<const D: usize>(
    c: &CoefficientSet<D>,
    m: &LevyModel<D>,
    path: &PathRecord<D>,
    mode: ReversalMode,
    dt_max: f64,
) -> Result<ReversedRun<D>> {
    let t_end = path.t_end();
    let back = Backward::new(c, m, mode, dt_max)?;
    let reversed = reverse_jumps(&path.jumps, t_end);
    let mut states = Vec::with_capacity(2 * reversed.len() + 2);
    let y = back.run(path.final_state(), &reversed, t_end, Some(&mut states))?;
    Ok(ReversedRun {
        forward: path.clone(),
        reversed_jumps: reversed,
        backward_states: states,
        roundtrip_error: (y - path.x0).norm(),
    })
}

/// Batch summary of the round trip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReversalSummary {
    pub n_paths: usize,
    pub max_roundtrip_error: f64,
    pub mean_roundtrip_error: f64,
}

/// Forward then backward on `cfg.n_paths` paths without storing them.
pub fn reversal_check<const D: usize>(
    c: &CoefficientSet<D>,
    m: &LevyModel<D>,
    cfg: &SimConfig,
    x0: &Vector<D>,
    mode: ReversalMode,
) -> Result<ReversalSummary> {
    let sim = Simulator::new(c, m, &cfg.clone().with_jacobians(false))?;
    let back = Backward::new(c, m, mode, cfg.dt_max)?;
    let (max, sum) = par::try_fold(
        cfg.n_paths,
        || (0.0f64, 0.0f64),
        |acc, i| {
            let (s, jumps) = sim.path(x0, i as u64, &mut ()).map_err(|e| e.context(format!("path {i}")))?;
            let y = back.run(s.x, &reverse_jumps(&jumps, cfg.t_end), cfg.t_end, None)?;
            let err = (y - x0).norm();
            acc.0 = acc.0.max(err);
            acc.1 += err;
            Ok(())
        },
        |a, b| {
            a.0 = a.0.max(b.0);
            a.1 += b.1;
        },
    )?;
    Ok(ReversalSummary { n_paths: cfg.n_paths, max_roundtrip_error: max, mean_roundtrip_error: sum / cfg.n_paths as f64 })
}

/// `∫|T^0_t f| / ∫|f|` by grid quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L1Report {
    pub t: f64,
    pub ratio: f64,
    /// Share of `∫|T^0_t f|` sitting on the outermost grid layer.
    pub boundary_fraction: f64,
}

/// Largest admissible boundary share before the grid is declared too small.
pub const MAX_BOUNDARY_FRACTION: f64 = 0.01;

pub fn l1_bound_check<const D: usize>(
    c: &CoefficientSet<D>,
    m: &LevyModel<D>,
    cfg: &SimConfig,
    f: &dyn ScalarField<D>,
    grid: &GridSpec<D>,
    t: f64,
) -> Result<L1Report> {
    let pts = grid.points()?;
    let fvals: f64 = pts.iter().map(|x| f.value(x).abs()).sum();
    if !(fvals > 0.0) {
        return Err(Error::config("L1 check needs f with non-zero mass on the grid"));
    }
    let est = kernel::semigroup(c, m, cfg, f, t, &pts)?;
    let tol = 1e-9 * grid.spacing;
    let on_edge = |x: &Vector<D>| (0..D).any(|i| x[i] - grid.lo[i] < tol || grid.hi[i] - x[i] < grid.spacing - tol);
    let mut total = 0.0;
    let mut edge = 0.0;
    for (x, v) in pts.iter().zip(&est.values) {
        total += v.abs();
        if on_edge(x) {
            edge += v.abs();
        }
    }
    let boundary_fraction = if total > 0.0 { edge / total } else { 0.0 };
    if boundary_fraction > MAX_BOUNDARY_FRACTION {
        return Err(Error::config(format!(
            "L1 grid too small: {:.2}% of the mass sits on the boundary layer",
            100.0 * boundary_fraction
        )));
    }
    Ok(L1Report { t, ratio: total / fvals, boundary_fraction })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::families::*;
    use crate::flow::simulate;
    use crate::operator::TestFunction;
    use crate::{linalg, Matrix};

    fn model1() -> LevyModel<1> {
        LevyModel::<1>::smooth(1.0, 1.0).unwrap().with_trunc_low(0.02).unwrap()
    }

    #[test]
    fn linear_flow_without_noise() {
        let a = Matrix::<2>::new(-0.5, 1.0, -1.0, 0.2);
        let c = linear(a);
        let m = LevyModel::<2>::smooth(1.0, 1.0).unwrap().silenced();
        let cfg = SimConfig::new(1.0, 1, 0);
        let x0 = Vector::<2>::new(1.0, -0.5);
        let p = simulate(&c, &m, &cfg, &x0, 0).unwrap();
        let run = reverse_and_check(&c, &m, &p, ReversalMode::Reduced, cfg.dt_max).unwrap();
        assert!(run.roundtrip_error < 1e-8);
        let back = linalg::expm(&(-a)) * p.final_state();
        assert!((back - x0).norm() < 1e-8);
    }

    #[test]
    fn translations_are_inverted_exactly() {
        let c = additive::<1>();
        let m = model1();
        let p = simulate(&c, &m, &SimConfig::new(1.0, 1, 5), &Vector::<1>::new(0.3), 0).unwrap();
        assert!(!p.jumps.is_empty());
        let run = reverse_and_check(&c, &m, &p, ReversalMode::Full, 1e-3).unwrap();
        assert!(run.roundtrip_error < 1e-12, "{}", run.roundtrip_error);
    }

    #[test]
    fn multiplicative_jumps_both_modes() {
        let c = multiplicative(0.4, 0.0);
        let m = model1();
        let p = simulate(&c, &m, &SimConfig::new(1.0, 1, 7), &Vector::<1>::new(0.8), 2).unwrap();
        for mode in [ReversalMode::Reduced, ReversalMode::Full] {
            let run = reverse_and_check(&c, &m, &p, mode, 1e-3).unwrap();
            assert!(run.roundtrip_error < 1e-6, "{mode:?}: {}", run.roundtrip_error);
        }
    }

    #[test]
    fn reversed_record_is_a_bijection() {
        let c = sine(0.4, 0.5);
        let m = model1();
        let p = simulate(&c, &m, &SimConfig::new(0.7, 1, 3), &Vector::<1>::new(0.1), 4).unwrap();
        let run = reverse_and_check(&c, &m, &p, ReversalMode::Reduced, 1e-3).unwrap();
        let mut fwd: Vec<f64> = p.jumps.iter().map(|j| j.z[0]).collect();
        let mut rev: Vec<f64> = run.reversed_jumps.iter().map(|j| j.z[0]).collect();
        fwd.sort_by(f64::total_cmp);
        rev.sort_by(f64::total_cmp);
        assert_eq!(fwd, rev);
        for (r, f) in run.reversed_jumps.iter().zip(p.jumps.iter().rev()) {
            assert!((r.time - (0.7 - f.time)).abs() < 1e-15);
        }
        assert!(run.roundtrip_error < 1e-6);
    }

    #[test]
    fn batch_round_trip() {
        let s = reversal_check(&sine(0.4, 0.5), &model1(), &SimConfig::new(1.0, 64, 1), &Vector::<1>::new(0.5), ReversalMode::Reduced)
            .unwrap();
        assert_eq!(s.n_paths, 64);
        assert!(s.max_roundtrip_error < 1e-6);
        assert!(s.mean_roundtrip_error <= s.max_roundtrip_error);
    }

    #[test]
    fn l1_ratio_cases() {
        let c = additive::<1>();
        let m = model1();
        let f = TestFunction::<1>::Bump { center: Vector::<1>::zeros(), radius: 1.0 };
        let grid = GridSpec::new(Vector::<1>::new(-6.0), Vector::<1>::new(6.0), 0.05);
        let cfg = SimConfig::new(0.5, 400, 2);
        let r0 = l1_bound_check(&c, &m, &cfg, &f, &grid, 0.0).unwrap();
        assert_eq!(r0.ratio, 1.0);
        let r = l1_bound_check(&c, &m, &cfg, &f, &grid, 0.5).unwrap();
        assert!(r.ratio <= 1.0 + 1e-9, "{}", r.ratio);
        let small = GridSpec::new(Vector::<1>::new(-1.0), Vector::<1>::new(1.0), 0.05);
        assert!(matches!(l1_bound_check(&c, &m, &cfg, &f, &small, 0.5), Err(Error::Config(_))));
    }
}
