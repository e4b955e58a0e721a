//! Monte-Carlo semigroup `T^0_t f(x) = E f(X_t(x))`, kernel density
//! estimates, the Duhamel iteration for the big-jump perturbation, the
//! generator residual and gradient-decay scans.
//!
//! Every estimator over a set of starting points uses common random numbers:
//! path `i` is driven by the same jump record from every start, so estimated
//! surfaces are smooth in `x` and differences across `x` are cheap to resolve.

use nalgebra::{DMatrix, DVector};

use crate::coeffs::CoefficientSet;
use crate::flow::{Jump, SimConfig, Simulator, State};
use crate::levy::LevyModel;
use crate::linalg;
use crate::operator::{Operator, OperatorKind, ScalarField};
use crate::par;
use crate::quad;
use crate::rng::{self, lane};
use crate::stats::{self, Estimate, Moments};
use crate::{Error, Matrix, Result, Vector};

pub use crate::stats::ScanResult;

/// Per-point Monte-Carlo estimates of `E f(X_t(x))`.
#[derive(Debug, Clone, PartialEq)]
pub struct SemigroupEstimate<const D: usize> {
    pub t: f64,
    pub x_grid: Vec<Vector<D>>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_paths: usize,
}

/// The maps `x ↦ X_τ(x)` of one path at a few times, all driven by one jump
/// record. Affine systems store `(J_τ, X_τ(0))` and evaluate in closed form.
pub(crate) struct PathFlow<'s, 'a, const D: usize> {
    sim: &'s Simulator<'a, D>,
    jumps: Vec<Jump<D>>,
    times: Vec<f64>,
    affine: Option<Vec<(Matrix<D>, Vector<D>)>>,
}

impl<'s, 'a, const D: usize> PathFlow<'s, 'a, D> {
    /// `times` must be positive and increasing.
    pub(crate) fn new(sim: &'s Simulator<'a, D>, index: u64, times: &[f64]) -> Result<Self> {
        let jumps = sim.jumps(index)?;
        if sim.coeffs().is_affine() && sim.skeleton.track_jacobians {
            let mut maps = Vec::with_capacity(times.len());
            let mut s = State::start(Vector::<D>::zeros());
            let mut t0 = 0.0;
            for &t in times {
                s = sim.skeleton.run_from(s, &jumps, t0, t, &mut ())?;
                maps.push((s.j, s.x));
                t0 = t;
            }
            return Ok(PathFlow { sim, jumps: Vec::new(), times: times.to_vec(), affine: Some(maps) });
        }
        Ok(PathFlow { sim, jumps, times: times.to_vec(), affine: None })
    }

    /// `X_{times[k]}(x)`.
    pub(crate) fn at(&self, k: usize, x: &Vector<D>) -> Result<Vector<D>> {
        match &self.affine {
            Some(m) => Ok(m[k].0 * x + m[k].1),
            None => Ok(self.sim.skeleton.run(x, &self.jumps, 0.0, self.times[k], &mut ())?.x),
        }
    }
}

/// A simulator for `[0, t_end]` sharing `cfg`'s seed and step, with
/// Jacobians switched on exactly when the flow is affine.
pub(crate) fn simulator_for<'a, const D: usize>(
    c: &'a CoefficientSet<D>,
    m: &'a LevyModel<D>,
    cfg: &SimConfig,
    t_end: f64,
) -> Result<Simulator<'a, D>> {
    let mut cfg = cfg.clone();
    cfg.t_end = t_end;
    cfg.dt_max = cfg.dt_max.min(t_end);
    cfg.record_jacobians = c.is_affine();
    Simulator::new(c, m, &cfg)
}

fn merge_moments(a: &mut [Moments], b: Vec<Moments>) {
    for (x, y) in a.iter_mut().zip(&b) {
        x.merge(y);
    }
}

/// `T^0_t f` on `x_grid` (big jumps included when `cfg.big_jumps`).
pub fn semigroup<const D: usize>(
    c: &CoefficientSet<D>,
    m: &LevyModel<D>,
    cfg: &SimConfig,
    f: &dyn ScalarField<D>,
    t: f64,
    x_grid: &[Vector<D>],
) -> Result<SemigroupEstimate<D>> {
    if t == 0.0 {
        return Ok(SemigroupEstimate {
            t,
            x_grid: x_grid.to_vec(),
            values: x_grid.iter().map(|x| f.value(x)).collect(),
            stderr: vec![0.0; x_grid.len()],
            n_paths: cfg.n_paths,
        });
    }
    let sim = simulator_for(c, m, cfg, t)?;
    let g = x_grid.len();
    let acc = par::try_fold(
        cfg.n_paths,
        || vec![Moments::default(); g],
        |acc, i| {
            let flow = PathFlow::new(&sim, i as u64, &[t])?;
            for (k, x) in x_grid.iter().enumerate() {
                acc[k].push(f.value(&flow.at(0, x)?));
            }
            Ok(())
        },
        |a, b| merge_moments(a, b),
    )?;
    Ok(SemigroupEstimate {
        t,
        x_grid: x_grid.to_vec(),
        values: acc.iter().map(|s| s.mean()).collect(),
        stderr: acc.iter().map(|s| s.stderr()).collect(),
        n_paths: cfg.n_paths,
    })
}

/// Tensor grid with values, interpolated by 4-point Lagrange stencils per
/// axis and extended by the boundary value outside.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction<const D: usize> {
    pub axes: Vec<Vec<f64>>,
    /// Axis 0 varies fastest.
    pub values: Vec<f64>,
}

impl<const D: usize> GridFunction<D> {
    pub fn new(axes: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        check_axes::<D>(&axes)?;
        if values.len() != axes.iter().map(|a| a.len()).product::<usize>() {
            return Err(Error::config("grid function: value count does not match the axes"));
        }
        Ok(GridFunction { axes, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn point(&self, flat: usize) -> Vector<D> {
        grid_point::<D>(&self.axes, flat)
    }

    fn stencil(axis: &[f64], x: f64) -> ([usize; 4], [f64; 4], usize) {
        let n = axis.len();
        if n == 1 {
            return ([0; 4], [1.0, 0.0, 0.0, 0.0], 1);
        }
        let x = x.clamp(axis[0], axis[n - 1]);
        let i = axis.partition_point(|a| *a <= x).clamp(1, n - 1) - 1;
        let m = n.min(4);
        let start = (i as isize - 1).clamp(0, (n - m) as isize) as usize;
        let mut idx = [0; 4];
        let mut w = [0.0; 4];
        for a in 0..m {
            idx[a] = start + a;
            let mut l = 1.0;
            for b in 0..m {
                if a != b {
                    l *= (x - axis[start + b]) / (axis[start + a] - axis[start + b]);
                }
            }
            w[a] = l;
        }
        (idx, w, m)
    }
}

impl<const D: usize> ScalarField<D> for GridFunction<D> {
    fn value(&self, x: &Vector<D>) -> f64 {
        let mut st = [([0usize; 4], [0.0f64; 4], 0usize); 3];
        for i in 0..D {
            st[i] = Self::stencil(&self.axes[i], x[i]);
        }
        let mut acc = 0.0;
        let mut counter = [0usize; 3];
        loop {
            let mut flat = 0;
            let mut stride = 1;
            let mut w = 1.0;
            for i in 0..D {
                flat += st[i].0[counter[i]] * stride;
                stride *= self.axes[i].len();
                w *= st[i].1[counter[i]];
            }
            acc += w * self.values[flat];
            let mut i = 0;
            loop {
                if i == D {
                    return acc;
                }
                counter[i] += 1;
                if counter[i] < st[i].2 {
                    break;
                }
                counter[i] = 0;
                i += 1;
            }
        }
    }
}

fn check_axes<const D: usize>(axes: &[Vec<f64>]) -> Result<()> {
    if D > 3 {
        return Err(Error::config("grid functions support d <= 3"));
    }
    if axes.len() != D {
        return Err(Error::config(format!("expected {D} axes, got {}", axes.len())));
    }
    for a in axes {
        if a.is_empty() || a.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("grid axes must be non-empty and strictly increasing"));
        }
    }
    Ok(())
}

fn grid_point<const D: usize>(axes: &[Vec<f64>], mut flat: usize) -> Vector<D> {
    let mut x = Vector::<D>::zeros();
    for i in 0..D {
        let n = axes[i].len();
        x[i] = axes[i][flat % n];
        flat /= n;
    }
    x
}

/// `n` equally spaced points on `[lo, hi]`.
pub fn uniform_axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

/// `n` points on `[-half, half]`, spacing about `core·(2/n)·asinh(half/core)`
/// near 0 and growing like `|x|` further out.
pub fn stretched_axis(half: f64, core: f64, n: usize) -> Vec<f64> {
    let a = (half / core).asinh();
    uniform_axis(-1.0, 1.0, n).into_iter().map(|s| core * (s * a).sinh()).collect()
}

/// Endpoint density estimate on a tensor grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate<const D: usize> {
    pub t: f64,
    pub x: Vector<D>,
    pub y_grid: Vec<Vec<f64>>,
    /// Axis 0 varies fastest.
    pub rho_hat: Vec<f64>,
    pub bandwidth: Vector<D>,
    pub mass: f64,
    pub n_paths: usize,
}

/// Silverman's factor applied to the robust spread.
pub const SILVERMAN_SCALE: f64 = 0.8;
/// Kernel support in bandwidths.
const KDE_REACH: f64 = 4.0;
const KDE_MAX_AXIS: usize = 1000;

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (sorted[j] - sorted[i]) * (pos - i as f64)
}

fn trapezoid_weights(axis: &[f64]) -> Vec<f64> {
    let n = axis.len();
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|k| {
            let l = if k > 0 { axis[k] - axis[k - 1] } else { 0.0 };
            let r = if k + 1 < n { axis[k + 1] - axis[k] } else { 0.0 };
            0.5 * (l + r)
        })
        .collect()
}

/// Gaussian KDE of `X_t(x)`. Per-axis bandwidth `0.8 × Silverman` on the
/// robust spread unless `bandwidth` is given. The default grid spans the
/// 0.025%..99.975% sample quantiles widened by four bandwidths.
pub fn density<const D: usize>(
    c: &CoefficientSet<D>,
    m: &LevyModel<D>,
    cfg: &SimConfig,
    t: f64,
    x: &Vector<D>,
    y_grid: Option<Vec<Vec<f64>>>,
    bandwidth: Option<f64>,
) -> Result<DensityEstimate<D>> {
    if !(t > 0.0) {
        return Err(Error::config("density needs t > 0"));
    }
    if let Some(h) = bandwidth {
        if !(h > 0.0) {
            return Err(Error::config("bandwidth must be positive"));
        }
    }
    let sim = simulator_for(c, m, cfg, t)?;
    let samples = par::map(cfg.n_paths, |i| PathFlow::new(&sim, i as u64, &[t])?.at(0, x));
    let samples = samples.into_iter().collect::<Result<Vec<_>>>()?;
    let n = samples.len();
    let mut h = Vector::<D>::zeros();
    let mut axes = Vec::with_capacity(D);
    for i in 0..D {
        let mut col: Vec<f64> = samples.iter().map(|s| s[i]).collect();
        col.sort_by(f64::total_cmp);
        let e = Estimate::from_samples(&col);
        let sd = e.stderr * (n as f64).sqrt();
        if !(sd > 0.0) {
            return Err(Error::numerics(format!("degenerate spread: all endpoints share coordinate {i}")));
        }
        let iqr = quantile(&col, 0.75) - quantile(&col, 0.25);
        let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
        h[i] = bandwidth.unwrap_or(SILVERMAN_SCALE * 0.9 * spread * (n as f64).powf(-0.2));
        if y_grid.is_none() {
            let lo = quantile(&col, 0.00025) - KDE_REACH * h[i];
            let hi = quantile(&col, 0.99975) + KDE_REACH * h[i];
            let count = (((hi - lo) / (h[i] / 1.5)).ceil() as usize + 1).min(KDE_MAX_AXIS);
            axes.push(uniform_axis(lo, hi, count));
        }
    }
    let axes = match y_grid {
        Some(a) => {
            check_axes::<D>(&a)?;
            a
        }
        None => axes,
    };
    let strides: Vec<usize> = (0..D).map(|i| axes[..i].iter().map(|a| a.len()).product()).collect();
    let total: usize = axes.iter().map(|a| a.len()).product();
    let mut rho = vec![0.0; total];
    let norm: Vec<f64> = (0..D).map(|i| 1.0 / (h[i] * (2.0 * std::f64::consts::PI).sqrt())).collect();
    let mut ranges: Vec<(usize, Vec<f64>)> = vec![(0, Vec::new()); D];
    for s in &samples {
        for i in 0..D {
            let a = &axes[i];
            let lo = a.partition_point(|y| *y < s[i] - KDE_REACH * h[i]);
            let hi = a.partition_point(|y| *y <= s[i] + KDE_REACH * h[i]);
            ranges[i].0 = lo;
            ranges[i].1.clear();
            for y in &a[lo..hi] {
                let u = (y - s[i]) / h[i];
                ranges[i].1.push(norm[i] * (-0.5 * u * u).exp());
            }
        }
        if ranges.iter().any(|r| r.1.is_empty()) {
            continue;
        }
        let mut counter = vec![0usize; D];
        'outer: loop {
            let mut flat = 0;
            let mut w = 1.0;
            for i in 0..D {
                flat += (ranges[i].0 + counter[i]) * strides[i];
                w *= ranges[i].1[counter[i]];
            }
            rho[flat] += w;
            for i in 0..D {
                counter[i] += 1;
                if counter[i] < ranges[i].1.len() {
                    continue 'outer;
                }
                counter[i] = 0;
            }
            break;
        }
    }
    let inv_n = 1.0 / n as f64;
    rho.iter_mut().for_each(|r| *r *= inv_n);
    let tw: Vec<Vec<f64>> = axes.iter().map(|a| trapezoid_weights(a)).collect();
    let cell: Vec<f64> = (0..total)
        .map(|mut flat| {
            let mut w = rho[flat];
            for i in 0..D {
                let n = axes[i].len();
                w *= tw[i][flat % n];
                flat /= n;
            }
            w
        })
        .collect();
    let mass = stats::pairwise_sum(&cell);
    Ok(DensityEstimate { t, x: *x, y_grid: axes, rho_hat: rho, bandwidth: h, mass, n_paths: n })
}

/// Knobs of [`duhamel`].
#[derive(Debug, Clone, PartialEq)]
pub struct DuhamelOptions {
    pub n_time_nodes: usize,
    /// Independent batches for the standard error of the correction.
    pub batches: usize,
    /// Spatial grid carrying `T_{s_k} f` (one axis per coordinate).
    pub axes: Vec<Vec<f64>>,
    pub max_sweeps: usize,
}

impl DuhamelOptions {
    pub fn new(n_time_nodes: usize, axes: Vec<Vec<f64>>) -> Self {
        DuhamelOptions { n_time_nodes, batches: 8, axes, max_sweeps: 40 }
    }
}

/// Outcome of [`duhamel`]: the estimate plus convergence bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct DuhamelResult<const D: usize> {
    pub estimate: SemigroupEstimate<D>,
    /// `T^0_t f` on `x_grid`, the zeroth Picard iterate.
    pub unperturbed: SemigroupEstimate<D>,
    pub sweeps: usize,
    /// Sup-norm change of the last sweep.
    pub last_change: f64,
}

/// Seed tag for the correction batches.
const DUHAMEL_TAG: u64 = 0xD0A1_0000;

/// `W[k][j] = ∫_0^{s_k} ℓ^{(k)}_j(r)dr` with `ℓ^{(k)}` the Lagrange basis on
/// `s_0..s_k`.
pub fn volterra_weights(nodes: &[f64]) -> Vec<Vec<f64>> {
    nodes
        .iter()
        .enumerate()
        .map(|(k, &sk)| {
            let pts = &nodes[..=k];
            let rule = quad::gauss_legendre_on(k + 2, 0.0, sk);
            (0..=k)
                .map(|j| {
                    rule.iter()
                        .map(|(r, w)| {
                            let mut l = 1.0;
                            for (b, pb) in pts.iter().enumerate() {
                                if b != j {
                                    l *= (r - pb) / (pts[j] - pb);
                                }
                            }
                            l * w
                        })
                        .sum()
                })
                .collect()
        })
        .collect()
}

/// `T_t f = T^0_t f + ∫_0^t T^0_{t-s} ℒ T_s f ds` by Picard iteration on the
/// Gauss nodes of `[0, t]`.
///
/// `T_{s_k} f` lives on `opts.axes`; `T^0` is estimated with common random
/// numbers per batch and the batches run their sweeps in lockstep. Iteration
/// stops once a sweep moves the result by less than three standard errors
/// (sup over `x_grid`). `script_l = None` means `ℒ ≡ 0` and returns the plain
/// semigroup estimate.
pub fn duhamel<const D: usize>(
    c: &CoefficientSet<D>,
    m: &LevyModel<D>,
    cfg: &SimConfig,
    f: &dyn ScalarField<D>,
    t: f64,
    x_grid: &[Vector<D>],
    script_l: Option<&Operator<D>>,
    opts: &DuhamelOptions,
) -> Result<DuhamelResult<D>> {
    let cfg0 = cfg.clone().with_big_jumps(false);
    let base = semigroup(c, m, &cfg0, f, t, x_grid)?;
    let op = match script_l {
        Some(op) if t > 0.0 => op,
        _ => {
            return Ok(DuhamelResult { estimate: base.clone(), unperturbed: base, sweeps: 0, last_change: 0.0 });
        }
    };
    if op.kind() != OperatorKind::BigJumpScriptL {
        return Err(Error::config("duhamel needs the big-jump operator"));
    }
    if opts.n_time_nodes == 0 || opts.batches < 2 || cfg.n_paths < opts.batches {
        return Err(Error::config("duhamel needs n_time_nodes ≥ 1, batches ≥ 2 and n_paths ≥ batches"));
    }
    check_axes::<D>(&opts.axes)?;
    let kn = opts.n_time_nodes;
    let gl = quad::gauss_legendre_on(kn, 0.0, t);
    let s: Vec<f64> = gl.iter().map(|p| p.0).collect();
    let w: Vec<f64> = gl.iter().map(|p| p.1).collect();
    let vw = volterra_weights(&s);

    // Distinct positive lags: s_k, s_k - s_j (j < k), t - s_j.
    let mut taus: Vec<f64> = s.clone();
    for k in 0..kn {
        for j in 0..k {
            taus.push(s[k] - s[j]);
        }
        taus.push(t - s[k]);
    }
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    let tau_index = |v: f64| taus.binary_search_by(|p| p.total_cmp(&v)).expect("lag listed");

    let grid_len: usize = opts.axes.iter().map(|a| a.len()).product();
    let grid: Vec<Vector<D>> = (0..grid_len).map(|g| grid_point::<D>(&opts.axes, g)).collect();
    let nb = cfg.n_paths / opts.batches;

    struct Batch<'s, 'a, const D: usize> {
        flows: Vec<PathFlow<'s, 'a, D>>,
        base: Vec<Vec<f64>>,
        u: Vec<GridFunction<D>>,
    }

    let sims = (0..opts.batches)
        .map(|b| {
            let mut cb = cfg0.clone();
            cb.seed = rng::child_seed(cfg.seed, DUHAMEL_TAG + b as u64);
            cb.n_paths = nb;
            simulator_for(c, m, &cb, t)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut batches = Vec::with_capacity(opts.batches);
    for sim in &sims {
        let flows = par::map(nb, |i| PathFlow::new(sim, i as u64, &taus));
        let flows = flows.into_iter().collect::<Result<Vec<_>>>()?;
        let base = (0..kn)
            .map(|k| {
                let ti = tau_index(s[k]);
                let vals = par::map(grid_len, |g| {
                    let mut acc = 0.0;
                    for fl in &flows {
                        acc += f.value(&fl.at(ti, &grid[g])?);
                    }
                    Ok(acc / nb as f64)
                });
                vals.into_iter().collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let u = base.iter().map(|v| GridFunction::<D>::new(opts.axes.clone(), v.clone())).collect::<Result<_>>()?;
        batches.push(Batch { flows, base, u });
    }

    let mut prev: Option<Vec<f64>> = None;
    let mut changes: Vec<f64> = Vec::new();
    for sweep in 1..=opts.max_sweeps {
        let mut corr = vec![vec![0.0; x_grid.len()]; opts.batches];
        for (b, batch) in batches.iter_mut().enumerate() {
            let lu: Vec<GridFunction<D>> = batch
                .u
                .iter()
                .map(|u| {
                    let v = par::map(grid_len, |g| op.big(u, &grid[g]));
                    GridFunction { axes: opts.axes.clone(), values: v }
                })
                .collect();
            let flows = &batch.flows;
            let mc = |g: &GridFunction<D>, ti: usize, x: &Vector<D>| -> Result<f64> {
                let mut acc = 0.0;
                for fl in flows {
                    acc += g.value(&fl.at(ti, x)?);
                }
                Ok(acc / nb as f64)
            };
            let mut next = Vec::with_capacity(kn);
            for k in 0..kn {
                let vals = par::map(grid_len, |gi| {
                    let x = &grid[gi];
                    let mut v = batch.base[k][gi] + vw[k][k] * lu[k].values[gi];
                    for j in 0..k {
                        v += vw[k][j] * mc(&lu[j], tau_index(s[k] - s[j]), x)?;
                    }
                    Ok(v)
                });
                let vals = vals.into_iter().collect::<Result<Vec<f64>>>()?;
                next.push(GridFunction { axes: opts.axes.clone(), values: vals });
            }
            let cb = par::map(x_grid.len(), |xi| {
                let mut v = 0.0;
                for j in 0..kn {
                    v += w[j] * mc(&lu[j], tau_index(t - s[j]), &x_grid[xi])?;
                }
                Ok(v)
            });
            corr[b] = cb.into_iter().collect::<Result<Vec<f64>>>()?;
            batch.u = next;
        }
        let est: Vec<Estimate> = (0..x_grid.len())
            .map(|xi| Estimate::from_samples(&corr.iter().map(|cb| cb[xi]).collect::<Vec<_>>()))
            .collect();
        let mean: Vec<f64> = est.iter().map(|e| e.mean).collect();
        let noise = est.iter().map(|e| e.stderr).fold(0.0, f64::max);
        if let Some(p) = &prev {
            let change = mean.iter().zip(p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            changes.push(change);
            let n = changes.len();
            if change == 0.0 || change < 3.0 * noise {
                let values = base.values.iter().zip(&mean).map(|(a, b)| a + b).collect();
                let stderr = base.stderr.iter().zip(&est).map(|(a, e)| stats::combined_stderr(*a, e.stderr)).collect();
                return Ok(DuhamelResult {
                    estimate: SemigroupEstimate { t, x_grid: x_grid.to_vec(), values, stderr, n_paths: cfg.n_paths },
                    unperturbed: base,
                    sweeps: sweep,
                    last_change: change,
                });
            }
            if n >= 4 && changes[n - 1] > changes[n - 2] && changes[n - 2] > changes[n - 3] && changes[n - 3] > changes[n - 4]
            {
                return Err(Error::numerics(format!("Picard sweeps do not contract (changes {:?})", &changes[n - 4..])));
            }
        }
        prev = Some(mean);
    }
    Err(Error::numerics(format!("Picard iteration did not settle in {} sweeps", opts.max_sweeps)))
}

/// `Π_i ((x_i - c_i)/w_i)^{a_i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial<const D: usize> {
    pub center: Vector<D>,
    pub scale: Vector<D>,
    pub exps: [u32; D],
}

impl<const D: usize> Monomial<D> {
    fn factor(&self, x: &Vector<D>, i: usize, der: u32) -> f64 {
        let a = self.exps[i];
        if der > a {
            return 0.0;
        }
        let u = (x[i] - self.center[i]) / self.scale[i];
        let mut coef = 1.0;
        for q in 0..der {
            coef *= (a - q) as f64;
        }
        coef * u.powi((a - der) as i32) / self.scale[i].powi(der as i32)
    }
}

impl<const D: usize> ScalarField<D> for Monomial<D> {
    fn value(&self, x: &Vector<D>) -> f64 {
        (0..D).map(|i| self.factor(x, i, 0)).product()
    }

    fn gradient(&self, x: &Vector<D>) -> Vector<D> {
        Vector::<D>::from_fn(|k, _| (0..D).map(|i| self.factor(x, i, u32::from(i == k))).product())
    }

    fn hessian(&self, x: &Vector<D>) -> Matrix<D> {
        Matrix::<D>::from_fn(|k, l| {
            (0..D).map(|i| self.factor(x, i, u32::from(i == k) + u32::from(i == l))).product()
        })
    }
}

/// Least-squares polynomial fit on a tensor stencil, exposed as linear
/// functionals of the stencil values.
#[derive(Debug, Clone)]
pub struct LocalPoly<const D: usize> {
    pub offsets: Vec<Vector<D>>,
    pub exps: Vec<[u32; D]>,
    pub window: Vector<D>,
    pinv: DMatrix<f64>,
}

impl<const D: usize> LocalPoly<D> {
    /// Stencil of `per_axis` points on `[-w_i, w_i]` per axis (a single point
    /// where `w_i = 0`), monomials of total degree ≤ `degree`.
    pub fn new(window: Vector<D>, per_axis: usize, degree: u32) -> Result<Self> {
        if per_axis < degree as usize + 1 || window.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::config("local fit needs per_axis > degree and non-negative windows"));
        }
        let counts: Vec<usize> = (0..D).map(|i| if window[i] > 0.0 { per_axis } else { 1 }).collect();
        let total: usize = counts.iter().product();
        let offsets: Vec<Vector<D>> = (0..total)
            .map(|mut flat| {
                let mut y = Vector::<D>::zeros();
                for i in 0..D {
                    if counts[i] > 1 {
                        y[i] = window[i] * (2.0 * (flat % counts[i]) as f64 / (counts[i] - 1) as f64 - 1.0);
                    }
                    flat /= counts[i];
                }
                y
            })
            .collect();
        let mut exps = Vec::new();
        let mut a = [0u32; D];
        loop {
            let deg: u32 = a.iter().sum();
            if deg <= degree && (0..D).all(|i| a[i] == 0 || window[i] > 0.0) {
                exps.push(a);
            }
            let mut i = 0;
            loop {
                if i == D {
                    break;
                }
                a[i] += 1;
                if a[i] <= degree {
                    break;
                }
                a[i] = 0;
                i += 1;
            }
            if i == D {
                break;
            }
        }
        let scale = window.map(|w| if w > 0.0 { w } else { 1.0 });
        let design = DMatrix::<f64>::from_fn(offsets.len(), exps.len(), |r, q| {
            (0..D).map(|i| (offsets[r][i] / scale[i]).powi(exps[q][i] as i32)).product()
        });
        let pinv = linalg::pseudo_inverse(&design)?;
        Ok(LocalPoly { offsets, exps, window: scale, pinv })
    }

    /// Stencil weights of the functional taking `λ_q` on monomial `q`.
    pub fn weights(&self, lambda: &[f64]) -> Vec<f64> {
        let l = DVector::<f64>::from_column_slice(lambda);
        (self.pinv.transpose() * l).iter().copied().collect()
    }

    pub fn monomial(&self, q: usize, center: &Vector<D>) -> Monomial<D> {
        Monomial { center: *center, scale: self.window, exps: self.exps[q] }
    }

    /// Weights of `∂^β` at the stencil center.
    pub fn derivative_weights(&self, beta: [u32; D]) -> Vec<f64> {
        let lambda: Vec<f64> = self
            .exps
            .iter()
            .map(|a| {
                if *a == beta {
                    (0..D).map(|i| (1..=a[i]).product::<u32>() as f64 / self.window[i].powi(a[i] as i32)).product()
                } else {
                    0.0
                }
            })
            .collect();
        self.weights(&lambda)
    }
}

/// One row of the generator residual table.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualRow<const D: usize> {
    pub x: Vector<D>,
    /// `[T_{t+h}f - T_{t-h}f](x)/(2h)`.
    pub time_derivative: f64,
    /// `(L_0 + ℒ)` applied to the smoothed `T_t f` at `x`.
    pub operator: f64,
    pub residual: f64,
    /// Paired Monte-Carlo standard error of the residual.
    pub stderr: f64,
    /// `max(|residual| - 2·stderr, 0)`: the part noise does not explain.
    pub bias: f64,
    /// RMS misfit of the polynomial to the mean stencil values.
    pub fit_rms: f64,
}

/// The residual table with its summary.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualTable<const D: usize> {
    pub rows: Vec<ResidualRow<D>>,
    pub max_residual: f64,
    /// `max_x |(L_0+ℒ)T_t f(x)|`.
    pub scale: f64,
    pub noise_floor: f64,
    pub relative: f64,
    pub h: f64,
}

/// Points per axis of the local fit.
pub const FIT_POINTS: usize = 9;
pub const FIT_DEGREE: u32 = 4;
/// Window along axes the noise does not reach (drift transport only).
const MIN_WINDOW: f64 = 0.2;

/// `max_{|z|=support} |σ_i(x,z)|` per coordinate.
fn reach<const D: usize>(c: &CoefficientSet<D>, m: &LevyModel<D>, x: &Vector<D>) -> Result<Vector<D>> {
    let mut r = Vector::<D>::zeros();
    for (u, _) in quad::sphere_rule::<D>(16)? {
        let s = c.sigma(x, &(u * m.support_end()));
        for i in 0..D {
            r[i] = r[i].max(s[i].abs());
        }
    }
    Ok(r)
}

/// `r(x) = [T_{t+h}f - T_{t-h}f](x)/(2h) - (L_0+ℒ)T_t f(x)`.
///
/// The small-jump part is applied to a degree-4 least-squares fit of the
/// common-random-number surface over a window spanning the jump reach; the
/// big-jump part, whose reach is unbounded, is estimated by displacing the
/// start of the same path by `σ(x,Z)`, `Z ~ μ/|μ|`. Every term is linear in
/// the per-path values, so the residual has a paired standard error. The
/// simulated process includes big jumps iff `full_op` is [`OperatorKind::Full`].
#[allow(clippy::too_many_arguments)]
pub fn generator_residual<const D: usize>(
    c: &CoefficientSet<D>,
    m: &LevyModel<D>,
    cfg: &SimConfig,
    f: &dyn ScalarField<D>,
    t: f64,
    x_grid: &[Vector<D>],
    full_op: &Operator<D>,
    h: f64,
) -> Result<ResidualTable<D>> {
    if !(h > 0.0 && t - h > 0.0 && t + h <= 1.0) {
        return Err(Error::config(format!("generator residual needs 0 < t-h and t+h ≤ 1 (t = {t}, h = {h})")));
    }
    let with_big = match full_op.kind() {
        OperatorKind::Full => true,
        OperatorKind::SmallJumpL0 => false,
        OperatorKind::BigJumpScriptL => return Err(Error::config("generator residual needs L_0 or the full operator")),
    };
    let sim = simulator_for(c, m, &cfg.clone().with_big_jumps(with_big), t + h)?;
    let mu = m.big_jumps();
    let mass = if with_big && !m.is_silent() { mu.mass() } else { 0.0 };

    struct Site<const D: usize> {
        x: Vector<D>,
        fit: LocalPoly<D>,
        omega: Vec<f64>,
    }
    let sites = x_grid
        .iter()
        .map(|x| {
            let r = reach(c, m, x)?;
            let window = r.map(|v| v.max(MIN_WINDOW));
            let fit = LocalPoly::new(window, FIT_POINTS, FIT_DEGREE)?;
            let lambda = (0..fit.exps.len()).map(|q| full_op.small(&fit.monomial(q, x), x)).collect::<Result<Vec<_>>>()?;
            let omega = fit.weights(&lambda);
            Ok(Site { x: *x, fit, omega })
        })
        .collect::<Result<Vec<_>>>()?;

    // Per site: residual, time derivative, operator, then the stencil means.
    let layout: Vec<usize> = sites.iter().map(|s| 3 + s.fit.offsets.len()).collect();
    let starts: Vec<usize> = layout.iter().scan(0, |a, l| { let s = *a; *a += l; Some(s) }).collect();
    let width: usize = layout.iter().sum();
    let acc = par::try_fold(
        cfg.n_paths,
        || vec![Moments::default(); width],
        |acc, i| {
            let flow = PathFlow::new(&sim, i as u64, &[t - h, t, t + h])?;
            let z = if mass > 0.0 {
                let mut r = rng::stream(cfg.seed, lane::AUX, i as u64);
                Some(mu.sample(&mut r))
            } else {
                None
            };
            for (si, site) in sites.iter().enumerate() {
                let x = &site.x;
                let dt = (f.value(&flow.at(2, x)?) - f.value(&flow.at(0, x)?)) / (2.0 * h);
                let here = f.value(&flow.at(1, x)?);
                let mut op = 0.0;
                let base = starts[si];
                for (k, (y, w)) in site.fit.offsets.iter().zip(&site.omega).enumerate() {
                    let v = f.value(&flow.at(1, &(x + y))?);
                    op += w * v;
                    acc[base + 3 + k].push(v);
                }
                if let Some(z) = &z {
                    op += mass * (f.value(&flow.at(1, &(x + c.sigma(x, z)))?) - here);
                }
                acc[base].push(dt - op);
                acc[base + 1].push(dt);
                acc[base + 2].push(op);
            }
            Ok(())
        },
        |a, b| merge_moments(a, b),
    )?;

    let mut rows = Vec::with_capacity(sites.len());
    for (si, site) in sites.iter().enumerate() {
        let b = starts[si];
        let means: Vec<f64> = (0..site.fit.offsets.len()).map(|k| acc[b + 3 + k].mean()).collect();
        let coef = site.fit.pinv.clone() * DVector::from_column_slice(&means);
        let mut ss = 0.0;
        for (k, y) in site.fit.offsets.iter().enumerate() {
            let p: f64 = site
                .fit
                .exps
                .iter()
                .enumerate()
                .map(|(q, a)| coef[q] * (0..D).map(|i| (y[i] / site.fit.window[i]).powi(a[i] as i32)).product::<f64>())
                .sum();
            ss += (p - means[k]).powi(2);
        }
        let r = acc[b].summary();
        rows.push(ResidualRow {
            x: site.x,
            time_derivative: acc[b + 1].mean(),
            operator: acc[b + 2].mean(),
            residual: r.mean,
            stderr: r.stderr,
            bias: (r.mean.abs() - 2.0 * r.stderr).max(0.0),
            fit_rms: (ss / means.len() as f64).sqrt(),
        });
    }
    let max_residual = rows.iter().map(|r| r.residual.abs()).fold(0.0, f64::max);
    let scale = rows.iter().map(|r| r.operator.abs()).fold(0.0, f64::max);
    let noise_floor = rows.iter().map(|r| r.stderr).fold(0.0, f64::max);
    let relative = if scale > 0.0 { max_residual / scale } else if max_residual == 0.0 { 0.0 } else { f64::INFINITY };
    Ok(ResidualTable { rows, max_residual, scale, noise_floor, relative, h })
}

/// Exponent scan of `sup_x |∇^k T^0_t f(x)|` against `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientScan {
    pub order: usize,
    pub scan: ScanResult,
    /// 95% interval of the fitted exponent.
    pub confidence: Option<(f64, f64)>,
}

fn derivative_multi_indices<const D: usize>(k: usize) -> Vec<([u32; D], f64)> {
    let mut out = Vec::new();
    for i in 0..D {
        if k == 1 {
            let mut b = [0u32; D];
            b[i] = 1;
            out.push((b, 1.0));
        } else {
            for j in i..D {
                let mut b = [0u32; D];
                b[i] += 1;
                b[j] += 1;
                out.push((b, if i == j { 1.0 } else { 2.0 }));
            }
        }
    }
    out
}

/// For each `t`, `sup_{x ∈ x_grid}` of the Euclidean (k=1) or Frobenius (k=2)
/// norm of the derivative of the common-random-number surface, obtained from
/// a degree-4 local fit whose window is half the combined scale of the
/// endpoint spread and `f`'s own length. The exponent is the weighted slope
/// of `log sup` against `log t` over points resolved beyond two standard
/// errors.
pub fn gradient_decay_scan<const D: usize>(
    c: &CoefficientSet<D>,
    m: &LevyModel<D>,
    cfg: &SimConfig,
    f: &dyn ScalarField<D>,
    t_list: &[f64],
    k: usize,
    x_grid: &[Vector<D>],
) -> Result<GradientScan> {
    if !(k == 1 || k == 2) {
        return Err(Error::config("derivative order must be 1 or 2"));
    }
    if x_grid.is_empty() || t_list.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::config("gradient scan needs points and positive times"));
    }
    let comps = derivative_multi_indices::<D>(k);
    let nq = comps.len();
    let ell = f.length_scale().unwrap_or(1.0);
    let mut ords = Vec::new();
    let mut errs = Vec::new();
    for &t in t_list {
        let sim = simulator_for(c, m, cfg, t)?;
        let pilot = cfg.n_paths.min(256);
        let ends = par::map(pilot, |i| PathFlow::new(&sim, i as u64, &[t])?.at(0, &x_grid[0]));
        let ends = ends.into_iter().collect::<Result<Vec<_>>>()?;
        let mut window = Vector::<D>::zeros();
        for i in 0..D {
            let mut col: Vec<f64> = ends.iter().map(|e| e[i]).collect();
            col.sort_by(f64::total_cmp);
            let spread = (quantile(&col, 0.75) - quantile(&col, 0.25)) / 1.349;
            window[i] = 0.5 * (spread * spread + ell * ell).sqrt();
        }
        let fit = LocalPoly::new(window, FIT_POINTS, FIT_DEGREE)?;
        let weights: Vec<Vec<f64>> = comps.iter().map(|(b, _)| fit.derivative_weights(*b)).collect();
        let width = x_grid.len() * (nq + nq * nq);
        let acc = par::try_fold(
            cfg.n_paths,
            || vec![0.0f64; width],
            |acc, i| {
                let flow = PathFlow::new(&sim, i as u64, &[t])?;
                let mut vals = vec![0.0; fit.offsets.len()];
                let mut comp = vec![0.0; nq];
                for (xi, x) in x_grid.iter().enumerate() {
                    for (v, y) in vals.iter_mut().zip(&fit.offsets) {
                        *v = f.value(&flow.at(0, &(x + y))?);
                    }
                    for q in 0..nq {
                        comp[q] = weights[q].iter().zip(&vals).map(|(w, v)| w * v).sum();
                    }
                    let base = xi * (nq + nq * nq);
                    for q in 0..nq {
                        acc[base + q] += comp[q];
                        for r in 0..nq {
                            acc[base + nq + q * nq + r] += comp[q] * comp[r];
                        }
                    }
                }
                Ok(())
            },
            |a, b| a.iter_mut().zip(&b).for_each(|(x, y)| *x += y),
        )?;
        let n = cfg.n_paths as f64;
        let mut best = (0.0, 0.0);
        for xi in 0..x_grid.len() {
            let base = xi * (nq + nq * nq);
            let mean: Vec<f64> = (0..nq).map(|q| acc[base + q] / n).collect();
            let norm = comps.iter().zip(&mean).map(|((_, mult), v)| mult * v * v).sum::<f64>().sqrt();
            let mut var = 0.0;
            if norm > 0.0 && n > 1.0 {
                let grad: Vec<f64> = comps.iter().zip(&mean).map(|((_, mult), v)| mult * v / norm).collect();
                for q in 0..nq {
                    for r in 0..nq {
                        let cov = (acc[base + nq + q * nq + r] - n * mean[q] * mean[r]) / (n - 1.0);
                        var += grad[q] * grad[r] * cov;
                    }
                }
            }
            let se = (var.max(0.0) / n).sqrt();
            if norm > best.0 {
                best = (norm, se);
            }
        }
        ords.push(best.0);
        errs.push(best.1);
    }
    let fit_window = (
        t_list.iter().copied().fold(f64::INFINITY, f64::min),
        t_list.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    let (mut lx, mut ly, mut lw) = (Vec::new(), Vec::new(), Vec::new());
    for ((t, o), e) in t_list.iter().zip(&ords).zip(&errs) {
        if *o > 2.0 * e && *o > 0.0 {
            lx.push(t.ln());
            ly.push(o.ln());
            let rel = (e / o).max(1e-12 * (1.0 + o.abs()));
            lw.push(1.0 / (rel * rel));
        }
    }
    let weighted = stats::line_fit(&lx, &ly, Some(&lw));
    let scatter = stats::line_fit(&lx, &ly, None);
    let (fitted, se) = match (weighted, scatter) {
        (Some(w), Some(s)) => (Some(w.slope), w.slope_stderr.max(if lx.len() > 2 { s.slope_stderr } else { 0.0 })),
        _ => (None, f64::NAN),
    };
    let confidence = fitted.map(|g| (g - 1.96 * se, g + 1.96 * se));
    Ok(GradientScan {
        order: k,
        scan: ScanResult {
            abscissae: t_list.to_vec(),
            ordinates: ords,
            stderr: errs,
            fitted_exponent: fitted,
            exponent_stderr: se,
            fit_window,
        },
        confidence,
    })
}
