//! Pathwise solver for `dX = b(X)dt + ∫σ(X-,z)N(dt,dz)` with the Jacobian
//! `J` and its inverse `K`.
//!
//! Jumps are exact; between jumps `(X, J, K)` follow
//! `X' = b(X)`, `J' = ∇b(X)J`, `K' = -K∇b(X)` integrated jointly by RK4 with
//! substeps of at most `dt_max`. At a jump `X ← X + σ(X-,z)`,
//! `J ← (I+∇_xσ)J`, `K ← K(I+∇_xσ)^{-1}`.

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::coeffs::{CoefficientSet, DriftKind};
use crate::levy::{BigJumpMeasure, LevyModel, NodeRule};
use crate::linalg;
use crate::par;
use crate::rng::{self, lane};
use crate::stats::{Estimate, Moments};
use crate::{Error, Matrix, Result, Vector};

/// Default drift substep.
pub const DEFAULT_DT_MAX: f64 = 1e-3;

/// Simulation parameters shared by every path of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub t_end: f64,
    pub dt_max: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub record_jacobians: bool,
    /// Also drive the flow with the big-jump measure `(1-χ)|z|^{-d-α}dz`.
    pub big_jumps: bool,
}

impl SimConfig {
    pub fn new(t_end: f64, n_paths: usize, seed: u64) -> Self {
        SimConfig { t_end, dt_max: DEFAULT_DT_MAX, n_paths, seed, record_jacobians: true, big_jumps: false }
    }

    pub fn with_dt_max(mut self, dt_max: f64) -> Self {
        self.dt_max = dt_max;
        self
    }

    pub fn with_jacobians(mut self, on: bool) -> Self {
        self.record_jacobians = on;
        self
    }

    pub fn with_big_jumps(mut self, on: bool) -> Self {
        self.big_jumps = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0 && self.t_end <= 1.0) {
            return Err(Error::config(format!("t_end must lie in (0,1], got {}", self.t_end)));
        }
        if !(self.dt_max > 0.0 && self.dt_max <= self.t_end) {
            return Err(Error::config(format!("dt_max must lie in (0, t_end], got {}", self.dt_max)));
        }
        if self.n_paths == 0 {
            return Err(Error::config("n_paths must be at least 1"));
        }
        Ok(())
    }
}

/// One realized jump of the driving Poisson measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump<const D: usize> {
    pub time: f64,
    pub z: Vector<D>,
    /// Drawn from the big-jump measure rather than `ν`.
    pub big: bool,
}

/// Flow state `(X, J, K)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State<const D: usize> {
    pub x: Vector<D>,
    pub j: Matrix<D>,
    pub k: Matrix<D>,
}

impl<const D: usize> State<D> {
    pub fn start(x: Vector<D>) -> Self {
        State { x, j: Matrix::<D>::identity(), k: Matrix::<D>::identity() }
    }

    /// `‖J K - I‖_∞`.
    pub fn inverse_defect(&self) -> f64 {
        linalg::norm_inf(&(self.j * self.k - Matrix::<D>::identity()))
    }
}

/// Poisson jump times on `(0, t_end]` with marks, small jumps from `ν` on
/// lane [`lane::SMALL_JUMPS`] and big jumps on [`lane::BIG_JUMPS`].
pub fn sample_jumps<const D: usize>(
    model: &LevyModel<D>,
    big: Option<&BigJumpMeasure<D>>,
    t_end: f64,
    seed: u64,
    index: u64,
) -> Result<Vec<Jump<D>>> {
    let mut out = Vec::new();
    let rate = model.jump_rate()?;
    if rate > 0.0 {
        let mut r = rng::stream(seed, lane::SMALL_JUMPS, index);
        poisson_marks(&mut r, rate, t_end, false, |r| model.sample_jump(r), &mut out)?;
    }
    if let Some(mu) = big {
        let rate = mu.mass();
        if rate > 0.0 {
            let mut r = rng::stream(seed, lane::BIG_JUMPS, index);
            poisson_marks(&mut r, rate, t_end, true, |r| Ok(mu.sample(r)), &mut out)?;
        }
    }
    out.sort_by(|a, b| a.time.total_cmp(&b.time));
    Ok(out)
}

fn poisson_marks<const D: usize, R: Rng, F>(
    r: &mut R,
    rate: f64,
    t_end: f64,
    big: bool,
    mut mark: F,
    out: &mut Vec<Jump<D>>,
) -> Result<()>
where
    F: FnMut(&mut R) -> Result<Vector<D>>,
{
    let gaps = Exp::new(rate).map_err(|e| Error::config(format!("jump rate {rate}: {e}")))?;
    let mut t = 0.0;
    loop {
        t += gaps.sample(r);
        if t > t_end {
            return Ok(());
        }
        let z = mark(r)?;
        out.push(Jump { time: t, z, big });
    }
}

/// Callbacks fired while a path is solved.
pub trait Observer<const D: usize> {
    /// Fire `on_node` at every drift substep, not only at segment ends.
    fn substeps(&self) -> bool {
        false
    }
    /// State at a time node; at a jump time this is the left limit.
    fn on_node(&mut self, _t: f64, _s: &State<D>) {}
    fn on_jump(&mut self, _t: f64, _z: &Vector<D>, _pre: &State<D>, _post: &State<D>) {}
}

impl<const D: usize> Observer<D> for () {}

/// Tracks `max ‖J K - I‖_∞` over all substeps.
#[derive(Debug, Default, Clone, Copy)]
pub struct DefectObserver {
    pub max_defect: f64,
}

impl<const D: usize> Observer<D> for DefectObserver {
    fn substeps(&self) -> bool {
        true
    }
    fn on_node(&mut self, _t: f64, s: &State<D>) {
        self.max_defect = self.max_defect.max(s.inverse_defect());
    }
    fn on_jump(&mut self, _t: f64, _z: &Vector<D>, _pre: &State<D>, post: &State<D>) {
        self.max_defect = self.max_defect.max(post.inverse_defect());
    }
}

/// Tracks `sup_t |J_t|` and `sup_t |K_t|` (spectral norm).
#[derive(Debug, Default, Clone, Copy)]
pub struct SupNormObserver {
    pub sup_j: f64,
    pub sup_k: f64,
}

/// Spectral norm.
pub fn op_norm<const D: usize>(m: &Matrix<D>) -> f64 {
    if D == 1 {
        return m[(0, 0)].abs();
    }
    linalg::sym_eigenvalues(&(m.transpose() * m)).last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

impl<const D: usize> Observer<D> for SupNormObserver {
    fn substeps(&self) -> bool {
        true
    }
    fn on_node(&mut self, _t: f64, s: &State<D>) {
        self.sup_j = self.sup_j.max(op_norm(&s.j));
        self.sup_k = self.sup_k.max(op_norm(&s.k));
    }
    fn on_jump(&mut self, t: f64, _z: &Vector<D>, _pre: &State<D>, post: &State<D>) {
        self.on_node(t, post);
    }
}

/// Pairs two observers.
impl<const D: usize, A: Observer<D>, B: Observer<D>> Observer<D> for (A, B) {
    fn substeps(&self) -> bool {
        self.0.substeps() || self.1.substeps()
    }
    fn on_node(&mut self, t: f64, s: &State<D>) {
        self.0.on_node(t, s);
        self.1.on_node(t, s);
    }
    fn on_jump(&mut self, t: f64, z: &Vector<D>, pre: &State<D>, post: &State<D>) {
        self.0.on_jump(t, z, pre, post);
        self.1.on_jump(t, z, pre, post);
    }
}

/// Deterministic skeleton solver: given the jump record, solves the flow.
#[derive(Debug, Clone)]
pub struct Skeleton<'a, const D: usize> {
    pub coeffs: &'a CoefficientSet<D>,
    pub dt_max: f64,
    pub track_jacobians: bool,
    compensator: Option<NodeRule<D>>,
}

/// Node resolution of the compensator drift `-∫σν` for non-symmetric σ.
pub const COMPENSATOR_ORDER: usize = 8;
pub const COMPENSATOR_SPHERE: usize = 8;

impl<'a, const D: usize> Skeleton<'a, D> {
    /// Solver for `c`; adds the drift `-∫σ(x,z)ν(dz)` over the truncated
    /// measure when `c` is not compensator-free.
    pub fn new(c: &'a CoefficientSet<D>, model: &LevyModel<D>, dt_max: f64, track_jacobians: bool) -> Result<Self> {
        let compensator = if c.is_compensator_free() || model.is_silent() {
            None
        } else {
            let lo = model.trunc_low();
            if lo <= 0.0 {
                return Err(Error::config("compensator drift needs trunc_low > 0"));
            }
            Some(model.node_rule(lo, model.delta(), COMPENSATOR_ORDER, COMPENSATOR_SPHERE)?)
        };
        Ok(Skeleton { coeffs: c, dt_max, track_jacobians, compensator })
    }

    /// Solver without any compensator drift.
    pub fn uncompensated(c: &'a CoefficientSet<D>, dt_max: f64, track_jacobians: bool) -> Self {
        Skeleton { coeffs: c, dt_max, track_jacobians, compensator: None }
    }

    pub fn has_compensator(&self) -> bool {
        self.compensator.is_some()
    }

    /// Effective drift including the compensator.
    pub fn drift(&self, x: &Vector<D>) -> Vector<D> {
        let mut b = self.coeffs.drift(x);
        if let Some(rule) = &self.compensator {
            for (z, w) in &rule.nodes {
                b -= self.coeffs.sigma(x, z) * *w;
            }
        }
        b
    }

    pub fn drift_jacobian(&self, x: &Vector<D>) -> Matrix<D> {
        let mut g = self.coeffs.db(x);
        if let Some(rule) = &self.compensator {
            if !self.coeffs.is_state_independent() {
                for (z, w) in &rule.nodes {
                    g -= self.coeffs.dsigma_dx(x, z) * *w;
                }
            }
        }
        g
    }

    fn linear_matrix(&self) -> Option<Matrix<D>> {
        if self.compensator.is_some() && !self.coeffs.is_state_independent() {
            return None;
        }
        match self.coeffs.drift_kind() {
            DriftKind::Zero => Some(Matrix::<D>::zeros()),
            DriftKind::Linear(a) => Some(*a),
            DriftKind::General => None,
        }
    }

    /// Constant part of the drift when it is affine (`b = Ax + c`).
    fn affine_shift(&self) -> Vector<D> {
        match &self.compensator {
            Some(_) => self.drift(&Vector::<D>::zeros()),
            None => Vector::<D>::zeros(),
        }
    }

    fn rk4(&self, s: &State<D>, h: f64) -> State<D> {
        let track = self.track_jacobians;
        let f = |x: &Vector<D>, j: &Matrix<D>, k: &Matrix<D>| {
            let b = self.drift(x);
            if track {
                let g = self.drift_jacobian(x);
                (b, g * j, -(k * g))
            } else {
                (b, Matrix::<D>::zeros(), Matrix::<D>::zeros())
            }
        };
        let (x, j, k) = (s.x, s.j, s.k);
        let (a1, b1, c1) = f(&x, &j, &k);
        let (a2, b2, c2) = f(&(x + a1 * (0.5 * h)), &(j + b1 * (0.5 * h)), &(k + c1 * (0.5 * h)));
        let (a3, b3, c3) = f(&(x + a2 * (0.5 * h)), &(j + b2 * (0.5 * h)), &(k + c2 * (0.5 * h)));
        let (a4, b4, c4) = f(&(x + a3 * h), &(j + b3 * h), &(k + c3 * h));
        let w = h / 6.0;
        State {
            x: x + (a1 + (a2 + a3) * 2.0 + a4) * w,
            j: if track { j + (b1 + (b2 + b3) * 2.0 + b4) * w } else { j },
            k: if track { k + (c1 + (c2 + c3) * 2.0 + c4) * w } else { k },
        }
    }

    fn substep_count(&self, len: f64) -> usize {
        ((len / self.dt_max) * (1.0 - 1e-12)).ceil().max(1.0) as usize
    }

    /// Advances `s` over the drift segment `[a, b]`.
    pub fn advance<O: Observer<D>>(&self, s: &mut State<D>, a: f64, b: f64, obs: &mut O) {
        if b <= a {
            return;
        }
        let n = self.substep_count(b - a);
        let h = (b - a) / n as f64;
        let node_time = |i: usize| if i + 1 == n { b } else { a + (i + 1) as f64 * h };
        if let Some(am) = self.linear_matrix() {
            if am.iter().all(|v| *v == 0.0) && self.compensator.is_none() {
                if obs.substeps() {
                    for i in 0..n {
                        obs.on_node(node_time(i), s);
                    }
                }
                return;
            }
            // RK4 applied to x' = Ax + c is x ← Px + Hc with P, H polynomials in hA.
            let ha = am * h;
            let ha2 = ha * ha;
            let ha3 = ha2 * ha;
            let ha4 = ha3 * ha;
            let id = Matrix::<D>::identity();
            let p = id + ha + ha2 * 0.5 + ha3 / 6.0 + ha4 / 24.0;
            let r = id - ha + ha2 * 0.5 - ha3 / 6.0 + ha4 / 24.0;
            let shift = self.affine_shift();
            let hc = (id + ha * 0.5 + ha2 / 6.0 + ha3 / 24.0) * shift * h;
            if obs.substeps() {
                for i in 0..n {
                    s.x = p * s.x + hc;
                    if self.track_jacobians {
                        s.j = p * s.j;
                        s.k *= r;
                    }
                    obs.on_node(node_time(i), s);
                }
            } else {
                // Affine map composition (P, c) ∘ … by repeated squaring.
                let (pn, cn) = affine_power(p, hc, n);
                s.x = pn * s.x + cn;
                if self.track_jacobians {
                    s.j = pn * s.j;
                    s.k *= matrix_power(r, n);
                }
            }
            return;
        }
        for i in 0..n {
            *s = self.rk4(s, h);
            if obs.substeps() {
                obs.on_node(node_time(i), s);
            }
        }
    }

    /// Applies the jump `z` at the left limit `s`.
    pub fn apply_jump(&self, s: &mut State<D>, z: &Vector<D>) -> Result<()> {
        let x = s.x;
        s.x = x + self.coeffs.sigma(&x, z);
        if self.track_jacobians && !self.coeffs.is_state_independent() {
            let m = Matrix::<D>::identity() + self.coeffs.dsigma_dx(&x, z);
            let inv = linalg::inverse(&m, "I + ∇xσ at a jump")?;
            s.j = m * s.j;
            s.k *= inv;
        }
        if !s.x.iter().all(|v| v.is_finite()) {
            return Err(Error::numerics(format!("state became non-finite after jump z = {z:?}")));
        }
        Ok(())
    }

    /// Solves from `x0` at `t0` to `t_end` through the jumps with
    /// `t0 < time ≤ t_end`.
    pub fn run<O: Observer<D>>(
        &self,
        x0: &Vector<D>,
        jumps: &[Jump<D>],
        t0: f64,
        t_end: f64,
        obs: &mut O,
    ) -> Result<State<D>> {
        self.run_from(State::start(*x0), jumps, t0, t_end, obs)
    }

    pub fn run_from<O: Observer<D>>(
        &self,
        start: State<D>,
        jumps: &[Jump<D>],
        t0: f64,
        t_end: f64,
        obs: &mut O,
    ) -> Result<State<D>> {
        let mut s = start;
        obs.on_node(t0, &s);
        let mut t = t0;
        for jump in jumps.iter().filter(|j| j.time > t0 && j.time <= t_end) {
            self.advance(&mut s, t, jump.time, obs);
            if !obs.substeps() || jump.time <= t {
                obs.on_node(jump.time, &s);
            }
            let pre = s;
            self.apply_jump(&mut s, &jump.z)?;
            obs.on_jump(jump.time, &jump.z, &pre, &s);
            t = jump.time;
        }
        if t < t_end {
            self.advance(&mut s, t, t_end, obs);
            if !obs.substeps() {
                obs.on_node(t_end, &s);
            }
        }
        if !s.x.iter().all(|v| v.is_finite()) {
            return Err(Error::numerics("drift integration produced a non-finite state"));
        }
        Ok(s)
    }
}

fn matrix_power<const D: usize>(m: Matrix<D>, mut n: usize) -> Matrix<D> {
    let mut base = m;
    let mut acc = Matrix::<D>::identity();
    while n > 0 {
        if n & 1 == 1 {
            acc = base * acc;
        }
        base = base * base;
        n >>= 1;
    }
    acc
}

/// `n`-fold composition of `x ↦ Px + c`.
fn affine_power<const D: usize>(p: Matrix<D>, c: Vector<D>, mut n: usize) -> (Matrix<D>, Vector<D>) {
    let (mut bp, mut bc) = (p, c);
    let (mut ap, mut ac) = (Matrix::<D>::identity(), Vector::<D>::zeros());
    while n > 0 {
        if n & 1 == 1 {
            ac = bp * ac + bc;
            ap = bp * ap;
        }
        bc = bp * bc + bc;
        bp = bp * bp;
        n >>= 1;
    }
    (ap, ac)
}

/// One simulated trajectory on its substep grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord<const D: usize> {
    pub x0: Vector<D>,
    pub times: Vec<f64>,
    /// Right-continuous states; at a jump node the post-jump value.
    pub states: Vec<Vector<D>>,
    pub jacobian: Option<Vec<Matrix<D>>>,
    pub inverse_jacobian: Option<Vec<Matrix<D>>>,
    pub jumps: Vec<Jump<D>>,
    /// Index into `times` of each jump.
    pub jump_nodes: Vec<usize>,
    /// Left limits `(X, J, K)` at each jump.
    pub pre_jump: Vec<State<D>>,
    pub rng_tag: (u64, u64),
}

impl<const D: usize> PathRecord<D> {
    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("non-empty record")
    }

    pub fn final_state(&self) -> Vector<D> {
        *self.states.last().expect("non-empty record")
    }

    pub fn state_at(&self, i: usize) -> State<D> {
        let id = Matrix::<D>::identity();
        State {
            x: self.states[i],
            j: self.jacobian.as_ref().map_or(id, |v| v[i]),
            k: self.inverse_jacobian.as_ref().map_or(id, |v| v[i]),
        }
    }

    /// Left limit at node `i` (differs from the node value only at jumps).
    pub fn left_limit(&self, i: usize) -> State<D> {
        match self.jump_nodes.iter().position(|&n| n == i) {
            Some(p) => self.pre_jump[p],
            None => self.state_at(i),
        }
    }

    /// Feeds the record back through an observer as if it were being solved
    /// (every node, left limits at jumps).
    pub fn replay<O: Observer<D>>(&self, obs: &mut O) {
        let mut next = 0;
        for i in 0..self.times.len() {
            let t = self.times[i];
            if next < self.jump_nodes.len() && self.jump_nodes[next] == i {
                let pre = self.pre_jump[next];
                obs.on_node(t, &pre);
                obs.on_jump(t, &self.jumps[next].z, &pre, &self.state_at(i));
                next += 1;
            } else {
                obs.on_node(t, &self.state_at(i));
            }
        }
    }

    /// `max_t ‖J_t K_t - I‖_∞` over the grid (and left limits).
    pub fn max_inverse_defect(&self) -> Option<f64> {
        let (j, k) = (self.jacobian.as_ref()?, self.inverse_jacobian.as_ref()?);
        let id = Matrix::<D>::identity();
        let on_grid = j.iter().zip(k).map(|(a, b)| linalg::norm_inf(&(a * b - id))).fold(0.0, f64::max);
        Some(self.pre_jump.iter().map(|s| s.inverse_defect()).fold(on_grid, f64::max))
    }
}

/// Observer that builds a [`PathRecord`].
#[derive(Debug, Clone)]
struct Recorder<const D: usize> {
    track: bool,
    times: Vec<f64>,
    states: Vec<Vector<D>>,
    jac: Vec<Matrix<D>>,
    inv: Vec<Matrix<D>>,
    jump_nodes: Vec<usize>,
    pre_jump: Vec<State<D>>,
}

impl<const D: usize> Observer<D> for Recorder<D> {
    fn substeps(&self) -> bool {
        true
    }
    fn on_node(&mut self, t: f64, s: &State<D>) {
        self.times.push(t);
        self.states.push(s.x);
        if self.track {
            self.jac.push(s.j);
            self.inv.push(s.k);
        }
    }
    fn on_jump(&mut self, _t: f64, _z: &Vector<D>, pre: &State<D>, post: &State<D>) {
        let last = self.times.len() - 1;
        self.states[last] = post.x;
        if self.track {
            self.jac[last] = post.j;
            self.inv[last] = post.k;
        }
        self.jump_nodes.push(last);
        self.pre_jump.push(*pre);
    }
}

/// A batch simulator: coefficients, measure and config bound together.
#[derive(Debug, Clone)]
pub struct Simulator<'a, const D: usize> {
    pub skeleton: Skeleton<'a, D>,
    pub model: &'a LevyModel<D>,
    pub big: Option<BigJumpMeasure<D>>,
    pub cfg: SimConfig,
}

impl<'a, const D: usize> Simulator<'a, D> {
    pub fn new(c: &'a CoefficientSet<D>, model: &'a LevyModel<D>, cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        if !model.is_silent() && model.trunc_low() <= 0.0 {
            return Err(Error::config("simulation needs trunc_low > 0"));
        }
        let skeleton = Skeleton::new(c, model, cfg.dt_max, cfg.record_jacobians)?;
        let big = cfg.big_jumps.then(|| model.big_jumps());
        Ok(Simulator { skeleton, model, big, cfg: cfg.clone() })
    }

    pub fn coeffs(&self) -> &'a CoefficientSet<D> {
        self.skeleton.coeffs
    }

    pub fn jumps(&self, index: u64) -> Result<Vec<Jump<D>>> {
        sample_jumps(self.model, self.big.as_ref(), self.cfg.t_end, self.cfg.seed, index)
    }

    /// Solve path `index` to `t_end` with an observer.
    pub fn path<O: Observer<D>>(&self, x0: &Vector<D>, index: u64, obs: &mut O) -> Result<(State<D>, Vec<Jump<D>>)> {
        let jumps = self.jumps(index)?;
        let s = self.skeleton.run(x0, &jumps, 0.0, self.cfg.t_end, obs)?;
        Ok((s, jumps))
    }

    /// Full record of path `index`.
    pub fn record(&self, x0: &Vector<D>, index: u64) -> Result<PathRecord<D>> {
        let jumps = self.jumps(index)?;
        self.record_with(x0, jumps, index)
    }

    /// Record of a path driven by a given jump list.
    pub fn record_with(&self, x0: &Vector<D>, jumps: Vec<Jump<D>>, index: u64) -> Result<PathRecord<D>> {
        let track = self.cfg.record_jacobians;
        let mut rec = Recorder {
            track,
            times: Vec::new(),
            states: Vec::new(),
            jac: Vec::new(),
            inv: Vec::new(),
            jump_nodes: Vec::new(),
            pre_jump: Vec::new(),
        };
        self.skeleton.run(x0, &jumps, 0.0, self.cfg.t_end, &mut rec)?;
        Ok(PathRecord {
            x0: *x0,
            times: rec.times,
            states: rec.states,
            jacobian: track.then_some(rec.jac),
            inverse_jacobian: track.then_some(rec.inv),
            jumps,
            jump_nodes: rec.jump_nodes,
            pre_jump: rec.pre_jump,
            rng_tag: (self.cfg.seed, index),
        })
    }
}

/// One path; identical `(seed, index, config)` gives an identical record.
pub fn simulate<const D: usize>(
    c: &CoefficientSet<D>,
    m: &LevyModel<D>,
    cfg: &SimConfig,
    x0: &Vector<D>,
    index: u64,
) -> Result<PathRecord<D>> {
    Simulator::new(c, m, cfg)?.record(x0, index)
}

/// `cfg.n_paths` records; path `i` uses stream `(seed, i)`.
pub fn batch_simulate<const D: usize>(
    c: &CoefficientSet<D>,
    m: &LevyModel<D>,
    cfg: &SimConfig,
    x0: &Vector<D>,
) -> Result<Vec<PathRecord<D>>> {
    let sim = Simulator::new(c, m, cfg)?;
    par::map(cfg.n_paths, |i| sim.record(x0, i as u64).map_err(|e| e.context(format!("path {i}"))))
        .into_iter()
        .collect()
}

/// `E sup_t |J_t|^p` and `E sup_t |K_t|^p`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentRow {
    pub p: u32,
    pub jacobian: Estimate,
    pub inverse: Estimate,
}

pub const MOMENT_ORDERS: [u32; 3] = [2, 4, 8];

fn moment_rows(sups: &[(f64, f64)]) -> Result<Vec<MomentRow>> {
    let mut rows = Vec::new();
    for p in MOMENT_ORDERS {
        let (mut mj, mut mk) = (Moments::default(), Moments::default());
        for (a, b) in sups {
            mj.push(a.powi(p as i32));
            mk.push(b.powi(p as i32));
        }
        let row = MomentRow { p, jacobian: mj.summary(), inverse: mk.summary() };
        if !row.jacobian.mean.is_finite() || !row.inverse.mean.is_finite() {
            return Err(Error::numerics(format!("moment of order {p} is not finite")));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Moment table from stored records (needs recorded Jacobians).
pub fn empirical_moment_report<const D: usize>(paths: &[PathRecord<D>]) -> Result<Vec<MomentRow>> {
    let mut sups = Vec::with_capacity(paths.len());
    for p in paths {
        let (j, k) = match (&p.jacobian, &p.inverse_jacobian) {
            (Some(j), Some(k)) => (j, k),
            _ => return Err(Error::config("moment report needs recorded Jacobians")),
        };
        let sj = j.iter().chain(p.pre_jump.iter().map(|s| &s.j)).map(op_norm).fold(0.0, f64::max);
        let sk = k.iter().chain(p.pre_jump.iter().map(|s| &s.k)).map(op_norm).fold(0.0, f64::max);
        sups.push((sj, sk));
    }
    moment_rows(&sups)
}

/// Streaming moment table over `cfg.n_paths` paths.
pub fn moment_report<const D: usize>(
    c: &CoefficientSet<D>,
    m: &LevyModel<D>,
    cfg: &SimConfig,
    x0: &Vector<D>,
) -> Result<Vec<MomentRow>> {
    let sim = Simulator::new(c, m, &cfg.clone().with_jacobians(true))?;
    let sups = par::map(cfg.n_paths, |i| {
        let mut obs = SupNormObserver::default();
        sim.path(x0, i as u64, &mut obs).map(|_| (obs.sup_j, obs.sup_k))
    });
    let sups = sups.into_iter().collect::<Result<Vec<_>>>()?;
    moment_rows(&sups)
}

/// `max_i max_t ‖J K - I‖` over a batch, without storing paths.
pub fn max_inverse_defect<const D: usize>(
    c: &CoefficientSet<D>,
    m: &LevyModel<D>,
    cfg: &SimConfig,
    x0: &Vector<D>,
) -> Result<f64> {
    let sim = Simulator::new(c, m, &cfg.clone().with_jacobians(true))?;
    par::try_fold(
        cfg.n_paths,
        || 0.0f64,
        |acc, i| {
            let mut obs = DefectObserver::default();
            sim.path(x0, i as u64, &mut obs).map_err(|e| e.context(format!("path {i}")))?;
            *acc = acc.max(obs.max_defect);
            Ok(())
        },
        |a, b| *a = a.max(b),
    )
}
