//! Truncated Lévy measures `ν(dz) = χ_δ(|z|)|z|^{-d-α}dz` on `0 < |z| < δ`,
//! the complementary big-jump measure `(1-χ_δ(|z|))|z|^{-d-α}dz`, the cutoff
//! `ζ_δ` and the radial quadratures built on them.

use nalgebra::SVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::quad::{self, Tolerance};
use crate::{Error, Result, Vector};

/// `exp(-1/t)` glue: zero with all derivatives at `t = 0`.
fn glue(t: f64) -> f64 {
    if t <= 0.0 { 0.0 } else { (-1.0 / t).exp() }
}

fn glue_prime(t: f64) -> f64 {
    if t <= 0.0 { 0.0 } else { glue(t) / (t * t) }
}

/// C^∞ step from 0 (t ≤ 0) to 1 (t ≥ 1).
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = glue(t);
        a / (a + glue(1.0 - t))
    }
}

pub fn smooth_step_prime(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        return 0.0;
    }
    let (a, b) = (glue(t), glue(1.0 - t));
    (glue_prime(t) * b + a * glue_prime(1.0 - t)) / ((a + b) * (a + b))
}

/// Radial cutoff profile of the small-jump kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    /// χ_δ = 1 on [0, δ/2], 0 on [δ, ∞), C^∞ in between.
    Smooth,
    /// χ = 1 on [0, radius), 0 beyond; `radius ∈ [δ/2, δ]`.
    HardCutoff { radius: f64 },
}

impl Profile {
    pub fn chi(&self, delta: f64, r: f64) -> f64 {
        match *self {
            Profile::Smooth => 1.0 - smooth_step((r - 0.5 * delta) / (0.5 * delta)),
            Profile::HardCutoff { radius } => {
                if r < radius { 1.0 } else { 0.0 }
            }
        }
    }

    pub fn chi_prime(&self, delta: f64, r: f64) -> f64 {
        match *self {
            Profile::Smooth => -smooth_step_prime((r - 0.5 * delta) / (0.5 * delta)) / (0.5 * delta),
            Profile::HardCutoff { .. } => 0.0,
        }
    }

    /// Radius up to which χ ≡ 1.
    pub fn plateau_end(&self, delta: f64) -> f64 {
        match *self {
            Profile::Smooth => 0.5 * delta,
            Profile::HardCutoff { radius } => radius,
        }
    }

    /// Radius beyond which χ ≡ 0.
    pub fn support_end(&self, delta: f64) -> f64 {
        match *self {
            Profile::Smooth => delta,
            Profile::HardCutoff { radius } => radius,
        }
    }
}

/// The cutoff `ζ_δ`: `|z|³` on `|z| ≤ δ/4`, zero beyond `δ/2`, glued smoothly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffZeta {
    pub delta: f64,
}

impl CutoffZeta {
    pub fn new(delta: f64) -> Self {
        CutoffZeta { delta }
    }

    pub fn radial(&self, r: f64) -> f64 {
        let q = 0.25 * self.delta;
        r * r * r * (1.0 - smooth_step((r - q) / q))
    }

    pub fn radial_prime(&self, r: f64) -> f64 {
        let q = 0.25 * self.delta;
        let t = (r - q) / q;
        3.0 * r * r * (1.0 - smooth_step(t)) - r * r * r * smooth_step_prime(t) / q
    }

    pub fn value<const D: usize>(&self, z: &Vector<D>) -> f64 {
        self.radial(z.norm())
    }

    pub fn gradient<const D: usize>(&self, z: &Vector<D>) -> Vector<D> {
        let r = z.norm();
        if r == 0.0 { Vector::<D>::zeros() } else { z * (self.radial_prime(r) / r) }
    }
}

/// `ν(dz) = χ(|z|)|z|^{-d-α}dz` restricted to `trunc_low < |z| < δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyModel<const D: usize> {
    alpha: f64,
    delta: f64,
    profile: Profile,
    trunc_low: f64,
    plateau_mass: f64,
    tail_mass: f64,
    silent: bool,
}

/// Relative accuracy of all radial quadratures.
pub const QUAD_TOL: f64 = 1e-10;

impl<const D: usize> LevyModel<D> {
    /// Build a model; `trunc_low = None` picks [`Self::default_trunc_low`].
    pub fn new(alpha: f64, delta: f64, profile: Profile, trunc_low: Option<f64>) -> Result<Self> {
        if D == 0 {
            return Err(Error::config("dimension must be positive"));
        }
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(Error::config(format!("alpha must lie in (0,2), got {alpha}")));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::config(format!("delta must be positive, got {delta}")));
        }
        if let Profile::HardCutoff { radius } = profile {
            if !(radius >= 0.5 * delta && radius <= delta) {
                return Err(Error::config(format!(
                    "hard cutoff radius must lie in [delta/2, delta], got {radius}"
                )));
            }
        }
        let trunc_low = trunc_low.unwrap_or_else(|| Self::default_trunc_low(alpha, delta));
        if !(trunc_low >= 0.0 && trunc_low < delta) {
            return Err(Error::config(format!("trunc_low must lie in [0, delta), got {trunc_low}")));
        }
        let mut m = LevyModel { alpha, delta, profile, trunc_low, plateau_mass: f64::INFINITY, tail_mass: 0.0, silent: false };
        m.refresh()?;
        Ok(m)
    }

    /// Smooth-profile model with the default truncation.
    pub fn smooth(alpha: f64, delta: f64) -> Result<Self> {
        Self::new(alpha, delta, Profile::Smooth, None)
    }

    /// Truncation chosen so that the dropped second moment is at most 10⁻³ of
    /// `∫_{|z|≤δ/2}|z|²ν(dz)`.
    pub fn default_trunc_low(alpha: f64, delta: f64) -> f64 {
        0.5 * delta * 1e-3f64.powf(1.0 / (2.0 - alpha)) * (1.0 - 1e-12)
    }

    pub fn with_trunc_low(&self, trunc_low: f64) -> Result<Self> {
        let mut m = Self::new(self.alpha, self.delta, self.profile, Some(trunc_low))?;
        m.silent = self.silent;
        Ok(m)
    }

    /// The same parameters with `ν ≡ 0`: no jumps, all integrals vanish.
    pub fn silenced(mut self) -> Self {
        self.silent = true;
        self
    }

    pub fn is_silent(&self) -> bool {
        self.silent
    }

    fn refresh(&mut self) -> Result<()> {
        let pe = self.profile.plateau_end(self.delta);
        let se = self.profile.support_end(self.delta);
        let a = self.alpha;
        self.plateau_mass = if self.trunc_low == 0.0 {
            f64::INFINITY
        } else if self.trunc_low >= pe {
            0.0
        } else {
            (self.trunc_low.powf(-a) - pe.powf(-a)) / a
        };
        let lo = self.trunc_low.max(pe);
        self.tail_mass = if se > lo {
            let (p, d) = (self.profile, self.delta);
            quad::adaptive(|r| p.chi(d, r) * r.powf(-1.0 - a), lo, se, Tolerance::rel(1e-13).with_abs(1e-300))?
        } else {
            0.0
        };
        Ok(())
    }

    pub fn dim(&self) -> usize {
        D
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn profile(&self) -> Profile {
        self.profile
    }
    pub fn trunc_low(&self) -> f64 {
        self.trunc_low
    }

    pub fn chi(&self, r: f64) -> f64 {
        self.profile.chi(self.delta, r)
    }

    pub fn plateau_end(&self) -> f64 {
        self.profile.plateau_end(self.delta)
    }

    pub fn support_end(&self) -> f64 {
        self.profile.support_end(self.delta)
    }

    /// κ as a function of `r = |z|`, ignoring the truncation.
    pub fn radial_density(&self, r: f64) -> f64 {
        if self.silent {
            return 0.0;
        }
        self.chi(r) * r.powf(-(D as f64) - self.alpha)
    }

    /// κ(z).
    pub fn density(&self, z: &Vector<D>) -> Result<f64> {
        let r = z.norm();
        if r == 0.0 {
            return Err(Error::domain("the Lévy density is singular at z = 0"));
        }
        Ok(self.radial_density(r))
    }

    /// ∇ log κ(z), defined where κ > 0.
    pub fn grad_log_density(&self, z: &Vector<D>) -> Result<Vector<D>> {
        let r = z.norm();
        if r == 0.0 {
            return Err(Error::domain("∇log κ is undefined at z = 0"));
        }
        let chi = self.chi(r);
        if chi <= 0.0 || self.silent {
            return Err(Error::domain(format!("κ vanishes at |z| = {r}")));
        }
        let radial = self.profile.chi_prime(self.delta, r) / chi - (D as f64 + self.alpha) / r;
        Ok(z * (radial / r))
    }

    /// `∫_{lo<|z|<hi} |z|^p ν(dz)` (truncation ignored; bounds explicit).
    pub fn moment(&self, p: f64, lo: f64, hi: f64) -> Result<f64> {
        let hi = hi.min(self.support_end());
        if hi <= lo || self.silent {
            return Ok(0.0);
        }
        let (prof, d) = (self.profile, self.delta);
        let beta = p - 1.0 - self.alpha;
        let v = quad::radial(|r| prof.chi(d, r), beta, lo, hi, Tolerance::rel(QUAD_TOL))?;
        Ok(quad::sphere_area(D) * v)
    }

    /// `∫_{|z|≤eps}|z|^p ν(dz)` for `p ≥ 2`, `0 ≤ eps ≤ δ/2`.
    pub fn small_jump_moment(&self, p: f64, eps: f64) -> Result<f64> {
        if p < 2.0 {
            return Err(Error::domain(format!("moment order must be at least 2, got {p}")));
        }
        if !(eps >= 0.0 && eps <= 0.5 * self.delta * (1.0 + 1e-15)) {
            return Err(Error::domain(format!("eps must lie in [0, delta/2], got {eps}")));
        }
        if eps == 0.0 {
            return Ok(0.0);
        }
        self.moment(p, 0.0, eps)
    }

    /// Total mass `λ = ν({trunc_low < |z| < δ})`.
    pub fn jump_rate(&self) -> Result<f64> {
        if self.silent {
            return Ok(0.0);
        }
        if self.trunc_low <= 0.0 {
            return Err(Error::config("jump rate is infinite without a positive trunc_low"));
        }
        Ok(quad::sphere_area(D) * (self.plateau_mass + self.tail_mass))
    }

    /// CDF of `|z|` under the normalized truncated measure.
    pub fn radial_cdf(&self, r: f64) -> Result<f64> {
        let total = self.plateau_mass + self.tail_mass;
        if !total.is_finite() || total <= 0.0 {
            return Err(Error::config("radial CDF needs a finite, positive jump rate"));
        }
        let (eps, pe, a) = (self.trunc_low, self.plateau_end(), self.alpha);
        if r <= eps {
            return Ok(0.0);
        }
        if r <= pe {
            return Ok((eps.powf(-a) - r.powf(-a)) / a / total);
        }
        let lo = eps.max(pe);
        let (prof, d) = (self.profile, self.delta);
        let hi = r.min(self.support_end());
        let tail = if hi > lo {
            quad::adaptive(|s| prof.chi(d, s) * s.powf(-1.0 - a), lo, hi, Tolerance::rel(1e-13).with_abs(1e-300))?
        } else {
            0.0
        };
        Ok(((self.plateau_mass + tail) / total).min(1.0))
    }

    /// Quantile of `|z|`: closed form on the plateau, bisection on the tail.
    pub fn radial_inverse_cdf(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::domain(format!("probability must lie in [0,1], got {u}")));
        }
        let total = self.plateau_mass + self.tail_mass;
        if !total.is_finite() || total <= 0.0 {
            return Err(Error::config("radial quantile needs a finite, positive jump rate"));
        }
        let target = u * total;
        let (eps, a) = (self.trunc_low, self.alpha);
        if target <= self.plateau_mass {
            return Ok((eps.powf(-a) - a * target).powf(-1.0 / a));
        }
        let (mut lo, mut hi) = (eps.max(self.plateau_end()), self.support_end());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.radial_cdf(mid)? < u {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 * hi {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// A uniformly distributed unit vector.
    pub fn sample_direction<R: Rng + ?Sized>(rng: &mut R) -> Vector<D> {
        if D == 1 {
            let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
            return Vector::<D>::from_element(s);
        }
        loop {
            let g = Vector::<D>::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
            let n = g.norm();
            if n > 1e-300 {
                return g / n;
            }
        }
    }

    /// One jump from the normalized measure on `trunc_low < |z| < δ`.
    pub fn sample_jump<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vector<D>> {
        if self.trunc_low <= 0.0 {
            return Err(Error::config("cannot sample an infinite-activity measure; set trunc_low > 0"));
        }
        Ok(Self::sample_direction(rng) * self.sample_radius(rng))
    }

    fn sample_radius<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let a = self.alpha;
        let total = self.plateau_mass + self.tail_mass;
        if rng.random::<f64>() * total < self.plateau_mass {
            let u: f64 = rng.random();
            let (lo, hi) = (self.trunc_low, self.plateau_end());
            let (flo, fhi) = (lo.powf(-a), hi.powf(-a));
            return (flo - u * (flo - fhi)).powf(-1.0 / a);
        }
        let lo = self.trunc_low.max(self.plateau_end());
        let hi = self.support_end();
        let (flo, fhi) = (lo.powf(-a), hi.powf(-a));
        loop {
            let u: f64 = rng.random();
            let r = (flo - u * (flo - fhi)).powf(-1.0 / a);
            if rng.random::<f64>() < self.chi(r) {
                return r;
            }
        }
    }

    /// `∫_{lo<|z|<hi} g(z) ν(dz)` by adaptive radial quadrature of the sphere
    /// average (antipodal sphere nodes).
    pub fn integrate<const M: usize, G>(&self, g: G, lo: f64, hi: f64, sphere_res: usize) -> Result<SVector<f64, M>>
    where
        G: Fn(&Vector<D>) -> SVector<f64, M>,
    {
        let sphere = quad::sphere_rule::<D>(sphere_res)?;
        let hi = hi.min(self.support_end());
        if hi <= lo || self.silent {
            return Ok(SVector::zeros());
        }
        let pe = self.plateau_end();
        let avg = |r: f64| {
            let mut acc = SVector::<f64, M>::zeros();
            for (u, w) in &sphere {
                acc += g(&(u * r)) * *w;
            }
            acc * self.chi(r)
        };
        let beta = -1.0 - self.alpha;
        let tol = Tolerance::rel(QUAD_TOL).with_abs(1e-15);
        let mut total = SVector::<f64, M>::zeros();
        if lo < pe {
            total += quad::radial_vec(avg, beta, lo, hi.min(pe), tol)?;
        }
        if hi > pe {
            total += quad::radial_vec(avg, beta, lo.max(pe), hi, tol)?;
        }
        Ok(total)
    }

    /// A fixed product rule for `∫_{lo<|z|<hi} g ν(dz)`: Gauss–Legendre panels
    /// in `ln r` times antipodal sphere nodes. Nodes come in `(z, -z)` pairs.
    pub fn node_rule(&self, lo: f64, hi: f64, order: usize, sphere_res: usize) -> Result<NodeRule<D>> {
        if lo <= 0.0 {
            return Err(Error::config("fixed node rules need a positive inner radius"));
        }
        let sphere = quad::sphere_rule::<D>(sphere_res)?;
        if self.silent {
            return Ok(NodeRule { nodes: Vec::new() });
        }
        let hi = hi.min(self.support_end());
        let pe = self.plateau_end();
        let mut radial: Vec<(f64, f64)> = Vec::new();
        // One log-panel per factor 2 on the plateau.
        if lo < pe.min(hi) {
            let top = pe.min(hi);
            let panels = ((top / lo).ln() / 2f64.ln()).ceil().max(1.0) as usize;
            let (sa, sb) = (lo.ln(), top.ln());
            for p in 0..panels {
                let a = sa + (sb - sa) * p as f64 / panels as f64;
                let b = sa + (sb - sa) * (p + 1) as f64 / panels as f64;
                for (s, w) in quad::gauss_legendre_on(order, a, b) {
                    let r = s.exp();
                    radial.push((r, w * r.powf(-self.alpha) * self.chi(r)));
                }
            }
        }
        if hi > pe.max(lo) {
            let a0 = pe.max(lo);
            let panels = 4;
            for p in 0..panels {
                let a = a0 + (hi - a0) * p as f64 / panels as f64;
                let b = a0 + (hi - a0) * (p + 1) as f64 / panels as f64;
                for (r, w) in quad::gauss_legendre_on(order, a, b) {
                    radial.push((r, w * self.chi(r) * r.powf(-1.0 - self.alpha)));
                }
            }
        }
        let mut nodes = Vec::with_capacity(radial.len() * sphere.len());
        for (r, wr) in &radial {
            for (u, wu) in &sphere {
                nodes.push((u * *r, wr * wu));
            }
        }
        Ok(NodeRule { nodes })
    }

    /// The complementary measure used by the big-jump operator.
    pub fn big_jumps(&self) -> BigJumpMeasure<D> {
        BigJumpMeasure::new(self.alpha, self.delta, self.profile)
    }
}

/// Fixed quadrature nodes `(z_k, w_k)` with `Σ w_k g(z_k) ≈ ∫ g dν`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeRule<const D: usize> {
    pub nodes: Vec<(Vector<D>, f64)>,
}

impl<const D: usize> NodeRule<D> {
    pub fn integrate<const M: usize, G>(&self, g: G) -> SVector<f64, M>
    where
        G: Fn(&Vector<D>) -> SVector<f64, M>,
    {
        let mut acc = SVector::<f64, M>::zeros();
        for (z, w) in &self.nodes {
            acc += g(z) * *w;
        }
        acc
    }

    pub fn mass(&self) -> f64 {
        self.nodes.iter().map(|n| n.1).sum()
    }
}

/// `μ(dz) = (1-χ(|z|))|z|^{-d-α}dz` on all of `R^d`: finite mass, unbounded
/// support.
#[derive(Debug, Clone, PartialEq)]
pub struct BigJumpMeasure<const D: usize> {
    alpha: f64,
    delta: f64,
    profile: Profile,
    inner_mass: f64,
}

impl<const D: usize> BigJumpMeasure<D> {
    pub fn new(alpha: f64, delta: f64, profile: Profile) -> Self {
        let (pe, se) = (profile.plateau_end(delta), profile.support_end(delta));
        let inner_mass = if se > pe {
            quad::adaptive(
                |r| (1.0 - profile.chi(delta, r)) * r.powf(-1.0 - alpha),
                pe,
                se,
                Tolerance::rel(1e-13).with_abs(1e-300),
            )
            .unwrap_or(0.0)
        } else {
            0.0
        };
        BigJumpMeasure { alpha, delta, profile, inner_mass }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn weight(&self, r: f64) -> f64 {
        (1.0 - self.profile.chi(self.delta, r)) * r.powf(-(D as f64) - self.alpha)
    }

    fn outer_radial_mass(&self) -> f64 {
        self.profile.support_end(self.delta).powf(-self.alpha) / self.alpha
    }

    /// Total mass `μ(R^d)`.
    pub fn mass(&self) -> f64 {
        quad::sphere_area(D) * (self.inner_mass + self.outer_radial_mass())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector<D> {
        let a = self.alpha;
        let (pe, se) = (self.profile.plateau_end(self.delta), self.profile.support_end(self.delta));
        let outer = self.outer_radial_mass();
        let r = if rng.random::<f64>() * (outer + self.inner_mass) < outer {
            let u: f64 = 1.0 - rng.random::<f64>();
            se * u.powf(-1.0 / a)
        } else {
            let (flo, fhi) = (pe.powf(-a), se.powf(-a));
            loop {
                let u: f64 = rng.random();
                let r = (flo - u * (flo - fhi)).powf(-1.0 / a);
                if rng.random::<f64>() < 1.0 - self.profile.chi(self.delta, r) {
                    break r;
                }
            }
        };
        LevyModel::<D>::sample_direction(rng) * r
    }

    /// Fixed rule for `∫ g dμ`. Beyond the transition the substitution
    /// `u = r^{-α}` maps `[se, ∞)` to a bounded interval, refined
    /// geometrically towards `u = 0`.
    pub fn node_rule(&self, order: usize, sphere_res: usize) -> Result<NodeRule<D>> {
        let sphere = quad::sphere_rule::<D>(sphere_res)?;
        let a = self.alpha;
        let (pe, se) = (self.profile.plateau_end(self.delta), self.profile.support_end(self.delta));
        let mut radial: Vec<(f64, f64)> = Vec::new();
        if se > pe {
            for p in 0..4 {
                let lo = pe + (se - pe) * p as f64 / 4.0;
                let hi = pe + (se - pe) * (p + 1) as f64 / 4.0;
                for (r, w) in quad::gauss_legendre_on(order, lo, hi) {
                    radial.push((r, w * (1.0 - self.profile.chi(self.delta, r)) * r.powf(-1.0 - a)));
                }
            }
        }
        let umax = se.powf(-a);
        let levels = 48;
        for k in 0..levels {
            let hi = umax * 0.5f64.powi(k);
            let lo = umax * 0.5f64.powi(k + 1);
            for (u, w) in quad::gauss_legendre_on(order, lo, hi) {
                radial.push((u.powf(-1.0 / a), w / a));
            }
        }
        let mut nodes = Vec::with_capacity(radial.len() * sphere.len());
        for (r, wr) in &radial {
            for (u, wu) in &sphere {
                nodes.push((u * *r, wr * wu));
            }
        }
        Ok(NodeRule { nodes })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::path_rng;

    #[test]
    fn density_examples() {
        let m = LevyModel::<1>::smooth(1.0, 1.0).unwrap();
        assert!((m.density(&Vector::<1>::new(0.1)).unwrap() - 100.0).abs() < 1e-9);
        assert_eq!(m.density(&Vector::<1>::new(2.0)).unwrap(), 0.0);
        assert!(matches!(m.density(&Vector::<1>::new(0.0)), Err(Error::Domain(_))));
        let m2 = LevyModel::<2>::smooth(0.5, 1.0).unwrap();
        let v = m2.density(&Vector::<2>::new(0.3, 0.4)).unwrap();
        assert!((v - 0.5f64.powf(-2.5)).abs() < 1e-12);
    }

    #[test]
    fn moment_examples() {
        let m = LevyModel::<1>::smooth(1.0, 1.0).unwrap();
        assert!((m.small_jump_moment(2.0, 0.5).unwrap() - 1.0).abs() < 1e-10);
        assert_eq!(m.small_jump_moment(2.0, 0.0).unwrap(), 0.0);
        let eps: f64 = 1e-4;
        let scaled = eps.powf(1.0 - 2.0) * m.small_jump_moment(2.0, eps).unwrap();
        assert!((scaled - 2.0).abs() < 1e-9);
        assert!(m.small_jump_moment(1.5, 0.1).is_err());
    }

    #[test]
    fn hard_cutoff_rate_is_sixteen() {
        let m = LevyModel::<1>::new(1.0, 1.0, Profile::HardCutoff { radius: 0.5 }, Some(0.1)).unwrap();
        assert!((m.jump_rate().unwrap() - 16.0).abs() < 1e-12);
        let med = m.radial_inverse_cdf(0.5).unwrap();
        assert!((med - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn smooth_median_includes_tail_mass() {
        let m = LevyModel::<1>::new(1.0, 1.0, Profile::Smooth, Some(0.1)).unwrap();
        let med = m.radial_inverse_cdf(0.5).unwrap();
        assert!((m.radial_cdf(med).unwrap() - 0.5).abs() < 1e-12);
        // The plateau closed form is recovered once the tail mass is added.
        let tail = m.tail_mass;
        let closed = 1.0 / (10.0 - 0.5 * (8.0 + tail));
        assert!((med - closed).abs() < 1e-10);
    }

    #[test]
    fn rate_vanishes_as_truncation_reaches_delta() {
        let m = LevyModel::<1>::new(1.0, 1.0, Profile::Smooth, Some(1.0 - 1e-12)).unwrap();
        assert!(m.jump_rate().unwrap() < 1e-20);
    }

    #[test]
    fn sampling_requires_truncation() {
        let m = LevyModel::<1>::new(1.0, 1.0, Profile::Smooth, Some(0.0)).unwrap();
        let mut rng = path_rng(1, 0);
        assert!(matches!(m.sample_jump(&mut rng), Err(Error::Config(_))));
        assert!(m.jump_rate().is_err());
    }

    #[test]
    fn silenced_model_has_no_mass() {
        let m = LevyModel::<1>::smooth(1.0, 1.0).unwrap().silenced();
        assert_eq!(m.jump_rate().unwrap(), 0.0);
        assert_eq!(m.density(&Vector::<1>::new(0.1)).unwrap(), 0.0);
        assert!(m.node_rule(0.01, 1.0, 8, 1).unwrap().nodes.is_empty());
    }

    #[test]
    fn zeta_profile() {
        let z = CutoffZeta::new(1.0);
        assert_eq!(z.radial(0.2), 0.2f64.powi(3));
        assert_eq!(z.radial(0.25), 0.25f64.powi(3));
        assert_eq!(z.radial(0.51), 0.0);
        for k in 0..200 {
            let r = k as f64 / 150.0;
            let v = z.radial(r);
            assert!((0.0..=0.125).contains(&v));
        }
    }

    #[test]
    fn grad_log_density_matches_finite_difference() {
        let m = LevyModel::<2>::smooth(0.7, 1.0).unwrap();
        for &(a, b) in &[(0.1, 0.05), (0.3, -0.2), (-0.6, 0.3)] {
            let z = Vector::<2>::new(a, b);
            let g = m.grad_log_density(&z).unwrap();
            for i in 0..2 {
                let mut e = Vector::<2>::zeros();
                e[i] = 1e-6;
                let fd = (m.density(&(z + e)).unwrap().ln() - m.density(&(z - e)).unwrap().ln()) / 2e-6;
                assert!((fd - g[i]).abs() < 1e-5 * (1.0 + g[i].abs()));
            }
        }
    }

    #[test]
    fn node_rule_matches_adaptive() {
        let m = LevyModel::<2>::smooth(0.5, 1.0).unwrap();
        let g = |z: &Vector<2>| SVector::<f64, 1>::new(z.norm_squared() * (1.0 + z[0]));
        let a = m.integrate(g, 0.01, 1.0, 16).unwrap()[0];
        let b = m.node_rule(0.01, 1.0, 16, 16).unwrap().integrate(g)[0];
        assert!((a / b - 1.0).abs() < 1e-9);
    }

    #[test]
    fn big_jump_mass_and_rule() {
        let mu = BigJumpMeasure::<1>::new(1.0, 1.0, Profile::HardCutoff { radius: 1.0 });
        assert!((mu.mass() - 2.0).abs() < 1e-13);
        let rule = mu.node_rule(16, 1).unwrap();
        assert!((rule.mass() / mu.mass() - 1.0).abs() < 1e-9);
        let mu = BigJumpMeasure::<2>::new(0.5, 1.0, Profile::Smooth);
        let rule = mu.node_rule(16, 8).unwrap();
        assert!((rule.mass() / mu.mass() - 1.0).abs() < 1e-9);
    }
}
