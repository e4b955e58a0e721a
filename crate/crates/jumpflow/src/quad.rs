//! Quadrature building blocks: adaptive Gauss–Kronrod, Gauss–Legendre rules,
//! radial integrals with power singularities and antipodal sphere rules.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::SVector;

use crate::{Error, Result, Vector};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Stopping rule for adaptive integration: stop once the estimated error is
/// below `max(abs, rel·|I|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { rel: 1e-10, abs: 1e-300, max_intervals: 4000 }
    }
}

impl Tolerance {
    pub fn rel(rel: f64) -> Self {
        Tolerance { rel, ..Default::default() }
    }

    pub fn with_abs(mut self, abs: f64) -> Self {
        self.abs = abs;
        self
    }
}

struct Piece<const M: usize> {
    a: f64,
    b: f64,
    value: SVector<f64, M>,
    err: f64,
}

impl<const M: usize> PartialEq for Piece<M> {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl<const M: usize> Eq for Piece<M> {}
impl<const M: usize> PartialOrd for Piece<M> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<const M: usize> Ord for Piece<M> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

fn kronrod<const M: usize, F>(f: &mut F, a: f64, b: f64) -> (SVector<f64, M>, f64)
where
    F: FnMut(f64) -> SVector<f64, M>,
{
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k += s * WGK[i];
        if i % 2 == 1 {
            g += s * WG[i / 2];
        }
    }
    let k = k * h;
    let g = g * h;
    let err = (k - g).amax();
    (k, err)
}

/// Globally adaptive 15-point Gauss–Kronrod integration of a vector-valued
/// integrand over `[a, b]`.
pub fn adaptive_vec<const M: usize, F>(mut f: F, a: f64, b: f64, tol: Tolerance) -> Result<SVector<f64, M>>
where
    F: FnMut(f64) -> SVector<f64, M>,
{
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::numerics(format!("non-finite integration bounds [{a}, {b}]")));
    }
    if a == b {
        return Ok(SVector::zeros());
    }
    let (v, e) = kronrod(&mut f, a, b);
    let mut total = v;
    let mut total_err = e;
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, value: v, err: e });
    let mut settled_err = 0.0;
    loop {
        if !total.iter().all(|x| x.is_finite()) {
            return Err(Error::numerics("integrand produced a non-finite value"));
        }
        let target = tol.abs.max(tol.rel * total.amax());
        if total_err <= target {
            return Ok(total);
        }
        if heap.len() >= tol.max_intervals {
            // Accept when the remaining error is only slightly above target.
            if total_err <= 100.0 * target {
                return Ok(total);
            }
            return Err(Error::numerics(format!(
                "adaptive quadrature did not converge on [{a}, {b}]: error {total_err:e} > {target:e}"
            )));
        }
        let Some(worst) = heap.pop() else {
            return Ok(total);
        };
        let mid = 0.5 * (worst.a + worst.b);
        if (worst.b - worst.a) <= 1e-14 * worst.a.abs().max(worst.b.abs()).max(1e-300) {
            // Cannot split further; freeze its error.
            settled_err += worst.err;
            if heap.is_empty() {
                let target = tol.abs.max(tol.rel * total.amax());
                if settled_err <= 100.0 * target {
                    return Ok(total);
                }
                return Err(Error::numerics("adaptive quadrature hit the resolution limit"));
            }
            continue;
        }
        let (v1, e1) = kronrod(&mut f, worst.a, mid);
        let (v2, e2) = kronrod(&mut f, mid, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.err;
        heap.push(Piece { a: worst.a, b: mid, value: v1, err: e1 });
        heap.push(Piece { a: mid, b: worst.b, value: v2, err: e2 });
        // Re-sum the error to avoid drift from repeated subtraction.
        if heap.len() % 64 == 0 {
            total_err = settled_err + heap.iter().map(|p| p.err).sum::<f64>();
        }
    }
}

/// Scalar version of [`adaptive_vec`].
pub fn adaptive<F>(mut f: F, a: f64, b: f64, tol: Tolerance) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    adaptive_vec::<1, _>(|x| SVector::<f64, 1>::new(f(x)), a, b, tol).map(|v| v[0])
}

/// `∫_lo^hi r^beta g(r) dr` for `beta > -1`, integrated in `s = ln r` so that
/// power singularities at the origin become exponentially decaying tails.
/// `lo = 0` is allowed.
pub fn radial_vec<const M: usize, F>(
    mut g: F,
    beta: f64,
    lo: f64,
    hi: f64,
    tol: Tolerance,
) -> Result<SVector<f64, M>>
where
    F: FnMut(f64) -> SVector<f64, M>,
{
    if hi <= lo {
        return Ok(SVector::zeros());
    }
    if lo < 0.0 {
        return Err(Error::domain("radial integral with negative lower bound"));
    }
    let p = beta + 1.0;
    let s_lo = if lo > 0.0 {
        lo.ln()
    } else {
        if p <= 0.0 {
            return Err(Error::numerics(format!("radial integrand r^{beta} is not integrable at 0")));
        }
        // Tail below s_lo is smaller than 1e-17 of the scale at hi.
        hi.ln() - 39.2 / p
    };
    adaptive_vec(|s| { let r = s.exp(); g(r) * (p * s).exp() }, s_lo, hi.ln(), tol)
}

pub fn radial<F>(mut g: F, beta: f64, lo: f64, hi: f64, tol: Tolerance) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    radial_vec::<1, _>(|r| SVector::<f64, 1>::new(g(r)), beta, lo, hi, tol).map(|v| v[0])
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "Gauss-Legendre rule needs at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 1.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j - 1) as f64 * z * p2 - (j - 1) as f64 * p3) / j as f64;
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(n);
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    x.iter().zip(&w).map(|(xi, wi)| (c + h * xi, h * wi)).collect()
}

/// Surface area of the unit sphere in `R^d`.
pub fn sphere_area(d: usize) -> f64 {
    match d {
        0 => 0.0,
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        _ => 2.0 * std::f64::consts::PI / (d as f64 - 2.0) * sphere_area(d - 2),
    }
}

/// Quadrature rule on the unit sphere whose nodes come in exact antipodal
/// pairs `(u, -u)`; weights sum to the sphere area. `resolution` is the
/// number of angles on a half circle.
pub fn sphere_rule<const D: usize>(resolution: usize) -> Result<Vec<(Vector<D>, f64)>> {
    let res = resolution.max(1);
    let mut half: Vec<(Vector<D>, f64)> = Vec::new();
    match D {
        1 => half.push((Vector::<D>::from_element(1.0), 1.0)),
        2 => {
            let w = std::f64::consts::PI / res as f64;
            for k in 0..res {
                let th = std::f64::consts::PI * (k as f64 + 0.5) / res as f64;
                let mut u = Vector::<D>::zeros();
                u[0] = th.cos();
                u[1] = th.sin();
                half.push((u, w));
            }
        }
        3 => {
            // Gauss–Legendre in cos(theta) on the upper half, uniform in phi.
            let nc = res.max(2);
            let nphi = 2 * res;
            let (c, wc) = gauss_legendre(2 * nc);
            let dphi = 2.0 * std::f64::consts::PI / nphi as f64;
            for i in nc..2 * nc {
                let ct = c[i];
                let st = (1.0 - ct * ct).max(0.0).sqrt();
                for k in 0..nphi {
                    let ph = dphi * (k as f64 + 0.5);
                    let mut u = Vector::<D>::zeros();
                    u[0] = st * ph.cos();
                    u[1] = st * ph.sin();
                    u[2] = ct;
                    half.push((u, wc[i] * dphi));
                }
            }
        }
        _ => return Err(Error::config(format!("sphere quadrature is only available for d <= 3, got {D}"))),
    }
    let mut out = Vec::with_capacity(2 * half.len());
    for (u, w) in &half {
        out.push((*u, *w));
        out.push((-*u, *w));
    }
    Ok(out)
}

/// Deterministic, roughly uniform unit covectors (up to sign), always
/// including the coordinate axes.
pub fn covector_samples<const D: usize>(n: usize) -> Vec<Vector<D>> {
    let mut out = Vec::with_capacity(n + D);
    for i in 0..D {
        let mut e = Vector::<D>::zeros();
        e[i] = 1.0;
        out.push(e);
    }
    match D {
        1 => {}
        2 => {
            for k in 0..n {
                let th = std::f64::consts::PI * k as f64 / n as f64;
                let mut u = Vector::<D>::zeros();
                u[0] = th.cos();
                u[1] = th.sin();
                out.push(u);
            }
        }
        3 => {
            // Fibonacci lattice on the upper hemisphere.
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            for k in 0..n {
                let z = 1.0 - (k as f64 + 0.5) / n as f64;
                let r = (1.0 - z * z).sqrt();
                let ph = golden * k as f64;
                let mut u = Vector::<D>::zeros();
                u[0] = r * ph.cos();
                u[1] = r * ph.sin();
                u[2] = z;
                out.push(u);
            }
        }
        _ => {
            // Halton-like radical inverses mapped through a Box–Muller pairing.
            let primes = [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];
            for k in 1..=n as u64 {
                let mut u = Vector::<D>::zeros();
                for i in 0..D {
                    let a = radical_inverse(k, primes[(2 * i) % primes.len()]).max(1e-12);
                    let b = radical_inverse(k, primes[(2 * i + 1) % primes.len()]);
                    u[i] = (-2.0 * a.ln()).sqrt() * (2.0 * std::f64::consts::PI * b).cos();
                }
                let nrm = u.norm();
                if nrm > 0.0 {
                    out.push(u / nrm);
                }
            }
        }
    }
    out
}

fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut r = 0.0;
    while k > 0 {
        r += (k % base) as f64 * inv;
        k /= base;
        inv /= base as f64;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in 1..12 {
            let (x, w) = gauss_legendre(n);
            for deg in 0..(2 * n) {
                let num: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((num - exact).abs() < 1e-13, "n={n} deg={deg} {num} vs {exact}");
            }
        }
    }

    #[test]
    fn adaptive_handles_smooth_and_peaked() {
        let v = adaptive(|x| x.sin(), 0.0, std::f64::consts::PI, Tolerance::default()).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
        let v = adaptive(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, Tolerance::default()).unwrap();
        let exact = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert!((v / exact - 1.0).abs() < 1e-10);
    }

    #[test]
    fn radial_with_singularity_at_origin() {
        // ∫_0^1 r^{-1/2} dr = 2
        let v = radial(|_| 1.0, -0.5, 0.0, 1.0, Tolerance::default()).unwrap();
        assert!((v - 2.0).abs() < 1e-10);
        let v = radial(|r| r, -0.9, 0.0, 0.5, Tolerance::default()).unwrap();
        let exact = 0.5f64.powf(1.1) / 1.1;
        assert!((v / exact - 1.0).abs() < 1e-10);
    }

    #[test]
    fn sphere_rules_are_antipodal_and_exact_for_low_moments() {
        let r1 = sphere_rule::<1>(8).unwrap();
        assert_eq!(r1.len(), 2);
        let r2 = sphere_rule::<2>(16).unwrap();
        let r3 = sphere_rule::<3>(8).unwrap();
        let area2: f64 = r2.iter().map(|p| p.1).sum();
        let area3: f64 = r3.iter().map(|p| p.1).sum();
        assert!((area2 - sphere_area(2)).abs() < 1e-12);
        assert!((area3 - sphere_area(3)).abs() < 1e-12);
        for pair in r3.chunks(2) {
            assert_eq!(pair[0].0, -pair[1].0);
        }
        // ∫ u_1^2 dS = area / d
        let m2: f64 = r3.iter().map(|(u, w)| w * u[0] * u[0]).sum();
        assert!((m2 - sphere_area(3) / 3.0).abs() < 1e-12);
    }
}
