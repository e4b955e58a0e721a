//! Fixed-node quadrature of the nonlocal operators
//! `L_0 f(x) = p.v.∫_{|z|<δ}[f(x+σ(x,z)) - f(x)]ν(dz) + b·∇f(x)`,
//! `ℒ f(x) = ∫[f(x+σ(x,z)) - f(x)](1-χ_δ(|z|))|z|^{-d-α}dz` and their sum.
//!
//! Inside `pv_inner_cut` the integrand is symmetrized over antipodal nodes,
//! which realizes the principal value exactly for odd parts. Below the
//! innermost node radius (only when the measure is not truncated) the
//! second-order Taylor term is integrated in closed form.

use std::sync::Arc;

use crate::coeffs::CoefficientSet;
use crate::levy::{LevyModel, NodeRule};
use crate::quad;
use crate::{Error, Matrix, Result, Vector};

/// A scalar field with (possibly finite-difference) derivatives.
pub trait ScalarField<const D: usize>: Sync {
    fn value(&self, x: &Vector<D>) -> f64;

    /// Fourth-order central differences unless overridden.
    fn gradient(&self, x: &Vector<D>) -> Vector<D> {
        let h = 1e-3 * (1.0 + x.amax());
        Vector::<D>::from_fn(|i, _| {
            let at = |s: f64| {
                let mut y = *x;
                y[i] += s * h;
                self.value(&y)
            };
            (at(-2.0) - at(2.0) + 8.0 * (at(1.0) - at(-1.0))) / (12.0 * h)
        })
    }

    fn hessian(&self, x: &Vector<D>) -> Matrix<D> {
        let h = 1e-3 * (1.0 + x.amax());
        let mut m = Matrix::<D>::zeros();
        for i in 0..D {
            let at = |s: f64| {
                let mut y = *x;
                y[i] += s * h;
                self.gradient(&y)
            };
            let col = (at(-2.0) - at(2.0) + (at(1.0) - at(-1.0)) * 8.0) / (12.0 * h);
            m.set_column(i, &col);
        }
        (m + m.transpose()) * 0.5
    }

    /// Typical length over which the field varies, if known.
    fn length_scale(&self) -> Option<f64> {
        None
    }
}

/// Built-in test functions.
#[derive(Clone)]
pub enum TestFunction<const D: usize> {
    Constant(f64),
    /// `c·x`.
    Linear(Vector<D>),
    /// `x^T Q x`.
    Quadratic(Matrix<D>),
    /// `cos(k·x)`.
    Cos(Vector<D>),
    /// `tanh(k·x)`.
    Tanh(Vector<D>),
    /// `exp(-|x-c|²/(2w²))`.
    Gaussian { center: Vector<D>, width: f64 },
    /// `exp(1 - 1/(1-r²))` with `r = |x-c|/radius`, zero for `r ≥ 1`.
    Bump { center: Vector<D>, radius: f64 },
    /// `(1 + tanh((x_i - at)/scale))/2`, a smoothed indicator.
    SmoothStep { coord: usize, at: f64, scale: f64 },
    Custom(Arc<dyn Fn(&Vector<D>) -> f64 + Send + Sync>),
}

impl<const D: usize> std::fmt::Debug for TestFunction<D> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TestFunction::Constant(c) => write!(f, "Constant({c})"),
            TestFunction::Linear(c) => write!(f, "Linear({:?})", c.as_slice()),
            TestFunction::Quadratic(q) => write!(f, "Quadratic({:?})", q.as_slice()),
            TestFunction::Cos(k) => write!(f, "Cos({:?})", k.as_slice()),
            TestFunction::Tanh(k) => write!(f, "Tanh({:?})", k.as_slice()),
            TestFunction::Gaussian { center, width } => write!(f, "Gaussian({:?}, {width})", center.as_slice()),
            TestFunction::Bump { center, radius } => write!(f, "Bump({:?}, {radius})", center.as_slice()),
            TestFunction::SmoothStep { coord, at, scale } => write!(f, "SmoothStep({coord}, {at}, {scale})"),
            TestFunction::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl<const D: usize> TestFunction<D> {
    /// `tanh(x_i)`.
    pub fn tanh_coord(i: usize) -> Self {
        let mut k = Vector::<D>::zeros();
        k[i] = 1.0;
        TestFunction::Tanh(k)
    }

    /// `cos(x_i)`.
    pub fn cos_coord(i: usize) -> Self {
        let mut k = Vector::<D>::zeros();
        k[i] = 1.0;
        TestFunction::Cos(k)
    }

    /// `sup |f|`, when finite.
    pub fn sup_norm(&self) -> Option<f64> {
        match self {
            TestFunction::Constant(c) => Some(c.abs()),
            TestFunction::Cos(_) | TestFunction::Tanh(_) => Some(1.0),
            TestFunction::Gaussian { .. } | TestFunction::Bump { .. } | TestFunction::SmoothStep { .. } => Some(1.0),
            _ => None,
        }
    }
}

impl<const D: usize> ScalarField<D> for TestFunction<D> {
    fn value(&self, x: &Vector<D>) -> f64 {
        match self {
            TestFunction::Constant(c) => *c,
            TestFunction::Linear(c) => c.dot(x),
            TestFunction::Quadratic(q) => (x.transpose() * q * x)[0],
            TestFunction::Cos(k) => k.dot(x).cos(),
            TestFunction::Tanh(k) => k.dot(x).tanh(),
            TestFunction::Gaussian { center, width } => (-(x - center).norm_squared() / (2.0 * width * width)).exp(),
            TestFunction::Bump { center, radius } => {
                let r2 = (x - center).norm_squared() / (radius * radius);
                if r2 >= 1.0 { 0.0 } else { (1.0 - 1.0 / (1.0 - r2)).exp() }
            }
            TestFunction::SmoothStep { coord, at, scale } => 0.5 * (1.0 + ((x[*coord] - at) / scale).tanh()),
            TestFunction::Custom(f) => f(x),
        }
    }

    fn gradient(&self, x: &Vector<D>) -> Vector<D> {
        match self {
            TestFunction::Constant(_) => Vector::<D>::zeros(),
            TestFunction::Linear(c) => *c,
            TestFunction::Quadratic(q) => (q + q.transpose()) * x,
            TestFunction::Cos(k) => -k * k.dot(x).sin(),
            TestFunction::Tanh(k) => k * (1.0 - k.dot(x).tanh().powi(2)),
            TestFunction::Gaussian { center, width } => {
                -(x - center) / (width * width) * self.value(x)
            }
            TestFunction::Bump { center, radius } => {
                let y = x - center;
                let r2 = y.norm_squared() / (radius * radius);
                if r2 >= 1.0 {
                    return Vector::<D>::zeros();
                }
                let g = 1.0 - r2;
                y * (-2.0 / (radius * radius) / (g * g) * self.value(x))
            }
            TestFunction::SmoothStep { coord, at, scale } => {
                let th = ((x[*coord] - at) / scale).tanh();
                let mut g = Vector::<D>::zeros();
                g[*coord] = 0.5 * (1.0 - th * th) / scale;
                g
            }
            TestFunction::Custom(_) => default_gradient(self, x),
        }
    }

    fn hessian(&self, x: &Vector<D>) -> Matrix<D> {
        match self {
            TestFunction::Constant(_) | TestFunction::Linear(_) => Matrix::<D>::zeros(),
            TestFunction::Quadratic(q) => q + q.transpose(),
            TestFunction::Cos(k) => -(k * k.transpose()) * k.dot(x).cos(),
            TestFunction::Tanh(k) => {
                let th = k.dot(x).tanh();
                k * k.transpose() * (-2.0 * th * (1.0 - th * th))
            }
            TestFunction::Gaussian { center, width } => {
                let y = (x - center) / (width * width);
                (y * y.transpose() - Matrix::<D>::identity() / (width * width)) * self.value(x)
            }
            TestFunction::SmoothStep { coord, at, scale } => {
                let th = ((x[*coord] - at) / scale).tanh();
                let mut h = Matrix::<D>::zeros();
                h[(*coord, *coord)] = -th * (1.0 - th * th) / (scale * scale);
                h
            }
            TestFunction::Bump { .. } | TestFunction::Custom(_) => default_hessian(self, x),
        }
    }

    fn length_scale(&self) -> Option<f64> {
        match self {
            TestFunction::Cos(k) | TestFunction::Tanh(k) => Some(1.0 / k.norm().max(1e-300)),
            TestFunction::Gaussian { width, .. } => Some(*width),
            TestFunction::Bump { radius, .. } => Some(*radius),
            TestFunction::SmoothStep { scale, .. } => Some(*scale),
            _ => None,
        }
    }
}

struct ByValue<'a, const D: usize>(&'a TestFunction<D>);

impl<const D: usize> ScalarField<D> for ByValue<'_, D> {
    fn value(&self, x: &Vector<D>) -> f64 {
        self.0.value(x)
    }
}

fn default_gradient<const D: usize>(f: &TestFunction<D>, x: &Vector<D>) -> Vector<D> {
    ByValue(f).gradient(x)
}

fn default_hessian<const D: usize>(f: &TestFunction<D>, x: &Vector<D>) -> Matrix<D> {
    ByValue(f).hessian(x)
}

/// Which operator [`Operator::apply`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    SmallJumpL0,
    BigJumpScriptL,
    Full,
}

/// Node counts of the fixed rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resolution {
    /// Gauss–Legendre points per radial panel.
    pub radial_order: usize,
    /// Angles per half circle (d = 2), latitude points (d = 3).
    pub sphere_res: usize,
    /// Geometric panels of the big-jump tail in `u = r^{-α}`.
    pub tail_levels: usize,
}

impl Resolution {
    pub const FINE: Resolution = Resolution { radial_order: 16, sphere_res: 64, tail_levels: 40 };
    pub const COARSE: Resolution = Resolution { radial_order: 6, sphere_res: 16, tail_levels: 22 };
}

/// Parameters of an operator quadrature.
#[derive(Debug, Clone)]
pub struct OperatorSpec<const D: usize> {
    pub kind: OperatorKind,
    pub model: LevyModel<D>,
    pub coeffs: CoefficientSet<D>,
    pub pv_inner_cut: f64,
    pub quad_tol: f64,
    pub resolution: Resolution,
}

impl<const D: usize> OperatorSpec<D> {
    pub fn new(kind: OperatorKind, model: LevyModel<D>, coeffs: CoefficientSet<D>) -> Self {
        let cut = 0.125 * model.delta();
        OperatorSpec { kind, model, coeffs, pv_inner_cut: cut, quad_tol: 1e-8, resolution: Resolution::FINE }
    }

    pub fn with_cut(mut self, cut: f64) -> Self {
        self.pv_inner_cut = cut;
        self
    }

    pub fn with_resolution(mut self, r: Resolution) -> Self {
        self.resolution = r;
        self
    }

    pub fn with_kind(mut self, kind: OperatorKind) -> Self {
        self.kind = kind;
        self
    }
}

/// An operator with its quadrature nodes built once.
#[derive(Debug, Clone)]
pub struct Operator<const D: usize> {
    pub spec: OperatorSpec<D>,
    /// Symmetrized region, consecutive `(z, -z)` pairs.
    inner: NodeRule<D>,
    outer: NodeRule<D>,
    big: NodeRule<D>,
    /// Radius below which the closed-form second-order term is used
    /// (`None` when the measure is truncated there anyway).
    remainder_radius: Option<f64>,
    innermost: f64,
}

/// Ratio of the innermost inner cut to the p.v. cut when the measure is not
/// truncated.
const REMAINDER_FRACTION: f64 = 1e-4;

impl<const D: usize> Operator<D> {
    pub fn new(spec: OperatorSpec<D>) -> Result<Self> {
        if D > 3 {
            return Err(Error::config("operator quadrature supports d <= 3 only"));
        }
        let m = &spec.model;
        if !(spec.pv_inner_cut > 0.0 && spec.pv_inner_cut <= 0.25 * m.delta() * (1.0 + 1e-12)) {
            return Err(Error::config(format!("pv_inner_cut must lie in (0, δ/4], got {}", spec.pv_inner_cut)));
        }
        if !(spec.quad_tol > 0.0) {
            return Err(Error::config("quad_tol must be positive"));
        }
        let res = spec.resolution;
        let sres = if D == 1 { 1 } else { res.sphere_res };
        let trunc = m.trunc_low();
        let cut = spec.pv_inner_cut;
        let (lo, remainder_radius) =
            if trunc > 0.0 { (trunc, None) } else { (cut * REMAINDER_FRACTION, Some(cut * REMAINDER_FRACTION)) };
        let inner = if lo < cut { m.node_rule(lo, cut, res.radial_order, sres)? } else { NodeRule { nodes: vec![] } };
        let outer = m.node_rule(lo.max(cut), m.delta(), res.radial_order, sres)?;
        let big = if spec.kind == OperatorKind::SmallJumpL0 {
            NodeRule { nodes: vec![] }
        } else {
            big_rule(m, res, sres)?
        };
        let innermost = inner.nodes.iter().map(|n| n.0.norm()).fold(f64::INFINITY, f64::min);
        Ok(Operator { spec, inner, outer, big, remainder_radius, innermost })
    }

    pub fn kind(&self) -> OperatorKind {
        self.spec.kind
    }

    pub fn apply(&self, f: &dyn ScalarField<D>, x: &Vector<D>) -> Result<f64> {
        match self.spec.kind {
            OperatorKind::SmallJumpL0 => self.small(f, x),
            OperatorKind::BigJumpScriptL => Ok(self.big(f, x)),
            OperatorKind::Full => Ok(self.small(f, x)? + self.big(f, x)),
        }
    }

    /// `L_0 f(x)`.
    pub fn small(&self, f: &dyn ScalarField<D>, x: &Vector<D>) -> Result<f64> {
        let c = &self.spec.coeffs;
        let fx = f.value(x);
        let mut acc = c.drift(x).dot(&f.gradient(x));
        if self.spec.model.is_silent() {
            return Ok(acc);
        }
        if !self.inner.nodes.is_empty() {
            self.check_decay(f, x, fx)?;
        }
        let mut inner = 0.0;
        for pair in self.inner.nodes.chunks_exact(2) {
            let (z, w) = &pair[0];
            let g = f.value(&(x + c.sigma(x, z))) + f.value(&(x + c.sigma(x, &pair[1].0))) - 2.0 * fx;
            inner += g * w;
        }
        let mut outer = 0.0;
        for (z, w) in &self.outer.nodes {
            outer += (f.value(&(x + c.sigma(x, z))) - fx) * w;
        }
        acc += inner + outer;
        if let Some(r0) = self.remainder_radius {
            acc += self.remainder(f, x, r0);
        }
        Ok(acc)
    }

    /// `ℒ f(x)`.
    pub fn big(&self, f: &dyn ScalarField<D>, x: &Vector<D>) -> f64 {
        let c = &self.spec.coeffs;
        let fx = f.value(x);
        let mut acc = 0.0;
        for (z, w) in &self.big.nodes {
            acc += (f.value(&(x + c.sigma(x, z))) - fx) * w;
        }
        acc
    }

    /// `∫_{|z|<r0}[f(x+σ(x,z)) - f(x)]ν(dz)` to second order:
    /// `(S r0^{2-α}/(2-α)) / (2d) · (tr(B^T ∇²f B) + ∇f·Δ_zσ(x,0))`.
    fn remainder(&self, f: &dyn ScalarField<D>, x: &Vector<D>, r0: f64) -> f64 {
        let c = &self.spec.coeffs;
        let m = &self.spec.model;
        let a = m.alpha();
        let radial = quad::sphere_area(D) * r0.powf(2.0 - a) / (2.0 - a);
        let b = c.b1(x);
        let mut second = (b.transpose() * f.hessian(x) * b).trace();
        if !c.is_linear_in_z() {
            let h = 1e-4;
            let s0 = c.sigma(x, &Vector::<D>::zeros());
            let mut lap = Vector::<D>::zeros();
            for k in 0..D {
                let mut e = Vector::<D>::zeros();
                e[k] = h;
                lap += (c.sigma(x, &e) + c.sigma(x, &(-e)) - s0 * 2.0) / (h * h);
            }
            second += f.gradient(x).dot(&lap);
        }
        radial * second / (2.0 * D as f64)
    }

    /// The symmetrized integrand must be `O(|z|²)`; an `O(|z|)` residue means
    /// the odd part does not cancel.
    fn check_decay(&self, f: &dyn ScalarField<D>, x: &Vector<D>, fx: f64) -> Result<()> {
        let c = &self.spec.coeffs;
        let sphere = quad::sphere_rule::<D>(if D == 1 { 1 } else { 8 })?;
        let level = |r: f64| {
            let mut s = 0.0;
            for (u, w) in &sphere {
                let z = u * r;
                let g = f.value(&(x + c.sigma(x, &z))) + f.value(&(x + c.sigma(x, &(-z)))) - 2.0 * fx;
                s += w * g.abs();
            }
            s / (r * r)
        };
        let r = self.innermost;
        let (a, b) = (level(r), level(0.5 * r));
        // Rounding in the second difference is about 1e-16|f|/r².
        let floor = 1e-13 * (1.0 + fx.abs()) / (r * r);
        if b > 1.5 * a + floor {
            return Err(Error::numerics(format!(
                "symmetrized integrand is not O(|z|²) at x = {x:?}; the compensator-free condition fails"
            )));
        }
        Ok(())
    }

    /// Number of evaluation nodes (small, big).
    pub fn node_counts(&self) -> (usize, usize) {
        (self.inner.nodes.len() + self.outer.nodes.len(), self.big.nodes.len())
    }
}

fn big_rule<const D: usize>(m: &LevyModel<D>, res: Resolution, sres: usize) -> Result<NodeRule<D>> {
    let mu = m.big_jumps();
    let mut rule = mu.node_rule(res.radial_order, sres)?;
    if res.tail_levels < 48 {
        // Drop the geometric tail panels beyond `tail_levels`.
        let a = m.alpha();
        let umin = m.support_end().powf(-a) * 0.5f64.powi(res.tail_levels as i32);
        let rmax = umin.powf(-1.0 / a);
        rule.nodes.retain(|(z, _)| z.norm() <= rmax);
    }
    Ok(rule)
}

/// Grid `L^p` norm ratios `‖ℒf‖_p / ‖f‖_p` for a family of bumps.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundednessRow {
    pub width: f64,
    pub ratio: f64,
}

/// `‖ℒ f_w‖_p / ‖f_w‖_p` for Gaussian bumps of the given widths, by grid
/// quadrature on `[-half_width, half_width]^d` with spacing `h`.
pub fn boundedness_probe<const D: usize>(
    op: &Operator<D>,
    widths: &[f64],
    p: f64,
    half_width: f64,
    h: f64,
) -> Result<Vec<BoundednessRow>> {
    if op.kind() != OperatorKind::BigJumpScriptL {
        return Err(Error::config("boundedness probe needs the big-jump operator"));
    }
    if !(p >= 1.0) {
        return Err(Error::config("p must be at least 1"));
    }
    let n = (2.0 * half_width / h).round() as usize + 1;
    let total = n.pow(D as u32);
    let point = |mut k: usize| {
        let mut x = Vector::<D>::zeros();
        for i in 0..D {
            x[i] = -half_width + (k % n) as f64 * h;
            k /= n;
        }
        x
    };
    let mut rows = Vec::new();
    for &w in widths {
        let f = TestFunction::Gaussian { center: Vector::<D>::zeros(), width: w };
        let vals = crate::par::map(total, |k| {
            let x = point(k);
            (f.value(&x).abs().powf(p), op.big(&f, &x).abs().powf(p))
        });
        let nf: f64 = crate::stats::pairwise_sum(&vals.iter().map(|v| v.0).collect::<Vec<_>>());
        let nl: f64 = crate::stats::pairwise_sum(&vals.iter().map(|v| v.1).collect::<Vec<_>>());
        let ratio = if nf == 0.0 { 0.0 } else { (nl / nf).powf(1.0 / p) };
        rows.push(BoundednessRow { width: w, ratio });
    }
    Ok(rows)
}
