//! Coefficient fields `σ(x,z)`, `b(x)`, their derivatives and the derived
//! maps `Q`, `U`, `φ_z^{-1}`, `hat σ`, `hat b`.

use std::fmt;
use std::sync::Arc;

use crate::levy::LevyModel;
use crate::linalg;
use crate::{Error, Matrix, Result, Vector};

pub type JumpField<const D: usize> = Arc<dyn Fn(&Vector<D>, &Vector<D>) -> Vector<D> + Send + Sync>;
pub type JumpJacobian<const D: usize> = Arc<dyn Fn(&Vector<D>, &Vector<D>) -> Matrix<D> + Send + Sync>;
pub type Field<const D: usize> = Arc<dyn Fn(&Vector<D>) -> Vector<D> + Send + Sync>;
pub type FieldJacobian<const D: usize> = Arc<dyn Fn(&Vector<D>) -> Matrix<D> + Send + Sync>;

/// Step of the central-difference fallback for first derivatives.
pub const FD_STEP: f64 = 1e-6;

/// Structure of the drift, used by the flow solver to pick a fast path.
#[derive(Debug, Clone, PartialEq)]
pub enum DriftKind<const D: usize> {
    Zero,
    Linear(Matrix<D>),
    General,
}

/// Finite-difference provider for iterated x-derivatives of matrix fields
/// (4th-order central stencils, nested for higher orders).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HigherDerivatives {
    pub step: f64,
}

impl Default for HigherDerivatives {
    fn default() -> Self {
        HigherDerivatives { step: 1e-2 }
    }
}

impl HigherDerivatives {
    /// `∂_k F(x)` for a matrix field `F`.
    pub fn partial<const D: usize, F>(&self, f: &F, x: &Vector<D>, k: usize) -> Matrix<D>
    where
        F: Fn(&Vector<D>) -> Matrix<D> + ?Sized,
    {
        let h = self.step;
        let at = |s: f64| {
            let mut y = *x;
            y[k] += s * h;
            f(&y)
        };
        (at(-2.0) - at(2.0) + (at(1.0) - at(-1.0)) * 8.0) / (12.0 * h)
    }

    /// `v·∇F(x) = Σ_k v^k ∂_k F(x)`.
    pub fn directional<const D: usize, F>(&self, f: &F, x: &Vector<D>, v: &Vector<D>) -> Matrix<D>
    where
        F: Fn(&Vector<D>) -> Matrix<D> + ?Sized,
    {
        let mut acc = Matrix::<D>::zeros();
        for k in 0..D {
            if v[k] != 0.0 {
                acc += self.partial(f, x, k) * v[k];
            }
        }
        acc
    }
}

/// Central-difference Jacobian of a vector field, column `j` = `∂_j f`.
pub fn fd_jacobian<const D: usize, F>(f: F, x: &Vector<D>, step: f64) -> Matrix<D>
where
    F: Fn(&Vector<D>) -> Vector<D>,
{
    let mut m = Matrix::<D>::zeros();
    for j in 0..D {
        let h = step * x[j].abs().max(1.0);
        let mut p = *x;
        let mut q = *x;
        p[j] += h;
        q[j] -= h;
        m.set_column(j, &((f(&p) - f(&q)) / (2.0 * h)));
    }
    m
}

/// The coefficient pair `(σ, b)` with derivative oracles and structural flags.
#[derive(Clone)]
pub struct CoefficientSet<const D: usize> {
    name: String,
    sigma: JumpField<D>,
    drift: Field<D>,
    dsigma_dx: Option<JumpJacobian<D>>,
    dsigma_dz: Option<JumpJacobian<D>>,
    db: Option<FieldJacobian<D>>,
    higher: Option<HigherDerivatives>,
    drift_kind: DriftKind<D>,
    state_independent: bool,
    linear_in_z: bool,
    compensator_free: bool,
}

impl<const D: usize> fmt::Debug for CoefficientSet<D> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientSet")
            .field("name", &self.name)
            .field("drift_kind", &self.drift_kind)
            .field("state_independent", &self.state_independent)
            .field("linear_in_z", &self.linear_in_z)
            .field("compensator_free", &self.compensator_free)
            .finish()
    }
}

impl<const D: usize> CoefficientSet<D> {
    /// General coefficients from closures. Derivatives fall back to finite
    /// differences until analytic ones are attached.
    pub fn new<S, B>(name: impl Into<String>, sigma: S, drift: B) -> Self
    where
        S: Fn(&Vector<D>, &Vector<D>) -> Vector<D> + Send + Sync + 'static,
        B: Fn(&Vector<D>) -> Vector<D> + Send + Sync + 'static,
    {
        CoefficientSet {
            name: name.into(),
            sigma: Arc::new(sigma),
            drift: Arc::new(drift),
            dsigma_dx: None,
            dsigma_dz: None,
            db: None,
            higher: None,
            drift_kind: DriftKind::General,
            state_independent: false,
            linear_in_z: false,
            compensator_free: false,
        }
    }

    pub fn with_dsigma_dx<F>(mut self, f: F) -> Self
    where
        F: Fn(&Vector<D>, &Vector<D>) -> Matrix<D> + Send + Sync + 'static,
    {
        self.dsigma_dx = Some(Arc::new(f));
        self
    }

    pub fn with_dsigma_dz<F>(mut self, f: F) -> Self
    where
        F: Fn(&Vector<D>, &Vector<D>) -> Matrix<D> + Send + Sync + 'static,
    {
        self.dsigma_dz = Some(Arc::new(f));
        self
    }

    pub fn with_db<F>(mut self, f: F) -> Self
    where
        F: Fn(&Vector<D>) -> Matrix<D> + Send + Sync + 'static,
    {
        self.db = Some(Arc::new(f));
        self
    }

    pub fn with_higher_derivatives(mut self, h: HigherDerivatives) -> Self {
        self.higher = Some(h);
        self
    }

    pub fn without_higher_derivatives(mut self) -> Self {
        self.higher = None;
        self
    }

    /// Declares `b(x) = A x`; also installs the exact Jacobian.
    pub fn linear_drift(mut self, a: Matrix<D>) -> Self {
        self.drift = Arc::new(move |x| a * x);
        self.db = Some(Arc::new(move |_| a));
        self.drift_kind = if a.iter().all(|v| *v == 0.0) { DriftKind::Zero } else { DriftKind::Linear(a) };
        self
    }

    /// Declares that `σ` does not depend on `x`.
    pub fn state_independent(mut self) -> Self {
        self.state_independent = true;
        self.dsigma_dx = Some(Arc::new(|_, _| Matrix::<D>::zeros()));
        self
    }

    /// Declares `σ(x,z) = A(x) z`.
    pub fn linear_in_z(mut self) -> Self {
        self.linear_in_z = true;
        self
    }

    /// Asserts that `p.v.∫σ(x,z)ν(dz) = 0` (checked by [`Self::validate`]).
    pub fn compensator_free(mut self, flag: bool) -> Self {
        self.compensator_free = flag;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn drift_kind(&self) -> &DriftKind<D> {
        &self.drift_kind
    }
    pub fn is_state_independent(&self) -> bool {
        self.state_independent
    }
    pub fn is_linear_in_z(&self) -> bool {
        self.linear_in_z
    }
    pub fn is_compensator_free(&self) -> bool {
        self.compensator_free
    }
    pub fn higher_derivatives(&self) -> Option<HigherDerivatives> {
        self.higher
    }
    /// Affine flows satisfy `X_t(y) = J_t y + X_t(0)`.
    pub fn is_affine(&self) -> bool {
        self.state_independent && !matches!(self.drift_kind, DriftKind::General)
    }

    pub fn sigma(&self, x: &Vector<D>, z: &Vector<D>) -> Vector<D> {
        (self.sigma)(x, z)
    }

    pub fn drift(&self, x: &Vector<D>) -> Vector<D> {
        (self.drift)(x)
    }

    /// `φ_z(x) = x + σ(x,z)`.
    pub fn phi(&self, x: &Vector<D>, z: &Vector<D>) -> Vector<D> {
        x + self.sigma(x, z)
    }

    pub fn dsigma_dx(&self, x: &Vector<D>, z: &Vector<D>) -> Matrix<D> {
        match &self.dsigma_dx {
            Some(f) => f(x, z),
            None => fd_jacobian(|y| self.sigma(y, z), x, FD_STEP),
        }
    }

    pub fn dsigma_dz(&self, x: &Vector<D>, z: &Vector<D>) -> Matrix<D> {
        match &self.dsigma_dz {
            Some(f) => f(x, z),
            None => fd_jacobian(|w| self.sigma(x, w), z, FD_STEP),
        }
    }

    /// `∇b`, entry `(i,j) = ∂_j b^i`.
    pub fn db(&self, x: &Vector<D>) -> Matrix<D> {
        match &self.db {
            Some(f) => f(x),
            None => fd_jacobian(|y| self.drift(y), x, FD_STEP),
        }
    }

    pub fn has_analytic_derivatives(&self) -> bool {
        self.dsigma_dx.is_some() && self.dsigma_dz.is_some() && self.db.is_some()
    }

    /// The same set with all analytic derivative providers removed.
    pub fn finite_difference_only(&self) -> Self {
        let mut c = self.clone();
        c.dsigma_dx = None;
        c.dsigma_dz = None;
        c.db = None;
        c
    }

    /// `(I + ∇_xσ(x,z))^{-1}`.
    pub fn jump_inverse(&self, x: &Vector<D>, z: &Vector<D>) -> Result<Matrix<D>> {
        let m = Matrix::<D>::identity() + self.dsigma_dx(x, z);
        linalg::inverse(&m, "I + ∇xσ")
    }

    /// `Q(x,z) = (I + ∇_xσ)^{-1} - I`.
    pub fn q_matrix(&self, x: &Vector<D>, z: &Vector<D>) -> Result<Matrix<D>> {
        Ok(self.jump_inverse(x, z)? - Matrix::<D>::identity())
    }

    /// `U(x,z) = (I + ∇_xσ)^{-1} ∇_zσ`.
    pub fn u_matrix(&self, x: &Vector<D>, z: &Vector<D>) -> Result<Matrix<D>> {
        if self.state_independent {
            return Ok(self.dsigma_dz(x, z));
        }
        Ok(self.jump_inverse(x, z)? * self.dsigma_dz(x, z))
    }

    /// `B_1(x) = ∇_zσ(x,0)`.
    pub fn b1(&self, x: &Vector<D>) -> Matrix<D> {
        self.dsigma_dz(x, &Vector::<D>::zeros())
    }

    /// Solves `x + σ(x,z) = y` by the contraction `x ← y - σ(x,z)`.
    pub fn phi_inverse(&self, y: &Vector<D>, z: &Vector<D>) -> Result<Vector<D>> {
        if self.state_independent {
            return Ok(y - self.sigma(y, z));
        }
        let mut x = *y;
        for _ in 0..200 {
            let next = y - self.sigma(&x, z);
            let step = (next - x).amax();
            x = next;
            if step < 1e-13 * (1.0 + x.amax()) {
                return Ok(x);
            }
        }
        Err(Error::numerics(format!("φ^-1 did not converge at y = {y:?}, z = {z:?}")))
    }

    /// `hat σ(x,z) = σ(φ_z^{-1}(x), z)`.
    pub fn hat_sigma(&self, x: &Vector<D>, z: &Vector<D>) -> Result<Vector<D>> {
        if self.state_independent {
            return Ok(self.sigma(x, z));
        }
        Ok(self.sigma(&self.phi_inverse(x, z)?, z))
    }

    /// Checks the structural assumptions on a grid of states and the jumps of
    /// `model`'s node rule.
    pub fn validate(&self, model: &LevyModel<D>, grid: &[Vector<D>]) -> Result<()> {
        let zero = Vector::<D>::zeros();
        let probe = model.node_rule(model.trunc_low().max(1e-3 * model.delta()), model.delta(), 4, 4)?;
        let zs: Vec<Vector<D>> = probe.nodes.iter().map(|n| n.0).collect();
        for x in grid {
            let s0 = self.sigma(x, &zero);
            if s0.amax() > 1e-12 {
                return Err(Error::config(format!("{}: σ(x,0) = {s0:?} ≠ 0 at x = {x:?}", self.name)));
            }
            for z in &zs {
                let g = self.dsigma_dx(x, z);
                let nrm = linalg::sym_eigenvalues(&(g.transpose() * g)).last().copied().unwrap_or(0.0).max(0.0).sqrt();
                if nrm > 0.5 + 1e-12 {
                    return Err(Error::config(format!(
                        "{}: |∇xσ| = {nrm} exceeds 1/2 at x = {x:?}, z = {z:?}",
                        self.name
                    )));
                }
                let det = linalg::determinant(&(Matrix::<D>::identity() + g));
                if det < 0.5f64.powi(D as i32) - 1e-12 {
                    return Err(Error::config(format!("{}: det(I + ∇xσ) = {det} too small", self.name)));
                }
            }
            if self.compensator_free && !model.is_silent() {
                let comp = self.compensator(model, x)?;
                let scale = probe.integrate(|z| nalgebra::SVector::<f64, 1>::new(self.sigma(x, z).norm()))[0];
                if comp.amax() > 1e-8 * scale.max(1e-300) {
                    return Err(Error::config(format!(
                        "{}: declared compensator-free but ∫σν = {comp:?} at x = {x:?}",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// `∫_{trunc_low<|z|<δ} σ(x,z) ν(dz)` by antipodal node quadrature.
    pub fn compensator(&self, model: &LevyModel<D>, x: &Vector<D>) -> Result<Vector<D>> {
        let rule = model.node_rule(model.trunc_low().max(1e-12), model.delta(), 8, 8)?;
        Ok(rule.integrate(|z| self.sigma(x, z)))
    }
}

/// The reversed coefficients `(hat σ, hat b)` attached to a base set and the
/// truncated measure used by the forward simulation.
#[derive(Debug, Clone)]
pub struct ReversedCoefficients<const D: usize> {
    base: CoefficientSet<D>,
    rule: crate::levy::NodeRule<D>,
    trivial: bool,
}

/// Node-rule resolution used for `hat b`.
pub const HAT_B_ORDER: usize = 8;
pub const HAT_B_SPHERE: usize = 8;

impl<const D: usize> ReversedCoefficients<D> {
    pub fn base(&self) -> &CoefficientSet<D> {
        &self.base
    }

    pub fn hat_sigma(&self, x: &Vector<D>, z: &Vector<D>) -> Result<Vector<D>> {
        self.base.hat_sigma(x, z)
    }

    /// `hat b(x) = b(x) + ∫[σ(φ^{-1}(x,z),z) - σ(x,z)]ν(dz)`.
    pub fn hat_b(&self, x: &Vector<D>) -> Result<Vector<D>> {
        let b = self.base.drift(x);
        if self.trivial {
            return Ok(b);
        }
        let mut acc = Vector::<D>::zeros();
        for (z, w) in &self.rule.nodes {
            acc += (self.base.hat_sigma(x, z)? - self.base.sigma(x, z)) * *w;
        }
        Ok(b + acc)
    }

    /// `∫ hat σ(x,z) ν(dz)` on the same nodes.
    pub fn hat_sigma_integral(&self, x: &Vector<D>) -> Result<Vector<D>> {
        let mut acc = Vector::<D>::zeros();
        for (z, w) in &self.rule.nodes {
            acc += self.base.hat_sigma(x, z)? * *w;
        }
        Ok(acc)
    }

    /// Backward drift `-hat b + ∫hat σ dν`, fused on one pass over the nodes.
    pub fn backward_drift(&self, x: &Vector<D>) -> Result<Vector<D>> {
        let mut acc = -self.base.drift(x);
        for (z, w) in &self.rule.nodes {
            let hs = self.base.hat_sigma(x, z)?;
            acc -= (hs - self.base.sigma(x, z)) * *w;
            acc += hs * *w;
        }
        Ok(acc)
    }
}

/// `(hat σ, hat b)` with the integral over the truncated measure of `model`.
pub fn reversed_coefficients<const D: usize>(
    c: &CoefficientSet<D>,
    model: &LevyModel<D>,
) -> Result<ReversedCoefficients<D>> {
    let trivial = c.is_state_independent() || model.is_silent();
    let rule = if model.is_silent() {
        crate::levy::NodeRule { nodes: Vec::new() }
    } else {
        let lo = model.trunc_low();
        if lo <= 0.0 {
            return Err(Error::config("hat b needs the truncated measure (trunc_low > 0)"));
        }
        model.node_rule(lo, model.delta(), HAT_B_ORDER, HAT_B_SPHERE)?
    };
    Ok(ReversedCoefficients { base: c.clone(), rule, trivial })
}

/// Block coefficients `σ(x)z = (0, σ_0(x) z_2)` with `z = (z_1, z_2)`,
/// `z_1 ∈ R^{d1}`, `z_2 ∈ R^{d2}`.
pub struct BlockSigma<const D: usize> {
    pub d1: usize,
    pub sigma0: Arc<dyn Fn(&Vector<D>) -> nalgebra::DMatrix<f64> + Send + Sync>,
    pub inv_norm_bound: f64,
}

impl<const D: usize> BlockSigma<D> {
    pub fn new<F>(d1: usize, sigma0: F, inv_norm_bound: f64) -> Result<Self>
    where
        F: Fn(&Vector<D>) -> nalgebra::DMatrix<f64> + Send + Sync + 'static,
    {
        if d1 == 0 || d1 >= D {
            return Err(Error::config(format!("block split d1 = {d1} must lie in 1..{D}")));
        }
        Ok(BlockSigma { d1, sigma0: Arc::new(sigma0), inv_norm_bound })
    }

    pub fn d2(&self) -> usize {
        D - self.d1
    }

    /// The full `d×d` matrix `[[0,0],[0,σ_0(x)]]`.
    pub fn matrix(&self, x: &Vector<D>) -> Matrix<D> {
        let s0 = (self.sigma0)(x);
        let mut m = Matrix::<D>::zeros();
        for i in 0..self.d2() {
            for j in 0..self.d2() {
                m[(self.d1 + i, self.d1 + j)] = s0[(i, j)];
            }
        }
        m
    }

    /// Checks `‖σ_0(x)^{-1}‖_∞ ≤ inv_norm_bound` on a grid.
    pub fn check_inverse_bound(&self, grid: &[Vector<D>]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for x in grid {
            let s0 = (self.sigma0)(x);
            let inv = s0
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::Singularity(format!("σ_0 singular at x = {x:?}")))?;
            let n = (0..inv.nrows()).map(|i| inv.row(i).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
            worst = worst.max(n);
        }
        if worst > self.inv_norm_bound * (1.0 + 1e-12) {
            return Err(Error::config(format!("‖σ_0^-1‖ = {worst} exceeds bound {}", self.inv_norm_bound)));
        }
        Ok(worst)
    }

    /// Coefficients with this jump coupling and the given drift. `σ_0`
    /// is assumed state-independent when `constant` is set.
    pub fn into_coefficients<B>(self, name: &str, drift: B, constant: bool) -> CoefficientSet<D>
    where
        B: Fn(&Vector<D>) -> Vector<D> + Send + Sync + 'static,
    {
        let me = Arc::new(self);
        let m1 = me.clone();
        let m2 = me.clone();
        let c = CoefficientSet::new(name, move |x, z| m1.matrix(x) * z, drift)
            .with_dsigma_dz(move |x, _| m2.matrix(x))
            .linear_in_z()
            .compensator_free(true);
        if constant { c.state_independent() } else { c }
    }
}

fn scalar<const D: usize>(v: f64) -> Matrix<D> {
    Matrix::<D>::from_element(v)
}

/// Built-in families.
pub mod families {
    use super::*;

    /// `σ(x,z) = S z`, `b = 0`.
    pub fn constant<const D: usize>(s: Matrix<D>) -> CoefficientSet<D> {
        CoefficientSet::new("constant", move |_, z| s * z, |_| Vector::<D>::zeros())
            .with_dsigma_dz(move |_, _| s)
            .linear_drift(Matrix::<D>::zeros())
            .state_independent()
            .linear_in_z()
            .compensator_free(true)
            .with_higher_derivatives(HigherDerivatives::default())
    }

    /// `σ(x,z) = z`, `b = 0`.
    pub fn additive<const D: usize>() -> CoefficientSet<D> {
        let mut c = constant(Matrix::<D>::identity());
        c.name = "additive".into();
        c
    }

    /// `σ(x,z) = z`, `b(x) = A x`.
    pub fn linear<const D: usize>(a: Matrix<D>) -> CoefficientSet<D> {
        let mut c = additive::<D>().linear_drift(a);
        c.name = "linear".into();
        c
    }

    /// Kinetic benchmark in `d = 2`: `b = (x_2, 0)`, `σ(x,z) = (0, z_2)`.
    pub fn kinetic() -> CoefficientSet<2> {
        kinetic_scaled(1.0)
    }

    /// Kinetic benchmark with drift scaled by `c`.
    pub fn kinetic_scaled(c: f64) -> CoefficientSet<2> {
        let block = BlockSigma::<2>::new(1, |_| nalgebra::DMatrix::from_element(1, 1, 1.0), 1.0)
            .expect("valid split");
        let mut set = block
            .into_coefficients("kinetic", |_| Vector::<2>::zeros(), true)
            .linear_drift(Matrix::<2>::new(0.0, c, 0.0, 0.0))
            .with_higher_derivatives(HigherDerivatives::default());
        set.name = "kinetic".into();
        set
    }

    /// `d = 1`, `σ(x,z) = s x z`, `b(x) = -r x`.
    pub fn multiplicative(s: f64, r: f64) -> CoefficientSet<1> {
        let sv = s;
        CoefficientSet::new("multiplicative", move |x: &Vector<1>, z: &Vector<1>| Vector::<1>::new(sv * x[0] * z[0]), |_| {
            Vector::<1>::zeros()
        })
        .with_dsigma_dx(move |_, z| scalar::<1>(s * z[0]))
        .with_dsigma_dz(move |x, _| scalar::<1>(s * x[0]))
        .linear_drift(scalar::<1>(-r))
        .linear_in_z()
        .compensator_free(true)
        .with_higher_derivatives(HigherDerivatives::default())
    }

    /// `d = 1`, `σ(x,z) = s sin(x) z`, `b(x) = a cos(x)`.
    pub fn sine(s: f64, a: f64) -> CoefficientSet<1> {
        CoefficientSet::new(
            "sine",
            move |x: &Vector<1>, z: &Vector<1>| Vector::<1>::new(s * x[0].sin() * z[0]),
            move |x: &Vector<1>| Vector::<1>::new(a * x[0].cos()),
        )
        .with_dsigma_dx(move |x, z| scalar::<1>(s * x[0].cos() * z[0]))
        .with_dsigma_dz(move |x, _| scalar::<1>(s * x[0].sin()))
        .with_db(move |x| scalar::<1>(-a * x[0].sin()))
        .linear_in_z()
        .compensator_free(true)
        .with_higher_derivatives(HigherDerivatives::default())
    }

    /// `σ(x,z) = A(x) z` with a user-supplied smooth bounded `A`; derivatives
    /// in `x` by finite differences.
    pub fn separable<const D: usize, A, B>(name: &str, a: A, drift: B) -> CoefficientSet<D>
    where
        A: Fn(&Vector<D>) -> Matrix<D> + Send + Sync + Clone + 'static,
        B: Fn(&Vector<D>) -> Vector<D> + Send + Sync + 'static,
    {
        let a2 = a.clone();
        CoefficientSet::new(name, move |x, z| a(x) * z, drift)
            .with_dsigma_dz(move |x, _| a2(x))
            .linear_in_z()
            .compensator_free(true)
            .with_higher_derivatives(HigherDerivatives::default())
    }
}

#[cfg(test)]
mod tests {
    use super::families::*;
    use super::*;

    fn v1(x: f64) -> Vector<1> {
        Vector::<1>::new(x)
    }

    #[test]
    fn q_examples() {
        let c = additive::<2>();
        let x = Vector::<2>::new(0.3, -1.0);
        assert_eq!(c.q_matrix(&x, &Vector::<2>::new(0.1, 0.2)).unwrap(), Matrix::<2>::zeros());
        let s = sine(0.4, 0.5);
        assert!(s.q_matrix(&v1(std::f64::consts::FRAC_PI_2), &v1(0.01)).unwrap()[0].abs() < 1e-15);
        let m = multiplicative(0.4, 0.0);
        assert!((m.q_matrix(&v1(1.0), &v1(0.5)).unwrap()[0] + 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn u_examples() {
        let m = multiplicative(0.4, 0.0);
        let (x, z) = (1.7, 0.3);
        let u = m.u_matrix(&v1(x), &v1(z)).unwrap()[0];
        assert!((u - 0.4 * x / (1.0 + 0.4 * z)).abs() < 1e-14);
        assert_eq!(m.u_matrix(&v1(x), &v1(0.0)).unwrap(), m.b1(&v1(x)));
        assert_eq!(additive::<2>().u_matrix(&Vector::<2>::zeros(), &Vector::<2>::new(0.1, 0.1)).unwrap(), Matrix::<2>::identity());
    }

    #[test]
    fn phi_inverse_examples() {
        let m = multiplicative(0.4, 0.0);
        assert!((m.phi_inverse(&v1(1.2), &v1(0.5)).unwrap()[0] - 1.0).abs() < 1e-13);
        assert_eq!(m.phi_inverse(&v1(0.7), &v1(0.0)).unwrap()[0], 0.7);
        let c = constant(Matrix::<2>::new(1.0, 0.5, 0.0, 2.0));
        let z = Vector::<2>::new(0.1, -0.2);
        let y = Vector::<2>::new(1.0, 1.0);
        assert_eq!(c.phi_inverse(&y, &z).unwrap(), y - Matrix::<2>::new(1.0, 0.5, 0.0, 2.0) * z);
    }

    #[test]
    fn hat_coefficients() {
        let model = LevyModel::<1>::smooth(1.0, 1.0).unwrap();
        let c = additive::<1>();
        let r = reversed_coefficients(&c, &model).unwrap();
        assert_eq!(r.hat_b(&v1(0.3)).unwrap(), c.drift(&v1(0.3)));
        let m = multiplicative(0.4, 0.5);
        let rs = reversed_coefficients(&m, &model.clone().silenced()).unwrap();
        assert_eq!(rs.hat_b(&v1(1.0)).unwrap(), m.drift(&v1(1.0)));
        let r = reversed_coefficients(&m, &model).unwrap();
        let hs = r.hat_sigma(&v1(1.0), &v1(0.2)).unwrap()[0];
        assert!((hs - 0.08 / 1.08).abs() < 1e-13);
        let direct = model
            .integrate(
                |z| nalgebra::SVector::<f64, 1>::new(0.4 * z[0] / (1.0 + 0.4 * z[0]) - 0.4 * z[0]),
                model.trunc_low(),
                1.0,
                1,
            )
            .unwrap()[0];
        let got = r.hat_b(&v1(1.0)).unwrap()[0] - m.drift(&v1(1.0))[0];
        assert!((got - direct).abs() < 1e-8 * direct.abs(), "{got} vs {direct}");
    }

    #[test]
    fn analytic_derivatives_match_fd() {
        let s = sine(0.4, 0.5);
        let fd = s.finite_difference_only();
        for &(x, z) in &[(0.3, 0.1), (-2.0, -0.4), (1.1, 0.25)] {
            let (x, z) = (v1(x), v1(z));
            for (a, b) in [
                (s.dsigma_dx(&x, &z)[0], fd.dsigma_dx(&x, &z)[0]),
                (s.dsigma_dz(&x, &z)[0], fd.dsigma_dz(&x, &z)[0]),
                (s.db(&x)[0], fd.db(&x)[0]),
            ] {
                assert!((a - b).abs() <= 1e-6 * a.abs().max(1e-3));
            }
        }
    }

    #[test]
    fn validation_catches_violations() {
        let model = LevyModel::<1>::smooth(1.0, 1.0).unwrap();
        let grid: Vec<Vector<1>> = (-5..=5).map(|i| v1(i as f64 * 0.5)).collect();
        sine(0.4, 0.5).validate(&model, &grid).unwrap();
        multiplicative(0.4, 0.5).validate(&model, &grid).unwrap();
        let bad = multiplicative(1.5, 0.0);
        assert!(matches!(bad.validate(&model, &grid), Err(Error::Config(_))));
        let shifted = CoefficientSet::<1>::new("shift", |_, z| Vector::<1>::new(z[0] + 0.01), |_| Vector::<1>::zeros());
        assert!(shifted.validate(&model, &grid).is_err());
        let biased =
            CoefficientSet::<1>::new("biased", |_, z| Vector::<1>::new(z[0] * z[0]), |_| Vector::<1>::zeros())
                .compensator_free(true);
        assert!(biased.validate(&model, &grid).is_err());
    }

    #[test]
    fn block_sigma_zero_block() {
        let k = kinetic();
        let x = Vector::<2>::new(0.4, -3.0);
        let s = k.sigma(&x, &Vector::<2>::new(0.7, 0.2));
        assert_eq!(s[0], 0.0);
        assert_eq!(s[1], 0.2);
        let b = BlockSigma::<2>::new(1, |_| nalgebra::DMatrix::from_element(1, 1, 2.0), 0.5).unwrap();
        assert!((b.check_inverse_bound(&[x]).unwrap() - 0.5).abs() < 1e-15);
        assert!(BlockSigma::<2>::new(2, |_| nalgebra::DMatrix::from_element(0, 0, 1.0), 1.0).is_err());
    }

    #[test]
    fn higher_derivative_partial_is_fourth_order() {
        let h = HigherDerivatives::default();
        let f = |x: &Vector<1>| scalar::<1>(x[0].sin());
        let d = h.partial(&f, &v1(0.3), 0)[0];
        assert!((d - 0.3f64.cos()).abs() < 1e-8);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn phi_round_trip(x in -5.0..5.0f64, z in -1.0..1.0f64) {
                let c = sine(0.4, 0.5);
                let y = c.phi(&v1(x), &v1(z));
                let back = c.phi_inverse(&y, &v1(z)).unwrap();
                prop_assert!((back[0] - x).abs() < 1e-10);
                let fwd = c.phi(&c.phi_inverse(&v1(x), &v1(z)).unwrap(), &v1(z));
                prop_assert!((fwd[0] - x).abs() < 1e-10);
            }

            #[test]
            fn q_identity(x in -5.0..5.0f64, z in -1.0..1.0f64) {
                let c = multiplicative(0.4, 0.0);
                let q = c.q_matrix(&v1(x), &v1(z)).unwrap();
                let prod = (Matrix::<1>::identity() + q) * (Matrix::<1>::identity() + c.dsigma_dx(&v1(x), &v1(z)));
                prop_assert!((prod[0] - 1.0).abs() < 1e-12);
            }
        }
    }
}
