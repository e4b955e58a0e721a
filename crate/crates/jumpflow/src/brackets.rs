//! Drift bracket chain `B_1 = ∇_zσ(·,0)`, `B_{j+1} = b·∇B_j - (∇b ∘ B_j)` and
//! a grid certificate for the uniform Hörmander condition.

use crate::coeffs::CoefficientSet;
use crate::linalg;
use crate::par;
use crate::quad;
use crate::{Error, Matrix, Result, Vector};

/// Which side `∇b` multiplies `B_j` from in the second bracket term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Convention {
    /// `B_{j+1} = b·∇B_j - ∇b B_j`.
    #[default]
    NablaBLeft,
    /// `B_{j+1} = b·∇B_j - B_j ∇b`.
    BNablaRight,
}

impl Convention {
    pub fn as_str(&self) -> &'static str {
        match self {
            Convention::NablaBLeft => "NABLA_B_LEFT",
            Convention::BNablaRight => "B_NABLA_RIGHT",
        }
    }
}

/// Axis-aligned evaluation grid: `lo + k·spacing` up to `hi` on every axis.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec<const D: usize> {
    pub lo: Vector<D>,
    pub hi: Vector<D>,
    pub spacing: f64,
}

impl<const D: usize> GridSpec<D> {
    pub fn new(lo: Vector<D>, hi: Vector<D>, spacing: f64) -> Self {
        GridSpec { lo, hi, spacing }
    }

    pub fn points(&self) -> Result<Vec<Vector<D>>> {
        if !(self.spacing > 0.0) || (0..D).any(|i| self.hi[i] < self.lo[i]) {
            return Err(Error::config("bracket grid needs spacing > 0 and hi ≥ lo"));
        }
        let counts: Vec<usize> =
            (0..D).map(|i| ((self.hi[i] - self.lo[i]) / self.spacing + 1e-9).floor() as usize + 1).collect();
        let total: usize = counts.iter().product();
        let mut out = Vec::with_capacity(total);
        for mut flat in 0..total {
            let mut p = Vector::<D>::zeros();
            for i in 0..D {
                p[i] = self.lo[i] + (flat % counts[i]) as f64 * self.spacing;
                flat /= counts[i];
            }
            out.push(p);
        }
        Ok(out)
    }
}

/// `B_1, …, B_{j0}` at `x`.
pub fn brackets_at<const D: usize>(
    c: &CoefficientSet<D>,
    j0: usize,
    convention: Convention,
    x: &Vector<D>,
) -> Result<Vec<Matrix<D>>> {
    if j0 == 0 {
        return Err(Error::config("bracket depth j0 must be at least 1"));
    }
    let oracle = match c.higher_derivatives() {
        Some(h) => Some(h),
        None if j0 == 1 => None,
        None => return Err(Error::config(format!("{}: depth {j0} needs a higher-derivative oracle", c.name()))),
    };
    let mut out = Vec::with_capacity(j0);
    for j in 1..=j0 {
        out.push(bracket(c, j, convention, oracle, x));
    }
    Ok(out)
}

fn bracket<const D: usize>(
    c: &CoefficientSet<D>,
    j: usize,
    conv: Convention,
    oracle: Option<crate::coeffs::HigherDerivatives>,
    x: &Vector<D>,
) -> Matrix<D> {
    if j == 1 {
        return c.b1(x);
    }
    let h = oracle.expect("checked by caller");
    let prev = |y: &Vector<D>| bracket(c, j - 1, conv, oracle, y);
    let transport = h.directional(&prev, x, &c.drift(x));
    let bj = prev(x);
    let nb = c.db(x);
    match conv {
        Convention::NablaBLeft => transport - nb * bj,
        Convention::BNablaRight => transport - bj * nb,
    }
}

/// The chain evaluated on a grid.
#[derive(Debug, Clone)]
pub struct BracketChain<const D: usize> {
    pub depth: usize,
    pub convention: Convention,
    pub grid_spec: GridSpec<D>,
    pub points: Vec<Vector<D>>,
    pub fields: Vec<Vec<Matrix<D>>>,
    pub sphere_samples: usize,
}

/// Default number of covectors in the sampling cross-check.
pub const SPHERE_SAMPLES: usize = 512;

pub fn bracket_chain<const D: usize>(
    c: &CoefficientSet<D>,
    j0: usize,
    convention: Convention,
    grid: &GridSpec<D>,
) -> Result<BracketChain<D>> {
    let points = grid.points()?;
    let fields = par::map(points.len(), |i| brackets_at(c, j0, convention, &points[i]));
    let fields = fields.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(BracketChain { depth: j0, convention, grid_spec: grid.clone(), points, fields, sphere_samples: SPHERE_SAMPLES })
}

/// Outcome of the grid certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct UhReport<const D: usize> {
    pub c0: f64,
    pub witness_x: Vector<D>,
    pub witness_u: Vector<D>,
    /// Largest relative gap between the sampled covector minimum and the
    /// eigenvalue (normalized by `max(λ_min, 1e-12)`).
    pub sampling_gap: f64,
    /// Whether every grid point satisfied `λ_min ≤ sampled ≤ λ_min(1+10^-2)`
    /// (absolute slack `10^-12`).
    pub sampling_consistent: bool,
}

impl<const D: usize> BracketChain<D> {
    /// `Σ_{j≤j0} B_j B_j^T` at grid point `k`.
    pub fn gram(&self, k: usize) -> Matrix<D> {
        self.fields[k].iter().fold(Matrix::<D>::zeros(), |acc, b| acc + b * b.transpose())
    }

    /// `min_x λ_min(Σ B_j B_j^T)` with witness, plus the sphere cross-check.
    pub fn check_uh(&self) -> Result<UhReport<D>> {
        if self.points.is_empty() {
            return Err(Error::config("empty bracket grid"));
        }
        let covectors = quad::covector_samples::<D>(self.sphere_samples);
        let per = par::map(self.points.len(), |k| {
            let g = self.gram(k);
            let (lam, u) = linalg::min_eigen(&g);
            let sampled = covectors.iter().map(|u| (u.transpose() * g * u)[0]).fold(f64::INFINITY, f64::min);
            (lam, u, sampled)
        });
        let mut best = 0;
        let mut gap: f64 = 0.0;
        let mut consistent = true;
        for (k, (lam, _, sampled)) in per.iter().enumerate() {
            if *lam < per[best].0 {
                best = k;
            }
            let slack = 1e-12 * (1.0 + lam.abs());
            if *sampled < lam - slack || *sampled > lam * 1.01 + slack {
                consistent = false;
            }
            gap = gap.max((sampled - lam) / lam.abs().max(1e-12));
        }
        let (lam, u, _) = per[best];
        Ok(UhReport {
            c0: lam.max(0.0),
            witness_x: self.points[best],
            witness_u: u,
            sampling_gap: gap,
            sampling_consistent: consistent,
        })
    }
}

/// `max_x ‖B_2^{left} - B_2^{right}‖_∞` over the grid.
pub fn convention_discrepancy<const D: usize>(c: &CoefficientSet<D>, grid: &GridSpec<D>) -> Result<f64> {
    let points = grid.points()?;
    let mut worst: f64 = 0.0;
    for x in &points {
        let l = brackets_at(c, 2, Convention::NablaBLeft, x)?;
        let r = brackets_at(c, 2, Convention::BNablaRight, x)?;
        worst = worst.max(linalg::norm_inf(&(l[1] - r[1])));
    }
    Ok(worst)
}
