//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{Error, Matrix, Result, Vector};

/// Maximum absolute row sum.
pub fn norm_inf<const D: usize>(m: &Matrix<D>) -> f64 {
    (0..D).map(|i| (0..D).map(|j| m[(i, j)].abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a degree-20 Taylor
/// polynomial; used as an independent oracle, so no shortcuts.
pub fn expm<const D: usize>(a: &Matrix<D>) -> Matrix<D> {
    let nrm = norm_inf(a);
    let mut s = 0;
    while nrm / 2f64.powi(s) > 0.25 {
        s += 1;
    }
    let b = a / 2f64.powi(s);
    let mut term = Matrix::<D>::identity();
    let mut sum = Matrix::<D>::identity();
    for k in 1..=20 {
        term = term * b / k as f64;
        sum += term;
    }
    for _ in 0..s {
        sum = sum * sum;
    }
    sum
}

/// Inverse with a singularity check relative to the matrix scale
/// (Gauss-Jordan with partial pivoting).
pub fn inverse<const D: usize>(m: &Matrix<D>, what: &str) -> Result<Matrix<D>> {
    let scale = norm_inf(m).max(1e-300);
    let mut a = *m;
    let mut inv = Matrix::<D>::identity();
    let mut det = 1.0;
    for col in 0..D {
        let piv = (col..D).max_by(|&i, &j| a[(i, col)].abs().total_cmp(&a[(j, col)].abs())).unwrap_or(col);
        let p = a[(piv, col)];
        if !p.is_finite() || p.abs() <= 1e-14 * scale {
            return Err(Error::Singularity(format!("{what}: pivot {p:e} at column {col}")));
        }
        if piv != col {
            a.swap_rows(piv, col);
            inv.swap_rows(piv, col);
            det = -det;
        }
        det *= p;
        for k in 0..D {
            a[(col, k)] /= p;
            inv[(col, k)] /= p;
        }
        for i in 0..D {
            if i != col {
                let f = a[(i, col)];
                if f != 0.0 {
                    for k in 0..D {
                        a[(i, k)] -= f * a[(col, k)];
                        inv[(i, k)] -= f * inv[(col, k)];
                    }
                }
            }
        }
    }
    if !det.is_finite() || det.abs() <= 1e-14 * scale.powi(D as i32) {
        return Err(Error::Singularity(format!("{what}: determinant {det:e}")));
    }
    Ok(inv)
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn determinant<const D: usize>(m: &Matrix<D>) -> f64 {
    let mut a = *m;
    let mut det = 1.0;
    for col in 0..D {
        let piv = (col..D).max_by(|&i, &j| a[(i, col)].abs().total_cmp(&a[(j, col)].abs())).unwrap_or(col);
        let p = a[(piv, col)];
        if p == 0.0 {
            return 0.0;
        }
        if piv != col {
            a.swap_rows(piv, col);
            det = -det;
        }
        det *= p;
        for i in col + 1..D {
            let f = a[(i, col)] / p;
            for k in col..D {
                a[(i, k)] -= f * a[(col, k)];
            }
        }
    }
    det
}

fn symmetric_eigen<const D: usize>(m: &Matrix<D>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(DMatrix::from_column_slice(D, D, sym.as_slice()))
}

/// Smallest eigenvalue of a symmetric matrix and a unit eigenvector.
pub fn min_eigen<const D: usize>(m: &Matrix<D>) -> (f64, Vector<D>) {
    let eig = symmetric_eigen(m);
    let mut best = 0;
    for i in 1..D {
        if eig.eigenvalues[i] < eig.eigenvalues[best] {
            best = i;
        }
    }
    let v = Vector::<D>::from_fn(|i, _| eig.eigenvectors[(i, best)]);
    (eig.eigenvalues[best], v)
}

/// All eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues<const D: usize>(m: &Matrix<D>) -> Vec<f64> {
    let mut ev: Vec<f64> = symmetric_eigen(m).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Pseudo-inverse of a tall design matrix, so that least-squares
/// coefficients are `pinv * y`.
pub fn pseudo_inverse(design: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = design.clone().svd(true, true);
    let tol = 1e-12 * svd.singular_values.max();
    svd.pseudo_inverse(tol).map_err(|e| Error::numerics(format!("pseudo-inverse failed: {e}")))
}

pub fn lstsq(design: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(pseudo_inverse(design)? * y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expm_of_nilpotent_and_rotation() {
        let n = Matrix::<2>::new(0.0, 1.0, 0.0, 0.0);
        let e = expm(&(n * 3.0));
        assert!((e - Matrix::<2>::new(1.0, 3.0, 0.0, 1.0)).amax() < 1e-14);
        let r = Matrix::<2>::new(0.0, -1.0, 1.0, 0.0);
        let e = expm(&r);
        let (c, s) = (1f64.cos(), 1f64.sin());
        assert!((e - Matrix::<2>::new(c, -s, s, c)).amax() < 1e-14);
    }

    #[test]
    fn min_eigen_of_diagonal() {
        let m = Matrix::<2>::new(3.0, 0.0, 0.0, 0.5);
        let (l, v) = min_eigen(&m);
        assert!((l - 0.5).abs() < 1e-15);
        assert!((v[1].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn inverse_rejects_singular() {
        let m = Matrix::<2>::new(1.0, 2.0, 2.0, 4.0);
        assert!(matches!(inverse(&m, "test"), Err(Error::Singularity(_))));
    }
}
