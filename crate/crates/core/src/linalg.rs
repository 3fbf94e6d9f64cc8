//! Thin bridge between ndarray storage and faer factorizations.

use faer::linalg::solvers::SolverCore;
use faer::{Mat, Side};
use ndarray::Array2;

use crate::error::{Error, Result};

fn to_faer(a: &Array2<f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn from_faer(m: faer::MatRef<'_, f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m.read(i, j))
}

/// Eigen-decomposition of a symmetric matrix; eigenvalues ascending,
/// eigenvectors in the columns of the returned matrix.
pub fn symmetric_eigen(a: &Array2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    if a.nrows() != a.ncols() {
        return Err(Error::ShapeMismatch(
            "eigen-decomposition needs a square matrix".into(),
        ));
    }
    let evd = to_faer(a).selfadjoint_eigendecomposition(Side::Lower);
    let s = evd.s().column_vector();
    let values: Vec<f64> = (0..a.nrows()).map(|i| s.read(i)).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    Ok((values, from_faer(evd.u())))
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(a: &Array2<f64>) -> Result<Vec<f64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::ShapeMismatch(
            "eigenvalues need a square matrix".into(),
        ));
    }
    let mut v = to_faer(a).selfadjoint_eigenvalues(Side::Lower);
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Inverse of a general square matrix via partially pivoted LU.
pub fn inverse(a: &Array2<f64>) -> Result<Array2<f64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::ShapeMismatch("inverse needs a square matrix".into()));
    }
    let inv = from_faer(to_faer(a).partial_piv_lu().inverse().as_ref());
    if inv.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    Ok(inv)
}

/// Cholesky factor of a small symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct SmallCholesky {
    n: usize,
    l: Vec<f64>,
}

impl SmallCholesky {
    pub fn new(a: &Array2<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::ShapeMismatch(
                "Cholesky needs a square matrix".into(),
            ));
        }
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if s <= 0.0 || !s.is_finite() {
                        return Err(Error::InvalidParameter(
                            "matrix is not positive definite".into(),
                        ));
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Ok(Self { n, l })
    }

    pub fn log_det(&self) -> f64 {
        (0..self.n).map(|i| 2.0 * self.l[i * self.n + i].ln()).sum()
    }

    /// `x^T A^{-1} x`.
    pub fn inv_quad(&self, x: &[f64]) -> f64 {
        let n = self.n;
        let mut y = [0.0f64; 8];
        let mut heap;
        let y: &mut [f64] = if n <= 8 {
            &mut y[..n]
        } else {
            heap = vec![0.0; n];
            &mut heap
        };
        let mut q = 0.0;
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.l[i * n + k] * y[k];
            }
            y[i] = s / self.l[i * n + i];
            q += y[i] * y[i];
        }
        q
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn eigen_reconstructs_matrix() {
        let a = array![[2.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 4.0]];
        let (vals, vecs) = symmetric_eigen(&a).unwrap();
        let recon = vecs
            .dot(&Array2::from_diag(&ndarray::Array1::from(vals)))
            .dot(&vecs.t());
        for (x, y) in recon.iter().zip(a.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn inverse_of_two_by_two() {
        let inv = inverse(&array![[2.0, -1.0], [-1.0, 2.0]]).unwrap();
        let expected = array![[2.0, 1.0], [1.0, 2.0]] / 3.0;
        for (x, y) in inv.iter().zip(expected.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-14);
        }
        assert!(inverse(&array![[1.0, 1.0], [1.0, 1.0]]).is_err());
    }

    #[test]
    fn cholesky_quadratic_form_and_determinant() {
        let a = array![[4.0, 2.0], [2.0, 3.0]];
        let c = SmallCholesky::new(&a).unwrap();
        assert_abs_diff_eq!(c.log_det(), 8.0f64.ln(), epsilon = 1e-14);
        // A^{-1} = [[3, -2], [-2, 4]] / 8
        let x = [1.0, 2.0];
        assert_abs_diff_eq!(c.inv_quad(&x), (3.0 - 8.0 + 16.0) / 8.0, epsilon = 1e-14);
        assert!(SmallCholesky::new(&array![[1.0, 2.0], [2.0, 1.0]]).is_err());
    }
}
