//! Small dense linear-algebra helpers shared by the analysis code.
//!
//! Vectorization is column-major throughout: `vec(S)[r + c * n] = S[(r, c)]`,
//! which is the convention under which `vec(A S B) = (Bᵀ ⊗ A) vec(S)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = DMatrix::zeros(ar * br, ac * bc);
    for j in 0..ac {
        for i in 0..ar {
            let s = a[(i, j)];
            if s == 0.0 {
                continue;
            }
            for q in 0..bc {
                for p in 0..br {
                    out[(i * br + p, j * bc + q)] = s * b[(p, q)];
                }
            }
        }
    }
    out
}

/// Column-major vectorization.
pub fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_of`] for a square `n × n` matrix.
pub fn unvec(v: &[f64], n: usize) -> DMatrix<f64> {
    assert_eq!(v.len(), n * n, "unvec length");
    DMatrix::from_column_slice(n, n, v)
}

/// Largest eigenvalue modulus of a general square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Power iteration on a linear operator given as a closure.
///
/// Returns the modulus estimate `‖A x‖ / ‖x‖` once two successive estimates
/// agree to `rel_tol`. Complex or tied dominant eigenvalues can prevent
/// convergence; that is reported as [`Error::NoConvergence`].
pub fn power_iteration(
    dim: usize,
    apply: impl Fn(&[f64], &mut [f64]),
    rel_tol: f64,
    max_iter: usize,
) -> Result<f64> {
    let mut x = vec![1.0 / (dim as f64).sqrt(); dim];
    // A positive start vector can be orthogonal to the dominant mode only by
    // accident; perturb it deterministically.
    for (i, xi) in x.iter_mut().enumerate() {
        *xi *= 1.0 + 1e-3 * ((i * 7919 % 101) as f64 / 101.0);
    }
    let mut y = vec![0.0; dim];
    let mut prev = f64::NAN;
    let mut change = f64::INFINITY;
    for _ in 0..max_iter {
        let nx = norm(&x);
        apply(&x, &mut y);
        let ny = norm(&y);
        if ny == 0.0 {
            return Ok(0.0);
        }
        let est = ny / nx;
        change = ((est - prev) / est).abs();
        if change < rel_tol {
            return Ok(est);
        }
        prev = est;
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / ny;
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: change,
    })
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Matrix with every entry finite and symmetric to `tol`.
pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square()
        && (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kron_small() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = DMatrix::from_row_slice(1, 2, &[0.0, 5.0]);
        let k = kron(&a, &b);
        let expect = DMatrix::from_row_slice(2, 4, &[0.0, 5.0, 0.0, 10.0, 0.0, 15.0, 0.0, 20.0]);
        assert_eq!(k, expect);
    }

    #[test]
    fn vec_identity_abc() {
        // vec(A S B) = (Bᵀ ⊗ A) vec(S)
        let a = DMatrix::from_fn(3, 3, |i, j| (i * 3 + j) as f64 - 2.5);
        let s = DMatrix::from_fn(3, 3, |i, j| ((i + 2 * j) % 5) as f64);
        let b = DMatrix::from_fn(3, 3, |i, j| 1.0 / (1.0 + i as f64 + j as f64));
        let lhs = vec_of(&(&a * &s * &b));
        let rhs = kron(&b.transpose(), &a) * vec_of(&s);
        assert!((lhs - rhs).amax() < 1e-12);
    }

    #[test]
    fn power_iteration_diagonal() {
        let d = [0.3, -0.9, 0.5];
        let rho = power_iteration(
            3,
            |x, y| {
                for i in 0..3 {
                    y[i] = d[i] * x[i];
                }
            },
            1e-12,
            10_000,
        )
        .unwrap();
        assert!((rho - 0.9).abs() < 1e-9);
    }

    #[test]
    fn spectral_radius_rotation() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -0.5, 0.5, 0.0]);
        assert!((spectral_radius(&m) - 0.5).abs() < 1e-12);
    }
}
