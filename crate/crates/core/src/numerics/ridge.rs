//! Closed-form ridge regression.
//!
//! The loss on a shard of `n` rows is `(1/n)·Σ(yᵢ − xᵢᵀw)² + λ·wᵀw`, so the
//! minimizer solves `(XᵀX + nλI) w = Xᵀy`. With `λ > 0` the system is SPD and
//! goes through Cholesky; with `λ = 0` the least-squares problem is solved on
//! `X` directly by Householder QR with column pivoting.
//!
//! Columns listed as unpenalized (an intercept, typically) get no shift.

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};

/// Condition estimate above which an unregularized system is rejected.
pub const MAX_CONDITION: f64 = 1e12;

pub fn ridge_solve(x: &Matrix, y: &[f64], lambda: f64) -> Result<Vector> {
    ridge_solve_with(x, y, lambda, &[])
}

/// `ridge_solve` leaving the columns in `unpenalized` out of `λ·wᵀw`.
pub fn ridge_solve_with(x: &Matrix, y: &[f64], lambda: f64, unpenalized: &[usize]) -> Result<Vector> {
    if let Some(&j) = unpenalized.iter().find(|&&j| j >= x.cols()) {
        return Err(Error::DimensionMismatch(format!("unpenalized column {j} of {}", x.cols())));
    }
    if x.rows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} rows, response has {} entries",
            x.rows(),
            y.len()
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidSpec(format!("lambda must be >= 0, got {lambda}")));
    }
    if x.cols() == 0 {
        return Ok(Vector::zeros(0));
    }
    if lambda > 0.0 && x.rows() > 0 {
        solve_normal_equations(x, y, x.rows() as f64 * lambda, unpenalized)
    } else {
        solve_least_squares(x, y)
    }
}

/// Gradient of the ridge loss at `w`; used for diagnostics and tests.
pub fn ridge_gradient(x: &Matrix, y: &[f64], lambda: f64, w: &[f64]) -> Result<Vector> {
    ridge_gradient_with(x, y, lambda, w, &[])
}

pub fn ridge_gradient_with(x: &Matrix, y: &[f64], lambda: f64, w: &[f64], unpenalized: &[usize]) -> Result<Vector> {
    let fitted = x.mat_vec(w)?;
    let n = x.rows() as f64;
    let mut grad = vec![0.0; x.cols()];
    for (row, (&yi, &fi)) in x.iter_rows().zip(y.iter().zip(fitted.iter())) {
        let r = yi - fi;
        for (g, &xij) in grad.iter_mut().zip(row) {
            *g -= 2.0 / n * xij * r;
        }
    }
    for (j, (g, &wj)) in grad.iter_mut().zip(w).enumerate() {
        if !unpenalized.contains(&j) {
            *g += 2.0 * lambda * wj;
        }
    }
    Vector::new(grad)
}

fn solve_normal_equations(x: &Matrix, y: &[f64], shift: f64, unpenalized: &[usize]) -> Result<Vector> {
    let p = x.cols();
    // Lower triangle of XᵀX + shift·I, row-major p×p.
    let mut a = vec![0.0; p * p];
    let mut b = vec![0.0; p];
    for (row, &yi) in x.iter_rows().zip(y) {
        for j in 0..p {
            let xj = row[j];
            if xj == 0.0 {
                continue;
            }
            b[j] += xj * yi;
            let dst = &mut a[j * p..j * p + j + 1];
            for (d, &xk) in dst.iter_mut().zip(&row[..=j]) {
                *d += xj * xk;
            }
        }
    }
    for j in 0..p {
        if !unpenalized.contains(&j) {
            a[j * p + j] += shift;
        }
    }

    // In-place Cholesky, a = L Lᵀ.
    for j in 0..p {
        let mut diag = a[j * p + j];
        for k in 0..j {
            diag -= a[j * p + k] * a[j * p + k];
        }
        if !(diag > 0.0) {
            return Err(Error::SingularSystem {
                condition: f64::INFINITY,
            });
        }
        let ljj = diag.sqrt();
        a[j * p + j] = ljj;
        for i in j + 1..p {
            let mut v = a[i * p + j];
            for k in 0..j {
                v -= a[i * p + k] * a[j * p + k];
            }
            a[i * p + j] = v / ljj;
        }
    }

    // L z = b, then Lᵀ w = z.
    for i in 0..p {
        let mut v = b[i];
        for k in 0..i {
            v -= a[i * p + k] * b[k];
        }
        b[i] = v / a[i * p + i];
    }
    for i in (0..p).rev() {
        let mut v = b[i];
        for k in i + 1..p {
            v -= a[k * p + i] * b[k];
        }
        b[i] = v / a[i * p + i];
    }
    Vector::new(b)
}

fn solve_least_squares(x: &Matrix, y: &[f64]) -> Result<Vector> {
    let (m, n) = x.shape();
    if m < n {
        return Err(Error::SingularSystem {
            condition: f64::INFINITY,
        });
    }
    // Column-major working copy.
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| x.column(j).into_vec()).collect();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rhs = y.to_vec();
    let mut diag = vec![0.0; n];

    for k in 0..n {
        let (pivot, _) = (k..n)
            .map(|j| (j, cols[j][k..].iter().map(|v| v * v).sum::<f64>()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        cols.swap(k, pivot);
        perm.swap(k, pivot);

        let norm = cols[k][k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::SingularSystem {
                condition: f64::INFINITY,
            });
        }
        let alpha = if cols[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = cols[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|t| t * t).sum();
        if vnorm2 > 0.0 {
            for col in cols.iter_mut().skip(k + 1) {
                let proj: f64 = v.iter().zip(&col[k..]).map(|(a, b)| a * b).sum();
                let f = 2.0 * proj / vnorm2;
                for (c, &vi) in col[k..].iter_mut().zip(&v) {
                    *c -= f * vi;
                }
            }
            let proj: f64 = v.iter().zip(&rhs[k..]).map(|(a, b)| a * b).sum();
            let f = 2.0 * proj / vnorm2;
            for (c, &vi) in rhs[k..].iter_mut().zip(&v) {
                *c -= f * vi;
            }
        }
        cols[k][k] = alpha;
        diag[k] = alpha.abs();
    }

    let largest = diag.iter().cloned().fold(0.0, f64::max);
    let smallest = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition = largest / smallest;
    if !(condition <= MAX_CONDITION) {
        return Err(Error::SingularSystem { condition });
    }

    let mut z = vec![0.0; n];
    for i in (0..n).rev() {
        let mut v = rhs[i];
        for j in i + 1..n {
            v -= cols[j][i] * z[j];
        }
        z[i] = v / cols[i][i];
    }
    let mut w = vec![0.0; n];
    for (k, &orig) in perm.iter().enumerate() {
        w[orig] = z[k];
    }
    Vector::new(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Plain gradient descent on the ridge loss, run until the step stalls.
    fn gradient_descent_oracle(x: &Matrix, y: &[f64], lambda: f64) -> Vec<f64> {
        let n = x.rows() as f64;
        // Lipschitz bound of the gradient: 2(‖X‖_F² / n + λ).
        let frob: f64 = x.as_slice().iter().map(|v| v * v).sum();
        let step = 1.0 / (2.0 * (frob / n + lambda));
        let mut w = vec![0.0; x.cols()];
        for _ in 0..200_000 {
            let mut grad = vec![0.0; x.cols()];
            for (row, &yi) in x.iter_rows().zip(y) {
                let r = yi - row.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
                for (g, &xij) in grad.iter_mut().zip(row) {
                    *g -= 2.0 / n * xij * r;
                }
            }
            for (g, &wj) in grad.iter_mut().zip(&w) {
                *g += 2.0 * lambda * wj;
            }
            let gnorm: f64 = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            for (wj, g) in w.iter_mut().zip(&grad) {
                *wj -= step * g;
            }
            if gnorm < 1e-15 {
                break;
            }
        }
        w
    }

    #[test]
    fn identity_design_recovers_response() {
        let w = ridge_solve(&Matrix::identity(3), &[1.0, 2.0, 3.0], 0.0).unwrap();
        for (a, b) in w.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_response_gives_zero_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = Matrix::new(5, 2, data).unwrap();
        let w = ridge_solve(&x, &[0.0; 5], 0.1).unwrap();
        assert_eq!(w.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn small_ridge_matches_gradient_descent() {
        let x = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]).unwrap();
        let y = [1.0, 1.0, 2.0];
        let w = ridge_solve(&x, &y, 0.5).unwrap();
        let oracle = gradient_descent_oracle(&x, &y, 0.5);
        // Frozen from the oracle: w = (2/3, 2/3).
        for (a, b) in w.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
            assert!((a - 2.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn least_squares_matches_gradient_descent() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = Matrix::new(10, 4, data).unwrap();
        let y: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w = ridge_solve(&x, &y, 0.0).unwrap();
        let oracle = gradient_descent_oracle(&x, &y, 0.0);
        for (a, b) in w.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-6 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn square_system_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = (0..25).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = Matrix::new(5, 5, data).unwrap();
        let y: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w = ridge_solve(&x, &y, 0.0).unwrap();
        let fitted = x.mat_vec(&w).unwrap();
        let resid: f64 = fitted.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let ynorm: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(resid <= 1e-8 * ynorm);
    }

    #[test]
    fn singular_without_regularization() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]]).unwrap();
        assert!(matches!(
            ridge_solve(&x, &[1.0, 2.0, 3.0], 0.0),
            Err(Error::SingularSystem { .. })
        ));
        // Regularization makes it solvable.
        assert!(ridge_solve(&x, &[1.0, 2.0, 3.0], 1e-3).is_ok());
        // Underdetermined.
        assert!(matches!(
            ridge_solve(&Matrix::zeros(1, 2), &[1.0], 0.0),
            Err(Error::SingularSystem { .. })
        ));
    }

    #[test]
    fn shape_errors() {
        assert!(matches!(
            ridge_solve(&Matrix::identity(2), &[1.0], 0.0),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(ridge_solve(&Matrix::identity(2), &[1.0, 1.0], -1.0).is_err());
    }

    #[test]
    fn deterministic_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let data = (0..60).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = Matrix::new(20, 3, data).unwrap();
        let y: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
        for lambda in [0.0, 0.01] {
            let a = ridge_solve(&x, &y, lambda).unwrap();
            let b = ridge_solve(&x, &y, lambda).unwrap();
            assert!(a.iter().zip(b.iter()).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }
}
