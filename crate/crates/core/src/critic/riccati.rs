//! Continuous algebraic Riccati equation by Newton–Kleinman iteration.
//!
//! The running cost carries a half on the control term, `x'Qx + 1/2 u'Ru`,
//! so the equation solved here is
//!
//! ```text
//! A'P + PA - 2 P B R^-1 B' P + Q = 0
//! ```
//!
//! with optimal feedback `u = -2 R^-1 B' P x`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 100;

/// Solve `A'X + XA = -C` through the vectorised (Kronecker) linear system.
pub fn lyapunov_solve(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let at = a.transpose();
    // vec(A'X) = (I (x) A') vec X, vec(XA) = (A' (x) I) vec X
    let op = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = -DMatrix::from_column_slice(n * n, 1, c.as_slice());
    let sol = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Init("Lyapunov operator is singular".into()))?;
    let x = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok((&x + x.transpose()) * 0.5)
}

fn is_hurwitz(a: &DMatrix<f64>) -> bool {
    a.complex_eigenvalues().iter().all(|l| l.re < 0.0)
}

/// Bass's stabilising gain for `(A, B)`.
fn initial_gain(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if is_hurwitz(a) {
        return Ok(DMatrix::zeros(b.ncols(), n));
    }
    let shift = a.norm() + 1.0;
    let shifted = a + DMatrix::identity(n, n) * shift;
    // (A + sI) Z + Z (A + sI)' = 2 B B'  <=>  M'Z + ZM = -C with M = (A + sI)'
    let z = lyapunov_solve(&shifted.transpose(), &(-(b * b.transpose() * 2.0)))?;
    let z_inv = z
        .try_inverse()
        .ok_or_else(|| Error::Init("pair (A, B) is not controllable; no initial gain".into()))?;
    Ok(b.transpose() * z_inv)
}

/// `A'P + PA - 2 P B R^-1 B' P + Q`.
pub fn care_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Init("R is singular".into()))?;
    Ok(a.transpose() * p + p * a - p * b * r_inv * b.transpose() * p * 2.0 + q)
}

/// Stabilising solution of the half-weighted CARE.
pub fn solve_care(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (b.ncols(), b.ncols()) {
        return Err(Error::Init("inconsistent Riccati dimensions".into()));
    }
    // half-weighted cost: effective input weight R / 2
    let r_eff = r * 0.5;
    let r_eff_inv = r_eff
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Init("R is singular".into()))?;

    let mut gain = initial_gain(a, b)?;
    let mut p = DMatrix::zeros(n, n);
    for iter in 0..MAX_ITERATIONS {
        let closed = a - b * &gain;
        let cost = q + gain.transpose() * &r_eff * &gain;
        let next = lyapunov_solve(&closed, &cost)?;
        let change = (&next - &p).norm();
        p = next;
        gain = &r_eff_inv * b.transpose() * &p;
        if change <= 1e-13 * (1.0 + p.norm()) && iter > 0 {
            return Ok(p);
        }
    }
    Err(Error::Init(format!(
        "Newton-Kleinman did not converge in {MAX_ITERATIONS} iterations"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn scalar_integrator() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let p = solve_care(&DMatrix::zeros(1, 1), &one, &one, &one).unwrap();
        assert_abs_diff_eq!(p[(0, 0)], 0.5f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn double_integrator_residual() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let q = DMatrix::identity(2, 2);
        let r = DMatrix::identity(1, 1);
        let p = solve_care(&a, &b, &q, &r).unwrap();
        assert!(care_residual(&a, &b, &q, &r, &p).unwrap().norm() < 1e-9);
        assert!(p.clone().cholesky().is_some());
        // closed loop is stable
        let k = b.transpose() * &p * 2.0;
        assert!(is_hurwitz(&(&a - &b * k)));
    }

    #[test]
    fn hurwitz_with_zero_cost() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.3, 0.0, -2.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let p = solve_care(&a, &b, &DMatrix::zeros(2, 2), &DMatrix::identity(1, 1)).unwrap();
        assert!(p.norm() < 1e-14);
    }

    #[test]
    fn lyapunov_identity() {
        let a = DMatrix::from_row_slice(3, 3, &[-1.0, 2.0, 0.0, 0.0, -3.0, 1.0, 0.5, 0.0, -2.0]);
        let c = DMatrix::from_row_slice(3, 3, &[2.0, 0.1, 0.0, 0.1, 1.0, 0.3, 0.0, 0.3, 4.0]);
        let x = lyapunov_solve(&a, &c).unwrap();
        let res = a.transpose() * &x + &x * &a + &c;
        assert!(res.norm() < 1e-12);
    }
}
