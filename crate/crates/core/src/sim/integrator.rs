//! Fixed-step explicit integrators.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    Euler,
    #[default]
    Rk4,
}

impl Integrator {
    /// Advance `y' = f(t, y)` by one step of size `dt`.
    pub fn step<F>(self, mut f: F, t: f64, y: &DVector<f64>, dt: f64) -> Result<DVector<f64>>
    where
        F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
    {
        if !(dt > 0.0) {
            return Err(Error::Contract(format!("dt must be > 0, got {dt}")));
        }
        let next = match self {
            Integrator::Euler => y + f(t, y)? * dt,
            Integrator::Rk4 => {
                let half = 0.5 * dt;
                let k1 = f(t, y)?;
                let k2 = f(t + half, &(y + &k1 * half))?;
                let k3 = f(t + half, &(y + &k2 * half))?;
                let k4 = f(t + dt, &(y + &k3 * dt))?;
                y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
            }
        };
        if next.iter().all(|v| v.is_finite()) {
            Ok(next)
        } else {
            Err(Error::NonFinite {
                map: "integrated state",
            })
        }
    }

    /// Scalar version used by the excitation filter.
    pub fn step_scalar<F>(self, f: F, t: f64, y: f64, dt: f64) -> f64
    where
        F: Fn(f64, f64) -> f64,
    {
        match self {
            Integrator::Euler => y + dt * f(t, y),
            Integrator::Rk4 => {
                let half = 0.5 * dt;
                let k1 = f(t, y);
                let k2 = f(t + half, y + half * k1);
                let k3 = f(t + half, y + half * k2);
                let k4 = f(t + dt, y + dt * k3);
                y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay(_: f64, y: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(-y)
    }

    #[test]
    fn rk4_single_step() {
        let y = Integrator::Rk4
            .step(decay, 0.0, &DVector::from_element(1, 1.0), 0.1)
            .unwrap();
        // 1 - h + h^2/2 - h^3/6 + h^4/24
        assert!((y[0] - 0.904_837_5).abs() < 1e-12);
        assert!((y[0] - (-0.1f64).exp()).abs() < 1e-7);
    }

    #[test]
    fn euler_on_constant_field() {
        let y0 = DVector::from_row_slice(&[1.0, -2.0]);
        let y = Integrator::Euler
            .step(|_, y| Ok(DVector::zeros(y.len())), 0.0, &y0, 0.5)
            .unwrap();
        assert_eq!(y, y0);
    }

    #[test]
    fn rk4_long_run_matches_closed_form() {
        let mut y = DVector::from_element(1, 1.0);
        for k in 0..100 {
            y = Integrator::Rk4.step(decay, 0.1 * k as f64, &y, 0.1).unwrap();
        }
        // the one-step amplification factor of classical RK4
        let h: f64 = 0.1;
        let amp = 1.0 - h + h * h / 2.0 - h.powi(3) / 6.0 + h.powi(4) / 24.0;
        assert!(((y[0] - amp.powi(100)) / amp.powi(100)).abs() < 1e-12);
        let exact = (-10.0f64).exp();
        assert!(((y[0] - exact) / exact).abs() < 1e-5);
    }

    #[test]
    fn non_finite_state_is_reported() {
        let err = Integrator::Euler
            .step(
                |_, _| Ok(DVector::from_element(1, f64::NAN)),
                0.0,
                &DVector::zeros(1),
                0.1,
            )
            .unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
        assert!(Integrator::Rk4.step(decay, 0.0, &DVector::zeros(1), 0.0).is_err());
    }
}
