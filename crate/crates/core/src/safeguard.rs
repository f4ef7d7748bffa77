//! Safeguarding controller, the barrier-regulating multiplier subsystem and
//! the extended dynamics `zeta = [x; lambda - lambda_star]`.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plants::ControlAffinePlant;
use crate::safesets::{blf_eval, BarrierParams, SafetySpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MultiplierMode {
    #[default]
    Constant,
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MultiplierConfig {
    pub mode: MultiplierMode,
    /// Multiplier used in constant mode.
    pub lambda_const: f64,
    /// Desired steady value; the critic sees `lambda - lambda_star`.
    pub lambda_star: f64,
    pub lambda_min: f64,
    pub delta_lambda: f64,
    /// Early-warning margin threshold.
    pub h0: f64,
    pub delta_h: f64,
    pub lambda_max: f64,
    /// Linear class-K gain of both multiplier CBFs.
    pub k_lambda: f64,
    pub q_lambda: f64,
    pub r_v: f64,
    /// Apply `R^-1` in the safeguarding term (off by default).
    pub use_r_inverse: bool,
}

impl Default for MultiplierConfig {
    fn default() -> Self {
        Self {
            mode: MultiplierMode::Constant,
            lambda_const: 1.0,
            lambda_star: 1.0,
            lambda_min: 0.2,
            delta_lambda: 4.0,
            h0: 1.0,
            delta_h: 3.0,
            lambda_max: 1e6,
            k_lambda: 5.0,
            q_lambda: 1.0,
            r_v: 1.0,
            use_r_inverse: false,
        }
    }
}

impl MultiplierConfig {
    pub fn is_adaptive(&self) -> bool {
        self.mode == MultiplierMode::Adaptive
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            MultiplierMode::Constant => {
                if self.lambda_const < 0.0 {
                    return Err(Error::Config(format!(
                        "lambda_const must be >= 0, got {}",
                        self.lambda_const
                    )));
                }
            }
            MultiplierMode::Adaptive => {
                if !(self.lambda_min > 0.0) {
                    return Err(Error::Config("lambda_min must be > 0".into()));
                }
                if !(self.lambda_star > 0.0 && self.lambda_max > self.lambda_star) {
                    return Err(Error::Config(format!(
                        "need lambda_max > lambda_star > 0, got lambda_max={} lambda_star={}",
                        self.lambda_max, self.lambda_star
                    )));
                }
                if !(self.delta_h > 0.0) {
                    return Err(Error::Config("delta_h must be > 0".into()));
                }
                if !(self.k_lambda > 0.0 && self.r_v > 0.0 && self.q_lambda >= 0.0) {
                    return Err(Error::Config("k_lambda and r_v must be > 0, q_lambda >= 0".into()));
                }
            }
        }
        Ok(())
    }
}

/// `u_s = -lambda g(x)^T grad B`, optionally premultiplied by `R^-1`.
pub fn safeguard_control(
    grad_b: &DVector<f64>,
    g: &DMatrix<f64>,
    lambda: f64,
    r_inverse: Option<&DMatrix<f64>>,
) -> DVector<f64> {
    let lgb = g.transpose() * grad_b;
    match r_inverse {
        Some(r_inv) => r_inv * lgb * (-lambda),
        None => lgb * (-lambda),
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `lambda_min + delta_lambda * sigmoid((h0 - h) / delta_h)`.
pub fn lambda_ref(cfg: &MultiplierConfig, h: f64) -> f64 {
    cfg.lambda_min + cfg.delta_lambda * sigmoid((cfg.h0 - h) / cfg.delta_h)
}

/// Gradient of `lambda_ref` through the margin gradient.
pub fn lambda_ref_gradient(cfg: &MultiplierConfig, h: f64, grad_h: &DVector<f64>) -> DVector<f64> {
    let s = sigmoid((cfg.h0 - h) / cfg.delta_h);
    grad_h * (-cfg.delta_lambda * s * (1.0 - s) / cfg.delta_h)
}

/// Result of clamping the virtual input into the admissible window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VirtualInput {
    pub v: f64,
    pub lower: f64,
    pub upper: f64,
    pub feasible: bool,
}

/// Clamp `v_des` into `[v_lo, v_hi]` where the lower bound keeps
/// `lambda >= lambda_ref(x)` and the upper bound keeps `lambda <= lambda_max`.
/// An empty window resolves to its midpoint.
pub fn admissible_v(
    cfg: &MultiplierConfig,
    lambda: f64,
    lambda_ref_value: f64,
    grad_lambda_ref: &DVector<f64>,
    xdot: &DVector<f64>,
    v_des: f64,
) -> VirtualInput {
    let lower = grad_lambda_ref.dot(xdot) - cfg.k_lambda * (lambda - lambda_ref_value);
    let upper = cfg.k_lambda * (cfg.lambda_max - lambda);
    if lower <= upper {
        VirtualInput {
            v: v_des.clamp(lower, upper),
            lower,
            upper,
            feasible: true,
        }
    } else {
        warn!("multiplier window infeasible: v_lo={lower:.4e} > v_hi={upper:.4e} at lambda={lambda:.4}");
        VirtualInput {
            v: 0.5 * (lower + upper),
            lower,
            upper,
            feasible: false,
        }
    }
}

/// Plant state together with the multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedState {
    pub x: DVector<f64>,
    pub lambda: f64,
}

impl ExtendedState {
    pub fn lambda_tilde(&self, cfg: &MultiplierConfig) -> f64 {
        self.lambda - cfg.lambda_star
    }

    /// The critic coordinates: `[x; lambda~]` in adaptive mode, `x` otherwise.
    pub fn zeta(&self, cfg: &MultiplierConfig) -> DVector<f64> {
        if cfg.is_adaptive() {
            let n = self.x.len();
            let mut z = DVector::zeros(n + 1);
            z.rows_mut(0, n).copy_from(&self.x);
            z[n] = self.lambda_tilde(cfg);
            z
        } else {
            self.x.clone()
        }
    }

    pub fn from_zeta(zeta: &DVector<f64>, n: usize, cfg: &MultiplierConfig) -> Self {
        let x = zeta.rows(0, n).into_owned();
        let lambda = if cfg.is_adaptive() {
            zeta[n] + cfg.lambda_star
        } else {
            cfg.lambda_const
        };
        Self { x, lambda }
    }
}

/// `F_zeta`, `G_zeta` and `Omega_zeta` of the (disturbed) extended system.
#[derive(Debug, Clone)]
pub struct ExtendedModel {
    pub f_zeta: DVector<f64>,
    pub g_zeta: DMatrix<f64>,
    pub omega_zeta: DMatrix<f64>,
    /// Safeguarding input embedded in the drift.
    pub u_s: DVector<f64>,
}

impl ExtendedModel {
    /// `F + G [u; v] + Omega d` (the `v` entry is ignored in constant mode).
    pub fn derivative(&self, u: &DVector<f64>, v: f64, d: &DVector<f64>) -> Result<DVector<f64>> {
        let mu = self.stack_input(u, v);
        if d.len() != self.omega_zeta.ncols() {
            return Err(Error::Contract(format!(
                "disturbance has dimension {}, expected {}",
                d.len(),
                self.omega_zeta.ncols()
            )));
        }
        Ok(&self.f_zeta + &self.g_zeta * mu + &self.omega_zeta * d)
    }

    pub fn stack_input(&self, u: &DVector<f64>, v: f64) -> DVector<f64> {
        let cols = self.g_zeta.ncols();
        if cols == u.len() {
            u.clone()
        } else {
            let mut mu = DVector::zeros(cols);
            mu.rows_mut(0, u.len()).copy_from(u);
            mu[cols - 1] = v;
            mu
        }
    }
}

/// Build the extended model at `state` given the barrier gradient and the
/// disturbance gain acting on the plant states.
pub fn extended_model(
    plant: &ControlAffinePlant,
    cfg: &MultiplierConfig,
    state: &ExtendedState,
    grad_b: &DVector<f64>,
    omega_x: &DMatrix<f64>,
    r_inverse: Option<&DMatrix<f64>>,
) -> ExtendedModel {
    let x = &state.x;
    let n = plant.state_dim();
    let m = plant.input_dim();
    let g = plant.input_map(x);
    let r_inv = if cfg.use_r_inverse { r_inverse } else { None };
    let u_s = safeguard_control(grad_b, &g, state.lambda, r_inv);
    let f_xs = plant.drift(x) + &g * &u_s;

    if cfg.is_adaptive() {
        let mut f_zeta = DVector::zeros(n + 1);
        f_zeta.rows_mut(0, n).copy_from(&f_xs);
        let mut g_zeta = DMatrix::zeros(n + 1, m + 1);
        g_zeta.view_mut((0, 0), (n, m)).copy_from(&g);
        g_zeta[(n, m)] = 1.0;
        let mut omega_zeta = DMatrix::zeros(n + 1, omega_x.ncols());
        omega_zeta.view_mut((0, 0), (n, omega_x.ncols())).copy_from(omega_x);
        ExtendedModel {
            f_zeta,
            g_zeta,
            omega_zeta,
            u_s,
        }
    } else {
        ExtendedModel {
            f_zeta: f_xs,
            g_zeta: g,
            omega_zeta: omega_x.clone(),
            u_s,
        }
    }
}

/// Evaluate the barrier at `zeta.x`, build the extended model and return the
/// extended derivative for inputs `(u, v)` and disturbance `d`.
#[allow(clippy::too_many_arguments)]
pub fn assemble_extended(
    plant: &ControlAffinePlant,
    spec: &SafetySpec,
    params: &BarrierParams,
    cfg: &MultiplierConfig,
    zeta: &ExtendedState,
    u: &DVector<f64>,
    v: f64,
    d: &DVector<f64>,
) -> Result<(DVector<f64>, ExtendedModel)> {
    let barrier = blf_eval(spec, params, plant, &zeta.x)?;
    let omega = plant.disturbance_map(&zeta.x);
    let model = extended_model(plant, cfg, zeta, &barrier.grad, &omega, None);
    let derivative = model.derivative(u, v, d)?;
    Ok((derivative, model))
}

/// KKT multiplier `max(-grad B^T (f + g u_o) / R_bg, 0)` with
/// `u_o = -R^-1 g^T grad V`. Diagnostic only.
pub fn optimal_lambda_diagnostic(
    grad_b: &DVector<f64>,
    grad_v: &DVector<f64>,
    plant: &ControlAffinePlant,
    x: &DVector<f64>,
    r: &DMatrix<f64>,
) -> Result<f64> {
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Contract("R is singular".into()))?;
    let g = plant.input_map(x);
    let lgb = g.transpose() * grad_b;
    let r_bg = lgb.dot(&(&r_inv * &lgb));
    if !(r_bg > 1e-12) {
        return Err(Error::UndefinedMultiplier { r_bg });
    }
    let u_o = -(&r_inv * (g.transpose() * grad_v));
    let flow = plant.drift(x) + &g * u_o;
    Ok((-grad_b.dot(&flow) / r_bg).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plants::plant_by_name;
    use crate::safesets::{lens_safe_set, PrimitiveConstraint};
    use approx::assert_abs_diff_eq;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    fn adaptive() -> MultiplierConfig {
        MultiplierConfig {
            mode: MultiplierMode::Adaptive,
            lambda_star: 1.0,
            lambda_min: 0.2,
            delta_lambda: 4.0,
            h0: 1.0,
            delta_h: 3.0,
            lambda_max: 20.0,
            k_lambda: 1.0,
            q_lambda: 2.0,
            r_v: 0.5,
            ..Default::default()
        }
    }

    #[test]
    fn safeguard_examples() {
        let eye = DMatrix::identity(2, 2);
        assert_eq!(safeguard_control(&v(&[1.0, -2.0]), &eye, 0.0, None).norm(), 0.0);
        let us = safeguard_control(&v(&[1.0, -2.0]), &eye, 0.2, None);
        assert_abs_diff_eq!(us[0], -0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(us[1], 0.4, epsilon = 1e-15);

        let di = plant_by_name("double_integrator_4d").unwrap();
        let g = di.input_map(&v(&[0.0; 4]));
        let us = safeguard_control(&v(&[5.0, 6.0, 7.0, 8.0]), &g, 0.5, None);
        assert_eq!(us.as_slice(), &[-3.5, -4.0]);
    }

    #[test]
    fn safeguard_is_linear_in_lambda() {
        let g = DMatrix::from_row_slice(2, 2, &[0.3, -1.2, 0.7, 2.0]);
        let gb = v(&[0.11, -3.7]);
        let one = safeguard_control(&gb, &g, 0.37, None);
        let two = safeguard_control(&gb, &g, 0.74, None);
        assert_eq!(two, one * 2.0);
    }

    #[test]
    fn r_inverse_toggle() {
        let eye = DMatrix::identity(2, 2);
        let r_inv = DMatrix::from_diagonal(&v(&[0.5, 2.0]));
        let us = safeguard_control(&v(&[1.0, 1.0]), &eye, 1.0, Some(&r_inv));
        assert_eq!(us.as_slice(), &[-0.5, -2.0]);
    }

    #[test]
    fn lambda_ref_examples() {
        let cfg = adaptive();
        assert_abs_diff_eq!(lambda_ref(&cfg, 1.0), 2.2, epsilon = 1e-14);
        assert_abs_diff_eq!(lambda_ref(&cfg, 1e6), 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(lambda_ref(&cfg, -1e6), 4.2, epsilon = 1e-12);
        let mut prev = f64::INFINITY;
        for i in 0..200 {
            let h = -20.0 + 0.2 * i as f64;
            let l = lambda_ref(&cfg, h);
            assert!(l < prev && l > cfg.lambda_min && l < cfg.lambda_min + cfg.delta_lambda);
            prev = l;
        }
    }

    #[test]
    fn lambda_ref_gradient_matches_finite_difference() {
        let cfg = adaptive();
        let spec = lens_safe_set([-2.0, 2.0], 1.2, 0.8, 1.0, 12.0).unwrap();
        let h_of = |x: &DVector<f64>| crate::safesets::softmin(&spec.primitive_margins(x), 12.0).unwrap();
        let x = v(&[-3.1, 0.4]);
        let plant = plant_by_name("single_integrator_2d").unwrap();
        let psi = crate::safesets::high_order_psi(&spec, &plant, &x).unwrap();
        let grad = lambda_ref_gradient(&cfg, psi.psi, &psi.grad);
        let eps = 1e-6;
        for j in 0..2 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += eps;
            xm[j] -= eps;
            let fd = (lambda_ref(&cfg, h_of(&xp)) - lambda_ref(&cfg, h_of(&xm))) / (2.0 * eps);
            assert_abs_diff_eq!(grad[j], fd, epsilon = 1e-8);
        }
    }

    #[test]
    fn admissible_v_examples() {
        let cfg = adaptive();
        let zero = v(&[0.0, 0.0]);
        let slack = admissible_v(&cfg, 5.0, 0.3, &zero, &zero, 0.1);
        assert_eq!(slack.v, 0.1);

        // grad lambda_ref . xdot = 0.5 at lambda = lambda_ref
        let lower = admissible_v(&cfg, 2.0, 2.0, &v(&[0.5, 0.0]), &v(&[1.0, 0.0]), -3.0);
        assert_abs_diff_eq!(lower.v, 0.5, epsilon = 1e-15);

        let upper = admissible_v(&cfg, cfg.lambda_max, 0.3, &zero, &zero, 1.0);
        assert_eq!(upper.v, 0.0);
    }

    #[test]
    fn infeasible_window_resolves_to_midpoint() {
        let cfg = adaptive();
        let out = admissible_v(&cfg, 20.0, 25.0, &v(&[0.0, 0.0]), &v(&[0.0, 0.0]), 0.0);
        assert!(!out.feasible);
        assert_abs_diff_eq!(out.v, 0.5 * (out.lower + out.upper), epsilon = 1e-15);
    }

    #[test]
    fn extended_structure() {
        let plant = plant_by_name("tanh_rd1").unwrap();
        let spec = SafetySpec {
            constraints: vec![PrimitiveConstraint::DiskExterior {
                center: [-3.5, -0.5],
                radius: 1.0,
            }],
            beta: 12.0,
            order: 1,
            k_ho: 0.0,
            phi: 0.0,
            robust: false,
        };
        let cfg = adaptive();
        let x = v(&[0.7, -1.3]);
        let zero_lambda = ExtendedState {
            x: x.clone(),
            lambda: 0.0,
        };
        let (_, model) = assemble_extended(
            &plant,
            &spec,
            &BarrierParams::default(),
            &cfg,
            &zero_lambda,
            &v(&[0.0, 0.0]),
            0.0,
            &v(&[0.0, 0.0]),
        )
        .unwrap();
        let f = plant.drift(&x);
        assert_eq!(model.f_zeta.rows(0, 2), f.rows(0, 2));
        assert_eq!(model.f_zeta[2], 0.0);
        assert_eq!(model.g_zeta.shape(), (3, 3));
        assert_eq!(model.g_zeta[(2, 0)], 0.0);
        assert_eq!(model.g_zeta[(0, 2)], 0.0);
        assert_eq!(model.g_zeta[(2, 2)], 1.0);
        assert!(model.omega_zeta.row(2).iter().all(|&w| w == 0.0));

        let state = ExtendedState {
            x: x.clone(),
            lambda: 1.7,
        };
        let (xdot, model) = assemble_extended(
            &plant,
            &spec,
            &BarrierParams::default(),
            &cfg,
            &state,
            &v(&[0.3, 0.1]),
            -0.25,
            &v(&[0.05, 0.0]),
        )
        .unwrap();
        let b = blf_eval(&spec, &BarrierParams::default(), &plant, &x).unwrap();
        let expect = f - &b.grad * 1.7 + v(&[0.3, 0.1]) - v(&[0.05, 0.0]);
        assert_abs_diff_eq!((xdot.rows(0, 2) - expect).norm(), 0.0, epsilon = 1e-14);
        assert_eq!(xdot[2], -0.25);
        assert_eq!(model.u_s, -b.grad * 1.7);
    }

    #[test]
    fn optimal_lambda_examples() {
        let plant = plant_by_name("single_integrator_2d").unwrap();
        let r = DMatrix::identity(2, 2);
        let x = v(&[0.0, 0.0]);
        // f + g u_o = -grad V = [-2, 0]
        let l = optimal_lambda_diagnostic(&v(&[1.0, 0.0]), &v(&[2.0, 0.0]), &plant, &x, &r).unwrap();
        assert_abs_diff_eq!(l, 2.0, epsilon = 1e-15);
        let away = optimal_lambda_diagnostic(&v(&[1.0, 0.0]), &v(&[-2.0, 0.0]), &plant, &x, &r).unwrap();
        assert_eq!(away, 0.0);
        let ortho = optimal_lambda_diagnostic(&v(&[1.0, 0.0]), &v(&[0.0, 3.0]), &plant, &x, &r).unwrap();
        assert_eq!(ortho, 0.0);
        assert!(matches!(
            optimal_lambda_diagnostic(&v(&[0.0, 0.0]), &v(&[1.0, 0.0]), &plant, &x, &r),
            Err(Error::UndefinedMultiplier { .. })
        ));
    }

    #[test]
    fn optimal_lambda_satisfies_complementary_slackness() {
        let plant = plant_by_name("tanh_rd1").unwrap();
        let r = DMatrix::from_diagonal(&v(&[1.0, 2.0]));
        let r_inv = r.clone().try_inverse().unwrap();
        let x = v(&[0.4, -0.9]);
        let grad_v = v(&[3.0, -1.0]);
        for scale in [1.0, 2.0] {
            let grad_b = v(&[1.5, 0.8]) * scale;
            let lam = optimal_lambda_diagnostic(&grad_b, &grad_v, &plant, &x, &r).unwrap();
            assert!(lam > 0.0);
            let g = plant.input_map(&x);
            // the multiplier as stated is the stationary point of the input
            // u_o + lam R^-1 g' grad B
            let u = -(&r_inv * (g.transpose() * (&grad_v - &grad_b * lam)));
            let slack = lam * grad_b.dot(&(plant.drift(&x) + &g * u));
            assert!(slack.abs() < 1e-8, "slack {slack}");
        }
    }
}
