//! Primitive safety margins, soft-min aggregation, robustness-compensated
//! high-order safe sets and the barrier-Lyapunov function built on them.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plants::ControlAffinePlant;

/// A single constraint on the planar position (the first two state coordinates).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PrimitiveConstraint {
    /// Stay outside the disk: `h = |p - c|^2 - r^2`.
    DiskExterior { center: [f64; 2], radius: f64 },
    /// Stay inside the disk: `h = r^2 - |p - c|^2`.
    DiskInterior { center: [f64; 2], radius: f64 },
    /// Stay inside the box: `h = min_j (p_j - lo_j)(hi_j - p_j)`.
    BoxInterior { lower: [f64; 2], upper: [f64; 2] },
}

/// Margin of one primitive constraint with its gradient and Hessian on the full state.
#[derive(Debug, Clone)]
pub struct MarginEval {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

impl PrimitiveConstraint {
    pub fn eval(&self, x: &DVector<f64>) -> MarginEval {
        let n = x.len();
        let mut grad = DVector::zeros(n);
        let mut hessian = DMatrix::zeros(n, n);
        let value = match *self {
            PrimitiveConstraint::DiskExterior { center, radius }
            | PrimitiveConstraint::DiskInterior { center, radius } => {
                let sign = if matches!(self, PrimitiveConstraint::DiskExterior { .. }) {
                    1.0
                } else {
                    -1.0
                };
                let dx = x[0] - center[0];
                let dy = x[1] - center[1];
                grad[0] = sign * 2.0 * dx;
                grad[1] = sign * 2.0 * dy;
                hessian[(0, 0)] = sign * 2.0;
                hessian[(1, 1)] = sign * 2.0;
                sign * (dx * dx + dy * dy - radius * radius)
            }
            PrimitiveConstraint::BoxInterior { lower, upper } => {
                let faces: Vec<f64> = (0..2).map(|j| (x[j] - lower[j]) * (upper[j] - x[j])).collect();
                let j = if faces[0] <= faces[1] { 0 } else { 1 };
                grad[j] = upper[j] + lower[j] - 2.0 * x[j];
                hessian[(j, j)] = -2.0;
                faces[j]
            }
        };
        MarginEval { value, grad, hessian }
    }
}

/// Constraint family, aggregation sharpness and high-order parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetySpec {
    pub constraints: Vec<PrimitiveConstraint>,
    /// Soft-min sharpness.
    pub beta: f64,
    /// Relative degree of the constraints (1 or 2).
    #[serde(default = "default_order")]
    pub order: u8,
    /// Linear class-K gain of the high-order recursion.
    #[serde(default)]
    pub k_ho: f64,
    /// Barrier compensation weight `phi` in `- phi / h`.
    #[serde(default)]
    pub phi: f64,
    #[serde(default)]
    pub robust: bool,
}

fn default_order() -> u8 {
    1
}

impl SafetySpec {
    pub fn validate(&self) -> Result<()> {
        if self.constraints.is_empty() {
            return Err(Error::Config("safety spec has no constraints".into()));
        }
        if !(self.beta > 0.0) {
            return Err(Error::Config(format!("beta must be > 0, got {}", self.beta)));
        }
        if self.phi < 0.0 {
            return Err(Error::Config(format!("phi must be >= 0, got {}", self.phi)));
        }
        if self.order != 1 && self.order != 2 {
            return Err(Error::Config(format!(
                "relative degree {} is not supported (1 or 2)",
                self.order
            )));
        }
        Ok(())
    }

    /// Analytic margin and full-state gradient of constraint `index`.
    pub fn margin_and_gradient(&self, index: usize, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let c = self.constraints.get(index).ok_or_else(|| {
            Error::Contract(format!(
                "constraint index {index} out of range ({} constraints)",
                self.constraints.len()
            ))
        })?;
        let m = c.eval(x);
        Ok((m.value, m.grad))
    }

    /// Raw primitive margins `h_i(x)`.
    pub fn primitive_margins(&self, x: &DVector<f64>) -> Vec<f64> {
        self.constraints.iter().map(|c| c.eval(x).value).collect()
    }

    /// `min_i h_i(x)`.
    pub fn min_primitive_margin(&self, x: &DVector<f64>) -> f64 {
        self.primitive_margins(x).into_iter().fold(f64::INFINITY, f64::min)
    }

    fn compensation(&self) -> f64 {
        if self.robust {
            self.phi
        } else {
            0.0
        }
    }
}

/// `-(1/beta) ln sum exp(-beta a_i)`, evaluated with the minimum shifted out.
pub fn softmin(values: &[f64], beta: f64) -> Result<f64> {
    softmin_with_weights(values, beta).map(|(v, _)| v)
}

/// Soft-min value together with its partial derivatives (a probability vector).
pub fn softmin_with_weights(values: &[f64], beta: f64) -> Result<(f64, Vec<f64>)> {
    if values.is_empty() {
        return Err(Error::Contract("softmin of an empty list".into()));
    }
    if !(beta > 0.0) {
        return Err(Error::Contract(format!("softmin sharpness must be > 0, got {beta}")));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let exps: Vec<f64> = values.iter().map(|a| (-beta * (a - lo)).exp()).collect();
    let total: f64 = exps.iter().sum();
    let value = lo - total.ln() / beta;
    let weights = exps.into_iter().map(|e| e / total).collect();
    Ok((value, weights))
}

/// Aggregated (high-order) margin with its gradient and the per-constraint terms.
#[derive(Debug, Clone)]
pub struct PsiEval {
    pub psi: f64,
    pub grad: DVector<f64>,
    pub per_constraint: Vec<f64>,
}

/// Order 1: soft-min of `h_i`. Order 2: soft-min of
/// `psi_i = Lf h_i + k_ho h_i - phi / h_i` (compensation only when `robust`).
pub fn high_order_psi(spec: &SafetySpec, plant: &ControlAffinePlant, x: &DVector<f64>) -> Result<PsiEval> {
    let n = x.len();
    let mut terms = Vec::with_capacity(spec.constraints.len());
    let mut grads = Vec::with_capacity(spec.constraints.len());

    match spec.order {
        1 => {
            for c in &spec.constraints {
                let m = c.eval(x);
                terms.push(m.value);
                grads.push(m.grad);
            }
        }
        2 => {
            if !plant.has_velocity_split() {
                return Err(Error::Contract(format!(
                    "relative-degree-two safe set requested for plant '{}' without a position/velocity split",
                    plant.label()
                )));
            }
            let f = plant.drift(x);
            let jf = plant.drift_jacobian(x);
            let phi = spec.compensation();
            for c in &spec.constraints {
                let m = c.eval(x);
                if spec.robust && m.value <= 0.0 {
                    return Err(Error::BarrierDomain {
                        margin: m.value,
                        context: "primitive margin under barrier compensation",
                    });
                }
                let lf_h = m.grad.dot(&f);
                let mut psi_i = lf_h + spec.k_ho * m.value;
                let mut grad_i = &m.hessian * &f + jf.transpose() * &m.grad + spec.k_ho * &m.grad;
                if phi > 0.0 {
                    psi_i -= phi / m.value;
                    grad_i += (phi / (m.value * m.value)) * &m.grad;
                }
                terms.push(psi_i);
                grads.push(grad_i);
            }
        }
        other => {
            return Err(Error::Contract(format!("unsupported relative degree {other}")));
        }
    }

    let (psi, weights) = softmin_with_weights(&terms, spec.beta)?;
    let mut grad = DVector::zeros(n);
    for (w, g) in weights.iter().zip(&grads) {
        grad.axpy(*w, g, 1.0);
    }
    Ok(PsiEval {
        psi,
        grad,
        per_constraint: terms,
    })
}

/// Shaping of the barrier numerator `y(x) = 1 - exp(-a_y |x|^p_y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierParams {
    pub a_y: f64,
    pub p_y: f64,
    /// `|x|` is evaluated as `sqrt(|x|^2 + eps_y^2)`.
    #[serde(default = "default_eps_y")]
    pub eps_y: f64,
}

fn default_eps_y() -> f64 {
    1e-8
}

impl Default for BarrierParams {
    fn default() -> Self {
        Self {
            a_y: 0.1,
            p_y: 0.5,
            eps_y: 1e-8,
        }
    }
}

impl BarrierParams {
    pub fn validate(&self) -> Result<()> {
        if self.a_y > 0.0 && self.p_y > 0.0 && self.eps_y > 0.0 {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "barrier params must be positive, got a_y={} p_y={} eps_y={}",
                self.a_y, self.p_y, self.eps_y
            )))
        }
    }

    /// Numerator value and gradient.
    pub fn shaping(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        let r2 = x.norm_squared() + self.eps_y * self.eps_y;
        let r = r2.sqrt();
        let decay = (-self.a_y * r.powf(self.p_y)).exp();
        let y = 1.0 - decay;
        // d/dx r^p = p r^(p-2) x
        let scale = decay * self.a_y * self.p_y * r.powf(self.p_y - 2.0);
        (y, x * scale)
    }
}

#[derive(Debug, Clone)]
pub struct BarrierEval {
    /// `B = y / psi`.
    pub value: f64,
    pub grad: DVector<f64>,
    /// The aggregated margin the barrier is built on.
    pub margin: PsiEval,
}

/// `B(x) = y(x) / psi(x)` and its gradient.
pub fn blf_eval(
    spec: &SafetySpec,
    params: &BarrierParams,
    plant: &ControlAffinePlant,
    x: &DVector<f64>,
) -> Result<BarrierEval> {
    let margin = high_order_psi(spec, plant, x)?;
    blf_from_margin(params, x, margin)
}

pub fn blf_from_margin(params: &BarrierParams, x: &DVector<f64>, margin: PsiEval) -> Result<BarrierEval> {
    let psi = margin.psi;
    if !(psi > 0.0) {
        return Err(Error::BarrierDomain {
            margin: psi,
            context: "aggregate safety margin",
        });
    }
    let (y, grad_y) = params.shaping(x);
    let value = y / psi;
    let grad = grad_y / psi - &margin.grad * (y / (psi * psi));
    Ok(BarrierEval { value, grad, margin })
}

/// Two exterior disks centred at `center +/- d_offset R(theta) e1`.
pub fn lens_safe_set(center: [f64; 2], d_offset: f64, theta: f64, radius: f64, beta: f64) -> Result<SafetySpec> {
    if !(radius > 0.0) {
        return Err(Error::Contract(format!("disk radius must be > 0, got {radius}")));
    }
    let (s, c) = theta.sin_cos();
    let off = [d_offset * c, d_offset * s];
    let constraints = vec![
        PrimitiveConstraint::DiskExterior {
            center: [center[0] + off[0], center[1] + off[1]],
            radius,
        },
        PrimitiveConstraint::DiskExterior {
            center: [center[0] - off[0], center[1] - off[1]],
            radius,
        },
    ];
    Ok(SafetySpec {
        constraints,
        beta,
        order: 1,
        k_ho: 0.0,
        phi: 0.0,
        robust: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plants::{plant_by_name, PlantKind};
    use approx::assert_abs_diff_eq;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    #[test]
    fn softmin_examples() {
        assert_eq!(softmin(&[5.0], 12.0).unwrap(), 5.0);
        let two = softmin(&[1.0, 1.0], 12.0).unwrap();
        assert_abs_diff_eq!(two, 1.0 - 2f64.ln() / 12.0, epsilon = 1e-14);
        assert_abs_diff_eq!(two, 0.942_24, epsilon = 1e-5);
        let mixed = softmin(&[0.1, 10.0], 12.0).unwrap();
        assert!(mixed <= 0.1 && mixed >= 0.1 - 2f64.ln() / 12.0);
        assert!(matches!(softmin(&[], 12.0), Err(Error::Contract(_))));
    }

    #[test]
    fn softmin_survives_large_arguments() {
        let s = softmin(&[1e4, 2e4, 1e4], 50.0).unwrap();
        assert!(s.is_finite());
        assert_abs_diff_eq!(s, 1e4 - 2f64.ln() / 50.0, epsilon = 1e-9);
    }

    #[test]
    fn disk_margin_examples() {
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
        let (h, g) = spec.margin_and_gradient(0, &v(&[0.0, 0.0])).unwrap();
        assert_abs_diff_eq!(h, 11.5, epsilon = 1e-14);
        assert_eq!(g.as_slice(), &[7.0, 1.0]);
        let (h, _) = spec.margin_and_gradient(0, &v(&[-3.5, 0.5])).unwrap();
        assert_abs_diff_eq!(h, 0.0, epsilon = 1e-14);
        assert!(spec.margin_and_gradient(1, &v(&[0.0, 0.0])).is_err());
    }

    #[test]
    fn position_constraint_on_four_state_plant_pads_velocity() {
        let c = PrimitiveConstraint::DiskExterior {
            center: [0.0, 0.0],
            radius: 1.0,
        };
        let m = c.eval(&v(&[2.0, 0.0, 0.3, -0.4]));
        assert_eq!(m.grad.as_slice(), &[4.0, 0.0, 0.0, 0.0]);
    }

    fn ho_spec(robust: bool) -> SafetySpec {
        SafetySpec {
            constraints: vec![PrimitiveConstraint::DiskExterior {
                center: [0.0, 0.0],
                radius: 1.0,
            }],
            beta: 12.0,
            order: 2,
            k_ho: 2.0,
            phi: 0.2,
            robust,
        }
    }

    #[test]
    fn high_order_psi_examples() {
        let plant = plant_by_name("double_integrator_4d").unwrap();
        let x = v(&[2.0, 0.0, 1.0, 0.0]);
        let on = high_order_psi(&ho_spec(true), &plant, &x).unwrap();
        assert_abs_diff_eq!(on.psi, 4.0 + 6.0 - 0.2 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(on.psi, 9.933_33, epsilon = 1e-5);
        let off = high_order_psi(&ho_spec(false), &plant, &x).unwrap();
        assert_abs_diff_eq!(off.psi, 10.0, epsilon = 1e-12);

        // h = 1 with zero velocity
        let still = v(&[2f64.sqrt(), 0.0, 0.0, 0.0]);
        let psi = high_order_psi(&ho_spec(true), &plant, &still).unwrap();
        assert_abs_diff_eq!(psi.psi, 1.8, epsilon = 1e-12);
    }

    #[test]
    fn compensated_set_rejects_unsafe_state() {
        let plant = plant_by_name("double_integrator_4d").unwrap();
        let inside = v(&[0.5, 0.0, 0.0, 0.0]);
        assert!(matches!(
            high_order_psi(&ho_spec(true), &plant, &inside),
            Err(Error::BarrierDomain { .. })
        ));
        assert!(high_order_psi(&ho_spec(false), &plant, &inside).is_ok());
    }

    #[test]
    fn second_order_needs_velocity_split() {
        let plant = plant_by_name("tanh_rd1").unwrap();
        assert!(matches!(
            high_order_psi(&ho_spec(true), &plant, &v(&[3.0, 0.0])),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn barrier_vanishes_at_origin() {
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
        let plant = plant_by_name("tanh_rd1").unwrap();
        let b = blf_eval(&spec, &BarrierParams::default(), &plant, &v(&[0.0, 0.0])).unwrap();
        assert!(b.value.abs() < 1e-4);
        assert_abs_diff_eq!(b.margin.psi, 11.5, epsilon = 1e-12);
        let tight = BarrierParams {
            eps_y: 1e-300,
            ..BarrierParams::default()
        };
        let b = blf_eval(&spec, &tight, &plant, &v(&[0.0, 0.0])).unwrap();
        assert_eq!(b.value, 0.0);
    }

    #[test]
    fn barrier_outside_domain_is_an_error() {
        let spec = lens_safe_set([-2.0, 2.0], 1.2, 45f64.to_radians(), 1.0, 12.0).unwrap();
        let plant = crate::plants::ControlAffinePlant::new(PlantKind::SingleIntegrator2d);
        let c = match spec.constraints[0] {
            PrimitiveConstraint::DiskExterior { center, .. } => center,
            _ => unreachable!(),
        };
        let err = blf_eval(&spec, &BarrierParams::default(), &plant, &v(&c)).unwrap_err();
        assert!(matches!(err, Error::BarrierDomain { .. }));
    }

    #[test]
    fn lens_geometry() {
        let spec = lens_safe_set([-2.0, 2.0], 1.2, 45f64.to_radians(), 1.0, 12.0).unwrap();
        let centers: Vec<[f64; 2]> = spec
            .constraints
            .iter()
            .map(|c| match c {
                PrimitiveConstraint::DiskExterior { center, .. } => *center,
                _ => unreachable!(),
            })
            .collect();
        assert_abs_diff_eq!(centers[0][0], -1.151_47, epsilon = 1e-5);
        assert_abs_diff_eq!(centers[0][1], 2.848_53, epsilon = 1e-5);
        assert_abs_diff_eq!(centers[1][0], -2.848_53, epsilon = 1e-5);
        assert_abs_diff_eq!(centers[1][1], 1.151_47, epsilon = 1e-5);

        let degenerate = lens_safe_set([-2.0, 2.0], 0.0, 0.0, 1.0, 12.0).unwrap();
        assert_eq!(degenerate.constraints[0], degenerate.constraints[1]);
        let h = softmin(&degenerate.primitive_margins(&v(&[-2.0, 2.0])), 12.0).unwrap();
        assert!(h < 0.0);
        assert!(lens_safe_set([0.0, 0.0], 1.0, 0.0, 0.0, 12.0).is_err());
    }
}
