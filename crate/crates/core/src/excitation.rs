//! Alignment-triggered tangential excitation.
//!
//! When the nominal direction `LgV` and the safeguarding direction `LgB`
//! conflict, a first-order filter `p' = -alpha_t p + nu` is driven by the
//! trigger `nu = kappa max(0, cos theta0 - cos theta)` and its state scales a
//! direction orthogonal to the barrier gradient. The filter is exponentially
//! stable and `nu` is bounded, so the injected input has finite energy.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::integrator::Integrator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DirectionMode {
    /// `Pi_perp LgV` with `Pi_perp = I - LgB LgB^T / |LgB|^2`.
    #[default]
    Projection,
    /// `R_t grad B / |grad B|` with `R_t` the +90 degree planar rotation.
    Rotation2d,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExcitationConfig {
    pub enabled: bool,
    pub alpha_t: f64,
    pub k_t: f64,
    pub eps_reg: f64,
    pub kappa: f64,
    pub cos_theta0: f64,
    pub direction_mode: DirectionMode,
    /// Filter state at `t = 0`.
    pub p0: f64,
}

impl Default for ExcitationConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            alpha_t: 2.0,
            k_t: 0.5,
            eps_reg: 1e-4,
            kappa: 1.0,
            cos_theta0: 0.0,
            direction_mode: DirectionMode::Projection,
            p0: 0.0,
        }
    }
}

impl ExcitationConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha_t > 0.0
            && self.k_t >= 0.0
            && self.eps_reg > 0.0
            && self.kappa >= 0.0
            && (-1.0..=1.0).contains(&self.cos_theta0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid excitation config: {self:?}")))
        }
    }
}

/// Filter state and accumulated `int |u_t|^2 dt`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ExcitationState {
    pub p: f64,
    pub energy: f64,
}

/// Cosine between `LgV` and `LgB`; zero when either is shorter than `eps`.
pub fn alignment(lgv: &DVector<f64>, lgb: &DVector<f64>, eps: f64) -> f64 {
    let nv = lgv.norm();
    let nb = lgb.norm();
    if nv <= eps || nb <= eps {
        return 0.0;
    }
    (lgv.dot(lgb) / (nv * nb)).clamp(-1.0, 1.0)
}

/// Unit-ish direction orthogonal to the barrier direction.
///
/// In projection mode `reference` is `LgB`; in rotation mode it is the
/// planar barrier gradient. A vanishing reference gives the zero vector.
pub fn tangential_direction(cfg: &ExcitationConfig, lgv: &DVector<f64>, reference: &DVector<f64>) -> DVector<f64> {
    let nr2 = reference.norm_squared();
    if nr2.sqrt() <= cfg.eps_reg {
        return DVector::zeros(match cfg.direction_mode {
            DirectionMode::Projection => lgv.len(),
            DirectionMode::Rotation2d => reference.len(),
        });
    }
    match cfg.direction_mode {
        DirectionMode::Projection => {
            let mut t = lgv - reference * (reference.dot(lgv) / nr2);
            // one re-orthogonalisation pass removes the cancellation residue
            t -= reference * (reference.dot(&t) / nr2);
            let norm = t.norm();
            t / (norm + cfg.eps_reg)
        }
        DirectionMode::Rotation2d => {
            let nr = nr2.sqrt();
            DVector::from_row_slice(&[-reference[1] / nr, reference[0] / nr])
        }
    }
}

/// `kappa max(0, cos theta0 - cos theta)`.
pub fn trigger(cfg: &ExcitationConfig, cos_theta: f64) -> f64 {
    cfg.kappa * (cfg.cos_theta0 - cos_theta).max(0.0)
}

/// Right-hand side of the excitation filter.
pub fn filter_rate(cfg: &ExcitationConfig, p: f64, nu: f64) -> f64 {
    -cfg.alpha_t * p + nu
}

/// Advance the filter over `dt` with `nu` held and return `u_t` at the new state.
pub fn excitation_step(
    cfg: &ExcitationConfig,
    state: ExcitationState,
    nu: f64,
    direction: &DVector<f64>,
    dt: f64,
    integrator: Integrator,
) -> Result<(DVector<f64>, ExcitationState)> {
    if !(dt > 0.0) {
        return Err(Error::Contract(format!("dt must be > 0, got {dt}")));
    }
    let p = integrator.step_scalar(|_, p| filter_rate(cfg, p, nu), 0.0, state.p, dt);
    let u_t = direction * (cfg.k_t * p);
    let energy = state.energy + u_t.norm_squared() * dt;
    Ok((u_t, ExcitationState { p, energy }))
}

/// Accumulated excitation energy.
pub fn l2_energy(state: &ExcitationState) -> f64 {
    state.energy
}
