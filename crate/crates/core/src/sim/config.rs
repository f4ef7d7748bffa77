//! Scenario configuration and its TOML / JSON loaders.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::critic::{CostWeights, CriticConfig, WeightInit};
use crate::error::{Error, Result};
use crate::excitation::ExcitationConfig;
use crate::plants::{ControlAffinePlant, DisturbanceKind, DisturbanceSignal, PlantKind};
use crate::safeguard::{ExtendedState, MultiplierConfig};
use crate::safesets::{high_order_psi, BarrierParams, SafetySpec};
use crate::sim::integrator::Integrator;

/// Which disturbance channel the critic's H-infinity term acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum HinfChannel {
    /// No disturbance term in the Hamiltonian.
    #[default]
    None,
    /// The plant's own disturbance map.
    Plant,
    /// The tangential excitation direction, as a single column.
    Tangential,
}

/// Deliberate faults used by mutation smoke tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    FlipSafeguardSign,
}

/// Diagonal running-cost weights on the plant state and input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostConfig {
    pub q: Vec<f64>,
    pub r: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub plant: PlantKind,
    pub safety: SafetySpec,
    #[serde(default)]
    pub barrier: BarrierParams,
    #[serde(default)]
    pub multiplier: MultiplierConfig,
    #[serde(default)]
    pub excitation: ExcitationConfig,
    #[serde(default)]
    pub critic: CriticConfig,
    #[serde(default)]
    pub disturbance: DisturbanceSignal,
    #[serde(default)]
    pub hinf_channel: HinfChannel,
    pub cost: CostConfig,
    pub x0: Vec<f64>,
    /// Additional initial states run by multi-start presets.
    #[serde(default)]
    pub extra_starts: Vec<Vec<f64>>,
    #[serde(default = "default_lambda0")]
    pub lambda0: f64,
    pub horizon: f64,
    pub dt: f64,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default = "default_trap_radius")]
    pub trap_radius: f64,
    #[serde(default = "default_stall_tol")]
    pub stall_tol: f64,
    #[serde(default = "default_iss_tol")]
    pub iss_tol: f64,
    /// Keep a weight snapshot every this many steps.
    #[serde(default = "default_w_every")]
    pub w_log_every: usize,
    #[serde(default)]
    pub fault: Option<Fault>,
}

fn default_lambda0() -> f64 {
    1.0
}

fn default_trap_radius() -> f64 {
    1.0
}

fn default_stall_tol() -> f64 {
    1e-3
}

fn default_iss_tol() -> f64 {
    1e-6
}

fn default_w_every() -> usize {
    10
}

impl ScenarioConfig {
    pub fn plant(&self) -> ControlAffinePlant {
        ControlAffinePlant::new(self.plant)
    }

    /// Number of integration steps; `horizon / dt` must be an integer.
    pub fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.horizon > 0.0) {
            return Err(Error::Config(format!(
                "horizon and dt must be > 0, got T={} dt={}",
                self.horizon, self.dt
            )));
        }
        let ratio = self.horizon / self.dt;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-6 * ratio.max(1.0) {
            return Err(Error::Config(format!(
                "horizon {} is not an integer multiple of dt {}",
                self.horizon, self.dt
            )));
        }
        Ok(steps as usize)
    }

    /// Initial state of the extended system.
    pub fn initial_state(&self, x0: &[f64]) -> ExtendedState {
        let lambda = if self.multiplier.is_adaptive() {
            self.lambda0
        } else {
            self.multiplier.lambda_const
        };
        ExtendedState {
            x: x0.to_vec().into(),
            lambda,
        }
    }

    /// Critic coordinate dimension.
    pub fn zeta_dim(&self) -> usize {
        self.plant().state_dim() + usize::from(self.multiplier.is_adaptive())
    }

    pub fn cost_weights(&self) -> Result<CostWeights> {
        let mut q = self.cost.q.clone();
        let mut r = self.cost.r.clone();
        if self.multiplier.is_adaptive() {
            q.push(self.multiplier.q_lambda);
            r.push(self.multiplier.r_v);
        }
        CostWeights::from_diagonals(&q, &r)
    }

    /// All initial states: `x0` followed by `extra_starts`.
    pub fn starts(&self) -> Vec<Vec<f64>> {
        let mut out = vec![self.x0.clone()];
        out.extend(self.extra_starts.iter().cloned());
        out
    }

    pub fn validate(&self) -> Result<()> {
        let plant = self.plant();
        let n = plant.state_dim();
        let m = plant.input_dim();
        self.steps()?;
        self.safety.validate()?;
        self.barrier.validate()?;
        self.multiplier.validate()?;
        self.excitation.validate()?;
        self.critic.validate()?;
        if self.cost.q.len() != n || self.cost.r.len() != m {
            return Err(Error::Config(format!(
                "cost.q needs {n} entries and cost.r {m}, got {} and {}",
                self.cost.q.len(),
                self.cost.r.len()
            )));
        }
        if self.cost.r.iter().any(|&r| !(r > 0.0)) || self.cost.q.iter().any(|&q| q < 0.0) {
            return Err(Error::Config("cost.r must be > 0 and cost.q >= 0".into()));
        }
        if self.disturbance.kind == DisturbanceKind::IsaacsAdversary && self.hinf_channel != HinfChannel::Plant {
            return Err(Error::Config(
                "the isaacs adversary needs hinf_channel = \"plant\"".into(),
            ));
        }
        if self.hinf_channel == HinfChannel::Plant && plant.disturbance_dim() == 0 {
            return Err(Error::Config(format!(
                "plant '{}' has no disturbance channel",
                plant.label()
            )));
        }
        if self.hinf_channel == HinfChannel::Tangential && !self.excitation.enabled {
            return Err(Error::Config(
                "hinf_channel = \"tangential\" needs excitation.enabled".into(),
            ));
        }
        if self.excitation.enabled
            && self.excitation.direction_mode == crate::excitation::DirectionMode::Rotation2d
            && m != 2
        {
            return Err(Error::Config("rotation-2d excitation needs a planar input".into()));
        }
        if self.multiplier.is_adaptive() && !(self.multiplier.r_v > 0.0) {
            return Err(Error::Config("r_v must be > 0".into()));
        }
        if let WeightInit::Named(name) = &self.critic.w0 {
            if name != "lqr" {
                return Err(Error::Config(format!(
                    "unknown weight initialiser '{name}' (expected \"lqr\")"
                )));
            }
        }
        for (i, x0) in self.starts().iter().enumerate() {
            if x0.len() != n {
                return Err(Error::Config(format!(
                    "start {i} has {} entries, plant '{}' has {n} states",
                    x0.len(),
                    plant.label()
                )));
            }
            let psi = high_order_psi(&self.safety, &plant, &x0.clone().into())
                .map_err(|e| Error::Config(format!("start {i}: {e}")))?;
            if !(psi.psi > 0.0) {
                return Err(Error::Config(format!(
                    "start {i} is not strictly inside the safe set (psi = {:.4e})",
                    psi.psi
                )));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("TOML: {e}")))
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("JSON line {} column {}: {e}", e.line(), e.column())))
    }

    /// Load from a `.toml` or `.json` file (by extension, TOML otherwise).
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let is_json = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if is_json {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Set a numeric field addressed by a dotted path such as
    /// `multiplier.lambda_const` or `critic.seed`.
    pub fn set_number(&mut self, path: &str, value: f64) -> Result<()> {
        let mut tree = serde_json::to_value(&*self).map_err(|e| Error::Config(e.to_string()))?;
        let mut node = &mut tree;
        for key in path.split('.') {
            node = match node {
                serde_json::Value::Object(map) => map
                    .get_mut(key)
                    .ok_or_else(|| Error::Config(format!("unknown config field '{path}'")))?,
                serde_json::Value::Array(items) => {
                    let idx: usize = key
                        .parse()
                        .map_err(|_| Error::Config(format!("'{key}' is not an index in '{path}'")))?;
                    items
                        .get_mut(idx)
                        .ok_or_else(|| Error::Config(format!("index {idx} out of range in '{path}'")))?
                }
                _ => return Err(Error::Config(format!("'{path}' does not address a field"))),
            };
        }
        *node = match node {
            serde_json::Value::Number(n) if n.is_u64() || n.is_i64() => {
                if value.fract() != 0.0 || value < 0.0 {
                    return Err(Error::Config(format!(
                        "'{path}' expects a non-negative integer, got {value}"
                    )));
                }
                serde_json::Value::from(value as u64)
            }
            serde_json::Value::Number(_) => serde_json::Value::from(value),
            serde_json::Value::Bool(_) => serde_json::Value::Bool(value != 0.0),
            _ => return Err(Error::Config(format!("'{path}' is not a numeric field"))),
        };
        *self = serde_json::from_value(tree).map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }
}
