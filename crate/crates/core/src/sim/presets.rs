//! Compiled-in scenarios: the lens trap (A), the relative-degree-one obstacle
//! (B), the disturbed minefield (C) and a linear critic oracle.

use crate::critic::{CriticConfig, CriticGains, WeightInit};
use crate::error::{Error, Result};
use crate::excitation::{DirectionMode, ExcitationConfig};
use crate::plants::{DisturbanceKind, DisturbanceSignal, FlowParams, PlantKind};
use crate::safeguard::{MultiplierConfig, MultiplierMode};
use crate::safesets::{lens_safe_set, BarrierParams, PrimitiveConstraint, SafetySpec};
use crate::sim::config::{CostConfig, HinfChannel, ScenarioConfig};
use crate::sim::integrator::Integrator;
use crate::sim::runner::lqr_weights;

/// A named preset with a one-line description.
#[derive(Debug, Clone)]
pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub config: ScenarioConfig,
}

pub const PRESET_NAMES: [&str; 10] = [
    "A1",
    "A2",
    "A3",
    "B-const",
    "B-adaptive",
    "C-robust-off",
    "C-robust-on",
    "C-adaptive",
    "C-3starts",
    "critic-oracle",
];

/// Obstacles of the minefield: `(center, radius)`.
pub const MINEFIELD_OBSTACLES: [([f64; 2], f64); 6] = [
    ([-3.3, -1.07], 0.8),
    ([-2.9, 2.1], 0.7),
    ([3.6, 3.0], 0.9),
    ([2.2, -4.1], 0.8),
    ([-3.4, -4.6], 1.0),
    ([5.4, -1.2], 0.6),
];

/// Radius of the circular outer boundary.
pub const MINEFIELD_RADIUS: f64 = 10.0;

pub const MINEFIELD_STARTS: [[f64; 4]; 3] = [[-9.0, 1.0, 0.8, -2.0], [6.2, 6.2, -1.0, -1.0], [4.5, -7.0, -1.0, 1.0]];

fn lens_base(name: &str, lambda: f64) -> ScenarioConfig {
    let safety = lens_safe_set([-2.0, 2.0], 1.2, std::f64::consts::FRAC_PI_4, 1.0, 12.0).expect("valid lens");
    ScenarioConfig {
        name: name.to_string(),
        plant: PlantKind::SingleIntegrator2d,
        safety,
        barrier: BarrierParams::default(),
        multiplier: MultiplierConfig {
            mode: MultiplierMode::Constant,
            lambda_const: lambda,
            ..MultiplierConfig::default()
        },
        excitation: ExcitationConfig::default(),
        critic: CriticConfig {
            w0: WeightInit::Explicit(vec![0.02, 0.02, 0.0]),
            gamma0: 1.0,
            gains: CriticGains {
                k1: 0.03,
                k2: 0.03,
                eta: 0.05,
                k3: 1.0,
            },
            n_samples: 6,
            sample_std: 0.05,
            gamma_attn: 2.0,
            seed: 7,
            ..CriticConfig::default()
        },
        disturbance: DisturbanceSignal::none(),
        hinf_channel: HinfChannel::None,
        cost: CostConfig {
            q: vec![2.0, 2.0],
            r: vec![1.0, 1.0],
        },
        x0: vec![-4.0, 4.0],
        extra_starts: Vec::new(),
        lambda0: lambda,
        horizon: 10.0,
        dt: 1e-3,
        integrator: Integrator::Rk4,
        trap_radius: 1.0,
        stall_tol: 1e-3,
        iss_tol: 1e-6,
        w_log_every: 10,
        fault: None,
    }
}

fn tanh_base(name: &str, adaptive: bool) -> ScenarioConfig {
    let w0 = if adaptive {
        vec![0.5, 1.0, 0.2, 0.0, 0.0, 0.2]
    } else {
        vec![0.5, 1.0, 0.0]
    };
    ScenarioConfig {
        name: name.to_string(),
        plant: PlantKind::TanhRd1,
        safety: SafetySpec {
            constraints: vec![PrimitiveConstraint::DiskExterior {
                center: [-3.5, -0.5],
                radius: 1.0,
            }],
            beta: 12.0,
            order: 1,
            k_ho: 0.0,
            phi: 0.0,
            robust: false,
        },
        barrier: BarrierParams::default(),
        multiplier: MultiplierConfig {
            mode: if adaptive {
                MultiplierMode::Adaptive
            } else {
                MultiplierMode::Constant
            },
            lambda_const: 1.0,
            lambda_star: 1.0,
            lambda_min: 0.2,
            delta_lambda: 4.0,
            h0: 1.0,
            delta_h: 3.0,
            lambda_max: 1e3,
            k_lambda: 5.0,
            q_lambda: 2.0,
            r_v: 0.5,
            use_r_inverse: false,
        },
        excitation: ExcitationConfig::default(),
        critic: CriticConfig {
            w0: WeightInit::Explicit(w0),
            gamma0: 1.0,
            gains: CriticGains {
                k1: 0.05,
                k2: 0.02,
                eta: 0.01,
                k3: 1.0,
            },
            n_samples: 10,
            sample_std: 0.05,
            gamma_attn: 2.0,
            seed: 11,
            ..CriticConfig::default()
        },
        disturbance: DisturbanceSignal {
            kind: DisturbanceKind::IsaacsAdversary,
            magnitude: 0.0,
            flow: FlowParams::default(),
        },
        hinf_channel: HinfChannel::Plant,
        cost: CostConfig {
            q: vec![2.0, 2.0],
            r: vec![1.0, 1.0],
        },
        x0: vec![-5.0, 4.0],
        extra_starts: Vec::new(),
        lambda0: 5.0,
        horizon: 25.0,
        dt: 1e-3,
        integrator: Integrator::Rk4,
        trap_radius: 1.0,
        stall_tol: 1e-3,
        iss_tol: 1e-6,
        w_log_every: 10,
        fault: None,
    }
}

/// Outer disk plus the fixed obstacle layout, as a relative-degree-two set.
pub fn minefield_spec(robust: bool) -> SafetySpec {
    let mut constraints = vec![PrimitiveConstraint::DiskInterior {
        center: [0.0, 0.0],
        radius: MINEFIELD_RADIUS,
    }];
    constraints.extend(
        MINEFIELD_OBSTACLES
            .iter()
            .map(|&(center, radius)| PrimitiveConstraint::DiskExterior { center, radius }),
    );
    SafetySpec {
        constraints,
        beta: 12.0,
        order: 2,
        k_ho: 2.0,
        phi: 0.2,
        robust,
    }
}

/// The flow field shared by all minefield runs: a pulsing swirl about the
/// goal, so it vanishes at the origin.
pub fn minefield_flow() -> DisturbanceSignal {
    DisturbanceSignal {
        kind: DisturbanceKind::ExogenousFlow,
        magnitude: 1.5,
        flow: FlowParams {
            constant: [0.0, 0.0],
            rotation: 1.5,
            center: [0.0, 0.0],
            omega: 0.7,
            pulse: 0.3,
        },
    }
}

fn minefield_base(name: &str, robust: bool, adaptive: bool) -> ScenarioConfig {
    ScenarioConfig {
        name: name.to_string(),
        plant: PlantKind::DoubleIntegrator4d,
        safety: minefield_spec(robust),
        barrier: BarrierParams::default(),
        multiplier: MultiplierConfig {
            mode: if adaptive {
                MultiplierMode::Adaptive
            } else {
                MultiplierMode::Constant
            },
            lambda_const: 2.0,
            lambda_star: 2.0,
            lambda_min: 0.5,
            delta_lambda: 6.0,
            h0: 1.0,
            delta_h: 3.0,
            lambda_max: 20.0,
            k_lambda: 5.0,
            q_lambda: 1.0,
            r_v: 0.1,
            use_r_inverse: false,
        },
        excitation: ExcitationConfig::default(),
        critic: CriticConfig {
            w0: WeightInit::Named("lqr".into()),
            gamma0: 1.0,
            gains: CriticGains {
                k1: 0.1,
                k2: 0.1,
                eta: 0.01,
                k3: 0.1,
            },
            n_samples: 10,
            sample_std: 0.05,
            gamma_attn: 4.0,
            seed: 23,
            ..CriticConfig::default()
        },
        disturbance: minefield_flow(),
        hinf_channel: HinfChannel::Plant,
        cost: CostConfig {
            q: vec![2.0, 2.0, 0.4, 0.4],
            r: vec![1.0, 1.0],
        },
        x0: MINEFIELD_STARTS[0].to_vec(),
        extra_starts: Vec::new(),
        lambda0: 2.0,
        horizon: 30.0,
        dt: 1e-3,
        integrator: Integrator::Rk4,
        trap_radius: 1.0,
        stall_tol: 1e-3,
        iss_tol: 1e-6,
        w_log_every: 10,
        fault: None,
    }
}

/// Planar double integrator, no obstacles in reach, no safeguarding and no
/// disturbance: the critic should recover the Riccati weights. It starts from
/// half of them, which is still a stabilising policy.
fn critic_oracle() -> ScenarioConfig {
    let mut cfg = minefield_base("critic-oracle", false, false);
    cfg.safety = SafetySpec {
        constraints: vec![PrimitiveConstraint::DiskInterior {
            center: [0.0, 0.0],
            radius: 1e3,
        }],
        beta: 12.0,
        order: 1,
        k_ho: 0.0,
        phi: 0.0,
        robust: false,
    };
    cfg.multiplier.lambda_const = 0.0;
    cfg.disturbance = DisturbanceSignal::none();
    cfg.hinf_channel = HinfChannel::None;
    cfg.critic.sample_std = 1.0;
    cfg.critic.gains = CriticGains {
        k1: 5.0,
        k2: 5.0,
        eta: 0.0,
        k3: 0.1,
    };
    cfg.critic.gamma0 = 10.0;
    cfg.x0 = vec![2.0, -1.0, 0.5, 0.5];
    cfg.horizon = 20.0;
    let w_star = lqr_weights(&cfg).expect("double integrator is stabilisable");
    cfg.critic.w0 = WeightInit::Explicit((0.5 * w_star).as_slice().to_vec());
    cfg
}

pub fn scenario_presets() -> Vec<Preset> {
    let mut a3 = lens_base("A3", 0.2);
    a3.excitation = ExcitationConfig {
        enabled: true,
        alpha_t: 2.0,
        k_t: 0.5,
        eps_reg: 1e-4,
        kappa: 1.0,
        cos_theta0: 0.0,
        direction_mode: DirectionMode::Rotation2d,
        p0: 0.0,
    };
    a3.hinf_channel = HinfChannel::Tangential;

    let mut three = minefield_base("C-3starts", true, true);
    three.x0 = MINEFIELD_STARTS[0].to_vec();
    three.extra_starts = MINEFIELD_STARTS[1..].iter().map(|s| s.to_vec()).collect();

    vec![
        Preset {
            name: "A1",
            description: "lens trap, lambda = 0.2, no excitation",
            config: lens_base("A1", 0.2),
        },
        Preset {
            name: "A2",
            description: "lens trap, lambda = 2.0, no excitation",
            config: lens_base("A2", 2.0),
        },
        Preset {
            name: "A3",
            description: "lens trap, lambda = 0.2 with tangential excitation",
            config: a3,
        },
        Preset {
            name: "B-const",
            description: "tanh plant, Isaacs adversary, constant lambda",
            config: tanh_base("B-const", false),
        },
        Preset {
            name: "B-adaptive",
            description: "tanh plant, Isaacs adversary, adaptive lambda",
            config: tanh_base("B-adaptive", true),
        },
        Preset {
            name: "C-robust-off",
            description: "minefield under flow, high-order set without compensation",
            config: minefield_base("C-robust-off", false, false),
        },
        Preset {
            name: "C-robust-on",
            description: "minefield under flow, compensated high-order set",
            config: minefield_base("C-robust-on", true, false),
        },
        Preset {
            name: "C-adaptive",
            description: "minefield under flow, compensated set, adaptive lambda",
            config: minefield_base("C-adaptive", true, true),
        },
        Preset {
            name: "C-3starts",
            description: "minefield from three starts, compensated set, adaptive lambda",
            config: three,
        },
        Preset {
            name: "critic-oracle",
            description: "obstacle-free linear double integrator for critic convergence",
            config: critic_oracle(),
        },
    ]
}

pub fn preset(name: &str) -> Result<ScenarioConfig> {
    scenario_presets()
        .into_iter()
        .find(|p| p.name.eq_ignore_ascii_case(name))
        .map(|p| p.config)
        .ok_or_else(|| {
            Error::Config(format!(
                "unknown preset '{name}' (available: {})",
                PRESET_NAMES.join(", ")
            ))
        })
}

/// Scalar plant `x' = u` with cost `x^2 + 1/2 u^2`, whose exact value is
/// `V = x^2 / sqrt(2)`.
pub fn scalar_lq_exact_weight() -> f64 {
    0.5f64.sqrt()
}
