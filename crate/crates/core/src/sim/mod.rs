//! Closed-loop simulation, scenario presets and metrics.

pub mod config;
pub mod integrator;
pub mod log;
pub mod metrics;
pub mod presets;
pub mod runner;

pub use config::{CostConfig, Fault, HinfChannel, ScenarioConfig};
pub use integrator::Integrator;
pub use metrics::{compute_metrics, RunMetrics};
pub use presets::{preset, scenario_presets, Preset};
pub use runner::{
    lqr_weights, run_all_starts, run_from, run_scenario, RunOutcome, RunResult, StepRecord, TrajectoryLog,
};
