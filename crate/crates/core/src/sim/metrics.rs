//! Summary metrics of a trajectory log.

use serde::{Deserialize, Serialize};

use crate::sim::runner::{RunOutcome, TrajectoryLog};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub name: String,
    pub outcome: RunOutcome,
    pub records: usize,
    pub final_time: f64,
    /// Minimum aggregate margin `psi` over the run.
    pub min_margin: f64,
    /// Minimum over the run of the smallest primitive margin `h_i`.
    pub min_primitive_margin: f64,
    pub final_state_norm: f64,
    /// Norm of the planar position (first two coordinates) at the end.
    pub final_position_norm: f64,
    pub final_xdot_norm: f64,
    pub trapped: bool,
    pub total_cost: f64,
    pub excitation_energy: f64,
    /// Energy accumulated over the last tenth of the horizon.
    pub excitation_final_decile_increase: f64,
    pub final_p: f64,
    /// Mean `|delta|` over the first second.
    pub delta_initial_avg: f64,
    /// Mean `|delta|` over the last tenth of the records.
    pub delta_final_avg: f64,
    pub final_lambda: f64,
    /// `|lambda(T) - lambda_star|` (adaptive runs only).
    pub lambda_tracking_error: Option<f64>,
    /// `max_t (lambda_ref - lambda)` (adaptive runs only).
    pub max_lambda_ref_violation: Option<f64>,
    pub infeasible_v_steps: usize,
    pub gamma_eig_min: f64,
    pub gamma_eig_max: f64,
    pub min_pe: f64,
    pub max_pe: f64,
    /// Steps where `dV/dt > -l + gamma^2 |d|^2 + iss_tol`.
    pub iss_violations: usize,
}

/// Trapezoid rule on a (possibly non-uniform) grid.
pub fn trapezoid(ts: &[f64], ys: &[f64]) -> f64 {
    ts.windows(2)
        .zip(ys.windows(2))
        .map(|(t, y)| 0.5 * (y[0] + y[1]) * (t[1] - t[0]))
        .sum()
}

fn mean_abs(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v.abs(), c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

/// Metrics of `log`. `trapped` holds iff the final state norm exceeds
/// `trap_radius` while the final speed is below `stall_tol`.
pub fn compute_metrics(
    log: &TrajectoryLog,
    trap_radius: f64,
    stall_tol: f64,
    iss_tol: f64,
    lambda_star: Option<f64>,
) -> RunMetrics {
    let recs = &log.records;
    let ts: Vec<f64> = recs.iter().map(|r| r.t).collect();
    let last = recs.last();
    let fold_min =
        |f: &dyn Fn(&crate::sim::runner::StepRecord) -> f64| recs.iter().map(f).fold(f64::INFINITY, f64::min);
    let fold_max =
        |f: &dyn Fn(&crate::sim::runner::StepRecord) -> f64| recs.iter().map(f).fold(f64::NEG_INFINITY, f64::max);

    let final_state_norm = last.map_or(f64::NAN, |r| r.x.iter().map(|v| v * v).sum::<f64>().sqrt());
    let final_position_norm = last.map_or(f64::NAN, |r| r.x.iter().take(2).map(|v| v * v).sum::<f64>().sqrt());
    let final_xdot_norm = last.map_or(f64::NAN, |r| r.xdot_norm);
    let trapped = final_state_norm > trap_radius && final_xdot_norm < stall_tol;

    let cost_rates: Vec<f64> = recs.iter().map(|r| r.cost_rate).collect();
    let ut2: Vec<f64> = recs.iter().map(|r| r.u_t.iter().map(|u| u * u).sum()).collect();
    let excitation_energy = trapezoid(&ts, &ut2);
    let decile_start = recs.len() - recs.len() / 10;
    let decile_start = decile_start.min(recs.len().saturating_sub(1));
    let excitation_final_decile_increase = if recs.is_empty() {
        0.0
    } else {
        trapezoid(&ts[decile_start..], &ut2[decile_start..])
    };

    let t0 = ts.first().copied().unwrap_or(0.0);
    let delta_initial_avg = mean_abs(recs.iter().filter(|r| r.t - t0 <= 1.0).map(|r| r.delta));
    let tail = (recs.len() / 10).max(1).min(recs.len());
    let delta_final_avg = mean_abs(recs[recs.len() - tail..].iter().map(|r| r.delta));

    let adaptive = lambda_star.is_some();
    RunMetrics {
        name: log.name.clone(),
        outcome: log.outcome.clone(),
        records: recs.len(),
        final_time: last.map_or(0.0, |r| r.t),
        min_margin: fold_min(&|r| r.psi),
        min_primitive_margin: fold_min(&|r| r.h_min),
        final_state_norm,
        final_position_norm,
        final_xdot_norm,
        trapped,
        total_cost: trapezoid(&ts, &cost_rates),
        excitation_energy,
        excitation_final_decile_increase,
        final_p: last.map_or(f64::NAN, |r| r.p),
        delta_initial_avg,
        delta_final_avg,
        final_lambda: last.map_or(f64::NAN, |r| r.lambda),
        lambda_tracking_error: lambda_star.and_then(|ls| last.map(|r| (r.lambda - ls).abs())),
        max_lambda_ref_violation: adaptive.then(|| fold_max(&|r| r.lambda_ref - r.lambda)),
        infeasible_v_steps: recs.iter().filter(|r| !r.v_feasible).count(),
        gamma_eig_min: fold_min(&|r| r.gamma_min),
        gamma_eig_max: fold_max(&|r| r.gamma_max),
        min_pe: fold_min(&|r| r.pe),
        max_pe: fold_max(&|r| r.pe),
        iss_violations: recs.iter().filter(|r| r.vhat_dot > r.iss_bound + iss_tol).count(),
    }
}
