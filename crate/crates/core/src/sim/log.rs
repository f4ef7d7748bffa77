//! CSV trajectory and JSON metrics writers.
//!
//! Column order of the trajectory CSV, with `n` states, `m` inputs, `k`
//! disturbance inputs, `q` H-infinity channels and `J` critic weights:
//!
//! ```text
//! t, x0..x{n-1}, lambda, lambda_ref, p, u_o0.., u_s0.., u_t0.., v, v_feasible,
//! d_exo0..d_exo{k-1}, d_hat0..d_hat{q-1}, h_min, psi, B, cos_theta, nu, delta,
//! pe, gamma_min, gamma_max, cost_rate, cost, xdot_norm, vhat, vhat_dot,
//! iss_bound, w0..w{J-1}
//! ```
//!
//! Weight columns are empty on rows without a snapshot.

use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::sim::metrics::RunMetrics;
use crate::sim::runner::TrajectoryLog;

pub fn csv_header(log: &TrajectoryLog) -> Vec<String> {
    let idx = |p: &'static str, n: usize| (0..n).map(move |i| format!("{p}{i}"));
    let mut h = vec!["t".to_string()];
    h.extend(idx("x", log.state_dim));
    h.extend(["lambda", "lambda_ref", "p"].map(String::from));
    h.extend(idx("u_o", log.input_dim));
    h.extend(idx("u_s", log.input_dim));
    h.extend(idx("u_t", log.input_dim));
    h.extend(["v", "v_feasible"].map(String::from));
    h.extend(idx("d_exo", log.disturbance_dim));
    h.extend(idx("d_hat", log.hinf_dim));
    h.extend(
        [
            "h_min",
            "psi",
            "B",
            "cos_theta",
            "nu",
            "delta",
            "pe",
            "gamma_min",
            "gamma_max",
            "cost_rate",
            "cost",
            "xdot_norm",
            "vhat",
            "vhat_dot",
            "iss_bound",
        ]
        .map(String::from),
    );
    h.extend(idx("w", log.weight_dim));
    h
}

/// Write the trajectory as CSV.
pub fn write_csv<W: Write>(log: &TrajectoryLog, out: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(out);
    wr.write_record(csv_header(log))?;
    let num = |v: f64| format!("{v:e}");
    for r in &log.records {
        let mut row = vec![num(r.t)];
        row.extend(r.x.iter().copied().map(num));
        row.extend([num(r.lambda), num(r.lambda_ref), num(r.p)]);
        row.extend(r.u_o.iter().copied().map(num));
        row.extend(r.u_s.iter().copied().map(num));
        row.extend(r.u_t.iter().copied().map(num));
        row.push(num(r.v));
        row.push(u8::from(r.v_feasible).to_string());
        row.extend(r.d_exo.iter().copied().map(num));
        row.extend(r.d_hat.iter().copied().map(num));
        row.extend(
            [
                r.h_min,
                r.psi,
                r.barrier,
                r.cos_theta,
                r.nu,
                r.delta,
                r.pe,
                r.gamma_min,
                r.gamma_max,
                r.cost_rate,
                r.cost,
                r.xdot_norm,
                r.vhat,
                r.vhat_dot,
                r.iss_bound,
            ]
            .map(num),
        );
        match &r.w {
            Some(w) => row.extend(w.iter().copied().map(num)),
            None => row.extend(std::iter::repeat_n(String::new(), log.weight_dim)),
        }
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_csv_file(log: &TrajectoryLog, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(log, std::io::BufWriter::new(file))
}

pub fn metrics_json(metrics: &RunMetrics) -> Result<String> {
    serde_json::to_string_pretty(metrics).map_err(|e| crate::error::Error::Io(e.to_string()))
}

pub fn write_metrics_file(metrics: &RunMetrics, path: &Path) -> Result<()> {
    std::fs::write(path, metrics_json(metrics)? + "\n")?;
    Ok(())
}

/// Whole log (records included) as JSON.
pub fn write_json_log<W: Write>(log: &TrajectoryLog, out: W) -> Result<()> {
    serde_json::to_writer(out, log).map_err(|e| crate::error::Error::Io(e.to_string()))
}
