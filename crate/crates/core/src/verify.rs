//! Named verification checks.
//!
//! Every check belongs to a group; `VerifyOptions::only` keeps the checks
//! whose name or group matches one of its entries. Preset runs are shared
//! between checks and executed lazily, so a filtered report only pays for
//! what it asks for.

use std::cell::RefCell;
use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::critic::riccati::{care_residual, solve_care};
use crate::critic::{hamiltonian_error, CostWeights, QuadraticBasis};
use crate::excitation::{tangential_direction, DirectionMode, ExcitationConfig};
use crate::plants::{ControlAffinePlant, PlantKind};
use crate::safesets::{blf_eval, softmin, BarrierParams, SafetySpec};
use crate::sim::presets::{minefield_spec, scalar_lq_exact_weight};
use crate::sim::{lqr_weights, preset, run_all_starts, Fault, RunResult};

#[derive(Debug, Clone, Default)]
pub struct VerifyOptions {
    pub only: Vec<String>,
    pub fault: Option<Fault>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub group: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub checks: Vec<CheckResult>,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect()
    }
}

type Outcome = (bool, String);

/// Preset runs, computed once per report.
struct Runs {
    fault: Option<Fault>,
    cache: RefCell<HashMap<String, std::result::Result<Vec<RunResult>, String>>>,
}

impl Runs {
    fn get(&self, name: &str) -> std::result::Result<Vec<RunResult>, String> {
        if let Some(hit) = self.cache.borrow().get(name) {
            return hit.clone();
        }
        let fresh = preset(name)
            .and_then(|mut cfg| {
                cfg.fault = self.fault;
                run_all_starts(&cfg)
            })
            .map_err(|e| e.to_string());
        self.cache.borrow_mut().insert(name.to_string(), fresh.clone());
        fresh
    }

    /// Apply `judge` to the single run of `name`.
    fn judge(&self, name: &str, judge: impl Fn(&RunResult) -> Outcome) -> Outcome {
        match self.get(name) {
            Ok(runs) => judge(&runs[0]),
            Err(e) => (false, format!("run failed: {e}")),
        }
    }
}

struct Check {
    name: &'static str,
    group: &'static str,
    run: fn(&Runs) -> Outcome,
}

const PRESET_RUNS: [&str; 10] = [
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

fn checks() -> Vec<Check> {
    vec![
        Check {
            name: "grad-barrier-lens",
            group: "gradients",
            run: |_| grad_barrier_check(&lens_spec(), PlantKind::SingleIntegrator2d, 1),
        },
        Check {
            name: "grad-barrier-minefield",
            group: "gradients",
            run: |_| grad_barrier_check(&minefield_spec(true), PlantKind::DoubleIntegrator4d, 2),
        },
        Check {
            name: "grad-basis",
            group: "gradients",
            run: |_| grad_basis_check(),
        },
        Check {
            name: "tangential-projection",
            group: "orthogonality",
            run: |_| orthogonality_check(DirectionMode::Projection),
        },
        Check {
            name: "tangential-rotation",
            group: "orthogonality",
            run: |_| orthogonality_check(DirectionMode::Rotation2d),
        },
        Check {
            name: "softmin-bounds",
            group: "softmin",
            run: |_| softmin_check(),
        },
        Check {
            name: "care-residual",
            group: "riccati",
            run: |_| care_check(),
        },
        Check {
            name: "scalar-lq-residual",
            group: "exact-residual",
            run: |_| exact_residual_check(),
        },
        Check {
            name: "same-seed-identical",
            group: "determinism",
            run: |_| determinism_check(),
        },
        Check {
            name: "A1-trapped",
            group: "presets",
            run: |r| {
                r.judge("A1", |res| {
                    let m = &res.metrics;
                    (
                        m.trapped && m.min_margin > 0.0,
                        format!(
                            "trapped={} final |x|={:.3e} final |xdot|={:.3e} min margin={:.3e}",
                            m.trapped, m.final_state_norm, m.final_xdot_norm, m.min_margin
                        ),
                    )
                })
            },
        },
        Check {
            name: "A2-converges",
            group: "presets",
            run: |r| {
                r.judge("A2", |res| {
                    let m = &res.metrics;
                    (
                        m.outcome.is_completed() && m.final_state_norm < 0.2,
                        format!("final |x|={:.3e}", m.final_state_norm),
                    )
                })
            },
        },
        Check {
            name: "A3-escapes",
            group: "presets",
            run: |r| {
                r.judge("A3", |res| {
                    let m = &res.metrics;
                    let ok = m.outcome.is_completed()
                        && m.final_state_norm < 0.2
                        && m.min_margin > 0.0
                        && m.excitation_energy.is_finite()
                        && m.excitation_final_decile_increase < 1e-4
                        && m.final_p.abs() < 1e-2;
                    (
                        ok,
                        format!(
                            "final |x|={:.3e} min margin={:.3e} energy={:.3e} last-decile={:.3e} p(T)={:.3e}",
                            m.final_state_norm,
                            m.min_margin,
                            m.excitation_energy,
                            m.excitation_final_decile_increase,
                            m.final_p
                        ),
                    )
                })
            },
        },
        Check {
            name: "B-const-safe",
            group: "presets",
            run: |r| r.judge("B-const", safe_run),
        },
        Check {
            name: "B-adaptive-safe",
            group: "presets",
            run: |r| r.judge("B-adaptive", safe_run),
        },
        Check {
            name: "B-adaptive-lambda",
            group: "presets",
            run: |r| {
                r.judge("B-adaptive", |res| {
                    let m = &res.metrics;
                    let viol = m.max_lambda_ref_violation.unwrap_or(f64::INFINITY);
                    let err = m.lambda_tracking_error.unwrap_or(f64::INFINITY);
                    (
                        m.outcome.is_completed() && viol <= 1e-6 && err < 0.2,
                        format!("max(lambda_ref - lambda)={viol:.3e} |lambda(T) - 1|={err:.3e}"),
                    )
                })
            },
        },
        Check {
            name: "C-robust-off-violates",
            group: "presets",
            run: |r| {
                r.judge("C-robust-off", |res| {
                    let m = &res.metrics;
                    (
                        m.min_primitive_margin < 0.0,
                        format!("min primitive margin={:.3e}", m.min_primitive_margin),
                    )
                })
            },
        },
        Check {
            name: "C-robust-on-safe",
            group: "presets",
            run: |r| {
                r.judge("C-robust-on", |res| {
                    let m = &res.metrics;
                    (
                        m.outcome.is_completed() && m.min_margin >= 0.0,
                        format!("min psi={:.3e} min h={:.3e}", m.min_margin, m.min_primitive_margin),
                    )
                })
            },
        },
        Check {
            name: "C-adaptive-lambda",
            group: "presets",
            run: |r| {
                r.judge("C-adaptive", |res| {
                    let m = &res.metrics;
                    let viol = m.max_lambda_ref_violation.unwrap_or(f64::INFINITY);
                    (
                        m.outcome.is_completed() && m.min_primitive_margin >= 0.0 && viol <= 1e-6,
                        format!(
                            "min h={:.3e} max(lambda_ref - lambda)={viol:.3e} lambda(T)={:.4}",
                            m.min_primitive_margin, m.final_lambda
                        ),
                    )
                })
            },
        },
        Check {
            name: "C-3starts",
            group: "presets",
            run: |r| match r.get("C-3starts") {
                Ok(runs) => {
                    let mut ok = runs.len() == 3;
                    let mut parts = Vec::new();
                    for (i, res) in runs.iter().enumerate() {
                        let m = &res.metrics;
                        ok &= m.outcome.is_completed()
                            && m.final_position_norm < 0.5
                            && m.min_margin >= 0.0
                            && m.min_primitive_margin >= 0.0;
                        parts.push(format!(
                            "start{i}: |p(T)|={:.3e} min psi={:.3e} min h={:.3e}",
                            m.final_position_norm, m.min_margin, m.min_primitive_margin
                        ));
                    }
                    (ok, parts.join("; "))
                }
                Err(e) => (false, format!("run failed: {e}")),
            },
        },
        Check {
            name: "critic-oracle",
            group: "presets",
            run: |r| r.judge("critic-oracle", oracle_judge),
        },
        Check {
            name: "gamma-bounds",
            group: "presets",
            run: gamma_bounds_check,
        },
    ]
}

fn matches(filter: &[String], check: &Check) -> bool {
    filter.is_empty()
        || filter
            .iter()
            .any(|f| f.eq_ignore_ascii_case(check.name) || f.eq_ignore_ascii_case(check.group))
}

/// Names and groups of all checks.
pub fn check_names() -> Vec<(&'static str, &'static str)> {
    checks().iter().map(|c| (c.name, c.group)).collect()
}

pub fn run_checks(opts: &VerifyOptions) -> Report {
    let runs = Runs {
        fault: opts.fault,
        cache: RefCell::new(HashMap::new()),
    };
    let checks = checks()
        .into_iter()
        .filter(|c| matches(&opts.only, c))
        .map(|c| {
            let (passed, detail) = (c.run)(&runs);
            log::info!("{} {}: {}", if passed { "pass" } else { "FAIL" }, c.name, detail);
            CheckResult {
                name: c.name.to_string(),
                group: c.group.to_string(),
                passed,
                detail,
            }
        })
        .collect();
    Report { checks }
}

fn safe_run(res: &RunResult) -> Outcome {
    let m = &res.metrics;
    (
        m.outcome.is_completed() && m.min_primitive_margin >= 0.0,
        format!("status={:?} min h={:.3e}", m.outcome, m.min_primitive_margin),
    )
}

fn lens_spec() -> SafetySpec {
    crate::safesets::lens_safe_set([-2.0, 2.0], 1.2, std::f64::consts::FRAC_PI_4, 1.0, 12.0).expect("valid lens")
}

fn rel_err(approx: &DVector<f64>, exact: &DVector<f64>) -> f64 {
    (approx - exact).norm() / exact.norm().max(1e-12)
}

fn central_difference(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, step: f64) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let mut hi = x.clone();
        let mut lo = x.clone();
        hi[i] += step;
        lo[i] -= step;
        (f(&hi) - f(&lo)) / (2.0 * step)
    })
}

/// `grad B` against central differences at 100 random states with `psi > 1e-3`.
fn grad_barrier_check(spec: &SafetySpec, kind: PlantKind, seed: u64) -> Outcome {
    let plant = ControlAffinePlant::new(kind);
    let params = BarrierParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = plant.state_dim();
    let mut worst = 0.0f64;
    let mut tested = 0;
    let mut attempts = 0;
    while tested < 100 && attempts < 100_000 {
        attempts += 1;
        let x = DVector::from_fn(n, |i, _| {
            if i < 2 {
                rng.random_range(-8.0..8.0)
            } else {
                rng.random_range(-2.0..2.0)
            }
        });
        let Ok(eval) = blf_eval(spec, &params, &plant, &x) else {
            continue;
        };
        if eval.margin.psi < 1e-3 {
            continue;
        }
        let fd = central_difference(
            |z| blf_eval(spec, &params, &plant, z).map_or(f64::NAN, |e| e.value),
            &x,
            1e-6,
        );
        if fd.iter().any(|v| !v.is_finite()) {
            continue;
        }
        worst = worst.max(rel_err(&fd, &eval.grad));
        tested += 1;
    }
    (
        tested == 100 && worst < 1e-5,
        format!("{tested} states, worst relative error {worst:.2e}"),
    )
}

fn grad_basis_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for dim in 1..=5 {
        let basis = QuadraticBasis::new(dim);
        for _ in 0..20 {
            let z = DVector::from_fn(dim, |_, _| rng.random_range(-3.0..3.0));
            let jac = basis.jacobian(&z);
            for j in 0..basis.len() {
                let fd = central_difference(|p| basis.features(p)[j], &z, 1e-3);
                let exact = jac.row(j).transpose();
                if exact.norm() > 0.0 {
                    worst = worst.max(rel_err(&fd, &exact));
                }
            }
        }
    }
    (worst < 1e-8, format!("worst relative error {worst:.2e}"))
}

fn orthogonality_check(mode: DirectionMode) -> Outcome {
    let cfg = ExcitationConfig {
        direction_mode: mode,
        ..ExcitationConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let m = match mode {
            DirectionMode::Projection => rng.random_range(2..=4),
            DirectionMode::Rotation2d => 2,
        };
        let scale = 10f64.powf(rng.random_range(-3.0..3.0));
        let lgv = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
        let lgb = DVector::from_fn(m, |_, _| scale * rng.random_range(-1.0..1.0));
        let t = tangential_direction(&cfg, &lgv, &lgb);
        let scaled = t.dot(&lgb).abs() / (lgb.norm() * t.norm().max(1.0));
        worst = worst.max(scaled);
    }
    (worst <= 1e-8, format!("worst |t'LgB| / |LgB| = {worst:.2e}"))
}

fn softmin_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut failures = 0;
    for _ in 0..1000 {
        let m = rng.random_range(1..=8);
        let beta = rng.random_range(0.5..50.0);
        let values: Vec<f64> = (0..m).map(|_| rng.random_range(-20.0..20.0)).collect();
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let s = softmin(&values, beta).unwrap_or(f64::NAN);
        let slack = 1e-12 * (1.0 + min.abs());
        if !(s <= min + slack && s >= min - (m as f64).ln() / beta - slack) {
            failures += 1;
        }
    }
    (failures == 0, format!("{failures} of 1000 inputs outside the bounds"))
}

fn care_check() -> Outcome {
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for kind in PlantKind::ALL {
        let plant = ControlAffinePlant::new(kind);
        let (a, b) = plant.linearize_at_origin();
        let n = a.nrows();
        let q = DMatrix::<f64>::identity(n, n) * 2.0;
        let r = DMatrix::<f64>::identity(b.ncols(), b.ncols());
        match solve_care(&a, &b, &q, &r).and_then(|p| care_residual(&a, &b, &q, &r, &p)) {
            Ok(res) => {
                let norm = res.norm();
                worst = worst.max(norm);
                parts.push(format!("{}: {norm:.1e}", kind.key()));
            }
            Err(e) => return (false, format!("{}: {e}", kind.key())),
        }
    }
    (worst < 1e-9, format!("residual norms {}", parts.join(", ")))
}

/// `x' = u`, cost `x^2 + 1/2 u^2`, `V = x^2 / sqrt 2`.
fn exact_residual_check() -> Outcome {
    let basis = QuadraticBasis::new(1);
    let w = DVector::from_element(1, scalar_lq_exact_weight());
    let cost = CostWeights::from_diagonals(&[1.0], &[1.0]).expect("positive weights");
    let g = DMatrix::from_element(1, 1, 1.0);
    let omega = DMatrix::zeros(1, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let z = DVector::from_element(1, rng.random_range(-10.0..10.0));
        let f = DVector::zeros(1);
        let s = hamiltonian_error(&basis, &w, &cost, 1.0, &z, &f, &g, &omega);
        worst = worst.max(s.delta.abs());
    }
    (worst < 1e-10, format!("max |delta| over 100 states {worst:.2e}"))
}

fn determinism_check() -> Outcome {
    let Ok(mut cfg) = preset("B-const") else {
        return (false, "preset B-const missing".into());
    };
    cfg.horizon = 2.0;
    let render = |seed: u64| -> std::result::Result<String, String> {
        let mut c = cfg.clone();
        c.critic.seed = seed;
        let res = crate::sim::run_scenario(&c).map_err(|e| e.to_string())?;
        serde_json::to_string(&res.log).map_err(|e| e.to_string())
    };
    match (render(5), render(5), render(6)) {
        (Ok(a), Ok(b), Ok(c)) => (
            a == b && a != c,
            format!("same seed identical: {}, other seed differs: {}", a == b, a != c),
        ),
        (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => (false, e),
    }
}

fn oracle_judge(res: &RunResult) -> Outcome {
    let Ok(cfg) = preset("critic-oracle") else {
        return (false, "preset critic-oracle missing".into());
    };
    let w_star = match lqr_weights(&cfg) {
        Ok(w) => w,
        Err(e) => return (false, e.to_string()),
    };
    let Some(w) = res.log.records.iter().rev().find_map(|r| r.w.clone()) else {
        return (false, "no weight snapshot".into());
    };
    let (ok_w, worst) = weights_within(&w, w_star.as_slice(), 0.05);
    let delta = res.metrics.delta_final_avg;
    (
        res.metrics.outcome.is_completed() && ok_w && delta < 1e-3,
        format!("worst relative weight error {worst:.2e}, window |delta| {delta:.2e}"),
    )
}

/// Element-wise relative closeness; entries whose target is zero are judged
/// against the largest target magnitude.
pub fn weights_within(w: &[f64], target: &[f64], tol: f64) -> (bool, f64) {
    let scale = target.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let worst = w
        .iter()
        .zip(target)
        .map(|(a, b)| {
            let denom = if b.abs() > 1e-12 * scale { b.abs() } else { scale };
            (a - b).abs() / denom
        })
        .fold(0.0f64, f64::max);
    (w.len() == target.len() && worst <= tol, worst)
}

fn gamma_bounds_check(runs: &Runs) -> Outcome {
    let mut worst_lo = f64::INFINITY;
    let mut worst_hi = 0.0f64;
    let mut ok = true;
    for name in PRESET_RUNS {
        let (lo, hi) = match preset(name) {
            Ok(c) => (c.critic.gamma_lo, c.critic.gamma_hi),
            Err(e) => return (false, e.to_string()),
        };
        let Ok(results) = runs.get(name) else {
            return (false, format!("{name} did not run"));
        };
        for rec in results.iter().flat_map(|r| &r.log.records) {
            worst_lo = worst_lo.min(rec.gamma_min);
            worst_hi = worst_hi.max(rec.gamma_max);
            ok &= rec.gamma_min >= lo * (1.0 - 1e-12) && rec.gamma_max <= hi * (1.0 + 1e-12);
        }
    }
    (
        ok,
        format!("eigenvalues in [{worst_lo:.3e}, {worst_hi:.3e}] over every step"),
    )
}
