//! Fixed-step closed-loop simulation.
//!
//! Per step: barrier and margins, extended model, critic policies, multiplier
//! window, excitation, applied input `u = u_o + u_s + u_t`, Hamiltonian errors
//! at the live point and the sampled points, one Euler step of the critic and
//! one step of `(x, lambda, p)` with the chosen integrator.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::critic::{
    self, hamiltonian_error, lqr_fit_init, pe_metric, sample_points, value_and_gradient, CostWeights, CriticState,
    QuadraticBasis, WeightInit,
};
use crate::error::{Error, Result};
use crate::excitation::{alignment, filter_rate, tangential_direction, trigger};
use crate::plants::{exogenous_flow, ControlAffinePlant, DisturbanceKind};
use crate::safeguard::{admissible_v, extended_model, lambda_ref, lambda_ref_gradient, ExtendedModel, ExtendedState};
use crate::safesets::{blf_eval, BarrierEval};
use crate::sim::config::{Fault, HinfChannel, ScenarioConfig};
use crate::sim::metrics::{compute_metrics, trapezoid, RunMetrics};

fn nan_from_null<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

/// One logged time instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub x: Vec<f64>,
    pub lambda: f64,
    /// `NaN` in constant-multiplier mode.
    #[serde(deserialize_with = "nan_from_null")]
    pub lambda_ref: f64,
    pub p: f64,
    pub u_o: Vec<f64>,
    pub u_s: Vec<f64>,
    pub u_t: Vec<f64>,
    pub v: f64,
    pub v_feasible: bool,
    /// Disturbance applied to the plant.
    pub d_exo: Vec<f64>,
    /// Critic worst-case disturbance on the H-infinity channel.
    pub d_hat: Vec<f64>,
    pub h_min: f64,
    pub psi: f64,
    pub barrier: f64,
    pub cos_theta: f64,
    pub nu: f64,
    pub delta: f64,
    pub pe: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub cost_rate: f64,
    /// Accumulated running cost up to `t`.
    pub cost: f64,
    pub xdot_norm: f64,
    pub vhat: f64,
    pub vhat_dot: f64,
    /// `-l(zeta, mu) + gamma^2 |d|^2`.
    pub iss_bound: f64,
    /// Weight snapshot, kept every `w_log_every` steps and at the end.
    pub w: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum RunOutcome {
    Completed,
    /// The aggregate margin left the barrier domain.
    Unsafe {
        step: usize,
        t: f64,
        detail: String,
    },
    /// Numerical failure.
    Aborted {
        step: usize,
        t: f64,
        detail: String,
    },
}

impl RunOutcome {
    pub fn is_completed(&self) -> bool {
        matches!(self, RunOutcome::Completed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub name: String,
    pub state_dim: usize,
    pub input_dim: usize,
    pub disturbance_dim: usize,
    pub hinf_dim: usize,
    pub weight_dim: usize,
    pub records: Vec<StepRecord>,
    pub outcome: RunOutcome,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub log: TrajectoryLog,
    pub metrics: RunMetrics,
}

/// Closed-loop signals at one point of the extended state.
struct Eval {
    deriv: DVector<f64>,
    zeta: DVector<f64>,
    model: ExtendedModel,
    barrier: BarrierEval,
    u_o: DVector<f64>,
    u_t: DVector<f64>,
    v: f64,
    v_feasible: bool,
    lambda_ref: f64,
    d_phys: DVector<f64>,
    d_hat: DVector<f64>,
    d_channel: DVector<f64>,
    mu_applied: DVector<f64>,
    cos_theta: f64,
    nu: f64,
}

struct Loop<'a> {
    cfg: &'a ScenarioConfig,
    plant: ControlAffinePlant,
    basis: QuadraticBasis,
    cost: CostWeights,
    r_inv: DMatrix<f64>,
}

impl<'a> Loop<'a> {
    fn new(cfg: &'a ScenarioConfig) -> Result<Self> {
        let cost = cfg.cost_weights()?;
        let r = DMatrix::from_diagonal(&DVector::from_row_slice(&cfg.cost.r));
        let r_inv = r.try_inverse().ok_or_else(|| Error::Config("R is singular".into()))?;
        Ok(Self {
            cfg,
            plant: cfg.plant(),
            basis: QuadraticBasis::new(cfg.zeta_dim()),
            cost,
            r_inv,
        })
    }

    fn n(&self) -> usize {
        self.plant.state_dim()
    }

    fn effective_lambda(&self, lambda: f64) -> f64 {
        match self.cfg.fault {
            Some(Fault::FlipSafeguardSign) => -lambda,
            None => lambda,
        }
    }

    /// Build the extended model at `(x, lambda)`; returns the model, the
    /// barrier and the excitation direction.
    fn model_at(
        &self,
        x: &DVector<f64>,
        lambda: f64,
        w: &DVector<f64>,
    ) -> Result<(ExtendedModel, BarrierEval, DVector<f64>, DVector<f64>)> {
        let cfg = self.cfg;
        let barrier = blf_eval(&cfg.safety, &cfg.barrier, &self.plant, x)?;
        let state = ExtendedState {
            x: x.clone(),
            lambda: self.effective_lambda(lambda),
        };
        let g = self.plant.input_map(x);
        let lgb = g.transpose() * &barrier.grad;
        let zeta = ExtendedState { x: x.clone(), lambda }.zeta(&cfg.multiplier);
        let (_, grad_v) = value_and_gradient(&self.basis, w, &zeta);
        let lgv = g.transpose() * grad_v.rows(0, self.n());
        let dir = if cfg.excitation.enabled {
            // both direction modes are built from L_g B
            tangential_direction(&cfg.excitation, &lgv, &lgb)
        } else {
            DVector::zeros(self.plant.input_dim())
        };
        let omega_x = match cfg.hinf_channel {
            HinfChannel::None => DMatrix::zeros(self.n(), 0),
            HinfChannel::Plant => self.plant.disturbance_map(x),
            HinfChannel::Tangential => {
                let col = &g * &dir;
                DMatrix::from_column_slice(self.n(), 1, col.as_slice())
            }
        };
        let model = extended_model(
            &self.plant,
            &cfg.multiplier,
            &state,
            &barrier.grad,
            &omega_x,
            Some(&self.r_inv),
        );
        Ok((model, barrier, dir, lgv))
    }

    /// Closed-loop derivative of `y = [x; lambda; p]`.
    fn eval(&self, t: f64, y: &DVector<f64>, w: &DVector<f64>) -> Result<Eval> {
        let cfg = self.cfg;
        let n = self.n();
        let m = self.plant.input_dim();
        let x = y.rows(0, n).into_owned();
        let lambda = y[n];
        let p = y[n + 1];
        let adaptive = cfg.multiplier.is_adaptive();

        let (model, barrier, dir, lgv) = self.model_at(&x, lambda, w)?;
        let zeta = ExtendedState { x: x.clone(), lambda }.zeta(&cfg.multiplier);
        let g = self.plant.input_map(&x);

        let mu = critic::policy(&self.basis, w, &zeta, &model.g_zeta, &self.cost);
        let u_o = mu.rows(0, m).into_owned();
        let v_des = if adaptive { mu[m] } else { 0.0 };
        let d_hat = critic::worst_case_disturbance(&self.basis, w, &zeta, &model.omega_zeta, cfg.critic.gamma_attn);

        let (u_t, cos_theta, nu) = if cfg.excitation.enabled {
            let lgb = g.transpose() * &barrier.grad;
            let cos = alignment(&lgv, &lgb, cfg.excitation.eps_reg);
            (&dir * (cfg.excitation.k_t * p), cos, trigger(&cfg.excitation, cos))
        } else {
            (DVector::zeros(m), 0.0, 0.0)
        };
        let p_dot = if cfg.excitation.enabled {
            filter_rate(&cfg.excitation, p, nu)
        } else {
            0.0
        };

        let k = self.plant.disturbance_dim();
        let d_phys = match cfg.disturbance.kind {
            DisturbanceKind::None => DVector::zeros(k),
            DisturbanceKind::ExogenousFlow => exogenous_flow(&cfg.disturbance, t, &x)?,
            DisturbanceKind::IsaacsAdversary => {
                let cap = cfg.disturbance.magnitude;
                let norm = d_hat.norm();
                if cap > 0.0 && norm > cap {
                    &d_hat * (cap / norm)
                } else {
                    d_hat.clone()
                }
            }
        };

        let u = &u_o + &model.u_s + &u_t;
        let xdot = self.plant.eval_dynamics(&x, &u, &d_phys)?;

        let (v, v_feasible, lam_ref) = if adaptive {
            let lr = lambda_ref(&cfg.multiplier, barrier.margin.psi);
            let grad_lr = lambda_ref_gradient(&cfg.multiplier, barrier.margin.psi, &barrier.margin.grad);
            let vi = admissible_v(&cfg.multiplier, lambda, lr, &grad_lr, &xdot, v_des);
            (vi.v, vi.feasible, lr)
        } else {
            (0.0, true, f64::NAN)
        };

        let d_channel = match cfg.hinf_channel {
            HinfChannel::None => DVector::zeros(0),
            HinfChannel::Plant => d_phys.clone(),
            HinfChannel::Tangential => DVector::from_element(1, cfg.excitation.k_t * p),
        };
        let mut mu_applied = DVector::zeros(model.g_zeta.ncols());
        mu_applied.rows_mut(0, m).copy_from(&u);
        if adaptive {
            mu_applied[m] = v;
        }

        let mut deriv = DVector::zeros(n + 2);
        deriv.rows_mut(0, n).copy_from(&xdot);
        deriv[n] = v;
        deriv[n + 1] = p_dot;
        Ok(Eval {
            deriv,
            zeta,
            model,
            barrier,
            u_o,
            u_t,
            v,
            v_feasible,
            lambda_ref: lam_ref,
            d_phys,
            d_hat,
            d_channel,
            mu_applied,
            cos_theta,
            nu,
        })
    }

    /// `(delta, rho)` at an arbitrary extended point.
    fn residual_at(&self, zeta: &DVector<f64>, w: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let state = ExtendedState::from_zeta(zeta, self.n(), &self.cfg.multiplier);
        let (model, _, _, _) = self.model_at(&state.x, state.lambda, w)?;
        let s = hamiltonian_error(
            &self.basis,
            w,
            &self.cost,
            self.cfg.critic.gamma_attn,
            zeta,
            &model.f_zeta,
            &model.g_zeta,
            &model.omega_zeta,
        );
        Ok((s.delta, s.rho))
    }

    fn is_safe(&self, zeta: &DVector<f64>) -> bool {
        let x = zeta.rows(0, self.n()).into_owned();
        blf_eval(&self.cfg.safety, &self.cfg.barrier, &self.plant, &x).is_ok()
    }
}

fn initial_weights(cfg: &ScenarioConfig, plant: &ControlAffinePlant, basis: &QuadraticBasis) -> Result<DVector<f64>> {
    match &cfg.critic.w0 {
        WeightInit::Explicit(w) if w.is_empty() => Ok(DVector::zeros(basis.len())),
        WeightInit::Explicit(w) => {
            if w.len() != basis.len() {
                return Err(Error::Config(format!(
                    "critic.w0 has {} entries, the basis has {}",
                    w.len(),
                    basis.len()
                )));
            }
            Ok(DVector::from_row_slice(w))
        }
        WeightInit::Named(name) if name == "lqr" => {
            let (a, b) = plant.linearize_at_origin();
            let q = DMatrix::from_diagonal(&DVector::from_row_slice(&cfg.cost.q));
            let r = DMatrix::from_diagonal(&DVector::from_row_slice(&cfg.cost.r));
            let mult = cfg
                .multiplier
                .is_adaptive()
                .then_some((cfg.multiplier.q_lambda, cfg.multiplier.r_v));
            lqr_fit_init(&a, &b, &q, &r, mult)
        }
        WeightInit::Named(name) => Err(Error::Config(format!("unknown weight initialiser '{name}'"))),
    }
}

/// LQR-fit weights for `cfg`, linearised at the origin, regardless of `critic.w0`.
pub fn lqr_weights(cfg: &ScenarioConfig) -> Result<DVector<f64>> {
    let mut cfg = cfg.clone();
    cfg.critic.w0 = WeightInit::Named("lqr".into());
    initial_weights(&cfg, &cfg.plant(), &QuadraticBasis::new(cfg.zeta_dim()))
}

fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.as_slice().to_vec()
}

/// Run the configured scenario from `cfg.x0`.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunResult> {
    run_from(cfg, &cfg.x0)
}

/// Run every configured start (`x0` then `extra_starts`).
pub fn run_all_starts(cfg: &ScenarioConfig) -> Result<Vec<RunResult>> {
    cfg.starts().iter().map(|x0| run_from(cfg, x0)).collect()
}

/// Run the scenario from a given initial plant state.
pub fn run_from(cfg: &ScenarioConfig, x0: &[f64]) -> Result<RunResult> {
    let mut probe = cfg.clone();
    probe.x0 = x0.to_vec();
    probe.extra_starts.clear();
    probe.validate()?;
    let steps = cfg.steps()?;
    let lp = Loop::new(cfg)?;
    let n = lp.n();
    let m = lp.plant.input_dim();
    let w0 = initial_weights(cfg, &lp.plant, &lp.basis)?;
    let mut critic_state = CriticState::new(
        w0,
        cfg.critic.gamma0,
        cfg.critic.gains,
        cfg.critic.gamma_lo,
        cfg.critic.gamma_hi,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.critic.seed);
    let init = cfg.initial_state(x0);
    let mut y = DVector::zeros(n + 2);
    y.rows_mut(0, n).copy_from(&init.x);
    y[n] = init.lambda;
    y[n + 1] = cfg.excitation.p0;

    let gamma2 = cfg.critic.gamma_attn * cfg.critic.gamma_attn;
    let every = cfg.w_log_every.max(1);
    let mut records: Vec<StepRecord> = Vec::with_capacity(steps + 1);
    let mut outcome = RunOutcome::Completed;
    let mut spectrum = (cfg.critic.gamma0, cfg.critic.gamma0);

    for k in 0..=steps {
        let t = k as f64 * cfg.dt;
        let w = critic_state.w.clone();
        let ev = match lp.eval(t, &y, &w) {
            Ok(ev) => ev,
            Err(e) => {
                outcome = classify(e, k, t);
                break;
            }
        };

        let live = hamiltonian_error(
            &lp.basis,
            &w,
            &lp.cost,
            cfg.critic.gamma_attn,
            &ev.zeta,
            &ev.model.f_zeta,
            &ev.model.g_zeta,
            &ev.model.omega_zeta,
        );
        let points = if cfg.critic.n_samples > 0 {
            sample_points(&ev.zeta, cfg.critic.n_samples, cfg.critic.sample_std, &mut rng, |z| {
                lp.is_safe(z)
            })
        } else {
            Vec::new()
        };
        let mut samples = Vec::with_capacity(points.len());
        let mut sample_failure = None;
        for z in &points {
            match lp.residual_at(z, &w) {
                Ok(s) => samples.push(s),
                Err(e) => {
                    sample_failure = Some(e);
                    break;
                }
            }
        }
        if let Some(e) = sample_failure {
            outcome = classify(e, k, t);
            break;
        }
        let sample_rhos: Vec<DVector<f64>> = samples.iter().map(|(_, r)| r.clone()).collect();
        let pe = pe_metric(&live.rho, &sample_rhos, &cfg.critic.gains);

        let (vhat, grad_v) = value_and_gradient(&lp.basis, &w, &ev.zeta);
        let mut zeta_dot = ev.deriv.rows(0, n).into_owned();
        if cfg.multiplier.is_adaptive() {
            zeta_dot = zeta_dot.push(ev.v);
        }
        let vhat_dot = grad_v.dot(&zeta_dot);
        let state_cost = ev.zeta.dot(&(&lp.cost.q_zeta * &ev.zeta));
        let input_cost = 0.5 * ev.mu_applied.dot(&(&lp.cost.r_zeta * &ev.mu_applied));
        let dist_pow = ev.d_channel.norm_squared();
        let cost_rate = state_cost + input_cost - gamma2 * dist_pow;
        let iss_bound = -(state_cost + input_cost) + gamma2 * dist_pow;

        let cost = match records.last() {
            Some(prev) => prev.cost + 0.5 * (prev.cost_rate + cost_rate) * (t - prev.t),
            None => 0.0,
        };
        let u_s = ev.model.u_s.clone();
        records.push(StepRecord {
            t,
            x: to_vec(&y.rows(0, n).into_owned()),
            lambda: y[n],
            lambda_ref: ev.lambda_ref,
            p: y[n + 1],
            u_o: to_vec(&ev.u_o),
            u_s: to_vec(&u_s),
            u_t: to_vec(&ev.u_t),
            v: ev.v,
            v_feasible: ev.v_feasible,
            d_exo: to_vec(&ev.d_phys),
            d_hat: to_vec(&ev.d_hat),
            h_min: cfg.safety.min_primitive_margin(&y.rows(0, n).into_owned()),
            psi: ev.barrier.margin.psi,
            barrier: ev.barrier.value,
            cos_theta: ev.cos_theta,
            nu: ev.nu,
            delta: live.delta,
            pe,
            gamma_min: spectrum.0,
            gamma_max: spectrum.1,
            cost_rate,
            cost,
            xdot_norm: ev.deriv.rows(0, n).norm(),
            vhat,
            vhat_dot,
            iss_bound,
            w: (k % every == 0 || k == steps).then(|| to_vec(&w)),
        });
        debug_assert_eq!(ev.u_o.len(), m);

        if k == steps {
            break;
        }

        if !cfg.critic.frozen {
            let batch: Vec<(f64, DVector<f64>)> = samples;
            match critic::critic_step(&mut critic_state, (live.delta, &live.rho), &batch, cfg.dt) {
                Ok(s) => spectrum = (s.min, s.max),
                Err(e) => {
                    outcome = classify(e, k, t);
                    break;
                }
            }
        }

        let next = cfg
            .integrator
            .step(|ts, ys| lp.eval(ts, ys, &w).map(|e| e.deriv), t, &y, cfg.dt);
        match next {
            Ok(next) => y = next,
            Err(e) => {
                outcome = classify(e, k + 1, t + cfg.dt);
                break;
            }
        }
    }

    if let Some(last) = records.last_mut() {
        if last.w.is_none() {
            last.w = Some(to_vec(&critic_state.w));
        }
    }
    let log = TrajectoryLog {
        name: cfg.name.clone(),
        state_dim: n,
        input_dim: m,
        disturbance_dim: lp.plant.disturbance_dim(),
        hinf_dim: match cfg.hinf_channel {
            HinfChannel::None => 0,
            HinfChannel::Plant => lp.plant.disturbance_dim(),
            HinfChannel::Tangential => 1,
        },
        weight_dim: lp.basis.len(),
        records,
        outcome,
    };
    let lambda_star = cfg.multiplier.is_adaptive().then_some(cfg.multiplier.lambda_star);
    let metrics = compute_metrics(&log, cfg.trap_radius, cfg.stall_tol, cfg.iss_tol, lambda_star);
    Ok(RunResult { log, metrics })
}

fn classify(e: Error, step: usize, t: f64) -> RunOutcome {
    match e {
        Error::BarrierDomain { .. } => RunOutcome::Unsafe {
            step,
            t,
            detail: e.to_string(),
        },
        other => RunOutcome::Aborted {
            step,
            t,
            detail: other.to_string(),
        },
    }
}

/// Trapezoidal `int |u_t|^2 dt` over the log.
pub fn excitation_energy(log: &TrajectoryLog) -> f64 {
    let ts: Vec<f64> = log.records.iter().map(|r| r.t).collect();
    let ys: Vec<f64> = log.records.iter().map(|r| r.u_t.iter().map(|u| u * u).sum()).collect();
    trapezoid(&ts, &ys)
}
