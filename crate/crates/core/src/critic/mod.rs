//! Quadratic-basis value approximation on the extended state, the saddle-point
//! policies it induces, and the concurrent-learning least-squares update.

pub mod riccati;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Monomials `zeta_i zeta_j`, `i <= j`: the squares `zeta_1^2 .. zeta_n^2`
/// first, then the cross terms in lexicographic order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadraticBasis {
    dim: usize,
}

impl QuadraticBasis {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.dim * (self.dim + 1) / 2
    }

    pub fn is_empty(&self) -> bool {
        self.dim == 0
    }

    /// Index pairs in feature order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = (0..self.dim).map(|i| (i, i)).collect();
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                out.push((i, j));
            }
        }
        out
    }

    pub fn features(&self, zeta: &DVector<f64>) -> DVector<f64> {
        let pairs = self.pairs();
        DVector::from_iterator(pairs.len(), pairs.iter().map(|&(i, j)| zeta[i] * zeta[j]))
    }

    /// `d sigma / d zeta`, shape `J x n`.
    pub fn jacobian(&self, zeta: &DVector<f64>) -> DMatrix<f64> {
        let pairs = self.pairs();
        let mut jac = DMatrix::zeros(pairs.len(), self.dim);
        for (row, &(i, j)) in pairs.iter().enumerate() {
            if i == j {
                jac[(row, i)] = 2.0 * zeta[i];
            } else {
                jac[(row, i)] = zeta[j];
                jac[(row, j)] = zeta[i];
            }
        }
        jac
    }

    /// Weights representing `zeta' P zeta`.
    pub fn weights_from_quadratic_form(&self, p: &DMatrix<f64>) -> DVector<f64> {
        let pairs = self.pairs();
        DVector::from_iterator(
            pairs.len(),
            pairs
                .iter()
                .map(|&(i, j)| if i == j { p[(i, i)] } else { p[(i, j)] + p[(j, i)] }),
        )
    }

    /// Symmetric `P` with `W' sigma(zeta) = zeta' P zeta`.
    pub fn quadratic_form(&self, w: &DVector<f64>) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(self.dim, self.dim);
        for (k, &(i, j)) in self.pairs().iter().enumerate() {
            if i == j {
                p[(i, i)] = w[k];
            } else {
                p[(i, j)] = 0.5 * w[k];
                p[(j, i)] = 0.5 * w[k];
            }
        }
        p
    }
}

/// `V = W' sigma(zeta)` and `grad V = (d sigma / d zeta)' W`.
pub fn value_and_gradient(basis: &QuadraticBasis, w: &DVector<f64>, zeta: &DVector<f64>) -> (f64, DVector<f64>) {
    let value = w.dot(&basis.features(zeta));
    let grad = basis.jacobian(zeta).transpose() * w;
    (value, grad)
}

/// Initial critic weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightInit {
    Explicit(Vec<f64>),
    /// `"lqr"`: fit from the Riccati solution of the linearization.
    Named(String),
}

impl Default for WeightInit {
    fn default() -> Self {
        WeightInit::Explicit(Vec::new())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticGains {
    pub k1: f64,
    pub k2: f64,
    pub eta: f64,
    pub k3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CriticConfig {
    pub w0: WeightInit,
    /// `Gamma(0) = gamma0 * I`.
    pub gamma0: f64,
    pub gains: CriticGains,
    pub n_samples: usize,
    pub sample_std: f64,
    /// H-infinity attenuation level.
    pub gamma_attn: f64,
    pub gamma_lo: f64,
    pub gamma_hi: f64,
    pub seed: u64,
    /// Freeze the weights (evaluate policies only).
    pub frozen: bool,
}

impl Default for CriticConfig {
    fn default() -> Self {
        Self {
            w0: WeightInit::default(),
            gamma0: 1.0,
            gains: CriticGains {
                k1: 0.05,
                k2: 0.05,
                eta: 0.01,
                k3: 1.0,
            },
            n_samples: 10,
            sample_std: 0.05,
            gamma_attn: 2.0,
            gamma_lo: 1e-4,
            gamma_hi: 1e4,
            seed: 0,
            frozen: false,
        }
    }
}

impl CriticConfig {
    pub fn validate(&self) -> Result<()> {
        let g = &self.gains;
        if g.k1 < 0.0 || g.k2 < 0.0 || g.eta < 0.0 || g.k3 < 0.0 {
            return Err(Error::Config("critic gains must be non-negative".into()));
        }
        if !(self.gamma0 > 0.0 && self.gamma_lo > 0.0 && self.gamma_hi >= self.gamma_lo) {
            return Err(Error::Config(format!(
                "need gamma0 > 0 and 0 < gamma_lo <= gamma_hi, got {} / [{}, {}]",
                self.gamma0, self.gamma_lo, self.gamma_hi
            )));
        }
        if !(self.gamma_attn > 0.0) {
            return Err(Error::Config("attenuation level must be > 0".into()));
        }
        if self.sample_std < 0.0 {
            return Err(Error::Config("sample_std must be >= 0".into()));
        }
        Ok(())
    }
}

/// `Q_zeta = diag(Q, q_lambda)`, `R_zeta = diag(R, r_v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostWeights {
    pub q_zeta: DMatrix<f64>,
    pub r_zeta: DMatrix<f64>,
    pub r_zeta_inv: DMatrix<f64>,
}

impl CostWeights {
    pub fn new(q_zeta: DMatrix<f64>, r_zeta: DMatrix<f64>) -> Result<Self> {
        let r_zeta_inv = r_zeta
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Config("R_zeta is singular".into()))?;
        Ok(Self {
            q_zeta,
            r_zeta,
            r_zeta_inv,
        })
    }

    pub fn from_diagonals(q: &[f64], r: &[f64]) -> Result<Self> {
        Self::new(
            DMatrix::from_diagonal(&DVector::from_row_slice(q)),
            DMatrix::from_diagonal(&DVector::from_row_slice(r)),
        )
    }

    /// `zeta'Q zeta + 1/2 mu'R mu - gamma^2 |d|^2`.
    pub fn running_cost(&self, zeta: &DVector<f64>, mu: &DVector<f64>, d: &DVector<f64>, gamma: f64) -> f64 {
        zeta.dot(&(&self.q_zeta * zeta)) + 0.5 * mu.dot(&(&self.r_zeta * mu)) - gamma * gamma * d.norm_squared()
    }
}

/// Learning state: weights, least-squares gain and gains.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticState {
    pub w: DVector<f64>,
    pub gamma: DMatrix<f64>,
    pub gains: CriticGains,
    pub gamma_lo: f64,
    pub gamma_hi: f64,
}

impl CriticState {
    pub fn new(w: DVector<f64>, gamma0: f64, gains: CriticGains, gamma_lo: f64, gamma_hi: f64) -> Self {
        let j = w.len();
        Self {
            w,
            gamma: DMatrix::identity(j, j) * gamma0,
            gains,
            gamma_lo,
            gamma_hi,
        }
    }
}

/// `mu = -R^-1 G' grad V`.
pub fn policy(
    basis: &QuadraticBasis,
    w: &DVector<f64>,
    zeta: &DVector<f64>,
    g_zeta: &DMatrix<f64>,
    cost: &CostWeights,
) -> DVector<f64> {
    let (_, grad) = value_and_gradient(basis, w, zeta);
    -(&cost.r_zeta_inv * (g_zeta.transpose() * grad))
}

/// `d = Omega' grad V / (2 gamma^2)`.
pub fn worst_case_disturbance(
    basis: &QuadraticBasis,
    w: &DVector<f64>,
    zeta: &DVector<f64>,
    omega_zeta: &DMatrix<f64>,
    gamma_attn: f64,
) -> DVector<f64> {
    let (_, grad) = value_and_gradient(basis, w, zeta);
    omega_zeta.transpose() * grad / (2.0 * gamma_attn * gamma_attn)
}

/// Hamiltonian error at one point together with its regressor.
#[derive(Debug, Clone)]
pub struct HamiltonianSample {
    pub delta: f64,
    pub rho: DVector<f64>,
    pub mu: DVector<f64>,
    pub d: DVector<f64>,
    /// `F + G mu + Omega d`.
    pub flow: DVector<f64>,
    /// Running cost at `(zeta, mu, d)`.
    pub cost: f64,
}

/// `delta = l(zeta, mu, d) + grad V'(F + G mu + Omega d)` with the policies
/// induced by `w`, and `rho = (d sigma / d zeta)(F + G mu + Omega d)`.
#[allow(clippy::too_many_arguments)]
pub fn hamiltonian_error(
    basis: &QuadraticBasis,
    w: &DVector<f64>,
    cost: &CostWeights,
    gamma_attn: f64,
    zeta: &DVector<f64>,
    f_zeta: &DVector<f64>,
    g_zeta: &DMatrix<f64>,
    omega_zeta: &DMatrix<f64>,
) -> HamiltonianSample {
    let jac = basis.jacobian(zeta);
    let grad = jac.transpose() * w;
    let mu = -(&cost.r_zeta_inv * (g_zeta.transpose() * &grad));
    let d = omega_zeta.transpose() * &grad / (2.0 * gamma_attn * gamma_attn);
    let flow = f_zeta + g_zeta * &mu + omega_zeta * &d;
    let running = cost.running_cost(zeta, &mu, &d, gamma_attn);
    let delta = running + grad.dot(&flow);
    let rho = jac * &flow;
    HamiltonianSample {
        delta,
        rho,
        mu,
        d,
        flow,
        cost: running,
    }
}

/// `N` Gaussian perturbations of `zeta`. A perturbation failing `is_safe` is
/// redrawn up to ten times and otherwise pulled back along its direction to
/// the last safe point.
pub fn sample_points<R: Rng + ?Sized, F: Fn(&DVector<f64>) -> bool>(
    zeta: &DVector<f64>,
    n: usize,
    sample_std: f64,
    rng: &mut R,
    is_safe: F,
) -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity(n);
    if sample_std <= 0.0 {
        out.resize(n, zeta.clone());
        return out;
    }
    let normal = Normal::new(0.0, sample_std).expect("positive spread");
    for _ in 0..n {
        let mut candidate = None;
        let mut last_dir = DVector::zeros(zeta.len());
        for _ in 0..10 {
            let dir = DVector::from_fn(zeta.len(), |_, _| normal.sample(rng));
            let point = zeta + &dir;
            if is_safe(&point) {
                candidate = Some(point);
                break;
            }
            last_dir = dir;
        }
        let point = candidate.unwrap_or_else(|| {
            // bisect for the largest safe fraction of the last perturbation
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                if is_safe(&(zeta + &last_dir * mid)) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            zeta + &last_dir * lo
        });
        out.push(point);
    }
    out
}

fn normalised_outer_sum(gains: &CriticGains, live: &DVector<f64>, samples: &[DVector<f64>]) -> DMatrix<f64> {
    let j = live.len();
    let mut acc = live * live.transpose() * (gains.k1 / (1.0 + gains.k3 * live.norm_squared()));
    if !samples.is_empty() {
        let scale = gains.k2 / samples.len() as f64;
        for rho in samples {
            acc += rho * rho.transpose() * (scale / (1.0 + gains.k3 * rho.norm_squared()));
        }
    }
    debug_assert_eq!(acc.nrows(), j);
    acc
}

/// Minimum eigenvalue of `k1 rho rho'/xi^2 + k2/N sum rho_i rho_i'/xi_i^2`.
pub fn pe_metric(live: &DVector<f64>, samples: &[DVector<f64>], gains: &CriticGains) -> f64 {
    let m = normalised_outer_sum(gains, live, samples);
    let eig = SymmetricEigen::new(m).eigenvalues;
    eig.iter().copied().fold(f64::INFINITY, f64::min).max(0.0)
}

/// Spectrum bounds of the gain matrix after a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainSpectrum {
    pub min: f64,
    pub max: f64,
}

/// One Euler step of the weight and gain laws; the gain is re-symmetrised
/// and its eigenvalues clamped to `[gamma_lo, gamma_hi]`.
pub fn critic_step(
    state: &mut CriticState,
    live: (f64, &DVector<f64>),
    samples: &[(f64, DVector<f64>)],
    dt: f64,
) -> Result<GainSpectrum> {
    let gains = state.gains;
    let (delta, rho) = live;
    let xi2 = 1.0 + gains.k3 * rho.norm_squared();

    let mut w_drive = rho * (gains.k1 * delta / xi2);
    let mut info = rho * rho.transpose() * (gains.k1 / xi2);
    if !samples.is_empty() {
        let scale = gains.k2 / samples.len() as f64;
        for (d_i, rho_i) in samples {
            let xi2_i = 1.0 + gains.k3 * rho_i.norm_squared();
            w_drive.axpy(scale * d_i / xi2_i, rho_i, 1.0);
            info += rho_i * rho_i.transpose() * (scale / xi2_i);
        }
    }

    let g = &state.gamma;
    let w_dot = -(g * &w_drive);
    let gamma_dot = g * gains.eta - g * &info * g;

    let w_next = &state.w + w_dot * dt;
    let raw = g + gamma_dot * dt;
    let sym = (&raw + raw.transpose()) * 0.5;
    if !sym.iter().all(|v| v.is_finite()) || !w_next.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { map: "critic update" });
    }
    let eig = SymmetricEigen::new(sym);
    let pre_min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if pre_min <= 0.0 {
        return Err(Error::GainNotPositiveDefinite { min_eig: pre_min });
    }
    let clamped = eig.eigenvalues.map(|l| l.clamp(state.gamma_lo, state.gamma_hi));
    let gamma = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();

    state.w = w_next;
    state.gamma = (&gamma + gamma.transpose()) * 0.5;
    Ok(GainSpectrum {
        min: clamped.iter().copied().fold(f64::INFINITY, f64::min),
        max: clamped.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Critic weights from the Riccati solution at the origin. With
/// `multiplier = Some((q_lambda, r_v))` a decoupled scalar block for the
/// multiplier coordinate is appended.
pub fn lqr_fit_init(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    multiplier: Option<(f64, f64)>,
) -> Result<DVector<f64>> {
    let p = riccati::solve_care(a, b, q, r)?;
    let n = p.nrows();
    let full = match multiplier {
        None => p,
        Some((q_lambda, r_v)) => {
            if !(r_v > 0.0) || q_lambda < 0.0 {
                return Err(Error::Init(
                    "multiplier cost weights must satisfy r_v > 0, q >= 0".into(),
                ));
            }
            let mut full = DMatrix::zeros(n + 1, n + 1);
            full.view_mut((0, 0), (n, n)).copy_from(&p);
            // -2 P^2 / r_v + q_lambda = 0
            full[(n, n)] = (q_lambda * r_v / 2.0).sqrt();
            full
        }
    };
    Ok(QuadraticBasis::new(full.nrows()).weights_from_quadratic_form(&full))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    fn scalar_cost() -> CostWeights {
        CostWeights::from_diagonals(&[1.0], &[1.0]).unwrap()
    }

    #[test]
    fn basis_layout() {
        let b = QuadraticBasis::new(3);
        assert_eq!(b.len(), 6);
        assert_eq!(b.pairs(), vec![(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)]);
        let z = v(&[1.0, 2.0, 3.0]);
        assert_eq!(b.features(&z).as_slice(), &[1.0, 4.0, 9.0, 2.0, 3.0, 6.0]);
        let zero = DVector::zeros(3);
        assert_eq!(b.features(&zero).norm(), 0.0);
        assert_eq!(b.jacobian(&zero).norm(), 0.0);
    }

    #[test]
    fn quadratic_form_round_trip() {
        let b = QuadraticBasis::new(3);
        let w = v(&[0.5, 1.0, 0.2, 0.0, 0.0, 0.2]);
        let p = b.quadratic_form(&w);
        assert_eq!(b.weights_from_quadratic_form(&p), w);
        let z = v(&[0.3, -1.1, 2.0]);
        assert_abs_diff_eq!(z.dot(&(&p * &z)), value_and_gradient(&b, &w, &z).0, epsilon = 1e-14);
    }

    #[test]
    fn value_examples() {
        let b = QuadraticBasis::new(1);
        let (v0, g0) = value_and_gradient(&b, &v(&[0.0]), &v(&[3.0]));
        assert_eq!((v0, g0[0]), (0.0, 0.0));
        let (val, grad) = value_and_gradient(&b, &v(&[0.5]), &v(&[3.0]));
        assert_eq!(val, 4.5);
        assert_eq!(grad[0], 3.0);
        let b3 = QuadraticBasis::new(3);
        let (at_origin, _) = value_and_gradient(&b3, &v(&[3.0, -1.0, 7.0, 2.0, 2.0, 2.0]), &DVector::zeros(3));
        assert_eq!(at_origin, 0.0);
    }

    #[test]
    fn scalar_lq_policies() {
        let b = QuadraticBasis::new(1);
        let w = v(&[0.5f64.sqrt()]);
        let g = DMatrix::from_element(1, 1, 1.0);
        for x in [-2.0, 0.3, 1.7] {
            let mu = policy(&b, &w, &v(&[x]), &g, &scalar_cost());
            assert_abs_diff_eq!(mu[0], -(2f64.sqrt()) * x, epsilon = 1e-14);
            let d = worst_case_disturbance(&b, &w, &v(&[x]), &g, 2.0);
            assert_abs_diff_eq!(d[0], 2f64.sqrt() / 8.0 * x, epsilon = 1e-14);
        }
        assert_eq!(policy(&b, &v(&[0.0]), &v(&[1.0]), &g, &scalar_cost())[0], 0.0);
        assert_eq!(worst_case_disturbance(&b, &v(&[0.0]), &v(&[1.0]), &g, 2.0)[0], 0.0);
    }

    #[test]
    fn block_structure_separates_inputs() {
        let b = QuadraticBasis::new(3);
        let mut g = DMatrix::zeros(3, 3);
        g[(0, 0)] = 1.0;
        g[(1, 1)] = 1.0;
        g[(2, 2)] = 1.0;
        let cost = CostWeights::from_diagonals(&[1.0, 1.0, 1.0], &[1.0, 1.0, 0.5]).unwrap();
        // only lambda~^2 weight: u must vanish, v must not
        let w = v(&[0.0, 0.0, 0.7, 0.0, 0.0, 0.0]);
        let mu = policy(&b, &w, &v(&[1.0, -2.0, 0.5]), &g, &cost);
        assert_eq!(&mu.as_slice()[..2], &[0.0, 0.0]);
        assert_abs_diff_eq!(mu[2], -2.0 * 0.7 * 0.5 / 0.5, epsilon = 1e-14);

        let mut omega = DMatrix::zeros(3, 2);
        omega[(0, 0)] = 1.0;
        omega[(1, 1)] = 1.0;
        let d = worst_case_disturbance(&b, &w, &v(&[1.0, -2.0, 0.5]), &omega, 2.0);
        assert_eq!(d.norm(), 0.0);
    }

    #[test]
    fn exact_scalar_solution_has_zero_residual() {
        let b = QuadraticBasis::new(1);
        let w = v(&[0.5f64.sqrt()]);
        let g = DMatrix::from_element(1, 1, 1.0);
        let omega = DMatrix::zeros(1, 0);
        for x in [-3.0, -0.1, 0.0, 0.8, 5.0] {
            let s = hamiltonian_error(&b, &w, &scalar_cost(), 2.0, &v(&[x]), &v(&[0.0]), &g, &omega);
            assert!(s.delta.abs() < 1e-10);
        }
    }

    #[test]
    fn zero_weights_residual_is_state_cost() {
        let b = QuadraticBasis::new(2);
        let cost = CostWeights::from_diagonals(&[2.0, 2.0], &[1.0, 1.0]).unwrap();
        let g = DMatrix::identity(2, 2);
        let omega = DMatrix::zeros(2, 0);
        let w = DVector::zeros(3);
        let at0 = hamiltonian_error(&b, &w, &cost, 2.0, &v(&[0.0, 0.0]), &v(&[0.0, 0.0]), &g, &omega);
        assert_eq!(at0.delta, 0.0);
        let z = v(&[1.0, -0.5]);
        let s = hamiltonian_error(&b, &w, &cost, 2.0, &z, &v(&[0.3, 0.2]), &g, &omega);
        assert_abs_diff_eq!(s.delta, 2.5, epsilon = 1e-14);
    }

    #[test]
    fn sampling_examples() {
        let z = v(&[1.0, 2.0, 0.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let copies = sample_points(&z, 4, 0.0, &mut rng, |_| true);
        assert!(copies.iter().all(|p| *p == z));

        let a = sample_points(&z, 10, 0.05, &mut ChaCha8Rng::seed_from_u64(11), |_| true);
        let b = sample_points(&z, 10, 0.05, &mut ChaCha8Rng::seed_from_u64(11), |_| true);
        assert_eq!(a, b);

        // half-plane x0 > 1 is "safe"; every sample must land in it
        let safe = |p: &DVector<f64>| p[0] > 1.0 - 1e-3;
        let edge = v(&[1.0, 0.0, 0.0]);
        let pts = sample_points(&edge, 50, 0.5, &mut ChaCha8Rng::seed_from_u64(5), safe);
        assert!(pts.iter().all(safe));
    }

    #[test]
    fn zero_residual_leaves_weights_and_grows_gain() {
        let gains = CriticGains {
            k1: 0.1,
            k2: 0.1,
            eta: 0.05,
            k3: 1.0,
        };
        let mut st = CriticState::new(v(&[0.3, -0.2]), 1.0, gains, 1e-4, 1e4);
        let w0 = st.w.clone();
        let zero_rho = DVector::zeros(2);
        let dt = 1e-2;
        let spec = critic_step(&mut st, (0.0, &zero_rho), &[(0.0, zero_rho.clone())], dt).unwrap();
        assert_eq!(st.w, w0);
        assert_abs_diff_eq!(spec.max, 1.0 + gains.eta * dt, epsilon = 1e-14);

        let clamp = CriticState::new(v(&[0.3, -0.2]), 1e4, gains, 1e-4, 1e4);
        let mut clamp = clamp;
        let spec = critic_step(&mut clamp, (0.0, &zero_rho), &[], dt).unwrap();
        assert_abs_diff_eq!(spec.max, 1e4, epsilon = 1e-9);
    }

    #[test]
    fn zero_learning_gains_freeze_weights() {
        let gains = CriticGains {
            k1: 0.0,
            k2: 0.0,
            eta: 0.01,
            k3: 1.0,
        };
        let mut st = CriticState::new(v(&[1.0, 2.0]), 1.0, gains, 1e-4, 1e4);
        let rho = v(&[0.4, -1.0]);
        critic_step(&mut st, (3.0, &rho), &[(1.0, rho.clone())], 1e-3).unwrap();
        assert_eq!(st.w.as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn scalar_weight_error_contracts_geometrically() {
        // delta = -W~ rho with rho = 1 and W~ = W* - W
        let gains = CriticGains {
            k1: 0.5,
            k2: 0.0,
            eta: 0.2,
            k3: 1.0,
        };
        let w_star = 0.8;
        let mut st = CriticState::new(v(&[0.1]), 1.0, gains, 1e-4, 1e4);
        let rho = v(&[1.0]);
        let dt = 1e-2;
        let xi2 = 2.0;
        let mut gamma = 1.0;
        let mut err = w_star - 0.1;
        for _ in 0..500 {
            let tilde = w_star - st.w[0];
            critic_step(&mut st, (-tilde, &rho), &[], dt).unwrap();
            err *= 1.0 - dt * gains.k1 * gamma / xi2;
            gamma += dt * (gains.eta * gamma - gains.k1 * gamma * gamma / xi2);
            assert_abs_diff_eq!(w_star - st.w[0], err, epsilon = 1e-12);
        }
        assert!(err.abs() < 0.35 * 0.7);
    }

    #[test]
    fn pe_metric_examples() {
        let gains = CriticGains {
            k1: 1.0,
            k2: 1.0,
            eta: 0.0,
            k3: 0.0,
        };
        assert_abs_diff_eq!(pe_metric(&v(&[1.0, 0.0]), &[], &gains), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            pe_metric(&v(&[1.0, 0.0]), &[v(&[0.0, 1.0])], &gains),
            1.0,
            epsilon = 1e-14
        );
        assert_eq!(pe_metric(&DVector::zeros(2), &[DVector::zeros(2)], &gains), 0.0);
    }

    #[test]
    fn lqr_examples() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let w = lqr_fit_init(&DMatrix::zeros(1, 1), &one, &one, &one, None).unwrap();
        assert_abs_diff_eq!(w[0], 0.5f64.sqrt(), epsilon = 1e-12);

        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -3.0]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let w = lqr_fit_init(&a, &b, &DMatrix::zeros(2, 2), &one, None).unwrap();
        assert!(w.norm() < 1e-14);

        let w = lqr_fit_init(&DMatrix::zeros(1, 1), &one, &one, &one, Some((2.0, 0.5))).unwrap();
        assert_eq!(w.len(), 3);
        assert_abs_diff_eq!(w[1], 0.5f64.sqrt(), epsilon = 1e-14);
        assert_eq!(w[2], 0.0);
    }
}
