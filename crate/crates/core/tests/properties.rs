use barrier_critic::critic::{policy, CostWeights, QuadraticBasis};
use barrier_critic::excitation::{tangential_direction, DirectionMode, ExcitationConfig};
use barrier_critic::plants::{
    exogenous_flow, ControlAffinePlant, DisturbanceKind, DisturbanceSignal, FlowParams, PlantKind,
};
use barrier_critic::safeguard::{lambda_ref, MultiplierConfig};
use barrier_critic::safesets::{blf_eval, softmin, BarrierParams, PrimitiveConstraint, SafetySpec};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0..50.0f64, 1..10)
}

fn disk_spec(center: [f64; 2]) -> SafetySpec {
    SafetySpec {
        constraints: vec![PrimitiveConstraint::DiskExterior { center, radius: 1.0 }],
        beta: 12.0,
        order: 1,
        k_ho: 0.0,
        phi: 0.0,
        robust: false,
    }
}

proptest! {
    #[test]
    fn softmin_between_bounds(v in values(), beta in 0.1..100.0f64) {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let s = softmin(&v, beta).unwrap();
        let slack = 1e-12 * (1.0 + lo.abs());
        prop_assert!(s <= lo + slack);
        prop_assert!(s >= lo - (v.len() as f64).ln() / beta - slack);
    }

    #[test]
    fn softmin_permutation_invariant(v in values(), beta in 0.1..100.0f64, shift in 0usize..10) {
        let mut w = v.clone();
        w.rotate_left(shift % v.len());
        w.reverse();
        let a = softmin(&v, beta).unwrap();
        let b = softmin(&w, beta).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn softmin_monotone(v in values(), beta in 0.1..100.0f64, idx in 0usize..10, bump in 0.0..5.0f64) {
        let mut w = v.clone();
        let i = idx % v.len();
        w[i] += bump;
        prop_assert!(softmin(&w, beta).unwrap() >= softmin(&v, beta).unwrap() - 1e-12);
    }

    #[test]
    fn tanh_drift_is_norm_preserving(x1 in -20.0..20.0f64, x2 in -20.0..20.0f64) {
        let p = ControlAffinePlant::new(PlantKind::TanhRd1);
        let x = DVector::from_row_slice(&[x1, x2]);
        prop_assert!(x.dot(&p.drift(&x)).abs() < 1e-10);
    }

    #[test]
    fn tangential_direction_is_orthogonal(
        lgv in prop::collection::vec(-10.0..10.0f64, 2),
        lgb in prop::collection::vec(-10.0..10.0f64, 2),
        rotation in any::<bool>(),
    ) {
        let cfg = ExcitationConfig {
            direction_mode: if rotation { DirectionMode::Rotation2d } else { DirectionMode::Projection },
            ..ExcitationConfig::default()
        };
        let lgv = DVector::from_vec(lgv);
        let lgb = DVector::from_vec(lgb);
        let t = tangential_direction(&cfg, &lgv, &lgb);
        prop_assert!(t.dot(&lgb).abs() <= 1e-8 * lgb.norm().max(1.0));
        prop_assert!(t.norm() <= 1.0 + 1e-12);
    }

    #[test]
    fn basis_jacobian_matches_differences(z in prop::collection::vec(-5.0..5.0f64, 1..6)) {
        let z = DVector::from_vec(z);
        let basis = QuadraticBasis::new(z.len());
        let jac = basis.jacobian(&z);
        let h = 1e-3;
        for i in 0..z.len() {
            let (mut a, mut b) = (z.clone(), z.clone());
            a[i] += h;
            b[i] -= h;
            let fd = (basis.features(&a) - basis.features(&b)) / (2.0 * h);
            for j in 0..basis.len() {
                prop_assert!((fd[j] - jac[(j, i)]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn policy_is_linear_in_weights(
        w1 in prop::collection::vec(-3.0..3.0f64, 3),
        w2 in prop::collection::vec(-3.0..3.0f64, 3),
        z in prop::collection::vec(-3.0..3.0f64, 2),
        a in -2.0..2.0f64,
    ) {
        let basis = QuadraticBasis::new(2);
        let cost = CostWeights::from_diagonals(&[1.0, 1.0], &[2.0, 0.5]).unwrap();
        let g = DMatrix::identity(2, 2);
        let z = DVector::from_vec(z);
        let (w1, w2) = (DVector::from_vec(w1), DVector::from_vec(w2));
        let combined = policy(&basis, &(&w1 * a + &w2), &z, &g, &cost);
        let separate = policy(&basis, &w1, &z, &g, &cost) * a + policy(&basis, &w2, &z, &g, &cost);
        prop_assert!((combined - separate).norm() < 1e-10);
    }

    #[test]
    fn flow_respects_magnitude(
        x in prop::collection::vec(-20.0..20.0f64, 4),
        t in 0.0..100.0f64,
        magnitude in 0.0..3.0f64,
        rotation in -3.0..3.0f64,
    ) {
        let signal = DisturbanceSignal {
            kind: DisturbanceKind::ExogenousFlow,
            magnitude,
            flow: FlowParams { constant: [0.4, -0.3], rotation, center: [1.0, -2.0], omega: 0.7, pulse: 0.3 },
        };
        let d = exogenous_flow(&signal, t, &DVector::from_vec(x)).unwrap();
        prop_assert!(d.norm() <= magnitude + 1e-12);
    }

    #[test]
    fn lambda_ref_stays_in_band(h in -100.0..100.0f64) {
        let cfg = MultiplierConfig { lambda_min: 0.2, delta_lambda: 4.0, h0: 1.0, delta_h: 3.0, ..MultiplierConfig::default() };
        let l = lambda_ref(&cfg, h);
        prop_assert!((0.2..=4.2).contains(&l));
    }

    /// Walking toward the disk along a ray, the barrier grows once the margin
    /// is below one half.
    #[test]
    fn barrier_grows_toward_boundary(angle in 0.0..std::f64::consts::TAU, cx in -5.0..5.0f64, cy in -5.0..5.0f64) {
        let spec = disk_spec([cx, cy]);
        let plant = ControlAffinePlant::new(PlantKind::SingleIntegrator2d);
        let params = BarrierParams::default();
        let dir = [angle.cos(), angle.sin()];
        let mut last = f64::NEG_INFINITY;
        for k in 0..20 {
            // h = (1 + s)^2 - 1 runs from about 0.5 down to 2e-4
            let s = 0.22 * (1e-4f64 / 0.22).powf(k as f64 / 19.0);
            let x = DVector::from_row_slice(&[cx + (1.0 + s) * dir[0], cy + (1.0 + s) * dir[1]]);
            if x.norm() < 1e-3 {
                continue;
            }
            let b = blf_eval(&spec, &params, &plant, &x).unwrap();
            prop_assert!(b.margin.psi < 0.5);
            prop_assert!(b.value > last);
            last = b.value;
        }
    }
}
