mod common;

use cgns::{run_filter, run_smoother, simulate_path, GaussianState, TimeGrid};
use common::{discrete_kalman, gbm_strong_errors, kalman_bucy, max_moment_diff, rts, Lti};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn check_against_oracles(lti: &Lti, seed: u64, n: usize, dt: f64) -> (f64, f64, f64, f64) {
    let model = lti.model();
    let l = lti.dim();
    let grid = TimeGrid::with_steps(0.0, dt, n).unwrap();
    let tr = simulate_path(&model, &DVector::zeros(1), &DVector::zeros(l), &grid, seed).unwrap();
    let init = GaussianState::default_init(l);
    let filt = run_filter(&model, &tr.x_path, &grid, &init).unwrap();
    let smo = run_smoother(&model, &tr.x_path, &grid, &filt).unwrap();
    let x: Vec<f64> = tr.x_path.column(0).iter().copied().collect();
    let kf = kalman_bucy(lti, &x, dt, init.mean.clone(), init.cov.clone());
    let sm = rts(lti, &kf, dt);
    let (fm, fp) = max_moment_diff(&filt.states, &kf);
    let (sm_m, sm_p) = max_moment_diff(&smo.states, &sm);
    (fm, fp, sm_m, sm_p)
}

#[test]
fn scalar_filter_and_smoother_match_kalman_rts() {
    let lti = Lti::scalar(1.0, -1.0, 1.0, 1.0);
    let (fm, fp, sm, sp) = check_against_oracles(&lti, 3, 10_000, 1e-3);
    assert!(fm <= 1e-10 && fp <= 1e-10, "filter {fm:e} {fp:e}");
    assert!(sm <= 1e-8 && sp <= 1e-8, "smoother {sm:e} {sp:e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn random_lti_models_match_oracles(seed in any::<u64>(), two in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lti = Lti::random(&mut rng, if two { 2 } else { 1 });
        let (fm, fp, sm, sp) = check_against_oracles(&lti, seed, 4000, 1e-3);
        prop_assert!(fm <= 1e-10 && fp <= 1e-10, "filter {:e} {:e}", fm, fp);
        prop_assert!(sm <= 1e-8 && sp <= 1e-8, "smoother {:e} {:e}", sm, sp);
    }
}

/// The exact discrete Kalman filter of the sampled system differs from the
/// Euler-stepped Kalman–Bucy filter at first order in dt.
#[test]
fn exact_discrete_kalman_gap_is_first_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let lti = Lti::random(&mut rng, 2);
    let model = lti.model();
    let gap = |dt: f64| {
        let n = (4.0 / dt).round() as usize;
        let grid = TimeGrid::with_steps(0.0, dt, n).unwrap();
        let x: Vec<f64> = (0..=n).map(|j| (j as f64 * dt).sin()).collect();
        let path = DMatrix::from_column_slice(n + 1, 1, &x);
        let init = GaussianState::default_init(2);
        let filt = run_filter(&model, &path, &grid, &init).unwrap();
        let kf = discrete_kalman(&lti, &x, dt, init.mean.clone(), init.cov.clone());
        let (dm, dp) = max_moment_diff(&filt.states, &kf);
        dm.max(dp)
    };
    let (g1, g2, g3) = (gap(4e-3), gap(2e-3), gap(1e-3));
    assert!(g1 > 1e-6, "gap {g1:e} should be visible");
    for r in [g1 / g2, g2 / g3] {
        assert!((1.7..2.3).contains(&r), "ratios {} {}", g1 / g2, g2 / g3);
    }
}

#[test]
fn euler_maruyama_strong_order_half() {
    let e = gbm_strong_errors(0.5, 1.0, 1.0, 1e-3, &[4e-3, 2e-3, 1e-3], 200, 17);
    let (r1, r2) = (e[0] / e[1], e[1] / e[2]);
    assert!(e[0] > e[1] && e[1] > e[2], "{e:?}");
    assert!((1.25..=1.65).contains(&r1) && (1.25..=1.65).contains(&r2), "ratios {r1} {r2}");
}
