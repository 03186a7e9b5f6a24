use cgns::diagnostics::{acf, acf_decomposition, after, fit_decay_rate};
use cgns::model::{CoefficientSnapshot, Dims, FnModel};
use cgns::sampler::{consistency_report, SamplerPlan};
use cgns::{run_filter, run_smoother, simulate_path, GaussianState, LinearModel, TimeGrid};
use nalgebra::DVector;

fn scalar_setup(t_end: f64, seed: u64) -> (LinearModel, cgns::Trajectory, cgns::PosteriorSeries, cgns::PosteriorSeries) {
    let model = LinearModel::scalar(1.0, -1.0, 1.0, 1.0);
    let grid = TimeGrid::new(0.0, t_end, 1e-3).unwrap();
    let tr = simulate_path(&model, &DVector::zeros(1), &DVector::zeros(1), &grid, seed).unwrap();
    let f = run_filter(&model, &tr.x_path, &grid, &GaussianState::default_init(1)).unwrap();
    let s = run_smoother(&model, &tr.x_path, &grid, &f).unwrap();
    (model, tr, f, s)
}

#[test]
fn forward_ensemble_matches_filter_pointwise() {
    let (model, tr, f, _) = scalar_setup(10.0, 1);
    let plan = SamplerPlan::forward(&model, &tr.x_path, &tr.grid, &f).unwrap();
    let rep = consistency_report(&plan, &f, 5, 4000, &[2.0, 5.0, 8.0]).unwrap();
    assert!(rep.max_mean_z() <= 4.0, "{rep:?}");
    assert!(rep.max_cov_rel_dev_scaled() <= 0.1, "{rep:?}");
}

#[test]
fn backward_ensemble_matches_smoother_pointwise() {
    let (model, tr, f, s) = scalar_setup(10.0, 2);
    let plan = SamplerPlan::backward(&model, &tr.x_path, &tr.grid, &f).unwrap();
    let rep = consistency_report(&plan, &s, 6, 4000, &[2.0, 5.0, 8.0]).unwrap();
    assert!(rep.max_mean_z() <= 4.0, "{rep:?}");
    assert!(rep.max_cov_rel_dev_scaled() <= 0.1, "{rep:?}");
}

#[test]
fn two_dimensional_backward_consistency() {
    let dims = Dims { k: 1, l: 2, d: 1, r: 2 };
    let model = FnModel::new("tri", dims, move |t, x| {
        let u = x[0];
        let mut c = CoefficientSnapshot::zeros(dims, t);
        c.lambda_x[(0, 0)] = 0.5 + 0.5 * u.tanh();
        c.lambda_x[(0, 1)] = 0.5;
        c.f_x[0] = -u;
        c.lambda_y[(0, 0)] = -1.0;
        c.lambda_y[(0, 1)] = 1.0;
        c.lambda_y[(1, 0)] = -1.0;
        c.lambda_y[(1, 1)] = -0.5;
        c.sigma1_x[(0, 0)] = 0.6;
        c.sigma2_x[(0, 0)] = 0.3;
        c.sigma2_y[(0, 0)] = 0.8;
        c.sigma2_y[(1, 1)] = 0.7;
        c
    })
    .unwrap();
    let grid = TimeGrid::new(0.0, 8.0, 1e-3).unwrap();
    let tr = simulate_path(&model, &DVector::zeros(1), &DVector::zeros(2), &grid, 9).unwrap();
    let f = run_filter(&model, &tr.x_path, &grid, &GaussianState::default_init(2)).unwrap();
    let s = run_smoother(&model, &tr.x_path, &grid, &f).unwrap();
    let plan = SamplerPlan::backward(&model, &tr.x_path, &grid, &f).unwrap();
    let rep = consistency_report(&plan, &s, 3, 4000, &[2.0, 4.0, 6.0]).unwrap();
    assert!(rep.max_mean_z() <= 4.0, "{rep:?}");
    assert!(rep.max_cov_rel_dev_scaled() <= 0.1, "{rep:?}");
}

#[test]
fn ou_acf_decays_at_damping_rate() {
    let dims = Dims { k: 1, l: 1, d: 1, r: 1 };
    let model = FnModel::new("ou", dims, move |t, _x| {
        let mut c = CoefficientSnapshot::zeros(dims, t);
        c.lambda_y[(0, 0)] = -1.0;
        c.sigma1_x[(0, 0)] = 1.0;
        c.sigma2_y[(0, 0)] = 1.0;
        c
    })
    .unwrap();
    let grid = TimeGrid::new(0.0, 500.0, 1e-3).unwrap();
    let tr = simulate_path(&model, &DVector::zeros(1), &DVector::zeros(1), &grid, 31).unwrap();
    let curve = acf(&tr.y_path, 1000, grid.dt).unwrap();
    let rate = fit_decay_rate(&curve, 1.0).unwrap();
    assert!((rate - 1.0).abs() <= 0.1, "rate {rate}");
}

/// Forward-sample residuals about the filter mean relax at the rate of
/// A − R_fΓ, which is −√2 at the steady state of the scalar model.
#[test]
fn forward_residual_decorrelates_at_steady_rate() {
    let (model, tr, f, _) = scalar_setup(500.0, 4);
    let plan = SamplerPlan::forward(&model, &tr.x_path, &tr.grid, &f).unwrap();
    let sample = plan.sample(8, 0).unwrap();
    let residual = after(&(sample - f.means()), 10_000);
    let rate = fit_decay_rate(&acf(&residual, 500, 1e-3).unwrap(), 0.5).unwrap();
    assert!((rate - 2f64.sqrt()).abs() <= 0.1 * 2f64.sqrt(), "rate {rate}");
}

#[test]
fn acf_decomposition_recombines() {
    let (model, tr, f, s) = scalar_setup(300.0, 12);
    let plan = SamplerPlan::backward(&model, &tr.x_path, &tr.grid, &f).unwrap();
    let sample = plan.sample(2, 0).unwrap();
    let d = acf_decomposition(&after(&s.means(), 10_000), &after(&sample, 10_000), 2000, 1e-3).unwrap();
    let (b1, b2) = (d.sample.beta1.unwrap(), d.sample.beta2.unwrap());
    assert!((b1 + b2 - 1.0).abs() < 1e-12 && b1 > 0.0 && b2 > 0.0);
    let gap = d.recombined().iter().zip(&d.sample.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(gap <= 0.05, "gap {gap}");
    assert!((d.recombined()[0] - 1.0).abs() < 1e-12);
}

#[test]
fn backward_sample_acf_tracks_truth() {
    let (model, tr, f, _) = scalar_setup(300.0, 21);
    let plan = SamplerPlan::backward(&model, &tr.x_path, &tr.grid, &f).unwrap();
    let sample = plan.sample(1, 0).unwrap();
    let a = acf(&after(&tr.y_path, 10_000), 2000, 1e-3).unwrap();
    let b = acf(&after(&sample, 10_000), 2000, 1e-3).unwrap();
    let dev = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(dev <= 0.1, "max deviation {dev}");
}
