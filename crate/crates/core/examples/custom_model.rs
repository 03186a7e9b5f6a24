// A user-defined conditional Gaussian model from a closure.

use cgns::model::{CoefficientSnapshot, Dims, FnModel};
use cgns::sampler::SamplerPlan;
use cgns::{run_filter, run_smoother, simulate_path, GaussianState, TimeGrid};
use nalgebra::DVector;

/// Observed x with state-dependent coupling to a damped hidden oscillator.
pub fn oscillator() -> cgns::Result<impl cgns::CgnsModel> {
    let dims = Dims::new(1, 2, 1, 2)?;
    FnModel::new("oscillator", dims, move |t, x| {
        let mut c = CoefficientSnapshot::zeros(dims, t);
        c.f_x[0] = -x[0];
        c.lambda_x[(0, 0)] = 1.0 + 0.5 * x[0].tanh();
        c.lambda_y[(0, 0)] = -0.5;
        c.lambda_y[(0, 1)] = 2.0;
        c.lambda_y[(1, 0)] = -2.0;
        c.lambda_y[(1, 1)] = -0.5;
        c.sigma1_x[(0, 0)] = 0.5;
        c.sigma2_y[(0, 0)] = 0.7;
        c.sigma2_y[(1, 1)] = 0.7;
        c
    })
}

pub fn run_example(t_end: f64, seed: u64) -> cgns::Result<(f64, f64)> {
    let model = oscillator()?;
    let grid = TimeGrid::new(0.0, t_end, 1e-3)?;
    let truth = simulate_path(&model, &DVector::zeros(1), &DVector::zeros(2), &grid, seed)?;
    let filter = run_filter(&model, &truth.x_path, &grid, &GaussianState::default_init(2))?;
    let smoother = run_smoother(&model, &truth.x_path, &grid, &filter)?;
    let sample = SamplerPlan::backward(&model, &truth.x_path, &grid, &filter)?.sample(seed, 0)?;
    let err = |est: &nalgebra::DMatrix<f64>| (est - &truth.y_path).norm() / truth.y_path.norm();
    println!("relative error of one backward sample {:.3}", err(&sample));
    Ok((err(&filter.means()), err(&smoother.means())))
}

fn main() -> cgns::Result<()> {
    let (f, s) = run_example(30.0, 5)?;
    println!("relative error: filter mean {f:.3}, smoother mean {s:.3}");
    Ok(())
}
