// Draw forward and backward sample trajectories and compare their pointwise
// ensemble statistics with the filter and smoother.

use cgns::sampler::{consistency_report, SamplerPlan};
use cgns::{default_params, run_filter, run_smoother, simulate_path, triad_model, GaussianState, TimeGrid};
use nalgebra::DVector;

pub struct Check {
    pub forward_mean_z: f64,
    pub forward_cov_dev: f64,
    pub backward_mean_z: f64,
    pub backward_cov_dev: f64,
}

pub fn run_example(t_end: f64, m: usize, seed: u64) -> cgns::Result<Check> {
    let model = triad_model(default_params())?;
    let grid = TimeGrid::new(0.0, t_end, 1e-3)?;
    let truth = simulate_path(&model, &DVector::zeros(1), &DVector::zeros(2), &grid, seed)?;
    let filter = run_filter(&model, &truth.x_path, &grid, &GaussianState::default_init(2))?;
    let smoother = run_smoother(&model, &truth.x_path, &grid, &filter)?;
    let probes = [t_end / 4.0, t_end / 2.0, 3.0 * t_end / 4.0];

    let fwd = SamplerPlan::forward(&model, &truth.x_path, &grid, &filter)?;
    let f = consistency_report(&fwd, &filter, seed + 1, m, &probes)?;
    let bwd = SamplerPlan::backward(&model, &truth.x_path, &grid, &filter)?;
    let b = consistency_report(&bwd, &smoother, seed + 2, m, &probes)?;

    // a handful of full trajectories is cheap to keep
    let few = bwd.ensemble(seed + 3, 3)?;
    println!("kept {} backward samples of {} rows", few.len(), few.samples[0].nrows());

    Ok(Check {
        forward_mean_z: f.max_mean_z(),
        forward_cov_dev: f.max_cov_rel_dev_scaled(),
        backward_mean_z: b.max_mean_z(),
        backward_cov_dev: b.max_cov_rel_dev_scaled(),
    })
}

fn main() -> cgns::Result<()> {
    let c = run_example(20.0, 2000, 0)?;
    println!("forward:  mean z {:.2}, cov deviation {:.3}", c.forward_mean_z, c.forward_cov_dev);
    println!("backward: mean z {:.2}, cov deviation {:.3}", c.backward_mean_z, c.backward_cov_dev);
    Ok(())
}
