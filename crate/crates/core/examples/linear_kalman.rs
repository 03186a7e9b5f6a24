// Scalar linear model: the filter variance settles at the Riccati root.

use cgns::{run_filter, simulate_path, GaussianState, LinearModel, TimeGrid};
use nalgebra::DVector;

pub fn run_example(t_end: f64, dt: f64) -> cgns::Result<(f64, f64)> {
    // dx = y dt + dW1, dy = -y dt + dW2
    let model = LinearModel::scalar(1.0, -1.0, 1.0, 1.0);
    let grid = TimeGrid::new(0.0, t_end, dt)?;
    let truth = simulate_path(&model, &DVector::zeros(1), &DVector::zeros(1), &grid, 1)?;
    let filter = run_filter(&model, &truth.x_path, &grid, &GaussianState::default_init(1))?;
    Ok((filter.states.last().unwrap().cov[(0, 0)], 2f64.sqrt() - 1.0))
}

fn main() -> cgns::Result<()> {
    let (r, root) = run_example(20.0, 1e-4)?;
    println!("R_f(T) = {r:.10}, sqrt(2) - 1 = {root:.10}, gap {:.2e}", (r - root).abs());
    Ok(())
}
