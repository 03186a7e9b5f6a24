// Filter and smooth the triad's hidden modes from an observed u1 path.

use cgns::diagnostics::srmse;
use cgns::{default_params, run_filter, run_smoother, simulate_path, triad_model, GaussianState, TimeGrid};
use nalgebra::DVector;

pub struct Errors {
    pub filter_srmse: f64,
    pub smoother_srmse: f64,
    pub endpoint_equal: bool,
    pub mean_trace_filter: f64,
    pub mean_trace_smoother: f64,
}

pub fn run_example(t_end: f64, seed: u64) -> cgns::Result<Errors> {
    let model = triad_model(default_params())?;
    let grid = TimeGrid::new(0.0, t_end, 1e-3)?;
    let truth = simulate_path(&model, &DVector::zeros(1), &DVector::zeros(2), &grid, seed)?;
    let filter = run_filter(&model, &truth.x_path, &grid, &GaussianState::default_init(2))?;
    let smoother = run_smoother(&model, &truth.x_path, &grid, &filter)?;
    let avg = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    Ok(Errors {
        filter_srmse: srmse(&truth.y_path, &filter.means())?,
        smoother_srmse: srmse(&truth.y_path, &smoother.means())?,
        endpoint_equal: filter.states.last() == smoother.states.last(),
        mean_trace_filter: avg(filter.cov_traces()),
        mean_trace_smoother: avg(smoother.cov_traces()),
    })
}

fn main() -> cgns::Result<()> {
    let e = run_example(60.0, 0)?;
    println!("SRMSE filter {:.3}, smoother {:.3}", e.filter_srmse, e.smoother_srmse);
    println!("mean tr R: filter {:.3}, smoother {:.3}", e.mean_trace_filter, e.mean_trace_smoother);
    println!("smoother ends on the filter state: {}", e.endpoint_equal);
    Ok(())
}
