// Eigenvalue tracks of damping and noise for the unconditional, forward and
// backward regimes along a triad run.

use cgns::diagnostics::uncertainty_spectra;
use cgns::{default_params, run_filter, simulate_path, triad_model, GaussianState, TimeGrid};
use nalgebra::DVector;

pub struct Hierarchy {
    pub min_unconditional_gap: f64,
    pub min_forward_gap: f64,
    pub indefinite_fraction: f64,
}

pub fn run_example(t_end: f64, seed: u64) -> cgns::Result<Hierarchy> {
    let model = triad_model(default_params())?;
    let grid = TimeGrid::new(0.0, t_end, 1e-3)?;
    let truth = simulate_path(&model, &DVector::zeros(1), &DVector::zeros(2), &grid, seed)?;
    let filter = run_filter(&model, &truth.x_path, &grid, &GaussianState::default_init(2))?;
    let track = uncertainty_spectra(&model, &[(&truth.x_path, &filter)])?;
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let neg = track.diff_min.iter().filter(|&&v| v < 0.0).count();
    let j = track.times.len() / 2;
    println!(
        "t = {:.1}: noise eig max unconditional {:.3}, forward {:.3}, backward {:.3}",
        track.times[j], track.unconditional_noise_max[j], track.forward_noise_max[j], track.backward_noise_max[j]
    );
    Ok(Hierarchy {
        min_unconditional_gap: min(&track.hierarchy_unconditional_min),
        min_forward_gap: min(&track.hierarchy_forward_min),
        indefinite_fraction: neg as f64 / track.diff_min.len() as f64,
    })
}

fn main() -> cgns::Result<()> {
    let h = run_example(60.0, 0)?;
    println!("min eig(Syy - B) {:.2e}, min eig(R G R) {:.2e}", h.min_unconditional_gap, h.min_forward_gap);
    println!("Syy - B - R G R indefinite on {:.1}% of steps", 100.0 * h.indefinite_fraction);
    Ok(())
}
