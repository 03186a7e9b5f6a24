// Skill scores of posterior means and samples, plus the bias-variance split
// of a backward ensemble.

use cgns::diagnostics::{bias_variance_about, corr, eta_factor, extreme_mask, corr_conditional, srmse, column};
use cgns::sampler::SamplerPlan;
use cgns::{default_params, run_filter, run_smoother, simulate_path, triad_model, GaussianState, TimeGrid};
use nalgebra::DVector;

pub struct Scores {
    pub corr_filter: f64,
    pub corr_smoother: f64,
    pub corr_sample: f64,
    pub corr_extreme_smoother: f64,
    pub eta: f64,
    pub bias_variance_residual: f64,
}

pub fn run_example(t_end: f64, m: usize, seed: u64) -> cgns::Result<Scores> {
    let model = triad_model(default_params())?;
    let grid = TimeGrid::new(0.0, t_end, 1e-3)?;
    let truth = simulate_path(&model, &DVector::zeros(1), &DVector::zeros(2), &grid, seed)?;
    let filter = run_filter(&model, &truth.x_path, &grid, &GaussianState::default_init(2))?;
    let smoother = run_smoother(&model, &truth.x_path, &grid, &filter)?;
    let ens = SamplerPlan::backward(&model, &truth.x_path, &grid, &filter)?.ensemble(seed + 1, m)?;

    let u3 = column(&truth.y_path, 1);
    let smean = column(&smoother.means(), 1);
    let mask = extreme_mask(&truth.y_path, 1, 1.0)?;
    let (_, eta) = eta_factor(&smoother.means(), &ens.samples)?;
    let bv = bias_variance_about(&truth.y_path, &smoother.means(), &ens.samples)?;
    println!("SRMSE of u3: filter {:.3}, smoother {:.3}", srmse(&u3, &column(&filter.means(), 1))?, srmse(&u3, &smean)?);
    Ok(Scores {
        corr_filter: corr(&u3, &column(&filter.means(), 1))?,
        corr_smoother: corr(&u3, &smean)?,
        corr_sample: corr(&u3, &column(&ens.samples[0], 1))?,
        corr_extreme_smoother: corr_conditional(&u3, &smean, &mask)?,
        eta,
        bias_variance_residual: bv.relative_residual(),
    })
}

fn main() -> cgns::Result<()> {
    let s = run_example(60.0, 50, 0)?;
    println!("corr(u3): filter {:.3}, smoother {:.3}, one sample {:.3}", s.corr_filter, s.corr_smoother, s.corr_sample);
    println!("corr(u3) on extreme events, smoother {:.3}", s.corr_extreme_smoother);
    println!("eta {:.3}, bias-variance residual {:.2}%", s.eta, 100.0 * s.bias_variance_residual);
    Ok(())
}
