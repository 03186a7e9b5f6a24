// Simulate the triad model and print time statistics of each coordinate.

use cgns::diagnostics::{column, excess_kurtosis, skewness, temporal_stats};
use cgns::{simulate_path, triad_model, default_params, TimeGrid};
use nalgebra::DVector;

pub struct Stats {
    pub rows: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub kurtosis_u1: f64,
}

pub fn run_example(t_end: f64, seed: u64) -> cgns::Result<Stats> {
    let model = triad_model(default_params())?;
    let grid = TimeGrid::new(0.0, t_end, 1e-3)?;
    let truth = simulate_path(&model, &DVector::zeros(1), &DVector::zeros(2), &grid, seed)?;
    let mut mean = Vec::new();
    let mut std = Vec::new();
    for series in [column(&truth.x_path, 0), column(&truth.y_path, 0), column(&truth.y_path, 1)] {
        let (m, s) = temporal_stats(&series)?;
        mean.push(m[0]);
        std.push(s);
    }
    let u1: Vec<f64> = truth.x_path.column(0).iter().copied().collect();
    println!("u1 skewness {:.3}", skewness(&u1));
    Ok(Stats { rows: grid.len(), mean, std, kurtosis_u1: excess_kurtosis(&u1) })
}

fn main() -> cgns::Result<()> {
    let s = run_example(60.0, 0)?;
    for (name, (m, sd)) in ["u1", "u2", "u3"].iter().zip(s.mean.iter().zip(&s.std)) {
        println!("{name}: mean {m:.3}, std {sd:.3}");
    }
    println!("{} rows, u1 excess kurtosis {:.3}", s.rows, s.kurtosis_u1);
    Ok(())
}
