//! Euler–Maruyama simulation of the coupled system.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CgnsError, Result};
use crate::model::CgnsModel;
use crate::rng;

/// States with an entry above this magnitude are treated as blown up.
pub const BLOWUP: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub t_end: f64,
    pub dt: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t_end: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(CgnsError::config("grid.dt", format!("must be positive, got {dt}")));
        }
        if !t0.is_finite() {
            return Err(CgnsError::config("grid.t0", "must be finite"));
        }
        if !(t_end >= t0) || !t_end.is_finite() {
            return Err(CgnsError::config(
                "grid.t_end",
                format!("must be finite and not before t0 = {t0}, got {t_end}"),
            ));
        }
        let n_steps = ((t_end - t0) / dt).round() as usize;
        Ok(TimeGrid { t0, t_end, dt, n_steps })
    }

    /// Grid with `n_steps` intervals of width `dt` starting at `t0`.
    pub fn with_steps(t0: f64, dt: f64, n_steps: usize) -> Result<Self> {
        Self::new(t0, t0 + dt * n_steps as f64, dt).map(|mut g| {
            g.n_steps = n_steps;
            g
        })
    }

    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn t(&self, j: usize) -> f64 {
        self.t0 + j as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.t(j)).collect()
    }

    /// Index of the grid point nearest to `t`, clipped to the grid.
    pub fn index_of(&self, t: f64) -> usize {
        let j = ((t - self.t0) / self.dt).round();
        if j <= 0.0 {
            0
        } else {
            (j as usize).min(self.n_steps)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: TimeGrid,
    /// (J+1) × k
    pub x_path: DMatrix<f64>,
    /// (J+1) × l
    pub y_path: DMatrix<f64>,
    pub seed: u64,
}

/// One Euler–Maruyama step with coefficients frozen at `(t, x)`.
pub fn em_step(
    model: &dyn CgnsModel,
    t: f64,
    x: &DVector<f64>,
    y: &DVector<f64>,
    dt: f64,
    eps1: &DVector<f64>,
    eps2: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let dims = model.dims();
    if y.len() != dims.l || eps1.len() != dims.d || eps2.len() != dims.r {
        return Err(CgnsError::Dimension(format!(
            "em_step expects y, eps1, eps2 of lengths {}, {}, {}",
            dims.l, dims.d, dims.r
        )));
    }
    let c = model.evaluate(t, x)?;
    let sq = dt.sqrt();
    let x_next = x
        + (&c.lambda_x * y + &c.f_x) * dt
        + (&c.sigma1_x * eps1 + &c.sigma2_x * eps2) * sq;
    let y_next = y
        + (&c.lambda_y * y + &c.f_y) * dt
        + (&c.sigma1_y * eps1 + &c.sigma2_y * eps2) * sq;
    let ok = |v: &DVector<f64>| v.iter().all(|e| e.is_finite() && e.abs() <= BLOWUP);
    if !ok(&x_next) || !ok(&y_next) {
        return Err(CgnsError::NonFiniteState { t: t + dt });
    }
    Ok((x_next, y_next))
}

/// Simulates one path. The noise stream is `ChaCha8Rng::seed_from_u64(seed)`;
/// each step draws the `d` components of ε₁ followed by the `r` of ε₂.
pub fn simulate_path(
    model: &dyn CgnsModel,
    x0: &DVector<f64>,
    y0: &DVector<f64>,
    grid: &TimeGrid,
    seed: u64,
) -> Result<Trajectory> {
    let dims = model.dims();
    if x0.len() != dims.k || y0.len() != dims.l {
        return Err(CgnsError::Dimension(format!(
            "initial state has lengths ({}, {}), model expects ({}, {})",
            x0.len(),
            y0.len(),
            dims.k,
            dims.l
        )));
    }
    let n = grid.len();
    let mut x_path = DMatrix::zeros(n, dims.k);
    let mut y_path = DMatrix::zeros(n, dims.l);
    x_path.row_mut(0).copy_from(&x0.transpose());
    y_path.row_mut(0).copy_from(&y0.transpose());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut eps1 = DVector::zeros(dims.d);
    let mut eps2 = DVector::zeros(dims.r);
    let mut x = x0.clone();
    let mut y = y0.clone();
    for j in 0..grid.n_steps {
        draw(&mut rng, &mut eps1, &mut eps2);
        let (xn, yn) = em_step(model, grid.t(j), &x, &y, grid.dt, &eps1, &eps2)?;
        x_path.row_mut(j + 1).copy_from(&xn.transpose());
        y_path.row_mut(j + 1).copy_from(&yn.transpose());
        x = xn;
        y = yn;
    }
    Ok(Trajectory { grid: *grid, x_path, y_path, seed })
}

fn draw<R: Rng>(rng: &mut R, eps1: &mut DVector<f64>, eps2: &mut DVector<f64>) {
    rng::fill_normal(rng, eps1.as_mut_slice());
    rng::fill_normal(rng, eps2.as_mut_slice());
}

/// `m` independent paths; member `i` is `simulate_path` with
/// [`rng::member_seed`]`(seed, i)`.
pub fn simulate_ensemble(
    model: &dyn CgnsModel,
    x0: &DVector<f64>,
    y0: &DVector<f64>,
    grid: &TimeGrid,
    seed: u64,
    m: usize,
) -> Result<Vec<Trajectory>> {
    if m == 0 {
        return Err(CgnsError::config("ensemble.m", "must be at least 1"));
    }
    (0..m)
        .into_par_iter()
        .map(|i| {
            simulate_path(model, x0, y0, grid, rng::member_seed(seed, i))
                .map_err(|e| CgnsError::Member { index: i, source: Box::new(e) })
        })
        .collect()
}
