//! Forward (filter-based) and backward (smoother-based) posterior trajectory
//! sampling.
//!
//! Both samplers are affine in the current sample. For a given observed path
//! and filter series every step therefore has the form
//!
//! ```text
//! ŷ' = ŷ + c + M (ŷ − a) + S ε
//! ```
//!
//! with per-step constants `a`, `c`, `M`, `S`. A [`SamplerPlan`] computes those
//! once and then draws any number of samples cheaply. The single-step
//! functions build the same constants and go through the same arithmetic, so
//! a plan reproduces them bit for bit.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CgnsError, Result};
use crate::filter::{GaussianState, PosteriorSeries};
use crate::linalg;
use crate::model::{CgnsModel, LocalCoefficients};
use crate::rng::{self, Stream};
use crate::simulate::TimeGrid;
use crate::smoother::{check_series, filter_cov_factor};

pub use crate::linalg::psd_sqrt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }

    fn stream(self) -> Stream {
        match self {
            Direction::Forward => Stream::Forward,
            Direction::Backward => Stream::Backward,
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "forward" => Ok(Direction::Forward),
            "backward" => Ok(Direction::Backward),
            other => Err(format!("unknown direction `{other}` (expected forward or backward)")),
        }
    }
}

/// How the first sampled state is chosen.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum InitMode {
    /// Draw from the filter Gaussian at the starting end of the window.
    #[default]
    Gaussian,
    /// Start every sample at a known state.
    PointMass(DVector<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEnsemble {
    pub grid: TimeGrid,
    /// (J+1) × k
    pub observed_x: DMatrix<f64>,
    /// Each (J+1) × l, rows in time order regardless of direction.
    pub samples: Vec<DMatrix<f64>>,
    pub direction: Direction,
    pub seed: u64,
}

impl TrajectoryEnsemble {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean(&self) -> DMatrix<f64> {
        let mut acc = self.samples[0].clone() * 0.0;
        for s in &self.samples {
            acc += s;
        }
        acc / self.samples.len() as f64
    }
}

/// Constants of one affine sampling step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCoefficients {
    pub anchor: DVector<f64>,
    pub offset: DVector<f64>,
    /// Drift matrix already multiplied by Δt.
    pub drift: DMatrix<f64>,
    /// Noise matrix already multiplied by √Δt.
    pub noise: DMatrix<f64>,
}

impl StepCoefficients {
    pub fn apply(&self, y: &DVector<f64>, eps: &DVector<f64>) -> DVector<f64> {
        let l = y.len();
        let mut out = DVector::zeros(l);
        let (drift, noise) = (row_major(&self.drift), row_major(&self.noise));
        apply_raw(
            l,
            self.anchor.as_slice(),
            self.offset.as_slice(),
            &drift,
            &noise,
            y.as_slice(),
            eps.as_slice(),
            out.as_mut_slice(),
        );
        out
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn apply_raw(
    l: usize,
    anchor: &[f64],
    offset: &[f64],
    drift: &[f64],
    noise: &[f64],
    y: &[f64],
    eps: &[f64],
    out: &mut [f64],
) {
    for i in 0..l {
        let mut acc = y[i] + offset[i];
        let dr = &drift[i * l..(i + 1) * l];
        let nz = &noise[i * l..(i + 1) * l];
        for k in 0..l {
            acc += dr[k] * (y[k] - anchor[k]);
        }
        for k in 0..l {
            acc += nz[k] * eps[k];
        }
        out[i] = acc;
    }
}

/// Constants of the forward step from `t_j` to `t_j + Δt`.
pub fn forward_coefficients(
    lc: &LocalCoefficients,
    mu_f: &DVector<f64>,
    mu_f_next: &DVector<f64>,
    r_f: &DMatrix<f64>,
    dt: f64,
) -> Result<StepCoefficients> {
    let r_gamma = r_f * &lc.gamma;
    let drift = (&lc.a_mat - &r_gamma) * dt;
    let noise_cov = &lc.b_mat + &r_gamma * r_f;
    let noise = psd_sqrt(&noise_cov, "B + R_f Γ R_f")? * dt.sqrt();
    Ok(StepCoefficients {
        anchor: mu_f.clone(),
        offset: mu_f_next - mu_f,
        drift,
        noise,
    })
}

/// Constants of the backward step from `t + Δt` to `t`.
pub fn backward_coefficients(
    lc: &LocalCoefficients,
    x_t: &DVector<f64>,
    x_next: &DVector<f64>,
    mu_f: &DVector<f64>,
    r_f: &DMatrix<f64>,
    dt: f64,
) -> Result<StepCoefficients> {
    let rf = filter_cov_factor(r_f, lc.snap.t)?;
    let damp = rf.right_solve(&lc.b_mat) + &lc.a_mat;
    let obs = x_t - x_next + lc.x_drift(mu_f) * dt;
    let offset = -lc.y_drift(mu_f) * dt + &lc.obs_gain * obs;
    let noise = psd_sqrt(&lc.b_mat, "B")? * dt.sqrt();
    Ok(StepCoefficients {
        anchor: mu_f.clone(),
        offset,
        drift: -damp * dt,
        noise,
    })
}

/// `ŷ' = ŷ + (μ_f' − μ_f) + (A − R_fΓ)(ŷ − μ_f)Δt + (B + R_fΓR_f)^{1/2} √Δt ε`
#[allow(clippy::too_many_arguments)]
pub fn forward_sample_step(
    model: &dyn CgnsModel,
    t: f64,
    x_j: &DVector<f64>,
    mu_f_j: &DVector<f64>,
    mu_f_next: &DVector<f64>,
    r_f_j: &DMatrix<f64>,
    y_hat: &DVector<f64>,
    dt: f64,
    eps: &DVector<f64>,
) -> Result<DVector<f64>> {
    let lc = LocalCoefficients::at(model, t, x_j)?;
    let c = forward_coefficients(&lc, mu_f_j, mu_f_next, r_f_j, dt)?;
    finite_or(c.apply(y_hat, eps), t + dt)
}

/// `ŷ(t) = ŷ⁺ + (−Λʸμ_f − fʸ + (BR_f⁻¹ + A)(μ_f − ŷ⁺))Δt
///        + (Σʸ∘Σˣ)(Σˣ∘Σˣ)⁻¹((x_t − x_{t+Δt}) + (Λˣμ_f + fˣ)Δt) + B^{1/2} √Δt ε`
#[allow(clippy::too_many_arguments)]
pub fn backward_sample_step(
    model: &dyn CgnsModel,
    t: f64,
    x_t: &DVector<f64>,
    x_next: &DVector<f64>,
    mu_f_t: &DVector<f64>,
    r_f_t: &DMatrix<f64>,
    y_hat_next: &DVector<f64>,
    dt: f64,
    eps: &DVector<f64>,
) -> Result<DVector<f64>> {
    let lc = LocalCoefficients::at(model, t, x_t)?;
    let c = backward_coefficients(&lc, x_t, x_next, mu_f_t, r_f_t, dt)?;
    finite_or(c.apply(y_hat_next, eps), t)
}

/// Backward step written around the smoother mean:
/// `ŷ(t) = ŷ⁺ + (μ_s(t) − μ_s⁺) − (BR_f⁻¹ + A)(ŷ⁺ − μ_s⁺)Δt + B^{1/2} √Δt ε`.
#[allow(clippy::too_many_arguments)]
pub fn backward_sample_step_alternative(
    model: &dyn CgnsModel,
    t: f64,
    x_t: &DVector<f64>,
    r_f_t: &DMatrix<f64>,
    mu_s_t: &DVector<f64>,
    mu_s_next: &DVector<f64>,
    y_hat_next: &DVector<f64>,
    dt: f64,
    eps: &DVector<f64>,
) -> Result<DVector<f64>> {
    let lc = LocalCoefficients::at(model, t, x_t)?;
    let rf = filter_cov_factor(r_f_t, t)?;
    let damp = rf.right_solve(&lc.b_mat) + &lc.a_mat;
    let noise = psd_sqrt(&lc.b_mat, "B")? * dt.sqrt();
    let out = y_hat_next + (mu_s_t - mu_s_next) - damp * (y_hat_next - mu_s_next) * dt + noise * eps;
    finite_or(out, t)
}

fn finite_or(v: DVector<f64>, t: f64) -> Result<DVector<f64>> {
    if v.iter().all(|e| e.is_finite() && e.abs() <= crate::simulate::BLOWUP) {
        Ok(v)
    } else {
        Err(CgnsError::NonFiniteState { t })
    }
}

/// Precomputed step constants for one observed path and filter series.
#[derive(Debug, Clone)]
pub struct SamplerPlan {
    pub direction: Direction,
    pub grid: TimeGrid,
    l: usize,
    observed_x: DMatrix<f64>,
    /// Flattened per-step constants; step `j` covers the interval `[t_j, t_{j+1}]`.
    anchor: Vec<f64>,
    offset: Vec<f64>,
    drift: Vec<f64>,
    noise: Vec<f64>,
    start: GaussianStart,
}

#[derive(Debug, Clone)]
enum GaussianStart {
    Draw { mean: Vec<f64>, sqrt: Vec<f64> },
    Fixed(Vec<f64>),
}

impl SamplerPlan {
    pub fn new(
        model: &dyn CgnsModel,
        x_path: &DMatrix<f64>,
        grid: &TimeGrid,
        filter_series: &PosteriorSeries,
        direction: Direction,
        init: &InitMode,
    ) -> Result<Self> {
        check_series(model, x_path, grid, filter_series)?;
        let l = model.dims().l;
        let n = grid.n_steps;
        let mut plan = SamplerPlan {
            direction,
            grid: *grid,
            l,
            observed_x: x_path.clone(),
            anchor: Vec::with_capacity(n * l),
            offset: Vec::with_capacity(n * l),
            drift: Vec::with_capacity(n * l * l),
            noise: Vec::with_capacity(n * l * l),
            start: GaussianStart::Fixed(vec![]),
        };
        let states = &filter_series.states;
        for j in 0..n {
            let x_j = linalg::row(x_path, j);
            let lc = LocalCoefficients::at(model, grid.t(j), &x_j)?;
            let c = match direction {
                Direction::Forward => forward_coefficients(
                    &lc,
                    &states[j].mean,
                    &states[j + 1].mean,
                    &states[j].cov,
                    grid.dt,
                )?,
                Direction::Backward => {
                    let x_next = linalg::row(x_path, j + 1);
                    backward_coefficients(&lc, &x_j, &x_next, &states[j].mean, &states[j].cov, grid.dt)?
                }
            };
            plan.anchor.extend_from_slice(c.anchor.as_slice());
            plan.offset.extend_from_slice(c.offset.as_slice());
            plan.drift.extend(row_major(&c.drift));
            plan.noise.extend(row_major(&c.noise));
        }
        let origin = match direction {
            Direction::Forward => &states[0],
            Direction::Backward => &states[n],
        };
        plan.start = match init {
            InitMode::Gaussian => start_from(origin)?,
            InitMode::PointMass(y0) => {
                if y0.len() != l {
                    return Err(CgnsError::Dimension(format!(
                        "point-mass initial state has length {}, expected {l}",
                        y0.len()
                    )));
                }
                GaussianStart::Fixed(y0.as_slice().to_vec())
            }
        };
        Ok(plan)
    }

    pub fn forward(
        model: &dyn CgnsModel,
        x_path: &DMatrix<f64>,
        grid: &TimeGrid,
        filter_series: &PosteriorSeries,
    ) -> Result<Self> {
        Self::new(model, x_path, grid, filter_series, Direction::Forward, &InitMode::Gaussian)
    }

    pub fn backward(
        model: &dyn CgnsModel,
        x_path: &DMatrix<f64>,
        grid: &TimeGrid,
        filter_series: &PosteriorSeries,
    ) -> Result<Self> {
        Self::new(model, x_path, grid, filter_series, Direction::Backward, &InitMode::Gaussian)
    }

    pub fn dim(&self) -> usize {
        self.l
    }

    pub fn observed_x(&self) -> &DMatrix<f64> {
        &self.observed_x
    }

    /// Constants of step `j` (the interval `[t_j, t_{j+1}]`).
    pub fn step(&self, j: usize) -> StepCoefficients {
        let l = self.l;
        let v = |s: &[f64]| DVector::from_column_slice(&s[j * l..(j + 1) * l]);
        let m = |s: &[f64]| DMatrix::from_row_slice(l, l, &s[j * l * l..(j + 1) * l * l]);
        StepCoefficients {
            anchor: v(&self.anchor),
            offset: v(&self.offset),
            drift: m(&self.drift),
            noise: m(&self.noise),
        }
    }

    /// Generates sample `index` and hands each state to `visit(j, state)` in
    /// generation order (increasing `j` forward, decreasing backward).
    ///
    /// The draws come from the sampler stream of `(seed, index)`: first `l`
    /// normals for the initial state (Gaussian start only), then `l` per step.
    pub fn visit_sample<F: FnMut(usize, &[f64])>(&self, seed: u64, index: usize, mut visit: F) -> Result<()> {
        let l = self.l;
        let n = self.grid.n_steps;
        let mut rng = rng::stream_rng(seed, self.direction.stream(), index as u64);
        let mut y = vec![0.0; l];
        let mut eps = vec![0.0; l];
        let mut out = vec![0.0; l];
        match &self.start {
            GaussianStart::Draw { mean, sqrt } => {
                rng::fill_normal(&mut rng, &mut eps);
                for i in 0..l {
                    y[i] = mean[i] + (0..l).map(|k| sqrt[i * l + k] * eps[k]).sum::<f64>();
                }
            }
            GaussianStart::Fixed(y0) => y.copy_from_slice(y0),
        }
        let steps: Box<dyn Iterator<Item = usize>> = match self.direction {
            Direction::Forward => Box::new(0..n),
            Direction::Backward => Box::new((0..n).rev()),
        };
        let first = match self.direction {
            Direction::Forward => 0,
            Direction::Backward => n,
        };
        visit(first, &y);
        for j in steps {
            self.step_raw(&mut rng, j, &y, &mut eps, &mut out);
            let target = match self.direction {
                Direction::Forward => j + 1,
                Direction::Backward => j,
            };
            if !out.iter().all(|v| v.is_finite() && v.abs() <= crate::simulate::BLOWUP) {
                return Err(CgnsError::NonFiniteState { t: self.grid.t(target) });
            }
            std::mem::swap(&mut y, &mut out);
            visit(target, &y);
        }
        Ok(())
    }

    #[inline]
    fn step_raw<R: Rng>(&self, rng: &mut R, j: usize, y: &[f64], eps: &mut [f64], out: &mut [f64]) {
        let l = self.l;
        rng::fill_normal(rng, eps);
        apply_raw(
            l,
            &self.anchor[j * l..(j + 1) * l],
            &self.offset[j * l..(j + 1) * l],
            &self.drift[j * l * l..(j + 1) * l * l],
            &self.noise[j * l * l..(j + 1) * l * l],
            y,
            eps,
            out,
        );
    }

    /// Sample `index` as a (J+1) × l matrix in time order.
    pub fn sample(&self, seed: u64, index: usize) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(self.grid.len(), self.l);
        self.visit_sample(seed, index, |j, y| {
            for (i, v) in y.iter().enumerate() {
                m[(j, i)] = *v;
            }
        })?;
        Ok(m)
    }

    /// Applies `f` to samples `0..m` in parallel and returns the results in
    /// sample order. Output does not depend on the number of threads.
    pub fn map_samples<T, F>(&self, seed: u64, m: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize, &DMatrix<f64>) -> T + Sync,
    {
        (0..m)
            .into_par_iter()
            .map(|i| {
                let s = self
                    .sample(seed, i)
                    .map_err(|e| CgnsError::Member { index: i, source: Box::new(e) })?;
                Ok(f(i, &s))
            })
            .collect()
    }

    pub fn ensemble(&self, seed: u64, m: usize) -> Result<TrajectoryEnsemble> {
        if m == 0 {
            return Err(CgnsError::config("ensemble.m", "must be at least 1"));
        }
        let samples = self.map_samples(seed, m, |_, s| s.clone())?;
        Ok(TrajectoryEnsemble {
            grid: self.grid,
            observed_x: self.observed_x.clone(),
            samples,
            direction: self.direction,
            seed,
        })
    }
}

fn start_from(state: &GaussianState) -> Result<GaussianStart> {
    let l = state.mean.len();
    let sqrt = psd_sqrt(&state.cov, "initial covariance")?;
    Ok(GaussianStart::Draw {
        mean: state.mean.as_slice().to_vec(),
        sqrt: (0..l * l).map(|p| sqrt[(p / l, p % l)]).collect(),
    })
}

pub fn run_forward_sampler(
    model: &dyn CgnsModel,
    x_path: &DMatrix<f64>,
    grid: &TimeGrid,
    filter_series: &PosteriorSeries,
    seed: u64,
    m: usize,
) -> Result<TrajectoryEnsemble> {
    SamplerPlan::forward(model, x_path, grid, filter_series)?.ensemble(seed, m)
}

pub fn run_backward_sampler(
    model: &dyn CgnsModel,
    x_path: &DMatrix<f64>,
    grid: &TimeGrid,
    filter_series: &PosteriorSeries,
    seed: u64,
    m: usize,
) -> Result<TrajectoryEnsemble> {
    SamplerPlan::backward(model, x_path, grid, filter_series)?.ensemble(seed, m)
}

/// Ensemble statistics at one probe time compared with a target Gaussian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeStats {
    pub t: f64,
    pub index: usize,
    pub ensemble_mean: Vec<f64>,
    pub target_mean: Vec<f64>,
    /// Row-major l × l, normalized by `m − 1`.
    pub ensemble_cov: Vec<f64>,
    pub target_cov: Vec<f64>,
    /// Per coordinate `|mean − μ_i| / sqrt(R_ii / m)`.
    pub mean_z: Vec<f64>,
    /// Largest `|C_ij − R_ij| / |R_ij|` over all entries.
    pub cov_rel_dev_entrywise: f64,
    /// Largest `|C_ij − R_ij| / sqrt(R_ii R_jj)`; equals the plain relative
    /// error on the diagonal.
    pub cov_rel_dev_scaled: f64,
    /// Largest `|C_ij − R_ij|` in units of its Gaussian standard error
    /// `sqrt((R_ii R_jj + R_ij²) / m)`.
    pub cov_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub direction: Direction,
    pub m: usize,
    pub seed: u64,
    pub probes: Vec<ProbeStats>,
}

impl ConsistencyReport {
    pub fn max_mean_z(&self) -> f64 {
        self.probes.iter().flat_map(|p| p.mean_z.iter().copied()).fold(0.0, f64::max)
    }

    pub fn max_cov_rel_dev_entrywise(&self) -> f64 {
        self.probes.iter().map(|p| p.cov_rel_dev_entrywise).fold(0.0, f64::max)
    }

    pub fn max_cov_rel_dev_scaled(&self) -> f64 {
        self.probes.iter().map(|p| p.cov_rel_dev_scaled).fold(0.0, f64::max)
    }

    pub fn max_cov_z(&self) -> f64 {
        self.probes.iter().map(|p| p.cov_z).fold(0.0, f64::max)
    }
}

/// Draws `m` samples and compares their pointwise statistics at
/// `probe_times` with `target` (the filter for forward sampling, the smoother
/// for backward sampling).
pub fn consistency_report(
    plan: &SamplerPlan,
    target: &PosteriorSeries,
    seed: u64,
    m: usize,
    probe_times: &[f64],
) -> Result<ConsistencyReport> {
    if m < 2 {
        return Err(CgnsError::config("ensemble.m", "consistency needs at least 2 samples"));
    }
    let idx: Vec<usize> = probe_times.iter().map(|&t| plan.grid.index_of(t)).collect();
    let values = plan.map_samples(seed, m, |_, s| probe_values(s, &idx))?;
    let probes = probe_stats(&plan.grid, target, &idx, &values);
    Ok(ConsistencyReport { direction: plan.direction, m, seed, probes })
}

/// Rows `idx` of one sample, for [`probe_stats`].
pub fn probe_values(sample: &DMatrix<f64>, idx: &[usize]) -> Vec<Vec<f64>> {
    idx.iter().map(|&j| sample.row(j).iter().copied().collect()).collect()
}

/// Ensemble statistics at grid indices `idx` from per-sample probe values
/// (`values[i][p]` is sample `i` at `idx[p]`).
pub fn probe_stats(
    grid: &TimeGrid,
    target: &PosteriorSeries,
    idx: &[usize],
    values: &[Vec<Vec<f64>>],
) -> Vec<ProbeStats> {
    let m = values.len();
    let l = target.dim();
    let mut probes = Vec::new();
    for (p, &j) in idx.iter().enumerate() {
        let mut mean = vec![0.0; l];
        for v in values {
            for i in 0..l {
                mean[i] += v[p][i];
            }
        }
        mean.iter_mut().for_each(|x| *x /= m as f64);
        let mut cov = vec![0.0; l * l];
        for v in values {
            for a in 0..l {
                for b in 0..l {
                    cov[a * l + b] += (v[p][a] - mean[a]) * (v[p][b] - mean[b]);
                }
            }
        }
        cov.iter_mut().for_each(|x| *x /= (m - 1) as f64);
        let st = &target.states[j];
        let tm: Vec<f64> = st.mean.iter().copied().collect();
        let tc: Vec<f64> = (0..l * l).map(|q| st.cov[(q / l, q % l)]).collect();
        let mean_z = (0..l)
            .map(|i| (mean[i] - tm[i]).abs() / (tc[i * l + i] / m as f64).sqrt())
            .collect();
        let mut entrywise: f64 = 0.0;
        let mut scaled: f64 = 0.0;
        let mut cov_z: f64 = 0.0;
        for a in 0..l {
            for b in 0..l {
                let r = tc[a * l + b];
                let d = (cov[a * l + b] - r).abs();
                let rr = tc[a * l + a] * tc[b * l + b];
                entrywise = entrywise.max(d / r.abs());
                scaled = scaled.max(d / rr.sqrt());
                cov_z = cov_z.max(d / ((rr + r * r) / m as f64).sqrt());
            }
        }
        probes.push(ProbeStats {
            t: grid.t(j),
            index: j,
            ensemble_mean: mean,
            target_mean: tm,
            ensemble_cov: cov,
            target_cov: tc,
            mean_z,
            cov_rel_dev_entrywise: entrywise,
            cov_rel_dev_scaled: scaled,
            cov_z,
        });
    }
    probes
}
