//! Skill metrics, autocorrelation and spectra, and the eigenvalue tracks of
//! the sample-to-sample uncertainty.
//!
//! Series are (J+1) × p matrices with one row per grid point.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{CgnsError, Result};
use crate::filter::PosteriorSeries;
use crate::linalg::{self, real_eig_range, sym_eig_range};
use crate::model::{CgnsModel, LocalCoefficients};
use crate::smoother::filter_cov_factor;

fn degenerate(msg: impl Into<String>) -> CgnsError {
    CgnsError::DegenerateSeries(msg.into())
}

fn check_pair(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(CgnsError::Dimension(format!(
            "series shapes differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Time mean over all `J+1` rows and the trace-form standard deviation
/// `sqrt(Σ‖c_j − mean‖² / J)`.
pub fn temporal_stats(series: &DMatrix<f64>) -> Result<(DVector<f64>, f64)> {
    let n = series.nrows();
    if n < 2 {
        return Err(degenerate("need at least two time points"));
    }
    let mean = series.row_mean().transpose();
    let mut ss = 0.0;
    for j in 0..n {
        for (i, m) in mean.iter().enumerate() {
            let d = series[(j, i)] - m;
            ss += d * d;
        }
    }
    Ok((mean, (ss / (n - 1) as f64).sqrt()))
}

/// `(1/J) Σ‖a_j − b_j‖²`
pub fn mean_sq_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    check_pair(a, b)?;
    let n = a.nrows();
    if n < 2 {
        return Err(degenerate("need at least two time points"));
    }
    Ok((a - b).norm_squared() / (n - 1) as f64)
}

fn positive_std(series: &DMatrix<f64>, what: &str) -> Result<f64> {
    let (_, std) = temporal_stats(series)?;
    if !(std > 0.0) {
        return Err(degenerate(format!("{what} has zero temporal standard deviation")));
    }
    Ok(std)
}

pub fn srmse(truth: &DMatrix<f64>, estimate: &DMatrix<f64>) -> Result<f64> {
    let std = positive_std(truth, "truth")?;
    Ok(mean_sq_error(truth, estimate)?.sqrt() / std)
}

/// Anomaly pattern correlation.
pub fn corr(truth: &DMatrix<f64>, estimate: &DMatrix<f64>) -> Result<f64> {
    check_pair(truth, estimate)?;
    positive_std(truth, "truth")?;
    positive_std(estimate, "estimate")?;
    let (mt, _) = temporal_stats(truth)?;
    let (me, _) = temporal_stats(estimate)?;
    let (mut num, mut st, mut se) = (0.0, 0.0, 0.0);
    for j in 0..truth.nrows() {
        for i in 0..truth.ncols() {
            let a = truth[(j, i)] - mt[i];
            let b = estimate[(j, i)] - me[i];
            num += a * b;
            st += a * a;
            se += b * b;
        }
    }
    Ok(num / (st.sqrt() * se.sqrt()))
}

fn select_rows(m: &DMatrix<f64>, mask: &[bool]) -> DMatrix<f64> {
    let rows: Vec<usize> = mask.iter().enumerate().filter(|(_, &b)| b).map(|(j, _)| j).collect();
    DMatrix::from_fn(rows.len(), m.ncols(), |r, c| m[(rows[r], c)])
}

/// Correlation over the rows selected by `mask`, with anomalies taken about
/// the masked means.
pub fn corr_conditional(truth: &DMatrix<f64>, estimate: &DMatrix<f64>, mask: &[bool]) -> Result<f64> {
    check_pair(truth, estimate)?;
    if mask.len() != truth.nrows() {
        return Err(CgnsError::Dimension("mask length differs from series length".into()));
    }
    if mask.iter().filter(|&&b| b).count() < 2 {
        return Err(degenerate("mask selects fewer than two rows"));
    }
    corr(&select_rows(truth, mask), &select_rows(estimate, mask))
}

/// Rows where column `col` exceeds its time mean by more than `theta`
/// temporal standard deviations.
pub fn extreme_mask(series: &DMatrix<f64>, col: usize, theta: f64) -> Result<Vec<bool>> {
    let c = series.column(col).into_owned();
    let m = DMatrix::from_column_slice(c.len(), 1, c.as_slice());
    let (mean, std) = temporal_stats(&m)?;
    let cut = mean[0] + theta * std;
    Ok(c.iter().map(|&v| v > cut).collect())
}

/// Single column `col` of a series as a (J+1) × 1 matrix.
pub fn column(series: &DMatrix<f64>, col: usize) -> DMatrix<f64> {
    series.columns(col, 1).into_owned()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasVariance {
    pub bias_sq: f64,
    pub variance_term: f64,
    pub expected_sq_srmse: f64,
}

impl BiasVariance {
    /// Relative mismatch `|E[SRMSE²] − bias² − variance| / E[SRMSE²]`.
    pub fn relative_residual(&self) -> f64 {
        (self.expected_sq_srmse - self.bias_sq - self.variance_term).abs() / self.expected_sq_srmse
    }
}

/// Mean squared distances of one sample to the truth and to a mean series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleError {
    pub to_truth: f64,
    pub to_mean: f64,
}

pub fn sample_error(truth: &DMatrix<f64>, mean: &DMatrix<f64>, sample: &DMatrix<f64>) -> Result<SampleError> {
    Ok(SampleError {
        to_truth: mean_sq_error(truth, sample)?,
        to_mean: mean_sq_error(mean, sample)?,
    })
}

/// Bias–variance split of the expected squared SRMSE of samples about a given
/// mean series, from per-sample errors.
pub fn bias_variance_from_errors(
    truth: &DMatrix<f64>,
    mean: &DMatrix<f64>,
    errors: &[SampleError],
) -> Result<BiasVariance> {
    if errors.is_empty() {
        return Err(degenerate("empty ensemble"));
    }
    let var_truth = positive_std(truth, "truth")?.powi(2);
    let m = errors.len() as f64;
    let bias_sq = mean_sq_error(truth, mean)? / var_truth;
    // (std(mean)²/std(y)²)·mean_i SRMSE(mean, ŷ_i)², with the std(mean)² cancelled.
    let variance_term = errors.iter().map(|e| e.to_mean).sum::<f64>() / m / var_truth;
    let expected_sq_srmse = errors.iter().map(|e| e.to_truth).sum::<f64>() / m / var_truth;
    Ok(BiasVariance { bias_sq, variance_term, expected_sq_srmse })
}

/// Bias–variance split about a supplied mean series (e.g. the posterior mean).
pub fn bias_variance_about(
    truth: &DMatrix<f64>,
    mean: &DMatrix<f64>,
    samples: &[DMatrix<f64>],
) -> Result<BiasVariance> {
    let errors = samples
        .iter()
        .map(|s| sample_error(truth, mean, s))
        .collect::<Result<Vec<_>>>()?;
    bias_variance_from_errors(truth, mean, &errors)
}

/// Bias–variance split about the ensemble's own mean.
pub fn bias_variance(truth: &DMatrix<f64>, samples: &[DMatrix<f64>]) -> Result<BiasVariance> {
    if samples.is_empty() {
        return Err(degenerate("empty ensemble"));
    }
    let mut mean = samples[0].clone();
    for s in &samples[1..] {
        mean += s;
    }
    mean /= samples.len() as f64;
    bias_variance_about(truth, &mean, samples)
}

/// `η = std(mean) / std(sample)` for one sample.
pub fn eta(mean_series: &DMatrix<f64>, sample: &DMatrix<f64>) -> Result<f64> {
    check_pair(mean_series, sample)?;
    let (_, s_mean) = temporal_stats(mean_series)?;
    let (_, s_sample) = temporal_stats(sample)?;
    if !(s_sample > 0.0) {
        return Err(degenerate("sample has zero temporal standard deviation"));
    }
    Ok(s_mean / s_sample)
}

/// Per-sample η and their average.
pub fn eta_factor(mean_series: &DMatrix<f64>, samples: &[DMatrix<f64>]) -> Result<(Vec<f64>, f64)> {
    if samples.is_empty() {
        return Err(degenerate("empty ensemble"));
    }
    let each = samples.iter().map(|s| eta(mean_series, s)).collect::<Result<Vec<_>>>()?;
    let avg = each.iter().sum::<f64>() / each.len() as f64;
    Ok((each, avg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub srmse: f64,
    pub corr: f64,
    pub corr_extreme: f64,
    pub eta: f64,
    pub bias_sq: f64,
    pub variance_term: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcfCurve {
    /// Lags in time units.
    pub lags: Vec<f64>,
    pub values: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta2: Option<f64>,
}

fn fft_pair(n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    let mut planner = FftPlanner::new();
    (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
}

/// Biased autocovariance sums `Σ_j ⟨u_j − ū, u_{j+s} − ū⟩` for `s = 0..=max_lag`.
fn autocov_sums(series: &DMatrix<f64>, max_lag: usize) -> Vec<f64> {
    let n = series.nrows();
    let size = (2 * n).next_power_of_two();
    let (fwd, inv) = fft_pair(size);
    let mut acc = vec![0.0; max_lag + 1];
    let mut buf = vec![Complex::new(0.0, 0.0); size];
    for c in 0..series.ncols() {
        let col = series.column(c);
        let mean = col.mean();
        for (j, b) in buf.iter_mut().enumerate() {
            *b = if j < n { Complex::new(col[j] - mean, 0.0) } else { Complex::new(0.0, 0.0) };
        }
        fwd.process(&mut buf);
        for b in buf.iter_mut() {
            *b = Complex::new(b.norm_sqr(), 0.0);
        }
        inv.process(&mut buf);
        for (s, a) in acc.iter_mut().enumerate() {
            *a += buf[s].re / size as f64;
        }
    }
    acc
}

/// Biased (divide-by-length) sample ACF in trace form, lags `0..=max_lag`
/// grid steps of width `dt`.
pub fn acf(series: &DMatrix<f64>, max_lag: usize, dt: f64) -> Result<AcfCurve> {
    if series.nrows() <= max_lag {
        return Err(degenerate("series is not longer than the maximum lag"));
    }
    let sums = autocov_sums(series, max_lag);
    if !(sums[0] > 0.0) {
        return Err(degenerate("series has zero variance"));
    }
    let mut values: Vec<f64> = sums.iter().map(|s| s / sums[0]).collect();
    values[0] = 1.0;
    Ok(AcfCurve {
        lags: (0..=max_lag).map(|s| s as f64 * dt).collect(),
        values,
        beta1: None,
        beta2: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcfDecomposition {
    /// ACF of the sample, carrying the weights `beta1`, `beta2`.
    pub sample: AcfCurve,
    pub mean: AcfCurve,
    pub residual: AcfCurve,
}

impl AcfDecomposition {
    /// `β₁·ACF(mean) + β₂·ACF(residual)` at each lag.
    pub fn recombined(&self) -> Vec<f64> {
        let (b1, b2) = (self.sample.beta1.unwrap_or(0.0), self.sample.beta2.unwrap_or(0.0));
        self.mean.values.iter().zip(&self.residual.values).map(|(m, r)| b1 * m + b2 * r).collect()
    }
}

/// Splits a sample into posterior mean and residual and reports the three
/// ACFs with the convex weights `β₁ = tr Var(mean) / (tr Var(mean) + tr Var(residual))`.
pub fn acf_decomposition(
    mean_series: &DMatrix<f64>,
    sample: &DMatrix<f64>,
    max_lag: usize,
    dt: f64,
) -> Result<AcfDecomposition> {
    check_pair(mean_series, sample)?;
    let residual = sample - mean_series;
    let (_, s_mean) = temporal_stats(mean_series)?;
    let (_, s_res) = temporal_stats(&residual)?;
    let total = s_mean * s_mean + s_res * s_res;
    if !(total > 0.0) {
        return Err(degenerate("mean and residual both constant"));
    }
    let beta1 = s_mean * s_mean / total;
    let mut sample_curve = acf(sample, max_lag, dt)?;
    sample_curve.beta1 = Some(beta1);
    sample_curve.beta2 = Some(1.0 - beta1);
    Ok(AcfDecomposition {
        sample: sample_curve,
        mean: acf(mean_series, max_lag, dt)?,
        residual: acf(&residual, max_lag, dt)?,
    })
}

/// Least-squares slope of `−ln ACF` against lag over lags in `(0, max_t]`
/// with positive ACF values: the decay rate of an exponential fit.
pub fn fit_decay_rate(curve: &AcfCurve, max_t: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = curve
        .lags
        .iter()
        .zip(&curve.values)
        .filter(|(&t, &v)| t <= max_t && v > 0.0)
        .map(|(&t, &v)| (t, v.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(degenerate("too few positive ACF values to fit a decay"));
    }
    // Fit through the origin: ln ACF(0) = 0.
    let num: f64 = pts.iter().map(|(t, v)| t * v).sum();
    let den: f64 = pts.iter().map(|(t, _)| t * t).sum();
    Ok(-num / den)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSpectrum {
    /// Cycles per time unit.
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
}

impl PowerSpectrum {
    /// `Σ P df`
    pub fn total(&self) -> f64 {
        let df = if self.freqs.len() > 1 { self.freqs[1] - self.freqs[0] } else { 0.0 };
        self.power.iter().sum::<f64>() * df
    }

    pub fn peak_frequency(&self) -> f64 {
        let (i, _) = self
            .power
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
        self.freqs[i]
    }
}

/// Welch estimate: Hann window, 50% overlap, one-sided density. Columns are
/// summed, so the total power approximates the trace of the covariance.
pub fn psd_estimate(series: &DMatrix<f64>, segment_len: usize, dt: f64) -> Result<PowerSpectrum> {
    let n = series.nrows();
    if segment_len < 4 || n < 2 * segment_len {
        return Err(degenerate("series must be at least twice the segment length (segment ≥ 4)"));
    }
    let window: Vec<f64> = (0..segment_len)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / segment_len as f64).cos())
        .collect();
    let wss: f64 = window.iter().map(|w| w * w).sum();
    let step = segment_len / 2;
    let n_seg = (n - segment_len) / step + 1;
    let n_freq = segment_len / 2 + 1;
    let fft = FftPlanner::new().plan_fft_forward(segment_len);
    let mut power = vec![0.0; n_freq];
    let mut buf = vec![Complex::new(0.0, 0.0); segment_len];
    for c in 0..series.ncols() {
        let col = series.column(c);
        let mean = col.mean();
        for s in 0..n_seg {
            let off = s * step;
            for i in 0..segment_len {
                buf[i] = Complex::new((col[off + i] - mean) * window[i], 0.0);
            }
            fft.process(&mut buf);
            for (f, p) in power.iter_mut().enumerate() {
                let mut v = buf[f].norm_sqr() * dt / wss;
                if f != 0 && !(segment_len.is_multiple_of(2) && f == segment_len / 2) {
                    v *= 2.0;
                }
                *p += v / n_seg as f64;
            }
        }
    }
    let df = 1.0 / (segment_len as f64 * dt);
    Ok(PowerSpectrum {
        freqs: (0..n_freq).map(|f| f as f64 * df).collect(),
        power,
    })
}

/// Eigenvalue tracks per grid point, averaged over runs. The hierarchy
/// fields hold the worst case over runs instead of the average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SpectrumTrack {
    pub times: Vec<f64>,
    /// Real parts of eig(Λʸ).
    pub unconditional_damping_max: Vec<f64>,
    pub unconditional_damping_min: Vec<f64>,
    /// Real parts of eig(A − R_fΓ).
    pub forward_damping_max: Vec<f64>,
    pub forward_damping_min: Vec<f64>,
    /// Real parts of eig(−(B R_f⁻¹ + A)).
    pub backward_damping_max: Vec<f64>,
    pub backward_damping_min: Vec<f64>,
    /// eig(Σʸ∘Σʸ)
    pub unconditional_noise_max: Vec<f64>,
    pub unconditional_noise_min: Vec<f64>,
    /// eig(B + R_fΓR_f)
    pub forward_noise_max: Vec<f64>,
    pub forward_noise_min: Vec<f64>,
    /// eig(B)
    pub backward_noise_max: Vec<f64>,
    pub backward_noise_min: Vec<f64>,
    /// eig(Σʸ∘Σʸ − B − R_fΓR_f)
    pub diff_max: Vec<f64>,
    pub diff_min: Vec<f64>,
    /// min over runs of min eig(Σʸ∘Σʸ − B)
    pub hierarchy_unconditional_min: Vec<f64>,
    /// min over runs of min eig(R_fΓR_f), i.e. of (B + R_fΓR_f) − B
    pub hierarchy_forward_min: Vec<f64>,
}

impl SpectrumTrack {
    /// Smallest eigenvalue seen in any of the three noise tracks.
    pub fn min_noise_eigenvalue(&self) -> f64 {
        self.unconditional_noise_min
            .iter()
            .chain(&self.forward_noise_min)
            .chain(&self.backward_noise_min)
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Eigenvalue diagnostics of the three sampling regimes along each run of
/// (observed path, filter series).
pub fn uncertainty_spectra(
    model: &dyn CgnsModel,
    runs: &[(&DMatrix<f64>, &PosteriorSeries)],
) -> Result<SpectrumTrack> {
    let Some((_, first)) = runs.first() else {
        return Err(CgnsError::config("runs", "need at least one run"));
    };
    let grid = first.grid;
    let n = grid.len();
    let mut tr = SpectrumTrack { times: grid.times(), ..Default::default() };
    let fields = 14;
    let mut sums = vec![vec![0.0; n]; fields];
    let mut h_unc = vec![f64::INFINITY; n];
    let mut h_fwd = vec![f64::INFINITY; n];
    for (x_path, filt) in runs {
        if filt.grid != grid || x_path.nrows() != n {
            return Err(CgnsError::Dimension("all runs must share one grid".into()));
        }
        for j in 0..n {
            let x = linalg::row(x_path, j);
            let t = grid.t(j);
            let lc = LocalCoefficients::at(model, t, &x)?;
            let r_f = &filt.states[j].cov;
            let rf = filter_cov_factor(r_f, t)?;
            let rgr = linalg::symmetrize(&(r_f * &lc.gamma * r_f));
            let fwd_noise = &lc.b_mat + &rgr;
            let vals = [
                real_eig_range(&lc.snap.lambda_y),
                real_eig_range(&(&lc.a_mat - r_f * &lc.gamma)),
                real_eig_range(&-(rf.right_solve(&lc.b_mat) + &lc.a_mat)),
                swap(sym_eig_range(&lc.gram.syy)),
                swap(sym_eig_range(&fwd_noise)),
                swap(sym_eig_range(&lc.b_mat)),
                swap(sym_eig_range(&(&lc.gram.syy - &fwd_noise))),
            ];
            for (f, (hi, lo)) in vals.iter().enumerate() {
                sums[2 * f][j] += hi;
                sums[2 * f + 1][j] += lo;
            }
            h_unc[j] = h_unc[j].min(sym_eig_range(&(&lc.gram.syy - &lc.b_mat)).0);
            h_fwd[j] = h_fwd[j].min(sym_eig_range(&rgr).0);
        }
    }
    let k = runs.len() as f64;
    let mut avg = sums.into_iter().map(|v| v.into_iter().map(|s| s / k).collect::<Vec<_>>());
    let mut next = || avg.next().unwrap();
    tr.unconditional_damping_max = next();
    tr.unconditional_damping_min = next();
    tr.forward_damping_max = next();
    tr.forward_damping_min = next();
    tr.backward_damping_max = next();
    tr.backward_damping_min = next();
    tr.unconditional_noise_max = next();
    tr.unconditional_noise_min = next();
    tr.forward_noise_max = next();
    tr.forward_noise_min = next();
    tr.backward_noise_max = next();
    tr.backward_noise_min = next();
    tr.diff_max = next();
    tr.diff_min = next();
    tr.hierarchy_unconditional_min = h_unc;
    tr.hierarchy_forward_min = h_fwd;
    Ok(tr)
}

fn swap((lo, hi): (f64, f64)) -> (f64, f64) {
    (hi, lo)
}

pub fn skewness(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let m2 = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m3 = v.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n;
    m3 / m2.powf(1.5)
}

pub fn excess_kurtosis(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let m2 = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m4 = v.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    m4 / (m2 * m2) - 3.0
}

/// Rows from `start` on.
pub fn after(series: &DMatrix<f64>, start: usize) -> DMatrix<f64> {
    let start = start.min(series.nrows());
    series.rows(start, series.nrows() - start).into_owned()
}
