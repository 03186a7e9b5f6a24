//! Run configuration: a single JSON file whose keys can be overridden from
//! the command line. Precedence is flags, then file, then defaults.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CgnsError, Result};
use crate::filter::GaussianState;
use crate::model::{CgnsModel, LinearModel, LinearSpec};
use crate::sampler::Direction;
use crate::simulate::TimeGrid;
use crate::triad::{self, TriadParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub t0: f64,
    pub t_end: f64,
    pub dt: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { t0: 0.0, t_end: triad::DEFAULT_T, dt: triad::DEFAULT_DT }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    /// Samples per direction.
    pub m: usize,
    pub directions: Vec<Direction>,
    /// How many samples per direction are written out as CSV.
    pub export: usize,
    /// Times at which ensemble statistics are compared with the posterior.
    /// Defaults to T/6, T/2 and 5T/6 of the window (10, 30, 50 for T = 60).
    pub probe_times: Option<Vec<f64>>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            m: 100,
            directions: vec![Direction::Forward, Direction::Backward],
            export: 5,
            probe_times: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SamplerInit {
    /// Draw the first state from the filter Gaussian.
    #[default]
    Gaussian,
    /// Start at the true hidden state (forward: y(0), backward: y(T)).
    Truth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConfig {
    /// Observed initial state, zeros when absent.
    pub x0: Option<Vec<f64>>,
    /// Hidden initial state, zeros when absent.
    pub y0: Option<Vec<f64>>,
    /// Filter initial mean, zeros when absent.
    pub filter_mean: Option<Vec<f64>>,
    /// Filter initial covariance (row-major), `0.01·I` when absent.
    pub filter_cov: Option<Vec<f64>>,
    pub sampler_init: SamplerInit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Largest ACF lag, in time units.
    pub max_lag: f64,
    /// Welch segment length, in grid steps.
    pub segment_len: usize,
    pub extreme_theta: f64,
    /// Time discarded before ACF and PSD estimates.
    pub burn_in: f64,
    /// Independent truth runs averaged in the eigenvalue tracks.
    pub spectrum_runs: usize,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            max_lag: 2.0,
            segment_len: 8192,
            extreme_theta: 1.0,
            burn_in: 10.0,
            spectrum_runs: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// `triad` or `linear`.
    pub model: String,
    pub triad: TriadParams,
    pub linear: LinearSpec,
    pub grid: GridConfig,
    pub seed: u64,
    pub ensemble: EnsembleConfig,
    pub initial: InitialConfig,
    pub out: PathBuf,
    pub diagnostics: DiagnosticsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: "triad".into(),
            triad: triad::default_params(),
            linear: LinearSpec::default(),
            grid: GridConfig::default(),
            seed: 0,
            ensemble: EnsembleConfig::default(),
            initial: InitialConfig::default(),
            out: PathBuf::from("out"),
            diagnostics: DiagnosticsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CgnsError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CgnsError::config(json_key(&e), e.to_string()))
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.grid.t0, self.grid.t_end, self.grid.dt)
    }

    /// Builds the model named by `model` from the registry.
    pub fn build_model(&self) -> Result<Box<dyn CgnsModel>> {
        build_model(&self.model, &self.triad, &self.linear)
    }

    pub fn initial_state(&self, model: &dyn CgnsModel) -> Result<(DVector<f64>, DVector<f64>)> {
        let d = model.dims();
        Ok((
            vector_or_zeros("initial.x0", &self.initial.x0, d.k)?,
            vector_or_zeros("initial.y0", &self.initial.y0, d.l)?,
        ))
    }

    pub fn filter_init(&self, model: &dyn CgnsModel) -> Result<GaussianState> {
        let l = model.dims().l;
        let mean = vector_or_zeros("initial.filter_mean", &self.initial.filter_mean, l)?;
        let cov = match &self.initial.filter_cov {
            None => DMatrix::identity(l, l) * 0.01,
            Some(v) if v.len() == l * l => DMatrix::from_row_slice(l, l, v),
            Some(v) => {
                return Err(CgnsError::config(
                    "initial.filter_cov",
                    format!("has {} entries, expected {}", v.len(), l * l),
                ))
            }
        };
        GaussianState::new(mean, cov)
            .map_err(|e| CgnsError::config("initial.filter_cov", e.to_string()))
    }

    pub fn probe_times(&self) -> Vec<f64> {
        match &self.ensemble.probe_times {
            Some(v) => v.clone(),
            None => {
                let (t0, t1) = (self.grid.t0, self.grid.t_end);
                [1.0 / 6.0, 0.5, 5.0 / 6.0].iter().map(|f| t0 + f * (t1 - t0)).collect()
            }
        }
    }

    /// Burn-in actually applied: the configured value, capped at half the window.
    pub fn effective_burn_in(&self) -> f64 {
        let half = 0.5 * (self.grid.t_end - self.grid.t0);
        if self.diagnostics.burn_in > half {
            log::warn!("diagnostics.burn_in {} exceeds half the window; using {half}", self.diagnostics.burn_in);
            half
        } else {
            self.diagnostics.burn_in
        }
    }

    /// Checks everything that can be checked without running anything.
    pub fn validate(&self) -> Result<()> {
        self.time_grid()?;
        if !self.grid.t_end.is_finite() || self.grid.t_end <= self.grid.t0 {
            return Err(CgnsError::config("grid.t_end", "must be greater than grid.t0"));
        }
        if self.ensemble.m == 0 {
            return Err(CgnsError::config("ensemble.m", "must be at least 1"));
        }
        if self.ensemble.directions.is_empty() {
            return Err(CgnsError::config("ensemble.directions", "must name at least one direction"));
        }
        let (t0, t1) = (self.grid.t0, self.grid.t_end);
        if let Some(t) = self.probe_times().iter().find(|&&t| !(t >= t0 && t <= t1)) {
            return Err(CgnsError::config(
                "ensemble.probe_times",
                format!("{t} lies outside [{t0}, {t1}]"),
            ));
        }
        let dg = &self.diagnostics;
        if !(dg.max_lag > 0.0) {
            return Err(CgnsError::config("diagnostics.max_lag", "must be positive"));
        }
        if dg.segment_len < 4 {
            return Err(CgnsError::config("diagnostics.segment_len", "must be at least 4"));
        }
        if !(dg.burn_in >= 0.0 && dg.burn_in.is_finite()) {
            return Err(CgnsError::config("diagnostics.burn_in", "must be non-negative"));
        }
        if !dg.extreme_theta.is_finite() {
            return Err(CgnsError::config("diagnostics.extreme_theta", "must be finite"));
        }
        if dg.spectrum_runs == 0 {
            return Err(CgnsError::config("diagnostics.spectrum_runs", "must be at least 1"));
        }
        let model = self.build_model()?;
        self.initial_state(model.as_ref())?;
        self.filter_init(model.as_ref())?;
        Ok(())
    }
}

/// Model registry: `triad` or `linear`.
pub fn build_model(name: &str, triad: &TriadParams, linear: &LinearSpec) -> Result<Box<dyn CgnsModel>> {
    match name {
        "triad" => Ok(Box::new(
            triad::triad_model(*triad).map_err(|e| CgnsError::config("triad", e.to_string()))?,
        )),
        "linear" => Ok(Box::new(
            LinearModel::from_spec(linear).map_err(|e| CgnsError::config("linear", e.to_string()))?,
        )),
        other => Err(CgnsError::config(
            "model",
            format!("unknown model `{other}` (expected triad or linear)"),
        )),
    }
}

fn vector_or_zeros(key: &str, v: &Option<Vec<f64>>, n: usize) -> Result<DVector<f64>> {
    match v {
        None => Ok(DVector::zeros(n)),
        Some(v) if v.len() == n => Ok(DVector::from_column_slice(v)),
        Some(v) => Err(CgnsError::config(key, format!("has length {}, expected {n}", v.len()))),
    }
}

/// Best-effort dotted key for a deserialization error.
fn json_key(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    if let Some(start) = msg.find("unknown field `") {
        let rest = &msg[start + 15..];
        if let Some(end) = rest.find('`') {
            return rest[..end].to_string();
        }
    }
    "config".to_string()
}
