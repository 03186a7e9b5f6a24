//! End-to-end runs: truth simulation, assimilation, sampling and the metric,
//! ACF/PSD and eigenvalue diagnostics, with file output.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, SamplerInit};
use crate::diagnostics::{
    self, acf, acf_decomposition, after, column, corr, corr_conditional, eta, extreme_mask, psd_estimate, srmse,
    AcfDecomposition, BiasVariance, MetricReport, SampleError, SpectrumTrack,
};
use crate::error::{CgnsError, Result};
use crate::filter::{run_filter, GaussianState, PosteriorSeries};
use crate::io::{self, EnsembleManifest};
use crate::model::CgnsModel;
use crate::rng;
use crate::sampler::{probe_stats, probe_values, ConsistencyReport, Direction, InitMode, SamplerPlan};
use crate::simulate::{simulate_path, TimeGrid, Trajectory};
use crate::smoother::run_smoother;

/// Filter and smoother along one observed path.
#[derive(Debug, Clone, PartialEq)]
pub struct Assimilation {
    pub filter: PosteriorSeries,
    pub smoother: PosteriorSeries,
}

pub fn assimilate(
    model: &dyn CgnsModel,
    x_path: &DMatrix<f64>,
    grid: &TimeGrid,
    init: &GaussianState,
) -> Result<Assimilation> {
    let filter = run_filter(model, x_path, grid, init)?;
    let smoother = run_smoother(model, x_path, grid, &filter)?;
    Ok(Assimilation { filter, smoother })
}

/// Truth run `index` of a configuration. Run 0 is the case-study truth.
pub fn simulate_truth(cfg: &RunConfig, model: &dyn CgnsModel, index: usize) -> Result<Trajectory> {
    let (x0, y0) = cfg.initial_state(model)?;
    simulate_path(model, &x0, &y0, &cfg.time_grid()?, rng::member_seed(cfg.seed, index))
}

/// Hidden components scored separately, plus `all` for the full vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentMetrics {
    pub component: String,
    #[serde(flatten)]
    pub report: MetricReport,
    /// Fraction of samples with |corr(truth, sample)| ≤ |corr(truth, mean)|.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub corr_not_above_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateMetrics {
    /// `filter_mean`, `smoother_mean`, `forward_samples` or `backward_samples`.
    pub estimate: String,
    /// Number of samples averaged (1 for the means).
    pub m: usize,
    pub components: Vec<ComponentMetrics>,
}

impl EstimateMetrics {
    pub fn component(&self, name: &str) -> Option<&MetricReport> {
        self.components.iter().find(|c| c.component == name).map(|c| &c.report)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub extreme_theta: f64,
    pub estimates: Vec<EstimateMetrics>,
}

impl MetricsFile {
    pub fn estimate(&self, name: &str) -> Option<&EstimateMetrics> {
        self.estimates.iter().find(|e| e.estimate == name)
    }
}

/// Column views of the truth used for scoring.
struct Scoring {
    names: Vec<String>,
    truth: Vec<DMatrix<f64>>,
    masks: Vec<Vec<bool>>,
}

impl Scoring {
    fn new(truth_y: &DMatrix<f64>, theta: f64) -> Result<Self> {
        let l = truth_y.ncols();
        let mut names: Vec<String> = (0..l).map(|i| format!("y_{i}")).collect();
        let mut truth: Vec<DMatrix<f64>> = (0..l).map(|i| column(truth_y, i)).collect();
        let mut masks = (0..l).map(|i| extreme_mask(truth_y, i, theta)).collect::<Result<Vec<_>>>()?;
        if l > 1 {
            let any: Vec<bool> = (0..truth_y.nrows()).map(|j| masks.iter().any(|m| m[j])).collect();
            names.push("all".into());
            truth.push(truth_y.clone());
            masks.push(any);
        }
        Ok(Scoring { names, truth, masks })
    }

    fn split(&self, series: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let l = series.ncols();
        let mut out: Vec<DMatrix<f64>> = (0..l).map(|i| column(series, i)).collect();
        if self.names.len() > l {
            out.push(series.clone());
        }
        out
    }

    fn score_mean(&self, name: &str, series: &DMatrix<f64>) -> Result<EstimateMetrics> {
        let parts = self.split(series);
        let mut components = Vec::new();
        for (c, est) in parts.iter().enumerate() {
            let s = srmse(&self.truth[c], est)?;
            components.push(ComponentMetrics {
                component: self.names[c].clone(),
                report: MetricReport {
                    srmse: s,
                    corr: corr(&self.truth[c], est)?,
                    corr_extreme: corr_conditional(&self.truth[c], est, &self.masks[c])?,
                    eta: 1.0,
                    bias_sq: s * s,
                    variance_term: 0.0,
                },
                corr_not_above_mean: None,
            });
        }
        Ok(EstimateMetrics { estimate: name.into(), m: 1, components })
    }
}

#[derive(Debug, Clone, Copy)]
struct PerComponent {
    srmse: f64,
    corr: f64,
    corr_extreme: f64,
    eta: f64,
    error: SampleError,
}

struct PerSample {
    comps: Vec<PerComponent>,
    probes: Vec<Vec<f64>>,
    kept: Option<DMatrix<f64>>,
}

/// What to do with each drawn sample.
#[derive(Debug, Clone, Default)]
pub struct EnsembleOptions {
    pub m: usize,
    /// Samples `0..keep` are returned in memory.
    pub keep: usize,
    /// Samples `0..export` are written to `export_dir` as they are drawn.
    pub export: usize,
    pub export_dir: Option<std::path::PathBuf>,
    pub probe_times: Vec<f64>,
    pub extreme_theta: f64,
}

#[derive(Debug, Clone)]
pub struct EnsembleSummary {
    pub direction: Direction,
    pub seed: u64,
    pub metrics: EstimateMetrics,
    /// Per component, about the target posterior mean.
    pub bias_variance: Vec<(String, BiasVariance)>,
    pub consistency: Option<ConsistencyReport>,
    pub kept: Vec<DMatrix<f64>>,
    pub manifest: Option<EnsembleManifest>,
}

/// Draws `opts.m` samples from `plan` and scores each against the truth and
/// against `target` (the filter for forward sampling, the smoother for
/// backward sampling) without holding the ensemble in memory.
pub fn summarize_ensemble(
    plan: &SamplerPlan,
    truth_y: &DMatrix<f64>,
    target: &PosteriorSeries,
    seed: u64,
    opts: &EnsembleOptions,
) -> Result<EnsembleSummary> {
    if opts.m == 0 {
        return Err(CgnsError::config("ensemble.m", "must be at least 1"));
    }
    let scoring = Scoring::new(truth_y, opts.extreme_theta)?;
    let target_mean = target.means();
    let mean_parts = scoring.split(&target_mean);
    let grid = plan.grid;
    let idx: Vec<usize> = opts.probe_times.iter().map(|&t| grid.index_of(t)).collect();
    let results = plan.map_samples(seed, opts.m, |i, s| -> Result<PerSample> {
        if i < opts.export {
            if let Some(dir) = &opts.export_dir {
                io::write_sample_csv(&dir.join(io::sample_file_name(plan.direction, i)), &grid, s)?;
            }
        }
        let parts = scoring.split(s);
        let mut comps = Vec::with_capacity(parts.len());
        for (c, est) in parts.iter().enumerate() {
            comps.push(PerComponent {
                srmse: srmse(&scoring.truth[c], est)?,
                corr: corr(&scoring.truth[c], est)?,
                corr_extreme: corr_conditional(&scoring.truth[c], est, &scoring.masks[c])?,
                eta: eta(&mean_parts[c], est)?,
                error: diagnostics::sample_error(&scoring.truth[c], &mean_parts[c], est)?,
            });
        }
        Ok(PerSample {
            comps,
            probes: probe_values(s, &idx),
            kept: (i < opts.keep).then(|| s.clone()),
        })
    })?;
    let results = results
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| CgnsError::Member { index: i, source: Box::new(e) }))
        .collect::<Result<Vec<_>>>()?;

    let m = results.len();
    let mut components = Vec::new();
    let mut bias_variance = Vec::new();
    for (c, name) in scoring.names.iter().enumerate() {
        let avg = |f: &dyn Fn(&PerComponent) -> f64| results.iter().map(|r| f(&r.comps[c])).sum::<f64>() / m as f64;
        let errors: Vec<SampleError> = results.iter().map(|r| r.comps[c].error).collect();
        let bv = diagnostics::bias_variance_from_errors(&scoring.truth[c], &mean_parts[c], &errors)?;
        let mean_corr = corr(&scoring.truth[c], &mean_parts[c])?.abs();
        let not_above = results.iter().filter(|r| r.comps[c].corr.abs() <= mean_corr).count() as f64 / m as f64;
        components.push(ComponentMetrics {
            component: name.clone(),
            report: MetricReport {
                srmse: avg(&|p| p.srmse),
                corr: avg(&|p| p.corr),
                corr_extreme: avg(&|p| p.corr_extreme),
                eta: avg(&|p| p.eta),
                bias_sq: bv.bias_sq,
                variance_term: bv.variance_term,
            },
            corr_not_above_mean: Some(not_above),
        });
        bias_variance.push((name.clone(), bv));
    }
    let consistency = if m >= 2 && !idx.is_empty() {
        let values: Vec<Vec<Vec<f64>>> = results.iter().map(|r| r.probes.clone()).collect();
        Some(ConsistencyReport {
            direction: plan.direction,
            m,
            seed,
            probes: probe_stats(&grid, target, &idx, &values),
        })
    } else {
        None
    };
    let manifest = opts.export_dir.as_ref().map(|_| EnsembleManifest {
        seed,
        direction: plan.direction,
        m,
        source: target.source_path_id.clone(),
        files: (0..opts.export.min(m)).map(|i| io::sample_file_name(plan.direction, i)).collect(),
    });
    let kept = results.into_iter().filter_map(|r| r.kept).collect();
    Ok(EnsembleSummary {
        direction: plan.direction,
        seed,
        metrics: EstimateMetrics {
            estimate: format!("{}_samples", plan.direction.as_str()),
            m,
            components,
        },
        bias_variance,
        consistency,
        kept,
        manifest,
    })
}

/// Sampler plan for `direction` honouring the configured initial mode.
pub fn sampler_plan(
    cfg: &RunConfig,
    model: &dyn CgnsModel,
    truth: &Trajectory,
    filter: &PosteriorSeries,
    direction: Direction,
) -> Result<SamplerPlan> {
    let init = match cfg.initial.sampler_init {
        SamplerInit::Gaussian => InitMode::Gaussian,
        SamplerInit::Truth => {
            let j = match direction {
                Direction::Forward => 0,
                Direction::Backward => truth.grid.n_steps,
            };
            InitMode::PointMass(crate::linalg::row(&truth.y_path, j))
        }
    };
    SamplerPlan::new(model, &truth.x_path, &truth.grid, filter, direction, &init)
}

/// Seed of the sampler streams for one run.
pub fn sampler_seed(cfg: &RunConfig) -> u64 {
    rng::sub_seed(cfg.seed, rng::Stream::Init, 0)
}

/// A two-column curve destined for `<name>.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub name: String,
    pub x_name: &'static str,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

/// Everything the case study produces.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub truth: Trajectory,
    pub assimilation: Assimilation,
    pub metrics: MetricsFile,
    pub ensembles: Vec<EnsembleSummary>,
    pub curves: Vec<Curve>,
    pub acf_decomposition: Option<AcfDecomposition>,
    pub spectrum: SpectrumTrack,
}

/// Scores the posterior means, draws and scores the configured ensembles,
/// estimates ACF/PSD curves after burn-in and the eigenvalue tracks.
/// `extra_runs` are further (observed path, filter series) pairs averaged into
/// the eigenvalue tracks.
pub fn analyze(
    cfg: &RunConfig,
    model: &dyn CgnsModel,
    truth: Trajectory,
    assimilation: Assimilation,
    extra_runs: &[(DMatrix<f64>, PosteriorSeries)],
    export_dir: Option<&Path>,
) -> Result<Analysis> {
    let grid = truth.grid;
    let dg = &cfg.diagnostics;
    let scoring = Scoring::new(&truth.y_path, dg.extreme_theta)?;
    let filter_mean = assimilation.filter.means();
    let smoother_mean = assimilation.smoother.means();
    let mut estimates = vec![
        scoring.score_mean("filter_mean", &filter_mean)?,
        scoring.score_mean("smoother_mean", &smoother_mean)?,
    ];

    let seed = sampler_seed(cfg);
    let mut ensembles = Vec::new();
    for &direction in &cfg.ensemble.directions {
        let plan = sampler_plan(cfg, model, &truth, &assimilation.filter, direction)?;
        let target = match direction {
            Direction::Forward => &assimilation.filter,
            Direction::Backward => &assimilation.smoother,
        };
        let opts = EnsembleOptions {
            m: cfg.ensemble.m,
            keep: 1,
            export: cfg.ensemble.export,
            export_dir: export_dir.map(Path::to_path_buf),
            probe_times: cfg.probe_times(),
            extreme_theta: dg.extreme_theta,
        };
        let summary = summarize_ensemble(&plan, &truth.y_path, target, seed, &opts)?;
        estimates.push(summary.metrics.clone());
        ensembles.push(summary);
    }

    let start = grid.index_of(grid.t0 + cfg.effective_burn_in());
    let n_eq = grid.len() - start;
    let max_lag = ((dg.max_lag / grid.dt).round() as usize).min(n_eq.saturating_sub(1));
    let segment = dg.segment_len.min(n_eq / 2);
    let mut named: Vec<(String, DMatrix<f64>)> = vec![
        ("truth".into(), truth.y_path.clone()),
        ("filter_mean".into(), filter_mean.clone()),
        ("smoother_mean".into(), smoother_mean.clone()),
    ];
    for e in &ensembles {
        if let Some(s) = e.kept.first() {
            named.push((format!("{}_sample", e.direction.as_str()), s.clone()));
        }
    }
    let mut curves = Vec::new();
    for (series_name, series) in &named {
        let eq = after(series, start);
        for (c, part) in scoring.split(&eq).iter().enumerate() {
            let comp = &scoring.names[c];
            if max_lag > 0 {
                let a = acf(part, max_lag, grid.dt)?;
                curves.push(Curve { name: format!("acf_{series_name}_{comp}"), x_name: "lag", xs: a.lags, ys: a.values });
            }
            if segment >= 4 {
                let p = psd_estimate(part, segment, grid.dt)?;
                curves.push(Curve { name: format!("psd_{series_name}_{comp}"), x_name: "freq", xs: p.freqs, ys: p.power });
            }
        }
    }
    let decomposition = match ensembles.iter().find(|e| e.direction == Direction::Backward) {
        Some(e) if max_lag > 0 => e
            .kept
            .first()
            .map(|s| acf_decomposition(&after(&smoother_mean, start), &after(s, start), max_lag, grid.dt))
            .transpose()?,
        _ => None,
    };

    let mut runs: Vec<(&DMatrix<f64>, &PosteriorSeries)> = vec![(&truth.x_path, &assimilation.filter)];
    runs.extend(extra_runs.iter().map(|(x, f)| (x, f)));
    let spectrum = diagnostics::uncertainty_spectra(model, &runs)?;

    Ok(Analysis {
        truth,
        assimilation,
        metrics: MetricsFile { extreme_theta: dg.extreme_theta, estimates },
        ensembles,
        curves,
        acf_decomposition: decomposition,
        spectrum,
    })
}

/// Full case study from a configuration: truth run 0, assimilation, further
/// truth runs for the eigenvalue tracks, then [`analyze`].
pub fn case_study(cfg: &RunConfig, export_dir: Option<&Path>) -> Result<Analysis> {
    cfg.validate()?;
    let model = cfg.build_model()?;
    let model = model.as_ref();
    let grid = cfg.time_grid()?;
    let init = cfg.filter_init(model)?;
    let truth = simulate_truth(cfg, model, 0)?;
    let assimilation = assimilate(model, &truth.x_path, &grid, &init)?;
    let extra = (1..cfg.diagnostics.spectrum_runs)
        .map(|i| {
            let tr = simulate_truth(cfg, model, i)?;
            let f = run_filter(model, &tr.x_path, &grid, &init)?;
            Ok((tr.x_path, f))
        })
        .collect::<Result<Vec<_>>>()?;
    analyze(cfg, model, truth, assimilation, &extra, export_dir)
}

impl Analysis {
    /// Writes every output under `dir` and returns the file names. Sample
    /// CSVs were already written while drawing when `analyze` got the same
    /// directory.
    pub fn write(&self, dir: &Path, include_inputs: bool) -> Result<Vec<String>> {
        let mut files = Vec::new();
        if include_inputs {
            io::write_trajectory_csv(&dir.join("truth.csv"), &self.truth)?;
            io::write_posterior_csv(&dir.join("filter.csv"), &self.assimilation.filter)?;
            io::write_posterior_csv(&dir.join("smoother.csv"), &self.assimilation.smoother)?;
            files.extend(["truth.csv", "filter.csv", "smoother.csv"].map(String::from));
        }
        for e in &self.ensembles {
            if let Some(man) = &e.manifest {
                files.extend(man.files.iter().cloned());
                let name = format!("ensemble_{}.json", e.direction.as_str());
                io::write_json(&dir.join(&name), man)?;
                files.push(name);
            }
            if let Some(c) = &e.consistency {
                let name = format!("consistency_{}.json", e.direction.as_str());
                io::write_json(&dir.join(&name), c)?;
                files.push(name);
            }
        }
        io::write_json(&dir.join("metrics.json"), &self.metrics)?;
        files.push("metrics.json".into());
        for c in &self.curves {
            let name = format!("{}.csv", c.name);
            io::write_curve_csv(&dir.join(&name), c.x_name, &c.xs, &c.ys)?;
            files.push(name);
        }
        if let Some(d) = &self.acf_decomposition {
            io::write_json(&dir.join("acf_decomposition.json"), d)?;
            files.push("acf_decomposition.json".into());
        }
        io::write_json(&dir.join("spectrum.json"), &self.spectrum)?;
        files.push("spectrum.json".into());
        Ok(files)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;

    fn small_triad() -> RunConfig {
        let mut c = RunConfig::default();
        c.grid.t_end = 6.0;
        c.grid.dt = 2e-3;
        c.ensemble.m = 8;
        c.ensemble.export = 2;
        c.diagnostics.segment_len = 256;
        c.diagnostics.spectrum_runs = 2;
        c.seed = 11;
        c
    }

    #[test]
    fn small_case_study_runs() {
        let cfg = small_triad();
        let a = case_study(&cfg, None).unwrap();
        assert_eq!(a.ensembles.len(), 2);
        assert_eq!(a.metrics.estimates.len(), 4);
        let fwd = a.metrics.estimate("forward_samples").unwrap();
        assert_eq!(fwd.m, 8);
        assert_eq!(fwd.components.len(), 3);
        assert!(a.ensembles.iter().all(|e| e.consistency.as_ref().unwrap().probes.len() == 3));
        assert!(a.curves.iter().any(|c| c.name == "acf_backward_sample_all"));
        assert!(a.curves.iter().any(|c| c.name == "psd_truth_y_0"));
        assert_eq!(a.spectrum.times.len(), 3001);
        let n = a.assimilation.filter.len();
        assert_eq!(a.assimilation.filter.states[n - 1], a.assimilation.smoother.states[n - 1]);
    }

    #[test]
    fn mean_scores_are_consistent() {
        let cfg = small_triad();
        let cfg = RunConfig { ensemble: crate::config::EnsembleConfig { m: 1, ..cfg.ensemble.clone() }, ..cfg };
        let a = case_study(&cfg, None).unwrap();
        for e in ["filter_mean", "smoother_mean"] {
            for c in &a.metrics.estimate(e).unwrap().components {
                assert_eq!(c.report.eta, 1.0);
                assert!((c.report.bias_sq - c.report.srmse.powi(2)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn scalar_model_has_no_all_component() {
        let mut cfg = RunConfig::default();
        cfg.model = "linear".into();
        cfg.grid.t_end = 4.0;
        cfg.grid.dt = 1e-2;
        cfg.ensemble.m = 3;
        cfg.diagnostics.segment_len = 64;
        cfg.diagnostics.spectrum_runs = 1;
        let a = case_study(&cfg, None).unwrap();
        let names: Vec<_> = a.metrics.estimates[0].components.iter().map(|c| c.component.as_str()).collect();
        assert_eq!(names, ["y_0"]);
    }
}
