//! The `cgns` command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{CgnsError, Result};
use crate::filter::SeriesKind;
use crate::io::{self, RunManifest};
use crate::model::CgnsModel;
use crate::pipeline::{self, Assimilation, EnsembleOptions};
use crate::sampler::Direction;
use crate::simulate::Trajectory;
use crate::smoother::run_smoother;

#[derive(Debug, Parser)]
#[command(name = "cgns", version, about = "Conditional Gaussian nonlinear systems: simulate, filter, smooth, sample")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every command. They override the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// JSON config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// `triad` or `linear`.
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Overrides grid.dt.
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    /// Overrides grid.t_end.
    #[arg(long, global = true)]
    pub t_end: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a truth trajectory into truth.csv.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Run the filter and smoother on an observed path.
    Assimilate {
        #[command(flatten)]
        common: Common,
        /// Trajectory CSV (default: <out>/truth.csv).
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Draw posterior trajectory samples.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Filter CSV (default: <out>/filter.csv).
        #[arg(long)]
        filter: Option<PathBuf>,
        /// forward, backward or both, comma separated.
        #[arg(long, value_delimiter = ',')]
        direction: Vec<Direction>,
        #[arg(short = 'm', long = "samples")]
        m: Option<usize>,
        /// Probe times for the consistency report, comma separated.
        #[arg(long, value_delimiter = ',')]
        probe_times: Vec<f64>,
        /// Number of samples written as CSV (default: all).
        #[arg(long)]
        export: Option<usize>,
    },
    /// Metrics, ACF/PSD curves and eigenvalue tracks from existing files.
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        filter: Option<PathBuf>,
        #[arg(long)]
        smoother: Option<PathBuf>,
        #[arg(short = 'm', long = "samples")]
        m: Option<usize>,
    },
    /// The full triad case study in one go.
    CaseStudy {
        #[command(flatten)]
        common: Common,
        #[arg(short = 'm', long = "samples")]
        m: Option<usize>,
        #[arg(long)]
        export: Option<usize>,
    },
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(files) => {
            for f in files {
                println!("{f}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs one command and returns the paths it wrote.
pub fn execute(command: Command) -> Result<Vec<String>> {
    match command {
        Command::Simulate { common } => {
            let ctx = Context::new(&common, |_| {})?;
            let truth = pipeline::simulate_truth(&ctx.cfg, ctx.model.as_ref(), 0)?;
            io::write_trajectory_csv(&ctx.out.join("truth.csv"), &truth)?;
            ctx.finish("simulate", vec!["truth.csv".into()])
        }
        Command::Assimilate { common, truth } => {
            let ctx = Context::new(&common, |_| {})?;
            let truth = ctx.read_truth(truth.as_deref())?;
            let a = pipeline::assimilate(ctx.model.as_ref(), &truth.x_path, &truth.grid, &ctx.cfg.filter_init(ctx.model.as_ref())?)?;
            io::write_posterior_csv(&ctx.out.join("filter.csv"), &a.filter)?;
            io::write_posterior_csv(&ctx.out.join("smoother.csv"), &a.smoother)?;
            ctx.finish("assimilate", vec!["filter.csv".into(), "smoother.csv".into()])
        }
        Command::Sample { common, truth, filter, direction, m, probe_times, export } => {
            let ctx = Context::new(&common, |c| {
                if let Some(m) = m {
                    c.ensemble.m = m;
                }
                if !direction.is_empty() {
                    c.ensemble.directions = direction.clone();
                }
                if !probe_times.is_empty() {
                    c.ensemble.probe_times = Some(probe_times.clone());
                }
            })?;
            let model = ctx.model.as_ref();
            let truth = ctx.read_truth(truth.as_deref())?;
            let filter_path = ctx.input(filter.as_deref(), "filter.csv");
            let filt = io::read_posterior_csv(&filter_path, &truth.grid, model.dims().l, SeriesKind::Filter)?;
            let mut smoother = None;
            let mut files = Vec::new();
            for &dir in &ctx.cfg.ensemble.directions {
                let target = match dir {
                    Direction::Forward => &filt,
                    Direction::Backward => {
                        if smoother.is_none() {
                            smoother = Some(run_smoother(model, &truth.x_path, &truth.grid, &filt)?);
                        }
                        smoother.as_ref().unwrap()
                    }
                };
                let plan = pipeline::sampler_plan(&ctx.cfg, model, &truth, &filt, dir)?;
                let opts = EnsembleOptions {
                    m: ctx.cfg.ensemble.m,
                    keep: 0,
                    export: export.unwrap_or(ctx.cfg.ensemble.m),
                    export_dir: Some(ctx.out.clone()),
                    probe_times: ctx.cfg.probe_times(),
                    extreme_theta: ctx.cfg.diagnostics.extreme_theta,
                };
                let s = pipeline::summarize_ensemble(&plan, &truth.y_path, target, pipeline::sampler_seed(&ctx.cfg), &opts)?;
                let d = dir.as_str();
                if let Some(man) = &s.manifest {
                    files.extend(man.files.iter().cloned());
                    let name = format!("ensemble_{d}.json");
                    io::write_json(&ctx.out.join(&name), man)?;
                    files.push(name);
                }
                if let Some(c) = &s.consistency {
                    let name = format!("consistency_{d}.json");
                    io::write_json(&ctx.out.join(&name), c)?;
                    files.push(name);
                }
                let name = format!("metrics_{d}.json");
                io::write_json(&ctx.out.join(&name), &s.metrics)?;
                files.push(name);
            }
            ctx.finish("sample", files)
        }
        Command::Diagnose { common, truth, filter, smoother, m } => {
            let ctx = Context::new(&common, |c| {
                if let Some(m) = m {
                    c.ensemble.m = m;
                }
            })?;
            let model = ctx.model.as_ref();
            let truth = ctx.read_truth(truth.as_deref())?;
            let l = model.dims().l;
            let filt = io::read_posterior_csv(&ctx.input(filter.as_deref(), "filter.csv"), &truth.grid, l, SeriesKind::Filter)?;
            let smo = io::read_posterior_csv(
                &ctx.input(smoother.as_deref(), "smoother.csv"),
                &truth.grid,
                l,
                SeriesKind::Smoother,
            )?;
            let assimilation = Assimilation { filter: filt, smoother: smo };
            let analysis = pipeline::analyze(&ctx.cfg, model, truth, assimilation, &[], Some(&ctx.out))?;
            let files = analysis.write(&ctx.out, false)?;
            ctx.finish("diagnose", files)
        }
        Command::CaseStudy { common, m, export } => {
            let ctx = Context::new(&common, |c| {
                if let Some(m) = m {
                    c.ensemble.m = m;
                }
                if let Some(e) = export {
                    c.ensemble.export = e;
                }
            })?;
            let analysis = pipeline::case_study(&ctx.cfg, Some(&ctx.out))?;
            let files = analysis.write(&ctx.out, true)?;
            ctx.finish("case-study", files)
        }
    }
}

/// Resolves flags > file > defaults.
pub fn resolve_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    if let Some(m) = &common.model {
        cfg.model = m.clone();
    }
    if let Some(dt) = common.dt {
        cfg.grid.dt = dt;
    }
    if let Some(t) = common.t_end {
        cfg.grid.t_end = t;
    }
    Ok(cfg)
}

struct Context {
    cfg: RunConfig,
    model: Box<dyn CgnsModel>,
    out: PathBuf,
}

impl Context {
    fn new(common: &Common, adjust: impl FnOnce(&mut RunConfig)) -> Result<Self> {
        let mut cfg = resolve_config(common)?;
        adjust(&mut cfg);
        cfg.validate()?;
        let model = cfg.build_model()?;
        let out = cfg.out.clone();
        std::fs::create_dir_all(&out).map_err(|e| CgnsError::io(&out, e))?;
        Ok(Context { cfg, model, out })
    }

    fn input(&self, given: Option<&Path>, default: &str) -> PathBuf {
        given.map(Path::to_path_buf).unwrap_or_else(|| self.out.join(default))
    }

    fn read_truth(&self, given: Option<&Path>) -> Result<Trajectory> {
        let d = self.model.dims();
        io::read_trajectory_csv(&self.input(given, "truth.csv"), &self.cfg.time_grid()?, d.k, d.l)
    }

    fn finish(&self, command: &str, mut files: Vec<String>) -> Result<Vec<String>> {
        files.push("manifest.json".into());
        RunManifest::new(command, self.cfg.to_value(), self.cfg.seed, files.clone()).write(&self.out)?;
        Ok(files.into_iter().map(|f| self.out.join(f).display().to_string()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"seed": 1, "model": "linear", "grid": {"dt": 0.01}}"#).unwrap();
        let common = Common { config: Some(p), seed: Some(9), dt: Some(0.02), ..Default::default() };
        let c = resolve_config(&common).unwrap();
        assert_eq!((c.seed, c.model.as_str(), c.grid.dt), (9, "linear", 0.02));
    }

    #[test]
    fn parse_sample_flags() {
        let cli = Cli::try_parse_from([
            "cgns", "sample", "--direction", "backward", "-m", "100", "--probe-times", "10,30,50", "--seed", "4",
        ])
        .unwrap();
        match cli.command {
            Command::Sample { common, direction, m, probe_times, .. } => {
                assert_eq!(direction, vec![Direction::Backward]);
                assert_eq!(m, Some(100));
                assert_eq!(probe_times, vec![10.0, 30.0, 50.0]);
                assert_eq!(common.seed, Some(4));
            }
            _ => panic!(),
        }
    }

    #[test]
    fn bad_flag_exits_2() {
        assert_eq!(run(["cgns", "simulate", "--bogus"]), 2);
        assert_eq!(run(["cgns", "sample", "--direction", "sideways"]), 2);
    }
}
