//! CSV and JSON files exchanged by the command-line tool.
//!
//! Numbers are written with 17 significant digits so that a file read back
//! reproduces the in-memory doubles exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CgnsError, Result};
use crate::filter::{GaussianState, PosteriorSeries, SeriesKind};
use crate::sampler::{Direction, TrajectoryEnsemble};
use crate::simulate::{TimeGrid, Trajectory};

pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| CgnsError::io(dir, e))?;
        }
    }
    fs::write(path, text).map_err(|e| CgnsError::io(path, e))
}

fn push_row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(',');
        }
        first = false;
        out.push_str(&num(v));
    }
}

pub fn trajectory_header(k: usize, l: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((0..k).map(|i| format!("x_{i}")));
    h.extend((0..l).map(|i| format!("y_{i}")));
    h
}

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let (k, l) = (traj.x_path.ncols(), traj.y_path.ncols());
    let mut out = trajectory_header(k, l).join(",");
    out.push('\n');
    for j in 0..traj.grid.len() {
        let (xr, yr) = (traj.x_path.row(j), traj.y_path.row(j));
        let row = std::iter::once(traj.grid.t(j)).chain(xr.iter().copied()).chain(yr.iter().copied());
        push_row(&mut out, row);
        out.push('\n');
    }
    write_text(path, &out)
}

/// Parsed CSV: header names and numeric rows.
pub struct Table {
    pub path: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CgnsError::io(path, e))?;
        let p = path.display().to_string();
        let mut lines = text.lines();
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| schema(&p, "empty file"))?
            .split(',')
            .map(|s| s.trim().to_string())
            .collect();
        let numeric = header.iter().filter(|h| h.as_str() != "kind").count();
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != header.len() {
                return Err(schema(
                    &p,
                    format!("row {} has {} fields, header has {}", n + 2, fields.len(), header.len()),
                ));
            }
            let mut row = Vec::with_capacity(numeric);
            for (name, f) in header.iter().zip(&fields) {
                if name == "kind" {
                    continue;
                }
                row.push(f.trim().parse::<f64>().map_err(|_| {
                    schema(&p, format!("row {}, column `{name}`: `{f}` is not a number", n + 2))
                })?);
            }
            rows.push(row);
        }
        Ok(Table { path: p, header, rows })
    }

    /// Fails unless the header starts with exactly `expected`.
    pub fn expect_header(&self, expected: &[String]) -> Result<()> {
        if self.header.len() < expected.len() || self.header[..expected.len()] != *expected {
            return Err(schema(
                &self.path,
                format!("expected columns [{}], found [{}]", expected.join(","), self.header.join(",")),
            ));
        }
        Ok(())
    }

    /// Checks the row count and `t` column against `grid`.
    pub fn expect_grid(&self, grid: &TimeGrid) -> Result<()> {
        if self.rows.len() != grid.len() {
            return Err(schema(
                &self.path,
                format!("has {} rows, the grid has {} points", self.rows.len(), grid.len()),
            ));
        }
        for (j, r) in self.rows.iter().enumerate() {
            if (r[0] - grid.t(j)).abs() > 1e-9 * (1.0 + grid.t(j).abs()) {
                return Err(schema(
                    &self.path,
                    format!("column `t` row {} is {}, grid expects {}", j + 2, r[0], grid.t(j)),
                ));
            }
        }
        Ok(())
    }
}

fn schema(path: &str, message: impl Into<String>) -> CgnsError {
    CgnsError::Schema { path: path.to_string(), message: message.into() }
}

pub fn read_trajectory_csv(path: &Path, grid: &TimeGrid, k: usize, l: usize) -> Result<Trajectory> {
    let t = Table::read(path)?;
    t.expect_header(&trajectory_header(k, l))?;
    t.expect_grid(grid)?;
    let x_path = DMatrix::from_fn(grid.len(), k, |j, i| t.rows[j][1 + i]);
    let y_path = DMatrix::from_fn(grid.len(), l, |j, i| t.rows[j][1 + k + i]);
    Ok(Trajectory { grid: *grid, x_path, y_path, seed: 0 })
}

pub fn posterior_header(l: usize, kind: SeriesKind) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((0..l).map(|i| format!("mu_{i}")));
    for a in 0..l {
        for b in a..l {
            h.push(format!("R_{a}{b}"));
        }
    }
    if kind == SeriesKind::Smoother {
        h.push("kind".into());
    }
    h
}

pub fn write_posterior_csv(path: &Path, series: &PosteriorSeries) -> Result<()> {
    let l = series.dim();
    let mut out = posterior_header(l, series.kind).join(",");
    out.push('\n');
    for (j, st) in series.states.iter().enumerate() {
        let mut vals = vec![series.grid.t(j)];
        vals.extend(st.mean.iter().copied());
        for a in 0..l {
            for b in a..l {
                vals.push(st.cov[(a, b)]);
            }
        }
        push_row(&mut out, vals);
        if series.kind == SeriesKind::Smoother {
            out.push_str(",smoother");
        }
        out.push('\n');
    }
    write_text(path, &out)
}

pub fn read_posterior_csv(path: &Path, grid: &TimeGrid, l: usize, kind: SeriesKind) -> Result<PosteriorSeries> {
    let t = Table::read(path)?;
    let mut header = posterior_header(l, kind);
    if kind == SeriesKind::Smoother {
        header.pop();
    }
    t.expect_header(&header)?;
    t.expect_grid(grid)?;
    let states = t
        .rows
        .iter()
        .map(|r| {
            let mean = DVector::from_column_slice(&r[1..1 + l]);
            let mut cov = DMatrix::zeros(l, l);
            let mut p = 1 + l;
            for a in 0..l {
                for b in a..l {
                    cov[(a, b)] = r[p];
                    cov[(b, a)] = r[p];
                    p += 1;
                }
            }
            GaussianState { mean, cov }
        })
        .collect();
    Ok(PosteriorSeries {
        grid: *grid,
        states,
        kind,
        source_path_id: path.display().to_string(),
    })
}

pub fn sample_header(l: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((0..l).map(|i| format!("yhat_{i}")));
    h
}

pub fn write_sample_csv(path: &Path, grid: &TimeGrid, sample: &DMatrix<f64>) -> Result<()> {
    let mut out = sample_header(sample.ncols()).join(",");
    out.push('\n');
    for j in 0..grid.len() {
        push_row(&mut out, std::iter::once(grid.t(j)).chain(sample.row(j).iter().copied()));
        out.push('\n');
    }
    write_text(path, &out)
}

pub fn read_sample_csv(path: &Path, grid: &TimeGrid, l: usize) -> Result<DMatrix<f64>> {
    let t = Table::read(path)?;
    t.expect_header(&sample_header(l))?;
    t.expect_grid(grid)?;
    Ok(DMatrix::from_fn(grid.len(), l, |j, i| t.rows[j][1 + i]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub seed: u64,
    pub direction: Direction,
    pub m: usize,
    /// Path of the series the samples were conditioned on.
    pub source: String,
    pub files: Vec<String>,
}

pub fn sample_file_name(direction: Direction, i: usize) -> String {
    format!("sample_{}_{i:05}.csv", direction.as_str())
}

/// Writes the first `export` samples of `ens` as `sample_<direction>_<i>.csv`
/// under `dir`, plus `ensemble_<direction>.json`. Returns the manifest.
pub fn write_ensemble(
    dir: &Path,
    ens: &TrajectoryEnsemble,
    m: usize,
    source: &str,
) -> Result<EnsembleManifest> {
    let mut files = Vec::new();
    for (i, s) in ens.samples.iter().enumerate() {
        let name = sample_file_name(ens.direction, i);
        write_sample_csv(&dir.join(&name), &ens.grid, s)?;
        files.push(name);
    }
    let manifest = EnsembleManifest {
        seed: ens.seed,
        direction: ens.direction,
        m,
        source: source.to_string(),
        files,
    };
    write_json(&dir.join(format!("ensemble_{}.json", ens.direction.as_str())), &manifest)?;
    Ok(manifest)
}

/// Two-column curve file, e.g. `lag,value` or `freq,value`.
pub fn write_curve_csv(path: &Path, x_name: &str, xs: &[f64], ys: &[f64]) -> Result<()> {
    let mut out = format!("{x_name},value\n");
    for (x, y) in xs.iter().zip(ys) {
        let _ = writeln!(out, "{},{}", num(*x), num(*y));
    }
    write_text(path, &out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CgnsError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| schema(&path.display().to_string(), e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    /// SHA-256 of the canonical JSON of `config`.
    pub config_hash: String,
    pub seed: u64,
    pub files: Vec<String>,
    pub created_at: String,
    pub version: String,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seed: u64, files: Vec<String>) -> Self {
        let config_hash = hash_json(&config);
        RunManifest {
            command: command.to_string(),
            config,
            config_hash,
            seed,
            files,
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        write_json(&path, self)?;
        Ok(path)
    }
}

pub fn hash_json(value: &serde_json::Value) -> String {
    let digest = Sha256::digest(value.to_string().as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::run_filter;
    use crate::model::LinearModel;
    use crate::simulate::simulate_path;

    #[test]
    fn trajectory_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let m = LinearModel::scalar(1.0, -1.0, 1.0, 1.0);
        let g = TimeGrid::new(0.0, 1.0, 0.01).unwrap();
        let z = DVector::zeros(1);
        let tr = simulate_path(&m, &z, &z, &g, 3).unwrap();
        let p = dir.path().join("truth.csv");
        write_trajectory_csv(&p, &tr).unwrap();
        let back = read_trajectory_csv(&p, &g, 1, 1).unwrap();
        assert_eq!(back.x_path, tr.x_path);
        assert_eq!(back.y_path, tr.y_path);
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("t,x_0,y_0\n"));
    }

    #[test]
    fn posterior_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let m = LinearModel::scalar(1.0, -1.0, 1.0, 1.0);
        let g = TimeGrid::new(0.0, 1.0, 0.01).unwrap();
        let z = DVector::zeros(1);
        let tr = simulate_path(&m, &z, &z, &g, 3).unwrap();
        let f = run_filter(&m, &tr.x_path, &g, &GaussianState::default_init(1)).unwrap();
        let p = dir.path().join("filter.csv");
        write_posterior_csv(&p, &f).unwrap();
        let back = read_posterior_csv(&p, &g, 1, SeriesKind::Filter).unwrap();
        assert_eq!(back.states, f.states);
    }

    #[test]
    fn header_for_two_hidden() {
        assert_eq!(
            posterior_header(2, SeriesKind::Smoother).join(","),
            "t,mu_0,mu_1,R_00,R_01,R_11,kind"
        );
    }

    #[test]
    fn schema_errors_name_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        fs::write(&p, "t,x_0,z\n0,1,2\n").unwrap();
        let g = TimeGrid::new(0.0, 0.0, 0.1).unwrap();
        let err = read_trajectory_csv(&p, &g, 1, 1).unwrap_err();
        assert!(err.to_string().contains("t,x_0,y_0"), "{err}");
        assert_eq!(err.exit_code(), 2);
        let missing = read_trajectory_csv(&dir.path().join("nope.csv"), &g, 1, 1).unwrap_err();
        assert_eq!(missing.exit_code(), 2);
    }

    #[test]
    fn hash_is_stable() {
        let v = serde_json::json!({"a": 1, "b": [1.5, 2]});
        assert_eq!(hash_json(&v), hash_json(&v.clone()));
        assert_eq!(hash_json(&v).len(), 64);
    }
}
