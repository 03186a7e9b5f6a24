//! Forward optimal nonlinear filter.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CgnsError, Result};
use crate::linalg::{self, TOL_PSD};
use crate::model::{CgnsModel, LocalCoefficients};
use crate::simulate::TimeGrid;

/// Trace above which a posterior covariance counts as blown up.
pub const COV_BLOWUP: f64 = 1e8;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianState {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let l = mean.len();
        if cov.shape() != (l, l) {
            return Err(CgnsError::Dimension(format!(
                "covariance has shape {:?}, expected ({l}, {l})",
                cov.shape()
            )));
        }
        let cov = linalg::clamp_psd(&cov, "initial covariance")?;
        Ok(GaussianState { mean, cov })
    }

    /// Zero mean and covariance `0.01·I`.
    pub fn default_init(l: usize) -> Self {
        GaussianState {
            mean: DVector::zeros(l),
            cov: DMatrix::identity(l, l) * 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesKind {
    Filter,
    Smoother,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSeries {
    pub grid: TimeGrid,
    pub states: Vec<GaussianState>,
    pub kind: SeriesKind,
    pub source_path_id: String,
}

impl PosteriorSeries {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, |s| s.mean.len())
    }

    /// Means stacked as a (J+1) × l matrix.
    pub fn means(&self) -> DMatrix<f64> {
        let l = self.dim();
        DMatrix::from_fn(self.len(), l, |j, i| self.states[j].mean[i])
    }

    pub fn cov_traces(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.cov.trace()).collect()
    }
}

/// Symmetrizes, clamps roundoff negativity and guards against blow-up.
pub(crate) fn finish_covariance(raw: DMatrix<f64>, t: f64, what: &str) -> Result<DMatrix<f64>> {
    if !linalg::all_finite(&raw) {
        return Err(CgnsError::CovarianceBlowup { t });
    }
    let (cov, min_eig) = linalg::project_psd(&raw);
    if min_eig < -TOL_PSD {
        log::warn!("{what} covariance lost definiteness at t = {t} (min eigenvalue {min_eig:e}); clamped");
    }
    if cov.trace() > COV_BLOWUP {
        return Err(CgnsError::CovarianceBlowup { t });
    }
    Ok(cov)
}

/// One filter step with precomputed coefficients at the left endpoint.
pub fn filter_step_local(
    lc: &LocalCoefficients,
    x_j: &DVector<f64>,
    x_next: &DVector<f64>,
    state: &GaussianState,
    dt: f64,
) -> Result<GaussianState> {
    let t = lc.snap.t;
    let (mu, r) = (&state.mean, &state.cov);
    let gain = lc.kalman_gain(r);
    let innovation = x_next - x_j - lc.x_drift(mu) * dt;
    let mean = mu + lc.y_drift(mu) * dt + &gain * innovation;
    if !mean.iter().all(|v| v.is_finite()) {
        return Err(CgnsError::NonFiniteState { t: t + dt });
    }
    let ly = &lc.snap.lambda_y;
    let lx = &lc.snap.lambda_x;
    let raw = r
        + (ly * r + r * ly.transpose() + &lc.gram.syy - &gain * (&lc.gram.sxy + lx * r)) * dt;
    let cov = finish_covariance(linalg::symmetrize(&raw), t + dt, "filter")?;
    Ok(GaussianState { mean, cov })
}

pub fn filter_step(
    model: &dyn CgnsModel,
    t: f64,
    x_j: &DVector<f64>,
    x_next: &DVector<f64>,
    state: &GaussianState,
    dt: f64,
) -> Result<GaussianState> {
    let lc = LocalCoefficients::at(model, t, x_j)?;
    filter_step_local(&lc, x_j, x_next, state, dt)
}

/// Mean update written with the auxiliary matrices:
/// `μ' = μ + ((A − RΓ)μ + fʸ)Δt + ((Σʸ∘Σˣ) + RΛˣᵀ)(Σˣ∘Σˣ)⁻¹(Δx − fˣΔt)`.
pub fn filter_mean_alternative(
    model: &dyn CgnsModel,
    t: f64,
    x_j: &DVector<f64>,
    x_next: &DVector<f64>,
    state: &GaussianState,
    dt: f64,
) -> Result<DVector<f64>> {
    let lc = LocalCoefficients::at(model, t, x_j)?;
    let (mu, r) = (&state.mean, &state.cov);
    let drift = (&lc.a_mat - r * &lc.gamma) * mu + &lc.snap.f_y;
    let increment = x_next - x_j - &lc.snap.f_x * dt;
    Ok(mu + drift * dt + lc.kalman_gain(r) * increment)
}

/// Runs the filter along an observed path given as a (J+1) × k matrix.
pub fn run_filter(
    model: &dyn CgnsModel,
    x_path: &DMatrix<f64>,
    grid: &TimeGrid,
    init: &GaussianState,
) -> Result<PosteriorSeries> {
    check_path(model, x_path, grid)?;
    let l = model.dims().l;
    if init.mean.len() != l || init.cov.shape() != (l, l) {
        return Err(CgnsError::Dimension(format!("initial filter state must have dimension {l}")));
    }
    let mut states = Vec::with_capacity(grid.len());
    states.push(init.clone());
    let mut x = linalg::row(x_path, 0);
    for j in 0..grid.n_steps {
        let x_next = linalg::row(x_path, j + 1);
        let lc = LocalCoefficients::at(model, grid.t(j), &x)?;
        let next = filter_step_local(&lc, &x, &x_next, &states[j], grid.dt)?;
        states.push(next);
        x = x_next;
    }
    Ok(PosteriorSeries {
        grid: *grid,
        states,
        kind: SeriesKind::Filter,
        source_path_id: String::new(),
    })
}

pub(crate) fn check_path(model: &dyn CgnsModel, x_path: &DMatrix<f64>, grid: &TimeGrid) -> Result<()> {
    let k = model.dims().k;
    if x_path.nrows() != grid.len() || x_path.ncols() != k {
        return Err(CgnsError::Dimension(format!(
            "observed path is {}×{}, expected {}×{k}",
            x_path.nrows(),
            x_path.ncols(),
            grid.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CoefficientSnapshot, Dims, FnModel, LinearModel};
    use crate::simulate::simulate_path;
    use proptest::prelude::*;

    fn scalar() -> LinearModel {
        LinearModel::scalar(1.0, -1.0, 1.0, 1.0)
    }

    fn v(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    #[test]
    fn zero_innovation_is_pure_forecast() {
        let m = scalar();
        let st = GaussianState { mean: v(0.7), cov: DMatrix::from_element(1, 1, 0.3) };
        let dt = 0.01;
        // Predicted increment of x: (λˣμ + fˣ)dt = 0.7·dt.
        let x0 = v(0.0);
        let x1 = v(0.7 * dt);
        let out = filter_step(&m, 0.0, &x0, &x1, &st, dt).unwrap();
        assert_eq!(out.mean[0], 0.7 + (-0.7) * dt);
    }

    #[test]
    fn steady_riccati_is_fixed_to_second_order() {
        let m = scalar();
        let r_inf = 2f64.sqrt() - 1.0;
        let st = GaussianState { mean: v(0.0), cov: DMatrix::from_element(1, 1, r_inf) };
        let out = filter_step(&m, 0.0, &v(0.0), &v(0.0), &st, 1e-3).unwrap();
        assert!((out.cov[(0, 0)] - r_inf).abs() < 1e-12);
    }

    #[test]
    fn uncoupled_observation_gives_moment_equations() {
        let m = LinearModel::scalar(0.0, -2.0, 1.0, 0.5);
        let st = GaussianState { mean: v(1.0), cov: DMatrix::from_element(1, 1, 0.2) };
        let dt = 0.01;
        let out = filter_step(&m, 0.0, &v(0.0), &v(5.0), &st, dt).unwrap();
        assert_eq!(out.mean[0], 1.0 - 2.0 * dt);
        let want = 0.2 + (-2.0 * 0.2 * 2.0 + 0.25) * dt;
        assert!((out.cov[(0, 0)] - want).abs() < 1e-15);
    }

    #[test]
    fn empty_grid_returns_init() {
        let m = scalar();
        let g = TimeGrid::new(0.0, 0.0, 0.1).unwrap();
        let init = GaussianState::default_init(1);
        let s = run_filter(&m, &DMatrix::zeros(1, 1), &g, &init).unwrap();
        assert_eq!(s.states, vec![init]);
    }

    #[test]
    fn blowup_is_reported() {
        let dims = Dims { k: 1, l: 1, d: 1, r: 1 };
        let m = FnModel::new("unstable", dims, |t, _| {
            let mut c = CoefficientSnapshot::zeros(dims, t);
            c.lambda_y[(0, 0)] = 50.0;
            c.sigma1_x[(0, 0)] = 1.0;
            c.sigma2_y[(0, 0)] = 1.0;
            c
        })
        .unwrap();
        let g = TimeGrid::new(0.0, 2.0, 0.01).unwrap();
        let err = run_filter(&m, &DMatrix::zeros(g.len(), 1), &g, &GaussianState::default_init(1))
            .unwrap_err();
        assert!(matches!(err, CgnsError::CovarianceBlowup { .. }));
    }

    #[test]
    fn filter_is_causal() {
        let m = scalar();
        let g = TimeGrid::new(0.0, 2.0, 0.01).unwrap();
        let tr = simulate_path(&m, &v(0.0), &v(0.0), &g, 3).unwrap();
        let init = GaussianState::default_init(1);
        let full = run_filter(&m, &tr.x_path, &g, &init).unwrap();
        let gh = TimeGrid::with_steps(0.0, 0.01, 100).unwrap();
        let head = run_filter(&m, &tr.x_path.rows(0, 101).into_owned(), &gh, &init).unwrap();
        assert_eq!(&full.states[..101], &head.states[..]);
    }

    fn random_linear(lx: f64, ly: f64, sx: f64, sy: f64, fx: f64, fy: f64) -> LinearModel {
        let dims = Dims { k: 1, l: 1, d: 1, r: 1 };
        let mut c = CoefficientSnapshot::zeros(dims, 0.0);
        c.lambda_x[(0, 0)] = lx;
        c.lambda_y[(0, 0)] = ly;
        c.sigma1_x[(0, 0)] = sx;
        c.sigma1_y[(0, 0)] = 0.3 * sy;
        c.sigma2_y[(0, 0)] = sy;
        c.f_x[0] = fx;
        c.f_y[0] = fy;
        LinearModel::new(c).unwrap()
    }

    proptest! {
        #[test]
        fn alternative_mean_agrees(
            lx in -2.0..2.0f64, ly in -2.0..-0.1f64, sx in 0.3..2.0f64, sy in 0.1..2.0f64,
            fx in -1.0..1.0f64, fy in -1.0..1.0f64, mu in -3.0..3.0f64, r in 0.0..2.0f64,
            dx in -0.5..0.5f64,
        ) {
            let m = random_linear(lx, ly, sx, sy, fx, fy);
            let st = GaussianState { mean: v(mu), cov: DMatrix::from_element(1, 1, r) };
            let a = filter_step(&m, 0.0, &v(0.2), &v(0.2 + dx), &st, 1e-3).unwrap();
            let b = filter_mean_alternative(&m, 0.0, &v(0.2), &v(0.2 + dx), &st, 1e-3).unwrap();
            prop_assert!((a.mean[0] - b[0]).abs() <= 1e-9);
        }

        #[test]
        fn covariance_stays_psd(
            lx in -2.0..2.0f64, ly in -2.0..-0.1f64, sx in 0.3..2.0f64, sy in 0.1..2.0f64,
            seed in 0u64..1000,
        ) {
            let m = random_linear(lx, ly, sx, sy, 0.0, 0.0);
            let g = TimeGrid::new(0.0, 2.0, 1e-2).unwrap();
            let tr = simulate_path(&m, &v(0.0), &v(0.0), &g, seed).unwrap();
            let s = run_filter(&m, &tr.x_path, &g, &GaussianState::default_init(1)).unwrap();
            for st in &s.states {
                prop_assert!(st.cov[(0, 0)] >= -TOL_PSD);
            }
        }
    }
}
