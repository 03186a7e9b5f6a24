//! Backward optimal nonlinear smoother.

use nalgebra::{DMatrix, DVector};

use crate::error::{CgnsError, Result};
use crate::filter::{check_path, finish_covariance, GaussianState, PosteriorSeries, SeriesKind};
use crate::linalg::{self, SpdFactor, TOL_PD_STRICT};
use crate::model::{CgnsModel, LocalCoefficients};
use crate::simulate::TimeGrid;

/// Cholesky factor of a filter covariance that is required to be strictly
/// positive definite.
pub(crate) fn filter_cov_factor(r_f: &DMatrix<f64>, t: f64) -> Result<SpdFactor> {
    let (min_eig, _) = linalg::sym_eig_range(r_f);
    if !(min_eig >= TOL_PD_STRICT) {
        return Err(CgnsError::FilterCovSingular { t, min_eig });
    }
    SpdFactor::new(r_f).ok_or(CgnsError::FilterCovSingular { t, min_eig })
}

/// One backward step from `t + dt` to `t` with coefficients at `(t, x_t)`.
pub fn smoother_step_local(
    lc: &LocalCoefficients,
    x_t: &DVector<f64>,
    x_next: &DVector<f64>,
    filt: &GaussianState,
    smo_next: &GaussianState,
    dt: f64,
) -> Result<GaussianState> {
    let t = lc.snap.t;
    let rf = filter_cov_factor(&filt.cov, t)?;
    // B R_f⁻¹
    let b_rf = rf.right_solve(&lc.b_mat);
    let mu_n = &smo_next.mean;
    let r_n = &smo_next.cov;

    let pull = &b_rf * (&filt.mean - mu_n);
    let obs = x_t - x_next + lc.x_drift(mu_n) * dt;
    let mean = mu_n - (lc.y_drift(mu_n) - pull) * dt + &lc.obs_gain * obs;
    if !mean.iter().all(|v| v.is_finite()) {
        return Err(CgnsError::NonFiniteState { t });
    }

    let damp = &lc.a_mat + &b_rf;
    let raw = r_n - (&damp * r_n + r_n * damp.transpose() - &lc.b_mat) * dt;
    let cov = finish_covariance(linalg::symmetrize(&raw), t, "smoother")?;
    Ok(GaussianState { mean, cov })
}

#[allow(clippy::too_many_arguments)]
pub fn smoother_step(
    model: &dyn CgnsModel,
    t: f64,
    x_t: &DVector<f64>,
    x_next: &DVector<f64>,
    filt: &GaussianState,
    smo_next: &GaussianState,
    dt: f64,
) -> Result<GaussianState> {
    let lc = LocalCoefficients::at(model, t, x_t)?;
    smoother_step_local(&lc, x_t, x_next, filt, smo_next, dt)
}

/// Backward pass over a filter series. The last state is copied from the
/// filter unchanged.
///
/// The explicit covariance step keeps R_s positive semidefinite while
/// `dt·‖B R_f⁻¹‖` stays below about 1/2. A very small filter covariance next to
/// a large hidden noise breaks that, and the step is then clamped with a
/// warning.
pub fn run_smoother(
    model: &dyn CgnsModel,
    x_path: &DMatrix<f64>,
    grid: &TimeGrid,
    filter_series: &PosteriorSeries,
) -> Result<PosteriorSeries> {
    check_series(model, x_path, grid, filter_series)?;
    let n = grid.len();
    let mut states = vec![filter_series.states[n - 1].clone(); n];
    let mut x_next = linalg::row(x_path, n - 1);
    for j in (0..grid.n_steps).rev() {
        let x_t = linalg::row(x_path, j);
        let lc = LocalCoefficients::at(model, grid.t(j), &x_t)?;
        states[j] =
            smoother_step_local(&lc, &x_t, &x_next, &filter_series.states[j], &states[j + 1], grid.dt)?;
        x_next = x_t;
    }
    Ok(PosteriorSeries {
        grid: *grid,
        states,
        kind: SeriesKind::Smoother,
        source_path_id: filter_series.source_path_id.clone(),
    })
}

pub(crate) fn check_series(
    model: &dyn CgnsModel,
    x_path: &DMatrix<f64>,
    grid: &TimeGrid,
    filter_series: &PosteriorSeries,
) -> Result<()> {
    check_path(model, x_path, grid)?;
    if filter_series.kind != SeriesKind::Filter {
        return Err(CgnsError::Dimension("expected a filter series".into()));
    }
    if filter_series.len() != grid.len() || filter_series.grid != *grid {
        return Err(CgnsError::Dimension(format!(
            "filter series has {} states on a different grid, expected {}",
            filter_series.len(),
            grid.len()
        )));
    }
    if filter_series.dim() != model.dims().l {
        return Err(CgnsError::Dimension("filter series has the wrong hidden dimension".into()));
    }
    Ok(())
}

/// The discrete smoother recursion written with the leading-order `E` and
/// `F` matrices. Kept as an independent cross-check of [`smoother_step`].
#[allow(clippy::too_many_arguments)]
pub fn discrete_smoother_step_oracle(
    model: &dyn CgnsModel,
    t: f64,
    x_t: &DVector<f64>,
    x_next: &DVector<f64>,
    filt: &GaussianState,
    smo_next: &GaussianState,
    dt: f64,
) -> Result<GaussianState> {
    let lc = LocalCoefficients::at(model, t, x_t)?;
    let rf = filter_cov_factor(&filt.cov, t)?;
    let l = filt.mean.len();
    let id = DMatrix::<f64>::identity(l, l);
    let r_f = &filt.cov;
    let ly = &lc.snap.lambda_y;
    let lx = &lc.snap.lambda_x;
    let sxx_inv = lc.sxx_inverse();

    let drift_cov = ly * r_f + r_f * ly.transpose() + &lc.gram.syy;
    let c22 = SpdFactor::new(&linalg::symmetrize(&(r_f + &drift_cov * dt)))
        .ok_or(CgnsError::FilterCovSingular { t, min_eig: 0.0 })?;
    let c_jj = c22.right_solve(&(r_f * (&id + ly * dt).transpose()));
    let gx = lx + rf.right_solve(&lc.gram.sxy);
    let e = &c_jj + &lc.obs_gain * &gx * dt;

    let kl = &sxx_inv * &gx;
    let klt = kl.transpose();
    let h = rf.solve(&drift_cov);
    let rf_inv_ht = rf.solve(&h.transpose());
    let inner = &klt
        + (gx.transpose() * &kl * r_f * &klt - rf_inv_ht * r_f * &klt + ly.transpose() * &klt) * dt
        - lx.transpose() * (&sxx_inv + &kl * r_f * &klt * dt);
    let f = -(r_f * inner);

    let mu_f = &filt.mean;
    let mean = mu_f
        + &e * (&smo_next.mean - (&id + ly * dt) * mu_f - &lc.snap.f_y * dt)
        + &f * (x_next - x_t - lc.x_drift(mu_f) * dt);
    let raw = r_f + &e * (&smo_next.cov * e.transpose() - (&id + ly * dt) * r_f) - &f * lx * r_f * dt;
    let cov = finish_covariance(linalg::symmetrize(&raw), t, "smoother")?;
    Ok(GaussianState { mean, cov })
}
