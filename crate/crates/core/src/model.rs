//! The conditional Gaussian model class.
//!
//! A model couples an observed process `x` (dimension `k`) and a hidden process
//! `y` (dimension `l`) driven by two independent Wiener sources of dimensions
//! `d` and `r`:
//!
//! ```text
//! dx = (Λˣ(t,x) y + fˣ(t,x)) dt + Σ₁ˣ(t,x) dW₁ + Σ₂ˣ(t,x) dW₂
//! dy = (Λʸ(t,x) y + fʸ(t,x)) dt + Σ₁ʸ(t,x) dW₁ + Σ₂ʸ(t,x) dW₂
//! ```
//!
//! Every coefficient depends on the current `(t, x)` only; given a path of
//! `x` the hidden process is then exactly Gaussian.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CgnsError, Result};
use crate::linalg::{self, SpdFactor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// Observed dimension.
    pub k: usize,
    /// Hidden dimension.
    pub l: usize,
    /// Dimension of the first noise source.
    pub d: usize,
    /// Dimension of the second noise source.
    pub r: usize,
}

impl Dims {
    pub fn new(k: usize, l: usize, d: usize, r: usize) -> Result<Self> {
        let dims = Dims { k, l, d, r };
        dims.validate()?;
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.k == 0 {
            problems.push("k must be at least 1".to_string());
        }
        if self.l == 0 {
            problems.push("l must be at least 1".to_string());
        }
        if self.d + self.r == 0 {
            problems.push("d + r must be at least 1".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CgnsError::InvalidParams(problems))
        }
    }
}

/// The eight coefficient arrays evaluated at one `(t, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSnapshot {
    pub t: f64,
    /// k × l
    pub lambda_x: DMatrix<f64>,
    /// l × l
    pub lambda_y: DMatrix<f64>,
    pub f_x: DVector<f64>,
    pub f_y: DVector<f64>,
    /// k × d
    pub sigma1_x: DMatrix<f64>,
    /// k × r
    pub sigma2_x: DMatrix<f64>,
    /// l × d
    pub sigma1_y: DMatrix<f64>,
    /// l × r
    pub sigma2_y: DMatrix<f64>,
}

impl CoefficientSnapshot {
    pub fn zeros(dims: Dims, t: f64) -> Self {
        let Dims { k, l, d, r } = dims;
        CoefficientSnapshot {
            t,
            lambda_x: DMatrix::zeros(k, l),
            lambda_y: DMatrix::zeros(l, l),
            f_x: DVector::zeros(k),
            f_y: DVector::zeros(l),
            sigma1_x: DMatrix::zeros(k, d),
            sigma2_x: DMatrix::zeros(k, r),
            sigma1_y: DMatrix::zeros(l, d),
            sigma2_y: DMatrix::zeros(l, r),
        }
    }

    fn check_shapes(&self, dims: Dims) -> Result<()> {
        let Dims { k, l, d, r } = dims;
        let checks = [
            ("lambda_x", self.lambda_x.shape(), (k, l)),
            ("lambda_y", self.lambda_y.shape(), (l, l)),
            ("f_x", self.f_x.shape(), (k, 1)),
            ("f_y", self.f_y.shape(), (l, 1)),
            ("sigma1_x", self.sigma1_x.shape(), (k, d)),
            ("sigma2_x", self.sigma2_x.shape(), (k, r)),
            ("sigma1_y", self.sigma1_y.shape(), (l, d)),
            ("sigma2_y", self.sigma2_y.shape(), (l, r)),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(CgnsError::Dimension(format!(
                    "{name} has shape {got:?}, expected {want:?}"
                )));
            }
        }
        Ok(())
    }

    fn is_finite(&self) -> bool {
        [
            &self.lambda_x,
            &self.lambda_y,
            &self.sigma1_x,
            &self.sigma2_x,
            &self.sigma1_y,
            &self.sigma2_y,
        ]
        .into_iter()
        .all(linalg::all_finite)
            && self.f_x.iter().chain(self.f_y.iter()).all(|v| v.is_finite())
    }
}

/// A conditional Gaussian model: dimensions plus a pure coefficient evaluator.
///
/// Implementors only provide [`coefficients`](CgnsModel::coefficients); the
/// provided [`evaluate`](CgnsModel::evaluate) adds the shape and finiteness
/// checks every estimator relies on.
pub trait CgnsModel: Send + Sync {
    fn name(&self) -> &str;

    fn dims(&self) -> Dims;

    /// Raw coefficient evaluation. Must be deterministic in `(t, x)`.
    fn coefficients(&self, t: f64, x: &DVector<f64>) -> CoefficientSnapshot;

    fn evaluate(&self, t: f64, x: &DVector<f64>) -> Result<CoefficientSnapshot> {
        let dims = self.dims();
        if x.len() != dims.k {
            return Err(CgnsError::Dimension(format!(
                "observed state has length {}, model expects {}",
                x.len(),
                dims.k
            )));
        }
        if !t.is_finite() {
            return Err(CgnsError::NonFiniteCoefficient { t });
        }
        let snap = self.coefficients(t, x);
        snap.check_shapes(dims)?;
        if !snap.is_finite() {
            return Err(CgnsError::NonFiniteCoefficient { t });
        }
        Ok(snap)
    }
}

/// Noise Gramians taken with respect to rows: `Σᵃ∘Σᵇ = Σ₁ᵃΣ₁ᵇᵀ + Σ₂ᵃΣ₂ᵇᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramianSet {
    pub sxx: DMatrix<f64>,
    pub syy: DMatrix<f64>,
    pub sxy: DMatrix<f64>,
    pub syx: DMatrix<f64>,
}

pub fn gramians(snap: &CoefficientSnapshot) -> Result<GramianSet> {
    let gr = raw_gramians(snap);
    if SpdFactor::new(&gr.sxx).is_none() {
        return Err(CgnsError::SingularObservationGramian { t: snap.t });
    }
    Ok(gr)
}

fn raw_gramians(snap: &CoefficientSnapshot) -> GramianSet {
    let sxx = linalg::symmetrize(
        &(&snap.sigma1_x * snap.sigma1_x.transpose() + &snap.sigma2_x * snap.sigma2_x.transpose()),
    );
    let syy = linalg::symmetrize(
        &(&snap.sigma1_y * snap.sigma1_y.transpose() + &snap.sigma2_y * snap.sigma2_y.transpose()),
    );
    let sxy = &snap.sigma1_x * snap.sigma1_y.transpose() + &snap.sigma2_x * snap.sigma2_y.transpose();
    let syx = sxy.transpose();
    GramianSet { sxx, syy, sxy, syx }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryMatrices {
    /// `Λʸ − (Σʸ∘Σˣ)(Σˣ∘Σˣ)⁻¹Λˣ`
    pub a_mat: DMatrix<f64>,
    /// `Σʸ∘Σʸ − (Σʸ∘Σˣ)(Σˣ∘Σˣ)⁻¹(Σˣ∘Σʸ)`, symmetrized and clamped PSD.
    pub b_mat: DMatrix<f64>,
    /// `Λˣᵀ(Σˣ∘Σˣ)⁻¹Λˣ`
    pub gamma: DMatrix<f64>,
    /// `((Σʸ∘Σˣ) + R_f Λˣᵀ)(Σˣ∘Σˣ)⁻¹`, present when a filter covariance was given.
    pub kalman_gain: Option<DMatrix<f64>>,
}

pub fn auxiliary(
    snap: &CoefficientSnapshot,
    gr: &GramianSet,
    r_f: Option<&DMatrix<f64>>,
) -> Result<AuxiliaryMatrices> {
    let factor =
        SpdFactor::new(&gr.sxx).ok_or(CgnsError::SingularObservationGramian { t: snap.t })?;
    let obs_gain = factor.right_solve(&gr.syx);
    let (a_mat, b_mat, gamma) = derived(snap, gr, &factor, &obs_gain)?;
    let kalman_gain = match r_f {
        Some(r_f) => {
            let l = snap.lambda_y.nrows();
            if r_f.shape() != (l, l) {
                return Err(CgnsError::Dimension(format!(
                    "filter covariance has shape {:?}, expected ({l}, {l})",
                    r_f.shape()
                )));
            }
            Some(factor.right_solve(&(&gr.syx + r_f * snap.lambda_x.transpose())))
        }
        None => None,
    };
    Ok(AuxiliaryMatrices { a_mat, b_mat, gamma, kalman_gain })
}

fn derived(
    snap: &CoefficientSnapshot,
    gr: &GramianSet,
    factor: &SpdFactor,
    obs_gain: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let a_mat = &snap.lambda_y - obs_gain * &snap.lambda_x;
    let b_raw = &gr.syy - obs_gain * &gr.sxy;
    let b_mat = linalg::clamp_psd(&b_raw, "B")?;
    let gamma = linalg::symmetrize(&(snap.lambda_x.transpose() * factor.solve(&snap.lambda_x)));
    Ok((a_mat, b_mat, gamma))
}

/// Everything the estimators need at one left endpoint `(t_j, x_j)`.
pub struct LocalCoefficients {
    pub snap: CoefficientSnapshot,
    pub gram: GramianSet,
    /// `(Σʸ∘Σˣ)(Σˣ∘Σˣ)⁻¹`, l × k.
    pub obs_gain: DMatrix<f64>,
    pub a_mat: DMatrix<f64>,
    pub b_mat: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    factor: SpdFactor,
}

impl LocalCoefficients {
    pub fn at(model: &dyn CgnsModel, t: f64, x: &DVector<f64>) -> Result<Self> {
        let snap = model.evaluate(t, x)?;
        Self::from_snapshot(snap)
    }

    pub fn from_snapshot(snap: CoefficientSnapshot) -> Result<Self> {
        let gram = raw_gramians(&snap);
        let factor =
            SpdFactor::new(&gram.sxx).ok_or(CgnsError::SingularObservationGramian { t: snap.t })?;
        let obs_gain = factor.right_solve(&gram.syx);
        let (a_mat, b_mat, gamma) = derived(&snap, &gram, &factor, &obs_gain)?;
        Ok(LocalCoefficients { snap, gram, obs_gain, a_mat, b_mat, gamma, factor })
    }

    pub fn kalman_gain(&self, r_f: &DMatrix<f64>) -> DMatrix<f64> {
        self.factor
            .right_solve(&(&self.gram.syx + r_f * self.snap.lambda_x.transpose()))
    }

    /// `(Σˣ∘Σˣ)⁻¹ v`
    pub fn sxx_solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.factor.solve_vec(v)
    }

    pub fn sxx_inverse(&self) -> DMatrix<f64> {
        let k = self.gram.sxx.nrows();
        self.factor.solve(&DMatrix::identity(k, k))
    }

    /// Drift of the observed process given a hidden mean: `Λˣμ + fˣ`.
    pub fn x_drift(&self, mu: &DVector<f64>) -> DVector<f64> {
        &self.snap.lambda_x * mu + &self.snap.f_x
    }

    /// Drift of the hidden process: `Λʸμ + fʸ`.
    pub fn y_drift(&self, mu: &DVector<f64>) -> DVector<f64> {
        &self.snap.lambda_y * mu + &self.snap.f_y
    }
}

/// Constant-coefficient model given by flat row-major arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearSpec {
    pub k: usize,
    pub l: usize,
    pub d: usize,
    pub r: usize,
    pub lambda_x: Vec<f64>,
    pub lambda_y: Vec<f64>,
    pub f_x: Vec<f64>,
    pub f_y: Vec<f64>,
    pub sigma1_x: Vec<f64>,
    pub sigma2_x: Vec<f64>,
    pub sigma1_y: Vec<f64>,
    pub sigma2_y: Vec<f64>,
}

impl Default for LinearSpec {
    /// Scalar model `dx = y dt + dW₁`, `dy = −y dt + dW₂`.
    fn default() -> Self {
        LinearSpec {
            k: 1,
            l: 1,
            d: 1,
            r: 1,
            lambda_x: vec![1.0],
            lambda_y: vec![-1.0],
            f_x: vec![0.0],
            f_y: vec![0.0],
            sigma1_x: vec![1.0],
            sigma2_x: vec![0.0],
            sigma1_y: vec![0.0],
            sigma2_y: vec![1.0],
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinearModel {
    dims: Dims,
    coeffs: CoefficientSnapshot,
}

impl LinearModel {
    pub fn new(coeffs: CoefficientSnapshot) -> Result<Self> {
        let dims = Dims::new(
            coeffs.lambda_x.nrows(),
            coeffs.lambda_y.nrows(),
            coeffs.sigma1_x.ncols(),
            coeffs.sigma2_x.ncols(),
        )?;
        coeffs.check_shapes(dims)?;
        if !coeffs.is_finite() {
            return Err(CgnsError::InvalidParams(vec!["coefficients must be finite".into()]));
        }
        Ok(LinearModel { dims, coeffs })
    }

    /// Scalar model with `k = l = 1`, `d = r = 1`, observation noise on the
    /// first source and hidden noise on the second (no cross interaction).
    pub fn scalar(lambda_x: f64, lambda_y: f64, sigma_x: f64, sigma_y: f64) -> Self {
        let dims = Dims { k: 1, l: 1, d: 1, r: 1 };
        let mut c = CoefficientSnapshot::zeros(dims, 0.0);
        c.lambda_x[(0, 0)] = lambda_x;
        c.lambda_y[(0, 0)] = lambda_y;
        c.sigma1_x[(0, 0)] = sigma_x;
        c.sigma2_y[(0, 0)] = sigma_y;
        LinearModel { dims, coeffs: c }
    }

    pub fn from_spec(spec: &LinearSpec) -> Result<Self> {
        let dims = Dims::new(spec.k, spec.l, spec.d, spec.r)?;
        let Dims { k, l, d, r } = dims;
        let mut problems = Vec::new();
        let mut mat = |name: &str, data: &[f64], rows: usize, cols: usize| {
            if data.len() != rows * cols {
                problems.push(format!(
                    "linear.{name} has {} entries, expected {}",
                    data.len(),
                    rows * cols
                ));
                DMatrix::zeros(rows, cols)
            } else {
                DMatrix::from_row_slice(rows, cols, data)
            }
        };
        let coeffs = CoefficientSnapshot {
            t: 0.0,
            lambda_x: mat("lambda_x", &spec.lambda_x, k, l),
            lambda_y: mat("lambda_y", &spec.lambda_y, l, l),
            f_x: DVector::from_column_slice(mat("f_x", &spec.f_x, k, 1).as_slice()),
            f_y: DVector::from_column_slice(mat("f_y", &spec.f_y, l, 1).as_slice()),
            sigma1_x: mat("sigma1_x", &spec.sigma1_x, k, d),
            sigma2_x: mat("sigma2_x", &spec.sigma2_x, k, r),
            sigma1_y: mat("sigma1_y", &spec.sigma1_y, l, d),
            sigma2_y: mat("sigma2_y", &spec.sigma2_y, l, r),
        };
        if !problems.is_empty() {
            return Err(CgnsError::InvalidParams(problems));
        }
        Self::new(coeffs)
    }

    pub fn constant_coefficients(&self) -> &CoefficientSnapshot {
        &self.coeffs
    }
}

impl CgnsModel for LinearModel {
    fn name(&self) -> &str {
        "linear"
    }

    fn dims(&self) -> Dims {
        self.dims
    }

    fn coefficients(&self, t: f64, _x: &DVector<f64>) -> CoefficientSnapshot {
        let mut c = self.coeffs.clone();
        c.t = t;
        c
    }
}

/// Model backed by a user closure.
pub struct FnModel<F> {
    name: String,
    dims: Dims,
    eval: F,
}

impl<F> FnModel<F>
where
    F: Fn(f64, &DVector<f64>) -> CoefficientSnapshot + Send + Sync,
{
    pub fn new(name: impl Into<String>, dims: Dims, eval: F) -> Result<Self> {
        dims.validate()?;
        Ok(FnModel { name: name.into(), dims, eval })
    }
}

impl<F> CgnsModel for FnModel<F>
where
    F: Fn(f64, &DVector<f64>) -> CoefficientSnapshot + Send + Sync,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn dims(&self) -> Dims {
        self.dims
    }

    fn coefficients(&self, t: f64, x: &DVector<f64>) -> CoefficientSnapshot {
        let mut c = (self.eval)(t, x);
        c.t = t;
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_eig_range;

    fn scalar_snapshot(lx: f64, sx: f64, syx_scale: f64) -> CoefficientSnapshot {
        let dims = Dims { k: 1, l: 1, d: 1, r: 1 };
        let mut c = CoefficientSnapshot::zeros(dims, 0.0);
        c.lambda_x[(0, 0)] = lx;
        c.lambda_y[(0, 0)] = -1.0;
        c.sigma1_x[(0, 0)] = sx;
        c.sigma1_y[(0, 0)] = syx_scale;
        c.sigma2_y[(0, 0)] = 1.0;
        c
    }

    #[test]
    fn linear_model_is_constant() {
        let m = LinearModel::scalar(1.0, -1.0, 1.0, 1.0);
        let a = m.evaluate(0.0, &DVector::from_element(1, 3.0)).unwrap();
        let b = m.evaluate(0.0, &DVector::from_element(1, -7.0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.lambda_x[(0, 0)], 1.0);
        assert_eq!(a.lambda_y[(0, 0)], -1.0);
        assert_eq!(a.sigma1_x[(0, 0)], 1.0);
        assert_eq!(a.sigma2_y[(0, 0)], 1.0);
        assert_eq!(a.f_x[0], 0.0);
    }

    #[test]
    fn evaluate_rejects_non_finite() {
        let dims = Dims { k: 1, l: 1, d: 1, r: 0 };
        let m = FnModel::new("bad", dims, |t, _x| {
            let mut c = CoefficientSnapshot::zeros(dims, t);
            c.sigma1_x[(0, 0)] = 1.0;
            c.f_x[0] = f64::NAN;
            c
        })
        .unwrap();
        let err = m.evaluate(2.5, &DVector::zeros(1)).unwrap_err();
        assert!(matches!(err, CgnsError::NonFiniteCoefficient { t } if t == 2.5));
    }

    #[test]
    fn evaluate_rejects_wrong_shape_and_length() {
        let dims = Dims { k: 1, l: 2, d: 1, r: 0 };
        let m = FnModel::new("shape", dims, |t, _x| {
            let mut c = CoefficientSnapshot::zeros(Dims { k: 1, l: 1, d: 1, r: 0 }, t);
            c.sigma1_x[(0, 0)] = 1.0;
            c
        })
        .unwrap();
        assert!(matches!(m.evaluate(0.0, &DVector::zeros(1)), Err(CgnsError::Dimension(_))));
        assert!(matches!(m.evaluate(0.0, &DVector::zeros(3)), Err(CgnsError::Dimension(_))));
    }

    #[test]
    fn dims_validation() {
        assert!(Dims::new(1, 1, 0, 1).is_ok());
        assert!(Dims::new(0, 1, 1, 1).is_err());
        assert!(Dims::new(1, 0, 1, 1).is_err());
        assert!(Dims::new(1, 1, 0, 0).is_err());
    }

    #[test]
    fn identity_observation_gramian() {
        let dims = Dims { k: 2, l: 1, d: 2, r: 1 };
        let mut c = CoefficientSnapshot::zeros(dims, 0.0);
        c.sigma1_x = DMatrix::identity(2, 2);
        let gr = gramians(&c).unwrap();
        assert_eq!(gr.sxx, DMatrix::identity(2, 2));
        assert_eq!(gr.syx, gr.sxy.transpose());
    }

    #[test]
    fn singular_observation_gramian() {
        let mut c = scalar_snapshot(1.0, 0.0, 0.0);
        c.t = 4.0;
        assert!(matches!(
            gramians(&c),
            Err(CgnsError::SingularObservationGramian { t }) if t == 4.0
        ));
    }

    #[test]
    fn no_cross_noise_auxiliaries() {
        let c = scalar_snapshot(2.0, 1.0, 0.0);
        let gr = gramians(&c).unwrap();
        let aux = auxiliary(&c, &gr, Some(&DMatrix::from_element(1, 1, 0.5))).unwrap();
        assert_eq!(aux.a_mat, c.lambda_y);
        assert_eq!(aux.b_mat, gr.syy);
        // K = (0 + 0.5·2)/1
        assert_eq!(aux.kalman_gain.unwrap()[(0, 0)], 1.0);
        assert_eq!(aux.gamma[(0, 0)], 4.0);
    }

    #[test]
    fn unit_gamma() {
        let c = scalar_snapshot(1.0, 1.0, 0.0);
        let aux = auxiliary(&c, &gramians(&c).unwrap(), None).unwrap();
        assert_eq!(aux.gamma[(0, 0)], 1.0);
        assert!(aux.kalman_gain.is_none());
    }

    #[test]
    fn cross_noise_shrinks_b() {
        // Σ₁ʸ shares the observation source: B = 1 + 0.36 − 0.36 = 1.
        let c = scalar_snapshot(1.0, 1.0, 0.6);
        let gr = gramians(&c).unwrap();
        let aux = auxiliary(&c, &gr, None).unwrap();
        assert!((gr.syy[(0, 0)] - 1.36).abs() < 1e-15);
        assert!((aux.b_mat[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((aux.a_mat[(0, 0)] - (-1.0 - 0.6)).abs() < 1e-14);
        let (lo, _) = sym_eig_range(&(&gr.syy - &aux.b_mat));
        assert!(lo >= -crate::linalg::TOL_PSD);
    }
}
