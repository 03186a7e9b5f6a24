//! Physics-constrained triad model with correlated additive and
//! multiplicative noise. `u₁` is observed, `(u₂, u₃)` are hidden:
//!
//! ```text
//! du₁ = ((I₁₂u₁+L₁₂)u₂ + (I₁₃u₁+L₁₃)u₃ + γ₁u₁ − c·u₁³ + F₁) dt
//!       + σ₁ dW₁ + (σ₂/γ₂)(L₁₂−I₁₂u₁) dW₂ + (σ₃/γ₃)(L₁₃−I₁₃u₁) dW₃
//! du₂ = (−L₁₂u₁ − I₁₂u₁² − (γ₂/ε)u₂ + L₂₃u₃ + F₂) dt + (σ₂/√ε) dW₂
//! du₃ = (−L₁₃u₁ − I₁₃u₁² − L₂₃u₂ − (γ₃/ε)u₃ + F₃) dt + (σ₃/√ε) dW₃
//! ```
//!
//! with `c = I₁₂²/γ₂ + I₁₃²/γ₃`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CgnsError, Result};
use crate::model::{CgnsModel, CoefficientSnapshot, Dims};

pub const DIMS: Dims = Dims { k: 1, l: 2, d: 1, r: 2 };

/// Default horizon and step of the case study.
pub const DEFAULT_T: f64 = 60.0;
pub const DEFAULT_DT: f64 = 1e-3;

#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TriadParams {
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub I12: f64,
    pub I13: f64,
    pub L12: f64,
    pub L13: f64,
    pub L23: f64,
    pub F1: f64,
    pub F2: f64,
    pub F3: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub sigma3: f64,
    pub epsilon: f64,
}

impl Default for TriadParams {
    fn default() -> Self {
        default_params()
    }
}

pub fn default_params() -> TriadParams {
    TriadParams {
        gamma1: 1.0,
        gamma2: 1.2,
        gamma3: 0.5,
        I12: 0.5,
        I13: 0.5,
        L12: 0.5,
        L13: 0.5,
        L23: 2.0,
        F1: 3.0,
        F2: 0.0,
        F3: 0.0,
        sigma1: 0.5,
        sigma2: 1.2,
        sigma3: 0.8,
        epsilon: 1.0,
    }
}

impl TriadParams {
    /// Cubic damping coefficient `I₁₂²/γ₂ + I₁₃²/γ₃`.
    pub fn cubic(&self) -> f64 {
        self.I12 * self.I12 / self.gamma2 + self.I13 * self.I13 / self.gamma3
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let positive = [
            ("gamma2", self.gamma2),
            ("gamma3", self.gamma3),
            ("sigma1", self.sigma1),
            ("sigma2", self.sigma2),
            ("sigma3", self.sigma3),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                problems.push(format!("triad.{name} must be positive, got {v}"));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            problems.push(format!("triad.epsilon must lie in (0, 1], got {}", self.epsilon));
        }
        let others = [
            ("gamma1", self.gamma1),
            ("I12", self.I12),
            ("I13", self.I13),
            ("L12", self.L12),
            ("L13", self.L13),
            ("L23", self.L23),
            ("F1", self.F1),
            ("F2", self.F2),
            ("F3", self.F3),
        ];
        for (name, v) in others {
            if !v.is_finite() {
                problems.push(format!("triad.{name} must be finite"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CgnsError::InvalidParams(problems))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriadModel {
    pub params: TriadParams,
}

pub fn triad_model(params: TriadParams) -> Result<TriadModel> {
    params.validate()?;
    Ok(TriadModel { params })
}

impl CgnsModel for TriadModel {
    fn name(&self) -> &str {
        "triad"
    }

    fn dims(&self) -> Dims {
        DIMS
    }

    fn coefficients(&self, t: f64, x: &DVector<f64>) -> CoefficientSnapshot {
        let p = &self.params;
        let u = x[0];
        let c = p.cubic();
        let se = p.epsilon.sqrt();
        CoefficientSnapshot {
            t,
            lambda_x: DMatrix::from_row_slice(1, 2, &[p.I12 * u + p.L12, p.I13 * u + p.L13]),
            lambda_y: DMatrix::from_row_slice(
                2,
                2,
                &[-p.gamma2 / p.epsilon, p.L23, -p.L23, -p.gamma3 / p.epsilon],
            ),
            f_x: DVector::from_element(1, p.gamma1 * u - c * u * u * u + p.F1),
            f_y: DVector::from_vec(vec![
                -p.L12 * u - p.I12 * u * u + p.F2,
                -p.L13 * u - p.I13 * u * u + p.F3,
            ]),
            sigma1_x: DMatrix::from_element(1, 1, p.sigma1),
            sigma2_x: DMatrix::from_row_slice(
                1,
                2,
                &[
                    p.sigma2 / p.gamma2 * (p.L12 - p.I12 * u),
                    p.sigma3 / p.gamma3 * (p.L13 - p.I13 * u),
                ],
            ),
            sigma1_y: DMatrix::zeros(2, 1),
            sigma2_y: DMatrix::from_row_slice(2, 2, &[p.sigma2 / se, 0.0, 0.0, p.sigma3 / se]),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{auxiliary, gramians};
    use crate::simulate::{em_step, simulate_path, TimeGrid};

    fn at(u: f64) -> CoefficientSnapshot {
        triad_model(default_params()).unwrap().evaluate(0.0, &DVector::from_element(1, u)).unwrap()
    }

    #[test]
    fn defaults() {
        let p = default_params();
        assert_eq!(p.sigma2, 1.2);
        assert_eq!(p.L23, 2.0);
        assert_eq!(p.epsilon, 1.0);
        assert!((p.cubic() - (0.25 / 1.2 + 0.25 / 0.5)).abs() < 1e-15);
        assert!((p.cubic() - 0.708_333_333_333_333).abs() < 1e-12);
        assert_eq!((DEFAULT_T, DEFAULT_DT), (60.0, 1e-3));
    }

    #[test]
    fn coefficient_examples() {
        let c = at(1.0);
        assert_eq!(c.lambda_x.as_slice(), &[1.0, 1.0]);
        let c0 = at(0.0);
        assert!((c0.sigma2_x[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((c0.sigma2_x[(0, 1)] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn cross_gramian_examples() {
        let g0 = gramians(&at(0.0)).unwrap();
        assert!((g0.syx[(0, 0)] - 0.6).abs() < 1e-15);
        assert!((g0.syx[(1, 0)] - 0.64).abs() < 1e-15);
        let g1 = gramians(&at(1.0)).unwrap();
        assert_eq!(g1.syx.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn evaluates_over_range() {
        let m = triad_model(default_params()).unwrap();
        for i in 0..=150 {
            let u = -5.0 + 0.1 * i as f64;
            let c = m.evaluate(0.0, &DVector::from_element(1, u)).unwrap();
            let g = gramians(&c).unwrap();
            auxiliary(&c, &g, Some(&DMatrix::identity(2, 2))).unwrap();
        }
    }

    #[test]
    fn no_interaction_means_linear_drift() {
        let p = TriadParams { I12: 0.0, I13: 0.0, ..default_params() };
        assert_eq!(p.cubic(), 0.0);
        let m = triad_model(p).unwrap();
        let f = |u: f64| m.evaluate(0.0, &DVector::from_element(1, u)).unwrap().f_x[0];
        assert!((f(2.0) - 2.0 * f(1.0) + f(0.0)).abs() < 1e-14);
    }

    #[test]
    fn invalid_params_are_listed() {
        let p = TriadParams { gamma2: 0.0, sigma3: -1.0, epsilon: 2.0, ..default_params() };
        match triad_model(p) {
            Err(CgnsError::InvalidParams(v)) => {
                assert_eq!(v.len(), 3);
                assert!(v.iter().any(|s| s.contains("gamma2")));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn drift_step_from_origin() {
        let m = triad_model(default_params()).unwrap();
        let z1 = DVector::zeros(1);
        let z2 = DVector::zeros(2);
        let dt = 1e-3;
        let (x, y) = em_step(&m, 0.0, &z1, &z2, dt, &z1, &z2).unwrap();
        assert_eq!(x[0], 3.0 * dt);
        assert_eq!(y.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn long_run_is_skewed_and_intermittent() {
        let m = triad_model(default_params()).unwrap();
        let g = TimeGrid::new(0.0, 500.0, 1e-3).unwrap();
        let tr = simulate_path(&m, &DVector::zeros(1), &DVector::zeros(2), &g, 7).unwrap();
        let u1: Vec<f64> = tr.x_path.column(0).iter().skip(10_000).copied().collect();
        let sk = crate::diagnostics::skewness(&u1);
        let ku = crate::diagnostics::excess_kurtosis(&u1);
        assert!(sk > 0.3, "skewness {sk}");
        assert!(ku > 0.0, "excess kurtosis {ku}");
    }
}
