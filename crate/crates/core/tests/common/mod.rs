//! Reference implementations shared by the integration tests and the
//! acceptance harness. Nothing here calls into the library's filter,
//! smoother or sampler code.

#![allow(dead_code)]

use cgns::model::{CoefficientSnapshot, Dims, FnModel, LinearModel};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Linear time-invariant model with one observed coordinate and no cross
/// noise: dx = (H y + h) dt + s dW₁, dy = (F y + f) dt + L dW₂.
#[derive(Debug, Clone)]
pub struct Lti {
    pub h_row: DMatrix<f64>,
    pub h0: f64,
    pub f: DMatrix<f64>,
    pub f0: DVector<f64>,
    pub s: f64,
    pub l_noise: DMatrix<f64>,
}

impl Lti {
    pub fn dim(&self) -> usize {
        self.f.nrows()
    }

    /// Random stable draw with hidden dimension `l` (1 or 2).
    pub fn random(rng: &mut ChaCha8Rng, l: usize) -> Lti {
        let f = if l == 1 {
            DMatrix::from_element(1, 1, -rng.random_range(0.3..2.0))
        } else {
            let (a, b): (f64, f64) = (rng.random_range(0.3..2.0), rng.random_range(0.3..2.0));
            let s = rng.random_range(-0.5..0.5) * (a * b).sqrt();
            let w = rng.random_range(-2.0..2.0);
            DMatrix::from_row_slice(2, 2, &[-a, s + w, s - w, -b])
        };
        let h_row = DMatrix::from_fn(1, l, |_, _| rng.random_range(-1.5..1.5));
        let mut l_noise = DMatrix::zeros(l, l);
        for i in 0..l {
            l_noise[(i, i)] = rng.random_range(0.3..1.5);
            for j in 0..i {
                l_noise[(i, j)] = rng.random_range(-0.5..0.5);
            }
        }
        Lti {
            h_row,
            h0: rng.random_range(-1.0..1.0),
            f,
            f0: DVector::from_fn(l, |_, _| rng.random_range(-1.0..1.0)),
            s: rng.random_range(0.3..1.5),
            l_noise,
        }
    }

    pub fn scalar(lx: f64, ly: f64, sx: f64, sy: f64) -> Lti {
        Lti {
            h_row: DMatrix::from_element(1, 1, lx),
            h0: 0.0,
            f: DMatrix::from_element(1, 1, ly),
            f0: DVector::zeros(1),
            s: sx,
            l_noise: DMatrix::from_element(1, 1, sy),
        }
    }

    pub fn model(&self) -> LinearModel {
        let l = self.dim();
        let dims = Dims { k: 1, l, d: 1, r: l };
        let mut c = CoefficientSnapshot::zeros(dims, 0.0);
        c.lambda_x = self.h_row.clone();
        c.f_x = DVector::from_element(1, self.h0);
        c.lambda_y = self.f.clone();
        c.f_y = self.f0.clone();
        c.sigma1_x = DMatrix::from_element(1, 1, self.s);
        c.sigma2_y = self.l_noise.clone();
        LinearModel::new(c).unwrap()
    }

    fn q(&self) -> DMatrix<f64> {
        &self.l_noise * self.l_noise.transpose()
    }
}

pub type Moments = Vec<(DVector<f64>, DMatrix<f64>)>;

fn sym(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Kalman–Bucy filter stepped with explicit Euler on the observed increments.
pub fn kalman_bucy(lti: &Lti, x: &[f64], dt: f64, m0: DVector<f64>, p0: DMatrix<f64>) -> Moments {
    let q = lti.q();
    let r = lti.s * lti.s;
    let mut out = vec![(m0.clone(), p0.clone())];
    let (mut m, mut p) = (m0, p0);
    for j in 0..x.len() - 1 {
        let dz = x[j + 1] - x[j];
        let pht = &p * lti.h_row.transpose();
        let innovation = dz - ((&lti.h_row * &m)[(0, 0)] + lti.h0) * dt;
        let m_new = &m + (&lti.f * &m + &lti.f0) * dt + &pht * (innovation / r);
        let p_new = &p + (&lti.f * &p + &p * lti.f.transpose() + &q - &pht * pht.transpose() / r) * dt;
        m = m_new;
        p = sym(p_new);
        out.push((m.clone(), p.clone()));
    }
    out
}

/// Continuous Rauch–Tung–Striebel smoother stepped backward with Euler.
pub fn rts(lti: &Lti, filt: &Moments, dt: f64) -> Moments {
    let q = lti.q();
    let n = filt.len();
    let mut out = filt.clone();
    for j in (0..n - 1).rev() {
        let (mf, pf) = &filt[j];
        let g = &q * pf.clone().try_inverse().unwrap();
        let (ms, ps) = out[j + 1].clone();
        let m = &ms - (&lti.f * &ms + &lti.f0 + &g * (&ms - mf)) * dt;
        let fg = &lti.f + &g;
        let p = &ps - (&fg * &ps + &ps * fg.transpose() - &q) * dt;
        out[j] = (m, sym(p));
    }
    out
}

/// Exact discrete-time Kalman filter of the Euler-discretized linear system,
/// treating each increment x_{j+1} − x_j as the observation of y_j.
pub fn discrete_kalman(lti: &Lti, x: &[f64], dt: f64, m0: DVector<f64>, p0: DMatrix<f64>) -> Moments {
    let l = lti.dim();
    let a = DMatrix::identity(l, l) + &lti.f * dt;
    let q = lti.q() * dt;
    let r = lti.s * lti.s * dt;
    let mut out = vec![(m0.clone(), p0.clone())];
    let (mut m, mut p) = (m0, p0);
    for j in 0..x.len() - 1 {
        let dz = x[j + 1] - x[j];
        let c = &a * &p * lti.h_row.transpose() * dt;
        let v = (&lti.h_row * &p * lti.h_row.transpose())[(0, 0)] * dt * dt + r;
        let innovation = dz - ((&lti.h_row * &m)[(0, 0)] + lti.h0) * dt;
        m = &a * &m + &lti.f0 * dt + &c * (innovation / v);
        p = sym(&a * &p * a.transpose() + &q - &c * c.transpose() / v);
        out.push((m.clone(), p.clone()));
    }
    out
}

pub fn max_abs(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

pub fn max_moment_diff(series: &[cgns::GaussianState], oracle: &Moments) -> (f64, f64) {
    let mut dm: f64 = 0.0;
    let mut dp: f64 = 0.0;
    for (s, (m, p)) in series.iter().zip(oracle) {
        dm = dm.max((&s.mean - m).amax());
        dp = dp.max((&s.cov - p).amax());
    }
    (dm, dp)
}

/// Geometric Brownian motion dx = a x dt + b x dW₁ written as a CGNS whose
/// hidden part is an unrelated OU process.
pub fn gbm_model(a: f64, b: f64) -> impl cgns::CgnsModel {
    let dims = Dims { k: 1, l: 1, d: 1, r: 1 };
    FnModel::new("gbm", dims, move |t, x| {
        let mut c = CoefficientSnapshot::zeros(dims, t);
        c.f_x[0] = a * x[0];
        c.sigma1_x[(0, 0)] = b * x[0];
        c.lambda_y[(0, 0)] = -1.0;
        c.sigma2_y[(0, 0)] = 1.0;
        c
    })
    .unwrap()
}

/// Mean absolute endpoint error of Euler–Maruyama at each step in `dts`
/// against the exact GBM solution driven by the same Brownian path. `dts`
/// must be integer multiples of `fine`.
pub fn gbm_strong_errors(a: f64, b: f64, t_end: f64, fine: f64, dts: &[f64], paths: usize, seed: u64) -> Vec<f64> {
    let model = gbm_model(a, b);
    let n_fine = (t_end / fine).round() as usize;
    let mut errs = vec![0.0; dts.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zero = DVector::zeros(1);
    for _ in 0..paths {
        let dw: Vec<f64> = (0..n_fine).map(|_| rng.sample::<f64, _>(StandardNormal) * fine.sqrt()).collect();
        let w_t: f64 = dw.iter().sum();
        let exact = (( a - 0.5 * b * b) * t_end + b * w_t).exp();
        for (e, &dt) in errs.iter_mut().zip(dts) {
            let stride = (dt / fine).round() as usize;
            let mut x = DVector::from_element(1, 1.0);
            let mut y = DVector::zeros(1);
            for (i, chunk) in dw.chunks(stride).enumerate() {
                let inc: f64 = chunk.iter().sum();
                let eps1 = DVector::from_element(1, inc / dt.sqrt());
                let (xn, yn) = cgns::simulate::em_step(&model, i as f64 * dt, &x, &y, dt, &eps1, &zero).unwrap();
                x = xn;
                y = yn;
            }
            *e += (x[0] - exact).abs() / paths as f64;
        }
    }
    errs
}
