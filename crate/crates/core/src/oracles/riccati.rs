//! Continuous-time covariance evolution `Ȧ = G − D·A − A·E − A·F·A`.

use nalgebra::DMatrix;

use crate::config::ScenarioConfig;
use crate::dynamics::{riccati_matrices, RiccatiMatrices};
use crate::error::{Error, Result};
use crate::gaussian::symmetrize;

/// Refactor `W·U⁻¹` once `U` becomes this ill-conditioned.
pub const REFACTOR_CONDITION: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RiccatiMethod {
    /// Fixed-step RK4 on the nonlinear equation.
    NonlinearRk,
    /// Fixed-step RK4 on the linear pair `Ẇ = −DW + GU`, `U̇ = FW + EU`.
    LinearWu,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSystem {
    pub g: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub a0: DMatrix<f64>,
}

impl RiccatiSystem {
    pub fn new(m: &RiccatiMatrices, a0: DMatrix<f64>) -> Result<Self> {
        let n = m.g.nrows();
        if a0.nrows() != n || a0.ncols() != n {
            return Err(Error::Dimension(format!("A0 is {}x{}, system is {n}", a0.nrows(), a0.ncols())));
        }
        Ok(Self { g: m.g.clone(), d: m.d.clone(), e: m.e.clone(), f: m.f.clone(), a0 })
    }

    /// Matrices of `cfg` started from the filter's prior covariance.
    pub fn from_config(cfg: &ScenarioConfig) -> Result<Self> {
        let prior = crate::pipeline::prior_state(cfg)?;
        Self::new(&riccati_matrices(cfg), prior.cov().clone())
    }
}

pub fn riccati_rhs(a: &DMatrix<f64>, sys: &RiccatiSystem) -> DMatrix<f64> {
    &sys.g - &sys.d * a - a * &sys.e - a * &sys.f * a
}

fn rk4_nonlinear(a: &DMatrix<f64>, sys: &RiccatiSystem, h: f64) -> DMatrix<f64> {
    let k1 = riccati_rhs(a, sys);
    let k2 = riccati_rhs(&(a + &k1 * (0.5 * h)), sys);
    let k3 = riccati_rhs(&(a + &k2 * (0.5 * h)), sys);
    let k4 = riccati_rhs(&(a + &k3 * h), sys);
    let mut next = a + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    symmetrize(&mut next);
    next
}

fn wu_rhs(w: &DMatrix<f64>, u: &DMatrix<f64>, sys: &RiccatiSystem) -> (DMatrix<f64>, DMatrix<f64>) {
    (-&sys.d * w + &sys.g * u, &sys.f * w + &sys.e * u)
}

fn rk4_linear(w: &DMatrix<f64>, u: &DMatrix<f64>, sys: &RiccatiSystem, h: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let (w1, u1) = wu_rhs(w, u, sys);
    let (w2, u2) = wu_rhs(&(w + &w1 * (0.5 * h)), &(u + &u1 * (0.5 * h)), sys);
    let (w3, u3) = wu_rhs(&(w + &w2 * (0.5 * h)), &(u + &u2 * (0.5 * h)), sys);
    let (w4, u4) = wu_rhs(&(w + &w3 * h), &(u + &u3 * h), sys);
    (
        w + (w1 + w2 * 2.0 + w3 * 2.0 + w4) * (h / 6.0),
        u + (u1 + u2 * 2.0 + u3 * 2.0 + u4) * (h / 6.0),
    )
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let (lo, hi) = (sv.min(), sv.max());
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

fn w_over_u(w: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    // A = W·U⁻¹  ⇔  Uᵀ·Aᵀ = Wᵀ
    let lu = u.transpose().lu();
    let at = lu.solve(&w.transpose()).ok_or_else(|| Error::Singular("U is singular beyond recovery".into()))?;
    let mut a = at.transpose();
    symmetrize(&mut a);
    Ok(a)
}

/// `A(t)` at each of the (non-decreasing) `times`, stepping with `h`.
pub fn integrate_riccati_series(
    sys: &RiccatiSystem,
    times: &[f64],
    method: RiccatiMethod,
    h: f64,
) -> Result<Vec<DMatrix<f64>>> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
    }
    if times.iter().any(|&t| t < 0.0) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("times must be non-negative and sorted".into()));
    }
    let n = sys.a0.nrows();
    let mut out = Vec::with_capacity(times.len());
    let mut t = 0.0;
    let mut a = sys.a0.clone();
    let mut w = sys.a0.clone();
    let mut u = DMatrix::identity(n, n);
    for &target in times {
        while t < target {
            // Land exactly on the sample time.
            let step = if target - t < h * (1.0 + 1e-9) { target - t } else { h };
            match method {
                RiccatiMethod::NonlinearRk => a = rk4_nonlinear(&a, sys, step),
                RiccatiMethod::LinearWu => {
                    let (nw, nu) = rk4_linear(&w, &u, sys, step);
                    w = nw;
                    u = nu;
                    if condition_number(&u) > REFACTOR_CONDITION {
                        w = w_over_u(&w, &u)?;
                        u = DMatrix::identity(n, n);
                    }
                }
            }
            t = if step == h { t + h } else { target };
        }
        out.push(match method {
            RiccatiMethod::NonlinearRk => a.clone(),
            RiccatiMethod::LinearWu => w_over_u(&w, &u)?,
        });
    }
    Ok(out)
}

pub fn integrate_riccati(sys: &RiccatiSystem, t: f64, method: RiccatiMethod, h: f64) -> Result<DMatrix<f64>> {
    Ok(integrate_riccati_series(sys, &[t], method, h)?.remove(0))
}
