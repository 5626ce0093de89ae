//! Brute-force Bayes rule over a grid of candidate constant perturbations.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::dynamics::{build_forward_matrices, build_known_field_drive, F_P, F_X};
use crate::error::{Error, Result};
use crate::gaussian::PseudoInverse;
use crate::pipeline::{DetectionRecord, SegmentStepper};

/// Posterior mass at the two end points above which the grid is rejected.
pub const MAX_EDGE_MASS: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BayesPosterior {
    pub grid: Vec<f64>,
    /// Normalized posterior weights.
    pub weights: Vec<f64>,
    pub mean: f64,
    pub var: f64,
}

fn log_normal(q: &DVector<f64>, mu: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let chol = cov.clone().cholesky().ok_or_else(|| Error::Singular("outcome covariance".into()))?;
    let d = q - mu;
    let sol = chol.solve(&d);
    let logdet: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
    Ok(-0.5 * (d.dot(&sol) + logdet + q.len() as f64 * (2.0 * std::f64::consts::PI).ln()))
}

/// Log-likelihood of the whole record given a known, constant `f`.
fn log_likelihood(cfg: &ScenarioConfig, record: &DetectionRecord, stepper: &SegmentStepper, field: &str, f: f64) -> Result<f64> {
    let (fx, fp) = if field == F_X { (f, 0.0) } else { (0.0, f) };
    let drive = build_known_field_drive(cfg, fx, fp);
    let n = stepper.system.len();
    let mut mean = DVector::zeros(n);
    let mut cov = match &cfg.initial_cov {
        Some(v) => DMatrix::from_row_slice(n, n, v),
        None => DMatrix::identity(n, n),
    };
    let meas = stepper.measured().to_vec();
    let mut ll = 0.0;
    for k in 0..record.steps() {
        let (jm, jc) = stepper.interact(&mean, &cov, Some(&drive));
        let mu = DVector::from_iterator(meas.len(), meas.iter().map(|&i| jm[i]));
        let b = DMatrix::from_fn(meas.len(), meas.len(), |i, j| 0.5 * jc[(meas[i], meas[j])]);
        let q = DVector::from_column_slice(record.row(k));
        ll += log_normal(&q, &mu, &b)?;
        let (m, c) = stepper.measure(&jm, &jc, record.row(k))?;
        mean = m;
        cov = c;
    }
    Ok(ll)
}

/// Posterior over `grid` for the single unknown constant field `field`.
///
/// Each candidate runs its own known-field filter; likelihoods use the exact
/// predicted outcome covariance.
pub fn bayes_grid_oracle(cfg: &ScenarioConfig, record: &DetectionRecord, field: &str, grid: &[f64]) -> Result<BayesPosterior> {
    record.check_against(cfg)?;
    let (active, other, gamma, sigma, prior) = match field {
        F_X => (cfg.active_fx, cfg.active_fp, cfg.gamma_x, cfg.sigma_x, cfg.prior_var_fx),
        F_P => (cfg.active_fp, cfg.active_fx, cfg.gamma_p, cfg.sigma_p, cfg.prior_var_fp),
        _ => return Err(Error::UnknownLabel(field.to_owned())),
    };
    if !active || other {
        return Err(Error::InvalidArgument(format!("the grid oracle needs {field} as the only active field")));
    }
    if gamma != 0.0 || sigma != 0.0 {
        return Err(Error::InvalidArgument("the grid oracle needs a constant field (gamma = sigma = 0)".into()));
    }
    if grid.len() < 3 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("grid must be increasing with at least 3 points".into()));
    }
    let reach = 4.0 * prior.sqrt();
    if grid[0] > -reach || grid[grid.len() - 1] < reach {
        return Err(Error::InvalidArgument(format!("grid must cover ±{reach} (4 prior standard deviations)")));
    }

    let quantum = build_forward_matrices(cfg).without_classical()?;
    let mode = if cfg.lowest_order_pinv { PseudoInverse::LowestOrder } else { PseudoInverse::Exact };
    let stepper = SegmentStepper::new(&quantum, mode);
    let logs: Vec<f64> = grid
        .par_iter()
        .map(|&f| Ok(log_likelihood(cfg, record, &stepper, field, f)? - 0.5 * f * f / prior))
        .collect::<Result<_>>()?;

    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let z: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / z).collect();
    let edge = weights[0] + weights[weights.len() - 1];
    if edge > MAX_EDGE_MASS {
        return Err(Error::GridTooNarrow(edge));
    }
    let mean: f64 = grid.iter().zip(&weights).map(|(f, w)| f * w).sum();
    let var: f64 = grid.iter().zip(&weights).map(|(f, w)| (f - mean).powi(2) * w).sum();
    Ok(BayesPosterior { grid: grid.to_vec(), weights, mean, var })
}
