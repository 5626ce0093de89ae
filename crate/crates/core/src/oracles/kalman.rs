//! Textbook one-step-predictor Kalman filter with correlated noises.
//!
//! Works in plain variances and never touches the joint-state conditioning
//! code, so agreement with the pipeline is a genuine cross-check.

use nalgebra::{DMatrix, DVector};

use crate::config::ScenarioConfig;
use crate::dynamics::build_forward_matrices;
use crate::error::{Error, Result};
use crate::pipeline::{prior_state, DetectionRecord, EstimateTrace, TraceColumn, TraceKind, P_PLUS, X_MINUS};

fn block(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// State `z` = augmented system. One step of the transition reads
/// `z' = F z + w` and the outcome `y = H z + v`, where `w` and `v` are driven by
/// the same fresh vacuum segment (variance 1/2 per quadrature).
pub fn kalman_oracle(cfg: &ScenarioConfig, record: &DetectionRecord) -> Result<EstimateTrace> {
    record.check_against(cfg)?;
    let m = build_forward_matrices(cfg);
    let full = m.transition();
    let n = m.system_len();
    let sys: Vec<usize> = (0..n).collect();
    let probe = m.probe_indices();
    let meas = m.measured_indices();

    let f = block(&full, &sys, &sys);
    let h = block(&full, &meas, &sys);
    let g_w = block(&full, &sys, &probe);
    let g_v = block(&full, &meas, &probe);
    let q = &g_w * g_w.transpose() * 0.5 + block(&m.l, &sys, &sys) * 0.5;
    let r = &g_v * g_v.transpose() * 0.5;
    let c_wv = &g_w * g_v.transpose() * 0.5;

    let prior = prior_state(cfg)?;
    let labels: Vec<String> = prior.layout().labels().map(str::to_owned).collect();
    let mut z = DVector::<f64>::zeros(n);
    let mut p = prior.cov() * 0.5;

    let idx = |l: &str| labels.iter().position(|x| x == l);
    let epr = match (idx("x_A1"), idx("p_A1"), idx("x_A2"), idx("p_A2")) {
        (Some(a), Some(b), Some(c), Some(d)) => Some([a, b, c, d]),
        _ => None,
    };
    let mut names = labels.clone();
    if epr.is_some() {
        names.push(X_MINUS.into());
        names.push(P_PLUS.into());
    }
    let steps = cfg.steps();
    let mut cols: Vec<TraceColumn> = names
        .iter()
        .map(|l| TraceColumn { label: l.clone(), mean: Vec::with_capacity(steps + 1), var: Vec::with_capacity(steps + 1) })
        .collect();
    let mut times = Vec::with_capacity(steps + 1);
    let mut emit = |t: f64, z: &DVector<f64>, p: &DMatrix<f64>| {
        times.push(t);
        for i in 0..n {
            cols[i].mean.push(z[i]);
            cols[i].var.push(p[(i, i)]);
        }
        if let Some([x1, p1, x2, p2]) = epr {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            cols[n].mean.push(s * (z[x1] - z[x2]));
            cols[n].var.push(0.5 * (p[(x1, x1)] + p[(x2, x2)] - 2.0 * p[(x1, x2)]));
            cols[n + 1].mean.push(s * (z[p1] + z[p2]));
            cols[n + 1].var.push(0.5 * (p[(p1, p1)] + p[(p2, p2)] + 2.0 * p[(p1, p2)]));
        }
    };
    emit(0.0, &z, &p);

    for k in 0..steps {
        let y = DVector::from_column_slice(record.row(k));
        let innovation = &y - &h * &z;
        let s = &h * &p * h.transpose() + &r;
        let s_inv = s.try_inverse().ok_or_else(|| Error::Singular("innovation covariance".into()))?;
        let gain = (&f * &p * h.transpose() + &c_wv) * &s_inv;
        z = &f * &z + &gain * innovation;
        p = &f * &p * f.transpose() + &q - &gain * (&h * &p * f.transpose() + c_wv.transpose());
        p = (&p + p.transpose()) * 0.5;
        emit((k + 1) as f64 * cfg.dt, &z, &p);
    }
    Ok(EstimateTrace { kind: TraceKind::Filtered, times, columns: cols, truth: Default::default() })
}
