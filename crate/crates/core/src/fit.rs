//! Log-log power-law fits over time windows.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerLawFit {
    pub slope: f64,
    /// Natural-log intercept: `ln y ≈ intercept + slope·ln t`.
    pub intercept: f64,
    pub points: usize,
    pub t_start: f64,
    pub t_end: f64,
}

impl PowerLawFit {
    pub fn predict(&self, t: f64) -> f64 {
        (self.intercept + self.slope * t.ln()).exp()
    }
}

/// Least-squares fit of `ln y` against `ln t` over `t ∈ [t_start, t_end]`,
/// using points evenly spaced in `ln t` so that late, dense samples do not
/// dominate the fit.
pub fn loglog_slope(times: &[f64], values: &[f64], t_start: f64, t_end: f64) -> Result<PowerLawFit> {
    if times.len() != values.len() {
        return Err(Error::Dimension(format!("{} times vs {} values", times.len(), values.len())));
    }
    if !(t_start > 0.0 && t_end > t_start) {
        return Err(Error::EmptyWindow(format!("[{t_start}, {t_end}]")));
    }
    const BINS: usize = 200;
    let (l0, l1) = (t_start.ln(), t_end.ln());
    let mut picked = Vec::with_capacity(BINS + 1);
    let mut next = 0usize;
    for (i, &t) in times.iter().enumerate() {
        if t < t_start * (1.0 - 1e-12) || t > t_end * (1.0 + 1e-12) || !(values[i] > 0.0) {
            continue;
        }
        let target = l0 + (l1 - l0) * next as f64 / BINS as f64;
        if t.ln() >= target - 1e-12 {
            picked.push((t.ln(), values[i].ln()));
            while next <= BINS && l0 + (l1 - l0) * next as f64 / BINS as f64 <= t.ln() + 1e-12 {
                next += 1;
            }
        }
    }
    if picked.len() < 2 {
        return Err(Error::EmptyWindow(format!("fewer than two positive samples in [{t_start}, {t_end}]")));
    }
    let n = picked.len() as f64;
    let mx = picked.iter().map(|p| p.0).sum::<f64>() / n;
    let my = picked.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = picked.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = picked.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Ok(PowerLawFit { slope, intercept: my - slope * mx, points: picked.len(), t_start, t_end })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_power_law() {
        let t: Vec<f64> = (1..=10_000).map(|k| k as f64 * 1e-5).collect();
        let y: Vec<f64> = t.iter().map(|t| 3.0 * t.powf(-2.5)).collect();
        let f = loglog_slope(&t, &y, 1e-3, 1e-1).unwrap();
        assert!((f.slope + 2.5).abs() < 1e-10);
        assert!((f.predict(0.01) - 3.0 * 0.01f64.powf(-2.5)).abs() / f.predict(0.01) < 1e-9);
        assert!(f.points > 100);
    }

    #[test]
    fn empty_window() {
        assert!(loglog_slope(&[1.0, 2.0], &[1.0, 1.0], 3.0, 4.0).is_err());
    }
}
