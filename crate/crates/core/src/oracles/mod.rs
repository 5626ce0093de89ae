//! Independent verification paths for the estimation pipeline.

pub mod bayes;
pub mod closed_form;
pub mod kalman;
pub mod riccati;

pub use bayes::{bayes_grid_oracle, BayesPosterior};
pub use closed_form::{
    asymptotic_variance_finite_omega, const_field_asymptote, const_field_variance_closed_form, crossover_time,
    epr_variance_closed_form,
};
pub use kalman::kalman_oracle;
pub use riccati::{integrate_riccati, integrate_riccati_series, riccati_rhs, RiccatiMethod, RiccatiSystem};

/// `max_i |a_i − b_i| / |b_i|`; suited to strictly positive series such as variances.
pub fn max_relative_deviation(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "series lengths differ");
    a.iter().zip(b).map(|(x, y)| if x == y { 0.0 } else { (x - y).abs() / y.abs() }).fold(0.0, f64::max)
}

/// `max_i |a_i − b_i| / max(|b_i|, rms(b))`.
///
/// Mean traces cross zero, where a pointwise relative error is meaningless;
/// the series RMS sets the floor of the normalization instead.
pub fn max_scaled_deviation(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "series lengths differ");
    if b.is_empty() {
        return 0.0;
    }
    let rms = (b.iter().map(|v| v * v).sum::<f64>() / b.len() as f64).sqrt();
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = (x - y).abs();
            if d == 0.0 {
                0.0
            } else {
                d / y.abs().max(rms)
            }
        })
        .fold(0.0, f64::max)
}
