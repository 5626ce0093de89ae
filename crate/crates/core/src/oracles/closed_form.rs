//! Closed-form and asymptotic variance laws.

use crate::error::{Error, Result};

/// Below this `|ω|·t` the trigonometric ratios switch to their series.
const SERIES_SWITCH: f64 = 1e-4;

struct Trig {
    /// sin(ωt)/ω
    s_over_w: f64,
    /// sin(2ωt)/(2ω)
    s2_over_2w: f64,
    sin2: f64,
    cos: f64,
}

fn trig(omega: f64, t: f64) -> Trig {
    let x = omega * t;
    if x.abs() < SERIES_SWITCH {
        let x2 = x * x;
        Trig {
            s_over_w: t * (1.0 - x2 / 6.0 + x2 * x2 / 120.0),
            s2_over_2w: t * (1.0 - 4.0 * x2 / 6.0 + 16.0 * x2 * x2 / 120.0),
            sin2: x2 * (1.0 - x2 / 3.0),
            cos: 1.0 - x2 / 2.0 + x2 * x2 / 24.0,
        }
    } else {
        Trig {
            s_over_w: x.sin() / omega,
            s2_over_2w: (2.0 * x).sin() / (2.0 * omega),
            sin2: x.sin().powi(2),
            cos: x.cos(),
        }
    }
}

/// EPR variances `(Var x₋, Var p₊)` at time `t` for `ω₁ = ω = −ω₂`,
/// `κ₁₁ = κ₂₁ = κ₁`, `κ₁₂ = −κ₂₂ = κ₂`, starting uncorrelated.
///
/// With `K±² = κ₂² ± κ₁²` the coupling of the denominator's oscillating
/// term is `2K₋²`; that is the value that solves the Riccati equation.
pub fn epr_variance_closed_form(
    var_xm0: f64,
    var_pp0: f64,
    kappa1: f64,
    kappa2: f64,
    omega: f64,
    t: f64,
) -> (f64, f64) {
    let kp = kappa2 * kappa2 + kappa1 * kappa1;
    let km = kappa2 * kappa2 - kappa1 * kappa1;
    let (vx, vp) = (var_xm0, var_pp0);
    let tr = trig(omega, t);
    let k2 = 2.0 * km;
    let den = (1.0 + 2.0 * vx * kp * t) * (1.0 + 2.0 * vp * kp * t)
        + tr.s_over_w * k2 * (tr.cos * (vx - vp) - tr.s_over_w * k2 * vx * vp);
    let nx = vx + (vp - vx) * tr.sin2 + 2.0 * vx * vp * (kp * t - tr.s2_over_2w * km);
    let np = vp + (vx - vp) * tr.sin2 + 2.0 * vx * vp * (kp * t + tr.s2_over_2w * km);
    (nx / den, np / den)
}

/// Constant-perturbation variance when the perturbed quadrature is read out
/// through the collective variable of a zero-frequency pair (`Var = 1/2`
/// start, coupling `κ₁` per oscillator).
///
/// A single directly probed oscillator shares the `6/(c²κ₁²t³)` tail but not
/// the approach to it.
pub fn const_field_variance_closed_form(var_f0: f64, kappa1: f64, c: f64, t: f64) -> f64 {
    let k2 = kappa1 * kappa1;
    let a = 1.0 + 2.0 * k2 * t;
    a * var_f0 / (a + (2.0 / 3.0) * k2 * c * c * var_f0 * t.powi(3) + (1.0 / 3.0) * k2 * k2 * c * c * var_f0 * t.powi(4))
}

/// Late-time limit `6/(c²κ²t³)` of [`const_field_variance_closed_form`].
pub fn const_field_asymptote(kappa: f64, c: f64, t: f64) -> f64 {
    6.0 / (c * c * kappa * kappa * t.powi(3))
}

/// `ω²/(2c²κ²t)`, the late-time variance at finite oscillator frequency.
pub fn asymptotic_variance_finite_omega(omega: f64, c: f64, kappa: f64, t: f64) -> Result<f64> {
    if omega == 0.0 {
        return Err(Error::InvalidArgument("the finite-frequency law needs omega != 0".into()));
    }
    Ok(omega * omega / (2.0 * c * c * kappa * kappa * t))
}

/// Time where the `1/t³` and `1/t` asymptotes meet: `√12/|ω|`.
///
/// A fit-window heuristic only.
pub fn crossover_time(omega: f64) -> Result<f64> {
    if omega == 0.0 {
        return Err(Error::InvalidArgument("no crossover at omega = 0".into()));
    }
    Ok(12f64.sqrt() / omega.abs())
}
