//! Scenario parameters, their validation and the flat key-value document format.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const REFERENCE_OMEGA: f64 = 2.0 * std::f64::consts::PI * 100.0;
pub const REFERENCE_KAPPA: f64 = 135.0;
pub const REFERENCE_C: f64 = 1.5e4;

/// Quadrature read out by a homodyne channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasuredQuadrature {
    Position,
    Momentum,
}

/// Which optional degrees of freedom take part in the scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActiveModes {
    pub s2: bool,
    pub l1: bool,
    pub l2: bool,
    pub f_x: bool,
    pub f_p: bool,
}

/// Every physical and numerical knob of one experiment.
///
/// Parameters are plain numbers in the unit system of the reference
/// parameter table (rates in Hz, `dt` in seconds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub omega1: f64,
    pub omega2: f64,
    pub kappa11: f64,
    pub kappa21: f64,
    pub kappa12: f64,
    pub kappa22: f64,
    pub c_x: f64,
    pub c_p: f64,
    pub gamma_x: f64,
    pub gamma_p: f64,
    pub sigma_x: f64,
    pub sigma_p: f64,
    pub dt: f64,
    #[serde(alias = "T")]
    pub duration: f64,
    pub prior_var_fx: f64,
    pub prior_var_fp: f64,
    pub measured_l1: MeasuredQuadrature,
    pub measured_l2: MeasuredQuadrature,
    pub active_s2: bool,
    pub active_l1: bool,
    pub active_l2: bool,
    pub active_fx: bool,
    pub active_fp: bool,
    /// Row-major quantum-sector covariance (Γ convention) replacing the ground state.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_cov: Option<Vec<f64>>,
    pub seed: u64,
    pub v_effect_init: f64,
    /// True initial perturbation values used for synthesis.
    pub f0_x: f64,
    pub f0_p: f64,
    /// Sample outcomes with the exact post-interaction variance instead of 1/2.
    pub exact_outcome_variance: bool,
    /// Replace the measured-block inverse by the projector (lowest order in dt).
    pub lowest_order_pinv: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            omega1: REFERENCE_OMEGA,
            omega2: -REFERENCE_OMEGA,
            kappa11: REFERENCE_KAPPA,
            kappa21: REFERENCE_KAPPA,
            kappa12: REFERENCE_KAPPA,
            kappa22: -REFERENCE_KAPPA,
            c_x: REFERENCE_C,
            c_p: REFERENCE_C,
            gamma_x: 100.0,
            gamma_p: 10.0,
            sigma_x: 10.0,
            sigma_p: 1.0,
            dt: 1e-6,
            duration: 0.1,
            prior_var_fx: 0.05,
            prior_var_fp: 0.05,
            measured_l1: MeasuredQuadrature::Position,
            measured_l2: MeasuredQuadrature::Momentum,
            active_s2: true,
            active_l1: true,
            active_l2: true,
            active_fx: true,
            active_fp: true,
            initial_cov: None,
            seed: 0,
            v_effect_init: 1e4,
            f0_x: 0.5,
            f0_p: -0.5,
            exact_outcome_variance: false,
            lowest_order_pinv: false,
        }
    }
}

fn nonneg(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")))
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be finite and > 0, got {v}")))
    }
}

impl ScenarioConfig {
    /// Parses a flat `key = value` document; missing keys take default values.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_owned()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_document(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn active(&self) -> ActiveModes {
        ActiveModes {
            s2: self.active_s2,
            l1: self.active_l1,
            l2: self.active_l2,
            f_x: self.active_fx,
            f_p: self.active_fp,
        }
    }

    pub fn steps(&self) -> usize {
        // Guard against T/dt landing a hair below an integer.
        ((self.duration / self.dt) * (1.0 + 1e-12)).floor() as usize
    }

    /// OU damping of the named field (`f_x` or `f_p`); zero for other labels.
    pub fn gamma_of(&self, field: &str) -> f64 {
        match field {
            "f_x" => self.gamma_x,
            "f_p" => self.gamma_p,
            _ => 0.0,
        }
    }

    pub fn sigma_of(&self, field: &str) -> f64 {
        match field {
            "f_x" => self.sigma_x,
            "f_p" => self.sigma_p,
            _ => 0.0,
        }
    }

    /// Number of oscillators (1 or 2).
    pub fn oscillators(&self) -> usize {
        if self.active_s2 {
            2
        } else {
            1
        }
    }

    /// Checks hard constraints; returns soft warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        for (name, v) in [
            ("omega1", self.omega1),
            ("omega2", self.omega2),
            ("kappa11", self.kappa11),
            ("kappa21", self.kappa21),
            ("kappa12", self.kappa12),
            ("kappa22", self.kappa22),
            ("c_x", self.c_x),
            ("c_p", self.c_p),
            ("f0_x", self.f0_x),
            ("f0_p", self.f0_p),
        ] {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite, got {v}")));
            }
        }
        positive("dt", self.dt)?;
        positive("duration", self.duration)?;
        if self.duration < self.dt {
            return Err(Error::Config(format!("duration {} is shorter than dt {}", self.duration, self.dt)));
        }
        for (name, v) in [
            ("gamma_x", self.gamma_x),
            ("gamma_p", self.gamma_p),
            ("sigma_x", self.sigma_x),
            ("sigma_p", self.sigma_p),
        ] {
            nonneg(name, v)?;
        }
        positive("prior_var_fx", self.prior_var_fx)?;
        positive("prior_var_fp", self.prior_var_fp)?;
        positive("v_effect_init", self.v_effect_init)?;

        let a = self.active();
        if !a.l1 && !a.l2 {
            return Err(Error::Config("at least one probe channel must be active".into()));
        }
        let mut clash = Vec::new();
        if !a.s2 {
            for (name, v) in [("omega2", self.omega2), ("kappa21", self.kappa21), ("kappa22", self.kappa22)] {
                if v != 0.0 {
                    clash.push(format!("{name} != 0 with the second oscillator inactive"));
                }
            }
        }
        if !a.l1 {
            for (name, v) in [("kappa11", self.kappa11), ("kappa21", self.kappa21)] {
                if v != 0.0 {
                    clash.push(format!("{name} != 0 with probe L1 inactive"));
                }
            }
        }
        if !a.l2 {
            for (name, v) in [("kappa12", self.kappa12), ("kappa22", self.kappa22)] {
                if v != 0.0 {
                    clash.push(format!("{name} != 0 with probe L2 inactive"));
                }
            }
        }
        if !a.f_x && self.c_x != 0.0 {
            clash.push("c_x != 0 with f_x inactive".into());
        }
        if !a.f_p && self.c_p != 0.0 {
            clash.push("c_p != 0 with f_p inactive".into());
        }
        if !clash.is_empty() {
            return Err(Error::Config(format!("inconsistent active-mode flags: {}", clash.join("; "))));
        }

        if let Some(cov) = &self.initial_cov {
            let n = 2 * self.oscillators();
            if cov.len() != n * n {
                return Err(Error::Config(format!("initial_cov needs {} entries, got {}", n * n, cov.len())));
            }
            let m = nalgebra::DMatrix::from_row_slice(n, n, cov);
            crate::gaussian::check_covariance(&m).map_err(|e| Error::Config(format!("initial_cov: {e}")))?;
        }

        let mut warnings = Vec::new();
        if !(1e-7..=1e-5).contains(&self.dt) {
            warnings.push(format!("dt = {:e} s is outside the tested range [1e-7, 1e-5] s", self.dt));
        }
        Ok(warnings)
    }

    /// Hex SHA-256 of the canonical JSON serialization.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let hash = Sha256::digest(&json);
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn digest_bytes(&self) -> [u8; 32] {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).into()
    }
}
