//! Named scenarios, each switching parts of the reference setup off.
//!
//! Everything not switched off keeps its reference-table value.

use crate::config::{ScenarioConfig, REFERENCE_C, REFERENCE_KAPPA, REFERENCE_OMEGA};
use crate::error::{Error, Result};

pub const PRESET_NAMES: [&str; 15] = [
    "fig2a", "fig2b", "fig2c", "fig2d", "fig3a", "fig3b", "fig4a", "fig4b", "fig4c", "fig4d", "fig5a", "fig5b",
    "fig5c", "fig5d", "fig6",
];

fn single_oscillator(cfg: &mut ScenarioConfig) {
    cfg.active_s2 = false;
    cfg.omega2 = 0.0;
    cfg.kappa21 = 0.0;
    cfg.kappa22 = 0.0;
}

fn no_fields(cfg: &mut ScenarioConfig) {
    cfg.active_fx = false;
    cfg.active_fp = false;
    cfg.c_x = 0.0;
    cfg.c_p = 0.0;
}

fn constant_fields(cfg: &mut ScenarioConfig) {
    cfg.gamma_x = 0.0;
    cfg.gamma_p = 0.0;
    cfg.sigma_x = 0.0;
    cfg.sigma_p = 0.0;
}

fn only_l1(cfg: &mut ScenarioConfig) {
    cfg.active_l2 = false;
    cfg.kappa12 = 0.0;
    cfg.kappa22 = 0.0;
}

fn epr_pair(cfg: &mut ScenarioConfig, same_sign: bool) {
    cfg.omega1 = REFERENCE_OMEGA;
    cfg.omega2 = if same_sign { REFERENCE_OMEGA } else { -REFERENCE_OMEGA };
    cfg.kappa11 = REFERENCE_KAPPA;
    cfg.kappa21 = REFERENCE_KAPPA;
    cfg.kappa12 = REFERENCE_KAPPA;
    cfg.kappa22 = -REFERENCE_KAPPA;
}

/// The `a`–`d` field scenarios differ only in which probes and partners take part.
fn field_panel(panel: char, cfg: &mut ScenarioConfig) {
    cfg.c_x = REFERENCE_C;
    cfg.c_p = REFERENCE_C;
    match panel {
        'a' => {
            single_oscillator(cfg);
            only_l1(cfg);
            cfg.omega1 = 0.0;
        }
        'b' => {
            single_oscillator(cfg);
            cfg.omega1 = 0.0;
        }
        'c' => {
            epr_pair(cfg, true);
            cfg.omega1 = 0.0;
            cfg.omega2 = 0.0;
        }
        _ => epr_pair(cfg, false),
    }
}

/// Looks up a preset by name.
pub fn preset(name: &str) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::default();
    match name {
        "fig2a" => {
            // Free rotation of a squeezed state; the probe is attached but uncoupled.
            single_oscillator(&mut cfg);
            no_fields(&mut cfg);
            only_l1(&mut cfg);
            cfg.kappa11 = 0.0;
            cfg.initial_cov = Some(vec![0.2, 0.0, 0.0, 5.0]);
            cfg.duration = 0.02;
        }
        "fig2b" | "fig2c" | "fig2d" => {
            single_oscillator(&mut cfg);
            no_fields(&mut cfg);
            if name != "fig2d" {
                only_l1(&mut cfg);
            }
            if name == "fig2b" {
                cfg.omega1 = 0.0;
            }
            cfg.duration = 0.02;
        }
        "fig3a" | "fig3b" => {
            no_fields(&mut cfg);
            epr_pair(&mut cfg, name == "fig3a");
        }
        "fig4a" | "fig4b" | "fig4c" | "fig4d" => {
            constant_fields(&mut cfg);
            field_panel(name.chars().last().unwrap(), &mut cfg);
            if name == "fig4d" {
                cfg.duration = 0.2;
            }
        }
        "fig5a" | "fig5b" | "fig5c" | "fig5d" => {
            field_panel(name.chars().last().unwrap(), &mut cfg);
            // A finer step keeps the discrete OU fixed point within 1e-6 of σ/2γ.
            cfg.dt = 1e-7;
            cfg.duration = 0.02;
        }
        "fig6" => {
            field_panel('d', &mut cfg);
            cfg.duration = 0.05;
        }
        _ => return Err(Error::UnknownPreset(name.to_owned())),
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_presets_validate() {
        for name in PRESET_NAMES {
            preset(name).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        assert!(matches!(preset("fig7"), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn fig2a_is_free_rotation_of_squeezed_state() {
        let c = preset("fig2a").unwrap();
        assert_eq!((c.kappa11, c.kappa12, c.kappa21, c.kappa22), (0.0, 0.0, 0.0, 0.0));
        assert!(c.initial_cov.is_some());
        assert!(c.omega1 != 0.0);
    }

    #[test]
    fn fig3b_has_opposite_frequencies() {
        let c = preset("fig3b").unwrap();
        assert!(c.active_s2 && c.active_l1 && c.active_l2);
        assert_eq!(c.omega2, -c.omega1);
        assert!(!c.active_fx && !c.active_fp);
    }

    #[test]
    fn fig4a_single_probe_constant_fields() {
        let c = preset("fig4a").unwrap();
        assert!(!c.active_s2 && c.active_l1 && !c.active_l2);
        assert_eq!(c.omega1, 0.0);
        assert_eq!((c.gamma_x, c.sigma_x, c.gamma_p, c.sigma_p), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn fluctuating_presets_keep_table_rates() {
        let c = preset("fig5d").unwrap();
        assert_eq!((c.gamma_x, c.sigma_x, c.gamma_p, c.sigma_p), (100.0, 10.0, 10.0, 1.0));
        assert_eq!(c.omega2, -c.omega1);
    }
}
