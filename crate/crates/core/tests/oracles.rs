use baetrack_core::dynamics::{F_P, F_X};
use baetrack_core::oracles::{bayes_grid_oracle, kalman_oracle, max_relative_deviation, max_scaled_deviation};
use baetrack_core::pipeline::{forward_filter, synthesize_experiment};
use baetrack_core::presets::{preset, PRESET_NAMES};
use baetrack_core::{Error, ScenarioConfig};

#[test]
fn kalman_matches_pipeline_for_every_preset() {
    for name in PRESET_NAMES {
        let mut cfg = preset(name).unwrap();
        cfg.duration = 1e4 * cfg.dt;
        let e = synthesize_experiment(&cfg, 11).unwrap();
        let a = forward_filter(&cfg, &e.record).unwrap();
        let b = kalman_oracle(&cfg, &e.record).unwrap();
        let mut worst: f64 = 0.0;
        for label in a.labels() {
            worst = worst.max(max_relative_deviation(b.var(label).unwrap(), a.var(label).unwrap()));
            worst = worst.max(max_scaled_deviation(b.mean(label).unwrap(), a.mean(label).unwrap()));
        }
        println!("{name}: {worst:e}");
        assert!(worst < 1e-9, "{name}: {worst:e}");
    }
}

fn bayes_toy() -> ScenarioConfig {
    let mut cfg = preset("fig4a").unwrap();
    cfg.active_fx = false;
    cfg.c_x = 0.0;
    cfg.dt = 1e-5;
    cfg.duration = 1e-2;
    cfg.c_p = 200.0;
    cfg
}

#[test]
fn bayes_grid_matches_filter() {
    let cfg = bayes_toy();
    let e = synthesize_experiment(&cfg, 5).unwrap();
    let f = forward_filter(&cfg, &e.record).unwrap();
    let fm = *f.mean(F_P).unwrap().last().unwrap();
    let fv = *f.var(F_P).unwrap().last().unwrap();
    let half = 4.5 * cfg.prior_var_fp.sqrt();
    let grid: Vec<f64> = (0..41).map(|i| -half + 2.0 * half * i as f64 / 40.0).collect();
    let post = bayes_grid_oracle(&cfg, &e.record, F_P, &grid).unwrap();
    let spacing = grid[1] - grid[0];
    println!("filter {fm} {fv}  grid {} {} spacing {spacing}", post.mean, post.var);
    assert!((post.mean - fm).abs() < spacing);
    let r = post.var / fv;
    assert!((0.9..=1.1).contains(&r), "{r}");
}

#[test]
fn bayes_grid_rejects_bad_setups() {
    let cfg = bayes_toy();
    let e = synthesize_experiment(&cfg, 5).unwrap();
    let narrow: Vec<f64> = (0..41).map(|i| -0.1 + 0.005 * i as f64).collect();
    assert!(bayes_grid_oracle(&cfg, &e.record, F_P, &narrow).is_err());
    assert!(matches!(bayes_grid_oracle(&cfg, &e.record, F_X, &narrow), Err(Error::InvalidArgument(_))));
}
