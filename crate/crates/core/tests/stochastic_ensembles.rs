use baetrack_core::stochastic::{ou_stationary_stats, simulate_ou};
use baetrack_core::{OuParams, StreamRng};

fn ensemble(p: OuParams, dt: f64, steps: usize, paths: usize) -> Vec<Vec<f64>> {
    (0..paths)
        .map(|i| simulate_ou(p, dt, steps, &mut StreamRng::new(42, &format!("path{i}")), 42).unwrap().values)
        .collect()
}

fn column_var(paths: &[Vec<f64>], k: usize) -> f64 {
    let n = paths.len() as f64;
    let m = paths.iter().map(|p| p[k]).sum::<f64>() / n;
    paths.iter().map(|p| (p[k] - m).powi(2)).sum::<f64>() / (n - 1.0)
}

#[test]
fn wiener_limit_variance_grows_linearly() {
    let p = OuParams { gamma: 0.0, sigma: 2.0, f0: 0.0 };
    let paths = ensemble(p, 1e-3, 200, 4000);
    for k in [50, 100, 200] {
        let expected = p.sigma * k as f64 * 1e-3;
        let v = column_var(&paths, k);
        let se = expected * (2.0 / 4000.0f64).sqrt();
        assert!((v - expected).abs() < 4.0 * se, "k={k}: {v} vs {expected}");
    }
}

#[test]
fn ou_ensemble_reaches_stationary_variance() {
    for (gamma, sigma) in [(100.0, 10.0), (10.0, 1.0)] {
        let p = OuParams { gamma, sigma, f0: 0.0 };
        let (_, target) = ou_stationary_stats(p).unwrap();
        assert_eq!(target, 0.05);
        let dt = 0.05 / gamma;
        let paths = ensemble(p, dt, 300, 4000);
        let v = column_var(&paths, 300);
        let exact = target * (1.0 - (-2.0 * gamma * 300.0 * dt).exp()) / (1.0 - gamma * dt / 2.0);
        let se = exact * (2.0 / 4000.0f64).sqrt();
        assert!((v - exact).abs() < 4.0 * se, "γ={gamma}: {v} vs {exact}");
    }
}

#[test]
fn ou_autocovariance_decays_exponentially() {
    let p = OuParams { gamma: 100.0, sigma: 10.0, f0: 0.0 };
    let dt = 1e-4;
    let paths = ensemble(p, dt, 800, 4000);
    let (a, lag) = (600, 100);
    let n = paths.len() as f64;
    let ma = paths.iter().map(|x| x[a]).sum::<f64>() / n;
    let mb = paths.iter().map(|x| x[a + lag]).sum::<f64>() / n;
    let c = paths.iter().map(|x| (x[a] - ma) * (x[a + lag] - mb)).sum::<f64>() / (n - 1.0);
    let expected = 0.05 * (1.0 - p.gamma * dt).powi(lag as i32) / (1.0 - p.gamma * dt / 2.0);
    assert!((c - expected).abs() < 0.1 * 0.05, "{c} vs {expected}");
}
