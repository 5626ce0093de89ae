//! Ornstein–Uhlenbeck trajectories, homodyne samples and labelled random streams.

use std::io::Write;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Independent ChaCha20 stream keyed by the master seed and selected by a label.
///
/// Streams with different labels never overlap, so the order in which
/// unrelated streams are consumed cannot change any stream's content.
#[derive(Debug, Clone)]
pub struct StreamRng {
    inner: ChaCha20Rng,
}

impl StreamRng {
    pub fn new(master_seed: u64, label: &str) -> Self {
        let key: [u8; 32] = Sha256::digest(master_seed.to_le_bytes()).into();
        let mut inner = ChaCha20Rng::from_seed(key);
        let h = Sha256::digest(label.as_bytes());
        inner.set_stream(u64::from_le_bytes(h[..8].try_into().unwrap()));
        Self { inner }
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }
}

impl RngCore for StreamRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuParams {
    pub gamma: f64,
    pub sigma: f64,
    pub f0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuTrajectory {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub params: OuParams,
    pub seed: u64,
}

/// Euler–Maruyama: `f_{k+1} = f_k − γ f_k dt + √σ·w_k`, `w_k ~ N(0, dt)`.
///
/// Returns `steps + 1` samples starting at `f0`.
pub fn simulate_ou(params: OuParams, dt: f64, steps: usize, rng: &mut StreamRng, seed: u64) -> Result<OuTrajectory> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be >= 1".into()));
    }
    if params.gamma < 0.0 || params.sigma < 0.0 {
        return Err(Error::InvalidArgument("OU gamma and sigma must be >= 0".into()));
    }
    let noise = (params.sigma * dt).sqrt();
    let mut values = Vec::with_capacity(steps + 1);
    let mut f = params.f0;
    values.push(f);
    for _ in 0..steps {
        f = f - params.gamma * f * dt + noise * rng.standard_normal();
        values.push(f);
    }
    let times = (0..=steps).map(|k| k as f64 * dt).collect();
    Ok(OuTrajectory { times, values, params, seed })
}

/// Stationary `(mean, variance) = (0, σ/2γ)`.
pub fn ou_stationary_stats(params: OuParams) -> Result<(f64, f64)> {
    if !(params.gamma > 0.0) {
        return Err(Error::NoStationary(format!("gamma = {}", params.gamma)));
    }
    Ok((0.0, params.sigma / (2.0 * params.gamma)))
}

/// Draw from `N(mean, 1/2)`, the vacuum-limited homodyne distribution.
pub fn sample_homodyne(mean: f64, rng: &mut StreamRng) -> f64 {
    mean + std::f64::consts::FRAC_1_SQRT_2 * rng.standard_normal()
}

/// Draw from `N(mean, var)`.
pub fn sample_with_variance(mean: f64, var: f64, rng: &mut StreamRng) -> f64 {
    mean + var.sqrt() * rng.standard_normal()
}

impl OuTrajectory {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `t,value` rows with shortest round-trip float formatting.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,value")?;
        for (t, v) in self.times.iter().zip(&self.values) {
            writeln!(w, "{t:?},{v:?}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_decay_without_noise() {
        let p = OuParams { gamma: 100.0, sigma: 0.0, f0: 1.0 };
        let dt = 1e-5;
        let steps = 1000;
        let tr = simulate_ou(p, dt, steps, &mut StreamRng::new(1, "f"), 1).unwrap();
        for (t, v) in tr.times.iter().zip(&tr.values) {
            let exact = (-p.gamma * t).exp();
            let bound = p.gamma * dt * p.gamma * t;
            assert!((v - exact).abs() <= bound * exact + 1e-15, "t={t} v={v} exact={exact}");
        }
    }

    #[test]
    fn stationary_stats() {
        let (m, v) = ou_stationary_stats(OuParams { gamma: 100.0, sigma: 10.0, f0: 0.0 }).unwrap();
        assert_eq!((m, v), (0.0, 0.05));
        let (_, v) = ou_stationary_stats(OuParams { gamma: 10.0, sigma: 1.0, f0: 0.0 }).unwrap();
        assert_eq!(v, 0.05);
        assert!(matches!(ou_stationary_stats(OuParams { gamma: 0.0, sigma: 1.0, f0: 0.0 }), Err(Error::NoStationary(_))));
    }

    #[test]
    fn homodyne_moments() {
        let mut rng = StreamRng::new(7, "x_L1");
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| sample_homodyne(0.0, &mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 3.0 * (0.5 / n as f64).sqrt());
        assert!((var - 0.5).abs() < 3.0 * (2.0 * 0.25 / n as f64).sqrt());
    }

    #[test]
    fn identical_seed_identical_draws() {
        let mut a = StreamRng::new(3, "p_L2");
        let mut b = StreamRng::new(3, "p_L2");
        for _ in 0..100 {
            assert_eq!(sample_homodyne(0.1, &mut a).to_bits(), sample_homodyne(0.1, &mut b).to_bits());
        }
    }

    #[test]
    fn streams_are_independent_of_consumption_order() {
        let mut a1 = StreamRng::new(9, "a");
        let mut b1 = StreamRng::new(9, "b");
        let seq_a: Vec<u64> = (0..10).map(|_| a1.next_u64()).collect();
        let _ = (0..50).map(|_| b1.next_u64()).count();

        let mut b2 = StreamRng::new(9, "b");
        let _ = (0..7).map(|_| b2.next_u64()).count();
        let mut a2 = StreamRng::new(9, "a");
        let seq_a2: Vec<u64> = (0..10).map(|_| a2.next_u64()).collect();
        assert_eq!(seq_a, seq_a2);
        assert_ne!(seq_a[0], StreamRng::new(9, "b").next_u64());
    }

    #[test]
    fn csv_export() {
        let tr = simulate_ou(OuParams { gamma: 1.0, sigma: 1.0, f0: 0.5 }, 0.1, 3, &mut StreamRng::new(0, "f"), 0).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        let last: Vec<f64> = lines[4].split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(last[1].to_bits(), tr.values[3].to_bits());
    }

    #[test]
    fn rejects_bad_arguments() {
        let p = OuParams { gamma: 1.0, sigma: 1.0, f0: 0.0 };
        assert!(simulate_ou(p, 0.0, 10, &mut StreamRng::new(0, "f"), 0).is_err());
        assert!(simulate_ou(p, 1e-3, 0, &mut StreamRng::new(0, "f"), 0).is_err());
    }
}
