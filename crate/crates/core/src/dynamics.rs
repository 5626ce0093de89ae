//! Per-step interaction matrices and their continuous-time Riccati counterparts.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use serde_json::json;

use crate::config::{MeasuredQuadrature, ScenarioConfig};
use crate::error::Result;
use crate::layout::{Quadrature, Sector, VariableEntry, VariableLayout};

pub const X_A1: &str = "x_A1";
pub const P_A1: &str = "p_A1";
pub const X_A2: &str = "x_A2";
pub const P_A2: &str = "p_A2";
pub const F_X: &str = "f_x";
pub const F_P: &str = "f_p";
pub const X_L1: &str = "x_L1";
pub const P_L1: &str = "p_L1";
pub const X_L2: &str = "x_L2";
pub const P_L2: &str = "p_L2";

/// Canonical row order of every matrix and persisted artifact.
pub const CANONICAL_LABELS: [&str; 10] = [X_A1, P_A1, X_A2, P_A2, F_X, F_P, X_L1, P_L1, X_L2, P_L2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

fn entry_for(label: &str) -> VariableEntry {
    match label {
        X_A1 => VariableEntry::quantum(label, Quadrature::Position, 1),
        P_A1 => VariableEntry::quantum(label, Quadrature::Momentum, 1),
        X_A2 => VariableEntry::quantum(label, Quadrature::Position, 2),
        P_A2 => VariableEntry::quantum(label, Quadrature::Momentum, 2),
        F_X => VariableEntry::classical(label, 0),
        F_P => VariableEntry::classical(label, 1),
        X_L1 => VariableEntry::probe(label, Quadrature::Position, 1),
        P_L1 => VariableEntry::probe(label, Quadrature::Momentum, 1),
        X_L2 => VariableEntry::probe(label, Quadrature::Position, 2),
        P_L2 => VariableEntry::probe(label, Quadrature::Momentum, 2),
        _ => unreachable!("not a canonical label: {label}"),
    }
}

fn layout_of(labels: &[&str]) -> VariableLayout {
    VariableLayout::new(labels.iter().map(|l| entry_for(l)).collect()).expect("canonical layouts are valid")
}

/// The full ten-entry layout.
pub fn canonical_layout() -> VariableLayout {
    layout_of(&CANONICAL_LABELS)
}

fn active_labels(cfg: &ScenarioConfig) -> Vec<&'static str> {
    let a = cfg.active();
    CANONICAL_LABELS
        .iter()
        .copied()
        .filter(|&l| match l {
            X_A2 | P_A2 => a.s2,
            F_X => a.f_x,
            F_P => a.f_p,
            X_L1 | P_L1 => a.l1,
            X_L2 | P_L2 => a.l2,
            _ => true,
        })
        .collect()
}

/// Oscillator + classical + probe entries that take part in the scenario.
pub fn scenario_layout(cfg: &ScenarioConfig) -> VariableLayout {
    layout_of(&active_labels(cfg))
}

/// Oscillator + classical entries (the augmented system).
pub fn system_layout(cfg: &ScenarioConfig) -> VariableLayout {
    let labels: Vec<_> = active_labels(cfg).into_iter().filter(|l| !l.ends_with("_L1") && !l.ends_with("_L2")).collect();
    layout_of(&labels)
}

/// Oscillator quadratures only.
pub fn quantum_layout(cfg: &ScenarioConfig) -> VariableLayout {
    let labels: Vec<_> = active_labels(cfg).into_iter().filter(|l| l.contains("_A")).collect();
    layout_of(&labels)
}

/// Probe quadratures of one segment.
pub fn probe_layout(cfg: &ScenarioConfig) -> VariableLayout {
    let labels: Vec<_> = active_labels(cfg).into_iter().filter(|l| l.contains("_L")).collect();
    layout_of(&labels)
}

/// Labels of the quadratures read out by the detectors, in channel order.
pub fn measured_labels(cfg: &ScenarioConfig) -> Vec<&'static str> {
    let mut out = Vec::new();
    if cfg.active_l1 {
        out.push(match cfg.measured_l1 {
            MeasuredQuadrature::Position => X_L1,
            MeasuredQuadrature::Momentum => P_L1,
        });
    }
    if cfg.active_l2 {
        out.push(match cfg.measured_l2 {
            MeasuredQuadrature::Position => X_L2,
            MeasuredQuadrature::Momentum => P_L2,
        });
    }
    out
}

/// One discrete step `y → D·S·y + F`, `Γ → D·S·Γ·Sᵀ·D + L` over system ⊕ probe.
#[derive(Debug, Clone, PartialEq)]
pub struct StepMatrices {
    pub layout: VariableLayout,
    pub s: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub l: DMatrix<f64>,
    /// Projector over the probe sector selecting the measured quadratures.
    pub pi: DMatrix<f64>,
    pub direction: Direction,
    pub dt: f64,
}

struct Filler<'a> {
    layout: &'a VariableLayout,
    m: DMatrix<f64>,
}

impl Filler<'_> {
    fn set(&mut self, row: &str, col: &str, v: f64) {
        if let (Ok(i), Ok(j)) = (self.layout.index_of(row), self.layout.index_of(col)) {
            self.m[(i, j)] = v;
        }
    }
}

fn build(cfg: &ScenarioConfig, direction: Direction) -> StepMatrices {
    let layout = scenario_layout(cfg);
    let n = layout.len();
    let dt = cfg.dt;
    let sq = dt.sqrt();
    let sgn = match direction {
        Direction::Forward => 1.0,
        Direction::Backward => -1.0,
    };

    let mut f = Filler { layout: &layout, m: DMatrix::identity(n, n) };
    let (a1, a2) = (sgn * cfg.omega1 * dt, sgn * cfg.omega2 * dt);
    f.set(X_A1, X_A1, a1.cos());
    f.set(X_A1, P_A1, a1.sin());
    f.set(P_A1, X_A1, -a1.sin());
    f.set(P_A1, P_A1, a1.cos());
    f.set(X_A2, X_A2, a2.cos());
    f.set(X_A2, P_A2, a2.sin());
    f.set(P_A2, X_A2, -a2.sin());
    f.set(P_A2, P_A2, a2.cos());
    f.set(X_A1, F_X, sgn * cfg.c_x * dt);
    f.set(P_A1, F_P, sgn * cfg.c_p * dt);
    f.set(X_A1, P_L1, sgn * cfg.kappa11 * sq);
    f.set(P_A1, X_L2, -sgn * cfg.kappa12 * sq);
    f.set(X_A2, P_L1, sgn * cfg.kappa21 * sq);
    f.set(P_A2, X_L2, -sgn * cfg.kappa22 * sq);
    f.set(X_L1, P_A1, sgn * cfg.kappa11 * sq);
    f.set(X_L1, P_A2, sgn * cfg.kappa21 * sq);
    f.set(P_L2, X_A1, -sgn * cfg.kappa12 * sq);
    f.set(P_L2, X_A2, -sgn * cfg.kappa22 * sq);
    let s = f.m;

    let mut d = DMatrix::identity(n, n);
    let mut l = DMatrix::zeros(n, n);
    if let Ok(i) = layout.index_of(F_X) {
        d[(i, i)] = 1.0 - sgn * cfg.gamma_x * dt;
        l[(i, i)] = 2.0 * cfg.sigma_x * dt;
    }
    if let Ok(i) = layout.index_of(F_P) {
        d[(i, i)] = 1.0 - sgn * cfg.gamma_p * dt;
        l[(i, i)] = 2.0 * cfg.sigma_p * dt;
    }

    let probe = probe_layout(cfg);
    let mut pi = DMatrix::zeros(probe.len(), probe.len());
    for label in measured_labels(cfg) {
        let i = probe.index_of(label).expect("measured label is a probe label");
        pi[(i, i)] = 1.0;
    }

    StepMatrices { layout, s, d, l, pi, direction, dt }
}

/// Forward step matrices over the active entries of the canonical ordering.
pub fn build_forward_matrices(cfg: &ScenarioConfig) -> StepMatrices {
    build(cfg, Direction::Forward)
}

/// Time-reversed step: negated generator, damping `1 + γ·dt`, unchanged diffusion.
pub fn build_backward_matrices(cfg: &ScenarioConfig) -> StepMatrices {
    build(cfg, Direction::Backward)
}

/// Displacement `(c_x f_x dt, c_p f_p dt, 0, …)` over oscillator ⊕ probe entries.
pub fn build_known_field_drive(cfg: &ScenarioConfig, f_x: f64, f_p: f64) -> DVector<f64> {
    let labels: Vec<_> = active_labels(cfg).into_iter().filter(|l| !l.starts_with("f_")).collect();
    let mut v = DVector::zeros(labels.len());
    if cfg.active_fx {
        v[0] = cfg.c_x * f_x * cfg.dt;
    }
    if cfg.active_fp {
        v[1] = cfg.c_p * f_p * cfg.dt;
    }
    v
}

impl StepMatrices {
    /// Pre-multiplied transition `D·S`.
    pub fn transition(&self) -> DMatrix<f64> {
        &self.d * &self.s
    }

    /// Number of leading (non-probe) entries.
    pub fn system_len(&self) -> usize {
        self.layout.entries().iter().filter(|e| e.sector != Sector::Probe).count()
    }

    pub fn system_layout(&self) -> VariableLayout {
        let idx: Vec<usize> = (0..self.system_len()).collect();
        self.layout.select(&idx).expect("prefix of a valid layout")
    }

    pub fn probe_layout(&self) -> VariableLayout {
        let idx: Vec<usize> = (self.system_len()..self.layout.len()).collect();
        self.layout.select(&idx).expect("suffix of a valid layout")
    }

    pub fn probe_indices(&self) -> Vec<usize> {
        (self.system_len()..self.layout.len()).collect()
    }

    /// Indices (in the full layout) of the measured probe quadratures.
    pub fn measured_indices(&self) -> Vec<usize> {
        let off = self.system_len();
        (0..self.pi.nrows()).filter(|&i| self.pi[(i, i)] == 1.0).map(|i| off + i).collect()
    }

    pub fn measured_labels(&self) -> Vec<String> {
        self.measured_indices().into_iter().map(|i| self.layout.entry(i).label.clone()).collect()
    }

    /// Restriction to the given entries (rows and columns of S, D, L).
    pub fn restrict(&self, keep: &[usize]) -> Result<Self> {
        let layout = self.layout.select(keep)?;
        let pick = |m: &DMatrix<f64>| DMatrix::from_fn(keep.len(), keep.len(), |i, j| m[(keep[i], keep[j])]);
        Ok(Self {
            layout,
            s: pick(&self.s),
            d: pick(&self.d),
            l: pick(&self.l),
            pi: self.pi.clone(),
            direction: self.direction,
            dt: self.dt,
        })
    }

    /// Drops the classical rows/columns, giving the known-field quantum step.
    pub fn without_classical(&self) -> Result<Self> {
        let keep: Vec<usize> =
            (0..self.layout.len()).filter(|&i| self.layout.entry(i).sector != Sector::Classical).collect();
        self.restrict(&keep)
    }

    /// Golden-matrix export for cross-implementation diffing.
    pub fn to_json(&self) -> serde_json::Value {
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> { (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect() };
        json!({
            "direction": self.direction,
            "dt": self.dt,
            "labels": self.layout.labels().collect::<Vec<_>>(),
            "measured": self.measured_labels(),
            "S": rows(&self.s),
            "D": rows(&self.d),
            "L": rows(&self.l),
            "Pi": rows(&self.pi),
        })
    }
}

/// Matrices of `Ȧ = G − D·A − A·E − A·F·A` over the active system entries.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiMatrices {
    pub labels: Vec<String>,
    pub g: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub f: DMatrix<f64>,
}

pub fn riccati_matrices(cfg: &ScenarioConfig) -> RiccatiMatrices {
    let (k11, k21, k12, k22) = (cfg.kappa11, cfg.kappa21, cfg.kappa12, cfg.kappa22);
    let (w1, w2) = (cfg.omega1, cfg.omega2);
    #[rustfmt::skip]
    let g = DMatrix::from_row_slice(6, 6, &[
        k11 * k11, 0.0, k11 * k21, 0.0, 0.0, 0.0,
        0.0, k12 * k12, 0.0, k12 * k22, 0.0, 0.0,
        k11 * k21, 0.0, k21 * k21, 0.0, 0.0, 0.0,
        0.0, k12 * k22, 0.0, k22 * k22, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0, 2.0 * cfg.sigma_x, 0.0,
        0.0, 0.0, 0.0, 0.0, 0.0, 2.0 * cfg.sigma_p,
    ]);
    #[rustfmt::skip]
    let d = DMatrix::from_row_slice(6, 6, &[
        0.0, -w1, 0.0, 0.0, -cfg.c_x, 0.0,
        w1, 0.0, 0.0, 0.0, 0.0, -cfg.c_p,
        0.0, 0.0, 0.0, -w2, 0.0, 0.0,
        0.0, 0.0, w2, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0, cfg.gamma_x, 0.0,
        0.0, 0.0, 0.0, 0.0, 0.0, cfg.gamma_p,
    ]);
    #[rustfmt::skip]
    let e = DMatrix::from_row_slice(6, 6, &[
        0.0, w1, 0.0, 0.0, 0.0, 0.0,
        -w1, 0.0, 0.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, w2, 0.0, 0.0,
        0.0, 0.0, -w2, 0.0, 0.0, 0.0,
        -cfg.c_x, 0.0, 0.0, 0.0, cfg.gamma_x, 0.0,
        0.0, -cfg.c_p, 0.0, 0.0, 0.0, cfg.gamma_p,
    ]);
    #[rustfmt::skip]
    let f = DMatrix::from_row_slice(6, 6, &[
        k12 * k12, 0.0, k12 * k22, 0.0, 0.0, 0.0,
        0.0, k11 * k11, 0.0, k11 * k21, 0.0, 0.0,
        k12 * k22, 0.0, k22 * k22, 0.0, 0.0, 0.0,
        0.0, k11 * k21, 0.0, k21 * k21, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
    ]);

    let sys = system_layout(cfg);
    let keep: Vec<usize> = sys.labels().map(|l| CANONICAL_LABELS.iter().position(|c| *c == l).unwrap()).collect();
    let pick = |m: &DMatrix<f64>| DMatrix::from_fn(keep.len(), keep.len(), |i, j| m[(keep[i], keep[j])]);
    RiccatiMatrices {
        labels: sys.labels().map(str::to_owned).collect(),
        g: pick(&g),
        d: pick(&d),
        e: pick(&e),
        f: pick(&f),
    }
}
