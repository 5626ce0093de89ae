//! Synthesis of detection records, forward filtering, backward effect
//! propagation and their combination into smoothed estimates.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::dynamics::{self, StepMatrices, F_P, F_X, X_A1, X_A2, P_A1, P_A2};
use crate::error::{Error, Result};
use crate::gaussian::{self, GaussianState, PseudoInverse};
use crate::layout::VariableLayout;
use crate::stochastic::{self, OuParams, OuTrajectory, StreamRng};

pub const X_MINUS: &str = "x_minus";
pub const P_PLUS: &str = "p_plus";

/// Homodyne outcomes, one row per step and one column per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub dt: f64,
    pub channels: Vec<String>,
    /// Row-major `steps × channels`.
    pub outcomes: Vec<f64>,
    pub seed: u64,
    pub config_digest: String,
}

impl DetectionRecord {
    pub fn steps(&self) -> usize {
        if self.channels.is_empty() {
            0
        } else {
            self.outcomes.len() / self.channels.len()
        }
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let c = self.channels.len();
        &self.outcomes[k * c..(k + 1) * c]
    }

    /// Outcomes of one channel over all steps.
    pub fn channel(&self, label: &str) -> Option<Vec<f64>> {
        let j = self.channels.iter().position(|c| c == label)?;
        Some((0..self.steps()).map(|k| self.row(k)[j]).collect())
    }

    /// Checks that the record was produced for `cfg` (step, horizon, channels).
    pub fn check_against(&self, cfg: &ScenarioConfig) -> Result<()> {
        if self.dt != cfg.dt {
            return Err(Error::RecordMismatch(format!("record dt {} vs config dt {}", self.dt, cfg.dt)));
        }
        let expected: Vec<String> = dynamics::measured_labels(cfg).into_iter().map(str::to_owned).collect();
        if self.channels != expected {
            return Err(Error::RecordMismatch(format!("record channels {:?} vs config {:?}", self.channels, expected)));
        }
        if self.outcomes.len() != self.channels.len() * cfg.steps() {
            return Err(Error::RecordMismatch(format!(
                "record has {} rows, config needs {}",
                self.steps(),
                cfg.steps()
            )));
        }
        if self.outcomes.iter().any(|v| !v.is_finite()) {
            return Err(Error::RecordMismatch("record contains non-finite outcomes".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceKind {
    /// Known-field quantum state produced during synthesis.
    Conditional,
    Filtered,
    Effect,
    Smoothed,
}

/// Mean and variance series of one tracked variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceColumn {
    pub label: String,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Time series of estimator moments (variances are physical, `Γ/2`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateTrace {
    pub kind: TraceKind,
    pub times: Vec<f64>,
    pub columns: Vec<TraceColumn>,
    /// True perturbation values on the same grid, keyed by field label.
    #[serde(default)]
    pub truth: BTreeMap<String, Vec<f64>>,
}

impl EstimateTrace {
    fn with_labels(kind: TraceKind, labels: &[String], capacity: usize) -> Self {
        Self {
            kind,
            times: Vec::with_capacity(capacity),
            columns: labels
                .iter()
                .map(|l| TraceColumn { label: l.clone(), mean: Vec::with_capacity(capacity), var: Vec::with_capacity(capacity) })
                .collect(),
            truth: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn column(&self, label: &str) -> Option<&TraceColumn> {
        self.columns.iter().find(|c| c.label == label)
    }

    pub fn mean(&self, label: &str) -> Option<&[f64]> {
        self.column(label).map(|c| c.mean.as_slice())
    }

    pub fn var(&self, label: &str) -> Option<&[f64]> {
        self.column(label).map(|c| c.var.as_slice())
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.label.as_str())
    }

    pub fn attach_truth(&mut self, experiment: &Experiment) {
        for (label, tr) in [(F_X, &experiment.truth_x), (F_P, &experiment.truth_p)] {
            if let Some(tr) = tr.as_ref().filter(|t| t.values.len() == self.len()) {
                self.truth.insert(label.to_owned(), tr.values.clone());
            }
        }
    }

    fn push(&mut self, t: f64, mean: &DVector<f64>, cov: &DMatrix<f64>, epr: Option<[usize; 4]>) {
        self.times.push(t);
        let n = mean.len();
        for i in 0..n {
            self.columns[i].mean.push(mean[i]);
            self.columns[i].var.push(0.5 * cov[(i, i)]);
        }
        if let Some([x1, p1, x2, p2]) = epr {
            let h = std::f64::consts::FRAC_1_SQRT_2;
            self.columns[n].mean.push(h * (mean[x1] - mean[x2]));
            self.columns[n].var.push(0.25 * (cov[(x1, x1)] + cov[(x2, x2)] - 2.0 * cov[(x1, x2)]));
            self.columns[n + 1].mean.push(h * (mean[p1] + mean[p2]));
            self.columns[n + 1].var.push(0.25 * (cov[(p1, p1)] + cov[(p2, p2)] + 2.0 * cov[(p1, p2)]));
        }
    }
}

/// Output of the synthesis step.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub truth_x: Option<OuTrajectory>,
    pub truth_p: Option<OuTrajectory>,
    pub record: DetectionRecord,
    pub conditional: EstimateTrace,
}

impl Experiment {
    pub fn truth(&self, field: &str) -> Option<&OuTrajectory> {
        match field {
            F_X => self.truth_x.as_ref(),
            F_P => self.truth_p.as_ref(),
            _ => None,
        }
    }
}

/// Indices of (x₁, p₁, x₂, p₂) when the layout holds two oscillators.
fn epr_indices(layout: &VariableLayout) -> Option<[usize; 4]> {
    Some([
        layout.index_of(X_A1).ok()?,
        layout.index_of(P_A1).ok()?,
        layout.index_of(X_A2).ok()?,
        layout.index_of(P_A2).ok()?,
    ])
}

fn trace_labels(layout: &VariableLayout) -> Vec<String> {
    let mut labels: Vec<String> = layout.labels().map(str::to_owned).collect();
    if epr_indices(layout).is_some() {
        labels.push(X_MINUS.into());
        labels.push(P_PLUS.into());
    }
    labels
}

fn pinv_mode(cfg: &ScenarioConfig) -> PseudoInverse {
    if cfg.lowest_order_pinv {
        PseudoInverse::LowestOrder
    } else {
        PseudoInverse::Exact
    }
}

/// The segment cycle: attach a vacuum probe, apply the step, condition on
/// the measured quadratures, drop the probe.
pub(crate) struct SegmentStepper {
    pub(crate) system: VariableLayout,
    transition: DMatrix<f64>,
    diffusion: DMatrix<f64>,
    keep: Vec<usize>,
    measured: Vec<usize>,
    mode: PseudoInverse,
    joint_labels: Vec<String>,
}

impl SegmentStepper {
    pub(crate) fn new(m: &StepMatrices, mode: PseudoInverse) -> Self {
        Self {
            system: m.system_layout(),
            transition: m.transition(),
            diffusion: m.l.clone(),
            keep: (0..m.system_len()).collect(),
            measured: m.measured_indices(),
            mode,
            joint_labels: m.layout.labels().map(str::to_owned).collect(),
        }
    }

    fn joint(&self, mean: &DVector<f64>, cov: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.keep.len();
        let total = self.transition.nrows();
        let mut jm = DVector::zeros(total);
        jm.rows_mut(0, n).copy_from(mean);
        let mut jc = DMatrix::identity(total, total);
        jc.view_mut((0, 0), (n, n)).copy_from(cov);
        (jm, jc)
    }

    /// Post-interaction joint moments (before measurement).
    pub(crate) fn interact(
        &self,
        mean: &DVector<f64>,
        cov: &DMatrix<f64>,
        drive: Option<&DVector<f64>>,
    ) -> (DVector<f64>, DMatrix<f64>) {
        let (jm, jc) = self.joint(mean, cov);
        let mut m = &self.transition * jm;
        if let Some(f) = drive {
            m += f;
        }
        let mut c = &self.transition * jc * self.transition.transpose() + &self.diffusion;
        gaussian::symmetrize(&mut c);
        (m, c)
    }

    pub(crate) fn measure(
        &self,
        mean: &DVector<f64>,
        cov: &DMatrix<f64>,
        outcomes: &[f64],
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        gaussian::condition_raw(mean, cov, &self.keep, &self.measured, outcomes, self.mode, |i| {
            self.joint_labels[i].clone()
        })
    }

    pub(crate) fn measured(&self) -> &[usize] {
        &self.measured
    }

    pub(crate) fn step(
        &self,
        mean: &DVector<f64>,
        cov: &DMatrix<f64>,
        outcomes: &[f64],
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let (m, c) = self.interact(mean, cov, None);
        self.measure(&m, &c, outcomes)
    }
}

fn initial_quantum_cov(cfg: &ScenarioConfig) -> DMatrix<f64> {
    let n = 2 * cfg.oscillators();
    match &cfg.initial_cov {
        Some(v) => DMatrix::from_row_slice(n, n, v),
        None => DMatrix::identity(n, n),
    }
}

/// Prior state of the augmented system: oscillator ground state (or the
/// configured override) with independent zero-mean classical priors.
pub fn prior_state(cfg: &ScenarioConfig) -> Result<GaussianState> {
    let layout = dynamics::system_layout(cfg);
    let priors = BTreeMap::from([(F_X.to_owned(), cfg.prior_var_fx), (F_P.to_owned(), cfg.prior_var_fp)]);
    let ground = GaussianState::ground_state(layout.clone(), &priors)?;
    let (layout, mean, mut cov) = ground.into_parts();
    let q = initial_quantum_cov(cfg);
    cov.view_mut((0, 0), (q.nrows(), q.ncols())).copy_from(&q);
    GaussianState::new(layout, mean, cov)
}

/// True OU trajectories of the active fields.
pub fn simulate_truth(cfg: &ScenarioConfig, seed: u64) -> Result<(Option<OuTrajectory>, Option<OuTrajectory>)> {
    let steps = cfg.steps();
    let tx = if cfg.active_fx {
        let p = OuParams { gamma: cfg.gamma_x, sigma: cfg.sigma_x, f0: cfg.f0_x };
        Some(stochastic::simulate_ou(p, cfg.dt, steps, &mut StreamRng::new(seed, F_X), seed)?)
    } else {
        None
    };
    let tp = if cfg.active_fp {
        let p = OuParams { gamma: cfg.gamma_p, sigma: cfg.sigma_p, f0: cfg.f0_p };
        Some(stochastic::simulate_ou(p, cfg.dt, steps, &mut StreamRng::new(seed, F_P), seed)?)
    } else {
        None
    };
    Ok((tx, tp))
}

/// Generates true fields, runs the known-field quantum segment loop and
/// stores every sampled homodyne outcome.
pub fn synthesize_experiment(cfg: &ScenarioConfig, seed: u64) -> Result<Experiment> {
    cfg.validate()?;
    let (truth_x, truth_p) = simulate_truth(cfg, seed)?;
    let steps = cfg.steps();
    let forward = dynamics::build_forward_matrices(cfg).without_classical()?;
    let stepper = SegmentStepper::new(&forward, pinv_mode(cfg));
    let channels: Vec<String> = forward.measured_labels();
    let mut streams: Vec<StreamRng> = channels.iter().map(|c| StreamRng::new(seed, c)).collect();

    let nq = stepper.system.len();
    let mut mean = DVector::zeros(nq);
    let mut cov = initial_quantum_cov(cfg);
    let epr = epr_indices(&stepper.system);
    let mut trace = EstimateTrace::with_labels(TraceKind::Conditional, &trace_labels(&stepper.system), steps + 1);
    trace.push(0.0, &mean, &cov, epr);

    let mut outcomes = Vec::with_capacity(steps * channels.len());
    let mut row = vec![0.0; channels.len()];
    for k in 0..steps {
        let fx = truth_x.as_ref().map_or(0.0, |t| t.values[k]);
        let fp = truth_p.as_ref().map_or(0.0, |t| t.values[k]);
        let drive = dynamics::build_known_field_drive(cfg, fx, fp);
        let (jm, jc) = stepper.interact(&mean, &cov, Some(&drive));
        let meas = stepper.measured();
        if cfg.exact_outcome_variance {
            let b = DMatrix::from_fn(meas.len(), meas.len(), |i, j| 0.5 * jc[(meas[i], meas[j])]);
            let chol = b.cholesky().ok_or_else(|| Error::Singular("outcome covariance".into()))?;
            let z = DVector::from_iterator(meas.len(), streams.iter_mut().map(|s| s.standard_normal()));
            let draw = chol.l() * z;
            for (j, &i) in meas.iter().enumerate() {
                row[j] = jm[i] + draw[j];
            }
        } else {
            for (j, &i) in meas.iter().enumerate() {
                row[j] = stochastic::sample_homodyne(jm[i], &mut streams[j]);
            }
        }
        let (m, c) = stepper.measure(&jm, &jc, &row)?;
        mean = m;
        cov = c;
        outcomes.extend_from_slice(&row);
        trace.push((k + 1) as f64 * cfg.dt, &mean, &cov, epr);
    }

    let record = DetectionRecord { dt: cfg.dt, channels, outcomes, seed, config_digest: cfg.digest() };
    for (label, tr) in [(F_X, &truth_x), (F_P, &truth_p)] {
        if let Some(tr) = tr {
            trace.truth.insert(label.to_owned(), tr.values.clone());
        }
    }
    Ok(Experiment { truth_x, truth_p, record, conditional: trace })
}

/// Forward filter whose per-step state (index `k` ↔ time `k·dt`) is handed to `observe`.
pub fn forward_filter_observed<F>(cfg: &ScenarioConfig, record: &DetectionRecord, mut observe: F) -> Result<EstimateTrace>
where
    F: FnMut(usize, &GaussianState),
{
    record.check_against(cfg)?;
    let stepper = SegmentStepper::new(&dynamics::build_forward_matrices(cfg), pinv_mode(cfg));
    let prior = prior_state(cfg)?;
    let layout = prior.layout().clone();
    let epr = epr_indices(&layout);
    let steps = cfg.steps();
    let mut trace = EstimateTrace::with_labels(TraceKind::Filtered, &trace_labels(&layout), steps + 1);
    let (_, mut mean, mut cov) = prior.into_parts();
    trace.push(0.0, &mean, &cov, epr);
    observe(0, &GaussianState::from_parts_unchecked(layout.clone(), mean.clone(), cov.clone()));
    for k in 0..steps {
        let (m, c) = stepper.step(&mean, &cov, record.row(k))?;
        mean = m;
        cov = c;
        trace.push((k + 1) as f64 * cfg.dt, &mean, &cov, epr);
        observe(k + 1, &GaussianState::from_parts_unchecked(layout.clone(), mean.clone(), cov.clone()));
    }
    Ok(trace)
}

/// Filtered estimate `ρ̃(t_k)` conditioned on outcomes before `t_k`.
pub fn forward_filter(cfg: &ScenarioConfig, record: &DetectionRecord) -> Result<EstimateTrace> {
    forward_filter_observed(cfg, record, |_, _| {})
}

/// Backward effect propagation; `observe(k, Ê(t_k))` is called from `k = N` down to 0.
pub fn backward_effect_observed<F>(cfg: &ScenarioConfig, record: &DetectionRecord, mut observe: F) -> Result<EstimateTrace>
where
    F: FnMut(usize, &GaussianState),
{
    record.check_against(cfg)?;
    let stepper = SegmentStepper::new(&dynamics::build_backward_matrices(cfg), pinv_mode(cfg));
    let init = GaussianState::uniform(stepper.system.clone(), cfg.v_effect_init)?;
    let layout = init.layout().clone();
    let epr = epr_indices(&layout);
    let steps = cfg.steps();
    let (_, mut mean, mut cov) = init.into_parts();

    let mut rev = EstimateTrace::with_labels(TraceKind::Effect, &trace_labels(&layout), steps + 1);
    rev.push(steps as f64 * cfg.dt, &mean, &cov, epr);
    observe(steps, &GaussianState::from_parts_unchecked(layout.clone(), mean.clone(), cov.clone()));
    let mut negated = vec![0.0; record.channels.len()];
    for k in (1..=steps).rev() {
        // In the reversed frame the segment quadrature reads −H·y + vacuum.
        for (n, q) in negated.iter_mut().zip(record.row(k - 1)) {
            *n = -q;
        }
        let (m, c) = stepper.step(&mean, &cov, &negated)?;
        mean = m;
        cov = c;
        rev.push((k - 1) as f64 * cfg.dt, &mean, &cov, epr);
        observe(k - 1, &GaussianState::from_parts_unchecked(layout.clone(), mean.clone(), cov.clone()));
    }

    rev.times.reverse();
    for col in &mut rev.columns {
        col.mean.reverse();
        col.var.reverse();
    }
    Ok(rev)
}

pub fn backward_effect(cfg: &ScenarioConfig, record: &DetectionRecord) -> Result<EstimateTrace> {
    backward_effect_observed(cfg, record, |_, _| {})
}

/// Filtered, effect and smoothed traces from one record.
#[derive(Debug, Clone)]
pub struct SmoothingOutput {
    pub filtered: EstimateTrace,
    pub effect: EstimateTrace,
    pub smoothed: EstimateTrace,
}

/// Past-quantum-state smoothing with per-step access to the smoothed state.
pub fn smooth_observed<F>(cfg: &ScenarioConfig, record: &DetectionRecord, mut observe: F) -> Result<SmoothingOutput>
where
    F: FnMut(usize, &GaussianState),
{
    let steps = cfg.steps();
    let mut effects: Vec<Option<(DVector<f64>, DMatrix<f64>)>> = vec![None; steps + 1];
    let effect = backward_effect_observed(cfg, record, |k, s| {
        effects[k] = Some((s.mean().clone(), s.cov().clone()));
    })?;

    let mut smoothed: Option<EstimateTrace> = None;
    let mut epr = None;
    let mut failure = None;
    let filtered = forward_filter_observed(cfg, record, |k, s| {
        if failure.is_some() {
            return;
        }
        let tr = smoothed.get_or_insert_with(|| {
            epr = epr_indices(s.layout());
            EstimateTrace::with_labels(TraceKind::Smoothed, &trace_labels(s.layout()), steps + 1)
        });
        let (me, ce) = effects[k].take().expect("effect state for every step");
        match gaussian::product_raw(s.mean(), s.cov(), &me, &ce) {
            Ok((m, c)) => {
                tr.push(k as f64 * cfg.dt, &m, &c, epr);
                observe(k, &GaussianState::from_parts_unchecked(s.layout().clone(), m, c));
            }
            Err(e) => failure = Some(e),
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(SmoothingOutput { filtered, effect, smoothed: smoothed.expect("at least one step") })
}

pub fn smooth(cfg: &ScenarioConfig, record: &DetectionRecord) -> Result<SmoothingOutput> {
    smooth_observed(cfg, record, |_, _| {})
}

/// Mean over grid points with `t1 ≤ t ≤ t2` of `(f(t) − ⟨f(t)⟩)²`.
pub fn mse(trace: &EstimateTrace, field: &str, truth: &OuTrajectory, t1: f64, t2: f64) -> Result<f64> {
    let est = trace.mean(field).ok_or_else(|| Error::UnknownLabel(field.to_owned()))?;
    if truth.values.len() != est.len() {
        return Err(Error::InvalidArgument(format!(
            "truth has {} samples, trace has {}",
            truth.values.len(),
            est.len()
        )));
    }
    if !(t1 < t2) {
        return Err(Error::EmptyWindow(format!("t1 = {t1} must be below t2 = {t2}")));
    }
    let eps = 1e-9 * trace.times.last().copied().unwrap_or(0.0).max(1e-300);
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, &t) in trace.times.iter().enumerate() {
        if t >= t1 - eps && t <= t2 + eps {
            sum += (truth.values[i] - est[i]).powi(2);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyWindow(format!("no samples in [{t1}, {t2}]")));
    }
    Ok(sum / n as f64)
}

/// Runs independent jobs on the worker pool, preserving input order.
pub fn batch_map<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    items.into_par_iter().map(f).collect()
}
