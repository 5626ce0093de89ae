//! Manifest-driven runs: synthesize, estimate, verify and write artifacts.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::dynamics::{F_P, F_X};
use crate::error::{Error, Result};
use crate::fit::loglog_slope;
use crate::gaussian::check_covariance;
use crate::io::{self, Decimation, PlotStyle};
use crate::oracles::{integrate_riccati_series, kalman_oracle, RiccatiMethod, RiccatiSystem};
use crate::pipeline::{self, EstimateTrace, Experiment};

/// Kalman-vs-pipeline deviation allowed in a run.
pub const KALMAN_TOLERANCE: f64 = 1e-9;
/// Floor of the relative agreement between filtered variances and the Riccati integration.
pub const RICCATI_TOLERANCE: f64 = 0.01;
pub const HEISENBERG_EPS: f64 = 1e-6;
/// Samples compared against the Riccati integration.
const RICCATI_SAMPLES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputKind {
    Filtered,
    Smoothed,
    Effect,
    Truth,
    Oracles,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ScenarioConfig,
    pub seed: u64,
    pub outputs: Vec<OutputKind>,
    #[serde(default)]
    pub format: ExportFormat,
    #[serde(default)]
    pub decimation: Decimation,
    /// Content digest of `config`, checked when the manifest is loaded back.
    pub config_digest: String,
}

impl RunManifest {
    pub fn new(config: ScenarioConfig, seed: u64, outputs: Vec<OutputKind>) -> Self {
        let config_digest = config.digest();
        Self { config, seed, outputs, format: ExportFormat::Csv, decimation: Decimation::default(), config_digest }
    }

    pub fn wants(&self, kind: OutputKind) -> bool {
        self.outputs.contains(&kind)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        if m.config.digest() != m.config_digest {
            return Err(Error::Config("manifest digest does not match its config".into()));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Worst observed deviation (or violation count) behind the verdict.
    pub value: f64,
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl CheckResult {
    fn below(name: &str, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), passed: value < threshold, value, threshold, detail: String::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub trace: String,
    pub label: String,
    pub slope: f64,
    /// `Var ≈ prefactor · t^slope`.
    pub prefactor: f64,
    pub t_start: f64,
    pub t_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub config_digest: String,
    pub checks: Vec<CheckResult>,
    pub fits: Vec<FitSummary>,
    /// Scalar diagnostics such as `mse_filtered_f_x`.
    pub metrics: BTreeMap<String, f64>,
    /// Per-time relative deviations of the Kalman comparison (decimated).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub kalman_deviation: Vec<(f64, f64)>,
    pub artifacts: Vec<PathBuf>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn active_fields(cfg: &ScenarioConfig) -> Vec<&'static str> {
    let mut v = Vec::new();
    if cfg.active_fx {
        v.push(F_X);
    }
    if cfg.active_fp {
        v.push(F_P);
    }
    v
}

/// Variance-ordering violations: smoothed must not exceed either factor.
fn dominance_violations(smoothed: &EstimateTrace, filtered: &EstimateTrace, effect: &EstimateTrace) -> usize {
    let mut bad = 0;
    for c in &smoothed.columns {
        let (Some(f), Some(e)) = (filtered.var(&c.label), effect.var(&c.label)) else { continue };
        for i in 0..c.var.len() {
            let bound = f[i].min(e[i]);
            if c.var[i] > bound * (1.0 + 1e-9) + 1e-15 {
                bad += 1;
            }
        }
    }
    bad
}

/// Filtered and Kalman traces compared per time; returns worst deviation and a decimated profile.
fn kalman_comparison(a: &EstimateTrace, b: &EstimateTrace, policy: &Decimation) -> (f64, Vec<(f64, f64)>) {
    let mut per_time = vec![0.0f64; a.len()];
    for label in a.labels() {
        let (Some(va), Some(vb), Some(ma), Some(mb)) = (a.var(label), b.var(label), a.mean(label), b.mean(label)) else {
            continue;
        };
        let rms = (mb.iter().map(|v| v * v).sum::<f64>() / mb.len().max(1) as f64).sqrt();
        for i in 0..a.len() {
            let dv = if va[i] == vb[i] { 0.0 } else { (va[i] - vb[i]).abs() / vb[i].abs() };
            let dm = if ma[i] == mb[i] { 0.0 } else { (ma[i] - mb[i]).abs() / mb[i].abs().max(rms) };
            per_time[i] = per_time[i].max(dv).max(dm);
        }
    }
    let worst = per_time.iter().copied().fold(0.0, f64::max);
    let profile = policy.indices(a.len()).into_iter().map(|i| (a.times[i], per_time[i])).collect();
    (worst, profile)
}

/// Worst relative difference between filtered variances and `A/2` from the Riccati equation.
pub fn riccati_deviation(cfg: &ScenarioConfig, filtered: &EstimateTrace) -> Result<f64> {
    let sys = RiccatiSystem::from_config(cfg)?;
    let idx = Decimation { spacing: io::Spacing::Linear, max_rows: RICCATI_SAMPLES, full_resolution: false }.indices(filtered.len());
    let times: Vec<f64> = idx.iter().map(|&i| filtered.times[i]).collect();
    let series = integrate_riccati_series(&sys, &times, RiccatiMethod::NonlinearRk, cfg.dt)?;
    let n = sys.a0.nrows();
    let mut worst = 0.0f64;
    for (a, &i) in series.iter().zip(&idx) {
        for (j, col) in filtered.columns.iter().take(n).enumerate() {
            let r = 0.5 * a[(j, j)];
            worst = worst.max((col.var[i] - r).abs() / r);
        }
    }
    Ok(worst)
}

/// The discrete filter differs from the continuous equation at first order
/// in the per-step measurement strength `κ²·dt`.
pub fn riccati_tolerance(cfg: &ScenarioConfig) -> f64 {
    let k2 = [cfg.kappa11, cfg.kappa21, cfg.kappa12, cfg.kappa22].iter().map(|k| k * k).fold(0.0, f64::max);
    RICCATI_TOLERANCE.max(2.0 * k2 * cfg.dt)
}

/// Table of the classical estimates: `t, var_fx, var_fp, mean_fx, mean_fp, true_fx, true_fp`
/// (pairs for inactive fields are omitted).
pub fn write_field_table(trace: &EstimateTrace, experiment: &Experiment, policy: &Decimation, path: &Path) -> Result<()> {
    use std::io::Write;
    let fields: Vec<(&str, &str)> =
        [(F_X, "fx"), (F_P, "fp")].into_iter().filter(|(f, _)| trace.column(f).is_some()).collect();
    io::write_to_path(path, |f| {
        let mut w = std::io::BufWriter::new(f);
        write!(w, "t")?;
        for prefix in ["var", "mean", "true"] {
            for (_, short) in &fields {
                write!(w, ",{prefix}_{short}")?;
            }
        }
        writeln!(w)?;
        for i in policy.indices(trace.len()) {
            write!(w, "{:?}", trace.times[i])?;
            for (f, _) in &fields {
                write!(w, ",{:?}", trace.var(f).expect("column")[i])?;
            }
            for (f, _) in &fields {
                write!(w, ",{:?}", trace.mean(f).expect("column")[i])?;
            }
            for (f, _) in &fields {
                let v = experiment.truth(f).map_or(f64::NAN, |t| t.values[i]);
                write!(w, ",{v:?}")?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    })
}

fn write_trace(trace: &EstimateTrace, name: &str, m: &RunManifest, dir: &Path, artifacts: &mut Vec<PathBuf>) -> Result<()> {
    let dec = io::decimate(trace, &m.decimation);
    let path = match m.format {
        ExportFormat::Csv => dir.join(format!("{name}.csv")),
        ExportFormat::Json => dir.join(format!("{name}.json")),
    };
    io::write_to_path(&path, |f| match m.format {
        ExportFormat::Csv => io::write_trace_csv(&dec, f),
        ExportFormat::Json => io::write_trace_json(&dec, f),
    })?;
    artifacts.push(path);
    Ok(())
}

fn write_plots(trace: &EstimateTrace, name: &str, fields: &[&str], m: &RunManifest, dir: &Path, artifacts: &mut Vec<PathBuf>) -> Result<()> {
    if fields.is_empty() {
        return Ok(());
    }
    for (style, tag) in [(PlotStyle::LoglogVariance, "loglog"), (PlotStyle::BandEstimate, "band")] {
        let path = dir.join(format!("plot_{tag}_{name}.csv"));
        io::write_to_path(&path, |f| io::emit_plot_data(trace, fields, style, &m.decimation, f).map(|_| ()))?;
        artifacts.push(path);
    }
    Ok(())
}

/// Executes `manifest`, writing everything below `out_dir`.
///
/// Errors are reserved for invalid input and I/O; failed checks are reported
/// in the returned [`RunReport`].
pub fn run(manifest: &RunManifest, out_dir: &Path) -> Result<RunReport> {
    let cfg = &manifest.config;
    if cfg.digest() != manifest.config_digest {
        return Err(Error::Config("manifest digest does not match its config".into()));
    }
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let mut artifacts = Vec::new();
    let mut checks = Vec::new();
    let mut fits = Vec::new();
    let mut metrics = BTreeMap::new();
    let mut kalman_profile = Vec::new();

    let manifest_path = out_dir.join("manifest.json");
    io::write_to_path(&manifest_path, |f| Ok(serde_json::to_writer_pretty(f, manifest)?))?;
    artifacts.push(manifest_path);

    let experiment = pipeline::synthesize_experiment(cfg, manifest.seed)?;
    let record_path = out_dir.join("record.bin");
    io::save_record(&record_path, &experiment.record)?;
    artifacts.push(record_path);
    let fields = active_fields(cfg);

    if manifest.wants(OutputKind::Truth) {
        let truth = &experiment.conditional;
        write_trace(truth, "conditional", manifest, out_dir, &mut artifacts)?;
        let path = out_dir.join("truth.csv");
        io::write_to_path(&path, |f| {
            use std::io::Write;
            let mut w = std::io::BufWriter::new(f);
            write!(w, "t")?;
            for k in truth.truth.keys() {
                write!(w, ",true_{k}")?;
            }
            writeln!(w)?;
            for i in manifest.decimation.indices(truth.times.len()) {
                write!(w, "{:?}", truth.times[i])?;
                for v in truth.truth.values() {
                    write!(w, ",{:?}", v[i])?;
                }
                writeln!(w)?;
            }
            w.flush()?;
            Ok(())
        })?;
        artifacts.push(path);
    }

    let need_smoothing = manifest.wants(OutputKind::Smoothed) || manifest.wants(OutputKind::Effect);
    let need_filter = need_smoothing || manifest.wants(OutputKind::Filtered) || manifest.wants(OutputKind::Oracles);
    if need_filter {
        let mut invariant_failures: Vec<String> = Vec::new();
        let mut smoothed_failures: Vec<String> = Vec::new();
        let (mut filtered, smoothing) = if need_smoothing {
            let out = pipeline::smooth_observed(cfg, &experiment.record, |k, s| {
                if let Err(e) = check_covariance(s.cov()) {
                    smoothed_failures.push(format!("smoothed step {k}: {e}"));
                }
            })?;
            // Second pass over the filtered states for the physical-state checks.
            pipeline::forward_filter_observed(cfg, &experiment.record, |k, s| {
                if let Err(e) = s.check_invariants(HEISENBERG_EPS) {
                    invariant_failures.push(format!("filtered step {k}: {e}"));
                }
            })?;
            (out.filtered.clone(), Some(out))
        } else {
            let tr = pipeline::forward_filter_observed(cfg, &experiment.record, |k, s| {
                if let Err(e) = s.check_invariants(HEISENBERG_EPS) {
                    invariant_failures.push(format!("filtered step {k}: {e}"));
                }
            })?;
            (tr, None)
        };
        let mut c = CheckResult::below("filtered_state_invariants", invariant_failures.len() as f64, 0.5);
        c.detail = invariant_failures.first().cloned().unwrap_or_default();
        checks.push(c);

        filtered.attach_truth(&experiment);
        for f in &fields {
            if cfg.gamma_of(f) == 0.0 && cfg.sigma_of(f) == 0.0 {
                let t_end = cfg.duration;
                if let Ok(fit) = loglog_slope(&filtered.times, filtered.var(f).expect("field column"), t_end / 10.0, t_end) {
                    fits.push(FitSummary {
                        trace: "filtered".into(),
                        label: (*f).into(),
                        slope: fit.slope,
                        prefactor: fit.intercept.exp(),
                        t_start: fit.t_start,
                        t_end: fit.t_end,
                    });
                }
            }
        }

        if manifest.wants(OutputKind::Filtered) {
            write_trace(&filtered, "filtered", manifest, out_dir, &mut artifacts)?;
            if !fields.is_empty() {
                let path = out_dir.join("fields.csv");
                write_field_table(&filtered, &experiment, &manifest.decimation, &path)?;
                artifacts.push(path);
            }
            write_plots(&filtered, "filtered", &fields, manifest, out_dir, &mut artifacts)?;
        }

        if let Some(mut out) = smoothing {
            let mut c = CheckResult::below("smoothed_state_covariances", smoothed_failures.len() as f64, 0.5);
            c.detail = smoothed_failures.first().cloned().unwrap_or_default();
            checks.push(c);
            let bad = dominance_violations(&out.smoothed, &out.filtered, &out.effect);
            checks.push(CheckResult::below("smoothing_variance_dominance", bad as f64, 0.5));
            out.smoothed.attach_truth(&experiment);
            let t1 = 0.01f64.min(0.5 * cfg.duration);
            for f in &fields {
                if let Some(truth) = experiment.truth(f) {
                    let a = pipeline::mse(&filtered, f, truth, t1, cfg.duration)?;
                    let b = pipeline::mse(&out.smoothed, f, truth, t1, cfg.duration)?;
                    metrics.insert(format!("mse_filtered_{f}"), a);
                    metrics.insert(format!("mse_smoothed_{f}"), b);
                }
            }
            if manifest.wants(OutputKind::Smoothed) {
                write_trace(&out.smoothed, "smoothed", manifest, out_dir, &mut artifacts)?;
                write_plots(&out.smoothed, "smoothed", &fields, manifest, out_dir, &mut artifacts)?;
            }
            if manifest.wants(OutputKind::Effect) {
                write_trace(&out.effect, "effect", manifest, out_dir, &mut artifacts)?;
            }
        }

        if manifest.wants(OutputKind::Oracles) {
            let k = kalman_oracle(cfg, &experiment.record)?;
            let (worst, profile) = kalman_comparison(&filtered, &k, &manifest.decimation);
            checks.push(CheckResult::below("kalman_equivalence", worst, KALMAN_TOLERANCE));
            kalman_profile = profile;
            let r = riccati_deviation(cfg, &filtered)?;
            checks.push(CheckResult::below("riccati_agreement", r, riccati_tolerance(cfg)));
            let replayed = pipeline::forward_filter(cfg, &io::load_record(&out_dir.join("record.bin"))?)?;
            let same = replayed.columns == filtered.columns && replayed.times == filtered.times;
            checks.push(CheckResult::below("replay_bit_exact", if same { 0.0 } else { 1.0 }, 0.5));
        }
    }

    let report = RunReport {
        seed: manifest.seed,
        config_digest: manifest.config_digest.clone(),
        checks,
        fits,
        metrics,
        kalman_deviation: kalman_profile,
        artifacts: artifacts.clone(),
    };
    let report_path = out_dir.join("report.json");
    io::write_to_path(&report_path, |f| Ok(serde_json::to_writer_pretty(f, &report)?))?;
    let mut report = report;
    report.artifacts.push(report_path);
    Ok(report)
}

/// Filters a persisted record under `cfg`; refuses a digest mismatch unless `force`.
pub fn replay(cfg: &ScenarioConfig, record_path: &Path, force: bool) -> Result<EstimateTrace> {
    let record = io::load_record(record_path)?;
    io::check_replay(cfg, &record, force)?;
    pipeline::forward_filter(cfg, &record)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub seeds: Vec<u64>,
    pub all_passed: bool,
    /// Mean filter MSE, mean smoothed MSE and their ratio per field.
    pub mse: BTreeMap<String, (f64, f64, f64)>,
}

/// Runs `template` once per seed on the worker pool, each in its own
/// `seed_<n>` directory, and aggregates the MSE ratios.
pub fn sweep(template: &RunManifest, seeds: &[u64], out_dir: &Path) -> Result<SweepReport> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one seed".into()));
    }
    let reports: Vec<RunReport> = seeds
        .par_iter()
        .map(|&s| {
            let m = RunManifest { seed: s, ..template.clone() };
            run(&m, &out_dir.join(format!("seed_{s}")))
        })
        .collect::<Result<_>>()?;
    let mut mse = BTreeMap::new();
    for f in active_fields(&template.config) {
        let pick = |key: String| reports.iter().filter_map(|r| r.metrics.get(&key).copied()).collect::<Vec<_>>();
        let a = pick(format!("mse_filtered_{f}"));
        let b = pick(format!("mse_smoothed_{f}"));
        if !a.is_empty() && a.len() == b.len() {
            let ma = a.iter().sum::<f64>() / a.len() as f64;
            let mb = b.iter().sum::<f64>() / b.len() as f64;
            mse.insert(f.to_owned(), (ma, mb, ma / mb));
        }
    }
    let report = SweepReport { seeds: seeds.to_vec(), all_passed: reports.iter().all(RunReport::passed), mse };
    serde_json::to_writer_pretty(File::create(out_dir.join("sweep.json"))?, &report)?;
    Ok(report)
}
