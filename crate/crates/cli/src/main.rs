//! `baetrack` — simulate, filter, smooth and verify monitored-oscillator scenarios.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use baetrack_core::io::{self, Decimation};
use baetrack_core::pipeline::{self, EstimateTrace};
use baetrack_core::presets::{preset, PRESET_NAMES};
use baetrack_core::runner::{self, ExportFormat, OutputKind, RunManifest, RunReport};
use baetrack_core::{Error, ScenarioConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "baetrack", version, about = "Gaussian filtering and smoothing of perturbations on monitored oscillators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a detection record together with the true perturbations.
    Simulate(Common),
    /// Forward filter a synthesized or persisted record.
    Filter(Common),
    /// Filter, backward effect and smoothed estimates.
    Smooth(Common),
    /// Run the Kalman, Riccati and replay checks; exits nonzero on failure.
    OracleCheck(Common),
    /// Filter and smooth over many seeds and aggregate the MSE ratios.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Number of consecutive seeds starting at --seed.
        #[arg(long, default_value_t = 20)]
        seeds: u64,
    },
    /// Re-filter a persisted record; refuses a foreign config digest unless --force.
    Replay {
        #[command(flatten)]
        common: Common,
        /// Previously exported filtered trace to compare against bit for bit.
        #[arg(long)]
        expect: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct Common {
    /// Flat TOML scenario document.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Named scenario (fig2a … fig6).
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Detection record to read (filter, smooth, replay) or write (simulate).
    #[arg(long)]
    record: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Export every step instead of at most 10⁴ rows.
    #[arg(long)]
    full_resolution: bool,
    /// Accept a record whose config digest does not match.
    #[arg(long)]
    force: bool,
}

impl Common {
    fn scenario(&self) -> Result<ScenarioConfig, Error> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => ScenarioConfig::from_path(path)?,
            (None, Some(name)) => preset(name).map_err(|e| match e {
                Error::UnknownPreset(n) => Error::UnknownPreset(format!("{n} (known: {})", PRESET_NAMES.join(", "))),
                e => e,
            })?,
            (None, None) => ScenarioConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(dt) = self.dt {
            cfg.dt = dt;
        }
        if let Some(t) = self.duration {
            cfg.duration = t;
        }
        for w in cfg.validate()? {
            eprintln!("warning: {w}");
        }
        Ok(cfg)
    }

    fn manifest(&self, cfg: ScenarioConfig, outputs: Vec<OutputKind>) -> RunManifest {
        let seed = cfg.seed;
        let mut m = RunManifest::new(cfg, seed, outputs);
        m.format = match self.format {
            Format::Csv => ExportFormat::Csv,
            Format::Json => ExportFormat::Json,
        };
        if self.full_resolution {
            m.decimation = Decimation::full();
        }
        m
    }
}

fn print_report(r: &RunReport) {
    for c in &r.checks {
        let verdict = if c.passed { "PASS" } else { "FAIL" };
        println!("{verdict} {}: {:.3e} (threshold {:.1e}) {}", c.name, c.value, c.threshold, c.detail);
    }
    for f in &r.fits {
        println!("fit {} {}: slope {:.4}, prefactor {:.4e} over [{:.3e}, {:.3e}] s", f.trace, f.label, f.slope, f.prefactor, f.t_start, f.t_end);
    }
    for (k, v) in &r.metrics {
        println!("{k} = {v:.6e}");
    }
}

fn export(trace: &EstimateTrace, name: &str, m: &RunManifest, dir: &Path) -> Result<PathBuf, Error> {
    let dec = io::decimate(trace, &m.decimation);
    let path = dir.join(match m.format {
        ExportFormat::Csv => format!("{name}.csv"),
        ExportFormat::Json => format!("{name}.json"),
    });
    io::write_to_path(&path, |f| match m.format {
        ExportFormat::Csv => io::write_trace_csv(&dec, f),
        ExportFormat::Json => io::write_trace_json(&dec, f),
    })?;
    Ok(path)
}

fn read_trace(path: &Path) -> Result<EstimateTrace, Error> {
    let f = std::fs::File::open(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => io::read_trace_json(f),
        _ => io::read_trace_csv(f),
    }
}

fn run_manifest(m: &RunManifest, out: &Path) -> Result<bool, Error> {
    let report = runner::run(m, out)?;
    print_report(&report);
    println!("artifacts in {}", out.display());
    Ok(report.passed())
}

/// Filtering or smoothing of an existing record.
fn estimate_from_record(c: &Common, record: &Path, smooth: bool) -> Result<bool, Error> {
    let cfg = c.scenario()?;
    let rec = io::load_record(record)?;
    io::check_replay(&cfg, &rec, c.force)?;
    let m = c.manifest(cfg, vec![]);
    let cfg = &m.config;
    if smooth {
        let out = pipeline::smooth(cfg, &rec)?;
        for (t, name) in [(&out.filtered, "filtered"), (&out.effect, "effect"), (&out.smoothed, "smoothed")] {
            println!("wrote {}", export(t, name, &m, &c.out)?.display());
        }
    } else {
        let tr = pipeline::forward_filter(cfg, &rec)?;
        println!("wrote {}", export(&tr, "filtered", &m, &c.out)?.display());
    }
    Ok(true)
}

fn execute(cli: Cli) -> Result<bool, Error> {
    match cli.command {
        Command::Simulate(c) => {
            let cfg = c.scenario()?;
            let m = c.manifest(cfg, vec![OutputKind::Truth]);
            let ok = run_manifest(&m, &c.out)?;
            if let Some(path) = &c.record {
                let rec = io::load_record(&c.out.join("record.bin"))?;
                io::save_record(path, &rec)?;
                println!("record written to {}", path.display());
            }
            Ok(ok)
        }
        Command::Filter(c) => match &c.record {
            Some(r) => estimate_from_record(&c, r, false),
            None => {
                let m = c.manifest(c.scenario()?, vec![OutputKind::Filtered, OutputKind::Truth]);
                run_manifest(&m, &c.out)
            }
        },
        Command::Smooth(c) => match &c.record {
            Some(r) => estimate_from_record(&c, r, true),
            None => {
                let m = c.manifest(
                    c.scenario()?,
                    vec![OutputKind::Filtered, OutputKind::Smoothed, OutputKind::Effect, OutputKind::Truth],
                );
                run_manifest(&m, &c.out)
            }
        },
        Command::OracleCheck(c) => {
            let m = c.manifest(c.scenario()?, vec![OutputKind::Filtered, OutputKind::Oracles]);
            run_manifest(&m, &c.out)
        }
        Command::Sweep { common, seeds } => {
            if seeds == 0 {
                return Err(Error::InvalidArgument("--seeds must be at least 1".into()));
            }
            let cfg = common.scenario()?;
            let first = cfg.seed;
            let m = common.manifest(cfg, vec![OutputKind::Smoothed]);
            let list: Vec<u64> = (0..seeds).map(|k| first.wrapping_add(k)).collect();
            let report = runner::sweep(&m, &list, &common.out)?;
            for (field, (f, s, ratio)) in &report.mse {
                println!("{field}: mean MSE filtered {f:.4e}, smoothed {s:.4e}, ratio {ratio:.3}");
            }
            println!("{} runs, all checks passed: {}", report.seeds.len(), report.all_passed);
            Ok(report.all_passed)
        }
        Command::Replay { common, expect } => {
            let path = common.record.clone().ok_or_else(|| Error::InvalidArgument("replay needs --record".into()))?;
            let cfg = common.scenario()?;
            let trace = runner::replay(&cfg, &path, common.force)?;
            let m = common.manifest(cfg, vec![]);
            println!("wrote {}", export(&trace, "filtered", &m, &common.out)?.display());
            match expect {
                Some(e) => {
                    let (old, new) = (read_trace(&e)?, io::decimate(&trace, &m.decimation));
                    // Exported traces may carry the truth columns; the estimates must match bit for bit.
                    let same = old.times == new.times && old.columns == new.columns;
                    println!("{} replayed trace vs {}", if same { "PASS" } else { "FAIL" }, e.display());
                    Ok(same)
                }
                None => Ok(true),
            }
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
