use std::fs;

use baetrack_core::io::{self, Decimation, PlotStyle, Spacing};
use baetrack_core::pipeline::{forward_filter, synthesize_experiment};
use baetrack_core::presets::preset;
use baetrack_core::runner::{self, OutputKind, RunManifest};
use baetrack_core::{Error, ScenarioConfig};

fn short(name: &str, duration: f64) -> ScenarioConfig {
    let mut cfg = preset(name).unwrap();
    cfg.dt = 1e-5;
    cfg.duration = duration;
    cfg
}

#[test]
fn binary_and_csv_records_round_trip_bit_exactly() {
    let cfg = short("fig5d", 5e-3);
    let e = synthesize_experiment(&cfg, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for name in ["r.bin", "r.csv"] {
        let p = dir.path().join(name);
        io::save_record(&p, &e.record).unwrap();
        let back = io::load_record(&p).unwrap();
        assert_eq!(back.channels, e.record.channels);
        assert_eq!(back.seed, e.record.seed);
        assert_eq!(back.config_digest, e.record.config_digest);
        assert_eq!(back.dt.to_bits(), e.record.dt.to_bits());
        assert!(back.outcomes.iter().zip(&e.record.outcomes).all(|(a, b)| a.to_bits() == b.to_bits()));
        let a = forward_filter(&cfg, &e.record).unwrap();
        let b = runner::replay(&cfg, &p, false).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn binary_header_layout() {
    let cfg = short("fig4b", 1e-4);
    let e = synthesize_experiment(&cfg, 1).unwrap();
    let mut buf = Vec::new();
    io::write_record_binary(&e.record, &mut buf).unwrap();
    assert_eq!(&buf[..16], &io::RECORD_MAGIC);
    assert_eq!(u32::from_le_bytes(buf[16..20].try_into().unwrap()), io::RECORD_VERSION);
    let tail = &buf[buf.len() - 8..];
    assert_eq!(f64::from_le_bytes(tail.try_into().unwrap()).to_bits(), e.record.outcomes.last().unwrap().to_bits());
    buf.truncate(buf.len() - 3);
    assert!(matches!(io::read_record_binary(&buf[..]), Err(Error::Format(_))));
}

#[test]
fn replay_refuses_foreign_digest_unless_forced() {
    let cfg = short("fig4b", 1e-3);
    let e = synthesize_experiment(&cfg, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("r.bin");
    io::save_record(&p, &e.record).unwrap();
    let mut other = cfg.clone();
    other.prior_var_fx = 0.07;
    assert!(matches!(runner::replay(&other, &p, false), Err(Error::RecordMismatch(_))));
    assert!(runner::replay(&other, &p, true).is_ok());
    let mut longer = cfg.clone();
    longer.duration = 2e-3;
    assert!(runner::replay(&longer, &p, true).is_err());
}

#[test]
fn trace_exports_round_trip() {
    let cfg = short("fig5d", 2e-3);
    let e = synthesize_experiment(&cfg, 9).unwrap();
    let mut tr = forward_filter(&cfg, &e.record).unwrap();
    tr.attach_truth(&e);
    let mut csv = Vec::new();
    io::write_trace_csv(&tr, &mut csv).unwrap();
    assert_eq!(io::read_trace_csv(&csv[..]).unwrap(), tr);
    let mut json = Vec::new();
    io::write_trace_json(&tr, &mut json).unwrap();
    assert_eq!(io::read_trace_json(&json[..]).unwrap(), tr);
}

#[test]
fn plot_files_respect_row_cap() {
    let cfg = short("fig4a", 0.2);
    let e = synthesize_experiment(&cfg, 2).unwrap();
    let mut tr = forward_filter(&cfg, &e.record).unwrap();
    tr.attach_truth(&e);
    assert_eq!(tr.len(), 20_001);
    for spacing in [Spacing::Linear, Spacing::Log] {
        let policy = Decimation { spacing, ..Decimation::default() };
        for style in [PlotStyle::LoglogVariance, PlotStyle::BandEstimate] {
            let mut out = Vec::new();
            let rows = io::emit_plot_data(&tr, &["f_x", "f_p"], style, &policy, &mut out).unwrap();
            assert!(rows <= 10_000);
            assert_eq!(String::from_utf8(out).unwrap().lines().count(), rows + 1);
        }
    }
    let mut out = Vec::new();
    io::emit_plot_data(&tr, &["f_p"], PlotStyle::LoglogVariance, &Decimation::default(), &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let row: Vec<f64> = text.lines().nth(1).unwrap().split(',').map(|s| s.parse().unwrap()).collect();
    // Reference lines are anchored on the first plotted sample.
    assert_eq!(row[1], row[2]);
    assert_eq!(row[1], row[3]);
}

#[test]
fn fig4a_manifest_writes_field_table_and_fit() {
    let mut cfg = preset("fig4a").unwrap();
    cfg.dt = 1e-5;
    cfg.duration = 0.05;
    let m = RunManifest::new(cfg, 4, vec![OutputKind::Filtered, OutputKind::Smoothed, OutputKind::Truth, OutputKind::Oracles]);
    let dir = tempfile::tempdir().unwrap();
    let report = runner::run(&m, dir.path()).unwrap();
    for c in &report.checks {
        println!("{} {} {:e}", c.name, c.passed, c.value);
    }
    assert!(report.passed());
    let text = fs::read_to_string(dir.path().join("fields.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t,var_fx,var_fp,mean_fx,mean_fp,true_fx,true_fp");
    let fit = report.fits.iter().find(|f| f.label == "f_p").unwrap();
    assert!((fit.slope + 3.0).abs() < 0.2, "{}", fit.slope);
    let back = RunManifest::from_json(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(back, m);
    assert!(dir.path().join("report.json").exists());
    assert!(dir.path().join("plot_loglog_filtered.csv").exists());
}

#[test]
fn tampered_manifest_is_rejected() {
    let mut cfg = short("fig2d", 1e-3);
    cfg.seed = 1;
    let mut m = RunManifest::new(cfg, 1, vec![OutputKind::Filtered]);
    m.config_digest = "0".repeat(64);
    assert!(runner::run(&m, tempfile::tempdir().unwrap().path()).is_err());
}
