use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn baetrack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_baetrack")).args(args).output().expect("binary runs")
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn simulate_then_replay_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let (sim, rep, rec) = (dir.path().join("sim"), dir.path().join("rep"), dir.path().join("r.csv"));
    let common = ["--preset", "fig5d", "--dt", "1e-6", "--duration", "0.002", "--seed", "12"];
    let o = baetrack(&[&["simulate"][..], &common, &["--out", p(&sim), "--record", p(&rec)]].concat());
    assert!(o.status.success(), "{}", text(&o));
    assert!(sim.join("record.bin").exists() && rec.exists());

    let o = baetrack(&[&["filter"][..], &common, &["--out", p(&sim), "--record", p(&rec)]].concat());
    assert!(o.status.success(), "{}", text(&o));
    let o = baetrack(&[&["replay"][..], &common, &["--out", p(&rep), "--record", p(&sim.join("record.bin"))]].concat());
    assert!(o.status.success(), "{}", text(&o));
    let expect = sim.join("filtered.csv");
    let o = baetrack(
        &[&["replay"][..], &common, &["--out", p(&rep), "--record", p(&rec), "--expect", p(&expect)]].concat(),
    );
    assert!(o.status.success(), "{}", text(&o));
    assert!(text(&o).contains("PASS replayed trace"));
}

#[test]
fn replay_refuses_other_config_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let rec = dir.path().join("r.bin");
    let base = ["--preset", "fig4b", "--dt", "1e-5", "--duration", "0.001"];
    let o = baetrack(&[&["simulate"][..], &base, &["--out", p(dir.path()), "--record", p(&rec)]].concat());
    assert!(o.status.success(), "{}", text(&o));
    let other = ["--preset", "fig4b", "--dt", "1e-5", "--duration", "0.001", "--seed", "99"];
    let o = baetrack(&[&["replay"][..], &other, &["--out", p(dir.path()), "--record", p(&rec)]].concat());
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
    assert!(text(&o).contains("digest"));
    let o = baetrack(&[&["replay"][..], &other, &["--out", p(dir.path()), "--record", p(&rec), "--force"]].concat());
    assert!(o.status.success(), "{}", text(&o));
}

#[test]
fn oracle_check_reports_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = baetrack(&["oracle-check", "--preset", "fig4a", "--dt", "1e-6", "--duration", "0.01", "--out", p(dir.path())]);
    let t = text(&o);
    assert!(o.status.success(), "{t}");
    assert!(t.contains("PASS kalman_equivalence") && t.contains("PASS riccati_agreement"));
    let report: serde_like::Report = serde_like::parse(&fs::read_to_string(dir.path().join("report.json")).unwrap());
    assert!(report.has_checks);
}

#[test]
fn smooth_writes_all_traces_and_config_file_works() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.toml");
    fs::write(&cfg, "omega1 = 0.0\nomega2 = 0.0\nT = 0.002\ndt = 1e-5\nseed = 3\n").unwrap();
    let o = baetrack(&["smooth", "--config", p(&cfg), "--out", p(dir.path()), "--format", "json"]);
    assert!(o.status.success(), "{}", text(&o));
    for f in ["filtered.json", "smoothed.json", "effect.json", "truth.csv", "fields.csv", "report.json", "manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn sweep_aggregates_mse() {
    let dir = tempfile::tempdir().unwrap();
    let o = baetrack(&["sweep", "--preset", "fig6", "--duration", "0.02", "--seeds", "3", "--out", p(dir.path())]);
    let t = text(&o);
    assert!(o.status.success(), "{t}");
    assert!(t.contains("f_x: mean MSE filtered"));
    assert!(dir.path().join("sweep.json").exists());
    assert!(dir.path().join("seed_2").join("report.json").exists());
}

#[test]
fn bad_input_is_an_error() {
    assert_eq!(baetrack(&["filter", "--preset", "fig9"]).status.code(), Some(2));
    assert_eq!(baetrack(&["filter", "--dt", "-1"]).status.code(), Some(2));
    assert!(!baetrack(&["frobnicate"]).status.success());
}

/// Minimal structural probe of the JSON report without a JSON dependency.
mod serde_like {
    pub struct Report {
        pub has_checks: bool,
    }

    pub fn parse(s: &str) -> Report {
        Report { has_checks: s.contains("\"checks\"") && s.contains("\"kalman_equivalence\"") }
    }
}
