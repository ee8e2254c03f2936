use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use orbit_prestore::harness::commands::verify_manifest;
use orbit_prestore::harness::studies::{self, RunTable, Study};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_orbit-prestore"))
        .args(args)
        .env_remove("RUST_BACKTRACE")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = bin(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn unknown_subcommand_fails() {
    assert!(!bin(&["launch"]).status.success());
}

#[test]
fn invalid_config_names_the_constraint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "[train]\ngamma = 1.5\n").unwrap();
    let out = bin(&["gen-graph", "--config", p(&cfg), "--out", p(&dir.path().join("o"))]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("(0, 1]"), "{err}");
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn unwritable_output_fails() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("occupied");
    fs::write(&file, "x").unwrap();
    let out = bin(&["gen-graph", "--preset", "tiny", "--out", p(&file.join("sub"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn generators_write_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g");
    let r = dir.path().join("r");
    ok(&["gen-graph", "--preset", "desk", "--out", p(&g)]);
    ok(&["gen-requests", "--preset", "desk", "--seed", "4", "--out", p(&r)]);
    let m = verify_manifest(&g).unwrap();
    assert!(m.artifacts.contains(&"graph.csn".to_string()));
    let m = verify_manifest(&r).unwrap();
    assert!(m.artifacts.contains(&"requests.req".to_string()));
    assert!(m.seeds.contains(&("master".to_string(), 4)));
}

#[test]
fn zero_epochs_keeps_the_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["train", "vdac", "--preset", "tiny", "--epochs", "3", "--out", p(&a)]);
    ok(&["train", "iac", "--preset", "tiny", "--epochs", "0", "--init", p(&a.join("checkpoint")), "--out", p(&b)]);
    for f in ["file000_policy.net", "file000_value.net", "file001_policy.net", "file001_value.net"] {
        let before = fs::read(a.join("checkpoint").join(f)).unwrap();
        let after = fs::read(b.join("checkpoint").join(f)).unwrap();
        assert_eq!(before, after, "{f}");
    }
    verify_manifest(&b).unwrap();
}

#[test]
fn training_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let runs: Vec<_> = (0..2).map(|i| dir.path().join(format!("run{i}"))).collect();
    for r in &runs {
        ok(&["train", "vdac", "--preset", "tiny", "--seed", "9", "--epochs", "40", "--out", p(r)]);
    }
    for f in ["metrics.csv", "trace.csv", "checkpoint/file001_policy.net", "manifest.txt"] {
        assert_eq!(fs::read(runs[0].join(f)).unwrap(), fs::read(runs[1].join(f)).unwrap(), "{f}");
    }
}

#[test]
fn eval_reads_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t");
    let e = dir.path().join("e");
    ok(&["train", "iac", "--preset", "tiny", "--epochs", "5", "--out", p(&t)]);
    ok(&["eval", "--preset", "tiny", "--checkpoint", p(&t.join("checkpoint")), "--out", p(&e)]);
    let text = fs::read_to_string(e.join("eval.csv")).unwrap();
    assert!(text.starts_with("episodes,mean_hits,std_hits,greedy_hits\n"));
    assert!(!bin(&["eval", "--preset", "tiny", "--checkpoint", p(dir.path()), "--out", p(&e)]).status.success());
}

#[test]
fn grad_check_passes_on_default_dims() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&["grad-check", "--out", p(dir.path())]);
    assert!(stdout.contains("max relative error"));
    let text = fs::read_to_string(dir.path().join("gradcheck.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 100);
    for r in rows {
        let err: f64 = r.rsplit(',').next().unwrap().parse().unwrap();
        assert!(err < 1e-4, "{r}");
    }
}

#[test]
fn compare_summary_matches_raw_runs() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["compare", "--study", "vd-vs-iac", "--preset", "tiny", "--seeds", "3", "--epochs", "20", "--out", p(dir.path())]);
    let runs = RunTable::parse(&fs::read_to_string(dir.path().join("runs.csv")).unwrap()).unwrap();
    assert_eq!(runs.rows.len(), 3);
    let expected = studies::summary_csv(&studies::summarize_table(Study::VdVsIac, &runs));
    assert_eq!(fs::read_to_string(dir.path().join("summary.csv")).unwrap(), expected);
    verify_manifest(dir.path()).unwrap();
}

#[test]
fn compare_rejects_a_single_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["compare", "--study", "vd-vs-iac", "--preset", "tiny", "--seeds", "1", "--out", p(dir.path())]);
    assert!(!out.status.success());
}
