use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use simdreg::bench::{GemvReport, RtfReport};
use simdreg::heatmap::{decode_pgm, misaligned_zero_runs};
use simdreg::train::read_trace;
use simdreg::Checkpoint;

const SMALL: &str = r#"{
  "model": {"cond_dim": 12, "fc1_units": 16, "hidden": 32, "fc2_units": 16},
  "data": {"train_sequences": 16, "valid_sequences": 4, "segment_steps": 8},
  "schedule": {"target_density": 0.3, "ramp_start": 40, "ramp_length": 80, "recompute_interval": 10},
  "learning_rate": 0.003,
  "total_steps": 160,
  "batch_size": 2,
  "log_interval": 20
}"#;

fn simdreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_simdreg"))
        .args(args)
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn train_small(
    dir: &Path,
    config: &str,
    tag: &str,
) -> (Output, std::path::PathBuf, std::path::PathBuf) {
    let cfg = dir.join(format!("{tag}.json"));
    let ck = dir.join(format!("{tag}.ckpt.json"));
    let trace = dir.join(format!("{tag}.csv"));
    fs::write(&cfg, config).unwrap();
    let out = simdreg(&[
        "train",
        "--config",
        s(&cfg),
        "--checkpoint",
        s(&ck),
        "--trace",
        s(&trace),
        "--quiet",
    ]);
    (out, ck, trace)
}

#[test]
fn train_writes_checkpoint_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let (out, ck, trace) = train_small(dir.path(), SMALL, "a");
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let header = fs::read_to_string(&trace).unwrap();
    assert!(header.starts_with("step,nll,reg,total,sparsity\n"));
    let rows = read_trace(&trace).unwrap();
    assert_eq!(rows.len(), 8);
    assert!(rows.windows(2).all(|w| w[0].step < w[1].step));
    assert!(rows
        .iter()
        .all(|r| r.nll.is_finite() && r.reg.is_finite() && r.total.is_finite()));
    assert!((rows.last().unwrap().sparsity - 0.7).abs() < 0.05);

    let bytes = fs::read_to_string(&ck).unwrap();
    let loaded = Checkpoint::load(&ck).unwrap();
    assert_eq!(loaded.step, 160);
    assert_eq!(loaded.to_json().unwrap(), bytes);
}

#[test]
fn same_seed_gives_identical_traces() {
    let dir = tempfile::tempdir().unwrap();
    let (_, _, t1) = train_small(dir.path(), SMALL, "x");
    let (_, _, t2) = train_small(dir.path(), SMALL, "y");
    assert_eq!(fs::read(t1).unwrap(), fs::read(t2).unwrap());
}

#[test]
fn unpruned_run_has_zero_sparsity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SMALL.replace(
        r#""schedule": {"target_density": 0.3, "ramp_start": 40, "ramp_length": 80, "recompute_interval": 10}"#,
        r#""schedule": null, "lambda": 0.0, "regularizer": "none""#,
    );
    let (out, _, trace) = train_small(dir.path(), &cfg, "b");
    assert!(out.status.success());
    assert!(read_trace(&trace)
        .unwrap()
        .iter()
        .all(|r| r.sparsity == 0.0));
}

#[test]
fn malformed_config_names_field_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let (out, _, _) = train_small(dir.path(), r#"{"model": {"hiden": 3}}"#, "bad");
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("hiden"), "{err}");
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(simdreg(&["train"]).status.code(), Some(1));
    assert_eq!(
        simdreg(&["bench-gemv", "--sizes", "100", "--reps", "30"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        simdreg(&["bench-gemv", "--sizes", "64", "--reps", "5"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(simdreg(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(simdreg(&["--help"]).status.code(), Some(0));
}

#[test]
fn bad_checkpoint_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{}").unwrap();
    let out = simdreg(&["bench-rtf", "--checkpoint", s(&bad), "--seconds", "0.1"]);
    assert_eq!(out.status.code(), Some(2));
    let missing = dir.path().join("missing.json");
    let out = simdreg(&[
        "heatmap",
        "--checkpoint",
        s(&missing),
        "--out",
        s(&dir.path().join("h.pgm")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn heatmap_export_is_group_aligned() {
    let dir = tempfile::tempdir().unwrap();
    let (_, ck, _) = train_small(dir.path(), SMALL, "h");
    let pgm = dir.path().join("fc1.pgm");
    let out = simdreg(&[
        "heatmap",
        "--checkpoint",
        s(&ck),
        "--layer",
        "gru.w_r",
        "--out",
        s(&pgm),
        "--seed",
        "3",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (w, h, px) = decode_pgm(&fs::read(&pgm).unwrap()).unwrap();
    assert_eq!((w, h), (16, 32));
    let values: Vec<f32> = fs::read_to_string(pgm.with_extension("csv"))
        .unwrap()
        .lines()
        .flat_map(|l| {
            l.split(',')
                .map(|v| v.parse::<f32>().unwrap())
                .collect::<Vec<_>>()
        })
        .collect();
    assert_eq!(values.len(), w * h);
    assert!(misaligned_zero_runs(&values, w, 16).is_empty());
    assert!(values.iter().zip(&px).all(|(v, p)| *v != 0.0 || *p == 0));
    assert_eq!(px.iter().filter(|&&p| p == 255).count(), 1);

    let out = simdreg(&[
        "heatmap",
        "--checkpoint",
        s(&ck),
        "--layer",
        "fc7",
        "--out",
        s(&pgm),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_commands_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("gemv.json");
    let out = simdreg(&[
        "bench-gemv",
        "--sizes",
        "64",
        "--sparsity",
        "0,0.7",
        "--reps",
        "30",
        "--out",
        s(&json),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: GemvReport = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report.records.len(), 6);
    assert!(report.records.iter().all(|r| r.time_ns.reps == 30));
    assert!(!report.machine.is_empty());

    let (_, ck, _) = train_small(dir.path(), SMALL, "r");
    let json = dir.path().join("rtf.json");
    let out = simdreg(&[
        "bench-rtf",
        "--checkpoint",
        s(&ck),
        "--seconds",
        "0.05",
        "--reps",
        "30",
        "--out",
        s(&json),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: RtfReport = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report.records.len(), 2);
    for r in &report.records {
        assert!((r.rtf - r.t_inference.median / report.t_data).abs() <= 1e-12 * r.rtf);
        assert_eq!(r.t_inference.reps, 30);
    }
    assert!((report.t_data - 0.05).abs() < 1e-3);
}
