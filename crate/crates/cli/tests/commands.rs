use std::fs;
use std::path::Path;
use std::process::Command;

use ufatd_cli::commands;
use ufatd_cli::RunConfig;
use ufatd_core::io::{read_anchors, read_labels, DatasetIndex};
use ufatd_core::Error;

fn config(dir: &Path, extra: &[&str]) -> RunConfig {
    let d = dir.display();
    let mut sets: Vec<String> = vec![
        format!("paths.data=\"{d}/data\""),
        format!("paths.anchors=\"{d}/data/anchors.txt\""),
        format!("paths.checkpoint=\"{d}/runs/model.ckpt\""),
        format!("paths.out=\"{d}/runs\""),
        "data.train=24".into(),
        "data.val=6".into(),
        "data.test=6".into(),
        "train.epochs=2".into(),
        "train.batch_size=8".into(),
    ];
    sets.extend(extra.iter().map(|s| s.to_string()));
    RunConfig::load(None, &sets).unwrap()
}

fn ufatd(dir: &Path, args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_ufatd"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn gen_anchors_starts_at_observed_extremes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &[]);
    commands::synth(&cfg).unwrap();
    commands::gen_anchors(&cfg).unwrap();

    let idx = DatasetIndex::read(&dir.path().join("data/train.tsv"), 3).unwrap();
    let mut tops = Vec::new();
    for e in &idx.entries {
        let tracks = read_labels(&idx.label_path(e)).unwrap();
        let top = tracks
            .iter()
            .map(|t| t.vertices[0].y)
            .fold(f64::INFINITY, f64::min);
        tops.push(top);
    }
    let lo = tops.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = tops.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let set = read_anchors(&cfg.paths.anchors).unwrap();
    let starts = set.starts();
    assert_eq!(starts.len(), 3);
    assert_eq!(starts[0], lo);
    assert_eq!(starts[2], hi);
    assert_eq!(set.spec.h_anchor, 156.8);
    let other = read_anchors(&cfg.alternate_anchors_path()).unwrap();
    assert_eq!(other.starts(), starts);
    assert_ne!(other.groups[0].rows, set.groups[0].rows);
}

#[test]
fn eval_of_ground_truth_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &[]);
    commands::synth(&cfg).unwrap();
    commands::gen_anchors(&cfg).unwrap();

    let pred = commands::pred_dir(&cfg, "test");
    fs::create_dir_all(&pred).unwrap();
    for e in fs::read_dir(dir.path().join("data/labels")).unwrap() {
        let p = e.unwrap().path();
        if p.file_name()
            .unwrap()
            .to_string_lossy()
            .starts_with("test_")
        {
            fs::copy(&p, pred.join(p.file_name().unwrap())).unwrap();
        }
    }
    let report = commands::eval(&cfg).unwrap();
    assert_eq!(report.summary_line(), "mF1=1.0,F1@50=1.0,F1@75=1.0");
    assert_eq!(report.acc.acc, 1.0);
    assert_eq!(report.pi_acc, None);
    let summary = fs::read_to_string(dir.path().join("runs/eval_test.txt")).unwrap();
    assert!(summary.starts_with("mF1=1.0,F1@50=1.0,F1@75=1.0\n"));
    let csv = fs::read_to_string(dir.path().join("runs/eval_test.csv")).unwrap();
    assert_eq!(csv.lines().count(), 11);
    assert_eq!(csv.lines().nth(1), Some("0.50,1,1,1"));

    fs::remove_file(pred.join("test_00003.txt")).unwrap();
    let err = commands::eval(&cfg).unwrap_err();
    assert!(matches!(err, Error::Input(_)), "{err}");
    assert!(err.to_string().contains("test_00003.txt"));
}

#[test]
fn pipeline_artifacts_are_readable_downstream() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &[]);
    commands::synth(&cfg).unwrap();
    commands::gen_anchors(&cfg).unwrap();
    let encoded = commands::encode(&cfg).unwrap();
    let first = fs::read_to_string(&encoded[0]).unwrap();
    let mut lines = first.lines();
    assert_eq!(lines.next(), Some("# groups=3 rows=12 tracks=2 cells=40"));
    let row: Vec<&str> = lines.next().unwrap().split('\t').collect();
    assert_eq!(row[0], "labels/train_00000.txt");
    assert_eq!(row[2].split(' ').count(), 3 * 12 * 2);

    let outcome = commands::train(&cfg).unwrap();
    assert_eq!(outcome.log.len(), 2);
    let metrics = fs::read_to_string(dir.path().join("runs/metrics.csv")).unwrap();
    assert!(metrics.starts_with("epoch,l_hcl,l_pi,lambda,lr_backbone,val_f1_50,val_pi_acc\n"));
    assert_eq!(metrics.lines().count(), 3);

    let preds = commands::infer(&cfg).unwrap();
    assert_eq!(preds.len(), 6);
    let report = commands::eval(&cfg).unwrap();
    assert!(report.pi_acc.is_some());
    let bench = commands::bench(&cfg, 12).unwrap();
    assert_eq!(bench.latencies_ms.len(), 12);
    let figs = commands::viz(&cfg, 2).unwrap();
    assert_eq!(figs.len(), 3);

    // a checkpoint for a different head is refused with the differing field
    let other = config(dir.path(), &["model.feature_dim=64"]);
    let err = commands::infer(&other).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("feature_dim"), "{err}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(ufatd(p, &["eval", "--set", "model.depth=3"]).0, 2);
    assert_eq!(ufatd(p, &["eval", "--set", "train.epochs=-1"]).0, 2);
    assert_eq!(ufatd(p, &["frobnicate"]).0, 2);
    let (code, err) = ufatd(p, &["train"]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("gen-anchors"), "{err}");

    fs::create_dir_all(p.join("data")).unwrap();
    fs::write(p.join("data/anchors.txt"), "12 3 oops\n").unwrap();
    assert_eq!(ufatd(p, &["encode"]).0, 3);
    fs::write(p.join("bad.toml"), "seed = [").unwrap();
    assert_eq!(ufatd(p, &["synth", "--config", "bad.toml"]).0, 2);
    assert_eq!(ufatd(p, &["synth", "--config", "missing.toml"]).0, 5);
    assert_eq!(ufatd(p, &["--help"]).0, 0);
}
