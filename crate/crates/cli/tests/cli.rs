//! Black-box tests of the installed binary: exit codes, file artifacts,
//! and the synth -> train -> eval -> predict pipeline.

use pfanet_core::data::load_depth_png;
use pfanet_core::model::PfanetConfig;
use pfanet_core::train::TrainConfig;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pfanet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pfanet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn tiny_config(out_dir: &Path, data_root: &Path) -> String {
    let mut cfg = TrainConfig::default();
    cfg.model = PfanetConfig::gradcheck_tiny();
    cfg.model.seed = cfg.seed;
    cfg.data_root = Some(data_root.to_path_buf());
    cfg.split = "train.txt".into();
    cfg.augment_enabled = false;
    cfg.epochs = 1;
    cfg.batch_size = 2;
    cfg.out_dir = out_dir.to_path_buf();
    cfg.to_text()
}

#[test]
fn usage_and_config_errors_exit_1() {
    assert_eq!(pfanet(&["--help"]).status.code(), Some(0));
    assert_eq!(pfanet(&["bogus"]).status.code(), Some(1));
    assert_eq!(pfanet(&["train"]).status.code(), Some(1), "missing --config");

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.txt");
    fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let out = pfanet(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("unknown key"));
}

#[test]
fn synth_train_eval_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("scene.txt");
    fs::write(&spec, "seed = 5\nheight = 64\nwidth = 64\n").unwrap();
    let data = dir.path().join("data");

    let out = pfanet(&[
        "synth",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        data.to_str().unwrap(),
        "--count",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let split = fs::read_to_string(data.join("train.txt")).unwrap();
    let ids: Vec<&str> = split.lines().collect();
    assert_eq!(ids.len(), 2);
    for id in &ids {
        assert!(data.join("rgb").join(format!("{id}.png")).is_file());
        assert!(data.join("depth").join(format!("{id}.png")).is_file());
    }

    let run_dir = dir.path().join("run");
    let cfg_path = dir.path().join("train.cfg");
    fs::write(&cfg_path, tiny_config(&run_dir, &data)).unwrap();
    let out = pfanet(&["train", "--config", cfg_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let ckpt = run_dir.join("final.pfat");
    assert!(ckpt.is_file());
    let log = fs::read_to_string(run_dir.join("train.csv")).unwrap();
    assert!(log.starts_with("step,lr,L_d,L_g,total\n"));
    assert_eq!(log.lines().count(), 2, "header plus one step");

    let dumps = dir.path().join("dumps");
    let metrics = dir.path().join("metrics.csv");
    let out = pfanet(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--split",
        "train.txt",
        "--dump-depth",
        dumps.to_str().unwrap(),
        "--out",
        metrics.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let table = stdout_of(&out);
    assert!(table.contains("AbsRel"), "table header missing: {table}");
    assert!(table.contains("aggregate"), "aggregate row missing: {table}");
    let csv = fs::read_to_string(&metrics).unwrap();
    assert_eq!(csv.lines().count(), 4, "header, two samples, aggregate");
    assert!(csv.lines().last().unwrap().starts_with("aggregate,"));
    for id in &ids {
        assert!(dumps.join(format!("{id}.png")).is_file());
        assert!(dumps.join(format!("{id}_color.png")).is_file());
    }

    let pred = dir.path().join("pred.png");
    let out = pfanet(&[
        "predict",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--image",
        data.join("rgb").join(format!("{}.png", ids[0])).to_str().unwrap(),
        "--out",
        pred.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let (depth, h, w) = load_depth_png(&pred).unwrap();
    assert_eq!((h, w), (64, 64));
    assert!(depth.iter().all(|d| d.is_finite()));
}

#[test]
fn numeric_explosion_exits_2_and_saves_state() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let mut cfg = TrainConfig::default();
    cfg.model = PfanetConfig::gradcheck_tiny();
    cfg.model.seed = cfg.seed;
    cfg.synth_count = 2;
    cfg.synth.height = 64;
    cfg.synth.width = 64;
    cfg.augment_enabled = false;
    cfg.epochs = 5;
    cfg.batch_size = 2;
    cfg.lr = 1e15;
    cfg.out_dir = run_dir.clone();
    let cfg_path = dir.path().join("explode.cfg");
    fs::write(&cfg_path, cfg.to_text()).unwrap();

    let out = pfanet(&["train", "--config", cfg_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr_of(&out));
    assert!(stderr_of(&out).contains("state saved"));
    assert!(run_dir.join("emergency.pfat").is_file());
}

#[test]
fn gradcheck_reports_and_respects_tolerance() {
    let out = pfanet(&["gradcheck", "--tol", "1e-12"]);
    assert_eq!(out.status.code(), Some(2), "an impossible tolerance fails");
    assert!(stdout_of(&out).contains("FAIL"));
    assert!(stderr_of(&out).contains("exceeded tolerance"));
}
