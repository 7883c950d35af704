//! Drives the built binary through each subcommand.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use seaterra::eval::{read_perplexity_csv, read_timeline_csv};
use seaterra::rost::load_checkpoint;

const MISSION: &str = "
seed = 4
cae.arch = test
cae.epochs = 4
synth.segments = stripes:6,checker:6
synth.anomalies = 3:bright
vocab.size = 8
run.budget = 3
";

fn seaterra(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seaterra"))
        .current_dir(dir)
        .env("SEATERRA_THREADS", "1")
        .args(args)
        .output()
        .unwrap()
}

fn mission(dir: &Path) -> String {
    let path = dir.join("mission.conf");
    fs::write(&path, MISSION).unwrap();
    path.display().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn synth_writes_frames_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = mission(dir.path());
    let o = seaterra(dir.path(), &["--config", &cfg, "--out", "a", "synth"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("12 frames"));
    let pngs = fs::read_dir(dir.path().join("a/data"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "png"))
        .count();
    assert_eq!(pngs, 12);
    let labels = fs::read_to_string(dir.path().join("a/data/labels.csv")).unwrap();
    assert_eq!(labels.lines().count(), 13);

    assert!(seaterra(dir.path(), &["--config", &cfg, "--out", "b", "synth"]).status.success());
    for name in ["labels.csv", "frame_00000.png", "frame_00003.png", "frame_00011.png"] {
        assert_eq!(
            fs::read(dir.path().join("a/data").join(name)).unwrap(),
            fs::read(dir.path().join("b/data").join(name)).unwrap()
        );
    }
}

#[test]
fn usage_and_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(seaterra(dir.path(), &["synth"]).status.code(), Some(2));
    assert_eq!(seaterra(dir.path(), &["--set", "rost.zeta=1", "run"]).status.code(), Some(2));
    assert_eq!(seaterra(dir.path(), &["--features", "sift", "run"]).status.code(), Some(2));
    assert_eq!(seaterra(dir.path(), &["frobnicate"]).status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_seaterra"))
        .current_dir(dir.path())
        .env("SEATERRA_THREADS", "zero")
        .arg("run")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_inputs_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = mission(dir.path());
    let o = seaterra(dir.path(), &["--config", &cfg, "run"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(seaterra(dir.path(), &["--config", &cfg, "synth"]).status.success());
    let o = seaterra(dir.path(), &["--config", &cfg, "--features", "cae", "run"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("cae.bin"), "{}", stderr(&o));
}

#[test]
fn corrupt_frame_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = mission(dir.path());
    assert!(seaterra(dir.path(), &["--config", &cfg, "synth"]).status.success());
    fs::write(dir.path().join("out/data/frame_00004.png"), b"not a png").unwrap();
    let o = seaterra(dir.path(), &["--config", &cfg, "train-cae"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("frame_00004.png"), "{}", stderr(&o));
}

#[test]
fn baseline_stages_run_without_an_autoencoder() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = mission(dir.path());
    let base = ["--config", cfg.as_str(), "--features", "baseline"];
    for stage in ["synth", "fit-vocab", "run", "eval"] {
        let o = seaterra(dir.path(), &[&base[..], &[stage]].concat());
        assert!(o.status.success(), "{stage}: {}", stderr(&o));
    }
    let out = dir.path().join("out");
    assert!(!out.join("cae.bin").exists());
    let run = out.join("baseline");
    let model = load_checkpoint(&run.join("model.rost")).unwrap();
    let timeline = read_timeline_csv(&run.join("timeline.csv")).unwrap();
    let expected_rows: usize = model
        .times()
        .iter()
        .map(|&t| model.topic_proportions(t).unwrap().len())
        .sum();
    assert_eq!(timeline.len(), expected_rows);
    assert_eq!(read_perplexity_csv(&run.join("perplexity.csv")).unwrap().len(), 12);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["K_discovered"].as_u64().unwrap() as usize, model.num_topics());
    assert!(report["nmi_terrain"].is_number());
    assert!(fs::read_to_string(run.join("timeline.svg")).unwrap().starts_with("<svg"));

    let first = fs::read(run.join("report.json")).unwrap();
    assert!(seaterra(dir.path(), &[&base[..], &["run"]].concat()).status.success());
    assert!(seaterra(dir.path(), &[&base[..], &["eval"]].concat()).status.success());
    assert_eq!(first, fs::read(run.join("report.json")).unwrap());
}

#[test]
fn misaligned_annotations_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = mission(dir.path());
    let base = ["--config", cfg.as_str(), "--features", "baseline"];
    for stage in ["synth", "run"] {
        assert!(seaterra(dir.path(), &[&base[..], &[stage]].concat()).status.success());
    }
    let labels = fs::read_to_string(dir.path().join("out/data/labels.csv")).unwrap();
    let short: Vec<&str> = labels.lines().take(8).collect();
    fs::write(dir.path().join("short.csv"), short.join("\n") + "\n").unwrap();
    let o = seaterra(dir.path(), &[&base[..], &["--set", "data.labels=short.csv", "eval"]].concat());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn full_report_trains_and_evaluates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = mission(dir.path());
    let o = seaterra(dir.path(), &["--config", &cfg, "--set", "cae.epochs=30", "--budget", "2", "report"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("nmi_terrain"));
    let loss = fs::read_to_string(dir.path().join("out/loss.csv")).unwrap();
    let values: Vec<f64> = loss.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(values.len(), 30);
    assert!(values.last().unwrap() < values.first().unwrap());
    let report = fs::read_to_string(dir.path().join("out/cae/report.json")).unwrap();
    assert!(report.contains("nmi_interest_reconstruction"));
}
