use std::path::Path;
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rmda::data::{write_idx_images, write_idx_labels, IdxImages};
use rmda::harness::{compare_logs, presets, read_log, run_experiment, run_seeds, LogLine, RunOptions};

fn rmda(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rmda")).args(args).env_remove("RMDA_DATA_DIR").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Tiny random stand-in for the MNIST files.
fn write_fake_mnist(dir: &Path, count: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for (images, labels) in [
        ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
        ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
    ] {
        let pixels = (0..count * 784).map(|_| rng.random::<u8>()).collect();
        let y: Vec<u8> = (0..count).map(|_| rng.random_range(0..10)).collect();
        std::fs::write(dir.join(images), write_idx_images(&IdxImages { count, rows: 28, cols: 28, pixels })).unwrap();
        std::fs::write(dir.join(labels), write_idx_labels(&y)).unwrap();
    }
}

#[test]
fn run_writes_a_log_with_overrides_in_the_header() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("run.jsonl");
    let o = rmda(&["run", "preset:synthetic-logreg", "--seed", "3", "--out", log.to_str().unwrap(), "--set", "epochs=20", "--set", "optimizer.restart_epochs=[10]"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lines = read_log(&log).unwrap();
    let LogLine::Header { config, overrides, .. } = &lines[0] else { panic!("no header") };
    assert_eq!(config.seed, 3);
    assert_eq!(config.epochs, 20);
    assert!(overrides.iter().any(|o| o == "seed=3"));
    assert_eq!(lines.iter().filter(|l| matches!(l, LogLine::Epoch(_))).count(), 20);
    assert!(matches!(lines.last(), Some(LogLine::Summary(_))));
}

#[test]
fn presets_run_their_seed_list_by_default() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("run.jsonl");
    let o = rmda(&["run", "preset:synthetic-logreg", "--out", log.to_str().unwrap(), "--set", "epochs=2"]);
    assert!(!o.status.success(), "restart epochs beyond the horizon are rejected");
    let o = rmda(&[
        "run",
        "preset:synthetic-logreg",
        "--out",
        log.to_str().unwrap(),
        "--set",
        "epochs=2",
        "--set",
        "optimizer.restart_epochs=[]",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().count(), 3);
    for seed in 0..3 {
        let lines = read_log(dir.path().join(format!("run.seed{seed}.jsonl"))).unwrap();
        let LogLine::Header { config, .. } = &lines[0] else { panic!("no header") };
        assert_eq!(config.seed, seed);
    }
    assert!(!log.exists());
    let twice = rmda(&["run", "preset:synthetic-logreg", "--seeds", "1", "1"]);
    assert_eq!(twice.status.code(), Some(2));
}

#[test]
fn errors_map_to_categorized_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, presets::source("synthetic-logreg").unwrap().replace("epochs = 200", "epochs = 0")).unwrap();
    assert_eq!(rmda(&["run", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(rmda(&["run", "preset:no-such-preset"]).status.code(), Some(2));

    let missing = rmda(&["run", "preset:mnist-logreg", "--data-dir", dir.path().to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(3));

    // beta * eta overflows on the second step
    let diverging = rmda(&["run", "preset:synthetic-logreg", "--set", "optimizer.eta={kind=\"constant\", value=1e308}"]);
    assert_eq!(diverging.status.code(), Some(4), "{}", String::from_utf8_lossy(&diverging.stderr));
}

#[test]
fn compare_reports_each_log() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.jsonl");
    let mut config = presets::load("synthetic-logreg").unwrap();
    config.epochs = 5;
    config.optimizer.restart_epochs = vec![];
    config.output = Some(good.clone());
    run_experiment(&config).unwrap();
    let broken = dir.path().join("broken.jsonl");
    std::fs::write(&broken, "{\"type\":\"epoch\"}\n").unwrap();

    let rows = compare_logs(&[good.clone(), broken.clone(), dir.path().join("missing.jsonl")]);
    assert!(rows[0].outcome.is_ok());
    assert!(rows[1].outcome.is_err() && rows[2].outcome.is_err());

    let o = rmda(&["compare", good.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("synthetic-logreg"));
    assert_eq!(rmda(&["compare", good.to_str().unwrap(), broken.to_str().unwrap()]).status.code(), Some(3));

    let empty = rmda(&["compare"]);
    assert!(empty.status.success());
    assert_eq!(stdout(&empty).lines().count(), 1);
}

#[test]
fn logs_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = presets::load("synthetic-logreg").unwrap();
    config.epochs = 30;
    config.optimizer.restart_epochs = vec![10, 20];
    config.output = Some(dir.path().join("par.jsonl"));
    for r in run_seeds(&config, &[0, 1, 2], &RunOptions::default()) {
        r.unwrap();
    }
    for seed in [0, 1, 2] {
        let mut c = config.clone();
        c.seed = seed;
        c.output = Some(dir.path().join(format!("seq{seed}.jsonl")));
        run_experiment(&c).unwrap();
        let par = std::fs::read(dir.path().join(format!("par.seed{seed}.jsonl"))).unwrap();
        let seq = std::fs::read(dir.path().join(format!("seq{seed}.jsonl"))).unwrap();
        assert_eq!(par, seq, "seed {seed}");
    }
}

#[test]
fn validate_schedule_checks_each_round() {
    let o = rmda(&["validate-schedule", "preset:synthetic-logreg"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("schedule: PASS"));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("growing.toml");
    let text = presets::source("synthetic-logreg-proxsgd").unwrap().replace(
        "[optimizer.eta]\nkind = \"multi_step\"\nbase = 0.1\nfactor = 0.1\nperiod = 50",
        "[optimizer.eta]\nkind = \"exponential\"\nbase = 0.1\nrate = 0.05",
    );
    std::fs::write(&cfg, text).unwrap();
    let o = rmda(&["validate-schedule", cfg.to_str().unwrap(), "--steps-per-epoch", "10"]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("schedule: FAIL"));
}

#[test]
fn gen_data_emits_the_training_split() {
    let o = rmda(&["gen-data", "preset:synthetic-logreg"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["in_dim"], 50);
    assert_eq!(v["labels"].as_array().unwrap().len(), 1000);
    let zeros = v["truth_zero_groups"].as_array().unwrap().iter().filter(|z| z.as_bool() == Some(true)).count();
    assert_eq!(zeros, 5);
}

#[test]
fn presets_are_listed_and_printed() {
    let o = rmda(&["preset"]);
    assert!(stdout(&o).lines().any(|l| l == "mnist-logreg"));
    let o = rmda(&["preset", "mnist-logreg"]);
    assert!(stdout(&o).contains("restart_epochs = [50, 100, 150, 200]"));
}

#[test]
fn mnist_pipeline_runs_on_idx_files_from_the_data_dir() {
    let dir = tempfile::tempdir().unwrap();
    write_fake_mnist(dir.path(), 64);
    let log = dir.path().join("mnist.jsonl");
    let o = Command::new(env!("CARGO_BIN_EXE_rmda"))
        .args(["run", "preset:mnist-logreg", "--seed", "0", "--out", log.to_str().unwrap()])
        .args(["--set", "epochs=3", "--set", "optimizer.restart_epochs=[1]"])
        .env("RMDA_DATA_DIR", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lines = read_log(&log).unwrap();
    let LogLine::Header { data_dir, .. } = &lines[0] else { panic!("no header") };
    assert_eq!(data_dir.as_deref(), Some(dir.path()));
    let LogLine::Summary(s) = lines.last().unwrap() else { panic!("no summary") };
    assert_eq!(s.param_count, 7850);
    assert_eq!(s.steps, 3);
}
