use std::fs;
use std::path::{Path, PathBuf};

use dsm_core::cli::{read_log, run, EXIT_FAILURE, EXIT_OK, EXIT_USAGE, LOG_HEADER};

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn dsm(args: &[&str]) -> i32 {
    run(std::iter::once("dsm").chain(args.iter().copied()))
}

fn generate(root: &Path, name: &str, buildings: u32, days: u32, seed: u64) -> PathBuf {
    let dir = root.join(name);
    let code = dsm(&[
        "generate",
        "--buildings",
        &buildings.to_string(),
        "--days",
        &days.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        s(&dir),
    ]);
    assert_eq!(code, EXIT_OK);
    dir
}

/// Small networks and frequent updates so training finishes in seconds.
fn tiny_config(root: &Path) -> PathBuf {
    let path = root.join("run.toml");
    fs::write(
        &path,
        "[sac]\nminibatch = 16\nhidden = 8\nupdate_interval_steps = 24\ngradient_updates_per_interval = 4\nwarmup_random_steps = 24\nbuffer_capacity = 5000\n\
         [sac_eval]\nminibatch = 16\nhidden = 8\nupdate_interval_steps = 24\ngradient_updates_per_interval = 4\n",
    )
    .unwrap();
    path
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn generate_writes_nine_buildings_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let a = generate(tmp.path(), "a", 9, 365, 1);
    let b = generate(tmp.path(), "b", 9, 365, 1);
    let files = read_dir_bytes(&a);
    assert_eq!(files.len(), 11);
    assert!(files.iter().any(|(n, _)| n == "building_9.csv"));
    assert_eq!(files, read_dir_bytes(&b));
}

#[test]
fn invalid_arguments_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("x");
    assert_eq!(dsm(&["generate", "--buildings", "2", "--days", "0", "--seed", "1", "--out", s(&out)]), EXIT_USAGE);
    assert_eq!(dsm(&["generate", "--buildings", "0", "--days", "2", "--seed", "1", "--out", s(&out)]), EXIT_USAGE);
    assert_eq!(dsm(&["frobnicate"]), EXIT_USAGE);
    assert_eq!(dsm(&["baseline", "--seed", "1", "--out", s(&out), "--data", s(&tmp.path().join("nope"))]), EXIT_USAGE);
    assert!(!out.exists());
}

#[test]
fn broken_dataset_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let data = generate(tmp.path(), "d", 2, 2, 1);
    fs::remove_file(data.join("weather.csv")).unwrap();
    let out = tmp.path().join("out");
    assert_eq!(dsm(&["baseline", "--seed", "1", "--out", s(&out), "--data", s(&data)]), EXIT_FAILURE);
}

#[test]
fn baseline_reports_and_traces() {
    let tmp = tempfile::tempdir().unwrap();
    let data = generate(tmp.path(), "d", 3, 7, 2);
    let before = read_dir_bytes(&data);
    let out = tmp.path().join("out");
    assert_eq!(dsm(&["baseline", "--seed", "5", "--out", s(&out), "--data", s(&data), "--random"]), EXIT_OK);
    assert_eq!(before, read_dir_bytes(&data), "input dataset was modified");

    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines[0], "agent,ramping,1-load_factor,avg_daily_peak,peak_demand,net_consumption,avg_score");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("noop,"));
    assert_eq!(lines[2], "rbc,1.000,1.000,1.000,1.000,1.000,1.000");
    assert!(lines[3].starts_with("random,"));
    for agent in ["noop", "rbc", "random"] {
        let trace = fs::read_to_string(out.join(agent).join("trace.csv")).unwrap();
        assert_eq!(trace.lines().count(), 1 + 7 * 24, "{agent}");
    }
}

#[test]
fn train_resume_and_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let data = generate(tmp.path(), "d", 2, 4, 3);
    let config = tiny_config(tmp.path());
    let out = tmp.path().join("run");
    let train = |out: &Path, episodes: &str, extra: &[&str]| {
        let mut args = vec!["train", "--config", s(&config), "--seed", "9", "--out", s(out), "--data", s(&data), "--episodes", episodes];
        args.extend_from_slice(extra);
        dsm(&args)
    };
    assert_eq!(train(&out, "3", &[]), EXIT_OK);
    let log = fs::read_to_string(out.join("log.csv")).unwrap();
    assert_eq!(log.lines().next().unwrap(), LOG_HEADER);
    assert_eq!(read_log(&out.join("log.csv")).unwrap().len(), 3);
    for svg in ["reward.svg", "cost.svg", "profile.svg"] {
        assert!(fs::read_to_string(out.join(svg)).unwrap().starts_with("<svg"), "{svg}");
    }
    assert!(out.join("checkpoint/meta.toml").is_file());

    // identical invocation, identical bytes
    let again = tmp.path().join("again");
    assert_eq!(train(&again, "3", &[]), EXIT_OK);
    assert_eq!(read_dir_bytes(&out), read_dir_bytes(&again));

    // resume two more episodes
    assert_eq!(train(&out, "5", &["--resume"]), EXIT_OK);
    let rows = read_log(&out.join("log.csv")).unwrap();
    assert_eq!(rows.iter().map(|r| r.0).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5]);

    // evaluate on two zones, in parallel
    let zone_b = generate(tmp.path(), "z2", 2, 4, 4);
    let eval = tmp.path().join("eval");
    let code = dsm(&[
        "evaluate", "--config", s(&config), "--seed", "1", "--out", s(&eval),
        "--checkpoint", s(&out.join("checkpoint")), "--data", s(&data), "--data", s(&zone_b),
    ]);
    assert_eq!(code, EXIT_OK);
    let table = fs::read_to_string(eval.join("scores.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("dataset,ramping,"));
    assert!(lines[3].starts_with("Avg. Score,"));

    // a district with a different layout is rejected
    let wrong = generate(tmp.path(), "wrong", 4, 4, 4);
    let code = dsm(&[
        "evaluate", "--config", s(&config), "--seed", "1", "--out", s(&tmp.path().join("e2")),
        "--checkpoint", s(&out.join("checkpoint")), "--data", s(&wrong),
    ]);
    assert_eq!(code, EXIT_FAILURE);
}

#[test]
fn evaluate_rbc_is_all_ones() {
    let tmp = tempfile::tempdir().unwrap();
    let zones: Vec<PathBuf> = (1..=4).map(|z| generate(tmp.path(), &format!("z{z}"), 2, 3, z)).collect();
    let out = tmp.path().join("eval");
    let mut args = vec!["evaluate", "--rbc", "--seed", "1", "--out", s(&out)];
    for z in &zones {
        args.extend(["--data", s(z)]);
    }
    assert_eq!(dsm(&args), EXIT_OK);
    let table = fs::read_to_string(out.join("scores.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 6);
    for line in &lines[1..] {
        assert!(line.ends_with(",1.000,1.000,1.000,1.000,1.000,1.000"), "{line}");
    }
}

#[test]
fn missing_checkpoint_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let data = generate(tmp.path(), "d", 2, 2, 1);
    let code = dsm(&[
        "evaluate", "--seed", "1", "--out", s(&tmp.path().join("e")),
        "--checkpoint", s(&tmp.path().join("missing")), "--data", s(&data),
    ]);
    assert_eq!(code, EXIT_USAGE);
}
