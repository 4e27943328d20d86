use std::path::Path;
use std::process::{Command, Output};

fn edrs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edrs"))
        .args(args)
        .env_remove("EDRS_OUT")
        .output()
        .expect("binary runs")
}

fn quick(out: &Path) -> Vec<String> {
    [
        "evolve", "--patients", "9", "--folds", "3", "--generations", "2", "--epochs", "1",
        "--bench-samples", "0", "--out",
    ]
    .iter()
    .map(|s| s.to_string())
    .chain([out.display().to_string()])
    .collect()
}

fn run_ok(args: &[String]) {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = edrs(&refs);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    for args in [
        vec!["evolve", "--retain", "1.5", "--out", &out],
        vec!["frobnicate"],
        vec!["evolve", "--no-such-flag"],
        vec!["evolve", "--generations", "0", "--out", &out],
    ] {
        let o = edrs(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn component_errors_exit_one_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o").display().to_string();
    let missing = dir.path().join("none").display().to_string();
    let o = edrs(&["baseline", "--patients", "9", "--folds", "3", "--checkpoints", &missing, "--out", &out]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(String::from_utf8_lossy(&o.stderr).trim().lines().count(), 1);
}

#[test]
fn reruns_and_manifest_replays_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    run_ok(&quick(&a));
    run_ok(&quick(&b));
    let summary = std::fs::read(a.join("summary.csv")).unwrap();
    assert_eq!(summary, std::fs::read(b.join("summary.csv")).unwrap());
    assert_eq!(String::from_utf8_lossy(&summary).lines().count(), 3);
    assert!(a.join("checkpoints/gen2_fold2.edrs").exists());

    let manifest = a.join("run_manifest.json").display().to_string();
    let o = Command::new(env!("CARGO_BIN_EXE_edrs"))
        .args(["--config", &manifest, "evolve"])
        .env("EDRS_OUT", &c)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(summary, std::fs::read(c.join("summary.csv")).unwrap());

    let r = dir.path().join("r");
    run_ok(&[
        "report".into(),
        "--folds-csv".into(),
        a.join("folds.csv").display().to_string(),
        "--out".into(),
        r.display().to_string(),
    ]);
    assert_eq!(summary, std::fs::read(r.join("summary.csv")).unwrap());
    assert!(r.join("run_manifest.json").exists());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "[data]\npatients = 9\n[evolution]\nn_generations = 3\nn_folds = 3\nbenchmark_samples = 0\n[evolution.train]\nepochs = 1\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = edrs(&[
        "--config",
        &cfg.display().to_string(),
        "evolve",
        "--generations",
        "2",
        "--out",
        &out.display().to_string(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    let manifest = std::fs::read_to_string(out.join("run_manifest.json")).unwrap();
    assert!(manifest.contains("\"n_generations\": 2"));
}

#[test]
fn eleven_generation_command_gives_eleven_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let o = edrs(&[
        "evolve", "--generations", "11", "--retain", "0.8", "--folds", "10", "--seed", "7",
        "--patients", "10", "--epochs", "1", "--bench-samples", "0", "--jobs", "2", "--out", &out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 12);
}

#[test]
fn gen_data_bench_and_extract() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("data");
    run_ok(&["gen-data".into(), "--patients".into(), "9".into(), "--folds".into(), "3".into(), "--out".into(), d.display().to_string()]);
    assert!(d.join("dataset.csv").exists());

    let e = dir.path().join("evo");
    let mut args = quick(&e);
    args.extend(["--dataset".into(), d.join("dataset.csv").display().to_string()]);
    run_ok(&args);
    let manifest = std::fs::read_to_string(e.join("run_manifest.json")).unwrap();
    assert!(manifest.contains("crc32"));

    let b = dir.path().join("bench");
    run_ok(&[
        "bench".into(),
        "--checkpoints".into(),
        e.join("checkpoints").display().to_string(),
        "--samples".into(),
        "10".into(),
        "--repeats".into(),
        "1".into(),
        "--out".into(),
        b.display().to_string(),
    ]);
    let bench = std::fs::read_to_string(b.join("bench.csv")).unwrap();
    assert_eq!(bench.lines().count(), 1 + 2 * 3);

    let patches = dir.path().join("patches");
    std::fs::create_dir_all(&patches).unwrap();
    let px: Vec<f32> = (0..1024).map(|i| (i % 32) as f32 / 32.0).collect();
    edrs::dataset::write_pgm(&patches.join("p1_l1_1.pgm"), 32, 32, &px).unwrap();
    std::fs::write(patches.join("index.csv"), "p1_l1_1.pgm,p1,l1,1\n").unwrap();
    let x = dir.path().join("x");
    run_ok(&[
        "extract".into(),
        "--checkpoint".into(),
        e.join("checkpoints/gen2_fold0.edrs").display().to_string(),
        "--patches".into(),
        patches.display().to_string(),
        "--out".into(),
        x.display().to_string(),
    ]);
    let seqs = std::fs::read_to_string(x.join("sequences.csv")).unwrap();
    assert!(seqs.lines().any(|l| l.starts_with("p1_l1,2,")), "{seqs}");
}
