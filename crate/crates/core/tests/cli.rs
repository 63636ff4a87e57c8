//! End-to-end tests of the `sfda` binary.

use std::path::Path;
use std::process::{Command, Output};

use sfda::config::RunConfig;
use sfda::Dataset;

fn sfda(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sfda"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("run sfda")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    serde_json::from_str(text.lines().last().unwrap()).unwrap()
}

/// A small benchmark so the tests stay quick.
fn write_small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    std::fs::write(
        &path,
        "data.samples_per_class = 40\nsource.epochs = 10\n\n[adapt]\nepochs = 4\n",
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn gen_data_default_row_count_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = stdout_json(&sfda(&["gen-data", "--out", "a"], d));
    assert_eq!(out["rows"], 2000);
    let src = Dataset::load_csv(&d.join("a/source.csv"), Some(4)).unwrap();
    let tgt = Dataset::load_csv(&d.join("a/target.csv"), Some(4)).unwrap();
    assert_eq!((src.len(), tgt.len(), src.feature_dim()), (1000, 1000, 2));

    // refuses to overwrite without --force
    let again = sfda(&["gen-data", "--out", "a"], d);
    assert_eq!(again.status.code(), Some(1));
    assert!(sfda(&["gen-data", "--out", "a", "--force"], d)
        .status
        .success());

    stdout_json(&sfda(&["gen-data", "--out", "b"], d));
    for f in ["source.csv", "target.csv"] {
        assert_eq!(
            std::fs::read(d.join("a").join(f)).unwrap(),
            std::fs::read(d.join("b").join(f)).unwrap()
        );
    }
}

#[test]
fn zero_shift_domains_share_a_distribution() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = [
        "gen-data",
        "--out",
        "z",
        "--set",
        "shift.rotation=0",
        "--set",
        "shift.translation=[0,0]",
        "--set",
        "shift.noise_multiplier=1",
        "--set",
        "data.samples_per_class=2000",
    ];
    stdout_json(&sfda(&args, d));
    let src = Dataset::load_csv(&d.join("z/source.csv"), Some(4)).unwrap();
    let tgt = Dataset::load_csv(&d.join("z/target.csv"), Some(4)).unwrap();
    assert_ne!(src.features(), tgt.features());
    for class in 0..4 {
        let mean = |ds: &Dataset| {
            let rows: Vec<&[f64]> = ds
                .iter()
                .filter(|(_, y)| *y == class)
                .map(|(x, _)| x)
                .collect();
            let n = rows.len() as f64;
            [
                rows.iter().map(|x| x[0]).sum::<f64>() / n,
                rows.iter().map(|x| x[1]).sum::<f64>() / n,
            ]
        };
        let (a, b) = (mean(&src), mean(&tgt));
        // two independent means of 2000 unit-variance draws
        let tol = 4.0 * (2.0f64 / 2000.0).sqrt();
        assert!(
            (a[0] - b[0]).abs() < tol && (a[1] - b[1]).abs() < tol,
            "{a:?} vs {b:?}"
        );
    }
}

#[test]
fn train_evaluate_and_fuse_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_small_config(d);
    stdout_json(&sfda(&["gen-data", "--config", &cfg, "--out", "data"], d));
    let trained = stdout_json(&sfda(
        &[
            "train-source",
            "--config",
            &cfg,
            "--data",
            "data/source.csv",
            "--out",
            "teacher.json",
            "--target",
            "data/target.csv",
            "--predictions",
            "teacher.jsonl",
        ],
        d,
    ));
    assert!(trained["source_accuracy"].as_f64().unwrap() > 90.0);
    let model: sfda::Model = sfda::models::load_json(&d.join("teacher.json")).unwrap();
    assert_eq!((model.num_classes(), model.feature_dim()), (4, 2));

    let zs = stdout_json(&sfda(
        &[
            "zero-shot-eval",
            "--config",
            &cfg,
            "--data",
            "data/target.csv",
            "--oracle-out",
            "oracle.json",
            "--predictions",
            "oracle.jsonl",
        ],
        d,
    ));
    assert!(zs["accuracy"].as_f64().unwrap() > 25.0);
    let _oracle: sfda::Oracle = sfda::models::load_json(&d.join("oracle.json")).unwrap();

    let fused = sfda(
        &[
            "fuse",
            "--teacher",
            "teacher.jsonl",
            "--oracle",
            "oracle.jsonl",
            "--out",
            "fused.jsonl",
        ],
        d,
    );
    assert!(fused.status.success());
    let text = std::fs::read_to_string(d.join("fused.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 160);
    for (i, l) in lines.iter().enumerate() {
        assert_eq!(l["id"], i);
        let label = l["label"].as_i64().unwrap();
        assert!((-1..4).contains(&label));
        assert!(["match", "teacher_conf", "oracle_conf"].contains(&l["source"].as_str().unwrap()));
        assert!(l["cs"].as_f64().unwrap() <= 1.0 && l["cc"].as_f64().unwrap() <= 1.0);
    }

    // mismatched inputs are a runtime failure
    std::fs::write(
        d.join("short.jsonl"),
        "{\"id\":0,\"p\":[0.5,0.5,0.0,0.0]}\n",
    )
    .unwrap();
    let bad = sfda(
        &[
            "fuse",
            "--teacher",
            "teacher.jsonl",
            "--oracle",
            "short.jsonl",
        ],
        d,
    );
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn adapt_summary_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_small_config(d);
    let out = sfda(
        &[
            "adapt",
            "--config",
            &cfg,
            "--variant",
            "full",
            "--seed",
            "2",
            "--metrics",
            "m.jsonl",
            "--summary",
            "s.json",
        ],
        d,
    );
    let line = stdout_json(&out);
    let file: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("s.json")).unwrap()).unwrap();
    assert_eq!(line, file);
    for key in ["lb", "method", "ub", "cg", "seed", "variant"] {
        assert!(!line[key].is_null(), "{key}");
    }
    let (lb, ub, m) = (
        line["lb"].as_f64().unwrap(),
        line["ub"].as_f64().unwrap(),
        line["method"].as_f64().unwrap(),
    );
    let cg = sfda::eval::closed_gap(m, lb, ub);
    assert_eq!(line["cg"].as_f64(), cg);
    assert_eq!(line["seed"], 2);
    assert_eq!(line["config"]["seed"], 2);
    assert_eq!(line["config"]["adapt.epochs"], 4);

    let metrics = std::fs::read_to_string(d.join("m.jsonl")).unwrap();
    let traces: Vec<sfda::trainer::EpochTrace> = metrics
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(traces.len(), 4);

    // the embedded config replays the run exactly
    let mut replay = RunConfig::default();
    for (k, v) in line["config"].as_object().unwrap() {
        let value: toml::Value = serde_json::from_value(v.clone()).unwrap();
        replay.set(k, &value).unwrap();
    }
    let again = sfda::experiment::run(&replay).unwrap();
    assert_eq!(again.summary.method, m);
    assert_eq!(again.traces, traces);
}

#[test]
fn oracle_only_writes_no_traces() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_small_config(d);
    let line = stdout_json(&sfda(
        &[
            "adapt",
            "--config",
            &cfg,
            "--variant",
            "oracle-only",
            "--metrics",
            "m.jsonl",
        ],
        d,
    ));
    assert_eq!(line["variant"], "oracle-only");
    assert_eq!(std::fs::read_to_string(d.join("m.jsonl")).unwrap(), "");
}

#[test]
fn adapt_reads_generated_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_small_config(d);
    stdout_json(&sfda(&["gen-data", "--config", &cfg, "--out", "data"], d));
    let from_files = stdout_json(&sfda(&["adapt", "--config", &cfg, "--data-dir", "data"], d));
    let inline = stdout_json(&sfda(&["adapt", "--config", &cfg], d));
    assert_eq!(from_files, inline);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.toml"), "acr.bogus = 3\n").unwrap();
    for args in [
        vec!["adapt", "--variant", "everything"],
        vec!["adapt", "--config", "bad.toml"],
        vec!["adapt", "--set", "acr.rho=1.5"],
        vec!["adapt", "--set", "adapt.epochs=0"],
        vec!["sweep", "--param", "acr.nope", "--values", "1"],
        vec![
            "sweep", "--param", "acr.h", "--values", "1", "--seeds", "5..2",
        ],
        vec!["sweep", "--param", "acr.h", "--values", "-3"],
        vec!["no-such-command"],
    ] {
        let out = sfda(&args, d);
        assert_eq!(
            out.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    // a missing input file is a runtime failure
    let out = sfda(
        &["train-source", "--data", "missing.csv", "--out", "m.json"],
        d,
    );
    assert_eq!(out.status.code(), Some(1));
}

fn read_sweep(path: &Path) -> Vec<(String, f64, f64)> {
    let mut r = csv::Reader::from_path(path).unwrap();
    assert_eq!(r.headers().unwrap(), vec!["value", "mean_accuracy", "std"]);
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            (
                rec[0].to_string(),
                rec[1].parse().unwrap(),
                rec[2].parse().unwrap(),
            )
        })
        .collect()
}

#[test]
fn single_cell_sweep_matches_adapt() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_small_config(d);
    let out = sfda(
        &[
            "sweep", "--config", &cfg, "--param", "acr.h", "--values", "5", "--seeds", "3",
            "--out", "s.csv",
        ],
        d,
    );
    assert!(out.status.success());
    let rows = read_sweep(&d.join("s.csv"));
    let single = stdout_json(&sfda(
        &["adapt", "--config", &cfg, "--seed", "3", "--set", "acr.h=5"],
        d,
    ));
    assert_eq!(rows.len(), 1);
    assert!((rows[0].1 - single["method"].as_f64().unwrap()).abs() < 1e-4);
    assert_eq!(rows[0].2, 0.0);
}

#[test]
fn zero_rho_sweep_matches_no_acr() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_small_config(d);
    let out = sfda(
        &[
            "sweep", "--config", &cfg, "--param", "acr.rho", "--values", "0", "--seeds", "0..2",
            "--out", "s.csv",
        ],
        d,
    );
    assert!(out.status.success());
    let rows = read_sweep(&d.join("s.csv"));
    let no_acr: Vec<f64> = (0..3)
        .map(|s| {
            let seed = s.to_string();
            stdout_json(&sfda(
                &[
                    "adapt",
                    "--config",
                    &cfg,
                    "--variant",
                    "no-acr",
                    "--seed",
                    &seed,
                ],
                d,
            ))["method"]
                .as_f64()
                .unwrap()
        })
        .collect();
    let mean = no_acr.iter().sum::<f64>() / 3.0;
    assert!((rows[0].1 - mean).abs() < 1e-4);
}

#[test]
fn pace_sweep_covers_every_kind() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_small_config(d);
    let kinds = "reliability-only,exponential,linear,sigmoid,stepwise";
    let out = sfda(
        &[
            "sweep",
            "--config",
            &cfg,
            "--param",
            "curriculum.pace",
            "--values",
            kinds,
            "--seeds",
            "0,1",
            "--out",
            "p.csv",
        ],
        d,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rows = read_sweep(&d.join("p.csv"));
    let names: Vec<&str> = rows.iter().map(|r| r.0.as_str()).collect();
    assert_eq!(names, kinds.split(',').collect::<Vec<_>>());
    assert!(rows.iter().all(|r| (0.0..=100.0).contains(&r.1)));
}
