use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use beamcausal_cli::exit;

/// Runs the binary with a clean override environment plus `env`.
fn run(args: &[&str], out: &Path, env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_beamcausal"));
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("BEAMCAUSAL_")) {
        cmd.env_remove(k);
    }
    cmd.args(args).arg("--out").arg(out).envs(env.iter().copied());
    cmd.output().expect("binary runs")
}

fn ok(o: &Output) {
    assert!(
        o.status.success(),
        "status {:?}\nstdout {}\nstderr {}",
        o.status,
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
}

const SMALL: &[(&str, &str)] = &[
    ("BEAMCAUSAL_SCENE__N_USERS", "400"),
    ("BEAMCAUSAL_TRAIN__EPOCHS", "4"),
    ("BEAMCAUSAL_SELECT__SHAPLEY_PERMS", "4"),
];

#[test]
fn smoke_dataset_discovers_a_valid_graph_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let env = [("BEAMCAUSAL_SCENE__N_USERS", "100")];
    ok(&run(&["gen"], dir.path(), &env));
    let d = beamcausal::scene::load_dataset(dir.path().join("dataset.txt")).unwrap();
    assert_eq!(d.len(), 100);
    ok(&run(&["discover"], dir.path(), &env));
    let first = fs::read(dir.path().join("graph.txt")).unwrap();
    let g = beamcausal::lingam::load_graph(dir.path().join("graph.txt")).unwrap();
    g.check_invariants().unwrap();
    assert_eq!(g.target, Some(32));
    ok(&run(&["discover"], dir.path(), &env));
    assert_eq!(fs::read(dir.path().join("graph.txt")).unwrap(), first);
}

#[test]
fn bench_writes_one_row_per_method_and_budget() {
    let dir = tempfile::tempdir().unwrap();
    let mut env = SMALL.to_vec();
    env.push(("BEAMCAUSAL_BENCH__METHODS", "causal,random"));
    env.push(("BEAMCAUSAL_BENCH__GRID", "8,13"));
    ok(&run(&["gen"], dir.path(), &env));
    ok(&run(&["bench"], dir.path(), &env));
    let csv = fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], beamcausal::eval::CSV_COLUMNS.join(","));
    assert_eq!(lines.len(), 5);
    let keys: Vec<(String, String)> = lines[1..]
        .iter()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].to_string())
        })
        .collect();
    let expected = [("causal", "8"), ("causal", "13"), ("random", "8"), ("random", "13")];
    assert_eq!(keys, expected.map(|(a, b)| (a.to_string(), b.to_string())));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("bench.json")).unwrap()).unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 4);
    assert_eq!(json["methods"].as_array().unwrap().len(), 2);
}

#[test]
fn staged_pipeline_with_top2_refinement() {
    let dir = tempfile::tempdir().unwrap();
    let mut env = SMALL.to_vec();
    env.push(("BEAMCAUSAL_SE__K", "2"));
    for stage in ["gen", "discover", "select", "train", "eval"] {
        ok(&run(&[stage], dir.path(), &env));
        let manifest = dir.path().join(format!("{stage}.manifest.json"));
        let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(manifest).unwrap()).unwrap();
        assert_eq!(m["command"], stage);
        assert_eq!(m["seed"], 7);
        for f in m["outputs"].as_array().unwrap() {
            let bytes = fs::read(dir.path().join(f["file"].as_str().unwrap())).unwrap();
            assert_eq!(f["sha256"].as_str().unwrap(), beamcausal_cli::commands::sha256_hex(&bytes));
        }
    }
    let eval: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("eval.json")).unwrap()).unwrap();
    let top_k: Vec<f64> = eval["top_k"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(top_k.len(), 2);
    assert!(top_k[1] >= top_k[0]);
    assert!(eval["row"]["top2"].as_f64().unwrap() >= eval["row"]["top1"].as_f64().unwrap());
    assert_eq!(eval["row"]["n_b"], 13 + 2);
    assert!(!dir.path().join(".beamcausal.lock").exists());
}

#[test]
fn table1_profile_is_echoed_in_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run(&["gen", "--profile", "table1"], dir.path(), &[("BEAMCAUSAL_SCENE__N_USERS", "50")]));
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("gen.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["profile"], "table1");
    assert_eq!(m["config"]["scene.n_bs"], "32");
    assert_eq!(m["config"]["codebook.oversampling"], "4");
    assert_eq!(m["config"]["train.learning_rate"], "0.001");
}

#[test]
fn seed_flag_and_config_file_apply() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    fs::write(&cfg, "# small run\nscene.n_users = 60\nseed = 3\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    ok(&run(&["gen", "--config", cfg, "--seed", "19"], dir.path(), &[]));
    let d = beamcausal::scene::load_dataset(dir.path().join("dataset.txt")).unwrap();
    assert_eq!((d.len(), d.seed), (60, 19));
}

#[test]
fn failures_map_to_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent");
    let o = run(&["gen"], &missing, &[]);
    assert_eq!(o.status.code(), Some(exit::CONFIG));
    assert!(!missing.exists());

    let o = run(&["gen"], dir.path(), &[("BEAMCAUSAL_SCENE__USERS", "10")]);
    assert_eq!(o.status.code(), Some(exit::CONFIG));

    let o = run(&["discover"], dir.path(), &[]);
    assert_eq!(o.status.code(), Some(exit::DATA));
    assert!(String::from_utf8_lossy(&o.stderr).contains("beamcausal gen"));

    fs::write(dir.path().join("dataset.txt"), "# beamcausal dataset v9\n").unwrap();
    let o = run(&["discover"], dir.path(), &[]);
    assert_eq!(o.status.code(), Some(exit::DATA));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("v1") && err.contains("v9"), "{err}");

    fs::write(dir.path().join(".beamcausal.lock"), "1\n").unwrap();
    let o = run(&["gen"], dir.path(), &[("BEAMCAUSAL_SCENE__N_USERS", "10")]);
    assert_eq!(o.status.code(), Some(exit::LOCKED));
    assert!(!dir.path().join("gen.manifest.json").exists());
}

#[test]
fn exit_codes_are_distinct() {
    let mut codes = vec![exit::OK, exit::CONFIG, exit::DATA, exit::NUMERICAL, exit::LOCKED];
    codes.sort_unstable();
    codes.dedup();
    assert_eq!(codes.len(), 5);
    let e: beamcausal_cli::CliError = beamcausal::Error::Numerical("x".into()).into();
    assert_eq!(e.exit_code(), exit::NUMERICAL);
}
