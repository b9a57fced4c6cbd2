use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_thermoforge"));
    c.env_remove("THERMOFORGE_WORKERS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A small three-node study and a model trained on it, shared by tests.
struct Fixture {
    _dir: TempDir,
    dataset: PathBuf,
    model: PathBuf,
    models_dir: PathBuf,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        let dataset = dir.path().join("study.csv");
        let o = run(&[
            "study", "--nodes", "3", "--n-pop", "10", "--segments", "8", "--seed", "5", "--out",
            s(&dataset),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let models_dir = dir.path().join("models");
        std::fs::create_dir_all(&models_dir).unwrap();
        let model = models_dir.join("knn3.json");
        let o = run(&["train", "--dataset", s(&dataset), "--k", "3", "--out", s(&model)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        Fixture {
            _dir: dir,
            dataset,
            model,
            models_dir,
        }
    })
}

#[test]
fn enumerate_writes_configs_and_index() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("cfg");
    let o = run(&["enumerate", "--nodes", "3", "--mode", "single", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let configs = std::fs::read_dir(&out)
        .unwrap()
        .filter(|e| {
            let n = e.as_ref().unwrap().file_name();
            n.to_string_lossy().starts_with("config_")
        })
        .count();
    assert_eq!(configs, 13);
    let index: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("index.json")).unwrap()).unwrap();
    assert_eq!(index["count"], 13);
    assert_eq!(index["configs"][12]["canonical"], "1,2,3");

    let multi = dir.path().join("multi");
    let o = run(&["enumerate", "--nodes", "3", "--mode", "multi", "--out", s(&multi)]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("3 configurations"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["enumerate", "--nodes", "3", "--bogus"])), 1);
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
    let o = run(&["--workers", "0", "enumerate", "--nodes", "2", "--out", "/tmp/x"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn enumerate_rejects_out_of_range_nodes() {
    let dir = TempDir::new().unwrap();
    let o = run(&["enumerate", "--nodes", "9", "--out", s(dir.path())]);
    assert_eq!(code(&o), 1);
}

fn write_config(dir: &Path, parents: &str, n: usize) -> PathBuf {
    let p = dir.join("g.json");
    std::fs::write(&p, format!(r#"{{"n_nodes": {n}, "parents": {parents}}}"#)).unwrap();
    p
}

#[test]
fn simulate_writes_trajectory_csv() {
    let dir = TempDir::new().unwrap();
    let g = write_config(dir.path(), "[-1, -1]", 2);
    let out = dir.path().join("traj.csv");
    let o = run(&[
        "simulate", "--config", s(&g), "--loads", "8,5", "--t-max", "2", "--out", s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("t,T_"));
    assert!(header.ends_with("mdot_1,mdot_2"));
    assert_eq!(text.lines().count(), 1 + 101);
    // Flows outside the pump range are rejected.
    let o = run(&["simulate", "--config", s(&g), "--loads", "8,5", "--flows", "0.9"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn solve_reports_and_maps_errors() {
    let dir = TempDir::new().unwrap();
    let g = write_config(dir.path(), "[-1, 0]", 2);
    let out = dir.path().join("sol.json");
    let o = run(&["solve", "--config", s(&g), "--loads", "8,5", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    for key in ["t_end", "converged", "grid", "states", "controls", "violations"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert!(v["t_end"].as_f64().unwrap() > 0.0);

    let o = run(&["solve", "--config", s(&g), "--loads", "8,5,3"]);
    assert_eq!(code(&o), 1);
    let o = run(&["solve", "--config", "/nonexistent/g.json", "--loads", "8"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn study_train_eval_predict_pipeline() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let report = dir.path().join("eval.json");
    let o = run(&[
        "eval", "--dataset", s(&f.dataset), "--model", s(&f.model), "--out", s(&report),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("test accuracy"));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let acc = v["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(v["n_train"].as_u64().unwrap() + v["n_test"].as_u64().unwrap(), 10);
    assert!(v["gap"]["median"].as_f64().unwrap() >= 0.0);

    let o = run(&["predict", "--model", s(&f.model), "--loads", "5,5,5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let p: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(p["label"].as_u64().unwrap() < 13);
    assert_eq!(p["config"]["n_nodes"], 3);
}

#[test]
fn study_is_reproducible_and_worker_independent() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let args = |out: &Path| {
        vec![
            "study".to_string(),
            "--nodes".into(),
            "2".into(),
            "--n-pop".into(),
            "6".into(),
            "--segments".into(),
            "8".into(),
            "--seed".into(),
            "9".into(),
            "--out".into(),
            out.to_str().unwrap().to_string(),
        ]
    };
    let o = bin().args(args(&a)).env("THERMOFORGE_WORKERS", "1").output().unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = bin().args(args(&b)).arg("--workers").arg("3").output().unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let meta = |p: &Path| std::fs::read(p.with_extension("json")).unwrap();
    assert_eq!(meta(&a), meta(&b));
}

#[test]
fn study_spec_file_with_flag_overrides() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(
        &spec,
        r#"{"n_nodes": 2, "n_pop": 4, "d_range": [4, 16], "sampler": "random_sorted",
            "split_mode": "single", "seed": 1, "solver": {"segments": 8}}"#,
    )
    .unwrap();
    let out = dir.path().join("ds.csv");
    let o = run(&["study", "--spec", s(&spec), "--n-pop", "3", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.starts_with("sample_id,d_1,d_2,J_0,J_1,J_2,label,valid"));
}

#[test]
fn failed_study_leaves_no_dataset() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, r#"{"n_nodes": 2, "n_pop": 0, "d_range": [4, 16],
        "sampler": "lhs", "split_mode": "single", "seed": 1}"#)
    .unwrap();
    let out = dir.path().join("ds.csv");
    let o = run(&["study", "--spec", s(&spec), "--out", s(&out)]);
    assert_eq!(code(&o), 1);
    assert!(!out.exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn plot_data_kinds() {
    let f = fixture();
    let csv = |kind: &str, extra: &[&str]| {
        let mut args = vec!["plot-data", "--kind", kind, "--dataset", s(&f.dataset)];
        args.extend_from_slice(extra);
        let o = run(&args);
        assert_eq!(code(&o), 0, "{kind}: {}", stderr(&o));
        String::from_utf8(o.stdout).unwrap()
    };

    let scatter = csv("feature-scatter", &[]);
    let mut lines = scatter.lines();
    assert_eq!(lines.next().unwrap(), "sample_id,D_1,D_2,label");
    for l in lines {
        let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
        assert!(v[1] + v[2] < 1.0);
    }

    let evm = csv("endurance-vs-meanload", &["--model", s(&f.model)]);
    let rows: Vec<&str> = evm.lines().skip(1).collect();
    let valid = scatter.lines().count() - 1;
    assert_eq!(rows.len(), 13 * valid);
    for sample in rows.chunks(13) {
        let predicted: usize = sample.iter().filter(|r| r.ends_with(",1")).count();
        assert_eq!(predicted, 1);
    }

    let rates = csv("success-rate", &[]);
    let total: f64 = rates
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-12);

    let rel = csv("relative-performance", &[]);
    for l in rel.lines().skip(1) {
        let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
        assert!(v[3..].iter().all(|&r| r <= 1.0 + 1e-12));
        assert!(v[3..].contains(&1.0));
    }

    let o = run(&["plot-data", "--kind", "scatter", "--dataset", s(&f.dataset)]);
    assert_eq!(code(&o), 1);
    let o = run(&["plot-data", "--kind", "success-rate"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn regret_histogram_from_merge_estimate() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let est = dir.path().join("est.json");
    let o = run(&[
        "merge-estimate", "--model", s(&f.model), "--loads", "12,9,6,5", "--reference",
        "--segments", "8", "--out", s(&est),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&est).unwrap()).unwrap();
    assert_eq!(v["candidates"].as_array().unwrap().len(), 6);
    let regret = v["reference"]["regret"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&regret));

    let o = run(&["plot-data", "--kind", "regret-histogram", "--report", s(&est), "--bins", "4"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0][0], 0.0);
    assert_eq!(rows[3][1], 1.0);
    assert_eq!(rows.iter().map(|r| r[2]).sum::<f64>(), 1.0);

    let o = run(&["merge-estimate", "--model", s(&f.model), "--loads", "12,9,6"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn compose_with_model_directory() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let sys = dir.path().join("sys.json");
    std::fs::write(
        &sys,
        r#"{"junctions": [{"id": 1, "anchor": "tank"}],
            "groups": [{"anchor": 1, "node_ids": [2, 3, 4], "loads": [7, 5, 4]},
                       {"anchor": "tank", "node_ids": [5], "loads": [6]}],
            "loads": {"1": 5}}"#,
    )
    .unwrap();
    let out = dir.path().join("design.json");
    let report = dir.path().join("pct.json");
    let o = run(&[
        "compose", "--system", s(&sys), "--models", s(&f.models_dir), "--out", s(&out),
        "--percentile", "5", "--report", s(&report), "--segments", "8",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let g: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(g["n_nodes"], 5);
    let parents = g["parents"].as_array().unwrap();
    assert_eq!(parents[0], -1);
    assert_eq!(parents[4], -1);
    let r: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let pct = r["percentile"].as_f64().unwrap();
    assert!((0.0..=100.0).contains(&pct));
    assert_eq!(r["sampled"].as_array().unwrap().len(), 5);

    // No model for groups of two.
    std::fs::write(
        &sys,
        r#"{"junctions": [], "groups": [{"anchor": "tank", "node_ids": [1, 2], "loads": [7, 5]}]}"#,
    )
    .unwrap();
    let o = run(&["compose", "--system", s(&sys), "--models", s(&f.models_dir)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("no trained model for groups of 2 nodes"));
}
