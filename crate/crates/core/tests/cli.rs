//! End-to-end tests of the `ummaso` binary.

mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ummaso::dataset::{load_csv, stratified_split};
use ummaso::pipeline::{self, PipelineConfig};
use ummaso::rng::{child_seed, seeded};

fn ummaso(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ummaso"))
        .args(args)
        .env("UMMASO_LOG", "quiet")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    data: PathBuf,
    config: PathBuf,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let data = root.join("small.csv");
    std::fs::write(&data, common::small_csv(&root)).unwrap();
    let config = root.join("fast.json");
    std::fs::write(&config, common::FAST_CONFIG).unwrap();
    Fixture {
        _dir: dir,
        root,
        data,
        config,
    }
}

fn fit(f: &Fixture, out: &Path) -> Output {
    ummaso(&["--config", s(&f.config), "--out", s(out), "fit", "--data", s(&f.data)])
}

#[test]
fn generate_writes_requested_rows() {
    let f = fixture();
    let out = f.root.join("soil.csv");
    let o = ummaso(&["--seed", "3", "--out", s(&out), "generate"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "rows=1000 class_0=700 class_1=200 class_2=100");
    let data = load_csv(&out, common::LABEL).unwrap();
    assert_eq!(data.n_samples(), 1000);
    assert_eq!(data.feature_names, ["N", "P", "K", "pH", "EC"]);
}

#[test]
fn generate_without_out_is_a_usage_error() {
    let o = ummaso(&["generate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--out"));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let f = fixture();
    let blocker = f.root.join("file");
    std::fs::write(&blocker, "x").unwrap();
    let o = ummaso(&["--out", s(&blocker.join("soil.csv")), "generate"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!stderr(&o).trim().is_empty());
}

#[test]
fn fit_writes_artifacts_deterministically() {
    let f = fixture();
    let (a, b) = (f.root.join("a"), f.root.join("b"));
    for out in [&a, &b] {
        let o = fit(&f, out);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).contains("accuracy="));
    }
    let mut names: Vec<String> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "embedding.csv",
            "graph.json",
            "history.csv",
            "lasso_path.csv",
            "manifest.json",
            "metrics.json",
            "model.json",
            "selection.json",
            "standardization.json"
        ]
    );
    for name in &names {
        if name == "manifest.json" {
            continue; // stage timings differ
        }
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn unknown_config_key_is_named() {
    let f = fixture();
    let cfg = f.root.join("bad.json");
    std::fs::write(&cfg, r#"{"sarn": {"train": {"epoch": 5}}}"#).unwrap();
    let o = ummaso(&["--config", s(&cfg), "--out", s(&f.root.join("x")), "fit", "--data", s(&f.data)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("epoch"), "{}", stderr(&o));
}

#[test]
fn predict_and_evaluate_reproduce_fit_metrics() {
    let f = fixture();
    let art = f.root.join("art");
    assert!(fit(&f, &art).status.success());

    // Rebuild the held-out split the pipeline used.
    let cfg = PipelineConfig::from_json(common::FAST_CONFIG).unwrap();
    let mut spec = cfg.split;
    spec.seed = child_seed(cfg.seed, pipeline::SEED_SPLIT);
    let data = load_csv(&f.data, common::LABEL).unwrap();
    let (_, test) = stratified_split(&data, &spec).unwrap();
    let test_csv = f.root.join("test.csv");
    test.write_csv(&test_csv, common::LABEL).unwrap();

    let preds = f.root.join("preds.csv");
    let o = ummaso(&["--out", s(&preds), "predict", "--data", s(&test_csv), "--artifacts", s(&art)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&preds).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "row_index,p_class_0,p_class_1,p_class_2,predicted_label");
    for line in lines {
        let cells: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        let total: f64 = cells[1..4].iter().sum();
        assert!((total - 1.0).abs() < 1e-9, "{line}");
    }

    let metrics = f.root.join("metrics.json");
    let o = ummaso(&[
        "--out",
        s(&metrics),
        "evaluate",
        "--predictions",
        s(&preds),
        "--data",
        s(&test_csv),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        std::fs::read(&metrics).unwrap(),
        std::fs::read(art.join(pipeline::METRICS_FILE)).unwrap()
    );
}

#[test]
fn predict_without_a_feature_column_fails() {
    let f = fixture();
    let art = f.root.join("art");
    assert!(fit(&f, &art).status.success());
    let data = load_csv(&f.data, common::LABEL).unwrap();
    let trimmed = f.root.join("trimmed.csv");
    data.select_columns(&[0, 1, 2, 3]).write_csv(&trimmed, common::LABEL).unwrap();
    let o = ummaso(&["--out", s(&f.root.join("p.csv")), "predict", "--data", s(&trimmed), "--artifacts", s(&art)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("EC"), "{}", stderr(&o));
}

#[test]
fn evaluate_identical_labels_is_perfect() {
    let f = fixture();
    let data = load_csv(&f.data, common::LABEL).unwrap();
    let preds = f.root.join("preds.csv");
    let mut text = String::from("row_index,predicted_label\n");
    for (i, l) in data.labels.iter().enumerate() {
        text.push_str(&format!("{i},{l}\n"));
    }
    std::fs::write(&preds, text).unwrap();
    let o = ummaso(&["evaluate", "--predictions", s(&preds), "--data", s(&f.data)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "accuracy=1.0000 precision=1.0000 recall=1.0000 kappa=1.0000");
}

#[test]
fn reduce_writes_coordinates_and_label() {
    let f = fixture();
    let out = f.root.join("emb.csv");
    let o = ummaso(&["--config", s(&f.config), "--out", s(&out), "reduce", "--data", s(&f.data)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 41);
    assert!(text.lines().all(|l| l.split(',').count() == 3));
}

#[test]
fn select_ranks_every_feature() {
    let f = fixture();
    let out = f.root.join("sel");
    let o = ummaso(&["--config", s(&f.config), "--out", s(&out), "select", "--data", s(&f.data)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ranking = ummaso::cli::read_ranking_csv(&out.join(ummaso::cli::RANKING_FILE)).unwrap();
    assert_eq!(ranking.len(), 5);
    // Features that never enter sort after all that do.
    let first_never = ranking.iter().position(|(_, l)| l.is_none()).unwrap_or(ranking.len());
    assert!(ranking[first_never..].iter().all(|(_, l)| l.is_none()));
    assert!(out.join(pipeline::LASSO_PATH_FILE).exists());
}

#[test]
fn version_and_help() {
    let o = ummaso(&["--version"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains(ummaso::VERSION));
    let o = ummaso(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    for cmd in ["generate", "fit", "predict", "evaluate", "reduce", "select"] {
        assert!(stdout(&o).contains(cmd), "{cmd}");
    }
    assert_eq!(ummaso(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn spawned_malformed_inputs_exit_cleanly() {
    let f = fixture();
    let art = f.root.join("art");
    assert!(fit(&f, &art).status.success());
    let preds = f.root.join("preds.csv");
    let o = ummaso(&["--out", s(&preds), "predict", "--data", s(&f.data), "--artifacts", s(&art)]);
    assert!(o.status.success());
    let csv = std::fs::read_to_string(&f.data).unwrap();
    let predictions = std::fs::read_to_string(&preds).unwrap();
    let mut rng = seeded(77);
    for i in 0..40 {
        let case = common::draw_case(&csv, &predictions, &mut rng);
        let dir = f.root.join(format!("case{i}"));
        std::fs::create_dir_all(&dir).unwrap();
        let args = common::case_args(&case, &dir, &art, &f.data);
        let arg_refs: Vec<&str> = args[1..].iter().map(String::as_str).collect();
        let o = ummaso(&arg_refs);
        let code = o.status.code();
        assert!(matches!(code, Some(2..=4)), "{}: {code:?} {}", case.description, stderr(&o));
        assert!(stderr(&o).starts_with("error: "), "{}", case.description);
        assert!(!stderr(&o).contains("internal error"), "{}", case.description);
    }
}
