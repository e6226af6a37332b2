//! Shared fixtures: a tiny labelled dataset, a fast config and a generator of
//! malformed command-line inputs.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::Rng;
use ummaso::dataset::{synth_generate, SynthConfig};

pub const LABEL: &str = "fertility";

pub const FAST_CONFIG: &str = r#"{
  "umap": {"k": 8, "epochs": 20},
  "lasso": {"grid_count": 20},
  "sarn": {"arch": {"channels": 4, "hidden": 8}, "train": {"epochs": 3}},
  "seed": 5
}"#;

/// 40-row, 3-class soil table as CSV text.
pub fn small_csv(dir: &Path) -> String {
    let data = synth_generate(&SynthConfig::soil(vec![20, 12, 8], 11).unwrap()).unwrap();
    let path = dir.join("small_source.csv");
    data.write_csv(&path, LABEL).unwrap();
    std::fs::read_to_string(path).unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Fit,
    Reduce,
    Select,
    Predict,
    Evaluate,
}

#[derive(Debug, Clone)]
pub struct FuzzCase {
    pub description: String,
    pub target: Target,
    /// Bytes of the data CSV (the predictions CSV for `Evaluate`).
    pub csv: Vec<u8>,
    pub config: Vec<u8>,
    /// Replace the data path with a missing file.
    pub missing_data: bool,
    /// Point `--out` below a regular file.
    pub bad_out: bool,
}

/// Corruptions that make any CSV unreadable by the tool.
const SYNTACTIC: &[&str] = &[
    "bad_cell", "bad_label", "ragged_short", "ragged_long", "dup_header", "empty_header",
    "header_only", "empty_file", "invalid_utf8", "open_quote", "blank_fields",
];
/// Corruptions that parse but cannot be fitted.
const SEMANTIC: &[&str] = &["single_class", "missing_class", "too_few_rows", "label_renamed"];

fn split_lines(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn join_lines(rows: &[Vec<String>]) -> Vec<u8> {
    let mut s = String::new();
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s.into_bytes()
}

/// Applies `kind` to a CSV whose last column is the label (or predicted label).
pub fn corrupt_csv(text: &str, kind: &str, rng: &mut impl Rng) -> Vec<u8> {
    let mut rows = split_lines(text);
    let width = rows[0].len();
    let n = rows.len();
    let r = rng.random_range(1..n);
    let c = rng.random_range(0..width - 1);
    match kind {
        "bad_cell" => {
            let bad = ["", "abc", "1.2.3", "NaN", "inf", "-inf", "--1", "1e", "0x10", " ", "infinity", "1_0"];
            rows[r][c] = bad.choose(rng).unwrap().to_string();
        }
        "bad_label" => {
            let bad = ["-1", "1.5", "x", "", "1e2", "2000", "3a", "0.0", "NaN"];
            rows[r][width - 1] = bad.choose(rng).unwrap().to_string();
        }
        "ragged_short" => {
            rows[r].pop();
        }
        "ragged_long" => {
            rows[r].push("1".into());
        }
        "dup_header" => {
            let other = (c + 1) % width;
            rows[0][other] = rows[0][c].clone();
        }
        "empty_header" => rows[0][c] = String::new(),
        "header_only" => rows.truncate(1),
        "empty_file" => return Vec::new(),
        "invalid_utf8" => {
            let mut bytes = join_lines(&rows);
            let line_start: usize = rows[..r].iter().map(|row| row.join(",").len() + 1).sum();
            bytes.insert(line_start + 1, 0xFF);
            return bytes;
        }
        "open_quote" => rows[r][c] = format!("\"{}", rows[r][c]),
        "blank_fields" => rows[r] = vec![" ".to_string(); width],
        "single_class" => rows.iter_mut().skip(1).for_each(|row| row[width - 1] = "0".into()),
        "missing_class" => rows.iter_mut().skip(1).for_each(|row| {
            if row[width - 1] == "1" {
                row[width - 1] = "2".into();
            }
        }),
        "too_few_rows" => rows.truncate(6),
        "label_renamed" => rows[0][width - 1] = "fertility_level".into(),
        other => panic!("unknown corruption {other}"),
    }
    join_lines(&rows)
}

/// Config edits that must be rejected, as (json pointer-ish path, value).
const BAD_VALUES: &[(&str, &str)] = &[
    ("umap.k", "1"),
    ("umap.k", "0"),
    ("umap.k", "100000"),
    ("umap.out_dim", "0"),
    ("umap.out_dim", "500"),
    ("umap.a", "-1.0"),
    ("umap.eps", "0.0"),
    ("umap.k", "-3"),
    ("umap.k", "2.5"),
    ("umap.k", "\"ten\""),
    ("split.train_fraction", "0.0"),
    ("split.train_fraction", "1.0"),
    ("split.train_fraction", "1.5"),
    ("split.train_fraction", "-0.2"),
    ("sarn.train.learning_rate", "0.0"),
    ("sarn.train.learning_rate", "-1.0"),
    ("sarn.train.batch_size", "0"),
    ("sarn.train.loss_head", "\"hinge\""),
    ("sarn.arch.dropout", "1.0"),
    ("sarn.arch.dropout", "-0.1"),
    ("sarn.arch.kernel_width", "0"),
    ("sarn.arch.rank", "0"),
    ("sarn.arch.hidden", "0"),
    ("sarn.arch.channels", "0"),
    ("sarn.arch.mask_len", "0"),
    ("sarn.arch.mask_len", "1000"),
    ("sarn.arch.reg_lambda", "-1.0"),
    ("sarn.arch.label_smoothing", "1.0"),
    ("lasso.grid_count", "0"),
    ("lasso.strategy", "{\"top_k\": 99}"),
    ("lasso.strategy", "\"best\""),
    ("feature_mode", "\"everything\""),
    ("balance", "\"undersample\""),
    ("seed", "-1"),
    ("seed", "\"abc\""),
];

const OBJECT_PATHS: &[&str] = &["", "umap", "lasso", "sarn", "sarn.arch", "sarn.train", "split"];

fn set_path(root: &mut serde_json::Value, path: &str, value: serde_json::Value) {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').filter(|p| !p.is_empty()).collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur.as_object_mut().expect("object");
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return;
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| serde_json::json!({}));
    }
}

pub fn corrupt_config(kind: &str, rng: &mut impl Rng) -> Vec<u8> {
    let mut cfg: serde_json::Value = serde_json::from_str(FAST_CONFIG).unwrap();
    match kind {
        "unknown_key" => {
            let at = *OBJECT_PATHS.choose(rng).unwrap();
            let key = ["epoch", "bogus", "learningrate", "K", "seeds"].choose(rng).unwrap();
            let path = if at.is_empty() { key.to_string() } else { format!("{at}.{key}") };
            set_path(&mut cfg, &path, serde_json::json!(1));
            serde_json::to_vec(&cfg).unwrap()
        }
        "bad_value" => {
            let (path, value) = BAD_VALUES.choose(rng).unwrap();
            set_path(&mut cfg, path, serde_json::from_str(value).unwrap());
            serde_json::to_vec(&cfg).unwrap()
        }
        "truncated" => {
            let text = serde_json::to_vec(&cfg).unwrap();
            let cut = rng.random_range(0..text.len() - 1);
            text[..cut].to_vec()
        }
        "garbage" => {
            let len = rng.random_range(1..64);
            let mut bytes: Vec<u8> = (0..len).map(|_| rng.random()).collect();
            bytes[0] = b'#';
            bytes
        }
        "not_object" => [&b"[1, 2, 3]"[..], b"42", b"\"fit\"", b"null", b"true"]
            .choose(rng)
            .unwrap()
            .to_vec(),
        other => panic!("unknown config corruption {other}"),
    }
}

/// Draws one malformed invocation. `csv` is a valid data CSV; `predictions`
/// a valid predictions CSV for the same rows.
pub fn draw_case(csv: &str, predictions: &str, rng: &mut impl Rng) -> FuzzCase {
    let valid_config = FAST_CONFIG.as_bytes().to_vec();
    let roll = rng.random_range(0..100);
    if roll < 55 {
        let target = *[Target::Fit, Target::Reduce, Target::Select, Target::Predict, Target::Evaluate]
            .choose(rng)
            .unwrap();
        let kinds: Vec<&str> = if target == Target::Fit {
            SYNTACTIC.iter().chain(SEMANTIC).copied().collect()
        } else {
            SYNTACTIC.to_vec()
        };
        let kind = *kinds.choose(rng).unwrap();
        let source = if target == Target::Evaluate { predictions } else { csv };
        FuzzCase {
            description: format!("{target:?} with csv corruption {kind}"),
            target,
            csv: corrupt_csv(source, kind, rng),
            config: valid_config,
            missing_data: false,
            bad_out: false,
        }
    } else if roll < 93 {
        let kind = *["unknown_key", "bad_value", "truncated", "garbage", "not_object"]
            .choose(rng)
            .unwrap();
        let config = corrupt_config(kind, rng);
        FuzzCase {
            description: format!("Fit with config corruption {kind}: {}", String::from_utf8_lossy(&config)),
            target: Target::Fit,
            csv: csv.as_bytes().to_vec(),
            config,
            missing_data: false,
            bad_out: false,
        }
    } else {
        let missing = rng.random_bool(0.5);
        FuzzCase {
            description: if missing { "missing data file".into() } else { "unwritable output".into() },
            target: if missing { Target::Fit } else { Target::Select },
            csv: csv.as_bytes().to_vec(),
            config: valid_config,
            missing_data: missing,
            bad_out: !missing,
        }
    }
}

/// Writes the case files into `dir` and returns the argument vector.
pub fn case_args(case: &FuzzCase, dir: &Path, artifacts: &Path, truth_csv: &Path) -> Vec<String> {
    let data = dir.join("input.csv");
    let config = dir.join("config.json");
    std::fs::write(&data, &case.csv).unwrap();
    std::fs::write(&config, &case.config).unwrap();
    let data_arg: PathBuf = if case.missing_data { dir.join("does_not_exist.csv") } else { data.clone() };
    let out: PathBuf = if case.bad_out {
        let blocker = dir.join("blocker");
        std::fs::write(&blocker, b"x").unwrap();
        blocker.join("out")
    } else {
        dir.join("out")
    };
    let s = |p: &Path| p.to_string_lossy().into_owned();
    let mut args = vec!["ummaso".to_string(), "--config".into(), s(&config), "--out".into(), s(&out)];
    match case.target {
        Target::Fit => args.extend(["fit".into(), "--data".into(), s(&data_arg)]),
        Target::Reduce => args.extend(["reduce".into(), "--data".into(), s(&data_arg)]),
        Target::Select => args.extend(["select".into(), "--data".into(), s(&data_arg)]),
        Target::Predict => args.extend([
            "predict".into(),
            "--data".into(),
            s(&data_arg),
            "--artifacts".into(),
            s(artifacts),
        ]),
        Target::Evaluate => args.extend([
            "evaluate".into(),
            "--predictions".into(),
            s(&data_arg),
            "--data".into(),
            s(truth_csv),
        ]),
    }
    args
}
