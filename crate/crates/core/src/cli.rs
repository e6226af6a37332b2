//! The `ummaso` command-line tool.
//!
//! Exit codes: 0 success, 2 usage/config/schema, 3 I/O, 4 numerical.
//! `UMMASO_LOG` (`quiet`, `info`, `debug`) sets stderr verbosity; stdout only
//! carries one-line summaries.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::dataset::{self, synth_generate, SynthConfig};
use crate::error::{Error, Result};
use crate::lasso::{self, SelectionStrategy};
use crate::metrics;
use crate::pipeline::{self, Balance, FeatureMode, LassoSettings, PipelineArtifacts, PipelineConfig, SarnSettings};
use crate::umap::{self, UmapConfig};

#[derive(Debug, Parser)]
#[command(name = "ummaso", version, about = "UMAP + LASSO + sparse attention network classifier for tabular data")]
pub struct Cli {
    /// JSON config file (pipeline settings plus optional input/output/label_column)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file or directory, depending on the command
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Name of the integer label column
    #[arg(long, global = true)]
    pub label_column: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic soil-nutrient dataset
    Generate(GenerateArgs),
    /// Run the full pipeline and write an artifacts directory
    Fit(DataArgs),
    /// Predict class probabilities with a fitted artifacts directory
    Predict(PredictArgs),
    /// Compare a predictions CSV with labelled data
    Evaluate(EvaluateArgs),
    /// Standardize and embed with UMAP only
    Reduce(DataArgs),
    /// Standardize and fit the LASSO path only
    Select(DataArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Samples per class, comma separated
    #[arg(long, value_delimiter = ',', default_value = "700,200,100")]
    pub per_class: Vec<usize>,
    /// Gaussian noise standard deviation around the class centers
    #[arg(long)]
    pub noise_std: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Input CSV with feature columns and a label column
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Input CSV containing every training feature column
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Artifacts directory written by `fit`
    #[arg(long)]
    pub artifacts: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Predictions CSV written by `predict`
    #[arg(long)]
    pub predictions: PathBuf,
    /// Labelled CSV
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Also write the metrics as metric,value CSV
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

/// Config file layout: every pipeline setting plus I/O defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub label_column: Option<String>,
    pub balance: Balance,
    pub umap: UmapConfig,
    pub lasso: LassoSettings,
    pub feature_mode: FeatureMode,
    pub sarn: SarnSettings,
    pub split: dataset::SplitSpec,
    pub seed: u64,
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::InvalidData => Error::Config(format!("{}: not valid UTF-8", path.display())),
            _ => Error::io(path, e),
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            balance: self.balance,
            umap: self.umap.clone(),
            lasso: self.lasso.clone(),
            feature_mode: self.feature_mode,
            sarn: self.sarn.clone(),
            split: self.split,
            seed: self.seed,
        }
    }
}

pub const DEFAULT_LABEL_COLUMN: &str = "fertility";

struct Context {
    config: CliConfig,
    out: Option<PathBuf>,
    label_column: String,
}

impl Context {
    fn new(cli: &Cli) -> Result<Self> {
        let mut config = match &cli.config {
            Some(p) => CliConfig::load(p)?,
            None => CliConfig::default(),
        };
        if let Some(seed) = cli.seed {
            config.seed = seed;
        }
        let label_column = cli
            .label_column
            .clone()
            .or_else(|| config.label_column.clone())
            .unwrap_or_else(|| DEFAULT_LABEL_COLUMN.to_string());
        let out = cli.out.clone().or_else(|| config.output.clone());
        Ok(Self {
            config,
            out,
            label_column,
        })
    }

    fn out(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| Error::Config("--out is required for this command".into()))
    }

    fn data(&self, flag: &Option<PathBuf>) -> Result<PathBuf> {
        flag.clone()
            .or_else(|| self.config.input.clone())
            .ok_or_else(|| Error::Config("--data is required for this command".into()))
    }
}

fn init_logging() {
    let level = match std::env::var("UMMASO_LOG").as_deref() {
        Ok("debug") => log::LevelFilter::Debug,
        Ok("info") => log::LevelFilter::Info,
        Ok("quiet") => log::LevelFilter::Off,
        _ => log::LevelFilter::Warn,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = std::panic::catch_unwind(|| execute(&cli));
    match outcome {
        Ok(Ok(())) => 0,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
        Err(_) => {
            eprintln!("error: internal error");
            4
        }
    }
}

/// Runs a parsed command. Unlike [`run`], panics propagate.
pub fn execute(cli: &Cli) -> Result<()> {
    let ctx = Context::new(cli)?;
    match &cli.command {
        Command::Generate(a) => cmd_generate(&ctx, a),
        Command::Fit(a) => cmd_fit(&ctx, a),
        Command::Predict(a) => cmd_predict(&ctx, a),
        Command::Evaluate(a) => cmd_evaluate(&ctx, a),
        Command::Reduce(a) => cmd_reduce(&ctx, a),
        Command::Select(a) => cmd_select(&ctx, a),
    }
}

fn print_line(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
}

fn cmd_generate(ctx: &Context, args: &GenerateArgs) -> Result<()> {
    let out = ctx.out()?;
    if args.per_class.len() < 2 || args.per_class.contains(&0) {
        return Err(Error::Config("--per-class needs at least two positive counts".into()));
    }
    let mut synth = if args.per_class.len() <= 3 {
        SynthConfig::soil(args.per_class.clone(), ctx.config.seed)?
    } else {
        SynthConfig::blobs(args.per_class.clone(), 5, ctx.config.seed)?
    };
    if let Some(noise) = args.noise_std {
        if !(noise >= 0.0) || !noise.is_finite() {
            return Err(Error::Config("--noise-std must be finite and non-negative".into()));
        }
        synth.noise_std = noise;
    }
    let data = synth_generate(&synth)?;
    data.write_csv(out, &ctx.label_column)?;
    let counts: Vec<String> = data
        .class_counts()
        .iter()
        .enumerate()
        .map(|(c, n)| format!("class_{c}={n}"))
        .collect();
    print_line(&format!("rows={} {}", data.n_samples(), counts.join(" ")));
    Ok(())
}

fn cmd_fit(ctx: &Context, args: &DataArgs) -> Result<()> {
    let out = ctx.out()?.to_path_buf();
    let data = dataset::load_csv(&ctx.data(&args.data)?, &ctx.label_column)?;
    let artifacts = pipeline::run(&data, &ctx.config.pipeline())?;
    artifacts.save(&out)?;
    print_line(&artifacts.metrics.summary_line());
    Ok(())
}

fn cmd_predict(ctx: &Context, args: &PredictArgs) -> Result<()> {
    let out = ctx.out()?;
    let artifacts = PipelineArtifacts::load(&args.artifacts)?;
    let data = load_features(&ctx.data(&args.data)?, &ctx.label_column, &artifacts)?;
    let (probs, labels) = pipeline::predict(&artifacts, &data)?;
    let mut w = csv::Writer::from_path(out).map_err(|e| csv_error(out, e))?;
    let mut header = vec!["row_index".to_string()];
    header.extend((0..probs.ncols()).map(|c| format!("p_class_{c}")));
    header.push("predicted_label".into());
    w.write_record(&header).map_err(|e| csv_error(out, e))?;
    for (i, (row, label)) in probs.rows().into_iter().zip(&labels).enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(row.iter().map(|p| p.to_string()));
        rec.push(label.to_string());
        w.write_record(&rec).map_err(|e| csv_error(out, e))?;
    }
    w.flush().map_err(|e| Error::io(out, e))?;
    print_line(&format!("rows={}", labels.len()));
    Ok(())
}

/// Reads the training feature columns from a CSV that may or may not carry
/// the label column.
fn load_features(path: &Path, label_column: &str, artifacts: &PipelineArtifacts) -> Result<ndarray::Array2<f64>> {
    let has_label = {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let headers = r.headers().map_err(|e| csv_error(path, e))?;
        headers.iter().any(|h| h.trim() == label_column)
    };
    let data = if has_label {
        dataset::load_csv(path, label_column)?
    } else {
        dataset::load_unlabeled_csv(path)?
    };
    pipeline::align_columns(artifacts, &data)
}

fn cmd_evaluate(ctx: &Context, args: &EvaluateArgs) -> Result<()> {
    let pred = dataset::load_csv(&args.predictions, "predicted_label")?;
    let truth = dataset::load_csv(&ctx.data(&args.data)?, &ctx.label_column)?;
    if pred.n_samples() != truth.n_samples() {
        return Err(Error::Schema(format!(
            "{} predictions for {} labelled rows",
            pred.n_samples(),
            truth.n_samples()
        )));
    }
    let prob_cols = pred.feature_names.iter().filter(|n| n.starts_with("p_class_")).count();
    let n_classes = pred.n_classes().max(truth.n_classes()).max(prob_cols).max(2);
    let report = metrics::evaluate(&truth.labels, &pred.labels, n_classes)?;
    if let Some(out) = &ctx.out {
        report.write_json(out)?;
    }
    if let Some(path) = &args.csv {
        report.write_csv(path)?;
    }
    print_line(&report.summary_line());
    Ok(())
}

fn cmd_reduce(ctx: &Context, args: &DataArgs) -> Result<()> {
    let out = ctx.out()?;
    let data = dataset::load_csv(&ctx.data(&args.data)?, &ctx.label_column)?;
    let (z, _) = dataset::standardize(&data)?;
    let mut cfg = ctx.config.umap.clone();
    cfg.seed = crate::rng::child_seed(ctx.config.seed, pipeline::SEED_UMAP);
    let (_, emb) = umap::embed(&z.features, &cfg).map_err(|e| e.in_stage("umap"))?;
    umap::write_embedding_csv(out, &emb.coordinates, &z.labels)?;
    print_line(&format!(
        "rows={} dims={} final_loss={:.4}",
        z.n_samples(),
        emb.coordinates.ncols(),
        emb.final_loss
    ));
    Ok(())
}

fn cmd_select(ctx: &Context, args: &DataArgs) -> Result<()> {
    let out = ctx.out()?;
    let data = dataset::load_csv(&ctx.data(&args.data)?, &ctx.label_column)?;
    let (z, _) = dataset::standardize(&data)?;
    let y = z.labels_as_f64();
    let settings = &ctx.config.lasso;
    let (path, ranking, selected) = (|| {
        let grid = lasso::lambda_grid(&z.features, &y, settings.grid_count)?;
        let path = lasso::fit_path(&z.features, &y, &grid)?;
        let ranking = lasso::rank_features(&path, &z.feature_names)?;
        let selected = lasso::select(&path, &ranking, settings.strategy)?;
        Ok::<_, Error>((path, ranking, selected))
    })()
    .map_err(|e| e.in_stage("lasso"))?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    path.write_csv(&out.join(pipeline::LASSO_PATH_FILE))?;
    write_ranking_csv(&out.join(RANKING_FILE), &ranking)?;
    let names: Vec<&str> = selected.iter().map(|&j| z.feature_names[j].as_str()).collect();
    let strategy = match settings.strategy {
        SelectionStrategy::TopK(k) => format!("top_k({k})"),
        SelectionStrategy::LambdaAt(l) => format!("lambda_at({l})"),
        SelectionStrategy::MinMse => "min_mse".into(),
    };
    print_line(&format!("strategy={strategy} selected={}", names.join(",")));
    Ok(())
}

pub const RANKING_FILE: &str = "ranking.csv";

/// `rank,feature,entry_lambda`; features that never enter get `never`.
pub fn write_ranking_csv(path: &Path, ranking: &lasso::FeatureRanking) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["rank", "feature", "entry_lambda"]).map_err(|e| csv_error(path, e))?;
    for (r, &j) in ranking.order.iter().enumerate() {
        let entry = ranking.entry_lambda[j].map_or_else(|| "never".to_string(), |l| l.to_string());
        w.write_record([(r + 1).to_string(), ranking.names[j].clone(), entry])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a ranking written by [`write_ranking_csv`] as `(feature, entry_lambda)` rows.
pub fn read_ranking_csv(path: &Path) -> Result<Vec<(String, Option<f64>)>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let bad = |column: usize, message: &str| Error::Parse {
            path: path.to_path_buf(),
            row: i + 2,
            column,
            message: message.into(),
        };
        let name = rec.get(1).ok_or_else(|| bad(2, "missing feature"))?.to_string();
        let entry = match rec.get(2) {
            Some("never") => None,
            Some(v) => Some(v.parse::<f64>().map_err(|_| bad(3, "expected a number or `never`"))?),
            None => return Err(bad(3, "missing entry_lambda")),
        };
        rows.push((name, entry));
    }
    Ok(rows)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Schema(format!("{}: {other:?}", path.display())),
    }
}
