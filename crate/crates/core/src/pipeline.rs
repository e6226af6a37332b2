//! End-to-end composition: split → standardize → balance → UMAP → LASSO →
//! feature assembly → SARN → metrics, plus artifact persistence.
//!
//! Every random stage draws its seed from `PipelineConfig::seed` plus a fixed
//! offset (see the `SEED_*` constants); seed fields inside the nested stage
//! configs are overwritten.

use std::fs;
use std::path::Path;
use std::time::Instant;

use ndarray::{concatenate, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::{self, Dataset, SplitSpec, StandardizationParams};
use crate::error::{Error, Result};
use crate::lasso::{self, FeatureRanking, LassoPath, SelectionStrategy};
use crate::metrics::{self, MetricsReport};
use crate::rng::child_seed;
use crate::sarn::{self, ArchConfig, SarnArch, SarnModel, TrainConfig, TrainHistory};
use crate::umap::{self, NeighborGraph, UmapConfig};

pub const SEED_SPLIT: u64 = 1;
pub const SEED_BALANCE: u64 = 2;
pub const SEED_UMAP: u64 = 3;
pub const SEED_SARN_INIT: u64 = 4;
pub const SEED_SARN_TRAIN: u64 = 5;

pub const ARTIFACT_VERSION: u32 = 1;

pub const STANDARDIZATION_FILE: &str = "standardization.json";
pub const GRAPH_FILE: &str = "graph.json";
pub const EMBEDDING_FILE: &str = "embedding.csv";
pub const LASSO_PATH_FILE: &str = "lasso_path.csv";
pub const SELECTION_FILE: &str = "selection.json";
pub const MODEL_FILE: &str = "model.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Balance {
    #[default]
    None,
    Oversample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    SelectedOnly,
    EmbeddingOnly,
    #[default]
    SelectedPlusEmbedding,
}

impl FeatureMode {
    pub fn uses_embedding(self) -> bool {
        self != FeatureMode::SelectedOnly
    }

    pub fn uses_selection(self) -> bool {
        self != FeatureMode::EmbeddingOnly
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LassoSettings {
    pub grid_count: usize,
    pub strategy: SelectionStrategy,
}

impl Default for LassoSettings {
    fn default() -> Self {
        Self {
            grid_count: lasso::DEFAULT_PATH_LENGTH,
            strategy: SelectionStrategy::MinMse,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SarnSettings {
    pub arch: ArchConfig,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub balance: Balance,
    pub umap: UmapConfig,
    pub lasso: LassoSettings,
    pub feature_mode: FeatureMode,
    pub sarn: SarnSettings,
    pub split: SplitSpec,
    pub seed: u64,
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_mode.uses_embedding() {
            self.umap.validate()?;
        }
        if self.lasso.grid_count == 0 {
            return Err(Error::Config("lasso.grid_count must be positive".into()));
        }
        self.sarn.train.validate()?;
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "split.train_fraction {} outside (0, 1)",
                self.split.train_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Fitted UMAP state needed to place new points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphArtifact {
    /// Standardized training rows the graph was built on.
    pub reference: Array2<f64>,
    pub graph: NeighborGraph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub feature_mode: FeatureMode,
    pub strategy: SelectionStrategy,
    /// Whether the LASSO path was fitted (false when the strategy keeps every feature).
    pub lasso_ran: bool,
    /// Indices into the original feature columns, in model-input order.
    pub selected: Vec<usize>,
    pub selected_names: Vec<String>,
    pub ranking: Option<FeatureRanking>,
    /// Scaling applied to embedding coordinates before they enter the model.
    pub embedding_scaling: Option<StandardizationParams>,
    /// Names of the model input columns.
    pub model_inputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub artifact_version: u32,
    pub stages: Vec<String>,
    pub timings: Vec<StageTiming>,
    pub config: PipelineConfig,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
    pub train_rows: usize,
    pub test_rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineArtifacts {
    pub manifest: Manifest,
    pub standardization: StandardizationParams,
    pub graph: Option<GraphArtifact>,
    /// Training-set layout and the labels of its rows.
    pub embedding: Option<(Array2<f64>, Vec<usize>)>,
    pub lasso_path: Option<LassoPath>,
    pub selection: Selection,
    pub model: SarnModel,
    pub history: TrainHistory,
    pub metrics: MetricsReport,
}

struct Timer {
    stages: Vec<String>,
    timings: Vec<StageTiming>,
}

impl Timer {
    fn run<T>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        log::info!("stage {stage}");
        let out = f().map_err(|e| e.in_stage(stage))?;
        self.stages.push(stage.to_string());
        self.timings.push(StageTiming {
            stage: stage.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        Ok(out)
    }
}

fn keeps_all_features(strategy: SelectionStrategy, p: usize) -> bool {
    matches!(strategy, SelectionStrategy::TopK(k) if k == p)
}

fn with_seeds(config: &PipelineConfig) -> PipelineConfig {
    let mut cfg = config.clone();
    cfg.split.seed = child_seed(config.seed, SEED_SPLIT);
    cfg.umap.seed = child_seed(config.seed, SEED_UMAP);
    cfg.sarn.train.seed = child_seed(config.seed, SEED_SARN_TRAIN);
    cfg
}

/// Runs every stage on `data` and returns the fitted artifacts.
pub fn run(data: &Dataset, config: &PipelineConfig) -> Result<PipelineArtifacts> {
    config.validate()?;
    let cfg = with_seeds(config);
    if data.n_classes() < 2 {
        return Err(Error::invalid("at least two classes are required"));
    }
    let mut timer = Timer {
        stages: Vec::new(),
        timings: Vec::new(),
    };

    let (train_raw, test_raw) = timer.run("split", || dataset::stratified_split(data, &cfg.split))?;
    let (standardization, mut train, test) = timer.run("standardize", || {
        let params = StandardizationParams::fit(&train_raw.features, &train_raw.feature_names)?;
        let train = Dataset {
            features: params.apply(&train_raw.features)?,
            ..train_raw.clone()
        };
        let test = Dataset {
            features: params.apply(&test_raw.features)?,
            ..test_raw.clone()
        };
        Ok((params, train, test))
    })?;
    if cfg.balance == Balance::Oversample {
        train = timer.run("balance", || dataset::oversample(&train, child_seed(cfg.seed, SEED_BALANCE)))?;
    }

    let mut graph = None;
    let mut embedding = None;
    let (mut train_emb, mut test_emb) = (None, None);
    if cfg.feature_mode.uses_embedding() {
        let (g, e, te) = timer.run("umap", || {
            let (g, e) = umap::embed(&train.features, &cfg.umap)?;
            let te = umap::transform_points(&train.features, &g, &e.coordinates, &test.features)?;
            Ok((g, e, te))
        })?;
        train_emb = Some(e.coordinates.clone());
        test_emb = Some(te);
        embedding = Some((e.coordinates, train.labels.clone()));
        graph = Some(GraphArtifact {
            reference: train.features.clone(),
            graph: g,
        });
    }

    let p = data.n_features();
    let mut lasso_path = None;
    let mut ranking = None;
    let mut selected: Vec<usize> = Vec::new();
    if cfg.feature_mode.uses_selection() {
        if keeps_all_features(cfg.lasso.strategy, p) {
            selected = (0..p).collect();
        } else {
            let (path, rank, sel) = timer.run("lasso", || {
                let y = train.labels_as_f64();
                let grid = lasso::lambda_grid(&train.features, &y, cfg.lasso.grid_count)?;
                let path = lasso::fit_path(&train.features, &y, &grid)?;
                let rank = lasso::rank_features(&path, &train.feature_names)?;
                let sel = lasso::select(&path, &rank, cfg.lasso.strategy)?;
                Ok((path, rank, sel))
            })?;
            lasso_path = Some(path);
            ranking = Some(rank);
            selected = sel;
        }
    }

    let (selection, x_train, x_test) = timer.run("assemble", || {
        if cfg.feature_mode == FeatureMode::SelectedOnly && selected.is_empty() {
            return Err(Error::Config("LASSO selected no features and feature_mode is selected_only".into()));
        }
        let mut embedding_scaling = None;
        let mut train_parts = vec![train.features.select(Axis(1), &selected)];
        let mut test_parts = vec![test.features.select(Axis(1), &selected)];
        let mut model_inputs: Vec<String> = selected.iter().map(|&j| data.feature_names[j].clone()).collect();
        if let (Some(te), Some(se)) = (&train_emb, &test_emb) {
            let names: Vec<String> = (0..te.ncols()).map(|c| format!("umap_{c}")).collect();
            let scaling = StandardizationParams::fit(te, &names)?;
            train_parts.push(scaling.apply(te)?);
            test_parts.push(scaling.apply(se)?);
            model_inputs.extend(names);
            embedding_scaling = Some(scaling);
        }
        let join = |parts: Vec<Array2<f64>>| -> Result<Array2<f64>> {
            let views: Vec<_> = parts.iter().map(|a| a.view()).collect();
            concatenate(Axis(1), &views).map_err(|e| Error::invalid(e.to_string()))
        };
        let selection = Selection {
            feature_mode: cfg.feature_mode,
            strategy: cfg.lasso.strategy,
            lasso_ran: lasso_path.is_some(),
            selected_names: selected.iter().map(|&j| data.feature_names[j].clone()).collect(),
            selected: selected.clone(),
            ranking: ranking.clone(),
            embedding_scaling,
            model_inputs,
        };
        Ok((selection, join(train_parts)?, join(test_parts)?))
    })?;

    let (model, history) = timer.run("sarn", || {
        let arch = SarnArch::resolve(&cfg.sarn.arch, x_train.ncols(), data.n_classes())?;
        let init = SarnModel::init(arch, child_seed(cfg.seed, SEED_SARN_INIT))?;
        sarn::train(
            &x_train,
            &train.labels,
            Some((&x_test, &test.labels)),
            init,
            &cfg.sarn.train,
        )
    })?;

    let metrics = timer.run("evaluate", || {
        let (_, pred) = model.predict(&x_test)?;
        metrics::evaluate(&test.labels, &pred, data.n_classes())
    })?;

    let manifest = Manifest {
        version: crate::VERSION.to_string(),
        artifact_version: ARTIFACT_VERSION,
        stages: timer.stages,
        timings: timer.timings,
        config: cfg,
        feature_names: data.feature_names.clone(),
        class_names: data.class_names.clone(),
        train_rows: train.n_samples(),
        test_rows: test.n_samples(),
    };
    Ok(PipelineArtifacts {
        manifest,
        standardization,
        graph,
        embedding,
        lasso_path,
        selection,
        model,
        history,
        metrics,
    })
}

/// Maps raw feature rows (original training schema) to model inputs.
pub fn transform_new(artifacts: &PipelineArtifacts, x_new: &Array2<f64>) -> Result<Array2<f64>> {
    let width = artifacts.manifest.feature_names.len();
    if x_new.ncols() != width {
        return Err(Error::Schema(format!("expected {width} feature columns, got {}", x_new.ncols())));
    }
    let z = artifacts.standardization.apply(x_new)?;
    let mut parts = vec![z.select(Axis(1), &artifacts.selection.selected)];
    if let Some(g) = &artifacts.graph {
        let (coords, _) = artifacts
            .embedding
            .as_ref()
            .ok_or_else(|| Error::Schema("graph present without embedding".into()))?;
        let e = umap::transform_points(&g.reference, &g.graph, coords, &z)?;
        let e = match &artifacts.selection.embedding_scaling {
            Some(s) => s.apply(&e)?,
            None => e,
        };
        parts.push(e);
    }
    let views: Vec<_> = parts.iter().map(|a| a.view()).collect();
    concatenate(Axis(1), &views).map_err(|e| Error::invalid(e.to_string()))
}

/// Probabilities and labels for raw feature rows.
pub fn predict(artifacts: &PipelineArtifacts, x_new: &Array2<f64>) -> Result<(Array2<f64>, Vec<usize>)> {
    artifacts.model.predict(&transform_new(artifacts, x_new)?)
}

/// Matches the columns of a dataset to the training schema by name.
pub fn align_columns(artifacts: &PipelineArtifacts, data: &Dataset) -> Result<Array2<f64>> {
    let mut cols = Vec::with_capacity(artifacts.manifest.feature_names.len());
    for name in &artifacts.manifest.feature_names {
        let j = data
            .feature_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Schema(format!("input is missing feature column `{name}`")))?;
        cols.push(j);
    }
    Ok(data.features.select(Axis(1), &cols))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::invalid(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphDoc {
    format: String,
    version: u32,
    k: usize,
    rho: Vec<f64>,
    sigma: Vec<f64>,
    edges: Vec<umap::Edge>,
    reference: Array2<f64>,
    graph: NeighborGraph,
}

impl PipelineArtifacts {
    /// Writes the artifacts directory. Files for stages that did not run are
    /// omitted.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_json(&dir.join(STANDARDIZATION_FILE), &self.standardization)?;
        if let Some(g) = &self.graph {
            let doc = GraphDoc {
                format: "ummaso-graph".into(),
                version: ARTIFACT_VERSION,
                k: g.graph.k,
                rho: g.graph.rho.to_vec(),
                sigma: g.graph.sigma.to_vec(),
                edges: g.graph.edges.clone(),
                reference: g.reference.clone(),
                graph: g.graph.clone(),
            };
            write_json(&dir.join(GRAPH_FILE), &doc)?;
        }
        if let Some((coords, labels)) = &self.embedding {
            umap::write_embedding_csv(&dir.join(EMBEDDING_FILE), coords, labels)?;
        }
        if let Some(path) = &self.lasso_path {
            path.write_csv(&dir.join(LASSO_PATH_FILE))?;
        }
        write_json(&dir.join(SELECTION_FILE), &self.selection)?;
        self.model.save(&dir.join(MODEL_FILE))?;
        self.history.write_csv(&dir.join(HISTORY_FILE))?;
        self.metrics.write_json(&dir.join(METRICS_FILE))?;
        write_json(&dir.join(MANIFEST_FILE), &self.manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: Manifest = read_json(&dir.join(MANIFEST_FILE))?;
        if manifest.artifact_version != ARTIFACT_VERSION {
            return Err(Error::Schema(format!(
                "unsupported artifact version {}",
                manifest.artifact_version
            )));
        }
        let standardization: StandardizationParams = read_json(&dir.join(STANDARDIZATION_FILE))?;
        let selection: Selection = read_json(&dir.join(SELECTION_FILE))?;
        let uses_embedding = selection.feature_mode.uses_embedding();
        let graph = if uses_embedding {
            let doc: GraphDoc = read_json(&dir.join(GRAPH_FILE))?;
            if doc.reference.nrows() != doc.graph.n_vertices() || doc.reference.ncols() != manifest.feature_names.len() {
                return Err(Error::Schema("graph reference does not match the graph".into()));
            }
            Some(GraphArtifact {
                reference: doc.reference,
                graph: doc.graph,
            })
        } else {
            None
        };
        let embedding = if uses_embedding {
            let (coords, labels) = umap::read_embedding_csv(&dir.join(EMBEDDING_FILE))?;
            if coords.nrows() != graph.as_ref().map_or(0, |g| g.reference.nrows()) {
                return Err(Error::Schema("embedding rows do not match the graph".into()));
            }
            Some((coords, labels))
        } else {
            None
        };
        let lasso_path = if selection.lasso_ran {
            Some(LassoPath::read_csv(&dir.join(LASSO_PATH_FILE))?)
        } else {
            None
        };
        let model = SarnModel::load(&dir.join(MODEL_FILE))?;
        let history = TrainHistory::read_csv(&dir.join(HISTORY_FILE))?;
        let metrics = MetricsReport::read_json(&dir.join(METRICS_FILE))?;
        let p = manifest.feature_names.len();
        if standardization.means.len() != p || selection.selected.iter().any(|&j| j >= p) {
            return Err(Error::Schema("standardization or selection does not match the feature schema".into()));
        }
        if model.input_width() != selection.model_inputs.len() {
            return Err(Error::Schema("model input width does not match the selection".into()));
        }
        Ok(Self {
            manifest,
            standardization,
            graph,
            embedding,
            lasso_path,
            selection,
            model,
            history,
            metrics,
        })
    }
}
