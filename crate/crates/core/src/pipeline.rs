//! Source-cluster pretraining, direct cross-cluster evaluation and
//! frozen-layer fine-tuning sweeps.
//!
//! Pipeline for one seed:
//!
//! 1. encode the raw table, min-max scale all rows for clustering only
//! 2. pick k by elbow, cluster, relabel clusters by size (0 = largest)
//! 3. split cluster 0 and cluster 1 into train/test
//! 4. fit the modeling scaler on cluster-0 train rows, pretrain, evaluate on
//!    cluster-0 test and cluster-1 test with that same scaler
//! 5. for each frozen count: copy the pretrained net, freeze, fine-tune on
//!    cluster-1 train with a fresh optimizer, evaluate on cluster-1 test

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{assign, elbow_select, KMeansOptions, WcssCurve, DEFAULT_RESTARTS};
use crate::data::{
    build_encoding_schema, encode, fit_minmax, fit_minmax_matrix, split_indices, EncodingSchema,
    NumericTable, RawTable, Scaler, DEFAULT_TARGET,
};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metrics::{EvalReport, Provenance};
use crate::nn::{
    fingerprint, init_mlp, train, LossHistory, Mlp, ModelBundle, TrainConfig, DEFAULT_WIDTHS,
};
use crate::seed::derive_seed;

pub const DEFAULT_K_MAX: usize = 10;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.7;
pub const DEFAULT_PRETRAIN_EPOCHS: usize = 500;
pub const DEFAULT_FINETUNE_EPOCHS: usize = 100;
pub const DEFAULT_BATCH_SIZE: usize = 10;

/// Period grades that can optionally be withheld from the features.
pub const PERIOD_GRADES: [&str; 2] = ["G1", "G2"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub dataset_path: PathBuf,
    /// Short name used in report provenance.
    pub dataset_id: String,
    pub target: String,
    pub drop_g1_g2: bool,
    pub k_max: usize,
    pub restarts: usize,
    pub seeds: Vec<u64>,
    pub widths: Vec<usize>,
    pub train_fraction: f64,
    /// `seed` is replaced by a per-run derived seed.
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    pub frozen_counts: Vec<usize>,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            dataset_path: PathBuf::new(),
            dataset_id: "dataset".into(),
            target: DEFAULT_TARGET.into(),
            drop_g1_g2: false,
            k_max: DEFAULT_K_MAX,
            restarts: DEFAULT_RESTARTS,
            seeds: vec![0],
            widths: DEFAULT_WIDTHS.to_vec(),
            train_fraction: DEFAULT_TRAIN_FRACTION,
            pretrain: TrainConfig {
                epochs: DEFAULT_PRETRAIN_EPOCHS,
                batch_size: DEFAULT_BATCH_SIZE,
                ..TrainConfig::default()
            },
            finetune: TrainConfig {
                epochs: DEFAULT_FINETUNE_EPOCHS,
                batch_size: DEFAULT_BATCH_SIZE,
                ..TrainConfig::default()
            },
            frozen_counts: vec![1, 2, 3],
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Argument("seeds must not be empty".into()));
        }
        if self.k_max < 3 {
            return Err(Error::Argument(format!(
                "k_max must be at least 3, got {}",
                self.k_max
            )));
        }
        if self.widths.is_empty() || self.widths.last() != Some(&1) {
            return Err(Error::Argument(format!(
                "widths must end with an output width of 1, got {:?}",
                self.widths
            )));
        }
        let depth = self.widths.len();
        if let Some(&bad) = self.frozen_counts.iter().find(|&&n| n == 0 || n >= depth) {
            return Err(Error::Argument(format!(
                "frozen_counts entry {bad} must lie in [1, {}]",
                depth - 1
            )));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Argument(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        self.pretrain.validate()?;
        self.finetune.validate()
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(self)
    }
}

/// Encoded dataset partitioned into size-ordered clusters.
#[derive(Debug, Clone)]
pub struct ClusteredDataset {
    pub schema: EncodingSchema,
    /// Encoded, unscaled.
    pub table: NumericTable,
    /// Min-max scaled over all rows; the matrix that was clustered.
    pub clustering_features: Matrix,
    pub k: usize,
    pub curve: WcssCurve,
    /// Per row, with cluster 0 the largest.
    pub labels: Vec<usize>,
    pub cluster_sizes: Vec<usize>,
}

impl ClusteredDataset {
    pub fn cluster_rows(&self, cluster: usize) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&i| self.labels[i] == cluster)
            .collect()
    }

    pub fn cluster_table(&self, cluster: usize) -> NumericTable {
        self.table.select_rows(&self.cluster_rows(cluster))
    }
}

pub fn encode_dataset(
    raw: &RawTable,
    plan: &ExperimentPlan,
) -> Result<(EncodingSchema, NumericTable)> {
    let mut schema = build_encoding_schema(raw, &plan.target)?;
    if plan.drop_g1_g2 {
        schema.exclude_features(&PERIOD_GRADES);
    }
    if schema.n_features() == 0 {
        return Err(Error::Schema(
            "no feature columns left after encoding".into(),
        ));
    }
    let table = encode(raw, &schema)?;
    Ok((schema, table))
}

/// Encodes, scales and clusters; clusters are relabelled by descending size.
pub fn cluster_dataset(
    raw: &RawTable,
    plan: &ExperimentPlan,
    seed: u64,
) -> Result<ClusteredDataset> {
    let (schema, table) = encode_dataset(raw, plan)?;
    let scaler = fit_minmax_matrix(table.features())?;
    let clustering_features = scaler.transform(table.features())?;
    let opts = KMeansOptions {
        restarts: plan.restarts,
        ..KMeansOptions::default()
    };
    let elbow = elbow_select(
        &clustering_features,
        plan.k_max,
        derive_seed(seed, "cluster"),
        &opts,
    )?;
    let raw_labels = assign(elbow.selected_model(), &clustering_features)?;

    let k = elbow.k;
    let mut counts = vec![0usize; k];
    for &l in &raw_labels {
        counts[l] += 1;
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    let mut relabel = vec![0usize; k];
    for (new, &old) in order.iter().enumerate() {
        relabel[old] = new;
    }
    let labels: Vec<usize> = raw_labels.iter().map(|&l| relabel[l]).collect();
    let cluster_sizes = order.iter().map(|&old| counts[old]).collect();

    Ok(ClusteredDataset {
        schema,
        table,
        clustering_features,
        k,
        curve: elbow.curve,
        labels,
        cluster_sizes,
    })
}

/// Paired targets and predictions for one evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictions {
    pub real: Vec<f64>,
    pub predicted: Vec<f64>,
}

/// Scales `table` with `scaler` (never refitted) and runs the network.
pub fn predict(mlp: &Mlp, scaler: &Scaler, table: &NumericTable) -> Result<Predictions> {
    let x = scaler.transform(table.features())?;
    Ok(Predictions {
        real: table.target().to_vec(),
        predicted: mlp.forward_batch(&x)?,
    })
}

fn evaluate(
    mlp: &Mlp,
    scaler: &Scaler,
    table: &NumericTable,
    provenance: Provenance,
) -> Result<(EvalReport, Predictions)> {
    let p = predict(mlp, scaler, table)?;
    let report = EvalReport::compute(&p.real, &p.predicted, provenance)?;
    Ok((report, p))
}

/// Pretrained source model plus the data splits it was evaluated on.
#[derive(Debug, Clone)]
pub struct SourceRun {
    pub seed: u64,
    pub bundle: ModelBundle,
    pub history: LossHistory,
    pub source_report: EvalReport,
    pub source_predictions: Predictions,
    pub direct_report: EvalReport,
    pub direct_predictions: Predictions,
    /// Cluster-1 splits, unscaled.
    pub target_train: NumericTable,
    pub target_test: NumericTable,
}

impl SourceRun {
    /// Cluster-1 test evaluation of the pretrained net, using the source scaler.
    pub fn evaluate_direct(&self) -> Result<Predictions> {
        predict(&self.bundle.mlp, &self.bundle.scaler, &self.target_test)
    }
}

fn provenance(
    plan: &ExperimentPlan,
    cluster: usize,
    split: &str,
    frozen: Option<usize>,
    seed: u64,
) -> Provenance {
    Provenance {
        dataset: plan.dataset_id.clone(),
        cluster,
        split: split.into(),
        frozen,
        seed,
    }
}

fn split_cluster(
    data: &ClusteredDataset,
    cluster: usize,
    fraction: f64,
    seed: u64,
) -> Result<(NumericTable, NumericTable)> {
    let table = data.cluster_table(cluster);
    let (tr, te) = split_indices(table.n_rows(), fraction, seed)
        .map_err(|e| Error::Split(format!("cluster {cluster}: {e}")))?;
    Ok((table.select_rows(&tr), table.select_rows(&te)))
}

/// Trains on cluster 0 and evaluates on both clusters' test rows.
pub fn run_source_training(
    plan: &ExperimentPlan,
    data: &ClusteredDataset,
    seed: u64,
) -> Result<SourceRun> {
    if data.k < 2 {
        return Err(Error::Argument(
            "need at least two clusters for transfer".into(),
        ));
    }
    let (source_train, source_test) = split_cluster(
        data,
        0,
        plan.train_fraction,
        derive_seed(seed, "split-source"),
    )?;
    let (target_train, target_test) = split_cluster(
        data,
        1,
        plan.train_fraction,
        derive_seed(seed, "split-target"),
    )?;

    let scaler = fit_minmax(&source_train)?;
    let scaled_train = crate::data::apply_minmax(&scaler, &source_train)?;
    let net = init_mlp(
        scaled_train.n_features(),
        &plan.widths,
        derive_seed(seed, "init"),
    )?;
    let cfg = TrainConfig {
        seed: derive_seed(seed, "pretrain"),
        ..plan.pretrain
    };
    let (mlp, history) = train(&net, &scaled_train, &cfg)?;

    let (source_report, source_predictions) = evaluate(
        &mlp,
        &scaler,
        &source_test,
        provenance(plan, 0, "test", None, seed),
    )?;
    let (direct_report, direct_predictions) = evaluate(
        &mlp,
        &scaler,
        &target_test,
        provenance(plan, 1, "test", None, seed),
    )?;

    Ok(SourceRun {
        seed,
        bundle: ModelBundle {
            mlp,
            schema: data.schema.clone(),
            scaler,
            seed,
            config_fingerprint: plan.fingerprint(),
        },
        history,
        source_report,
        source_predictions,
        direct_report,
        direct_predictions,
        target_train,
        target_test,
    })
}

#[derive(Debug, Clone)]
pub struct TransferRun {
    pub n_frozen: usize,
    pub model: Mlp,
    pub history: LossHistory,
    pub report: EvalReport,
    pub predictions: Predictions,
}

/// Fine-tunes the pretrained net on cluster-1 train rows with the first
/// `n_frozen` layers frozen and a fresh optimizer, then scores cluster-1 test.
pub fn run_transfer(
    plan: &ExperimentPlan,
    source: &SourceRun,
    n_frozen: usize,
    finetune: &TrainConfig,
    seed: u64,
) -> Result<TransferRun> {
    let depth = source.bundle.mlp.depth();
    if n_frozen == 0 || n_frozen >= depth {
        return Err(Error::Argument(format!(
            "frozen layer count {n_frozen} must lie in [1, {}]",
            depth - 1
        )));
    }
    let scaler = &source.bundle.scaler;
    let mut net = source.bundle.mlp.clone();
    net.set_frozen(n_frozen)?;
    let train_set = crate::data::apply_minmax(scaler, &source.target_train)?;
    let cfg = TrainConfig {
        seed: derive_seed(seed, "finetune"),
        ..*finetune
    };
    let (model, history) = train(&net, &train_set, &cfg)?;
    let (report, predictions) = evaluate(
        &model,
        scaler,
        &source.target_test,
        provenance(plan, 1, "test", Some(n_frozen), seed),
    )?;
    Ok(TransferRun {
        n_frozen,
        model,
        history,
        report,
        predictions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum StageResult {
    Completed {
        report: EvalReport,
        history: LossHistory,
        predictions: Predictions,
    },
    Failed {
        error: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferOutcome {
    pub n_frozen: usize,
    /// SHA-256 of the parameters the branch started from.
    pub start_fingerprint: String,
    pub result: StageResult,
}

impl TransferOutcome {
    pub fn report(&self) -> Option<&EvalReport> {
        match &self.result {
            StageResult::Completed { report, .. } => Some(report),
            StageResult::Failed { .. } => None,
        }
    }
}

/// Everything one seed of a sweep produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub dataset: String,
    pub plan_fingerprint: String,
    pub seed: u64,
    pub k: usize,
    pub wcss_curve: WcssCurve,
    /// Cluster 0 first.
    pub cluster_sizes: Vec<usize>,
    pub source: EvalReport,
    pub source_predictions: Predictions,
    pub direct: EvalReport,
    pub direct_predictions: Predictions,
    pub pretrain_history: LossHistory,
    pub transfers: Vec<TransferOutcome>,
    #[serde(skip)]
    pub pretrained: Option<ModelBundle>,
}

impl ExperimentResult {
    /// Completed transfer report with the lowest RMSE.
    pub fn best_transfer(&self) -> Option<&EvalReport> {
        self.transfers
            .iter()
            .filter_map(TransferOutcome::report)
            .min_by(|a, b| a.rmse.total_cmp(&b.rmse))
    }
}

fn params_fingerprint(mlp: &Mlp) -> String {
    let flat: Vec<Vec<f64>> = mlp
        .layers()
        .iter()
        .map(|l| {
            l.weights
                .as_slice()
                .iter()
                .chain(&l.bias)
                .copied()
                .collect()
        })
        .collect();
    fingerprint(&flat)
}

/// Pretrains once, then fine-tunes one branch per frozen count from the same
/// pretrained parameters. Failed branches are kept and marked.
pub fn frozen_layer_sweep_on(
    plan: &ExperimentPlan,
    data: &ClusteredDataset,
    seed: u64,
) -> Result<ExperimentResult> {
    plan.validate()?;
    let source = run_source_training(plan, data, seed)?;
    let start = params_fingerprint(&source.bundle.mlp);
    let transfers = plan
        .frozen_counts
        .par_iter()
        .map(|&n| {
            let result = match run_transfer(plan, &source, n, &plan.finetune, seed) {
                Ok(run) => StageResult::Completed {
                    report: run.report,
                    history: run.history,
                    predictions: run.predictions,
                },
                Err(e) => StageResult::Failed {
                    error: e.to_string(),
                },
            };
            TransferOutcome {
                n_frozen: n,
                start_fingerprint: start.clone(),
                result,
            }
        })
        .collect();

    Ok(ExperimentResult {
        dataset: plan.dataset_id.clone(),
        plan_fingerprint: plan.fingerprint(),
        seed,
        k: data.k,
        wcss_curve: data.curve.clone(),
        cluster_sizes: data.cluster_sizes.clone(),
        source: source.source_report,
        source_predictions: source.source_predictions,
        direct: source.direct_report,
        direct_predictions: source.direct_predictions,
        pretrain_history: source.history,
        transfers,
        pretrained: Some(source.bundle),
    })
}

pub fn frozen_layer_sweep(
    plan: &ExperimentPlan,
    raw: &RawTable,
    seed: u64,
) -> Result<ExperimentResult> {
    plan.validate()?;
    let data = cluster_dataset(raw, plan, seed)?;
    frozen_layer_sweep_on(plan, &data, seed)
}

/// Runs the sweep for every seed in the plan.
pub fn run_plan(plan: &ExperimentPlan, raw: &RawTable) -> Result<Vec<ExperimentResult>> {
    plan.validate()?;
    plan.seeds
        .par_iter()
        .map(|&s| frozen_layer_sweep(plan, raw, s))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    SourceTest,
    TargetDirect,
    Transfer,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::SourceTest => "source_test",
            Stage::TargetDirect => "target_direct",
            Stage::Transfer => "transfer",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub stage: Stage,
    pub frozen: Option<usize>,
    pub n_seeds: usize,
    pub rmse: MeanStd,
    pub mae: MeanStd,
    pub r2: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub dataset: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<SummaryRow>,
}

impl SummaryTable {
    pub fn row(&self, stage: Stage, frozen: Option<usize>) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|r| r.stage == stage && r.frozen == frozen)
    }
}

fn summarize(stage: Stage, frozen: Option<usize>, reports: &[&EvalReport]) -> Option<SummaryRow> {
    if reports.is_empty() {
        return None;
    }
    let col =
        |f: fn(&EvalReport) -> f64| MeanStd::of(&reports.iter().map(|r| f(r)).collect::<Vec<_>>());
    Some(SummaryRow {
        stage,
        frozen,
        n_seeds: reports.len(),
        rmse: col(|r| r.rmse),
        mae: col(|r| r.mae),
        r2: col(|r| r.r2),
    })
}

/// Mean and standard deviation per metric, per stage and frozen count.
pub fn aggregate_seeds(results: &[ExperimentResult]) -> Result<SummaryTable> {
    let first = results
        .first()
        .ok_or_else(|| Error::Argument("no results to aggregate".into()))?;
    if let Some(other) = results
        .iter()
        .find(|r| r.plan_fingerprint != first.plan_fingerprint)
    {
        return Err(Error::Argument(format!(
            "results come from different plans (seed {} vs seed {})",
            first.seed, other.seed
        )));
    }

    let mut rows = Vec::new();
    let source: Vec<&EvalReport> = results.iter().map(|r| &r.source).collect();
    let direct: Vec<&EvalReport> = results.iter().map(|r| &r.direct).collect();
    rows.extend(summarize(Stage::SourceTest, None, &source));
    rows.extend(summarize(Stage::TargetDirect, None, &direct));

    let mut counts: Vec<usize> = results
        .iter()
        .flat_map(|r| r.transfers.iter().map(|t| t.n_frozen))
        .collect();
    counts.sort_unstable();
    counts.dedup();
    for n in counts {
        let reports: Vec<&EvalReport> = results
            .iter()
            .flat_map(|r| r.transfers.iter())
            .filter(|t| t.n_frozen == n)
            .filter_map(TransferOutcome::report)
            .collect();
        rows.extend(summarize(Stage::Transfer, Some(n), &reports));
    }

    Ok(SummaryTable {
        dataset: first.dataset.clone(),
        seeds: results.iter().map(|r| r.seed).collect(),
        rows,
    })
}
