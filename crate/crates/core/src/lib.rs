//! Transfer learning for tabular regression under cluster-induced
//! distribution shift.
//!
//! A dataset is partitioned with K-means (cluster count picked by an elbow
//! rule), a dense regressor is pretrained on the largest cluster, and then
//! fine-tuned on the next cluster with its leading layers frozen. RMSE, MAE
//! and R² are reported before and after transfer.

pub mod cluster;
pub mod data;
mod error;
mod fsutil;
pub mod matrix;
pub mod metrics;
pub mod nn;
pub mod pca;
pub mod pipeline;
pub mod seed;

pub use cluster::{
    assign, elbow_select, kmeans, kmeans_best_of, wcss, ClusterModel, KMeansOptions, WcssCurve,
};
pub use data::{
    apply_minmax, build_encoding_schema, encode, fit_minmax, parse_table, split_train_test,
    EncodingSchema, NumericTable, RawTable, Scaler,
};
pub use error::{Error, Result};
pub use fsutil::write_atomic;
pub use matrix::Matrix;
pub use metrics::{mae, r2, rmse, EvalReport, Provenance};
pub use nn::{
    adam_step, backward, freeze_layers, init_mlp, load_model, mae_loss, save_model, train, Mlp,
    ModelBundle, TrainConfig,
};
pub use pca::{export_scatter, fit_pca, project, PcaModel};
pub use pipeline::{
    aggregate_seeds, frozen_layer_sweep, run_source_training, run_transfer, ExperimentPlan,
    ExperimentResult, SummaryTable,
};
