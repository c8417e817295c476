//! Command-line driver: runs experiment plans from a TOML config and writes a
//! report directory of tables, curves, scatters and model files.

pub mod config;
pub mod render;
pub mod svg;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use shiftlearn_core::nn::save_model;
use shiftlearn_core::pca::scatter_csv;
use shiftlearn_core::pipeline::{
    cluster_dataset, frozen_layer_sweep_on, ClusteredDataset, StageResult,
};
use shiftlearn_core::{
    aggregate_seeds, fit_pca, parse_table, project, ExperimentPlan, ExperimentResult, RawTable,
};

pub use config::{ConfigError, Format, RunConfig};
use render::{render_loss_curve, render_scatter, render_tables, write_file};

#[derive(Parser, Debug)]
#[command(
    name = "shiftlearn",
    version,
    about = "Cluster-shift transfer learning experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Pick k by elbow and write the WCSS curve and cluster labels.
    Cluster(CommonArgs),
    /// Train on the largest cluster and evaluate on both clusters.
    Pretrain(CommonArgs),
    /// Pretrain, then fine-tune with the given frozen counts.
    Transfer(CommonArgs),
    /// Full pipeline: pretrain once per seed, fine-tune every frozen count.
    Sweep(CommonArgs),
    /// Re-render tables from a results.json written by an earlier run.
    Report(CommonArgs),
    /// Project the clustered data onto two principal components.
    Pca(CommonArgs),
}

#[derive(Args, Debug, Default)]
struct CommonArgs {
    /// TOML run configuration.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Dataset CSV (results.json for `report`); overrides the config.
    #[arg(long, value_name = "PATH")]
    input: Option<PathBuf>,
    /// Report directory; for `pca` a path ending in .csv names the file.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Run only this seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Frozen layer count; repeat for several.
    #[arg(long, value_name = "N")]
    frozen: Vec<usize>,
    /// Output format; repeat for several.
    #[arg(long, value_name = "csv|md|svg", value_parser = parse_format)]
    format: Vec<Format>,
}

fn parse_format(s: &str) -> Result<Format, String> {
    Format::parse(s).ok_or_else(|| format!("unknown format `{s}`, expected csv, md or svg"))
}

/// Runs the CLI and returns the process exit code: 0 on success, 1 on a
/// runtime or config failure, 2 on a usage error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("usage error");
            eprintln!("{first} (see `shiftlearn --help`)");
            return 2;
        }
    };
    match dispatch(cli.command) {
        Ok(summary) => {
            for line in summary {
                println!("{line}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            1
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<Vec<String>> {
    match command {
        Command::Cluster(a) => cmd_cluster(&resolve(&a)?),
        Command::Pretrain(a) => {
            let mut cfg = resolve(&a)?;
            cfg.frozen_counts.clear();
            cmd_sweep(&cfg)
        }
        Command::Transfer(a) => {
            let cfg = resolve(&a)?;
            if cfg.frozen_counts.is_empty() {
                bail!("config field `frozen_counts`: transfer needs at least one frozen count");
            }
            cmd_sweep(&cfg)
        }
        Command::Sweep(a) => cmd_sweep(&resolve(&a)?),
        Command::Report(a) => cmd_report(&a),
        Command::Pca(a) => cmd_pca(&resolve(&a)?, a.out.as_deref()),
    }
}

/// Config file (or defaults) with command-line overrides applied, validated.
fn resolve(args: &CommonArgs) -> anyhow::Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(input) = &args.input {
        cfg.dataset = input.clone();
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.seeds = vec![seed];
    }
    if !args.frozen.is_empty() {
        cfg.frozen_counts = args.frozen.clone();
    }
    if !args.format.is_empty() {
        cfg.formats = args.format.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_dataset(path: &Path) -> anyhow::Result<RawTable> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read dataset {}", path.display()))?;
    parse_table(&text).with_context(|| format!("dataset {}", path.display()))
}

fn cluster_seed(
    cfg: &RunConfig,
    plan: &ExperimentPlan,
    raw: &RawTable,
    seed: u64,
) -> anyhow::Result<ClusteredDataset> {
    let data = cluster_dataset(raw, plan, seed)?;
    let out = &cfg.output_dir;
    write_file(
        &out.join(format!("curves/wcss_seed{seed}.csv")),
        &data.curve.to_csv(),
    )?;
    if cfg.wants(Format::Svg) {
        let plot = svg::line_plot(
            &format!("WCSS by k, seed {seed} (elbow k={})", data.k),
            "k",
            "WCSS",
            1.0,
            &data.curve.values,
            Some(data.k - 1),
        );
        write_file(&out.join(format!("curves/wcss_seed{seed}.svg")), &plot)?;
    }
    Ok(data)
}

fn cmd_cluster(cfg: &RunConfig) -> anyhow::Result<Vec<String>> {
    let plan = cfg.to_plan();
    let raw = load_dataset(&cfg.dataset)?;
    let mut lines = Vec::new();
    for &seed in &cfg.seeds {
        let data = cluster_seed(cfg, &plan, &raw, seed)?;
        let mut labels = String::from("row,cluster\n");
        for (i, l) in data.labels.iter().enumerate() {
            labels.push_str(&format!("{i},{l}\n"));
        }
        write_file(
            &cfg.output_dir.join(format!("clusters_seed{seed}.csv")),
            &labels,
        )?;
        lines.push(format!(
            "seed {seed}: k={} cluster sizes {:?}",
            data.k, data.cluster_sizes
        ));
    }
    Ok(lines)
}

fn pca_artifacts(
    data: &ClusteredDataset,
    csv_path: &Path,
    title: &str,
    with_svg: bool,
) -> anyhow::Result<()> {
    let model = fit_pca(&data.clustering_features)?;
    let coords = project(&model, &data.clustering_features)?;
    write_file(csv_path, &scatter_csv(&coords, &data.labels)?)?;
    if with_svg {
        let plot = svg::cluster_scatter(title, &coords.column(0), &coords.column(1), &data.labels);
        write_file(&csv_path.with_extension("svg"), &plot)?;
    }
    Ok(())
}

fn cmd_pca(cfg: &RunConfig, out: Option<&Path>) -> anyhow::Result<Vec<String>> {
    let plan = cfg.to_plan();
    let raw = load_dataset(&cfg.dataset)?;
    let seed = cfg.seeds[0];
    let data = cluster_dataset(&raw, &plan, seed)?;
    let path = match out {
        Some(p) if p.extension().is_some_and(|e| e == "csv") => p.to_path_buf(),
        _ => cfg.output_dir.join(format!("scatter/pca_seed{seed}.csv")),
    };
    let title = format!("{} clusters in PCA space (k={})", plan.dataset_id, data.k);
    pca_artifacts(&data, &path, &title, cfg.wants(Format::Svg))?;
    Ok(vec![format!("wrote {}", path.display())])
}

fn write_seed_artifacts(cfg: &RunConfig, result: &ExperimentResult) -> anyhow::Result<()> {
    let out = &cfg.output_dir;
    let seed = result.seed;
    let svg = cfg.wants(Format::Svg);
    if let Some(bundle) = &result.pretrained {
        let path = out.join(format!("model/pretrained_seed{seed}.json"));
        std::fs::create_dir_all(out.join("model"))?;
        save_model(bundle, &path).with_context(|| format!("cannot write {}", path.display()))?;
    }
    if cfg.emit_loss_curves {
        render_loss_curve(
            &result.pretrain_history,
            &out.join(format!("curves/pretrain_loss_seed{seed}.csv")),
            &format!("Pretraining loss, seed {seed}"),
            svg,
        )?;
    }
    render_scatter(
        &result.source_predictions.real,
        &result.source_predictions.predicted,
        &out.join(format!("scatter/source_test_seed{seed}.csv")),
        &format!("Cluster 0 test, seed {seed}"),
        svg,
    )?;
    render_scatter(
        &result.direct_predictions.real,
        &result.direct_predictions.predicted,
        &out.join(format!("scatter/target_direct_seed{seed}.csv")),
        &format!("Cluster 1 test without transfer, seed {seed}"),
        svg,
    )?;
    for t in &result.transfers {
        if let StageResult::Completed {
            history,
            predictions,
            ..
        } = &t.result
        {
            let n = t.n_frozen;
            if cfg.emit_loss_curves {
                render_loss_curve(
                    history,
                    &out.join(format!("curves/finetune_loss_frozen{n}_seed{seed}.csv")),
                    &format!("Fine-tuning loss, {n} frozen, seed {seed}"),
                    svg,
                )?;
            }
            render_scatter(
                &predictions.real,
                &predictions.predicted,
                &out.join(format!("scatter/transfer_frozen{n}_seed{seed}.csv")),
                &format!("Cluster 1 test after transfer, {n} frozen, seed {seed}"),
                svg,
            )?;
        }
    }
    Ok(())
}

fn cmd_sweep(cfg: &RunConfig) -> anyhow::Result<Vec<String>> {
    let plan = cfg.to_plan();
    plan.validate()?;
    let raw = load_dataset(&cfg.dataset)?;
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out)
        .with_context(|| format!("cannot create output directory {}", out.display()))?;

    let mut results = Vec::with_capacity(cfg.seeds.len());
    let mut lines = Vec::new();
    for &seed in &cfg.seeds {
        let data = cluster_seed(cfg, &plan, &raw, seed)?;
        if cfg.emit_pca_scatter {
            let title = format!(
                "{} clusters in PCA space, seed {seed} (k={})",
                plan.dataset_id, data.k
            );
            pca_artifacts(
                &data,
                &out.join(format!("scatter/pca_seed{seed}.csv")),
                &title,
                cfg.wants(Format::Svg),
            )?;
        }
        let result =
            frozen_layer_sweep_on(&plan, &data, seed).with_context(|| format!("seed {seed}"))?;
        write_seed_artifacts(cfg, &result)?;
        lines.push(format!(
            "seed {seed}: k={} sizes {:?}, source RMSE {:.3}, direct RMSE {:.3}{}",
            result.k,
            result.cluster_sizes,
            result.source.rmse,
            result.direct.rmse,
            result
                .best_transfer()
                .map(|r| format!(
                    ", best transfer RMSE {:.3} ({} frozen)",
                    r.rmse,
                    r.provenance.frozen.unwrap_or(0)
                ))
                .unwrap_or_default()
        ));
        for t in &result.transfers {
            if let StageResult::Failed { error } = &t.result {
                eprintln!("warning: seed {seed}, {} frozen: {error}", t.n_frozen);
            }
        }
        results.push(result);
    }

    let json = serde_json::to_string_pretty(&results)?;
    write_file(&out.join("results.json"), &(json + "\n"))?;
    let summary = aggregate_seeds(&results)?;
    let rendered = render_tables(&results, &summary, &out.join("tables"), &cfg.formats)?;
    for n in rendered.notices {
        eprintln!("notice: {n}");
    }
    lines.push(format!("report written to {}", out.display()));
    Ok(lines)
}

fn cmd_report(args: &CommonArgs) -> anyhow::Result<Vec<String>> {
    let cfg = args.config.as_deref().map(RunConfig::load).transpose()?;
    let input = match (&args.input, &cfg) {
        (Some(i), _) => i.clone(),
        (None, Some(c)) => c.output_dir.join("results.json"),
        (None, None) => bail!("report needs --input results.json or --config"),
    };
    let formats = match (&cfg, args.format.is_empty()) {
        (_, false) => args.format.clone(),
        (Some(c), true) => c.formats.clone(),
        (None, true) => RunConfig::default().formats,
    };
    let dir = args
        .out
        .clone()
        .unwrap_or_else(|| input.parent().map(Path::to_path_buf).unwrap_or_default());
    let text = std::fs::read_to_string(&input)
        .with_context(|| format!("cannot read results {}", input.display()))?;
    let results: Vec<ExperimentResult> = serde_json::from_str(&text)
        .with_context(|| format!("malformed results file {}", input.display()))?;
    let summary = aggregate_seeds(&results)?;
    let rendered = render_tables(&results, &summary, &dir.join("tables"), &formats)?;
    for n in &rendered.notices {
        eprintln!("notice: {n}");
    }
    Ok(rendered
        .files
        .iter()
        .map(|f| format!("wrote {}", f.display()))
        .collect())
}
