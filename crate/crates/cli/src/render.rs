//! Tables, loss curves and prediction scatters.
//!
//! CSV cells carry full round-trip precision; markdown rounds to 2 decimals.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use shiftlearn_core::nn::LossHistory;
use shiftlearn_core::pipeline::{StageResult, SummaryTable};
use shiftlearn_core::{write_atomic, EvalReport, ExperimentResult};

use crate::config::Format;
use crate::svg;

pub const TABLE1_HEADER: &str = "dataset,seed,stage,cluster,split,frozen,n,rmse,mae,r2";
pub const TABLE2_HEADER: &str = "dataset,seed,frozen,cluster,split,status,n,rmse,mae,r2,error";

pub(crate) fn write_file(path: &Path, contents: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    write_atomic(path, contents.as_bytes())
        .with_context(|| format!("cannot write {}", path.display()))
}

fn csv_text(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn table1_rows(results: &[ExperimentResult]) -> Vec<(&'static str, &EvalReport)> {
    results
        .iter()
        .flat_map(|r| [("source_test", &r.source), ("target_direct", &r.direct)])
        .collect()
}

/// Source-test and target-direct rows, one pair per seed.
pub fn table1_csv(results: &[ExperimentResult]) -> String {
    let mut out = format!("{TABLE1_HEADER}\n");
    for (stage, r) in table1_rows(results) {
        let p = &r.provenance;
        let _ = writeln!(
            out,
            "{},{},{stage},{},{},none,{},{},{},{}",
            csv_text(&p.dataset),
            p.seed,
            p.cluster,
            p.split,
            r.n,
            r.rmse,
            r.mae,
            r.r2
        );
    }
    out
}

pub fn table1_md(results: &[ExperimentResult]) -> String {
    let mut out = String::from("## Table I: without transfer learning\n\n");
    out.push_str("| Dataset | Seed | Stage | Cluster | Frozen | n | RMSE | MAE | R² |\n");
    out.push_str("|---|---:|---|---:|---|---:|---:|---:|---:|\n");
    for (stage, r) in table1_rows(results) {
        let p = &r.provenance;
        let _ = writeln!(
            out,
            "| {} | {} | {stage} | {} | none | {} | {:.2} | {:.2} | {:.2} |",
            p.dataset, p.seed, p.cluster, r.n, r.rmse, r.mae, r.r2
        );
    }
    out
}

fn has_transfers(results: &[ExperimentResult]) -> bool {
    results.iter().any(|r| !r.transfers.is_empty())
}

/// One row per seed and frozen count; `None` when nothing was fine-tuned.
pub fn table2_csv(results: &[ExperimentResult]) -> Option<String> {
    if !has_transfers(results) {
        return None;
    }
    let mut out = format!("{TABLE2_HEADER}\n");
    for r in results {
        for t in &r.transfers {
            match &t.result {
                StageResult::Completed { report, .. } => {
                    let p = &report.provenance;
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},completed,{},{},{},{},",
                        csv_text(&p.dataset),
                        p.seed,
                        t.n_frozen,
                        p.cluster,
                        p.split,
                        report.n,
                        report.rmse,
                        report.mae,
                        report.r2
                    );
                }
                StageResult::Failed { error } => {
                    let _ = writeln!(
                        out,
                        "{},{},{},1,test,failed,,,,,{}",
                        csv_text(&r.dataset),
                        r.seed,
                        t.n_frozen,
                        csv_text(error)
                    );
                }
            }
        }
    }
    Some(out)
}

pub fn table2_md(results: &[ExperimentResult]) -> Option<String> {
    if !has_transfers(results) {
        return None;
    }
    let mut out = String::from("## Table II: with transfer learning\n\n");
    out.push_str("| Dataset | Seed | Frozen | Cluster | n | RMSE | MAE | R² |\n");
    out.push_str("|---|---:|---:|---:|---:|---:|---:|---:|\n");
    for r in results {
        for t in &r.transfers {
            match &t.result {
                StageResult::Completed { report, .. } => {
                    let _ = writeln!(
                        out,
                        "| {} | {} | {} | {} | {} | {:.2} | {:.2} | {:.2} |",
                        r.dataset,
                        r.seed,
                        t.n_frozen,
                        report.provenance.cluster,
                        report.n,
                        report.rmse,
                        report.mae,
                        report.r2
                    );
                }
                StageResult::Failed { error } => {
                    let _ = writeln!(
                        out,
                        "| {} | {} | {} | 1 | failed: {} | | | |",
                        r.dataset,
                        r.seed,
                        t.n_frozen,
                        error.replace('|', "/")
                    );
                }
            }
        }
    }
    Some(out)
}

fn seeds_cell(seeds: &[u64]) -> String {
    seeds
        .iter()
        .map(u64::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}

fn frozen_cell(frozen: Option<usize>) -> String {
    frozen.map_or_else(|| "none".into(), |n| n.to_string())
}

/// Mean and population standard deviation across seeds.
pub fn summary_csv(table: &SummaryTable) -> String {
    let mut out = String::from(
        "dataset,seeds,stage,frozen,n_seeds,rmse_mean,rmse_std,mae_mean,mae_std,r2_mean,r2_std\n",
    );
    for row in &table.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            csv_text(&table.dataset),
            seeds_cell(&table.seeds),
            row.stage.as_str(),
            frozen_cell(row.frozen),
            row.n_seeds,
            row.rmse.mean,
            row.rmse.std,
            row.mae.mean,
            row.mae.std,
            row.r2.mean,
            row.r2.std
        );
    }
    out
}

pub fn summary_md(table: &SummaryTable) -> String {
    let mut out = format!(
        "## Summary over seeds {}\n\n| Stage | Frozen | Seeds | RMSE | MAE | R² |\n|---|---:|---:|---:|---:|---:|\n",
        seeds_cell(&table.seeds)
    );
    for row in &table.rows {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {:.2} ± {:.2} | {:.2} ± {:.2} | {:.2} ± {:.2} |",
            row.stage.as_str(),
            frozen_cell(row.frozen),
            row.n_seeds,
            row.rmse.mean,
            row.rmse.std,
            row.mae.mean,
            row.mae.std,
            row.r2.mean,
            row.r2.std
        );
    }
    out
}

/// What `render_tables` wrote, plus any notices for the user.
#[derive(Debug, Default)]
pub struct Rendered {
    pub files: Vec<PathBuf>,
    pub notices: Vec<String>,
}

/// Writes Table I, Table II and the cross-seed summary into `dir` in each
/// requested tabular format. SVG is not a table format and is ignored here.
pub fn render_tables(
    results: &[ExperimentResult],
    summary: &SummaryTable,
    dir: &Path,
    formats: &[Format],
) -> anyhow::Result<Rendered> {
    if results.is_empty() {
        bail!("no results to render");
    }
    let mut out = Rendered::default();
    let emit = |name: &str, text: String, files: &mut Vec<PathBuf>| -> anyhow::Result<()> {
        let path = dir.join(name);
        write_file(&path, &text)?;
        files.push(path);
        Ok(())
    };
    let csv = formats.contains(&Format::Csv);
    let md = formats.contains(&Format::Md);
    if csv {
        emit("table1.csv", table1_csv(results), &mut out.files)?;
        emit("summary.csv", summary_csv(summary), &mut out.files)?;
    }
    if md {
        emit("table1.md", table1_md(results), &mut out.files)?;
        emit("summary.md", summary_md(summary), &mut out.files)?;
    }
    match (table2_csv(results), table2_md(results)) {
        (Some(c), Some(m)) => {
            if csv {
                emit("table2.csv", c, &mut out.files)?;
            }
            if md {
                emit("table2.md", m, &mut out.files)?;
            }
        }
        _ => out
            .notices
            .push("no frozen counts configured; transfer table omitted".into()),
    }
    Ok(out)
}

/// `# best_epoch=K` comment, then `epoch,mae` with 0-based epochs.
pub fn loss_curve_csv(history: &LossHistory) -> String {
    let mut out = format!("# best_epoch={}\nepoch,mae\n", history.best_epoch);
    for (e, v) in history.losses.iter().enumerate() {
        let _ = writeln!(out, "{e},{v}");
    }
    out
}

/// Writes the loss CSV at `path`, and an SVG next to it when asked.
pub fn render_loss_curve(
    history: &LossHistory,
    path: &Path,
    title: &str,
    with_svg: bool,
) -> anyhow::Result<()> {
    if history.losses.is_empty() {
        bail!("empty loss history for {}", path.display());
    }
    write_file(path, &loss_curve_csv(history))?;
    if with_svg {
        let plot = svg::line_plot(
            title,
            "epoch",
            "training MAE",
            0.0,
            &history.losses,
            Some(history.best_epoch),
        );
        write_file(&path.with_extension("svg"), &plot)?;
    }
    Ok(())
}

pub fn scatter_csv(real: &[f64], predicted: &[f64]) -> anyhow::Result<String> {
    if real.len() != predicted.len() {
        bail!(
            "{} real values but {} predictions",
            real.len(),
            predicted.len()
        );
    }
    let mut out = String::from("real,predicted\n");
    for (r, p) in real.iter().zip(predicted) {
        let _ = writeln!(out, "{r},{p}");
    }
    Ok(out)
}

pub fn parse_scatter_csv(text: &str) -> anyhow::Result<(Vec<f64>, Vec<f64>)> {
    let mut lines = text.lines();
    if lines.next() != Some("real,predicted") {
        bail!("missing real,predicted header");
    }
    let (mut real, mut predicted) = (Vec::new(), Vec::new());
    for (i, line) in lines.enumerate() {
        let (a, b) = line
            .split_once(',')
            .with_context(|| format!("line {}: expected two values", i + 2))?;
        real.push(a.parse().with_context(|| format!("line {}", i + 2))?);
        predicted.push(b.parse().with_context(|| format!("line {}", i + 2))?);
    }
    Ok((real, predicted))
}

pub fn render_scatter(
    real: &[f64],
    predicted: &[f64],
    path: &Path,
    title: &str,
    with_svg: bool,
) -> anyhow::Result<()> {
    write_file(path, &scatter_csv(real, predicted)?)?;
    if with_svg {
        write_file(
            &path.with_extension("svg"),
            &svg::prediction_scatter(title, real, predicted),
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_curve_layout() {
        let h = LossHistory {
            losses: (0..500).map(|i| 10.0 / (1.0 + i as f64)).collect(),
            best_epoch: 499,
            adam_steps: 0,
        };
        let text = loss_curve_csv(&h);
        let data_lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data_lines.len(), 501);
        assert_eq!(data_lines[0], "epoch,mae");
        assert!(text.starts_with("# best_epoch=499\n"));
        for (line, v) in data_lines[1..].iter().zip(&h.losses) {
            let parsed: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
            assert_eq!(parsed.to_bits(), v.to_bits());
        }
    }

    #[test]
    fn scatter_round_trip() {
        let real = [1.0, 0.1 + 0.2, -3.5e-7, 20.0];
        let pred = [1.5, 2.0 / 3.0, 0.0, 19.999999999];
        let text = scatter_csv(&real, &pred).unwrap();
        assert_eq!(text.lines().count(), 1 + real.len());
        let (r, p) = parse_scatter_csv(&text).unwrap();
        assert_eq!(r, real);
        assert_eq!(p, pred);
        assert!(scatter_csv(&real, &pred[..2]).is_err());
    }

    #[test]
    fn csv_quoting() {
        assert_eq!(csv_text("plain"), "plain");
        assert_eq!(csv_text("a,b"), "\"a,b\"");
        assert_eq!(csv_text("say \"x\""), "\"say \"\"x\"\"\"");
    }
}
