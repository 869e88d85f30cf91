//! Writing and reading benchmark artefacts: `report.json` plus flat CSV tables.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::{BenchmarkReport, ContributionTable, LabeledMatrix, SizeExperimentReport};

pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    Json,
    Csv,
    #[default]
    Both,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "both" => Ok(ReportFormat::Both),
            other => Err(Error::invalid(format!("unknown report format {other:?} (json, csv or both)"))),
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    fs::write(path, to_json(value)?)?;
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::Writer::from_path(path)?)
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn write_matrices(path: &Path, report: &BenchmarkReport, pick: fn(&crate::harness::StateReport) -> Option<&LabeledMatrix>) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["state", "attack_a", "attack_b", "value"])?;
    for s in &report.states {
        let Some(m) = pick(s) else { continue };
        for (i, a) in m.ids.iter().enumerate() {
            for (j, b) in m.ids.iter().enumerate() {
                w.write_record([s.state.to_string(), a.clone(), b.clone(), num(m.values[i][j])])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Contribution tables as `contributions.json` plus two CSVs.
pub fn emit_contributions(tables: &[ContributionTable], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let json = dir.join("contributions.json");
    write_json(&tables, &json)?;
    let mut out = vec![json];
    write_contribution_csvs(tables, dir, &mut out)?;
    Ok(out)
}

fn write_contribution_csvs(tables: &[ContributionTable], dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join("contributions.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["metric", "state", "ensemble", "attack", "contribution"])?;
    for t in tables {
        for r in &t.rows {
            w.write_record([t.metric.to_string(), r.state.clone(), r.ensemble.clone(), r.attack.clone(), num(r.contribution)])?;
        }
    }
    w.flush()?;
    out.push(path);

    let path = dir.join("contribution_ranks.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["metric", "ensemble", "attack", "mean_rank", "std_error", "p_top3", "p_best", "states"])?;
    for t in tables {
        for (ens, summary) in &t.ranks {
            for e in &summary.entries {
                w.write_record([
                    t.metric.to_string(),
                    ens.clone(),
                    e.strategy.clone(),
                    num(e.mean_rank),
                    num(e.std_error),
                    num(e.p_top3),
                    num(e.p_best),
                    e.states.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    out.push(path);
    Ok(())
}

/// Write the report into `dir`; returns the files written.
pub fn emit_report(report: &BenchmarkReport, dir: &Path, format: ReportFormat) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    if matches!(format, ReportFormat::Json | ReportFormat::Both) {
        let path = dir.join(REPORT_FILE);
        write_json(report, &path)?;
        out.push(path);
    }
    if !matches!(format, ReportFormat::Csv | ReportFormat::Both) {
        return Ok(out);
    }

    let path = dir.join("metrics.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["dataset", "generator", "seed", "strategy", "metric", "value", "error"])?;
    for s in &report.states {
        for r in s.strategies() {
            let cells = |metric: &str, value: String| {
                [
                    s.state.dataset.clone(),
                    s.state.generator.clone(),
                    s.state.seed.to_string(),
                    r.id.clone(),
                    metric.to_string(),
                    value,
                    r.error.clone().unwrap_or_default(),
                ]
            };
            if r.metrics.is_empty() {
                w.write_record(cells("", String::new()))?;
            }
            for (m, v) in &r.metrics {
                w.write_record(cells(m, num(*v)))?;
            }
        }
    }
    w.flush()?;
    out.push(path);

    let path = dir.join("ranks.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["metric", "strategy", "mean_rank", "std_error", "p_top3", "p_best", "states"])?;
    for summary in &report.summaries {
        for e in &summary.ranks.entries {
            w.write_record([
                summary.metric.to_string(),
                e.strategy.clone(),
                num(e.mean_rank),
                num(e.std_error),
                num(e.p_top3),
                num(e.p_best),
                e.states.to_string(),
            ])?;
        }
    }
    w.flush()?;
    out.push(path);

    let path = dir.join("correlations.csv");
    write_matrices(&path, report, |s| s.correlation.as_ref())?;
    out.push(path);
    let path = dir.join("disagreements.csv");
    write_matrices(&path, report, |s| s.disagreement.as_ref())?;
    out.push(path);

    if !report.contributions.is_empty() {
        write_contribution_csvs(&report.contributions, dir, &mut out)?;
    }
    Ok(out)
}

pub fn emit_size_experiment(report: &SizeExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let json = dir.join("size_experiment.json");
    write_json(report, &json)?;
    let path = dir.join("size_experiment.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["ensemble", "metric", "size", "mean", "std_error", "trials"])?;
    for c in &report.curves {
        for p in &c.points {
            w.write_record([
                c.ensemble.clone(),
                c.metric.to_string(),
                p.size.to_string(),
                num(p.mean),
                num(p.std_error),
                p.trials.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(vec![json, path])
}

/// Read a report from a `report.json` file or a directory containing one.
pub fn read_report(path: &Path) -> Result<BenchmarkReport> {
    let file = if path.is_dir() { path.join(REPORT_FILE) } else { path.to_path_buf() };
    let text = fs::read_to_string(&file)?;
    Ok(serde_json::from_str(&text)?)
}
