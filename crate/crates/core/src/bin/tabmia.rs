//! `tabmia` command line: single audits, benchmarks, contribution analysis,
//! the ensemble-size experiment and report conversion.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;

use tabmia::attacks::{AttackConfig, EncodedViews};
use tabmia::dataset::{RawDataset, Role, StateId};
use tabmia::ensembles::{load_weights, EnsembleConfig, EnsembleKind, Normalization};
use tabmia::harness::{
    evaluate_views, run_benchmark, run_contribution_analysis, run_size_experiment, BenchmarkConfig, RunOptions,
    StandardRunner, StateReport,
};
use tabmia::ingest::{load_csv, read_csv_table};
use tabmia::metrics::MetricKind;
use tabmia::report::{emit_contributions, emit_report, emit_size_experiment, read_report, to_json, ReportFormat};
use tabmia::{Error, Result};

#[derive(Parser)]
#[command(name = "tabmia", version, about = "Membership inference audits for tabular synthetic data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Audit one synthetic release against a labeled test set.
    Audit {
        #[arg(long)]
        synthetic: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Column of the test CSV holding membership (1/0 or true/false).
        #[arg(long)]
        label_column: String,
        /// Comma-separated attack names or a JSON file with attack configs.
        #[arg(long)]
        attacks: Option<String>,
        /// Comma-separated ensemble names or a JSON file with ensemble configs.
        #[arg(long)]
        ensembles: Option<String>,
        #[arg(long, value_parser = parse_normalization)]
        normalization: Option<Normalization>,
        /// JSON object of attack id → weight for the weighted-mean ensemble.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        keep_scores: bool,
    },
    /// Run a benchmark described by a JSON config.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        parallelism: Option<usize>,
        /// Output directory (overrides the config's).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Leave-one-out contribution analysis of a benchmark run with kept scores.
    Contrib {
        #[arg(long)]
        report: PathBuf,
        #[arg(long, value_parser = parse_metric)]
        metric: Option<MetricKind>,
    },
    /// Ensemble performance as a function of the number of combined attacks.
    SizeExp {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "2,3,5,7,9,11,15,21")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        parallelism: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-emit a stored report as JSON or CSV tables.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "both")]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_normalization(s: &str) -> std::result::Result<Normalization, String> {
    match s {
        "minmax" => Ok(Normalization::Minmax),
        "rank" => Ok(Normalization::Rank),
        "none" => Ok(Normalization::None),
        _ => Err(format!("expected minmax, rank or none, got {s:?}")),
    }
}

fn parse_metric(s: &str) -> std::result::Result<MetricKind, String> {
    match s {
        "auc" => Ok(MetricKind::Auc),
        "tpr01" => Ok(MetricKind::TprAtFpr(0.01)),
        "tpr10" => Ok(MetricKind::TprAtFpr(0.1)),
        other => other.parse().map_err(|e: Error| e.to_string()),
    }
}

/// A spec that names an existing file is read as JSON; otherwise it is a comma list.
fn parse_list<T: DeserializeOwned + std::str::FromStr<Err = Error>>(spec: &str) -> Result<Vec<T>> {
    let path = Path::new(spec);
    if path.is_file() {
        return Ok(serde_json::from_str(&fs::read_to_string(path)?)?);
    }
    let items = spec.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect::<Result<Vec<T>>>()?;
    if items.is_empty() {
        return Err(Error::InvalidArgument(format!("empty list {spec:?}")));
    }
    Ok(items)
}

fn parse_label(cell: &str, line: usize) -> Result<u8> {
    match cell.trim().to_ascii_lowercase().as_str() {
        "1" | "true" => Ok(1),
        "0" | "false" => Ok(0),
        other => Err(Error::Parse { line: line as u64 + 2, message: format!("label {other:?} is not 1/0/true/false") }),
    }
}

fn print_state(report: &StateReport) {
    let metrics: Vec<String> = report
        .strategies()
        .flat_map(|s| s.metrics.keys().cloned())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    print!("{:<24}", "strategy");
    for m in &metrics {
        print!("{m:>12}");
    }
    println!();
    for s in report.strategies() {
        print!("{:<24}", s.id);
        match &s.error {
            Some(e) => print!("  failed: {e}"),
            None => {
                for m in &metrics {
                    print!("{:>12.4}", s.metrics.get(m).copied().unwrap_or(f64::NAN));
                }
            }
        }
        println!();
    }
}

#[allow(clippy::too_many_arguments)]
fn audit(
    synthetic: &Path,
    reference: &Path,
    test: &Path,
    label_column: &str,
    attacks: Option<&str>,
    ensembles: Option<&str>,
    normalization: Option<Normalization>,
    weights: Option<&Path>,
    out: Option<&Path>,
    seed: u64,
    keep_scores: bool,
) -> Result<()> {
    let attacks: Vec<AttackConfig> = attacks.map(parse_list).transpose()?.unwrap_or_else(AttackConfig::defaults);
    for a in &attacks {
        a.validate()?;
    }
    let mut ensembles: Vec<EnsembleConfig> =
        ensembles.map(parse_list).transpose()?.unwrap_or_else(EnsembleConfig::defaults);
    let weights: Option<BTreeMap<String, f64>> = weights.map(load_weights).transpose()?;
    for e in &mut ensembles {
        if let Some(n) = normalization {
            e.normalization = n;
        }
        if let (EnsembleKind::WeightedMean { weights: w @ None }, Some(given)) = (&mut e.kind, &weights) {
            *w = Some(given.clone());
        }
    }

    let syn = load_csv(synthetic, Role::Synthetic)?;
    let ref_table = read_csv_table(fs::File::open(reference)?)?;
    let reference = RawDataset::from_table(&ref_table, &syn.schema, Role::Reference)?;
    let test_table = read_csv_table(fs::File::open(test)?)?;
    let label_idx = test_table
        .header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::Schema(format!("test file has no column {label_column:?}")))?;
    let labels = test_table
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| parse_label(r.get(label_idx).map(String::as_str).unwrap_or(""), i))
        .collect::<Result<Vec<u8>>>()?;
    let test = RawDataset::from_table(&test_table, &syn.schema, Role::Test)?;
    let views = EncodedViews::from_datasets(&test, labels, &syn, &reference)?;

    let state = StateId { dataset: "audit".into(), generator: "external".into(), seed };
    let options = RunOptions { keep_scores, record_timings: true };
    let report =
        evaluate_views(state, &views, &attacks, &ensembles, &MetricKind::defaults(), seed, options, &StandardRunner);
    print_state(&report);
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        let path = dir.join("audit.json");
        fs::write(&path, to_json(&report)?)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn bench(config: &Path, parallelism: Option<usize>, out: Option<PathBuf>) -> Result<()> {
    let mut cfg = BenchmarkConfig::load(config)?;
    if let Some(p) = parallelism {
        cfg.parallelism = p;
    }
    let dir = out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("tabmia-out"));
    let report = run_benchmark(&cfg)?;
    for f in &report.failed_states {
        eprintln!("state {} failed: {}", f.state, f.error);
    }
    for s in &report.summaries {
        println!("{}: mean rank (lower is better)", s.metric);
        let mut entries = s.ranks.entries.clone();
        entries.sort_by(|a, b| a.mean_rank.total_cmp(&b.mean_rank));
        for e in entries {
            println!("  {:<24}{:>8.3} ± {:.3}", e.strategy, e.mean_rank, e.std_error);
        }
        match &s.dominant {
            Some(d) => println!("  dominant strategy: {d}"),
            None => println!("  no dominant strategy"),
        }
    }
    for p in emit_report(&report, &dir, ReportFormat::Both)? {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn contrib(dir: &Path, metric: Option<MetricKind>) -> Result<()> {
    let report = read_report(dir)?;
    let metrics = match metric {
        Some(m) => vec![m],
        None => report.config.metrics.clone(),
    };
    let tables = run_contribution_analysis(&report, &report.config.ensembles, &metrics)?;
    for t in &tables {
        for (ens, summary) in &t.ranks {
            println!("{} / {ens}: contribution rank (1 = largest)", t.metric);
            for e in &summary.entries {
                println!("  {:<24}{:>8.3} ± {:.3}", e.strategy, e.mean_rank, e.std_error);
            }
        }
    }
    let out_dir = if dir.is_dir() { dir.to_path_buf() } else { dir.parent().unwrap_or(Path::new(".")).to_path_buf() };
    for p in emit_contributions(&tables, &out_dir)? {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn size_exp(
    config: &Path,
    sizes: &[usize],
    trials: usize,
    seed: Option<u64>,
    parallelism: Option<usize>,
    out: Option<PathBuf>,
) -> Result<()> {
    let mut cfg = BenchmarkConfig::load(config)?;
    if let Some(p) = parallelism {
        cfg.parallelism = p;
    }
    let dir = out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("tabmia-out"));
    let report = run_size_experiment(&cfg, sizes, trials, seed.unwrap_or(cfg.master_seed))?;
    for c in &report.curves {
        println!("{} / {}", c.ensemble, c.metric);
        for p in &c.points {
            println!("  size {:>3}: {:.4} ± {:.4}", p.size, p.mean, p.std_error);
        }
    }
    for p in emit_size_experiment(&report, &dir)? {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn report_cmd(input: &Path, format: &str, out: Option<PathBuf>) -> Result<()> {
    let format: ReportFormat = format.parse()?;
    let report = read_report(input)?;
    let dir = out.unwrap_or_else(|| if input.is_dir() { input.to_path_buf() } else { input.parent().unwrap_or(Path::new(".")).to_path_buf() });
    for p in emit_report(&report, &dir, format)? {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Audit {
            synthetic,
            reference,
            test,
            label_column,
            attacks,
            ensembles,
            normalization,
            weights,
            out,
            seed,
            keep_scores,
        } => audit(
            &synthetic,
            &reference,
            &test,
            &label_column,
            attacks.as_deref(),
            ensembles.as_deref(),
            normalization,
            weights.as_deref(),
            out.as_deref(),
            seed,
            keep_scores,
        ),
        Command::Bench { config, parallelism, out } => bench(&config, parallelism, out),
        Command::Contrib { report, metric } => contrib(&report, metric),
        Command::SizeExp { config, sizes, trials, seed, parallelism, out } => {
            size_exp(&config, &sizes, trials, seed, parallelism, out)
        }
        Command::Report { input, format, out } => report_cmd(&input, &format, out),
    }
}

fn exit_code(e: &Error) -> u8 {
    if matches!(e, Error::InvalidArgument(_)) {
        1
    } else if e.is_data_error() {
        2
    } else {
        3
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(_) => ExitCode::from(3),
    }
}
