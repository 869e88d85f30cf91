//! Benchmark orchestration: build states, run attacks and ensembles, evaluate
//! and aggregate, plus the leave-one-out and ensemble-size experiments.
//!
//! Every random choice draws from a stream derived from the master seed and
//! the labels of the task that makes it, so reports do not depend on the
//! thread count or on scheduling.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::{run_attack, AttackConfig, EncodedViews, EpsilonRule, ScoreVector};
use crate::dataset::{make_splits, DatasetBundle, RawDataset, Role, StateId};
use crate::ensembles::{run_ensemble, EnsembleConfig, EnsembleKind, ScoreMatrix};
use crate::error::{Error, Result};
use crate::ingest::{load_csv_with_schema, Format, Location, SourceSpec};
use crate::learners::LearnerConfig;
use crate::metrics::{
    advantage_distribution, correlation_matrix, disagreement_matrix, dominance_check, loo_contribution, rank_table,
    AdvantageSummary, MetricKind, PayoffTable, RankSummary,
};
use crate::neighbors::DistanceMetric;
use crate::seed::{derive_rng, derive_seed};
use crate::synthgen::{sample_population, PopulationSpec, ToyGenerator};

/// Where a population comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetSource {
    /// Draw `n` rows from a declared distribution: a builtin name
    /// (`two-d-mixture`, `mixed`), a JSON file path, or an inline spec.
    Generated { name: String, population: PopulationRef, n: usize },
    File {
        name: String,
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        format: Option<Format>,
    },
    Url {
        name: String,
        url: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        format: Option<Format>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cache_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PopulationRef {
    Named(String),
    Inline(PopulationSpec),
}

impl PopulationRef {
    pub fn resolve(&self) -> Result<PopulationSpec> {
        match self {
            PopulationRef::Inline(spec) => {
                spec.validate()?;
                Ok(spec.clone())
            }
            PopulationRef::Named(name) => match name.as_str() {
                "two-d-mixture" => Ok(PopulationSpec::two_d_mixture()),
                "mixed" => Ok(PopulationSpec::mixed()),
                path => PopulationSpec::load(Path::new(path)),
            },
        }
    }
}

impl DatasetSource {
    pub fn name(&self) -> &str {
        match self {
            DatasetSource::Generated { name, .. } | DatasetSource::File { name, .. } | DatasetSource::Url { name, .. } => {
                name
            }
        }
    }

    /// Population rows plus the declared distribution when there is one.
    pub fn load(&self, master_seed: u64) -> Result<(RawDataset, Option<PopulationSpec>)> {
        match self {
            DatasetSource::Generated { name, population, n } => {
                let spec = population.resolve()?;
                let pop = sample_population(&spec, *n, derive_seed(master_seed, &["population", name]))?;
                Ok((pop, Some(spec)))
            }
            DatasetSource::File { path, format, .. } => {
                let format = format.unwrap_or_else(|| Format::from_path(&path.to_string_lossy()));
                let spec = SourceSpec { location: Location::Path(path.clone()), format, cache_dir: crate::ingest::default_cache_dir() };
                Ok((spec.load(Role::Population)?, None))
            }
            DatasetSource::Url { url, format, cache_dir, .. } => {
                let spec = SourceSpec {
                    location: Location::Url(url.clone()),
                    format: format.unwrap_or_else(|| Format::from_path(url)),
                    cache_dir: cache_dir.clone().unwrap_or_else(crate::ingest::default_cache_dir),
                };
                Ok((spec.load(Role::Population)?, None))
            }
        }
    }
}

/// How a state's synthetic data is produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeneratorSpec {
    Memorizer {
        #[serde(default = "default_sigma")]
        sigma: f64,
    },
    SafeSampler,
    MarginalSampler,
    /// Pre-generated synthetic CSVs. `{dataset}` and `{seed}` in the path are
    /// substituted per state.
    Files { name: String, path: String },
}

fn default_sigma() -> f64 {
    0.01
}

impl GeneratorSpec {
    pub fn toys() -> Vec<GeneratorSpec> {
        vec![GeneratorSpec::Memorizer { sigma: 0.01 }, GeneratorSpec::SafeSampler, GeneratorSpec::MarginalSampler]
    }

    fn toy(&self) -> Option<ToyGenerator> {
        match *self {
            GeneratorSpec::Memorizer { sigma } => Some(ToyGenerator::Memorizer { sigma }),
            GeneratorSpec::SafeSampler => Some(ToyGenerator::SafeSampler),
            GeneratorSpec::MarginalSampler => Some(ToyGenerator::MarginalSampler),
            GeneratorSpec::Files { .. } => None,
        }
    }

    pub fn name(&self) -> String {
        match self {
            GeneratorSpec::Files { name, .. } => name.clone(),
            other => other.toy().expect("toy generator").name(),
        }
    }

    fn generate(
        &self,
        dataset: &str,
        train: &RawDataset,
        population: Option<&PopulationSpec>,
        seed_label: u64,
        stream: u64,
    ) -> Result<RawDataset> {
        match self {
            GeneratorSpec::Files { path, .. } => {
                let p = path.replace("{dataset}", dataset).replace("{seed}", &seed_label.to_string());
                load_csv_with_schema(Path::new(&p), &train.schema, Role::Synthetic)
            }
            other => other.toy().expect("toy generator").generate(train, population, stream),
        }
    }
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

fn default_parallelism() -> usize {
    1
}

fn default_trials() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub datasets: Vec<DatasetSource>,
    pub generators: Vec<GeneratorSpec>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "AttackConfig::defaults")]
    pub attacks: Vec<AttackConfig>,
    #[serde(default = "EnsembleConfig::defaults")]
    pub ensembles: Vec<EnsembleConfig>,
    #[serde(default = "MetricKind::defaults")]
    pub metrics: Vec<MetricKind>,
    #[serde(default)]
    pub master_seed: u64,
    /// Not part of the report, so reports do not depend on where they were written.
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
    /// Not part of the report, so reports do not depend on the thread count.
    #[serde(default = "default_parallelism", skip_serializing)]
    pub parallelism: usize,
    /// Retain per-record scores (needed for contribution analysis).
    #[serde(default)]
    pub keep_scores: bool,
    /// Record wall-clock times. Off by default so reports are reproducible byte for byte.
    #[serde(default)]
    pub record_timings: bool,
    #[serde(default = "default_trials")]
    pub advantage_trials: usize,
}

impl BenchmarkConfig {
    /// Minimal config with default attacks, ensembles and metrics.
    pub fn new(datasets: Vec<DatasetSource>, generators: Vec<GeneratorSpec>) -> Self {
        Self {
            datasets,
            generators,
            seeds: default_seeds(),
            attacks: AttackConfig::defaults(),
            ensembles: EnsembleConfig::defaults(),
            metrics: MetricKind::defaults(),
            master_seed: 0,
            output_dir: None,
            parallelism: 1,
            keep_scores: false,
            record_timings: false,
            advantage_trials: default_trials(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: BenchmarkConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parse a config file; relative data paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_json(&std::fs::read_to_string(path)?)?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &Path| if p.is_relative() { base.join(p) } else { p.to_path_buf() };
        for d in &mut self.datasets {
            match d {
                DatasetSource::File { path, .. } => *path = fix(path),
                DatasetSource::Generated { population: PopulationRef::Named(n), .. }
                    if n.ends_with(".json") =>
                {
                    *n = fix(Path::new(n)).to_string_lossy().into_owned();
                }
                DatasetSource::Url { cache_dir: Some(c), .. } => *c = fix(c),
                _ => {}
            }
        }
        for g in &mut self.generators {
            if let GeneratorSpec::Files { path, .. } = g {
                *path = fix(Path::new(path)).to_string_lossy().into_owned();
            }
        }
        if let Some(o) = &mut self.output_dir {
            *o = fix(o);
        }
    }

    pub fn strategy_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.attacks.iter().map(AttackConfig::id).collect();
        ids.extend(self.ensembles.iter().map(EnsembleConfig::id));
        ids
    }

    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() || self.generators.is_empty() || self.seeds.is_empty() {
            return Err(Error::invalid("a benchmark needs at least one dataset, generator and seed"));
        }
        if self.attacks.is_empty() {
            return Err(Error::invalid("a benchmark needs at least one attack"));
        }
        if self.metrics.is_empty() {
            return Err(Error::invalid("a benchmark needs at least one metric"));
        }
        if self.parallelism == 0 {
            return Err(Error::invalid("parallelism must be at least 1"));
        }
        for a in &self.attacks {
            a.validate()?;
        }
        let ids = self.strategy_ids();
        if ids.len() < 2 {
            return Err(Error::invalid("ranking needs at least 2 strategies"));
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::invalid(format!("strategy id {dup} is declared twice")));
        }
        let mut names = std::collections::BTreeSet::new();
        if let Some(dup) = self.datasets.iter().find(|d| !names.insert(d.name())) {
            return Err(Error::invalid(format!("dataset name {} is declared twice", dup.name())));
        }
        let mut gens = std::collections::BTreeSet::new();
        if let Some(dup) = self.generators.iter().find(|g| !gens.insert(g.name())) {
            return Err(Error::invalid(format!("generator {} is declared twice", dup.name())));
        }
        Ok(())
    }
}

/// Per-state options that do not change any score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub keep_scores: bool,
    pub record_timings: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyConfig {
    Attack(AttackConfig),
    Ensemble(EnsembleConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyResult {
    pub id: String,
    pub config: StrategyConfig,
    /// Set when the strategy failed in this state; metrics are then empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub metrics: BTreeMap<String, f64>,
    /// Resolved parameters: MC's epsilon, ensemble weights and thresholds.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub details: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_secs: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
}

impl StrategyResult {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

/// Square matrix with row/column labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledMatrix {
    pub ids: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl LabeledMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.ids.iter().position(|x| x == a)?;
        let j = self.ids.iter().position(|x| x == b)?;
        Some(self.values[i][j])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateReport {
    pub state: StateId,
    pub n_members: usize,
    pub n_nonmembers: usize,
    pub attacks: Vec<StrategyResult>,
    pub ensembles: Vec<StrategyResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<LabeledMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disagreement: Option<LabeledMatrix>,
    /// Membership labels of the test rows (kept with the scores).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<u8>>,
}

impl StateReport {
    pub fn strategies(&self) -> impl Iterator<Item = &StrategyResult> {
        self.attacks.iter().chain(&self.ensembles)
    }

    pub fn strategy(&self, id: &str) -> Option<&StrategyResult> {
        self.strategies().find(|s| s.id == id)
    }

    pub fn metric(&self, id: &str, metric: MetricKind) -> Option<f64> {
        self.strategy(id)?.metrics.get(&metric.to_string()).copied()
    }

    /// Score matrix of the successful attacks; needs retained scores.
    pub fn score_matrix(&self) -> Result<ScoreMatrix> {
        let ok: Vec<&StrategyResult> = self.attacks.iter().filter(|a| a.ok()).collect();
        let rows = ok
            .iter()
            .map(|a| {
                a.scores.clone().ok_or_else(|| {
                    Error::Analysis(format!(
                        "state {} has no per-record scores; re-run with keep_scores enabled",
                        self.state
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        ScoreMatrix::new(ok.iter().map(|a| a.id.clone()).collect(), rows)
    }
}

/// Runs one attack. The harness calls this through a trait so tests can
/// substitute failing or constant attacks.
pub trait AttackRunner: Sync {
    fn run(&self, config: &AttackConfig, views: &EncodedViews, seed: u64) -> Result<ScoreVector>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StandardRunner;

impl AttackRunner for StandardRunner {
    fn run(&self, config: &AttackConfig, views: &EncodedViews, seed: u64) -> Result<ScoreVector> {
        run_attack(config, views, seed)
    }
}

pub fn attack_seed(master_seed: u64, state: &StateId, attack_id: &str) -> u64 {
    derive_seed(master_seed, &["attack", &state.to_string(), attack_id])
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "attack panicked".to_string()
    }
}

fn evaluate_metrics(metrics: &[MetricKind], scores: &[f64], labels: &[u8]) -> Result<BTreeMap<String, f64>> {
    metrics.iter().map(|m| Ok((m.to_string(), m.evaluate(scores, labels)?))).collect()
}

fn failed(id: String, config: StrategyConfig, err: String) -> StrategyResult {
    StrategyResult {
        id,
        config,
        error: Some(err),
        metrics: BTreeMap::new(),
        details: BTreeMap::new(),
        elapsed_secs: None,
        scores: None,
    }
}

/// Run attacks and ensembles on already encoded views and evaluate them.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_views(
    state: StateId,
    views: &EncodedViews,
    attacks: &[AttackConfig],
    ensembles: &[EnsembleConfig],
    metrics: &[MetricKind],
    master_seed: u64,
    options: RunOptions,
    runner: &dyn AttackRunner,
) -> StateReport {
    let labels = &views.labels;
    let attack_results: Vec<(StrategyResult, Option<Vec<f64>>)> = attacks
        .par_iter()
        .map(|cfg| {
            let id = cfg.id();
            let seed = attack_seed(master_seed, &state, &id);
            let outcome = catch_unwind(AssertUnwindSafe(|| runner.run(cfg, views, seed)))
                .unwrap_or_else(|p| Err(Error::Attack { attack: id.clone(), message: panic_message(p) }))
                .and_then(|sv| {
                    if sv.scores.len() != labels.len() {
                        return Err(Error::Dimension { expected: labels.len(), actual: sv.scores.len() });
                    }
                    if sv.scores.iter().any(|s| !s.is_finite()) {
                        return Err(Error::Attack { attack: id.clone(), message: "non-finite scores".into() });
                    }
                    let m = evaluate_metrics(metrics, &sv.scores, labels)?;
                    Ok((sv, m))
                });
            match outcome {
                Ok((sv, m)) => (
                    StrategyResult {
                        id: id.clone(),
                        config: StrategyConfig::Attack(cfg.clone()),
                        error: None,
                        metrics: m,
                        details: sv.details,
                        elapsed_secs: if options.record_timings { sv.elapsed_secs } else { None },
                        scores: options.keep_scores.then(|| sv.scores.clone()),
                    },
                    Some(sv.scores),
                ),
                Err(e) => (failed(id, StrategyConfig::Attack(cfg.clone()), e.to_string()), None),
            }
        })
        .collect();

    let ok_ids: Vec<String> =
        attack_results.iter().filter(|(_, s)| s.is_some()).map(|(r, _)| r.id.clone()).collect();
    let ok_rows: Vec<Vec<f64>> = attack_results.iter().filter_map(|(_, s)| s.clone()).collect();
    let matrix = if ok_rows.is_empty() { None } else { ScoreMatrix::new(ok_ids, ok_rows).ok() };

    let ensemble_results: Vec<StrategyResult> = ensembles
        .iter()
        .map(|cfg| {
            let id = cfg.id();
            let start = Instant::now();
            let outcome = matrix
                .as_ref()
                .ok_or_else(|| Error::Analysis("no attack succeeded in this state".into()))
                .and_then(|m| run_ensemble(cfg, m))
                .and_then(|out| Ok((evaluate_metrics(metrics, &out.scores, labels)?, out)));
            match outcome {
                Ok((m, out)) => {
                    let mut details = BTreeMap::new();
                    for (k, v) in out.weights.iter().flatten() {
                        details.insert(format!("weight:{k}"), *v);
                    }
                    for (k, v) in out.thresholds.iter().flatten() {
                        details.insert(format!("threshold:{k}"), *v);
                    }
                    StrategyResult {
                        id,
                        config: StrategyConfig::Ensemble(cfg.clone()),
                        error: None,
                        metrics: m,
                        details,
                        elapsed_secs: options.record_timings.then(|| start.elapsed().as_secs_f64()),
                        scores: options.keep_scores.then_some(out.scores),
                    }
                }
                Err(e) => failed(id, StrategyConfig::Ensemble(cfg.clone()), e.to_string()),
            }
        })
        .collect();

    let (correlation, disagreement) = match &matrix {
        Some(m) if m.n_records() >= 2 => (
            Some(LabeledMatrix { ids: m.ids().to_vec(), values: correlation_matrix(m) }),
            Some(LabeledMatrix { ids: m.ids().to_vec(), values: disagreement_matrix(m) }),
        ),
        _ => (None, None),
    };
    let n_members = labels.iter().filter(|&&l| l == 1).count();
    StateReport {
        state,
        n_members,
        n_nonmembers: labels.len() - n_members,
        attacks: attack_results.into_iter().map(|(r, _)| r).collect(),
        ensembles: ensemble_results,
        correlation,
        disagreement,
        labels: options.keep_scores.then(|| labels.clone()),
    }
}

/// Encode a bundle once in both modes, then run and evaluate every strategy.
pub fn run_state(
    bundle: &DatasetBundle,
    attacks: &[AttackConfig],
    ensembles: &[EnsembleConfig],
    metrics: &[MetricKind],
    master_seed: u64,
    options: RunOptions,
) -> Result<StateReport> {
    run_state_with(&StandardRunner, bundle, attacks, ensembles, metrics, master_seed, options)
}

pub fn run_state_with(
    runner: &dyn AttackRunner,
    bundle: &DatasetBundle,
    attacks: &[AttackConfig],
    ensembles: &[EnsembleConfig],
    metrics: &[MetricKind],
    master_seed: u64,
    options: RunOptions,
) -> Result<StateReport> {
    if attacks.is_empty() {
        return Err(Error::invalid("a state needs at least one attack"));
    }
    let views = EncodedViews::from_bundle(bundle)?;
    Ok(evaluate_views(bundle.state.clone(), &views, attacks, ensembles, metrics, master_seed, options, runner))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedState {
    pub state: StateId,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: MetricKind,
    pub ranks: RankSummary,
    /// Strategy weakly dominating every other in every state, if any.
    pub dominant: Option<String>,
    /// Share of states in which each attack is the best individual attack.
    pub best_attack_share: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advantage: Option<AdvantageSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionRow {
    pub state: String,
    pub ensemble: String,
    pub attack: String,
    pub contribution: f64,
}

/// Leave-one-out contributions for one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionTable {
    pub metric: MetricKind,
    pub rows: Vec<ContributionRow>,
    /// Per ensemble: attacks ranked by contribution (rank 1 = largest).
    pub ranks: BTreeMap<String, RankSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: BenchmarkConfig,
    pub states: Vec<StateReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failed_states: Vec<FailedState>,
    pub summaries: Vec<MetricSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contributions: Vec<ContributionTable>,
}

impl BenchmarkReport {
    pub fn summary(&self, metric: MetricKind) -> Option<&MetricSummary> {
        self.summaries.iter().find(|s| s.metric == metric)
    }
}

/// Strategies × states payoff table built from state reports.
pub fn payoff_table(states: &[StateReport], strategies: &[String], metric: MetricKind) -> Result<PayoffTable> {
    let values = strategies
        .iter()
        .map(|id| states.iter().map(|s| s.metric(id, metric)).collect())
        .collect();
    PayoffTable::new(metric, strategies.to_vec(), states.iter().map(|s| s.state.to_string()).collect(), values)
}

/// Rank summaries, dominance, best-attack shares and advantage per metric.
pub fn aggregate(config: &BenchmarkConfig, states: &[StateReport]) -> Result<Vec<MetricSummary>> {
    let attack_ids: Vec<String> = config.attacks.iter().map(AttackConfig::id).collect();
    let ensemble_ids: Vec<String> = config.ensembles.iter().map(EnsembleConfig::id).collect();
    let all = config.strategy_ids();
    config
        .metrics
        .iter()
        .map(|&metric| {
            let table = payoff_table(states, &all, metric)?;
            let ranks = rank_table(&table)?;
            let dominant = dominance_check(&table);
            let attacks = payoff_table(states, &attack_ids, metric)?;
            let best_attack_share = if attack_ids.len() >= 2 {
                rank_table(&attacks)?.entries.into_iter().map(|e| (e.strategy, e.p_best)).collect()
            } else {
                attack_ids.iter().map(|id| (id.clone(), 1.0)).collect()
            };
            let advantage = if ensemble_ids.is_empty() {
                None
            } else {
                let ens = payoff_table(states, &ensemble_ids, metric)?;
                let seed = derive_seed(config.master_seed, &["advantage", &metric.to_string()]);
                advantage_distribution(&attacks, &ens, seed, config.advantage_trials).ok()
            };
            Ok(MetricSummary { metric, ranks, dominant, best_attack_share, advantage })
        })
        .collect()
}

struct PreparedDataset {
    name: String,
    population: RawDataset,
    spec: Option<PopulationSpec>,
    splits: crate::dataset::Splits,
}

fn prepare_dataset(source: &DatasetSource, master_seed: u64) -> Result<PreparedDataset> {
    let (population, spec) = source.load(master_seed)?;
    let splits = make_splits(&population, derive_seed(master_seed, &["split", source.name()]))?;
    Ok(PreparedDataset { name: source.name().to_string(), population, spec, splits })
}

/// Build the bundle for one (dataset, generator, seed) state. The partition
/// depends only on the dataset, so it is shared by every seed.
fn build_bundle(d: &PreparedDataset, gen: &GeneratorSpec, seed: u64, master_seed: u64) -> Result<DatasetBundle> {
    let state = StateId { dataset: d.name.clone(), generator: gen.name(), seed };
    let stream = derive_seed(master_seed, &["generator", &state.to_string()]);
    let synthetic = gen.generate(&d.name, &d.splits.train, d.spec.as_ref(), seed, stream)?;
    debug_assert_eq!(d.population.len(), d.splits.train.len() + d.splits.holdout.len() + d.splits.reference.len());
    DatasetBundle::new(state, d.splits.clone(), synthetic)
}

fn thread_pool(parallelism: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::Benchmark(format!("cannot start worker threads: {e}")))
}

/// Every (dataset, generator, seed) state, in sorted state order.
fn enumerate_states(config: &BenchmarkConfig) -> Vec<(usize, usize, u64, StateId)> {
    let mut states = Vec::new();
    for (di, d) in config.datasets.iter().enumerate() {
        for (gi, g) in config.generators.iter().enumerate() {
            for &seed in &config.seeds {
                states.push((di, gi, seed, StateId { dataset: d.name().to_string(), generator: g.name(), seed }));
            }
        }
    }
    states.sort_by(|a, b| a.3.cmp(&b.3));
    states
}

pub fn run_benchmark(config: &BenchmarkConfig) -> Result<BenchmarkReport> {
    run_benchmark_with(config, &StandardRunner)
}

/// Build every state's bundle, in sorted state order. Runs on the ambient
/// rayon pool.
pub fn state_bundles(config: &BenchmarkConfig) -> Vec<(StateId, Result<DatasetBundle>)> {
    let datasets: Vec<Result<PreparedDataset>> =
        config.datasets.par_iter().map(|d| prepare_dataset(d, config.master_seed)).collect();
    enumerate_states(config)
        .into_par_iter()
        .map(|(di, gi, seed, state)| {
            let bundle = match &datasets[di] {
                Ok(d) => build_bundle(d, &config.generators[gi], seed, config.master_seed),
                Err(e) => Err(Error::Benchmark(format!("dataset {} failed to load: {e}", d_name(config, di)))),
            };
            (state, bundle)
        })
        .collect()
}

fn d_name(config: &BenchmarkConfig, i: usize) -> &str {
    config.datasets[i].name()
}

/// Bundles then per-state evaluation; failed states are split out.
fn run_states(
    config: &BenchmarkConfig,
    runner: &dyn AttackRunner,
    attacks: &[AttackConfig],
    ensembles: &[EnsembleConfig],
    metrics: &[MetricKind],
    options: RunOptions,
) -> Result<(Vec<StateReport>, Vec<FailedState>)> {
    let pool = thread_pool(config.parallelism)?;
    let outcomes: Vec<std::result::Result<StateReport, FailedState>> = pool.install(|| {
        state_bundles(config)
            .into_par_iter()
            .map(|(state, bundle)| {
                bundle
                    .and_then(|b| run_state_with(runner, &b, attacks, ensembles, metrics, config.master_seed, options))
                    .map_err(|e| FailedState { state, error: e.to_string() })
            })
            .collect()
    });
    let mut states = Vec::new();
    let mut failed_states = Vec::new();
    for o in outcomes {
        match o {
            Ok(s) => states.push(s),
            Err(f) => failed_states.push(f),
        }
    }
    if states.is_empty() {
        let first = failed_states.first().map(|f| format!(": {} ({})", f.state, f.error)).unwrap_or_default();
        return Err(Error::Benchmark(format!("every state failed{first}")));
    }
    Ok((states, failed_states))
}

pub fn run_benchmark_with(config: &BenchmarkConfig, runner: &dyn AttackRunner) -> Result<BenchmarkReport> {
    config.validate()?;
    let options = RunOptions { keep_scores: config.keep_scores, record_timings: config.record_timings };
    let (states, failed_states) =
        run_states(config, runner, &config.attacks, &config.ensembles, &config.metrics, options)?;
    let summaries = aggregate(config, &states)?;
    Ok(BenchmarkReport { config: config.clone(), states, failed_states, summaries, contributions: Vec::new() })
}

/// Leave-one-out contributions of each attack to each ensemble, per state,
/// ranked across states.
pub fn run_contribution_analysis(
    report: &BenchmarkReport,
    ensembles: &[EnsembleConfig],
    metrics: &[MetricKind],
) -> Result<Vec<ContributionTable>> {
    if ensembles.is_empty() || metrics.is_empty() {
        return Err(Error::Analysis("contribution analysis needs at least one ensemble and metric".into()));
    }
    let attack_ids: Vec<String> = report.config.attacks.iter().map(AttackConfig::id).collect();
    let mut inputs = Vec::with_capacity(report.states.len());
    for s in &report.states {
        let labels = s.labels.clone().ok_or_else(|| {
            Error::Analysis(format!("state {} has no labels; re-run with keep_scores enabled", s.state))
        })?;
        inputs.push((s.state.to_string(), s.score_matrix()?, labels));
    }
    let mut tables = Vec::new();
    for &metric in metrics {
        let per_state: Vec<Vec<(String, BTreeMap<String, f64>)>> = inputs
            .par_iter()
            .map(|(_, matrix, labels)| {
                ensembles
                    .iter()
                    .filter(|_| matrix.n_attacks() >= 2)
                    .map(|e| Ok((e.id(), loo_contribution(matrix, e, labels, metric)?)))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let mut rows = Vec::new();
        for ((state, _, _), contribs) in inputs.iter().zip(&per_state) {
            for (ens, c) in contribs {
                for id in &attack_ids {
                    if let Some(v) = c.get(id) {
                        rows.push(ContributionRow {
                            state: state.clone(),
                            ensemble: ens.clone(),
                            attack: id.clone(),
                            contribution: *v,
                        });
                    }
                }
            }
        }
        let mut ranks = BTreeMap::new();
        for e in ensembles {
            let eid = e.id();
            let states: Vec<String> = inputs.iter().map(|(s, _, _)| s.clone()).collect();
            let values = attack_ids
                .iter()
                .map(|a| {
                    per_state
                        .iter()
                        .map(|contribs| contribs.iter().find(|(id, _)| *id == eid).and_then(|(_, c)| c.get(a).copied()))
                        .collect()
                })
                .collect();
            let table = PayoffTable::new(metric, attack_ids.clone(), states, values)?;
            if attack_ids.len() >= 2 {
                ranks.insert(eid, rank_table(&table)?);
            }
        }
        tables.push(ContributionTable { metric, rows, ranks });
    }
    Ok(tables)
}

/// The default hyperparameter grid for the ensemble-size experiment.
pub fn size_experiment_grid() -> Vec<AttackConfig> {
    let mut grid = Vec::new();
    for metric in [DistanceMetric::L1, DistanceMetric::L2] {
        grid.push(AttackConfig::Dcr { metric });
    }
    for metric in [DistanceMetric::L1, DistanceMetric::L2] {
        grid.push(AttackConfig::DcrDiff { metric });
    }
    const KS: [usize; 6] = [1, 3, 5, 10, 20, 50];
    for k in KS {
        grid.push(AttackConfig::GenLra { k });
    }
    for k in KS {
        grid.push(AttackConfig::Dpi { k, metric: DistanceMetric::L2 });
    }
    grid.push(AttackConfig::Classifier { learner: LearnerConfig::forest() });
    grid.push(AttackConfig::Classifier { learner: LearnerConfig::logistic() });
    grid.push(AttackConfig::Mc { epsilon: EpsilonRule::default(), metric: DistanceMetric::L2 });
    grid.push(AttackConfig::Logan { learner: LearnerConfig::mlp() });
    grid.push(AttackConfig::Domias);
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizePoint {
    pub size: usize,
    pub mean: f64,
    pub std_error: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeCurve {
    pub ensemble: String,
    pub metric: MetricKind,
    pub points: Vec<SizePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeExperimentReport {
    pub master_seed: u64,
    pub sizes: Vec<usize>,
    pub trials: usize,
    pub grid: Vec<String>,
    pub states: Vec<StateId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failed_states: Vec<FailedState>,
    pub curves: Vec<SizeCurve>,
}

/// Draw `size` grid indices: a random permutation first, then uniform draws
/// with replacement once the grid is used up.
fn sample_combination(grid_len: usize, size: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..grid_len).collect();
    idx.shuffle(rng);
    idx.truncate(size);
    while idx.len() < size {
        idx.push(rng.random_range(0..grid_len));
    }
    idx
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Grid-indexed scores (None where the attack failed) and the labels.
type CachedState = (Vec<Option<Vec<f64>>>, Vec<u8>);

/// Mean AUC and TPR@0.1 of each ensemble as a function of how many randomly
/// drawn grid attacks it combines, averaged over the config's states.
pub fn run_size_experiment(
    config: &BenchmarkConfig,
    sizes: &[usize],
    trials: usize,
    master_seed: u64,
) -> Result<SizeExperimentReport> {
    if sizes.is_empty() || sizes.iter().any(|&s| s < 2) {
        return Err(Error::invalid("ensemble sizes must all be at least 2"));
    }
    if trials == 0 {
        return Err(Error::invalid("the size experiment needs at least one trial"));
    }
    if config.ensembles.is_empty() {
        return Err(Error::invalid("the size experiment needs at least one ensemble"));
    }
    let grid = size_experiment_grid();
    let grid_ids: Vec<String> = grid.iter().map(AttackConfig::id).collect();
    let metrics = [MetricKind::Auc, MetricKind::TprAtFpr(0.1)];
    let sub = BenchmarkConfig { master_seed, ..config.clone() };
    let options = RunOptions { keep_scores: true, record_timings: false };
    let (states, failed_states) = run_states(&sub, &StandardRunner, &grid, &[], &metrics, options)?;
    let pool = thread_pool(config.parallelism)?;

    pool.install(|| {
        // per state: grid index → scores (None when that attack failed)
        let cached: Vec<CachedState> = states
            .iter()
            .map(|s| {
                let rows = grid_ids.iter().map(|id| s.strategy(id).and_then(|r| r.scores.clone())).collect();
                (rows, s.labels.clone().unwrap_or_default())
            })
            .collect();

        let mut curves: Vec<SizeCurve> = config
            .ensembles
            .iter()
            .flat_map(|e| metrics.iter().map(move |&m| SizeCurve { ensemble: e.id(), metric: m, points: Vec::new() }))
            .collect();
        for &size in sizes {
            // trial → (ensemble, metric) → mean across states
            let per_trial: Vec<Vec<f64>> = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let mut rng = derive_rng(master_seed, &["size-exp", &size.to_string(), &t.to_string()]);
                    let combo = sample_combination(grid.len(), size, &mut rng);
                    let mut sums = vec![0.0; curves.len()];
                    let mut counts = vec![0usize; curves.len()];
                    for (rows, labels) in &cached {
                        let mut ids = Vec::new();
                        let mut mat = Vec::new();
                        for (k, &g) in combo.iter().enumerate() {
                            if let Some(r) = &rows[g] {
                                ids.push(format!("{}#{k}", grid_ids[g]));
                                mat.push(r.clone());
                            }
                        }
                        let Ok(matrix) = ScoreMatrix::new(ids, mat) else { continue };
                        for (ei, e) in config.ensembles.iter().enumerate() {
                            // explicit weights refer to grid ids; fall back to uniform
                            let e = match &e.kind {
                                EnsembleKind::WeightedMean { weights: Some(_) } => {
                                    EnsembleConfig { kind: EnsembleKind::WeightedMean { weights: None }, ..e.clone() }
                                }
                                _ => e.clone(),
                            };
                            let Ok(out) = run_ensemble(&e, &matrix) else { continue };
                            for (mi, m) in metrics.iter().enumerate() {
                                if let Ok(v) = m.evaluate(&out.scores, labels) {
                                    sums[ei * metrics.len() + mi] += v;
                                    counts[ei * metrics.len() + mi] += 1;
                                }
                            }
                        }
                    }
                    sums.iter().zip(&counts).map(|(s, &c)| if c > 0 { s / c as f64 } else { f64::NAN }).collect()
                })
                .collect();
            for (ci, curve) in curves.iter_mut().enumerate() {
                let vals: Vec<f64> = per_trial.iter().map(|t| t[ci]).filter(|v| v.is_finite()).collect();
                if vals.is_empty() {
                    continue;
                }
                let (mean, std_error) = mean_se(&vals);
                curve.points.push(SizePoint { size, mean, std_error, trials: vals.len() });
            }
        }
        Ok(SizeExperimentReport {
            master_seed,
            sizes: sizes.to_vec(),
            trials,
            grid: grid_ids.clone(),
            states: states.iter().map(|s| s.state.clone()).collect(),
            failed_states,
            curves,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_has_twenty_one_distinct_instantiations() {
        let ids: std::collections::BTreeSet<String> = size_experiment_grid().iter().map(AttackConfig::id).collect();
        assert_eq!(ids.len(), 21);
    }

    #[test]
    fn combinations_use_the_grid_before_repeating() {
        let mut rng = derive_rng(1, &["t"]);
        let c = sample_combination(21, 15, &mut rng);
        let distinct: std::collections::BTreeSet<usize> = c.iter().copied().collect();
        assert_eq!(distinct.len(), 15);
        let c = sample_combination(21, 25, &mut rng);
        let distinct: std::collections::BTreeSet<usize> = c.iter().copied().collect();
        assert_eq!(distinct.len(), 21);
        assert_eq!(c.len(), 25);
    }

    #[test]
    fn config_defaults_and_validation() {
        let cfg = BenchmarkConfig::from_json(
            r#"{"datasets":[{"name":"toy","population":"two-d-mixture","n":200}],
                "generators":[{"kind":"memorizer"},{"kind":"safe-sampler"}]}"#,
        )
        .unwrap();
        assert_eq!(cfg.seeds.len(), 5);
        assert_eq!(cfg.strategy_ids().len(), 11);
        assert_eq!(cfg.parallelism, 1);
        let dup = r#"{"datasets":[{"name":"a","population":"mixed","n":50},{"name":"a","population":"mixed","n":50}],
                      "generators":[{"kind":"memorizer"}]}"#;
        assert!(BenchmarkConfig::from_json(dup).is_err());
        let empty = r#"{"datasets":[],"generators":[{"kind":"memorizer"}]}"#;
        assert!(BenchmarkConfig::from_json(empty).is_err());
    }
}
