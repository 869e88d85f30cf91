//! Evaluation: AUC, TPR at a fixed FPR, rank aggregation across states,
//! dominance, correlation and disagreement between attacks, leave-one-out
//! contributions and the ensemble-vs-individual rank advantage.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ensembles::{average_ranks, median_thresholds, run_ensemble, EnsembleConfig, ScoreMatrix};
use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// Which payoff a table holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MetricKind {
    Auc,
    TprAtFpr(f64),
}

impl MetricKind {
    pub fn defaults() -> Vec<MetricKind> {
        vec![MetricKind::Auc, MetricKind::TprAtFpr(0.01), MetricKind::TprAtFpr(0.1)]
    }

    pub fn evaluate(self, scores: &[f64], labels: &[u8]) -> Result<f64> {
        match self {
            MetricKind::Auc => auc(scores, labels),
            MetricKind::TprAtFpr(alpha) => tpr_at_fpr(scores, labels, alpha),
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricKind::Auc => f.write_str("AUC"),
            MetricKind::TprAtFpr(a) => write!(f, "TPR@{a}"),
        }
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auc") {
            return Ok(MetricKind::Auc);
        }
        let alpha = s
            .strip_prefix("TPR@")
            .or_else(|| s.strip_prefix("tpr@"))
            .and_then(|a| a.parse::<f64>().ok())
            .ok_or_else(|| Error::invalid(format!("unknown metric {s:?}; expected AUC or TPR@<alpha>")))?;
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::invalid(format!("FPR level must be in [0, 1], got {alpha}")));
        }
        Ok(MetricKind::TprAtFpr(alpha))
    }
}

impl TryFrom<String> for MetricKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MetricKind> for String {
    fn from(m: MetricKind) -> String {
        m.to_string()
    }
}

fn class_counts(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension { expected: labels.len(), actual: scores.len() });
    }
    if let Some(l) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Metric(format!("labels must be 0 or 1, found {l}")));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Metric("both classes must be present".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Metric("scores contain NaN".into()));
    }
    Ok((pos, neg))
}

/// Probability that a random member outscores a random non-member, ties 0.5.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = class_counts(scores, labels)?;
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l == 1).map(|(r, _)| r).sum();
    let p = pos as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * neg as f64))
}

/// Highest empirical TPR over thresholds `score ≥ θ` whose FPR is at most `alpha`.
pub fn tpr_at_fpr(scores: &[f64], labels: &[u8], alpha: f64) -> Result<f64> {
    let (pos, neg) = class_counts(scores, labels)?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("FPR level must be in [0, 1], got {alpha}")));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp, mut best) = (0usize, 0usize, 0.0f64);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        if fp as f64 / neg as f64 <= alpha {
            best = best.max(tp as f64 / pos as f64);
        }
    }
    Ok(best)
}

/// Strategies × states payoff matrix. `None` marks a strategy that produced
/// no result in that state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffTable {
    pub metric: MetricKind,
    pub strategies: Vec<String>,
    pub states: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl PayoffTable {
    pub fn new(metric: MetricKind, strategies: Vec<String>, states: Vec<String>, values: Vec<Vec<Option<f64>>>) -> Result<Self> {
        if values.len() != strategies.len() {
            return Err(Error::Dimension { expected: strategies.len(), actual: values.len() });
        }
        for row in &values {
            if row.len() != states.len() {
                return Err(Error::Dimension { expected: states.len(), actual: row.len() });
            }
            if row.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Metric("payoffs must be finite".into()));
            }
        }
        Ok(Self { metric, strategies, states, values })
    }

    /// Fully populated table.
    pub fn dense(metric: MetricKind, strategies: Vec<String>, states: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(metric, strategies, states, values.into_iter().map(|r| r.into_iter().map(Some).collect()).collect())
    }

    /// Descending average ranks among the strategies present in `state`.
    pub fn state_ranks(&self, state: usize) -> Vec<Option<f64>> {
        let present: Vec<(usize, f64)> =
            self.values.iter().enumerate().filter_map(|(i, r)| r[state].map(|v| (i, -v))).collect();
        let ranks = average_ranks(&present.iter().map(|p| p.1).collect::<Vec<_>>());
        let mut out = vec![None; self.strategies.len()];
        for ((i, _), r) in present.iter().zip(ranks) {
            out[*i] = Some(r);
        }
        out
    }

    /// Concatenate the strategies of two tables over the same states.
    pub fn joined(&self, other: &PayoffTable) -> Result<PayoffTable> {
        if self.states != other.states {
            return Err(Error::Metric("payoff tables cover different states".into()));
        }
        let mut strategies = self.strategies.clone();
        strategies.extend(other.strategies.iter().cloned());
        let mut values = self.values.clone();
        values.extend(other.values.iter().cloned());
        PayoffTable::new(self.metric, strategies, self.states.clone(), values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub strategy: String,
    pub mean_rank: f64,
    pub std_error: f64,
    pub p_top3: f64,
    pub p_best: f64,
    /// States in which the strategy had a payoff.
    pub states: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankSummary {
    pub metric: MetricKind,
    pub entries: Vec<RankEntry>,
}

impl RankSummary {
    pub fn get(&self, strategy: &str) -> Option<&RankEntry> {
        self.entries.iter().find(|e| e.strategy == strategy)
    }
}

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Mean rank, its standard error, and top-3 / best proportions per strategy.
/// Strategies without a payoff in any state are left out.
pub fn rank_table(payoffs: &PayoffTable) -> Result<RankSummary> {
    if payoffs.strategies.len() < 2 || payoffs.states.is_empty() {
        return Err(Error::Metric("rank table needs at least 2 strategies and 1 state".into()));
    }
    let k = payoffs.strategies.len();
    let mut ranks: Vec<Vec<f64>> = vec![Vec::new(); k];
    let mut best = vec![0usize; k];
    for s in 0..payoffs.states.len() {
        let r = payoffs.state_ranks(s);
        let top = payoffs.values.iter().filter_map(|row| row[s]).fold(f64::NEG_INFINITY, f64::max);
        for i in 0..k {
            if let Some(ri) = r[i] {
                ranks[i].push(ri);
                if payoffs.values[i][s] == Some(top) {
                    best[i] += 1;
                }
            }
        }
    }
    let entries = payoffs
        .strategies
        .iter()
        .enumerate()
        .filter(|(i, _)| !ranks[*i].is_empty())
        .map(|(i, name)| {
            let n = ranks[i].len();
            let (mean_rank, std_error) = mean_and_se(&ranks[i]);
            let denom = n as f64;
            RankEntry {
                strategy: name.clone(),
                mean_rank,
                std_error,
                p_top3: ranks[i].iter().filter(|&&r| r <= 3.0).count() as f64 / denom,
                p_best: best[i] as f64 / denom,
                states: n,
            }
        })
        .collect();
    Ok(RankSummary { metric: payoffs.metric, entries })
}

/// The first strategy whose payoff is at least every other strategy's in
/// every state, if one exists.
pub fn dominance_check(payoffs: &PayoffTable) -> Option<String> {
    (0..payoffs.strategies.len())
        .find(|&a| {
            (0..payoffs.states.len()).all(|s| match payoffs.values[a][s] {
                Some(va) => payoffs.values.iter().all(|row| row[s].is_none_or(|v| va >= v)),
                None => false,
            })
        })
        .map(|a| payoffs.strategies[a].clone())
}

/// Pearson correlation between every pair of attack rows.
pub fn correlation_matrix(scores: &ScoreMatrix) -> Vec<Vec<f64>> {
    let centered: Vec<(Vec<f64>, f64)> = scores
        .rows()
        .iter()
        .map(|r| {
            let mean = r.iter().sum::<f64>() / r.len() as f64;
            let c: Vec<f64> = r.iter().map(|v| v - mean).collect();
            let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            (c, norm)
        })
        .collect();
    let n = centered.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        out[i][i] = 1.0;
        for j in i + 1..n {
            let (a, na) = &centered[i];
            let (b, nb) = &centered[j];
            let c = if *na > 0.0 && *nb > 0.0 {
                (a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)).clamp(-1.0, 1.0)
            } else {
                0.0
            };
            out[i][j] = c;
            out[j][i] = c;
        }
    }
    out
}

/// Fraction of records on which two attacks' median-threshold decisions differ.
pub fn disagreement_matrix(scores: &ScoreMatrix) -> Vec<Vec<f64>> {
    let thresholds = median_thresholds(scores);
    let votes: Vec<Vec<bool>> =
        scores.rows().iter().zip(&thresholds).map(|(r, t)| r.iter().map(|v| v >= t).collect()).collect();
    let m = scores.n_records() as f64;
    let n = votes.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = votes[i].iter().zip(&votes[j]).filter(|(a, b)| a != b).count() as f64 / m;
            out[i][j] = d;
            out[j][i] = d;
        }
    }
    out
}

/// Drop in the ensemble's payoff when each attack is left out. The reduced
/// ensemble re-derives its normalization and thresholds.
pub fn loo_contribution(
    scores: &ScoreMatrix,
    ensemble: &EnsembleConfig,
    labels: &[u8],
    metric: MetricKind,
) -> Result<BTreeMap<String, f64>> {
    if scores.n_attacks() < 2 {
        return Err(Error::Analysis("leave-one-out needs at least 2 attacks".into()));
    }
    let full = metric.evaluate(&run_ensemble(ensemble, scores)?.scores, labels)?;
    scores
        .ids()
        .iter()
        .map(|id| {
            let reduced = run_ensemble(ensemble, &scores.without(id)?)?;
            Ok((id.clone(), full - metric.evaluate(&reduced.scores, labels)?))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageSummary {
    pub samples: Vec<f64>,
    pub mean: f64,
    pub fraction_positive: f64,
}

/// Per-state joint ranks and which strategies were present.
fn joint_ranks(individuals: &PayoffTable, ensembles: &PayoffTable) -> Result<(PayoffTable, Vec<Vec<Option<f64>>>)> {
    if individuals.strategies.is_empty() || ensembles.strategies.is_empty() || individuals.states.is_empty() {
        return Err(Error::Analysis("advantage needs individuals, ensembles and states".into()));
    }
    let joint = individuals.joined(ensembles)?;
    let ranks = (0..joint.states.len()).map(|s| joint.state_ranks(s)).collect();
    Ok((joint, ranks))
}

/// Sample `trials` (state, ensemble, individual) triples and record
/// rank(individual) − rank(ensemble) in the state's joint ranking.
pub fn advantage_distribution(
    individuals: &PayoffTable,
    ensembles: &PayoffTable,
    seed: u64,
    trials: usize,
) -> Result<AdvantageSummary> {
    let (_, ranks) = joint_ranks(individuals, ensembles)?;
    let n_ind = individuals.strategies.len();
    let mut rng = rng_from_seed(seed);
    let mut samples = Vec::with_capacity(trials);
    let mut attempts = 0usize;
    while samples.len() < trials {
        attempts += 1;
        if attempts > trials.saturating_mul(1000).max(1000) {
            return Err(Error::Analysis("no state has both an ensemble and an individual payoff".into()));
        }
        let r = &ranks[rng.random_range(0..ranks.len())];
        let e = n_ind + rng.random_range(0..ensembles.strategies.len());
        let i = rng.random_range(0..n_ind);
        if let (Some(ri), Some(re)) = (r[i], r[e]) {
            samples.push(ri - re);
        }
    }
    let n = samples.len().max(1) as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let fraction_positive = samples.iter().filter(|&&v| v > 0.0).count() as f64 / n;
    Ok(AdvantageSummary { samples, mean, fraction_positive })
}

/// Exact expectation of the sampled advantage (uniform state, then uniform
/// ensemble and individual among those present).
pub fn expected_advantage(individuals: &PayoffTable, ensembles: &PayoffTable) -> Result<f64> {
    let (_, ranks) = joint_ranks(individuals, ensembles)?;
    let n_ind = individuals.strategies.len();
    let per_state: Vec<f64> = ranks
        .iter()
        .filter_map(|r| {
            let ind: Vec<f64> = r[..n_ind].iter().flatten().copied().collect();
            let ens: Vec<f64> = r[n_ind..].iter().flatten().copied().collect();
            if ind.is_empty() || ens.is_empty() {
                return None;
            }
            let mi = ind.iter().sum::<f64>() / ind.len() as f64;
            let me = ens.iter().sum::<f64>() / ens.len() as f64;
            Some(mi - me)
        })
        .collect();
    if per_state.is_empty() {
        return Err(Error::Analysis("no state has both an ensemble and an individual payoff".into()));
    }
    Ok(per_state.iter().sum::<f64>() / per_state.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::Normalization;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// ROC area by sweeping every threshold and integrating the step curve.
    fn auc_by_sweep(scores: &[f64], labels: &[u8]) -> f64 {
        let mut thresholds: Vec<f64> = scores.to_vec();
        thresholds.sort_by(|a, b| b.total_cmp(a));
        thresholds.dedup();
        let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
        let neg = labels.len() as f64 - pos;
        let mut pts = vec![(0.0, 0.0)];
        for t in thresholds {
            let tp = scores.iter().zip(labels).filter(|(s, &l)| **s >= t && l == 1).count() as f64;
            let fp = scores.iter().zip(labels).filter(|(s, &l)| **s >= t && l == 0).count() as f64;
            pts.push((fp / neg, tp / pos));
        }
        // trapezoids across a tied block equal the 0.5 tie credit
        pts.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum()
    }

    #[test]
    fn auc_examples() {
        assert!((auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auc(&[0.3; 6], &[0, 1, 0, 1, 0, 1]).unwrap(), 0.5);
        assert!(matches!(auc(&[0.1, 0.2], &[1, 1]), Err(Error::Metric(_))));
    }

    #[test]
    fn tpr_examples() {
        let s = [0.9, 0.8, 0.3, 0.2];
        let l = [1, 0, 1, 0];
        assert_eq!(tpr_at_fpr(&s, &l, 0.01).unwrap(), 0.5);
        assert_eq!(tpr_at_fpr(&s, &l, 0.5).unwrap(), 1.0);
        assert!(tpr_at_fpr(&s, &[1, 1, 1, 1], 0.1).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let scores: Vec<f64> = (0..20000).map(|_| rng.random::<f64>()).collect();
        let labels: Vec<u8> = (0..20000).map(|i| (i % 2) as u8).collect();
        assert!(tpr_at_fpr(&scores, &labels, 0.0).unwrap() < 0.01);
    }

    #[test]
    fn metric_names_round_trip() {
        for m in MetricKind::defaults() {
            assert_eq!(m.to_string().parse::<MetricKind>().unwrap(), m);
        }
        assert_eq!(MetricKind::TprAtFpr(0.01).to_string(), "TPR@0.01");
        assert!("TPR@2".parse::<MetricKind>().is_err());
        assert_eq!(serde_json::to_string(&MetricKind::Auc).unwrap(), "\"AUC\"");
    }

    fn table(values: Vec<Vec<f64>>) -> PayoffTable {
        let k = values.len();
        let s = values[0].len();
        PayoffTable::dense(
            MetricKind::Auc,
            (0..k).map(|i| format!("A{i}")).collect(),
            (0..s).map(|i| format!("w{i}")).collect(),
            values,
        )
        .unwrap()
    }

    #[test]
    fn rank_table_examples() {
        let r = rank_table(&table(vec![vec![0.9; 4], vec![0.7; 4]])).unwrap();
        assert_eq!((r.entries[0].mean_rank, r.entries[1].mean_rank), (1.0, 2.0));
        assert_eq!(r.entries[0].std_error, 0.0);
        let r = rank_table(&table(vec![vec![0.8], vec![0.8], vec![0.1]])).unwrap();
        assert_eq!((r.entries[0].mean_rank, r.entries[1].mean_rank), (1.5, 1.5));
        assert_eq!((r.entries[0].p_best, r.entries[1].p_best), (1.0, 1.0));
        let mut rows = vec![vec![0.99; 5]];
        rows.extend((0..10).map(|i| vec![0.5 + 0.01 * i as f64; 5]));
        let r = rank_table(&table(rows)).unwrap();
        assert_eq!((r.entries[0].p_best, r.entries[0].p_top3), (1.0, 1.0));
        assert!(rank_table(&table(vec![vec![0.5]])).is_err());
    }

    #[test]
    fn rank_table_skips_missing_cells() {
        let t = PayoffTable::new(
            MetricKind::Auc,
            vec!["a".into(), "b".into(), "c".into()],
            vec!["w0".into(), "w1".into()],
            vec![vec![Some(0.9), None], vec![Some(0.5), Some(0.6)], vec![Some(0.1), Some(0.7)]],
        )
        .unwrap();
        let r = rank_table(&t).unwrap();
        assert_eq!(r.get("a").unwrap().states, 1);
        assert_eq!(r.get("a").unwrap().mean_rank, 1.0);
        assert_eq!(r.get("c").unwrap().mean_rank, 2.0);
        assert_eq!(r.get("c").unwrap().p_best, 0.5);
    }

    #[test]
    fn dominance_examples() {
        assert_eq!(dominance_check(&table(vec![vec![0.3, 0.4]])), Some("A0".into()));
        assert_eq!(dominance_check(&table(vec![vec![0.9, 0.1], vec![0.1, 0.9]])), None);
        assert_eq!(dominance_check(&table(vec![vec![0.5, 0.9], vec![0.5, 0.2], vec![0.1, 0.8]])), Some("A0".into()));
    }

    fn mat(rows: Vec<Vec<f64>>) -> ScoreMatrix {
        ScoreMatrix::new((0..rows.len()).map(|i| format!("a{i}")).collect(), rows).unwrap()
    }

    #[test]
    fn correlation_examples() {
        let r: Vec<f64> = (0..20).map(|i| ((i * 7) % 13) as f64).collect();
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let c = correlation_matrix(&mat(vec![r.clone(), neg, vec![2.0; 20]]));
        assert_eq!(c[0][0], 1.0);
        assert!((c[0][1] + 1.0).abs() < 1e-12);
        assert_eq!((c[0][2], c[2][2]), (0.0, 1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a: Vec<f64> = (0..10000).map(|_| rng.random()).collect();
        let b: Vec<f64> = (0..10000).map(|_| rng.random()).collect();
        assert!(correlation_matrix(&mat(vec![a, b]))[0][1].abs() < 0.05);
    }

    #[test]
    fn disagreement_examples() {
        let r: Vec<f64> = (0..21).map(|i| i as f64).collect();
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let d = disagreement_matrix(&mat(vec![r.clone(), neg, r]));
        assert_eq!(d[0][0], 0.0);
        assert_eq!(d[0][2], 0.0);
        // the median row itself votes yes under both orientations
        assert!((d[0][1] - 20.0 / 21.0).abs() < 1e-12);
    }

    #[test]
    fn loo_examples() {
        let labels: Vec<u8> = (0..12).map(|i| (i % 2) as u8).collect();
        let a: Vec<f64> = (0..12).map(|i| ((i * 5) % 12) as f64).collect();
        let mean_rank = EnsembleConfig { normalization: Normalization::Rank, ..EnsembleConfig::mean() };
        let dup = mat(vec![a.clone(), a.clone()]);
        let c = loo_contribution(&dup, &mean_rank, &labels, MetricKind::Auc).unwrap();
        assert!(c.values().all(|v| *v == 0.0));
        // same ordering, different scale: symmetric contributions
        let b: Vec<f64> = a.iter().map(|v| v * 10.0 + 3.0).collect();
        let c = loo_contribution(&mat(vec![a.clone(), b]), &EnsembleConfig::mean(), &labels, MetricKind::Auc).unwrap();
        assert_eq!(c["a0"], c["a1"]);
        // an attack with zero weight changes nothing when removed
        let other: Vec<f64> = (0..12).map(|i| ((i * 7) % 11) as f64).collect();
        let w: BTreeMap<String, f64> = [("a0".into(), 1.0), ("a1".into(), 1.0), ("a2".into(), 0.0)].into();
        let c = loo_contribution(&mat(vec![a.clone(), other, a.clone()]), &EnsembleConfig::weighted_mean(Some(w)), &labels, MetricKind::Auc)
            .unwrap();
        assert_eq!(c["a2"], 0.0);
        assert!(loo_contribution(&mat(vec![a]), &EnsembleConfig::mean(), &labels, MetricKind::Auc).is_err());
    }

    #[test]
    fn advantage_examples() {
        let ind = table(vec![vec![0.5, 0.6], vec![0.4, 0.3], vec![0.2, 0.1]]);
        let ens = PayoffTable { strategies: vec!["E".into()], ..table(vec![vec![0.9, 0.95]]) };
        assert_eq!(expected_advantage(&ind, &ens).unwrap(), 2.0);
        let sampled = advantage_distribution(&ind, &ens, 3, 5000).unwrap();
        assert!((sampled.mean - 2.0).abs() < 0.05);
        assert_eq!(sampled.fraction_positive, 1.0);
        let same = PayoffTable { strategies: vec!["E0".into(), "E1".into(), "E2".into()], ..ind.clone() };
        assert_eq!(expected_advantage(&ind, &same).unwrap(), 0.0);
        let s = advantage_distribution(&ind, &same, 4, 20000).unwrap();
        assert!(s.mean.abs() < 0.05 && (0.0..=1.0).contains(&s.fraction_positive));
    }

    fn labeled() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
        (2usize..60).prop_flat_map(|n| {
            (prop::collection::vec(0u8..20, n), prop::collection::vec(0u8..2, n))
                .prop_filter("both classes", |(_, l)| l.contains(&0) && l.contains(&1))
                .prop_map(|(s, l)| (s.into_iter().map(|v| v as f64 / 4.0).collect(), l))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn mann_whitney_matches_roc_integration((s, l) in labeled()) {
            prop_assert!((auc(&s, &l).unwrap() - auc_by_sweep(&s, &l)).abs() < 1e-12);
        }

        #[test]
        fn auc_ignores_monotone_transforms((s, l) in labeled()) {
            let t: Vec<f64> = s.iter().map(|v| v.powi(3) * 2.0 - 7.0).collect();
            prop_assert_eq!(auc(&s, &l).unwrap(), auc(&t, &l).unwrap());
        }

        #[test]
        fn tpr_is_nondecreasing_in_alpha((s, l) in labeled(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(tpr_at_fpr(&s, &l, lo).unwrap() <= tpr_at_fpr(&s, &l, hi).unwrap());
        }

        #[test]
        fn per_state_ranks_sum_to_triangle(values in (2usize..8, 1usize..6).prop_flat_map(|(k, s)| prop::collection::vec(prop::collection::vec(0u8..5, s), k))) {
            let t = table(values.iter().map(|r| r.iter().map(|v| *v as f64 / 4.0).collect()).collect());
            let k = values.len() as f64;
            for s in 0..t.states.len() {
                let sum: f64 = t.state_ranks(s).iter().flatten().sum();
                prop_assert!((sum - k * (k + 1.0) / 2.0).abs() < 1e-9);
            }
            let r = rank_table(&t).unwrap();
            for e in &r.entries {
                prop_assert!(e.mean_rank >= 1.0 && e.mean_rank <= k);
                prop_assert!((0.0..=1.0).contains(&e.p_top3) && (0.0..=1.0).contains(&e.p_best));
            }
        }

        #[test]
        fn two_strict_winners_mean_no_dominance(k in 2usize..6, s in 2usize..6, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut values: Vec<Vec<f64>> = (0..k).map(|_| (0..s).map(|_| rng.random_range(0.0..0.5)).collect()).collect();
            values[0][0] = 0.9;
            values[1][1] = 0.9;
            prop_assert_eq!(dominance_check(&table(values)), None);
        }

        #[test]
        fn matrices_are_symmetric(rows in (2usize..30).prop_flat_map(|m| prop::collection::vec(prop::collection::vec(-10.0f64..10.0, m), 2..5))) {
            let m = mat(rows);
            let c = correlation_matrix(&m);
            let d = disagreement_matrix(&m);
            for i in 0..c.len() {
                prop_assert_eq!(c[i][i], 1.0);
                prop_assert_eq!(d[i][i], 0.0);
                for j in 0..c.len() {
                    prop_assert_eq!(c[i][j], c[j][i]);
                    prop_assert_eq!(d[i][j], d[j][i]);
                    prop_assert!((0.0..=1.0).contains(&d[i][j]));
                }
            }
        }
    }
}
