//! Unsupervised aggregation of attack scores: mean, weighted mean and
//! majority vote over per-attack normalized scores.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attacks::ScoreVector;
use crate::error::{Error, Result};
use crate::neighbors::sorted_quantile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    None,
    #[default]
    Minmax,
    Rank,
}

/// One row per attack, one column per test record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    ids: Vec<String>,
    rows: Vec<Vec<f64>>,
    normalization: Normalization,
}

impl ScoreMatrix {
    pub fn new(ids: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if ids.len() != rows.len() {
            return Err(Error::Dimension { expected: ids.len(), actual: rows.len() });
        }
        if rows.is_empty() {
            return Err(Error::invalid("score matrix needs at least one attack"));
        }
        let m = rows[0].len();
        for (id, row) in ids.iter().zip(&rows) {
            if row.len() != m {
                return Err(Error::Dimension { expected: m, actual: row.len() });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("attack {id} has non-finite scores")));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::invalid(format!("duplicate attack id {dup}")));
        }
        Ok(Self { ids, rows, normalization: Normalization::None })
    }

    pub fn from_vectors(vectors: &[ScoreVector]) -> Result<Self> {
        Self::new(vectors.iter().map(|v| v.attack.clone()).collect(), vectors.iter().map(|v| v.scores.clone()).collect())
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, id: &str) -> Option<&[f64]> {
        self.ids.iter().position(|i| i == id).map(|k| self.rows[k].as_slice())
    }

    pub fn n_attacks(&self) -> usize {
        self.rows.len()
    }

    pub fn n_records(&self) -> usize {
        self.rows[0].len()
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    /// The matrix with attack `id` removed.
    pub fn without(&self, id: &str) -> Result<ScoreMatrix> {
        let k = self.ids.iter().position(|i| i == id).ok_or_else(|| Error::invalid(format!("unknown attack {id}")))?;
        if self.ids.len() == 1 {
            return Err(Error::invalid("cannot remove the only attack"));
        }
        let mut out = self.clone();
        out.ids.remove(k);
        out.rows.remove(k);
        Ok(out)
    }

    /// Keep only the listed attacks, in the given order.
    pub fn select(&self, ids: &[String]) -> Result<ScoreMatrix> {
        let rows = ids
            .iter()
            .map(|id| self.row(id).map(<[f64]>::to_vec).ok_or_else(|| Error::invalid(format!("unknown attack {id}"))))
            .collect::<Result<Vec<_>>>()?;
        let mut out = ScoreMatrix::new(ids.to_vec(), rows)?;
        out.normalization = self.normalization;
        Ok(out)
    }
}

/// 1-based ranks in ascending order, ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn normalize_row(row: &[f64], mode: Normalization) -> Vec<f64> {
    match mode {
        Normalization::None => row.to_vec(),
        Normalization::Minmax => {
            let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi > lo {
                row.iter().map(|v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0)).collect()
            } else {
                vec![0.5; row.len()]
            }
        }
        Normalization::Rank => {
            if row.len() < 2 {
                return vec![0.5; row.len()];
            }
            let m = (row.len() - 1) as f64;
            average_ranks(row).into_iter().map(|r| (r - 1.0) / m).collect()
        }
    }
}

/// Rescale each attack's scores independently.
pub fn normalize(scores: &ScoreMatrix, mode: Normalization) -> ScoreMatrix {
    ScoreMatrix {
        ids: scores.ids.clone(),
        rows: scores.rows.iter().map(|r| normalize_row(r, mode)).collect(),
        normalization: mode,
    }
}

fn weighted_average(scores: &ScoreMatrix, weights: &[f64]) -> Result<Vec<f64>> {
    if weights.len() != scores.n_attacks() {
        return Err(Error::Dimension { expected: scores.n_attacks(), actual: weights.len() });
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
        return Err(Error::invalid(format!("weights must be nonnegative and finite, got {w}")));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("at least one ensemble weight must be positive"));
    }
    Ok((0..scores.n_records())
        .map(|i| scores.rows.iter().zip(weights).map(|(row, w)| w * row[i]).sum::<f64>() / total)
        .collect())
}

/// Per-record arithmetic mean across attacks.
pub fn mean_ensemble(scores: &ScoreMatrix) -> Result<Vec<f64>> {
    weighted_average(scores, &vec![1.0; scores.n_attacks()])
}

/// Per-record weighted mean. Every attack in the matrix needs a weight;
/// weights for attacks not in the matrix are ignored.
pub fn weighted_mean_ensemble(scores: &ScoreMatrix, weights: &BTreeMap<String, f64>) -> Result<Vec<f64>> {
    let w = scores
        .ids
        .iter()
        .map(|id| weights.get(id).copied().ok_or_else(|| Error::invalid(format!("no weight for attack {id}"))))
        .collect::<Result<Vec<_>>>()?;
    weighted_average(scores, &w)
}

/// Median of each attack's scores.
pub fn median_thresholds(scores: &ScoreMatrix) -> Vec<f64> {
    scores
        .rows
        .iter()
        .map(|r| {
            let mut s = r.clone();
            s.sort_by(f64::total_cmp);
            sorted_quantile(&s, 0.5)
        })
        .collect()
}

/// Fraction of attacks whose score reaches their threshold.
pub fn majority_vote_ensemble(scores: &ScoreMatrix, thresholds: &[f64]) -> Result<Vec<f64>> {
    if thresholds.len() != scores.n_attacks() {
        return Err(Error::Dimension { expected: scores.n_attacks(), actual: thresholds.len() });
    }
    let n = scores.n_attacks() as f64;
    Ok((0..scores.n_records())
        .map(|i| scores.rows.iter().zip(thresholds).filter(|(row, t)| row[i] >= **t).count() as f64 / n)
        .collect())
}

/// 1 where the score is strictly above `gamma`.
pub fn decide(scores: &[f64], gamma: f64) -> Vec<u8> {
    scores.iter().map(|&s| u8::from(s > gamma)).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    #[default]
    Median,
    /// Per-attack thresholds on the normalized scale.
    Explicit(BTreeMap<String, f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EnsembleKind {
    Mean,
    WeightedMean {
        /// Attack id → weight. `None` means uniform.
        #[serde(default)]
        weights: Option<BTreeMap<String, f64>>,
    },
    MajorityVote {
        #[serde(default)]
        thresholds: ThresholdRule,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(flatten)]
    pub kind: EnsembleKind,
    #[serde(default)]
    pub normalization: Normalization,
}

impl EnsembleConfig {
    pub fn mean() -> Self {
        Self { name: None, kind: EnsembleKind::Mean, normalization: Normalization::Minmax }
    }

    pub fn weighted_mean(weights: Option<BTreeMap<String, f64>>) -> Self {
        Self { name: None, kind: EnsembleKind::WeightedMean { weights }, normalization: Normalization::Minmax }
    }

    pub fn majority_vote() -> Self {
        Self {
            name: None,
            kind: EnsembleKind::MajorityVote { thresholds: ThresholdRule::Median },
            normalization: Normalization::Minmax,
        }
    }

    /// Mean, weighted mean (uniform) and majority vote.
    pub fn defaults() -> Vec<Self> {
        vec![Self::mean(), Self::weighted_mean(None), Self::majority_vote()]
    }

    pub fn id(&self) -> String {
        if let Some(name) = &self.name {
            return name.clone();
        }
        match &self.kind {
            EnsembleKind::Mean => "Mean",
            EnsembleKind::WeightedMean { .. } => "WeightedMean",
            EnsembleKind::MajorityVote { .. } => "MajorityVote",
        }
        .to_string()
    }
}

/// Result of applying one ensemble to a score matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleOutput {
    pub id: String,
    pub scores: Vec<f64>,
    /// Weights actually used (weighted mean).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<BTreeMap<String, f64>>,
    /// Per-attack thresholds actually used (majority vote).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<BTreeMap<String, f64>>,
}

/// Mean or weighted mean under `mode`. Rank mode averages the raw (r − 1)
/// offsets, which f64 sums exactly, and rescales once; scaling each row first
/// rounds every term and can reorder records that should tie.
fn average_under(raw: &ScoreMatrix, mode: Normalization, weights: &[f64]) -> Result<Vec<f64>> {
    if mode != Normalization::Rank || raw.n_records() < 2 {
        return weighted_average(&normalize(raw, mode), weights);
    }
    let offsets = ScoreMatrix {
        ids: raw.ids.clone(),
        rows: raw.rows.iter().map(|r| average_ranks(r).into_iter().map(|x| x - 1.0).collect()).collect(),
        normalization: Normalization::None,
    };
    let scale = (raw.n_records() - 1) as f64;
    Ok(weighted_average(&offsets, weights)?.into_iter().map(|v| v / scale).collect())
}

pub fn run_ensemble(config: &EnsembleConfig, raw: &ScoreMatrix) -> Result<EnsembleOutput> {
    let m = normalize(raw, config.normalization);
    let mut out = EnsembleOutput { id: config.id(), scores: Vec::new(), weights: None, thresholds: None };
    match &config.kind {
        EnsembleKind::Mean => out.scores = average_under(raw, config.normalization, &vec![1.0; raw.n_attacks()])?,
        EnsembleKind::WeightedMean { weights } => {
            let used: BTreeMap<String, f64> = match weights {
                Some(w) => m
                    .ids
                    .iter()
                    .map(|id| {
                        w.get(id).map(|v| (id.clone(), *v)).ok_or_else(|| Error::invalid(format!("no weight for attack {id}")))
                    })
                    .collect::<Result<_>>()?,
                None => m.ids.iter().map(|id| (id.clone(), 1.0)).collect(),
            };
            let w: Vec<f64> = m.ids.iter().map(|id| used[id]).collect();
            out.scores = average_under(raw, config.normalization, &w)?;
            out.weights = Some(used);
        }
        EnsembleKind::MajorityVote { thresholds } => {
            let t = match thresholds {
                ThresholdRule::Median => median_thresholds(&m),
                ThresholdRule::Explicit(map) => m
                    .ids
                    .iter()
                    .map(|id| map.get(id).copied().ok_or_else(|| Error::invalid(format!("no threshold for attack {id}"))))
                    .collect::<Result<_>>()?,
            };
            out.scores = majority_vote_ensemble(&m, &t)?;
            out.thresholds = Some(m.ids.iter().cloned().zip(t).collect());
        }
    }
    Ok(out)
}

/// Read a JSON object mapping attack id to nonnegative weight.
impl std::str::FromStr for EnsembleConfig {
    type Err = Error;

    /// `mean`, `weighted-mean` or `majority-vote` with default settings.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "mean" => Ok(EnsembleConfig::mean()),
            "weighted-mean" | "weightedmean" => Ok(EnsembleConfig::weighted_mean(None)),
            "majority-vote" | "majorityvote" => Ok(EnsembleConfig::majority_vote()),
            _ => Err(Error::invalid(format!("unknown ensemble {s:?}"))),
        }
    }
}

pub fn load_weights(path: &Path) -> Result<BTreeMap<String, f64>> {
    let text = std::fs::read_to_string(path)?;
    parse_weights(&text)
}

pub fn parse_weights(text: &str) -> Result<BTreeMap<String, f64>> {
    let w: BTreeMap<String, f64> = serde_json::from_str(text)?;
    if let Some((id, v)) = w.iter().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
        return Err(Error::invalid(format!("weight for {id} must be nonnegative, got {v}")));
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mat(rows: &[&[f64]]) -> ScoreMatrix {
        ScoreMatrix::new((0..rows.len()).map(|i| format!("a{i}")).collect(), rows.iter().map(|r| r.to_vec()).collect())
            .unwrap()
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize(&mat(&[&[1.0, 2.0, 3.0]]), Normalization::Minmax).rows()[0], vec![0.0, 0.5, 1.0]);
        assert_eq!(normalize(&mat(&[&[4.0, 4.0, 4.0]]), Normalization::Minmax).rows()[0], vec![0.5; 3]);
        assert_eq!(normalize(&mat(&[&[10.0, 10.0, 20.0]]), Normalization::Rank).rows()[0], vec![0.25, 0.25, 1.0]);
    }

    #[test]
    fn mean_examples() {
        let single = mat(&[&[0.3, -1.0, 7.0]]);
        assert_eq!(mean_ensemble(&single).unwrap(), vec![0.3, -1.0, 7.0]);
        assert_eq!(mean_ensemble(&mat(&[&[0.2], &[0.8]])).unwrap(), vec![0.5]);
        let base = mean_ensemble(&mat(&[&[0.0, 1.0], &[1.0, 0.0]])).unwrap();
        let dup = mean_ensemble(&mat(&[&[0.0, 1.0], &[1.0, 0.0], &[1.0, 0.0]])).unwrap();
        assert!(dup[0] > base[0] && dup[1] < base[1]);
    }

    #[test]
    fn weighted_mean_examples() {
        let m = mat(&[&[0.6], &[0.3]]);
        let w: BTreeMap<String, f64> = [("a0".into(), 2.0), ("a1".into(), 1.0)].into();
        assert!((weighted_mean_ensemble(&m, &w).unwrap()[0] - 0.5).abs() < 1e-12);
        let zero: BTreeMap<String, f64> = [("a0".into(), 0.0), ("a1".into(), 0.0)].into();
        assert!(weighted_mean_ensemble(&m, &zero).is_err());
        let missing: BTreeMap<String, f64> = [("a0".into(), 1.0)].into();
        assert!(weighted_mean_ensemble(&m, &missing).is_err());
        let m3 = mat(&[&[0.1, 0.9], &[0.4, 0.2], &[100.0, -50.0]]);
        let with_zero: BTreeMap<String, f64> = [("a0".into(), 1.0), ("a1".into(), 1.0), ("a2".into(), 0.0)].into();
        assert_eq!(
            weighted_mean_ensemble(&m3, &with_zero).unwrap(),
            mean_ensemble(&m3.select(&["a0".into(), "a1".into()]).unwrap()).unwrap()
        );
    }

    #[test]
    fn majority_vote_examples() {
        let m = mat(&[&[1.0], &[1.0], &[0.0]]);
        let s = majority_vote_ensemble(&m, &[0.5, 0.5, 0.5]).unwrap();
        assert!((s[0] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(decide(&s, 0.5), vec![1]);
        let tie = majority_vote_ensemble(&mat(&[&[1.0], &[0.0]]), &[0.5, 0.5]).unwrap();
        assert_eq!(tie, vec![0.5]);
        assert_eq!(decide(&tie, 0.5), vec![0]);
        let all = majority_vote_ensemble(&mat(&[&[1.0, -3.0], &[0.0, 2.0]]), &[f64::NEG_INFINITY; 2]).unwrap();
        assert_eq!(all, vec![1.0, 1.0]);
        // a score equal to its threshold votes for membership
        assert_eq!(majority_vote_ensemble(&mat(&[&[0.5]]), &[0.5]).unwrap(), vec![1.0]);
    }

    #[test]
    fn decide_examples() {
        let s = [0.1, 0.4, 0.6, 0.9];
        assert_eq!(decide(&s, 0.0), vec![1; 4]);
        assert_eq!(decide(&s, 1.0), vec![0; 4]);
        assert_eq!(decide(&s, 0.5).iter().filter(|&&b| b == 1).count(), 2);
    }

    #[test]
    fn run_ensemble_echoes_weights_and_thresholds() {
        let m = mat(&[&[1.0, 2.0, 3.0], &[30.0, 20.0, 10.0]]);
        let out = run_ensemble(&EnsembleConfig::weighted_mean(None), &m).unwrap();
        assert_eq!(out.weights.unwrap().len(), 2);
        assert_eq!(out.scores, vec![0.5, 0.5, 0.5]);
        let out = run_ensemble(&EnsembleConfig::majority_vote(), &m).unwrap();
        assert_eq!(out.thresholds.unwrap()["a0"], 0.5);
        let cfg: EnsembleConfig = serde_json::from_str(r#"{"kind":"weighted-mean","weights":{"a0":1,"a1":3}}"#).unwrap();
        assert_eq!(cfg.normalization, Normalization::Minmax);
        assert_eq!(run_ensemble(&cfg, &m).unwrap().scores[0], 0.75);
    }

    #[test]
    fn weights_file_parsing() {
        assert_eq!(parse_weights(r#"{"DCR": 0.5, "DPI": 2}"#).unwrap()["DPI"], 2.0);
        assert!(parse_weights(r#"{"DCR": -1}"#).is_err());
        assert!(parse_weights("[1, 2]").is_err());
    }

    fn matrix_strategy() -> impl Strategy<Value = ScoreMatrix> {
        (1usize..5, 2usize..30).prop_flat_map(|(n, m)| {
            prop::collection::vec(prop::collection::vec(-1e3f64..1e3, m), n).prop_map(|rows| {
                ScoreMatrix::new((0..rows.len()).map(|i| format!("a{i}")).collect(), rows).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn rank_mean_ignores_monotone_transforms(m in matrix_strategy(), which in 0usize..5, shift in -5.0f64..5.0) {
            let k = which % m.n_attacks();
            let mut rows = m.rows().to_vec();
            rows[k] = rows[k].iter().map(|v| (v / 100.0).exp() * 3.0 + shift).collect();
            let t = ScoreMatrix::new(m.ids().to_vec(), rows).unwrap();
            let a = mean_ensemble(&normalize(&m, Normalization::Rank)).unwrap();
            let b = mean_ensemble(&normalize(&t, Normalization::Rank)).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn constant_attack_keeps_the_rank_mean_order(m in matrix_strategy(), c in -3.0f64..3.0) {
            let mut rows = m.rows().to_vec();
            rows.push(vec![c; m.n_records()]);
            let mut ids = m.ids().to_vec();
            ids.push("constant".into());
            let with = ScoreMatrix::new(ids, rows).unwrap();
            let mut cfg = EnsembleConfig::mean();
            cfg.normalization = Normalization::Rank;
            let a = run_ensemble(&cfg, &m).unwrap().scores;
            let b = run_ensemble(&cfg, &with).unwrap().scores;
            for i in 0..a.len() {
                for j in 0..a.len() {
                    prop_assert_eq!(a[i].total_cmp(&a[j]), b[i].total_cmp(&b[j]));
                }
            }
        }

        #[test]
        fn median_votes_split_the_records(rows in (2usize..40).prop_flat_map(|m| prop::collection::vec(prop::collection::hash_set(-1_000_000i64..1_000_000, m), 1..4))) {
            let rows: Vec<Vec<f64>> = rows.into_iter().map(|s| { let mut v: Vec<f64> = s.into_iter().map(|x| x as f64).collect(); v.sort_by(f64::total_cmp); v.reverse(); v }).collect();
            let m_len = rows.iter().map(Vec::len).min().unwrap();
            let rows: Vec<Vec<f64>> = rows.into_iter().map(|mut r| { r.truncate(m_len); r }).collect();
            let m = ScoreMatrix::new((0..rows.len()).map(|i| format!("a{i}")).collect(), rows).unwrap();
            let t = median_thresholds(&m);
            for (row, tau) in m.rows().iter().zip(&t) {
                let positives = row.iter().filter(|v| **v >= *tau).count();
                prop_assert!(positives >= m_len / 2 && positives <= m_len.div_ceil(2));
            }
        }

        #[test]
        fn one_hot_weights_select_an_attack(m in matrix_strategy(), which in 0usize..5) {
            let k = which % m.n_attacks();
            let n = normalize(&m, Normalization::Minmax);
            let w: BTreeMap<String, f64> = m.ids().iter().enumerate().map(|(i, id)| (id.clone(), if i == k { 1.0 } else { 0.0 })).collect();
            prop_assert_eq!(weighted_mean_ensemble(&n, &w).unwrap(), n.rows()[k].clone());
        }

        #[test]
        fn normalized_ensembles_stay_in_unit_interval(m in matrix_strategy(), rank in any::<bool>()) {
            let mode = if rank { Normalization::Rank } else { Normalization::Minmax };
            for cfg in EnsembleConfig::defaults() {
                let cfg = EnsembleConfig { normalization: mode, ..cfg };
                let out = run_ensemble(&cfg, &m).unwrap();
                prop_assert!(out.scores.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
            }
        }
    }
}
