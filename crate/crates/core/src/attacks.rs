//! The eight no-box membership attacks.
//!
//! Every attack maps each test row to a real score where larger means more
//! member-like. Distance attacks and the trained attacks read the one-hot view,
//! the two density attacks read the ordinal view.

use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{assemble_test_set, encode, fit_encoder, DatasetBundle, EncodedMatrix, EncodingMode, RawDataset};
use crate::error::{Error, Result};
use crate::learners::{train, LearnerConfig};
use crate::neighbors::{sorted_quantile, DistanceMetric, GaussianKde, NeighborIndex, Origin};

pub const DEFAULT_K: usize = 10;
pub const DEFAULT_EPSILON_QUANTILE: f64 = 0.5;

fn default_k() -> usize {
    DEFAULT_K
}

/// How MC picks its neighborhood radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonRule {
    Explicit(f64),
    /// Quantile of the reference rows' nearest-synthetic distances.
    Quantile(f64),
}

impl Default for EpsilonRule {
    fn default() -> Self {
        EpsilonRule::Quantile(DEFAULT_EPSILON_QUANTILE)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum AttackConfig {
    #[serde(rename = "DCR")]
    Dcr {
        #[serde(default)]
        metric: DistanceMetric,
    },
    #[serde(rename = "DCR-Diff")]
    DcrDiff {
        #[serde(default)]
        metric: DistanceMetric,
    },
    #[serde(rename = "DOMIAS")]
    Domias,
    #[serde(rename = "DPI")]
    Dpi {
        #[serde(default = "default_k")]
        k: usize,
        #[serde(default)]
        metric: DistanceMetric,
    },
    #[serde(rename = "Gen-LRA")]
    GenLra {
        #[serde(default = "default_k")]
        k: usize,
    },
    Classifier {
        #[serde(default = "LearnerConfig::forest")]
        learner: LearnerConfig,
    },
    #[serde(rename = "LOGAN")]
    Logan {
        #[serde(default = "LearnerConfig::mlp")]
        learner: LearnerConfig,
    },
    #[serde(rename = "MC")]
    Mc {
        #[serde(default)]
        epsilon: EpsilonRule,
        #[serde(default)]
        metric: DistanceMetric,
    },
}

impl AttackConfig {
    /// The eight attacks with default hyperparameters.
    pub fn defaults() -> Vec<AttackConfig> {
        vec![
            AttackConfig::Dcr { metric: DistanceMetric::L2 },
            AttackConfig::DcrDiff { metric: DistanceMetric::L2 },
            AttackConfig::Domias,
            AttackConfig::Dpi { k: DEFAULT_K, metric: DistanceMetric::L2 },
            AttackConfig::GenLra { k: DEFAULT_K },
            AttackConfig::Classifier { learner: LearnerConfig::forest() },
            AttackConfig::Logan { learner: LearnerConfig::mlp() },
            AttackConfig::Mc { epsilon: EpsilonRule::default(), metric: DistanceMetric::L2 },
        ]
    }

    pub fn kind(&self) -> &'static str {
        match self {
            AttackConfig::Dcr { .. } => "DCR",
            AttackConfig::DcrDiff { .. } => "DCR-Diff",
            AttackConfig::Domias => "DOMIAS",
            AttackConfig::Dpi { .. } => "DPI",
            AttackConfig::GenLra { .. } => "Gen-LRA",
            AttackConfig::Classifier { .. } => "Classifier",
            AttackConfig::Logan { .. } => "LOGAN",
            AttackConfig::Mc { .. } => "MC",
        }
    }

    /// Stable identifier. Default configurations use the bare attack name.
    pub fn id(&self) -> String {
        let metric = |m: &DistanceMetric| match m {
            DistanceMetric::L1 => "L1",
            DistanceMetric::L2 => "L2",
        };
        match self {
            AttackConfig::Dcr { metric: DistanceMetric::L2 }
            | AttackConfig::DcrDiff { metric: DistanceMetric::L2 }
            | AttackConfig::Domias => self.kind().to_string(),
            AttackConfig::Dcr { metric: m } | AttackConfig::DcrDiff { metric: m } => {
                format!("{}[{}]", self.kind(), metric(m))
            }
            AttackConfig::Dpi { k, metric: m } => match (k, m) {
                (&DEFAULT_K, DistanceMetric::L2) => "DPI".to_string(),
                (k, DistanceMetric::L2) => format!("DPI[K={k}]"),
                (k, m) => format!("DPI[K={k},{}]", metric(m)),
            },
            AttackConfig::GenLra { k } if *k == DEFAULT_K => "Gen-LRA".to_string(),
            AttackConfig::GenLra { k } => format!("Gen-LRA[K={k}]"),
            AttackConfig::Classifier { learner } if *learner == LearnerConfig::forest() => "Classifier".to_string(),
            AttackConfig::Classifier { learner } => format!("Classifier[{}]", learner.family()),
            AttackConfig::Logan { learner } if *learner == LearnerConfig::mlp() => "LOGAN".to_string(),
            AttackConfig::Logan { .. } => "LOGAN[custom]".to_string(),
            AttackConfig::Mc { epsilon, metric: m } => {
                let eps = match epsilon {
                    EpsilonRule::Quantile(q) if *q == DEFAULT_EPSILON_QUANTILE => String::new(),
                    EpsilonRule::Quantile(q) => format!("q={q}"),
                    EpsilonRule::Explicit(e) => format!("eps={e}"),
                };
                match (eps.is_empty(), m) {
                    (true, DistanceMetric::L2) => "MC".to_string(),
                    (true, m) => format!("MC[{}]", metric(m)),
                    (false, DistanceMetric::L2) => format!("MC[{eps}]"),
                    (false, m) => format!("MC[{eps},{}]", metric(m)),
                }
            }
        }
    }

    /// Which encoded view the attack consumes.
    pub fn view(&self) -> EncodingMode {
        match self {
            AttackConfig::Domias | AttackConfig::GenLra { .. } => EncodingMode::Ordinal,
            _ => EncodingMode::OneHot,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            AttackConfig::Dpi { k, .. } | AttackConfig::GenLra { k } if *k == 0 => {
                Err(Error::invalid(format!("{}: K must be at least 1", self.kind())))
            }
            AttackConfig::Mc { epsilon: EpsilonRule::Explicit(e), .. } if !(*e > 0.0 && e.is_finite()) => {
                Err(Error::invalid(format!("MC: explicit epsilon must be positive, got {e}")))
            }
            AttackConfig::Mc { epsilon: EpsilonRule::Quantile(q), .. } if !(*q > 0.0 && *q < 1.0) => {
                Err(Error::invalid(format!("MC: epsilon quantile must be in (0, 1), got {q}")))
            }
            AttackConfig::Classifier { learner } => learner.validate(),
            AttackConfig::Logan { learner } => {
                if !matches!(learner, LearnerConfig::Mlp { .. }) {
                    return Err(Error::invalid("LOGAN requires an MLP discriminator"));
                }
                learner.validate()
            }
            _ => Ok(()),
        }
    }
}

impl std::str::FromStr for AttackConfig {
    type Err = Error;

    /// A bare attack name with default hyperparameters, case-insensitive.
    fn from_str(s: &str) -> Result<Self> {
        let kind = AttackConfig::defaults()
            .into_iter()
            .map(|a| a.kind())
            .find(|k| k.eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid(format!("unknown attack {s:?}")))?;
        Ok(serde_json::from_value(serde_json::json!({ "kind": kind }))?)
    }
}

impl fmt::Display for AttackConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

/// Per-test-row scores from one attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub attack: String,
    pub config: AttackConfig,
    pub scores: Vec<f64>,
    /// Resolved quantities worth reporting, such as MC's epsilon.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub details: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_secs: Option<f64>,
}

/// Test, synthetic and reference rows encoded in both modes.
///
/// Encoders are fitted on the synthetic rows only.
#[derive(Debug, Clone)]
pub struct EncodedViews {
    pub onehot: ViewSet,
    pub ordinal: ViewSet,
    /// 1 for members (train rows), 0 for holdout rows.
    pub labels: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct ViewSet {
    pub test: EncodedMatrix,
    pub synthetic: EncodedMatrix,
    pub reference: EncodedMatrix,
}

impl EncodedViews {
    pub fn from_bundle(bundle: &DatasetBundle) -> Result<Self> {
        let view = |mode| -> Result<ViewSet> {
            let spec = fit_encoder(&bundle.synthetic, mode)?;
            Ok(ViewSet {
                test: assemble_test_set(bundle, &spec)?,
                synthetic: encode(&bundle.synthetic, &spec)?,
                reference: encode(&bundle.splits.reference, &spec)?,
            })
        };
        let onehot = view(EncodingMode::OneHot)?;
        let ordinal = view(EncodingMode::Ordinal)?;
        let labels = onehot.test.labels.clone().unwrap_or_default();
        Ok(Self { onehot, ordinal, labels })
    }

    /// Views for a standalone audit: an explicit labeled test set instead of a bundle.
    pub fn from_datasets(
        test: &RawDataset,
        labels: Vec<u8>,
        synthetic: &RawDataset,
        reference: &RawDataset,
    ) -> Result<Self> {
        if labels.len() != test.len() {
            return Err(Error::Dimension { expected: test.len(), actual: labels.len() });
        }
        let view = |mode| -> Result<ViewSet> {
            let spec = fit_encoder(synthetic, mode)?;
            Ok(ViewSet {
                test: encode(test, &spec)?.with_labels(labels.clone())?,
                synthetic: encode(synthetic, &spec)?,
                reference: encode(reference, &spec)?,
            })
        };
        Ok(Self { onehot: view(EncodingMode::OneHot)?, ordinal: view(EncodingMode::Ordinal)?, labels })
    }

    pub fn view(&self, mode: EncodingMode) -> &ViewSet {
        match mode {
            EncodingMode::OneHot => &self.onehot,
            EncodingMode::Ordinal => &self.ordinal,
        }
    }

    pub fn test_len(&self) -> usize {
        self.onehot.test.nrows()
    }
}

fn check_widths(test: &EncodedMatrix, others: &[&EncodedMatrix]) -> Result<()> {
    for m in others {
        if m.ncols() != test.ncols() {
            return Err(Error::Dimension { expected: test.ncols(), actual: m.ncols() });
        }
    }
    Ok(())
}

fn nonempty(m: &EncodedMatrix, what: &str) -> Result<()> {
    if m.nrows() == 0 {
        return Err(Error::invalid(format!("{what} set is empty")));
    }
    Ok(())
}

fn per_row(test: &EncodedMatrix, f: impl Fn(&[f64]) -> Result<f64> + Sync) -> Result<Vec<f64>> {
    (0..test.nrows()).into_par_iter().map(|i| f(test.row(i))).collect()
}

/// Negative distance to the closest synthetic row.
pub fn dcr(test: &EncodedMatrix, synthetic: &EncodedMatrix, metric: DistanceMetric) -> Result<Vec<f64>> {
    nonempty(synthetic, "synthetic")?;
    check_widths(test, &[synthetic])?;
    let s = NeighborIndex::single(synthetic.clone(), Origin::Synthetic, metric);
    per_row(test, |x| Ok(-s.nearest_distance(x)?))
}

/// Nearest-reference distance minus nearest-synthetic distance.
pub fn dcr_diff(
    test: &EncodedMatrix,
    synthetic: &EncodedMatrix,
    reference: &EncodedMatrix,
    metric: DistanceMetric,
) -> Result<Vec<f64>> {
    nonempty(synthetic, "synthetic")?;
    nonempty(reference, "reference")?;
    check_widths(test, &[synthetic, reference])?;
    let s = NeighborIndex::single(synthetic.clone(), Origin::Synthetic, metric);
    let r = NeighborIndex::single(reference.clone(), Origin::Reference, metric);
    per_row(test, |x| Ok(r.nearest_distance(x)? - s.nearest_distance(x)?))
}

/// log p_S(x) − log p_R(x) with Gaussian KDEs.
pub fn domias(test: &EncodedMatrix, synthetic: &EncodedMatrix, reference: &EncodedMatrix) -> Result<Vec<f64>> {
    check_widths(test, &[synthetic, reference])?;
    let ps = GaussianKde::fit(synthetic)?;
    let pr = GaussianKde::fit(reference)?;
    per_row(test, |x| Ok(ps.logpdf(x)? - pr.logpdf(x)?))
}

/// Smoothed synthetic-to-reference ratio among the `k` nearest rows of S ∪ R.
pub fn dpi(
    test: &EncodedMatrix,
    synthetic: &EncodedMatrix,
    reference: &EncodedMatrix,
    k: usize,
    metric: DistanceMetric,
) -> Result<Vec<f64>> {
    check_widths(test, &[synthetic, reference])?;
    let index = NeighborIndex::combined(synthetic, reference, metric)?;
    if k == 0 || k > index.len() {
        return Err(Error::invalid(format!("DPI: K must be in 1..={}, got {k}", index.len())));
    }
    per_row(test, |x| {
        let syn = index.knn(x, k)?.iter().filter(|n| n.origin == Origin::Synthetic).count();
        Ok((syn + 1) as f64 / (k - syn + 1) as f64)
    })
}

/// Localized likelihood ratio of adding `x` to the reference density,
/// evaluated on the `k` synthetic rows nearest to `x`.
pub fn gen_lra(
    test: &EncodedMatrix,
    synthetic: &EncodedMatrix,
    reference: &EncodedMatrix,
    k: usize,
) -> Result<Vec<f64>> {
    check_widths(test, &[synthetic, reference])?;
    if k == 0 || k > synthetic.nrows() {
        return Err(Error::invalid(format!("Gen-LRA: K must be in 1..={}, got {k}", synthetic.nrows())));
    }
    let pr = GaussianKde::fit(reference)?;
    let base: Vec<f64> =
        (0..synthetic.nrows()).into_par_iter().map(|i| pr.logpdf(synthetic.row(i))).collect::<Result<_>>()?;
    let s = NeighborIndex::single(synthetic.clone(), Origin::Synthetic, DistanceMetric::L2);
    per_row(test, |x| {
        Ok(s.knn(x, k)?
            .iter()
            .map(|n| pr.augment_from_base(base[n.row], x, synthetic.row(n.row)) - base[n.row])
            .sum())
    })
}

fn stack_labeled(synthetic: &EncodedMatrix, reference: &EncodedMatrix) -> Result<(EncodedMatrix, Vec<u8>)> {
    check_widths(synthetic, &[reference])?;
    let mut data = synthetic.as_slice().to_vec();
    data.extend_from_slice(reference.as_slice());
    let n = synthetic.nrows() + reference.nrows();
    let x = EncodedMatrix::new(synthetic.mode, n, synthetic.ncols(), data)?;
    let mut y = vec![1u8; synthetic.nrows()];
    y.resize(n, 0);
    Ok((x, y))
}

/// Train a classifier to tell synthetic (1) from reference (0) rows and score
/// test rows by the predicted synthetic probability.
pub fn classifier_attack(
    test: &EncodedMatrix,
    synthetic: &EncodedMatrix,
    reference: &EncodedMatrix,
    learner: &LearnerConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    check_widths(test, &[synthetic, reference])?;
    let (x, y) = stack_labeled(synthetic, reference)?;
    train(&x, &y, learner, seed)?.predict_proba(test)
}

/// LOGAN: the classifier attack with an MLP discriminator.
pub fn logan(
    test: &EncodedMatrix,
    synthetic: &EncodedMatrix,
    reference: &EncodedMatrix,
    learner: &LearnerConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    if !matches!(learner, LearnerConfig::Mlp { .. }) {
        return Err(Error::invalid("LOGAN requires an MLP discriminator"));
    }
    classifier_attack(test, synthetic, reference, learner, seed)
}

/// Resolve the MC radius from its rule.
pub fn resolve_epsilon(
    rule: EpsilonRule,
    synthetic: &EncodedMatrix,
    reference: &EncodedMatrix,
    metric: DistanceMetric,
) -> Result<f64> {
    let eps = match rule {
        EpsilonRule::Explicit(e) => e,
        EpsilonRule::Quantile(q) => {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::invalid(format!("MC: epsilon quantile must be in (0, 1), got {q}")));
            }
            nonempty(synthetic, "synthetic")?;
            nonempty(reference, "reference")?;
            check_widths(synthetic, &[reference])?;
            let s = NeighborIndex::single(synthetic.clone(), Origin::Synthetic, metric);
            let mut d = per_row(reference, |r| s.nearest_distance(r))?;
            d.sort_by(f64::total_cmp);
            sorted_quantile(&d, q)
        }
    };
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid(format!("MC: epsilon resolved to {eps}, must be positive")));
    }
    Ok(eps)
}

/// Fraction of synthetic rows within `epsilon` of each test row.
pub fn mc(test: &EncodedMatrix, synthetic: &EncodedMatrix, epsilon: f64, metric: DistanceMetric) -> Result<Vec<f64>> {
    nonempty(synthetic, "synthetic")?;
    check_widths(test, &[synthetic])?;
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail too
    if !(epsilon > 0.0) {
        return Err(Error::invalid(format!("MC: epsilon must be positive, got {epsilon}")));
    }
    let s = NeighborIndex::single(synthetic.clone(), Origin::Synthetic, metric);
    let n = synthetic.nrows() as f64;
    per_row(test, |x| Ok(s.count_within(x, epsilon)? as f64 / n))
}

/// Dispatch `config` against the matching encoded view.
pub fn run_attack(config: &AttackConfig, views: &EncodedViews, seed: u64) -> Result<ScoreVector> {
    config.validate()?;
    let start = Instant::now();
    let v = views.view(config.view());
    let mut details = BTreeMap::new();
    let scores = match config {
        AttackConfig::Dcr { metric } => dcr(&v.test, &v.synthetic, *metric),
        AttackConfig::DcrDiff { metric } => dcr_diff(&v.test, &v.synthetic, &v.reference, *metric),
        AttackConfig::Domias => domias(&v.test, &v.synthetic, &v.reference),
        AttackConfig::Dpi { k, metric } => dpi(&v.test, &v.synthetic, &v.reference, *k, *metric),
        AttackConfig::GenLra { k } => gen_lra(&v.test, &v.synthetic, &v.reference, *k),
        AttackConfig::Classifier { learner } => classifier_attack(&v.test, &v.synthetic, &v.reference, learner, seed),
        AttackConfig::Logan { learner } => logan(&v.test, &v.synthetic, &v.reference, learner, seed),
        AttackConfig::Mc { epsilon, metric } => resolve_epsilon(*epsilon, &v.synthetic, &v.reference, *metric)
            .and_then(|eps| {
                details.insert("epsilon".to_string(), eps);
                mc(&v.test, &v.synthetic, eps, *metric)
            }),
    }?;
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::Attack {
            attack: config.id(),
            message: format!("non-finite score {} for test row {i}", scores[i]),
        });
    }
    Ok(ScoreVector {
        attack: config.id(),
        config: config.clone(),
        scores,
        details,
        elapsed_secs: Some(start.elapsed().as_secs_f64()),
    })
}
