//! Distance metrics, exact K-nearest-neighbor search and Gaussian product-kernel
//! density estimation.
//!
//! Neighbor queries are exact brute-force scans. Results are ordered by
//! `(distance, row)` so ties always resolve to the lower row index.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::dataset::EncodedMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    L1,
    #[default]
    L2,
}

impl DistanceMetric {
    /// Distance without dimension checks; callers guarantee equal lengths.
    #[inline]
    pub(crate) fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            DistanceMetric::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            DistanceMetric::L2 => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
        }
    }
}

pub fn distance(a: &[f64], b: &[f64], metric: DistanceMetric) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension { expected: a.len(), actual: b.len() });
    }
    Ok(metric.eval(a, b))
}

/// Which dataset a neighbor-index row came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Synthetic,
    Reference,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub distance: f64,
    pub origin: Origin,
    pub row: usize,
}

fn by_distance_then_row(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Exact neighbor index over a set of base rows.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    base: EncodedMatrix,
    origins: Vec<Origin>,
    metric: DistanceMetric,
}

impl NeighborIndex {
    pub fn new(base: EncodedMatrix, origins: Vec<Origin>, metric: DistanceMetric) -> Result<Self> {
        if origins.len() != base.nrows() {
            return Err(Error::Dimension { expected: base.nrows(), actual: origins.len() });
        }
        Ok(Self { base, origins, metric })
    }

    /// Index over a single dataset, every row tagged with `origin`.
    pub fn single(base: EncodedMatrix, origin: Origin, metric: DistanceMetric) -> Self {
        let origins = vec![origin; base.nrows()];
        Self { base, origins, metric }
    }

    /// Synthetic rows first (rows `0..|S|`), then reference rows.
    pub fn combined(synthetic: &EncodedMatrix, reference: &EncodedMatrix, metric: DistanceMetric) -> Result<Self> {
        if synthetic.ncols() != reference.ncols() {
            return Err(Error::Dimension { expected: synthetic.ncols(), actual: reference.ncols() });
        }
        let mut data = synthetic.as_slice().to_vec();
        data.extend_from_slice(reference.as_slice());
        let n = synthetic.nrows() + reference.nrows();
        let base = EncodedMatrix::new(synthetic.mode, n, synthetic.ncols(), data)?;
        let mut origins = vec![Origin::Synthetic; synthetic.nrows()];
        origins.resize(n, Origin::Reference);
        Ok(Self { base, origins, metric })
    }

    pub fn len(&self) -> usize {
        self.base.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.base.nrows() == 0
    }

    pub fn metric(&self) -> DistanceMetric {
        self.metric
    }

    fn check_query(&self, query: &[f64]) -> Result<()> {
        if query.len() != self.base.ncols() {
            return Err(Error::Dimension { expected: self.base.ncols(), actual: query.len() });
        }
        Ok(())
    }

    /// The `k` nearest rows, sorted by distance with ties to the lower row index.
    pub fn knn(&self, query: &[f64], k: usize) -> Result<Vec<Neighbor>> {
        self.check_query(query)?;
        if k == 0 || k > self.len() {
            return Err(Error::invalid(format!("K must be in 1..={}, got {k}", self.len())));
        }
        let mut dists: Vec<(f64, usize)> =
            self.base.rows().enumerate().map(|(i, r)| (self.metric.eval(query, r), i)).collect();
        if k < dists.len() {
            dists.select_nth_unstable_by(k - 1, by_distance_then_row);
            dists.truncate(k);
        }
        dists.sort_unstable_by(by_distance_then_row);
        Ok(dists
            .into_iter()
            .map(|(distance, row)| Neighbor { distance, origin: self.origins[row], row })
            .collect())
    }

    /// Distance to the closest base row.
    pub fn nearest_distance(&self, query: &[f64]) -> Result<f64> {
        self.check_query(query)?;
        if self.is_empty() {
            return Err(Error::invalid("nearest-neighbor query on an empty index"));
        }
        Ok(self.base.rows().map(|r| self.metric.eval(query, r)).fold(f64::INFINITY, f64::min))
    }

    /// Number of base rows within `radius` of `query` (inclusive).
    pub fn count_within(&self, query: &[f64], radius: f64) -> Result<usize> {
        self.check_query(query)?;
        Ok(self.base.rows().filter(|r| self.metric.eval(query, r) <= radius).count())
    }
}

/// Smallest bandwidth any dimension may receive.
pub const BANDWIDTH_FLOOR: f64 = 1e-3;

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;

/// Linear-interpolation quantile of an already sorted slice.
pub(crate) fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Silverman's rule of thumb for one dimension, floored at [`BANDWIDTH_FLOOR`].
///
/// `0.9 * min(sd, IQR / 1.34) * n^(-1/5)`; when the IQR is zero but the spread
/// is not, the standard deviation alone is used.
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let iqr = sorted_quantile(&sorted, 0.75) - sorted_quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    (0.9 * spread * n.powf(-0.2)).max(BANDWIDTH_FLOOR)
}

fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Gaussian product-kernel density estimate with per-dimension bandwidths.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKde {
    points: EncodedMatrix,
    bandwidth: Vec<f64>,
    /// `-d/2 log(2π) - Σ log h_j`, shared by every kernel term.
    log_norm: f64,
}

impl GaussianKde {
    /// Fit Silverman bandwidths per dimension.
    pub fn fit(points: &EncodedMatrix) -> Result<Self> {
        if points.nrows() < 2 {
            return Err(Error::invalid(format!("KDE needs at least 2 points, got {}", points.nrows())));
        }
        let bandwidth = (0..points.ncols()).map(|j| silverman_bandwidth(&points.column(j))).collect();
        Self::with_bandwidth(points.clone(), bandwidth)
    }

    pub fn with_bandwidth(points: EncodedMatrix, bandwidth: Vec<f64>) -> Result<Self> {
        if bandwidth.len() != points.ncols() {
            return Err(Error::Dimension { expected: points.ncols(), actual: bandwidth.len() });
        }
        if points.nrows() == 0 {
            return Err(Error::invalid("KDE needs at least one support point"));
        }
        if let Some(h) = bandwidth.iter().find(|h| !(**h > 0.0 && h.is_finite())) {
            return Err(Error::invalid(format!("bandwidths must be positive and finite, got {h}")));
        }
        let log_norm = -(points.ncols() as f64) * HALF_LOG_2PI - bandwidth.iter().map(|h| h.ln()).sum::<f64>();
        Ok(Self { points, bandwidth, log_norm })
    }

    pub fn bandwidth(&self) -> &[f64] {
        &self.bandwidth
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), actual: v.len() });
        }
        Ok(())
    }

    /// log k_h(a - b) for the product kernel.
    #[inline]
    fn log_kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        let quad: f64 = a
            .iter()
            .zip(b)
            .zip(&self.bandwidth)
            .map(|((x, y), h)| {
                let z = (x - y) / h;
                z * z
            })
            .sum();
        self.log_norm - 0.5 * quad
    }

    pub fn log_kernel_between(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.log_kernel(a, b))
    }

    /// log of the density at `query`, via log-sum-exp over support points.
    pub fn logpdf(&self, query: &[f64]) -> Result<f64> {
        self.check(query)?;
        Ok(log_sum_exp(self.points.rows().map(|p| self.log_kernel(query, p))) - (self.len() as f64).ln())
    }

    /// log density at `query` of this estimate with `extra` added as a support
    /// point, reusing the fitted bandwidths.
    pub fn augment_logpdf(&self, extra: &[f64], query: &[f64]) -> Result<f64> {
        let base = self.logpdf(query)?;
        self.check(extra)?;
        Ok(self.augment_from_base(base, extra, query))
    }

    /// Same as [`augment_logpdf`](Self::augment_logpdf) given a precomputed `logpdf(query)`.
    pub(crate) fn augment_from_base(&self, base_logpdf: f64, extra: &[f64], query: &[f64]) -> f64 {
        let n = self.len() as f64;
        log_add_exp(n.ln() + base_logpdf, self.log_kernel(extra, query)) - (n + 1.0).ln()
    }
}

pub fn kde_fit(points: &EncodedMatrix) -> Result<GaussianKde> {
    GaussianKde::fit(points)
}

pub fn kde_logpdf(kde: &GaussianKde, query: &[f64]) -> Result<f64> {
    kde.logpdf(query)
}

pub fn kde_augment_logpdf(kde: &GaussianKde, extra: &[f64], query: &[f64]) -> Result<f64> {
    kde.augment_logpdf(extra, query)
}
