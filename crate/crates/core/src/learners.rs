//! Small binary classifiers trained from scratch: logistic regression, a
//! two-hidden-layer ReLU network, a bagged CART forest and boosted stumps.
//!
//! All training is single-threaded and fully determined by the data and the
//! seed passed to [`train`].

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::EncodedMatrix;
use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LearnerConfig {
    /// Full-batch gradient descent on mean cross-entropy.
    Logistic { epochs: usize, learning_rate: f64 },
    /// Two ReLU hidden layers, sigmoid output, mini-batch SGD with momentum.
    Mlp { hidden: [usize; 2], epochs: usize, learning_rate: f64, batch_size: usize, momentum: f64 },
    /// Bagged CART trees with Gini splits. `max_features: None` means √d.
    Forest { trees: usize, max_depth: usize, max_features: Option<usize> },
    /// Gradient-boosted depth-1 stumps on log loss.
    Boosted { rounds: usize, learning_rate: f64 },
}

impl LearnerConfig {
    pub fn logistic() -> Self {
        LearnerConfig::Logistic { epochs: 500, learning_rate: 0.1 }
    }

    pub fn mlp() -> Self {
        LearnerConfig::Mlp { hidden: [64, 64], epochs: 200, learning_rate: 0.01, batch_size: 64, momentum: 0.9 }
    }

    pub fn forest() -> Self {
        LearnerConfig::Forest { trees: 100, max_depth: 8, max_features: None }
    }

    pub fn boosted() -> Self {
        LearnerConfig::Boosted { rounds: 100, learning_rate: 0.1 }
    }

    pub fn family(&self) -> &'static str {
        match self {
            LearnerConfig::Logistic { .. } => "logistic",
            LearnerConfig::Mlp { .. } => "mlp",
            LearnerConfig::Forest { .. } => "forest",
            LearnerConfig::Boosted { .. } => "boosted",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            LearnerConfig::Logistic { epochs, learning_rate } => epochs >= 1 && learning_rate > 0.0,
            LearnerConfig::Mlp { hidden, epochs, learning_rate, batch_size, momentum } => {
                hidden.iter().all(|&h| h >= 1)
                    && epochs >= 1
                    && batch_size >= 1
                    && learning_rate > 0.0
                    && (0.0..1.0).contains(&momentum)
            }
            LearnerConfig::Forest { trees, max_depth, max_features } => {
                trees >= 1 && max_depth >= 1 && max_features.is_none_or(|m| m >= 1)
            }
            LearnerConfig::Boosted { rounds, learning_rate } => rounds >= 1 && learning_rate > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid learner configuration {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Model {
    Logistic { weights: Vec<f64>, bias: f64 },
    Mlp(Mlp),
    Forest(Vec<Tree>),
    Boosted { base: f64, stumps: Vec<Stump> },
}

/// A trained classifier. `predict_proba` returns P(label = 1).
#[derive(Debug, Clone, PartialEq)]
pub struct FittedLearner {
    family: &'static str,
    width: usize,
    model: Model,
    fingerprint: String,
    loss_history: Vec<f64>,
}

impl FittedLearner {
    pub fn family(&self) -> &'static str {
        self.family
    }

    /// Short hash of the training features and labels.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Full-data training loss after each epoch (logistic and MLP only).
    pub fn loss_history(&self) -> &[f64] {
        &self.loss_history
    }

    pub fn predict_proba(&self, features: &EncodedMatrix) -> Result<Vec<f64>> {
        if features.ncols() != self.width {
            return Err(Error::Dimension { expected: self.width, actual: features.ncols() });
        }
        Ok(features.rows().map(|x| self.predict_row(x)).collect())
    }

    fn predict_row(&self, x: &[f64]) -> f64 {
        match &self.model {
            Model::Logistic { weights, bias } => sigmoid(dot(weights, x) + bias),
            Model::Mlp(net) => net.predict(x),
            Model::Forest(trees) => trees.iter().map(|t| t.predict(x)).sum::<f64>() / trees.len() as f64,
            Model::Boosted { base, stumps } => sigmoid(base + stumps.iter().map(|s| s.predict(x)).sum::<f64>()),
        }
    }
}

pub fn predict_proba(learner: &FittedLearner, features: &EncodedMatrix) -> Result<Vec<f64>> {
    learner.predict_proba(features)
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z), stable for large |z|.
#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Binary cross-entropy of logit `z` against label `y`.
#[inline]
fn bce_from_logit(z: f64, y: f64) -> f64 {
    softplus(z) - y * z
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn fingerprint(features: &EncodedMatrix, labels: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update((features.nrows() as u64).to_le_bytes());
    h.update((features.ncols() as u64).to_le_bytes());
    for x in features.as_slice() {
        h.update(x.to_bits().to_le_bytes());
    }
    h.update(labels);
    hex::encode(&h.finalize()[..8])
}

/// Fit a learner on `features` with binary `labels`.
pub fn train(features: &EncodedMatrix, labels: &[u8], config: &LearnerConfig, seed: u64) -> Result<FittedLearner> {
    config.validate()?;
    if labels.len() != features.nrows() {
        return Err(Error::Dimension { expected: features.nrows(), actual: labels.len() });
    }
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Training(format!("labels must be 0 or 1, found {bad}")));
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    let negatives = labels.len() - positives;
    if positives < 2 || negatives < 2 {
        return Err(Error::Training(format!(
            "need at least 2 examples of each class, got {positives} positive and {negatives} negative"
        )));
    }
    let y: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    let mut rng = rng_from_seed(seed);
    let mut loss_history = Vec::new();
    let model = match *config {
        LearnerConfig::Logistic { epochs, learning_rate } => {
            let (weights, bias) = train_logistic(features, &y, epochs, learning_rate, &mut loss_history);
            Model::Logistic { weights, bias }
        }
        LearnerConfig::Mlp { hidden, epochs, learning_rate, batch_size, momentum } => Model::Mlp(Mlp::train(
            features,
            &y,
            MlpParams { hidden, epochs, learning_rate, batch_size, momentum },
            &mut rng,
            &mut loss_history,
        )),
        LearnerConfig::Forest { trees, max_depth, max_features } => {
            let d = features.ncols();
            let m = max_features.unwrap_or_else(|| ((d as f64).sqrt().round() as usize).max(1)).min(d.max(1));
            Model::Forest(train_forest(features, &y, trees, max_depth, m, &mut rng))
        }
        LearnerConfig::Boosted { rounds, learning_rate } => {
            let (base, stumps) = train_boosted(features, &y, rounds, learning_rate);
            Model::Boosted { base, stumps }
        }
    };
    Ok(FittedLearner {
        family: config.family(),
        width: features.ncols(),
        model,
        fingerprint: fingerprint(features, labels),
        loss_history,
    })
}

/// Mean cross-entropy of a logistic model and its gradient `(loss, ∂w, ∂b)`.
pub fn logistic_loss_grad(weights: &[f64], bias: f64, x: &EncodedMatrix, y: &[f64]) -> (f64, Vec<f64>, f64) {
    let n = x.nrows() as f64;
    let mut gw = vec![0.0; weights.len()];
    let mut gb = 0.0;
    let mut loss = 0.0;
    for (row, &yi) in x.rows().zip(y) {
        let z = dot(weights, row) + bias;
        loss += bce_from_logit(z, yi);
        let r = sigmoid(z) - yi;
        for (g, xi) in gw.iter_mut().zip(row) {
            *g += r * xi;
        }
        gb += r;
    }
    gw.iter_mut().for_each(|g| *g /= n);
    (loss / n, gw, gb / n)
}

fn train_logistic(x: &EncodedMatrix, y: &[f64], epochs: usize, lr: f64, history: &mut Vec<f64>) -> (Vec<f64>, f64) {
    let mut w = vec![0.0; x.ncols()];
    let mut b = 0.0;
    for _ in 0..epochs {
        let (_, gw, gb) = logistic_loss_grad(&w, b, x, y);
        for (wi, gi) in w.iter_mut().zip(&gw) {
            *wi -= lr * gi;
        }
        b -= lr * gb;
        history.push(logistic_loss_grad(&w, b, x, y).0);
    }
    (w, b)
}

struct MlpParams {
    hidden: [usize; 2],
    epochs: usize,
    learning_rate: f64,
    batch_size: usize,
    momentum: f64,
}

/// Flat parameter layout: W1 (h1×d), b1, W2 (h2×h1), b2, w3 (h2), b3.
#[derive(Debug, Clone, PartialEq)]
struct Mlp {
    d: usize,
    h1: usize,
    h2: usize,
    params: Vec<f64>,
}

struct Offsets {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    len: usize,
}

impl Mlp {
    fn offsets(d: usize, h1: usize, h2: usize) -> Offsets {
        let w1 = 0;
        let b1 = w1 + h1 * d;
        let w2 = b1 + h1;
        let b2 = w2 + h2 * h1;
        let w3 = b2 + h2;
        let b3 = w3 + h2;
        Offsets { w1, b1, w2, b2, w3, b3, len: b3 + 1 }
    }

    fn init(d: usize, h1: usize, h2: usize, rng: &mut ChaCha8Rng) -> Self {
        let o = Self::offsets(d, h1, h2);
        let mut params = vec![0.0; o.len];
        let he = |fan_in: usize| Normal::new(0.0, (2.0 / fan_in.max(1) as f64).sqrt()).unwrap();
        let n1 = he(d);
        params[o.w1..o.b1].iter_mut().for_each(|p| *p = n1.sample(rng));
        let n2 = he(h1);
        params[o.w2..o.b2].iter_mut().for_each(|p| *p = n2.sample(rng));
        let n3 = Normal::new(0.0, (1.0 / h2 as f64).sqrt()).unwrap();
        params[o.w3..o.b3].iter_mut().for_each(|p| *p = n3.sample(rng));
        Self { d, h1, h2, params }
    }

    /// Forward pass; fills hidden activations and returns the output logit.
    fn forward(&self, x: &[f64], a1: &mut [f64], a2: &mut [f64]) -> f64 {
        let o = Self::offsets(self.d, self.h1, self.h2);
        let p = &self.params;
        for (i, a) in a1.iter_mut().enumerate() {
            let row = &p[o.w1 + i * self.d..o.w1 + (i + 1) * self.d];
            *a = (dot(row, x) + p[o.b1 + i]).max(0.0);
        }
        for (i, a) in a2.iter_mut().enumerate() {
            let row = &p[o.w2 + i * self.h1..o.w2 + (i + 1) * self.h1];
            *a = (dot(row, a1) + p[o.b2 + i]).max(0.0);
        }
        dot(&p[o.w3..o.b3], a2) + p[o.b3]
    }

    fn predict(&self, x: &[f64]) -> f64 {
        let mut a1 = vec![0.0; self.h1];
        let mut a2 = vec![0.0; self.h2];
        sigmoid(self.forward(x, &mut a1, &mut a2))
    }

    fn mean_loss(&self, x: &EncodedMatrix, y: &[f64]) -> f64 {
        let mut a1 = vec![0.0; self.h1];
        let mut a2 = vec![0.0; self.h2];
        x.rows().zip(y).map(|(r, &yi)| bce_from_logit(self.forward(r, &mut a1, &mut a2), yi)).sum::<f64>()
            / x.nrows() as f64
    }

    /// Accumulate the cross-entropy gradient of one example into `grad`.
    fn backprop(&self, x: &[f64], y: f64, grad: &mut [f64], a1: &mut [f64], a2: &mut [f64], d1: &mut [f64]) {
        let o = Self::offsets(self.d, self.h1, self.h2);
        let p = &self.params;
        let dz = sigmoid(self.forward(x, a1, a2)) - y;
        grad[o.b3] += dz;
        for j in 0..self.h2 {
            grad[o.w3 + j] += dz * a2[j];
        }
        d1.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.h2 {
            if a2[j] <= 0.0 {
                continue;
            }
            let delta = dz * p[o.w3 + j];
            grad[o.b2 + j] += delta;
            let w_row = o.w2 + j * self.h1;
            for k in 0..self.h1 {
                grad[w_row + k] += delta * a1[k];
                d1[k] += delta * p[w_row + k];
            }
        }
        for k in 0..self.h1 {
            if a1[k] <= 0.0 {
                continue;
            }
            let delta = d1[k];
            grad[o.b1 + k] += delta;
            let w_row = o.w1 + k * self.d;
            for (g, xi) in grad[w_row..w_row + self.d].iter_mut().zip(x) {
                *g += delta * xi;
            }
        }
    }

    fn train(x: &EncodedMatrix, y: &[f64], cfg: MlpParams, rng: &mut ChaCha8Rng, history: &mut Vec<f64>) -> Self {
        let [h1, h2] = cfg.hidden;
        let mut net = Mlp::init(x.ncols(), h1, h2, rng);
        let mut velocity = vec![0.0; net.params.len()];
        let mut grad = vec![0.0; net.params.len()];
        let (mut a1, mut a2, mut d1) = (vec![0.0; h1], vec![0.0; h2], vec![0.0; h1]);
        let mut order: Vec<usize> = (0..x.nrows()).collect();
        for _ in 0..cfg.epochs {
            order.shuffle(rng);
            for batch in order.chunks(cfg.batch_size) {
                grad.iter_mut().for_each(|g| *g = 0.0);
                for &i in batch {
                    net.backprop(x.row(i), y[i], &mut grad, &mut a1, &mut a2, &mut d1);
                }
                let scale = cfg.learning_rate / batch.len() as f64;
                for ((p, v), g) in net.params.iter_mut().zip(&mut velocity).zip(&grad) {
                    *v = cfg.momentum * *v - scale * g;
                    *p += *v;
                }
            }
            history.push(net.mean_loss(x, y));
        }
        net
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf { p: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { p } => return p,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }
}

fn gini(pos: f64, n: f64) -> f64 {
    if n == 0.0 {
        return 0.0;
    }
    let p = pos / n;
    2.0 * p * (1.0 - p)
}

struct TreeBuilder<'a> {
    x: &'a EncodedMatrix,
    y: &'a [f64],
    max_depth: usize,
    max_features: usize,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    fn build(&mut self, samples: &mut [usize], depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let n = samples.len() as f64;
        let pos: f64 = samples.iter().map(|&i| self.y[i]).sum();
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { p: pos / n });
        if depth >= self.max_depth || samples.len() < 2 || pos == 0.0 || pos == n {
            return id;
        }
        let d = self.x.ncols();
        let mut features: Vec<usize> = (0..d).collect();
        features.shuffle(rng);
        features.truncate(self.max_features);

        let parent = gini(pos, n);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut vals: Vec<(f64, f64)> = Vec::with_capacity(samples.len());
        for &f in &features {
            vals.clear();
            vals.extend(samples.iter().map(|&i| (self.x.row(i)[f], self.y[i])));
            vals.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_pos = 0.0;
            for k in 1..vals.len() {
                left_pos += vals[k - 1].1;
                if vals[k].0 <= vals[k - 1].0 {
                    continue;
                }
                let nl = k as f64;
                let nr = n - nl;
                let impurity = (nl * gini(left_pos, nl) + nr * gini(pos - left_pos, nr)) / n;
                if impurity < parent - 1e-12 && best.is_none_or(|(b, _, _)| impurity < b) {
                    best = Some((impurity, f, 0.5 * (vals[k - 1].0 + vals[k].0)));
                }
            }
        }
        let Some((_, feature, threshold)) = best else { return id };
        let split = partition(samples, |i| self.x.row(i)[feature] <= threshold);
        let (l, r) = samples.split_at_mut(split);
        let left = self.build(l, depth + 1, rng);
        let right = self.build(r, depth + 1, rng);
        self.nodes[id] = Node::Split { feature, threshold, left, right };
        id
    }
}

/// Stable in-place partition; returns the number of elements satisfying `pred`.
fn partition(v: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let (yes, no): (Vec<usize>, Vec<usize>) = v.iter().partition(|&&i| pred(i));
    let k = yes.len();
    v[..k].copy_from_slice(&yes);
    v[k..].copy_from_slice(&no);
    k
}

fn train_forest(
    x: &EncodedMatrix,
    y: &[f64],
    trees: usize,
    max_depth: usize,
    max_features: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Tree> {
    let n = x.nrows();
    (0..trees)
        .map(|_| {
            let mut samples: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let mut builder = TreeBuilder { x, y, max_depth, max_features, nodes: Vec::new() };
            builder.build(&mut samples, 0, rng);
            Tree { nodes: builder.nodes }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
struct Stump {
    feature: usize,
    threshold: f64,
    left: f64,
    right: f64,
}

impl Stump {
    fn predict(&self, x: &[f64]) -> f64 {
        if x[self.feature] <= self.threshold {
            self.left
        } else {
            self.right
        }
    }
}

fn train_boosted(x: &EncodedMatrix, y: &[f64], rounds: usize, lr: f64) -> (f64, Vec<Stump>) {
    let n = x.nrows();
    let prior = y.iter().sum::<f64>() / n as f64;
    let base = (prior / (1.0 - prior)).ln();
    let mut f = vec![base; n];
    let mut stumps = Vec::with_capacity(rounds);
    let sorted: Vec<Vec<usize>> = (0..x.ncols())
        .map(|j| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| x.row(a)[j].total_cmp(&x.row(b)[j]));
            idx
        })
        .collect();
    for _ in 0..rounds {
        let p: Vec<f64> = f.iter().map(|&z| sigmoid(z)).collect();
        let r: Vec<f64> = y.iter().zip(&p).map(|(yi, pi)| yi - pi).collect();
        let total: f64 = r.iter().sum();
        // least-squares stump on the residuals
        let mut best: Option<(f64, usize, f64)> = None;
        for (j, idx) in sorted.iter().enumerate() {
            let mut left = 0.0;
            for k in 1..n {
                left += r[idx[k - 1]];
                let (a, b) = (x.row(idx[k - 1])[j], x.row(idx[k])[j]);
                if b <= a {
                    continue;
                }
                let (nl, nr) = (k as f64, (n - k) as f64);
                let gain = left * left / nl + (total - left) * (total - left) / nr;
                if best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, j, 0.5 * (a + b)));
                }
            }
        }
        let Some((_, feature, threshold)) = best else { break };
        // Newton leaf values
        let (mut num, mut den) = ([0.0; 2], [0.0; 2]);
        for i in 0..n {
            let side = usize::from(x.row(i)[feature] > threshold);
            num[side] += r[i];
            den[side] += p[i] * (1.0 - p[i]);
        }
        let leaf = |s: usize| if den[s] > 1e-12 { lr * num[s] / den[s] } else { 0.0 };
        let stump = Stump { feature, threshold, left: leaf(0), right: leaf(1) };
        for (i, fi) in f.iter_mut().enumerate().take(n) {
            *fi += stump.predict(x.row(i));
        }
        stumps.push(stump);
    }
    (base, stumps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::EncodingMode;
    use rand::SeedableRng;

    fn blobs(n: usize, sep: f64, seed: u64) -> (EncodedMatrix, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let c = if i % 2 == 0 { sep } else { -sep };
            rows.push(vec![c + noise.sample(&mut rng), c + noise.sample(&mut rng)]);
            labels.push((i % 2 == 0) as u8);
        }
        (EncodedMatrix::from_rows(EncodingMode::OneHot, &rows).unwrap(), labels)
    }

    fn accuracy(p: &[f64], labels: &[u8]) -> f64 {
        p.iter().zip(labels).filter(|(p, &l)| (**p > 0.5) == (l == 1)).count() as f64 / labels.len() as f64
    }

    #[test]
    fn logistic_separates_blobs() {
        let (x, y) = blobs(200, 2.0, 1);
        let m = train(&x, &y, &LearnerConfig::logistic(), 0).unwrap();
        assert!(accuracy(&m.predict_proba(&x).unwrap(), &y) >= 0.95);
    }

    #[test]
    fn every_family_separates_blobs_and_stays_in_range() {
        let (x, y) = blobs(200, 2.0, 2);
        for cfg in [LearnerConfig::logistic(), LearnerConfig::mlp(), LearnerConfig::forest(), LearnerConfig::boosted()] {
            let m = train(&x, &y, &cfg, 9).unwrap();
            let p = m.predict_proba(&x).unwrap();
            assert!(accuracy(&p, &y) >= 0.95, "{}", cfg.family());
            assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn no_signal_predicts_the_class_prior() {
        let x = EncodedMatrix::from_rows(EncodingMode::OneHot, &vec![vec![0.0, 0.0]; 40]).unwrap();
        let y: Vec<u8> = (0..40).map(|i| (i % 4 != 0) as u8).collect();
        for cfg in [LearnerConfig::logistic(), LearnerConfig::forest(), LearnerConfig::boosted()] {
            let m = train(&x, &y, &cfg, 4).unwrap();
            for p in m.predict_proba(&x).unwrap() {
                // bootstrap resampling moves the forest's leaf frequency around 0.75
                assert!((p - 0.75).abs() < 0.05, "{} gave {p}", cfg.family());
            }
        }
    }

    #[test]
    fn same_seed_gives_identical_parameters() {
        let (x, y) = blobs(120, 1.0, 3);
        for cfg in [LearnerConfig::mlp(), LearnerConfig::forest()] {
            let a = train(&x, &y, &cfg, 17).unwrap();
            let b = train(&x, &y, &cfg, 17).unwrap();
            assert_eq!(a, b);
            let c = train(&x, &y, &cfg, 18).unwrap();
            assert_ne!(a.model, c.model);
        }
    }

    #[test]
    fn single_class_labels_are_rejected() {
        let (x, _) = blobs(10, 1.0, 0);
        let err = train(&x, &[1; 10], &LearnerConfig::logistic(), 0).unwrap_err();
        assert!(matches!(err, Error::Training(_)));
        let mut one_neg = vec![1u8; 10];
        one_neg[0] = 0;
        assert!(train(&x, &one_neg, &LearnerConfig::logistic(), 0).is_err());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let (x, y) = blobs(10, 1.0, 0);
        let cfg = LearnerConfig::Logistic { epochs: 0, learning_rate: 0.1 };
        assert!(matches!(train(&x, &y, &cfg, 0), Err(Error::InvalidArgument(_))));
        let cfg = LearnerConfig::Logistic { epochs: 5, learning_rate: 0.0 };
        assert!(train(&x, &y, &cfg, 0).is_err());
    }

    #[test]
    fn zero_weight_logistic_predicts_one_half() {
        let m = FittedLearner {
            family: "logistic",
            width: 3,
            model: Model::Logistic { weights: vec![0.0; 3], bias: 0.0 },
            fingerprint: String::new(),
            loss_history: vec![],
        };
        let x = EncodedMatrix::from_rows(EncodingMode::OneHot, &[vec![1.0, -4.0, 9.0], vec![0.0; 3]]).unwrap();
        assert_eq!(m.predict_proba(&x).unwrap(), vec![0.5, 0.5]);
        let narrow = EncodedMatrix::from_rows(EncodingMode::OneHot, &[vec![1.0]]).unwrap();
        assert!(matches!(m.predict_proba(&narrow), Err(Error::Dimension { .. })));
    }

    #[test]
    fn single_stub_tree_votes_one() {
        let m = FittedLearner {
            family: "forest",
            width: 2,
            model: Model::Forest(vec![Tree { nodes: vec![Node::Leaf { p: 1.0 }] }]),
            fingerprint: String::new(),
            loss_history: vec![],
        };
        let x = EncodedMatrix::from_rows(EncodingMode::OneHot, &[vec![3.0, 1.0]]).unwrap();
        assert_eq!(m.predict_proba(&x).unwrap(), vec![1.0]);
    }

    #[test]
    fn outputs_stay_in_unit_interval_on_random_inputs() {
        let (x, y) = blobs(100, 0.5, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let wild: Vec<Vec<f64>> = (0..1000).map(|_| vec![rng.random_range(-1e3..1e3), rng.random_range(-1e3..1e3)]).collect();
        let wild = EncodedMatrix::from_rows(EncodingMode::OneHot, &wild).unwrap();
        for cfg in [LearnerConfig::logistic(), LearnerConfig::mlp(), LearnerConfig::forest(), LearnerConfig::boosted()] {
            let m = train(&x, &y, &cfg, 1).unwrap();
            assert!(m.predict_proba(&wild).unwrap().iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }

    #[test]
    fn logistic_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let n = rng.random_range(3..20);
            let d = rng.random_range(1..5);
            let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
            let x = EncodedMatrix::from_rows(EncodingMode::OneHot, &rows).unwrap();
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(0..2) as f64).collect();
            let w: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b = rng.random_range(-1.0..1.0);
            let (_, gw, gb) = logistic_loss_grad(&w, b, &x, &y);
            let eps = 1e-6;
            let rel = |num: f64, ana: f64| (num - ana).abs() / ana.abs().max(1e-3);
            for j in 0..d {
                let (mut wp, mut wm) = (w.clone(), w.clone());
                wp[j] += eps;
                wm[j] -= eps;
                let num = (logistic_loss_grad(&wp, b, &x, &y).0 - logistic_loss_grad(&wm, b, &x, &y).0) / (2.0 * eps);
                assert!(rel(num, gw[j]) < 1e-5, "dw{j}: {num} vs {}", gw[j]);
            }
            let num = (logistic_loss_grad(&w, b + eps, &x, &y).0 - logistic_loss_grad(&w, b - eps, &x, &y).0) / (2.0 * eps);
            assert!(rel(num, gb) < 1e-5, "db: {num} vs {gb}");
        }
    }

    #[test]
    fn mlp_loss_is_nonincreasing_on_separable_data() {
        let (x, y) = blobs(256, 2.0, 12);
        let m = train(&x, &y, &LearnerConfig::mlp(), 3).unwrap();
        let h = m.loss_history();
        assert_eq!(h.len(), 200);
        for w in h.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "loss rose from {} to {}", w[0], w[1]);
        }
    }

    #[test]
    fn forest_depends_on_row_order_but_not_on_repeat_runs() {
        // Bootstrap draws index rows, so permuting rows changes the forest.
        // Same seed and same order always reproduce it.
        let (x, y) = blobs(60, 0.3, 13);
        let a = train(&x, &y, &LearnerConfig::forest(), 5).unwrap();
        assert_eq!(a, train(&x, &y, &LearnerConfig::forest(), 5).unwrap());
    }
}
