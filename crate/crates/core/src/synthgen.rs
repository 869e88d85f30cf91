//! Toy populations and generators with known leakage.
//!
//! A population is a Gaussian mixture over the continuous columns plus
//! independent categorical columns. The generators are a memorizer (noisy
//! copies of the training rows), a safe sampler (fresh population draws) and a
//! marginal sampler (per-column resampling of the training rows).

use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Column, ColumnKind, RawDataset, Role, Schema, Value};
use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    /// One entry per continuous column.
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalSpec {
    pub name: String,
    pub categories: Vec<String>,
    pub probabilities: Vec<f64>,
}

/// Declared population distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    #[serde(default)]
    pub continuous: Vec<String>,
    #[serde(default)]
    pub components: Vec<MixtureComponent>,
    #[serde(default)]
    pub categorical: Vec<CategoricalSpec>,
}

fn probabilities_ok(p: &[f64]) -> bool {
    p.iter().all(|v| *v >= 0.0 && v.is_finite()) && (p.iter().sum::<f64>() - 1.0).abs() < 1e-9
}

impl PopulationSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: PopulationSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Two-cluster 2-D mixture used throughout the examples and tests.
    pub fn two_d_mixture() -> Self {
        PopulationSpec {
            continuous: vec!["x1".into(), "x2".into()],
            components: vec![
                MixtureComponent { weight: 0.5, mean: vec![-2.0, 0.0], sd: vec![1.0, 1.0] },
                MixtureComponent { weight: 0.5, mean: vec![2.0, 1.0], sd: vec![1.0, 0.7] },
            ],
            categorical: vec![],
        }
    }

    /// Three continuous and two categorical columns with a correlated mixture.
    pub fn mixed() -> Self {
        PopulationSpec {
            continuous: vec!["age".into(), "income".into(), "score".into()],
            components: vec![
                MixtureComponent { weight: 0.4, mean: vec![30.0, 40.0, 0.0], sd: vec![5.0, 8.0, 1.0] },
                MixtureComponent { weight: 0.35, mean: vec![50.0, 70.0, 1.5], sd: vec![6.0, 10.0, 0.8] },
                MixtureComponent { weight: 0.25, mean: vec![65.0, 30.0, -1.0], sd: vec![4.0, 6.0, 1.2] },
            ],
            categorical: vec![
                CategoricalSpec {
                    name: "region".into(),
                    categories: vec!["north".into(), "south".into(), "east".into(), "west".into()],
                    probabilities: vec![0.4, 0.3, 0.2, 0.1],
                },
                CategoricalSpec {
                    name: "member".into(),
                    categories: vec!["no".into(), "yes".into()],
                    probabilities: vec![0.7, 0.3],
                },
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.continuous.len();
        if d == 0 && self.categorical.is_empty() {
            return Err(Error::invalid("population spec declares no columns"));
        }
        if d > 0 && self.components.is_empty() {
            return Err(Error::invalid("continuous columns need at least one mixture component"));
        }
        for c in &self.components {
            if c.mean.len() != d || c.sd.len() != d {
                return Err(Error::invalid(format!("mixture components need {d} means and sds")));
            }
            if c.mean.iter().any(|m| !m.is_finite()) || c.sd.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
                return Err(Error::invalid("mixture means must be finite and sds nonnegative"));
            }
        }
        if d > 0 && !probabilities_ok(&self.components.iter().map(|c| c.weight).collect::<Vec<_>>()) {
            return Err(Error::invalid("mixture weights must be nonnegative and sum to 1"));
        }
        for c in &self.categorical {
            if c.categories.is_empty() || c.categories.len() != c.probabilities.len() {
                return Err(Error::invalid(format!("column {}: one probability per category", c.name)));
            }
            if !probabilities_ok(&c.probabilities) {
                return Err(Error::invalid(format!("column {}: probabilities must sum to 1", c.name)));
            }
        }
        let mut names: Vec<&str> = self.continuous.iter().map(String::as_str).collect();
        names.extend(self.categorical.iter().map(|c| c.name.as_str()));
        let mut sorted = names.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != names.len() {
            return Err(Error::invalid("duplicate column names in population spec"));
        }
        Ok(())
    }
}

fn draw_index(p: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in p.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the cumulative sum; take the last positive entry
    p.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Draw `n` i.i.d. rows. Continuous schema bounds are the observed extremes.
pub fn sample_population(spec: &PopulationSpec, n: usize, seed: u64) -> Result<RawDataset> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::invalid("population size must be at least 1"));
    }
    let mut rng = rng_from_seed(seed);
    let weights: Vec<f64> = spec.components.iter().map(|c| c.weight).collect();
    let d = spec.continuous.len();
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row = Vec::with_capacity(d + spec.categorical.len());
        if d > 0 {
            let c = &spec.components[draw_index(&weights, &mut rng)];
            for j in 0..d {
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                row.push(Value::Num(c.mean[j] + c.sd[j] * z));
            }
        }
        for cat in &spec.categorical {
            row.push(Value::Cat(cat.categories[draw_index(&cat.probabilities, &mut rng)].clone()));
        }
        rows.push(row);
    }
    let mut columns = Vec::new();
    for (j, name) in spec.continuous.iter().enumerate() {
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for r in &rows {
            if let Value::Num(x) = r[j] {
                min = min.min(x);
                max = max.max(x);
            }
        }
        columns.push(Column { name: name.clone(), kind: ColumnKind::Continuous { min, max } });
    }
    for cat in &spec.categorical {
        columns.push(Column { name: cat.name.clone(), kind: ColumnKind::Categorical { vocabulary: cat.categories.clone() } });
    }
    RawDataset::new(Schema::new(columns)?, rows, Role::Population)
}

/// One noisy copy of every training row, in shuffled order. Continuous cells
/// get Gaussian noise with sd `sigma` times the column's schema range.
pub fn memorizer(train: &RawDataset, sigma: f64, seed: u64) -> Result<RawDataset> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("memorizer noise must be nonnegative, got {sigma}")));
    }
    let mut rng = rng_from_seed(seed);
    let noise: Vec<Option<Normal<f64>>> = train
        .schema
        .columns()
        .iter()
        .map(|c| match c.kind {
            ColumnKind::Continuous { min, max } if sigma > 0.0 && max > min => {
                Some(Normal::new(0.0, sigma * (max - min)).expect("positive sd"))
            }
            _ => None,
        })
        .collect();
    let mut rows: Vec<Vec<Value>> = train
        .rows
        .iter()
        .map(|r| {
            r.iter()
                .zip(&noise)
                .map(|(v, n)| match (v, n) {
                    (Value::Num(x), Some(n)) => Value::Num(x + n.sample(&mut rng)),
                    _ => v.clone(),
                })
                .collect()
        })
        .collect();
    rows.shuffle(&mut rng);
    RawDataset::new(train.schema.clone(), rows, Role::Synthetic)
}

/// `m` fresh draws from the population, independent of any training data.
pub fn safe_sampler(spec: &PopulationSpec, m: usize, seed: u64) -> Result<RawDataset> {
    Ok(sample_population(spec, m, seed)?.with_role(Role::Synthetic))
}

/// `m` rows whose cells are drawn independently, column by column, from the
/// training values.
pub fn marginal_sampler(train: &RawDataset, m: usize, seed: u64) -> Result<RawDataset> {
    if m == 0 {
        return Err(Error::invalid("synthetic size must be at least 1"));
    }
    if train.is_empty() {
        return Err(Error::invalid("marginal sampler needs training rows"));
    }
    let mut rng = rng_from_seed(seed);
    let columns: Vec<Vec<&Value>> =
        (0..train.schema.len()).map(|j| train.rows.iter().map(|r| &r[j]).collect()).collect();
    let rows = (0..m)
        .map(|_| columns.iter().map(|c| (*c.choose(&mut rng).expect("nonempty")).clone()).collect())
        .collect();
    RawDataset::new(train.schema.clone(), rows, Role::Synthetic)
}

/// Which toy generator produces a state's synthetic data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ToyGenerator {
    Memorizer {
        #[serde(default = "default_sigma")]
        sigma: f64,
    },
    SafeSampler,
    MarginalSampler,
}

fn default_sigma() -> f64 {
    0.01
}

impl ToyGenerator {
    pub fn all() -> Vec<ToyGenerator> {
        vec![ToyGenerator::Memorizer { sigma: 0.01 }, ToyGenerator::SafeSampler, ToyGenerator::MarginalSampler]
    }

    pub fn name(&self) -> String {
        match self {
            ToyGenerator::Memorizer { sigma } if *sigma == default_sigma() => "memorizer".into(),
            ToyGenerator::Memorizer { sigma } => format!("memorizer[sigma={sigma}]"),
            ToyGenerator::SafeSampler => "safe-sampler".into(),
            ToyGenerator::MarginalSampler => "marginal-sampler".into(),
        }
    }

    /// Generate `|train|` synthetic rows. The safe sampler needs the population spec.
    pub fn generate(&self, train: &RawDataset, population: Option<&PopulationSpec>, seed: u64) -> Result<RawDataset> {
        match self {
            ToyGenerator::Memorizer { sigma } => memorizer(train, *sigma, seed),
            ToyGenerator::MarginalSampler => marginal_sampler(train, train.len(), seed),
            ToyGenerator::SafeSampler => {
                let spec = population
                    .ok_or_else(|| Error::invalid("the safe sampler needs a declared population distribution"))?;
                let mut out = safe_sampler(spec, train.len(), seed)?;
                // keep the population schema so vocabularies line up
                out.schema = train.schema.clone();
                Ok(out)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nums(ds: &RawDataset, j: usize) -> Vec<f64> {
        ds.rows
            .iter()
            .map(|r| match r[j] {
                Value::Num(x) => x,
                _ => panic!("not numeric"),
            })
            .collect()
    }

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    #[test]
    fn population_sampling_is_deterministic_and_rejects_empty() {
        let spec = PopulationSpec::mixed();
        assert!(sample_population(&spec, 0, 1).is_err());
        assert_eq!(sample_population(&spec, 50, 9).unwrap(), sample_population(&spec, 50, 9).unwrap());
        assert_ne!(sample_population(&spec, 50, 9).unwrap(), sample_population(&spec, 50, 10).unwrap());
    }

    #[test]
    fn column_means_match_the_declared_mixture() {
        let spec = PopulationSpec::mixed();
        let n = 20_000;
        for seed in [1, 2] {
            let ds = sample_population(&spec, n, seed).unwrap();
            for j in 0..spec.continuous.len() {
                // mixture mean and sd from the component moments
                let mu: f64 = spec.components.iter().map(|c| c.weight * c.mean[j]).sum();
                let second: f64 = spec.components.iter().map(|c| c.weight * (c.sd[j].powi(2) + c.mean[j].powi(2))).sum();
                let sd = (second - mu * mu).sqrt();
                let got = mean(&nums(&ds, j));
                assert!((got - mu).abs() < 5.0 * sd / (n as f64).sqrt(), "col {j}: {got} vs {mu}");
            }
            for (k, cat) in spec.categorical.iter().enumerate() {
                let j = spec.continuous.len() + k;
                for (c, p) in cat.categories.iter().zip(&cat.probabilities) {
                    let freq = ds.rows.iter().filter(|r| r[j] == Value::Cat(c.clone())).count() as f64 / n as f64;
                    assert!((freq - p).abs() < 5.0 * (p * (1.0 - p) / n as f64).sqrt());
                }
            }
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = PopulationSpec::two_d_mixture();
        spec.components[0].weight = 0.7;
        assert!(spec.validate().is_err());
        let mut spec = PopulationSpec::mixed();
        spec.categorical[0].probabilities = vec![0.5, 0.5];
        assert!(spec.validate().is_err());
        assert!(PopulationSpec::from_json(r#"{"continuous":["a"],"components":[{"weight":1,"mean":[0],"sd":[-1]}]}"#).is_err());
        let ok = PopulationSpec::from_json(
            r#"{"continuous":["a"],"components":[{"weight":1,"mean":[0],"sd":[1]}],
                "categorical":[{"name":"c","categories":["x","y"],"probabilities":[0.5,0.5]}]}"#,
        )
        .unwrap();
        assert_eq!(ok.categorical[0].categories.len(), 2);
    }

    #[test]
    fn zero_noise_memorizer_is_a_shuffle_of_train() {
        let train = sample_population(&PopulationSpec::mixed(), 100, 3).unwrap().with_role(Role::Train);
        let syn = memorizer(&train, 0.0, 4).unwrap();
        assert_eq!(syn.len(), train.len());
        assert_ne!(syn.rows, train.rows);
        let key = |r: &Vec<Value>| format!("{r:?}");
        let mut a: Vec<String> = train.rows.iter().map(key).collect();
        let mut b: Vec<String> = syn.rows.iter().map(key).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }

    #[test]
    fn memorizer_noise_scales_with_the_column_range() {
        let train = sample_population(&PopulationSpec::two_d_mixture(), 2000, 5).unwrap().with_role(Role::Train);
        let syn = memorizer(&train, 0.01, 6).unwrap();
        let range = match train.schema.columns()[0].kind {
            ColumnKind::Continuous { min, max } => max - min,
            _ => unreachable!(),
        };
        let diff = mean(&nums(&syn, 0)) - mean(&nums(&train, 0));
        assert!(diff.abs() < 5.0 * 0.01 * range / (2000f64).sqrt());
        assert!(memorizer(&train, -0.1, 0).is_err());
    }

    #[test]
    fn marginal_sampler_keeps_marginals() {
        let train = sample_population(&PopulationSpec::mixed(), 3000, 7).unwrap().with_role(Role::Train);
        let syn = marginal_sampler(&train, 3000, 8).unwrap();
        assert_eq!(syn, marginal_sampler(&train, 3000, 8).unwrap());
        for j in 0..3 {
            let t = nums(&train, j);
            let m = mean(&t);
            let sd = (t.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (t.len() - 1) as f64).sqrt();
            assert!((mean(&nums(&syn, j)) - m).abs() < 5.0 * sd / (3000f64).sqrt());
        }
    }

    #[test]
    fn generators_keep_the_train_schema() {
        let spec = PopulationSpec::mixed();
        let train = sample_population(&spec, 200, 1).unwrap().with_role(Role::Train);
        for g in ToyGenerator::all() {
            let syn = g.generate(&train, Some(&spec), 2).unwrap();
            assert_eq!(syn.schema, train.schema);
            assert_eq!(syn.role, Role::Synthetic);
            assert_eq!(syn.len(), train.len());
        }
        assert!(ToyGenerator::SafeSampler.generate(&train, None, 2).is_err());
        let g: ToyGenerator = serde_json::from_str(r#"{"kind":"memorizer"}"#).unwrap();
        assert_eq!(g.name(), "memorizer");
    }
}
