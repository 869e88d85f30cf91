//! Dataset roles, schemas, encodings and the train/holdout/reference split.
//!
//! Encoders are always fitted on the synthetic dataset. Distance attacks read
//! the one-hot view and density attacks the ordinal view; both are produced
//! here so every attack in a state sees identical inputs.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// Numeric columns with at most this many distinct values are treated as categorical.
pub const CATEGORICAL_DISTINCT_THRESHOLD: usize = 10;

/// Scaled continuous values are clipped into this interval.
pub const CLIP_RANGE: (f64, f64) = (-0.5, 1.5);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous { min: f64, max: f64 },
    Categorical { vocabulary: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
}

impl Column {
    pub fn is_continuous(&self) -> bool {
        matches!(self.kind, ColumnKind::Continuous { .. })
    }
}

/// Ordered column declarations for a tabular dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Schema {
    columns: Vec<Column>,
}

impl Schema {
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for col in &columns {
            if !seen.insert(col.name.as_str()) {
                return Err(Error::schema(format!("duplicate column name {:?}", col.name)));
            }
            match &col.kind {
                ColumnKind::Continuous { min, max } => {
                    #[allow(clippy::neg_cmp_op_on_partial_ord)]
                    if !(min <= max) {
                        return Err(Error::schema(format!(
                            "column {:?}: observed min {min} exceeds max {max}",
                            col.name
                        )));
                    }
                }
                ColumnKind::Categorical { vocabulary } => {
                    if vocabulary.is_empty() {
                        return Err(Error::schema(format!(
                            "categorical column {:?} has an empty vocabulary",
                            col.name
                        )));
                    }
                }
            }
        }
        Ok(Self { columns })
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    /// Drop one column, e.g. a label column that is not a feature.
    pub fn without(&self, name: &str) -> Result<Schema> {
        let idx = self
            .index_of(name)
            .ok_or_else(|| Error::schema(format!("no column named {name:?}")))?;
        let mut columns = self.columns.clone();
        columns.remove(idx);
        Schema::new(columns)
    }
}

impl<'de> Deserialize<'de> for Schema {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            columns: Vec<Column>,
        }
        let raw = Raw::deserialize(d)?;
        Schema::new(raw.columns).map_err(serde::de::Error::custom)
    }
}

/// One cell of a raw record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Num(f64),
    Cat(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(x) => write!(f, "{x}"),
            Value::Cat(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Population,
    Train,
    Holdout,
    Reference,
    Synthetic,
    Test,
}

/// Header plus string cells, as read from a file before typing.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// 1-based source line of each row, when known.
    pub lines: Vec<u64>,
}

impl RawTable {
    pub fn new(header: Vec<String>, rows: Vec<Vec<String>>) -> Self {
        let lines = (0..rows.len() as u64).map(|i| i + 2).collect();
        Self { header, rows, lines }
    }

    fn line(&self, row: usize) -> u64 {
        self.lines.get(row).copied().unwrap_or(row as u64 + 2)
    }
}

pub(crate) fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t == "?"
}

fn parse_finite(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|x| x.is_finite())
}

/// Decide column kinds from string cells.
///
/// A column is continuous iff every non-missing cell parses as a finite real
/// and the column holds more than ten distinct values.
pub fn infer_schema(header: &[String], rows: &[Vec<String>]) -> Result<Schema> {
    if rows.is_empty() {
        return Err(Error::schema("cannot infer a schema from zero rows"));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != header.len() {
            return Err(Error::schema(format!(
                "row {} has {} cells, header has {}",
                i + 1,
                row.len(),
                header.len()
            )));
        }
    }
    let mut columns = Vec::with_capacity(header.len());
    for (j, name) in header.iter().enumerate() {
        let cells: Vec<&str> = rows
            .iter()
            .map(|r| r[j].trim())
            .filter(|c| !is_missing(c))
            .collect();
        let numeric: Option<Vec<f64>> = cells.iter().map(|c| parse_finite(c)).collect();
        let kind = match numeric {
            Some(values) if !values.is_empty() && distinct_count(&values) > CATEGORICAL_DISTINCT_THRESHOLD => {
                let min = values.iter().copied().fold(f64::INFINITY, f64::min);
                let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                ColumnKind::Continuous { min, max }
            }
            numeric => {
                let mut vocab: Vec<String> = cells
                    .iter()
                    .map(|c| c.to_string())
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect();
                // numeric codes sort by value so ordinal indices follow magnitude
                if numeric.is_some() {
                    vocab.sort_by(|a, b| {
                        let (x, y) = (parse_finite(a).unwrap(), parse_finite(b).unwrap());
                        x.total_cmp(&y).then_with(|| a.cmp(b))
                    });
                }
                ColumnKind::Categorical { vocabulary: vocab }
            }
        };
        columns.push(Column { name: name.clone(), kind });
    }
    Schema::new(columns)
}

fn distinct_count(values: &[f64]) -> usize {
    let mut v: Vec<u64> = values.iter().map(|x| (x + 0.0).to_bits()).collect();
    v.sort_unstable();
    v.dedup();
    v.len()
}

/// Typed records under a schema, tagged with their role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawDataset {
    pub schema: Schema,
    pub rows: Vec<Vec<Value>>,
    pub role: Role,
}

impl RawDataset {
    pub fn new(schema: Schema, rows: Vec<Vec<Value>>, role: Role) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            if row.len() != schema.len() {
                return Err(Error::schema(format!(
                    "row {i} has {} cells, schema has {} columns",
                    row.len(),
                    schema.len()
                )));
            }
            for (cell, col) in row.iter().zip(schema.columns()) {
                match (cell, &col.kind) {
                    (Value::Num(x), ColumnKind::Continuous { .. }) if x.is_finite() => {}
                    (Value::Cat(_), ColumnKind::Categorical { .. }) => {}
                    _ => {
                        return Err(Error::schema(format!(
                            "row {i}, column {:?}: cell {cell} does not match the column kind",
                            col.name
                        )))
                    }
                }
            }
        }
        Ok(Self { schema, rows, role })
    }

    /// Type the cells of a string table under `schema`. Missing cells are rejected.
    pub fn from_table(table: &RawTable, schema: &Schema, role: Role) -> Result<Self> {
        let mut order = Vec::with_capacity(schema.len());
        for col in schema.columns() {
            let idx = table
                .header
                .iter()
                .position(|h| h == &col.name)
                .ok_or_else(|| Error::schema(format!("missing column {:?}", col.name)))?;
            order.push(idx);
        }
        let mut rows = Vec::with_capacity(table.rows.len());
        for (i, raw) in table.rows.iter().enumerate() {
            let line = table.line(i);
            if raw.len() != table.header.len() {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {} cells, found {}", table.header.len(), raw.len()),
                });
            }
            let mut row = Vec::with_capacity(order.len());
            for (col, &idx) in schema.columns().iter().zip(&order) {
                let cell = raw[idx].trim();
                if is_missing(cell) {
                    return Err(Error::Parse {
                        line,
                        message: format!("missing value in column {:?}", col.name),
                    });
                }
                row.push(match col.kind {
                    ColumnKind::Continuous { .. } => Value::Num(parse_finite(cell).ok_or_else(|| Error::Parse {
                        line,
                        message: format!("column {:?}: {cell:?} is not a finite number", col.name),
                    })?),
                    ColumnKind::Categorical { .. } => Value::Cat(cell.to_string()),
                });
            }
            rows.push(row);
        }
        RawDataset::new(schema.clone(), rows, role)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize], role: Role) -> RawDataset {
        RawDataset {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            role,
        }
    }

    /// Split off one column, returning the remaining dataset and the column's cells.
    pub fn take_column(&self, name: &str) -> Result<(RawDataset, Vec<Value>)> {
        let idx = self
            .schema
            .index_of(name)
            .ok_or_else(|| Error::schema(format!("no column named {name:?}")))?;
        let schema = self.schema.without(name)?;
        let mut values = Vec::with_capacity(self.rows.len());
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let mut r = r.clone();
                values.push(r.remove(idx));
                r
            })
            .collect();
        Ok((RawDataset { schema, rows, role: self.role }, values))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingMode {
    OneHot,
    Ordinal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnEncoder {
    Continuous { min: f64, max: f64 },
    /// The unknown slot sits after the last vocabulary entry.
    Categorical { vocabulary: Vec<String> },
}

impl ColumnEncoder {
    fn scale(min: f64, max: f64, x: f64) -> f64 {
        if max > min {
            ((x - min) / (max - min)).clamp(CLIP_RANGE.0, CLIP_RANGE.1)
        } else {
            0.0
        }
    }
}

/// Encoder fitted on a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingSpec {
    pub mode: EncodingMode,
    pub columns: Vec<(String, ColumnEncoder)>,
}

impl EncodingSpec {
    pub fn width(&self) -> usize {
        match self.mode {
            EncodingMode::Ordinal => self.columns.len(),
            EncodingMode::OneHot => self
                .columns
                .iter()
                .map(|(_, enc)| match enc {
                    ColumnEncoder::Continuous { .. } => 1,
                    ColumnEncoder::Categorical { vocabulary } => vocabulary.len() + 1,
                })
                .sum(),
        }
    }
}

/// Fit scalers and vocabularies on the synthetic dataset only.
pub fn fit_encoder(synthetic: &RawDataset, mode: EncodingMode) -> Result<EncodingSpec> {
    if synthetic.role != Role::Synthetic {
        return Err(Error::invalid(format!(
            "encoders must be fitted on the synthetic dataset, got role {:?}",
            synthetic.role
        )));
    }
    if synthetic.is_empty() {
        return Err(Error::Encoding("cannot fit an encoder on an empty synthetic dataset".into()));
    }
    let mut columns = Vec::with_capacity(synthetic.schema.len());
    for (j, col) in synthetic.schema.columns().iter().enumerate() {
        let enc = match &col.kind {
            ColumnKind::Continuous { .. } => {
                let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
                for row in &synthetic.rows {
                    if let Value::Num(x) = row[j] {
                        min = min.min(x);
                        max = max.max(x);
                    }
                }
                ColumnEncoder::Continuous { min, max }
            }
            ColumnKind::Categorical { vocabulary } => {
                let observed: BTreeSet<&str> = synthetic
                    .rows
                    .iter()
                    .filter_map(|r| match &r[j] {
                        Value::Cat(s) => Some(s.as_str()),
                        Value::Num(_) => None,
                    })
                    .collect();
                // schema order first, then anything the schema did not declare
                let mut vocab: Vec<String> = vocabulary
                    .iter()
                    .filter(|v| observed.contains(v.as_str()))
                    .cloned()
                    .collect();
                for v in &observed {
                    if !vocabulary.iter().any(|d| d == v) {
                        vocab.push(v.to_string());
                    }
                }
                ColumnEncoder::Categorical { vocabulary: vocab }
            }
        };
        columns.push((col.name.clone(), enc));
    }
    Ok(EncodingSpec { mode, columns })
}

/// Dense row-major feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedMatrix {
    pub mode: EncodingMode,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    /// 1 = member of the training set, 0 = non-member. Only set for test matrices.
    pub labels: Option<Vec<u8>>,
}

impl EncodedMatrix {
    pub fn new(mode: EncodingMode, rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension { expected: rows * cols, actual: data.len() });
        }
        Ok(Self { mode, rows, cols, data, labels: None })
    }

    pub fn from_rows(mode: EncodingMode, rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::Dimension { expected: cols, actual: r.len() });
            }
            data.extend_from_slice(r);
        }
        Self::new(mode, rows.len(), cols, data)
    }

    pub fn with_labels(mut self, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != self.rows {
            return Err(Error::Dimension { expected: self.rows, actual: labels.len() });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    pub fn select(&self, indices: &[usize]) -> EncodedMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        EncodedMatrix {
            mode: self.mode,
            rows: indices.len(),
            cols: self.cols,
            data,
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }
}

/// Encode a dataset with a fitted spec. Pure and deterministic.
pub fn encode(ds: &RawDataset, spec: &EncodingSpec) -> Result<EncodedMatrix> {
    if ds.schema.len() != spec.columns.len() {
        return Err(Error::Encoding(format!(
            "dataset has {} columns, encoder expects {}",
            ds.schema.len(),
            spec.columns.len()
        )));
    }
    for (col, (name, enc)) in ds.schema.columns().iter().zip(&spec.columns) {
        let same_kind = matches!(
            (&col.kind, enc),
            (ColumnKind::Continuous { .. }, ColumnEncoder::Continuous { .. })
                | (ColumnKind::Categorical { .. }, ColumnEncoder::Categorical { .. })
        );
        if &col.name != name || !same_kind {
            return Err(Error::Encoding(format!(
                "column {:?} does not match encoder column {name:?}",
                col.name
            )));
        }
    }
    let lookups: Vec<Option<HashMap<&str, usize>>> = spec
        .columns
        .iter()
        .map(|(_, enc)| match enc {
            ColumnEncoder::Categorical { vocabulary } => {
                Some(vocabulary.iter().enumerate().map(|(i, v)| (v.as_str(), i)).collect())
            }
            ColumnEncoder::Continuous { .. } => None,
        })
        .collect();

    let width = spec.width();
    let mut data = Vec::with_capacity(ds.len() * width);
    for row in &ds.rows {
        for ((cell, (_, enc)), lookup) in row.iter().zip(&spec.columns).zip(&lookups) {
            match (enc, cell) {
                (ColumnEncoder::Continuous { min, max }, Value::Num(x)) => {
                    data.push(ColumnEncoder::scale(*min, *max, *x));
                }
                (ColumnEncoder::Categorical { vocabulary }, Value::Cat(s)) => {
                    let slot = lookup
                        .as_ref()
                        .and_then(|l| l.get(s.as_str()).copied())
                        .unwrap_or(vocabulary.len());
                    match spec.mode {
                        EncodingMode::Ordinal => data.push(slot as f64),
                        EncodingMode::OneHot => {
                            let start = data.len();
                            data.resize(start + vocabulary.len() + 1, 0.0);
                            data[start + slot] = 1.0;
                        }
                    }
                }
                _ => return Err(Error::Encoding(format!("cell {cell} does not match its encoder"))),
            }
        }
    }
    EncodedMatrix::new(spec.mode, ds.len(), width, data)
}

/// Identifies one benchmark state: (generator, dataset, seed).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StateId {
    pub dataset: String,
    pub generator: String,
    pub seed: u64,
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.dataset, self.generator, self.seed)
    }
}

/// Train / holdout / reference partition of a population, with row provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: RawDataset,
    pub holdout: RawDataset,
    pub reference: RawDataset,
    pub train_idx: Vec<usize>,
    pub holdout_idx: Vec<usize>,
    pub reference_idx: Vec<usize>,
}

/// 80:20 train/test split, then the test part halved into holdout and reference.
pub fn make_splits(population: &RawDataset, seed: u64) -> Result<Splits> {
    let n = population.len();
    if n < 10 {
        return Err(Error::invalid(format!("population needs at least 10 rows, got {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from_seed(seed));
    let n_train = n * 4 / 5;
    let n_test = n - n_train;
    let n_holdout = n_test - n_test / 2;
    let train_idx = idx[..n_train].to_vec();
    let holdout_idx = idx[n_train..n_train + n_holdout].to_vec();
    let reference_idx = idx[n_train + n_holdout..].to_vec();
    Ok(Splits {
        train: population.select(&train_idx, Role::Train),
        holdout: population.select(&holdout_idx, Role::Holdout),
        reference: population.select(&reference_idx, Role::Reference),
        train_idx,
        holdout_idx,
        reference_idx,
    })
}

/// The four dataset roles of one benchmark state.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub state: StateId,
    pub splits: Splits,
    pub synthetic: RawDataset,
}

impl DatasetBundle {
    pub fn new(state: StateId, splits: Splits, synthetic: RawDataset) -> Result<Self> {
        if synthetic.role != Role::Synthetic {
            return Err(Error::invalid("bundle synthetic dataset must carry the synthetic role"));
        }
        if synthetic.schema.len() != splits.train.schema.len() {
            return Err(Error::schema("synthetic dataset columns do not match the population"));
        }
        Ok(Self { state, splits, synthetic })
    }

    /// Train rows followed by holdout rows, with membership labels.
    pub fn test_rows(&self) -> (RawDataset, Vec<u8>) {
        let mut rows = self.splits.train.rows.clone();
        rows.extend(self.splits.holdout.rows.iter().cloned());
        let mut labels = vec![1u8; self.splits.train.len()];
        labels.resize(rows.len(), 0);
        let ds = RawDataset { schema: self.splits.train.schema.clone(), rows, role: Role::Test };
        (ds, labels)
    }
}

/// Encode T ∪ H with labels (1 for train rows, 0 for holdout rows).
pub fn assemble_test_set(bundle: &DatasetBundle, spec: &EncodingSpec) -> Result<EncodedMatrix> {
    let (test, labels) = bundle.test_rows();
    encode(&test, spec)?.with_labels(labels)
}
