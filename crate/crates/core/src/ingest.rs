//! Loading datasets from CSV and ARFF files, local or fetched over HTTP.
//!
//! Fetched bytes are cached under `<cache-dir>/<sha256-hex>` with a
//! `<sha256-hex>.json` sidecar recording the source URL and retrieval time.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{infer_schema, is_missing, Column, ColumnKind, RawDataset, RawTable, Role, Schema};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Arff,
}

impl Format {
    /// Guess from a file extension; defaults to CSV.
    pub fn from_path(path: &str) -> Format {
        if path.to_ascii_lowercase().ends_with(".arff") {
            Format::Arff
        } else {
            Format::Csv
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    Path(PathBuf),
    Url(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub location: Location,
    pub format: Format,
    #[serde(default = "default_cache_dir")]
    pub cache_dir: PathBuf,
}

pub fn default_cache_dir() -> PathBuf {
    PathBuf::from(".tabmia-cache")
}

impl SourceSpec {
    /// Resolve to a local file (fetching if needed) and parse it.
    pub fn load(&self, role: Role) -> Result<RawDataset> {
        let path = match &self.location {
            Location::Path(p) => p.clone(),
            Location::Url(u) => fetch(u, &self.cache_dir)?,
        };
        match self.format {
            Format::Csv => load_csv(&path, role),
            Format::Arff => load_arff(&path, role),
        }
    }
}

/// Read an RFC 4180 CSV with a header row into string cells.
pub fn read_csv_table<R: Read>(reader: R) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::Parse { line: 1, message: "missing header row".into() });
    }
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} cells, found {}", header.len(), record.len()),
            });
        }
        if let Some(j) = record.iter().position(is_missing) {
            return Err(Error::Parse { line, message: format!("missing value in column {:?}", header[j]) });
        }
        rows.push(record.iter().map(str::to_string).collect());
        lines.push(line);
    }
    Ok(RawTable { header, rows, lines })
}

pub fn parse_csv(text: &str, role: Role) -> Result<RawDataset> {
    let table = read_csv_table(text.as_bytes())?;
    let schema = infer_schema(&table.header, &table.rows)?;
    RawDataset::from_table(&table, &schema, role)
}

/// Load a CSV and infer its schema.
pub fn load_csv(path: &Path, role: Role) -> Result<RawDataset> {
    let table = read_csv_table(fs::File::open(path)?)?;
    let schema = infer_schema(&table.header, &table.rows)?;
    RawDataset::from_table(&table, &schema, role)
}

/// Load a CSV under a known schema (e.g. the synthetic dataset's).
pub fn load_csv_with_schema(path: &Path, schema: &Schema, role: Role) -> Result<RawDataset> {
    let table = read_csv_table(fs::File::open(path)?)?;
    RawDataset::from_table(&table, schema, role)
}

pub fn write_csv<W: Write>(ds: &RawDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(ds.schema.names())?;
    for row in &ds.rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_arff(path: &Path, role: Role) -> Result<RawDataset> {
    parse_arff(&fs::read_to_string(path)?, role)
}

enum ArffType {
    Numeric,
    Nominal(Vec<String>),
}

/// Parse ARFF text with numeric and nominal attributes.
pub fn parse_arff(text: &str, role: Role) -> Result<RawDataset> {
    let mut attrs: Vec<(String, ArffType)> = Vec::new();
    let mut in_data = false;
    let mut cells: Vec<Vec<String>> = Vec::new();
    let mut lines: Vec<u64> = Vec::new();

    for (i, raw_line) in text.lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        if !in_data {
            let lower = line.to_ascii_lowercase();
            if lower.starts_with("@relation") {
                continue;
            } else if lower.starts_with("@attribute") {
                let rest = line["@attribute".len()..].trim();
                let (name, ty) = split_attribute(rest)
                    .ok_or_else(|| Error::Parse { line: line_no, message: "malformed @attribute".into() })?;
                attrs.push((name, parse_arff_type(ty, line_no)?));
            } else if lower.starts_with("@data") {
                in_data = true;
            } else {
                return Err(Error::Parse { line: line_no, message: format!("unexpected header line {line:?}") });
            }
            continue;
        }
        if line.starts_with('{') {
            return Err(Error::UnsupportedFormat("sparse ARFF data rows".into()));
        }
        let row = split_arff_values(line);
        if row.len() != attrs.len() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {} values, found {}", attrs.len(), row.len()),
            });
        }
        cells.push(row);
        lines.push(line_no);
    }
    if attrs.is_empty() {
        return Err(Error::Parse { line: 0, message: "no @attribute declarations".into() });
    }
    if cells.is_empty() {
        return Err(Error::schema("ARFF file has no data rows"));
    }

    let mut columns = Vec::with_capacity(attrs.len());
    for (j, (name, ty)) in attrs.iter().enumerate() {
        let kind = match ty {
            ArffType::Nominal(vocab) => ColumnKind::Categorical { vocabulary: vocab.clone() },
            ArffType::Numeric => {
                let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
                for (row, &line) in cells.iter().zip(&lines) {
                    let cell = &row[j];
                    if is_missing(cell) {
                        continue;
                    }
                    let x: f64 = cell.parse().ok().filter(|x: &f64| x.is_finite()).ok_or_else(|| Error::Parse {
                        line,
                        message: format!("attribute {name:?}: {cell:?} is not numeric"),
                    })?;
                    min = min.min(x);
                    max = max.max(x);
                }
                ColumnKind::Continuous { min, max }
            }
        };
        columns.push(Column { name: name.clone(), kind });
    }
    let schema = Schema::new(columns)?;
    for (row, &line) in cells.iter().zip(&lines) {
        for (cell, (name, ty)) in row.iter().zip(&attrs) {
            if let ArffType::Nominal(vocab) = ty {
                if !is_missing(cell) && !vocab.contains(cell) {
                    return Err(Error::Parse {
                        line,
                        message: format!("attribute {name:?}: {cell:?} is not a declared nominal value"),
                    });
                }
            }
        }
    }
    let header = attrs.into_iter().map(|(n, _)| n).collect();
    let table = RawTable { header, rows: cells, lines };
    RawDataset::from_table(&table, &schema, role)
}

fn split_attribute(rest: &str) -> Option<(String, &str)> {
    let rest = rest.trim_start();
    let quote = rest.chars().next()?;
    if quote == '\'' || quote == '"' {
        let end = rest[1..].find(quote)? + 1;
        Some((rest[1..end].to_string(), rest[end + 1..].trim()))
    } else {
        let end = rest.find(char::is_whitespace)?;
        Some((rest[..end].to_string(), rest[end..].trim()))
    }
}

fn parse_arff_type(ty: &str, line: u64) -> Result<ArffType> {
    if ty.starts_with('{') {
        let inner = ty
            .strip_prefix('{')
            .and_then(|t| t.strip_suffix('}'))
            .ok_or_else(|| Error::Parse { line, message: "unterminated nominal specification".into() })?;
        let vocab: Vec<String> = split_arff_values(inner).into_iter().filter(|v| !v.is_empty()).collect();
        if vocab.is_empty() {
            return Err(Error::Parse { line, message: "empty nominal specification".into() });
        }
        return Ok(ArffType::Nominal(vocab));
    }
    match ty.split_whitespace().next().unwrap_or("").to_ascii_lowercase().as_str() {
        "numeric" | "real" | "integer" => Ok(ArffType::Numeric),
        other => Err(Error::UnsupportedFormat(format!("ARFF attribute type {other:?} (line {line})"))),
    }
}

/// Split on commas outside single or double quotes; strips quotes and whitespace.
fn split_arff_values(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quote: Option<char> = None;
    let mut chars = line.chars();
    while let Some(c) = chars.next() {
        match (quote, c) {
            (Some(_), '\\') => {
                if let Some(n) = chars.next() {
                    cur.push(n);
                }
            }
            (Some(q), c) if c == q => quote = None,
            (Some(_), c) => cur.push(c),
            (None, '\'' | '"') if cur.trim().is_empty() => {
                cur.clear();
                quote = Some(c);
            }
            (None, ',') => out.push(std::mem::take(&mut cur).trim().to_string()),
            (None, c) => cur.push(c),
        }
    }
    out.push(cur.trim().to_string());
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheMeta {
    url: String,
    sha256: String,
    retrieved_at_unix: u64,
    bytes: u64,
}

fn url_lock(url: &str) -> Arc<Mutex<()>> {
    static LOCKS: OnceLock<Mutex<HashMap<String, Arc<Mutex<()>>>>> = OnceLock::new();
    let mut map = LOCKS.get_or_init(Default::default).lock().unwrap_or_else(|e| e.into_inner());
    map.entry(url.to_string()).or_default().clone()
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Look for a cached, intact copy of `url`.
fn cache_lookup(url: &str, cache_dir: &Path) -> Option<PathBuf> {
    let entries = fs::read_dir(cache_dir).ok()?;
    let mut metas: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    metas.sort();
    for meta_path in metas {
        let Ok(text) = fs::read_to_string(&meta_path) else { continue };
        let Ok(meta) = serde_json::from_str::<CacheMeta>(&text) else { continue };
        if meta.url != url {
            continue;
        }
        let blob = cache_dir.join(&meta.sha256);
        match fs::read(&blob) {
            Ok(bytes) if sha256_hex(&bytes) == meta.sha256 => return Some(blob),
            _ => continue,
        }
    }
    None
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Download `url` into the content-addressed cache, or return the cached copy.
pub fn fetch(url: &str, cache_dir: &Path) -> Result<PathBuf> {
    if !(url.starts_with("http://") || url.starts_with("https://")) {
        return Err(Error::Fetch { status: None, message: format!("not an http(s) URL: {url}") });
    }
    let lock = url_lock(url);
    let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
    if let Some(hit) = cache_lookup(url, cache_dir) {
        return Ok(hit);
    }
    let bytes = download(url)?;
    fs::create_dir_all(cache_dir)?;
    let digest = sha256_hex(&bytes);
    let blob = cache_dir.join(&digest);
    write_atomic(&blob, &bytes)?;
    let meta = CacheMeta {
        url: url.to_string(),
        sha256: digest.clone(),
        retrieved_at_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        bytes: bytes.len() as u64,
    };
    write_atomic(&cache_dir.join(format!("{digest}.json")), &serde_json::to_vec_pretty(&meta)?)?;
    Ok(blob)
}

fn download(url: &str) -> Result<Vec<u8>> {
    match ureq::get(url).call() {
        Ok(resp) => resp
            .into_body()
            .with_config()
            .limit(1 << 32)
            .read_to_vec()
            .map_err(|e| Error::Fetch { status: None, message: e.to_string() }),
        Err(ureq::Error::StatusCode(code)) => {
            Err(Error::Fetch { status: Some(code), message: format!("GET {url} returned status {code}") })
        }
        Err(e) => Err(Error::Fetch { status: None, message: e.to_string() }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Value;

    #[test]
    fn csv_basic_and_quoted_fields() {
        let ds = parse_csv("a,b\n1,x\n", Role::Population).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.schema.len(), 2);

        let ds = parse_csv("name,v\n\"x, y\",1\n", Role::Population).unwrap();
        assert_eq!(ds.rows[0][0], Value::Cat("x, y".into()));
    }

    #[test]
    fn ragged_csv_row_reports_its_line() {
        let err = parse_csv("a,b\n1,2\n3,4,5\n", Role::Population).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn missing_csv_cells_are_rejected() {
        let err = parse_csv("a,b\n1,2\n3,\n", Role::Population).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn arff_declarations_map_to_column_kinds() {
        let text = "% comment\n@RELATION toy\n@attribute f numeric\n@attribute 'c' {a, b}\n@data\n1.5,a\n2.5,'b'\n";
        let ds = parse_arff(text, Role::Population).unwrap();
        assert_eq!(ds.schema.columns()[0].kind, ColumnKind::Continuous { min: 1.5, max: 2.5 });
        assert_eq!(
            ds.schema.columns()[1].kind,
            ColumnKind::Categorical { vocabulary: vec!["a".into(), "b".into()] }
        );
        assert_eq!(ds.rows[1], vec![Value::Num(2.5), Value::Cat("b".into())]);
    }

    #[test]
    fn arff_string_and_date_attributes_are_unsupported() {
        for ty in ["string", "date \"yyyy-MM-dd\""] {
            let text = format!("@relation r\n@attribute s {ty}\n@data\nx\n");
            assert!(matches!(parse_arff(&text, Role::Population), Err(Error::UnsupportedFormat(_))));
        }
    }

    #[test]
    fn arff_undeclared_nominal_value_is_an_error() {
        let text = "@relation r\n@attribute c {a,b}\n@data\nz\n";
        assert!(matches!(parse_arff(text, Role::Population), Err(Error::Parse { line: 4, .. })));
    }

    #[test]
    fn csv_round_trip_preserves_cells() {
        let text = "x,c\n0.1,a\n-3.25,\"b,c\"\n1e-7,a\n";
        let ds = parse_csv(text, Role::Population).unwrap();
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let table = read_csv_table(buf.as_slice()).unwrap();
        let back = RawDataset::from_table(&table, &ds.schema, Role::Population).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn non_http_urls_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(fetch("ftp://x/y", dir.path()), Err(Error::Fetch { status: None, .. })));
    }
}
