//! C ABI for tabmia.
//!
//! Every function returns a [`TabmiaStatus`]; on failure the message is
//! available from [`tabmia_last_error`] on the same thread. Objects cross the
//! boundary as opaque handles that the caller releases with the matching
//! `_free` function. Strings returned by the library are released with
//! [`tabmia_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use tabmia::ensembles::{run_ensemble, EnsembleConfig, Normalization, ScoreMatrix};
use tabmia::harness::{run_benchmark, BenchmarkConfig, BenchmarkReport};
use tabmia::metrics::{auc, tpr_at_fpr, MetricKind};
use tabmia::Error;

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TabmiaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Malformed or inconsistent input data.
    Data = 3,
    /// Any other failure, including a caught panic.
    Internal = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TabmiaEnsembleKind {
    Mean = 0,
    /// Uniform weights.
    WeightedMean = 1,
    MajorityVote = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TabmiaNormalization {
    None = 0,
    Minmax = 1,
    Rank = 2,
}

/// Opaque attack × record score matrix.
pub struct TabmiaScoreMatrix(ScoreMatrix);

/// Opaque benchmark report.
pub struct TabmiaReport(BenchmarkReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> TabmiaStatus {
    match err {
        Error::InvalidArgument(_) => TabmiaStatus::InvalidArgument,
        e if e.is_data_error() => TabmiaStatus::Data,
        Error::Metric(_) => TabmiaStatus::Data,
        _ => TabmiaStatus::Internal,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

/// Run `f`, translating errors and panics into a status and the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> TabmiaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            TabmiaStatus::Ok
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            TabmiaStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            TabmiaStatus::Internal
        }
    }
}

fn non_null<T>(p: *const T, what: &'static str) -> Result<*const T, Fail> {
    if p.is_null() {
        Err(Fail::Null(what))
    } else {
        Ok(p)
    }
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    Ok(std::slice::from_raw_parts(non_null(p, what)?, n))
}

unsafe fn string<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    CStr::from_ptr(non_null(p, what)?)
        .to_str()
        .map_err(|_| Fail::Lib(Error::InvalidArgument(format!("{what} is not UTF-8"))))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn tabmia_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn tabmia_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Area under the ROC curve of `n` scores with 0/1 labels.
///
/// # Safety
/// `scores` and `labels` must point to `n` readable elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tabmia_auc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> TabmiaStatus {
    guard(|| {
        let s = slice(scores, n, "scores")?;
        let l = slice(labels, n, "labels")?;
        non_null(out, "out")?;
        *out = auc(s, l)?;
        Ok(())
    })
}

/// Highest true-positive rate at false-positive rate ≤ `alpha`.
///
/// # Safety
/// As for [`tabmia_auc`].
#[no_mangle]
pub unsafe extern "C" fn tabmia_tpr_at_fpr(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    alpha: f64,
    out: *mut f64,
) -> TabmiaStatus {
    guard(|| {
        let s = slice(scores, n, "scores")?;
        let l = slice(labels, n, "labels")?;
        non_null(out, "out")?;
        *out = tpr_at_fpr(s, l, alpha)?;
        Ok(())
    })
}

/// Build a score matrix from `n_attacks` row-major rows of `n_records` scores.
/// `ids` holds one NUL-terminated attack id per row.
///
/// # Safety
/// `data` must hold `n_attacks * n_records` values, `ids` `n_attacks` valid
/// C strings, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tabmia_score_matrix_new(
    data: *const f64,
    n_attacks: usize,
    n_records: usize,
    ids: *const *const c_char,
    out: *mut *mut TabmiaScoreMatrix,
) -> TabmiaStatus {
    guard(|| {
        non_null(out, "out")?;
        let total = n_attacks
            .checked_mul(n_records)
            .ok_or_else(|| Fail::Lib(Error::InvalidArgument("matrix too large".into())))?;
        let values = slice(data, total, "data")?;
        let names = slice(ids, n_attacks, "ids")?;
        let ids = names.iter().map(|&p| string(p, "id").map(str::to_owned)).collect::<Result<Vec<_>, _>>()?;
        let rows = values.chunks(n_records.max(1)).map(<[f64]>::to_vec).collect();
        let m = ScoreMatrix::new(ids, if n_records == 0 { vec![Vec::new(); n_attacks] } else { rows })?;
        *out = Box::into_raw(Box::new(TabmiaScoreMatrix(m)));
        Ok(())
    })
}

/// # Safety
/// `matrix` must come from [`tabmia_score_matrix_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tabmia_score_matrix_free(matrix: *mut TabmiaScoreMatrix) {
    if !matrix.is_null() {
        drop(Box::from_raw(matrix));
    }
}

/// Combine the matrix into one score per record, written to `out`
/// (`n_records` slots; `out_len` must equal the record count).
///
/// # Safety
/// `matrix` must be a live handle and `out` must have room for `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn tabmia_ensemble(
    matrix: *const TabmiaScoreMatrix,
    kind: TabmiaEnsembleKind,
    normalization: TabmiaNormalization,
    out: *mut f64,
    out_len: usize,
) -> TabmiaStatus {
    guard(|| {
        let m = &(*non_null(matrix, "matrix")?).0;
        if out_len != m.n_records() {
            return Err(Error::Dimension { expected: m.n_records(), actual: out_len }.into());
        }
        let mut cfg = match kind {
            TabmiaEnsembleKind::Mean => EnsembleConfig::mean(),
            TabmiaEnsembleKind::WeightedMean => EnsembleConfig::weighted_mean(None),
            TabmiaEnsembleKind::MajorityVote => EnsembleConfig::majority_vote(),
        };
        cfg.normalization = match normalization {
            TabmiaNormalization::None => Normalization::None,
            TabmiaNormalization::Minmax => Normalization::Minmax,
            TabmiaNormalization::Rank => Normalization::Rank,
        };
        non_null(out, "out")?;
        let scores = run_ensemble(&cfg, m)?.scores;
        let dst = std::slice::from_raw_parts_mut(out, out_len);
        dst.copy_from_slice(&scores);
        Ok(())
    })
}

/// Run a benchmark from a JSON config string.
///
/// # Safety
/// `config_json` must be a valid C string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tabmia_benchmark_run(config_json: *const c_char, out: *mut *mut TabmiaReport) -> TabmiaStatus {
    guard(|| {
        non_null(out, "out")?;
        let cfg = BenchmarkConfig::from_json(string(config_json, "config_json")?)?;
        *out = Box::into_raw(Box::new(TabmiaReport(run_benchmark(&cfg)?)));
        Ok(())
    })
}

/// Serialize a report as pretty JSON; free the result with [`tabmia_string_free`].
///
/// # Safety
/// `report` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tabmia_report_json(report: *const TabmiaReport, out: *mut *mut c_char) -> TabmiaStatus {
    guard(|| {
        let r = &(*non_null(report, "report")?).0;
        non_null(out, "out")?;
        let json = tabmia::report::to_json(r)?;
        *out = CString::new(json).map_err(|e| Error::Benchmark(e.to_string()))?.into_raw();
        Ok(())
    })
}

/// Mean rank of `strategy` under `metric` (e.g. `"AUC"`, `"TPR@0.1"`).
///
/// # Safety
/// `report` must be a live handle, the strings valid, and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tabmia_report_mean_rank(
    report: *const TabmiaReport,
    metric: *const c_char,
    strategy: *const c_char,
    out: *mut f64,
) -> TabmiaStatus {
    guard(|| {
        let r = &(*non_null(report, "report")?).0;
        let metric: MetricKind = string(metric, "metric")?.parse()?;
        let strategy = string(strategy, "strategy")?;
        non_null(out, "out")?;
        let entry = r
            .summary(metric)
            .and_then(|s| s.ranks.get(strategy))
            .ok_or_else(|| Error::InvalidArgument(format!("no rank for {strategy} under {metric}")))?;
        *out = entry.mean_rank;
        Ok(())
    })
}

/// Number of successfully evaluated states in a report.
///
/// # Safety
/// `report` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tabmia_report_state_count(report: *const TabmiaReport, out: *mut usize) -> TabmiaStatus {
    guard(|| {
        let r = &(*non_null(report, "report")?).0;
        non_null(out, "out")?;
        *out = r.states.len();
        Ok(())
    })
}

/// # Safety
/// `report` must come from [`tabmia_benchmark_run`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tabmia_report_free(report: *mut TabmiaReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// # Safety
/// `s` must be a string returned by this library, or null.
#[no_mangle]
pub unsafe extern "C" fn tabmia_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
