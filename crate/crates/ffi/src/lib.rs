//! C ABI for rfperm.
//!
//! Handles are opaque and owned by the caller once returned; release them
//! with the matching `*_free`. Every fallible call returns an [`RfpStatus`];
//! on failure `rfp_last_error_message` describes the error on that thread.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::collections::HashMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rfperm::data::{load_csv, split_train_test};
use rfperm::forest::subsample_diagnostics;
use rfperm::permtest::{overall_test, run_test};
use rfperm::report::TestReport;
use rfperm::{
    Dataset, Error, FeatureSubset, ForestConfig, KnockoffColumns, MutingStrategy, PermTestConfig, PermTestResult,
    SubsampleSize, TreeConfig,
};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RfpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Schema = 3,
    Parse = 4,
    Validation = 5,
    Io = 6,
    Serialization = 7,
    Utf8 = 8,
    Panic = 9,
}

/// How the tested features are muted.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RfpStrategy {
    Permute = 0,
    Exclude = 1,
}

/// Forest settings. Zero in `subsample_size`, `mtry` or `max_depth` selects
/// the default (exponent rule, `ceil(p/3)`, unlimited).
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RfpForestOptions {
    pub n_trees: usize,
    pub subsample_exponent: f64,
    pub subsample_size: usize,
    pub mtry: usize,
    pub min_node_size: usize,
    pub max_depth: usize,
    pub min_split_fraction: f64,
    pub seed: u64,
}

/// Permutation loop settings. `mute_seed` drives the row permutation of the
/// permute strategy.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RfpTestOptions {
    pub n_perm: usize,
    pub perm_seed: u64,
    pub mute_seed: u64,
    pub strategy: RfpStrategy,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RfpDiagnostics {
    pub n: usize,
    pub k: usize,
    pub n_trees: usize,
    pub pair_disjoint_prob: f64,
    /// `-inf` when two subsamples can never be disjoint.
    pub lemma1_log_term: f64,
    pub warning: bool,
}

/// Opaque dataset handle.
pub struct RfpDataset {
    inner: Dataset,
}

/// Opaque test result handle.
pub struct RfpResult {
    inner: PermTestResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(RfpStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Argument(_) => RfpStatus::InvalidArgument,
            Error::Schema(_) => RfpStatus::Schema,
            Error::Parse { .. } | Error::Csv(_) => RfpStatus::Parse,
            Error::Validation { .. } => RfpStatus::Validation,
            Error::Io(_) => RfpStatus::Io,
            Error::Json(_) => RfpStatus::Serialization,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: RfpStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

/// Run `f`, converting errors and panics into a status and the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RfpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            RfpStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            RfpStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(RfpStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(RfpStatus::Utf8, format!("{what} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| fail(RfpStatus::NullPointer, format!("{what} is null")))
}

fn out_arg<T>(p: *mut T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(fail(RfpStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

/// Defaults: 125 trees, exponent 0.6, fully grown trees, seed 0.
#[no_mangle]
pub extern "C" fn rfp_forest_options_default() -> RfpForestOptions {
    RfpForestOptions {
        n_trees: 125,
        subsample_exponent: 0.6,
        subsample_size: 0,
        mtry: 0,
        min_node_size: 1,
        max_depth: 0,
        min_split_fraction: 0.0,
        seed: 0,
    }
}

/// Defaults: 500 permutations, permute strategy, seeds 0.
#[no_mangle]
pub extern "C" fn rfp_test_options_default() -> RfpTestOptions {
    RfpTestOptions {
        n_perm: 500,
        perm_seed: 0,
        mute_seed: 0,
        strategy: RfpStrategy::Permute,
    }
}

fn forest_config(o: &RfpForestOptions) -> ForestConfig {
    ForestConfig {
        n_trees: o.n_trees,
        subsample: if o.subsample_size > 0 {
            SubsampleSize::Fixed(o.subsample_size)
        } else {
            SubsampleSize::Exponent(o.subsample_exponent)
        },
        tree: TreeConfig {
            mtry: (o.mtry > 0).then_some(o.mtry),
            min_node_size: o.min_node_size,
            max_depth: (o.max_depth > 0).then_some(o.max_depth),
            min_split_fraction: o.min_split_fraction,
        },
        master_seed: o.seed,
    }
}

/// Load a CSV with a header row; non-numeric columns become categorical.
#[no_mangle]
pub unsafe extern "C" fn rfp_dataset_from_csv(
    path: *const c_char,
    response: *const c_char,
    out: *mut *mut RfpDataset,
) -> RfpStatus {
    guard(|| {
        out_arg(out, "out")?;
        let path = str_arg(path, "path")?;
        let response = str_arg(response, "response")?;
        let d = load_csv(path, &HashMap::new(), response)?;
        *out = Box::into_raw(Box::new(RfpDataset { inner: d }));
        Ok(())
    })
}

/// Numeric dataset from a column-major `n × p` matrix `x` and responses `y`.
/// Features are named `x1..xp`.
#[no_mangle]
pub unsafe extern "C" fn rfp_dataset_from_columns(
    x: *const f64,
    n: usize,
    p: usize,
    y: *const f64,
    out: *mut *mut RfpDataset,
) -> RfpStatus {
    guard(|| {
        out_arg(out, "out")?;
        if x.is_null() || y.is_null() {
            return Err(fail(RfpStatus::NullPointer, "x or y is null"));
        }
        let len = n.checked_mul(p).ok_or_else(|| fail(RfpStatus::InvalidArgument, "n * p overflows"))?;
        let xs = std::slice::from_raw_parts(x, len);
        let cols = xs.chunks(n.max(1)).take(p).map(<[f64]>::to_vec).collect();
        let ys = std::slice::from_raw_parts(y, n).to_vec();
        let d = Dataset::from_numeric_columns(cols, ys)?;
        *out = Box::into_raw(Box::new(RfpDataset { inner: d }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rfp_dataset_free(d: *mut RfpDataset) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Number of rows, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn rfp_dataset_nrows(d: *const RfpDataset) -> usize {
    d.as_ref().map_or(0, |d| d.inner.n())
}

/// Number of feature columns, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn rfp_dataset_ncols(d: *const RfpDataset) -> usize {
    d.as_ref().map_or(0, |d| d.inner.p())
}

/// Zero-based index of the feature called `name`.
#[no_mangle]
pub unsafe extern "C" fn rfp_dataset_feature_index(
    d: *const RfpDataset,
    name: *const c_char,
    out: *mut usize,
) -> RfpStatus {
    guard(|| {
        out_arg(out, "out")?;
        let d = ref_arg(d, "dataset")?;
        let name = str_arg(name, "name")?;
        *out = d
            .inner
            .feature_index(name)
            .ok_or_else(|| fail(RfpStatus::Schema, format!("no feature `{name}`")))?;
        Ok(())
    })
}

/// Random train/test split with `floor(test_fraction · n)` test rows.
#[no_mangle]
pub unsafe extern "C" fn rfp_dataset_split(
    d: *const RfpDataset,
    test_fraction: f64,
    seed: u64,
    train_out: *mut *mut RfpDataset,
    test_out: *mut *mut RfpDataset,
) -> RfpStatus {
    guard(|| {
        out_arg(train_out, "train_out")?;
        out_arg(test_out, "test_out")?;
        let d = ref_arg(d, "dataset")?;
        let (train, test) = split_train_test(&d.inner, test_fraction, seed)?;
        *train_out = Box::into_raw(Box::new(RfpDataset { inner: train }));
        *test_out = Box::into_raw(Box::new(RfpDataset { inner: test }));
        Ok(())
    })
}

unsafe fn subset(features: *const usize, n_features: usize, p: usize) -> Result<FeatureSubset, Failure> {
    if features.is_null() {
        return Err(fail(RfpStatus::NullPointer, "features is null"));
    }
    Ok(FeatureSubset::new(std::slice::from_raw_parts(features, n_features).to_vec(), p)?)
}

unsafe fn finish(out: *mut *mut RfpResult, r: PermTestResult) {
    *out = Box::into_raw(Box::new(RfpResult { inner: r }));
}

/// Test whether the features at `features[0..n_features]` improve test MSE.
#[no_mangle]
pub unsafe extern "C" fn rfp_run_test(
    train: *const RfpDataset,
    test: *const RfpDataset,
    features: *const usize,
    n_features: usize,
    forest: *const RfpForestOptions,
    options: *const RfpTestOptions,
    out: *mut *mut RfpResult,
) -> RfpStatus {
    guard(|| {
        out_arg(out, "out")?;
        let train = &ref_arg(train, "train")?.inner;
        let test = &ref_arg(test, "test")?.inner;
        let fo = ref_arg(forest, "forest options")?;
        let to = ref_arg(options, "test options")?;
        let s = subset(features, n_features, train.p())?;
        let strategy = match to.strategy {
            RfpStrategy::Permute => MutingStrategy::PermuteRows { seed: to.mute_seed },
            RfpStrategy::Exclude => MutingStrategy::Exclude,
        };
        let pcfg = PermTestConfig { n_perm: to.n_perm, seed: to.perm_seed, ..Default::default() };
        finish(out, run_test(train, test, &s, &strategy, &forest_config(fo), &pcfg)?);
        Ok(())
    })
}

/// As [`rfp_run_test`] with knockoffs: `knockoffs` is column-major with one
/// column of `n_train` values per tested feature, or one per feature.
#[no_mangle]
pub unsafe extern "C" fn rfp_run_test_knockoff(
    train: *const RfpDataset,
    test: *const RfpDataset,
    features: *const usize,
    n_features: usize,
    knockoffs: *const f64,
    knockoff_cols: usize,
    forest: *const RfpForestOptions,
    options: *const RfpTestOptions,
    out: *mut *mut RfpResult,
) -> RfpStatus {
    guard(|| {
        out_arg(out, "out")?;
        let train = &ref_arg(train, "train")?.inner;
        let test = &ref_arg(test, "test")?.inner;
        let fo = ref_arg(forest, "forest options")?;
        let to = ref_arg(options, "test options")?;
        let s = subset(features, n_features, train.p())?;
        if knockoffs.is_null() {
            return Err(fail(RfpStatus::NullPointer, "knockoffs is null"));
        }
        let n = train.n();
        let flat = std::slice::from_raw_parts(knockoffs, n * knockoff_cols);
        let cols = flat.chunks(n).map(<[f64]>::to_vec).collect();
        let strategy = MutingStrategy::Knockoff(KnockoffColumns::new(cols));
        let pcfg = PermTestConfig { n_perm: to.n_perm, seed: to.perm_seed, ..Default::default() };
        finish(out, run_test(train, test, &s, &strategy, &forest_config(fo), &pcfg)?);
        Ok(())
    })
}

/// Test all features jointly. The exclude strategy is rejected.
#[no_mangle]
pub unsafe extern "C" fn rfp_overall_test(
    train: *const RfpDataset,
    test: *const RfpDataset,
    forest: *const RfpForestOptions,
    options: *const RfpTestOptions,
    out: *mut *mut RfpResult,
) -> RfpStatus {
    guard(|| {
        out_arg(out, "out")?;
        let train = &ref_arg(train, "train")?.inner;
        let test = &ref_arg(test, "test")?.inner;
        let fo = ref_arg(forest, "forest options")?;
        let to = ref_arg(options, "test options")?;
        let strategy = match to.strategy {
            RfpStrategy::Permute => MutingStrategy::PermuteRows { seed: to.mute_seed },
            RfpStrategy::Exclude => MutingStrategy::Exclude,
        };
        let pcfg = PermTestConfig { n_perm: to.n_perm, seed: to.perm_seed, ..Default::default() };
        finish(out, overall_test(train, test, &strategy, &forest_config(fo), &pcfg)?);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rfp_result_free(r: *mut RfpResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// NaN for a null handle.
#[no_mangle]
pub unsafe extern "C" fn rfp_result_p_value(r: *const RfpResult) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.inner.p_value)
}

/// NaN for a null handle.
#[no_mangle]
pub unsafe extern "C" fn rfp_result_z_score(r: *const RfpResult) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.inner.z_score)
}

/// NaN for a null handle.
#[no_mangle]
pub unsafe extern "C" fn rfp_result_delta_observed(r: *const RfpResult) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.inner.delta_observed)
}

/// NaN for a null handle.
#[no_mangle]
pub unsafe extern "C" fn rfp_result_mse_original(r: *const RfpResult) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.inner.mse_original)
}

/// NaN for a null handle.
#[no_mangle]
pub unsafe extern "C" fn rfp_result_mse_muted(r: *const RfpResult) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.inner.mse_muted)
}

/// True when the permuted deltas have zero spread (z-score reported as 0).
#[no_mangle]
pub unsafe extern "C" fn rfp_result_degenerate(r: *const RfpResult) -> bool {
    r.as_ref().is_some_and(|r| r.inner.degenerate)
}

/// Number of permuted deltas, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn rfp_result_n_perm(r: *const RfpResult) -> usize {
    r.as_ref().map_or(0, |r| r.inner.n_perm())
}

/// Copy the permuted deltas into `buf`, which must hold `rfp_result_n_perm` values.
#[no_mangle]
pub unsafe extern "C" fn rfp_result_copy_deltas(r: *const RfpResult, buf: *mut f64, len: usize) -> RfpStatus {
    guard(|| {
        out_arg(buf, "buf")?;
        let r = ref_arg(r, "result")?;
        let d = &r.inner.deltas_permuted;
        if len < d.len() {
            return Err(fail(RfpStatus::InvalidArgument, format!("buffer holds {len}, need {}", d.len())));
        }
        ptr::copy_nonoverlapping(d.as_ptr(), buf, d.len());
        Ok(())
    })
}

/// JSON report of the result. Free the string with `rfp_string_free`.
#[no_mangle]
pub unsafe extern "C" fn rfp_result_to_json(r: *const RfpResult, out: *mut *mut c_char) -> RfpStatus {
    guard(|| {
        out_arg(out, "out")?;
        let r = ref_arg(r, "result")?;
        let s = serde_json::to_string_pretty(&TestReport::from_result(&r.inner))
            .map_err(|e| fail(RfpStatus::Serialization, e.to_string()))?;
        *out = CString::new(s).expect("JSON has no nul bytes").into_raw();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rfp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Exact pairwise disjointness probability and the log term for `b` trees.
#[no_mangle]
pub unsafe extern "C" fn rfp_subsample_diagnostics(n: usize, k: usize, b: usize, out: *mut RfpDiagnostics) -> RfpStatus {
    guard(|| {
        out_arg(out, "out")?;
        if k < 1 || k >= n {
            return Err(fail(RfpStatus::InvalidArgument, format!("need 1 <= k < n, got n={n}, k={k}")));
        }
        let d = subsample_diagnostics(n, k, b);
        *out = RfpDiagnostics {
            n: d.n,
            k: d.k,
            n_trees: d.n_trees,
            pair_disjoint_prob: d.pair_disjoint_prob,
            lemma1_log_term: d.lemma1_log_term,
            warning: d.warning,
        };
        Ok(())
    })
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn rfp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn rfp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
