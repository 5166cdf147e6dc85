//! C ABI over the `strategem` engine.
//!
//! Every fallible function returns a [`StrategemStatus`]. On failure the
//! thread's last error message is set and can be read with
//! [`strategem_last_error`]. Objects are opaque handles created by a
//! `*_new`/`*_generate`/`*_load_csv`/`*_run` call and released with the
//! matching `*_free`. Output parameters are written only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use nalgebra::DMatrix;
use strategem::cli::{run_suite, RunConfig, Suite};
use strategem::data::{gen_synthetic, load_csv, Dataset, SyntheticConfig};
use strategem::strategic::{
    bilevel_run, manipulation_step, BiLevelConfig, BiLevelHistory, CostMatrix, LabeledExample,
    LinearClassifier, ManipulationConfig, Policy, ScoreLink,
};
use strategem::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategemStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    Parse = 4,
    Io = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategemLink {
    Identity = 0,
    Logistic = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategemPolicy {
    Strategic = 0,
    NonStrategic = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategemSuite {
    Inner = 0,
    Outer = 1,
    Lemma = 2,
    Softmax = 3,
    All = 4,
}

/// A labelled dataset.
pub struct StrategemDataset(Dataset);

/// Manipulation step size, cost weight and cost matrix.
pub struct StrategemManipulation(ManipulationConfig);

/// Per-iteration record of one bi-level run.
pub struct StrategemHistory(BiLevelHistory);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

/// The message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn strategem_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub extern "C" fn strategem_clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(StrategemStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Shape { .. } => StrategemStatus::ShapeMismatch,
            Error::Parse { .. } | Error::Schema(_) => StrategemStatus::Parse,
            Error::Io { .. } => StrategemStatus::Io,
            _ => StrategemStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(StrategemStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(StrategemStatus::InvalidArgument, msg.into())
}

/// Runs `body`, converting errors and panics into a status code.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> StrategemStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => StrategemStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            StrategemStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

/// Draws `n` points in `d` dimensions from two isotropic Gaussians centred
/// at `±class_offset` per coordinate.
///
/// # Safety
/// `out` must be a valid pointer to write a handle into.
#[no_mangle]
pub unsafe extern "C" fn strategem_dataset_generate(
    d: usize,
    n: usize,
    class_offset: f64,
    class_scale: f64,
    positive_fraction: f64,
    seed: u64,
    out: *mut *mut StrategemDataset,
) -> StrategemStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = SyntheticConfig {
            positive_fraction,
            ..SyntheticConfig::symmetric(d, n, class_offset, class_scale, seed)
        };
        let ds = gen_synthetic(&cfg)?;
        put(out, Box::into_raw(Box::new(StrategemDataset(ds))), "out")
    })
}

/// Loads a headed CSV; a row is positive when its `label_column` cell equals
/// `positive_token`.
///
/// # Safety
/// String arguments must be null-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn strategem_dataset_load_csv(
    path: *const c_char,
    label_column: *const c_char,
    positive_token: *const c_char,
    out: *mut *mut StrategemDataset,
) -> StrategemStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let ds = load_csv(
            Path::new(string(path, "path")?),
            string(label_column, "label_column")?,
            string(positive_token, "positive_token")?,
        )?;
        put(out, Box::into_raw(Box::new(StrategemDataset(ds))), "out")
    })
}

/// # Safety
/// `ds` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn strategem_dataset_free(ds: *mut StrategemDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Number of rows, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn strategem_dataset_len(ds: *const StrategemDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.len())
}

/// Number of features, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn strategem_dataset_dim(ds: *const StrategemDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.dim())
}

/// Copies row `index` into `features` (length `dim`) and its label into
/// `label_out`.
///
/// # Safety
/// `features` must hold `dim` doubles; `label_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn strategem_dataset_row(
    ds: *const StrategemDataset,
    index: usize,
    features: *mut f64,
    dim: usize,
    label_out: *mut u8,
) -> StrategemStatus {
    guard(|| {
        let ds = &deref(ds, "dataset")?.0;
        let ex = ds
            .examples
            .get(index)
            .ok_or_else(|| invalid(format!("row {index} out of range for {} rows", ds.len())))?;
        if dim != ex.dim() {
            return Err(Failure(
                StrategemStatus::ShapeMismatch,
                format!("buffer holds {dim} features, row has {}", ex.dim()),
            ));
        }
        if label_out.is_null() {
            return Err(null("label_out"));
        }
        slice_mut(features, dim, "features")?.copy_from_slice(ex.features.as_slice());
        put(label_out, ex.label.as_u8(), "label_out")
    })
}

/// `cost` is a row-major `dim × dim` symmetric positive definite matrix, or
/// null for the identity.
///
/// # Safety
/// `cost` must be null or hold `dim * dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn strategem_manipulation_new(
    dim: usize,
    eta: f64,
    lambda: f64,
    cost: *const f64,
    out: *mut *mut StrategemManipulation,
) -> StrategemStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if dim == 0 {
            return Err(invalid("dim must be >= 1"));
        }
        let cost = if cost.is_null() {
            CostMatrix::identity(dim)
        } else {
            let entries = slice(cost, dim * dim, "cost")?;
            CostMatrix::new(DMatrix::from_row_slice(dim, dim, entries))?
        };
        let cfg = ManipulationConfig::new(eta, lambda, cost)?;
        put(out, Box::into_raw(Box::new(StrategemManipulation(cfg))), "out")
    })
}

/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn strategem_manipulation_free(m: *mut StrategemManipulation) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Best response of one agent with features `x` and label `y` to the rule
/// `weights`, written to `x_out`. Positive agents do not move.
///
/// # Safety
/// `weights`, `x` and `x_out` must each hold `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn strategem_manipulation_step(
    m: *const StrategemManipulation,
    weights: *const f64,
    x: *const f64,
    y: u8,
    dim: usize,
    x_out: *mut f64,
) -> StrategemStatus {
    guard(|| {
        let cfg = &deref(m, "manipulation")?.0;
        let clf = LinearClassifier::new(slice(weights, dim, "weights")?.to_vec(), 0.5)?;
        let ex = LabeledExample::from_parts(slice(x, dim, "x")?.to_vec(), y)?;
        let delta = manipulation_step(&ex, &clf, cfg)?;
        let moved = ex.features.shifted(delta.vector())?;
        slice_mut(x_out, dim, "x_out")?.copy_from_slice(moved.as_slice());
        Ok(())
    })
}

/// Runs the bi-level game for `iterations` rounds from seeded initial
/// weights with standard deviation `init_scale`. The classification
/// threshold is 0.5 for the identity link and 0 for the logistic link.
///
/// # Safety
/// All handles must be live; `out` must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn strategem_bilevel_run(
    train: *const StrategemDataset,
    test: *const StrategemDataset,
    m: *const StrategemManipulation,
    outer_eta: f64,
    iterations: usize,
    link: StrategemLink,
    init_scale: f64,
    policy: StrategemPolicy,
    seed: u64,
    out: *mut *mut StrategemHistory,
) -> StrategemStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let train = &deref(train, "train")?.0;
        let test = &deref(test, "test")?.0;
        let link = match link {
            StrategemLink::Identity => ScoreLink::Identity,
            StrategemLink::Logistic => ScoreLink::Logistic,
        };
        let mut cfg =
            BiLevelConfig::new(deref(m, "manipulation")?.0.clone(), outer_eta, iterations).with_link(link);
        cfg.init_scale = init_scale;
        let policy = match policy {
            StrategemPolicy::Strategic => Policy::Strategic,
            StrategemPolicy::NonStrategic => Policy::NonStrategic,
        };
        let history = bilevel_run(&train.examples, &test.examples, &cfg, policy, seed)?;
        put(out, Box::into_raw(Box::new(StrategemHistory(history))), "out")
    })
}

/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn strategem_history_free(h: *mut StrategemHistory) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Number of records, `iterations + 1`, or 0 for a null handle.
///
/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn strategem_history_len(h: *const StrategemHistory) -> usize {
    h.as_ref().map_or(0, |h| h.0.records.len())
}

/// Record `index`: test accuracy, summed training cross-entropy, and the
/// weights copied into `weights` (length `dim`). Null outputs are skipped.
///
/// # Safety
/// Non-null outputs must be writable; `weights` must hold `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn strategem_history_record(
    h: *const StrategemHistory,
    index: usize,
    accuracy: *mut f64,
    cross_entropy: *mut f64,
    weights: *mut f64,
    dim: usize,
) -> StrategemStatus {
    guard(|| {
        let records = &deref(h, "history")?.0.records;
        let r = records
            .get(index)
            .ok_or_else(|| invalid(format!("record {index} out of range for {} records", records.len())))?;
        if !weights.is_null() {
            if dim != r.weights.len() {
                return Err(Failure(
                    StrategemStatus::ShapeMismatch,
                    format!("buffer holds {dim} weights, record has {}", r.weights.len()),
                ));
            }
            slice_mut(weights, dim, "weights")?.copy_from_slice(r.weights.as_slice());
        }
        if !accuracy.is_null() {
            accuracy.write(r.accuracy);
        }
        if !cross_entropy.is_null() {
            cross_entropy.write(r.cross_entropy);
        }
        Ok(())
    })
}

/// Runs a verification suite with default sizes and `seed`. `passed`
/// receives whether every report in the suite passed and `worst_error` the
/// largest deviation seen. With `tamper` set the suites must fail.
///
/// # Safety
/// `passed` and `worst_error` must be writable.
#[no_mangle]
pub unsafe extern "C" fn strategem_verify(
    suite: StrategemSuite,
    seed: u64,
    tamper: bool,
    passed: *mut bool,
    worst_error: *mut f64,
) -> StrategemStatus {
    guard(|| {
        if passed.is_null() || worst_error.is_null() {
            return Err(null("output pointer"));
        }
        let cfg = RunConfig { seed, tamper, ..RunConfig::default() };
        cfg.validate()?;
        let suite = match suite {
            StrategemSuite::Inner => Suite::Inner,
            StrategemSuite::Outer => Suite::Outer,
            StrategemSuite::Lemma => Suite::Lemma,
            StrategemSuite::Softmax => Suite::Softmax,
            StrategemSuite::All => Suite::All,
        };
        let reports = run_suite(suite, &cfg)?;
        let worst = reports.iter().map(|r| r.gap_identity_error.unwrap_or(r.max_abs)).fold(0.0, f64::max);
        passed.write(reports.iter().all(|r| r.pass));
        worst_error.write(worst);
        Ok(())
    })
}
