//! C ABI over the byzopt simulator.
//!
//! Every fallible function returns a [`ByzoptStatus`]; on failure the
//! message is available from [`byzopt_last_error`] on the same thread.
//! Trajectories are opaque handles released with
//! [`byzopt_trajectory_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use byzopt::aggregators::{AggregatorSpec, Rule};
use byzopt::engine::{run_trajectory, RunConfig, Trajectory};
use byzopt::{Error, Vector};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ByzoptStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ByzoptRule {
    Mean = 0,
    Krum = 1,
    GeometricMedian = 2,
    CoordinateMedian = 3,
    TrimmedMean = 4,
}

impl From<ByzoptRule> for Rule {
    fn from(r: ByzoptRule) -> Rule {
        match r {
            ByzoptRule::Mean => Rule::Mean,
            ByzoptRule::Krum => Rule::Krum,
            ByzoptRule::GeometricMedian => Rule::Gm,
            ByzoptRule::CoordinateMedian => Rule::Cwmed,
            ByzoptRule::TrimmedMean => Rule::TrimmedMean,
        }
    }
}

/// One logged iteration.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ByzoptRecord {
    pub k: usize,
    pub grad_norm: f64,
    pub f_value: f64,
    pub agg_error: f64,
    pub step_size: f64,
    pub mean_local_grad_norm: f64,
}

/// Result of a simulation run.
pub struct ByzoptTrajectory {
    inner: Trajectory,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(status: ByzoptStatus, msg: impl Into<String>) -> ByzoptStatus {
    set_error(msg.into());
    status
}

fn from_error(e: Error) -> ByzoptStatus {
    let status = match e {
        Error::Io(_) => ByzoptStatus::Io,
        _ => ByzoptStatus::Config,
    };
    fail(status, e.to_string())
}

fn guard(body: impl FnOnce() -> ByzoptStatus) -> ByzoptStatus {
    catch_unwind(AssertUnwindSafe(body))
        .unwrap_or_else(|_| fail(ByzoptStatus::Panic, "internal panic"))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn byzopt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Runs the JSON run configuration `config_json` and stores a new handle
/// in `*out`. A diverged run still succeeds; see
/// [`byzopt_trajectory_diverged_at`].
///
/// # Safety
/// `config_json` must be a valid NUL-terminated string and `out` a valid
/// pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn byzopt_run_json(
    config_json: *const c_char,
    out: *mut *mut ByzoptTrajectory,
) -> ByzoptStatus {
    guard(|| {
        if config_json.is_null() || out.is_null() {
            return fail(ByzoptStatus::NullPointer, "null argument");
        }
        // SAFETY: checked non-null; caller guarantees NUL termination.
        let text = match unsafe { CStr::from_ptr(config_json) }.to_str() {
            Ok(t) => t,
            Err(_) => return fail(ByzoptStatus::InvalidArgument, "config is not UTF-8"),
        };
        let config: RunConfig = match serde_json::from_str(text) {
            Ok(c) => c,
            Err(e) => return from_error(e.into()),
        };
        match run_trajectory(&config) {
            Ok(inner) => {
                // SAFETY: checked non-null; caller guarantees it is writable.
                unsafe { *out = Box::into_raw(Box::new(ByzoptTrajectory { inner })) };
                ByzoptStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Number of logged records, or 0 for a null handle.
///
/// # Safety
/// `trajectory` must be null or a live handle from [`byzopt_run_json`].
#[no_mangle]
pub unsafe extern "C" fn byzopt_trajectory_len(trajectory: *const ByzoptTrajectory) -> usize {
    // SAFETY: caller guarantees a live handle or null.
    unsafe { trajectory.as_ref() }.map_or(0, |t| t.inner.records.len())
}

/// Copies record `index` into `*out`.
///
/// # Safety
/// `trajectory` must be a live handle and `out` a valid writable pointer.
#[no_mangle]
pub unsafe extern "C" fn byzopt_trajectory_record(
    trajectory: *const ByzoptTrajectory,
    index: usize,
    out: *mut ByzoptRecord,
) -> ByzoptStatus {
    guard(|| {
        // SAFETY: caller guarantees a live handle or null.
        let Some(t) = (unsafe { trajectory.as_ref() }) else {
            return fail(ByzoptStatus::NullPointer, "null trajectory");
        };
        if out.is_null() {
            return fail(ByzoptStatus::NullPointer, "null output");
        }
        let Some(r) = t.inner.records.get(index) else {
            return fail(
                ByzoptStatus::InvalidArgument,
                format!(
                    "record {index} out of range ({} records)",
                    t.inner.records.len()
                ),
            );
        };
        let record = ByzoptRecord {
            k: r.k,
            grad_norm: r.grad_norm,
            f_value: r.f_value,
            agg_error: r.agg_error,
            step_size: r.step_size,
            mean_local_grad_norm: r.mean_local_grad_norm,
        };
        // SAFETY: checked non-null; caller guarantees it is writable.
        unsafe { *out = record };
        ByzoptStatus::Ok
    })
}

/// Iteration at which the run diverged, or -1 if it did not (or the handle is null).
///
/// # Safety
/// `trajectory` must be null or a live handle from [`byzopt_run_json`].
#[no_mangle]
pub unsafe extern "C" fn byzopt_trajectory_diverged_at(trajectory: *const ByzoptTrajectory) -> i64 {
    // SAFETY: caller guarantees a live handle or null.
    unsafe { trajectory.as_ref() }
        .and_then(|t| t.inner.divergence.as_ref())
        .map_or(-1, |d| d.iteration as i64)
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `trajectory` must be null or a handle from [`byzopt_run_json`] that has
/// not been freed.
#[no_mangle]
pub unsafe extern "C" fn byzopt_trajectory_free(trajectory: *mut ByzoptTrajectory) {
    if !trajectory.is_null() {
        // SAFETY: caller guarantees the pointer came from Box::into_raw here.
        drop(unsafe { Box::from_raw(trajectory) });
    }
}

/// Aggregates `n` vectors of length `dim`, stored row-major in `inputs`,
/// into `out` (length `dim`), tolerating `byzantine` faulty rows.
///
/// # Safety
/// `inputs` must point to `n * dim` doubles and `out` to `dim` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn byzopt_aggregate(
    rule: ByzoptRule,
    nnm: bool,
    n: usize,
    byzantine: usize,
    dim: usize,
    inputs: *const f64,
    out: *mut f64,
) -> ByzoptStatus {
    guard(|| {
        if inputs.is_null() || out.is_null() {
            return fail(ByzoptStatus::NullPointer, "null argument");
        }
        let Some(len) = n.checked_mul(dim).filter(|&l| l > 0) else {
            return fail(ByzoptStatus::InvalidArgument, "n and dim must be positive");
        };
        // SAFETY: checked non-null; caller guarantees `n * dim` readable doubles.
        let flat = unsafe { std::slice::from_raw_parts(inputs, len) };
        let vectors: Vec<Vector> = flat.chunks(dim).map(|c| Vector::new(c.to_vec())).collect();
        let spec = AggregatorSpec::new(rule.into(), n, byzantine).with_nnm(nnm);
        match spec.aggregate(&vectors) {
            Ok(v) => {
                // SAFETY: checked non-null; caller guarantees `dim` writable doubles.
                unsafe { std::slice::from_raw_parts_mut(out, dim) }.copy_from_slice(v.as_slice());
                ByzoptStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}
