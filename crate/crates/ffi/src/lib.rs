//! C ABI for the mtsparse library: opaque dataset/fit handles, plain-C
//! option structs, and integer status codes. The generated header lives in
//! `include/mtsparse.h`.
//!
//! Every function is null-safe; failures set a thread-local message
//! retrievable with `mts_last_error_message`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use mtsparse::group::{fit_group, GroupOptions};
use mtsparse::lassoes::{fit_lassoes, LassoesOptions, NormMode};
use mtsparse::model::MultiTaskDataset;
use mtsparse::ring::{fit_ring, RingOptions};
use mtsparse::simgen::{gen_decay, SimConfig};

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MtsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Convergence = 4,
    Internal = 5,
}

/// Opaque dataset handle.
pub struct MtsDataset {
    inner: MultiTaskDataset,
}

/// Opaque fit handle: coefficients plus the serialized report.
pub struct MtsFit {
    rows: usize,
    cols: usize,
    /// Row-major coefficient values.
    coefficients: Vec<f64>,
    objective: f64,
    converged: bool,
    report_json: CString,
}

/// Options for the powered-l1 estimator.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MtsLassoesOptions {
    pub alpha: f64,
    pub lambda: f64,
    /// Nonzero penalizes `1 + ||b||_1` (the augmented norm); zero the plain norm.
    pub augmented_norm: u8,
    pub max_outer: usize,
    pub max_inner: usize,
    pub tol: f64,
}

/// Options for the row-wise group estimator.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MtsGroupOptions {
    pub lambda: f64,
    pub max_sweeps: usize,
    pub tol: f64,
}

/// Options for the nuclear-norm estimator.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MtsRingOptions {
    pub lambda: f64,
    pub gamma: f64,
    pub zero_tol: f64,
    /// Nonzero enables the multiplicative lambda rule toward `target_rank`.
    pub has_target_rank: u8,
    pub target_rank: usize,
    pub lambda_factor: f64,
    pub svd_refresh_every: usize,
    pub init_scale: f64,
    pub max_passes: usize,
    pub tol: f64,
    pub seed: u64,
}

fn lassoes_options(o: &MtsLassoesOptions) -> LassoesOptions {
    LassoesOptions {
        alpha: o.alpha,
        lambda: o.lambda,
        norm_mode: if o.augmented_norm != 0 {
            NormMode::Augmented
        } else {
            NormMode::Plain
        },
        max_outer: o.max_outer,
        max_inner: o.max_inner,
        tol: o.tol,
    }
}

fn group_options(o: &MtsGroupOptions) -> GroupOptions {
    GroupOptions {
        lambda: o.lambda,
        max_sweeps: o.max_sweeps,
        tol: o.tol,
    }
}

fn ring_options(o: &MtsRingOptions) -> RingOptions {
    RingOptions {
        lambda: o.lambda,
        gamma: o.gamma,
        zero_tol: o.zero_tol,
        target_rank: (o.has_target_rank != 0).then_some(o.target_rank),
        lambda_factor: o.lambda_factor,
        svd_refresh_every: o.svd_refresh_every,
        init_scale: o.init_scale,
        max_passes: o.max_passes,
        tol: o.tol,
        seed: o.seed,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mts_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copies the last error message into `buf` (truncated to `len - 1` bytes,
/// always NUL-terminated). Returns the full message length.
///
/// # Safety
/// `buf` must point to at least `len` writable bytes, or be null (in which
/// case only the length is returned).
#[no_mangle]
pub unsafe extern "C" fn mts_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let msg = slot.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Default option values matching the library defaults.
#[no_mangle]
pub extern "C" fn mts_lassoes_options_default() -> MtsLassoesOptions {
    let d = LassoesOptions::default();
    MtsLassoesOptions {
        alpha: d.alpha,
        lambda: d.lambda,
        augmented_norm: matches!(d.norm_mode, NormMode::Augmented) as u8,
        max_outer: d.max_outer,
        max_inner: d.max_inner,
        tol: d.tol,
    }
}

#[no_mangle]
pub extern "C" fn mts_group_options_default() -> MtsGroupOptions {
    let d = GroupOptions::default();
    MtsGroupOptions {
        lambda: d.lambda,
        max_sweeps: d.max_sweeps,
        tol: d.tol,
    }
}

#[no_mangle]
pub extern "C" fn mts_ring_options_default() -> MtsRingOptions {
    let d = RingOptions::default();
    MtsRingOptions {
        lambda: d.lambda,
        gamma: d.gamma,
        zero_tol: d.zero_tol,
        has_target_rank: 0,
        target_rank: 0,
        lambda_factor: d.lambda_factor,
        svd_refresh_every: d.svd_refresh_every,
        init_scale: d.init_scale,
        max_passes: d.max_passes,
        tol: d.tol,
        seed: d.seed,
    }
}

/// Reads a dataset from a manifest path.
///
/// # Safety
/// `manifest_path` must be a NUL-terminated string, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mts_dataset_read(
    manifest_path: *const c_char,
    out: *mut *mut MtsDataset,
) -> MtsStatus {
    if manifest_path.is_null() || out.is_null() {
        set_error("null pointer");
        return MtsStatus::NullPointer;
    }
    let path = match CStr::from_ptr(manifest_path).to_str() {
        Ok(s) => s,
        Err(_) => {
            set_error("manifest path is not valid UTF-8");
            return MtsStatus::InvalidArgument;
        }
    };
    match mtsparse::io::read_dataset(Path::new(path)) {
        Ok(ds) => {
            *out = Box::into_raw(Box::new(MtsDataset { inner: ds }));
            MtsStatus::Ok
        }
        Err(e) => {
            set_error(&e.0);
            *out = ptr::null_mut();
            MtsStatus::Io
        }
    }
}

/// Generates the decaying-variance simulation design.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mts_dataset_generate_decay(
    n: usize,
    p: usize,
    m: usize,
    noise_sigma: f64,
    seed: u64,
    out: *mut *mut MtsDataset,
) -> MtsStatus {
    if out.is_null() {
        set_error("null pointer");
        return MtsStatus::NullPointer;
    }
    let config = SimConfig {
        n,
        p,
        m,
        noise_sigma,
        seed,
        ..Default::default()
    };
    match gen_decay(&config) {
        Ok((ds, _truth)) => {
            *out = Box::into_raw(Box::new(MtsDataset { inner: ds }));
            MtsStatus::Ok
        }
        Err(e) => {
            set_error(&e.to_string());
            *out = ptr::null_mut();
            MtsStatus::InvalidArgument
        }
    }
}

/// # Safety
/// `ds` must be a handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn mts_dataset_tasks(ds: *const MtsDataset) -> usize {
    if ds.is_null() {
        return 0;
    }
    (*ds).inner.n_tasks()
}

/// # Safety
/// `ds` must be a handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn mts_dataset_features(ds: *const MtsDataset) -> usize {
    if ds.is_null() {
        return 0;
    }
    (*ds).inner.n_features()
}

/// # Safety
/// `ds` must be a handle from this library (or null, a no-op) and must not
/// be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mts_dataset_free(ds: *mut MtsDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

fn finish_fit(
    out: *mut *mut MtsFit,
    rows: usize,
    cols: usize,
    b: &mtsparse::model::CoefMatrix,
    objective: f64,
    converged: bool,
    report: serde_json::Value,
) -> MtsStatus {
    let mut coefficients = Vec::with_capacity(rows * cols);
    for l in 0..rows {
        for i in 0..cols {
            coefficients.push(b.values[(l, i)]);
        }
    }
    let report_json = CString::new(report.to_string().replace('\0', " ")).unwrap_or_default();
    let fit = MtsFit {
        rows,
        cols,
        coefficients,
        objective,
        converged,
        report_json,
    };
    unsafe {
        *out = Box::into_raw(Box::new(fit));
    }
    if converged {
        MtsStatus::Ok
    } else {
        set_error("iteration budget exhausted; best iterate returned");
        MtsStatus::Convergence
    }
}

/// Fits the powered-l1 estimator. On `Convergence` the handle is still valid
/// (flagged best iterate).
///
/// # Safety
/// `ds`, `opts`, and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn mts_fit_lassoes(
    ds: *const MtsDataset,
    opts: *const MtsLassoesOptions,
    out: *mut *mut MtsFit,
) -> MtsStatus {
    if ds.is_null() || opts.is_null() || out.is_null() {
        set_error("null pointer");
        return MtsStatus::NullPointer;
    }
    *out = ptr::null_mut();
    let dataset = &(*ds).inner;
    let options = lassoes_options(&*opts);
    match catch_unwind(AssertUnwindSafe(|| fit_lassoes(dataset, &options))) {
        Ok(Ok((b, report))) => finish_fit(
            out,
            dataset.n_features(),
            dataset.n_tasks(),
            &b,
            report.final_objective(),
            report.converged(),
            serde_json::to_value(&report).unwrap_or_default(),
        ),
        Ok(Err(e)) => {
            set_error(&e.to_string());
            MtsStatus::InvalidArgument
        }
        Err(_) => {
            set_error("internal panic");
            MtsStatus::Internal
        }
    }
}

/// Fits the row-wise group estimator.
///
/// # Safety
/// `ds`, `opts`, and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn mts_fit_group(
    ds: *const MtsDataset,
    opts: *const MtsGroupOptions,
    out: *mut *mut MtsFit,
) -> MtsStatus {
    if ds.is_null() || opts.is_null() || out.is_null() {
        set_error("null pointer");
        return MtsStatus::NullPointer;
    }
    *out = ptr::null_mut();
    let dataset = &(*ds).inner;
    let options = group_options(&*opts);
    match catch_unwind(AssertUnwindSafe(|| fit_group(dataset, &options))) {
        Ok(Ok((b, report))) => finish_fit(
            out,
            dataset.n_features(),
            dataset.n_tasks(),
            &b,
            report.final_objective(),
            report.converged(),
            serde_json::to_value(&report).unwrap_or_default(),
        ),
        Ok(Err(e)) => {
            set_error(&e.to_string());
            MtsStatus::InvalidArgument
        }
        Err(_) => {
            set_error("internal panic");
            MtsStatus::Internal
        }
    }
}

/// Fits the nuclear-norm estimator.
///
/// # Safety
/// `ds`, `opts`, and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn mts_fit_ring(
    ds: *const MtsDataset,
    opts: *const MtsRingOptions,
    out: *mut *mut MtsFit,
) -> MtsStatus {
    if ds.is_null() || opts.is_null() || out.is_null() {
        set_error("null pointer");
        return MtsStatus::NullPointer;
    }
    *out = ptr::null_mut();
    let dataset = &(*ds).inner;
    let options = ring_options(&*opts);
    match catch_unwind(AssertUnwindSafe(|| fit_ring(dataset, &options))) {
        Ok(Ok((b, report))) => {
            let objective = report.objective_trace.last().copied().unwrap_or(f64::NAN);
            let converged =
                !matches!(report.termination, mtsparse::report::Termination::IterationLimit);
            finish_fit(
                out,
                dataset.n_features(),
                dataset.n_tasks(),
                &b,
                objective,
                converged,
                serde_json::to_value(&report).unwrap_or_default(),
            )
        }
        Ok(Err(e)) => {
            set_error(&e.to_string());
            MtsStatus::InvalidArgument
        }
        Err(_) => {
            set_error("internal panic");
            MtsStatus::Internal
        }
    }
}

/// # Safety
/// `fit` must be a handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn mts_fit_rows(fit: *const MtsFit) -> usize {
    if fit.is_null() {
        return 0;
    }
    (*fit).rows
}

/// # Safety
/// `fit` must be a handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn mts_fit_cols(fit: *const MtsFit) -> usize {
    if fit.is_null() {
        return 0;
    }
    (*fit).cols
}

/// Final objective value of the returned iterate.
///
/// # Safety
/// `fit` must be a handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn mts_fit_objective(fit: *const MtsFit) -> f64 {
    if fit.is_null() {
        return f64::NAN;
    }
    (*fit).objective
}

/// # Safety
/// `fit` must be a handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn mts_fit_converged(fit: *const MtsFit) -> u8 {
    if fit.is_null() {
        return 0;
    }
    (*fit).converged as u8
}

/// Copies the row-major `rows x cols` coefficient matrix into `buf`.
///
/// # Safety
/// `buf` must point to at least `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn mts_fit_copy_coefficients(
    fit: *const MtsFit,
    buf: *mut f64,
    len: usize,
) -> MtsStatus {
    if fit.is_null() || buf.is_null() {
        set_error("null pointer");
        return MtsStatus::NullPointer;
    }
    let fit = &*fit;
    if len < fit.coefficients.len() {
        set_error("buffer too small");
        return MtsStatus::InvalidArgument;
    }
    ptr::copy_nonoverlapping(fit.coefficients.as_ptr(), buf, fit.coefficients.len());
    MtsStatus::Ok
}

/// Borrowed pointer to the fit report serialized as JSON; valid until the
/// fit handle is freed.
///
/// # Safety
/// `fit` must be a handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn mts_fit_report_json(fit: *const MtsFit) -> *const c_char {
    if fit.is_null() {
        return ptr::null();
    }
    (*fit).report_json.as_ptr()
}

/// # Safety
/// `fit` must be a handle from this library (or null, a no-op) and must not
/// be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mts_fit_free(fit: *mut MtsFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}
