//! C ABI over the `coalesce` library.
//!
//! Every fallible entry point returns a [`CoalesceStatus`]; results travel
//! through out-pointers. On failure the thread-local message returned by
//! [`coalesce_last_error_message`] describes the cause. Objects cross the
//! boundary as opaque handles that the caller releases with the matching
//! `*_free` function, and strings allocated here are released with
//! [`coalesce_string_free`]. Panics are caught and reported as
//! [`CoalesceStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use coalesce::experiments::{run_experiment, run_experiment_with_threads, ExperimentConfig, ExperimentResult};
use coalesce::flow::simulate_point_measures;
use coalesce::kernels::q_density;
use coalesce::{Error, KernelContext, PeriodicFunction, PointMeasure, SimConfig};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoalesceStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Domain = 3,
    Config = 4,
    Numeric = 5,
    Parse = 6,
    Io = 7,
    Internal = 8,
    Panic = 9,
}

/// Kernel evaluator at a fixed time.
pub struct CoalesceKernel(KernelContext);

/// A 1-periodic test function.
pub struct CoalesceFunction(PeriodicFunction);

/// A locally finite point measure.
pub struct CoalesceMeasure(PointMeasure);

/// A finished experiment with its per-replica table and checks.
pub struct CoalesceExperiment(ExperimentResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure {
    status: CoalesceStatus,
    message: String,
}

impl Failure {
    fn new(status: CoalesceStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Domain(_) | Error::Window(_) | Error::Size(_) | Error::UnsupportedOrder(_) => CoalesceStatus::Domain,
            Error::Config(_) => CoalesceStatus::Config,
            Error::Truncation { .. }
            | Error::NumericalConsistency(_)
            | Error::Numeric(_)
            | Error::BasisResolution { .. }
            | Error::KernelConsistency(_) => CoalesceStatus::Numeric,
            Error::Parse(_) => CoalesceStatus::Parse,
            Error::Io(_) => CoalesceStatus::Io,
            Error::Internal(_) => CoalesceStatus::Internal,
        };
        Self::new(status, e.to_string())
    }
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

/// Runs `f`, translating errors and panics into a status code.
fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> CoalesceStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CoalesceStatus::Ok,
        Ok(Err(fail)) => {
            set_last_error(&fail.message);
            fail.status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            CoalesceStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure::new(CoalesceStatus::NullPointer, format!("{what} is null"))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn in_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn in_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure::new(CoalesceStatus::InvalidUtf8, format!("{what}: {e}")))
}

fn to_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure::new(CoalesceStatus::Internal, "string contains a NUL byte"))
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn coalesce_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null if none.
///
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn coalesce_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn coalesce_status_name(status: CoalesceStatus) -> *const c_char {
    let s: &'static str = match status {
        CoalesceStatus::Ok => "ok\0",
        CoalesceStatus::NullPointer => "null pointer\0",
        CoalesceStatus::InvalidUtf8 => "invalid utf-8\0",
        CoalesceStatus::Domain => "domain error\0",
        CoalesceStatus::Config => "config error\0",
        CoalesceStatus::Numeric => "numeric error\0",
        CoalesceStatus::Parse => "parse error\0",
        CoalesceStatus::Io => "io error\0",
        CoalesceStatus::Internal => "internal error\0",
        CoalesceStatus::Panic => "panic\0",
    };
    s.as_ptr().cast()
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be null or a pointer obtained from this library that has not
/// been freed.
#[no_mangle]
pub unsafe extern "C" fn coalesce_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Creates a kernel evaluator at time `t > 0`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn coalesce_kernel_new(t: f64, out: *mut *mut CoalesceKernel) -> CoalesceStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = boxed(CoalesceKernel(KernelContext::new(t)?));
        Ok(())
    })
}

/// # Safety
/// `k` must be null or a handle from [`coalesce_kernel_new`].
#[no_mangle]
pub unsafe extern "C" fn coalesce_kernel_free(k: *mut CoalesceKernel) {
    free(k)
}

/// Intensity `1/sqrt(pi t)`.
///
/// # Safety
/// `k` must be a live kernel handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn coalesce_kernel_rho1(k: *const CoalesceKernel, out: *mut f64) -> CoalesceStatus {
    guard(|| {
        *out_ref(out, "out")? = in_ref(k, "kernel")?.0.rho1();
        Ok(())
    })
}

/// Pair density at separation `z`.
///
/// # Safety
/// `k` must be a live kernel handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn coalesce_kernel_rho2(k: *const CoalesceKernel, z: f64, out: *mut f64) -> CoalesceStatus {
    guard(|| {
        *out_ref(out, "out")? = in_ref(k, "kernel")?.0.rho2(0.0, z);
        Ok(())
    })
}

/// Pair correlation `rho2(z) - 1/(pi t)`.
///
/// # Safety
/// `k` must be a live kernel handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn coalesce_kernel_g(k: *const CoalesceKernel, z: f64, out: *mut f64) -> CoalesceStatus {
    guard(|| {
        *out_ref(out, "out")? = in_ref(k, "kernel")?.0.g(z);
        Ok(())
    })
}

/// Symmetrized lattice kernel at `(u, v)`.
///
/// # Safety
/// `k` must be a live kernel handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn coalesce_kernel_g_sym(
    k: *const CoalesceKernel,
    u: f64,
    v: f64,
    out: *mut f64,
) -> CoalesceStatus {
    guard(|| {
        *out_ref(out, "out")? = in_ref(k, "kernel")?.0.g_sym(u, v);
        Ok(())
    })
}

/// Limiting variance of `X_t^n(f)`.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn coalesce_kernel_sigma2(
    k: *const CoalesceKernel,
    f: *const CoalesceFunction,
    out: *mut f64,
) -> CoalesceStatus {
    guard(|| {
        let v = in_ref(k, "kernel")?.0.sigma2(&in_ref(f, "function")?.0)?;
        *out_ref(out, "out")? = v;
        Ok(())
    })
}

/// Limiting covariance of `X_t^n(f)` and `X_t^n(h)`.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn coalesce_kernel_cov(
    k: *const CoalesceKernel,
    f: *const CoalesceFunction,
    h: *const CoalesceFunction,
    out: *mut f64,
) -> CoalesceStatus {
    guard(|| {
        let v = in_ref(k, "kernel")?
            .0
            .cov_zeta(&in_ref(f, "f")?.0, &in_ref(h, "h")?.0)?;
        *out_ref(out, "out")? = v;
        Ok(())
    })
}

/// Closed-form mixing bound at distance `h > 0`.
///
/// # Safety
/// `k` must be a live kernel handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn coalesce_kernel_mixing_bound(
    k: *const CoalesceKernel,
    h: f64,
    out: *mut f64,
) -> CoalesceStatus {
    guard(|| {
        let v = in_ref(k, "kernel")?.0.mixing_bound(h)?.closed_form;
        *out_ref(out, "out")? = v;
        Ok(())
    })
}

/// Density at `u` of the common position of paths started at `a <= b`
/// that have met by elapsed time `s`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn coalesce_q_density(s: f64, a: f64, b: f64, u: f64, out: *mut f64) -> CoalesceStatus {
    guard(|| {
        let v = q_density(s, a, b, u)?;
        *out_ref(out, "out")? = v;
        Ok(())
    })
}

/// Parses a function such as `cos(1)`, `hatwave(0.1)` or `2*haar(1,0)`.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn coalesce_function_parse(
    text: *const c_char,
    out: *mut *mut CoalesceFunction,
) -> CoalesceStatus {
    guard(|| {
        let f: PeriodicFunction = in_str(text, "text")?.parse()?;
        *out_ref(out, "out")? = boxed(CoalesceFunction(f));
        Ok(())
    })
}

/// # Safety
/// `f` must be a live function handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn coalesce_function_eval(f: *const CoalesceFunction, x: f64, out: *mut f64) -> CoalesceStatus {
    guard(|| {
        *out_ref(out, "out")? = in_ref(f, "function")?.0.eval(x);
        Ok(())
    })
}

/// # Safety
/// `f` must be null or a handle from [`coalesce_function_parse`].
#[no_mangle]
pub unsafe extern "C" fn coalesce_function_free(f: *mut CoalesceFunction) {
    free(f)
}

/// Builds a measure from `len` strictly increasing atoms inside `[lo, hi]`.
///
/// # Safety
/// `atoms` must point to `len` readable doubles (or be null when `len` is
/// zero) and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn coalesce_measure_new(
    atoms: *const f64,
    len: usize,
    lo: f64,
    hi: f64,
    out: *mut *mut CoalesceMeasure,
) -> CoalesceStatus {
    guard(|| {
        let pts = if len == 0 {
            Vec::new()
        } else {
            if atoms.is_null() {
                return Err(null("atoms"));
            }
            std::slice::from_raw_parts(atoms, len).to_vec()
        };
        let m = PointMeasure::new(pts, (lo, hi))?;
        *out_ref(out, "out")? = boxed(CoalesceMeasure(m));
        Ok(())
    })
}

/// Simulates replica `replica` of the flow under `seed` and returns the
/// atoms of `N_t` in `[lo, hi]`, using the default grid.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn coalesce_measure_simulate(
    lo: f64,
    hi: f64,
    t: f64,
    seed: u64,
    replica: u32,
    out: *mut *mut CoalesceMeasure,
) -> CoalesceStatus {
    guard(|| {
        let cfg = SimConfig::new((lo, hi), vec![t], seed);
        cfg.validate()?;
        let m = simulate_point_measures(&cfg, replica)?
            .pop()
            .ok_or_else(|| Failure::new(CoalesceStatus::Internal, "no checkpoint produced"))?;
        *out_ref(out, "out")? = boxed(CoalesceMeasure(m));
        Ok(())
    })
}

/// # Safety
/// `m` must be a live measure handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn coalesce_measure_len(m: *const CoalesceMeasure, out: *mut usize) -> CoalesceStatus {
    guard(|| {
        *out_ref(out, "out")? = in_ref(m, "measure")?.0.len();
        Ok(())
    })
}

/// Copies up to `cap` atoms into `buf` and stores the total count in
/// `total`.
///
/// # Safety
/// `buf` must have room for `cap` doubles (it may be null when `cap` is 0)
/// and `total` must be writable.
#[no_mangle]
pub unsafe extern "C" fn coalesce_measure_atoms(
    m: *const CoalesceMeasure,
    buf: *mut f64,
    cap: usize,
    total: *mut usize,
) -> CoalesceStatus {
    guard(|| {
        let atoms = in_ref(m, "measure")?.0.atoms();
        let n = atoms.len().min(cap);
        if n > 0 {
            if buf.is_null() {
                return Err(null("buf"));
            }
            std::slice::from_raw_parts_mut(buf, n).copy_from_slice(&atoms[..n]);
        }
        *out_ref(total, "total")? = atoms.len();
        Ok(())
    })
}

/// `X_t^n(f)` for the measure, using the kernel's time for the centering.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn coalesce_measure_clt_statistic(
    m: *const CoalesceMeasure,
    f: *const CoalesceFunction,
    n: usize,
    k: *const CoalesceKernel,
    out: *mut f64,
) -> CoalesceStatus {
    guard(|| {
        let v = in_ref(m, "measure")?
            .0
            .clt_statistic(&in_ref(f, "function")?.0, n, &in_ref(k, "kernel")?.0)?;
        *out_ref(out, "out")? = v;
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a measure handle from this library.
#[no_mangle]
pub unsafe extern "C" fn coalesce_measure_free(m: *mut CoalesceMeasure) {
    free(m)
}

/// Runs an experiment from its JSON config. `threads == 0` uses the
/// default pool. A completed run returns `Ok` even when checks fail; query
/// [`coalesce_experiment_passed`].
///
/// # Safety
/// `config_json` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn coalesce_experiment_run(
    config_json: *const c_char,
    threads: u32,
    out: *mut *mut CoalesceExperiment,
) -> CoalesceStatus {
    guard(|| {
        let cfg = ExperimentConfig::from_json(in_str(config_json, "config_json")?)?;
        let out = out_ref(out, "out")?;
        let result = if threads == 0 {
            run_experiment(&cfg)?
        } else {
            run_experiment_with_threads(&cfg, threads as usize)?
        };
        *out = boxed(CoalesceExperiment(result));
        Ok(())
    })
}

/// # Safety
/// `e` must be a live experiment handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn coalesce_experiment_passed(e: *const CoalesceExperiment, out: *mut bool) -> CoalesceStatus {
    guard(|| {
        *out_ref(out, "out")? = in_ref(e, "experiment")?.0.passed();
        Ok(())
    })
}

/// Summary, predictions and checks as JSON; free with
/// [`coalesce_string_free`].
///
/// # Safety
/// `e` must be a live experiment handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn coalesce_experiment_summary_json(
    e: *const CoalesceExperiment,
    out: *mut *mut c_char,
) -> CoalesceStatus {
    guard(|| {
        let text = serde_json::to_string(&in_ref(e, "experiment")?.0)
            .map_err(|err| Failure::new(CoalesceStatus::Internal, err.to_string()))?;
        *out_ref(out, "out")? = to_c_string(text)?;
        Ok(())
    })
}

/// Per-replica table as CSV; free with [`coalesce_string_free`].
///
/// # Safety
/// `e` must be a live experiment handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn coalesce_experiment_replicas_csv(
    e: *const CoalesceExperiment,
    out: *mut *mut c_char,
) -> CoalesceStatus {
    guard(|| {
        let text = in_ref(e, "experiment")?.0.replicas_csv()?;
        *out_ref(out, "out")? = to_c_string(text)?;
        Ok(())
    })
}

/// # Safety
/// `e` must be null or a handle from [`coalesce_experiment_run`].
#[no_mangle]
pub unsafe extern "C" fn coalesce_experiment_free(e: *mut CoalesceExperiment) {
    free(e)
}
