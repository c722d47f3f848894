//! C ABI for the fastslow library.
//!
//! Every fallible function returns an [`FsStatus`]; on failure the message is
//! available from [`fs_last_error_message`] on the same thread. Objects are
//! opaque handles created by `*_new` and released by the matching `*_free`.
//!
//! Pointer arguments must be null or valid for the documented length; null
//! pointers are reported as `FS_STATUS_NULL_POINTER`, never dereferenced.

// The functions are the C entry points; pointer validity is the caller's contract.
#![allow(clippy::not_unsafe_ptr_arg_deref)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use fastslow::covariance::{green_kubo, ObservableSpec, Quality};
use fastslow::ensemble::{run_ensemble, EnsembleConfig, FastInitial, Model};
use fastslow::fast_map::{FastMap, MapKind};
use fastslow::func::Observable;
use fastslow::levy::StableLaw;
use fastslow::rng::stream;
use fastslow::sde::{cir_cdf, cir_exact_sample, cir_mean, CirParams};
use fastslow::slow::SlowSystem;
use fastslow::stats::{ks_one_sample, ks_two_sample};
use fastslow::Error;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Numerical = 4,
    TooManyFailures = 5,
    Panic = 6,
}

/// `FS_MAP_*` kinds for [`fs_fast_map_new`].
pub const FS_MAP_POMEAU_MANNEVILLE: i32 = 0;
pub const FS_MAP_MODIFIED_POMEAU_MANNEVILLE: i32 = 1;
pub const FS_MAP_DOUBLING: i32 = 2;

/// Opaque fast map.
pub struct FsFastMap(FastMap);

/// Opaque finished ensemble holding terminal values.
pub struct FsEnsemble {
    terminal: Vec<f64>,
    failures: usize,
    clamp_fraction: f64,
}

/// Limit-variance estimate.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct FsCovariance {
    pub sigma2: f64,
    pub f0_second_moment: f64,
    pub standard_error: f64,
    /// 1 when the autocovariance sum came out negative.
    pub negative_variance: i32,
}

/// `dX = sigma X^(1/2) dW + alpha (beta - X) dt`, `X(0) = xi`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FsCirParams {
    pub sigma2: f64,
    pub alpha: f64,
    pub beta: f64,
    pub xi: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> FsStatus {
    match e {
        Error::Domain { .. } | Error::TransformExit { .. } => FsStatus::Domain,
        Error::NonFinite { .. } => FsStatus::Numerical,
        Error::TooManyFailures { .. } => FsStatus::TooManyFailures,
        _ => FsStatus::InvalidArgument,
    }
}

fn fail(status: FsStatus, msg: impl Into<String>) -> FsStatus {
    set_error(msg.into());
    status
}

/// Runs `body`, converting errors and panics into status codes.
fn guard(body: impl FnOnce() -> Result<(), FsStatus>) -> FsStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => FsStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(FsStatus::Panic, "internal panic"),
    }
}

trait IntoStatus<T> {
    fn status(self) -> Result<T, FsStatus>;
}

impl<T> IntoStatus<T> for fastslow::Result<T> {
    fn status(self) -> Result<T, FsStatus> {
        self.map_err(|e| fail(status_of(&e), e.to_string()))
    }
}

fn non_null<'a, T>(p: *const T, what: &str) -> Result<&'a T, FsStatus> {
    // SAFETY: callers pass either null or a pointer obtained from this library.
    unsafe { p.as_ref() }.ok_or_else(|| fail(FsStatus::NullPointer, format!("{what} is null")))
}

fn out_slice<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], FsStatus> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(fail(FsStatus::NullPointer, format!("{what} is null")));
    }
    // SAFETY: the caller guarantees `p` points to `len` writable doubles.
    Ok(unsafe { std::slice::from_raw_parts_mut(p, len) })
}

fn in_slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], FsStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(FsStatus::NullPointer, format!("{what} is null")));
    }
    // SAFETY: the caller guarantees `p` points to `len` readable doubles.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

fn write_out<T>(p: *mut T, value: T, what: &str) -> Result<(), FsStatus> {
    if p.is_null() {
        return Err(fail(FsStatus::NullPointer, format!("{what} is null")));
    }
    // SAFETY: non-null and supplied by the caller for writing.
    unsafe { p.write(value) };
    Ok(())
}

fn cir(p: FsCirParams) -> Result<CirParams, FsStatus> {
    CirParams::new(p.sigma2, p.alpha, p.beta, p.xi).status()
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len - 1` bytes) and returns the full message length.
#[no_mangle]
pub extern "C" fn fs_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            // SAFETY: `buf` has room for `len` bytes.
            unsafe {
                ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
                *buf.add(n) = 0;
            }
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a fast map; `gamma` is ignored for the doubling map.
#[no_mangle]
pub extern "C" fn fs_fast_map_new(kind: i32, gamma: f64, out: *mut *mut FsFastMap) -> FsStatus {
    guard(|| {
        let kind = match kind {
            FS_MAP_POMEAU_MANNEVILLE => MapKind::PomeauManneville,
            FS_MAP_MODIFIED_POMEAU_MANNEVILLE => MapKind::ModifiedPomeauManneville,
            FS_MAP_DOUBLING => MapKind::Doubling,
            k => {
                return Err(fail(
                    FsStatus::InvalidArgument,
                    format!("unknown map kind {k}"),
                ))
            }
        };
        let map = FastMap::new(kind, gamma).status()?;
        write_out(out, Box::into_raw(Box::new(FsFastMap(map))), "out")
    })
}

/// Releases a map; null is ignored.
#[no_mangle]
pub extern "C" fn fs_fast_map_free(map: *mut FsFastMap) {
    if !map.is_null() {
        // SAFETY: created by `fs_fast_map_new` and not freed before.
        drop(unsafe { Box::from_raw(map) });
    }
}

/// One application of the map.
#[no_mangle]
pub extern "C" fn fs_fast_map_step(map: *const FsFastMap, y: f64, out: *mut f64) -> FsStatus {
    guard(|| {
        let m = non_null(map, "map")?;
        write_out(out, m.0.step(y).status()?, "out")
    })
}

/// Writes `len` orbit points from `eta` after discarding `burn_in` iterates.
#[no_mangle]
pub extern "C" fn fs_fast_map_orbit(
    map: *const FsFastMap,
    eta: f64,
    burn_in: usize,
    out: *mut f64,
    len: usize,
) -> FsStatus {
    guard(|| {
        let m = non_null(map, "map")?;
        let buf = out_slice(out, len, "out")?;
        let mut t = m.0.trajectory(eta).status()?;
        t.skip_points(burn_in).status()?;
        for v in buf.iter_mut() {
            *v = t.next_point().status()?;
        }
        Ok(())
    })
}

/// Green-Kubo estimate for the centred identity observable on one orbit.
#[no_mangle]
pub extern "C" fn fs_green_kubo_identity(
    map: *const FsFastMap,
    eta: f64,
    length: usize,
    burn_in: usize,
    lag_cutoff: usize,
    out: *mut FsCovariance,
) -> FsStatus {
    guard(|| {
        let m = non_null(map, "map")?;
        let orbit = m.0.orbit(eta, length, burn_in).status()?;
        let e = green_kubo(
            &orbit,
            &ObservableSpec::centered(Observable::Identity),
            lag_cutoff,
        )
        .status()?;
        write_out(
            out,
            FsCovariance {
                sigma2: e.sigma2,
                f0_second_moment: e.f0_second_moment,
                standard_error: e.standard_error,
                negative_variance: (e.quality == Quality::NegativeVariance) as i32,
            },
            "out",
        )
    })
}

/// Runs a fast-slow ensemble. `system_json` is a JSON slow-system description,
/// e.g. `{"epsilon":0.2,"xi":1.0,"f0":{"kind":"identity"},"h":{...},"f":{...}}`.
/// Fast initial conditions are uniform with `burn_in` discarded iterates.
#[no_mangle]
pub extern "C" fn fs_map_ensemble_new(
    map: *const FsFastMap,
    system_json: *const c_char,
    realizations: usize,
    seed: u64,
    workers: usize,
    horizon: f64,
    grid_dt: f64,
    burn_in: usize,
    out: *mut *mut FsEnsemble,
) -> FsStatus {
    guard(|| {
        let m = non_null(map, "map")?;
        if system_json.is_null() {
            return Err(fail(FsStatus::NullPointer, "system_json is null"));
        }
        // SAFETY: non-null NUL-terminated string from the caller.
        let text = unsafe { CStr::from_ptr(system_json) }
            .to_str()
            .map_err(|e| fail(FsStatus::InvalidArgument, e.to_string()))?;
        let system: SlowSystem = serde_json::from_str(text)
            .map_err(|e| fail(FsStatus::InvalidArgument, e.to_string()))?;
        system.validate().status()?;
        let model = Model::FastSlow {
            system,
            map: m.0,
            initial: FastInitial::Uniform { burn_in },
        };
        finish_ensemble(model, realizations, seed, workers, horizon, grid_dt, out)
    })
}

/// Exact CIR ensemble at `horizon` (one exact transition per realization).
#[no_mangle]
pub extern "C" fn fs_cir_ensemble_new(
    params: FsCirParams,
    realizations: usize,
    seed: u64,
    workers: usize,
    horizon: f64,
    out: *mut *mut FsEnsemble,
) -> FsStatus {
    guard(|| {
        let model = Model::Cir {
            params: cir(params)?,
        };
        finish_ensemble(model, realizations, seed, workers, horizon, horizon, out)
    })
}

fn finish_ensemble(
    model: Model,
    realizations: usize,
    seed: u64,
    workers: usize,
    horizon: f64,
    grid_dt: f64,
    out: *mut *mut FsEnsemble,
) -> Result<(), FsStatus> {
    if out.is_null() {
        return Err(fail(FsStatus::NullPointer, "out is null"));
    }
    let cfg = EnsembleConfig {
        workers: workers.max(1),
        ..EnsembleConfig::new(model, realizations, seed, horizon, grid_dt)
    };
    let e = run_ensemble(&cfg).status()?;
    let handle = FsEnsemble {
        clamp_fraction: e.clamp_fraction(),
        failures: e.failures.len(),
        terminal: e.terminal,
    };
    write_out(out, Box::into_raw(Box::new(handle)), "out")
}

/// Releases an ensemble; null is ignored.
#[no_mangle]
pub extern "C" fn fs_ensemble_free(e: *mut FsEnsemble) {
    if !e.is_null() {
        // SAFETY: created by an `fs_*_ensemble_new` call and not freed before.
        drop(unsafe { Box::from_raw(e) });
    }
}

/// Number of successful realizations.
#[no_mangle]
pub extern "C" fn fs_ensemble_len(e: *const FsEnsemble) -> usize {
    // SAFETY: null or a live handle.
    unsafe { e.as_ref() }.map_or(0, |e| e.terminal.len())
}

/// Number of failed realizations.
#[no_mangle]
pub extern "C" fn fs_ensemble_failures(e: *const FsEnsemble) -> usize {
    // SAFETY: null or a live handle.
    unsafe { e.as_ref() }.map_or(0, |e| e.failures)
}

/// Fraction of realizations whose square-root coefficient was clamped.
#[no_mangle]
pub extern "C" fn fs_ensemble_clamp_fraction(e: *const FsEnsemble) -> f64 {
    // SAFETY: null or a live handle.
    unsafe { e.as_ref() }.map_or(f64::NAN, |e| e.clamp_fraction)
}

/// Copies terminal values (in realization order) into `out[0..len]`;
/// `len` must equal [`fs_ensemble_len`].
#[no_mangle]
pub extern "C" fn fs_ensemble_terminal(
    e: *const FsEnsemble,
    out: *mut f64,
    len: usize,
) -> FsStatus {
    guard(|| {
        let e = non_null(e, "ensemble")?;
        if len != e.terminal.len() {
            return Err(fail(
                FsStatus::InvalidArgument,
                format!(
                    "buffer holds {len} values, ensemble has {}",
                    e.terminal.len()
                ),
            ));
        }
        out_slice(out, len, "out")?.copy_from_slice(&e.terminal);
        Ok(())
    })
}

/// One-sample KS distance of the ensemble against the exact CIR law at `t`.
#[no_mangle]
pub extern "C" fn fs_ensemble_ks_cir(
    e: *const FsEnsemble,
    params: FsCirParams,
    t: f64,
    out: *mut f64,
) -> FsStatus {
    guard(|| {
        let e = non_null(e, "ensemble")?;
        let p = cir(params)?;
        write_out(
            out,
            ks_one_sample(&e.terminal, |x| cir_cdf(&p, t, x)).status()?,
            "out",
        )
    })
}

/// `E X(t)` of the CIR process; NaN for invalid parameters.
#[no_mangle]
pub extern "C" fn fs_cir_mean(params: FsCirParams, t: f64) -> f64 {
    CirParams::new(params.sigma2, params.alpha, params.beta, params.xi)
        .map_or(f64::NAN, |p| cir_mean(&p, t))
}

/// `P(X(t) <= x)` of the CIR process.
#[no_mangle]
pub extern "C" fn fs_cir_cdf(params: FsCirParams, t: f64, x: f64, out: *mut f64) -> FsStatus {
    guard(|| write_out(out, cir_cdf(&cir(params)?, t, x), "out"))
}

/// `len` exact draws of `X(t)` from the stream `(seed, stream_index)`.
#[no_mangle]
pub extern "C" fn fs_cir_sample(
    params: FsCirParams,
    t: f64,
    seed: u64,
    stream_index: u64,
    out: *mut f64,
    len: usize,
) -> FsStatus {
    guard(|| {
        let p = cir(params)?;
        let mut rng = stream(seed, stream_index);
        for v in out_slice(out, len, "out")? {
            *v = cir_exact_sample(&p, t, &mut rng);
        }
        Ok(())
    })
}

/// `len` stable draws with exponent `1 / gamma` from the stream `(seed, stream_index)`.
#[no_mangle]
pub extern "C" fn fs_stable_sample(
    gamma: f64,
    skew: f64,
    scale: f64,
    seed: u64,
    stream_index: u64,
    out: *mut f64,
    len: usize,
) -> FsStatus {
    guard(|| {
        let law = StableLaw::from_gamma(gamma, skew, scale).status()?;
        let mut rng = stream(seed, stream_index);
        for v in out_slice(out, len, "out")? {
            *v = law.sample(&mut rng);
        }
        Ok(())
    })
}

/// Two-sample Kolmogorov-Smirnov distance.
#[no_mangle]
pub extern "C" fn fs_ks_two_sample(
    a: *const f64,
    na: usize,
    b: *const f64,
    nb: usize,
    out: *mut f64,
) -> FsStatus {
    guard(|| {
        let a = in_slice(a, na, "a")?;
        let b = in_slice(b, nb, "b")?;
        write_out(out, ks_two_sample(a, b).status()?, "out")
    })
}
