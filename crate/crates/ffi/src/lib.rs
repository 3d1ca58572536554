//! C ABI over `semple-core`: forward surrogate mixtures, their inverse posteriors,
//! the OU Kalman likelihood and chain diagnostics.
//!
//! Every fallible function returns a [`SempleStatus`]. On failure the message is kept
//! per thread and can be read with [`semple_last_error_message`]. Arrays are passed as
//! pointer plus length; matrices are row-major. Handles are created by a `*_new`,
//! `*_fit` or `*_read` function and released with the matching `*_free`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use semple_core::diagnostics::{ess_univariate, wasserstein1};
use semple_core::mixtures::{
    fit_em, read_mixture, write_mixture, CovStructure, EmConfig, ExpertMixture, InverseMixture,
    TrainingSet,
};
use semple_core::models::ou_kalman_loglik;
use semple_core::Error;

/// Result of every fallible call. Values 2 to 7 match the exit codes of the `semple` CLI.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SempleStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Schema = 3,
    Ingestion = 4,
    Io = 5,
    FitFailed = 6,
    SamplingFailed = 7,
    Panic = 8,
}

impl SempleStatus {
    fn of(e: &Error) -> Self {
        match e.exit_code() {
            2 => Self::InvalidInput,
            3 => Self::Schema,
            4 => Self::Ingestion,
            5 => Self::Io,
            6 => Self::FitFailed,
            _ => Self::SamplingFailed,
        }
    }
}

/// Fitted forward mixture of experts `q̃(y | θ)`.
pub struct SempleMixture(ExpertMixture);

/// Inverse mixture giving the surrogate posterior `q(θ | y)`.
pub struct SempleInverse(InverseMixture);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

struct Fail(SempleStatus);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        set_error(e.to_string());
        Fail(SempleStatus::of(&e))
    }
}

fn null(what: &str) -> Fail {
    set_error(format!("{what} is null"));
    Fail(SempleStatus::NullPointer)
}

fn invalid(msg: impl Into<String>) -> Fail {
    set_error(msg);
    Fail(SempleStatus::InvalidInput)
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SempleStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SempleStatus::Ok
        }
        Ok(Err(Fail(s))) => s,
        Err(_) => {
            set_error("internal panic");
            SempleStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn slice_mut<'a>(p: *mut f64, n: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

unsafe fn write_out<T>(p: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(v);
    Ok(())
}

unsafe fn path<'a>(p: *const c_char) -> Result<&'a Path, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| invalid("path is not valid UTF-8"))
}

unsafe fn mixture<'a>(h: *const SempleMixture) -> Result<&'a ExpertMixture, Fail> {
    h.as_ref()
        .map(|m| &m.0)
        .ok_or_else(|| null("mixture handle"))
}

unsafe fn inverse<'a>(h: *const SempleInverse) -> Result<&'a InverseMixture, Fail> {
    h.as_ref()
        .map(|m| &m.0)
        .ok_or_else(|| null("inverse handle"))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn semple_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn semple_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn semple_status_name(status: SempleStatus) -> *const c_char {
    let s: &'static str = match status {
        SempleStatus::Ok => "ok\0",
        SempleStatus::NullPointer => "null_pointer\0",
        SempleStatus::InvalidInput => "invalid_input\0",
        SempleStatus::Schema => "schema\0",
        SempleStatus::Ingestion => "ingestion\0",
        SempleStatus::Io => "io\0",
        SempleStatus::FitFailed => "fit_failed\0",
        SempleStatus::SamplingFailed => "sampling_failed\0",
        SempleStatus::Panic => "panic\0",
    };
    s.as_ptr().cast()
}

/// Fit a mixture by EM to `n` pairs. `theta` is `n × theta_dim`, `y` is `n × obs_dim`.
/// `diagonal` selects diagonal noise covariances.
///
/// # Safety
/// `theta` and `y` must point to arrays of the stated sizes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn semple_mixture_fit(
    theta: *const f64,
    y: *const f64,
    n: usize,
    theta_dim: usize,
    obs_dim: usize,
    k: usize,
    diagonal: bool,
    seed: u64,
    out: *mut *mut SempleMixture,
) -> SempleStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if theta_dim == 0 || obs_dim == 0 {
            return Err(invalid("dimensions must be positive"));
        }
        let th = slice(theta, n * theta_dim, "theta")?;
        let ys = slice(y, n * obs_dim, "y")?;
        let mut data = TrainingSet::with_capacity(theta_dim, obs_dim, 0, n);
        for (t, v) in th.chunks(theta_dim).zip(ys.chunks(obs_dim)) {
            data.push(t, v)?;
        }
        let cov_structure = if diagonal {
            CovStructure::Diagonal
        } else {
            CovStructure::Full
        };
        let fit = fit_em(
            &data,
            &EmConfig {
                k_init: k,
                cov_structure,
                seed,
                ..EmConfig::default()
            },
        )?;
        out.write(Box::into_raw(Box::new(SempleMixture(fit.mixture))));
        Ok(())
    })
}

/// Read a mixture written by the CLI or [`semple_mixture_write`].
///
/// # Safety
/// `file` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn semple_mixture_read(
    file: *const c_char,
    out: *mut *mut SempleMixture,
) -> SempleStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let m = read_mixture(path(file)?)?;
        out.write(Box::into_raw(Box::new(SempleMixture(m))));
        Ok(())
    })
}

/// # Safety
/// `mix` must be a live handle and `file` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn semple_mixture_write(
    mix: *const SempleMixture,
    file: *const c_char,
) -> SempleStatus {
    guard(|| Ok(write_mixture(path(file)?, mixture(mix)?)?))
}

/// # Safety
/// `mix` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn semple_mixture_free(mix: *mut SempleMixture) {
    if !mix.is_null() {
        drop(Box::from_raw(mix));
    }
}

/// # Safety
/// `mix` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn semple_mixture_dims(
    mix: *const SempleMixture,
    components: *mut usize,
    theta_dim: *mut usize,
    obs_dim: *mut usize,
) -> SempleStatus {
    guard(|| {
        let m = mixture(mix)?;
        write_out(components, m.n_components(), "components")?;
        write_out(theta_dim, m.theta_dim(), "theta_dim")?;
        write_out(obs_dim, m.obs_dim(), "obs_dim")
    })
}

unsafe fn check_dims<'a>(
    m: &ExpertMixture,
    y: *const f64,
    y_len: usize,
    theta: *const f64,
    theta_len: usize,
) -> Result<(&'a [f64], &'a [f64]), Fail> {
    if y_len != m.obs_dim() || theta_len != m.theta_dim() {
        return Err(invalid(format!(
            "expected y of length {} and theta of length {}, got {y_len} and {theta_len}",
            m.obs_dim(),
            m.theta_dim()
        )));
    }
    Ok((slice(y, y_len, "y")?, slice(theta, theta_len, "theta")?))
}

/// Surrogate log-likelihood `log q̃(y | θ)`.
///
/// # Safety
/// `mix` must be a live handle, the arrays must have the stated lengths and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn semple_mixture_loglik(
    mix: *const SempleMixture,
    y: *const f64,
    y_len: usize,
    theta: *const f64,
    theta_len: usize,
    out: *mut f64,
) -> SempleStatus {
    guard(|| {
        let m = mixture(mix)?;
        let (y, theta) = check_dims(m, y, y_len, theta, theta_len)?;
        write_out(out, m.surrogate_loglik(y, theta)?, "out")
    })
}

/// Gradient of `log q̃(y | θ)` with respect to θ, written to `grad` (length `theta_len`).
///
/// # Safety
/// As [`semple_mixture_loglik`]; `grad` must hold `theta_len` values.
#[no_mangle]
pub unsafe extern "C" fn semple_mixture_loglik_grad(
    mix: *const SempleMixture,
    y: *const f64,
    y_len: usize,
    theta: *const f64,
    theta_len: usize,
    grad: *mut f64,
) -> SempleStatus {
    guard(|| {
        let m = mixture(mix)?;
        let (y, theta) = check_dims(m, y, y_len, theta, theta_len)?;
        let g = m.surrogate_loglik_grad(y, theta)?;
        slice_mut(grad, theta_len, "grad")?.copy_from_slice(g.as_slice());
        Ok(())
    })
}

/// Closed-form inverse of a forward mixture.
///
/// # Safety
/// `mix` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn semple_inverse_new(
    mix: *const SempleMixture,
    out: *mut *mut SempleInverse,
) -> SempleStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inv = InverseMixture::from_forward(mixture(mix)?)?;
        out.write(Box::into_raw(Box::new(SempleInverse(inv))));
        Ok(())
    })
}

/// # Safety
/// `inv` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn semple_inverse_free(inv: *mut SempleInverse) {
    if !inv.is_null() {
        drop(Box::from_raw(inv));
    }
}

unsafe fn check_inverse<'a>(
    inv: &InverseMixture,
    y: *const f64,
    y_len: usize,
) -> Result<&'a [f64], Fail> {
    if y_len != inv.obs_dim() {
        return Err(invalid(format!(
            "expected y of length {}, got {y_len}",
            inv.obs_dim()
        )));
    }
    slice(y, y_len, "y")
}

/// Surrogate posterior log-density `log q(θ | y)`.
///
/// # Safety
/// `inv` must be a live handle, the arrays must have the stated lengths and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn semple_inverse_logpdf(
    inv: *const SempleInverse,
    y: *const f64,
    y_len: usize,
    theta: *const f64,
    theta_len: usize,
    out: *mut f64,
) -> SempleStatus {
    guard(|| {
        let m = inverse(inv)?;
        let y = check_inverse(m, y, y_len)?;
        if theta_len != m.theta_dim() {
            return Err(invalid(format!(
                "expected theta of length {}, got {theta_len}",
                m.theta_dim()
            )));
        }
        write_out(
            out,
            m.posterior_logpdf(y, slice(theta, theta_len, "theta")?)?,
            "out",
        )
    })
}

/// `n` iid draws from `q(θ | y)` into `out` (`n × theta_dim`, row-major).
///
/// # Safety
/// `inv` must be a live handle, `y` must hold `y_len` values and `out` `n · theta_dim` values.
#[no_mangle]
pub unsafe extern "C" fn semple_inverse_sample(
    inv: *const SempleInverse,
    y: *const f64,
    y_len: usize,
    n: usize,
    seed: u64,
    out: *mut f64,
) -> SempleStatus {
    guard(|| {
        let m = inverse(inv)?;
        let y = check_inverse(m, y, y_len)?;
        let d = m.theta_dim();
        let dst = slice_mut(out, n * d, "out")?;
        for (row, draw) in dst.chunks_mut(d).zip(m.posterior_sample(y, n, seed)?) {
            row.copy_from_slice(draw.as_slice());
        }
        Ok(())
    })
}

/// Exact OU log-likelihood of `n` scalar observations; `theta` is `log(c₁, c₂, c₃, ξ)`.
///
/// # Safety
/// `times` and `obs` must hold `n` values, `theta` four values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn semple_ou_kalman_loglik(
    times: *const f64,
    obs: *const f64,
    n: usize,
    theta: *const f64,
    out: *mut f64,
) -> SempleStatus {
    guard(|| {
        let t = slice(times, n, "times")?;
        if t.windows(2).any(|w| !(w[0] < w[1])) || t.first().is_some_and(|&t0| !(t0 > 0.0)) {
            return Err(invalid("times must be positive and strictly increasing"));
        }
        write_out(
            out,
            ou_kalman_loglik(t, slice(obs, n, "obs")?, slice(theta, 4, "theta")?),
            "out",
        )
    })
}

/// Univariate effective sample size; `degenerate` is set for a constant chain.
///
/// # Safety
/// `chain` must hold `n` values; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn semple_ess(
    chain: *const f64,
    n: usize,
    ess: *mut f64,
    degenerate: *mut bool,
) -> SempleStatus {
    guard(|| {
        let e = ess_univariate(slice(chain, n, "chain")?)?;
        write_out(ess, e.ess, "ess")?;
        write_out(degenerate, e.degenerate, "degenerate")
    })
}

/// Wasserstein-1 distance between two empirical samples.
///
/// # Safety
/// `a` and `b` must hold `na` and `nb` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn semple_wasserstein1(
    a: *const f64,
    na: usize,
    b: *const f64,
    nb: usize,
    out: *mut f64,
) -> SempleStatus {
    guard(|| {
        let (a, b) = (slice(a, na, "a")?, slice(b, nb, "b")?);
        if a.is_empty() || b.is_empty() || a.iter().chain(b).any(|v| !v.is_finite()) {
            return Err(invalid("both samples must be nonempty and finite"));
        }
        write_out(out, wasserstein1(a, b), "out")
    })
}
