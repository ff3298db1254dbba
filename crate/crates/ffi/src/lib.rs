//! C ABI over the specrecon core.
//!
//! Every fallible function returns an [`SrStatus`]; on failure the message
//! is kept per thread and can be read with [`sr_last_error_message`].
//! Spectra cross the boundary as opaque [`SrSpectrum`] handles that must be
//! released with [`sr_spectrum_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use specrecon::mp::{mp_cdf, mp_density, stieltjes_fixed_point, LimitSpectrum, MpLaw};
use specrecon::reconstruct::invert_spectrum;
use specrecon::secular::{interlacing_check, secular_solve, SecularProblem};
use specrecon::spectrum::{Role, Spectrum};
use specrecon::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    SizeMismatch = 3,
    PoleHit = 4,
    NoConvergence = 5,
    InterlacingViolation = 6,
    BufferTooSmall = 7,
    Numeric = 8,
    Panic = 99,
}

/// Opaque spectrum handle, values stored descending.
pub struct SrSpectrum {
    inner: Spectrum,
}

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(msg: &str) {
    LAST_ERROR.with(|e| {
        let mut e = e.borrow_mut();
        e.clear();
        e.extend(msg.bytes().filter(|&b| b != 0));
    });
}

fn status_of(err: &Error) -> SrStatus {
    match err {
        Error::PoleHit { .. } => SrStatus::PoleHit,
        Error::NoConvergence(_) | Error::BracketFailure { .. } | Error::QuadratureFailure { .. } => {
            SrStatus::NoConvergence
        }
        Error::InterlacingViolation(_) => SrStatus::InterlacingViolation,
        Error::SizeMismatch { .. } | Error::ShapeMismatch(_) => SrStatus::SizeMismatch,
        Error::NonFinite(_)
        | Error::NegativeEigenvalue { .. }
        | Error::IndexOutOfRange { .. }
        | Error::SingletonSpectrum
        | Error::EmptySpectrum
        | Error::WindowTooWide { .. }
        | Error::InvalidArgument(_) => SrStatus::InvalidArgument,
        _ => SrStatus::Numeric,
    }
}

/// Runs `f`, recording any error or panic.
fn guard(f: impl FnOnce() -> Result<(), (SrStatus, String)>) -> SrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SrStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(&msg);
            s
        }
        Err(_) => {
            set_error("panic inside specrecon");
            SrStatus::Panic
        }
    }
}

fn lib(e: Error) -> (SrStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (SrStatus, String) {
    (SrStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `ptr` must be null or valid for `len` reads.
unsafe fn input<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], (SrStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(ptr, len))
}

unsafe fn handle<'a>(h: *const SrSpectrum, what: &str) -> Result<&'a Spectrum, (SrStatus, String)> {
    h.as_ref().map(|s| &s.inner).ok_or_else(|| null(what))
}

fn boxed(s: Spectrum) -> *mut SrSpectrum {
    Box::into_raw(Box::new(SrSpectrum { inner: s }))
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `cap - 1` bytes). Returns the full message length.
///
/// # Safety
/// `buf` must be null or valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn sr_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = e.len().min(cap - 1);
            ptr::copy_nonoverlapping(e.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        e.len()
    })
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn sr_status_name(status: SrStatus) -> *const c_char {
    let s: &'static CStr = match status {
        SrStatus::Ok => c"ok",
        SrStatus::NullPointer => c"null pointer",
        SrStatus::InvalidArgument => c"invalid argument",
        SrStatus::SizeMismatch => c"size mismatch",
        SrStatus::PoleHit => c"pole hit",
        SrStatus::NoConvergence => c"no convergence",
        SrStatus::InterlacingViolation => c"interlacing violation",
        SrStatus::BufferTooSmall => c"buffer too small",
        SrStatus::Numeric => c"numeric failure",
        SrStatus::Panic => c"panic",
    };
    s.as_ptr()
}

/// Builds a spectrum from `len` values in any order. Tiny negative values
/// from rounding are clamped to zero; larger ones are rejected.
///
/// # Safety
/// `values` must be valid for `len` reads and `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn sr_spectrum_new(values: *const f64, len: usize, out: *mut *mut SrSpectrum) -> SrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let v = input(values, len, "values")?;
        let s = Spectrum::new(v, Role::Sample).map_err(lib)?;
        *out = boxed(s);
        Ok(())
    })
}

/// Number of values; 0 for a null handle.
///
/// # Safety
/// `spec` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sr_spectrum_len(spec: *const SrSpectrum) -> usize {
    spec.as_ref().map(|s| s.inner.p()).unwrap_or(0)
}

/// Copies the values, descending, into `out`.
///
/// # Safety
/// `spec` must be a live handle and `out` valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn sr_spectrum_values(spec: *const SrSpectrum, out: *mut f64, cap: usize) -> SrStatus {
    guard(|| {
        let s = handle(spec, "spec")?;
        if cap < s.p() {
            return Err((SrStatus::BufferTooSmall, format!("need {} slots, got {cap}", s.p())));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        ptr::copy_nonoverlapping(s.values().as_ptr(), out, s.p());
        Ok(())
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `spec` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sr_spectrum_free(spec: *mut SrSpectrum) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// Eigenvalues of the arrowhead matrix `[[diag(nu), e], [e^T, e_diag]]`,
/// where `e_off[s]` pairs with the `s`-th largest value of `nu`.
///
/// # Safety
/// `nu` must be a live handle, `e_off` valid for `len` reads and `out` for
/// one write.
#[no_mangle]
pub unsafe extern "C" fn sr_secular_solve(
    nu: *const SrSpectrum,
    e_diag: f64,
    e_off: *const f64,
    len: usize,
    out: *mut *mut SrSpectrum,
) -> SrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let nu = handle(nu, "nu")?.clone().with_role(Role::Restricted);
        let e = input(e_off, len, "e_off")?.to_vec();
        let prob = SecularProblem::new(nu, e_diag, e).map_err(lib)?;
        *out = boxed(secular_solve(&prob).map_err(lib)?);
        Ok(())
    })
}

/// Writes 1 to `out` when `restricted` interlaces `full`, else 0.
///
/// # Safety
/// Both handles must be live and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn sr_interlacing_check(
    full: *const SrSpectrum,
    restricted: *const SrSpectrum,
    out: *mut i32,
) -> SrStatus {
    guard(|| {
        let f = handle(full, "full")?;
        let r = handle(restricted, "restricted")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = i32::from(interlacing_check(f, r).map_err(lib)?);
        Ok(())
    })
}

/// Population estimates for every index of `sample` at aspect ratio `c`
/// with exclusion half-width `k`. `valid[i]` is 0 where the estimator broke
/// down and the raw value was returned. Both buffers need `cap >= len`.
///
/// # Safety
/// `sample` must be a live handle; `estimates` and `valid` valid for `cap`
/// writes (`valid` may be null).
#[no_mangle]
pub unsafe extern "C" fn sr_invert_spectrum(
    sample: *const SrSpectrum,
    c: f64,
    k: usize,
    estimates: *mut f64,
    valid: *mut u8,
    cap: usize,
) -> SrStatus {
    guard(|| {
        let s = handle(sample, "sample")?;
        if cap < s.p() {
            return Err((SrStatus::BufferTooSmall, format!("need {} slots, got {cap}", s.p())));
        }
        if estimates.is_null() {
            return Err(null("estimates"));
        }
        let r = invert_spectrum(s, c, k).map_err(lib)?;
        for (i, rec) in r.records.iter().enumerate() {
            *estimates.add(i) = rec.estimate;
            if !valid.is_null() {
                *valid.add(i) = u8::from(rec.valid);
            }
        }
        Ok(())
    })
}

/// Marchenko–Pastur density at `x` for aspect ratio `c = n / p`.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn sr_mp_density(x: f64, c: f64, out: *mut f64) -> SrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = mp_density(x, &MpLaw::new(c).map_err(lib)?);
        Ok(())
    })
}

/// Marchenko–Pastur distribution function, point mass included.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn sr_mp_cdf(x: f64, c: f64, out: *mut f64) -> SrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = mp_cdf(x, &MpLaw::new(c).map_err(lib)?).map_err(lib)?;
        Ok(())
    })
}

/// Limiting Stieltjes transform `m` at `x + i eta` for a population measure
/// with `len` atoms and weights (normalized internally), plus the density
/// `Im m / pi`. Any of the outputs may be null.
///
/// # Safety
/// `atoms` and `weights` must be valid for `len` reads.
#[no_mangle]
pub unsafe extern "C" fn sr_stieltjes_fixed_point(
    atoms: *const f64,
    weights: *const f64,
    len: usize,
    c: f64,
    x: f64,
    eta: f64,
    m_re: *mut f64,
    m_im: *mut f64,
    density: *mut f64,
) -> SrStatus {
    guard(|| {
        let a = input(atoms, len, "atoms")?.to_vec();
        let w = input(weights, len, "weights")?.to_vec();
        let spec = LimitSpectrum::new(a, w, c).map_err(lib)?;
        let fp = stieltjes_fixed_point(x, eta, &spec).map_err(lib)?;
        if !m_re.is_null() {
            *m_re = fp.m.re;
        }
        if !m_im.is_null() {
            *m_im = fp.m.im;
        }
        if !density.is_null() {
            *density = fp.density;
        }
        Ok(())
    })
}
