//! C ABI over the phase-scope core.
//!
//! Every entry point returns a [`PsStatus`]; on failure the message is
//! available from [`ps_last_error`] on the same thread. Handles are opaque and
//! owned by the caller, who releases them with the matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use phase_scope::engine;
use phase_scope::mitigation::{self, FitKind};
use phase_scope::model::{self, Boundary, ModelParams, SpectrumResult};
use phase_scope::pauli::Estimate;
use phase_scope::vqe::{self, AnsatzSpec, ScanStrategy};
use phase_scope::Error;

/// Result codes shared by every function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    SizeMismatch = 3,
    Degenerate = 4,
    TooLarge = 5,
    Numerical = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsBoundary {
    Open = 0,
    Periodic = 1,
}

/// ANNNI chain parameters.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PsModel {
    pub num_sites: usize,
    pub j1: f64,
    pub j2: f64,
    pub bx: f64,
    pub boundary: PsBoundary,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PsZneResult {
    pub e0: f64,
    pub e0_stderr: f64,
    pub a: f64,
    /// Nonzero when the exponential fit was replaced by the linear fallback.
    pub linear: i32,
}

/// Exact spectrum of one model.
pub struct PsSpectrum {
    model: ModelParams,
    spectrum: SpectrumResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> PsStatus {
    match e {
        Error::SizeMismatch { .. } | Error::ParamCount { .. } => PsStatus::SizeMismatch,
        Error::Degenerate { .. } => PsStatus::Degenerate,
        Error::TooLarge(_) => PsStatus::TooLarge,
        Error::NonFiniteCost(_) | Error::TruncatedSpectrum { .. } => PsStatus::Numerical,
        _ => PsStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (PsStatus, String)>) -> PsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PsStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            PsStatus::Panic
        }
    }
}

fn lift<T>(r: phase_scope::Result<T>) -> Result<T, (PsStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (PsStatus, String) {
    (PsStatus::NullPointer, format!("{what} is null"))
}

unsafe fn read_model(m: *const PsModel) -> Result<ModelParams, (PsStatus, String)> {
    let m = m.as_ref().ok_or_else(|| null("model"))?;
    let boundary = match m.boundary {
        PsBoundary::Open => Boundary::Open,
        PsBoundary::Periodic => Boundary::Periodic,
    };
    let mp = ModelParams { num_sites: m.num_sites, j1: m.j1, j2: m.j2, bx: m.bx, boundary };
    lift(mp.validate())?;
    Ok(mp)
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (PsStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Message of the last failure on this thread, or null. The pointer stays valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ps_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ps_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Diagonalize `model`, keeping `num_states` levels (0 for the default).
///
/// # Safety
/// `model` must point to a valid `PsModel` and `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn ps_spectrum_new(model: *const PsModel, num_states: usize, out: *mut *mut PsSpectrum) -> PsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let mp = read_model(model)?;
        let keep = (num_states > 0).then_some(num_states);
        let spectrum = lift(model::exact_diagonalize(&mp, keep, None))?;
        *out = Box::into_raw(Box::new(PsSpectrum { model: mp, spectrum }));
        Ok(())
    })
}

/// # Safety
/// `spectrum` must come from `ps_spectrum_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ps_spectrum_free(spectrum: *mut PsSpectrum) {
    if !spectrum.is_null() {
        drop(Box::from_raw(spectrum));
    }
}

/// Number of stored levels; 0 for a null handle.
///
/// # Safety
/// `spectrum` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ps_spectrum_len(spectrum: *const PsSpectrum) -> usize {
    spectrum.as_ref().map_or(0, |s| s.spectrum.len())
}

/// Copy up to `len` energies into `out`, ascending.
///
/// # Safety
/// `spectrum` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ps_spectrum_energies(spectrum: *const PsSpectrum, out: *mut f64, len: usize) -> PsStatus {
    guard(|| {
        let s = spectrum.as_ref().ok_or_else(|| null("spectrum"))?;
        if out.is_null() && len > 0 {
            return Err(null("out"));
        }
        let e = s.spectrum.energies();
        let n = len.min(e.len());
        ptr::copy_nonoverlapping(e.as_ptr(), out, n);
        Ok(())
    })
}

/// # Safety
/// `spectrum` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ps_spectrum_ground_degeneracy(spectrum: *const PsSpectrum, out: *mut usize) -> PsStatus {
    guard(|| {
        let s = spectrum.as_ref().ok_or_else(|| null("spectrum"))?;
        *out.as_mut().ok_or_else(|| null("out"))? = s.spectrum.ground_degeneracy();
        Ok(())
    })
}

/// Perturbative fidelity susceptibility of the ground state with respect to J2.
///
/// # Safety
/// `spectrum` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ps_spectrum_fidelity_susceptibility(spectrum: *const PsSpectrum, out: *mut f64) -> PsStatus {
    guard(|| {
        let s = spectrum.as_ref().ok_or_else(|| null("spectrum"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let ha = lift(model::build_ha(&s.model))?;
        *out = lift(model::perturbative_chi(&s.spectrum, &ha))?;
        Ok(())
    })
}

/// Parameter count of the `layers`-layer ansatz for `model`.
///
/// # Safety
/// `model` must point to a valid `PsModel` and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_ansatz_num_params(model: *const PsModel, layers: usize, out: *mut usize) -> PsStatus {
    guard(|| {
        let mp = read_model(model)?;
        let spec = lift(AnsatzSpec::new(mp.num_sites, layers, mp.boundary))?;
        *out.as_mut().ok_or_else(|| null("out"))? = spec.num_params();
        Ok(())
    })
}

/// Noise-free energy of the ansatz at `params`.
///
/// # Safety
/// `params` must hold `len` doubles; `model` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ps_ansatz_energy(
    model: *const PsModel,
    layers: usize,
    params: *const f64,
    len: usize,
    out: *mut f64,
) -> PsStatus {
    guard(|| {
        let mp = read_model(model)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let spec = lift(AnsatzSpec::new(mp.num_sites, layers, mp.boundary))?;
        let circuit = lift(vqe::build_ansatz(&spec))?;
        let h = lift(model::build_hamiltonian(&mp))?;
        let state = lift(engine::run(&circuit, slice(params, len, "params")?))?;
        *out = lift(engine::expectation(&state, &h))?;
        Ok(())
    })
}

/// Optimize the ansatz for one model with the default strategy, writing the
/// angles to `params` (length `len`) and the energy to `energy`.
///
/// # Safety
/// `params` must hold `len` writable doubles; `model` and `energy` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ps_vqe_optimize(
    model: *const PsModel,
    layers: usize,
    seed: u64,
    params: *mut f64,
    len: usize,
    energy: *mut f64,
) -> PsStatus {
    guard(|| {
        let mp = read_model(model)?;
        let energy = energy.as_mut().ok_or_else(|| null("energy"))?;
        let spec = lift(AnsatzSpec::new(mp.num_sites, layers, mp.boundary))?;
        if len != spec.num_params() {
            return Err((PsStatus::SizeMismatch, format!("ansatz has {} parameters, buffer holds {len}", spec.num_params())));
        }
        if params.is_null() {
            return Err(null("params"));
        }
        let strategy = ScanStrategy { seed, ..ScanStrategy::default() };
        let point = lift(vqe::scan_optimize(&[mp], &spec, &strategy))?.remove(0);
        let report = point.report.map_err(|e| (PsStatus::Numerical, e))?;
        ptr::copy_nonoverlapping(report.final_params.as_ptr(), params, len);
        *energy = report.final_cost;
        Ok(())
    })
}

/// Exponential zero-noise extrapolation of `len` points `(lambdas[i], values[i] ± stderrs[i])`.
///
/// # Safety
/// The three arrays must hold `len` elements and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ps_zne_fit(
    lambdas: *const u32,
    values: *const f64,
    stderrs: *const f64,
    len: usize,
    out: *mut PsZneResult,
) -> PsStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let l = slice(lambdas, len, "lambdas")?;
        let v = slice(values, len, "values")?;
        let s = slice(stderrs, len, "stderrs")?;
        let pts: Vec<(u32, Estimate)> = (0..len).map(|i| (l[i], Estimate::new(v[i], s[i]))).collect();
        let fit = lift(mitigation::zne_fit(&pts))?;
        *out = PsZneResult { e0: fit.e0, e0_stderr: fit.e0_stderr, a: fit.a, linear: i32::from(fit.kind == FitKind::Linear) };
        Ok(())
    })
}
