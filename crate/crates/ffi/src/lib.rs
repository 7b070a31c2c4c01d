//! C interface to the GKP threshold library.
//!
//! Every fallible call returns a [`GkpStatus`]; on failure the message is
//! kept per thread and can be copied out with [`gkp_last_error`].
//! Lattices are opaque handles freed with [`gkp_lattice_free`].

use std::cell::RefCell;
use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use gkp_ftqc::decoder::{decode, ErrorConfig, Mode};
use gkp_ftqc::gkp_math::{self, PostselectParams};
use gkp_ftqc::lattice::{build_cell_lattice_with, build_planar_with, Boundary, Lattice};
use gkp_ftqc::montecarlo::{run_plan, NoiseModel, TrialPlan};
use gkp_ftqc::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GkpStatus {
    Ok = 0,
    InvalidParameter = 1,
    NullPointer = 2,
    LatticeSize = 3,
    SizeMismatch = 4,
    Degenerate = 5,
    DecoderFailure = 6,
    Io = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GkpLatticeKind {
    /// Rotated planar code, `d*d` qubits.
    Surface2d = 0,
    /// Cubic cell lattice for repeated syndrome rounds.
    Cells3d = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GkpBoundary {
    Planar = 0,
    Periodic = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GkpMode {
    Digital = 0,
    Analog = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GkpNoiseModel {
    CodeCapacity = 0,
    Phenomenological = 1,
    Construction = 2,
}

/// Result of one Monte Carlo point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GkpRatePoint {
    pub failures: u64,
    pub trials: u64,
    pub p_logical: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Opaque lattice handle.
pub struct GkpLattice {
    inner: Box<dyn Lattice>,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> GkpStatus {
    match e {
        Error::InvalidParameter(_) | Error::Config(_) | Error::IncompatibleStages(_) => GkpStatus::InvalidParameter,
        Error::LatticeSize { .. } => GkpStatus::LatticeSize,
        Error::SizeMismatch { .. } => GkpStatus::SizeMismatch,
        Error::Degenerate(_) | Error::Fit(_) => GkpStatus::Degenerate,
        Error::ResidualSyndrome(_) | Error::Infeasible(_) => GkpStatus::DecoderFailure,
        Error::Io(_) => GkpStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (GkpStatus, String)>) -> GkpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GkpStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_error(msg);
            GkpStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (GkpStatus, String) {
    (status_of(&e), e.to_string())
}

fn null_err(name: &str) -> (GkpStatus, String) {
    (GkpStatus::NullPointer, format!("{name} is null"))
}

fn invalid(msg: impl Into<String>) -> (GkpStatus, String) {
    (GkpStatus::InvalidParameter, msg.into())
}

/// Copy the last error message of this thread into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn gkp_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Standard deviation for a squeezing level in dB.
#[no_mangle]
pub extern "C" fn gkp_sigma_from_db(squeezing_db: f64) -> f64 {
    gkp_math::sigma_from_db(squeezing_db)
}

/// Probability that one quadrature is binned correctly.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn gkp_p_correct(sigma: f64, out: *mut f64) -> GkpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null_err("out"));
        }
        if !(sigma > 0.0) {
            return Err(invalid(format!("sigma must be positive, got {sigma}")));
        }
        *out = gkp_math::p_correct(sigma);
        Ok(())
    })
}

/// Matching weight of a qubit with measured deviation `delta`.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn gkp_edge_weight(delta: f64, sigma: f64, cap: f64, out: *mut f64) -> GkpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null_err("out"));
        }
        if !(sigma > 0.0 && cap > 0.0) || !(delta.abs() <= gkp_math::HALF_SQRT_PI) {
            return Err(invalid("need sigma > 0, cap > 0 and |delta| <= sqrt(pi)/2"));
        }
        *out = gkp_math::edge_weight(delta, sigma, cap);
        Ok(())
    })
}

/// Postselected error probability and success probability for outcome
/// variance `variance`.
///
/// # Safety
/// `e_post` and `p_suc` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn gkp_postselect(v_up: f64, variance: f64, e_post: *mut f64, p_suc: *mut f64) -> GkpStatus {
    guard(|| {
        if e_post.is_null() || p_suc.is_null() {
            return Err(null_err("output pointer"));
        }
        let p = PostselectParams::new(v_up, variance).map_err(lib_err)?;
        *e_post = gkp_math::e_post(p).map_err(lib_err)?;
        *p_suc = gkp_math::p_suc(p);
        Ok(())
    })
}

/// Build a lattice; on success `*out` owns a handle.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn gkp_lattice_new(
    kind: GkpLatticeKind,
    d: usize,
    boundary: GkpBoundary,
    out: *mut *mut GkpLattice,
) -> GkpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null_err("out"));
        }
        *out = ptr::null_mut();
        let b = match boundary {
            GkpBoundary::Planar => Boundary::Planar,
            GkpBoundary::Periodic => Boundary::Periodic,
        };
        let inner: Box<dyn Lattice> = match kind {
            GkpLatticeKind::Surface2d => Box::new(build_planar_with(d, b).map_err(lib_err)?),
            GkpLatticeKind::Cells3d => Box::new(build_cell_lattice_with(d, b).map_err(lib_err)?),
        };
        *out = Box::into_raw(Box::new(GkpLattice { inner }));
        Ok(())
    })
}

/// # Safety
/// `lattice` must be null or a handle from [`gkp_lattice_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gkp_lattice_free(lattice: *mut GkpLattice) {
    if !lattice.is_null() {
        drop(Box::from_raw(lattice));
    }
}

/// Number of qubits (matching-graph edges); 0 for a null handle.
///
/// # Safety
/// `lattice` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gkp_lattice_num_qubits(lattice: *const GkpLattice) -> usize {
    lattice.as_ref().map_or(0, |l| l.inner.graph().num_qubits())
}

/// Number of checks (matching-graph nodes); 0 for a null handle.
///
/// # Safety
/// `lattice` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gkp_lattice_num_checks(lattice: *const GkpLattice) -> usize {
    lattice.as_ref().map_or(0, |l| l.inner.graph().num_checks())
}

/// Decode one error configuration.
///
/// `flips` and `correction` hold `n` bytes (0 or 1) in qubit order.
/// `weights` holds `n` matching weights and may be null in digital mode.
/// `*failed` is set to 1 on a logical error, else 0.
///
/// # Safety
/// Pointers must be valid for `n` elements (or null where allowed).
#[no_mangle]
pub unsafe extern "C" fn gkp_decode(
    lattice: *const GkpLattice,
    flips: *const u8,
    weights: *const f64,
    n: usize,
    mode: GkpMode,
    correction: *mut u8,
    failed: *mut i32,
) -> GkpStatus {
    guard(|| {
        let l = lattice.as_ref().ok_or_else(|| null_err("lattice"))?;
        if flips.is_null() || correction.is_null() || failed.is_null() {
            return Err(null_err("flips, correction or failed"));
        }
        let nq = l.inner.graph().num_qubits();
        if n != nq {
            return Err(lib_err(Error::SizeMismatch { expected: nq, got: n }));
        }
        let f: Vec<bool> = slice::from_raw_parts(flips, n).iter().map(|&b| b != 0).collect();
        let (cfg, mode) = match (mode, weights.is_null()) {
            (GkpMode::Digital, _) => (ErrorConfig::digital(f), Mode::Digital),
            (GkpMode::Analog, true) => return Err(null_err("weights (required in analog mode)")),
            (GkpMode::Analog, false) => {
                let w = slice::from_raw_parts(weights, n).to_vec();
                (ErrorConfig::new(f, w).map_err(lib_err)?, Mode::Analog)
            }
        };
        let d = decode(l.inner.as_ref(), &cfg, mode).map_err(lib_err)?;
        let out = slice::from_raw_parts_mut(correction, n);
        for (o, &c) in out.iter_mut().zip(&d.correction) {
            *o = u8::from(c);
        }
        *failed = i32::from(d.failed);
        Ok(())
    })
}

/// Estimate the logical error rate of one (model, d, sigma) point with
/// default settings (planar boundary, weight cap 25).
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn gkp_run_plan(
    model: GkpNoiseModel,
    d: usize,
    sigma: f64,
    mode: GkpMode,
    trials: u64,
    seed: u64,
    out: *mut GkpRatePoint,
) -> GkpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null_err("out"));
        }
        let model = match model {
            GkpNoiseModel::CodeCapacity => NoiseModel::CodeCapacity,
            GkpNoiseModel::Phenomenological => NoiseModel::Phenomenological,
            GkpNoiseModel::Construction => NoiseModel::Construction,
        };
        let mode = match mode {
            GkpMode::Digital => Mode::Digital,
            GkpMode::Analog => Mode::Analog,
        };
        let plan = TrialPlan::new(model, d, sigma, mode, trials, seed);
        let r = run_plan(&plan).map_err(lib_err)?;
        *out = GkpRatePoint {
            failures: r.failures,
            trials: r.plan.trials,
            p_logical: r.p_logical,
            ci_low: r.ci_low,
            ci_high: r.ci_high,
        };
        Ok(())
    })
}
