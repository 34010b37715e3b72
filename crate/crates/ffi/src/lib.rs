//! C interface. Handles are opaque; every fallible call returns a
//! [`VpbStatus`] and leaves a message for [`vpb_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use vpb::collision::{CollisionParams, LatticeCollision};
use vpb::config::RunConfig;
use vpb::diagnostics::decay_fit;
use vpb::lattice::VelocityLattice;
use vpb::scenario::{boundary_datum, build_stepper, initial_field};
use vpb::solver::Simulation;
use vpb::weights::{weight, WeightParams};
use vpb::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VpbStatus {
    Ok = 0,
    NullPointer = 1,
    /// Bad configuration or parameters.
    Config = 2,
    /// A checked property failed.
    Invariant = 3,
    /// The solver could not proceed.
    Runtime = 4,
    /// A buffer had the wrong length.
    Length = 5,
    Panic = 6,
}

/// Collision operator on a velocity lattice.
pub struct VpbOperator(LatticeCollision);

/// Time integration owned by the caller.
pub struct VpbSimulation(Simulation);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> VpbStatus {
    match e {
        Error::LatticeMismatch { .. } => VpbStatus::Length,
        Error::InvalidParams(_) => VpbStatus::Config,
        _ => match e.exit_code() {
            2 => VpbStatus::Config,
            3 => VpbStatus::Invariant,
            _ => VpbStatus::Runtime,
        },
    }
}

fn guard(f: impl FnOnce() -> Result<(), VpbStatus>) -> VpbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VpbStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic inside the library");
            VpbStatus::Panic
        }
    }
}

fn fail(e: Error) -> VpbStatus {
    set_error(&e.to_string());
    status_of(&e)
}

fn null() -> VpbStatus {
    set_error("null pointer argument");
    VpbStatus::NullPointer
}

/// Message of the last failed call on this thread; valid until the next call.
#[no_mangle]
pub extern "C" fn vpb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn vpb_operator_new(n: usize, vmax: f64, gamma: f64, epsilon: f64, sphere_order: usize, out: *mut *mut VpbOperator) -> VpbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let op = VelocityLattice::new(n, vmax)
            .and_then(|lat| CollisionParams::new(gamma, epsilon, sphere_order, lat))
            .and_then(|p| LatticeCollision::new(&p))
            .map_err(fail)?;
        *out = Box::into_raw(Box::new(VpbOperator(op)));
        Ok(())
    })
}

/// # Safety
/// `op` must come from [`vpb_operator_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vpb_operator_free(op: *mut VpbOperator) {
    if !op.is_null() {
        drop(Box::from_raw(op));
    }
}

/// Number of lattice points, `n^3`; 0 for a null handle.
///
/// # Safety
/// `op` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vpb_operator_len(op: *const VpbOperator) -> usize {
    op.as_ref().map_or(0, |o| o.0.lattice().len())
}

unsafe fn slice<'a>(p: *const f64, len: usize) -> Result<&'a [f64], VpbStatus> {
    if p.is_null() {
        return Err(null());
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out(out: *mut f64, len: usize, values: &[f64]) -> Result<(), VpbStatus> {
    if out.is_null() {
        return Err(null());
    }
    if len != values.len() {
        set_error(&format!("output buffer has {len} entries, expected {}", values.len()));
        return Err(VpbStatus::Length);
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, len);
    Ok(())
}

/// `out = Q(f1, f2)` on the lattice; all buffers hold `len` values.
///
/// # Safety
/// Pointers must be valid for `len` values; `out` must not alias the inputs.
#[no_mangle]
pub unsafe extern "C" fn vpb_operator_apply_q(op: *const VpbOperator, f1: *const f64, f2: *const f64, len: usize, out: *mut f64) -> VpbStatus {
    guard(|| {
        let op = op.as_ref().ok_or_else(null)?;
        let q = op.0.q_full(slice(f1, len)?, slice(f2, len)?).map_err(fail)?;
        write_out(out, len, &q)
    })
}

/// `out = L f` for the linearised operator.
///
/// # Safety
/// As for [`vpb_operator_apply_q`].
#[no_mangle]
pub unsafe extern "C" fn vpb_operator_apply_l(op: *const VpbOperator, f: *const f64, len: usize, out: *mut f64) -> VpbStatus {
    guard(|| {
        let op = op.as_ref().ok_or_else(null)?;
        let l = op.0.apply_l(slice(f, len)?).map_err(fail)?;
        write_out(out, len, &l)
    })
}

/// Builds a simulation from TOML configuration text: initial data, boundary
/// datum and solver settings as the CLI would use them.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn vpb_simulation_from_toml(toml: *const c_char, out: *mut *mut VpbSimulation) -> VpbStatus {
    guard(|| {
        if toml.is_null() || out.is_null() {
            return Err(null());
        }
        let text = CStr::from_ptr(toml).to_str().map_err(|e| fail(Error::Parse(e.to_string())))?;
        let cfg = RunConfig::from_toml(text).map_err(fail)?;
        let stepper = build_stepper(&cfg).map_err(fail)?;
        let f0 = initial_field(&cfg, &stepper.grid);
        let sim = Simulation::new(stepper, f0, boundary_datum(&cfg)).map_err(fail)?;
        *out = Box::into_raw(Box::new(VpbSimulation(sim)));
        Ok(())
    })
}

/// # Safety
/// `sim` must come from [`vpb_simulation_from_toml`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vpb_simulation_free(sim: *mut VpbSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Advances `steps` time steps.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn vpb_simulation_step(sim: *mut VpbSimulation, steps: usize) -> VpbStatus {
    guard(|| {
        let sim = sim.as_mut().ok_or_else(null)?;
        for _ in 0..steps {
            sim.0.step().map_err(fail)?;
        }
        Ok(())
    })
}

/// Current time; NaN for a null handle.
///
/// # Safety
/// `sim` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vpb_simulation_time(sim: *const VpbSimulation) -> f64 {
    sim.as_ref().map_or(f64::NAN, |s| s.0.state().time)
}

/// `|w f|_inf` of the current perturbation; NaN for a null handle.
///
/// # Safety
/// `sim` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vpb_simulation_sup(sim: *const VpbSimulation) -> f64 {
    sim.as_ref().map_or(f64::NAN, |s| s.0.weighted_sup())
}

/// Number of values in the state (space nodes times lattice points).
///
/// # Safety
/// `sim` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vpb_simulation_state_len(sim: *const VpbSimulation) -> usize {
    sim.as_ref().map_or(0, |s| s.0.state().values.len())
}

/// Copies the state, row-major by space node then lattice point.
///
/// # Safety
/// `out` must be valid for `len` values.
#[no_mangle]
pub unsafe extern "C" fn vpb_simulation_copy_state(sim: *const VpbSimulation, out: *mut f64, len: usize) -> VpbStatus {
    guard(|| {
        let sim = sim.as_ref().ok_or_else(null)?;
        write_out(out, len, &sim.0.state().values)
    })
}

/// `w(t, v) = exp(theta_tilde(t) |v|^2)`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vpb_weight(t: f64, vx: f64, vy: f64, vz: f64, vartheta: f64, theta: f64, gamma: f64, out: *mut f64) -> VpbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let p = WeightParams::new(vartheta, theta, gamma).map_err(fail)?;
        *out = weight(t, [vx, vy, vz], &p);
        Ok(())
    })
}

/// Fits `log y = log A - lambda t^rho` to `n` samples.
///
/// # Safety
/// `t` and `y` must be valid for `n` values; outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn vpb_decay_fit(
    t: *const f64,
    y: *const f64,
    n: usize,
    rho: f64,
    lambda: *mut f64,
    amplitude: *mut f64,
    r_squared: *mut f64,
) -> VpbStatus {
    guard(|| {
        if lambda.is_null() || amplitude.is_null() || r_squared.is_null() {
            return Err(null());
        }
        let series: Vec<(f64, f64)> = slice(t, n)?.iter().copied().zip(slice(y, n)?.iter().copied()).collect();
        let fit = decay_fit(&series, rho).map_err(fail)?;
        *lambda = fit.lambda_hat;
        *amplitude = fit.amplitude;
        *r_squared = fit.r_squared;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn last_error() -> String {
        unsafe { CStr::from_ptr(vpb_last_error()) }.to_string_lossy().into_owned()
    }

    #[test]
    fn operator_roundtrip_kills_the_maxwellian() {
        let mut op = ptr::null_mut();
        assert_eq!(unsafe { vpb_operator_new(6, 5.0, -1.0, 0.01, 6, &mut op) }, VpbStatus::Ok);
        let len = unsafe { vpb_operator_len(op) };
        assert_eq!(len, 216);
        let lat = VelocityLattice::new(6, 5.0).unwrap();
        let mu = lat.sample(vpb::weights::maxwellian);
        let sm = lat.sample(vpb::weights::sqrt_maxwellian);
        let mut out = vec![1.0; len];
        assert_eq!(unsafe { vpb_operator_apply_q(op, mu.as_ptr(), mu.as_ptr(), len, out.as_mut_ptr()) }, VpbStatus::Ok);
        assert!(out.iter().all(|x| x.abs() < 1e-12));
        assert_eq!(unsafe { vpb_operator_apply_l(op, sm.as_ptr(), len, out.as_mut_ptr()) }, VpbStatus::Ok);
        assert!(out.iter().all(|x| x.abs() < 1e-10));
        assert_eq!(unsafe { vpb_operator_apply_l(op, sm.as_ptr(), len - 1, out.as_mut_ptr()) }, VpbStatus::Length);
        unsafe { vpb_operator_free(op) };
    }

    #[test]
    fn bad_arguments_set_status_and_message() {
        let mut op = ptr::null_mut();
        assert_eq!(unsafe { vpb_operator_new(6, 5.0, -1.0, 0.0, 6, &mut op) }, VpbStatus::Config);
        assert!(op.is_null());
        assert!(!last_error().is_empty());
        assert_eq!(unsafe { vpb_operator_new(6, 5.0, -1.0, 0.01, 6, ptr::null_mut()) }, VpbStatus::NullPointer);
        assert_eq!(unsafe { vpb_simulation_step(ptr::null_mut(), 1) }, VpbStatus::NullPointer);
        assert!(unsafe { vpb_simulation_time(ptr::null()) }.is_nan());
        let mut w = 0.0;
        assert_eq!(unsafe { vpb_weight(0.0, 2.0, 0.0, 0.0, 0.5, 1.0, -1.0, &mut w) }, VpbStatus::Config);
        assert_eq!(unsafe { vpb_weight(0.0, 2.0, 0.0, 0.0, 0.01, 1.0, -1.0, &mut w) }, VpbStatus::Ok);
        assert!((w - 0.08f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn simulation_steps_through_the_interface() {
        let text = CString::new(
            "[domain]\nnodes = 6\n[collision]\nlattice = 6\nsphere_order = 6\n[solver]\ndt = 0.05\nt_end = 1.0\n[initial]\nprofile = \"sine\"\namplitude = 1e-3\n",
        )
        .unwrap();
        let mut sim = ptr::null_mut();
        assert_eq!(unsafe { vpb_simulation_from_toml(text.as_ptr(), &mut sim) }, VpbStatus::Ok, "{}", last_error());
        let s0 = unsafe { vpb_simulation_sup(sim) };
        assert!((s0 - 1e-3).abs() < 1e-15);
        assert_eq!(unsafe { vpb_simulation_step(sim, 4) }, VpbStatus::Ok);
        assert!((unsafe { vpb_simulation_time(sim) } - 0.2).abs() < 1e-12);
        let len = unsafe { vpb_simulation_state_len(sim) };
        assert_eq!(len, 6 * 216);
        let mut state = vec![0.0; len];
        assert_eq!(unsafe { vpb_simulation_copy_state(sim, state.as_mut_ptr(), len) }, VpbStatus::Ok);
        assert!(state.iter().all(|x| x.is_finite()));
        unsafe { vpb_simulation_free(sim) };

        let bad = CString::new("[collision]\nepsilon = -1.0\n").unwrap();
        assert_eq!(unsafe { vpb_simulation_from_toml(bad.as_ptr(), &mut sim) }, VpbStatus::Config);
        assert!(last_error().contains("epsilon>0"));
    }

    #[test]
    fn decay_fit_recovers_the_rate() {
        let t: Vec<f64> = (0..20).map(|k| k as f64 * 0.5).collect();
        let y: Vec<f64> = t.iter().map(|t| 2.0 * (-0.7 * t.powf(1.0 / 3.0)).exp()).collect();
        let (mut l, mut a, mut r2) = (0.0, 0.0, 0.0);
        assert_eq!(unsafe { vpb_decay_fit(t.as_ptr(), y.as_ptr(), t.len(), 1.0 / 3.0, &mut l, &mut a, &mut r2) }, VpbStatus::Ok);
        assert!((l - 0.7).abs() < 1e-10 && (a - 2.0).abs() < 1e-10 && r2 > 0.999_999);
        let zeros = vec![0.0; 20];
        assert_eq!(unsafe { vpb_decay_fit(t.as_ptr(), zeros.as_ptr(), 20, 1.0 / 3.0, &mut l, &mut a, &mut r2) }, VpbStatus::Runtime);
    }
}
