//! C ABI over the predress toolkit.
//!
//! Every function returns a [`PredressStatus`]. On failure a description is
//! available from [`predress_last_error`] on the same thread until the next
//! call. Objects are opaque handles released with their `_free` function;
//! strings returned by the library are released with [`predress_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use nalgebra::Vector3;
use predress::bimanual::enforce_max_distance;
use predress::bridge::EstimatorSpec;
use predress::dmp::{rollout, DmpModel, KinematicLimits, Trajectory};
use predress::engine::{run_batch, ExecutionMode, Experiment, ExperimentConfig};
use predress::quat;
use predress::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredressStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    LimitViolation = 3,
    NotConverged = 4,
    NonFinite = 5,
    Io = 6,
    Parse = 7,
    Estimator = 8,
    Panic = 9,
}

/// Which per-sample quantity [`predress_trajectory_copy`] extracts.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredressField {
    Position = 0,
    Velocity = 1,
    Acceleration = 2,
}

pub struct PredressModel(DmpModel);
pub struct PredressLimits(KinematicLimits);
pub struct PredressTrajectory(Trajectory);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> PredressStatus {
    match err {
        Error::Invalid(_) => PredressStatus::InvalidArgument,
        Error::NonFinite { .. } => PredressStatus::NonFinite,
        Error::NotConverged { .. } => PredressStatus::NotConverged,
        Error::LimitViolation(_) => PredressStatus::LimitViolation,
        Error::Estimator(_) => PredressStatus::Estimator,
        Error::Io { .. } => PredressStatus::Io,
        Error::Parse { .. } => PredressStatus::Parse,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PredressStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PredressStatus::Ok,
        Ok(Err(Failure::Null(name))) => {
            set_error(format!("{name} is null"));
            PredressStatus::NullArgument
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            PredressStatus::Panic
        }
    }
}

unsafe fn non_null<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(name))
}

unsafe fn path_arg(p: *const c_char, name: &'static str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Lib(Error::Invalid(format!("{name} is not UTF-8"))))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a>(p: *const f64, n: usize, name: &'static str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn write_out<T>(out: *mut T, value: T, name: &'static str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null(name));
    }
    out.write(value);
    Ok(())
}

/// Message for the last failed call on this thread, or null. Owned by the
/// library; valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn predress_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn predress_model_load(path: *const c_char, out: *mut *mut PredressModel) -> PredressStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let model = DmpModel::load(path)?;
        write_out(out, Box::into_raw(Box::new(PredressModel(model))), "out")
    })
}

/// # Safety
/// `model` must be a valid model handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn predress_model_n_channels(model: *const PredressModel, out: *mut usize) -> PredressStatus {
    guard(|| {
        let m = non_null(model, "model")?;
        write_out(out, m.0.n_channels(), "out")
    })
}

/// # Safety
/// `model` must be null or a handle from [`predress_model_load`], freed once.
#[no_mangle]
pub unsafe extern "C" fn predress_model_free(model: *mut PredressModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Limits for `n` channels from four arrays of length `n`.
///
/// # Safety
/// The arrays must hold `n` values each and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn predress_limits_new(
    n: usize,
    pos_lo: *const f64,
    pos_hi: *const f64,
    vel_max: *const f64,
    acc_max: *const f64,
    safety_scale: f64,
    out: *mut *mut PredressLimits,
) -> PredressStatus {
    guard(|| {
        let limits = KinematicLimits::new(
            slice_arg(pos_lo, n, "pos_lo")?.to_vec(),
            slice_arg(pos_hi, n, "pos_hi")?.to_vec(),
            slice_arg(vel_max, n, "vel_max")?.to_vec(),
            slice_arg(acc_max, n, "acc_max")?.to_vec(),
            safety_scale,
        )?;
        write_out(out, Box::into_raw(Box::new(PredressLimits(limits))), "out")
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn predress_limits_load(path: *const c_char, out: *mut *mut PredressLimits) -> PredressStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let limits = KinematicLimits::load(path)?;
        write_out(out, Box::into_raw(Box::new(PredressLimits(limits))), "out")
    })
}

/// # Safety
/// `limits` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn predress_limits_free(limits: *mut PredressLimits) {
    if !limits.is_null() {
        drop(Box::from_raw(limits));
    }
}

/// Integrates `model` from its start to its goal. `limits` may be null for
/// an unconstrained rollout.
///
/// # Safety
/// Handles must be valid (or null for `limits`); `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn predress_rollout(
    model: *const PredressModel,
    limits: *const PredressLimits,
    dt: f64,
    out: *mut *mut PredressTrajectory,
) -> PredressStatus {
    guard(|| {
        let m = &non_null(model, "model")?.0;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let limits = limits.as_ref().map(|l| &l.0);
        let traj = rollout(m, &m.y0, &m.g, dt, limits)?;
        if let Some(l) = limits {
            traj.check_limits(l)?;
        }
        write_out(out, Box::into_raw(Box::new(PredressTrajectory(traj))), "out")
    })
}

/// # Safety
/// `traj` must be a valid trajectory handle; outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn predress_trajectory_shape(
    traj: *const PredressTrajectory,
    n_samples: *mut usize,
    n_channels: *mut usize,
    dt: *mut f64,
) -> PredressStatus {
    guard(|| {
        let t = &non_null(traj, "traj")?.0;
        let channels = t.states.first().map_or(0, |s| s.y.len());
        write_out(n_samples, t.len(), "n_samples")?;
        write_out(n_channels, channels, "n_channels")?;
        write_out(dt, t.dt, "dt")
    })
}

/// Copies one quantity for every sample, row-major (`n_samples × n_channels`).
/// `capacity` is the length of `buf` in doubles and must cover the whole table.
///
/// # Safety
/// `traj` must be valid and `buf` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn predress_trajectory_copy(
    traj: *const PredressTrajectory,
    field: PredressField,
    buf: *mut f64,
    capacity: usize,
) -> PredressStatus {
    guard(|| {
        let t = &non_null(traj, "traj")?.0;
        if buf.is_null() {
            return Err(Failure::Null("buf"));
        }
        let channels = t.states.first().map_or(0, |s| s.y.len());
        let need = t.len() * channels;
        if capacity < need {
            return Err(Error::Invalid(format!("buffer holds {capacity} values, {need} needed")).into());
        }
        let dst = std::slice::from_raw_parts_mut(buf, need);
        for (row, s) in dst.chunks_mut(channels.max(1)).zip(&t.states) {
            let src = match field {
                PredressField::Position => &s.y,
                PredressField::Velocity => &s.v,
                PredressField::Acceleration => &s.a,
            };
            row.copy_from_slice(src);
        }
        Ok(())
    })
}

/// # Safety
/// `traj` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn predress_trajectory_free(traj: *mut PredressTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Symmetric midpoint projection of two points to at most `d_max` apart.
///
/// # Safety
/// All pointers must reference three doubles.
#[no_mangle]
pub unsafe extern "C" fn predress_enforce_max_distance(
    left: *const f64,
    right: *const f64,
    d_max: f64,
    out_left: *mut f64,
    out_right: *mut f64,
) -> PredressStatus {
    guard(|| {
        let l = Vector3::from_column_slice(slice_arg(left, 3, "left")?);
        let r = Vector3::from_column_slice(slice_arg(right, 3, "right")?);
        if out_left.is_null() || out_right.is_null() {
            return Err(Failure::Null("out_left/out_right"));
        }
        let (pl, pr) = enforce_max_distance(l, r, d_max)?;
        std::slice::from_raw_parts_mut(out_left, 3).copy_from_slice(pl.as_slice());
        std::slice::from_raw_parts_mut(out_right, 3).copy_from_slice(pr.as_slice());
        Ok(())
    })
}

/// Rotation vector `log(q_to ⊗ q_from⁻¹)`; quaternions are `[w, x, y, z]`.
///
/// # Safety
/// `q_from` and `q_to` must reference four doubles, `out` three.
#[no_mangle]
pub unsafe extern "C" fn predress_orientation_displacement(
    q_from: *const f64,
    q_to: *const f64,
    out: *mut f64,
) -> PredressStatus {
    guard(|| {
        let a: [f64; 4] = slice_arg(q_from, 4, "q_from")?.try_into().expect("four values");
        let b: [f64; 4] = slice_arg(q_to, 4, "q_to")?.try_into().expect("four values");
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let r = quat::orientation_displacement(&quat::from_wxyz(a)?, &quat::from_wxyz(b)?)?;
        std::slice::from_raw_parts_mut(out, 3).copy_from_slice(r.as_slice());
        Ok(())
    })
}

/// Runs the experiment described by the config file and returns the batch
/// report as JSON. `n_episodes = 0` keeps the configured count; a null
/// `seed` keeps the configured seed. Runs sequentially.
///
/// # Safety
/// `config_path` must be NUL-terminated, `seed` null or valid, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn predress_simulate(
    config_path: *const c_char,
    n_episodes: usize,
    seed: *const u64,
    out: *mut *mut c_char,
) -> PredressStatus {
    guard(|| {
        let path = path_arg(config_path, "config_path")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let cfg = ExperimentConfig::load(path)?;
        let exp = Experiment::from_config(&cfg, EstimatorSpec::resolve(&cfg.estimator)?)?;
        let n = if n_episodes == 0 { cfg.n_episodes } else { n_episodes };
        let seed = seed.as_ref().copied().unwrap_or(cfg.seed);
        let report = run_batch(&exp, n, seed, ExecutionMode::Sequential)?;
        let text = CString::new(report.to_json()).expect("JSON has no NUL bytes");
        write_out(out, text.into_raw(), "out")
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn predress_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
