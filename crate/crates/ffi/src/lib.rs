//! C ABI over `msl-core`.
//!
//! Objects cross the boundary as opaque handles created by a `*_new`
//! function and released by the matching `*_free`. Every fallible call
//! returns an [`MslStatus`]; on failure a message is available from
//! [`msl_last_error`] on the same thread until the next failing call.
//!
//! Matrices are exchanged as dense row-major `double` buffers together with
//! their length, which is checked against the expected shape. Panics never
//! unwind into C; they surface as `MSL_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use msl_core::diagnostics::{DiagnosticsOptions, DiagnosticsRecord};
use msl_core::model::{make_ground_truth, GroundTruth};
use msl_core::optimizer::{
    run_trajectory, GdConfig, StopReason, TrajectoryRecord, DEFAULT_STOP_TRAIN_LOSS,
};
use msl_core::sensing::SensingOperator;
use msl_core::Error;
use nalgebra::{DMatrix, DVector};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MslStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    ModeMismatch = 4,
    Divergence = 5,
    OutOfRange = 6,
    Panic = 7,
    Internal = 8,
}

/// Why a trajectory stopped.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MslStopReason {
    MaxIters = 0,
    TrainLoss = 1,
    TestError = 2,
}

/// Planted low-rank matrix with its singular factors.
pub struct MslGroundTruth(GroundTruth);

/// Measurement operator, empirical or population.
pub struct MslOperator(SensingOperator);

/// A finished gradient-descent run.
pub struct MslTrajectory(TrajectoryRecord);

/// Gradient-descent settings. Obtain defaults from [`msl_gd_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MslGdConfig {
    /// Absolute step size.
    pub mu: f64,
    /// Initialization scale.
    pub alpha: f64,
    /// Factor width.
    pub k: usize,
    pub max_iters: usize,
    pub record_every: usize,
    /// Stop once the train loss drops below this; `<= 0` disables the check.
    pub stop_train_loss: f64,
    /// Initialization seed.
    pub seed: u64,
}

/// One recorded iteration. Metrics that are undefined at that iterate are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MslRecord {
    pub iter: usize,
    pub train_loss: f64,
    pub rel_test_error_fro: f64,
    pub rel_test_error_spec: f64,
    pub sigma_min_signal: f64,
    pub nuisance_norm: f64,
    pub angle_norm: f64,
    pub imbalance_norm: f64,
    pub imbalance_nuisance: f64,
    pub imbalance_signal_angle: f64,
    pub vw_imbalance: f64,
    pub delta_norm: f64,
    pub z_norm: f64,
    pub sigma_min_lz: f64,
}

impl From<&DiagnosticsRecord> for MslRecord {
    fn from(r: &DiagnosticsRecord) -> Self {
        let nan = |x: Option<f64>| x.unwrap_or(f64::NAN);
        MslRecord {
            iter: r.iter,
            train_loss: r.train_loss,
            rel_test_error_fro: r.rel_test_error_fro,
            rel_test_error_spec: r.rel_test_error_spec,
            sigma_min_signal: nan(r.sigma_min_signal),
            nuisance_norm: nan(r.nuisance_norm),
            angle_norm: nan(r.angle_norm),
            imbalance_norm: r.imbalance_norm,
            imbalance_nuisance: nan(r.imbalance_nuisance),
            imbalance_signal_angle: nan(r.imbalance_signal_angle),
            vw_imbalance: r.vw_imbalance,
            delta_norm: nan(r.delta_norm),
            z_norm: r.z_norm,
            sigma_min_lz: r.sigma_min_lz,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> MslStatus {
    match err {
        Error::ShapeMismatch { .. } => MslStatus::ShapeMismatch,
        Error::PopulationMode(_) | Error::ModeMismatch(_) => MslStatus::ModeMismatch,
        Error::Divergence { .. } => MslStatus::Divergence,
        Error::InvalidDimension(_) | Error::InvalidParameter { .. } | Error::Config { .. } => {
            MslStatus::InvalidArgument
        }
        _ => MslStatus::Internal,
    }
}

struct Fail(MslStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MslStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MslStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            MslStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(MslStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn in_slice<'a>(
    p: *const f64,
    len: usize,
    expected: usize,
    what: &str,
) -> Result<&'a [f64], Fail> {
    check_len(len, expected, what)?;
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a>(
    p: *mut f64,
    len: usize,
    expected: usize,
    what: &str,
) -> Result<&'a mut [f64], Fail> {
    check_len(len, expected, what)?;
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn check_len(len: usize, expected: usize, what: &str) -> Result<(), Fail> {
    if len != expected {
        return Err(Fail(
            MslStatus::ShapeMismatch,
            format!("`{what}` has length {len}, expected {expected}"),
        ));
    }
    Ok(())
}

fn write_row_major(m: &DMatrix<f64>, out: &mut [f64]) {
    let cols = m.ncols();
    for ((i, j), v) in out
        .iter_mut()
        .enumerate()
        .map(|(idx, v)| ((idx / cols, idx % cols), v))
    {
        *v = m[(i, j)];
    }
}

fn read_row_major(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, data)
}

fn boxed<T>(value: T, out: &mut *mut T) {
    *out = Box::into_raw(Box::new(value));
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn msl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version string (static storage).
#[no_mangle]
pub extern "C" fn msl_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Random rank-`r` ground truth of shape `n1 x n2` with unit spectral norm.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn msl_ground_truth_new(
    n1: usize,
    n2: usize,
    r: usize,
    seed: u64,
    out: *mut *mut MslGroundTruth,
) -> MslStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        boxed(MslGroundTruth(make_ground_truth(n1, n2, r, seed)?), out);
        Ok(())
    })
}

/// Releases a ground truth; NULL is ignored.
///
/// # Safety
/// `gt` must come from [`msl_ground_truth_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn msl_ground_truth_free(gt: *mut MslGroundTruth) {
    if !gt.is_null() {
        drop(Box::from_raw(gt));
    }
}

/// Shape, rank and condition number of a ground truth. Any output pointer may be NULL.
///
/// # Safety
/// `gt` must be a live handle; non-null outputs must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn msl_ground_truth_info(
    gt: *const MslGroundTruth,
    n1: *mut usize,
    n2: *mut usize,
    r: *mut usize,
    kappa: *mut f64,
) -> MslStatus {
    guard(|| {
        let gt = &handle(gt, "gt")?.0;
        if let Some(p) = n1.as_mut() {
            *p = gt.n1();
        }
        if let Some(p) = n2.as_mut() {
            *p = gt.n2();
        }
        if let Some(p) = r.as_mut() {
            *p = gt.rank;
        }
        if let Some(p) = kappa.as_mut() {
            *p = gt.kappa;
        }
        Ok(())
    })
}

/// Copies `X` into `out` (row-major, `len == n1 * n2`).
///
/// # Safety
/// `gt` must be a live handle and `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn msl_ground_truth_matrix(
    gt: *const MslGroundTruth,
    out: *mut f64,
    len: usize,
) -> MslStatus {
    guard(|| {
        let gt = &handle(gt, "gt")?.0;
        let out = out_slice(out, len, gt.n1() * gt.n2(), "out")?;
        write_row_major(&gt.x, out);
        Ok(())
    })
}

/// Gaussian operator with `m` measurements and `N(0, 1/m)` entries.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn msl_operator_gaussian(
    n1: usize,
    n2: usize,
    m: usize,
    seed: u64,
    out: *mut *mut MslOperator,
) -> MslStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        boxed(
            MslOperator(SensingOperator::gaussian(n1, n2, m, seed)?),
            out,
        );
        Ok(())
    })
}

/// Population operator: `A* A` is the identity.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn msl_operator_population(
    n1: usize,
    n2: usize,
    out: *mut *mut MslOperator,
) -> MslStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        boxed(MslOperator(SensingOperator::population(n1, n2)?), out);
        Ok(())
    })
}

/// Releases an operator; NULL is ignored.
///
/// # Safety
/// `op` must come from an `msl_operator_*` constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn msl_operator_free(op: *mut MslOperator) {
    if !op.is_null() {
        drop(Box::from_raw(op));
    }
}

/// Number of measurements (0 for a population operator), or 0 for NULL.
///
/// # Safety
/// `op` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn msl_operator_m(op: *const MslOperator) -> usize {
    op.as_ref().map_or(0, |o| o.0.m())
}

/// `out_i = <A_i, M>` for a row-major `n1 x n2` matrix `M`.
///
/// # Safety
/// `op` must be a live handle, `mat` valid for `mat_len` reads and `out` for `out_len` writes.
#[no_mangle]
pub unsafe extern "C" fn msl_operator_apply(
    op: *const MslOperator,
    mat: *const f64,
    mat_len: usize,
    out: *mut f64,
    out_len: usize,
) -> MslStatus {
    guard(|| {
        let op = &handle(op, "op")?.0;
        let mat = in_slice(mat, mat_len, op.n1() * op.n2(), "mat")?;
        let y = op.apply(&read_row_major(op.n1(), op.n2(), mat))?;
        out_slice(out, out_len, op.m(), "out")?.copy_from_slice(y.as_slice());
        Ok(())
    })
}

/// `out = sum_i y_i A_i`, written row-major.
///
/// # Safety
/// `op` must be a live handle, `y` valid for `y_len` reads and `out` for `out_len` writes.
#[no_mangle]
pub unsafe extern "C" fn msl_operator_adjoint(
    op: *const MslOperator,
    y: *const f64,
    y_len: usize,
    out: *mut f64,
    out_len: usize,
) -> MslStatus {
    guard(|| {
        let op = &handle(op, "op")?.0;
        if op.is_population() {
            return Err(Error::PopulationMode("adjoint").into());
        }
        let y = in_slice(y, y_len, op.m(), "y")?;
        let back = op.adjoint(&DVector::from_column_slice(y))?;
        write_row_major(&back, out_slice(out, out_len, op.n1() * op.n2(), "out")?);
        Ok(())
    })
}

/// Defaults: `mu = 0.01`, `alpha = 1e-5`, `k = 10`, `max_iters = 200000`,
/// `record_every = 10`, `stop_train_loss = 0.5e-9`, `seed = 0`.
#[no_mangle]
pub extern "C" fn msl_gd_config_default() -> MslGdConfig {
    MslGdConfig {
        mu: 0.01,
        alpha: 1e-5,
        k: 10,
        max_iters: 200_000,
        record_every: 10,
        stop_train_loss: DEFAULT_STOP_TRAIN_LOSS,
        seed: 0,
    }
}

/// Runs gradient descent on `gt` measured through `op`.
///
/// # Safety
/// `gt`, `op` and `cfg` must be live; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn msl_run_trajectory(
    gt: *const MslGroundTruth,
    op: *const MslOperator,
    cfg: *const MslGdConfig,
    out: *mut *mut MslTrajectory,
) -> MslStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let gt = &handle(gt, "gt")?.0;
        let op = &handle(op, "op")?.0;
        let c = handle(cfg, "cfg")?;
        let cfg = GdConfig {
            mu: c.mu,
            alpha: c.alpha,
            k: c.k,
            max_iters: c.max_iters,
            record_every: c.record_every,
            stop_train_loss: (c.stop_train_loss > 0.0).then_some(c.stop_train_loss),
            stop_rel_test_error: None,
            seed: c.seed,
        };
        let traj = run_trajectory(gt, op, &cfg, &DiagnosticsOptions::default())?;
        boxed(MslTrajectory(traj), out);
        Ok(())
    })
}

/// Releases a trajectory; NULL is ignored.
///
/// # Safety
/// `traj` must come from [`msl_run_trajectory`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn msl_trajectory_free(traj: *mut MslTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Number of recorded iterations, or 0 for NULL.
///
/// # Safety
/// `traj` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn msl_trajectory_len(traj: *const MslTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.0.records.len())
}

/// Iterations run and stop reason. Either output may be NULL.
///
/// # Safety
/// `traj` must be a live handle; non-null outputs must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn msl_trajectory_summary(
    traj: *const MslTrajectory,
    iterations: *mut usize,
    reason: *mut MslStopReason,
) -> MslStatus {
    guard(|| {
        let t = &handle(traj, "traj")?.0;
        if let Some(p) = iterations.as_mut() {
            *p = t.iterations_run;
        }
        if let Some(p) = reason.as_mut() {
            *p = match t.stop_reason {
                StopReason::MaxIters => MslStopReason::MaxIters,
                StopReason::TrainLoss => MslStopReason::TrainLoss,
                StopReason::TestError => MslStopReason::TestError,
            };
        }
        Ok(())
    })
}

/// Copies record `index` into `out`.
///
/// # Safety
/// `traj` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn msl_trajectory_record(
    traj: *const MslTrajectory,
    index: usize,
    out: *mut MslRecord,
) -> MslStatus {
    guard(|| {
        let t = &handle(traj, "traj")?.0;
        let out = out_ptr(out, "out")?;
        let rec = t.records.get(index).ok_or_else(|| {
            Fail(
                MslStatus::OutOfRange,
                format!("record {index} out of range (len {})", t.records.len()),
            )
        })?;
        *out = rec.into();
        Ok(())
    })
}

/// Final factors `V` (`n1 x k`) and `W` (`n2 x k`), row-major.
///
/// # Safety
/// `traj` must be a live handle; `v` and `w` valid for `v_len` and `w_len` writes.
#[no_mangle]
pub unsafe extern "C" fn msl_trajectory_factors(
    traj: *const MslTrajectory,
    v: *mut f64,
    v_len: usize,
    w: *mut f64,
    w_len: usize,
) -> MslStatus {
    guard(|| {
        let fp = &handle(traj, "traj")?.0.final_factors;
        write_row_major(&fp.v, out_slice(v, v_len, fp.v.len(), "v")?);
        write_row_major(&fp.w, out_slice(w, w_len, fp.w.len(), "w")?);
        Ok(())
    })
}
