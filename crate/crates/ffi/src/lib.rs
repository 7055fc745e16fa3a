//! C ABI over the `rmda` crate.
//!
//! Objects are opaque handles created by `*_new` and released by `*_free`.
//! Every fallible function returns an [`RmdaStatus`]; on failure the message
//! is available from [`rmda_last_error`] on the same thread. Output values
//! go through caller-provided pointers and are written only on success.
//!
//! Schedules are passed as JSON objects, for example
//! `{"kind": "multi_step", "base": 0.1, "factor": 0.1, "period": 50}`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use rmda::harness::ExperimentConfig;
use rmda::optimizers::RmdaState;
use rmda::{Error, GroupPartition, ParamVector, Regularizer, Schedule};

/// Result codes. `Ok` is zero; everything else is a failure.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RmdaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Structural = 3,
    Parameter = 4,
    Input = 5,
    Schedule = 6,
    Format = 7,
    Config = 8,
    Data = 9,
    Numeric = 10,
    Io = 11,
    Panic = 12,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RmdaRegularizerKind {
    None = 0,
    L1 = 1,
    GroupLasso = 2,
    SparseGroupLasso = 3,
    GroupMcp = 4,
    L1GroupMcp = 5,
    BoxIndicator = 6,
}

/// Regularizer hyperparameters. Fields a kind does not use are ignored.
///
/// `lambda` is the group weight (or the ℓ1 weight for `L1`), `lambda_l1` the
/// ℓ1 weight of the sparse-group kinds, `omega` the MCP concavity, and
/// `lo`/`hi` the box bounds.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RmdaRegularizerParams {
    pub kind: RmdaRegularizerKind,
    pub lambda: f64,
    pub lambda_l1: f64,
    pub omega: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Which iterate [`rmda_state_get`] copies out.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RmdaIterate {
    /// The averaged iterate `W`.
    W = 0,
    /// The proximal point `W~`, which carries the exact sparsity.
    WTilde = 1,
    /// The restart anchor `W0`.
    W0 = 2,
}

pub struct RmdaPartition(GroupPartition);
pub struct RmdaRegularizer(Regularizer);
pub struct RmdaOptimizer(RmdaState);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

/// A status plus the message stored for [`rmda_last_error`].
struct Bad(RmdaStatus, String);

impl From<Error> for Bad {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Structural(_) => RmdaStatus::Structural,
            Error::Parameter(_) => RmdaStatus::Parameter,
            Error::Input(_) => RmdaStatus::Input,
            Error::InvalidSchedule(_) => RmdaStatus::Schedule,
            Error::Format { .. } => RmdaStatus::Format,
            Error::Config(_) => RmdaStatus::Config,
            Error::Data(_) => RmdaStatus::Data,
            Error::Numeric(_) => RmdaStatus::Numeric,
            Error::Io(_) => RmdaStatus::Io,
        };
        Bad(status, e.to_string())
    }
}

fn null(what: &str) -> Bad {
    Bad(RmdaStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Bad {
    Bad(RmdaStatus::InvalidArgument, msg.into())
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Bad>) -> RmdaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RmdaStatus::Ok,
        Ok(Err(Bad(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("internal panic: {msg}"));
            RmdaStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Bad> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Bad> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Bad> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Bad> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn out<T>(p: *mut T, value: T, what: &str) -> Result<(), Bad> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(value);
    Ok(())
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Bad> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|e| invalid(format!("{what} is not UTF-8: {e}")))
}

unsafe fn schedule(p: *const c_char, what: &str) -> Result<Schedule, Bad> {
    let s: Schedule = serde_json::from_str(text(p, what)?).map_err(|e| invalid(format!("{what}: {e}")))?;
    s.validate()?;
    Ok(s)
}

fn copy_into(src: &[f64], dst: &mut [f64]) -> Result<(), Bad> {
    if src.len() != dst.len() {
        return Err(invalid(format!("buffer holds {} values, expected {}", dst.len(), src.len())));
    }
    dst.copy_from_slice(src);
    Ok(())
}

/// Message for the last failed call on this thread, or an empty string.
///
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rmda_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds a group partition of `dim` coordinates.
///
/// Group `g` holds `sizes[g]` consecutive entries of `indices`. `weights` may
/// be null, giving each group the weight `sqrt(size)`.
///
/// # Safety
/// `sizes` and `weights` (when non-null) must point to `n_groups` values and
/// `indices` to the sum of `sizes`. `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rmda_partition_new(
    dim: usize,
    sizes: *const usize,
    n_groups: usize,
    indices: *const usize,
    n_indices: usize,
    weights: *const f64,
    out_partition: *mut *mut RmdaPartition,
) -> RmdaStatus {
    guard(|| {
        let sizes = slice(sizes, n_groups, "sizes")?;
        let indices = slice(indices, n_indices, "indices")?;
        if sizes.iter().sum::<usize>() != n_indices {
            return Err(invalid("group sizes do not add up to n_indices"));
        }
        let mut rest = indices;
        let groups: Vec<Vec<usize>> = sizes
            .iter()
            .map(|&s| {
                let (g, tail) = rest.split_at(s);
                rest = tail;
                g.to_vec()
            })
            .collect();
        let p = if weights.is_null() {
            GroupPartition::with_size_weights(dim, groups)?
        } else {
            GroupPartition::new(dim, groups, slice(weights, n_groups, "weights")?.to_vec())?
        };
        out(out_partition, Box::into_raw(Box::new(RmdaPartition(p))), "out_partition")
    })
}

/// Contiguous groups of `size` coordinates with `sqrt(size)` weights.
///
/// # Safety
/// `out_partition` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rmda_partition_contiguous(
    dim: usize,
    size: usize,
    out_partition: *mut *mut RmdaPartition,
) -> RmdaStatus {
    guard(|| {
        let p = GroupPartition::contiguous(dim, size)?;
        out(out_partition, Box::into_raw(Box::new(RmdaPartition(p))), "out_partition")
    })
}

/// # Safety
/// `partition` must be null or come from a `rmda_partition_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn rmda_partition_free(partition: *mut RmdaPartition) {
    if !partition.is_null() {
        drop(Box::from_raw(partition));
    }
}

/// Number of groups.
///
/// # Safety
/// `partition` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rmda_partition_len(partition: *const RmdaPartition) -> usize {
    partition.as_ref().map_or(0, |p| p.0.len())
}

/// Builds a regularizer. Group kinds copy `partition`, which the caller
/// still owns; the other kinds accept null.
///
/// # Safety
/// `partition` must be null or a live handle; `out_regularizer` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rmda_regularizer_new(
    params: RmdaRegularizerParams,
    partition: *const RmdaPartition,
    out_regularizer: *mut *mut RmdaRegularizer,
) -> RmdaStatus {
    guard(|| {
        let part = || handle(partition, "partition").map(|p| p.0.clone());
        let p = &params;
        let reg = match p.kind {
            RmdaRegularizerKind::None => Regularizer::None,
            RmdaRegularizerKind::L1 => Regularizer::L1 { lambda: p.lambda },
            RmdaRegularizerKind::GroupLasso => Regularizer::GroupLasso { lambda: p.lambda, partition: part()? },
            RmdaRegularizerKind::SparseGroupLasso => Regularizer::SparseGroupLasso {
                lambda_l1: p.lambda_l1,
                lambda_group: p.lambda,
                partition: part()?,
            },
            RmdaRegularizerKind::GroupMcp => {
                Regularizer::GroupMcp { lambda: p.lambda, omega: p.omega, partition: part()? }
            }
            RmdaRegularizerKind::L1GroupMcp => Regularizer::L1GroupMcp {
                lambda_l1: p.lambda_l1,
                lambda_group: p.lambda,
                omega: p.omega,
                partition: part()?,
            },
            RmdaRegularizerKind::BoxIndicator => Regularizer::BoxIndicator { lo: p.lo, hi: p.hi },
        };
        reg.validate()?;
        out(out_regularizer, Box::into_raw(Box::new(RmdaRegularizer(reg))), "out_regularizer")
    })
}

/// # Safety
/// `reg` must be null or come from [`rmda_regularizer_new`].
#[no_mangle]
pub unsafe extern "C" fn rmda_regularizer_free(reg: *mut RmdaRegularizer) {
    if !reg.is_null() {
        drop(Box::from_raw(reg));
    }
}

/// `psi(w)`; infinite outside a box.
///
/// # Safety
/// `w` must point to `len` values and `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rmda_regularizer_value(
    reg: *const RmdaRegularizer,
    w: *const f64,
    len: usize,
    out_value: *mut f64,
) -> RmdaStatus {
    guard(|| {
        let v = handle(reg, "reg")?.0.value(slice(w, len, "w")?)?;
        out(out_value, v, "out_value")
    })
}

/// `prox_{tau psi}(v)` written to `out_buf`. `out_buf` may alias `v`.
///
/// # Safety
/// `v` and `out_buf` must each point to `len` values.
#[no_mangle]
pub unsafe extern "C" fn rmda_regularizer_prox(
    reg: *const RmdaRegularizer,
    v: *const f64,
    len: usize,
    tau: f64,
    out_buf: *mut f64,
) -> RmdaStatus {
    guard(|| {
        let reg = handle(reg, "reg")?;
        let result = reg.0.prox(slice(v, len, "v")?, tau)?;
        copy_into(&result, slice_mut(out_buf, len, "out_buf")?)
    })
}

/// Fraction of groups of `partition` that are exactly zero in `w`.
///
/// # Safety
/// `w` must point to `len` values and `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rmda_group_sparsity(
    partition: *const RmdaPartition,
    w: *const f64,
    len: usize,
    out_value: *mut f64,
) -> RmdaStatus {
    guard(|| {
        let s = rmda::metrics::group_sparsity(slice(w, len, "w")?, &handle(partition, "partition")?.0)?;
        out(out_value, s, "out_value")
    })
}

/// Creates an RMDA optimizer anchored at `w0`.
///
/// `eta_json` and `c_json` are schedules over the epoch index. The
/// regularizer is copied; the caller keeps ownership of `reg`.
///
/// # Safety
/// `w0` must point to `len` values, the strings must be NUL-terminated, and
/// `out_state` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rmda_state_new(
    w0: *const f64,
    len: usize,
    reg: *const RmdaRegularizer,
    eta_json: *const c_char,
    c_json: *const c_char,
    out_state: *mut *mut RmdaOptimizer,
) -> RmdaStatus {
    guard(|| {
        let w0 = ParamVector::from_vec(slice(w0, len, "w0")?.to_vec())?;
        let reg = handle(reg, "reg")?.0.clone();
        let state = RmdaState::new(w0, reg, schedule(eta_json, "eta_json")?, schedule(c_json, "c_json")?)?;
        out(out_state, Box::into_raw(Box::new(RmdaOptimizer(state))), "out_state")
    })
}

/// # Safety
/// `state` must be null or come from [`rmda_state_new`].
#[no_mangle]
pub unsafe extern "C" fn rmda_state_free(state: *mut RmdaOptimizer) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// One RMDA step with minibatch gradient `grad` at the current `W`. A failed
/// step leaves the state unchanged.
///
/// # Safety
/// `grad` must point to `len` values.
#[no_mangle]
pub unsafe extern "C" fn rmda_state_step(
    state: *mut RmdaOptimizer,
    grad: *const f64,
    len: usize,
    epoch: u64,
) -> RmdaStatus {
    guard(|| Ok(handle_mut(state, "state")?.0.step(slice(grad, len, "grad")?, epoch)?))
}

/// Regularized dual averaging step: RMDA with the momentum fixed at one.
///
/// # Safety
/// `grad` must point to `len` values.
#[no_mangle]
pub unsafe extern "C" fn rmda_state_rda_step(
    state: *mut RmdaOptimizer,
    grad: *const f64,
    len: usize,
    epoch: u64,
) -> RmdaStatus {
    guard(|| Ok(handle_mut(state, "state")?.0.rda_step(slice(grad, len, "grad")?, epoch)?))
}

/// Re-anchors at the current `W` and clears the dual average.
///
/// # Safety
/// `state` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rmda_state_restart(state: *mut RmdaOptimizer) -> RmdaStatus {
    guard(|| {
        handle_mut(state, "state")?.0.restart();
        Ok(())
    })
}

/// Copies one of the iterates into `out_buf`, which must hold exactly the
/// parameter dimension.
///
/// # Safety
/// `out_buf` must point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn rmda_state_get(
    state: *const RmdaOptimizer,
    which: RmdaIterate,
    out_buf: *mut f64,
    len: usize,
) -> RmdaStatus {
    guard(|| {
        let s = &handle(state, "state")?.0;
        let src = match which {
            RmdaIterate::W => s.w(),
            RmdaIterate::WTilde => s.w_tilde(),
            RmdaIterate::W0 => s.w0(),
        };
        copy_into(src.values(), slice_mut(out_buf, len, "out_buf")?)
    })
}

/// Parameter dimension, or 0 for a null handle.
///
/// # Safety
/// `state` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rmda_state_dim(state: *const RmdaOptimizer) -> usize {
    state.as_ref().map_or(0, |s| s.0.w().dim())
}

/// Steps since the last restart.
///
/// # Safety
/// `state` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rmda_state_t(state: *const RmdaOptimizer) -> u64 {
    state.as_ref().map_or(0, |s| s.0.t())
}

/// Accumulated dual-averaging weight `alpha`.
///
/// # Safety
/// `state` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rmda_state_alpha(state: *const RmdaOptimizer) -> f64 {
    state.as_ref().map_or(0.0, |s| s.0.alpha())
}

/// Trains from a TOML experiment config and returns the run summary as a
/// JSON string, to be released with [`rmda_string_free`].
///
/// # Safety
/// `config_toml` must be NUL-terminated and `out_summary_json` writable.
#[no_mangle]
pub unsafe extern "C" fn rmda_run_experiment(
    config_toml: *const c_char,
    out_summary_json: *mut *mut c_char,
) -> RmdaStatus {
    guard(|| {
        let config = ExperimentConfig::from_toml_str(text(config_toml, "config_toml")?)?;
        let output = rmda::harness::run_experiment(&config)?;
        let json = serde_json::to_string(&output.summary).map_err(|e| invalid(e.to_string()))?;
        let json = CString::new(json).map_err(|e| invalid(e.to_string()))?;
        out(out_summary_json, json.into_raw(), "out_summary_json")
    })
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn rmda_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

