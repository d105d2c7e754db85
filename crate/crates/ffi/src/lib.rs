//! C ABI over the policy-poison library.
//!
//! Every fallible entry point returns a [`PpStatus`]. On failure the message
//! is kept per thread and read back with [`pp_last_error_message`]. Objects
//! cross the boundary as opaque handles created by `*_new`/`*_read` or an
//! attack call, and released with the matching `*_free`. Matrices are dense
//! row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::{DMatrix, DVector};

use policy_poison::conic::Norm;
use policy_poison::data::{read_dataset, ContinuousDataset, ContinuousItem, Dataset, TabularDataset, TabularItem};
use policy_poison::lqr::attack::{
    goal_loss, make_target_policy, solve_lqr_attack, verify_lqr_attack, LqrAttackConfig, LqrAttackResult,
};
use policy_poison::lqr::victim::sysid;
use policy_poison::lqr::{optimal_lqr_policy, LinearDynamics, QuadraticLoss};
use policy_poison::mdp::Policy;
use policy_poison::tce::attack::{solve_tce_attack, verify_tce_attack, TceAttackConfig, TceAttackResult};
use policy_poison::tce::victim::estimate_mdp;
use policy_poison::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PpStatus {
    Ok = 0,
    InvalidArgument = 1,
    ShapeMismatch = 2,
    MissingCoverage = 3,
    IterationLimit = 4,
    IllPosed = 5,
    NotStabilizable = 6,
    NotIdentifiable = 7,
    Infeasible = 8,
    SolverFailure = 9,
    ParseError = 10,
    VerificationFailed = 11,
    IoError = 12,
    NullPointer = 13,
    Panic = 14,
}

/// Attack cost norm codes accepted by the `norm` arguments.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PpNorm {
    L1 = 1,
    L2 = 2,
    LInf = 3,
}

/// Opaque tabular dataset.
pub struct PpTabularDataset(TabularDataset);

/// Opaque continuous dataset.
pub struct PpContinuousDataset(ContinuousDataset);

/// Opaque result of a tabular attack.
pub struct PpTceAttack {
    result: TceAttackResult,
    discount: f64,
}

/// Opaque result of an LQR attack.
pub struct PpLqrAttack(LqrAttackResult);

struct Fail {
    status: PpStatus,
    message: String,
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidArgument(_) => PpStatus::InvalidArgument,
            Error::Shape(_) => PpStatus::ShapeMismatch,
            Error::Coverage { .. } => PpStatus::MissingCoverage,
            Error::IterationLimit(_) => PpStatus::IterationLimit,
            Error::IllPosed(_) => PpStatus::IllPosed,
            Error::NotStabilizable(_) => PpStatus::NotStabilizable,
            Error::NotIdentifiable(_) => PpStatus::NotIdentifiable,
            Error::Infeasible(_) => PpStatus::Infeasible,
            Error::Solver(_) => PpStatus::SolverFailure,
            Error::Parse { .. } | Error::Json(_) => PpStatus::ParseError,
            Error::Verification(_) => PpStatus::VerificationFailed,
            Error::Io(_) => PpStatus::IoError,
        };
        Fail {
            status,
            message: e.to_string(),
        }
    }
}

fn null(name: &str) -> Fail {
    Fail {
        status: PpStatus::NullPointer,
        message: format!("{name} is null"),
    }
}

fn invalid(message: impl Into<String>) -> Fail {
    Fail {
        status: PpStatus::InvalidArgument,
        message: message.into(),
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(text));
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PpStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PpStatus::Ok,
        Ok(Err(fail)) => {
            set_last_error(&fail.message);
            fail.status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_last_error(&format!("internal panic: {msg}"));
            PpStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(data: *const T, len: usize, name: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn slice_mut<'a, T>(data: *mut T, len: usize, name: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if data.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts_mut(data, len))
}

unsafe fn handle<'a, T>(h: *const T, name: &str) -> Result<&'a T, Fail> {
    h.as_ref().ok_or_else(|| null(name))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn free<T>(h: *mut T) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

fn copy_out(src: &[f64], dst: &mut [f64], name: &str) -> Result<(), Fail> {
    if src.len() != dst.len() {
        return Err(invalid(format!("{name} needs length {}, got {}", src.len(), dst.len())));
    }
    dst.copy_from_slice(src);
    Ok(())
}

fn norm_from_code(code: u32) -> Result<Norm, Fail> {
    match code {
        c if c == PpNorm::L1 as u32 => Ok(Norm::L1),
        c if c == PpNorm::L2 as u32 => Ok(Norm::L2),
        c if c == PpNorm::LInf as u32 => Ok(Norm::LInf),
        _ => Err(invalid(format!("unknown norm code {code}"))),
    }
}

unsafe fn path_arg(path: *const c_char) -> Result<String, Fail> {
    if path.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(path)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| invalid("path is not valid UTF-8"))
}

fn json_string<T: serde::Serialize>(value: &T) -> *mut c_char {
    match serde_json::to_string(value).ok().and_then(|s| CString::new(s).ok()) {
        Some(s) => s.into_raw(),
        None => ptr::null_mut(),
    }
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn pp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL if the last
/// status-returning call succeeded. The pointer is valid until the next
/// status-returning call on the same thread.
#[no_mangle]
pub extern "C" fn pp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by a `*_json` call.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn pp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds a tabular dataset from parallel arrays of length `len`.
///
/// # Safety
/// Each array must hold `len` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pp_tabular_dataset_new(
    num_states: usize,
    num_actions: usize,
    states: *const usize,
    actions: *const usize,
    rewards: *const f64,
    next_states: *const usize,
    len: usize,
    out: *mut *mut PpTabularDataset,
) -> PpStatus {
    guard(|| {
        let s = slice(states, len, "states")?;
        let a = slice(actions, len, "actions")?;
        let r = slice(rewards, len, "rewards")?;
        let sn = slice(next_states, len, "next_states")?;
        let items = (0..len)
            .map(|i| TabularItem {
                s: s[i],
                a: a[i],
                r: r[i],
                s_next: sn[i],
            })
            .collect();
        let data = TabularDataset::unlabeled(num_states, num_actions, items)?;
        store(out, PpTabularDataset(data))
    })
}

/// Reads a tabular dataset from CSV or JSON.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pp_tabular_dataset_read(path: *const c_char, out: *mut *mut PpTabularDataset) -> PpStatus {
    guard(|| match read_dataset(path_arg(path)?)? {
        Dataset::Tabular(d) => store(out, PpTabularDataset(d)),
        Dataset::Continuous(_) => Err(invalid("file holds a continuous dataset")),
    })
}

/// Number of transitions, or 0 for a NULL handle.
///
/// # Safety
/// `dataset` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pp_tabular_dataset_len(dataset: *const PpTabularDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.len())
}

/// # Safety
/// `dataset` must be NULL or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pp_tabular_dataset_free(dataset: *mut PpTabularDataset) {
    free(dataset)
}

/// Builds a continuous dataset. `states` and `next_states` hold `len` rows of
/// `state_dim` values, `actions` holds `len` rows of `action_dim` values.
///
/// # Safety
/// Arrays must have the stated sizes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pp_continuous_dataset_new(
    state_dim: usize,
    action_dim: usize,
    states: *const f64,
    actions: *const f64,
    rewards: *const f64,
    next_states: *const f64,
    len: usize,
    out: *mut *mut PpContinuousDataset,
) -> PpStatus {
    guard(|| {
        let s = slice(states, len * state_dim, "states")?;
        let a = slice(actions, len * action_dim, "actions")?;
        let r = slice(rewards, len, "rewards")?;
        let sn = slice(next_states, len * state_dim, "next_states")?;
        let items = (0..len)
            .map(|i| ContinuousItem {
                s: s[i * state_dim..(i + 1) * state_dim].to_vec(),
                a: a[i * action_dim..(i + 1) * action_dim].to_vec(),
                r: r[i],
                s_next: sn[i * state_dim..(i + 1) * state_dim].to_vec(),
            })
            .collect();
        let data = ContinuousDataset::new(state_dim, action_dim, items)?;
        store(out, PpContinuousDataset(data))
    })
}

/// Reads a continuous dataset from CSV or JSON.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pp_continuous_dataset_read(
    path: *const c_char,
    out: *mut *mut PpContinuousDataset,
) -> PpStatus {
    guard(|| match read_dataset(path_arg(path)?)? {
        Dataset::Continuous(d) => store(out, PpContinuousDataset(d)),
        Dataset::Tabular(_) => Err(invalid("file holds a tabular dataset")),
    })
}

/// # Safety
/// `dataset` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pp_continuous_dataset_len(dataset: *const PpContinuousDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.len())
}

/// # Safety
/// `dataset` must be NULL or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pp_continuous_dataset_free(dataset: *mut PpContinuousDataset) {
    free(dataset)
}

/// Cheapest reward poisoning that makes `target` (one action per state) the
/// unique greedy policy by `margin`. `norm` is a [`PpNorm`] code.
///
/// # Safety
/// `dataset` must be live, `target` must hold `target_len` entries and `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn pp_tce_attack(
    dataset: *const PpTabularDataset,
    discount: f64,
    target: *const usize,
    target_len: usize,
    margin: f64,
    norm: u32,
    out: *mut *mut PpTceAttack,
) -> PpStatus {
    guard(|| {
        let data = &handle(dataset, "dataset")?.0;
        let target = Policy::new(slice(target, target_len, "target")?.to_vec(), data.num_actions())?;
        let config = TceAttackConfig {
            target,
            margin,
            norm: norm_from_code(norm)?,
        };
        let est = estimate_mdp(data, discount)?;
        let result = solve_tce_attack(data, &est.mdp.transition, discount, &config)?;
        store(out, PpTceAttack { result, discount })
    })
}

/// # Safety
/// `attack` must be live and `cost` writable.
#[no_mangle]
pub unsafe extern "C" fn pp_tce_attack_cost(attack: *const PpTceAttack, cost: *mut f64) -> PpStatus {
    guard(|| {
        let h = handle(attack, "attack")?;
        *cost.as_mut().ok_or_else(|| null("cost"))? = h.result.cost;
        Ok(())
    })
}

/// Copies the poisoned rewards; `len` must equal the dataset length.
///
/// # Safety
/// `attack` must be live and `rewards` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pp_tce_attack_rewards(attack: *const PpTceAttack, rewards: *mut f64, len: usize) -> PpStatus {
    guard(|| {
        let h = handle(attack, "attack")?;
        copy_out(&h.result.poisoned_rewards, slice_mut(rewards, len, "rewards")?, "rewards")
    })
}

/// Re-learns on the poisoned data and reports whether every check passed.
/// A failed check is not an error: the call still returns OK.
///
/// # Safety
/// Handles must be live, `dataset` must be the attacked one and `passed`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn pp_tce_attack_verify(
    attack: *const PpTceAttack,
    dataset: *const PpTabularDataset,
    passed: *mut bool,
) -> PpStatus {
    guard(|| {
        let h = handle(attack, "attack")?;
        let data = &handle(dataset, "dataset")?.0;
        let v = verify_tce_attack(&h.result, data, h.discount)?;
        *passed.as_mut().ok_or_else(|| null("passed"))? = v.passed;
        Ok(())
    })
}

/// Full result as JSON; release with [`pp_string_free`]. NULL on failure.
///
/// # Safety
/// `attack` must be NULL or live.
#[no_mangle]
pub unsafe extern "C" fn pp_tce_attack_json(attack: *const PpTceAttack) -> *mut c_char {
    attack.as_ref().map_or(ptr::null_mut(), |h| json_string(&h.result))
}

/// # Safety
/// `attack` must be NULL or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pp_tce_attack_free(attack: *mut PpTceAttack) {
    free(attack)
}

/// Poisons the rewards so the learner recovers the controller that drives the
/// state to `goal` under the loss ½|s − goal|² + action_cost·|a|².
/// `eps` bounds the learned action cost from below.
///
/// # Safety
/// `dataset` must be live, `goal` must hold `goal_len` doubles and `out` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn pp_lqr_attack(
    dataset: *const PpContinuousDataset,
    goal: *const f64,
    goal_len: usize,
    action_cost: f64,
    eps: f64,
    gamma: f64,
    norm: u32,
    out: *mut *mut PpLqrAttack,
) -> PpStatus {
    guard(|| {
        let data = &handle(dataset, "dataset")?.0;
        let goal = slice(goal, goal_len, "goal")?;
        if goal.len() != data.state_dim() {
            return Err(invalid(format!("goal needs {} entries", data.state_dim())));
        }
        let config = LqrAttackConfig {
            attacker_loss: goal_loss(&DVector::from_column_slice(goal), action_cost)?,
            norm: norm_from_code(norm)?,
            eps,
            gamma,
        };
        let (a_hat, b_hat) = sysid(data)?;
        let target = make_target_policy(&config, &a_hat, &b_hat)?;
        let result = solve_lqr_attack(data, &a_hat, &b_hat, &target, &config)?;
        store(out, PpLqrAttack(result))
    })
}

/// # Safety
/// `attack` must be live and `cost` writable.
#[no_mangle]
pub unsafe extern "C" fn pp_lqr_attack_cost(attack: *const PpLqrAttack, cost: *mut f64) -> PpStatus {
    guard(|| {
        let h = handle(attack, "attack")?;
        *cost.as_mut().ok_or_else(|| null("cost"))? = h.0.cost;
        Ok(())
    })
}

/// # Safety
/// `attack` must be live and `rewards` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pp_lqr_attack_rewards(attack: *const PpLqrAttack, rewards: *mut f64, len: usize) -> PpStatus {
    guard(|| {
        let h = handle(attack, "attack")?;
        copy_out(&h.0.poisoned_rewards, slice_mut(rewards, len, "rewards")?, "rewards")
    })
}

/// Policy the learner recovers from the poisoned data: `gain` receives the
/// m×n matrix K row-major, `offset` the m-vector k.
///
/// # Safety
/// `attack` must be live; buffers must hold `gain_len` and `offset_len`
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn pp_lqr_attack_learned_policy(
    attack: *const PpLqrAttack,
    gain: *mut f64,
    gain_len: usize,
    offset: *mut f64,
    offset_len: usize,
) -> PpStatus {
    guard(|| {
        let h = handle(attack, "attack")?;
        let rows: Vec<f64> = h.0.learned_gain.iter().flatten().copied().collect();
        copy_out(&rows, slice_mut(gain, gain_len, "gain")?, "gain")?;
        copy_out(&h.0.learned_offset, slice_mut(offset, offset_len, "offset")?, "offset")
    })
}

/// # Safety
/// Handles must be live, `dataset` must be the attacked one and `passed`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn pp_lqr_attack_verify(
    attack: *const PpLqrAttack,
    dataset: *const PpContinuousDataset,
    passed: *mut bool,
) -> PpStatus {
    guard(|| {
        let h = handle(attack, "attack")?;
        let data = &handle(dataset, "dataset")?.0;
        let v = verify_lqr_attack(&h.0, data)?;
        *passed.as_mut().ok_or_else(|| null("passed"))? = v.passed;
        Ok(())
    })
}

/// # Safety
/// `attack` must be NULL or live.
#[no_mangle]
pub unsafe extern "C" fn pp_lqr_attack_json(attack: *const PpLqrAttack) -> *mut c_char {
    attack.as_ref().map_or(ptr::null_mut(), |h| json_string(&h.0))
}

/// # Safety
/// `attack` must be NULL or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pp_lqr_attack_free(attack: *mut PpLqrAttack) {
    free(attack)
}

/// Optimal discounted LQR policy a = Ks + k for dynamics (A, B) and loss
/// ½s'Qs + q's + a'Ra + c. A and Q are n×n, B is n×m, R is m×m, all
/// row-major. Writes K (m×n, row-major) and k (m).
///
/// # Safety
/// Every array must hold the number of doubles implied by `n` and `m`.
#[no_mangle]
pub unsafe extern "C" fn pp_lqr_optimal_policy(
    n: usize,
    m: usize,
    a: *const f64,
    b: *const f64,
    q_mat: *const f64,
    r_mat: *const f64,
    q_vec: *const f64,
    c: f64,
    gamma: f64,
    gain: *mut f64,
    offset: *mut f64,
) -> PpStatus {
    guard(|| {
        if n == 0 || m == 0 {
            return Err(invalid("dimensions must be positive"));
        }
        let dynamics = LinearDynamics::new(
            DMatrix::from_row_slice(n, n, slice(a, n * n, "a")?),
            DMatrix::from_row_slice(n, m, slice(b, n * m, "b")?),
            0.0,
        )?;
        let loss = QuadraticLoss::new(
            DMatrix::from_row_slice(n, n, slice(q_mat, n * n, "q_mat")?),
            DMatrix::from_row_slice(m, m, slice(r_mat, m * m, "r_mat")?),
            DVector::from_column_slice(slice(q_vec, n, "q_vec")?),
            c,
        )?;
        let policy = optimal_lqr_policy(&dynamics, &loss, gamma)?;
        let gain = slice_mut(gain, m * n, "gain")?;
        for i in 0..m {
            for j in 0..n {
                gain[i * n + j] = policy.gain[(i, j)];
            }
        }
        copy_out(policy.offset.as_slice(), slice_mut(offset, m, "offset")?, "offset")
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn errors_are_recorded_per_call() {
        let mut out = ptr::null_mut();
        let status = unsafe { pp_tabular_dataset_new(2, 2, ptr::null(), ptr::null(), ptr::null(), ptr::null(), 3, &mut out) };
        assert_eq!(status, PpStatus::NullPointer);
        let msg = unsafe { CStr::from_ptr(pp_last_error_message()) };
        assert!(msg.to_str().unwrap().contains("states"));
        assert!(out.is_null());
        assert_eq!(unsafe { pp_tabular_dataset_len(ptr::null()) }, 0);
        assert_eq!(guard(|| Ok(())), PpStatus::Ok);
        assert!(pp_last_error_message().is_null());
    }

    #[test]
    fn norm_codes() {
        assert_eq!(norm_from_code(1).ok(), Some(Norm::L1));
        assert_eq!(norm_from_code(3).ok(), Some(Norm::LInf));
        assert!(norm_from_code(0).is_err());
    }

    #[test]
    fn panics_become_status() {
        let status = guard(|| panic!("boom"));
        assert_eq!(status, PpStatus::Panic);
        let msg = unsafe { CStr::from_ptr(pp_last_error_message()) };
        assert!(msg.to_str().unwrap().contains("boom"));
    }
}
