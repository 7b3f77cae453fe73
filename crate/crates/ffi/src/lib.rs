//! C ABI over `dsm-core`: load or generate a district, step the simulator,
//! score traces and evaluate the reward.
//!
//! Every function returns a [`DsmStatus`]. On failure a description is kept
//! per thread and can be read with [`dsm_last_error`]. Handles are opaque and
//! must be released with their matching `_free` function. A handle may be
//! used from any thread but not from two threads at once.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dsm_core::agents::{rbc_action, RbcSchedule};
use dsm_core::data::{generate_synthetic, load_dataset, month_blocks_for, Dataset};
use dsm_core::env::{ActionVector, DistrictEnv, EnvConfig, EnvError};
use dsm_core::metrics::score;
use dsm_core::reward::{reward, RewardConfig};

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DsmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Dataset missing, malformed or inconsistent.
    DataError = 3,
    /// `dsm_env_step` after the last hour; call `dsm_env_reset`.
    EpisodeFinished = 4,
    /// A caller buffer has the wrong length.
    LengthMismatch = 5,
    /// Metric computation failed, e.g. a trace not aligned to whole days.
    MetricsError = 6,
    /// A Rust panic was caught at the boundary.
    Internal = 7,
}

/// A loaded or generated district.
pub struct DsmDataset {
    inner: Dataset,
}

/// A simulator over its own copy of a district.
pub struct DsmEnv {
    // Declared first so it is dropped before the dataset it borrows.
    env: DistrictEnv<'static>,
    dataset: Box<Dataset>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: DsmStatus, message: impl Into<String>) -> DsmStatus {
    set_error(message);
    status
}

fn guard(f: impl FnOnce() -> DsmStatus) -> DsmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(DsmStatus::Internal, "panic inside dsm"),
    }
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dsm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `ptr` must be NULL or point to `len` readable values.
unsafe fn slice<'a, T>(ptr: *const T, len: usize) -> Option<&'a [T]> {
    if len == 0 {
        Some(&[])
    } else if ptr.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(ptr, len))
    }
}

/// # Safety
/// `ptr` must be NULL or point to `len` writable values.
unsafe fn slice_mut<'a, T>(ptr: *mut T, len: usize) -> Option<&'a mut [T]> {
    if len == 0 {
        Some(&mut [])
    } else if ptr.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts_mut(ptr, len))
    }
}

fn store<T>(out: *mut *mut T, value: T) -> DsmStatus {
    // SAFETY: callers checked `out` for NULL.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    DsmStatus::Ok
}

/// Loads a dataset directory.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dsm_dataset_load(path: *const c_char, out: *mut *mut DsmDataset) -> DsmStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return fail(DsmStatus::NullPointer, "path and out must not be NULL");
        }
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            return fail(DsmStatus::InvalidArgument, "path is not valid UTF-8");
        };
        match load_dataset(path) {
            Ok(inner) => store(out, DsmDataset { inner }),
            Err(e) => fail(DsmStatus::DataError, e.to_string()),
        }
    })
}

/// Generates a synthetic district of `buildings` buildings over `days` days.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dsm_dataset_generate(buildings: u32, days: u32, seed: u64, out: *mut *mut DsmDataset) -> DsmStatus {
    guard(|| {
        if out.is_null() {
            return fail(DsmStatus::NullPointer, "out must not be NULL");
        }
        if buildings == 0 || days < 2 {
            return fail(DsmStatus::InvalidArgument, "need at least 1 building and 2 days");
        }
        let inner = generate_synthetic(buildings as usize, days as usize, seed);
        store(out, DsmDataset { inner })
    })
}

/// Releases a dataset. NULL is ignored.
///
/// # Safety
/// `dataset` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dsm_dataset_free(dataset: *mut DsmDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Number of hourly steps, or 0 for NULL.
///
/// # Safety
/// `dataset` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dsm_dataset_horizon(dataset: *const DsmDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.horizon())
}

/// Number of buildings, or 0 for NULL.
///
/// # Safety
/// `dataset` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dsm_dataset_building_count(dataset: *const DsmDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.n_buildings())
}

/// Creates a simulator with default plant parameters. The dataset is copied,
/// so it may be freed while the simulator lives.
///
/// # Safety
/// `dataset` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dsm_env_new(dataset: *const DsmDataset, out: *mut *mut DsmEnv) -> DsmStatus {
    guard(|| {
        let (Some(dataset), false) = (dataset.as_ref(), out.is_null()) else {
            return fail(DsmStatus::NullPointer, "dataset and out must not be NULL");
        };
        let owned = Box::new(dataset.inner.clone());
        // SAFETY: the box's heap allocation never moves and outlives `env`
        // because `DsmEnv` drops `env` first.
        let borrowed: &'static Dataset = &*(owned.as_ref() as *const Dataset);
        match DistrictEnv::new(borrowed, EnvConfig::default()) {
            Ok(env) => store(out, DsmEnv { env, dataset: owned }),
            Err(e) => fail(DsmStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Releases a simulator. NULL is ignored.
///
/// # Safety
/// `env` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dsm_env_free(env: *mut DsmEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Length of the observation vector, or 0 for NULL.
///
/// # Safety
/// `env` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dsm_env_observation_len(env: *const DsmEnv) -> usize {
    env.as_ref().map_or(0, |e| e.env.observation().len())
}

/// Length of the action vector, or 0 for NULL.
///
/// # Safety
/// `env` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dsm_env_action_len(env: *const DsmEnv) -> usize {
    env.as_ref().map_or(0, |e| e.env.layout().len())
}

/// Hour of day (1-24) of the next step, or 0 for NULL.
///
/// # Safety
/// `env` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dsm_env_hour(env: *const DsmEnv) -> u8 {
    env.as_ref().map_or(0, |e| e.env.hour())
}

fn copy_observation(values: &[f64], obs: *mut f64, obs_len: usize) -> DsmStatus {
    if obs_len != values.len() {
        return fail(
            DsmStatus::LengthMismatch,
            format!("observation buffer holds {obs_len}, need {}", values.len()),
        );
    }
    // SAFETY: the caller promises `obs_len` writable values.
    match unsafe { slice_mut(obs, obs_len) } {
        Some(dst) => {
            dst.copy_from_slice(values);
            DsmStatus::Ok
        }
        None => fail(DsmStatus::NullPointer, "observation buffer is NULL"),
    }
}

/// Restarts the episode and writes the first observation.
///
/// # Safety
/// `env` must be a live handle and `obs` point to `obs_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dsm_env_reset(env: *mut DsmEnv, obs: *mut f64, obs_len: usize) -> DsmStatus {
    guard(|| {
        let Some(env) = env.as_mut() else {
            return fail(DsmStatus::NullPointer, "env must not be NULL");
        };
        let first = env.env.reset();
        copy_observation(first.values(), obs, obs_len)
    })
}

/// Advances one hour.
///
/// `e_total` receives the district consumption of the step and `done` is
/// set once the final hour has been simulated. Either may be NULL.
///
/// # Safety
/// `env` must be a live handle, `actions` point to `action_len` doubles and
/// `obs` to `obs_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dsm_env_step(
    env: *mut DsmEnv,
    actions: *const f64,
    action_len: usize,
    obs: *mut f64,
    obs_len: usize,
    e_total: *mut f64,
    done: *mut bool,
) -> DsmStatus {
    guard(|| {
        let Some(env) = env.as_mut() else {
            return fail(DsmStatus::NullPointer, "env must not be NULL");
        };
        let Some(actions) = slice(actions, action_len) else {
            return fail(DsmStatus::NullPointer, "actions is NULL");
        };
        if obs_len != env.env.observation().len() {
            return fail(DsmStatus::LengthMismatch, format!("observation buffer holds {obs_len}"));
        }
        let outcome = match env.env.step(&ActionVector::new(actions.to_vec())) {
            Ok(o) => o,
            Err(e @ EnvError::EpisodeFinished { .. }) => return fail(DsmStatus::EpisodeFinished, e.to_string()),
            Err(e @ EnvError::ActionLength { .. }) => return fail(DsmStatus::LengthMismatch, e.to_string()),
            Err(e) => return fail(DsmStatus::InvalidArgument, e.to_string()),
        };
        let status = copy_observation(outcome.observation.values(), obs, obs_len);
        if status != DsmStatus::Ok {
            return status;
        }
        if let Some(out) = e_total.as_mut() {
            *out = outcome.e_total;
        }
        if let Some(out) = done.as_mut() {
            *out = outcome.done;
        }
        DsmStatus::Ok
    })
}

/// Default rule-based action for the simulator's next hour.
///
/// # Safety
/// `env` must be a live handle and `out` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dsm_env_rbc_action(env: *const DsmEnv, out: *mut f64, len: usize) -> DsmStatus {
    guard(|| {
        let Some(env) = env.as_ref() else {
            return fail(DsmStatus::NullPointer, "env must not be NULL");
        };
        let schedule = env.dataset.rbc_schedule.clone().unwrap_or_else(RbcSchedule::default);
        let action = rbc_action(env.env.hour(), &schedule, env.env.layout());
        if len != action.values().len() {
            return fail(DsmStatus::LengthMismatch, format!("action buffer holds {len}, need {}", action.values().len()));
        }
        match slice_mut(out, len) {
            Some(dst) => {
                dst.copy_from_slice(action.values());
                DsmStatus::Ok
            }
            None => fail(DsmStatus::NullPointer, "out is NULL"),
        }
    })
}

/// Scores `agent` against `baseline`, two hourly traces of `len` values.
/// `out` receives six values: the five ratios in score-table column order, then the
/// average score.
///
/// # Safety
/// `agent` and `baseline` must point to `len` doubles and `out` to 6 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dsm_score(agent: *const f64, baseline: *const f64, len: usize, out: *mut f64) -> DsmStatus {
    guard(|| {
        let (Some(agent), Some(baseline), Some(out)) = (slice(agent, len), slice(baseline, len), slice_mut(out, 6)) else {
            return fail(DsmStatus::NullPointer, "trace or output pointer is NULL");
        };
        match score(agent, baseline, &month_blocks_for(len)) {
            Ok(report) => {
                out[..5].copy_from_slice(&report.ratios.to_array());
                out[5] = report.avg_score;
                DsmStatus::Ok
            }
            Err(e) => fail(DsmStatus::MetricsError, e.to_string()),
        }
    })
}

/// Reward of one step under the default reward settings.
///
/// # Safety
/// `e_i` must point to `n_buildings` doubles, `actions` to `n_actions`
/// doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dsm_reward(
    e_total: f64,
    e_i: *const f64,
    n_buildings: usize,
    hour: u8,
    actions: *const f64,
    n_actions: usize,
    out: *mut f64,
) -> DsmStatus {
    guard(|| {
        let (Some(e_i), Some(actions), Some(out)) = (slice(e_i, n_buildings), slice(actions, n_actions), out.as_mut()) else {
            return fail(DsmStatus::NullPointer, "input or output pointer is NULL");
        };
        if !(1..=24).contains(&hour) || actions.is_empty() {
            return fail(DsmStatus::InvalidArgument, "hour must be 1-24 and actions non-empty");
        }
        *out = reward(e_total, e_i, hour, &ActionVector::new(actions.to_vec()), &RewardConfig::default());
        DsmStatus::Ok
    })
}
