//! C interface to the storebid solvers.
//!
//! Objects cross the boundary as opaque handles created by `*_from_*`,
//! `sb_solve_exact`, `sb_train_*` or `sb_table_load` and released with the
//! matching `*_free`. Every fallible call returns an [`SbStatus`]; on failure
//! `sb_last_error_message` describes the error on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use storebid::adp::{train_post, train_pre, TrainerConfig};
use storebid::config::{build_instance, EvaluationSpec, Instance, InstanceSpec};
use storebid::exact::backward_dp;
use storebid::lattice::Layout;
use storebid::market::{settle_hour, BidPair, State};
use storebid::policy::{evaluate, GreedyPost, GreedyPre, Paths, Policy};
use storebid::table::ValueTable;
use storebid::Error;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SbStatus {
    SbOk = 0,
    SbNullPointer = 1,
    SbInvalidArgument = 2,
    SbConfig = 3,
    SbCapacity = 4,
    SbCapability = 5,
    SbIo = 6,
    SbData = 7,
    SbPanic = 8,
}

/// A problem instance: market parameters and price model.
pub struct SbInstance {
    inner: Instance,
}

/// A value table over pre- or post-decision states.
pub struct SbTable {
    inner: ValueTable,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> SbStatus {
    match e {
        Error::Config(_) | Error::Json(_) => SbStatus::SbConfig,
        Error::Domain(_) => SbStatus::SbInvalidArgument,
        Error::Capacity { .. } => SbStatus::SbCapacity,
        Error::Capability(_) => SbStatus::SbCapability,
        Error::Io(_) => SbStatus::SbIo,
        Error::Ingestion { .. } | Error::Data(_) | Error::Format(_) | Error::Csv(_) => SbStatus::SbData,
    }
}

enum Failure {
    Status(SbStatus, String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        Failure::Lib(e)
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(SbStatus::SbNullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Status(SbStatus::SbInvalidArgument, msg.into())
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SbStatus::SbOk
        }
        Ok(Err(Failure::Status(s, msg))) => {
            set_error(&msg);
            s
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("internal panic: {msg}"));
            SbStatus::SbPanic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

fn new_table(out: &mut *mut SbTable, table: ValueTable) {
    *out = Box::into_raw(Box::new(SbTable { inner: table }));
}

/// Builds an instance from instance JSON, e.g. `{"preset": "desk"}`. Relative
/// price-file paths resolve against the working directory.
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sb_instance_from_json(json: *const c_char, out: *mut *mut SbInstance) -> SbStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let text = str_arg(json, "json")?;
        let spec: InstanceSpec = serde_json::from_str(text)
            .map_err(|e| Failure::Status(SbStatus::SbConfig, format!("bad instance JSON: {e}")))?;
        let inner = build_instance(&spec, &EvaluationSpec::default(), Path::new("."))?;
        *out = Box::into_raw(Box::new(SbInstance { inner }));
        Ok(())
    })
}

/// # Safety
/// `instance` must be null or a handle from `sb_instance_from_json` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sb_instance_free(instance: *mut SbInstance) {
    if !instance.is_null() {
        drop(Box::from_raw(instance));
    }
}

/// Horizon `T`, settlements per hour and capacity of an instance.
///
/// # Safety
/// `instance` must be a live handle; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sb_instance_shape(
    instance: *const SbInstance,
    horizon: *mut usize,
    settlements_per_hour: *mut usize,
    r_max: *mut u32,
    l_max: *mut u32,
) -> SbStatus {
    guard(|| {
        let cfg = handle(instance, "instance")?.inner.dynamics.config();
        *out_arg(horizon, "horizon")? = cfg.horizon;
        *out_arg(settlements_per_hour, "settlements_per_hour")? = cfg.settlements_per_hour;
        *out_arg(r_max, "r_max")? = cfg.r_max;
        *out_arg(l_max, "l_max")? = cfg.l_max;
        Ok(())
    })
}

/// Index of the pre-decision state `(r, l, prev_bid, price_state)` within a
/// period of a pre-decision table.
///
/// # Safety
/// `instance` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sb_state_index(
    instance: *const SbInstance,
    resource: u32,
    lifetime: u32,
    prev_bid: usize,
    price_state: usize,
    out: *mut usize,
) -> SbStatus {
    guard(|| {
        let d = &handle(instance, "instance")?.inner.dynamics;
        let out = out_arg(out, "out")?;
        let cfg = d.config();
        let space = d.space();
        if resource > cfg.r_max
            || lifetime > cfg.l_max
            || prev_bid >= space.num_pairs()
            || price_state >= space.num_price_states()
        {
            return Err(invalid("state lies outside the instance"));
        }
        *out = space.pre_index(&State { resource, lifetime, prev_bid, price_state });
        Ok(())
    })
}

/// Backward dynamic programming. Writes the optimal value table and the value
/// of the initial state (empty storage, full lifetime, idle bid).
///
/// # Safety
/// `instance` must be a live handle; `out` and `initial_value` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn sb_solve_exact(
    instance: *const SbInstance,
    out: *mut *mut SbTable,
    initial_value: *mut f64,
) -> SbStatus {
    guard(|| {
        let inst = &handle(instance, "instance")?.inner;
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let v0 = out_arg(initial_value, "initial_value")?;
        let d = &inst.dynamics;
        let sol = backward_dp(d)?;
        let cfg = d.config();
        let s0 = State {
            resource: 0,
            lifetime: cfg.l_max,
            prev_bid: cfg.grid.idle_pair(),
            price_state: d.model().initial_state(),
        };
        *v0 = sol.values.get(0, d.space().pre_index(&s0));
        new_table(out, sol.values);
        Ok(())
    })
}

unsafe fn train(
    instance: *const SbInstance,
    trainer_json: *const c_char,
    out: *mut *mut SbTable,
    layout: Layout,
) -> SbStatus {
    guard(|| {
        let inst = &handle(instance, "instance")?.inner;
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let cfg: TrainerConfig = if trainer_json.is_null() {
            TrainerConfig::default()
        } else {
            serde_json::from_str(str_arg(trainer_json, "trainer_json")?)
                .map_err(|e| Failure::Status(SbStatus::SbConfig, format!("bad trainer JSON: {e}")))?
        };
        let trained = match layout {
            Layout::Pre => train_pre(&inst.dynamics, cfg)?,
            Layout::Post => train_post(&inst.dynamics, cfg)?,
        };
        new_table(out, trained.table);
        Ok(())
    })
}

/// Monotone-ADP over pre-decision states. `trainer_json` may be null for the
/// default trainer settings.
///
/// # Safety
/// `instance` must be a live handle, `trainer_json` null or a valid string,
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sb_train_pre(
    instance: *const SbInstance,
    trainer_json: *const c_char,
    out: *mut *mut SbTable,
) -> SbStatus {
    train(instance, trainer_json, out, Layout::Pre)
}

/// Monotone-ADP over post-decision states.
///
/// # Safety
/// As for `sb_train_pre`.
#[no_mangle]
pub unsafe extern "C" fn sb_train_post(
    instance: *const SbInstance,
    trainer_json: *const c_char,
    out: *mut *mut SbTable,
) -> SbStatus {
    train(instance, trainer_json, out, Layout::Post)
}

/// Number of periods, states per period and layout (0 pre, 1 post).
///
/// # Safety
/// `table` must be a live handle; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sb_table_shape(
    table: *const SbTable,
    periods: *mut usize,
    states_per_period: *mut usize,
    is_post: *mut i32,
) -> SbStatus {
    guard(|| {
        let t = &handle(table, "table")?.inner;
        *out_arg(periods, "periods")? = t.periods();
        *out_arg(states_per_period, "states_per_period")? = t.states_per_period();
        *out_arg(is_post, "is_post")? = (t.layout() == Layout::Post) as i32;
        Ok(())
    })
}

/// # Safety
/// `table` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sb_table_value(table: *const SbTable, t: usize, index: usize, out: *mut f64) -> SbStatus {
    guard(|| {
        let table = &handle(table, "table")?.inner;
        let out = out_arg(out, "out")?;
        if t >= table.periods() || index >= table.states_per_period() {
            return Err(invalid(format!(
                "({t}, {index}) is outside a {}x{} table",
                table.periods(),
                table.states_per_period()
            )));
        }
        *out = table.get(t, index);
        Ok(())
    })
}

/// # Safety
/// `table` must be a live handle and `path` a valid string.
#[no_mangle]
pub unsafe extern "C" fn sb_table_save(table: *const SbTable, path: *const c_char) -> SbStatus {
    guard(|| {
        let table = &handle(table, "table")?.inner;
        table.save(Path::new(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// # Safety
/// `path` must be a valid string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sb_table_load(path: *const c_char, out: *mut *mut SbTable) -> SbStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let table = ValueTable::load(Path::new(str_arg(path, "path")?))?;
        new_table(out, table);
        Ok(())
    })
}

/// # Safety
/// `table` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sb_table_free(table: *mut SbTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Settles one hour of `n_prices` prices against the bid `(low, high)` from
/// storage `resource` and lifetime `lifetime`.
///
/// # Safety
/// `instance` must be a live handle, `prices` must point to `n_prices`
/// readable doubles, and the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sb_hourly_revenue(
    instance: *const SbInstance,
    resource: u32,
    lifetime: u32,
    prices: *const f64,
    n_prices: usize,
    low: f64,
    high: f64,
    revenue: *mut f64,
    next_resource: *mut u32,
    next_lifetime: *mut u32,
) -> SbStatus {
    guard(|| {
        let cfg = handle(instance, "instance")?.inner.dynamics.config();
        if prices.is_null() {
            return Err(null("prices"));
        }
        let prices = std::slice::from_raw_parts(prices, n_prices);
        if resource > cfg.r_max || lifetime > cfg.l_max {
            return Err(invalid("storage or lifetime outside the instance"));
        }
        let bid = BidPair::new(low, high)?;
        cfg.check_prices(prices)?;
        let h = settle_hour(cfg, resource, lifetime, prices, bid);
        *out_arg(revenue, "revenue")? = h.revenue;
        *out_arg(next_resource, "next_resource")? = h.resource;
        *out_arg(next_lifetime, "next_lifetime")? = h.lifetime;
        Ok(())
    })
}

/// Evaluates the greedy policy of `table` on `paths` sampled price paths
/// (0 uses the instance default: 1000 paths, or each held-out day once for
/// historical prices).
///
/// # Safety
/// `instance` and `table` must be live handles; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sb_evaluate_policy(
    instance: *const SbInstance,
    table: *const SbTable,
    paths: usize,
    seed: u64,
    mean_value: *mut f64,
    std_error: *mut f64,
) -> SbStatus {
    guard(|| {
        let inst = &handle(instance, "instance")?.inner;
        let table = &handle(table, "table")?.inner;
        let mean_value = out_arg(mean_value, "mean_value")?;
        let std_error = out_arg(std_error, "std_error")?;
        let d = &inst.dynamics;
        let policy: Box<dyn Policy + '_> = match table.layout() {
            Layout::Pre => Box::new(GreedyPre::new(d, table)?),
            Layout::Post => Box::new(GreedyPost::new(d, table)?),
        };
        let paths = if paths == 0 { inst.eval_paths } else { Paths::Sampled(paths) };
        let report = evaluate(policy.as_ref(), d.config(), inst.eval_model.as_ref(), paths, seed)?;
        *mean_value = report.mean_value;
        *std_error = report.std_error;
        Ok(())
    })
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn sb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn sb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
