//! C ABI over `matchstab`.
//!
//! Models are opaque handles created by `ms_model_from_json` or
//! `ms_model_builtin` and released with `ms_model_free`. Every fallible
//! function returns an `MsStatus`; on failure the message is available from
//! `ms_last_error_message` on the same thread. Strings returned through out
//! parameters are owned by the caller and released with `ms_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use matchstab::analysis;
use matchstab::chains;
use matchstab::facets;
use matchstab::flow;
use matchstab::io::{self, Model};
use matchstab::model::ArrivalMeasure;
use matchstab::policies::{Policy, PolicyKind};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    InvalidArgument = 4,
    NoMeasure = 5,
    AnalysisError = 6,
    SimulationError = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsPolicy {
    Fifo = 0,
    Lifo = 1,
    Priority = 2,
    Random = 3,
    MatchLongest = 4,
    MatchShortest = 5,
    Flow = 6,
}

/// Maps an `MsPolicy` value received as a plain integer.
fn policy_kind(code: u32) -> Option<PolicyKind> {
    Some(match code {
        c if c == MsPolicy::Fifo as u32 => PolicyKind::Fifo,
        c if c == MsPolicy::Lifo as u32 => PolicyKind::Lifo,
        c if c == MsPolicy::Priority as u32 => PolicyKind::Priority,
        c if c == MsPolicy::Random as u32 => PolicyKind::Random,
        c if c == MsPolicy::MatchLongest as u32 => PolicyKind::MatchLongest,
        c if c == MsPolicy::MatchShortest as u32 => PolicyKind::MatchShortest,
        c if c == MsPolicy::Flow as u32 => PolicyKind::Flow,
        _ => return None,
    })
}

/// Summary of one simulation run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MsSimulationReport {
    pub horizon: u64,
    pub seed: u64,
    pub avg_buffer: f64,
    pub max_buffer: u64,
    pub final_buffer: u64,
    pub empty_visits: u64,
}

/// Opaque model handle.
pub struct MsModel {
    model: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

type Failure = (MsStatus, String);

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> MsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            MsStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside matchstab");
            MsStatus::Panic
        }
    }
}

unsafe fn model_ref<'a>(model: *const MsModel) -> Result<&'a Model, Failure> {
    model.as_ref().map(|m| &m.model).ok_or((MsStatus::NullPointer, "model handle is null".into()))
}

unsafe fn out_ref<'a, T>(out: *mut T) -> Result<&'a mut T, Failure> {
    out.as_mut().ok_or((MsStatus::NullPointer, "output pointer is null".into()))
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err((MsStatus::NullPointer, "string argument is null".into()));
    }
    CStr::from_ptr(s).to_str().map_err(|e| (MsStatus::InvalidUtf8, e.to_string()))
}

fn measure(model: &Model) -> Result<&ArrivalMeasure, Failure> {
    model.measure.as_ref().ok_or((MsStatus::NoMeasure, "model has no arrival measure".into()))
}

fn boxed(model: Model) -> *mut MsModel {
    Box::into_raw(Box::new(MsModel { model }))
}

/// Parses a JSON model. On success `*out` owns a new handle.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ms_model_from_json(json: *const c_char, out: *mut *mut MsModel) -> MsStatus {
    guard(|| {
        let out = out_ref(out)?;
        *out = ptr::null_mut();
        let text = read_str(json)?;
        let model = io::parse_model(text).map_err(|e| (MsStatus::ParseError, e.to_string()))?;
        *out = boxed(model);
        Ok(())
    })
}

/// Loads a built-in model (`nn`, `nnn`, `nn-fdiag`, `nn-fanti`,
/// `nn-counterexample`).
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ms_model_builtin(name: *const c_char, out: *mut *mut MsModel) -> MsStatus {
    guard(|| {
        let out = out_ref(out)?;
        *out = ptr::null_mut();
        let name = read_str(name)?;
        let model = io::builtin_model(name).ok_or((MsStatus::InvalidArgument, format!("unknown model `{name}`")))?;
        *out = boxed(model);
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ms_model_free(model: *mut MsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Serializes a model to JSON; release the string with `ms_string_free`.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ms_model_to_json(model: *const MsModel, out: *mut *mut c_char) -> MsStatus {
    guard(|| {
        let out = out_ref(out)?;
        *out = ptr::null_mut();
        let text = io::model_to_json(model_ref(model)?);
        *out = CString::new(text).map_err(|e| (MsStatus::InvalidArgument, e.to_string()))?.into_raw();
        Ok(())
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ms_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Number of customer and server classes.
///
/// # Safety
/// `model` must be a live handle; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ms_model_shape(model: *const MsModel, customers: *mut usize, servers: *mut usize) -> MsStatus {
    guard(|| {
        let m = model_ref(model)?;
        *out_ref(customers)? = m.structure.num_customers();
        *out_ref(servers)? = m.structure.num_servers();
        Ok(())
    })
}

/// NCond for the model's measure.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ms_check_ncond(model: *const MsModel, out: *mut bool) -> MsStatus {
    guard(|| {
        let m = model_ref(model)?;
        let out = out_ref(out)?;
        *out = flow::check_ncond(&m.structure, &measure(m)?.marginals());
        Ok(())
    })
}

/// SCond for the model's measure.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ms_check_scond(model: *const MsModel, out: *mut bool) -> MsStatus {
    guard(|| {
        let m = model_ref(model)?;
        let out = out_ref(out)?;
        let (ok, _) = analysis::check_scond(&m.structure, measure(m)?).map_err(|e| (MsStatus::AnalysisError, e.to_string()))?;
        *out = ok;
        Ok(())
    })
}

/// Whether the pairing digraph of the structure is strongly connected.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ms_is_stable_structure(model: *const MsModel, out: *mut bool) -> MsStatus {
    guard(|| {
        let m = model_ref(model)?;
        *out_ref(out)? = analysis::is_stable_structure(&m.structure);
        Ok(())
    })
}

/// Number of facets, including the zero facet, and how many are saturated.
///
/// # Safety
/// `model` must be a live handle; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ms_facet_count(model: *const MsModel, total: *mut usize, saturated: *mut usize) -> MsStatus {
    guard(|| {
        let m = model_ref(model)?;
        let all = facets::enumerate_facets(&m.structure).map_err(|e| (MsStatus::AnalysisError, e.to_string()))?;
        *out_ref(total)? = all.len();
        *out_ref(saturated)? = all.iter().filter(|f| f.is_saturated()).count();
        Ok(())
    })
}

/// Simulates `horizon` steps from the empty state. `policy` is an
/// `MsPolicy` value; PR uses the model's priorities and FLOW requires NCond.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ms_simulate(
    model: *const MsModel,
    policy: u32,
    horizon: u64,
    seed: u64,
    out: *mut MsSimulationReport,
) -> MsStatus {
    guard(|| {
        let m = model_ref(model)?;
        let out = out_ref(out)?;
        let mu = measure(m)?;
        let kind = policy_kind(policy).ok_or((MsStatus::InvalidArgument, format!("unknown policy code {policy}")))?;
        let policy = Policy::build(kind, &m.structure, mu, m.priorities.as_ref())
            .map_err(|e| (MsStatus::InvalidArgument, e.to_string()))?;
        let r = chains::simulate(&m.structure, mu, &policy, horizon, seed)
            .map_err(|e| (MsStatus::SimulationError, e.to_string()))?;
        *out = MsSimulationReport {
            horizon: r.horizon,
            seed: r.seed,
            avg_buffer: r.avg_buffer,
            max_buffer: r.max_buffer,
            final_buffer: r.final_buffer,
            empty_visits: r.empty_visits,
        };
        Ok(())
    })
}

/// Message of the last failed call on this thread, or an empty string. The
/// pointer stays valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn ms_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}
