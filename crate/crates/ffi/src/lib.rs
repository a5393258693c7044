//! C ABI over the leakage-detection engine.
//!
//! Conventions:
//! - Handles (`McqleakDataset`, `McqleakGateway`) are opaque; create them
//!   with the `_open`/`_load` functions and release them with the matching
//!   `_free`. Passing a handle after freeing it is undefined behavior.
//! - Functions returning a pointer yield null on failure; functions
//!   returning [`McqleakStatus`] yield a non-zero code. Either way the
//!   message is retrievable with `mcqleak_last_error` until the next call
//!   on the same thread.
//! - Returned strings are owned by the caller and must be released with
//!   `mcqleak_string_free`.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use libc::c_char;

use mcqleak::dataset::{Dataset, DatasetFormat};
use mcqleak::detectors::{
    detect_ngram, detect_permutation, detect_permutation_q, detect_semi_half, DetectorConfig,
    Method, Verdict,
};
use mcqleak::error::Error;
use mcqleak::evaluation::{run_simulation, MockFactory, SimulationOptions};
use mcqleak::gateway::mock::{MockContaminationSpec, MockGateway};
use mcqleak::gateway::wire::{WireConfig, WireGateway};
use mcqleak::gateway::ModelGateway;
use mcqleak::permutations::{all_orders, builtin_plan_n4};
use mcqleak::textsim;

/// Result codes for fallible calls.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McqleakStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Gateway = 5,
    Internal = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let cstring = CString::new(message.replace('\0', " "))
        .unwrap_or_else(|_| CString::new("error message unavailable").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(cstring));
}

fn clear_last_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

fn status_of(err: &Error) -> McqleakStatus {
    match err {
        Error::Io { .. } => McqleakStatus::Io,
        Error::Transport { .. } | Error::Capability { .. } => McqleakStatus::Gateway,
        Error::Record { .. } | Error::Json(_) | Error::Dataset(_) => McqleakStatus::InvalidArgument,
        Error::InvalidArgument(_) | Error::Precondition(_) | Error::Config(_) => {
            McqleakStatus::InvalidArgument
        }
    }
}

fn fail_status(err: Error) -> McqleakStatus {
    let status = status_of(&err);
    set_last_error(err.to_string());
    status
}

/// Opaque dataset handle.
pub struct McqleakDataset {
    inner: Dataset,
}

/// Opaque gateway handle.
pub struct McqleakGateway {
    inner: Arc<dyn ModelGateway>,
}

unsafe fn cstr_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, McqleakStatus> {
    if ptr.is_null() {
        set_last_error(format!("argument `{name}` is null"));
        return Err(McqleakStatus::NullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_last_error(format!("argument `{name}` is not valid UTF-8"));
        McqleakStatus::InvalidUtf8
    })
}

fn owned_c_string(text: String) -> *mut c_char {
    CString::new(text.replace('\0', " "))
        .map(CString::into_raw)
        .unwrap_or(std::ptr::null_mut())
}

/// Version of the underlying engine, as a static string.
#[no_mangle]
pub extern "C" fn mcqleak_version() -> *const c_char {
    concat!("mcqleak ", env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the most recent failure on this thread, or null.
/// Valid until the next mcqleak call on the same thread.
#[no_mangle]
pub extern "C" fn mcqleak_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map(|s| s.as_ptr())
            .unwrap_or(std::ptr::null())
    })
}

/// Release a string returned by this library.
///
/// # Safety
/// `ptr` must have been returned by an mcqleak function and not freed yet.
#[no_mangle]
pub unsafe extern "C" fn mcqleak_string_free(ptr: *mut c_char) {
    if !ptr.is_null() {
        drop(CString::from_raw(ptr));
    }
}

/// Load a line-delimited dataset. `format` is `mmlu-like` or
/// `hellaswag-like`. Returns null on failure.
///
/// # Safety
/// `path` and `format` must be valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn mcqleak_dataset_load(
    path: *const c_char,
    format: *const c_char,
) -> *mut McqleakDataset {
    clear_last_error();
    let (Ok(path), Ok(format)) = (cstr_arg(path, "path"), cstr_arg(format, "format")) else {
        return std::ptr::null_mut();
    };
    let format = match DatasetFormat::from_str(format) {
        Ok(format) => format,
        Err(err) => {
            set_last_error(err.to_string());
            return std::ptr::null_mut();
        }
    };
    match Dataset::load(Path::new(path), format) {
        Ok(inner) => Box::into_raw(Box::new(McqleakDataset { inner })),
        Err(err) => {
            set_last_error(err.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Number of instances in the dataset; 0 for a null handle.
///
/// # Safety
/// `dataset` must be a live handle from `mcqleak_dataset_load` or null.
#[no_mangle]
pub unsafe extern "C" fn mcqleak_dataset_len(dataset: *const McqleakDataset) -> usize {
    dataset.as_ref().map(|d| d.inner.len()).unwrap_or(0)
}

/// Release a dataset handle.
///
/// # Safety
/// `dataset` must be a handle from `mcqleak_dataset_load`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mcqleak_dataset_free(dataset: *mut McqleakDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Open a deterministic contaminated mock gateway. `spec_json` holds a
/// contamination spec (`{}` for defaults); memorized ids are resolved
/// against `dataset`. Returns null on failure.
///
/// # Safety
/// `dataset` must be a live dataset handle; `spec_json` a valid string.
#[no_mangle]
pub unsafe extern "C" fn mcqleak_mock_gateway_open(
    dataset: *const McqleakDataset,
    spec_json: *const c_char,
) -> *mut McqleakGateway {
    clear_last_error();
    let Some(dataset) = dataset.as_ref() else {
        set_last_error("argument `dataset` is null".into());
        return std::ptr::null_mut();
    };
    let Ok(spec_json) = cstr_arg(spec_json, "spec_json") else {
        return std::ptr::null_mut();
    };
    let spec: MockContaminationSpec = match serde_json::from_str(spec_json) {
        Ok(spec) => spec,
        Err(err) => {
            set_last_error(format!("bad mock spec: {err}"));
            return std::ptr::null_mut();
        }
    };
    match MockGateway::new(&spec, &dataset.inner, &mcqleak::PromptTemplate::default()) {
        Ok(gw) => Box::into_raw(Box::new(McqleakGateway {
            inner: Arc::new(gw),
        })),
        Err(err) => {
            set_last_error(err.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Open a wire gateway against a completion endpoint. `auth_token` may be
/// null. Returns null on failure.
///
/// # Safety
/// `endpoint` and `model` must be valid strings; `auth_token` valid or null.
#[no_mangle]
pub unsafe extern "C" fn mcqleak_wire_gateway_open(
    endpoint: *const c_char,
    model: *const c_char,
    auth_token: *const c_char,
) -> *mut McqleakGateway {
    clear_last_error();
    let (Ok(endpoint), Ok(model)) = (cstr_arg(endpoint, "endpoint"), cstr_arg(model, "model"))
    else {
        return std::ptr::null_mut();
    };
    let mut config = WireConfig::new(endpoint, model);
    if !auth_token.is_null() {
        let Ok(token) = cstr_arg(auth_token, "auth_token") else {
            return std::ptr::null_mut();
        };
        config.auth_token = Some(token.to_string());
    }
    match WireGateway::new(config) {
        Ok(gw) => Box::into_raw(Box::new(McqleakGateway {
            inner: Arc::new(gw),
        })),
        Err(err) => {
            set_last_error(err.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Release a gateway handle.
///
/// # Safety
/// `gateway` must be a handle from a gateway `_open` call, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mcqleak_gateway_free(gateway: *mut McqleakGateway) {
    if !gateway.is_null() {
        drop(Box::from_raw(gateway));
    }
}

/// LCS-based similarity between a reference and a hypothesis, in [0, 1].
///
/// # Safety
/// `reference` and `hypothesis` must be valid strings; `out` non-null.
#[no_mangle]
pub unsafe extern "C" fn mcqleak_rouge_l(
    reference: *const c_char,
    hypothesis: *const c_char,
    out: *mut f64,
) -> McqleakStatus {
    clear_last_error();
    if out.is_null() {
        set_last_error("argument `out` is null".into());
        return McqleakStatus::NullArgument;
    }
    let (reference, hypothesis) = match (
        cstr_arg(reference, "reference"),
        cstr_arg(hypothesis, "hypothesis"),
    ) {
        (Ok(r), Ok(h)) => (r, h),
        (Err(status), _) | (_, Err(status)) => return status,
    };
    match textsim::rouge_l(reference, hypothesis) {
        Ok(value) => {
            *out = value;
            McqleakStatus::Ok
        }
        Err(err) => fail_status(err),
    }
}

fn detector_config_from_json(config_json: Option<&str>) -> Result<DetectorConfig, Error> {
    let cfg: DetectorConfig = match config_json {
        None => DetectorConfig::default(),
        Some(raw) if raw.trim().is_empty() => DetectorConfig::default(),
        Some(raw) => serde_json::from_str(raw)
            .map_err(|e| Error::Config(format!("bad detector config: {e}")))?,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn run_one_detector(
    dataset: &Dataset,
    gateway: &dyn ModelGateway,
    instance_id: &str,
    method: Method,
    cfg: &DetectorConfig,
) -> Result<Verdict, Error> {
    let inst = dataset
        .get(instance_id)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown instance id `{instance_id}`")))?;
    match method {
        Method::SemiHalf => detect_semi_half(inst, gateway, cfg),
        Method::Permutation => {
            let orders = all_orders(inst.option_count())?;
            detect_permutation(inst, gateway, cfg, &orders)
        }
        Method::PermutationR => {
            let plan = builtin_plan_n4();
            if plan.arity() != inst.option_count() {
                return Err(Error::Config(format!(
                    "no bundled reduction plan for {}-option instances",
                    inst.option_count()
                )));
            }
            let orders = plan.retained(cfg.perm_proportion)?;
            detect_permutation(inst, gateway, cfg, &orders)
        }
        Method::PermutationQ => detect_permutation_q(inst, gateway, cfg),
        Method::NGram => detect_ngram(inst, gateway, cfg),
        Method::Combo => Err(Error::InvalidArgument(
            "combo verdicts are derived, not detected".into(),
        )),
    }
}

/// Run one detector on one instance; returns the verdict as a JSON string
/// (caller frees it) or null on failure. `config_json` may be null for
/// defaults.
///
/// # Safety
/// Handles must be live; string arguments valid (or null where allowed).
#[no_mangle]
pub unsafe extern "C" fn mcqleak_detect_instance(
    dataset: *const McqleakDataset,
    gateway: *const McqleakGateway,
    instance_id: *const c_char,
    method: *const c_char,
    config_json: *const c_char,
) -> *mut c_char {
    clear_last_error();
    let (Some(dataset), Some(gateway)) = (dataset.as_ref(), gateway.as_ref()) else {
        set_last_error("dataset or gateway handle is null".into());
        return std::ptr::null_mut();
    };
    let (Ok(instance_id), Ok(method_raw)) = (
        cstr_arg(instance_id, "instance_id"),
        cstr_arg(method, "method"),
    ) else {
        return std::ptr::null_mut();
    };
    let config_raw = if config_json.is_null() {
        None
    } else {
        match cstr_arg(config_json, "config_json") {
            Ok(raw) => Some(raw),
            Err(_) => return std::ptr::null_mut(),
        }
    };
    let result = Method::from_str(method_raw)
        .and_then(|method| {
            let cfg = detector_config_from_json(config_raw)?;
            run_one_detector(&dataset.inner, &*gateway.inner, instance_id, method, &cfg)
        })
        .and_then(|verdict| Ok(serde_json::to_string(&verdict)?));
    match result {
        Ok(json) => owned_c_string(json),
        Err(err) => {
            set_last_error(err.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Run a comma-separated list of detectors over the whole dataset and
/// write one verdict JSON object per line to `out_path`.
///
/// # Safety
/// Handles must be live; string arguments valid (or null where allowed).
#[no_mangle]
pub unsafe extern "C" fn mcqleak_detect_to_file(
    dataset: *const McqleakDataset,
    gateway: *const McqleakGateway,
    methods: *const c_char,
    config_json: *const c_char,
    out_path: *const c_char,
) -> McqleakStatus {
    clear_last_error();
    let (Some(dataset), Some(gateway)) = (dataset.as_ref(), gateway.as_ref()) else {
        set_last_error("dataset or gateway handle is null".into());
        return McqleakStatus::NullArgument;
    };
    let (methods_raw, out_path) = match (cstr_arg(methods, "methods"), cstr_arg(out_path, "out_path"))
    {
        (Ok(m), Ok(o)) => (m, o),
        (Err(status), _) | (_, Err(status)) => return status,
    };
    let config_raw = if config_json.is_null() {
        None
    } else {
        match cstr_arg(config_json, "config_json") {
            Ok(raw) => Some(raw),
            Err(status) => return status,
        }
    };

    let run = || -> Result<(), Error> {
        let cfg = detector_config_from_json(config_raw)?;
        let methods: Vec<Method> = methods_raw
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(Method::from_str)
            .collect::<Result<_, _>>()?;
        if methods.is_empty() {
            return Err(Error::InvalidArgument("no detectors selected".into()));
        }
        let mut verdicts = Vec::new();
        for inst in dataset.inner.instances() {
            for method in &methods {
                verdicts.push(run_one_detector(
                    &dataset.inner,
                    &*gateway.inner,
                    &inst.id,
                    *method,
                    &cfg,
                )?);
            }
        }
        mcqleak::detectors::write_verdicts(Path::new(out_path), &verdicts)
    };
    match run() {
        Ok(()) => McqleakStatus::Ok,
        Err(err) => fail_status(err),
    }
}

/// Run the desk-scale contamination simulation with a mock model built
/// from `spec_json` and return the detection report as a JSON string;
/// null on failure.
///
/// # Safety
/// `dataset` must be a live handle; `spec_json` a valid string.
#[no_mangle]
pub unsafe extern "C" fn mcqleak_simulate(
    dataset: *const McqleakDataset,
    spec_json: *const c_char,
    total: usize,
    seed: u64,
) -> *mut c_char {
    clear_last_error();
    let Some(dataset) = dataset.as_ref() else {
        set_last_error("argument `dataset` is null".into());
        return std::ptr::null_mut();
    };
    let Ok(spec_json) = cstr_arg(spec_json, "spec_json") else {
        return std::ptr::null_mut();
    };
    let run = || -> Result<String, Error> {
        let spec: MockContaminationSpec = serde_json::from_str(spec_json)
            .map_err(|e| Error::Config(format!("bad mock spec: {e}")))?;
        spec.validate()?;
        let factory = MockFactory::new(spec, mcqleak::PromptTemplate::default());
        let opts = SimulationOptions {
            total,
            seed,
            ..SimulationOptions::default()
        };
        let outcome = run_simulation(&dataset.inner, &factory, &opts)?;
        Ok(serde_json::to_string(&outcome.report)?)
    };
    match run() {
        Ok(json) => owned_c_string(json),
        Err(err) => {
            set_last_error(err.to_string());
            std::ptr::null_mut()
        }
    }
}
