//! C ABI over the forecaster.
//!
//! Models are opaque `TfModel` handles. Every fallible call returns a
//! `TfStatus`; on failure the message is kept per thread and can be read
//! with `tf_last_error` until the next failing call on that thread. Panics
//! never cross the boundary: they are caught and reported as
//! `TF_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use twinformer::checkpoint::Checkpoint;
use twinformer::cli::forecast_tail;
use twinformer::data::RawSeries;
use twinformer::model::{ModelConfig, TwinFormer};
use twinformer::{Error, Tensor};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Data = 4,
    Numeric = 5,
    Checkpoint = 6,
    Io = 7,
    Panic = 8,
}

/// Architecture of a model; mirrors the `[model]` section of a run config
/// plus the input width and target column.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TfModelConfig {
    pub seq_len: usize,
    pub patch_len: usize,
    pub d_model: usize,
    pub heads: usize,
    pub top_k: usize,
    pub ffn_mult: usize,
    pub horizon: usize,
    pub n_features: usize,
    pub target_index: usize,
}

impl From<TfModelConfig> for ModelConfig {
    fn from(c: TfModelConfig) -> Self {
        ModelConfig {
            seq_len: c.seq_len,
            patch_len: c.patch_len,
            d_model: c.d_model,
            heads: c.heads,
            top_k: c.top_k,
            ffn_mult: c.ffn_mult,
            horizon: c.horizon,
            n_features: c.n_features,
            target_index: c.target_index,
        }
    }
}

impl From<ModelConfig> for TfModelConfig {
    fn from(c: ModelConfig) -> Self {
        TfModelConfig {
            seq_len: c.seq_len,
            patch_len: c.patch_len,
            d_model: c.d_model,
            heads: c.heads,
            top_k: c.top_k,
            ffn_mult: c.ffn_mult,
            horizon: c.horizon,
            n_features: c.n_features,
            target_index: c.target_index,
        }
    }
}

/// Opaque model handle.
pub struct TfModel {
    inner: Checkpoint,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(TfStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Config(_) | Error::Shape { .. } => TfStatus::Config,
            Error::Data(_) => TfStatus::Data,
            Error::Io { .. } => TfStatus::Io,
            Error::Checkpoint(_) => TfStatus::Checkpoint,
            Error::Numeric(_)
            | Error::DegenerateRow { .. }
            | Error::Tape(_)
            | Error::MissingGradient(_) => TfStatus::Numeric,
        };
        Failure(status, e.to_string())
    }
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TfStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
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
            TfStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(TfStatus::NullPointer, format!("{what} is NULL"))
}

unsafe fn model_ref<'a>(model: *const TfModel) -> Result<&'a TfModel, Failure> {
    model.as_ref().ok_or_else(|| null("model"))
}

unsafe fn path_arg<'a>(path: *const c_char) -> Result<&'a Path, Failure> {
    if path.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(path)
        .to_str()
        .map(Path::new)
        .map_err(|_| Failure(TfStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

unsafe fn out_slice<'a>(
    out: *mut f64,
    len: usize,
    needed: usize,
) -> Result<&'a mut [f64], Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    if len < needed {
        return Err(Failure(
            TfStatus::InvalidArgument,
            format!("output buffer holds {len} values; the forecast has {needed}"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(out, needed))
}

unsafe fn in_slice<'a>(data: *const f64, len: usize) -> Result<&'a [f64], Failure> {
    if data.is_null() {
        return Err(null("input"));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

fn publish(model: TfModel, out: *mut *mut TfModel) {
    unsafe { *out = Box::into_raw(Box::new(model)) };
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call or `tf_clear_error` on this thread.
#[no_mangle]
pub extern "C" fn tf_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn tf_clear_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

/// Creates a freshly initialised model. Its forecasts are in normalized
/// units only (see `tf_model_predict`).
///
/// # Safety
/// `config` must point to a valid `TfModelConfig`; `out` to writable storage
/// for one handle.
#[no_mangle]
pub unsafe extern "C" fn tf_model_new(
    config: *const TfModelConfig,
    seed: u64,
    out: *mut *mut TfModel,
) -> TfStatus {
    guard(|| {
        let config = *config.as_ref().ok_or_else(|| null("config"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let model = TwinFormer::new(config.into(), seed)?;
        publish(
            TfModel {
                inner: Checkpoint { model, data: None },
            },
            out,
        );
        Ok(())
    })
}

/// Loads a checkpoint written by `twinformer train` or `tf_model_save`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` writable storage for one
/// handle.
#[no_mangle]
pub unsafe extern "C" fn tf_model_load(path: *const c_char, out: *mut *mut TfModel) -> TfStatus {
    guard(|| {
        let path = path_arg(path)?;
        if out.is_null() {
            return Err(null("out"));
        }
        publish(
            TfModel {
                inner: Checkpoint::load(path)?,
            },
            out,
        );
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn tf_model_save(model: *const TfModel, path: *const c_char) -> TfStatus {
    guard(|| {
        let model = model_ref(model)?;
        model.inner.save(path_arg(path)?)?;
        Ok(())
    })
}

/// Copies the model's architecture into `out`.
///
/// # Safety
/// `model` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tf_model_config(
    model: *const TfModel,
    out: *mut TfModelConfig,
) -> TfStatus {
    guard(|| {
        let model = model_ref(model)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = model.inner.model.config.into();
        Ok(())
    })
}

/// 1 if the model carries fitted scaler statistics (so `tf_model_forecast`
/// works), 0 if not, -1 for a NULL handle.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tf_model_has_scaler(model: *const TfModel) -> i32 {
    match model.as_ref() {
        Some(m) => m.inner.data.is_some() as i32,
        None => -1,
    }
}

/// Forecast for one normalized window of `seq_len × n_features` values in
/// row-major order. Writes `horizon` normalized values to `out`.
///
/// # Safety
/// `window` must hold `window_len` readable values and `out` `out_len`
/// writable ones.
#[no_mangle]
pub unsafe extern "C" fn tf_model_predict(
    model: *const TfModel,
    window: *const f64,
    window_len: usize,
    out: *mut f64,
    out_len: usize,
) -> TfStatus {
    guard(|| {
        let model = &model_ref(model)?.inner.model;
        let c = model.config;
        let input = in_slice(window, window_len)?;
        if window_len != c.seq_len * c.n_features {
            return Err(Failure(
                TfStatus::InvalidArgument,
                format!(
                    "window has {window_len} values; expected seq_len × n_features = {} × {}",
                    c.seq_len, c.n_features
                ),
            ));
        }
        let out = out_slice(out, out_len, c.horizon)?;
        let y = model.predict(&Tensor::new([c.seq_len, c.n_features], input.to_vec())?)?;
        out.copy_from_slice(y.data());
        Ok(())
    })
}

/// Forecast in original units from the last `seq_len` of `n_rows` raw rows
/// (`n_rows × n_features`, row-major, columns in training order). Requires
/// a model loaded from a training checkpoint.
///
/// # Safety
/// `rows` must hold `n_rows × n_features` readable values and `out`
/// `out_len` writable ones.
#[no_mangle]
pub unsafe extern "C" fn tf_model_forecast(
    model: *const TfModel,
    rows: *const f64,
    n_rows: usize,
    out: *mut f64,
    out_len: usize,
) -> TfStatus {
    guard(|| {
        let ck = &model_ref(model)?.inner;
        let binding = ck.data.as_ref().ok_or_else(|| {
            Failure(
                TfStatus::InvalidArgument,
                "model has no scaler statistics; load a training checkpoint or use tf_model_predict".into(),
            )
        })?;
        let c = ck.model.config;
        let len = n_rows.checked_mul(c.n_features).ok_or_else(|| {
            Failure(
                TfStatus::InvalidArgument,
                format!("n_rows = {n_rows} overflows"),
            )
        })?;
        let values = in_slice(rows, len)?;
        let out = out_slice(out, out_len, c.horizon)?;
        let series = RawSeries::new(binding.columns.clone(), values.to_vec(), "ffi")?;
        out.copy_from_slice(&forecast_tail(ck, &series)?);
        Ok(())
    })
}

/// Releases a handle. NULL is ignored.
///
/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tf_model_free(model: *mut TfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
