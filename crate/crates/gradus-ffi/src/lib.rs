//! C ABI over the graded code-search supervision pipeline.
//!
//! Conventions:
//! - Handles (`GradusConfig`, `GradusModel`) are opaque; create them with the
//!   constructors here and release them with the matching `_free` function.
//! - Every fallible call returns a [`GradusStatus`]; constructors return null
//!   on failure. After any failure, [`gradus_last_error`] yields a
//!   human-readable message for the calling thread.
//! - All `char*` parameters are NUL-terminated UTF-8.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::ptr;

use gradus::pipeline::{make_synthetic_corpus, run_stage, PipelineConfig, RunOptions, Stage};
use gradus::train::EncoderModel;
use gradus::Error;

/// Bumped on any breaking change to this interface.
pub const GRADUS_ABI_VERSION: u32 = 1;

/// Outcome of a fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradusStatus {
    /// Success.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The configuration failed validation or could not be parsed.
    InvalidConfig = 3,
    /// An argument value was rejected.
    InvalidArgument = 4,
    /// A required stage input artifact is missing.
    MissingInput = 5,
    /// A filesystem or serialization error.
    Io = 6,
    /// A remote backend failed after retries.
    Backend = 7,
    /// Another process holds the working-directory lock.
    Locked = 8,
    /// A model checkpoint was malformed.
    Checkpoint = 9,
    /// The operation had no data to work on.
    NoData = 10,
    /// The provided output buffer is too small.
    BufferTooSmall = 11,
    /// An internal numerical error.
    Internal = 12,
}

/// Opaque pipeline configuration handle.
pub struct GradusConfig(PipelineConfig);

/// Opaque trained-encoder handle.
pub struct GradusModel(EncoderModel);

thread_local! {
    static LAST_ERROR: RefCell<CString> =
        RefCell::new(CString::new("").expect("empty message"));
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).expect("no interior NUL");
    });
}

fn status_of(err: &Error) -> GradusStatus {
    match err.code() {
        "invalid_config" => GradusStatus::InvalidConfig,
        "invalid_argument" | "budget_too_small" | "empty_token_stream" => {
            GradusStatus::InvalidArgument
        }
        "missing_input" => GradusStatus::MissingInput,
        "io" | "json" => GradusStatus::Io,
        "backend" => GradusStatus::Backend,
        "locked" => GradusStatus::Locked,
        "checkpoint" => GradusStatus::Checkpoint,
        "no_positives" | "empty_candidates" | "no_queries" | "no_groups"
        | "insufficient_samples" | "degenerate_distribution" | "mismatched_query_sets"
        | "mismatched_annotations" => GradusStatus::NoData,
        _ => GradusStatus::Internal,
    }
}

fn fail(err: &Error) -> GradusStatus {
    set_error(&err.to_string());
    status_of(err)
}

/// # Safety
/// `p` must be null or point to a NUL-terminated string.
unsafe fn cstr_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, GradusStatus> {
    if p.is_null() {
        set_error(&format!("{what} must not be null"));
        return Err(GradusStatus::NullArgument);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(&format!("{what} is not valid UTF-8"));
        GradusStatus::InvalidUtf8
    })
}

/// Version of this interface; compare against `GRADUS_ABI_VERSION`.
#[no_mangle]
pub extern "C" fn gradus_abi_version() -> u32 {
    GRADUS_ABI_VERSION
}

/// Message describing the most recent failure on the calling thread.
///
/// The pointer stays valid until the next failing `gradus_*` call on the
/// same thread. Never null; empty string when no failure has occurred.
#[no_mangle]
pub extern "C" fn gradus_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Fresh configuration with reference defaults. Never fails.
#[no_mangle]
pub extern "C" fn gradus_config_default() -> *mut GradusConfig {
    Box::into_raw(Box::new(GradusConfig(PipelineConfig::default())))
}

/// Load and validate a TOML configuration file. Null on failure.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gradus_config_load(path: *const c_char) -> *mut GradusConfig {
    let Ok(path) = cstr_arg(path, "path") else { return ptr::null_mut() };
    match PipelineConfig::load(Path::new(path)) {
        Ok(cfg) => Box::into_raw(Box::new(GradusConfig(cfg))),
        Err(err) => {
            fail(&err);
            ptr::null_mut()
        }
    }
}

/// Release a configuration handle. Null is ignored.
///
/// # Safety
/// `cfg` must be null or a pointer from a `gradus_config_*` constructor,
/// not freed before.
#[no_mangle]
pub unsafe extern "C" fn gradus_config_free(cfg: *mut GradusConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Override the root seed.
///
/// # Safety
/// `cfg` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn gradus_config_set_seed(
    cfg: *mut GradusConfig,
    seed: u64,
) -> GradusStatus {
    let Some(cfg) = cfg.as_mut() else {
        set_error("cfg must not be null");
        return GradusStatus::NullArgument;
    };
    cfg.0.seed = seed;
    GradusStatus::Ok
}

/// Point the configuration at a corpus directory and a working directory.
///
/// # Safety
/// `cfg` must be a live configuration handle; both paths must be
/// NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn gradus_config_set_paths(
    cfg: *mut GradusConfig,
    corpus_dir: *const c_char,
    work_dir: *const c_char,
) -> GradusStatus {
    let Some(cfg) = cfg.as_mut() else {
        set_error("cfg must not be null");
        return GradusStatus::NullArgument;
    };
    let corpus = match cstr_arg(corpus_dir, "corpus_dir") {
        Ok(s) => s,
        Err(status) => return status,
    };
    let work = match cstr_arg(work_dir, "work_dir") {
        Ok(s) => s,
        Err(status) => return status,
    };
    cfg.0.corpus_dir = PathBuf::from(corpus);
    cfg.0.work_dir = PathBuf::from(work);
    GradusStatus::Ok
}

/// Run one pipeline stage by name (`ingest`, `docgen`, `mine`, `annotate`,
/// `refine`, `train`, `eval`, `grid`, or `mds`). Stages that are already up
/// to date are skipped; that still counts as success.
///
/// # Safety
/// `cfg` must be a live configuration handle; `stage` must be a
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gradus_run_stage(
    cfg: *const GradusConfig,
    stage: *const c_char,
    strict: bool,
    offline: bool,
) -> GradusStatus {
    let Some(cfg) = cfg.as_ref() else {
        set_error("cfg must not be null");
        return GradusStatus::NullArgument;
    };
    let name = match cstr_arg(stage, "stage") {
        Ok(s) => s,
        Err(status) => return status,
    };
    let Some(stage) = Stage::from_name(name) else {
        set_error(&format!("unknown stage {name:?}"));
        return GradusStatus::InvalidArgument;
    };
    match run_stage(&cfg.0, stage, RunOptions { strict, offline }) {
        Ok(_) => GradusStatus::Ok,
        Err(err) => fail(&err),
    }
}

/// Write the bundled synthetic corpus under `dest`.
///
/// # Safety
/// `dest` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gradus_synth_corpus(
    dest: *const c_char,
    repos: usize,
    funcs_per_repo: usize,
    seed: u64,
) -> GradusStatus {
    let dest = match cstr_arg(dest, "dest") {
        Ok(s) => s,
        Err(status) => return status,
    };
    match make_synthetic_corpus(Path::new(dest), repos, funcs_per_repo, seed) {
        Ok(_) => GradusStatus::Ok,
        Err(err) => fail(&err),
    }
}

/// Load a trained encoder checkpoint. Null on failure.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gradus_model_load(path: *const c_char) -> *mut GradusModel {
    let Ok(path) = cstr_arg(path, "path") else { return ptr::null_mut() };
    match EncoderModel::load_from(Path::new(path)) {
        Ok(model) => Box::into_raw(Box::new(GradusModel(model))),
        Err(err) => {
            fail(&err);
            ptr::null_mut()
        }
    }
}

/// Release a model handle. Null is ignored.
///
/// # Safety
/// `model` must be null or a pointer from `gradus_model_load`, not freed
/// before.
#[no_mangle]
pub unsafe extern "C" fn gradus_model_free(model: *mut GradusModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Embedding width of a loaded model; 0 if `model` is null.
///
/// # Safety
/// `model` must be null or a live model handle.
#[no_mangle]
pub unsafe extern "C" fn gradus_model_embed_dim(model: *const GradusModel) -> usize {
    match model.as_ref() {
        Some(m) => m.0.embed_dim,
        None => 0,
    }
}

/// Encode `text` into `out`, a caller-owned buffer of at least
/// `gradus_model_embed_dim` doubles. The embedding has unit length.
///
/// # Safety
/// `model` must be a live model handle, `text` a NUL-terminated string, and
/// `out` writable for `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gradus_model_encode(
    model: *const GradusModel,
    text: *const c_char,
    out: *mut f64,
    out_len: usize,
) -> GradusStatus {
    let Some(model) = model.as_ref() else {
        set_error("model must not be null");
        return GradusStatus::NullArgument;
    };
    if out.is_null() {
        set_error("out must not be null");
        return GradusStatus::NullArgument;
    }
    let text = match cstr_arg(text, "text") {
        Ok(s) => s,
        Err(status) => return status,
    };
    if out_len < model.0.embed_dim {
        set_error(&format!(
            "output buffer holds {out_len} doubles; the embedding needs {}",
            model.0.embed_dim
        ));
        return GradusStatus::BufferTooSmall;
    }
    match model.0.encode(text) {
        Ok(embedding) => {
            ptr::copy_nonoverlapping(embedding.as_ptr(), out, embedding.len());
            GradusStatus::Ok
        }
        Err(err) => fail(&err),
    }
}

/// Cosine similarity of two texts under the model, written to `out`.
///
/// # Safety
/// `model` must be a live model handle, `a` and `b` NUL-terminated strings,
/// and `out` writable for one double.
#[no_mangle]
pub unsafe extern "C" fn gradus_model_similarity(
    model: *const GradusModel,
    a: *const c_char,
    b: *const c_char,
    out: *mut f64,
) -> GradusStatus {
    let Some(model) = model.as_ref() else {
        set_error("model must not be null");
        return GradusStatus::NullArgument;
    };
    if out.is_null() {
        set_error("out must not be null");
        return GradusStatus::NullArgument;
    }
    let a = match cstr_arg(a, "a") {
        Ok(s) => s,
        Err(status) => return status,
    };
    let b = match cstr_arg(b, "b") {
        Ok(s) => s,
        Err(status) => return status,
    };
    let ea = match model.0.encode(a) {
        Ok(e) => e,
        Err(err) => return fail(&err),
    };
    let eb = match model.0.encode(b) {
        Ok(e) => e,
        Err(err) => return fail(&err),
    };
    // Encodings are unit length, so the dot product is the cosine.
    *out = ea.iter().zip(&eb).map(|(x, y)| x * y).sum();
    GradusStatus::Ok
}
