//! C ABI over the stance-graph pipeline.
//!
//! Every fallible function returns an [`SgStatus`]. On failure the message
//! is available from [`sg_last_error_message`] on the same thread. Objects
//! are opaque handles created by `sg_*_load` / `sg_*_build` style functions
//! and released with the matching `sg_*_free`. Strings returned to the
//! caller are owned by the caller and released with [`sg_string_free`].
//!
//! The generated header lives in `include/stance_graph.h`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;

use stance_graph::embed::{embed_graph, EmbedConfig, EmbeddingMatrix};
use stance_graph::graph::{build_graph, degree_filter, FilterMode, ReplyGraph};
use stance_graph::model::LogRegModel;
use stance_graph::pipeline::{read_dataset, read_embeddings, read_graph, read_model, run_pipeline};
use stance_graph::synth::{generate_synthetic, SyntheticConfig};
use stance_graph::{Dataset, Error, PipelineConfig};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Config = 5,
    Training = 6,
    UndefinedMetric = 7,
    HashMismatch = 8,
    Format = 9,
    Utf8 = 10,
    Panic = 11,
}

/// Parsed tweet collection.
pub struct SgDataset(Dataset);

/// Undirected user reply graph.
pub struct SgGraph(ReplyGraph);

/// Node embedding matrix, one row per graph node.
pub struct SgEmbedding(EmbeddingMatrix);

/// Trained logistic-regression classifier.
pub struct SgModel(LogRegModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(SgStatus, String);

type FfiResult<T> = Result<T, Failure>;

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io(_) => SgStatus::Io,
            Error::Parse { .. } | Error::DuplicateTweet { .. } | Error::UnknownLabel { .. } => SgStatus::Parse,
            Error::Config(_) => SgStatus::Config,
            Error::InvalidInput(_) => SgStatus::InvalidArgument,
            Error::Training(_) => SgStatus::Training,
            Error::UndefinedMetric(_) => SgStatus::UndefinedMetric,
            Error::Format { .. } => SgStatus::Format,
            Error::HashMismatch { .. } => SgStatus::HashMismatch,
        };
        Failure(status, e.to_string())
    }
}

fn set_last_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Runs `f`, converting errors and panics to a status code.
fn guard<F: FnOnce() -> FfiResult<()>>(f: F) -> SgStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SgStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            SgStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(SgStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(SgStatus::Utf8, format!("{what}: {e}")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, what: &str) -> FfiResult<Option<&'a str>> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, what).map(Some)
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> FfiResult<PathBuf> {
    str_arg(p, what).map(PathBuf::from)
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> FfiResult<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn from_toml<T: serde::de::DeserializeOwned + Default>(text: Option<&str>, what: &str) -> FfiResult<T> {
    match text {
        None => Ok(T::default()),
        Some(t) => toml::from_str(t).map_err(|e| Failure(SgStatus::Config, format!("{what}: {e}"))),
    }
}

fn check(errs: Vec<String>) -> FfiResult<()> {
    if errs.is_empty() {
        Ok(())
    } else {
        Err(Failure(SgStatus::Config, errs.join("; ")))
    }
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn sg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be NULL or a string returned by this library, freed only once.
#[no_mangle]
pub unsafe extern "C" fn sg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a JSONL tweet file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sg_dataset_load(path: *const c_char, skip_bad_lines: bool, out: *mut *mut SgDataset) -> SgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let (d, _) = read_dataset(&path_arg(path, "path")?, skip_bad_lines)?;
        *out = boxed(SgDataset(d));
        Ok(())
    })
}

/// Generates a synthetic dataset. `config_toml` holds synthetic generator
/// settings; NULL selects the defaults.
///
/// # Safety
/// `config_toml` must be NULL or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sg_dataset_synthetic(config_toml: *const c_char, seed: u64, out: *mut *mut SgDataset) -> SgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let cfg: SyntheticConfig = from_toml(opt_str_arg(config_toml, "config_toml")?, "synthetic config")?;
        check(cfg.validate())?;
        *out = boxed(SgDataset(generate_synthetic(&cfg, seed)?));
        Ok(())
    })
}

/// Number of tweets; 0 for NULL.
///
/// # Safety
/// `d` must be NULL or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn sg_dataset_len(d: *const SgDataset) -> usize {
    d.as_ref().map_or(0, |d| d.0.len())
}

/// Number of tweets with a pro or skeptic label; 0 for NULL.
///
/// # Safety
/// `d` must be NULL or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn sg_dataset_labeled_len(d: *const SgDataset) -> usize {
    d.as_ref().map_or(0, |d| d.0.labeled_len())
}

/// # Safety
/// `d` must be NULL or a dataset handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sg_dataset_free(d: *mut SgDataset) {
    free(d)
}

/// Builds the reply graph of `d` and drops nodes below `min_degree`. With
/// `core` set the filter is repeated until it is stable.
///
/// # Safety
/// `d` must be a live dataset handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sg_graph_build(
    d: *const SgDataset,
    min_degree: usize,
    core: bool,
    out: *mut *mut SgGraph,
) -> SgStatus {
    guard(|| {
        let d = deref(d, "dataset")?;
        let out = out_ptr(out, "out")?;
        let mode = if core { FilterMode::Iterative } else { FilterMode::SinglePass };
        let (g, _) = build_graph(&d.0);
        *out = boxed(SgGraph(degree_filter(&g, min_degree, mode)));
        Ok(())
    })
}

/// Loads an edge-list file.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sg_graph_load(path: *const c_char, out: *mut *mut SgGraph) -> SgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let (g, _) = read_graph(&path_arg(path, "path")?)?;
        *out = boxed(SgGraph(g));
        Ok(())
    })
}

/// # Safety
/// `g` must be NULL or a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn sg_graph_n_nodes(g: *const SgGraph) -> usize {
    g.as_ref().map_or(0, |g| g.0.n_nodes())
}

/// # Safety
/// `g` must be NULL or a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn sg_graph_n_edges(g: *const SgGraph) -> usize {
    g.as_ref().map_or(0, |g| g.0.edge_count())
}

/// # Safety
/// `g` must be NULL or a graph handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sg_graph_free(g: *mut SgGraph) {
    free(g)
}

/// Trains node embeddings. `config_toml` holds embedding settings; NULL
/// selects the defaults. `threads` of 0 means 1.
///
/// # Safety
/// `g` must be a live graph handle, `config_toml` NULL or NUL-terminated,
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sg_embed(
    g: *const SgGraph,
    config_toml: *const c_char,
    seed: u64,
    threads: usize,
    out: *mut *mut SgEmbedding,
) -> SgStatus {
    guard(|| {
        let g = deref(g, "graph")?;
        let out = out_ptr(out, "out")?;
        let cfg: EmbedConfig = from_toml(opt_str_arg(config_toml, "config_toml")?, "embedding config")?;
        check(cfg.validate())?;
        *out = boxed(SgEmbedding(embed_graph(&g.0, &cfg, threads.max(1), seed)?));
        Ok(())
    })
}

/// Loads an embedding text file.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sg_embedding_load(path: *const c_char, out: *mut *mut SgEmbedding) -> SgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let (e, _) = read_embeddings(&path_arg(path, "path")?)?;
        *out = boxed(SgEmbedding(e));
        Ok(())
    })
}

/// # Safety
/// `e` must be NULL or a live embedding handle.
#[no_mangle]
pub unsafe extern "C" fn sg_embedding_n_nodes(e: *const SgEmbedding) -> usize {
    e.as_ref().map_or(0, |e| e.0.n_nodes())
}

/// # Safety
/// `e` must be NULL or a live embedding handle.
#[no_mangle]
pub unsafe extern "C" fn sg_embedding_dim(e: *const SgEmbedding) -> usize {
    e.as_ref().map_or(0, |e| e.0.dim())
}

/// Copies row `index` into `buf`, which must hold `len >= dim` doubles, and
/// writes the row's user id to `user_id` when it is not NULL.
///
/// # Safety
/// `e` must be a live embedding handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn sg_embedding_row(
    e: *const SgEmbedding,
    index: usize,
    buf: *mut f64,
    len: usize,
    user_id: *mut u64,
) -> SgStatus {
    guard(|| {
        let e = &deref(e, "embedding")?.0;
        if index >= e.n_nodes() {
            return Err(Failure(
                SgStatus::InvalidArgument,
                format!("row {index} out of range for {} nodes", e.n_nodes()),
            ));
        }
        if len < e.dim() {
            return Err(Failure(
                SgStatus::InvalidArgument,
                format!("buffer holds {len} values, dimension is {}", e.dim()),
            ));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        std::slice::from_raw_parts_mut(buf, e.dim()).copy_from_slice(e.row(index));
        if let Some(id) = user_id.as_mut() {
            *id = e.node_ids()[index];
        }
        Ok(())
    })
}

/// # Safety
/// `e` must be NULL or an embedding handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sg_embedding_free(e: *mut SgEmbedding) {
    free(e)
}

/// Area under the ROC curve of `scores` against `positive` (nonzero means
/// positive). Fails with `SG_STATUS_UNDEFINED_METRIC` when one class is
/// missing.
///
/// # Safety
/// `scores` and `positive` must be valid for `n` reads; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sg_auc(scores: *const f64, positive: *const u8, n: usize, out: *mut f64) -> SgStatus {
    guard(|| {
        let scores = slice_arg(scores, n, "scores")?;
        let labels: Vec<bool> = slice_arg(positive, n, "positive")?.iter().map(|&b| b != 0).collect();
        let out = out_ptr(out, "out")?;
        *out = stance_graph::eval::auc(scores, &labels)?;
        Ok(())
    })
}

/// Loads a model text file.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sg_model_load(path: *const c_char, out: *mut *mut SgModel) -> SgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let (m, _) = read_model(&path_arg(path, "path")?)?;
        *out = boxed(SgModel(m));
        Ok(())
    })
}

/// # Safety
/// `m` must be NULL or a live model handle.
#[no_mangle]
pub unsafe extern "C" fn sg_model_dim(m: *const SgModel) -> usize {
    m.as_ref().map_or(0, |m| m.0.dim())
}

/// Probability of the pro class for one feature vector of length `len`.
///
/// # Safety
/// `m` must be a live model handle, `x` valid for `len` reads, `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn sg_model_predict_proba(m: *const SgModel, x: *const f64, len: usize, out: *mut f64) -> SgStatus {
    guard(|| {
        let m = deref(m, "model")?;
        let x = slice_arg(x, len, "x")?;
        let out = out_ptr(out, "out")?;
        *out = m.0.predict_proba(x)?;
        Ok(())
    })
}

/// # Safety
/// `m` must be NULL or a model handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sg_model_free(m: *mut SgModel) {
    free(m)
}

/// Runs the whole pipeline from a TOML pipeline configuration and writes
/// its artifacts to `out_dir`. On success `report_json` receives the
/// report, to be released with [`sg_string_free`].
///
/// # Safety
/// `config_toml` and `out_dir` must be NUL-terminated; `report_json` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn sg_run_pipeline(
    config_toml: *const c_char,
    out_dir: *const c_char,
    report_json: *mut *mut c_char,
) -> SgStatus {
    guard(|| {
        let text = str_arg(config_toml, "config_toml")?;
        let dir = path_arg(out_dir, "out_dir")?;
        let out = out_ptr(report_json, "report_json")?;
        let cfg = PipelineConfig::from_toml(text)?;
        let run = run_pipeline(&cfg, Path::new(&dir)).map_err(|e| {
            let msg = e.to_string();
            Failure(Failure::from(e.source).0, msg)
        })?;
        let json = CString::new(run.report.to_json()).map_err(|e| Failure(SgStatus::Format, e.to_string()))?;
        *out = json.into_raw();
        Ok(())
    })
}
