//! C ABI over `alphasne`.
//!
//! Every fallible call returns an [`AsneStatus`]; on failure the message is
//! available from [`asne_last_error`] on the same thread. Handles are opaque
//! and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use alphasne::divergence::alpha_divergence;
use alphasne::eda::EstimateOptions;
use alphasne::evaluation::{retrieval_auc, DEFAULT_K_INPUT, DEFAULT_K_MAX};
use alphasne::optimizer::OptimizerConfig;
use alphasne::pipeline::{self, Prepared, RunSettings, ScoredEmbedding, DEFAULT_PERPLEXITY};
use alphasne::{Dataset, Error};
use ndarray::ArrayView2;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AsneStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    DimensionMismatch = 3,
    Numerical = 4,
    Io = 5,
    Parse = 6,
    Panic = 7,
}

impl AsneStatus {
    fn of(err: &Error) -> Self {
        match err {
            Error::InvalidInput(_) => AsneStatus::InvalidInput,
            Error::DimensionMismatch(_) => AsneStatus::DimensionMismatch,
            Error::Numerical(_) => AsneStatus::Numerical,
            Error::Io { .. } => AsneStatus::Io,
            Error::Parse { .. } | Error::Json(_) => AsneStatus::Parse,
            Error::Stage { source, .. } => AsneStatus::of(source),
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(AsneStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(AsneStatus::of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(AsneStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, recording any error or panic for [`asne_last_error`].
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AsneStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AsneStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            AsneStatus::Panic
        }
    }
}

unsafe fn slice<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn matrix<'a>(ptr: *const f64, rows: usize, cols: usize, what: &str) -> Result<ArrayView2<'a, f64>, Failure> {
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Failure(AsneStatus::InvalidInput, format!("{what} is too large")))?;
    let s = slice(ptr, len, what)?;
    Ok(ArrayView2::from_shape((rows, cols), s).expect("length checked"))
}

unsafe fn write<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn asne_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn asne_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version contains NUL"),
    };
    VERSION.as_ptr()
}

/// Optimizer and evaluation settings for [`asne_embed`] and
/// [`asne_estimate_alpha`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsneEmbedConfig {
    pub alpha: f64,
    pub learning_rate: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub output_dim: usize,
    /// Input neighborhood size used for the retrieval AUC.
    pub k_input: usize,
    /// Largest output neighborhood size used for the retrieval AUC.
    pub k_max: usize,
    /// Nonzero: stop once the cost has converged.
    pub stop_on_convergence: i32,
}

impl AsneEmbedConfig {
    fn settings(&self) -> RunSettings {
        let optimizer = OptimizerConfig {
            alpha: self.alpha,
            learning_rate: self.learning_rate,
            max_iters: self.max_iters,
            seed: self.seed,
            output_dim: self.output_dim,
            stop_on_convergence: self.stop_on_convergence != 0,
            ..OptimizerConfig::default()
        };
        RunSettings {
            k_input: self.k_input,
            k_max: self.k_max,
            optimizer,
            ..RunSettings::default()
        }
    }
}

/// Library defaults.
#[no_mangle]
pub extern "C" fn asne_embed_config_default() -> AsneEmbedConfig {
    let o = OptimizerConfig::default();
    AsneEmbedConfig {
        alpha: o.alpha,
        learning_rate: o.learning_rate,
        max_iters: o.max_iters,
        seed: o.seed,
        output_dim: o.output_dim,
        k_input: DEFAULT_K_INPUT,
        k_max: DEFAULT_K_MAX,
        stop_on_convergence: o.stop_on_convergence as i32,
    }
}

/// Input data with its calibrated neighbor probabilities.
pub struct AsneAffinity(Prepared);

/// An optimized map with its cost and retrieval curve.
pub struct AsneEmbedding(ScoredEmbedding);

/// Calibrates input probabilities for `n` points of dimension `dim`, given
/// row-major in `data`. A perplexity of 0 selects the default.
///
/// # Safety
/// `data` must point to `n * dim` readable doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn asne_affinity_new(
    data: *const f64,
    n: usize,
    dim: usize,
    perplexity: f64,
    standardize: i32,
    out: *mut *mut AsneAffinity,
) -> AsneStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let x = matrix(data, n, dim, "data")?;
        let settings = RunSettings {
            perplexity: if perplexity == 0.0 { DEFAULT_PERPLEXITY } else { perplexity },
            standardize: standardize != 0,
            ..RunSettings::default()
        };
        let dataset = Dataset::new("ffi", x.to_owned(), None)?;
        let prepared = pipeline::prepare(&dataset, &settings)?;
        write(out, Box::into_raw(Box::new(AsneAffinity(prepared))), "out")
    })
}

/// Number of points of an affinity handle, 0 for null.
///
/// # Safety
/// `affinity` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn asne_affinity_n_points(affinity: *const AsneAffinity) -> usize {
    affinity.as_ref().map_or(0, |a| a.0.p.n())
}

/// # Safety
/// `affinity` must be null or come from [`asne_affinity_new`], and must not
/// be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn asne_affinity_free(affinity: *mut AsneAffinity) {
    if !affinity.is_null() {
        drop(Box::from_raw(affinity));
    }
}

/// Optimizes and scores a map.
///
/// # Safety
/// `affinity` and `config` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn asne_embed(
    affinity: *const AsneAffinity,
    config: *const AsneEmbedConfig,
    out: *mut *mut AsneEmbedding,
) -> AsneStatus {
    guard(|| {
        let a = affinity.as_ref().ok_or_else(|| null("affinity"))?;
        let c = config.as_ref().ok_or_else(|| null("config"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let settings = c.settings();
        let scored = pipeline::embed_and_score(&a.0, &settings.optimizer, &settings)?;
        write(out, Box::into_raw(Box::new(AsneEmbedding(scored))), "out")
    })
}

/// Number of map points, 0 for null.
///
/// # Safety
/// `embedding` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn asne_embedding_n_points(embedding: *const AsneEmbedding) -> usize {
    embedding.as_ref().map_or(0, |e| e.0.result.embedding.n())
}

/// Map dimension, 0 for null.
///
/// # Safety
/// `embedding` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn asne_embedding_dim(embedding: *const AsneEmbedding) -> usize {
    embedding.as_ref().map_or(0, |e| e.0.result.embedding.dim())
}

/// Copies the coordinates, row-major, into `out` of length `len`, which
/// must equal points times dimension.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn asne_embedding_coords(embedding: *const AsneEmbedding, out: *mut f64, len: usize) -> AsneStatus {
    guard(|| {
        let e = embedding.as_ref().ok_or_else(|| null("embedding"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let coords = &e.0.result.embedding.coords;
        if len != coords.len() {
            return Err(Failure(
                AsneStatus::DimensionMismatch,
                format!("buffer holds {len} values, map has {}", coords.len()),
            ));
        }
        let dst = std::slice::from_raw_parts_mut(out, len);
        for (d, s) in dst.iter_mut().zip(coords.iter()) {
            *d = *s;
        }
        Ok(())
    })
}

/// Final alpha-SNE cost, NaN for null.
///
/// # Safety
/// `embedding` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn asne_embedding_cost(embedding: *const AsneEmbedding) -> f64 {
    embedding.as_ref().map_or(f64::NAN, |e| e.0.cost.total)
}

/// Retrieval AUC of the map against its input data, NaN for null.
///
/// # Safety
/// `embedding` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn asne_embedding_auc(embedding: *const AsneEmbedding) -> f64 {
    embedding.as_ref().map_or(f64::NAN, |e| e.0.curve.auc)
}

/// # Safety
/// `embedding` must be null or come from [`asne_embed`], and must not be
/// used afterwards.
#[no_mangle]
pub unsafe extern "C" fn asne_embedding_free(embedding: *mut AsneEmbedding) {
    if !embedding.is_null() {
        drop(Box::from_raw(embedding));
    }
}

/// Alpha-divergence between two probability vectors of length `len`.
///
/// # Safety
/// `p` and `q` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn asne_alpha_divergence(
    p: *const f64,
    q: *const f64,
    len: usize,
    alpha: f64,
    out: *mut f64,
) -> AsneStatus {
    guard(|| {
        let d = alpha_divergence(slice(p, len, "p")?, slice(q, len, "q")?, alpha)?;
        write(out, d, "out")
    })
}

/// Retrieval AUC of `output` (`n` x `output_dim`) against `input`
/// (`n` x `input_dim`), both row-major.
///
/// # Safety
/// The buffers must hold the stated number of doubles; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn asne_retrieval_auc(
    input: *const f64,
    input_dim: usize,
    output: *const f64,
    output_dim: usize,
    n: usize,
    k_input: usize,
    k_max: usize,
    out: *mut f64,
) -> AsneStatus {
    guard(|| {
        let x = matrix(input, n, input_dim, "input")?;
        let y = matrix(output, n, output_dim, "output")?;
        let curve = retrieval_auc(x, y, k_input, k_max)?;
        write(out, curve.auc, "out")
    })
}

/// Embeds once per grid value with `config` (its alpha is ignored) and
/// writes the alpha selected by score matching to `out_alpha`. If
/// `out_objectives` is not null it receives one objective per grid value,
/// NaN for failed candidates.
///
/// # Safety
/// `grid` must hold `grid_len` doubles, `out_objectives` (if not null)
/// `grid_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn asne_estimate_alpha(
    affinity: *const AsneAffinity,
    config: *const AsneEmbedConfig,
    grid: *const f64,
    grid_len: usize,
    out_alpha: *mut f64,
    out_objectives: *mut f64,
) -> AsneStatus {
    guard(|| {
        let a = affinity.as_ref().ok_or_else(|| null("affinity"))?;
        let c = config.as_ref().ok_or_else(|| null("config"))?;
        let grid = slice(grid, grid_len, "grid")?;
        if out_alpha.is_null() {
            return Err(null("out_alpha"));
        }
        let options = EstimateOptions {
            record_likelihood: false,
            ..EstimateOptions::default()
        };
        let est = pipeline::estimate(&a.0, &c.settings(), grid, options)?;
        if !out_objectives.is_null() {
            std::slice::from_raw_parts_mut(out_objectives, grid_len).copy_from_slice(&est.fit.objectives);
        }
        write(out_alpha, est.fit.selected_alpha, "out_alpha")
    })
}
