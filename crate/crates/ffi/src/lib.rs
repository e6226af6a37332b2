//! C ABI for the ummaso pipeline.
//!
//! Every function returns an [`UmmasoStatus`]; on failure a message is
//! available from [`ummaso_last_error`] on the same thread. Objects are
//! opaque handles created by `*_load`/`*_generate`/`*_fit` functions and
//! released with the matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ummaso::dataset::{self, Dataset, SynthConfig};
use ummaso::metrics;
use ummaso::ndarray::Array2;
use ummaso::pipeline::{self, PipelineArtifacts, PipelineConfig};
use ummaso::Error;

/// Result codes. Values 2-4 match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UmmasoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Numerical = 4,
    Panic = 5,
}

/// Loaded or generated tabular data.
pub struct UmmasoDataset {
    inner: Dataset,
}

/// A fitted pipeline.
pub struct UmmasoArtifacts {
    inner: PipelineArtifacts,
}

/// Headline metrics of a fitted pipeline or a prediction set.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UmmasoMetrics {
    pub accuracy: f64,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub kappa: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let clean = msg.replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(clean).unwrap_or_default());
}

fn status_of(err: &Error) -> UmmasoStatus {
    match err.exit_code() {
        3 => UmmasoStatus::Io,
        4 => UmmasoStatus::Numerical,
        _ => UmmasoStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (UmmasoStatus, String)>) -> UmmasoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            UmmasoStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            UmmasoStatus::Panic
        }
    }
}

type FfiResult<T> = Result<T, (UmmasoStatus, String)>;

fn lift<T>(r: ummaso::Result<T>) -> FfiResult<T> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (UmmasoStatus, String) {
    (UmmasoStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> (UmmasoStatus, String) {
    (UmmasoStatus::InvalidArgument, msg.into())
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or_else(|| null(what))
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

fn matrix(n_rows: usize, n_cols: usize, x: &[f64]) -> FfiResult<Array2<f64>> {
    Array2::from_shape_vec((n_rows, n_cols), x.to_vec()).map_err(|e| invalid(e.to_string()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ummaso_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version contains NUL"),
    };
    VERSION.as_ptr()
}

/// Message for the most recent failure on this thread ("" after success).
/// The pointer stays valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn ummaso_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Reads a CSV with numeric feature columns and an integer label column.
///
/// # Safety
/// `path` and `label_column` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ummaso_dataset_load_csv(
    path: *const c_char,
    label_column: *const c_char,
    out: *mut *mut UmmasoDataset,
) -> UmmasoStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let label = str_arg(label_column, "label_column")?;
        let inner = lift(dataset::load_csv(Path::new(path), label))?;
        *out = Box::into_raw(Box::new(UmmasoDataset { inner }));
        Ok(())
    })
}

/// Synthetic soil-nutrient data (columns N, P, K, pH, EC) with 2 or 3 classes.
///
/// # Safety
/// `per_class` must point to `n_classes` counts; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ummaso_dataset_generate(
    per_class: *const usize,
    n_classes: usize,
    seed: u64,
    out: *mut *mut UmmasoDataset,
) -> UmmasoStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let counts = slice_arg(per_class, n_classes, "per_class")?.to_vec();
        let cfg = lift(SynthConfig::soil(counts, seed))?;
        let inner = lift(dataset::synth_generate(&cfg))?;
        *out = Box::into_raw(Box::new(UmmasoDataset { inner }));
        Ok(())
    })
}

/// Builds a dataset from a row-major `n_rows × n_cols` feature matrix and
/// `n_rows` labels. Features are named `x0, x1, ...`.
///
/// # Safety
/// `features` must hold `n_rows * n_cols` values and `labels` `n_rows` values.
#[no_mangle]
pub unsafe extern "C" fn ummaso_dataset_from_arrays(
    features: *const f64,
    n_rows: usize,
    n_cols: usize,
    labels: *const usize,
    out: *mut *mut UmmasoDataset,
) -> UmmasoStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let len = n_rows
            .checked_mul(n_cols)
            .ok_or_else(|| invalid("n_rows * n_cols overflows"))?;
        let x = slice_arg(features, len, "features")?;
        let y = slice_arg(labels, n_rows, "labels")?;
        if n_rows == 0 || n_cols == 0 {
            return Err(invalid("dataset must have at least one row and one column"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(invalid("features must be finite"));
        }
        if let Some(&bad) = y.iter().find(|&&l| l > dataset::MAX_LABEL) {
            return Err(invalid(format!("label {bad} exceeds {}", dataset::MAX_LABEL)));
        }
        let m = matrix(n_rows, n_cols, x)?;
        let names = (0..n_cols).map(|j| format!("x{j}")).collect();
        let n_classes = y.iter().max().map_or(0, |&l| l + 1);
        let inner = lift(Dataset::new(m, names, y.to_vec(), n_classes))?;
        *out = Box::into_raw(Box::new(UmmasoDataset { inner }));
        Ok(())
    })
}

/// Row, feature-column and class counts of a dataset.
///
/// # Safety
/// `data` must be a live handle; each non-null output pointer must be writable.
#[no_mangle]
pub unsafe extern "C" fn ummaso_dataset_shape(
    data: *const UmmasoDataset,
    n_rows: *mut usize,
    n_cols: *mut usize,
    n_classes: *mut usize,
) -> UmmasoStatus {
    guard(|| {
        let d = &data.as_ref().ok_or_else(|| null("data"))?.inner;
        if let Some(p) = n_rows.as_mut() {
            *p = d.n_samples();
        }
        if let Some(p) = n_cols.as_mut() {
            *p = d.n_features();
        }
        if let Some(p) = n_classes.as_mut() {
            *p = d.n_classes();
        }
        Ok(())
    })
}

/// Writes the dataset as CSV with the label in the last column.
///
/// # Safety
/// `data` must be a live handle; strings must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ummaso_dataset_write_csv(
    data: *const UmmasoDataset,
    path: *const c_char,
    label_column: *const c_char,
) -> UmmasoStatus {
    guard(|| {
        let d = &data.as_ref().ok_or_else(|| null("data"))?.inner;
        let path = str_arg(path, "path")?;
        let label = str_arg(label_column, "label_column")?;
        lift(d.write_csv(Path::new(path), label))
    })
}

/// Releases a dataset. Null is ignored.
///
/// # Safety
/// `data` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ummaso_dataset_free(data: *mut UmmasoDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Runs the full pipeline. `config_json` may be null for defaults; unknown
/// keys are rejected.
///
/// # Safety
/// `data` must be a live handle; `config_json` null or NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ummaso_pipeline_fit(
    data: *const UmmasoDataset,
    config_json: *const c_char,
    out: *mut *mut UmmasoArtifacts,
) -> UmmasoStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let d = &data.as_ref().ok_or_else(|| null("data"))?.inner;
        let cfg = if config_json.is_null() {
            PipelineConfig::default()
        } else {
            lift(PipelineConfig::from_json(str_arg(config_json, "config_json")?))?
        };
        let inner = lift(pipeline::run(d, &cfg))?;
        *out = Box::into_raw(Box::new(UmmasoArtifacts { inner }));
        Ok(())
    })
}

/// Writes an artifacts directory.
///
/// # Safety
/// `artifacts` must be a live handle; `dir` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ummaso_artifacts_save(artifacts: *const UmmasoArtifacts, dir: *const c_char) -> UmmasoStatus {
    guard(|| {
        let a = &artifacts.as_ref().ok_or_else(|| null("artifacts"))?.inner;
        lift(a.save(Path::new(str_arg(dir, "dir")?)))
    })
}

/// Reads an artifacts directory written by `fit` or [`ummaso_artifacts_save`].
///
/// # Safety
/// `dir` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ummaso_artifacts_load(dir: *const c_char, out: *mut *mut UmmasoArtifacts) -> UmmasoStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let inner = lift(PipelineArtifacts::load(Path::new(str_arg(dir, "dir")?)))?;
        *out = Box::into_raw(Box::new(UmmasoArtifacts { inner }));
        Ok(())
    })
}

/// Raw feature width expected by [`ummaso_artifacts_predict`] and the class count.
///
/// # Safety
/// `artifacts` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn ummaso_artifacts_shape(
    artifacts: *const UmmasoArtifacts,
    n_features: *mut usize,
    n_classes: *mut usize,
) -> UmmasoStatus {
    guard(|| {
        let a = &artifacts.as_ref().ok_or_else(|| null("artifacts"))?.inner;
        if let Some(p) = n_features.as_mut() {
            *p = a.manifest.feature_names.len();
        }
        if let Some(p) = n_classes.as_mut() {
            *p = a.model.n_classes();
        }
        Ok(())
    })
}

/// Predicts raw feature rows (training column order). `probs` receives
/// `n_rows × n_classes` values row-major; `labels` receives `n_rows` labels.
/// Either output may be null.
///
/// # Safety
/// `features` must hold `n_rows * n_cols` values; outputs must be large enough.
#[no_mangle]
pub unsafe extern "C" fn ummaso_artifacts_predict(
    artifacts: *const UmmasoArtifacts,
    features: *const f64,
    n_rows: usize,
    n_cols: usize,
    probs: *mut f64,
    labels: *mut usize,
) -> UmmasoStatus {
    guard(|| {
        let a = &artifacts.as_ref().ok_or_else(|| null("artifacts"))?.inner;
        let len = n_rows
            .checked_mul(n_cols)
            .ok_or_else(|| invalid("n_rows * n_cols overflows"))?;
        let x = slice_arg(features, len, "features")?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(invalid("features must be finite"));
        }
        let m = matrix(n_rows, n_cols, x)?;
        let (p, l) = lift(pipeline::predict(a, &m))?;
        if !probs.is_null() {
            let dst = std::slice::from_raw_parts_mut(probs, p.len());
            for (d, s) in dst.iter_mut().zip(p.iter()) {
                *d = *s;
            }
        }
        if !labels.is_null() {
            std::slice::from_raw_parts_mut(labels, l.len()).copy_from_slice(&l);
        }
        Ok(())
    })
}

/// Held-out metrics recorded when the pipeline was fitted.
///
/// # Safety
/// `artifacts` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ummaso_artifacts_metrics(artifacts: *const UmmasoArtifacts, out: *mut UmmasoMetrics) -> UmmasoStatus {
    guard(|| {
        let a = &artifacts.as_ref().ok_or_else(|| null("artifacts"))?.inner;
        let out = out_arg(out, "out")?;
        let m = &a.metrics;
        *out = UmmasoMetrics {
            accuracy: m.accuracy,
            precision_macro: m.precision_macro,
            recall_macro: m.recall_macro,
            kappa: m.kappa,
        };
        Ok(())
    })
}

/// Releases fitted artifacts. Null is ignored.
///
/// # Safety
/// `artifacts` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ummaso_artifacts_free(artifacts: *mut UmmasoArtifacts) {
    if !artifacts.is_null() {
        drop(Box::from_raw(artifacts));
    }
}

/// Accuracy, macro precision/recall and Cohen's kappa for label vectors.
///
/// # Safety
/// `truth` and `pred` must each hold `n` labels; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ummaso_metrics_compute(
    truth: *const usize,
    pred: *const usize,
    n: usize,
    n_classes: usize,
    out: *mut UmmasoMetrics,
) -> UmmasoStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let t = slice_arg(truth, n, "truth")?;
        let p = slice_arg(pred, n, "pred")?;
        let m = lift(metrics::evaluate(t, p, n_classes))?;
        *out = UmmasoMetrics {
            accuracy: m.accuracy,
            precision_macro: m.precision_macro,
            recall_macro: m.recall_macro,
            kappa: m.kappa,
        };
        Ok(())
    })
}
