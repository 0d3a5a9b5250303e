//! C ABI over `randset`.
//!
//! Objects are opaque handles created by `randset_*_new`/`_from_*`/`_compute`
//! functions and released with the matching `_free`. Every fallible call
//! returns a [`RandsetStatus`]; on failure the message is available from
//! [`randset_last_error`] on the same thread until the next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use randset::classify::{self, LabeledIndex, SmoothingKernel, WardOptions};
use randset::features::{extract_features, RealisationFeatures};
use randset::ndistance::{self, ComponentCount, DistanceMatrix, FeatureMode, PairwiseEngine, SamplingPolicy};
use randset::raster::{parse_pbm, write_pbm, BinaryRaster, PbmVariant};
use randset::sim::{realise, ModelSpec};
use randset::Error;

/// Result code of every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RandsetStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Io = 4,
    NoComponents = 5,
    RadiusMismatch = 6,
    NegativeDistance = 7,
    Format = 8,
    Panic = 9,
}

/// Binary image.
pub struct RandsetRaster(BinaryRaster);

/// Per-component features of one realisation.
pub struct RandsetFeatures(RealisationFeatures);

/// Symmetric distance matrix.
pub struct RandsetMatrix(DistanceMatrix);

/// Smoothing kernel of the kNN posterior.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RandsetKernel {
    Uniform = 0,
    Epanechnikov = 1,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(RandsetStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Parse { .. } => RandsetStatus::Parse,
            Error::InvalidArgument(_) => RandsetStatus::InvalidArgument,
            Error::NoComponents => RandsetStatus::NoComponents,
            Error::RadiusMismatch(..) => RandsetStatus::RadiusMismatch,
            Error::NegativeDistance(_) => RandsetStatus::NegativeDistance,
            Error::FeatureRecord { .. } | Error::Format(_) | Error::Json(_) => RandsetStatus::Format,
            Error::Io(_) => RandsetStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: RandsetStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

fn null(what: &str) -> Failure {
    fail(RandsetStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RandsetStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RandsetStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            RandsetStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(RandsetStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Message of the last failed call on this thread; empty if none. The
/// pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn randset_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn randset_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a PBM file (P1 or P4) held in memory.
///
/// # Safety
/// `data` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn randset_raster_from_pbm(
    data: *const u8,
    len: usize,
    out_raster: *mut *mut RandsetRaster,
) -> RandsetStatus {
    guard(|| {
        let bytes = slice(data, len, "data")?;
        let dst = out(out_raster, "out_raster")?;
        *dst = boxed(RandsetRaster(parse_pbm(bytes)?));
        Ok(())
    })
}

/// Builds a raster from `width * height` row-major bytes, nonzero meaning
/// foreground.
///
/// # Safety
/// `bits` must point to `width * height` readable bytes.
#[no_mangle]
pub unsafe extern "C" fn randset_raster_from_bits(
    width: usize,
    height: usize,
    bits: *const u8,
    out_raster: *mut *mut RandsetRaster,
) -> RandsetStatus {
    guard(|| {
        let n = width.checked_mul(height).ok_or_else(|| fail(RandsetStatus::InvalidArgument, "size overflows"))?;
        let bits = slice(bits, n, "bits")?;
        let dst = out(out_raster, "out_raster")?;
        let raster = BinaryRaster::from_bits(width, height, bits.iter().map(|&b| b != 0).collect())?;
        *dst = boxed(RandsetRaster(raster));
        Ok(())
    })
}

/// Simulates one realisation of the model given as a JSON spec.
///
/// # Safety
/// `spec_json` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn randset_raster_simulate(
    spec_json: *const c_char,
    seed: u64,
    out_raster: *mut *mut RandsetRaster,
) -> RandsetStatus {
    guard(|| {
        let spec = ModelSpec::from_json(string(spec_json, "spec_json")?)?;
        let dst = out(out_raster, "out_raster")?;
        *dst = boxed(RandsetRaster(realise(&spec, seed)?));
        Ok(())
    })
}

/// # Safety
/// `raster` must be a live handle or null; `width`/`height` writable or null.
#[no_mangle]
pub unsafe extern "C" fn randset_raster_size(
    raster: *const RandsetRaster,
    width: *mut usize,
    height: *mut usize,
) -> RandsetStatus {
    guard(|| {
        let r = &as_ref(raster, "raster")?.0;
        *out(width, "width")? = r.width();
        *out(height, "height")? = r.height();
        Ok(())
    })
}

/// # Safety
/// `raster` must be a live handle; `count` writable.
#[no_mangle]
pub unsafe extern "C" fn randset_raster_foreground_count(
    raster: *const RandsetRaster,
    count: *mut usize,
) -> RandsetStatus {
    guard(|| {
        *out(count, "count")? = as_ref(raster, "raster")?.0.foreground_count();
        Ok(())
    })
}

/// Encodes a raster as PBM. The buffer is released with
/// [`randset_bytes_free`].
///
/// # Safety
/// `raster` must be a live handle; `out_data` and `out_len` writable.
#[no_mangle]
pub unsafe extern "C" fn randset_raster_to_pbm(
    raster: *const RandsetRaster,
    plain: bool,
    out_data: *mut *mut u8,
    out_len: *mut usize,
) -> RandsetStatus {
    guard(|| {
        let r = &as_ref(raster, "raster")?.0;
        let data = out(out_data, "out_data")?;
        let len = out(out_len, "out_len")?;
        let variant = if plain { PbmVariant::Plain } else { PbmVariant::Raw };
        let bytes = write_pbm(r, variant).into_boxed_slice();
        *len = bytes.len();
        *data = Box::into_raw(bytes).cast();
        Ok(())
    })
}

/// Releases a buffer from [`randset_raster_to_pbm`].
///
/// # Safety
/// `data` and `len` must come from one call to `randset_raster_to_pbm`.
#[no_mangle]
pub unsafe extern "C" fn randset_bytes_free(data: *mut u8, len: usize) {
    if !data.is_null() {
        drop(Box::from_raw(ptr::slice_from_raw_parts_mut(data, len)));
    }
}

/// # Safety
/// `raster` must be a handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn randset_raster_free(raster: *mut RandsetRaster) {
    if !raster.is_null() {
        drop(Box::from_raw(raster));
    }
}

/// Extracts component features with disc radius `r`. `label` may be null.
///
/// # Safety
/// `raster` must be a live handle; `id` NUL-terminated; `label` NUL-terminated or null.
#[no_mangle]
pub unsafe extern "C" fn randset_features_extract(
    raster: *const RandsetRaster,
    r: u32,
    id: *const c_char,
    label: *const c_char,
    out_features: *mut *mut RandsetFeatures,
) -> RandsetStatus {
    guard(|| {
        let raster = &as_ref(raster, "raster")?.0;
        let id = string(id, "id")?;
        let label = if label.is_null() { None } else { Some(string(label, "label")?) };
        let dst = out(out_features, "out_features")?;
        *dst = boxed(RandsetFeatures(extract_features(raster, r, id, label)?));
        Ok(())
    })
}

/// # Safety
/// `features` must be a live handle; `count` writable.
#[no_mangle]
pub unsafe extern "C" fn randset_features_count(
    features: *const RandsetFeatures,
    count: *mut usize,
) -> RandsetStatus {
    guard(|| {
        *out(count, "count")? = as_ref(features, "features")?.0.len();
        Ok(())
    })
}

/// Reads component `index`: its P/A ratio and its C-function. `t` receives
/// up to `t_capacity` values; `t_len` receives the full length.
///
/// # Safety
/// `features` must be a live handle; `t` must hold `t_capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn randset_features_component(
    features: *const RandsetFeatures,
    index: usize,
    pa_ratio: *mut f64,
    t: *mut f64,
    t_capacity: usize,
    t_len: *mut usize,
) -> RandsetStatus {
    guard(|| {
        let f = &as_ref(features, "features")?.0;
        let c = f.components.get(index).ok_or_else(|| {
            fail(RandsetStatus::InvalidArgument, format!("component {index} out of range (count {})", f.len()))
        })?;
        *out(pa_ratio, "pa_ratio")? = c.pa_ratio;
        *out(t_len, "t_len")? = c.c_function.len();
        let n = t_capacity.min(c.c_function.len());
        slice_mut(t, n, "t")?.copy_from_slice(&c.c_function[..n]);
        Ok(())
    })
}

/// # Safety
/// `features` must be a handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn randset_features_free(features: *mut RandsetFeatures) {
    if !features.is_null() {
        drop(Box::from_raw(features));
    }
}

/// Pairwise N-distance matrix of `n` realisations. `mode` is `ratio`,
/// `curvature`, `both` or `combined:<alpha>`; `count` 0 means all
/// components.
///
/// # Safety
/// `items` must hold `n` live feature handles; `mode` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn randset_matrix_compute(
    items: *const *const RandsetFeatures,
    n: usize,
    mode: *const c_char,
    depth: usize,
    count: usize,
    seed: u64,
    out_matrix: *mut *mut RandsetMatrix,
) -> RandsetStatus {
    guard(|| {
        let handles = slice(items, n, "items")?;
        let fs: Vec<RealisationFeatures> =
            handles.iter().map(|&h| Ok(as_ref(h, "items[i]")?.0.clone())).collect::<Result<_, Failure>>()?;
        let mode = string(mode, "mode")?.parse::<FeatureMode>()?.with_depth(depth);
        let count = if count == 0 { ComponentCount::All } else { ComponentCount::Fixed(count) };
        let dst = out(out_matrix, "out_matrix")?;
        let m = PairwiseEngine::new(&fs, mode)?.matrix(SamplingPolicy { count, seed })?;
        *dst = boxed(RandsetMatrix(m));
        Ok(())
    })
}

/// Builds a matrix from `n * n` row-major values (symmetric, zero diagonal).
///
/// # Safety
/// `values` must hold `n * n` doubles.
#[no_mangle]
pub unsafe extern "C" fn randset_matrix_from_values(
    n: usize,
    values: *const f64,
    out_matrix: *mut *mut RandsetMatrix,
) -> RandsetStatus {
    guard(|| {
        let len = n.checked_mul(n).ok_or_else(|| fail(RandsetStatus::InvalidArgument, "size overflows"))?;
        let values = slice(values, len, "values")?.to_vec();
        let dst = out(out_matrix, "out_matrix")?;
        let ids = (0..n).map(|i| i.to_string()).collect();
        let m = DistanceMatrix::from_values(ids, values, FeatureMode::Ratio, SamplingPolicy::all(0), 0)?;
        *dst = boxed(RandsetMatrix(m));
        Ok(())
    })
}

/// # Safety
/// `matrix` must be a live handle; `n` writable.
#[no_mangle]
pub unsafe extern "C" fn randset_matrix_size(matrix: *const RandsetMatrix, n: *mut usize) -> RandsetStatus {
    guard(|| {
        *out(n, "n")? = as_ref(matrix, "matrix")?.0.n();
        Ok(())
    })
}

/// # Safety
/// `matrix` must be a live handle; `value` writable.
#[no_mangle]
pub unsafe extern "C" fn randset_matrix_get(
    matrix: *const RandsetMatrix,
    i: usize,
    j: usize,
    value: *mut f64,
) -> RandsetStatus {
    guard(|| {
        let m = &as_ref(matrix, "matrix")?.0;
        if i >= m.n() || j >= m.n() {
            return Err(fail(RandsetStatus::InvalidArgument, format!("index ({i},{j}) outside {}x{}", m.n(), m.n())));
        }
        *out(value, "value")? = m.get(i, j);
        Ok(())
    })
}

/// # Safety
/// `matrix` must be a handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn randset_matrix_free(matrix: *mut RandsetMatrix) {
    if !matrix.is_null() {
        drop(Box::from_raw(matrix));
    }
}

/// k-medoids clustering; writes one cluster index per realisation.
///
/// # Safety
/// `matrix` must be a live handle; `assignment` must hold `n` entries.
#[no_mangle]
pub unsafe extern "C" fn randset_kmedoids(
    matrix: *const RandsetMatrix,
    k: usize,
    seed: u64,
    max_iter: usize,
    assignment: *mut usize,
) -> RandsetStatus {
    guard(|| {
        let m = &as_ref(matrix, "matrix")?.0;
        let dst = slice_mut(assignment, m.n(), "assignment")?;
        dst.copy_from_slice(&classify::k_medoids(m, k, seed, max_iter)?.assignment);
        Ok(())
    })
}

/// Ward clustering cut at `k` clusters; writes one cluster index per
/// realisation.
///
/// # Safety
/// `matrix` must be a live handle; `assignment` must hold `n` entries.
#[no_mangle]
pub unsafe extern "C" fn randset_ward(
    matrix: *const RandsetMatrix,
    k: usize,
    paper_literal_first_merge: bool,
    assignment: *mut usize,
) -> RandsetStatus {
    guard(|| {
        let m = &as_ref(matrix, "matrix")?.0;
        let dst = slice_mut(assignment, m.n(), "assignment")?;
        let opts = WardOptions { paper_literal_first_merge };
        dst.copy_from_slice(&classify::ward_cluster(m, k, &opts)?.assignment);
        Ok(())
    })
}

/// Kernel-posterior kNN: classifies the rows `test` from the labelled rows
/// `train`. Labels are `0..k`.
///
/// # Safety
/// `train`/`train_labels` must hold `n_train` entries, `test` and
/// `predicted` `n_test` entries.
#[no_mangle]
pub unsafe extern "C" fn randset_knn(
    matrix: *const RandsetMatrix,
    train: *const usize,
    train_labels: *const usize,
    n_train: usize,
    test: *const usize,
    n_test: usize,
    kernel: RandsetKernel,
    predicted: *mut usize,
) -> RandsetStatus {
    guard(|| {
        let m = &as_ref(matrix, "matrix")?.0;
        let (train, labels) = (slice(train, n_train, "train")?, slice(train_labels, n_train, "train_labels")?);
        let test = slice(test, n_test, "test")?;
        let dst = slice_mut(predicted, n_test, "predicted")?;
        if let Some(&bad) = train.iter().chain(test).find(|&&i| i >= m.n()) {
            return Err(fail(RandsetStatus::InvalidArgument, format!("row {bad} outside matrix of size {}", m.n())));
        }
        let train: Vec<LabeledIndex> =
            train.iter().zip(labels).map(|(&index, &label)| LabeledIndex { index, label }).collect();
        let rows: Vec<Vec<f64>> = test.iter().map(|&t| train.iter().map(|l| m.get(t, l.index)).collect()).collect();
        let kernel = match kernel {
            RandsetKernel::Uniform => SmoothingKernel::Uniform,
            RandsetKernel::Epanechnikov => SmoothingKernel::Epanechnikov,
        };
        dst.copy_from_slice(&classify::knn_classify(&train, m, &rows, kernel)?.labels);
        Ok(())
    })
}

/// Empirical N-distance of two samples of reals under `|x - y|`.
///
/// # Safety
/// `xs` must hold `nx` doubles and `ys` `ny` doubles.
#[no_mangle]
pub unsafe extern "C" fn randset_n_distance_scalar(
    xs: *const f64,
    nx: usize,
    ys: *const f64,
    ny: usize,
    value: *mut f64,
) -> RandsetStatus {
    guard(|| {
        let v = ndistance::n_distance_scalar(slice(xs, nx, "xs")?, slice(ys, ny, "ys")?)?;
        *out(value, "value")? = v;
        Ok(())
    })
}

/// Depth-`depth` functional kernel of two vectors of length `n`.
///
/// # Safety
/// `f` and `g` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn randset_kernel_functional(
    f: *const f64,
    g: *const f64,
    n: usize,
    depth: usize,
    value: *mut f64,
) -> RandsetStatus {
    guard(|| {
        let v = ndistance::kernel_functional(slice(f, n, "f")?, slice(g, n, "g")?, depth)?;
        *out(value, "value")? = v;
        Ok(())
    })
}
