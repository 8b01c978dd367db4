//! C ABI over the entroprop library.
//!
//! Every function returns an [`EntStatus`]; results come back through out
//! pointers. Handles are opaque and owned by the caller, who must release
//! them with the matching `*_free`. On failure the message of the most recent
//! error on the calling thread is available from [`ent_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use entroprop::dump::{decode_dump, read_dump};
use entroprop::entropy::{conv_entropy_delta, dense_entropy_delta, profile_network, LayerKind, ProfileReport};
use entroprop::nn::{NetworkSpec, Params};
use entroprop::tensor::{lu_logabsdet, Matrix};
use entroprop::Error;

/// Result of every call. Families mirror the library's error codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EntStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 10,
    Singular = 11,
    UndefinedVariance = 12,
    /// bad magic, unsupported version, truncated or malformed input
    Format = 20,
    MissingData = 21,
    Config = 3,
    CheckFailed = 30,
    Io = 40,
    Panic = 99,
}

impl From<&Error> for EntStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Dimension(_) => EntStatus::Dimension,
            Error::Singular(_) => EntStatus::Singular,
            Error::UndefinedVariance(_) => EntStatus::UndefinedVariance,
            Error::InvalidArgument(_) => EntStatus::InvalidArgument,
            Error::BadMagic { .. } | Error::Version { .. } | Error::Truncated { .. } | Error::Malformed { .. } => {
                EntStatus::Format
            }
            Error::MissingData(_) => EntStatus::MissingData,
            Error::Config(_) => EntStatus::Config,
            Error::CheckFailed(_) => EntStatus::CheckFailed,
            Error::Io(_) | Error::Csv(_) => EntStatus::Io,
        }
    }
}

/// Dense row-major matrix of doubles.
pub struct EntMatrix(Matrix);

/// A network architecture plus its weights, as read from an ENTW dump.
pub struct EntNetwork {
    spec: NetworkSpec,
    params: Params,
}

/// Per-layer entropy-change profile of a network.
pub struct EntProfile(ProfileReport);

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EntLayerKind {
    Dense = 0,
    Conv = 1,
}

/// Summary of one profiled layer. Totals are in nats over the layer output;
/// per-element values divide by the number of output elements.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntLayerSummary {
    pub layer_index: usize,
    pub kind: EntLayerKind,
    pub input_l: usize,
    pub input_w: usize,
    pub units: usize,
    pub mean_total: f64,
    pub median_total: f64,
    pub q1_total: f64,
    pub q3_total: f64,
    pub mean_per_element: f64,
    pub outliers: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Runs `f`, translating errors and panics into a status and a message.
fn guard(f: impl FnOnce() -> Result<(), EntStatusError>) -> EntStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EntStatus::Ok,
        Ok(Err(EntStatusError(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            EntStatus::Panic
        }
    }
}

struct EntStatusError(EntStatus, String);

impl From<Error> for EntStatusError {
    fn from(e: Error) -> Self {
        EntStatusError(EntStatus::from(&e), format!("{}: {e}", e.code()))
    }
}

fn null(what: &str) -> EntStatusError {
    EntStatusError(EntStatus::NullPointer, format!("null pointer: {what}"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, EntStatusError> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(p: *mut T, v: T, what: &str) -> Result<(), EntStatusError> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(v);
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn ent_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static name of a status code, e.g. "ENT_STATUS_SINGULAR".
#[no_mangle]
pub extern "C" fn ent_status_name(status: EntStatus) -> *const c_char {
    let s: &'static CStr = match status {
        EntStatus::Ok => c"ENT_STATUS_OK",
        EntStatus::NullPointer => c"ENT_STATUS_NULL_POINTER",
        EntStatus::InvalidArgument => c"ENT_STATUS_INVALID_ARGUMENT",
        EntStatus::Dimension => c"ENT_STATUS_DIMENSION",
        EntStatus::Singular => c"ENT_STATUS_SINGULAR",
        EntStatus::UndefinedVariance => c"ENT_STATUS_UNDEFINED_VARIANCE",
        EntStatus::Format => c"ENT_STATUS_FORMAT",
        EntStatus::MissingData => c"ENT_STATUS_MISSING_DATA",
        EntStatus::Config => c"ENT_STATUS_CONFIG",
        EntStatus::CheckFailed => c"ENT_STATUS_CHECK_FAILED",
        EntStatus::Io => c"ENT_STATUS_IO",
        EntStatus::Panic => c"ENT_STATUS_PANIC",
    };
    s.as_ptr()
}

/// Copies `rows * cols` row-major doubles from `data` into a new matrix.
///
/// # Safety
/// `data` must point to `rows * cols` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ent_matrix_new(
    rows: usize,
    cols: usize,
    data: *const f64,
    out: *mut *mut EntMatrix,
) -> EntStatus {
    guard(|| {
        if data.is_null() {
            return Err(null("data"));
        }
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| EntStatusError(EntStatus::InvalidArgument, format!("{rows}x{cols} overflows")))?;
        let m = Matrix::new(rows, cols, std::slice::from_raw_parts(data, n).to_vec())?;
        write_out(out, Box::into_raw(Box::new(EntMatrix(m))), "out")
    })
}

/// Releases a matrix; NULL is a no-op.
///
/// # Safety
/// `m` must come from `ent_matrix_new` and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ent_matrix_free(m: *mut EntMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be a live matrix handle; `rows`/`cols` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ent_matrix_shape(m: *const EntMatrix, rows: *mut usize, cols: *mut usize) -> EntStatus {
    guard(|| {
        let m = deref(m, "matrix")?;
        write_out(rows, m.0.rows(), "rows")?;
        write_out(cols, m.0.cols(), "cols")
    })
}

/// `log|det M|` and the determinant's sign (0 for singular, with
/// `log_abs = -inf`).
///
/// # Safety
/// `m` must be a live matrix handle; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn ent_logabsdet(m: *const EntMatrix, log_abs: *mut f64, sign: *mut i8) -> EntStatus {
    guard(|| {
        let ld = lu_logabsdet(&deref(m, "matrix")?.0)?;
        write_out(log_abs, ld.log_abs, "log_abs")?;
        write_out(sign, ld.sign, "sign")
    })
}

/// Entropy change in nats of a dense layer with weight `[out, in]`.
///
/// # Safety
/// `w` must be a live matrix handle; `delta` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ent_dense_entropy_delta(w: *const EntMatrix, delta: *mut f64) -> EntStatus {
    guard(|| {
        let ld = dense_entropy_delta(&deref(w, "weight")?.0)?;
        write_out(delta, ld.log_abs, "delta")
    })
}

/// Entropy change of a valid 2D convolution of an `l x w` input with
/// `filter`, total and per output element.
///
/// # Safety
/// `filter` must be a live matrix handle; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn ent_conv_entropy_delta(
    filter: *const EntMatrix,
    l: usize,
    w: usize,
    delta_total: *mut f64,
    delta_per_element: *mut f64,
) -> EntStatus {
    guard(|| {
        let d = conv_entropy_delta(&deref(filter, "filter")?.0, l, w)?;
        write_out(delta_total, d.delta_total, "delta_total")?;
        write_out(delta_per_element, d.delta_per_element, "delta_per_element")
    })
}

/// Reads an ENTW weight dump from a NUL-terminated UTF-8 path.
///
/// # Safety
/// `path` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ent_network_load(path: *const c_char, out: *mut *mut EntNetwork) -> EntStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| EntStatusError(EntStatus::InvalidArgument, "path is not UTF-8".into()))?;
        let (spec, params) = read_dump(path)?;
        write_out(out, Box::into_raw(Box::new(EntNetwork { spec, params })), "out")
    })
}

/// Decodes an ENTW weight dump from memory.
///
/// # Safety
/// `bytes` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ent_network_from_bytes(bytes: *const u8, len: usize, out: *mut *mut EntNetwork) -> EntStatus {
    guard(|| {
        if bytes.is_null() {
            return Err(null("bytes"));
        }
        let (spec, params) = decode_dump(std::slice::from_raw_parts(bytes, len))?;
        write_out(out, Box::into_raw(Box::new(EntNetwork { spec, params })), "out")
    })
}

/// Releases a network; NULL is a no-op.
///
/// # Safety
/// `n` must come from an `ent_network_*` constructor and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ent_network_free(n: *mut EntNetwork) {
    if !n.is_null() {
        drop(Box::from_raw(n));
    }
}

/// Number of layers (including pooling and activations).
///
/// # Safety
/// `n` must be a live network handle; `count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ent_network_num_layers(n: *const EntNetwork, count: *mut usize) -> EntStatus {
    guard(|| write_out(count, deref(n, "network")?.spec.layers.len(), "count"))
}

/// Profiles every dense and conv layer of `n` for an `input_h x input_w`
/// input.
///
/// # Safety
/// `n` must be a live network handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ent_profile_network(
    n: *const EntNetwork,
    input_h: usize,
    input_w: usize,
    out: *mut *mut EntProfile,
) -> EntStatus {
    guard(|| {
        let n = deref(n, "network")?;
        let report = profile_network(&n.spec, &n.params, input_h, input_w)?;
        write_out(out, Box::into_raw(Box::new(EntProfile(report))), "out")
    })
}

/// Releases a profile; NULL is a no-op.
///
/// # Safety
/// `p` must come from `ent_profile_network` and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ent_profile_free(p: *mut EntProfile) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Number of profiled (dense + conv) layers.
///
/// # Safety
/// `p` must be a live profile handle; `count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ent_profile_num_layers(p: *const EntProfile, count: *mut usize) -> EntStatus {
    guard(|| write_out(count, deref(p, "profile")?.0.layers.len(), "count"))
}

/// Summary of the `i`-th profiled layer.
///
/// # Safety
/// `p` must be a live profile handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ent_profile_layer(p: *const EntProfile, i: usize, out: *mut EntLayerSummary) -> EntStatus {
    guard(|| {
        let layers = &deref(p, "profile")?.0.layers;
        let l = layers.get(i).ok_or_else(|| {
            EntStatusError(
                EntStatus::InvalidArgument,
                format!("layer {i} out of range ({} profiled)", layers.len()),
            )
        })?;
        let summary = EntLayerSummary {
            layer_index: l.layer_index,
            kind: match l.kind {
                LayerKind::Dense => EntLayerKind::Dense,
                LayerKind::Conv => EntLayerKind::Conv,
            },
            input_l: l.dims.0,
            input_w: l.dims.1,
            units: l.units.len(),
            mean_total: l.total.mean,
            median_total: l.total.median,
            q1_total: l.total.q1,
            q3_total: l.total.q3,
            mean_per_element: l.per_element.mean,
            outliers: l.outliers.len(),
        };
        write_out(out, summary, "out")
    })
}
