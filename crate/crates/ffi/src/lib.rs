//! C ABI for loading a trained segmenter and decoding text.
//!
//! Every function returns an [`SgbStatus`]. On failure a message is kept per
//! thread and can be read with [`sgb_last_error_message`]. Strings handed
//! out by the library must be released with [`sgb_string_free`]; model
//! handles with [`sgb_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use sgbseg::lattice::{forward_marginal, viterbi, Decoder, SegmentScoreTable};
use sgbseg::model::Model;
use sgbseg::Error;

/// Result of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SgbStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Format = 4,
    InvalidArgument = 5,
    UnknownChar = 6,
    BufferTooSmall = 7,
    Internal = 8,
}

pub const SGB_DECODER_SGB_A: i32 = 0;
pub const SGB_DECODER_SGB_C: i32 = 1;
pub const SGB_DECODER_FORWARD: i32 = 2;
pub const SGB_DECODER_BACKWARD: i32 = 3;

/// A loaded model. Opaque to C.
pub struct SgbModel {
    inner: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(CString::new(text).expect("no interior nul")));
}

fn fail(status: SgbStatus, msg: impl Into<String>) -> SgbStatus {
    set_error(msg);
    status
}

fn status_of(e: &Error) -> SgbStatus {
    match e {
        Error::Io { .. } => SgbStatus::Io,
        Error::Decode { .. } => SgbStatus::InvalidUtf8,
        Error::Format(_) => SgbStatus::Format,
        Error::UnknownChar { .. } => SgbStatus::UnknownChar,
        Error::Config(_) | Error::Contract(_) | Error::TooLarge { .. } => SgbStatus::InvalidArgument,
        _ => SgbStatus::Internal,
    }
}

fn guard(f: impl FnOnce() -> Result<(), SgbStatus>) -> SgbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SgbStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(SgbStatus::Internal, "internal panic"),
    }
}

fn lib_err(e: Error) -> SgbStatus {
    fail(status_of(&e), e.to_string())
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, SgbStatus> {
    if p.is_null() {
        return Err(fail(SgbStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(SgbStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn model_ref<'a>(model: *const SgbModel) -> Result<&'a Model, SgbStatus> {
    model
        .as_ref()
        .map(|m| &m.inner)
        .ok_or_else(|| fail(SgbStatus::NullArgument, "model is null"))
}

fn decoder_of(code: i32) -> Result<Decoder, SgbStatus> {
    match code {
        SGB_DECODER_SGB_A => Ok(Decoder::SgbA),
        SGB_DECODER_SGB_C => Ok(Decoder::SgbC),
        SGB_DECODER_FORWARD => Ok(Decoder::Forward),
        SGB_DECODER_BACKWARD => Ok(Decoder::Backward),
        _ => Err(fail(SgbStatus::InvalidArgument, format!("unknown decoder {code}"))),
    }
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sgb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn sgb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a model from a checkpoint file or from the directory written by
/// `sgbseg train`. On success `*out` owns a new handle.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sgb_model_load(path: *const c_char, out: *mut *mut SgbModel) -> SgbStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(SgbStatus::NullArgument, "out is null"));
        }
        *out = ptr::null_mut();
        let path = Path::new(c_str(path, "path")?);
        let inner = if path.is_dir() { Model::load_dir(path) } else { Model::load(path) }.map_err(lib_err)?;
        *out = Box::into_raw(Box::new(SgbModel { inner }));
        Ok(())
    })
}

/// Releases a handle from [`sgb_model_load`]. Null is ignored.
///
/// # Safety
/// `model` must come from [`sgb_model_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sgb_model_free(model: *mut SgbModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Vocabulary size and maximum word length of a model.
///
/// # Safety
/// `model` must be a live handle; the out pointers must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn sgb_model_info(
    model: *const SgbModel,
    vocab_size: *mut usize,
    t_max: *mut usize,
) -> SgbStatus {
    guard(|| {
        let m = model_ref(model)?;
        if let Some(v) = vocab_size.as_mut() {
            *v = m.vocab.len();
        }
        if let Some(t) = t_max.as_mut() {
            *t = m.t_max();
        }
        Ok(())
    })
}

/// Segments one line of UTF-8 text. `*out` receives a new space-delimited
/// string to be released with [`sgb_string_free`].
///
/// # Safety
/// `model` must be a live handle, `text` a nul-terminated string and `out`
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sgb_segment(
    model: *const SgbModel,
    text: *const c_char,
    decoder: i32,
    out: *mut *mut c_char,
) -> SgbStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(SgbStatus::NullArgument, "out is null"));
        }
        *out = ptr::null_mut();
        let m = model_ref(model)?;
        let text = c_str(text, "text")?;
        let decoder = decoder_of(decoder)?;
        let line = m.segment_line(text, decoder).map_err(lib_err)?;
        let s = CString::new(line).map_err(|_| fail(SgbStatus::InvalidArgument, "text contains nul"))?;
        *out = s.into_raw();
        Ok(())
    })
}

/// Releases a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sgb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Reads an `n x t_max` row-major score buffer where entry
/// `[s * t_max + len - 1]` scores the word of length `len` starting at `s`.
/// Entries running past the sentence end are ignored; the rest must be
/// finite.
unsafe fn table_from(scores: *const f64, n: usize, t_max: usize) -> Result<SegmentScoreTable, SgbStatus> {
    if scores.is_null() {
        return Err(fail(SgbStatus::NullArgument, "scores is null"));
    }
    if n == 0 || t_max == 0 {
        return Err(fail(SgbStatus::InvalidArgument, "n and t_max must be positive"));
    }
    let len = n
        .checked_mul(t_max)
        .ok_or_else(|| fail(SgbStatus::InvalidArgument, "n * t_max overflows"))?;
    let buf = std::slice::from_raw_parts(scores, len);
    let table = SegmentScoreTable::from_fn(n, t_max, |s, l| buf[s * t_max + l - 1]);
    if !table.all_finite() {
        return Err(fail(SgbStatus::InvalidArgument, "scores must be finite"));
    }
    Ok(table)
}

/// Log of the summed probability of all segmentations of a sentence. The
/// buffer is `n x t_max` row-major: entry `[s * t_max + len - 1]` scores
/// the word of length `len` starting at `s`; entries past the sentence end
/// are ignored and the rest must be finite.
///
/// # Safety
/// `scores` must point to `n * t_max` doubles and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn sgb_log_marginal(
    scores: *const f64,
    n: usize,
    t_max: usize,
    out: *mut f64,
) -> SgbStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(SgbStatus::NullArgument, "out is null"));
        }
        *out = forward_marginal(&table_from(scores, n, t_max)?).log_marginal();
        Ok(())
    })
}

/// Best segmentation of a score buffer (layout as in [`sgb_log_marginal`]).
/// Word end positions are written to `ends` (the last is always `n`);
/// `*count` receives their number and `*score` the best total score. When
/// `capacity` is too small, `*count` still reports the needed size and
/// [`SgbStatus::BufferTooSmall`] is returned.
///
/// # Safety
/// `scores` must point to `n * t_max` doubles, `ends` to `capacity` sizes,
/// and `count` be valid; `score` may be null.
#[no_mangle]
pub unsafe extern "C" fn sgb_viterbi(
    scores: *const f64,
    n: usize,
    t_max: usize,
    ends: *mut usize,
    capacity: usize,
    count: *mut usize,
    score: *mut f64,
) -> SgbStatus {
    guard(|| {
        if count.is_null() {
            return Err(fail(SgbStatus::NullArgument, "count is null"));
        }
        let (seg, best) = viterbi(&table_from(scores, n, t_max)?);
        let spans: Vec<usize> = seg.spans().map(|(_, e)| e).collect();
        *count = spans.len();
        if let Some(s) = score.as_mut() {
            *s = best;
        }
        if spans.len() > capacity {
            return Err(fail(SgbStatus::BufferTooSmall, format!("need room for {} ends", spans.len())));
        }
        if ends.is_null() {
            return Err(fail(SgbStatus::NullArgument, "ends is null"));
        }
        std::slice::from_raw_parts_mut(ends, spans.len()).copy_from_slice(&spans);
        Ok(())
    })
}
