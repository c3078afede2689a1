//! C ABI over `sitter-core`.
//!
//! Every function returns a [`SitterStatus`]; results come back through out
//! pointers. On failure the message is available from
//! [`sitter_last_error_message`] on the same thread until the next failing
//! call. Handles are opaque and must be released with their `_free`
//! function. Panics never cross the boundary; they surface as
//! `SITTER_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use sitter_core::corpus::{load_manifest, Manifest, PairLabel};
use sitter_core::fusion::{cosine, fused_score, FusionSpec};
use sitter_core::metrics::{eer, sweep, tar_at_far, RocCurve, ScoreSet};
use sitter_core::training::triplet_loss;
use sitter_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SitterStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    Shape = 4,
    Io = 5,
    Parse = 6,
    NotFound = 7,
    Panic = 8,
}

/// A loaded, validated manifest.
pub struct SitterManifest {
    inner: Manifest,
}

/// Scores with labels plus their precomputed ROC sweep.
pub struct SitterScoreSet {
    roc: RocCurve,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(SitterStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Shape { .. } | Error::DimensionMismatch { .. } => SitterStatus::Shape,
            Error::Io { .. } => SitterStatus::Io,
            Error::Parse { .. } => SitterStatus::Parse,
            Error::MissingItem(_) | Error::MissingSource { .. } => SitterStatus::NotFound,
            _ => SitterStatus::InvalidInput,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(SitterStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SitterStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SitterStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SitterStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        Failure(
            SitterStatus::InvalidUtf8,
            format!("{what} is not valid UTF-8"),
        )
    })
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut T, v: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sitter_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn sitter_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a manifest file into a new handle.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn sitter_manifest_load(
    path: *const c_char,
    out: *mut *mut SitterManifest,
) -> SitterStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let m = load_manifest(Path::new(path))?;
        write_out(
            out,
            Box::into_raw(Box::new(SitterManifest { inner: m })),
            "out",
        )
    })
}

/// # Safety
/// `m` must come from [`sitter_manifest_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sitter_manifest_free(m: *mut SitterManifest) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sitter_manifest_len(
    m: *const SitterManifest,
    out: *mut usize,
) -> SitterStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("manifest"))?;
        write_out(out, m.inner.len(), "out")
    })
}

/// Declared dimension of source `tag`.
///
/// # Safety
/// `m` must be a live handle, `tag` nul-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sitter_manifest_source_dim(
    m: *const SitterManifest,
    tag: *const c_char,
    out: *mut usize,
) -> SitterStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("manifest"))?;
        let tag = str_arg(tag, "tag")?;
        let dim = m.inner.source_dims().get(tag).copied().ok_or_else(|| {
            Failure(
                SitterStatus::NotFound,
                format!("source `{tag}` not in manifest"),
            )
        })?;
        write_out(out, dim, "out")
    })
}

/// Cosine similarity of two items' `tag` vectors.
///
/// # Safety
/// `m` must be a live handle, the strings nul-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sitter_manifest_score_pair(
    m: *const SitterManifest,
    item_a: *const c_char,
    item_b: *const c_char,
    tag: *const c_char,
    out: *mut f64,
) -> SitterStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("manifest"))?;
        let (a, b, tag) = (
            str_arg(item_a, "item_a")?,
            str_arg(item_b, "item_b")?,
            str_arg(tag, "tag")?,
        );
        let get = |id: &str| {
            m.inner
                .get(id)
                .ok_or_else(|| Error::MissingItem(id.to_string()))
        };
        let s = cosine(get(a)?.vector(tag)?, get(b)?.vector(tag)?)?;
        write_out(out, s, "out")
    })
}

/// Builds a score set from `n` scores; `labels[i]` is 1 for genuine and 0
/// for impostor.
///
/// # Safety
/// `scores` and `labels` must hold `n` elements and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn sitter_score_set_new(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    out: *mut *mut SitterScoreSet,
) -> SitterStatus {
    guard(|| {
        let scores = slice_arg(scores, n, "scores")?;
        let labels = slice_arg(labels, n, "labels")?;
        let entries = scores
            .iter()
            .zip(labels)
            .map(|(&s, &l)| match l {
                1 => Ok((s, PairLabel::Genuine)),
                0 => Ok((s, PairLabel::Impostor)),
                other => Err(Failure(
                    SitterStatus::InvalidInput,
                    format!("label {other} is not 0 or 1"),
                )),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let roc = sweep(&ScoreSet::new(entries, "ffi")?)?;
        write_out(out, Box::into_raw(Box::new(SitterScoreSet { roc })), "out")
    })
}

/// # Safety
/// `s` must come from [`sitter_score_set_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sitter_score_set_free(s: *mut SitterScoreSet) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// # Safety
/// `s` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sitter_score_set_eer(
    s: *const SitterScoreSet,
    out: *mut f64,
) -> SitterStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| null("score set"))?;
        write_out(out, eer(&s.roc)?, "out")
    })
}

/// True accept rate at the most permissive threshold whose FMR does not
/// exceed `far_target`.
///
/// # Safety
/// `s` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sitter_score_set_tar_at_far(
    s: *const SitterScoreSet,
    far_target: f64,
    out: *mut f64,
) -> SitterStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| null("score set"))?;
        write_out(out, tar_at_far(&s.roc, far_target)?, "out")
    })
}

/// Fused cosine of two items given as concatenated per-source vectors.
/// Source `i` has length `dims[i]`; both `a` and `b` hold `sum(dims)` values.
///
/// # Safety
/// `dims` must hold `n_sources` elements, `a` and `b` `sum(dims)` each, and
/// `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn sitter_fused_score(
    a: *const f64,
    b: *const f64,
    dims: *const usize,
    n_sources: usize,
    out: *mut f64,
) -> SitterStatus {
    guard(|| {
        let dims = slice_arg(dims, n_sources, "dims")?;
        let total = dims
            .iter()
            .try_fold(0usize, |acc, &d| acc.checked_add(d))
            .ok_or_else(|| Failure(SitterStatus::InvalidInput, "dims overflow".into()))?;
        let a = slice_arg(a, total, "a")?;
        let b = slice_arg(b, total, "b")?;
        let names = (0..dims.len()).map(|i| format!("s{i}")).collect();
        let spec = FusionSpec::new(names, dims.to_vec())?;
        let s = fused_score(&split_sources(a, dims), &split_sources(b, dims), &spec)?;
        write_out(out, s, "out")
    })
}

fn split_sources<'a>(v: &'a [f64], dims: &[usize]) -> Vec<&'a [f64]> {
    let mut parts = Vec::with_capacity(dims.len());
    let mut at = 0;
    for &d in dims {
        parts.push(&v[at..at + d]);
        at += d;
    }
    parts
}

/// Triplet loss of three unit vectors of length `dim` under cosine distance.
///
/// # Safety
/// `anchor`, `positive` and `negative` must hold `dim` values; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sitter_triplet_loss(
    anchor: *const f64,
    positive: *const f64,
    negative: *const f64,
    dim: usize,
    margin: f64,
    out: *mut f64,
) -> SitterStatus {
    guard(|| {
        let a = slice_arg(anchor, dim, "anchor")?;
        let p = slice_arg(positive, dim, "positive")?;
        let n = slice_arg(negative, dim, "negative")?;
        write_out(out, triplet_loss(a, p, n, margin)?, "out")
    })
}
