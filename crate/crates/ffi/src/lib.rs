//! C ABI over the `pathseq` library.
//!
//! Every function returns a [`PathseqStatus`]. On failure the message is
//! available from [`pathseq_last_error`] on the same thread. Strings
//! returned through out-parameters are owned by the caller and released
//! with [`pathseq_string_free`]; models with [`pathseq_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use pathseq::corpus::method_examples;
use pathseq::decode::{beam_decode, greedy_decode};
use pathseq::eval::subtoken_f1;
use pathseq::minij::{parse_method, SourceUnit};
use pathseq::model::Model;
use pathseq::paths::{split_subtokens, Example, ExtractionConfig};
use pathseq::train::{load_model, TrainError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathseqStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Io = 4,
    Checkpoint = 5,
    Model = 6,
    Panic = 7,
}

/// Opaque trained model.
pub struct PathseqModel {
    inner: Model,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PathseqPrf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

type Result<T> = std::result::Result<T, (PathseqStatus, String)>;

fn guard(f: impl FnOnce() -> Result<()>) -> PathseqStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            PathseqStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PathseqStatus::Panic
        }
    }
}

/// # Safety
/// `p` is null or a valid NUL-terminated string.
unsafe fn input<'a>(p: *const c_char, what: &str) -> Result<&'a str> {
    if p.is_null() {
        return Err((PathseqStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (PathseqStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

/// # Safety
/// `out` is null or valid for writes.
unsafe fn emit(out: *mut *mut c_char, s: String) -> Result<()> {
    if out.is_null() {
        return Err((PathseqStatus::NullArgument, "out is null".into()));
    }
    let c = CString::new(s).map_err(|_| (PathseqStatus::Model, "output contains NUL".to_string()))?;
    *out = c.into_raw();
    Ok(())
}

fn train_status(e: TrainError) -> (PathseqStatus, String) {
    let status = match e {
        TrainError::Io { .. } => PathseqStatus::Io,
        TrainError::Checkpoint(_) => PathseqStatus::Checkpoint,
        _ => PathseqStatus::Model,
    };
    (status, e.to_string())
}

/// Message of the last failed call on this thread, or null. Valid until
/// the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn pathseq_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn pathseq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` is null or was returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pathseq_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Subtokens of an identifier, space-separated.
///
/// # Safety
/// `token` is a NUL-terminated string; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pathseq_split_subtokens(token: *const c_char, out: *mut *mut c_char) -> PathseqStatus {
    guard(|| {
        let t = input(token, "token")?;
        emit(out, split_subtokens(t).join(" "))
    })
}

/// Parses one MiniJ method and returns its AST in the text form.
///
/// # Safety
/// `source` is a NUL-terminated string; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pathseq_parse_method(source: *const c_char, out: *mut *mut c_char) -> PathseqStatus {
    guard(|| {
        let s = input(source, "source")?;
        let ast = parse_method(&SourceUnit::memory(s)).map_err(|e| (PathseqStatus::Parse, e.to_string()))?;
        emit(out, ast.to_text())
    })
}

/// Dataset lines (one per method, newline-terminated) for every method in
/// `source`. Fails if no method yields an example.
///
/// # Safety
/// `source` is a NUL-terminated string; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pathseq_extract(source: *const c_char, out: *mut *mut c_char) -> PathseqStatus {
    guard(|| {
        let s = input(source, "source")?;
        let (exs, skipped) = method_examples(&SourceUnit::memory(s), &ExtractionConfig::default(), None);
        if exs.is_empty() {
            let why = skipped.first().map_or("no method found".to_string(), |k| k.to_string());
            return Err((PathseqStatus::Parse, why));
        }
        emit(out, exs.iter().map(|e| e.to_line() + "\n").collect())
    })
}

/// # Safety
/// `path` is a NUL-terminated string; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pathseq_model_load(path: *const c_char, out: *mut *mut PathseqModel) -> PathseqStatus {
    guard(|| {
        let p = input(path, "path")?;
        if out.is_null() {
            return Err((PathseqStatus::NullArgument, "out is null".into()));
        }
        let inner = load_model(Path::new(p)).map_err(train_status)?;
        *out = Box::into_raw(Box::new(PathseqModel { inner }));
        Ok(())
    })
}

/// # Safety
/// `model` is null or was returned by [`pathseq_model_load`] and not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn pathseq_model_free(model: *mut PathseqModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Predicts names. `input` is MiniJ source, or dataset lines when `is_c2s`
/// is nonzero. Output: one `index<TAB>subtokens<TAB>score` line per
/// hypothesis, `beam` (at least 1) hypotheses per example.
///
/// # Safety
/// `model` is a live model; `input` is a NUL-terminated string; `out` is
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pathseq_model_predict(
    model: *const PathseqModel,
    input_text: *const c_char,
    is_c2s: i32,
    beam: u32,
    out: *mut *mut c_char,
) -> PathseqStatus {
    guard(|| {
        let Some(m) = model.as_ref() else {
            return Err((PathseqStatus::NullArgument, "model is null".into()));
        };
        let text = input(input_text, "input")?;
        let examples: Vec<Example> = if is_c2s != 0 {
            text.lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(i, l)| Example::parse_line(l, i + 1))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| (PathseqStatus::Parse, e.to_string()))?
        } else {
            let (exs, skipped) = method_examples(&SourceUnit::memory(text), &ExtractionConfig::default(), None);
            if let Some(s) = skipped.first() {
                return Err((PathseqStatus::Parse, s.to_string()));
            }
            exs
        };
        let mut lines = String::new();
        for (i, ex) in examples.iter().enumerate() {
            let ix = m.inner.index_example(ex).map_err(|e| (PathseqStatus::Model, e.to_string()))?;
            let preds = if beam <= 1 {
                greedy_decode(&m.inner, &ix).map(|p| vec![p])
            } else {
                beam_decode(&m.inner, &ix, beam as usize)
            }
            .map_err(|e| (PathseqStatus::Model, e.to_string()))?;
            for p in preds {
                lines.push_str(&format!("{i}\t{}\t{:.6}\n", p.subtokens.join(" "), p.score));
            }
        }
        emit(out, lines)
    })
}

/// Subtoken precision, recall and F1 of space-separated sequences.
///
/// # Safety
/// `predicted` and `gold` are NUL-terminated strings; `out` is valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn pathseq_subtoken_f1(predicted: *const c_char, gold: *const c_char, out: *mut PathseqPrf) -> PathseqStatus {
    guard(|| {
        let p: Vec<&str> = input(predicted, "predicted")?.split_whitespace().collect();
        let g: Vec<&str> = input(gold, "gold")?.split_whitespace().collect();
        let Some(o) = out.as_mut() else {
            return Err((PathseqStatus::NullArgument, "out is null".into()));
        };
        let r = subtoken_f1(&p, &g);
        *o = PathseqPrf {
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
        };
        Ok(())
    })
}
