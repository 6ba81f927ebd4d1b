use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use pathseq::cli::init_model;
use pathseq::config::RunConfig;
use pathseq::synth::generate;
use pathseq::train::{TrainConfig, Trainer};
use pathseq_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

unsafe fn take(p: *mut c_char) -> String {
    let s = CStr::from_ptr(p).to_str().unwrap().to_string();
    pathseq_string_free(p);
    s
}

fn last_error() -> String {
    let p = pathseq_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

#[test]
fn split_and_f1() {
    let mut out = ptr::null_mut();
    let st = unsafe { pathseq_split_subtokens(c("parseHTTPResponse2").as_ptr(), &mut out) };
    assert_eq!(st, PathseqStatus::Ok);
    assert_eq!(unsafe { take(out) }, "parse http response 2");
    assert!(pathseq_last_error().is_null());

    let mut prf = PathseqPrf::default();
    let st = unsafe { pathseq_subtoken_f1(c("set max connections").as_ptr(), c("set max connections per server").as_ptr(), &mut prf) };
    assert_eq!(st, PathseqStatus::Ok);
    assert_eq!((prf.precision, prf.recall), (1.0, 0.6));
    assert!((prf.f1 - 0.75).abs() < 1e-12);
}

#[test]
fn null_and_utf8_errors() {
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { pathseq_split_subtokens(ptr::null(), &mut out) }, PathseqStatus::NullArgument);
    assert!(last_error().contains("null"));
    let bad = [0xffu8, 0xfe, 0];
    assert_eq!(unsafe { pathseq_split_subtokens(bad.as_ptr().cast(), &mut out) }, PathseqStatus::InvalidUtf8);
    assert_eq!(unsafe { pathseq_split_subtokens(c("x").as_ptr(), ptr::null_mut()) }, PathseqStatus::NullArgument);
    unsafe { pathseq_string_free(ptr::null_mut()) };
    unsafe { pathseq_model_free(ptr::null_mut()) };
}

#[test]
fn parse_and_extract() {
    let mut out = ptr::null_mut();
    let src = c("int f(int x) { return x; }");
    assert_eq!(unsafe { pathseq_parse_method(src.as_ptr(), &mut out) }, PathseqStatus::Ok);
    assert!(unsafe { take(out) }.starts_with("(MethodDecl"));
    assert_eq!(unsafe { pathseq_extract(src.as_ptr(), &mut out) }, PathseqStatus::Ok);
    let lines = unsafe { take(out) };
    assert_eq!(lines.lines().count(), 1);
    assert!(lines.starts_with("f "));
    assert_eq!(lines.split_whitespace().count(), 7);
    assert_eq!(unsafe { pathseq_parse_method(c("int f( {").as_ptr(), &mut out) }, PathseqStatus::Parse);
    assert!(!last_error().is_empty());
}

#[test]
fn model_round_trip() {
    let corpus = generate(30, 0, 1);
    let mut cfg = RunConfig::default();
    for (k, v) in [("d_nodes", "8"), ("d_tokens", "8"), ("d_hidden", "8"), ("d_target", "8"), ("d_path", "8"), ("d_decoder", "8"), ("k", "10")] {
        cfg.set(k, v).unwrap();
    }
    let model = init_model(&cfg, &corpus.train).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    Trainer::new(model, TrainConfig::default()).unwrap().save(&path).unwrap();

    let mut m = ptr::null_mut();
    let p = c(path.to_str().unwrap());
    assert_eq!(unsafe { pathseq_model_load(p.as_ptr(), &mut m) }, PathseqStatus::Ok);
    let mut out = ptr::null_mut();
    let src = c("int getMaxSize() { return this.maxSize; }\nvoid resetPort() { port = 0; }");
    assert_eq!(unsafe { pathseq_model_predict(m, src.as_ptr(), 0, 1, &mut out) }, PathseqStatus::Ok);
    let greedy = unsafe { take(out) };
    assert_eq!(greedy.lines().count(), 2);
    assert_eq!(unsafe { pathseq_model_predict(m, src.as_ptr(), 0, 3, &mut out) }, PathseqStatus::Ok);
    let beams = unsafe { take(out) };
    assert!(beams.lines().count() > 2);
    let line = c(&corpus.train[0].to_line());
    assert_eq!(unsafe { pathseq_model_predict(m, line.as_ptr(), 1, 1, &mut out) }, PathseqStatus::Ok);
    assert!(unsafe { take(out) }.starts_with("0\t"));
    assert_eq!(unsafe { pathseq_model_predict(m, c("nonsense").as_ptr(), 1, 1, &mut out) }, PathseqStatus::Parse);
    unsafe { pathseq_model_free(m) };

    let missing = c(dir.path().join("none").to_str().unwrap());
    assert_eq!(unsafe { pathseq_model_load(missing.as_ptr(), &mut m) }, PathseqStatus::Io);
    std::fs::write(&path, b"P2SQ garbage").unwrap();
    assert_eq!(unsafe { pathseq_model_load(p.as_ptr(), &mut m) }, PathseqStatus::Checkpoint);
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(pathseq_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_api() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/pathseq.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "pathseq_last_error",
        "pathseq_string_free",
        "pathseq_split_subtokens",
        "pathseq_parse_method",
        "pathseq_extract",
        "pathseq_model_load",
        "pathseq_model_predict",
        "pathseq_model_free",
        "pathseq_subtoken_f1",
        "PATHSEQ_STATUS_OK = 0",
        "typedef struct PathseqModel PathseqModel",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
    // compile a small client when a C compiler is around
    let Ok(status) = Command::new("cc").arg("--version").output() else { return };
    if !status.status.success() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let client = dir.path().join("client.c");
    std::fs::write(
        &client,
        "#include \"pathseq.h\"\nint main(void) {\n  char *out = 0;\n  PathseqStatus s = pathseq_split_subtokens(\"getName\", &out);\n  if (s != PATHSEQ_STATUS_OK) return 1;\n  pathseq_string_free(out);\n  return 0;\n}\n",
    )
    .unwrap();
    let out = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&client)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
