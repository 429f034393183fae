use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use convrec::toy::{TOY_CATALOG, TOY_PROPERTY_CATALOG};
use convrec_ffi::*;

fn load(json: &str, kind: ConvrecModelKind) -> *mut ConvrecModel {
    let json = CString::new(json).unwrap();
    let mut model = ptr::null_mut();
    let status = unsafe { convrec_model_from_json(json.as_ptr(), kind, &mut model) };
    assert_eq!(status, ConvrecStatus::Ok);
    assert!(!model.is_null());
    model
}

fn answer_ref(model: *const ConvrecModel, q: &str, a: &str) -> (usize, usize) {
    let (q, a) = (CString::new(q).unwrap(), CString::new(a).unwrap());
    let (mut qi, mut ai) = (0, 0);
    let status = unsafe { convrec_model_answer_ref(model, q.as_ptr(), a.as_ptr(), &mut qi, &mut ai) };
    assert_eq!(status, ConvrecStatus::Ok);
    (qi, ai)
}

fn posterior(session: *const ConvrecSession) -> Vec<f64> {
    let mut n = 0;
    assert_eq!(
        unsafe { convrec_session_posterior(session, ptr::null_mut(), 0, &mut n) },
        ConvrecStatus::BufferTooSmall
    );
    let mut out = vec![0.0; n];
    assert_eq!(
        unsafe { convrec_session_posterior(session, out.as_mut_ptr(), n, &mut n) },
        ConvrecStatus::Ok
    );
    out
}

fn last_error() -> String {
    let p = convrec_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn toy_session_through_the_c_abi() {
    let model = load(TOY_CATALOG, ConvrecModelKind::Auto);
    unsafe {
        assert_eq!(convrec_model_item_count(model), 3);
        assert_eq!(convrec_model_question_count(model), 2);
        assert_eq!(convrec_model_answer_count(model, 1), 4);
        assert_eq!(convrec_model_answer_count(model, 7), 0);
        assert_eq!(CStr::from_ptr(convrec_model_item_id(model, 2)).to_str().unwrap(), "i3");
        assert_eq!(CStr::from_ptr(convrec_model_question_id(model, 1)).to_str().unwrap(), "Q2");
        assert_eq!(CStr::from_ptr(convrec_model_answer_id(model, 1, 3)).to_str().unwrap(), "kids_party");
        assert!(convrec_model_item_id(model, 3).is_null());
    }

    let mut session = ptr::null_mut();
    assert_eq!(unsafe { convrec_session_new(model, 0, 0, false, &mut session) }, ConvrecStatus::Ok);
    let p = posterior(session);
    assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.25).abs() < 1e-12);

    let (q, a) = answer_ref(model, "Q2", "wedding");
    assert_eq!(unsafe { convrec_session_answer(session, q, a) }, ConvrecStatus::Ok);
    let p = posterior(session);
    assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12 && p[2] == 0.0);
    unsafe {
        assert_eq!(convrec_session_retained(session), 2);
        assert_eq!(convrec_session_answered(session), 1);
        assert!((convrec_session_entropy(session) - 2f64.ln() / 3f64.ln()).abs() < 1e-12);
    }

    assert_eq!(unsafe { convrec_session_answer(session, q, a) }, ConvrecStatus::RepeatedQuestion);
    assert!(last_error().contains("Q2"));
    assert_eq!(unsafe { convrec_session_answer(session, 0, 9) }, ConvrecStatus::UnknownId);

    unsafe {
        convrec_model_free(model);
        // the session keeps its own reference to the model
        let mut next = usize::MAX;
        let mut stop = ConvrecStop::Threshold;
        assert_eq!(convrec_session_next_question(session, &mut next, &mut stop), ConvrecStatus::Ok);
        assert_eq!((stop, next), (ConvrecStop::None, 0));
        convrec_session_free(session);
    }
}

#[test]
fn adaptive_loop_stops_on_threshold() {
    let model = load(TOY_PROPERTY_CATALOG, ConvrecModelKind::Properties);
    let mut session = ptr::null_mut();
    assert_eq!(unsafe { convrec_session_new(model, 1, 0, false, &mut session) }, ConvrecStatus::Ok);
    let mut asked = 0;
    loop {
        let (mut q, mut stop) = (0, ConvrecStop::None);
        assert_eq!(unsafe { convrec_session_next_question(session, &mut q, &mut stop) }, ConvrecStatus::Ok);
        if stop != ConvrecStop::None {
            assert_eq!(stop, ConvrecStop::Threshold);
            break;
        }
        // always pick the answer that keeps the DJ (i1)
        let a = if q == 0 { 0 } else { 2 };
        assert_eq!(unsafe { convrec_session_answer(session, q, a) }, ConvrecStatus::Ok);
        asked += 1;
    }
    assert!(asked >= 1);
    let p = posterior(session);
    assert!((p[0] - 1.0).abs() < 1e-12);
    unsafe {
        convrec_session_free(session);
        convrec_model_free(model);
    }
}

#[test]
fn strict_contradiction_freezes_session() {
    let model = load(TOY_CATALOG, ConvrecModelKind::Auto);
    let mut session = ptr::null_mut();
    assert_eq!(unsafe { convrec_session_new(model, 0, 0, false, &mut session) }, ConvrecStatus::Ok);
    let (q1, band) = answer_ref(model, "Q1", "band");
    let (q2, birthday) = answer_ref(model, "Q2", "birthday");
    unsafe {
        assert_eq!(convrec_session_answer(session, q1, band), ConvrecStatus::Ok);
        assert_eq!(convrec_session_answer(session, q2, birthday), ConvrecStatus::Ok);
        assert!(convrec_session_contradiction(session));
        let (mut q, mut stop) = (0, ConvrecStop::None);
        assert_eq!(convrec_session_next_question(session, &mut q, &mut stop), ConvrecStatus::Ok);
        assert_eq!(stop, ConvrecStop::Contradiction);
        assert_eq!(convrec_session_answer(session, 0, 0), ConvrecStatus::SessionFinished);
        convrec_session_free(session);
        convrec_model_free(model);
    }
}

#[test]
fn errors_are_reported() {
    let mut model = ptr::null_mut();
    let bad = CString::new("{\"items\": [").unwrap();
    assert_eq!(
        unsafe { convrec_model_from_json(bad.as_ptr(), ConvrecModelKind::Auto, &mut model) },
        ConvrecStatus::InvalidCatalog
    );
    assert!(model.is_null());
    assert!(!last_error().is_empty());

    assert_eq!(
        unsafe { convrec_model_from_json(ptr::null(), ConvrecModelKind::Auto, &mut model) },
        ConvrecStatus::NullPointer
    );
    let missing = CString::new("/nonexistent/catalog.json").unwrap();
    assert_eq!(
        unsafe { convrec_model_from_file(missing.as_ptr(), ConvrecModelKind::Auto, &mut model) },
        ConvrecStatus::Io
    );

    let toy = load(TOY_CATALOG, ConvrecModelKind::Auto);
    let mut session = ptr::null_mut();
    assert_eq!(
        unsafe { convrec_session_new(toy, 4, 0, false, &mut session) },
        ConvrecStatus::InvalidArgument
    );
    assert!(session.is_null());

    let mut t = 0.0;
    assert_eq!(unsafe { convrec_stopping_threshold(2, 3, &mut t) }, ConvrecStatus::Ok);
    assert!((t - 2f64.ln() / 3f64.ln()).abs() < 1e-12);
    assert!(convrec_last_error().is_null());
    unsafe {
        assert!(convrec_session_entropy(ptr::null()).is_nan());
        convrec_model_free(toy);
        convrec_model_free(ptr::null_mut());
    }
}

fn target_dir() -> PathBuf {
    // tests run from target/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_is_generated() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/convrec.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "typedef struct ConvrecModel ConvrecModel;",
        "ConvrecStatus convrec_session_answer(",
        "CONVREC_STATUS_BUFFER_TOO_SMALL = 8",
        "double convrec_session_entropy(",
    ] {
        assert!(text.contains(name), "header lacks `{name}`");
    }
}

#[test]
fn c_program_links_against_static_library() {
    let lib = target_dir().join("libconvrec_ffi.a");
    assert!(lib.exists(), "{} missing", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let status = Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .arg("-o")
        .arg(&exe)
        .status()
        .expect("cc");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "smoke exited with {:?}", out.status.code());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}
