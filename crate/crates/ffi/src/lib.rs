//! C ABI over the convrec engine.
//!
//! Models and sessions are opaque handles created and freed through this
//! interface. Every fallible call returns a [`ConvrecStatus`]; on failure the
//! message is available from [`convrec_last_error`] on the same thread.
//! Strings returned by the library are owned by the handle they came from
//! and stay valid until that handle is freed.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use convrec::adaptive::{next_question, stopping_threshold, Decision, StopReason, StoppingConfig};
use convrec::elicitation::ElicitOptions;
use convrec::inference::{init_session, retained, update_with, ContradictionMode, ConversationState};
use convrec::model::{Model, ModelChoice};
use convrec::{Catalog, Error, LoadOptions, QuestionIdx};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvrecStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidCatalog = 3,
    InvalidArgument = 4,
    UnknownId = 5,
    RepeatedQuestion = 6,
    SessionFinished = 7,
    BufferTooSmall = 8,
    Io = 9,
    Internal = 10,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvrecModelKind {
    Auto = 0,
    PropertyFree = 1,
    Properties = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvrecStop {
    /// A question is pending.
    None = 0,
    Threshold = 1,
    Exhausted = 2,
    MaxQuestions = 3,
    Contradiction = 4,
}

impl From<StopReason> for ConvrecStop {
    fn from(r: StopReason) -> Self {
        match r {
            StopReason::Threshold => ConvrecStop::Threshold,
            StopReason::Exhausted => ConvrecStop::Exhausted,
            StopReason::MaxQuestions => ConvrecStop::MaxQuestions,
            StopReason::Contradiction => ConvrecStop::Contradiction,
        }
    }
}

pub struct ConvrecModel {
    model: Arc<Model>,
    item_ids: Vec<CString>,
    question_ids: Vec<CString>,
    answer_ids: Vec<Vec<CString>>,
}

pub struct ConvrecSession {
    model: Arc<Model>,
    config: StoppingConfig,
    state: ConversationState,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Fail(ConvrecStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Unknown { .. } | Error::UnknownAnswer { .. } => ConvrecStatus::UnknownId,
            Error::RepeatedQuestion(_) => ConvrecStatus::RepeatedQuestion,
            Error::StopOutOfRange { .. } => ConvrecStatus::InvalidArgument,
            Error::Io(_) => ConvrecStatus::Io,
            Error::NoRelevantMass(_) | Error::AnswerSource(_) | Error::OracleTooLarge { .. } => ConvrecStatus::Internal,
            _ => ConvrecStatus::InvalidCatalog,
        };
        Fail(status, e.to_string())
    }
}

fn cstring(s: &str) -> CString {
    CString::new(s.replace('\0', "")).unwrap_or_default()
}

fn set_error(message: &str) {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(cstring(message)));
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ConvrecStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            ConvrecStatus::Ok
        }
        Ok(Err(Fail(status, message))) => {
            set_error(&message);
            status
        }
        Err(_) => {
            set_error("panic inside convrec");
            ConvrecStatus::Internal
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| Fail(ConvrecStatus::NullPointer, "null handle".into()))
}

unsafe fn borrow_mut<'a, T>(p: *mut T) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| Fail(ConvrecStatus::NullPointer, "null pointer".into()))
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(ConvrecStatus::NullPointer, "null string".into()));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Fail(ConvrecStatus::InvalidUtf8, e.to_string()))
}

fn choice(kind: ConvrecModelKind) -> ModelChoice {
    match kind {
        ConvrecModelKind::Auto => ModelChoice::Auto,
        ConvrecModelKind::PropertyFree => ModelChoice::PropertyFree,
        ConvrecModelKind::Properties => ModelChoice::Properties,
    }
}

fn wrap(catalog: Catalog, kind: ConvrecModelKind) -> Result<Box<ConvrecModel>, Fail> {
    let model = Model::build(Arc::new(catalog), choice(kind), &ElicitOptions::default())?;
    let c = model.catalog();
    Ok(Box::new(ConvrecModel {
        item_ids: c.items().iter().map(|i| cstring(&i.id)).collect(),
        question_ids: c.questions().iter().map(|q| cstring(&q.id)).collect(),
        answer_ids: c
            .questions()
            .iter()
            .map(|q| q.answers.iter().map(|a| cstring(&a.id)).collect())
            .collect(),
        model: Arc::new(model),
    }))
}

/// Message of the last failed call on this thread, or NULL.
#[no_mangle]
pub extern "C" fn convrec_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub extern "C" fn convrec_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn convrec_model_from_json(
    json: *const c_char,
    kind: ConvrecModelKind,
    out: *mut *mut ConvrecModel,
) -> ConvrecStatus {
    guard(|| {
        let out = borrow_mut(out)?;
        *out = ptr::null_mut();
        let catalog = Catalog::from_json_str(text(json)?, &LoadOptions::default())?;
        *out = Box::into_raw(wrap(catalog, kind)?);
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn convrec_model_from_file(
    path: *const c_char,
    kind: ConvrecModelKind,
    out: *mut *mut ConvrecModel,
) -> ConvrecStatus {
    guard(|| {
        let out = borrow_mut(out)?;
        *out = ptr::null_mut();
        let catalog = Catalog::load(text(path)?, &LoadOptions::default())?;
        *out = Box::into_raw(wrap(catalog, kind)?);
        Ok(())
    })
}

/// # Safety
/// `model` must come from a `convrec_model_from_*` call, or be NULL.
#[no_mangle]
pub unsafe extern "C" fn convrec_model_free(model: *mut ConvrecModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live model handle; NULL yields 0.
#[no_mangle]
pub unsafe extern "C" fn convrec_model_item_count(model: *const ConvrecModel) -> usize {
    model.as_ref().map_or(0, |m| m.item_ids.len())
}

/// # Safety
/// `model` must be a live model handle; NULL yields 0.
#[no_mangle]
pub unsafe extern "C" fn convrec_model_question_count(model: *const ConvrecModel) -> usize {
    model.as_ref().map_or(0, |m| m.question_ids.len())
}

/// Number of answers of a question, 0 when out of range.
///
/// # Safety
/// `model` must be a live model handle.
#[no_mangle]
pub unsafe extern "C" fn convrec_model_answer_count(model: *const ConvrecModel, question: usize) -> usize {
    model
        .as_ref()
        .and_then(|m| m.answer_ids.get(question))
        .map_or(0, Vec::len)
}

/// Item id, or NULL when out of range.
///
/// # Safety
/// `model` must be a live model handle.
#[no_mangle]
pub unsafe extern "C" fn convrec_model_item_id(model: *const ConvrecModel, item: usize) -> *const c_char {
    model
        .as_ref()
        .and_then(|m| m.item_ids.get(item))
        .map_or(ptr::null(), |s| s.as_ptr())
}

/// # Safety
/// `model` must be a live model handle.
#[no_mangle]
pub unsafe extern "C" fn convrec_model_question_id(model: *const ConvrecModel, question: usize) -> *const c_char {
    model
        .as_ref()
        .and_then(|m| m.question_ids.get(question))
        .map_or(ptr::null(), |s| s.as_ptr())
}

/// # Safety
/// `model` must be a live model handle.
#[no_mangle]
pub unsafe extern "C" fn convrec_model_answer_id(
    model: *const ConvrecModel,
    question: usize,
    answer: usize,
) -> *const c_char {
    model
        .as_ref()
        .and_then(|m| m.answer_ids.get(question))
        .and_then(|a| a.get(answer))
        .map_or(ptr::null(), |s| s.as_ptr())
}

/// Resolve a question and answer by id.
///
/// # Safety
/// Strings must be NUL-terminated; out pointers valid.
#[no_mangle]
pub unsafe extern "C" fn convrec_model_answer_ref(
    model: *const ConvrecModel,
    question_id: *const c_char,
    answer_id: *const c_char,
    out_question: *mut usize,
    out_answer: *mut usize,
) -> ConvrecStatus {
    guard(|| {
        let m = borrow(model)?;
        let (q, a) = m.model.catalog().answer_ref(text(question_id)?, text(answer_id)?)?;
        *borrow_mut(out_question)? = q.0;
        *borrow_mut(out_answer)? = a;
        Ok(())
    })
}

/// Normalised entropy threshold that corresponds to `s` equally likely
/// items out of `n`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn convrec_stopping_threshold(s: usize, n: usize, out: *mut f64) -> ConvrecStatus {
    guard(|| {
        *borrow_mut(out)? = stopping_threshold(s, n)?;
        Ok(())
    })
}

/// Start a session. `stop_s` and `max_questions` of 0 mean unset; `soft`
/// skips contradictory answers instead of freezing the session.
///
/// # Safety
/// `model` must be a live model handle and `out` a valid pointer. The
/// session keeps the model alive on its own.
#[no_mangle]
pub unsafe extern "C" fn convrec_session_new(
    model: *const ConvrecModel,
    stop_s: usize,
    max_questions: usize,
    soft: bool,
    out: *mut *mut ConvrecSession,
) -> ConvrecStatus {
    guard(|| {
        let m = borrow(model)?;
        let out = borrow_mut(out)?;
        *out = ptr::null_mut();
        let config = StoppingConfig {
            stop_s: (stop_s > 0).then_some(stop_s),
            max_questions: (max_questions > 0).then_some(max_questions),
            mode: if soft {
                ContradictionMode::Soft
            } else {
                ContradictionMode::Strict
            },
        };
        config.threshold(m.model.n_items())?;
        *out = Box::into_raw(Box::new(ConvrecSession {
            state: init_session(&m.model),
            model: m.model.clone(),
            config,
        }));
        Ok(())
    })
}

/// # Safety
/// `session` must come from `convrec_session_new`, or be NULL.
#[no_mangle]
pub unsafe extern "C" fn convrec_session_free(session: *mut ConvrecSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Choose the next question. On a stop, `out_stop` is set and
/// `out_question` is left untouched.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn convrec_session_next_question(
    session: *const ConvrecSession,
    out_question: *mut usize,
    out_stop: *mut ConvrecStop,
) -> ConvrecStatus {
    guard(|| {
        let s = borrow(session)?;
        let out_stop = borrow_mut(out_stop)?;
        let out_question = borrow_mut(out_question)?;
        let unasked: Vec<QuestionIdx> = s
            .model
            .catalog()
            .question_indices()
            .filter(|&q| !s.state.is_answered(q))
            .collect();
        match next_question(&s.model, &s.state, &unasked, &s.config)? {
            Decision::Ask { question, .. } => {
                *out_question = question.0;
                *out_stop = ConvrecStop::None;
            }
            Decision::Stop(reason) => *out_stop = reason.into(),
        }
        Ok(())
    })
}

/// Record an answer by index.
///
/// # Safety
/// `session` must be a live session handle.
#[no_mangle]
pub unsafe extern "C" fn convrec_session_answer(
    session: *mut ConvrecSession,
    question: usize,
    answer: usize,
) -> ConvrecStatus {
    guard(|| {
        let s = borrow_mut(session)?;
        if s.state.contradiction {
            return Err(Fail(
                ConvrecStatus::SessionFinished,
                "session is frozen after a contradiction".into(),
            ));
        }
        let catalog = s.model.catalog();
        if question >= catalog.n_questions() {
            return Err(Fail(ConvrecStatus::UnknownId, format!("question index {question} out of range")));
        }
        let q = QuestionIdx(question);
        if answer >= catalog.question(q).answers.len() {
            return Err(Fail(
                ConvrecStatus::UnknownId,
                format!("answer index {answer} out of range for `{}`", catalog.question(q).id),
            ));
        }
        s.state = update_with(&s.model, &s.state, q, answer, s.config.mode)?;
        Ok(())
    })
}

/// Copy the item posterior into `out`, which must hold at least the item
/// count; `out_len` receives the item count either way.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn convrec_session_posterior(
    session: *const ConvrecSession,
    out: *mut f64,
    len: usize,
    out_len: *mut usize,
) -> ConvrecStatus {
    guard(|| {
        let s = borrow(session)?;
        let n = s.state.posterior.len();
        *borrow_mut(out_len)? = n;
        if len < n {
            return Err(Fail(ConvrecStatus::BufferTooSmall, format!("need {n} slots, got {len}")));
        }
        if out.is_null() {
            return Err(Fail(ConvrecStatus::NullPointer, "null buffer".into()));
        }
        std::slice::from_raw_parts_mut(out, n).copy_from_slice(&s.state.posterior);
        Ok(())
    })
}

/// Normalised posterior entropy, NaN for a NULL handle.
///
/// # Safety
/// `session` must be a live session handle.
#[no_mangle]
pub unsafe extern "C" fn convrec_session_entropy(session: *const ConvrecSession) -> f64 {
    session.as_ref().map_or(f64::NAN, |s| s.state.entropy())
}

/// Number of items with positive posterior mass.
///
/// # Safety
/// `session` must be a live session handle.
#[no_mangle]
pub unsafe extern "C" fn convrec_session_retained(session: *const ConvrecSession) -> usize {
    session.as_ref().map_or(0, |s| retained(&s.state).count)
}

/// # Safety
/// `session` must be a live session handle.
#[no_mangle]
pub unsafe extern "C" fn convrec_session_answered(session: *const ConvrecSession) -> usize {
    session.as_ref().map_or(0, |s| s.state.n_answered())
}

/// # Safety
/// `session` must be a live session handle.
#[no_mangle]
pub unsafe extern "C" fn convrec_session_contradiction(session: *const ConvrecSession) -> bool {
    session.as_ref().is_some_and(|s| s.state.contradiction)
}
