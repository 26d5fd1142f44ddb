//! C ABI over the storystage engine.
//!
//! Sessions are opaque handles. Messages, documents and exports cross the
//! boundary as UTF-8 JSON. Every call returns an [`StsStatus`]; on failure
//! [`sts_last_error`] holds a message for the calling thread. Strings handed
//! out by the library must be released with [`sts_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use storystage::backend::DeterministicBackend;
use storystage::log::parse_document;
use storystage::scene::bundled_fixture;
use storystage::session::{replay_document, ClientMessage};
use storystage::{Config, Session, SessionError};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StsStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidJson = 3,
    InvalidConfig = 4,
    UnknownFixture = 5,
    SchemaViolation = 6,
    WrongPhase = 7,
    SessionError = 8,
    Panic = 9,
}

/// A live session.
pub struct StsSession {
    inner: Session,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

struct Failure(StsStatus, String);

impl From<SessionError> for Failure {
    fn from(e: SessionError) -> Self {
        let status = match e.code() {
            "UnknownFixture" => StsStatus::UnknownFixture,
            "SchemaViolation" => StsStatus::SchemaViolation,
            "WrongPhase" => StsStatus::WrongPhase,
            _ => StsStatus::SessionError,
        };
        Failure(status, format!("{}: {e}", e.code()))
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> StsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            StsStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            StsStatus::Panic
        }
    }
}

/// # Safety
/// `p` is null or a valid NUL-terminated string.
unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(StsStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(StsStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

/// # Safety
/// `p` is null or a valid NUL-terminated string.
unsafe fn config(p: *const c_char) -> Result<Config, Failure> {
    if p.is_null() {
        return Ok(Config::default());
    }
    Config::from_json(text(p, "config")?).map_err(|e| Failure(StsStatus::InvalidConfig, e.to_string()))
}

fn give(s: String, out: *mut *mut c_char) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(StsStatus::NullArgument, "output pointer is null".into()));
    }
    let c = CString::new(s).map_err(|_| Failure(StsStatus::InvalidJson, "output contains NUL".into()))?;
    // SAFETY: checked non-null above; the caller owns the slot.
    unsafe { *out = c.into_raw() };
    Ok(())
}

fn session<'a>(s: *mut StsSession) -> Result<&'a mut Session, Failure> {
    // SAFETY: non-null handles come from `Box::into_raw` in this crate.
    unsafe { s.as_mut() }
        .map(|s| &mut s.inner)
        .ok_or_else(|| Failure(StsStatus::NullArgument, "session is null".into()))
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("engine types serialize")
}

/// Message for the last failed call on this thread, or null. Owned by the library.
#[no_mangle]
pub extern "C" fn sts_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version. Static storage.
#[no_mangle]
pub extern "C" fn sts_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Starts a session on a bundled fixture. `config_json` may be null for defaults.
///
/// # Safety
/// String arguments are null or NUL-terminated; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn sts_session_new(
    fixture_id: *const c_char,
    config_json: *const c_char,
    out: *mut *mut StsSession,
) -> StsStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure(StsStatus::NullArgument, "output pointer is null".into()));
        }
        let inner = Session::create(text(fixture_id, "fixture id")?, config(config_json)?)?;
        *out = Box::into_raw(Box::new(StsSession { inner }));
        Ok(())
    })
}

/// Restores a session from a saved document.
///
/// # Safety
/// String arguments are null or NUL-terminated; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn sts_session_load(
    document_json: *const c_char,
    config_json: *const c_char,
    out: *mut *mut StsSession,
) -> StsStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure(StsStatus::NullArgument, "output pointer is null".into()));
        }
        let doc = parse_document(text(document_json, "document")?).map_err(|e| Failure::from(SessionError::from(e)))?;
        let fixture = bundled_fixture(&doc.scene_id)
            .ok_or_else(|| Failure::from(SessionError::UnknownFixture(doc.scene_id.clone())))?;
        let backend = Arc::new(DeterministicBackend::new(fixture.script.clone()));
        let inner = Session::from_document(&doc, fixture, config(config_json)?, backend)?;
        *out = Box::into_raw(Box::new(StsSession { inner }));
        Ok(())
    })
}

/// Feeds one client message; `*out_json` receives the JSON array of replies.
/// Engine-level rejections arrive as `Error` replies with status `Ok`.
///
/// # Safety
/// `s` comes from this library; `message_json` is NUL-terminated; `out_json` is writable.
#[no_mangle]
pub unsafe extern "C" fn sts_session_ingest(
    s: *mut StsSession,
    message_json: *const c_char,
    now_ms: u64,
    out_json: *mut *mut c_char,
) -> StsStatus {
    guard(|| {
        let session = session(s)?;
        let msg: ClientMessage = serde_json::from_str(text(message_json, "message")?)
            .map_err(|e| Failure(StsStatus::InvalidJson, e.to_string()))?;
        give(json(&session.ingest(msg, now_ms)), out_json)
    })
}

/// Writes the session document as JSON.
///
/// # Safety
/// `s` comes from this library; `out_json` is writable.
#[no_mangle]
pub unsafe extern "C" fn sts_session_document(s: *mut StsSession, out_json: *mut *mut c_char) -> StsStatus {
    guard(|| give(session(s)?.document().to_json(), out_json))
}

/// Exports the arranged timeline: `{synopsis, screenplay_text, screenplay, continuity}`.
///
/// # Safety
/// `s` comes from this library; `out_json` is writable.
#[no_mangle]
pub unsafe extern "C" fn sts_session_export(s: *mut StsSession, out_json: *mut *mut c_char) -> StsStatus {
    guard(|| {
        let artifacts = session(s)?.export()?;
        give(json(&artifacts), out_json)
    })
}

/// Replays a saved document from scratch and exports it.
///
/// # Safety
/// String arguments are null or NUL-terminated; `out_json` is writable.
#[no_mangle]
pub unsafe extern "C" fn sts_replay(
    document_json: *const c_char,
    config_json: *const c_char,
    out_json: *mut *mut c_char,
) -> StsStatus {
    guard(|| {
        let doc = parse_document(text(document_json, "document")?).map_err(|e| Failure::from(SessionError::from(e)))?;
        let r = replay_document(&doc, config(config_json)?)?;
        give(json(&r.artifacts), out_json)
    })
}

/// Releases a session. Null is ignored.
///
/// # Safety
/// `s` is null or came from this library and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sts_session_free(s: *mut StsSession) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `p` is null or came from this library and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sts_string_free(p: *mut c_char) {
    if !p.is_null() {
        drop(CString::from_raw(p));
    }
}
