//! C interface to the diarization pipeline.
//!
//! Objects cross the boundary as opaque handles created by `*_load` / `*_new`
//! functions and released by the matching `*_free`. Every fallible call
//! returns an [`MsddStatus`]; on failure [`msdd_last_error`] describes the
//! cause until the next call on the same thread. Output pointers are written
//! only on success. Strings returned by the library are released with
//! [`msdd_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use msdd_core::msdd::MsddParameters;
use msdd_core::pipeline::{diarize_session, load_model, ModelCard, PipelineConfig, SessionDiarization};
use msdd_core::scorer::{emit_rttm, parse_rttm, score_sessions, EvalSetup};
use msdd_core::synthembed::{load_archive, SessionEmbeddings};
use msdd_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsddStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    ShapeMismatch = 5,
    Infeasible = 6,
    EmptyReference = 7,
    Panic = 8,
}

/// Pipeline configuration.
pub struct MsddConfig(PipelineConfig);

/// Multi-scale embeddings of one session.
pub struct MsddSession(SessionEmbeddings);

/// Trained decoder parameters with their metadata.
pub struct MsddModel {
    params: MsddParameters,
    card: ModelCard,
}

/// Result of diarizing one session.
pub struct MsddDiarization {
    result: SessionDiarization,
    speakers: Vec<String>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let clean = msg.replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(clean).expect("nul bytes removed"));
}

fn status_of(err: &Error) -> MsddStatus {
    match err {
        Error::Io { .. } => MsddStatus::Io,
        Error::RttmParse { .. }
        | Error::PayloadLength { .. }
        | Error::ManifestMismatch(_)
        | Error::UnsupportedVersion { .. }
        | Error::Manifest(_) => MsddStatus::Format,
        Error::ShapeMismatch(_) | Error::ScaleMismatch(_) => MsddStatus::ShapeMismatch,
        Error::Infeasible(_) | Error::TooManySpeakers { .. } | Error::EmptyCluster(_) => MsddStatus::Infeasible,
        Error::EmptyReference => MsddStatus::EmptyReference,
        _ => MsddStatus::InvalidArgument,
    }
}

struct Failure(MsddStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(MsddStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MsddStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            MsddStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("internal panic: {msg}"));
            MsddStatus::Panic
        }
    }
}

/// # Safety
/// `p` must be null or a valid nul-terminated string.
unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(MsddStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

/// # Safety
/// `p` must be null or point to a live handle of type `T`.
unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    // SAFETY: checked non-null; the caller provides writable storage.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

fn to_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(MsddStatus::Format, "string contains a nul byte".into()))
}

/// Description of the last failure on this thread; empty after a success.
/// The pointer stays valid until the next library call on this thread.
#[no_mangle]
pub extern "C" fn msdd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn msdd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn msdd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Default configuration.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn msdd_config_new(out: *mut *mut MsddConfig) -> MsddStatus {
    guard(|| store(out, MsddConfig(PipelineConfig::default())))
}

/// Configuration parsed from a TOML document; environment overrides are not applied.
///
/// # Safety
/// `toml` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn msdd_config_from_toml(toml: *const c_char, out: *mut *mut MsddConfig) -> MsddStatus {
    guard(|| {
        let text = read_str(toml, "toml")?;
        let cfg = PipelineConfig::from_toml_with_env(text, std::iter::empty())?;
        store(out, MsddConfig(cfg))
    })
}

/// Sets the decoder threshold, which must lie in (0, 1).
///
/// # Safety
/// `cfg` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn msdd_config_set_threshold(cfg: *mut MsddConfig, threshold: f64) -> MsddStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| null("config"))?;
        let mut next = cfg.0.clone();
        next.decoder.threshold = threshold;
        next.validate()?;
        cfg.0 = next;
        Ok(())
    })
}

/// Sets the clustering weight ratio between the coarsest and the base scale.
///
/// # Safety
/// `cfg` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn msdd_config_set_weight_ratio(cfg: *mut MsddConfig, r: f64) -> MsddStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| null("config"))?;
        let mut next = cfg.0.clone();
        next.clustering.r = r;
        next.validate()?;
        cfg.0 = next;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn msdd_config_free(cfg: *mut MsddConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Loads an embedding archive from its manifest path.
///
/// # Safety
/// `manifest_path` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn msdd_session_load(manifest_path: *const c_char, out: *mut *mut MsddSession) -> MsddStatus {
    guard(|| {
        let path = PathBuf::from(read_str(manifest_path, "manifest_path")?);
        store(out, MsddSession(load_archive(&path)?))
    })
}

/// Number of base-scale steps, or 0 for a null handle.
///
/// # Safety
/// `session` must be null or a live session handle.
#[no_mangle]
pub unsafe extern "C" fn msdd_session_num_steps(session: *const MsddSession) -> usize {
    session.as_ref().map_or(0, |s| s.0.num_base())
}

/// # Safety
/// `session` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn msdd_session_free(session: *mut MsddSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Loads a trained decoder checkpoint.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn msdd_model_load(path: *const c_char, out: *mut *mut MsddModel) -> MsddStatus {
    guard(|| {
        let path = PathBuf::from(read_str(path, "path")?);
        let (params, card) = load_model(&path)?;
        store(out, MsddModel { params, card })
    })
}

/// # Safety
/// `model` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn msdd_model_free(model: *mut MsddModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Diarizes `session`; a null `model` selects clustering only.
///
/// # Safety
/// `session` and `config` must be live handles, `model` null or live, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn msdd_diarize(
    session: *const MsddSession,
    config: *const MsddConfig,
    model: *const MsddModel,
    out: *mut *mut MsddDiarization,
) -> MsddStatus {
    guard(|| {
        let session = handle(session, "session")?;
        let config = handle(config, "config")?;
        let model = model.as_ref().map(|m| (&m.params, &m.card.scales));
        let result = diarize_session(&session.0, &config.0, model)?;
        let speakers = result.timeline.speakers();
        store(out, MsddDiarization { result, speakers })
    })
}

/// Estimated speaker count, or 0 for a null handle.
///
/// # Safety
/// `d` must be null or a live diarization handle.
#[no_mangle]
pub unsafe extern "C" fn msdd_diarization_num_speakers(d: *const MsddDiarization) -> usize {
    d.as_ref().map_or(0, |d| d.result.clustering.num_speakers)
}

/// Number of hypothesis segments, or 0 for a null handle.
///
/// # Safety
/// `d` must be null or a live diarization handle.
#[no_mangle]
pub unsafe extern "C" fn msdd_diarization_num_segments(d: *const MsddDiarization) -> usize {
    d.as_ref().map_or(0, |d| d.result.timeline.entries().len())
}

/// Segment `index`; `speaker` receives the index of its label among the
/// sorted hypothesis speaker names.
///
/// # Safety
/// `d` must be a live diarization handle and the output pointers writable.
#[no_mangle]
pub unsafe extern "C" fn msdd_diarization_segment(
    d: *const MsddDiarization,
    index: usize,
    onset: *mut f64,
    offset: *mut f64,
    speaker: *mut usize,
) -> MsddStatus {
    guard(|| {
        let d = handle(d, "diarization")?;
        if onset.is_null() || offset.is_null() || speaker.is_null() {
            return Err(null("output pointer"));
        }
        let entries = d.result.timeline.entries();
        let (name, iv) = entries.get(index).ok_or_else(|| {
            Failure(
                MsddStatus::InvalidArgument,
                format!("segment {index} out of range ({} segments)", entries.len()),
            )
        })?;
        let s = d.speakers.binary_search(name).expect("speaker list built from the timeline");
        *onset = iv.onset();
        *offset = iv.offset();
        *speaker = s;
        Ok(())
    })
}

/// Hypothesis as RTTM text; release with [`msdd_string_free`].
///
/// # Safety
/// `d` must be a live diarization handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn msdd_diarization_rttm(d: *const MsddDiarization, out: *mut *mut c_char) -> MsddStatus {
    guard(|| {
        let d = handle(d, "diarization")?;
        if out.is_null() {
            return Err(null("output pointer"));
        }
        *out = to_c_string(emit_rttm(&d.result.timeline))?;
        Ok(())
    })
}

/// # Safety
/// `d` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn msdd_diarization_free(d: *mut MsddDiarization) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Pooled DER of RTTM texts; sessions missing from the hypothesis count as silent.
///
/// # Safety
/// Both texts must be nul-terminated strings and `der` writable.
#[no_mangle]
pub unsafe extern "C" fn msdd_score_rttm(
    reference: *const c_char,
    hypothesis: *const c_char,
    collar: f64,
    ignore_overlap: bool,
    der: *mut f64,
) -> MsddStatus {
    guard(|| {
        let r = parse_rttm(read_str(reference, "reference")?)?;
        if r.is_empty() {
            return Err(Error::EmptyReference.into());
        }
        let h = parse_rttm(read_str(hypothesis, "hypothesis")?)?;
        if der.is_null() {
            return Err(null("output pointer"));
        }
        if !(collar.is_finite() && collar >= 0.0) {
            return Err(Failure(MsddStatus::InvalidArgument, format!("collar {collar} must be non-negative")));
        }
        let report = score_sessions(&r, &h, &EvalSetup { collar, ignore_overlap })?;
        *der = report.pooled.der;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    #[test]
    fn errors_map_to_statuses() {
        assert_eq!(status_of(&Error::EmptyReference), MsddStatus::EmptyReference);
        assert_eq!(status_of(&Error::ScaleMismatch("k".into())), MsddStatus::ShapeMismatch);
        assert_eq!(status_of(&Error::Config("x".into())), MsddStatus::InvalidArgument);
    }

    #[test]
    fn panics_become_status_codes() {
        let status = guard(|| panic!("boom"));
        assert_eq!(status, MsddStatus::Panic);
        let msg = unsafe { CStr::from_ptr(msdd_last_error()) }.to_str().unwrap();
        assert!(msg.contains("boom"));
        assert_eq!(guard(|| Ok(())), MsddStatus::Ok);
        assert!(unsafe { CStr::from_ptr(msdd_last_error()) }.to_bytes().is_empty());
    }

    #[test]
    fn null_output_is_rejected() {
        assert_eq!(unsafe { msdd_config_new(ptr::null_mut()) }, MsddStatus::NullPointer);
    }
}
