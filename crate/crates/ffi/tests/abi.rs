use std::ffi::{CStr, CString};
use std::ptr;

use msdd_core::scorer::emit_rttm;
use msdd_core::synthembed::{gen_session, save_archive, SynthConfig};
use msdd_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(msdd_last_error()) }.to_string_lossy().into_owned()
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

#[test]
fn header_declares_the_interface() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/msdd.h")).unwrap();
    for name in [
        "msdd_last_error",
        "msdd_config_from_toml",
        "msdd_session_load",
        "msdd_model_load",
        "msdd_diarize",
        "msdd_diarization_segment",
        "msdd_score_rttm",
        "MSDD_STATUS_OK",
        "typedef struct MsddSession MsddSession",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

#[test]
fn diarizes_an_archive_through_handles() {
    let dir = tempfile::tempdir().unwrap();
    let s = gen_session(&SynthConfig {
        num_speakers: 2,
        dim: 24,
        session_duration: 20.0,
        overlap_fraction: 0.0,
        seed: 3,
        session_id: "ffi".into(),
        ..SynthConfig::default()
    })
    .unwrap();
    let manifest = save_archive(dir.path(), "ffi", &s.data).unwrap();
    let path = c(manifest.to_str().unwrap());

    unsafe {
        let mut session = ptr::null_mut();
        assert_eq!(msdd_session_load(path.as_ptr(), &mut session), MsddStatus::Ok);
        assert_eq!(msdd_session_num_steps(session), s.data.num_base());

        let mut config = ptr::null_mut();
        assert_eq!(msdd_config_new(&mut config), MsddStatus::Ok);
        assert_eq!(msdd_config_set_threshold(config, 1.5), MsddStatus::InvalidArgument);
        assert!(last_error().contains("threshold"));
        assert_eq!(msdd_config_set_weight_ratio(config, 1.0), MsddStatus::Ok);

        let mut d = ptr::null_mut();
        assert_eq!(msdd_diarize(session, config, ptr::null(), &mut d), MsddStatus::Ok);
        assert_eq!(msdd_diarization_num_speakers(d), 2);
        let n = msdd_diarization_num_segments(d);
        assert!(n > 0);
        let (mut on, mut off, mut spk) = (0.0, 0.0, 0usize);
        for i in 0..n {
            assert_eq!(msdd_diarization_segment(d, i, &mut on, &mut off, &mut spk), MsddStatus::Ok);
            assert!(off > on && spk < 2);
        }
        assert_eq!(msdd_diarization_segment(d, n, &mut on, &mut off, &mut spk), MsddStatus::InvalidArgument);

        let mut text = ptr::null_mut();
        assert_eq!(msdd_diarization_rttm(d, &mut text), MsddStatus::Ok);
        let hyp = CStr::from_ptr(text).to_owned();
        msdd_string_free(text);
        let reference = c(&emit_rttm(&s.timeline));
        let mut der = -1.0;
        assert_eq!(msdd_score_rttm(reference.as_ptr(), hyp.as_ptr(), 0.25, true, &mut der), MsddStatus::Ok);
        assert!((0.0..0.2).contains(&der), "der {der}");
        assert_eq!(msdd_score_rttm(reference.as_ptr(), reference.as_ptr(), 0.0, false, &mut der), MsddStatus::Ok);
        assert_eq!(der, 0.0);

        msdd_diarization_free(d);
        msdd_config_free(config);
        msdd_session_free(session);
    }
}

#[test]
fn failures_report_codes_and_messages() {
    unsafe {
        let mut session = ptr::null_mut();
        let missing = c("/nonexistent/none.manifest");
        assert_eq!(msdd_session_load(missing.as_ptr(), &mut session), MsddStatus::Io);
        assert!(session.is_null());
        assert!(last_error().contains("/nonexistent/none.manifest"));

        assert_eq!(msdd_session_load(ptr::null(), &mut session), MsddStatus::NullPointer);

        let mut config = ptr::null_mut();
        let bad = c("[decoder]\nthreshold = 2.0\n");
        assert_eq!(msdd_config_from_toml(bad.as_ptr(), &mut config), MsddStatus::InvalidArgument);
        assert!(config.is_null());

        let mut d = ptr::null_mut();
        assert_eq!(msdd_diarize(ptr::null(), ptr::null(), ptr::null(), &mut d), MsddStatus::NullPointer);

        let mut der = 0.0;
        let broken = c("SPEAKER only three");
        assert_eq!(msdd_score_rttm(broken.as_ptr(), broken.as_ptr(), 0.0, false, &mut der), MsddStatus::Format);
        let empty = c("");
        assert_eq!(msdd_score_rttm(empty.as_ptr(), empty.as_ptr(), 0.0, false, &mut der), MsddStatus::EmptyReference);

        msdd_config_free(ptr::null_mut());
        msdd_session_free(ptr::null_mut());
        msdd_model_free(ptr::null_mut());
        msdd_diarization_free(ptr::null_mut());
        msdd_string_free(ptr::null_mut());
        assert!(!CStr::from_ptr(msdd_version()).to_bytes().is_empty());
    }
}
