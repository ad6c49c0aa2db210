//! RTTM reading and writing.
//!
//! Each record has ten whitespace-separated fields:
//! `SPEAKER <file> <chan> <onset> <dur> <NA> <NA> <speaker> <NA> <NA>`.
//! Blank lines and lines starting with `;` are ignored, as are well-formed
//! records of other types. Zero-length turns are dropped.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::types::{SpeakerTimeline, TimeInterval};

pub fn parse_rttm(text: &str) -> Result<BTreeMap<String, SpeakerTimeline>> {
    let mut raw: BTreeMap<String, Vec<(String, TimeInterval)>> = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with(';') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        let err = |msg: String| Error::RttmParse { line: line_no, msg };
        if fields.len() != 10 {
            return Err(err(format!("expected 10 fields, found {}", fields.len())));
        }
        if fields[0] != "SPEAKER" {
            continue;
        }
        let onset: f64 = fields[3]
            .parse()
            .map_err(|_| err(format!("invalid onset {:?}", fields[3])))?;
        let dur: f64 = fields[4]
            .parse()
            .map_err(|_| err(format!("invalid duration {:?}", fields[4])))?;
        if !onset.is_finite() || onset < 0.0 {
            return Err(err(format!("negative or non-finite onset {onset}")));
        }
        if !dur.is_finite() || dur < 0.0 {
            return Err(err(format!("negative or non-finite duration {dur}")));
        }
        let entries = raw.entry(fields[1].to_string()).or_default();
        if dur > 0.0 {
            let iv = TimeInterval::new(onset, onset + dur).map_err(|e| err(e.to_string()))?;
            entries.push((fields[7].to_string(), iv));
        }
    }
    Ok(raw
        .into_iter()
        .map(|(id, entries)| {
            let t = SpeakerTimeline::new(id.clone(), entries);
            (id, t)
        })
        .collect())
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// Canonical RTTM lines sorted by onset then speaker.
pub fn emit_rttm(timeline: &SpeakerTimeline) -> String {
    let mut rows: Vec<(f64, f64, &str)> = timeline
        .entries()
        .iter()
        .map(|(spk, iv)| (round3(iv.onset()), round3(iv.offset()), spk.as_str()))
        .filter(|(on, off, _)| off > on)
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.2.cmp(b.2)));
    let mut out = String::new();
    for (on, off, spk) in rows {
        let _ = writeln!(
            out,
            "SPEAKER {} 1 {:.3} {:.3} <NA> <NA> {} <NA> <NA>",
            timeline.session_id,
            on,
            off - on,
            spk
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_example_line() {
        let m = parse_rttm("SPEAKER s1 1 0.50 1.25 <NA> <NA> spkA <NA> <NA>\n").unwrap();
        let t = &m["s1"];
        let ivs = t.intervals_of("spkA");
        assert_eq!(ivs.len(), 1);
        assert!((ivs[0].onset() - 0.5).abs() < 1e-12);
        assert!((ivs[0].offset() - 1.75).abs() < 1e-12);
    }

    #[test]
    fn empty_and_comments() {
        assert!(parse_rttm("").unwrap().is_empty());
        let m = parse_rttm("; header\n\n   SPEAKER  a  1  0  1  <NA> <NA> x <NA> <NA>  \n").unwrap();
        assert_eq!(m["a"].entries().len(), 1);
    }

    #[test]
    fn field_count_error_names_line() {
        let text = "SPEAKER a 1 0 1 <NA> <NA> x <NA> <NA>\nSPEAKER a 1 0 1 <NA> <NA> x <NA>\n";
        match parse_rttm(text) {
            Err(Error::RttmParse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_duration_rejected() {
        assert!(parse_rttm("SPEAKER a 1 0.5 -1 <NA> <NA> x <NA> <NA>").is_err());
        assert!(parse_rttm("SPEAKER a 1 abc 1 <NA> <NA> x <NA> <NA>").is_err());
    }

    #[test]
    fn emits_overlapping_lines() {
        let t = SpeakerTimeline::new(
            "s",
            vec![
                ("B".to_string(), TimeInterval::new(1.0, 3.0).unwrap()),
                ("A".to_string(), TimeInterval::new(0.0, 2.0).unwrap()),
            ],
        );
        assert_eq!(
            emit_rttm(&t),
            "SPEAKER s 1 0.000 2.000 <NA> <NA> A <NA> <NA>\nSPEAKER s 1 1.000 2.000 <NA> <NA> B <NA> <NA>\n"
        );
        assert_eq!(emit_rttm(&SpeakerTimeline::empty("s")), "");
    }

    #[test]
    fn round_trip_within_emission_precision() {
        let t = SpeakerTimeline::new(
            "sess",
            vec![
                ("A".to_string(), TimeInterval::new(0.123456, 1.987654).unwrap()),
                ("B".to_string(), TimeInterval::new(1.5, 2.25).unwrap()),
                ("A".to_string(), TimeInterval::new(3.0004, 4.1).unwrap()),
            ],
        );
        let back = &parse_rttm(&emit_rttm(&t)).unwrap()["sess"];
        assert_eq!(back.entries().len(), t.entries().len());
        for ((s1, a), (s2, b)) in t.entries().iter().zip(back.entries()) {
            assert_eq!(s1, s2);
            assert!((a.onset() - b.onset()).abs() <= 1e-3);
            assert!((a.offset() - b.offset()).abs() <= 1e-3);
        }
    }
}
