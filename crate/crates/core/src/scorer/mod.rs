//! Diarization error rate, RTTM I/O and score reports.
//!
//! Scoring sweeps the exact boundaries of both timelines. Every elementary
//! region between consecutive boundaries carries a fixed set of active
//! reference and hypothesis speakers; regions that fall inside a collar
//! around a reference boundary, or that hold two or more reference speakers
//! when overlap is ignored, are dropped. Speakers are mapped one-to-one by
//! maximizing the total co-active duration, then each region contributes
//! `max(0, R - H)` missed, `max(0, H - R)` false-alarm and
//! `min(R, H) - correct` confused speaker-seconds.

pub mod assign;
pub mod rttm;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use assign::optimal_mapping;
pub use rttm::{emit_rttm, parse_rttm};

use crate::error::{Error, Result};
use crate::types::{merge_intervals, SpeakerTimeline, TimeInterval};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSetup {
    /// Half-width in seconds of the unscored zone around reference boundaries.
    pub collar: f64,
    pub ignore_overlap: bool,
}

impl EvalSetup {
    pub const FORGIVING: EvalSetup = EvalSetup {
        collar: 0.25,
        ignore_overlap: true,
    };
    pub const FULL: EvalSetup = EvalSetup {
        collar: 0.0,
        ignore_overlap: false,
    };

    pub fn forgiving() -> Self {
        Self::FORGIVING
    }

    pub fn full() -> Self {
        Self::FULL
    }
}

/// Speaker-seconds; `der` is the error fraction (not a percentage).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DerBreakdown {
    pub missed_speech: f64,
    pub false_alarm: f64,
    pub speaker_confusion: f64,
    pub total_reference: f64,
    pub der: f64,
}

impl DerBreakdown {
    fn finish(mut self) -> Self {
        self.der = if self.total_reference > 0.0 {
            (self.missed_speech + self.false_alarm + self.speaker_confusion) / self.total_reference
        } else {
            0.0
        };
        self
    }

    /// Duration-weighted pooling over sessions.
    pub fn pooled<'a, I: IntoIterator<Item = &'a DerBreakdown>>(parts: I) -> DerBreakdown {
        let mut acc = DerBreakdown::default();
        for p in parts {
            acc.missed_speech += p.missed_speech;
            acc.false_alarm += p.false_alarm;
            acc.speaker_confusion += p.speaker_confusion;
            acc.total_reference += p.total_reference;
        }
        acc.finish()
    }
}

struct Region {
    duration: f64,
    reference: Vec<usize>,
    hypothesis: Vec<usize>,
}

fn is_active(intervals: &[TimeInterval], t: f64) -> bool {
    let idx = intervals.partition_point(|iv| iv.offset() <= t);
    intervals.get(idx).is_some_and(|iv| iv.onset() <= t)
}

fn active_set(groups: &[Vec<TimeInterval>], t: f64) -> Vec<usize> {
    groups
        .iter()
        .enumerate()
        .filter(|(_, ivs)| is_active(ivs, t))
        .map(|(i, _)| i)
        .collect()
}

/// Reference regions where two or more speakers talk at once.
fn overlap_zones(groups: &[Vec<TimeInterval>]) -> Vec<TimeInterval> {
    let mut events: Vec<(f64, i32)> = Vec::new();
    for iv in groups.iter().flatten() {
        events.push((iv.onset(), 1));
        events.push((iv.offset(), -1));
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut zones = Vec::new();
    let mut depth = 0;
    let mut start = 0.0;
    for (t, d) in events {
        let before = depth;
        depth += d;
        if before < 2 && depth >= 2 {
            start = t;
        } else if before >= 2 && depth < 2 && t > start {
            zones.push(TimeInterval::new(start, t).expect("ordered sweep"));
        }
    }
    zones
}

fn collar_zones(groups: &[Vec<TimeInterval>], collar: f64) -> Vec<TimeInterval> {
    if !(collar > 0.0) {
        return Vec::new();
    }
    let mut zones = Vec::new();
    for iv in groups.iter().flatten() {
        for b in [iv.onset(), iv.offset()] {
            let lo = (b - collar).max(0.0);
            zones.push(TimeInterval::new(lo, b + collar).expect("positive collar"));
        }
    }
    zones
}

fn split_regions(
    reference: &[Vec<TimeInterval>],
    hypothesis: &[Vec<TimeInterval>],
    excluded: &[TimeInterval],
) -> Vec<Region> {
    let mut cuts: Vec<f64> = reference
        .iter()
        .chain(hypothesis)
        .flatten()
        .chain(excluded)
        .flat_map(|iv| [iv.onset(), iv.offset()])
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut regions = Vec::new();
    for w in cuts.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        if !(t1 > t0) {
            continue;
        }
        let mid = 0.5 * (t0 + t1);
        if is_active(excluded, mid) {
            continue;
        }
        let r = active_set(reference, mid);
        let h = active_set(hypothesis, mid);
        if r.is_empty() && h.is_empty() {
            continue;
        }
        regions.push(Region {
            duration: t1 - t0,
            reference: r,
            hypothesis: h,
        });
    }
    regions
}

fn grouped(t: &SpeakerTimeline) -> Vec<Vec<TimeInterval>> {
    t.by_speaker().into_values().collect()
}

/// Diarization error rate of `hypothesis` against `reference`.
pub fn der(
    reference: &SpeakerTimeline,
    hypothesis: &SpeakerTimeline,
    setup: &EvalSetup,
) -> Result<DerBreakdown> {
    if !(setup.collar.is_finite() && setup.collar >= 0.0) {
        return Err(Error::InvalidArgument(format!("collar {} must be non-negative", setup.collar)));
    }
    let refs = grouped(reference);
    let hyps = grouped(hypothesis);
    let mut excluded = collar_zones(&refs, setup.collar);
    if setup.ignore_overlap {
        excluded.extend(overlap_zones(&refs));
    }
    let excluded = merge_intervals(excluded);
    let regions = split_regions(&refs, &hyps, &excluded);

    let mut co_active = vec![vec![0.0; hyps.len()]; refs.len()];
    let mut total_reference = 0.0;
    for reg in &regions {
        total_reference += reg.duration * reg.reference.len() as f64;
        for &r in &reg.reference {
            for &h in &reg.hypothesis {
                co_active[r][h] += reg.duration;
            }
        }
    }
    if !(total_reference > 0.0) {
        return Err(Error::EmptyReference);
    }
    let mut mapped = vec![None; hyps.len()];
    for (r, h) in optimal_mapping(&co_active) {
        mapped[h] = Some(r);
    }

    let mut out = DerBreakdown {
        total_reference,
        ..DerBreakdown::default()
    };
    for reg in &regions {
        let nr = reg.reference.len();
        let nh = reg.hypothesis.len();
        let correct = reg
            .hypothesis
            .iter()
            .filter(|&&h| mapped[h].is_some_and(|r| reg.reference.contains(&r)))
            .count();
        out.missed_speech += reg.duration * nr.saturating_sub(nh) as f64;
        out.false_alarm += reg.duration * nh.saturating_sub(nr) as f64;
        out.speaker_confusion += reg.duration * (nr.min(nh) - correct) as f64;
    }
    Ok(out.finish())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionScore {
    pub session_id: String,
    #[serde(flatten)]
    pub breakdown: DerBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub setup: EvalSetup,
    pub sessions: Vec<SessionScore>,
    pub pooled: DerBreakdown,
}

/// Scores every reference session; a session missing from the hypotheses
/// is scored against an empty timeline.
pub fn score_sessions(
    reference: &BTreeMap<String, SpeakerTimeline>,
    hypothesis: &BTreeMap<String, SpeakerTimeline>,
    setup: &EvalSetup,
) -> Result<ScoreReport> {
    let mut sessions = Vec::with_capacity(reference.len());
    for (id, r) in reference {
        let empty = SpeakerTimeline::empty(id.clone());
        let h = hypothesis.get(id).unwrap_or(&empty);
        sessions.push(SessionScore {
            session_id: id.clone(),
            breakdown: der(r, h, setup)?,
        });
    }
    let pooled = DerBreakdown::pooled(sessions.iter().map(|s| &s.breakdown));
    Ok(ScoreReport {
        setup: *setup,
        sessions,
        pooled,
    })
}
