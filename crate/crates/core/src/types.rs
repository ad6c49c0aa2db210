//! Domain types shared across the pipeline: time intervals, scale
//! configurations, speaker timelines and embedding matrices.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Same-speaker intervals separated by less than this are merged.
pub const MERGE_TOLERANCE: f64 = 1e-9;

/// A half-open span of time in seconds with `offset > onset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "(f64, f64)", into = "(f64, f64)")]
pub struct TimeInterval {
    onset: f64,
    offset: f64,
}

impl TimeInterval {
    pub fn new(onset: f64, offset: f64) -> Result<Self> {
        if !(onset.is_finite() && offset.is_finite()) || onset < 0.0 || offset <= onset {
            return Err(Error::InvalidInterval { onset, offset });
        }
        Ok(Self { onset, offset })
    }

    #[inline]
    pub fn onset(&self) -> f64 {
        self.onset
    }

    #[inline]
    pub fn offset(&self) -> f64 {
        self.offset
    }

    #[inline]
    pub fn duration(&self) -> f64 {
        self.offset - self.onset
    }

    #[inline]
    pub fn center(&self) -> f64 {
        (self.onset + self.offset) / 2.0
    }
}

impl TryFrom<(f64, f64)> for TimeInterval {
    type Error = Error;

    fn try_from((onset, offset): (f64, f64)) -> Result<Self> {
        Self::new(onset, offset)
    }
}

impl From<TimeInterval> for (f64, f64) {
    fn from(iv: TimeInterval) -> Self {
        (iv.onset, iv.offset)
    }
}

/// Length of the intersection of two intervals, zero when disjoint.
pub fn interval_overlap(a: &TimeInterval, b: &TimeInterval) -> f64 {
    (a.offset.min(b.offset) - a.onset.max(b.onset)).max(0.0)
}

/// Total overlap between `seg` and a sorted, non-overlapping interval list.
pub(crate) fn overlap_with_sorted(seg: &TimeInterval, intervals: &[TimeInterval]) -> f64 {
    let start = intervals.partition_point(|iv| iv.offset <= seg.onset);
    intervals[start..]
        .iter()
        .take_while(|iv| iv.onset < seg.offset)
        .map(|iv| interval_overlap(seg, iv))
        .sum()
}

/// Merges overlapping or touching intervals of a list. The input need not be sorted.
pub(crate) fn merge_intervals(mut intervals: Vec<TimeInterval>) -> Vec<TimeInterval> {
    intervals.sort_by(|a, b| a.onset.total_cmp(&b.onset).then(a.offset.total_cmp(&b.offset)));
    let mut merged: Vec<TimeInterval> = Vec::with_capacity(intervals.len());
    for iv in intervals {
        match merged.last_mut() {
            Some(last) if iv.onset <= last.offset + MERGE_TOLERANCE => {
                last.offset = last.offset.max(iv.offset);
            }
            _ => merged.push(iv),
        }
    }
    merged
}

/// Window and hop lengths for each of the K scales, coarsest first. The last
/// scale is the base scale where labels are decided.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleConfig {
    windows: Vec<f64>,
    hops: Vec<f64>,
}

impl ScaleConfig {
    pub const TELEPHONIC: [f64; 5] = [1.5, 1.25, 1.0, 0.75, 0.5];
    pub const MEETING: [f64; 6] = [3.0, 2.5, 2.0, 1.5, 1.0, 0.5];

    /// Scales with hops set to half of each window.
    pub fn new(windows: Vec<f64>) -> Result<Self> {
        let hops = windows.iter().map(|w| w / 2.0).collect();
        Self::with_hops(windows, hops)
    }

    pub fn with_hops(windows: Vec<f64>, hops: Vec<f64>) -> Result<Self> {
        if windows.is_empty() {
            return Err(Error::InvalidArgument("at least one scale is required".into()));
        }
        if windows.len() != hops.len() {
            return Err(Error::InvalidArgument(format!(
                "{} windows but {} hops",
                windows.len(),
                hops.len()
            )));
        }
        for (&w, &h) in windows.iter().zip(&hops) {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidArgument(format!("window {w} must be positive")));
            }
            if !(h.is_finite() && h > 0.0 && h <= w) {
                return Err(Error::InvalidArgument(format!(
                    "hop {h} must lie in (0, {w}]"
                )));
            }
        }
        if windows.windows(2).any(|p| p[0] <= p[1]) {
            return Err(Error::InvalidArgument(
                "windows must be strictly decreasing".into(),
            ));
        }
        Ok(Self { windows, hops })
    }

    pub fn telephonic() -> Self {
        Self::new(Self::TELEPHONIC.to_vec()).expect("valid preset")
    }

    pub fn meeting() -> Self {
        Self::new(Self::MEETING.to_vec()).expect("valid preset")
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "telephonic" => Some(Self::telephonic()),
            "meeting" => Some(Self::meeting()),
            _ => None,
        }
    }

    pub fn num_scales(&self) -> usize {
        self.windows.len()
    }

    pub fn base_index(&self) -> usize {
        self.windows.len() - 1
    }

    pub fn windows(&self) -> &[f64] {
        &self.windows
    }

    pub fn hops(&self) -> &[f64] {
        &self.hops
    }

    pub fn base_window(&self) -> f64 {
        self.windows[self.base_index()]
    }

    pub fn base_hop(&self) -> f64 {
        self.hops[self.base_index()]
    }
}

/// Speaker-attributed intervals of one session.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpeakerTimeline {
    pub session_id: String,
    entries: Vec<(String, TimeInterval)>,
}

impl SpeakerTimeline {
    pub fn empty(session_id: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            entries: Vec::new(),
        }
    }

    /// Builds a timeline, merging overlapping or adjacent same-speaker intervals.
    pub fn new(
        session_id: impl Into<String>,
        entries: impl IntoIterator<Item = (String, TimeInterval)>,
    ) -> Self {
        let mut by_speaker: BTreeMap<String, Vec<TimeInterval>> = BTreeMap::new();
        for (spk, iv) in entries {
            by_speaker.entry(spk).or_default().push(iv);
        }
        let mut merged: Vec<(String, TimeInterval)> = by_speaker
            .into_iter()
            .flat_map(|(spk, ivs)| {
                merge_intervals(ivs)
                    .into_iter()
                    .map(move |iv| (spk.clone(), iv))
            })
            .collect();
        merged.sort_by(|a, b| {
            a.1.onset
                .total_cmp(&b.1.onset)
                .then_with(|| a.0.cmp(&b.0))
                .then(a.1.offset.total_cmp(&b.1.offset))
        });
        Self {
            session_id: session_id.into(),
            entries: merged,
        }
    }

    pub fn entries(&self) -> &[(String, TimeInterval)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Distinct speaker ids in lexicographic order.
    pub fn speakers(&self) -> Vec<String> {
        let mut spk: Vec<String> = self.entries.iter().map(|(s, _)| s.clone()).collect();
        spk.sort();
        spk.dedup();
        spk
    }

    /// Sorted, non-overlapping intervals of one speaker.
    pub fn intervals_of(&self, speaker: &str) -> Vec<TimeInterval> {
        self.entries
            .iter()
            .filter(|(s, _)| s == speaker)
            .map(|(_, iv)| *iv)
            .collect()
    }

    pub fn by_speaker(&self) -> BTreeMap<String, Vec<TimeInterval>> {
        let mut map: BTreeMap<String, Vec<TimeInterval>> = BTreeMap::new();
        for (s, iv) in &self.entries {
            map.entry(s.clone()).or_default().push(*iv);
        }
        map
    }

    /// Union of all speakers' speech, i.e. the speech-activity regions.
    pub fn speech_regions(&self) -> Vec<TimeInterval> {
        merge_intervals(self.entries.iter().map(|(_, iv)| *iv).collect())
    }

    pub fn total_speech(&self) -> f64 {
        self.speech_regions().iter().map(TimeInterval::duration).sum()
    }
}

/// Validates raw `(speaker, onset, offset)` triples and merges them into a timeline.
pub fn merge_speaker_intervals(
    session_id: impl Into<String>,
    entries: impl IntoIterator<Item = (String, f64, f64)>,
) -> Result<SpeakerTimeline> {
    let checked = entries
        .into_iter()
        .map(|(spk, on, off)| TimeInterval::new(on, off).map(|iv| (spk, iv)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SpeakerTimeline::new(session_id, checked))
}

/// Row-major segment embeddings; every row is finite with nonzero norm.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix(Array2<f64>);

impl EmbeddingMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.ncols() == 0 {
            return Err(Error::InvalidArgument("embedding dimension must be positive".into()));
        }
        for (row, r) in values.rows().into_iter().enumerate() {
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("non-finite value in row {row}")));
            }
            if r.dot(&r) <= 0.0 {
                return Err(Error::ZeroNorm { row });
            }
        }
        Ok(Self(values))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.0.row(i)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}
