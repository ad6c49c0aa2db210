//! Uniform multi-scale segmentation of speech regions and nearest-center
//! grouping of coarse-scale segments onto the base scale.

use crate::error::{Error, Result};
use crate::types::{ScaleConfig, TimeInterval};

/// Slack for deciding that a window reaches the end of its region.
const END_EPS: f64 = 1e-9;

/// Segments of every scale plus the base-to-coarse grouping.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiScaleSegmentSet {
    pub scale_config: ScaleConfig,
    /// `per_scale_segments[k]` holds the scale-k segments sorted by onset.
    pub per_scale_segments: Vec<Vec<TimeInterval>>,
    /// `group_map[i][k]` is the scale-k segment grouped with base segment `i`.
    pub group_map: Vec<Vec<usize>>,
}

impl MultiScaleSegmentSet {
    pub fn num_scales(&self) -> usize {
        self.scale_config.num_scales()
    }

    pub fn base_segments(&self) -> &[TimeInterval] {
        &self.per_scale_segments[self.scale_config.base_index()]
    }

    pub fn num_base(&self) -> usize {
        self.base_segments().len()
    }

    pub fn is_empty(&self) -> bool {
        self.num_base() == 0
    }
}

/// Slides a `window` with stride `hop` across `region`.
///
/// Stops at the first window that reaches the region end, clipping it. A
/// trailing piece shorter than `hop` (only possible when `hop` is close to
/// `window`) is absorbed into the previous segment so coverage stays complete.
pub fn uniform_segments(region: &TimeInterval, window: f64, hop: f64) -> Result<Vec<TimeInterval>> {
    if !(window > 0.0 && hop > 0.0 && hop <= window) {
        return Err(Error::InvalidArgument(format!(
            "window {window} / hop {hop} must satisfy 0 < hop <= window"
        )));
    }
    let (onset, offset) = (region.onset(), region.offset());
    if offset - onset <= 0.0 {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for n in 0usize.. {
        let start = onset + n as f64 * hop;
        if start >= offset - END_EPS {
            break;
        }
        let end = start + window;
        if end >= offset - END_EPS {
            if offset - start < hop - END_EPS && !out.is_empty() {
                let prev: TimeInterval = out.pop().expect("non-empty");
                out.push(TimeInterval::new(prev.onset(), offset)?);
            } else {
                out.push(TimeInterval::new(start, offset)?);
            }
            break;
        }
        out.push(TimeInterval::new(start, end)?);
    }
    Ok(out)
}

/// For each base segment, the index of the coarse segment whose center is
/// nearest; ties go to the lower index.
pub fn group_scales(base: &[TimeInterval], coarse: &[TimeInterval]) -> Result<Vec<usize>> {
    if coarse.is_empty() {
        return Err(Error::ScaleMismatch(
            "coarse scale has no segments to group with".into(),
        ));
    }
    let centers: Vec<f64> = coarse.iter().map(TimeInterval::center).collect();
    let sorted = centers.windows(2).all(|w| w[0] <= w[1]);
    Ok(base
        .iter()
        .map(|b| {
            let c = b.center();
            if sorted {
                nearest_sorted(&centers, c)
            } else {
                nearest_scan(&centers, c)
            }
        })
        .collect())
}

fn nearest_scan(centers: &[f64], c: f64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, &x) in centers.iter().enumerate() {
        let d = (x - c).abs();
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    best
}

fn nearest_sorted(centers: &[f64], c: f64) -> usize {
    let right = centers.partition_point(|&x| x < c);
    let mut best = right.min(centers.len() - 1);
    if right > 0 {
        let mut left = right - 1;
        while left > 0 && centers[left - 1] == centers[left] {
            left -= 1;
        }
        if right == centers.len() || (c - centers[left]) <= (centers[right] - c) {
            best = left;
        }
    }
    best
}

/// Segments every speech region at every scale and groups the coarse scales
/// onto the base scale.
pub fn segment_all_scales(regions: &[TimeInterval], cfg: &ScaleConfig) -> Result<MultiScaleSegmentSet> {
    if regions
        .windows(2)
        .any(|w| w[1].onset() < w[0].offset())
    {
        return Err(Error::InvalidArgument(
            "speech regions must be sorted and non-overlapping".into(),
        ));
    }
    let per_scale_segments = cfg
        .windows()
        .iter()
        .zip(cfg.hops())
        .map(|(&w, &h)| {
            let mut segs = Vec::new();
            for r in regions {
                segs.extend(uniform_segments(r, w, h)?);
            }
            Ok(segs)
        })
        .collect::<Result<Vec<_>>>()?;
    let group_map = build_group_map(&per_scale_segments, cfg.base_index())?;
    Ok(MultiScaleSegmentSet {
        scale_config: cfg.clone(),
        per_scale_segments,
        group_map,
    })
}

/// Grouping table for already-segmented scales (base scale last).
pub fn build_group_map(per_scale: &[Vec<TimeInterval>], base_index: usize) -> Result<Vec<Vec<usize>>> {
    let base = &per_scale[base_index];
    if base.is_empty() {
        return Ok(Vec::new());
    }
    let columns = per_scale
        .iter()
        .enumerate()
        .map(|(k, segs)| {
            if k == base_index {
                Ok((0..base.len()).collect())
            } else {
                group_scales(base, segs)
            }
        })
        .collect::<Result<Vec<Vec<usize>>>>()?;
    Ok((0..base.len())
        .map(|i| columns.iter().map(|col| col[i]).collect())
        .collect())
}
