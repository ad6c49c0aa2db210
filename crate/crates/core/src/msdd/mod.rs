//! Multi-scale diarization decoder.
//!
//! For a pair of speakers the decoder looks, at every base-scale step `i`,
//! at the stack `D_i` of the step's `K` multi-scale embeddings and both
//! speakers' `K` cluster-average profiles. A small 1-D CNN turns `D_i` into
//! softmax scale weights `w_i`, the per-speaker context vector is
//! `c^s_i[k] = w_{i,k} · cos(v^s_k, u_{i,k})`, and a two-layer BiLSTM over the
//! sequence of `[c^1_i; c^2_i]` emits one independent sigmoid per speaker.
//! Sessions with more than two speakers are decoded pair by pair and each
//! speaker's posterior is the mean over the pairs that contain it.

pub mod infer;
pub mod model;
pub mod train;

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::synthembed::SessionEmbeddings;
use crate::types::{overlap_with_sorted, SpeakerTimeline, TimeInterval};

pub use infer::{infer, InferConfig, PosteriorGrid};
pub use model::{MsddConfig, MsddParameters};
pub use train::{train, EpochStats, ProfileSource, TrainConfig, TrainReport, TrainingSession};

/// Per-speaker, per-scale cluster-average embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterProfile {
    /// `v[s]` is a `(K, N_e)` matrix whose row `k` is speaker `s` at scale `k`.
    pub v: Vec<Array2<f64>>,
}

impl ClusterProfile {
    pub fn num_speakers(&self) -> usize {
        self.v.len()
    }

    pub fn num_scales(&self) -> usize {
        self.v.first().map_or(0, Array2::nrows)
    }

    pub fn pair(&self, a: usize, b: usize) -> [&Array2<f64>; 2] {
        [&self.v[a], &self.v[b]]
    }
}

/// Mean scale-k embedding over the base steps carrying each label. A coarse
/// segment shared by several base steps counts once per step.
pub fn cluster_average(
    data: &SessionEmbeddings,
    labels: &[usize],
    num_speakers: usize,
) -> Result<ClusterProfile> {
    let groups = &data.segments.group_map;
    if labels.len() != groups.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for {} base segments",
            labels.len(),
            groups.len()
        )));
    }
    let k = data.embeddings.len();
    let dim = data.dim();
    let mut v = vec![Array2::<f64>::zeros((k, dim)); num_speakers];
    let mut counts = vec![0usize; num_speakers];
    for (i, &s) in labels.iter().enumerate() {
        if s >= num_speakers {
            return Err(Error::InvalidArgument(format!(
                "label {s} out of range for {num_speakers} speakers"
            )));
        }
        counts[s] += 1;
        for (scale, emb) in data.embeddings.iter().enumerate() {
            let mut row = v[s].row_mut(scale);
            row += &emb.row(groups[i][scale]);
        }
    }
    for (s, (m, &c)) in v.iter_mut().zip(&counts).enumerate() {
        if c == 0 {
            return Err(Error::EmptyCluster(s));
        }
        *m /= c as f64;
        for (scale, row) in m.rows().into_iter().enumerate() {
            if !(row.dot(&row) > 0.0) {
                return Err(Error::ZeroNorm { row: scale });
            }
        }
    }
    Ok(ClusterProfile { v })
}

/// `D_i`: the `K` input embeddings of step `i`, then speaker one's `K`
/// profile vectors, then speaker two's, as a `(3K, N_e)` matrix.
pub fn stack_input(u: &[ArrayView1<f64>], pair: [&Array2<f64>; 2]) -> Result<Array2<f64>> {
    let k = u.len();
    let dim = u.first().map_or(0, |r| r.len());
    if pair.iter().any(|p| p.dim() != (k, dim)) || u.iter().any(|r| r.len() != dim) {
        return Err(Error::ShapeMismatch(format!(
            "profiles must be {k}x{dim} to stack with the step embeddings"
        )));
    }
    let mut d = Array2::<f64>::zeros((3 * k, dim));
    for (j, r) in u.iter().enumerate() {
        d.row_mut(j).assign(r);
    }
    d.slice_mut(ndarray::s![k..2 * k, ..]).assign(pair[0]);
    d.slice_mut(ndarray::s![2 * k.., ..]).assign(pair[1]);
    Ok(d)
}

/// Step embeddings `u_{i,0..K}` resolved through the group map.
pub fn step_embeddings(data: &SessionEmbeddings, i: usize) -> Vec<ArrayView1<'_, f64>> {
    data.embeddings
        .iter()
        .zip(&data.segments.group_map[i])
        .map(|(emb, &row)| emb.row(row))
        .collect()
}

/// Cosine between every step embedding and a speaker profile: `(N, K)`.
pub fn profile_cosines(data: &SessionEmbeddings, profile: &Array2<f64>) -> Result<Array2<f64>> {
    let n = data.num_base();
    let k = data.embeddings.len();
    let norms: Vec<f64> = profile.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    if let Some(row) = norms.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::ZeroNorm { row });
    }
    let mut out = Array2::<f64>::zeros((n, k));
    for i in 0..n {
        for (scale, u) in step_embeddings(data, i).into_iter().enumerate() {
            let nu = u.dot(&u).sqrt();
            if !(nu > 0.0) {
                return Err(Error::ZeroNorm { row: i });
            }
            out[[i, scale]] = (u.dot(&profile.row(scale)) / (nu * norms[scale])).clamp(-1.0, 1.0);
        }
    }
    Ok(out)
}

/// `c^s[k] = w_k · cos(v^s_k, u_k)` for both speakers, concatenated.
pub fn context_vectors(u: &[ArrayView1<f64>], pair: [&Array2<f64>; 2], w: &[f64]) -> Result<Vec<f64>> {
    let k = u.len();
    if w.len() != k || pair.iter().any(|p| p.nrows() != k) {
        return Err(Error::ShapeMismatch(format!("context needs {k} weights and profile rows")));
    }
    let mut c = Vec::with_capacity(2 * k);
    for p in pair {
        for (j, uj) in u.iter().enumerate() {
            let v = p.row(j);
            let (nu, nv) = (uj.dot(uj).sqrt(), v.dot(&v).sqrt());
            if !(nu > 0.0 && nv > 0.0) {
                return Err(Error::ZeroNorm { row: j });
            }
            c.push(w[j] * (uj.dot(&v) / (nu * nv)).clamp(-1.0, 1.0));
        }
    }
    Ok(c)
}

/// Binary target per base segment: 1 iff the speaker talks for strictly more
/// than half of the segment.
pub fn make_labels(timeline: &SpeakerTimeline, base: &[TimeInterval], speaker: &str) -> Vec<f64> {
    let ivs = timeline.intervals_of(speaker);
    base.iter()
        .map(|seg| {
            if overlap_with_sorted(seg, &ivs) > 0.5 * seg.duration() {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

/// Speaker with the most speech inside each base segment (lowest index on ties).
pub fn dominant_labels(timeline: &SpeakerTimeline, base: &[TimeInterval], speakers: &[String]) -> Vec<usize> {
    let per: Vec<Vec<TimeInterval>> = speakers.iter().map(|s| timeline.intervals_of(s)).collect();
    base.iter()
        .map(|seg| {
            let mut best = (0usize, f64::NEG_INFINITY);
            for (s, ivs) in per.iter().enumerate() {
                let t = overlap_with_sorted(seg, ivs);
                if t > best.1 {
                    best = (s, t);
                }
            }
            best.0
        })
        .collect()
}

/// Time span owned by each base step: bounded by the midpoints to the
/// neighbouring centers and clipped to the step's speech region.
pub fn step_cells(data: &SessionEmbeddings) -> Vec<TimeInterval> {
    let base = data.segments.base_segments();
    let regions = &data.speech_regions;
    let region_of = |seg: &TimeInterval| -> Option<&TimeInterval> {
        let c = seg.center();
        let idx = regions.partition_point(|r| r.offset() < c);
        regions.get(idx).filter(|r| r.onset() <= c)
    };
    let mut cells = Vec::with_capacity(base.len());
    for (i, seg) in base.iter().enumerate() {
        let region = region_of(seg);
        let (lo_bound, hi_bound) = region.map_or((seg.onset(), seg.offset()), |r| (r.onset(), r.offset()));
        let same_region = |j: usize| region_of(&base[j]).map(|r| r.onset()) == region.map(|r| r.onset());
        let lo = if i > 0 && same_region(i - 1) {
            0.5 * (base[i - 1].center() + seg.center())
        } else {
            lo_bound
        };
        let hi = if i + 1 < base.len() && same_region(i + 1) {
            0.5 * (seg.center() + base[i + 1].center())
        } else {
            hi_bound
        };
        cells.push(TimeInterval::new(lo.max(lo_bound), hi.min(hi_bound).max(lo + 1e-9)).expect("ordered cell"));
    }
    cells
}

/// Builds a timeline from per-step activity, `active[s][i]`.
pub fn activity_timeline(
    data: &SessionEmbeddings,
    active: &[Vec<bool>],
    speakers: &[String],
) -> SpeakerTimeline {
    let cells = step_cells(data);
    let mut entries = Vec::new();
    for (s, row) in active.iter().enumerate() {
        for (i, &on) in row.iter().enumerate() {
            if on {
                entries.push((speakers[s].clone(), cells[i]));
            }
        }
    }
    SpeakerTimeline::new(data.session_id.clone(), entries)
}

/// Single-label timeline from clustering output.
pub fn labels_timeline(data: &SessionEmbeddings, labels: &[usize], num_speakers: usize) -> SpeakerTimeline {
    let mut active = vec![vec![false; labels.len()]; num_speakers];
    for (i, &l) in labels.iter().enumerate() {
        active[l][i] = true;
    }
    activity_timeline(data, &active, &hypothesis_speakers(num_speakers))
}

pub fn hypothesis_speakers(num_speakers: usize) -> Vec<String> {
    (0..num_speakers).map(|s| format!("speaker_{s}")).collect()
}
