//! Independent reference implementations used by the integration and
//! acceptance tests. Each one takes the slow, obvious route.

#![allow(dead_code)]

use std::collections::BTreeMap;

use msdd_core::scorer::EvalSetup;
use msdd_core::types::{SpeakerTimeline, TimeInterval};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Nearest coarse center by exhaustive scan over every coarse segment; ties
/// resolve to the lowest index.
pub fn nearest_center_bruteforce(base: &[TimeInterval], coarse: &[TimeInterval]) -> Vec<usize> {
    base.iter()
        .map(|b| {
            let c = (b.onset() + b.offset()) / 2.0;
            let mut best = (f64::INFINITY, usize::MAX);
            for (j, s) in coarse.iter().enumerate() {
                let d = ((s.onset() + s.offset()) / 2.0 - c).abs();
                if d < best.0 {
                    best = (d, j);
                }
            }
            best.1
        })
        .collect()
}

/// Number of eigenvalues of symmetric `a` strictly below `sigma`, from the
/// signs of the LDLᵀ pivots of `a - sigma I` (Sylvester's law of inertia).
pub fn count_below(a: &DMatrix<f64>, sigma: f64) -> usize {
    let n = a.nrows();
    let mut m = a.clone();
    for i in 0..n {
        m[(i, i)] -= sigma;
    }
    let mut negatives = 0;
    for k in 0..n {
        let mut pivot = m[(k, k)];
        if pivot == 0.0 {
            pivot = -1e-300;
        }
        if pivot < 0.0 {
            negatives += 1;
        }
        for i in k + 1..n {
            let f = m[(i, k)] / pivot;
            for j in k + 1..n {
                m[(i, j)] -= f * m[(k, j)];
            }
        }
    }
    negatives
}

/// Ascending eigenvalues by bisection on the inertia count.
pub fn eigenvalues_by_bisection(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let bound = (0..n)
        .map(|i| (0..n).map(|j| a[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
        + 1.0;
    (0..n)
        .map(|k| {
            let (mut lo, mut hi) = (-bound, bound);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if count_below(a, mid) > k {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        })
        .collect()
}

const FRAME: f64 = 1e-3;

fn frame_active(ivs: &[TimeInterval], t: f64) -> bool {
    ivs.iter().any(|iv| iv.onset() <= t && t < iv.offset())
}

fn permutations_into(n_hyp: usize, n_ref: usize) -> Vec<Vec<Option<usize>>> {
    // Every partial injective map from hypothesis speakers into reference speakers.
    let mut out = Vec::new();
    let mut current = vec![None; n_hyp];
    let mut used = vec![false; n_ref];
    fn rec(
        h: usize,
        current: &mut Vec<Option<usize>>,
        used: &mut Vec<bool>,
        out: &mut Vec<Vec<Option<usize>>>,
    ) {
        if h == current.len() {
            out.push(current.clone());
            return;
        }
        current[h] = None;
        rec(h + 1, current, used, out);
        for r in 0..used.len() {
            if !used[r] {
                used[r] = true;
                current[h] = Some(r);
                rec(h + 1, current, used, out);
                current[h] = None;
                used[r] = false;
            }
        }
    }
    rec(0, &mut current, &mut used, &mut out);
    out
}

/// DER on a 1 ms frame grid with the speaker mapping found by trying every
/// injective assignment.
pub fn frame_der(reference: &SpeakerTimeline, hypothesis: &SpeakerTimeline, setup: &EvalSetup) -> Option<f64> {
    let refs: Vec<Vec<TimeInterval>> = reference.by_speaker().into_values().collect();
    let hyps: Vec<Vec<TimeInterval>> = hypothesis.by_speaker().into_values().collect();
    let boundaries: Vec<f64> = refs.iter().flatten().flat_map(|iv| [iv.onset(), iv.offset()]).collect();
    let end = refs
        .iter()
        .chain(&hyps)
        .flatten()
        .map(|iv| iv.offset())
        .fold(0.0, f64::max);
    let frames = (end / FRAME).ceil() as usize + 1;

    let mut scored: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    for f in 0..frames {
        let t = (f as f64 + 0.5) * FRAME;
        if setup.collar > 0.0 && boundaries.iter().any(|&b| (t - b).abs() < setup.collar) {
            continue;
        }
        let r: Vec<usize> = (0..refs.len()).filter(|&i| frame_active(&refs[i], t)).collect();
        if setup.ignore_overlap && r.len() >= 2 {
            continue;
        }
        let h: Vec<usize> = (0..hyps.len()).filter(|&i| frame_active(&hyps[i], t)).collect();
        scored.push((r, h));
    }
    let total: usize = scored.iter().map(|(r, _)| r.len()).sum();
    if total == 0 {
        return None;
    }
    let mut best_errors = usize::MAX;
    for map in permutations_into(hyps.len(), refs.len()) {
        let mut errors = 0;
        for (r, h) in &scored {
            let correct = h.iter().filter(|&&x| map[x].is_some_and(|m| r.contains(&m))).count();
            errors += r.len().max(h.len()) - correct;
        }
        best_errors = best_errors.min(errors);
    }
    Some(best_errors as f64 / total as f64)
}

/// A random multi-speaker timeline on `[0, span]` with real-valued times.
pub fn random_timeline(rng: &mut ChaCha8Rng, session: &str, speakers: usize, span: f64, prefix: &str) -> SpeakerTimeline {
    let mut entries = Vec::new();
    for s in 0..speakers {
        let mut t = rng.random_range(0.0..2.0);
        while t < span {
            let len = rng.random_range(0.2..3.0);
            let off = (t + len).min(span);
            if off > t {
                entries.push((format!("{prefix}{s}"), TimeInterval::new(t, off).unwrap()));
            }
            t = off + rng.random_range(0.1..4.0);
        }
    }
    SpeakerTimeline::new(session.to_string(), entries)
}

/// A hypothesis derived from `reference` by jittering boundaries, dropping
/// and relabelling segments, and adding spurious speech.
pub fn perturbed(rng: &mut ChaCha8Rng, reference: &SpeakerTimeline, labels: usize) -> SpeakerTimeline {
    let mut entries = Vec::new();
    for (_, iv) in reference.entries() {
        if rng.random_bool(0.1) {
            continue;
        }
        let on = (iv.onset() + rng.random_range(-0.3..0.3)).max(0.0);
        let off = iv.offset() + rng.random_range(-0.3..0.3);
        if off > on + 1e-3 {
            let label = rng.random_range(0..labels);
            entries.push((format!("h{label}"), TimeInterval::new(on, off).unwrap()));
        }
    }
    for _ in 0..rng.random_range(0..3) {
        let on = rng.random_range(0.0..25.0);
        entries.push((format!("h{}", rng.random_range(0..labels)), TimeInterval::new(on, on + rng.random_range(0.1..1.5)).unwrap()));
    }
    SpeakerTimeline::new(reference.session_id.clone(), entries)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Sessions keyed by id, as the scorer expects.
pub fn by_session(timelines: Vec<SpeakerTimeline>) -> BTreeMap<String, SpeakerTimeline> {
    timelines.into_iter().map(|t| (t.session_id.clone(), t)).collect()
}
