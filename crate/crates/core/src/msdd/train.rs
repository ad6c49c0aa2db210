//! Supervised training of the decoder on two-speaker sessions.
//!
//! Sessions are cut into fixed-length step windows (the final window of a
//! session is right-aligned so no step is dropped), each window is presented
//! in both speaker orders, and windows of equal length are batched. Every
//! epoch ends with a full-length validation pass; the parameters with the
//! best validation F1 are kept and training stops after `patience` epochs
//! without improvement.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{backward, build_batch, forward, MsddConfig, MsddParameters, PairWindow};
use super::{cluster_average, dominant_labels, make_labels, profile_cosines};
use crate::clusterer::{cluster_session, init_scale_weights, NmeConfig};
use crate::error::{Error, Result};
use crate::neuralkit::ops::{bce_grad, bce_loss};
use crate::neuralkit::{adam_update, AdamConfig, AdamState, Params};
use crate::synthembed::SessionEmbeddings;
use crate::types::SpeakerTimeline;

/// Where the training-time speaker profiles come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileSource {
    /// Averages over the reference speaker labels.
    Oracle,
    /// Averages over NME-SC labels matched to the reference speakers.
    Clustering,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    /// Sequences per batch.
    pub batch_size: usize,
    /// Steps per training window.
    pub chunk_len: usize,
    pub adam: AdamConfig,
    /// Global gradient-norm ceiling; non-positive disables clipping.
    pub grad_clip: f64,
    pub seed: u64,
    pub profile_source: ProfileSource,
    /// Clustering weight ratio used when profiles come from clustering.
    pub scale_weight_ratio: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 20,
            patience: 3,
            batch_size: 32,
            chunk_len: 50,
            adam: AdamConfig::default(),
            grad_clip: 5.0,
            seed: 0,
            profile_source: ProfileSource::Oracle,
            scale_weight_ratio: 1.0,
        }
    }
}

/// A two-speaker session prepared for training or validation.
#[derive(Debug, Clone)]
pub struct TrainingSession {
    pub data: SessionEmbeddings,
    /// `(K, N_e)` profile per speaker, in sorted reference speaker order.
    pub profiles: [Array2<f64>; 2],
    /// `(N, K)` step-to-profile cosines per speaker.
    pub cosines: [Array2<f64>; 2],
    /// `(N, 2)` binary activity targets.
    pub targets: Array2<f64>,
}

impl TrainingSession {
    pub fn new(
        reference: &SpeakerTimeline,
        data: SessionEmbeddings,
        source: ProfileSource,
        scale_weight_ratio: f64,
    ) -> Result<Self> {
        let speakers = reference.speakers();
        if speakers.len() != 2 {
            return Err(Error::NotTwoSpeakers {
                session: data.session_id.clone(),
                found: speakers.len(),
            });
        }
        let base = data.segments.base_segments();
        let truth = dominant_labels(reference, base, &speakers);
        let labels = match source {
            ProfileSource::Oracle => truth,
            ProfileSource::Clustering => {
                let w = init_scale_weights(scale_weight_ratio, data.embeddings.len())?;
                let nme = NmeConfig {
                    max_speakers: 2,
                    ..NmeConfig::default()
                };
                let c = cluster_session(&data, &w, &nme)?;
                if c.num_speakers != 2 {
                    return Err(Error::InvalidArgument(format!(
                        "clustering found {} speakers in two-speaker session {}",
                        c.num_speakers, data.session_id
                    )));
                }
                let agree = c.labels.iter().zip(&truth).filter(|(a, b)| a == b).count();
                if 2 * agree >= truth.len() {
                    c.labels
                } else {
                    c.labels.iter().map(|&l| 1 - l).collect()
                }
            }
        };
        let profile = cluster_average(&data, &labels, 2)?;
        let [p0, p1]: [Array2<f64>; 2] = profile.v.try_into().expect("two profiles");
        let cosines = [profile_cosines(&data, &p0)?, profile_cosines(&data, &p1)?];
        let mut targets = Array2::<f64>::zeros((base.len(), 2));
        for (s, spk) in speakers.iter().enumerate() {
            for (i, t) in make_labels(reference, base, spk).into_iter().enumerate() {
                targets[[i, s]] = t;
            }
        }
        Ok(Self {
            data,
            profiles: [p0, p1],
            cosines,
            targets,
        })
    }

    pub fn num_steps(&self) -> usize {
        self.data.num_base()
    }

    fn window(&self, start: usize, swap: bool) -> PairWindow<'_> {
        let (a, b) = if swap { (1, 0) } else { (0, 1) };
        PairWindow {
            data: &self.data,
            profiles: [&self.profiles[a], &self.profiles[b]],
            cosines: [&self.cosines[a], &self.cosines[b]],
            start,
        }
    }

    fn targets_of(&self, start: usize, swap: bool, t: usize) -> [f64; 2] {
        let row = self.targets.row(start + t);
        if swap {
            [row[1], row[0]]
        } else {
            [row[0], row[1]]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_f1: f64,
    pub best_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_f1: f64,
}

#[derive(Debug, Clone, Copy)]
struct Chunk {
    session: usize,
    start: usize,
    swap: bool,
}

/// Window starts covering `n` steps with windows of `len` (last one right-aligned).
fn chunk_starts(n: usize, len: usize) -> Vec<usize> {
    if n <= len {
        return vec![0];
    }
    let mut starts: Vec<usize> = (0..=n - len).step_by(len).collect();
    if starts.last() != Some(&(n - len)) {
        starts.push(n - len);
    }
    starts
}

fn batches(sessions: &[TrainingSession], cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Vec<(usize, Vec<Chunk>)> {
    let mut by_len: BTreeMap<usize, Vec<Chunk>> = BTreeMap::new();
    for (si, s) in sessions.iter().enumerate() {
        let n = s.num_steps();
        let len = n.min(cfg.chunk_len);
        for start in chunk_starts(n, cfg.chunk_len) {
            for swap in [false, true] {
                by_len.entry(len).or_default().push(Chunk {
                    session: si,
                    start,
                    swap,
                });
            }
        }
    }
    let mut out = Vec::new();
    for (len, mut chunks) in by_len {
        chunks.shuffle(rng);
        for group in chunks.chunks(cfg.batch_size.max(1)) {
            out.push((len, group.to_vec()));
        }
    }
    out.shuffle(rng);
    out
}

fn clip_gradients(grads: &mut MsddParameters, max_norm: f64) {
    if !(max_norm > 0.0) {
        return;
    }
    let mut sq = 0.0;
    grads.visit("", &mut |_, _, d| sq += d.iter().map(|x| x * x).sum::<f64>());
    let norm = sq.sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.visit_mut("", &mut |_, d| d.iter_mut().for_each(|x| *x *= s));
    }
}

/// Binary F1 over both speakers of every step, predictions thresholded at 0.5.
pub fn f1_score(pred: &[f64], target: &[f64]) -> f64 {
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&p, &t) in pred.iter().zip(target) {
        match (p > 0.5, t > 0.5) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            _ => {}
        }
    }
    if tp == 0 {
        return if fp == 0 && fneg == 0 { 1.0 } else { 0.0 };
    }
    2.0 * tp as f64 / (2 * tp + fp + fneg) as f64
}

/// Full-length posteriors `(N, 2)` of a prepared session in reference order.
pub fn session_posteriors(params: &MsddParameters, s: &TrainingSession) -> Result<Array2<f64>> {
    let batch = build_batch(&[s.window(0, false)], s.num_steps())?;
    Ok(forward(params, &batch)?.probs)
}

/// Validation F1 pooled over all sessions.
pub fn validation_f1(params: &MsddParameters, sessions: &[TrainingSession]) -> Result<f64> {
    let mut pred = Vec::new();
    let mut target = Vec::new();
    for s in sessions {
        let p = session_posteriors(params, s)?;
        pred.extend(p.iter().copied());
        target.extend(s.targets.iter().copied());
    }
    Ok(f1_score(&pred, &target))
}

pub fn train(
    train_set: &[TrainingSession],
    validation: &[TrainingSession],
    model: MsddConfig,
    cfg: &TrainConfig,
) -> Result<(MsddParameters, TrainReport)> {
    train_with(train_set, validation, model, cfg, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with(
    train_set: &[TrainingSession],
    validation: &[TrainingSession],
    model: MsddConfig,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(MsddParameters, TrainReport)> {
    if train_set.is_empty() || validation.is_empty() {
        return Err(Error::Empty("training and validation sets must be non-empty".into()));
    }
    for s in train_set.iter().chain(validation) {
        if s.data.embeddings.len() != model.num_scales || s.data.dim() != model.emb_dim {
            return Err(Error::ShapeMismatch(format!(
                "session {} has K={}, N_e={}; decoder expects K={}, N_e={}",
                s.data.session_id,
                s.data.embeddings.len(),
                s.data.dim(),
                model.num_scales,
                model.emb_dim
            )));
        }
    }
    let mut params = MsddParameters::init(model, cfg.seed)?;
    let mut adam = AdamState::new(params.num_params());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_ba7c);
    let mut best = params.clone();
    let mut report = TrainReport {
        epochs: Vec::new(),
        best_epoch: 0,
        best_f1: f64::NEG_INFINITY,
    };
    let mut stale = 0;
    for epoch in 1..=cfg.max_epochs.max(1) {
        let mut loss_sum = 0.0;
        let mut loss_n = 0usize;
        for (len, chunks) in batches(train_set, cfg, &mut rng) {
            let windows: Vec<PairWindow<'_>> = chunks
                .iter()
                .map(|c| train_set[c.session].window(c.start, c.swap))
                .collect();
            let batch = build_batch(&windows, len)?;
            let mut targets = vec![0.0; batch.rows() * 2];
            for t in 0..len {
                for (b, c) in chunks.iter().enumerate() {
                    let y = train_set[c.session].targets_of(c.start, c.swap, t);
                    let r = t * batch.batch + b;
                    targets[2 * r] = y[0];
                    targets[2 * r + 1] = y[1];
                }
            }
            let cache = forward(&params, &batch)?;
            let probs = cache.probs.as_slice().expect("standard layout");
            let loss = bce_loss(probs, &targets);
            let d_probs = Array2::from_shape_vec(cache.probs.raw_dim(), bce_grad(probs, &targets))
                .expect("matching shape");
            let mut grads = backward(&params, &batch, &cache, &d_probs);
            clip_gradients(&mut grads, cfg.grad_clip);
            adam_update(&mut params, &grads, &mut adam, &cfg.adam);
            loss_sum += loss * targets.len() as f64;
            loss_n += targets.len();
        }
        let val_f1 = validation_f1(&params, validation)?;
        if val_f1 > report.best_f1 {
            report.best_f1 = val_f1;
            report.best_epoch = epoch;
            best = params.clone();
            stale = 0;
        } else {
            stale += 1;
        }
        let stats = EpochStats {
            epoch,
            train_loss: loss_sum / loss_n.max(1) as f64,
            val_f1,
            best_f1: report.best_f1,
        };
        on_epoch(&stats);
        report.epochs.push(stats);
        if stale >= cfg.patience.max(1) {
            break;
        }
    }
    best.round_to_f32();
    Ok((best, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthembed::{gen_session, SynthConfig};

    #[test]
    fn chunk_layout() {
        assert_eq!(chunk_starts(30, 50), vec![0]);
        assert_eq!(chunk_starts(100, 50), vec![0, 50]);
        assert_eq!(chunk_starts(120, 50), vec![0, 50, 70]);
    }

    #[test]
    fn f1_examples() {
        assert_eq!(f1_score(&[0.9, 0.1], &[1.0, 0.0]), 1.0);
        assert_eq!(f1_score(&[0.9, 0.9], &[1.0, 0.0]), 2.0 / 3.0);
        assert_eq!(f1_score(&[0.1, 0.1], &[0.0, 0.0]), 1.0);
        assert_eq!(f1_score(&[0.5], &[1.0]), 0.0);
    }

    fn prepared(num_speakers: usize, seed: u64) -> Result<TrainingSession> {
        let s = gen_session(&SynthConfig {
            num_speakers,
            seed,
            dim: 16,
            session_duration: 20.0,
            ..SynthConfig::default()
        })?;
        TrainingSession::new(&s.timeline, s.data, ProfileSource::Oracle, 1.0)
    }

    #[test]
    fn rejects_non_two_speaker_sessions() {
        assert!(matches!(prepared(3, 1), Err(Error::NotTwoSpeakers { found: 3, .. })));
        assert!(prepared(2, 1).is_ok());
    }

    #[test]
    fn tiny_training_is_deterministic_and_learns() {
        let train_set: Vec<_> = (0..4).map(|i| prepared(2, i).unwrap()).collect();
        let val: Vec<_> = (10..12).map(|i| prepared(2, i).unwrap()).collect();
        let model = MsddConfig {
            lstm_hidden: 8,
            cnn_hidden: 8,
            cnn_channels: 4,
            ..MsddConfig::new(5, 16)
        };
        let cfg = TrainConfig {
            max_epochs: 3,
            batch_size: 4,
            adam: AdamConfig {
                lr: 1e-2,
                ..AdamConfig::default()
            },
            ..TrainConfig::default()
        };
        let (a, ra) = train(&train_set, &val, model, &cfg).unwrap();
        let (b, rb) = train(&train_set, &val, model, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        let first = ra.epochs[0].train_loss;
        assert!(first < std::f64::consts::LN_2 + 0.05, "{first}");
        assert!(ra.epochs.iter().all(|e| e.best_f1 >= e.val_f1));
        assert!(ra.epochs.windows(2).all(|w| w[1].best_f1 >= w[0].best_f1));
    }
}
