//! Pairwise inference for any number of clustered speakers.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::model::{build_batch, forward, MsddParameters, PairWindow};
use super::{activity_timeline, cluster_average, hypothesis_speakers, labels_timeline, profile_cosines};
use crate::clusterer::ClusteringResult;
use crate::error::{Error, Result};
use crate::synthembed::SessionEmbeddings;
use crate::types::SpeakerTimeline;

/// Pairs decoded in one batch.
const PAIRS_PER_BATCH: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferConfig {
    pub threshold: f64,
    pub max_speakers: usize,
}

impl Default for InferConfig {
    fn default() -> Self {
        Self {
            threshold: 0.7,
            max_speakers: 8,
        }
    }
}

/// Speaker posteriors `p[[s, i]]`, each the mean over the speaker's pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorGrid {
    pub p: Array2<f64>,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairOutput {
    pub speakers: (usize, usize),
    /// `(N, 2)` sigmoid outputs for the two speakers.
    pub posteriors: Array2<f64>,
    /// `(N, K)` scale weights of every step.
    pub scale_weights: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    /// `None` when clustering found a single speaker.
    pub posteriors: Option<PosteriorGrid>,
    pub pairs: Vec<PairOutput>,
    /// `active[s][i]`.
    pub active: Vec<Vec<bool>>,
    pub timeline: SpeakerTimeline,
}

pub fn infer(
    params: &MsddParameters,
    data: &SessionEmbeddings,
    clustering: &ClusteringResult,
    cfg: &InferConfig,
) -> Result<Decoded> {
    let s_count = clustering.num_speakers;
    if s_count > cfg.max_speakers {
        return Err(Error::TooManySpeakers {
            got: s_count,
            max: cfg.max_speakers,
        });
    }
    if !(cfg.threshold > 0.0 && cfg.threshold < 1.0) {
        return Err(Error::InvalidArgument(format!("threshold {} must lie in (0, 1)", cfg.threshold)));
    }
    let n = data.num_base();
    if clustering.labels.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} clustering labels for {n} base segments",
            clustering.labels.len()
        )));
    }
    if s_count <= 1 {
        let active = vec![vec![true; n]];
        return Ok(Decoded {
            posteriors: None,
            pairs: Vec::new(),
            active,
            timeline: labels_timeline(data, &clustering.labels, 1),
        });
    }
    let profile = cluster_average(data, &clustering.labels, s_count)?;
    let cosines = profile
        .v
        .iter()
        .map(|v| profile_cosines(data, v))
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(usize, usize)> = (0..s_count)
        .flat_map(|a| (a + 1..s_count).map(move |b| (a, b)))
        .collect();
    let k = data.embeddings.len();
    let mut outputs = Vec::with_capacity(pairs.len());
    for group in pairs.chunks(PAIRS_PER_BATCH) {
        let windows: Vec<PairWindow<'_>> = group
            .iter()
            .map(|&(a, b)| PairWindow {
                data,
                profiles: [&profile.v[a], &profile.v[b]],
                cosines: [&cosines[a], &cosines[b]],
                start: 0,
            })
            .collect();
        let batch = build_batch(&windows, n)?;
        let cache = forward(params, &batch)?;
        let width = group.len();
        for (b, &pair) in group.iter().enumerate() {
            let mut posteriors = Array2::<f64>::zeros((n, 2));
            let mut scale_weights = Array2::<f64>::zeros((n, k));
            for i in 0..n {
                let r = i * width + b;
                posteriors.row_mut(i).assign(&cache.probs.row(r));
                scale_weights.row_mut(i).assign(&cache.weights.row(r));
            }
            outputs.push(PairOutput {
                speakers: pair,
                posteriors,
                scale_weights,
            });
        }
    }

    let mut sum = Array2::<f64>::zeros((s_count, n));
    for out in &outputs {
        let (a, b) = out.speakers;
        for i in 0..n {
            sum[[a, i]] += out.posteriors[[i, 0]];
            sum[[b, i]] += out.posteriors[[i, 1]];
        }
    }
    let p = sum / (s_count - 1) as f64;
    let mut active = vec![vec![false; n]; s_count];
    for i in 0..n {
        let mut any = false;
        for (s, row) in active.iter_mut().enumerate() {
            if p[[s, i]] > cfg.threshold {
                row[i] = true;
                any = true;
            }
        }
        if !any {
            active[clustering.labels[i]][i] = true;
        }
    }
    let timeline = activity_timeline(data, &active, &hypothesis_speakers(s_count));
    Ok(Decoded {
        posteriors: Some(PosteriorGrid {
            p,
            threshold: cfg.threshold,
        }),
        pairs: outputs,
        active,
        timeline,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clusterer::{cluster_session, init_scale_weights, NmeConfig};
    use crate::msdd::model::MsddConfig;
    use crate::synthembed::{gen_session, SynthConfig};

    fn setup(num_speakers: usize) -> (SessionEmbeddings, ClusteringResult) {
        let s = gen_session(&SynthConfig {
            num_speakers,
            dim: 16,
            session_duration: 20.0,
            overlap_fraction: 0.0,
            seed: 4,
            ..SynthConfig::default()
        })
        .unwrap();
        let w = init_scale_weights(1.0, 5).unwrap();
        let c = cluster_session(&s.data, &w, &NmeConfig::default()).unwrap();
        (s.data, c)
    }

    #[test]
    fn two_speakers_use_the_raw_pair_output() {
        let (data, mut c) = setup(2);
        c.num_speakers = 2;
        c.labels = (0..data.num_base()).map(|i| usize::from(i % 3 == 0)).collect();
        let params = MsddParameters::init(MsddConfig { lstm_hidden: 6, ..MsddConfig::new(5, 16) }, 1).unwrap();
        let out = infer(&params, &data, &c, &InferConfig::default()).unwrap();
        let grid = out.posteriors.unwrap();
        let pair = &out.pairs[0];
        for i in 0..data.num_base() {
            assert_eq!(grid.p[[0, i]], pair.posteriors[[i, 0]]);
            assert_eq!(grid.p[[1, i]], pair.posteriors[[i, 1]]);
        }
    }

    #[test]
    fn falls_back_to_clustering_labels_below_threshold() {
        let (data, mut c) = setup(2);
        c.num_speakers = 3;
        c.labels = (0..data.num_base()).map(|i| i % 3).collect();
        let params = MsddParameters::zeros(MsddConfig::new(5, 16)).unwrap();
        let out = infer(&params, &data, &c, &InferConfig::default()).unwrap();
        assert_eq!(out.pairs.len(), 3);
        for i in 0..data.num_base() {
            for s in 0..3 {
                assert_eq!(out.active[s][i], s == c.labels[i]);
            }
        }
        assert!(out.timeline.speakers().len() <= 3);
    }

    #[test]
    fn single_speaker_passes_clustering_through() {
        let (data, mut c) = setup(1);
        c.num_speakers = 1;
        c.labels = vec![0; data.num_base()];
        let params = MsddParameters::zeros(MsddConfig::new(5, 16)).unwrap();
        let out = infer(&params, &data, &c, &InferConfig::default()).unwrap();
        assert!(out.posteriors.is_none());
        assert_eq!(out.timeline, labels_timeline(&data, &c.labels, 1));
    }

    #[test]
    fn too_many_speakers() {
        let (data, mut c) = setup(2);
        c.num_speakers = 9;
        let params = MsddParameters::zeros(MsddConfig::new(5, 16)).unwrap();
        assert!(matches!(
            infer(&params, &data, &c, &InferConfig::default()),
            Err(Error::TooManySpeakers { got: 9, max: 8 })
        ));
    }
}
