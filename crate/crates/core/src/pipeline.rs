//! Declarative run configuration and the per-session diarization driver
//! shared by the command-line tool and the C interface.
//!
//! A configuration is one TOML document. Missing keys take their defaults;
//! environment variables named `MSDD_<SECTION>__<KEY>` override keys before
//! deserialization, so `MSDD_DECODER__THRESHOLD=0.6` sets `decoder.threshold`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::clusterer::{cluster_session, init_scale_weights, ClusteringResult, KMeansConfig, NmeConfig};
use crate::error::{Error, Result};
use crate::msdd::infer::Decoded;
use crate::msdd::{infer, labels_timeline, InferConfig, MsddConfig, MsddParameters, TrainConfig};
use crate::neuralkit::checkpoint::{load_checkpoint, save_checkpoint};
use crate::synthembed::{SessionEmbeddings, SynthConfig, MAX_SPEAKERS};
use crate::types::{ScaleConfig, SpeakerTimeline};

pub const ENV_PREFIX: &str = "MSDD_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub scales: ScaleSection,
    pub synth: SynthSection,
    pub clustering: ClusteringSection,
    pub decoder: DecoderSection,
    pub model: ModelSection,
    pub training: TrainConfig,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            scales: ScaleSection::default(),
            synth: SynthSection::default(),
            clustering: ClusteringSection::default(),
            decoder: DecoderSection::default(),
            model: ModelSection::default(),
            training: TrainConfig::default(),
            jobs: 0,
        }
    }
}

/// Either a named preset or explicit window lengths, never both; neither
/// selects the telephonic preset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaleSection {
    pub preset: Option<String>,
    pub windows: Option<Vec<f64>>,
    /// Defaults to half of each window.
    pub hops: Option<Vec<f64>>,
}

impl ScaleSection {
    pub fn resolve(&self) -> Result<ScaleConfig> {
        match (&self.preset, &self.windows) {
            (Some(_), Some(_)) => Err(Error::Config(
                "scales.preset and scales.windows are mutually exclusive".into(),
            )),
            (Some(name), None) => {
                if self.hops.is_some() {
                    return Err(Error::Config("scales.hops requires scales.windows".into()));
                }
                ScaleConfig::preset(name).ok_or_else(|| {
                    Error::Config(format!("unknown scale preset {name:?} (telephonic | meeting)"))
                })
            }
            (None, Some(windows)) => match &self.hops {
                Some(hops) => ScaleConfig::with_hops(windows.clone(), hops.clone()),
                None => ScaleConfig::new(windows.clone()),
            },
            (None, None) => match self.hops {
                Some(_) => Err(Error::Config("scales.hops requires scales.windows".into())),
                None => Ok(ScaleConfig::telephonic()),
            },
        }
    }
}

/// Corpus generation: session `i` uses seed `seed + i` and
/// `min_speakers + i mod (max_speakers - min_speakers + 1)` speakers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub sessions: usize,
    pub seed: u64,
    pub prefix: String,
    pub min_speakers: usize,
    pub max_speakers: usize,
    pub dim: usize,
    pub session_duration: f64,
    pub overlap_fraction: f64,
    pub base_noise_sigma: f64,
    pub scale_noise_exponent: f64,
    pub min_centroid_angle: f64,
    pub turn_min: f64,
    pub turn_max: f64,
    pub pause_probability: f64,
    pub pause_min: f64,
    pub pause_max: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        let d = SynthConfig::default();
        Self {
            sessions: 10,
            seed: 0,
            prefix: "session".into(),
            min_speakers: 2,
            max_speakers: 2,
            dim: d.dim,
            session_duration: d.session_duration,
            overlap_fraction: d.overlap_fraction,
            base_noise_sigma: d.base_noise_sigma,
            scale_noise_exponent: d.scale_noise_exponent,
            min_centroid_angle: d.min_centroid_angle,
            turn_min: d.turn_min,
            turn_max: d.turn_max,
            pause_probability: d.pause_probability,
            pause_min: d.pause_min,
            pause_max: d.pause_max,
        }
    }
}

impl SynthSection {
    pub fn session_name(&self, index: usize) -> String {
        format!("{}_{index:04}", self.prefix)
    }

    /// Generator settings of session `index`.
    pub fn session(&self, index: usize, scales: &ScaleConfig) -> Result<SynthConfig> {
        if self.min_speakers > self.max_speakers {
            return Err(Error::Config(format!(
                "synth.min_speakers {} exceeds synth.max_speakers {}",
                self.min_speakers, self.max_speakers
            )));
        }
        let span = self.max_speakers - self.min_speakers + 1;
        let cfg = SynthConfig {
            session_id: self.session_name(index),
            num_speakers: self.min_speakers + index % span,
            dim: self.dim,
            session_duration: self.session_duration,
            overlap_fraction: self.overlap_fraction,
            base_noise_sigma: self.base_noise_sigma,
            scale_noise_exponent: self.scale_noise_exponent,
            min_centroid_angle: self.min_centroid_angle,
            seed: self.seed.wrapping_add(index as u64),
            scales: scales.clone(),
            turn_min: self.turn_min,
            turn_max: self.turn_max,
            pause_probability: self.pause_probability,
            pause_min: self.pause_min,
            pause_max: self.pause_max,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringSection {
    /// Ratio between the coarsest and the base scale weight; 1 gives equal weights.
    pub r: f64,
    pub max_speakers: usize,
    pub max_neighbors: usize,
    pub kmeans_restarts: usize,
    pub kmeans_max_iter: usize,
    pub seed: u64,
}

impl Default for ClusteringSection {
    fn default() -> Self {
        let nme = NmeConfig::default();
        Self {
            r: 1.0,
            max_speakers: nme.max_speakers,
            max_neighbors: nme.max_neighbors,
            kmeans_restarts: nme.kmeans.restarts,
            kmeans_max_iter: nme.kmeans.max_iter,
            seed: nme.kmeans.seed,
        }
    }
}

impl ClusteringSection {
    pub fn nme(&self) -> NmeConfig {
        NmeConfig {
            max_speakers: self.max_speakers,
            max_neighbors: self.max_neighbors,
            kmeans: KMeansConfig {
                max_iter: self.kmeans_max_iter,
                restarts: self.kmeans_restarts,
                seed: self.seed,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Clustering,
    Msdd,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clustering" => Ok(Mode::Clustering),
            "msdd" => Ok(Mode::Msdd),
            _ => Err(Error::Config(format!("unknown mode {s:?} (clustering | msdd)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderSection {
    pub mode: Mode,
    pub threshold: f64,
    pub checkpoint: Option<PathBuf>,
}

impl Default for DecoderSection {
    fn default() -> Self {
        Self {
            mode: Mode::Msdd,
            threshold: InferConfig::default().threshold,
            checkpoint: None,
        }
    }
}

/// Network sizes; the scale count and embedding width come from the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub cnn_channels: usize,
    pub cnn_hidden: usize,
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = MsddConfig::new(1, 1);
        Self {
            cnn_channels: m.cnn_channels,
            cnn_hidden: m.cnn_hidden,
            lstm_hidden: m.lstm_hidden,
            lstm_layers: m.lstm_layers,
        }
    }
}

impl ModelSection {
    pub fn config(&self, num_scales: usize, emb_dim: usize) -> MsddConfig {
        MsddConfig {
            cnn_channels: self.cnn_channels,
            cnn_hidden: self.cnn_hidden,
            lstm_hidden: self.lstm_hidden,
            lstm_layers: self.lstm_layers,
            ..MsddConfig::new(num_scales, emb_dim)
        }
    }
}

impl PipelineConfig {
    /// Parses `text`, applies `MSDD_` overrides from `vars`, then validates.
    pub fn from_toml_with_env<I>(text: &str, vars: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        apply_env_overrides(&mut table, vars)?;
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads the file at `path` (defaults when `None`) with process overrides.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        Self::from_toml_with_env(&text, std::env::vars())
    }

    pub fn validate(&self) -> Result<()> {
        self.scales.resolve()?;
        let bad = |m: String| Err(Error::Config(m));
        if !(1..=MAX_SPEAKERS).contains(&self.clustering.max_speakers) {
            return bad(format!(
                "clustering.max_speakers {} outside 1..={MAX_SPEAKERS}",
                self.clustering.max_speakers
            ));
        }
        init_scale_weights(self.clustering.r, 2)
            .map_err(|_| Error::Config(format!("clustering.r {} must be positive", self.clustering.r)))?;
        if !(self.decoder.threshold > 0.0 && self.decoder.threshold < 1.0) {
            return bad(format!("decoder.threshold {} must lie in (0, 1)", self.decoder.threshold));
        }
        for (name, n) in [
            ("synth.min_speakers", self.synth.min_speakers),
            ("synth.max_speakers", self.synth.max_speakers),
        ] {
            if !(1..=MAX_SPEAKERS).contains(&n) {
                return bad(format!("{name} {n} outside 1..={MAX_SPEAKERS}"));
            }
        }
        if self.synth.min_speakers > self.synth.max_speakers {
            return bad("synth.min_speakers exceeds synth.max_speakers".into());
        }
        Ok(())
    }

    pub fn infer_config(&self) -> InferConfig {
        InferConfig {
            threshold: self.decoder.threshold,
            max_speakers: self.clustering.max_speakers,
        }
    }
}

/// Parses an override value as a TOML literal, falling back to a bare string.
fn override_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

pub fn apply_env_overrides<I>(table: &mut toml::Table, vars: I) -> Result<()>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut vars: Vec<(String, String)> = vars
        .into_iter()
        .filter(|(k, _)| k.starts_with(ENV_PREFIX))
        .collect();
    vars.sort();
    for (key, raw) in vars {
        let path: Vec<String> = key[ENV_PREFIX.len()..]
            .split("__")
            .map(str::to_ascii_lowercase)
            .collect();
        if path.iter().any(String::is_empty) {
            return Err(Error::Config(format!("malformed override variable {key}")));
        }
        let (leaf, parents) = path.split_last().expect("non-empty path");
        let mut node = &mut *table;
        for p in parents {
            let entry = node
                .entry(p.clone())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            node = entry
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("{key}: {p} is not a section")))?;
        }
        node.insert(leaf.clone(), override_value(&raw));
    }
    Ok(())
}

/// Metadata stored alongside trained parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelCard {
    pub model: MsddConfig,
    pub scales: ScaleConfig,
    pub training: TrainConfig,
    pub best_epoch: usize,
    pub best_f1: f64,
}

pub fn save_model(path: &Path, params: &MsddParameters, card: &ModelCard) -> Result<()> {
    save_checkpoint(path, params, card)
}

pub fn load_model(path: &Path) -> Result<(MsddParameters, ModelCard)> {
    load_checkpoint(path, |card: &ModelCard| MsddParameters::zeros(card.model))
}

#[derive(Debug, Clone)]
pub struct SessionDiarization {
    pub clustering: ClusteringResult,
    /// Present in decoder mode.
    pub decoded: Option<Decoded>,
    pub timeline: SpeakerTimeline,
}

/// Clustering, then the decoder when `model` is given.
pub fn diarize_session(
    data: &SessionEmbeddings,
    cfg: &PipelineConfig,
    model: Option<(&MsddParameters, &ScaleConfig)>,
) -> Result<SessionDiarization> {
    let scales = cfg.scales.resolve()?;
    if data.scale_config() != &scales {
        return Err(Error::ScaleMismatch(format!(
            "session {} was segmented with windows {:?}, config expects {:?}",
            data.session_id,
            data.scale_config().windows(),
            scales.windows()
        )));
    }
    let weights = init_scale_weights(cfg.clustering.r, scales.num_scales())?;
    let clustering = cluster_session(data, &weights, &cfg.clustering.nme())?;
    let Some((params, trained_scales)) = model else {
        let timeline = labels_timeline(data, &clustering.labels, clustering.num_speakers);
        return Ok(SessionDiarization {
            clustering,
            decoded: None,
            timeline,
        });
    };
    let mc = params.config;
    if mc.num_scales != scales.num_scales() || mc.emb_dim != data.dim() {
        return Err(Error::ShapeMismatch(format!(
            "checkpoint expects {} scales of width {}, session {} has {} of width {}",
            mc.num_scales,
            mc.emb_dim,
            data.session_id,
            scales.num_scales(),
            data.dim()
        )));
    }
    if trained_scales != &scales {
        return Err(Error::ScaleMismatch(format!(
            "checkpoint trained on windows {:?}, config expects {:?}",
            trained_scales.windows(),
            scales.windows()
        )));
    }
    let decoded = infer(params, data, &clustering, &cfg.infer_config())?;
    let timeline = decoded.timeline.clone();
    Ok(SessionDiarization {
        clustering,
        decoded: Some(decoded),
        timeline,
    })
}

/// Mean and standard deviation of every scale weight over all decoded steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSummary {
    pub steps: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub fn weight_summary(decoded: &Decoded) -> Option<WeightSummary> {
    let k = decoded.pairs.first()?.scale_weights.ncols();
    let mut sum = vec![0.0; k];
    let mut sq = vec![0.0; k];
    let mut steps = 0;
    for pair in &decoded.pairs {
        for row in pair.scale_weights.rows() {
            for (j, &w) in row.iter().enumerate() {
                sum[j] += w;
                sq[j] += w * w;
            }
            steps += 1;
        }
    }
    let n = steps as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let std = sq
        .iter()
        .zip(&mean)
        .map(|(q, m)| (q / n - m * m).max(0.0).sqrt())
        .collect();
    Some(WeightSummary { steps, mean, std })
}
