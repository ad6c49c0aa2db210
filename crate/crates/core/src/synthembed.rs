//! Embedding providers: a seeded synthetic session generator and the
//! on-disk archive format for precomputed multi-scale embeddings.
//!
//! The generator draws well-separated unit-norm speaker centroids, lays out
//! alternating speaker turns with pauses and two-speaker overlaps, segments
//! the speech at every scale and emits one embedding per segment: the
//! speech-time weighted mixture of the active centroids plus Gaussian noise
//! whose deviation shrinks as the window grows.
//!
//! # Archive format
//!
//! A session is stored as `<name>.manifest` (TOML) next to `<name>.emb`.
//! The manifest carries `format = "msdd-embeddings"`, `version = 1`,
//! `session_id`, `dim`, `payload` (file name of the binary part),
//! `speech_regions` (list of `[onset, offset]`), and a `[[scales]]` table
//! per scale, coarsest first, each with `window`, `hop`, `rows` and
//! `segments` (list of `[onset, offset]`, one per row). The payload is the
//! concatenation of every scale's row-major matrix as 32-bit little-endian
//! floats, in manifest order.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segmenter::{build_group_map, segment_all_scales, MultiScaleSegmentSet};
use crate::types::{overlap_with_sorted, EmbeddingMatrix, ScaleConfig, SpeakerTimeline, TimeInterval};

pub const ARCHIVE_FORMAT: &str = "msdd-embeddings";
pub const ARCHIVE_VERSION: u32 = 1;
pub const MAX_SPEAKERS: usize = 8;

const CENTROID_ATTEMPTS: usize = 10_000;

/// Multi-scale embeddings of one session, the input of every diarization path.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionEmbeddings {
    pub session_id: String,
    pub speech_regions: Vec<TimeInterval>,
    pub segments: MultiScaleSegmentSet,
    /// One matrix per scale, rows aligned with `segments.per_scale_segments[k]`.
    pub embeddings: Vec<EmbeddingMatrix>,
}

impl SessionEmbeddings {
    pub fn scale_config(&self) -> &ScaleConfig {
        &self.segments.scale_config
    }

    pub fn dim(&self) -> usize {
        self.embeddings.first().map_or(0, EmbeddingMatrix::dim)
    }

    pub fn num_base(&self) -> usize {
        self.segments.num_base()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub session_id: String,
    pub num_speakers: usize,
    pub dim: usize,
    pub session_duration: f64,
    pub overlap_fraction: f64,
    pub base_noise_sigma: f64,
    pub scale_noise_exponent: f64,
    /// Degrees.
    pub min_centroid_angle: f64,
    pub seed: u64,
    pub scales: ScaleConfig,
    pub turn_min: f64,
    pub turn_max: f64,
    pub pause_probability: f64,
    pub pause_min: f64,
    pub pause_max: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            session_id: "synth".into(),
            num_speakers: 2,
            dim: 192,
            session_duration: 60.0,
            overlap_fraction: 0.15,
            base_noise_sigma: 0.05,
            scale_noise_exponent: 1.0,
            min_centroid_angle: 60.0,
            seed: 0,
            scales: ScaleConfig::telephonic(),
            turn_min: 1.5,
            turn_max: 5.0,
            pause_probability: 0.25,
            pause_min: 0.3,
            pause_max: 1.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(1..=MAX_SPEAKERS).contains(&self.num_speakers) {
            return bad(format!(
                "num_speakers {} outside 1..={MAX_SPEAKERS}",
                self.num_speakers
            ));
        }
        if self.dim == 0 {
            return bad("dim must be positive".into());
        }
        if !(self.session_duration.is_finite() && self.session_duration > 0.0) {
            return bad(format!("session_duration {} must be positive", self.session_duration));
        }
        if !(0.0..0.5).contains(&self.overlap_fraction) {
            return bad(format!("overlap_fraction {} outside [0, 0.5)", self.overlap_fraction));
        }
        if !(self.base_noise_sigma.is_finite() && self.base_noise_sigma >= 0.0) {
            return bad("base_noise_sigma must be non-negative".into());
        }
        if !self.scale_noise_exponent.is_finite() {
            return bad("scale_noise_exponent must be finite".into());
        }
        if !(0.0..=180.0).contains(&self.min_centroid_angle) {
            return bad("min_centroid_angle must lie in [0, 180] degrees".into());
        }
        if !(self.turn_min > 0.0 && self.turn_max >= self.turn_min) {
            return bad("turn lengths must satisfy 0 < turn_min <= turn_max".into());
        }
        if !(0.0..=1.0).contains(&self.pause_probability)
            || !(self.pause_min > 0.0 && self.pause_max >= self.pause_min)
        {
            return bad("pause parameters out of range".into());
        }
        if self.num_speakers == 1 && self.overlap_fraction > 0.0 {
            return Err(Error::Infeasible(
                "a single-speaker session cannot contain overlapped speech".into(),
            ));
        }
        Ok(())
    }

    /// Noise deviation applied at scale `k`.
    pub fn noise_sigma(&self, k: usize) -> f64 {
        let base = self.scales.base_window();
        self.base_noise_sigma * (base / self.scales.windows()[k]).powf(self.scale_noise_exponent)
    }
}

/// Generated session with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSession {
    pub timeline: SpeakerTimeline,
    pub data: SessionEmbeddings,
    /// Unit-norm centroid per speaker, indexed like [`speaker_id`].
    pub centroids: Vec<Vec<f64>>,
}

pub fn speaker_id(index: usize) -> String {
    format!("spk{index}")
}

pub fn gen_session(cfg: &SynthConfig) -> Result<SynthSession> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let centroids = draw_centroids(cfg, &mut rng)?;
    let timeline = draw_timeline(cfg, &mut rng)?;
    let speech_regions = timeline.speech_regions();
    let segments = segment_all_scales(&speech_regions, &cfg.scales)?;

    let per_speaker: Vec<Vec<TimeInterval>> = (0..cfg.num_speakers)
        .map(|s| timeline.intervals_of(&speaker_id(s)))
        .collect();
    let mut embeddings = Vec::with_capacity(cfg.scales.num_scales());
    for (k, segs) in segments.per_scale_segments.iter().enumerate() {
        let sigma = cfg.noise_sigma(k);
        let mut values = Array2::<f64>::zeros((segs.len(), cfg.dim));
        for (row, seg) in segs.iter().enumerate() {
            let mixture = clean_mixture(seg, &per_speaker, &centroids).ok_or_else(|| {
                Error::Infeasible(format!("segment {row} at scale {k} contains no speech"))
            })?;
            let mut v: Vec<f64> = mixture
                .iter()
                .map(|&m| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    m + sigma * z
                })
                .collect();
            normalize(&mut v);
            for (dst, x) in values.row_mut(row).iter_mut().zip(&v) {
                *dst = f64::from(*x as f32);
            }
        }
        embeddings.push(EmbeddingMatrix::new(values)?);
    }

    Ok(SynthSession {
        timeline,
        data: SessionEmbeddings {
            session_id: cfg.session_id.clone(),
            speech_regions,
            segments,
            embeddings,
        },
        centroids,
    })
}

/// Speech-time weighted mixture of the centroids active inside `seg`.
pub fn clean_mixture(
    seg: &TimeInterval,
    per_speaker: &[Vec<TimeInterval>],
    centroids: &[Vec<f64>],
) -> Option<Vec<f64>> {
    let dim = centroids.first()?.len();
    let mut mix = vec![0.0; dim];
    let mut total = 0.0;
    for (ivs, c) in per_speaker.iter().zip(centroids) {
        let t = overlap_with_sorted(seg, ivs);
        if t > 0.0 {
            total += t;
            for (m, x) in mix.iter_mut().zip(c) {
                *m += t * x;
            }
        }
    }
    if total <= 0.0 {
        return None;
    }
    mix.iter_mut().for_each(|m| *m /= total);
    Some(mix)
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

fn draw_centroids(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    let max_cos = cfg.min_centroid_angle.to_radians().cos();
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(cfg.num_speakers);
    while out.len() < cfg.num_speakers {
        let mut placed = false;
        for _ in 0..CENTROID_ATTEMPTS {
            let mut v: Vec<f64> = (0..cfg.dim).map(|_| StandardNormal.sample(&mut *rng)).collect();
            normalize(&mut v);
            let ok = out
                .iter()
                .all(|c| c.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() <= max_cos);
            if ok {
                out.push(v);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Infeasible(format!(
                "cannot place {} centroids in {} dimensions at >= {} degrees apart",
                cfg.num_speakers, cfg.dim, cfg.min_centroid_angle
            )));
        }
    }
    Ok(out)
}

fn draw_timeline(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<SpeakerTimeline> {
    let n_spk = cfg.num_speakers;
    let f = cfg.overlap_fraction;
    let horizon = cfg.session_duration * (1.0 + f) + cfg.turn_max;

    // Turns: speaker, duration, and whether a pause follows.
    let mut order: Vec<usize> = (0..n_spk).collect();
    order.shuffle(rng);
    let mut speakers = Vec::new();
    let mut durations = Vec::new();
    let mut pause_after = Vec::new();
    let mut nominal = 0.0;
    while nominal < horizon {
        let spk = match speakers.len() {
            i if i < n_spk => order[i],
            _ => {
                let prev = *speakers.last().expect("at least one turn");
                if n_spk == 1 {
                    prev
                } else {
                    let pick = rng.random_range(0..n_spk - 1);
                    if pick >= prev {
                        pick + 1
                    } else {
                        pick
                    }
                }
            }
        };
        let d = rng.random_range(cfg.turn_min..=cfg.turn_max);
        let pause = n_spk == 1 || rng.random_bool(cfg.pause_probability);
        speakers.push(spk);
        durations.push(d);
        pause_after.push(pause);
        nominal += d;
        if pause {
            nominal += (cfg.pause_min + cfg.pause_max) / 2.0;
        }
    }
    let n = speakers.len();

    // Spread the overlap budget across handovers in proportion to their cap.
    let total_speech: f64 = durations.iter().sum();
    let target = f / (1.0 + f) * total_speech;
    let cap = |j: usize| 0.45 * durations[j].min(durations[j + 1]);
    let mut cap_sum: f64 = (0..n - 1).filter(|&j| !pause_after[j]).map(cap).sum();
    for j in 0..n - 1 {
        if cap_sum >= target || n_spk == 1 {
            break;
        }
        if pause_after[j] {
            pause_after[j] = false;
            cap_sum += cap(j);
        }
    }
    let scale = if cap_sum > 0.0 { (target / cap_sum).min(1.0) } else { 0.0 };

    let mut entries = Vec::with_capacity(n);
    let mut t = rng.random_range(0.0..0.5);
    for j in 0..n {
        let start = t;
        let end = start + durations[j];
        if start >= cfg.session_duration - 0.1 {
            break;
        }
        let clipped = end.min(cfg.session_duration);
        entries.push((speaker_id(speakers[j]), TimeInterval::new(start, clipped)?));
        if j + 1 < n {
            t = if pause_after[j] {
                end + rng.random_range(cfg.pause_min..=cfg.pause_max)
            } else {
                end - scale * cap(j)
            };
        }
    }
    Ok(SpeakerTimeline::new(cfg.session_id.clone(), entries))
}

/// Fraction of speech time during which two or more speakers are active.
pub fn overlap_fraction(timeline: &SpeakerTimeline) -> f64 {
    let mut events: Vec<(f64, i32)> = Vec::new();
    for (_, iv) in timeline.entries() {
        events.push((iv.onset(), 1));
        events.push((iv.offset(), -1));
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let (mut active, mut last) = (0i32, 0.0);
    let (mut speech, mut overlap) = (0.0, 0.0);
    for (t, d) in events {
        let dt = t - last;
        if active >= 1 {
            speech += dt;
        }
        if active >= 2 {
            overlap += dt;
        }
        active += d;
        last = t;
    }
    if speech > 0.0 {
        overlap / speech
    } else {
        0.0
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    version: u32,
    session_id: String,
    dim: usize,
    payload: String,
    speech_regions: Vec<TimeInterval>,
    scales: Vec<ManifestScale>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestScale {
    window: f64,
    hop: f64,
    rows: usize,
    segments: Vec<TimeInterval>,
}

/// Paths of the archive pair for `name` inside `dir`.
pub fn archive_paths(dir: &Path, name: &str) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("{name}.manifest")),
        dir.join(format!("{name}.emb")),
    )
}

/// Writes `<name>.manifest` and `<name>.emb` into `dir`; returns the manifest path.
pub fn save_archive(dir: &Path, name: &str, data: &SessionEmbeddings) -> Result<PathBuf> {
    let (manifest_path, payload_path) = archive_paths(dir, name);
    let cfg = data.scale_config();
    let dim = data.dim();
    let manifest = Manifest {
        format: ARCHIVE_FORMAT.into(),
        version: ARCHIVE_VERSION,
        session_id: data.session_id.clone(),
        dim,
        payload: format!("{name}.emb"),
        speech_regions: data.speech_regions.clone(),
        scales: (0..cfg.num_scales())
            .map(|k| ManifestScale {
                window: cfg.windows()[k],
                hop: cfg.hops()[k],
                rows: data.embeddings[k].rows(),
                segments: data.segments.per_scale_segments[k].clone(),
            })
            .collect(),
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Manifest(e.to_string()))?;

    let total: usize = data.embeddings.iter().map(|m| m.rows() * m.dim()).sum();
    let mut payload = Vec::with_capacity(total * 4);
    for m in &data.embeddings {
        for &v in m.values().iter() {
            payload.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;
    fs::write(&payload_path, payload).map_err(|e| Error::io(&payload_path, e))?;
    Ok(manifest_path)
}

/// Reads an archive given the path of its manifest.
pub fn load_archive(manifest_path: &Path) -> Result<SessionEmbeddings> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = toml::from_str(&text).map_err(|e| Error::Manifest(e.to_string()))?;
    if manifest.format != ARCHIVE_FORMAT {
        return Err(Error::Manifest(format!("unknown format {:?}", manifest.format)));
    }
    if manifest.version != ARCHIVE_VERSION {
        return Err(Error::UnsupportedVersion {
            found: manifest.version,
            expected: ARCHIVE_VERSION,
        });
    }
    if manifest.dim == 0 || manifest.scales.is_empty() {
        return Err(Error::Manifest("dim and scale list must be non-empty".into()));
    }
    for (k, s) in manifest.scales.iter().enumerate() {
        if s.rows != s.segments.len() {
            return Err(Error::ManifestMismatch(format!(
                "scale {k} declares {} rows but lists {} segments",
                s.rows,
                s.segments.len()
            )));
        }
    }
    let payload_path = manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&manifest.payload);
    let bytes = fs::read(&payload_path).map_err(|e| Error::io(&payload_path, e))?;
    let expected: usize = manifest.scales.iter().map(|s| s.rows * manifest.dim * 4).sum();
    if bytes.len() != expected {
        return Err(Error::PayloadLength {
            expected,
            found: bytes.len(),
        });
    }

    let scale_config = ScaleConfig::with_hops(
        manifest.scales.iter().map(|s| s.window).collect(),
        manifest.scales.iter().map(|s| s.hop).collect(),
    )?;
    let mut floats = bytes
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])));
    let mut embeddings = Vec::with_capacity(manifest.scales.len());
    let mut per_scale_segments = Vec::with_capacity(manifest.scales.len());
    for s in manifest.scales {
        let values: Vec<f64> = floats.by_ref().take(s.rows * manifest.dim).collect();
        let m = Array2::from_shape_vec((s.rows, manifest.dim), values)
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        embeddings.push(EmbeddingMatrix::new(m)?);
        per_scale_segments.push(s.segments);
    }
    let group_map = build_group_map(&per_scale_segments, scale_config.base_index())?;
    Ok(SessionEmbeddings {
        session_id: manifest.session_id,
        speech_regions: manifest.speech_regions,
        segments: MultiScaleSegmentSet {
            scale_config,
            per_scale_segments,
            group_map,
        },
        embeddings,
    })
}
