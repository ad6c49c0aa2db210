//! Initialization clustering over multi-scale embeddings.

pub mod affinity;
pub mod eigen;
pub mod kmeans;
pub mod nme;

use ndarray::Array2;
use rayon::prelude::*;

pub use affinity::{cosine_affinity, lift_affinity, multiscale_affinity};
pub use eigen::{eigensolve_symmetric, symmetric_eigenvalues};
pub use kmeans::{kmeans, KMeansConfig};
pub use nme::{nme_sc, NmeConfig, NmeResult};

use crate::error::{Error, Result};
use crate::synthembed::SessionEmbeddings;

/// Non-negative per-scale weights, coarsest scale first.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleWeightVector(Vec<f64>);

impl ScaleWeightVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() || w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "scale weights must be a non-empty list of non-negative values, got {w:?}"
            )));
        }
        Ok(Self(w))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Initial clustering weights decreasing (or increasing) linearly from `r`
/// at the coarsest scale to exactly 1 at the base scale.
pub fn init_scale_weights(r: f64, k: usize) -> Result<ScaleWeightVector> {
    if !(r.is_finite() && r > 0.0) || k == 0 {
        return Err(Error::InvalidArgument(format!(
            "scale weight ratio r={r} must be positive and K={k} at least 1"
        )));
    }
    if k == 1 {
        return ScaleWeightVector::new(vec![1.0]);
    }
    let slope = (r - 1.0) / (k - 1) as f64;
    let mut w: Vec<f64> = (0..k).map(|i| r - slope * i as f64).collect();
    w[k - 1] = 1.0;
    ScaleWeightVector::new(w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringResult {
    /// One cluster id per base-scale segment.
    pub labels: Vec<usize>,
    pub num_speakers: usize,
    /// Base-indexed cosine affinity of every scale.
    pub per_scale_affinity: Vec<Array2<f64>>,
    /// Weighted, min-max normalized affinity fed to the spectral step.
    pub fused_affinity: Array2<f64>,
    pub neighbors: usize,
}

/// Multi-scale affinity fusion followed by NME-SC on the base segments.
pub fn cluster_session(
    data: &SessionEmbeddings,
    weights: &ScaleWeightVector,
    cfg: &NmeConfig,
) -> Result<ClusteringResult> {
    let groups = &data.segments.group_map;
    let n = groups.len();
    if n == 0 {
        return Err(Error::Empty(format!("session {} has no base segments", data.session_id)));
    }
    if weights.len() != data.embeddings.len() {
        return Err(Error::ScaleMismatch(format!(
            "{} scale weights for {} scales",
            weights.len(),
            data.embeddings.len()
        )));
    }
    let per_scale_affinity = data
        .embeddings
        .par_iter()
        .enumerate()
        .map(|(k, emb)| {
            let a = cosine_affinity(emb)?;
            let column: Vec<usize> = groups.iter().map(|g| g[k]).collect();
            Ok(lift_affinity(&a, &column))
        })
        .collect::<Result<Vec<_>>>()?;
    let fused_affinity = multiscale_affinity(&per_scale_affinity, weights)?;
    let nme = nme_sc(&fused_affinity, cfg)?;
    Ok(ClusteringResult {
        labels: nme.labels,
        num_speakers: nme.num_speakers,
        per_scale_affinity,
        fused_affinity,
        neighbors: nme.neighbors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_weights_examples() {
        assert_eq!(init_scale_weights(2.0, 5).unwrap().as_slice(), &[2.0, 1.75, 1.5, 1.25, 1.0]);
        assert_eq!(init_scale_weights(1.0, 6).unwrap().as_slice(), &[1.0; 6]);
        assert_eq!(init_scale_weights(0.5, 2).unwrap().as_slice(), &[0.5, 1.0]);
        assert_eq!(init_scale_weights(3.0, 1).unwrap().as_slice(), &[1.0]);
        assert!(init_scale_weights(0.0, 3).is_err());
    }

    #[test]
    fn init_weight_endpoints_are_exact() {
        for &r in &[0.1, 0.7, 1.3, 2.9, 11.0] {
            for k in 2..9 {
                let w = init_scale_weights(r, k).unwrap();
                assert_eq!(w.as_slice()[0], r);
                assert_eq!(w.as_slice()[k - 1], 1.0);
            }
        }
    }
}
