//! Auto-tuning spectral clustering driven by the normalized maximum eigengap.
//!
//! For every candidate neighbour count `p` the affinity is reduced to a
//! binary top-`p` graph, symmetrized as `(B + Bᵀ)/2`, and the eigenvalues of
//! its symmetric normalized Laplacian `I - D^{-1/2} A D^{-1/2}` are taken in
//! ascending order. With eigengaps `e_q = λ_{q+1} - λ_q`, `q = 1..=max_speakers`,
//! the sweep keeps the `p` minimizing `(p / N) / max_q e_q`; the speaker
//! count is the arg-max gap at that `p`, and labels come from k-means on the
//! leading eigenvectors.

use ndarray::{s, Array2};
use rayon::prelude::*;

use super::eigen::{eigensolve_symmetric, symmetric_eigenvalues};
use super::kmeans::{kmeans, KMeansConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmeConfig {
    pub max_speakers: usize,
    pub max_neighbors: usize,
    pub kmeans: KMeansConfig,
}

impl Default for NmeConfig {
    fn default() -> Self {
        Self {
            max_speakers: 8,
            max_neighbors: 50,
            kmeans: KMeansConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmeResult {
    pub labels: Vec<usize>,
    pub num_speakers: usize,
    /// Chosen neighbour count; zero when no sweep ran (N <= 1).
    pub neighbors: usize,
    pub ratio: f64,
}

/// Top-`p` binarization of each row, symmetrized by averaging with the transpose.
pub fn binarize_affinity(affinity: &Array2<f64>, p: usize) -> Array2<f64> {
    let n = affinity.nrows();
    let mut b = Array2::<f64>::zeros((n, n));
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..n {
        let row = affinity.row(i);
        idx.sort_by(|&a, &c| row[c].total_cmp(&row[a]).then(a.cmp(&c)));
        for &j in idx.iter().take(p) {
            b[[i, j]] = 1.0;
        }
    }
    (&b + &b.t()) / 2.0
}

/// Symmetric normalized Laplacian.
pub fn normalized_laplacian(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let inv_sqrt: Vec<f64> = a
        .rows()
        .into_iter()
        .map(|r| {
            let d: f64 = r.sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    Array2::from_shape_fn((n, n), |(i, j)| {
        let v = -a[[i, j]] * inv_sqrt[i] * inv_sqrt[j];
        if i == j {
            1.0 + v
        } else {
            v
        }
    })
}

/// Eigengaps `λ_{q+1} - λ_q` for `q = 1..=max_q` (1-based eigenvalue indices).
fn eigengaps(values: &[f64], max_q: usize) -> Vec<f64> {
    let upto = max_q.min(values.len().saturating_sub(1));
    (0..upto).map(|q| values[q + 1] - values[q]).collect()
}

fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn nme_sc(affinity: &Array2<f64>, cfg: &NmeConfig) -> Result<NmeResult> {
    let n = affinity.nrows();
    if n == 0 {
        return Err(Error::Empty("affinity matrix has no rows".into()));
    }
    if affinity.ncols() != n {
        return Err(Error::ShapeMismatch("affinity must be square".into()));
    }
    if cfg.max_speakers == 0 {
        return Err(Error::InvalidArgument("max_speakers must be at least 1".into()));
    }
    if n == 1 {
        return Ok(NmeResult {
            labels: vec![0],
            num_speakers: 1,
            neighbors: 0,
            ratio: f64::INFINITY,
        });
    }
    let max_p = (n - 1).min(cfg.max_neighbors).max(1);
    let sweep: Vec<(usize, f64, usize)> = (1..=max_p)
        .into_par_iter()
        .map(|p| {
            let lap = normalized_laplacian(&binarize_affinity(affinity, p));
            let values = symmetric_eigenvalues(&lap)?;
            let gaps = eigengaps(&values, cfg.max_speakers);
            let q = argmax_first(&gaps);
            let g = gaps.get(q).copied().unwrap_or(0.0);
            let ratio = if g > 1e-12 {
                (p as f64 / n as f64) / g
            } else {
                f64::INFINITY
            };
            Ok((p, ratio, q + 1))
        })
        .collect::<Result<Vec<_>>>()?;
    let &(p, ratio, s) = sweep
        .iter()
        .fold(None::<&(usize, f64, usize)>, |best, cand| match best {
            Some(b) if b.1 <= cand.1 => Some(b),
            _ => Some(cand),
        })
        .expect("non-empty sweep");
    if !ratio.is_finite() {
        // No informative gap anywhere: a single cluster.
        return Ok(NmeResult {
            labels: vec![0; n],
            num_speakers: 1,
            neighbors: p,
            ratio,
        });
    }
    let labels = if s == 1 {
        vec![0; n]
    } else {
        let lap = normalized_laplacian(&binarize_affinity(affinity, p));
        let (_, vectors) = eigensolve_symmetric(&lap)?;
        let embedding = vectors.slice(s![.., ..s]).to_owned();
        kmeans(&embedding, s, &cfg.kmeans)
    };
    let num_speakers = labels.iter().max().map_or(1, |m| m + 1);
    Ok(NmeResult {
        labels,
        num_speakers,
        neighbors: p,
        ratio,
    })
}
