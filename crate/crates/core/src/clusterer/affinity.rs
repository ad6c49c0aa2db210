//! Cosine affinities and their multi-scale fusion.

use ndarray::{Array2, Axis};

use super::ScaleWeightVector;
use crate::error::{Error, Result};
use crate::types::EmbeddingMatrix;

/// Pairwise cosine similarity of the rows; unit diagonal, exactly symmetric.
pub fn cosine_affinity(emb: &EmbeddingMatrix) -> Result<Array2<f64>> {
    let x = emb.values();
    let norms = x.map_axis(Axis(1), |r| r.dot(&r).sqrt());
    if let Some(row) = norms.iter().position(|&n| !(n > 0.0)) {
        return Err(Error::ZeroNorm { row });
    }
    let unit = x / &norms.insert_axis(Axis(1));
    let mut a = unit.dot(&unit.t());
    let n = a.nrows();
    for i in 0..n {
        a[[i, i]] = 1.0;
        for j in i + 1..n {
            let v = ((a[[i, j]] + a[[j, i]]) / 2.0).clamp(-1.0, 1.0);
            a[[i, j]] = v;
            a[[j, i]] = v;
        }
    }
    Ok(a)
}

/// Expands a scale-k affinity to base-scale indices through the group map column.
pub fn lift_affinity(coarse: &Array2<f64>, map: &[usize]) -> Array2<f64> {
    let n = map.len();
    Array2::from_shape_fn((n, n), |(i, j)| coarse[[map[i], map[j]]])
}

/// Weighted sum of base-indexed affinities followed by global min-max
/// normalization to `[0, 1]`. A constant sum maps to all ones.
pub fn multiscale_affinity(per_scale: &[Array2<f64>], w: &ScaleWeightVector) -> Result<Array2<f64>> {
    if per_scale.len() != w.len() || per_scale.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} affinity matrices for {} weights",
            per_scale.len(),
            w.len()
        )));
    }
    let shape = per_scale[0].raw_dim();
    if per_scale.iter().any(|a| a.raw_dim() != shape) || shape[0] != shape[1] {
        return Err(Error::ShapeMismatch("affinity matrices must share one square shape".into()));
    }
    let mut fused = Array2::<f64>::zeros(shape);
    for (a, &wk) in per_scale.iter().zip(w.as_slice()) {
        fused.scaled_add(wk, a);
    }
    let min = fused.iter().copied().fold(f64::INFINITY, f64::min);
    let max = fused.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if !(range > 0.0) {
        fused.fill(1.0);
        return Ok(fused);
    }
    fused.mapv_inplace(|v| (v - min) / range);
    Ok(fused)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn emb(v: Array2<f64>) -> EmbeddingMatrix {
        EmbeddingMatrix::new(v).unwrap()
    }

    #[test]
    fn cosine_examples() {
        let a = cosine_affinity(&emb(array![[1.0, 2.0], [1.0, 2.0], [2.0, 4.0]])).unwrap();
        assert!(a.iter().all(|&v| (v - 1.0).abs() < 1e-12));
        let a = cosine_affinity(&emb(Array2::eye(3))).unwrap();
        assert_eq!(a, Array2::eye(3));
        let s = 1.0 / 2f64.sqrt();
        let a = cosine_affinity(&emb(array![[1.0, 0.0], [s, s]])).unwrap();
        assert!((a[[0, 1]] - 0.70711).abs() < 1e-5);
    }

    #[test]
    fn min_max_contract() {
        let a1 = array![[1.0, 0.2, -0.5], [0.2, 1.0, 0.1], [-0.5, 0.1, 1.0]];
        let w = ScaleWeightVector::new(vec![1.0, 1.0]).unwrap();
        let out = multiscale_affinity(&[a1.clone(), a1.clone()], &w).unwrap();
        let expect = a1.mapv(|v| (v + 0.5) / 1.5);
        for (x, y) in out.iter().zip(expect.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(out.iter().copied().fold(f64::INFINITY, f64::min), 0.0);
        assert_eq!(out.iter().copied().fold(f64::NEG_INFINITY, f64::max), 1.0);
    }

    #[test]
    fn constant_input_is_all_ones() {
        let w = ScaleWeightVector::new(vec![2.0]).unwrap();
        let out = multiscale_affinity(&[Array2::from_elem((2, 2), 0.3)], &w).unwrap();
        assert!(out.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn shape_mismatch() {
        let w = ScaleWeightVector::new(vec![1.0, 1.0]).unwrap();
        assert!(multiscale_affinity(&[Array2::eye(2)], &w).is_err());
        assert!(multiscale_affinity(&[Array2::eye(2), Array2::eye(3)], &w).is_err());
    }

    #[test]
    fn lift_follows_group_map() {
        let coarse = array![[1.0, 0.5], [0.5, 1.0]];
        let lifted = lift_affinity(&coarse, &[0, 0, 1]);
        assert_eq!(lifted, array![[1.0, 1.0, 0.5], [1.0, 1.0, 0.5], [0.5, 0.5, 1.0]]);
    }
}
