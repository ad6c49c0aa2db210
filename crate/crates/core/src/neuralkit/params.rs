//! Parameter traversal, seeded initialization and the Adam optimizer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A fixed, ordered collection of named parameter tensors.
///
/// Gradients use the same type as the parameters they belong to, so every
/// visitor sees tensors in the same order with identical shapes.
pub trait Params {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64]));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64]));

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, _, d| n += d.len());
        n
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.visit("", &mut |_, _, d| out.extend_from_slice(d));
        out
    }

    fn assign_flat(&mut self, flat: &[f64]) {
        let mut at = 0;
        self.visit_mut("", &mut |_, d| {
            d.copy_from_slice(&flat[at..at + d.len()]);
            at += d.len();
        });
        assert_eq!(at, flat.len(), "flat parameter length mismatch");
    }

    fn fill(&mut self, value: f64) {
        self.visit_mut("", &mut |_, d| d.iter_mut().for_each(|x| *x = value));
    }

    /// `self += other`, tensor by tensor.
    fn accumulate(&mut self, other: &Self)
    where
        Self: Sized,
    {
        let flat = other.flatten();
        let mut at = 0;
        self.visit_mut("", &mut |_, d| {
            for (x, y) in d.iter_mut().zip(&flat[at..]) {
                *x += y;
            }
            at += d.len();
        });
    }

    /// Rounds every value to the nearest 32-bit float.
    fn round_to_f32(&mut self) {
        self.visit_mut("", &mut |_, d| {
            d.iter_mut().for_each(|x| *x = f64::from(*x as f32))
        });
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Seeded uniform initializer drawing from `±1/sqrt(fan_in)`.
pub struct Initializer {
    rng: ChaCha8Rng,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn fill_uniform(&mut self, values: &mut [f64], fan_in: usize) {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        for v in values {
            *v = self.rng.random_range(-bound..bound);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(num_params: usize) -> Self {
        Self {
            step: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, hyper: &AdamConfig) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - hyper.beta1.powi(t);
    let c2 = 1.0 - hyper.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * g;
        state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.eps);
    }
}

/// [`adam_step`] applied to a parameter set.
pub fn adam_update<P: Params>(params: &mut P, grads: &P, state: &mut AdamState, hyper: &AdamConfig) {
    let mut flat = params.flatten();
    adam_step(&mut flat, &grads.flatten(), state, hyper);
    params.assign_flat(&flat);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = vec![0.3, -1.2];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut s, &AdamConfig::default());
        assert_eq!(p, vec![0.3, -1.2]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = vec![0.0];
        let mut s = AdamState::new(1);
        let hyper = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        adam_step(&mut p, &[1.0], &mut s, &hyper);
        assert!((p[0] + 0.1).abs() < 1e-7);
    }

    #[test]
    fn trajectories_are_reproducible() {
        let run = || {
            let mut init = Initializer::new(42);
            let mut p = vec![0.0; 8];
            init.fill_uniform(&mut p, 4);
            let mut s = AdamState::new(8);
            for _ in 0..20 {
                let g: Vec<f64> = p.iter().map(|x| 2.0 * x - 0.1).collect();
                adam_step(&mut p, &g, &mut s, &AdamConfig::default());
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn initializer_respects_bound() {
        let mut init = Initializer::new(1);
        let mut p = vec![0.0; 1000];
        init.fill_uniform(&mut p, 16);
        assert!(p.iter().all(|x| x.abs() < 0.25));
        assert!(p.iter().any(|x| x.abs() > 0.2));
    }
}
