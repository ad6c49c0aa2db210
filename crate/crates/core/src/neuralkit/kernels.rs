//! Seeded finite-difference checks of every differentiable kernel.
//!
//! Each check draws random parameters, inputs and a random linear read-out
//! `L = sum(y * R)`, then compares analytic parameter and input gradients
//! with central differences.

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradcheck::{grad_check, grad_check_params, GradCheckReport};
use super::layers::{Conv1d, Linear};
use super::lstm::{BiLstm, LstmCell};
use super::ops::{bce_grad, bce_loss, relu, relu_backward, softmax_rows, softmax_rows_backward};
use super::params::Initializer;

/// Relative-error ceiling for single kernels.
pub const KERNEL_TOLERANCE: f64 = 1e-4;
/// Relative-error ceiling for the assembled decoder.
pub const COMPOSITE_TOLERANCE: f64 = 1e-3;

fn uniform(shape: (usize, usize), rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn readout(y: &Array2<f64>, r: &Array2<f64>) -> f64 {
    (y * r).sum()
}

fn reshape(flat: &[f64], shape: (usize, usize)) -> Array2<f64> {
    Array2::from_shape_vec(shape, flat.to_vec()).expect("flat length matches shape")
}

fn merge(a: GradCheckReport, b: GradCheckReport) -> GradCheckReport {
    let (worst, offset) = if b.max_rel_error > a.max_rel_error {
        (&b, a.checked)
    } else {
        (&a, 0)
    };
    GradCheckReport {
        checked: a.checked + b.checked,
        max_rel_error: worst.max_rel_error,
        worst_index: worst.worst_index + offset,
        non_finite: a.non_finite || b.non_finite,
        tolerance: a.tolerance.max(b.tolerance),
    }
}

pub fn check_linear(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (rows, input, output) = (4, 5, 3);
    let layer = Linear::init(input, output, &mut Initializer::new(seed));
    let x = uniform((rows, input), &mut rng);
    let r = uniform((rows, output), &mut rng);
    let mut grads = Linear::zeros(input, output);
    let dx = layer.backward(&x.view(), &r, &mut grads);
    let params = grad_check_params(
        &layer,
        &grads,
        |p| readout(&p.forward(&x.view()).expect("shapes fixed"), &r),
        KERNEL_TOLERANCE,
    );
    let inputs = grad_check(
        x.as_slice().expect("standard layout"),
        dx.as_slice().expect("standard layout"),
        |flat| readout(&layer.forward(&reshape(flat, x.dim()).view()).expect("shapes fixed"), &r),
        KERNEL_TOLERANCE,
    );
    merge(params, inputs)
}

pub fn check_conv1d(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (cin, cout, width, bins) = (3, 4, 3, 7);
    let layer = Conv1d::init(cin, cout, width, &mut Initializer::new(seed));
    let x = uniform((cin, bins), &mut rng);
    let r = uniform((cout, bins - width + 1), &mut rng);
    let mut grads = Conv1d::zeros(cin, cout, width);
    let dx = layer.backward(&x.view(), &r, &mut grads);
    let params = grad_check_params(
        &layer,
        &grads,
        |p| readout(&p.forward(&x.view()).expect("shapes fixed"), &r),
        KERNEL_TOLERANCE,
    );
    let inputs = grad_check(
        x.as_slice().expect("standard layout"),
        dx.as_slice().expect("standard layout"),
        |flat| readout(&layer.forward(&reshape(flat, x.dim()).view()).expect("shapes fixed"), &r),
        KERNEL_TOLERANCE,
    );
    merge(params, inputs)
}

/// Inputs are kept at least 0.05 away from the kink.
pub fn check_relu(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = (5, 6);
    let x = Array2::from_shape_fn(shape, |_| {
        let m: f64 = rng.random_range(0.05..1.0);
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    });
    let r = uniform(shape, &mut rng);
    let y = relu(&x);
    let mut dx = r.clone();
    relu_backward(&y, &mut dx);
    grad_check(
        x.as_slice().expect("standard layout"),
        dx.as_slice().expect("standard layout"),
        |flat| readout(&relu(&reshape(flat, shape)), &r),
        KERNEL_TOLERANCE,
    )
}

pub fn check_softmax(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = (4, 5);
    let z = uniform(shape, &mut rng) * 3.0;
    let r = uniform(shape, &mut rng);
    let p = softmax_rows(&z.view());
    let dz = softmax_rows_backward(&p, &r);
    grad_check(
        z.as_slice().expect("standard layout"),
        dz.as_slice().expect("standard layout"),
        |flat| readout(&softmax_rows(&reshape(flat, shape).view()), &r),
        KERNEL_TOLERANCE,
    )
}

pub fn check_bce(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pred: Vec<f64> = (0..12).map(|_| rng.random_range(0.05..0.95)).collect();
    let target: Vec<f64> = (0..12).map(|_| f64::from(rng.random_bool(0.5))).collect();
    grad_check(&pred, &bce_grad(&pred, &target), |p| bce_loss(p, &target), KERNEL_TOLERANCE)
}

pub fn check_lstm_cell(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (steps, batch, input, hidden) = (4, 2, 3, 4);
    let reverse = seed % 2 == 1;
    let cell = LstmCell::init(input, hidden, &mut Initializer::new(seed));
    let x = uniform((steps * batch, input), &mut rng);
    let r = uniform((steps * batch, hidden), &mut rng);
    let run = |c: &LstmCell, x: &ArrayView2<f64>| {
        readout(&c.forward(x, batch, reverse).expect("shapes fixed").hidden, &r)
    };
    let cache = cell.forward(&x.view(), batch, reverse).expect("shapes fixed");
    let mut grads = LstmCell::zeros(input, hidden);
    let dx = cell.backward(&x.view(), &cache, &r, &mut grads);
    let params = grad_check_params(&cell, &grads, |c| run(c, &x.view()), KERNEL_TOLERANCE);
    let inputs = grad_check(
        x.as_slice().expect("standard layout"),
        dx.as_slice().expect("standard layout"),
        |flat| run(&cell, &reshape(flat, x.dim()).view()),
        KERNEL_TOLERANCE,
    );
    merge(params, inputs)
}

pub fn check_bilstm(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (steps, batch, input, hidden, layers) = (3, 2, 3, 3, 2);
    let net = BiLstm::init(input, hidden, layers, &mut Initializer::new(seed));
    let x = uniform((steps * batch, input), &mut rng);
    let r = uniform((steps * batch, 2 * hidden), &mut rng);
    let run = |n: &BiLstm, x: &ArrayView2<f64>| readout(&n.forward(x, batch).expect("shapes fixed").output, &r);
    let cache = net.forward(&x.view(), batch).expect("shapes fixed");
    let mut grads = BiLstm::zeros(input, hidden, layers);
    let dx = net.backward(&cache, &r, &mut grads);
    let params = grad_check_params(&net, &grads, |n| run(n, &x.view()), KERNEL_TOLERANCE);
    let inputs = grad_check(
        x.as_slice().expect("standard layout"),
        dx.as_slice().expect("standard layout"),
        |flat| run(&net, &reshape(flat, x.dim()).view()),
        KERNEL_TOLERANCE,
    );
    merge(params, inputs)
}

/// Every kernel check, by name.
pub fn all_kernel_checks(seed: u64) -> Vec<(&'static str, GradCheckReport)> {
    vec![
        ("linear", check_linear(seed)),
        ("conv1d", check_conv1d(seed)),
        ("relu", check_relu(seed)),
        ("softmax", check_softmax(seed)),
        ("bce", check_bce(seed)),
        ("lstm_cell", check_lstm_cell(seed)),
        ("bilstm", check_bilstm(seed)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernels_pass_on_a_few_seeds() {
        for seed in 0..4 {
            for (name, report) in all_kernel_checks(seed) {
                assert!(report.passed(), "{name} seed {seed}: {report:?}");
                assert!(report.checked > 0);
            }
        }
    }

    #[test]
    fn parameter_only_conv_pass_matches_full_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let layer = Conv1d::init(2, 3, 2, &mut Initializer::new(9));
        let x = uniform((2, 6), &mut rng);
        let dy = uniform((3, 5), &mut rng);
        let mut full = Conv1d::zeros(2, 3, 2);
        let mut only = Conv1d::zeros(2, 3, 2);
        layer.backward(&x.view(), &dy, &mut full);
        layer.backward_params(&x.view(), &dy, &mut only);
        assert_eq!(full, only);
    }

    #[test]
    fn a_wrong_gradient_is_caught() {
        let x = [0.3, -0.2];
        let report = grad_check(&x, &[2.0 * 0.3, 0.0], |v| v[0] * v[0] + v[1] * v[1], KERNEL_TOLERANCE);
        assert!(!report.passed());
        assert_eq!(report.worst_index, 1);
    }
}
