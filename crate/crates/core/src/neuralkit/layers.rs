//! Dense and 1-D convolution layers with analytic backward passes.

use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis};

use super::params::{join, Initializer, Params};
use crate::error::{Error, Result};

/// `y = x W^T + b` applied to every row of `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `(out, in)`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }

    pub fn init(input: usize, output: usize, init: &mut Initializer) -> Self {
        let mut l = Self::zeros(input, output);
        init.fill_uniform(l.weight.as_slice_mut().expect("contiguous"), input);
        init.fill_uniform(l.bias.as_slice_mut().expect("contiguous"), input);
        l
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward(&self, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "linear expects {} inputs, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        Ok(x.dot(&self.weight.t()) + &self.bias)
    }

    /// Accumulates parameter gradients into `grads` and returns `dL/dx`.
    pub fn backward(&self, x: &ArrayView2<f64>, dy: &Array2<f64>, grads: &mut Linear) -> Array2<f64> {
        grads.weight += &dy.t().dot(x);
        grads.bias += &dy.sum_axis(Axis(0));
        dy.dot(&self.weight)
    }
}

impl Params for Linear {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        f(&join(prefix, "weight"), self.weight.shape(), self.weight.as_slice().expect("contiguous"));
        f(&join(prefix, "bias"), self.bias.shape(), self.bias.as_slice().expect("contiguous"));
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        f(&join(prefix, "weight"), self.weight.as_slice_mut().expect("contiguous"));
        f(&join(prefix, "bias"), self.bias.as_slice_mut().expect("contiguous"));
    }
}

/// Valid (unpadded) cross-correlation along the bin axis of a
/// `channels x bins` input.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    /// `(out_channels, in_channels, width)`
    pub weight: Array3<f64>,
    pub bias: Array1<f64>,
}

impl Conv1d {
    pub fn zeros(in_channels: usize, out_channels: usize, width: usize) -> Self {
        Self {
            weight: Array3::zeros((out_channels, in_channels, width)),
            bias: Array1::zeros(out_channels),
        }
    }

    pub fn init(in_channels: usize, out_channels: usize, width: usize, init: &mut Initializer) -> Self {
        let mut c = Self::zeros(in_channels, out_channels, width);
        let fan_in = in_channels * width;
        init.fill_uniform(c.weight.as_slice_mut().expect("contiguous"), fan_in);
        init.fill_uniform(c.bias.as_slice_mut().expect("contiguous"), fan_in);
        c
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn forward(&self, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
        let width = self.width();
        if x.nrows() != self.in_channels() {
            return Err(Error::ShapeMismatch(format!(
                "conv1d expects {} input channels, got {}",
                self.in_channels(),
                x.nrows()
            )));
        }
        if width == 0 || width > x.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "kernel width {width} incompatible with {} bins",
                x.ncols()
            )));
        }
        let out_bins = x.ncols() - width + 1;
        let mut y = Array2::zeros((self.out_channels(), out_bins));
        for j in 0..width {
            let w = self.weight.slice(s![.., .., j]);
            y += &w.dot(&x.slice(s![.., j..j + out_bins]));
        }
        y += &self.bias.view().insert_axis(Axis(1));
        Ok(y)
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&self, x: &ArrayView2<f64>, dy: &Array2<f64>, grads: &mut Conv1d) -> Array2<f64> {
        let width = self.width();
        let out_bins = dy.ncols();
        let mut dx = Array2::zeros(x.raw_dim());
        for j in 0..width {
            let xs = x.slice(s![.., j..j + out_bins]);
            let mut gw = grads.weight.slice_mut(s![.., .., j]);
            gw += &dy.dot(&xs.t());
            let w = self.weight.slice(s![.., .., j]);
            let mut dxs = dx.slice_mut(s![.., j..j + out_bins]);
            dxs += &w.t().dot(dy);
        }
        grads.bias += &dy.sum_axis(Axis(1));
        dx
    }

    /// Parameter gradients only, for inputs that need no gradient.
    pub fn backward_params(&self, x: &ArrayView2<f64>, dy: &Array2<f64>, grads: &mut Conv1d) {
        let out_bins = dy.ncols();
        for j in 0..self.width() {
            let xs = x.slice(s![.., j..j + out_bins]);
            let mut gw = grads.weight.slice_mut(s![.., .., j]);
            gw += &dy.dot(&xs.t());
        }
        grads.bias += &dy.sum_axis(Axis(1));
    }
}

impl Params for Conv1d {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        f(&join(prefix, "weight"), self.weight.shape(), self.weight.as_slice().expect("contiguous"));
        f(&join(prefix, "bias"), self.bias.shape(), self.bias.as_slice().expect("contiguous"));
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        f(&join(prefix, "weight"), self.weight.as_slice_mut().expect("contiguous"));
        f(&join(prefix, "bias"), self.bias.as_slice_mut().expect("contiguous"));
    }
}
