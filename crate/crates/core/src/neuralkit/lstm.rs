//! Stacked bidirectional LSTM over batches of equal-length sequences.
//!
//! A batch of `batch` sequences of `steps` time steps is stored as a
//! `(steps * batch, features)` matrix whose row `t * batch + b` holds step `t`
//! of sequence `b`. Gates are packed in the order input, forget, cell,
//! output:
//!
//! ```text
//! i = σ(W_i x + U_i h + b_i)     f = σ(W_f x + U_f h + b_f)
//! g = tanh(W_g x + U_g h + b_g)  o = σ(W_o x + U_o h + b_o)
//! c' = f ⊙ c + i ⊙ g             h' = o ⊙ tanh(c')
//! ```
//!
//! The forget-gate bias starts at +1.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::ops::{sigmoid, standard};
use super::params::{join, Initializer, Params};
use crate::error::{Error, Result};

/// Parameters of one LSTM direction.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    /// `(4H, input)`
    pub w_ih: Array2<f64>,
    /// `(4H, H)`
    pub w_hh: Array2<f64>,
    /// `(4H)`
    pub bias: Array1<f64>,
}

/// Activations kept from a forward pass.
#[derive(Debug, Clone)]
pub struct LstmCache {
    steps: usize,
    batch: usize,
    reverse: bool,
    /// Post-activation gates `[i f g o]`.
    gates: Array2<f64>,
    cells: Array2<f64>,
    tanh_cells: Array2<f64>,
    pub hidden: Array2<f64>,
}

impl LstmCell {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_ih: Array2::zeros((4 * hidden, input)),
            w_hh: Array2::zeros((4 * hidden, hidden)),
            bias: Array1::zeros(4 * hidden),
        }
    }

    pub fn init(input: usize, hidden: usize, init: &mut Initializer) -> Self {
        let mut c = Self::zeros(input, hidden);
        init.fill_uniform(c.w_ih.as_slice_mut().expect("contiguous"), input);
        init.fill_uniform(c.w_hh.as_slice_mut().expect("contiguous"), hidden);
        init.fill_uniform(c.bias.as_slice_mut().expect("contiguous"), hidden);
        c.bias.slice_mut(s![hidden..2 * hidden]).mapv_inplace(|b| b + 1.0);
        c
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.w_ih.ncols()
    }

    fn order(steps: usize, reverse: bool) -> impl Iterator<Item = usize> {
        (0..steps).map(move |n| if reverse { steps - 1 - n } else { n })
    }

    pub fn forward(&self, x: &ArrayView2<f64>, batch: usize, reverse: bool) -> Result<LstmCache> {
        if x.ncols() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "lstm expects {} inputs, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        if batch == 0 || x.nrows() % batch != 0 || x.nrows() == 0 {
            return Err(Error::ShapeMismatch(format!(
                "{} rows do not split into batches of {batch}",
                x.nrows()
            )));
        }
        let h = self.hidden();
        let steps = x.nrows() / batch;
        let mut gates = standard(x.dot(&self.w_ih.t()) + &self.bias);
        let mut cells = Array2::zeros((x.nrows(), h));
        let mut tanh_cells = Array2::zeros((x.nrows(), h));
        let mut hidden = Array2::zeros((x.nrows(), h));
        let mut prev: Option<usize> = None;
        for t in Self::order(steps, reverse) {
            let rows = t * batch..(t + 1) * batch;
            if let Some(p) = prev {
                let hp = hidden.slice(s![p * batch..(p + 1) * batch, ..]);
                let rec = hp.dot(&self.w_hh.t());
                let mut g = gates.slice_mut(s![rows.clone(), ..]);
                g += &rec;
            }
            let gs_all = gates.as_slice_mut().expect("standard layout");
            let cs = cells.as_slice_mut().expect("standard layout");
            let ts = tanh_cells.as_slice_mut().expect("standard layout");
            let hs = hidden.as_slice_mut().expect("standard layout");
            for b in 0..batch {
                let r = t * batch + b;
                let gs = &mut gs_all[r * 4 * h..(r + 1) * 4 * h];
                let c_prev = prev.map(|p| (p * batch + b) * h);
                for j in 0..h {
                    let i = sigmoid(gs[j]);
                    let f = sigmoid(gs[h + j]);
                    let g = gs[2 * h + j].tanh();
                    let o = sigmoid(gs[3 * h + j]);
                    gs[j] = i;
                    gs[h + j] = f;
                    gs[2 * h + j] = g;
                    gs[3 * h + j] = o;
                    let cp = c_prev.map_or(0.0, |at| cs[at + j]);
                    let c = f * cp + i * g;
                    let tc = c.tanh();
                    cs[r * h + j] = c;
                    ts[r * h + j] = tc;
                    hs[r * h + j] = o * tc;
                }
            }
            prev = Some(t);
        }
        Ok(LstmCache {
            steps,
            batch,
            reverse,
            gates,
            cells,
            tanh_cells,
            hidden,
        })
    }

    /// Backpropagates `dh` (gradient w.r.t. every hidden output) through time.
    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(
        &self,
        x: &ArrayView2<f64>,
        cache: &LstmCache,
        dh: &Array2<f64>,
        grads: &mut LstmCell,
    ) -> Array2<f64> {
        let h = self.hidden();
        let (steps, batch) = (cache.steps, cache.batch);
        let order: Vec<usize> = Self::order(steps, cache.reverse).collect();
        let mut dgates = Array2::<f64>::zeros((steps * batch, 4 * h));
        let mut h_prev = Array2::<f64>::zeros((steps * batch, h));
        let mut dh_next = Array2::<f64>::zeros((batch, h));
        let mut dc_next = Array2::<f64>::zeros((batch, h));
        let gates = cache.gates.as_slice().expect("standard layout");
        let cells = cache.cells.as_slice().expect("standard layout");
        let tanh_cells = cache.tanh_cells.as_slice().expect("standard layout");
        let dh = dh.as_standard_layout();
        let dh = dh.as_slice().expect("standard layout");
        for (n, &t) in order.iter().enumerate().rev() {
            let prev = if n > 0 { Some(order[n - 1]) } else { None };
            {
                let dg_all = dgates.as_slice_mut().expect("standard layout");
                let dhn = dh_next.as_slice().expect("standard layout");
                let dcn = dc_next.as_slice_mut().expect("standard layout");
                for b in 0..batch {
                    let r = t * batch + b;
                    let pr = prev.map(|p| (p * batch + b) * h);
                    let gs = &gates[r * 4 * h..(r + 1) * 4 * h];
                    let dg = &mut dg_all[r * 4 * h..(r + 1) * 4 * h];
                    for j in 0..h {
                        let (i, f, g, o) = (gs[j], gs[h + j], gs[2 * h + j], gs[3 * h + j]);
                        let tc = tanh_cells[r * h + j];
                        let cp = pr.map_or(0.0, |at| cells[at + j]);
                        let dhv = dh[r * h + j] + dhn[b * h + j];
                        let d_o = dhv * tc;
                        let dc = dhv * o * (1.0 - tc * tc) + dcn[b * h + j];
                        dcn[b * h + j] = dc * f;
                        dg[j] = dc * g * i * (1.0 - i);
                        dg[h + j] = dc * cp * f * (1.0 - f);
                        dg[2 * h + j] = dc * i * (1.0 - g * g);
                        dg[3 * h + j] = d_o * o * (1.0 - o);
                    }
                }
            }
            if let Some(p) = prev {
                let hp = cache.hidden.slice(s![p * batch..(p + 1) * batch, ..]);
                h_prev.slice_mut(s![t * batch..(t + 1) * batch, ..]).assign(&hp);
                dh_next = standard(dgates.slice(s![t * batch..(t + 1) * batch, ..]).dot(&self.w_hh));
            }
        }
        grads.w_ih += &dgates.t().dot(x);
        grads.w_hh += &dgates.t().dot(&h_prev);
        grads.bias += &dgates.sum_axis(Axis(0));
        dgates.dot(&self.w_ih)
    }
}

impl Params for LstmCell {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        f(&join(prefix, "w_ih"), self.w_ih.shape(), self.w_ih.as_slice().expect("contiguous"));
        f(&join(prefix, "w_hh"), self.w_hh.shape(), self.w_hh.as_slice().expect("contiguous"));
        f(&join(prefix, "bias"), self.bias.shape(), self.bias.as_slice().expect("contiguous"));
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        f(&join(prefix, "w_ih"), self.w_ih.as_slice_mut().expect("contiguous"));
        f(&join(prefix, "w_hh"), self.w_hh.as_slice_mut().expect("contiguous"));
        f(&join(prefix, "bias"), self.bias.as_slice_mut().expect("contiguous"));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmLayer {
    pub forward: LstmCell,
    pub backward: LstmCell,
}

/// Stacked bidirectional LSTM; each step's output is `[forward; backward]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstm {
    pub layers: Vec<BiLstmLayer>,
}

#[derive(Debug, Clone)]
pub struct BiLstmCache {
    /// Input of each layer.
    inputs: Vec<Array2<f64>>,
    caches: Vec<(LstmCache, LstmCache)>,
    pub output: Array2<f64>,
}

impl BiLstm {
    pub fn zeros(input: usize, hidden: usize, layers: usize) -> Self {
        Self {
            layers: (0..layers)
                .map(|l| {
                    let inp = if l == 0 { input } else { 2 * hidden };
                    BiLstmLayer {
                        forward: LstmCell::zeros(inp, hidden),
                        backward: LstmCell::zeros(inp, hidden),
                    }
                })
                .collect(),
        }
    }

    pub fn init(input: usize, hidden: usize, layers: usize, init: &mut Initializer) -> Self {
        Self {
            layers: (0..layers)
                .map(|l| {
                    let inp = if l == 0 { input } else { 2 * hidden };
                    BiLstmLayer {
                        forward: LstmCell::init(inp, hidden, init),
                        backward: LstmCell::init(inp, hidden, init),
                    }
                })
                .collect(),
        }
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].forward.hidden()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].forward.input_dim()
    }

    pub fn forward(&self, x: &ArrayView2<f64>, batch: usize) -> Result<BiLstmCache> {
        let h = self.hidden();
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut current = x.to_owned();
        for layer in &self.layers {
            let fw = layer.forward.forward(&current.view(), batch, false)?;
            let bw = layer.backward.forward(&current.view(), batch, true)?;
            let mut out = Array2::zeros((current.nrows(), 2 * h));
            out.slice_mut(s![.., ..h]).assign(&fw.hidden);
            out.slice_mut(s![.., h..]).assign(&bw.hidden);
            inputs.push(std::mem::replace(&mut current, out));
            caches.push((fw, bw));
        }
        Ok(BiLstmCache {
            inputs,
            caches,
            output: current,
        })
    }

    pub fn backward(&self, cache: &BiLstmCache, d_out: &Array2<f64>, grads: &mut BiLstm) -> Array2<f64> {
        let h = self.hidden();
        let mut d = d_out.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let x = cache.inputs[l].view();
            let (fw, bw) = &cache.caches[l];
            let dfw = d.slice(s![.., ..h]).to_owned();
            let dbw = d.slice(s![.., h..]).to_owned();
            let g = &mut grads.layers[l];
            let mut dx = layer.forward.backward(&x, fw, &dfw, &mut g.forward);
            dx += &layer.backward.backward(&x, bw, &dbw, &mut g.backward);
            d = dx;
        }
        d
    }
}

impl Params for BiLstm {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        for (l, layer) in self.layers.iter().enumerate() {
            layer.forward.visit(&join(prefix, &format!("l{l}.fwd")), f);
            layer.backward.visit(&join(prefix, &format!("l{l}.bwd")), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        for (l, layer) in self.layers.iter_mut().enumerate() {
            layer.forward.visit_mut(&join(prefix, &format!("l{l}.fwd")), f);
            layer.backward.visit_mut(&join(prefix, &format!("l{l}.bwd")), f);
        }
    }
}
