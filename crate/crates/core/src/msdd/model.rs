//! Decoder parameters and the batched forward and backward passes.
//!
//! A batch holds `batch` pair sequences of `steps` steps each, row
//! `t * batch + b` being step `t` of sequence `b`. The CNN input of all rows
//! is laid side by side along the bin axis, `(3K, rows * N_e)`; with width-1
//! kernels no filter crosses from one step's bins into the next.

use ndarray::{Array2, Array3, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuralkit::kernels::COMPOSITE_TOLERANCE;
use crate::neuralkit::lstm::BiLstmCache;
use crate::neuralkit::ops::{bce_grad, bce_loss, relu, relu_backward, sigmoid, softmax_rows, softmax_rows_backward, standard};
use crate::neuralkit::params::join;
use crate::neuralkit::{grad_check_params, BiLstm, Conv1d, GradCheckReport, Initializer, Linear, Params};
use crate::synthembed::SessionEmbeddings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MsddConfig {
    pub num_scales: usize,
    pub emb_dim: usize,
    pub cnn_channels: usize,
    pub cnn_hidden: usize,
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
}

impl MsddConfig {
    pub fn new(num_scales: usize, emb_dim: usize) -> Self {
        Self {
            num_scales,
            emb_dim,
            cnn_channels: 16,
            cnn_hidden: 256,
            lstm_hidden: 256,
            lstm_layers: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            self.num_scales,
            self.emb_dim,
            self.cnn_channels,
            self.cnn_hidden,
            self.lstm_hidden,
            self.lstm_layers,
        ];
        if sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!("decoder sizes must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MsddParameters {
    pub config: MsddConfig,
    /// `3K -> C` channels, width 1.
    pub conv1: Conv1d,
    /// `C -> C` channels, width 1.
    pub conv2: Conv1d,
    pub fc1: Linear,
    /// Scale-weight logits.
    pub fc2: Linear,
    /// Input `2K`.
    pub lstm: BiLstm,
    /// `2H -> 2` speaker logits.
    pub head: Linear,
}

impl MsddParameters {
    pub fn zeros(config: MsddConfig) -> Result<Self> {
        config.validate()?;
        let k = config.num_scales;
        let c = config.cnn_channels;
        Ok(Self {
            config,
            conv1: Conv1d::zeros(3 * k, c, 1),
            conv2: Conv1d::zeros(c, c, 1),
            fc1: Linear::zeros(c, config.cnn_hidden),
            fc2: Linear::zeros(config.cnn_hidden, k),
            lstm: BiLstm::zeros(2 * k, config.lstm_hidden, config.lstm_layers),
            head: Linear::zeros(2 * config.lstm_hidden, 2),
        })
    }

    pub fn init(config: MsddConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let k = config.num_scales;
        let c = config.cnn_channels;
        let mut init = Initializer::new(seed);
        Ok(Self {
            config,
            conv1: Conv1d::init(3 * k, c, 1, &mut init),
            conv2: Conv1d::init(c, c, 1, &mut init),
            fc1: Linear::init(c, config.cnn_hidden, &mut init),
            fc2: Linear::init(config.cnn_hidden, k, &mut init),
            lstm: BiLstm::init(2 * k, config.lstm_hidden, config.lstm_layers, &mut init),
            head: Linear::init(2 * config.lstm_hidden, 2, &mut init),
        })
    }
}

impl Params for MsddParameters {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        self.conv1.visit(&join(prefix, "conv1"), f);
        self.conv2.visit(&join(prefix, "conv2"), f);
        self.fc1.visit(&join(prefix, "fc1"), f);
        self.fc2.visit(&join(prefix, "fc2"), f);
        self.lstm.visit(&join(prefix, "lstm"), f);
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.conv1.visit_mut(&join(prefix, "conv1"), f);
        self.conv2.visit_mut(&join(prefix, "conv2"), f);
        self.fc1.visit_mut(&join(prefix, "fc1"), f);
        self.fc2.visit_mut(&join(prefix, "fc2"), f);
        self.lstm.visit_mut(&join(prefix, "lstm"), f);
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}

/// Decoder input for a batch of pair sequences.
#[derive(Debug, Clone)]
pub struct PairBatch {
    pub steps: usize,
    pub batch: usize,
    /// `(3K, rows * N_e)`: the `D_i` of every row side by side.
    pub stacked: Array2<f64>,
    /// `(rows, 2K)`: cosines to speaker one's then speaker two's profile.
    pub cosines: Array2<f64>,
}

impl PairBatch {
    pub fn rows(&self) -> usize {
        self.steps * self.batch
    }
}

/// One sequence of a batch: a session, a speaker pair and a step window.
#[derive(Debug, Clone, Copy)]
pub struct PairWindow<'a> {
    pub data: &'a SessionEmbeddings,
    /// `(K, N_e)` profiles of the two speakers.
    pub profiles: [&'a Array2<f64>; 2],
    /// `(N, K)` step-to-profile cosines of the two speakers.
    pub cosines: [&'a Array2<f64>; 2],
    pub start: usize,
}

pub fn build_batch(windows: &[PairWindow<'_>], steps: usize) -> Result<PairBatch> {
    let batch = windows.len();
    let first = windows
        .first()
        .ok_or_else(|| Error::Empty("a batch needs at least one sequence".into()))?;
    let k = first.profiles[0].nrows();
    let dim = first.profiles[0].ncols();
    let rows = steps * batch;
    let mut stacked = Array2::<f64>::zeros((3 * k, rows * dim));
    let mut cosines = Array2::<f64>::zeros((rows, 2 * k));
    for (b, w) in windows.iter().enumerate() {
        if w.start + steps > w.data.num_base() || w.data.embeddings.len() != k || w.data.dim() != dim {
            return Err(Error::ShapeMismatch(format!(
                "window {}..{} does not fit session {} ({} steps, K={}, N_e={})",
                w.start,
                w.start + steps,
                w.data.session_id,
                w.data.num_base(),
                w.data.embeddings.len(),
                w.data.dim()
            )));
        }
        for t in 0..steps {
            let r = t * batch + b;
            let i = w.start + t;
            let cols = r * dim..(r + 1) * dim;
            let mut block = stacked.slice_mut(ndarray::s![.., cols]);
            for (scale, emb) in w.data.embeddings.iter().enumerate() {
                block.row_mut(scale).assign(&emb.row(w.data.segments.group_map[i][scale]));
                block.row_mut(k + scale).assign(&w.profiles[0].row(scale));
                block.row_mut(2 * k + scale).assign(&w.profiles[1].row(scale));
            }
            for s in 0..2 {
                cosines
                    .slice_mut(ndarray::s![r, s * k..(s + 1) * k])
                    .assign(&w.cosines[s].row(i));
            }
        }
    }
    Ok(PairBatch {
        steps,
        batch,
        stacked,
        cosines,
    })
}

/// Activations of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    conv1_out: Array2<f64>,
    conv2_out: Array2<f64>,
    pooled: Array2<f64>,
    fc1_out: Array2<f64>,
    /// `(rows, K)` softmax scale weights.
    pub weights: Array2<f64>,
    /// `(rows, 2K)` context vectors `[c^1; c^2]`.
    pub context: Array2<f64>,
    lstm: BiLstmCache,
    /// `(rows, 2)` speaker posteriors.
    pub probs: Array2<f64>,
}

fn cnn_pool(params: &MsddParameters, stacked: &ArrayView2<f64>, rows: usize) -> Result<(Array2<f64>, Array2<f64>, Array2<f64>)> {
    let dim = params.config.emb_dim;
    if stacked.ncols() != rows * dim {
        return Err(Error::ShapeMismatch(format!(
            "stacked input has {} bins, expected {}",
            stacked.ncols(),
            rows * dim
        )));
    }
    let conv1_out = relu(&params.conv1.forward(stacked)?);
    let conv2_out = relu(&params.conv2.forward(&conv1_out.view())?);
    let c = params.config.cnn_channels;
    let per_step: Array3<f64> = conv2_out
        .view()
        .into_shape_with_order((c, rows, dim))
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?
        .to_owned();
    let pooled = standard(per_step.mean_axis(Axis(2)).expect("non-empty bins").reversed_axes());
    Ok((conv1_out, conv2_out, pooled))
}

/// Scale weights of a single `(3K, N_e)` stack `D_i`.
pub fn scale_weights(params: &MsddParameters, d: &Array2<f64>) -> Result<Vec<f64>> {
    let (_, _, pooled) = cnn_pool(params, &d.view(), 1)?;
    let h = relu(&params.fc1.forward(&pooled.view())?);
    let logits = params.fc2.forward(&h.view())?;
    Ok(softmax_rows(&logits.view()).row(0).to_vec())
}

/// Runs the BiLSTM and output head over `(steps, 2K)` context vectors of one sequence.
pub fn decode_pair(params: &MsddParameters, context: &Array2<f64>) -> Result<Array2<f64>> {
    let cache = params.lstm.forward(&context.view(), 1)?;
    let logits = params.head.forward(&cache.output.view())?;
    Ok(logits.mapv(sigmoid))
}

pub fn forward(params: &MsddParameters, batch: &PairBatch) -> Result<ForwardCache> {
    let rows = batch.rows();
    let k = params.config.num_scales;
    if batch.cosines.dim() != (rows, 2 * k) {
        return Err(Error::ShapeMismatch(format!(
            "cosines are {:?}, expected ({rows}, {})",
            batch.cosines.dim(),
            2 * k
        )));
    }
    let (conv1_out, conv2_out, pooled) = cnn_pool(params, &batch.stacked.view(), rows)?;
    let fc1_out = relu(&params.fc1.forward(&pooled.view())?);
    let weights = softmax_rows(&params.fc2.forward(&fc1_out.view())?.view());
    let mut context = batch.cosines.clone();
    for s in 0..2 {
        let mut half = context.slice_mut(ndarray::s![.., s * k..(s + 1) * k]);
        half *= &weights;
    }
    let lstm = params.lstm.forward(&context.view(), batch.batch)?;
    let probs = params.head.forward(&lstm.output.view())?.mapv(sigmoid);
    Ok(ForwardCache {
        conv1_out,
        conv2_out,
        pooled,
        fc1_out,
        weights,
        context,
        lstm,
        probs,
    })
}

/// Gradients of a loss whose derivative w.r.t. the posteriors is `d_probs`.
pub fn backward(
    params: &MsddParameters,
    batch: &PairBatch,
    cache: &ForwardCache,
    d_probs: &Array2<f64>,
) -> MsddParameters {
    let cfg = params.config;
    let k = cfg.num_scales;
    let dim = cfg.emb_dim;
    let rows = batch.rows();
    let mut grads = MsddParameters::zeros(cfg).expect("validated config");

    let d_logits = d_probs * &cache.probs.mapv(|p| p * (1.0 - p));
    let d_lstm = params.head.backward(&cache.lstm.output.view(), &d_logits, &mut grads.head);
    let d_context = params.lstm.backward(&cache.lstm, &d_lstm, &mut grads.lstm);

    let cos = &batch.cosines;
    let d_weights = &d_context.slice(ndarray::s![.., ..k]) * &cos.slice(ndarray::s![.., ..k])
        + &d_context.slice(ndarray::s![.., k..]) * &cos.slice(ndarray::s![.., k..]);
    let d_wlogits = softmax_rows_backward(&cache.weights, &d_weights);
    let mut d_fc1 = params.fc2.backward(&cache.fc1_out.view(), &d_wlogits, &mut grads.fc2);
    relu_backward(&cache.fc1_out, &mut d_fc1);
    let d_pooled = params.fc1.backward(&cache.pooled.view(), &d_fc1, &mut grads.fc1);

    let c = cfg.cnn_channels;
    let scale = 1.0 / dim as f64;
    let mut d_conv2 = Array2::<f64>::zeros((c, rows * dim));
    for ch in 0..c {
        let mut row = d_conv2.row_mut(ch);
        let dst = row.as_slice_mut().expect("contiguous");
        for r in 0..rows {
            let g = d_pooled[[r, ch]] * scale;
            dst[r * dim..(r + 1) * dim].iter_mut().for_each(|x| *x = g);
        }
    }
    relu_backward(&cache.conv2_out, &mut d_conv2);
    let mut d_conv1 = params
        .conv2
        .backward(&cache.conv1_out.view(), &d_conv2, &mut grads.conv2);
    relu_backward(&cache.conv1_out, &mut d_conv1);
    params
        .conv1
        .backward_params(&batch.stacked.view(), &d_conv1, &mut grads.conv1);
    grads
}

/// Small decoder used by finite-difference checks.
pub fn tiny() -> MsddConfig {
    MsddConfig {
        num_scales: 2,
        emb_dim: 8,
        cnn_channels: 3,
        cnn_hidden: 5,
        lstm_hidden: 4,
        lstm_layers: 2,
    }
}

fn random_batch(cfg: &MsddConfig, steps: usize, batch: usize, rng: &mut ChaCha8Rng) -> PairBatch {
    let rows = steps * batch;
    PairBatch {
        steps,
        batch,
        stacked: Array2::from_shape_fn((3 * cfg.num_scales, rows * cfg.emb_dim), |_| rng.random_range(-1.0..1.0)),
        cosines: Array2::from_shape_fn((rows, 2 * cfg.num_scales), |_| rng.random_range(-1.0..1.0)),
    }
}

/// Finite-difference check of every parameter of a [`tiny`] decoder under
/// the mean BCE loss on a random batch.
pub fn composite_grad_check(seed: u64) -> GradCheckReport {
    let cfg = tiny();
    let params = MsddParameters::init(cfg, seed).expect("valid tiny config");
    let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
    let batch = random_batch(&cfg, 3, 2, &mut rng);
    let targets: Vec<f64> = (0..batch.rows() * 2).map(|_| f64::from(rng.random_bool(0.5))).collect();
    let cache = forward(&params, &batch).expect("shapes fixed");
    let g = bce_grad(cache.probs.as_slice().expect("standard layout"), &targets);
    let d_probs = Array2::from_shape_vec(cache.probs.raw_dim(), g).expect("same shape");
    let grads = backward(&params, &batch, &cache, &d_probs);
    grad_check_params(
        &params,
        &grads,
        |p| bce_loss(forward(p, &batch).expect("shapes fixed").probs.as_slice().expect("standard layout"), &targets),
        COMPOSITE_TOLERANCE,
    )
}
