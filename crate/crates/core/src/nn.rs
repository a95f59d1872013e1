//! From-scratch fully-connected feedforward regressor.
//!
//! Hidden layers use rectified-linear activations; the head is a linear
//! 2-output layer. Training is minibatch gradient descent with
//! adaptive-moment updates (decay 0.9/0.999, epsilon 1e-8), per-epoch
//! seeded shuffling, and early stopping on the test-set MSE (patience 20,
//! at most 200 epochs) with best-epoch parameter restore.
//!
//! MSE curves are end-of-epoch evaluations in scaled space, so they can be
//! recomputed from the stored parameters; R² is reported in unscaled target
//! space.

use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::dataset::{Dataset, ScalerParams, Scalers, SplitIndex};
use crate::error::{Error, Result};
use crate::seed::{derive_u64, stream};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPSILON: f64 = 1e-8;
const OUTPUTS: usize = 2;
const MODEL_SCHEMA_VERSION: u32 = 1;

/// One training configuration from the tuning grid.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NetConfig {
    pub hidden_layers: usize,
    pub neurons: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
}

impl NetConfig {
    pub fn new(hidden_layers: usize, neurons: usize, learning_rate: f64, batch_size: usize) -> Self {
        Self {
            hidden_layers,
            neurons,
            learning_rate,
            batch_size,
            max_epochs: 200,
            patience: 20,
        }
    }

    /// Total weight and bias count for a given input width.
    pub fn param_count(&self, input_dim: usize) -> usize {
        let mut count = 0;
        let mut prev = input_dim;
        for _ in 0..self.hidden_layers {
            count += prev * self.neurons + self.neurons;
            prev = self.neurons;
        }
        count + prev * OUTPUTS + OUTPUTS
    }
}

/// The full tuning grid: 4 depths × 4 widths × 3 learning rates × 3 batch
/// sizes = 144 configurations.
pub fn full_grid() -> Vec<NetConfig> {
    let mut grid = Vec::with_capacity(144);
    for &layers in &[1usize, 4, 7, 10] {
        for &neurons in &[100usize, 400, 700, 1000] {
            for &lr in &[1e-3, 4e-4, 1e-4] {
                for &batch in &[1usize, 2, 4] {
                    grid.push(NetConfig::new(layers, neurons, lr, batch));
                }
            }
        }
    }
    grid
}

/// Reduced grid for quick runs: 2 × 2 × 2 × 1 = 8 configurations.
pub fn reduced_grid() -> Vec<NetConfig> {
    let mut grid = Vec::with_capacity(8);
    for &layers in &[1usize, 4] {
        for &neurons in &[100usize, 400] {
            for &lr in &[1e-3, 1e-4] {
                grid.push(NetConfig::new(layers, neurons, lr, 4));
            }
        }
    }
    grid
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
struct Layer {
    in_dim: usize,
    out_dim: usize,
    /// Row-major `[out_dim][in_dim]`.
    weights: Vec<f64>,
    biases: Vec<f64>,
}

/// Trained (or freshly initialized) surrogate regressor with its scalers.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SurrogateNet {
    layers: Vec<Layer>,
    pub input_scaler: ScalerParams,
    pub output_scaler: ScalerParams,
    pub config: NetConfig,
    pub seed: u64,
    pub dataset_hash: String,
}

/// Fan-in-scaled symmetric uniform initialization (limit `sqrt(6/fan_in)`),
/// zero biases. Fully determined by `(config, input_dim, seed)`.
pub fn init_net(config: NetConfig, input_dim: usize, seed: u64) -> SurrogateNet {
    let mut rng = stream(seed, "net-init", &[]);
    let mut layers = Vec::with_capacity(config.hidden_layers + 1);
    let mut prev = input_dim;
    for layer_idx in 0..=config.hidden_layers {
        let out_dim = if layer_idx == config.hidden_layers {
            OUTPUTS
        } else {
            config.neurons
        };
        let limit = (6.0 / prev as f64).sqrt();
        let weights = (0..out_dim * prev)
            .map(|_| rng.gen_range(-limit..limit))
            .collect();
        layers.push(Layer {
            in_dim: prev,
            out_dim,
            weights,
            biases: vec![0.0; out_dim],
        });
        prev = out_dim;
    }
    let identity = |n: usize| ScalerParams {
        mean: vec![0.0; n],
        std: vec![1.0; n],
    };
    SurrogateNet {
        layers,
        input_scaler: identity(input_dim),
        output_scaler: identity(OUTPUTS),
        config,
        seed,
        dataset_hash: String::new(),
    }
}

/// Forward one interleaved block of `W` samples through a layer.
/// `x` is `[in_dim * W]` with sample index fastest, `out` is `[out_dim * W]`.
fn forward_block<const W: usize>(layer: &Layer, x: &[f64], out: &mut [f64], relu: bool) {
    let in_dim = layer.in_dim;
    for o in 0..layer.out_dim {
        let row = &layer.weights[o * in_dim..(o + 1) * in_dim];
        let mut acc = [0.0f64; W];
        for (i, &w) in row.iter().enumerate() {
            let xs = &x[i * W..i * W + W];
            for k in 0..W {
                acc[k] += w * xs[k];
            }
        }
        let b = layer.biases[o];
        let os = &mut out[o * W..(o + 1) * W];
        for k in 0..W {
            let v = acc[k] + b;
            os[k] = if relu && v < 0.0 { 0.0 } else { v };
        }
    }
}

/// Backward pass for one layer on a `W`-wide block: accumulates weight and
/// bias gradients, and (for non-input layers) writes `W^T delta` into
/// `d_prev` masked by the rectifier of the previous activation.
fn backward_block<const W: usize>(
    layer: &Layer,
    a_prev: &[f64],
    delta: &[f64],
    grad_w: &mut [f64],
    grad_b: &mut [f64],
    mut d_prev: Option<&mut [f64]>,
) {
    let in_dim = layer.in_dim;
    if let Some(dp) = d_prev.as_deref_mut() {
        dp.fill(0.0);
    }
    for o in 0..layer.out_dim {
        let dk = &delta[o * W..(o + 1) * W];
        let row = &layer.weights[o * in_dim..(o + 1) * in_dim];
        let grow = &mut grad_w[o * in_dim..(o + 1) * in_dim];
        for i in 0..in_dim {
            let av = &a_prev[i * W..i * W + W];
            let mut s = 0.0;
            for k in 0..W {
                s += dk[k] * av[k];
            }
            grow[i] += s;
        }
        grad_b[o] += dk.iter().sum::<f64>();
        if let Some(dp) = d_prev.as_deref_mut() {
            for (i, &w) in row.iter().enumerate() {
                let dps = &mut dp[i * W..i * W + W];
                for k in 0..W {
                    dps[k] += w * dk[k];
                }
            }
        }
    }
    if let Some(dp) = d_prev {
        // Rectifier mask: activations are post-ReLU, so a > 0 iff z > 0.
        for (d, &a) in dp.iter_mut().zip(a_prev) {
            if a <= 0.0 {
                *d = 0.0;
            }
        }
    }
}

/// Interleaved per-layer activation buffers for blocks of up to 4 samples.
struct Workspace {
    /// `acts[0]` is the input block; `acts[l+1]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl Workspace {
    fn new(net: &SurrogateNet, width: usize) -> Self {
        let mut dims = vec![net.layers[0].in_dim];
        dims.extend(net.layers.iter().map(|l| l.out_dim));
        Self {
            acts: dims.iter().map(|&d| vec![0.0; d * width]).collect(),
            deltas: dims[1..].iter().map(|&d| vec![0.0; d * width]).collect(),
        }
    }
}

fn forward_ws<const W: usize>(net: &SurrogateNet, ws: &mut Workspace) {
    let n_layers = net.layers.len();
    for (l, layer) in net.layers.iter().enumerate() {
        let (before, after) = ws.acts.split_at_mut(l + 1);
        forward_block::<W>(layer, &before[l], &mut after[0], l + 1 < n_layers);
    }
}

impl SurrogateNet {
    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn set_scalers(&mut self, scalers: &Scalers) {
        self.input_scaler = scalers.inputs.clone();
        self.output_scaler = scalers.outputs.clone();
    }

    /// Forward pass in scaled space.
    pub fn forward(&self, x: &[f64]) -> Result<[f64; OUTPUTS]> {
        if x.len() != self.input_dim() {
            return Err(Error::Domain(format!(
                "input has {} features, net expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut ws = Workspace::new(self, 1);
        ws.acts[0].copy_from_slice(x);
        forward_ws::<1>(self, &mut ws);
        let out = ws.acts.last().unwrap();
        Ok([out[0], out[1]])
    }

    /// Forward pass in native units: scales the inputs, unscales the outputs.
    pub fn predict(&self, raw: &[f64]) -> Result<[f64; OUTPUTS]> {
        let scaled = self.input_scaler.transform_vec(raw);
        let out = self.forward(&scaled)?;
        let mut unscaled = [0.0; OUTPUTS];
        self.output_scaler.invert(&out, &mut unscaled);
        Ok(unscaled)
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Flat parameter accessors (weights row-major, then biases, per layer).
    pub fn get_param(&self, mut index: usize) -> f64 {
        for l in &self.layers {
            if index < l.weights.len() {
                return l.weights[index];
            }
            index -= l.weights.len();
            if index < l.biases.len() {
                return l.biases[index];
            }
            index -= l.biases.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set_param(&mut self, mut index: usize, value: f64) {
        for l in &mut self.layers {
            if index < l.weights.len() {
                l.weights[index] = value;
                return;
            }
            index -= l.weights.len();
            if index < l.biases.len() {
                l.biases[index] = value;
                return;
            }
            index -= l.biases.len();
        }
        panic!("parameter index out of range");
    }

    /// Smallest |pre-activation| over every hidden unit and sample. Finite
    /// differences on the rectifier are only trustworthy when this margin
    /// comfortably exceeds the probe step.
    pub fn hidden_preactivation_margin(&self, xs: &[Vec<f64>]) -> f64 {
        let mut margin = f64::INFINITY;
        let hidden = self.layers.len() - 1;
        for x in xs {
            let mut a = x.clone();
            for layer in &self.layers[..hidden] {
                let mut z = vec![0.0; layer.out_dim];
                forward_block::<1>(layer, &a, &mut z, false);
                for v in &mut z {
                    margin = margin.min(v.abs());
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                a = z;
            }
        }
        margin
    }

    /// Training loss on a batch in scaled space: `sum (yhat - y)^2 / (n * 2)`.
    pub fn batch_loss(&self, xs: &[Vec<f64>], ys: &[[f64; OUTPUTS]]) -> f64 {
        let mut acc = 0.0;
        for (x, y) in xs.iter().zip(ys) {
            let out = self.forward(x).expect("dimension mismatch");
            for k in 0..OUTPUTS {
                let d = out[k] - y[k];
                acc += d * d;
            }
        }
        acc / (xs.len() * OUTPUTS) as f64
    }

    /// Analytic gradients of [`Self::batch_loss`] with respect to every
    /// parameter, in the same flat order as [`Self::get_param`].
    pub fn batch_gradients(&self, xs: &[Vec<f64>], ys: &[[f64; OUTPUTS]]) -> Vec<f64> {
        let mut grad_w: Vec<Vec<f64>> = self.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect();
        let mut grad_b: Vec<Vec<f64>> = self.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect();
        let mut ws = Workspace::new(self, 1);
        let scale = 2.0 / (xs.len() * OUTPUTS) as f64;
        for (x, y) in xs.iter().zip(ys) {
            ws.acts[0].copy_from_slice(x);
            forward_ws::<1>(self, &mut ws);
            let out = ws.acts.last().unwrap();
            let head = ws.deltas.last_mut().unwrap();
            for k in 0..OUTPUTS {
                head[k] = scale * (out[k] - y[k]);
            }
            self.backprop::<1>(&mut ws, &mut grad_w, &mut grad_b);
        }
        let mut flat = Vec::with_capacity(self.param_count());
        for (gw, gb) in grad_w.iter().zip(&grad_b) {
            flat.extend_from_slice(gw);
            flat.extend_from_slice(gb);
        }
        flat
    }

    /// Backward through all layers; expects the head delta in the last
    /// `deltas` buffer and activations from a matching forward pass.
    fn backprop<const W: usize>(
        &self,
        ws: &mut Workspace,
        grad_w: &mut [Vec<f64>],
        grad_b: &mut [Vec<f64>],
    ) {
        for l in (0..self.layers.len()).rev() {
            let (d_before, d_rest) = ws.deltas.split_at_mut(l);
            let d_prev = if l > 0 { Some(&mut d_before[l - 1][..]) } else { None };
            backward_block::<W>(
                &self.layers[l],
                &ws.acts[l],
                &d_rest[0],
                &mut grad_w[l],
                &mut grad_b[l],
                d_prev,
            );
        }
    }
}

/// Aggregate mean squared error over a scalar series.
pub fn mse_1d(y: &[f64], yhat: &[f64]) -> f64 {
    assert_eq!(y.len(), yhat.len());
    assert!(!y.is_empty());
    y.iter()
        .zip(yhat)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / y.len() as f64
}

/// Coefficient of determination over a scalar series; errors when the
/// targets carry no variance.
pub fn r2_1d(y: &[f64], yhat: &[f64]) -> Result<f64> {
    assert_eq!(y.len(), yhat.len());
    assert!(!y.is_empty());
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Metric(
            "r2 undefined: target variance is zero".into(),
        ));
    }
    let ss_res: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Per-output MSE averaged uniformly over the two outputs.
pub fn mse(y: &[[f64; OUTPUTS]], yhat: &[[f64; OUTPUTS]]) -> f64 {
    let col = |rows: &[[f64; OUTPUTS]], k: usize| rows.iter().map(|r| r[k]).collect::<Vec<f64>>();
    (0..OUTPUTS)
        .map(|k| mse_1d(&col(y, k), &col(yhat, k)))
        .sum::<f64>()
        / OUTPUTS as f64
}

/// Per-output R² plus their uniform average.
pub fn r2(y: &[[f64; OUTPUTS]], yhat: &[[f64; OUTPUTS]]) -> Result<([f64; OUTPUTS], f64)> {
    let col = |rows: &[[f64; OUTPUTS]], k: usize| rows.iter().map(|r| r[k]).collect::<Vec<f64>>();
    let mut per = [0.0; OUTPUTS];
    for (k, out) in per.iter_mut().enumerate() {
        *out = r2_1d(&col(y, k), &col(yhat, k))?;
    }
    Ok((per, per.iter().sum::<f64>() / OUTPUTS as f64))
}

/// Scaled train/test matrices plus unscaled test targets for R² reporting.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train_x: Vec<Vec<f64>>,
    pub train_y: Vec<[f64; OUTPUTS]>,
    pub test_x: Vec<Vec<f64>>,
    pub test_y: Vec<[f64; OUTPUTS]>,
    pub test_y_raw: Vec<[f64; OUTPUTS]>,
}

pub fn prepare_training_data(ds: &Dataset, split: &SplitIndex, scalers: &Scalers) -> PreparedData {
    let scale_x = |i: &usize| scalers.inputs.transform_vec(&ds.samples[*i].inputs);
    let scale_y = |i: &usize| {
        let mut out = [0.0; OUTPUTS];
        scalers.outputs.transform(&ds.samples[*i].outputs, &mut out);
        out
    };
    PreparedData {
        train_x: split.train.iter().map(scale_x).collect(),
        train_y: split.train.iter().map(scale_y).collect(),
        test_x: split.test.iter().map(scale_x).collect(),
        test_y: split.test.iter().map(scale_y).collect(),
        test_y_raw: split.test.iter().map(|&i| ds.samples[i].outputs).collect(),
    }
}

/// Early-stopping bookkeeping: strict improvements reset the patience window.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best_mse: f64,
    pub best_epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best_mse: f64::INFINITY,
            best_epoch: 0,
        }
    }

    /// Returns `(improved, stop)` after observing the epoch's test MSE.
    pub fn observe(&mut self, epoch: usize, test_mse: f64) -> (bool, bool) {
        let improved = test_mse < self.best_mse;
        if improved {
            self.best_mse = test_mse;
            self.best_epoch = epoch;
        }
        let stop = epoch - self.best_epoch >= self.patience;
        (improved, stop)
    }
}

/// Training outcome: per-epoch loss curves and test metrics at the restored
/// best epoch.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub train_mse_curve: Vec<f64>,
    pub test_mse_curve: Vec<f64>,
    /// Per-output R² in unscaled target space.
    pub test_r2: [f64; OUTPUTS],
    pub test_r2_aggregate: f64,
}

struct AdamState {
    m_w: Vec<Vec<f64>>,
    v_w: Vec<Vec<f64>>,
    m_b: Vec<Vec<f64>>,
    v_b: Vec<Vec<f64>>,
    step: i32,
}

impl AdamState {
    fn new(layers: &[Layer]) -> Self {
        Self {
            m_w: layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            v_w: layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            m_b: layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
            v_b: layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
            step: 0,
        }
    }
}

fn adam_update(params: &mut [f64], grads: &[f64], m: &mut [f64], v: &mut [f64], lr: f64, step: i32) {
    let one_minus_b1 = 1.0 - BETA1;
    let one_minus_b2 = 1.0 - BETA2;
    let bc1 = 1.0 - BETA1.powi(step);
    let bc2 = 1.0 - BETA2.powi(step);
    for i in 0..params.len() {
        let g = grads[i];
        let mi = BETA1 * m[i] + one_minus_b1 * g;
        let vi = BETA2 * v[i] + one_minus_b2 * g * g;
        m[i] = mi;
        v[i] = vi;
        params[i] -= lr * (mi / bc1) / ((vi / bc2).sqrt() + ADAM_EPSILON);
    }
}

/// Packs `rows[indices]` into an interleaved `[dim * W]` block; unused lanes
/// keep stale values and are neutralized by zero deltas.
fn pack_block<const W: usize>(rows: &[Vec<f64>], idx: &[usize], dim: usize, out: &mut [f64]) {
    for (k, &r) in idx.iter().enumerate() {
        let row = &rows[r];
        for i in 0..dim {
            out[i * W + k] = row[i];
        }
    }
}

/// Evaluation MSE (scaled space) over a whole set, four samples at a time.
fn eval_mse(net: &SurrogateNet, xs: &[Vec<f64>], ys: &[[f64; OUTPUTS]], ws: &mut Workspace) -> f64 {
    let dim = net.input_dim();
    let mut acc = 0.0;
    let idx: Vec<usize> = (0..xs.len()).collect();
    for chunk in idx.chunks(4) {
        pack_block::<4>(xs, chunk, dim, &mut ws.acts[0]);
        forward_ws::<4>(net, ws);
        let out = ws.acts.last().unwrap();
        for (k, &r) in chunk.iter().enumerate() {
            for j in 0..OUTPUTS {
                let d = out[j * 4 + k] - ys[r][j];
                acc += d * d;
            }
        }
    }
    acc / (xs.len() * OUTPUTS) as f64
}

/// Predictions over a set in scaled space (one row per sample).
fn eval_predictions(net: &SurrogateNet, xs: &[Vec<f64>]) -> Vec<[f64; OUTPUTS]> {
    let mut ws = Workspace::new(net, 4);
    let dim = net.input_dim();
    let mut preds = vec![[0.0; OUTPUTS]; xs.len()];
    let idx: Vec<usize> = (0..xs.len()).collect();
    for chunk in idx.chunks(4) {
        pack_block::<4>(xs, chunk, dim, &mut ws.acts[0]);
        forward_ws::<4>(net, &mut ws);
        let out = ws.acts.last().unwrap();
        for (k, &r) in chunk.iter().enumerate() {
            for j in 0..OUTPUTS {
                preds[r][j] = out[j * 4 + k];
            }
        }
    }
    preds
}

/// Mutable per-training buffers: activations, gradient accumulators, and
/// optimizer moments.
struct TrainState {
    ws: Workspace,
    grad_w: Vec<Vec<f64>>,
    grad_b: Vec<Vec<f64>>,
    adam: AdamState,
}

impl TrainState {
    fn new(net: &SurrogateNet) -> Self {
        Self {
            ws: Workspace::new(net, 4),
            grad_w: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            grad_b: net.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
            adam: AdamState::new(&net.layers),
        }
    }
}

fn train_step<const W: usize>(
    net: &mut SurrogateNet,
    data: &PreparedData,
    batch: &[usize],
    state: &mut TrainState,
) -> f64 {
    let loss_scale = 2.0 / (batch.len() * OUTPUTS) as f64;
    let ws = &mut state.ws;
    pack_block::<W>(&data.train_x, batch, net.input_dim(), &mut ws.acts[0]);
    forward_ws::<W>(net, ws);
    let out = ws.acts.last().unwrap();
    let head = ws.deltas.last_mut().unwrap();
    head.fill(0.0);
    let mut batch_sq = 0.0;
    for (k, &r) in batch.iter().enumerate() {
        for j in 0..OUTPUTS {
            let d = out[j * W + k] - data.train_y[r][j];
            batch_sq += d * d;
            head[j * W + k] = loss_scale * d;
        }
    }
    for g in state.grad_w.iter_mut() {
        g.fill(0.0);
    }
    for g in state.grad_b.iter_mut() {
        g.fill(0.0);
    }
    net.backprop::<W>(ws, &mut state.grad_w, &mut state.grad_b);
    state.adam.step += 1;
    let lr = net.config.learning_rate;
    for l in 0..net.layers.len() {
        adam_update(
            &mut net.layers[l].weights,
            &state.grad_w[l],
            &mut state.adam.m_w[l],
            &mut state.adam.v_w[l],
            lr,
            state.adam.step,
        );
        adam_update(
            &mut net.layers[l].biases,
            &state.grad_b[l],
            &mut state.adam.m_b[l],
            &mut state.adam.v_b[l],
            lr,
            state.adam.step,
        );
    }
    batch_sq / (batch.len() * OUTPUTS) as f64
}

/// Trains in place; the net ends at the parameters of the best test epoch.
pub fn train(net: &mut SurrogateNet, data: &PreparedData, seed: u64) -> Result<TrainReport> {
    use rand::seq::SliceRandom;
    let batch_size = net.config.batch_size;
    assert!((1..=4).contains(&batch_size), "batch size must be 1..=4");
    let mut rng = stream(seed, "epoch-shuffle", &[]);
    let mut order: Vec<usize> = (0..data.train_x.len()).collect();
    let mut state = TrainState::new(net);
    let mut stopper = EarlyStopping::new(net.config.patience);
    let mut best_params: Option<Vec<Layer>> = None;
    let mut train_curve = Vec::new();
    let mut test_curve = Vec::new();

    for epoch in 0..net.config.max_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(batch_size) {
            let loss = match batch.len() {
                1 => train_step::<1>(net, data, batch, &mut state),
                2 => train_step::<2>(net, data, batch, &mut state),
                3 => train_step::<3>(net, data, batch, &mut state),
                4 => train_step::<4>(net, data, batch, &mut state),
                _ => unreachable!(),
            };
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
        }
        let train_mse = eval_mse(net, &data.train_x, &data.train_y, &mut state.ws);
        let test_mse = eval_mse(net, &data.test_x, &data.test_y, &mut state.ws);
        if !train_mse.is_finite() || !test_mse.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        train_curve.push(train_mse);
        test_curve.push(test_mse);
        let (improved, stop) = stopper.observe(epoch, test_mse);
        if improved {
            best_params = Some(net.layers.clone());
        }
        if stop {
            break;
        }
    }

    if let Some(best) = best_params {
        net.layers = best;
    }
    let preds_scaled = eval_predictions(net, &data.test_x);
    let mut preds_raw = vec![[0.0; OUTPUTS]; preds_scaled.len()];
    for (raw, scaled) in preds_raw.iter_mut().zip(&preds_scaled) {
        net.output_scaler.invert(scaled, raw);
    }
    let (per_output, aggregate) = r2(&data.test_y_raw, &preds_raw)?;

    Ok(TrainReport {
        epochs_run: train_curve.len(),
        best_epoch: stopper.best_epoch,
        train_mse_curve: train_curve,
        test_mse_curve: test_curve,
        test_r2: per_output,
        test_r2_aggregate: aggregate,
    })
}

/// Selection rule for the tuning grid: highest aggregate test R², ties broken
/// by fewer parameters, then by lower grid index. `None` when every entry is
/// absent (diverged) or non-finite.
pub fn select_best(scores: &[Option<(f64, usize)>]) -> Option<usize> {
    let mut best: Option<(usize, f64, usize)> = None;
    for (idx, entry) in scores.iter().enumerate() {
        let Some((r2, params)) = *entry else {
            continue;
        };
        if !r2.is_finite() {
            continue;
        }
        let better = match best {
            None => true,
            Some((_, best_r2, best_params)) => {
                r2 > best_r2 || (r2 == best_r2 && params < best_params)
            }
        };
        if better {
            best = Some((idx, r2, params));
        }
    }
    best.map(|(idx, _, _)| idx)
}

/// Grid-search outcome: per-config reports aligned with the input grid
/// (`None` marks a diverged run) and the retrained best net.
pub struct GridSearchResult {
    pub best_index: usize,
    pub best_net: SurrogateNet,
    pub reports: Vec<Option<TrainReport>>,
}

/// Trains the configuration at `grid_index` with its grid-derived seeds.
/// `(dataset hash, config, seed)` fully determine the result, so repeating
/// this call reproduces the exact net the grid scan trained.
pub fn train_config(
    ds: &Dataset,
    split: &SplitIndex,
    scalers: &Scalers,
    config: NetConfig,
    seed: u64,
    grid_index: usize,
) -> Result<(SurrogateNet, TrainReport)> {
    let data = prepare_training_data(ds, split, scalers);
    let mut net = init_net(
        config,
        ds.samples[0].inputs.len(),
        derive_u64(seed, "grid-init", &[grid_index as u64]),
    );
    net.set_scalers(scalers);
    net.dataset_hash = crate::dataset::dataset_hash(ds);
    let report = train(&mut net, &data, derive_u64(seed, "grid-train", &[grid_index as u64]))?;
    Ok((net, report))
}

/// Trains one net per configuration in parallel and returns the reports
/// (nets are dropped; `None` marks a diverged run).
pub fn grid_reports(
    ds: &Dataset,
    split: &SplitIndex,
    scalers: &Scalers,
    grid: &[NetConfig],
    seed: u64,
) -> Vec<Option<TrainReport>> {
    assert!(!grid.is_empty(), "empty tuning grid");
    grid.par_iter()
        .enumerate()
        .map(|(idx, &config)| {
            train_config(ds, split, scalers, config, seed, idx)
                .ok()
                .map(|(_, report)| report)
        })
        .collect()
}

/// Full grid search: scan every configuration, select the best by aggregate
/// test R² (ties: fewer parameters, then lower index), and retrain the
/// winner deterministically.
pub fn grid_search(
    ds: &Dataset,
    split: &SplitIndex,
    scalers: &Scalers,
    grid: &[NetConfig],
    seed: u64,
) -> Result<GridSearchResult> {
    let input_dim = ds.samples[0].inputs.len();
    let reports = grid_reports(ds, split, scalers, grid, seed);
    let scores: Vec<Option<(f64, usize)>> = reports
        .iter()
        .enumerate()
        .map(|(idx, r)| {
            r.as_ref()
                .map(|rep| (rep.test_r2_aggregate, grid[idx].param_count(input_dim)))
        })
        .collect();
    let best_index = select_best(&scores).ok_or_else(|| {
        Error::Config("grid search failed: every configuration diverged".into())
    })?;
    let (best_net, _) = train_config(ds, split, scalers, grid[best_index], seed, best_index)
        .map_err(|e| Error::Config(format!("best config failed to retrain: {e}")))?;
    Ok(GridSearchResult {
        best_index,
        best_net,
        reports,
    })
}

#[derive(serde::Serialize, serde::Deserialize)]
struct ModelFile {
    schema_version: u32,
    net: SurrogateNet,
}

pub fn save_net(net: &SurrogateNet, path: &Path) -> Result<()> {
    let file = ModelFile {
        schema_version: MODEL_SCHEMA_VERSION,
        net: net.clone(),
    };
    let json = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::Schema(format!("model serialize: {e}")))?;
    fs::write(path, json)?;
    Ok(())
}

pub fn load_net(path: &Path) -> Result<SurrogateNet> {
    let text = fs::read_to_string(path)?;
    let file: ModelFile =
        serde_json::from_str(&text).map_err(|e| Error::Schema(format!("model parse: {e}")))?;
    if file.schema_version != MODEL_SCHEMA_VERSION {
        return Err(Error::Schema(format!(
            "model schema version {} unsupported (expected {MODEL_SCHEMA_VERSION})",
            file.schema_version
        )));
    }
    let net = file.net;
    let mut prev = net.layers[0].in_dim;
    for (i, l) in net.layers.iter().enumerate() {
        if l.in_dim != prev || l.weights.len() != l.in_dim * l.out_dim || l.biases.len() != l.out_dim
        {
            return Err(Error::Schema(format!("layer {i} has inconsistent shape")));
        }
        if l.weights.iter().chain(&l.biases).any(|v| !v.is_finite()) {
            return Err(Error::Schema(format!("layer {i} has non-finite values")));
        }
        prev = l.out_dim;
    }
    if prev != OUTPUTS {
        return Err(Error::Schema(format!(
            "head width {prev} does not match the {OUTPUTS}-output schema"
        )));
    }
    Ok(net)
}
