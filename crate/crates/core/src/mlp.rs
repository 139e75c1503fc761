//! Fully connected beam classifier trained with Adam on cross-entropy.
//!
//! Hidden layers use ReLU, the output is a softmax over the narrow beams.
//! Inputs are standardized with training-set statistics that are stored in
//! the model, so a checkpoint is self-contained.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{invalid, parse_err, Error, Result};
use crate::scene::{Dataset, Split};
use crate::stream;
use crate::textio::{self, Cursor};

pub const HIDDEN: [usize; 3] = [64, 64, 128];
/// Floor applied to probabilities inside the log only.
const PROB_FLOOR: f64 = 1e-12;

/// One affine layer, `out = in . w + b` with `w` shaped `(inputs, outputs)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Scaler {
    pub fn identity(dim: usize) -> Self {
        Scaler {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn fit(x: ArrayView2<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mean: Vec<f64> = x.mean_axis(Axis(0)).map(|m| m.to_vec()).unwrap_or_else(|| vec![0.0; x.ncols()]);
        let scale = x
            .axis_iter(Axis(1))
            .zip(&mean)
            .map(|(col, m)| {
                let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Scaler { mean, scale }
    }

    fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for (mut col, (m, s)) in out.axis_iter_mut(Axis(1)).zip(self.mean.iter().zip(&self.scale)) {
            col.mapv_inplace(|v| (v - m) / s);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_top1: f64,
    pub val_loss: f64,
    pub val_top1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    /// `[input, hidden.., classes]`.
    pub sizes: Vec<usize>,
    pub layers: Vec<Dense>,
    pub scaler: Scaler,
    pub seed: u64,
    pub epochs_trained: usize,
    pub history: Vec<EpochStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Return the parameters of the epoch with the best validation top-1
    /// instead of the last epoch.
    pub keep_best: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            learning_rate: 1e-3,
            batch_size: 128,
            seed: 0,
            keep_best: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return Err(invalid("epochs, batch size and learning rate must be positive"));
        }
        Ok(())
    }
}

/// Standard architecture: `input -> 64 -> 64 -> 128 -> classes`.
pub fn init_model(input_dim: usize, y_classes: usize, seed: u64) -> Result<MlpModel> {
    MlpModel::new(input_dim, &HIDDEN, y_classes, seed)
}

impl MlpModel {
    /// He-uniform weights (`U(-sqrt(6/fan_in), sqrt(6/fan_in))`), zero biases.
    pub fn new(input_dim: usize, hidden: &[usize], y_classes: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || y_classes == 0 || hidden.contains(&0) {
            return Err(invalid("layer sizes must be positive"));
        }
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(y_classes);
        let mut rng = stream::rng(seed, "init");
        let layers = sizes
            .windows(2)
            .map(|pair| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let limit = (6.0 / fan_in as f64).sqrt();
                let w = Array2::from_shape_simple_fn((fan_in, fan_out), || {
                    rng.random_range(-limit..limit)
                });
                Dense {
                    w,
                    b: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(MlpModel {
            sizes,
            layers,
            scaler: Scaler::identity(input_dim),
            seed,
            epochs_trained: 0,
            history: Vec::new(),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn classes(&self) -> usize {
        *self.sizes.last().expect("at least two sizes")
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn is_trained(&self) -> bool {
        self.epochs_trained > 0
    }

    fn check_input(&self, x: ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(invalid(format!(
                "model expects {} inputs, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        Ok(())
    }

    /// Pre-softmax outputs for a batch of raw (unscaled) rows.
    pub fn logits(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        let mut a = self.scaler.apply(x);
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            a = a.dot(&layer.w) + &layer.b;
            if i < last {
                a.mapv_inplace(|v| v.max(0.0));
            }
        }
        Ok(a)
    }

    /// Softmax probabilities, one row per input row.
    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut z = self.logits(x)?;
        softmax_rows(&mut z);
        Ok(z)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x).map_err(|e| invalid(e.to_string()))?;
        Ok(self.predict_proba(view)?.row(0).to_vec())
    }

    /// Mean cross-entropy over the batch and its gradient for every layer.
    /// Rows are raw inputs; the scaler is applied first.
    pub fn loss_and_gradients(&self, x: ArrayView2<f64>, labels: &[usize]) -> Result<(f64, Vec<Dense>)> {
        self.check_input(x)?;
        if labels.len() != x.nrows() || x.nrows() == 0 {
            return Err(invalid("labels must match a non-empty batch"));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= self.classes()) {
            return Err(invalid(format!("label {bad} out of range")));
        }
        let inputs = self.scaler.apply(x);
        let (loss, grads, _) = self.backprop(inputs, labels);
        Ok((loss, grads))
    }

    /// Forward and backward pass on already-scaled inputs. Also returns the
    /// number of rows whose argmax equals the label.
    fn backprop(&self, inputs: Array2<f64>, labels: &[usize]) -> (f64, Vec<Dense>, usize) {
        let n = inputs.nrows() as f64;
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(inputs);
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = acts[i].dot(&layer.w) + &layer.b;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }
        let mut delta = acts.pop().expect("output layer");
        let correct = delta
            .rows()
            .into_iter()
            .zip(labels)
            .filter(|(row, &y)| argmax_row(row.as_slice().expect("contiguous")) == y)
            .count();
        softmax_rows(&mut delta);
        let mut loss = 0.0;
        for (mut row, &y) in delta.rows_mut().into_iter().zip(labels) {
            loss -= row[y].max(PROB_FLOOR).ln();
            row[y] -= 1.0;
        }
        loss /= n;
        delta /= n;

        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let a_prev = &acts[i];
            let gw = a_prev.t().dot(&delta);
            let gb = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut d_prev = delta.dot(&self.layers[i].w.t());
                // ReLU derivative: activations are post-ReLU, so a > 0 marks the active units
                ndarray::Zip::from(&mut d_prev).and(a_prev).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = d_prev;
            }
            grads.push(Dense { w: gw, b: gb });
        }
        grads.reverse();
        (loss, grads, correct)
    }
}

fn argmax_row(row: &[f64]) -> usize {
    crate::channel::argmax(row)
}

/// Numerically stable softmax of each row, in place.
pub fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row /= s;
    }
}

/// `-ln p[label]`, with the probability floored at 1e-12 inside the log.
pub fn cross_entropy(probs: &[f64], label: usize) -> Result<f64> {
    let p = probs
        .get(label)
        .ok_or_else(|| invalid(format!("label {label} out of range")))?;
    Ok(-p.max(PROB_FLOOR).ln())
}

/// Mean cross-entropy over a batch of probability rows.
pub fn batch_cross_entropy(probs: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
    if probs.nrows() != labels.len() || labels.is_empty() {
        return Err(invalid("labels must match a non-empty batch"));
    }
    let mut total = 0.0;
    for (row, &y) in probs.rows().into_iter().zip(labels) {
        total += cross_entropy(row.as_slice().expect("contiguous"), y)?;
    }
    Ok(total / labels.len() as f64)
}

/// Indices of the `k` largest entries, descending; ties go to the lower index.
pub fn top_k(probs: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..probs.len()).collect();
    idx.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

pub fn predict_topk(m: &MlpModel, x: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > m.classes() {
        return Err(invalid(format!("k must be in 1..={}", m.classes())));
    }
    Ok(top_k(&m.forward(x)?, k))
}

struct Adam {
    m: Vec<Dense>,
    v: Vec<Dense>,
    t: i32,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(model: &MlpModel, lr: f64) -> Self {
        let zeros: Vec<Dense> = model
            .layers
            .iter()
            .map(|l| Dense {
                w: Array2::zeros(l.w.raw_dim()),
                b: Array1::zeros(l.b.raw_dim()),
            })
            .collect();
        Adam {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            lr,
        }
    }

    fn step(&mut self, layers: &mut [Dense], grads: &[Dense]) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        let lr = self.lr;
        for (((layer, g), m), v) in layers.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let update = |p: &mut f64, g: &f64, m: &mut f64, v: &mut f64| {
                *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
                *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
            };
            ndarray::Zip::from(&mut layer.w)
                .and(&g.w)
                .and(&mut m.w)
                .and(&mut v.w)
                .for_each(update);
            ndarray::Zip::from(&mut layer.b)
                .and(&g.b)
                .and(&mut m.b)
                .and(&mut v.b)
                .for_each(update);
        }
    }
}

fn gather(x: ArrayView2<f64>, rows: &[usize]) -> Array2<f64> {
    x.select(Axis(0), rows)
}

/// Mean loss and top-1 of a model on scaled inputs.
fn score_scaled(model: &MlpModel, inputs: &Array2<f64>, labels: &[usize]) -> (f64, f64) {
    if labels.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let (loss, _, correct) = model.backprop(inputs.clone(), labels);
    (loss, correct as f64 / labels.len() as f64)
}

/// Mini-batch Adam on in-memory arrays. The scaler is fitted on `x_train`.
pub fn fit(
    model: &mut MlpModel,
    x_train: ArrayView2<f64>,
    y_train: &[usize],
    x_val: ArrayView2<f64>,
    y_val: &[usize],
    cfg: &TrainConfig,
) -> Result<()> {
    cfg.validate()?;
    model.check_input(x_train)?;
    if x_train.nrows() == 0 || x_train.nrows() != y_train.len() || x_val.nrows() != y_val.len() {
        return Err(invalid("training data and labels must be non-empty and aligned"));
    }
    if x_val.nrows() > 0 {
        model.check_input(x_val)?;
    }
    if let Some(&bad) = y_train.iter().chain(y_val).find(|&&y| y >= model.classes()) {
        return Err(invalid(format!("label {bad} out of range")));
    }
    model.scaler = Scaler::fit(x_train);
    let train_in = model.scaler.apply(x_train);
    let val_in = model.scaler.apply(x_val);

    let mut adam = Adam::new(model, cfg.learning_rate);
    let mut order: Vec<usize> = (0..y_train.len()).collect();
    let mut best: Option<(f64, Vec<Dense>)> = None;
    let start = model.epochs_trained;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut stream::rng_indexed(cfg.seed, "shuffle", (start + epoch) as u64));
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for batch in order.chunks(cfg.batch_size) {
            let xb = gather(train_in.view(), batch);
            let yb: Vec<usize> = batch.iter().map(|&i| y_train[i]).collect();
            let (loss, grads, c) = model.backprop(xb, &yb);
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("non-finite loss in epoch {}", start + epoch)));
            }
            loss_sum += loss * batch.len() as f64;
            correct += c;
            adam.step(&mut model.layers, &grads);
        }
        let n = y_train.len() as f64;
        let (val_loss, val_top1) = score_scaled(model, &val_in, y_val);
        let stats = EpochStats {
            epoch: start + epoch,
            train_loss: loss_sum / n,
            train_top1: correct as f64 / n,
            val_loss,
            val_top1,
        };
        model.history.push(stats);
        model.epochs_trained += 1;
        if cfg.keep_best {
            let metric = if y_val.is_empty() { stats.train_top1 } else { val_top1 };
            if best.as_ref().is_none_or(|(b, _)| metric > *b) {
                best = Some((metric, model.layers.clone()));
            }
        }
    }
    if let Some((_, layers)) = best {
        model.layers = layers;
    }
    Ok(())
}

/// Trains on the dataset's train split using feature columns `subset`;
/// the validation split drives best-epoch selection.
pub fn train(model: &mut MlpModel, d: &Dataset, subset: &[usize], cfg: &TrainConfig) -> Result<()> {
    if subset.is_empty() {
        return Err(invalid("feature subset is empty"));
    }
    if let Some(&bad) = subset.iter().find(|&&i| i >= d.m_w) {
        return Err(invalid(format!("feature {bad} out of range for m_w = {}", d.m_w)));
    }
    let tr = d.split(Split::Train);
    let va = d.split(Split::Val);
    let xt = d.features(tr, subset);
    let xv = d.features(va, subset);
    fit(model, xt.view(), &d.labels(tr), xv.view(), &d.labels(va), cfg)
}

const MODEL_KIND: &str = "model";
const MODEL_VERSION: u32 = 1;

pub fn model_to_string(m: &MlpModel) -> String {
    let mut out = textio::header(MODEL_KIND, MODEL_VERSION);
    let _ = writeln!(out, "sizes = {}", textio::join(&m.sizes));
    let _ = writeln!(out, "seed = {}", m.seed);
    let _ = writeln!(out, "epochs_trained = {}", m.epochs_trained);
    let _ = writeln!(out, "scaler_mean = {}", textio::join(&m.scaler.mean));
    let _ = writeln!(out, "scaler_scale = {}", textio::join(&m.scaler.scale));
    let _ = writeln!(out, "history = {}", m.history.len());
    for h in &m.history {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            h.epoch, h.train_loss, h.train_top1, h.val_loss, h.val_top1
        );
    }
    out.push_str("---\n");
    for layer in &m.layers {
        for row in layer.w.rows() {
            let _ = writeln!(out, "{}", textio::join(&row.to_vec()));
        }
        let _ = writeln!(out, "{}", textio::join(&layer.b.to_vec()));
    }
    out
}

pub fn model_from_str(text: &str) -> Result<MlpModel> {
    let mut cur = Cursor::new(text);
    cur.expect_header(MODEL_KIND, MODEL_VERSION)?;
    let (no, s) = cur.expect_kv("sizes")?;
    let sizes: Vec<usize> = textio::parse_list(no, s, "layer size")?;
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(parse_err(no, "need at least two positive layer sizes"));
    }
    let seed: u64 = cur.parse_kv("seed")?;
    let epochs_trained: usize = cur.parse_kv("epochs_trained")?;
    let (no, s) = cur.expect_kv("scaler_mean")?;
    let mean: Vec<f64> = textio::parse_list(no, s, "scaler mean")?;
    let (no2, s) = cur.expect_kv("scaler_scale")?;
    let scale: Vec<f64> = textio::parse_list(no2, s, "scaler scale")?;
    if mean.len() != sizes[0] || scale.len() != sizes[0] {
        return Err(parse_err(no, "scaler length does not match the input size"));
    }
    let n_hist: usize = cur.parse_kv("history")?;
    let mut history = Vec::with_capacity(n_hist);
    for _ in 0..n_hist {
        let (no, line) = cur.expect_line("history row")?;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(parse_err(no, "history rows have 5 fields"));
        }
        history.push(EpochStats {
            epoch: textio::parse_value(no, f[0], "epoch")?,
            train_loss: textio::parse_value(no, f[1], "train loss")?,
            train_top1: textio::parse_value(no, f[2], "train top-1")?,
            val_loss: textio::parse_value(no, f[3], "val loss")?,
            val_top1: textio::parse_value(no, f[4], "val top-1")?,
        });
    }
    let (no, sep) = cur.expect_line("`---` separator")?;
    if sep.trim() != "---" {
        return Err(parse_err(no, "expected `---` separator"));
    }
    let mut layers = Vec::new();
    for pair in sizes.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let mut w = Array2::zeros((fan_in, fan_out));
        for r in 0..fan_in {
            let (no, line) = cur.expect_line("weight row")?;
            let row: Vec<f64> = textio::parse_list(no, line, "weight")?;
            if row.len() != fan_out {
                return Err(parse_err(no, format!("weight row has {} values, expected {fan_out}", row.len())));
            }
            for (c, v) in row.into_iter().enumerate() {
                w[[r, c]] = v;
            }
        }
        let (no, line) = cur.expect_line("bias row")?;
        let b: Vec<f64> = textio::parse_list(no, line, "bias")?;
        if b.len() != fan_out {
            return Err(parse_err(no, format!("bias row has {} values, expected {fan_out}", b.len())));
        }
        layers.push(Dense { w, b: Array1::from(b) });
    }
    Ok(MlpModel {
        sizes,
        layers,
        scaler: Scaler { mean, scale },
        seed,
        epochs_trained,
        history,
    })
}

pub fn save_model(m: &MlpModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, model_to_string(m))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MlpModel> {
    model_from_str(&fs::read_to_string(path)?)
}
