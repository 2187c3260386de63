//! Two-layer LSTM sequence classifier with hand-written backpropagation
//! through time and Adam.
//!
//! Each time step consumes one Doppler spectrum (input dimension `L`). The
//! last hidden state of the top layer goes through an affine head to two
//! class scores, `[other, uav]`. Gate order inside the packed weight
//! matrices is input, forget, cell, output.
//!
//! All parameters live in one flat `Vec<f64>` described by a name/shape
//! layout, which is also the on-disk representation.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng, substream};

pub const CLASSES: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-5,
            batch_size: 10,
            epochs: 30,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmDetector {
    pub input_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub params: Vec<f64>,
    layout: Vec<TensorSpec>,
}

fn build_layout(input_dim: usize, hidden: usize, layers: usize) -> Vec<TensorSpec> {
    let mut specs = Vec::new();
    let mut offset = 0;
    let mut push = |name: String, shape: Vec<usize>| {
        let len: usize = shape.iter().product();
        specs.push(TensorSpec { name, shape, offset });
        offset += len;
    };
    for l in 0..layers {
        let inp = if l == 0 { input_dim } else { hidden };
        push(format!("lstm{l}.w_x"), vec![inp, 4 * hidden]);
        push(format!("lstm{l}.w_h"), vec![hidden, 4 * hidden]);
        push(format!("lstm{l}.b"), vec![4 * hidden]);
    }
    push("head.w".into(), vec![hidden, CLASSES]);
    push("head.b".into(), vec![CLASSES]);
    specs
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Activations of one layer at one time step, kept for the backward pass.
struct StepCache {
    input: Array2<f64>,
    h_prev: Array2<f64>,
    c_prev: Array2<f64>,
    i: Array2<f64>,
    f: Array2<f64>,
    g: Array2<f64>,
    o: Array2<f64>,
    tanh_c: Array2<f64>,
}

impl LstmDetector {
    /// Weights uniform in `±1/√hidden`, biases zero except the forget gate
    /// bias at 1.
    pub fn new(input_dim: usize, hidden: usize, layers: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || hidden == 0 || layers == 0 {
            return Err(Error::invalid("lstm dims", "input, hidden and layers must be >= 1"));
        }
        let layout = build_layout(input_dim, hidden, layers);
        let total = layout.last().map_or(0, |t| t.offset + t.len());
        let mut params = vec![0.0; total];
        let mut r = rng(derive_seed(seed, "lstm/init"));
        let bound = 1.0 / (hidden as f64).sqrt();
        for spec in &layout {
            let slice = &mut params[spec.offset..spec.offset + spec.len()];
            if spec.shape.len() == 2 {
                slice
                    .iter_mut()
                    .for_each(|p| *p = (2.0 * r.random::<f64>() - 1.0) * bound);
            } else if spec.name.starts_with("lstm") {
                slice[hidden..2 * hidden].iter_mut().for_each(|p| *p = 1.0);
            }
        }
        Ok(Self {
            input_dim,
            hidden,
            layers,
            params,
            layout,
        })
    }

    /// Rebuilds a detector from a flat parameter vector.
    pub fn from_params(input_dim: usize, hidden: usize, layers: usize, params: Vec<f64>) -> Result<Self> {
        let layout = build_layout(input_dim, hidden, layers);
        let total = layout.last().map_or(0, |t| t.offset + t.len());
        if params.len() != total {
            return Err(Error::ShapeMismatch {
                context: "LstmDetector::from_params",
                expected: format!("{total} parameters"),
                actual: format!("{}", params.len()),
            });
        }
        Ok(Self {
            input_dim,
            hidden,
            layers,
            params,
            layout,
        })
    }

    pub fn layout(&self) -> &[TensorSpec] {
        &self.layout
    }

    fn spec(&self, name: &str) -> &TensorSpec {
        self.layout
            .iter()
            .find(|t| t.name == name)
            .expect("tensor name from build_layout")
    }

    fn mat<'a>(&self, params: &'a [f64], name: &str) -> ArrayView2<'a, f64> {
        let t = self.spec(name);
        ArrayView2::from_shape((t.shape[0], t.shape[1]), &params[t.offset..t.offset + t.len()])
            .expect("layout shape")
    }

    fn vec<'a>(&self, params: &'a [f64], name: &str) -> ArrayView1<'a, f64> {
        let t = self.spec(name);
        ArrayView1::from(&params[t.offset..t.offset + t.len()])
    }

    fn check_shape(&self, seq: &ArrayView2<'_, f64>) -> Result<()> {
        if seq.ncols() != self.input_dim || seq.nrows() == 0 {
            return Err(Error::ShapeMismatch {
                context: "lstm input",
                expected: format!("[W x {}] with W >= 1", self.input_dim),
                actual: format!("[{} x {}]", seq.nrows(), seq.ncols()),
            });
        }
        Ok(())
    }

    /// Batched forward pass. `batch` holds sequences of equal length;
    /// returns the `[B × 2]` scores and, when `keep` is set, per-layer caches.
    fn forward_batch(&self, batch: &[ArrayView2<'_, f64>], keep: bool) -> (Array2<f64>, Vec<Vec<StepCache>>, Array2<f64>) {
        let b = batch.len();
        let steps = batch[0].nrows();
        let h = self.hidden;
        let p = &self.params;
        // Time-major inputs: [B × in] per step.
        let mut inputs: Vec<Array2<f64>> = (0..steps)
            .map(|t| {
                let mut x = Array2::zeros((b, self.input_dim));
                for (k, seq) in batch.iter().enumerate() {
                    x.row_mut(k).assign(&seq.row(t));
                }
                x
            })
            .collect();
        let mut caches = Vec::new();
        for layer in 0..self.layers {
            let w_x = self.mat(p, &format!("lstm{layer}.w_x"));
            let w_h = self.mat(p, &format!("lstm{layer}.w_h"));
            let bias = self.vec(p, &format!("lstm{layer}.b"));
            let mut h_t = Array2::<f64>::zeros((b, h));
            let mut c_t = Array2::<f64>::zeros((b, h));
            let mut layer_cache = Vec::new();
            let mut outputs = Vec::with_capacity(steps);
            for x in inputs.iter() {
                let mut a = x.dot(&w_x) + h_t.dot(&w_h);
                a += &bias;
                let i = a.slice(s![.., 0..h]).mapv(sigmoid);
                let f = a.slice(s![.., h..2 * h]).mapv(sigmoid);
                let g = a.slice(s![.., 2 * h..3 * h]).mapv(f64::tanh);
                let o = a.slice(s![.., 3 * h..4 * h]).mapv(sigmoid);
                let c_new = &f * &c_t + &i * &g;
                let tanh_c = c_new.mapv(f64::tanh);
                let h_new = &o * &tanh_c;
                if keep {
                    layer_cache.push(StepCache {
                        input: x.clone(),
                        h_prev: h_t.clone(),
                        c_prev: c_t.clone(),
                        i,
                        f,
                        g,
                        o,
                        tanh_c,
                    });
                }
                h_t = h_new;
                c_t = c_new;
                outputs.push(h_t.clone());
            }
            caches.push(layer_cache);
            inputs = outputs;
        }
        let last = inputs.pop().expect("at least one step");
        let scores = last.dot(&self.mat(p, "head.w")) + self.vec(p, "head.b");
        (scores, caches, last)
    }

    /// Class scores `[other, uav]` for one `[W × L]` sequence.
    pub fn forward(&self, seq: ArrayView2<'_, f64>) -> Result<[f64; CLASSES]> {
        self.check_shape(&seq)?;
        let (scores, _, _) = self.forward_batch(&[seq], false);
        Ok([scores[[0, 0]], scores[[0, 1]]])
    }

    pub fn predict(&self, seq: ArrayView2<'_, f64>) -> Result<usize> {
        let s = self.forward(seq)?;
        Ok(usize::from(s[1] > s[0]))
    }

    /// Softmax probability of the UAV class.
    pub fn uav_probability(&self, seq: ArrayView2<'_, f64>) -> Result<f64> {
        let s = self.forward(seq)?;
        Ok(softmax(&s)[1])
    }

    fn validate_batch(&self, batch: &[(ArrayView2<'_, f64>, usize)]) -> Result<()> {
        let first = batch.first().ok_or(Error::Empty("batch"))?;
        for (seq, y) in batch {
            self.check_shape(seq)?;
            if seq.nrows() != first.0.nrows() {
                return Err(Error::ShapeMismatch {
                    context: "lstm batch",
                    expected: format!("{} steps", first.0.nrows()),
                    actual: format!("{}", seq.nrows()),
                });
            }
            if *y >= CLASSES {
                return Err(Error::OutOfRange {
                    what: "class label",
                    detail: format!("{y}"),
                });
            }
        }
        Ok(())
    }

    /// Mean cross-entropy over the batch.
    pub fn loss(&self, batch: &[(ArrayView2<'_, f64>, usize)]) -> Result<f64> {
        self.validate_batch(batch)?;
        let seqs: Vec<_> = batch.iter().map(|(s, _)| *s).collect();
        let (scores, _, _) = self.forward_batch(&seqs, false);
        Ok(cross_entropy(&scores, batch.iter().map(|(_, y)| *y)).0)
    }

    /// Mean cross-entropy and its gradient with respect to every parameter.
    pub fn loss_and_grad(&self, batch: &[(ArrayView2<'_, f64>, usize)]) -> Result<(f64, Vec<f64>)> {
        self.validate_batch(batch)?;
        let seqs: Vec<_> = batch.iter().map(|(s, _)| *s).collect();
        let (scores, caches, last_h) = self.forward_batch(&seqs, true);
        let (loss, d_scores) = cross_entropy(&scores, batch.iter().map(|(_, y)| *y));

        let h = self.hidden;
        let b = batch.len();
        let steps = seqs[0].nrows();
        let mut grad = vec![0.0; self.params.len()];
        let p = &self.params;

        {
            let t = self.spec("head.w");
            let gw = last_h.t().dot(&d_scores);
            grad[t.offset..t.offset + t.len()].copy_from_slice(gw.as_standard_layout().as_slice().expect("contiguous"));
            let t = self.spec("head.b");
            let gb = d_scores.sum_axis(Axis(0));
            grad[t.offset..t.offset + t.len()].copy_from_slice(gb.as_slice().expect("contiguous"));
        }

        // Gradient flowing into each step's hidden output from above.
        let mut d_out: Vec<Array2<f64>> = vec![Array2::zeros((b, h)); steps];
        d_out[steps - 1] = d_scores.dot(&self.mat(p, "head.w").t());

        for layer in (0..self.layers).rev() {
            let w_x = self.mat(p, &format!("lstm{layer}.w_x"));
            let w_h = self.mat(p, &format!("lstm{layer}.w_h"));
            let in_dim = w_x.nrows();
            let mut g_wx = Array2::<f64>::zeros((in_dim, 4 * h));
            let mut g_wh = Array2::<f64>::zeros((h, 4 * h));
            let mut g_b = Array1::<f64>::zeros(4 * h);
            let mut dh_rec = Array2::<f64>::zeros((b, h));
            let mut dc_rec = Array2::<f64>::zeros((b, h));
            let mut d_in: Vec<Array2<f64>> = Vec::with_capacity(steps);
            for t in (0..steps).rev() {
                let c = &caches[layer][t];
                let dh = &d_out[t] + &dh_rec;
                let d_o = &dh * &c.tanh_c;
                let dc = &dc_rec + &(&dh * &c.o * &c.tanh_c.mapv(|v| 1.0 - v * v));
                let d_i = &dc * &c.g;
                let d_g = &dc * &c.i;
                let d_f = &dc * &c.c_prev;
                dc_rec = &dc * &c.f;
                let mut da = Array2::<f64>::zeros((b, 4 * h));
                da.slice_mut(s![.., 0..h]).assign(&(&d_i * &c.i.mapv(|v| v * (1.0 - v))));
                da.slice_mut(s![.., h..2 * h]).assign(&(&d_f * &c.f.mapv(|v| v * (1.0 - v))));
                da.slice_mut(s![.., 2 * h..3 * h]).assign(&(&d_g * &c.g.mapv(|v| 1.0 - v * v)));
                da.slice_mut(s![.., 3 * h..4 * h]).assign(&(&d_o * &c.o.mapv(|v| v * (1.0 - v))));
                g_wx += &c.input.t().dot(&da);
                g_wh += &c.h_prev.t().dot(&da);
                g_b += &da.sum_axis(Axis(0));
                dh_rec = da.dot(&w_h.t());
                if layer > 0 {
                    d_in.push(da.dot(&w_x.t()));
                }
            }
            for (name, g) in [
                (format!("lstm{layer}.w_x"), g_wx.into_raw_vec_and_offset().0),
                (format!("lstm{layer}.w_h"), g_wh.into_raw_vec_and_offset().0),
                (format!("lstm{layer}.b"), g_b.to_vec()),
            ] {
                let t = self.spec(&name);
                grad[t.offset..t.offset + t.len()].copy_from_slice(&g);
            }
            if layer > 0 {
                d_in.reverse();
                d_out = d_in;
            }
        }
        Ok((loss, grad))
    }

    /// Mini-batch Adam on mean cross-entropy. Batch order is a seeded
    /// shuffle per epoch, so a fixed seed gives bit-identical parameters.
    pub fn train(
        &mut self,
        train: &[(ArrayView2<'_, f64>, usize)],
        validation: &[(ArrayView2<'_, f64>, usize)],
        cfg: &TrainConfig,
    ) -> Result<TrainReport> {
        if train.is_empty() {
            return Err(Error::Empty("training set"));
        }
        let has = |c: usize| train.iter().any(|(_, y)| *y == c);
        if !(has(0) && has(1)) {
            return Err(Error::Degenerate(
                "training set must contain both classes".into(),
            ));
        }
        if cfg.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be >= 1"));
        }
        if !(cfg.learning_rate >= 0.0) {
            return Err(Error::invalid("learning_rate", "must be >= 0"));
        }
        self.validate_batch(train)?;
        if !validation.is_empty() {
            self.validate_batch(validation)?;
        }
        let n_params = self.params.len();
        let mut m = vec![0.0; n_params];
        let mut v = vec![0.0; n_params];
        let mut step = 0i32;
        let shuffle_seed = derive_seed(cfg.seed, "lstm/shuffle");
        let mut report = TrainReport {
            train_loss: Vec::with_capacity(cfg.epochs),
            validation_loss: Vec::with_capacity(cfg.epochs),
        };
        let mut order: Vec<usize> = (0..train.len()).collect();
        for epoch in 0..cfg.epochs {
            order.sort_unstable();
            order.shuffle(&mut rng(substream(shuffle_seed, epoch as u64)));
            let mut epoch_loss = 0.0;
            for chunk in order.chunks(cfg.batch_size) {
                let batch: Vec<_> = chunk.iter().map(|&i| train[i]).collect();
                let (loss, grad) = self.loss_and_grad(&batch)?;
                epoch_loss += loss * chunk.len() as f64;
                step += 1;
                let bc1 = 1.0 - cfg.beta1.powi(step);
                let bc2 = 1.0 - cfg.beta2.powi(step);
                for k in 0..n_params {
                    m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * grad[k];
                    v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * grad[k] * grad[k];
                    let m_hat = m[k] / bc1;
                    let v_hat = v[k] / bc2;
                    self.params[k] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
                }
            }
            report.train_loss.push(epoch_loss / train.len() as f64);
            if !validation.is_empty() {
                report.validation_loss.push(self.mean_loss(validation)?);
            }
            log::info!(
                "epoch {epoch}: train loss {:.5}{}",
                report.train_loss[epoch],
                report
                    .validation_loss
                    .last()
                    .map(|v| format!(", validation loss {v:.5}"))
                    .unwrap_or_default()
            );
        }
        Ok(report)
    }

    /// Mean loss over a data set, evaluated in chunks.
    pub fn mean_loss(&self, data: &[(ArrayView2<'_, f64>, usize)]) -> Result<f64> {
        let mut total = 0.0;
        for chunk in data.chunks(32) {
            total += self.loss(chunk)? * chunk.len() as f64;
        }
        Ok(total / data.len() as f64)
    }
}

pub fn softmax(scores: &[f64; CLASSES]) -> [f64; CLASSES] {
    let m = scores[0].max(scores[1]);
    let e = [(scores[0] - m).exp(), (scores[1] - m).exp()];
    let z = e[0] + e[1];
    [e[0] / z, e[1] / z]
}

/// Mean cross-entropy and its gradient with respect to the scores.
fn cross_entropy(scores: &Array2<f64>, labels: impl Iterator<Item = usize>) -> (f64, Array2<f64>) {
    let b = scores.nrows() as f64;
    let mut grad = Array2::zeros(scores.dim());
    let mut loss = 0.0;
    for (k, y) in labels.enumerate() {
        let row = scores.row(k);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|s| (s - m).exp()).sum();
        let log_z = m + z.ln();
        loss += log_z - row[y];
        for c in 0..row.len() {
            let p = (row[c] - log_z).exp();
            grad[[k, c]] = (p - if c == y { 1.0 } else { 0.0 }) / b;
        }
    }
    (loss / b, grad)
}
