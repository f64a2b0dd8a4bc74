//! Two-layer dropout MLP with hand-written backpropagation.

use serde::{Deserialize, Serialize};

use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Head {
    /// Softmax over `classes` logits, cross-entropy loss.
    Classifier { classes: usize },
    /// Per target a mean and a log-variance, Gaussian negative log-likelihood.
    Regressor { targets: usize },
}

impl Head {
    pub fn outputs(self) -> usize {
        match self {
            Head::Classifier { classes } => classes,
            Head::Regressor { targets } => 2 * targets,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamBlock {
    W1,
    B1,
    W2,
    B2,
}

impl ParamBlock {
    pub const ALL: [ParamBlock; 4] = [ParamBlock::W1, ParamBlock::B1, ParamBlock::W2, ParamBlock::B2];
}

/// `input -> hidden (ReLU, dropout) -> output`. Weights are row-major with
/// one row per output unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyModel {
    pub input: usize,
    pub hidden: usize,
    pub head: Head,
    pub dropout_p: f64,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub loss: f64,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Gradients {
    pub fn block(&self, b: ParamBlock) -> &[f64] {
        match b {
            ParamBlock::W1 => &self.w1,
            ParamBlock::B1 => &self.b1,
            ParamBlock::W2 => &self.w2,
            ParamBlock::B2 => &self.b2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BatchTargets {
    Classes(Vec<usize>),
    /// Row-major `[n, K]`.
    Values(Vec<f64>),
}

/// Training batch. The loss is `sum_i weights[i] * loss_i`; uniform weights
/// `1/n` give the mean loss. `masks` fixes the dropout multipliers
/// (`[n, hidden]`), `None` means no dropout.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub x: Vec<f64>,
    pub targets: BatchTargets,
    pub weights: Vec<f64>,
    pub masks: Option<Vec<f64>>,
}

impl Batch {
    /// `n` rows with weight `1/n` each, no dropout.
    pub fn uniform(n: usize, x: Vec<f64>, targets: BatchTargets) -> Self {
        Self {
            x,
            targets,
            weights: vec![1.0 / n as f64; n],
            masks: None,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

impl ToyModel {
    /// Glorot-uniform weights, zero biases.
    pub fn init(input: usize, hidden: usize, head: Head, dropout_p: f64, rng: &mut SplitMix64) -> Self {
        let out = head.outputs();
        let a1 = (6.0 / (input + hidden) as f64).sqrt();
        let a2 = (6.0 / (hidden + out) as f64).sqrt();
        let w1 = (0..hidden * input).map(|_| rng.uniform(-a1, a1)).collect();
        let w2 = (0..out * hidden).map(|_| rng.uniform(-a2, a2)).collect();
        Self {
            input,
            hidden,
            head,
            dropout_p,
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: vec![0.0; out],
        }
    }

    pub fn zeros(input: usize, hidden: usize, head: Head) -> Self {
        let out = head.outputs();
        Self {
            input,
            hidden,
            head,
            dropout_p: 0.0,
            w1: vec![0.0; hidden * input],
            b1: vec![0.0; hidden],
            w2: vec![0.0; out * hidden],
            b2: vec![0.0; out],
        }
    }

    pub fn block(&self, b: ParamBlock) -> &[f64] {
        match b {
            ParamBlock::W1 => &self.w1,
            ParamBlock::B1 => &self.b1,
            ParamBlock::W2 => &self.w2,
            ParamBlock::B2 => &self.b2,
        }
    }

    pub fn block_mut(&mut self, b: ParamBlock) -> &mut [f64] {
        match b {
            ParamBlock::W1 => &mut self.w1,
            ParamBlock::B1 => &mut self.b1,
            ParamBlock::W2 => &mut self.w2,
            ParamBlock::B2 => &mut self.b2,
        }
    }

    pub fn is_finite(&self) -> bool {
        ParamBlock::ALL.iter().all(|&b| self.block(b).iter().all(|v| v.is_finite()))
    }

    /// Inverted-dropout multipliers for one forward pass.
    pub fn sample_mask(&self, rng: &mut SplitMix64) -> Vec<f64> {
        let keep = 1.0 - self.dropout_p;
        (0..self.hidden)
            .map(|_| if rng.next_f64() < keep { 1.0 / keep } else { 0.0 })
            .collect()
    }

    /// Returns (pre-activation, masked hidden, output) for one input row.
    fn forward_full(&self, x: &[f64], mask: Option<&[f64]>) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut a1 = self.b1.clone();
        for (j, a) in a1.iter_mut().enumerate() {
            let row = &self.w1[j * self.input..(j + 1) * self.input];
            *a += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
        let h: Vec<f64> = a1
            .iter()
            .enumerate()
            .map(|(j, &a)| a.max(0.0) * mask.map_or(1.0, |m| m[j]))
            .collect();
        let mut z = self.b2.clone();
        for (o, zo) in z.iter_mut().enumerate() {
            let row = &self.w2[o * self.hidden..(o + 1) * self.hidden];
            *zo += row.iter().zip(&h).map(|(w, v)| w * v).sum::<f64>();
        }
        (a1, h, z)
    }

    /// Raw output units for one input row.
    pub fn forward(&self, x: &[f64], mask: Option<&[f64]>) -> Vec<f64> {
        self.forward_full(x, mask).2
    }

    /// Loss of one row and its gradient with respect to the outputs.
    fn row_loss(&self, z: &[f64], targets: &BatchTargets, i: usize) -> (f64, Vec<f64>) {
        match (self.head, targets) {
            (Head::Classifier { .. }, BatchTargets::Classes(y)) => {
                let p = softmax(z);
                let loss = -p[y[i]].max(f64::MIN_POSITIVE).ln();
                let mut dz = p;
                dz[y[i]] -= 1.0;
                (loss, dz)
            }
            (Head::Regressor { targets: k }, BatchTargets::Values(v)) => {
                let mut loss = 0.0;
                let mut dz = vec![0.0; 2 * k];
                for t in 0..k {
                    let (mu, s) = (z[t], z[k + t]);
                    let r = v[i * k + t] - mu;
                    let inv = (-s).exp();
                    loss += 0.5 * (s + r * r * inv);
                    dz[t] = -r * inv;
                    dz[k + t] = 0.5 * (1.0 - r * r * inv);
                }
                (loss, dz)
            }
            _ => panic!("batch targets do not match the model head"),
        }
    }

    /// Unweighted per-row losses.
    pub fn row_losses(&self, batch: &Batch) -> Vec<f64> {
        (0..batch.len())
            .map(|i| {
                let x = &batch.x[i * self.input..(i + 1) * self.input];
                let mask = batch.masks.as_ref().map(|m| &m[i * self.hidden..(i + 1) * self.hidden]);
                let (_, _, z) = self.forward_full(x, mask);
                self.row_loss(&z, &batch.targets, i).0
            })
            .collect()
    }

    pub fn loss(&self, batch: &Batch) -> f64 {
        self.row_losses(batch).iter().zip(&batch.weights).map(|(l, w)| l * w).sum()
    }
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn softmax_probs(z: &[f64]) -> Vec<f64> {
    softmax(z)
}

/// Analytic gradient of the weighted batch loss.
pub fn toy_gradients(model: &ToyModel, batch: &Batch) -> Gradients {
    let (d, hdim) = (model.input, model.hidden);
    let out = model.head.outputs();
    let mut g = Gradients {
        loss: 0.0,
        w1: vec![0.0; hdim * d],
        b1: vec![0.0; hdim],
        w2: vec![0.0; out * hdim],
        b2: vec![0.0; out],
    };
    for i in 0..batch.len() {
        let w = batch.weights[i];
        let x = &batch.x[i * d..(i + 1) * d];
        let mask = batch.masks.as_ref().map(|m| &m[i * hdim..(i + 1) * hdim]);
        let (a1, h, z) = model.forward_full(x, mask);
        let (loss, dz) = model.row_loss(&z, &batch.targets, i);
        g.loss += w * loss;
        let mut dh = vec![0.0; hdim];
        for (o, &dzo) in dz.iter().enumerate().take(out) {
            let dzo = w * dzo;
            g.b2[o] += dzo;
            for j in 0..hdim {
                g.w2[o * hdim + j] += dzo * h[j];
                dh[j] += model.w2[o * hdim + j] * dzo;
            }
        }
        for j in 0..hdim {
            if a1[j] <= 0.0 {
                continue;
            }
            let da = dh[j] * mask.map_or(1.0, |m| m[j]);
            g.b1[j] += da;
            for (k, xv) in x.iter().enumerate() {
                g.w1[j * d + k] += da * xv;
            }
        }
    }
    g
}
