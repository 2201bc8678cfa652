//! Two-layer graph convolutional network.
//!
//! `Z = softmax(Â · ReLU(Â·X·W0) · W1)`, trained full-batch with Adam on the
//! mean cross-entropy of the unmasked nodes. Gradients are derived by hand.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::{NormMode, NormalizedGraph};
use crate::linalg::Dense;
use crate::prediction::{predict_rows, Prediction};

const CHECKPOINT_MAGIC: &[u8; 4] = b"GCN1";

#[derive(Debug, Error)]
pub enum GcnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("GCN requires a gcn-normalized graph")]
    WrongMode,
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("no labeled nodes to train on")]
    NoLabels,
    #[error("training diverged at epoch {epoch}: {layer} became non-finite")]
    Diverged { epoch: usize, layer: &'static str },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnModel {
    /// `d × h`
    pub w0: Dense,
    /// `h × k`
    pub w1: Dense,
    pub seed: u64,
}

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Dense {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-limit..limit))
        .collect();
    Dense::from_vec(fan_in, fan_out, data)
}

impl GcnModel {
    /// Glorot-uniform initialization from a seeded ChaCha stream.
    pub fn new(d: usize, h: usize, k: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w0 = glorot(&mut rng, d, h);
        let w1 = glorot(&mut rng, h, k);
        Self { w0, w1, seed }
    }

    pub fn from_weights(w0: Dense, w1: Dense) -> Result<Self, GcnError> {
        if w0.cols() != w1.rows() {
            return Err(GcnError::Shape(format!(
                "W0 is {}x{} but W1 is {}x{}",
                w0.rows(),
                w0.cols(),
                w1.rows(),
                w1.cols()
            )));
        }
        Ok(Self { w0, w1, seed: 0 })
    }

    pub fn input_dim(&self) -> usize {
        self.w0.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w0.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.w1.cols()
    }

    /// `GCN1` magic, `d`, `h`, `k` as u32 LE, then W0 and W1 as f32 LE row-major.
    pub fn to_checkpoint(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        for dim in [self.input_dim(), self.hidden_dim(), self.num_classes()] {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for &v in self.w0.as_slice().iter().chain(self.w1.as_slice()) {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_checkpoint(bytes: &[u8]) -> Result<Self, GcnError> {
        if bytes.len() < 16 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(GcnError::Checkpoint("missing GCN1 header".into()));
        }
        let dim = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let (d, h, k) = (dim(4), dim(8), dim(12));
        let expected = 16 + 4 * (d * h + h * k);
        if bytes.len() != expected {
            return Err(GcnError::Checkpoint(format!(
                "expected {expected} bytes for {d}x{h}x{k}, found {}",
                bytes.len()
            )));
        }
        let vals: Vec<f64> = bytes[16..]
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(GcnError::NonFinite("checkpoint weights"));
        }
        let w1 = Dense::from_vec(h, k, vals[d * h..].to_vec());
        let w0 = Dense::from_vec(d, h, vals[..d * h].to_vec());
        Self::from_weights(w0, w1)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GcnError> {
        let path = path.as_ref();
        fs::write(path, self.to_checkpoint()).map_err(|source| GcnError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GcnError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| GcnError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_checkpoint(&bytes)
    }
}

/// Intermediates kept for the backward pass.
struct Activations {
    /// `Â·X·W0`, before ReLU.
    pre_hidden: Dense,
    hidden: Dense,
    logits: Dense,
}

fn check_shapes(model: &GcnModel, ahat: &NormalizedGraph, x: &Dense) -> Result<(), GcnError> {
    if ahat.mode() != NormMode::Gcn {
        return Err(GcnError::WrongMode);
    }
    if ahat.n() != x.rows() {
        return Err(GcnError::Shape(format!(
            "graph has {} nodes, features have {} rows",
            ahat.n(),
            x.rows()
        )));
    }
    if model.input_dim() != x.cols() {
        return Err(GcnError::Shape(format!(
            "model expects {} input dims, features have {}",
            model.input_dim(),
            x.cols()
        )));
    }
    Ok(())
}

fn forward_pass(model: &GcnModel, ahat: &NormalizedGraph, x: &Dense) -> Result<Activations, GcnError> {
    check_shapes(model, ahat, x)?;
    let a = ahat.matrix();
    let pre_hidden = a.mul_dense(&x.matmul(&model.w0));
    if !pre_hidden.is_finite() {
        return Err(GcnError::NonFinite("layer 1"));
    }
    let mut hidden = pre_hidden.clone();
    hidden.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
    let logits = a.mul_dense(&hidden.matmul(&model.w1));
    if !logits.is_finite() {
        return Err(GcnError::NonFinite("layer 2"));
    }
    Ok(Activations {
        pre_hidden,
        hidden,
        logits,
    })
}

fn softmax_rows(logits: &Dense) -> Dense {
    let mut z = logits.clone();
    for i in 0..z.rows() {
        let row = z.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    z
}

/// Row-stochastic class probabilities `Z`, one row per node.
pub fn forward(model: &GcnModel, ahat: &NormalizedGraph, x: &Dense) -> Result<Dense, GcnError> {
    Ok(softmax_rows(&forward_pass(model, ahat, x)?.logits))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub loss: f64,
    pub w0: Dense,
    pub w1: Dense,
}

/// Mean cross-entropy over nodes with `targets[i] = Some(class)` and its
/// gradients with respect to both weight matrices.
pub fn loss_and_grads(
    model: &GcnModel,
    ahat: &NormalizedGraph,
    x: &Dense,
    targets: &[Option<usize>],
) -> Result<Gradients, GcnError> {
    if targets.len() != x.rows() {
        return Err(GcnError::Shape(format!(
            "{} targets for {} nodes",
            targets.len(),
            x.rows()
        )));
    }
    let k = model.num_classes();
    if let Some(c) = targets.iter().flatten().find(|&&c| c >= k) {
        return Err(GcnError::Shape(format!("target class {c} >= {k}")));
    }
    let m = targets.iter().filter(|t| t.is_some()).count();
    if m == 0 {
        return Err(GcnError::NoLabels);
    }
    let act = forward_pass(model, ahat, x)?;
    let a = ahat.matrix();

    // dL/dlogits = (softmax - onehot) / m on labeled rows.
    let mut g_logits = Dense::zeros(x.rows(), k);
    let mut loss = 0.0;
    for (i, t) in targets.iter().enumerate() {
        let Some(c) = *t else { continue };
        let row = act.logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss -= row[c] - max - log_sum;
        let g = g_logits.row_mut(i);
        for (j, gv) in g.iter_mut().enumerate() {
            *gv = (row[j] - max - log_sum).exp();
        }
        g[c] -= 1.0;
        g.iter_mut().for_each(|v| *v /= m as f64);
    }
    loss /= m as f64;

    // Â is symmetric, so Âᵀ·G = Â·G.
    let g_hw1 = a.mul_dense(&g_logits);
    let gw1 = act.hidden.t_matmul(&g_hw1);
    let mut g_pre = g_hw1.matmul_t(&model.w1);
    for (g, &p) in g_pre
        .as_mut_slice()
        .iter_mut()
        .zip(act.pre_hidden.as_slice())
    {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
    let g_xw0 = a.mul_dense(&g_pre);
    let gw0 = x.t_matmul(&g_xw0);

    Ok(Gradients {
        loss,
        w0: gw0,
        w1: gw1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            epochs: 200,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), GcnError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(GcnError::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(GcnError::Config("epochs must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(GcnError::Config("moment decays must lie in [0, 1)".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(GcnError::Config("epsilon must be positive".into()));
        }
        Ok(())
    }
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], cfg: &TrainConfig, t: i32) {
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
}

/// Full-batch Adam. `loss_history[e]` is the loss evaluated before the update
/// of epoch `e`.
pub fn train(
    mut model: GcnModel,
    ahat: &NormalizedGraph,
    x: &Dense,
    targets: &[Option<usize>],
    cfg: &TrainConfig,
) -> Result<(GcnModel, Vec<f64>), GcnError> {
    cfg.validate()?;
    if !x.is_finite() {
        return Err(GcnError::NonFinite("input features"));
    }
    let mut adam0 = AdamState::new(model.w0.as_slice().len());
    let mut adam1 = AdamState::new(model.w1.as_slice().len());
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let grads = match loss_and_grads(&model, ahat, x, targets) {
            Ok(g) => g,
            Err(GcnError::NonFinite(layer)) => return Err(GcnError::Diverged { epoch, layer }),
            Err(e) => return Err(e),
        };
        if !grads.loss.is_finite() {
            return Err(GcnError::Diverged {
                epoch,
                layer: "loss",
            });
        }
        history.push(grads.loss);
        let t = (epoch + 1) as i32;
        adam0.step(model.w0.as_mut_slice(), grads.w0.as_slice(), cfg, t);
        adam1.step(model.w1.as_mut_slice(), grads.w1.as_slice(), cfg, t);
        if !model.w0.is_finite() {
            return Err(GcnError::Diverged { epoch, layer: "W0" });
        }
        if !model.w1.is_finite() {
            return Err(GcnError::Diverged { epoch, layer: "W1" });
        }
    }
    Ok((model, history))
}

pub fn predict(
    model: &GcnModel,
    ahat: &NormalizedGraph,
    x: &Dense,
    masked_indices: &[usize],
) -> Result<Vec<Prediction>, GcnError> {
    let z = forward(model, ahat, x)?;
    if let Some(&i) = masked_indices.iter().find(|&&i| i >= z.rows()) {
        return Err(GcnError::Shape(format!("index {i} out of range")));
    }
    Ok(predict_rows(&z, masked_indices))
}

pub fn write_loss_csv<W: Write>(mut w: W, history: &[f64]) -> std::io::Result<()> {
    writeln!(w, "epoch,loss")?;
    for (e, l) in history.iter().enumerate() {
        writeln!(w, "{e},{l}")?;
    }
    Ok(())
}
