//! SGD training with backpropagation on binary cross-entropy, plus
//! inference helpers.

use super::{LayerSpec, Network, NnetError, Shape, Tensor};
use crate::rng::stream;
use crate::scalar::{real, Real};
use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

const PROB_CLAMP: f64 = 1e-12;

/// How a ~10:1 class imbalance is handled during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassBalancing {
    None,
    /// Per-sample loss weight n / (2 * n_class); the default.
    InverseFrequency,
    /// Duplicate minority samples until the classes match.
    OversampleMinority,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l1: f64,
    pub l2: f64,
    pub seed: u64,
    pub class_balancing: ClassBalancing,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            epochs: 500,
            batch_size: 32,
            l1: 0.0,
            l2: 0.0,
            seed: 0,
            class_balancing: ClassBalancing::InverseFrequency,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnetError> {
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return Err(NnetError::BadConfig(format!(
                "learning rate {} must be non-negative",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(NnetError::BadConfig("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(NnetError::BadConfig("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

/// A trained binary classifier: layer stack, learned parameters, batch-norm
/// running statistics, and the per-epoch training loss.
#[derive(Debug, Clone)]
pub struct TrainedModel<T: Real> {
    pub network: Network<T>,
    pub cfg: TrainConfig,
    pub train_log: Vec<f64>,
}

impl<T: Real> TrainedModel<T> {
    /// Running minimum of the per-epoch loss (a monotone view of progress).
    pub fn smoothed_log(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.train_log
            .iter()
            .map(|&l| {
                best = best.min(l);
                best
            })
            .collect()
    }
}

/// Per-sample BCE loss weights for the configured balancing strategy, plus
/// the (possibly oversampled) index list to iterate.
fn balance(labels: &[f64], strategy: ClassBalancing) -> (Vec<f64>, Vec<usize>) {
    let n = labels.len();
    let n_pos = labels.iter().filter(|&&y| y > 0.5).count();
    let n_neg = n - n_pos;
    let mut weights = vec![1.0; n];
    let mut indices: Vec<usize> = (0..n).collect();
    match strategy {
        ClassBalancing::None => {}
        ClassBalancing::InverseFrequency => {
            let (w_pos, w_neg) = (n as f64 / (2.0 * n_pos as f64), n as f64 / (2.0 * n_neg as f64));
            for (w, &y) in weights.iter_mut().zip(labels) {
                *w = if y > 0.5 { w_pos } else { w_neg };
            }
        }
        ClassBalancing::OversampleMinority => {
            let (minority, deficit) = if n_pos < n_neg {
                (1.0, n_neg - n_pos)
            } else {
                (0.0, n_pos - n_neg)
            };
            let minority_idx: Vec<usize> = (0..n)
                .filter(|&i| (labels[i] > 0.5) == (minority > 0.5))
                .collect();
            for k in 0..deficit {
                indices.push(minority_idx[k % minority_idx.len()]);
            }
        }
    }
    (weights, indices)
}

/// Train a stack on (samples x flattened-sample) data with binary labels.
///
/// Deterministic for a fixed `cfg.seed`: fixed init draws, fixed per-epoch
/// shuffle, fixed dropout streams.
pub fn train<T: Real>(
    specs: &[LayerSpec],
    input_shape: Shape,
    x: &Array2<T>,
    labels: &[f64],
    cfg: &TrainConfig,
) -> Result<TrainedModel<T>, NnetError> {
    cfg.validate()?;
    assert_eq!(x.nrows(), labels.len());
    let n_pos = labels.iter().filter(|&&y| y > 0.5).count();
    if n_pos == 0 || n_pos == labels.len() {
        return Err(NnetError::SingleClass);
    }
    let mut net = Network::build(specs, input_shape, cfg.seed)?;
    if net.output_dim() != 1 {
        return Err(NnetError::BadConfig(format!(
            "binary classifier must end in a scalar output, got {}",
            net.output_shape
        )));
    }
    let sample = input_shape.size();
    let (weights, base_indices) = balance(labels, cfg.class_balancing);

    let mut train_log = Vec::with_capacity(cfg.epochs);
    let mut indices = base_indices;
    for epoch in 0..cfg.epochs {
        let mut rng = stream(cfg.seed, "nnet/shuffle", epoch as u64);
        indices.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut weight_sum = 0.0;
        for chunk in indices.chunks(cfg.batch_size) {
            let b = chunk.len();
            let mut batch = Vec::with_capacity(b * sample);
            for &i in chunk {
                batch.extend(x.row(i).iter().copied());
            }
            let out = net.forward_train(&Tensor::from_vec(vec![b, sample], batch))?;
            net.zero_grads();
            let mut grad = vec![T::zero(); b];
            for (j, &i) in chunk.iter().enumerate() {
                let p = out.data[j].as_f64().clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                let y = labels[i];
                let w = weights[i];
                loss_sum += -w * (y * p.ln() + (1.0 - y) * (1.0 - p).ln());
                weight_sum += w;
                grad[j] = real(w * (p - y) / (p * (1.0 - p)).max(PROB_CLAMP));
            }
            net.backward(&grad, b);
            net.sgd_step(cfg.learning_rate, cfg.l1, cfg.l2, b);
        }
        let epoch_loss = loss_sum / weight_sum + penalty(&net, cfg.l1, cfg.l2);
        if !epoch_loss.is_finite() {
            return Err(NnetError::Diverged { epoch });
        }
        train_log.push(epoch_loss);
    }
    net.drop_caches();
    Ok(TrainedModel { network: net, cfg: cfg.clone(), train_log })
}

/// l1 * sum|w| + l2 * sum w^2 over penalized weights.
pub(crate) fn penalty<T: Real>(net: &Network<T>, l1: f64, l2: f64) -> f64 {
    if l1 == 0.0 && l2 == 0.0 {
        return 0.0;
    }
    let params = net.params_flat();
    let mask = net.weight_mask();
    let mut abs = 0.0;
    let mut sq = 0.0;
    for (w, m) in params.iter().zip(mask) {
        if m {
            abs += w.abs();
            sq += w * w;
        }
    }
    l1 * abs + l2 * sq
}

/// Inference probabilities for a batch of samples.
pub fn predict<T: Real>(model: &TrainedModel<T>, x: &Array2<T>) -> Vec<f64> {
    let n = x.nrows();
    let sample = model.network.input_shape.size();
    assert_eq!(x.ncols(), sample);
    let data: Vec<T> = x.iter().copied().collect();
    let out = model
        .network
        .forward_infer(&Tensor::from_vec(vec![n, sample], data))
        .expect("shape checked");
    out.data.iter().map(|v| v.as_f64()).collect()
}
