//! Backprop verification against central finite differences.

use super::train::penalty;
use super::{LayerSpec, Network, NnetError, Shape, Tensor, TrainConfig};
use ndarray::Array2;

const FD_STEP: f64 = 1e-4;
const PROB_CLAMP: f64 = 1e-12;

/// Full-batch loss (mean BCE + L1/L2 penalty) in train mode.
fn loss_of(
    net: &mut Network<f64>,
    x: &Tensor<f64>,
    labels: &[f64],
    l1: f64,
    l2: f64,
) -> Result<f64, NnetError> {
    let out = net.forward_train(x)?;
    let n = labels.len() as f64;
    let mut acc = 0.0;
    for (j, &y) in labels.iter().enumerate() {
        let p = out.data[j].clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        acc += -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
    }
    Ok(acc / n + penalty(net, l1, l2))
}

/// Compare backprop gradients against central finite differences
/// (step 1e-4) on a small network; returns the maximum relative error
/// `|a - n| / max(|a| + |n|, 1e-6)`.
///
/// Dropout layers are rejected: their masks re-randomize per forward, so
/// finite differences are not defined for them.
pub fn gradient_check(
    specs: &[LayerSpec],
    input_shape: Shape,
    x: &Array2<f64>,
    labels: &[f64],
    cfg: &TrainConfig,
) -> Result<f64, NnetError> {
    if specs.iter().any(|s| matches!(s, LayerSpec::Dropout { .. })) {
        return Err(NnetError::BadConfig(
            "gradient check does not support dropout layers".into(),
        ));
    }
    let mut net = Network::<f64>::build(specs, input_shape, cfg.seed)?;
    assert!(net.param_count() < 10_000, "gradient check is for small nets");
    let batch = labels.len();
    let tensor = Tensor::from_vec(
        vec![batch, input_shape.size()],
        x.iter().copied().collect(),
    );

    // Analytic: backprop of the data term, plus penalty gradients.
    let out = net.forward_train(&tensor)?;
    net.zero_grads();
    let mut grad = vec![0.0; batch];
    for (j, &y) in labels.iter().enumerate() {
        let p = out.data[j].clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        grad[j] = (p - y) / (p * (1.0 - p)).max(PROB_CLAMP);
    }
    net.backward(&grad, batch);
    let params = net.params_flat();
    let mask = net.weight_mask();
    let analytic: Vec<f64> = net
        .grads_flat()
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let mut total = g / batch as f64;
            if mask[i] {
                total += cfg.l1 * params[i].signum() + 2.0 * cfg.l2 * params[i];
            }
            total
        })
        .collect();

    // Central differences.
    let mut max_rel: f64 = 0.0;
    let mut theta = params.clone();
    for i in 0..theta.len() {
        let orig = theta[i];
        theta[i] = orig + FD_STEP;
        net.set_params_flat(&theta);
        let lp = loss_of(&mut net, &tensor, labels, cfg.l1, cfg.l2)?;
        theta[i] = orig - FD_STEP;
        net.set_params_flat(&theta);
        let lm = loss_of(&mut net, &tensor, labels, cfg.l1, cfg.l2)?;
        theta[i] = orig;
        let numeric = (lp - lm) / (2.0 * FD_STEP);
        let rel = (analytic[i] - numeric).abs() / (analytic[i].abs() + numeric.abs()).max(1e-6);
        max_rel = max_rel.max(rel);
    }
    net.set_params_flat(&theta);
    Ok(max_rel)
}
