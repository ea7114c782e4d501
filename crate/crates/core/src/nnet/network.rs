//! Network assembly: shape validation, weight initialization, forward and
//! backward passes, the SGD step, and flat parameter access.

use super::layers::{Act, Activation, AvgPool, BatchNorm, Conv, Dense, Dropout, Layer, MaxPool};
use super::{LayerSpec, NnetError, Shape, Tensor};
use crate::rng::{stream, uniform_open01};
use crate::scalar::{real, Real};

#[derive(Debug, Clone)]
pub struct Network<T: Real> {
    pub specs: Vec<LayerSpec>,
    pub input_shape: Shape,
    pub output_shape: Shape,
    pub seed: u64,
    layers: Vec<Layer<T>>,
}

impl<T: Real> Network<T> {
    /// Validate the stack against `input_shape` and initialize weights.
    ///
    /// Dense/conv weights use uniform fan-in (He-style) scaling when the
    /// next activation in the stack is ReLU, and Xavier-style fan-in +
    /// fan-out scaling otherwise (the sigmoid output layer).
    pub fn build(specs: &[LayerSpec], input_shape: Shape, seed: u64) -> Result<Self, NnetError> {
        let mut layers = Vec::with_capacity(specs.len());
        let mut shape = input_shape;
        for (index, spec) in specs.iter().enumerate() {
            let out_shape = spec.infer_shape(shape).map_err(|detail| NnetError::ShapeMismatch {
                index,
                layer: spec.name(),
                detail,
            })?;
            // He for ReLU consumers, Xavier otherwise.
            let relu_next = specs[index + 1..]
                .iter()
                .find_map(|s| match s {
                    LayerSpec::Activation(a) => Some(*a == Activation::ReLU),
                    LayerSpec::Dense { .. } | LayerSpec::Conv1D { .. } => Some(false),
                    _ => None,
                })
                .unwrap_or(false);
            let mut rng = stream(seed, "nnet/init", index as u64);
            let mut uniform = |count: usize, limit: f64| -> Vec<T> {
                (0..count)
                    .map(|_| real::<T>((2.0 * uniform_open01(&mut rng) - 1.0) * limit))
                    .collect()
            };
            let layer = match *spec {
                LayerSpec::Dense { input, output } => {
                    let limit = if relu_next {
                        (6.0 / input as f64).sqrt()
                    } else {
                        (6.0 / (input + output) as f64).sqrt()
                    };
                    Layer::Dense(Dense::new(input, output, uniform(input * output, limit)))
                }
                LayerSpec::Conv1D { in_maps, out_maps, kernel, stride } => {
                    let fan_in = (in_maps * kernel) as f64;
                    let fan_out = (out_maps * kernel) as f64;
                    let limit = if relu_next {
                        (6.0 / fan_in).sqrt()
                    } else {
                        (6.0 / (fan_in + fan_out)).sqrt()
                    };
                    let in_len = match shape {
                        Shape::Map { len, .. } => len,
                        _ => unreachable!("validated above"),
                    };
                    Layer::Conv(Conv::new(
                        in_maps,
                        out_maps,
                        kernel,
                        stride,
                        in_len,
                        uniform(in_maps * out_maps * kernel, limit),
                    ))
                }
                LayerSpec::MaxPool1D { kernel } => {
                    let (maps, len) = match shape {
                        Shape::Map { maps, len } => (maps, len),
                        _ => unreachable!(),
                    };
                    Layer::MaxPool(MaxPool::new(kernel, maps, len))
                }
                LayerSpec::AvgPool1D { kernel } => {
                    let (maps, len) = match shape {
                        Shape::Map { maps, len } => (maps, len),
                        _ => unreachable!(),
                    };
                    Layer::AvgPool(AvgPool::new(kernel, maps, len))
                }
                LayerSpec::BatchNorm { features } => {
                    let inner = match shape {
                        Shape::Flat(_) => 1,
                        Shape::Map { len, .. } => len,
                    };
                    Layer::BatchNorm(BatchNorm::new(features, inner))
                }
                LayerSpec::Dropout { p } => {
                    Layer::Dropout(Dropout::new(p, stream(seed, "nnet/dropout", index as u64)))
                }
                LayerSpec::Activation(a) => Layer::Act(Act::new(a)),
                LayerSpec::Flatten => Layer::Flatten,
            };
            layers.push(layer);
            shape = out_shape;
        }
        Ok(Network {
            specs: specs.to_vec(),
            input_shape,
            output_shape: shape,
            seed,
            layers,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.output_shape.size()
    }

    fn check_batch(&self, x: &Tensor<T>) -> Result<usize, NnetError> {
        let sample = self.input_shape.size();
        if x.shape.len() < 2 || x.shape[1..].iter().product::<usize>() != sample {
            return Err(NnetError::ShapeMismatch {
                index: 0,
                layer: "input".into(),
                detail: format!(
                    "batch shape {:?} does not match input {}",
                    x.shape, self.input_shape
                ),
            });
        }
        Ok(x.shape[0])
    }

    /// Pure inference pass (dropout off, batch-norm running stats).
    pub fn forward_infer(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnetError> {
        let batch = self.check_batch(x)?;
        let mut cur = x.data.clone();
        let mut next = Vec::new();
        for layer in &self.layers {
            layer.forward_infer(&cur, batch, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(Tensor::from_vec(vec![batch, self.output_dim()], cur))
    }

    /// Training forward pass; layers cache activations for backward.
    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<Tensor<T>, NnetError> {
        let batch = self.check_batch(x)?;
        let mut cur = x.data.clone();
        let mut next = Vec::new();
        for layer in &mut self.layers {
            layer.forward_train(&cur, batch, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(Tensor::from_vec(vec![batch, self.output_dim()], cur))
    }

    /// Backpropagate `grad` (d loss / d output) through the stack,
    /// accumulating parameter gradients.
    pub fn backward(&mut self, grad: &[T], batch: usize) {
        let mut g = grad.to_vec();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g, batch);
        }
    }

    pub fn zero_grads(&mut self) {
        for layer in &mut self.layers {
            for (_, g) in layer.params_mut() {
                g.fill(T::zero());
            }
        }
    }

    /// Plain SGD step. Accumulated gradients are treated as batch sums and
    /// scaled by `1/batch`; L1/L2 penalty gradients (applied to weights
    /// only) are `l1 * sign(w)` and `2 * l2 * w`.
    pub fn sgd_step(&mut self, lr: f64, l1: f64, l2: f64, batch: usize) {
        let lr_t = real::<T>(lr);
        let inv_b = real::<T>(1.0 / batch as f64);
        let l1_t = real::<T>(l1);
        let two_l2 = real::<T>(2.0 * l2);
        for layer in &mut self.layers {
            let is_weight: Vec<bool> = {
                let has_weights = layer.weights_mut().is_some();
                match layer {
                    Layer::Dense(_) | Layer::Conv(_) => vec![has_weights, false],
                    Layer::BatchNorm(_) => vec![false, false],
                    _ => vec![],
                }
            };
            for (pi, (p, g)) in layer.params_mut().into_iter().enumerate() {
                let penalize = *is_weight.get(pi).unwrap_or(&false);
                for (w, gw) in p.iter_mut().zip(g.iter()) {
                    let mut grad = *gw * inv_b;
                    if penalize {
                        grad += l1_t * w.signum_zero() + two_l2 * *w;
                    }
                    *w -= lr_t * grad;
                }
            }
        }
    }

    /// Total parameter count.
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.params().iter().map(|p| p.len()).sum::<usize>()).sum()
    }

    /// Flattened copy of all parameters (layer order, params order).
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            for p in layer.params() {
                out.extend(p.iter().map(|v| v.as_f64()));
            }
        }
        out
    }

    /// Overwrite all parameters from a flat slice (inverse of
    /// [`Network::params_flat`]).
    pub fn set_params_flat(&mut self, flat: &[f64]) {
        let mut i = 0;
        for layer in &mut self.layers {
            for (p, _) in layer.params_mut() {
                for v in p.iter_mut() {
                    *v = real(flat[i]);
                    i += 1;
                }
            }
        }
        assert_eq!(i, flat.len());
    }

    /// Flattened copy of accumulated gradients, aligned with
    /// [`Network::params_flat`].
    pub fn grads_flat(&mut self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            for (_, g) in layer.params_mut() {
                out.extend(g.iter().map(|v| v.as_f64()));
            }
        }
        out
    }

    /// Per-parameter flag: does this slot belong to a penalized weight
    /// vector (dense/conv weights, not biases or batch-norm affine)?
    pub fn weight_mask(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for layer in &self.layers {
            let params = layer.params();
            match layer {
                Layer::Dense(_) | Layer::Conv(_) => {
                    out.extend(std::iter::repeat_n(true, params[0].len()));
                    out.extend(std::iter::repeat_n(false, params[1].len()));
                }
                _ => {
                    for p in params {
                        out.extend(std::iter::repeat_n(false, p.len()));
                    }
                }
            }
        }
        out
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn drop_caches(&mut self) {
        for layer in &mut self.layers {
            layer.drop_caches();
        }
    }
}

/// sign(w) with sign(0) = 0, for the L1 subgradient.
trait SignumZero {
    fn signum_zero(self) -> Self;
}

impl<T: Real> SignumZero for T {
    fn signum_zero(self) -> Self {
        if self > T::zero() {
            T::one()
        } else if self < T::zero() {
            -T::one()
        } else {
            T::zero()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_specs() -> Vec<LayerSpec> {
        vec![
            LayerSpec::Dense { input: 3, output: 4 },
            LayerSpec::Activation(Activation::ReLU),
            LayerSpec::Dense { input: 4, output: 1 },
            LayerSpec::Activation(Activation::Sigmoid),
        ]
    }

    #[test]
    fn zero_weight_network_outputs_half() {
        let mut net = Network::<f64>::build(&small_specs(), Shape::Flat(3), 0).unwrap();
        let zeros = vec![0.0; net.param_count()];
        net.set_params_flat(&zeros);
        let x = Tensor::from_vec(vec![2, 3], vec![0.3, -1.0, 2.0, 0.0, 0.5, -0.5]);
        let y = net.forward_infer(&x).unwrap();
        assert_eq!(y.data, vec![0.5, 0.5]);
    }

    #[test]
    fn bad_stack_reports_layer_index() {
        let specs = vec![
            LayerSpec::Dense { input: 3, output: 4 },
            LayerSpec::Dense { input: 5, output: 1 },
        ];
        match Network::<f64>::build(&specs, Shape::Flat(3), 0) {
            Err(NnetError::ShapeMismatch { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected shape mismatch, got {other:?}"),
        }
    }

    #[test]
    fn build_is_deterministic_per_seed() {
        let a = Network::<f64>::build(&small_specs(), Shape::Flat(3), 9).unwrap();
        let b = Network::<f64>::build(&small_specs(), Shape::Flat(3), 9).unwrap();
        let c = Network::<f64>::build(&small_specs(), Shape::Flat(3), 10).unwrap();
        assert_eq!(a.params_flat(), b.params_flat());
        assert_ne!(a.params_flat(), c.params_flat());
    }

    #[test]
    fn inference_is_pure() {
        let net = Network::<f64>::build(&small_specs(), Shape::Flat(3), 5).unwrap();
        let x = Tensor::from_vec(vec![1, 3], vec![0.1, 0.2, 0.3]);
        let y1 = net.forward_infer(&x).unwrap();
        let y2 = net.forward_infer(&x).unwrap();
        assert_eq!(y1.data, y2.data);
    }

    #[test]
    fn l2_penalty_gradient_is_2_l2_w() {
        // One SGD step with zero data gradient: w' = w - lr * 2 * l2 * w.
        let mut net = Network::<f64>::build(
            &[LayerSpec::Dense { input: 2, output: 2 }],
            Shape::Flat(2),
            3,
        )
        .unwrap();
        let before = net.params_flat();
        net.zero_grads();
        let (lr, l2) = (0.1, 0.03);
        net.sgd_step(lr, 0.0, l2, 1);
        let after = net.params_flat();
        let mask = net.weight_mask();
        for i in 0..before.len() {
            let expect = if mask[i] {
                before[i] - lr * 2.0 * l2 * before[i]
            } else {
                before[i]
            };
            assert!((after[i] - expect).abs() < 1e-9);
        }
    }
}
