//! Minimal from-scratch neural substrate shared by both classifiers:
//! tensors, dense/conv/pool/batch-norm/dropout layers, plain SGD with
//! backpropagation, binary cross-entropy with optional class weighting,
//! a finite-difference gradient checker, and model serialization.
//!
//! Everything is deterministic given the seed: fixed init draws, fixed
//! shuffle order, fixed dropout streams, single-threaded training per
//! model (ensembles parallelize across models, not inside them).

mod gradcheck;
mod layers;
mod network;
mod serialize;
mod train;

pub use gradcheck::gradient_check;
pub use layers::{Activation, Layer};
pub use network::Network;
pub use serialize::{load_model, save_model};
pub use train::{predict, train, ClassBalancing, TrainConfig, TrainedModel};

use crate::scalar::Real;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnetError {
    #[error("layer {index} ({layer}): {detail}")]
    ShapeMismatch {
        index: usize,
        layer: String,
        detail: String,
    },
    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("training set must contain both classes")]
    SingleClass,
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error("model io: {0}")]
    Io(#[from] std::io::Error),
    #[error("model header: {0}")]
    Json(#[from] serde_json::Error),
}

/// Sample shape as it flows through the stack: a flat feature vector or a
/// (maps x len) multichannel sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    Flat(usize),
    Map { maps: usize, len: usize },
}

impl Shape {
    pub fn size(&self) -> usize {
        match *self {
            Shape::Flat(n) => n,
            Shape::Map { maps, len } => maps * len,
        }
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            Shape::Flat(n) => write!(f, "flat({n})"),
            Shape::Map { maps, len } => write!(f, "map({maps}x{len})"),
        }
    }
}

/// Row-major tensor: `shape[0]` is the batch dimension in every public
/// entry point.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T: Real> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor { shape, data: vec![T::zero(); n] }
    }

    pub fn from_vec(shape: Vec<usize>, data: Vec<T>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "shape/value mismatch");
        Tensor { shape, data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Layer specifications; consecutive shapes are validated at build time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    Dense { input: usize, output: usize },
    Conv1D { in_maps: usize, out_maps: usize, kernel: usize, stride: usize },
    MaxPool1D { kernel: usize },
    AvgPool1D { kernel: usize },
    BatchNorm { features: usize },
    Dropout { p: f64 },
    Activation(Activation),
    Flatten,
}

impl LayerSpec {
    pub fn name(&self) -> String {
        match self {
            LayerSpec::Dense { input, output } => format!("dense {input}->{output}"),
            LayerSpec::Conv1D { in_maps, out_maps, kernel, stride } => {
                format!("conv1d {in_maps}->{out_maps} k{kernel} s{stride}")
            }
            LayerSpec::MaxPool1D { kernel } => format!("maxpool1d k{kernel}"),
            LayerSpec::AvgPool1D { kernel } => format!("avgpool1d k{kernel}"),
            LayerSpec::BatchNorm { features } => format!("batchnorm {features}"),
            LayerSpec::Dropout { p } => format!("dropout {p}"),
            LayerSpec::Activation(a) => format!("{a:?}").to_lowercase(),
            LayerSpec::Flatten => "flatten".into(),
        }
    }

    /// Output shape for a given input shape, or a description of why the
    /// pair is incompatible.
    pub fn infer_shape(&self, input: Shape) -> Result<Shape, String> {
        match *self {
            LayerSpec::Dense { input: i, output: o } => match input {
                Shape::Flat(n) if n == i => Ok(Shape::Flat(o)),
                other => Err(format!("expects flat({i}), got {other}")),
            },
            LayerSpec::Conv1D { in_maps, out_maps, kernel, stride } => match input {
                Shape::Map { maps, len } if maps == in_maps => {
                    if len < kernel || stride == 0 {
                        Err(format!("kernel {kernel}/stride {stride} too large for len {len}"))
                    } else {
                        Ok(Shape::Map { maps: out_maps, len: (len - kernel) / stride + 1 })
                    }
                }
                other => Err(format!("expects map({in_maps}x_), got {other}")),
            },
            LayerSpec::MaxPool1D { kernel } | LayerSpec::AvgPool1D { kernel } => match input {
                Shape::Map { maps, len } if len >= kernel && kernel > 0 => {
                    Ok(Shape::Map { maps, len: len / kernel })
                }
                other => Err(format!("cannot pool k{kernel} over {other}")),
            },
            LayerSpec::BatchNorm { features } => {
                let ok = match input {
                    Shape::Flat(n) => n == features,
                    Shape::Map { maps, .. } => maps == features,
                };
                if ok {
                    Ok(input)
                } else {
                    Err(format!("expects {features} features, got {input}"))
                }
            }
            LayerSpec::Dropout { p } => {
                if (0.0..1.0).contains(&p) {
                    Ok(input)
                } else {
                    Err(format!("dropout p {p} outside [0, 1)"))
                }
            }
            LayerSpec::Activation(_) => Ok(input),
            LayerSpec::Flatten => Ok(Shape::Flat(input.size())),
        }
    }
}
