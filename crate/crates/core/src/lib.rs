//! # predcoh-core
//!
//! Library behind the `predcoh` pipeline: seizure prediction on synthetic
//! multichannel "iEEG" with two deliberately different classifiers, plus the
//! machinery to quantify how coherently the two of them fail.
//!
//! ## Layout
//!
//! * [`synth`] — deterministic generator of multichannel recordings with
//!   ground-truth seizure onsets, injectable preictal signatures and
//!   confound epochs.
//! * [`data`] — recording representation and I/O, resampling to the
//!   canonical 200 Hz, clip labeling (preictal / interictal), z-scoring and
//!   15 s segmentation.
//! * [`features`] — univariate and bivariate features per segment and the
//!   three symmetric-matrix variants.
//! * [`nnet`] — small from-scratch neural substrate (dense, 1-D conv,
//!   pooling, batch norm, dropout) trained with plain SGD + backprop.
//! * [`method1`] — MLP ensemble over feature vectors + exhaustive
//!   feature-combination search.
//! * [`method2`] — 1-D CNN ensemble over raw segments.
//! * [`eval`] — ROC AUC, Hanley-McNeil and permutation p-values, prediction
//!   and weighted error correlations, information-transfer curves.
//!
//! Signal-path code is generic over the scalar type through [`scalar::Real`]
//! (`f32` for bulk pipelines, `f64` where tests want tight tolerances);
//! the evaluation statistics are plain `f64`.

pub mod data;
pub mod detmath;
pub mod dsp;
pub mod eval;
pub mod features;
pub mod method1;
pub mod method2;
pub mod nnet;
pub mod rng;
pub mod scalar;
pub mod synth;

pub use scalar::Real;

// Concrete aliases for the common instantiations.
pub type Recording32 = data::Recording<f32>;
pub type Recording64 = data::Recording<f64>;
pub type Clip32 = data::Clip<f32>;
pub type Clip64 = data::Clip<f64>;
pub type Segment32 = data::Segment<f32>;
pub type Segment64 = data::Segment<f64>;
pub type Tensor32 = nnet::Tensor<f32>;
pub type Tensor64 = nnet::Tensor<f64>;

/// Canonical post-resample rate: every clip and segment lives at 200 Hz.
pub const TARGET_RATE_HZ: f64 = 200.0;
/// Clip length in seconds (10 min).
pub const CLIP_SECONDS: f64 = 600.0;
/// Segment length in seconds.
pub const SEGMENT_SECONDS: f64 = 15.0;
/// Samples per clip channel at the canonical rate.
pub const CLIP_SAMPLES: usize = 120_000;
/// Samples per segment channel at the canonical rate.
pub const SEGMENT_SAMPLES: usize = 3_000;
/// Segments per clip.
pub const SEGMENTS_PER_CLIP: usize = 40;
