//! Recording representation, ingestion, resampling, clip labeling,
//! z-scoring and 15 s segmentation.
//!
//! The canonical unit downstream of this module is the 10-minute clip at
//! 200 Hz (120 000 samples per channel), split into forty 15 s segments of
//! 3 000 samples. Raw-rate data never survives past resampling.

mod clip;
mod io;
mod labeling;
mod resample;

pub use clip::{normalize_clip, segment_clip, Clip, Segment};
pub use io::{read_manifest, read_recording, write_manifest, write_recording, RecordingMeta};
pub use labeling::{label_clips, plan_clips, ClipManifest, LabelPolicy, ManifestEntry, PlannedClip};
pub use resample::resample;

use crate::scalar::Real;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("channel length mismatch: {0}")]
    ChannelLengthMismatch(String),
    #[error("seizure onsets not strictly increasing")]
    UnsortedOnsets,
    #[error("seizure onset {0} s outside recording [0, {1}] s")]
    OnsetOutOfRange(f64, f64),
    #[error("artifact interval ({0}, {1}) s is not well-formed")]
    BadArtifactInterval(f64, f64),
    #[error("cannot resample {from} Hz up to {to} Hz")]
    Upsample { from: f64, to: f64 },
    #[error("unsupported rate pair {from} Hz -> {to} Hz (rates must be integral)")]
    UnsupportedRates { from: f64, to: f64 },
    #[error("recording must be at the canonical rate {expected} Hz, got {got} Hz")]
    NotCanonicalRate { expected: f64, got: f64 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("metadata error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("manifest error: {0}")]
    Csv(#[from] csv::Error),
}

/// Binary clip label: the positive class is preictal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClipLabel {
    Preictal,
    Interictal,
}

impl ClipLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            ClipLabel::Preictal => "preictal",
            ClipLabel::Interictal => "interictal",
        }
    }

    pub fn from_str(s: &str) -> Option<Self> {
        match s {
            "preictal" => Some(ClipLabel::Preictal),
            "interictal" => Some(ClipLabel::Interictal),
            _ => None,
        }
    }

    /// 1.0 for preictal, 0.0 for interictal.
    pub fn target(self) -> f64 {
        match self {
            ClipLabel::Preictal => 1.0,
            ClipLabel::Interictal => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    pub fn from_str(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// A continuous multichannel recording with seizure and artifact
/// annotations. `data` is (n_channels, n_samples).
#[derive(Debug, Clone)]
pub struct Recording<T: Real> {
    pub subject_id: String,
    pub sampling_rate: f64,
    pub channels: Vec<String>,
    pub data: Array2<T>,
    /// Seconds from recording start, strictly increasing.
    pub seizure_onsets: Vec<f64>,
    /// Annotated artifact spans (start_s, end_s).
    pub artifact_intervals: Vec<(f64, f64)>,
}

impl<T: Real> Recording<T> {
    pub fn n_channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples() as f64 / self.sampling_rate
    }

    /// Check the structural invariants.
    pub fn validate(&self) -> Result<(), DataError> {
        if self.sampling_rate <= 0.0 {
            return Err(DataError::MalformedHeader(format!(
                "sampling rate {} Hz is not positive",
                self.sampling_rate
            )));
        }
        if self.channels.len() != self.n_channels() {
            return Err(DataError::MalformedHeader(format!(
                "{} channel names for {} data rows",
                self.channels.len(),
                self.n_channels()
            )));
        }
        let dur = self.duration_s();
        for w in self.seizure_onsets.windows(2) {
            if w[1] <= w[0] {
                return Err(DataError::UnsortedOnsets);
            }
        }
        for &o in &self.seizure_onsets {
            if !(0.0..=dur).contains(&o) {
                return Err(DataError::OnsetOutOfRange(o, dur));
            }
        }
        for &(a, b) in &self.artifact_intervals {
            if !(a < b && a >= 0.0 && b <= dur) {
                return Err(DataError::BadArtifactInterval(a, b));
            }
        }
        Ok(())
    }
}
