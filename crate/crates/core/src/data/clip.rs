//! Clip-level operations: z-score normalization and 15 s segmentation.

use super::ClipLabel;
use crate::scalar::{real, Real};
use crate::{CLIP_SAMPLES, SEGMENTS_PER_CLIP, SEGMENT_SAMPLES};
use ndarray::{s, Array2};

/// Labeled 10-minute clip at 200 Hz. `data` is (n_channels, 120000).
#[derive(Debug, Clone)]
pub struct Clip<T: Real> {
    pub subject_id: String,
    pub clip_id: u32,
    pub start_s: f64,
    pub label: ClipLabel,
    /// Onset this clip precedes (preictal only).
    pub source_seizure: Option<f64>,
    pub data: Array2<T>,
}

/// 15 s slice of a clip. `data` is (n_channels, 3000).
#[derive(Debug, Clone)]
pub struct Segment<T: Real> {
    pub clip_id: u32,
    pub segment_index: usize,
    pub data: Array2<T>,
}

/// Z-score each channel over the full clip (population statistics,
/// accumulated in f64). A zero-variance channel becomes all zeros and its
/// index is reported back instead of aborting the batch.
pub fn normalize_clip<T: Real>(clip: &Clip<T>) -> (Clip<T>, Vec<usize>) {
    let mut out = clip.clone();
    let mut flat_channels = Vec::new();
    let n = out.data.ncols() as f64;
    for (ch, mut row) in out.data.rows_mut().into_iter().enumerate() {
        let mean = row.iter().map(|v| v.as_f64()).sum::<f64>() / n;
        let var = row.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / n;
        if var <= 0.0 {
            row.fill(T::zero());
            flat_channels.push(ch);
            continue;
        }
        let inv_sd = 1.0 / var.sqrt();
        let (m, s) = (real::<T>(mean), real::<T>(inv_sd));
        row.mapv_inplace(|v| (v - m) * s);
    }
    (out, flat_channels)
}

/// Split a (normalized) clip into its forty 15 s segments. Segment `k`
/// starts at sample `3000 * k`; concatenating the segments reproduces the
/// clip exactly.
pub fn segment_clip<T: Real>(clip: &Clip<T>) -> Vec<Segment<T>> {
    assert_eq!(clip.data.ncols(), CLIP_SAMPLES, "clip is not canonical");
    (0..SEGMENTS_PER_CLIP)
        .map(|k| {
            let a = k * SEGMENT_SAMPLES;
            Segment {
                clip_id: clip.clip_id,
                segment_index: k,
                data: clip.data.slice(s![.., a..a + SEGMENT_SAMPLES]).to_owned(),
            }
        })
        .collect()
}
