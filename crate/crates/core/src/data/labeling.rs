//! Clip labeling: preictal windows, post-onset exclusion, interictal
//! margins, edge discard, artifact rejection, and the chronological
//! train/test split.

use super::{ClipLabel, DataError, Recording, Split};
use crate::scalar::Real;
use crate::{CLIP_SECONDS, TARGET_RATE_HZ};
use ndarray::s;
use serde::{Deserialize, Serialize};

/// Temporal comparisons tolerate this much float slack (seconds).
const EPS_S: f64 = 1e-6;

/// Labeling rules. The defaults follow the long-term-recording protocol:
/// six preictal clips ending 5 min before each onset, 60 min excluded after
/// every onset, interictal at least 4 h away from any seizure, and 4 h
/// discarded at both ends of the recording.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelPolicy {
    /// Number of contiguous preictal clips anchored before each onset.
    pub preictal_clips_per_seizure: usize,
    /// Gap between the end of the preictal window and the onset (s).
    pub preictal_gap_s: f64,
    /// Data discarded after each onset (s).
    pub post_onset_exclusion_s: f64,
    /// Minimum distance of interictal data from any onset (s).
    pub interictal_margin_s: f64,
    /// Data discarded at the beginning and end of the recording (s).
    pub edge_discard_s: f64,
    /// Clips starting before `split_fraction * duration` are train.
    pub split_fraction: f64,
}

impl Default for LabelPolicy {
    fn default() -> Self {
        LabelPolicy {
            preictal_clips_per_seizure: 6,
            preictal_gap_s: 5.0 * 60.0,
            post_onset_exclusion_s: 60.0 * 60.0,
            interictal_margin_s: 240.0 * 60.0,
            edge_discard_s: 240.0 * 60.0,
            split_fraction: 0.5,
        }
    }
}

impl LabelPolicy {
    /// Desk-scale variant for short synthetic recordings: same preictal
    /// window and post-onset exclusion, but 30 min edge discard and 90 min
    /// interictal margins so a day-long recording yields a usable manifest.
    pub fn desk() -> Self {
        LabelPolicy {
            edge_discard_s: 30.0 * 60.0,
            interictal_margin_s: 90.0 * 60.0,
            ..LabelPolicy::default()
        }
    }

    /// Length of the preictal window (s).
    pub fn preictal_window_s(&self) -> f64 {
        self.preictal_clips_per_seizure as f64 * CLIP_SECONDS
    }
}

/// A clip position decided by the planner, before any data is touched.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedClip {
    pub start_s: f64,
    pub label: ClipLabel,
    /// Onset this clip precedes (preictal only).
    pub source_seizure: Option<f64>,
}

/// One manifest row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub clip_id: u32,
    pub subject_id: String,
    pub start_s: f64,
    pub label: ClipLabel,
    pub split: Split,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub source_seizure: Option<f64>,
}

/// Ordered clip inventory with the chronological split.
#[derive(Debug, Clone, Default)]
pub struct ClipManifest {
    pub entries: Vec<ManifestEntry>,
}

impl ClipManifest {
    pub fn count(&self, split: Split, label: ClipLabel) -> usize {
        self.entries
            .iter()
            .filter(|e| e.split == split && e.label == label)
            .count()
    }

    pub fn split_entries(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// max(train start) < min(test start).
    pub fn split_is_chronological(&self) -> bool {
        let max_train = self
            .split_entries(Split::Train)
            .map(|e| e.start_s)
            .fold(f64::NEG_INFINITY, f64::max);
        let min_test = self
            .split_entries(Split::Test)
            .map(|e| e.start_s)
            .fold(f64::INFINITY, f64::min);
        max_train < min_test
    }
}

fn overlaps(a0: f64, a1: f64, b0: f64, b1: f64) -> bool {
    a0 < b1 - EPS_S && b0 < a1 - EPS_S
}

/// Decide clip positions from the annotations alone.
///
/// Rules, in order of precedence:
/// 1. the first and last `edge_discard_s` of the recording are unusable;
/// 2. `[onset, onset + exclusion)` is unusable for any clip;
/// 3. an onset falling inside an earlier onset's exclusion window is not
///    counted as a seizure event (it contributes no preictal window, but
///    its exclusion and interictal margins still apply);
/// 4. preictal clips tile `[onset - gap - n*600, onset - gap)` and are kept
///    only if fully usable and not overlapping an earlier preictal clip;
/// 5. interictal clips tile each maximal region at least
///    `interictal_margin_s` from every onset, skipping any clip that
///    overlaps a preictal window or exclusion zone;
/// 6. clips overlapping an annotated artifact interval are dropped.
pub fn plan_clips(
    duration_s: f64,
    onsets: &[f64],
    artifacts: &[(f64, f64)],
    policy: &LabelPolicy,
) -> Vec<PlannedClip> {
    let usable_lo = policy.edge_discard_s;
    let usable_hi = duration_s - policy.edge_discard_s;
    if usable_hi - usable_lo < CLIP_SECONDS {
        return Vec::new();
    }

    let exclusions: Vec<(f64, f64)> = onsets
        .iter()
        .map(|&o| (o, o + policy.post_onset_exclusion_s))
        .collect();

    let clip_ok = |start: f64, end: f64| -> bool {
        start >= usable_lo - EPS_S
            && end <= usable_hi + EPS_S
            && !exclusions.iter().any(|&(a, b)| overlaps(start, end, a, b))
            && !artifacts.iter().any(|&(a, b)| overlaps(start, end, a, b))
    };

    let mut clips: Vec<PlannedClip> = Vec::new();

    // Preictal windows. Onsets swallowed by an earlier exclusion window are
    // dropped as events (rule 3).
    let mut counted_onsets: Vec<f64> = Vec::new();
    for &o in onsets {
        if counted_onsets
            .iter()
            .any(|&prev| o >= prev && o < prev + policy.post_onset_exclusion_s - EPS_S)
        {
            continue;
        }
        counted_onsets.push(o);
        let window_start = o - policy.preictal_gap_s - policy.preictal_window_s();
        for k in 0..policy.preictal_clips_per_seizure {
            let start = window_start + k as f64 * CLIP_SECONDS;
            let end = start + CLIP_SECONDS;
            let taken = clips
                .iter()
                .any(|c| overlaps(start, end, c.start_s, c.start_s + CLIP_SECONDS));
            if clip_ok(start, end) && !taken {
                clips.push(PlannedClip {
                    start_s: start,
                    label: ClipLabel::Preictal,
                    source_seizure: Some(o),
                });
            }
        }
    }

    // Interictal regions: usable span minus the margin zone of every onset.
    let mut regions: Vec<(f64, f64)> = vec![(usable_lo, usable_hi)];
    for &o in onsets {
        let (blk_lo, blk_hi) = (o - policy.interictal_margin_s, o + policy.interictal_margin_s);
        let mut next = Vec::with_capacity(regions.len() + 1);
        for (a, b) in regions {
            if blk_hi <= a + EPS_S || blk_lo >= b - EPS_S {
                next.push((a, b));
            } else {
                if blk_lo > a + EPS_S {
                    next.push((a, blk_lo));
                }
                if blk_hi < b - EPS_S {
                    next.push((blk_hi, b));
                }
            }
        }
        regions = next;
    }

    let preictal_windows: Vec<(f64, f64)> = clips
        .iter()
        .map(|c| (c.start_s, c.start_s + CLIP_SECONDS))
        .collect();
    for (a, b) in regions {
        let n = ((b - a + EPS_S) / CLIP_SECONDS).floor() as usize;
        for k in 0..n {
            let start = a + k as f64 * CLIP_SECONDS;
            let end = start + CLIP_SECONDS;
            let hits_preictal = preictal_windows
                .iter()
                .any(|&(p0, p1)| overlaps(start, end, p0, p1));
            if clip_ok(start, end) && !hits_preictal {
                clips.push(PlannedClip {
                    start_s: start,
                    label: ClipLabel::Interictal,
                    source_seizure: None,
                });
            }
        }
    }

    clips.sort_by(|x, y| x.start_s.partial_cmp(&y.start_s).unwrap());
    clips
}

/// Plan clips for a recording and materialize manifest plus clip data.
///
/// The recording must already be at the canonical 200 Hz.
pub fn label_clips<T: Real>(
    rec: &Recording<T>,
    policy: &LabelPolicy,
) -> Result<(ClipManifest, Vec<super::Clip<T>>), DataError> {
    if (rec.sampling_rate - TARGET_RATE_HZ).abs() > 1e-9 {
        return Err(DataError::NotCanonicalRate {
            expected: TARGET_RATE_HZ,
            got: rec.sampling_rate,
        });
    }
    let duration = rec.duration_s();
    let planned = plan_clips(duration, &rec.seizure_onsets, &rec.artifact_intervals, policy);
    let split_time = duration * policy.split_fraction;
    let samples_per_clip = crate::CLIP_SAMPLES;

    let mut manifest = ClipManifest::default();
    let mut clips = Vec::with_capacity(planned.len());
    for (idx, p) in planned.iter().enumerate() {
        let clip_id = idx as u32;
        let split = if p.start_s < split_time {
            Split::Train
        } else {
            Split::Test
        };
        manifest.entries.push(ManifestEntry {
            clip_id,
            subject_id: rec.subject_id.clone(),
            start_s: p.start_s,
            label: p.label,
            split,
            source_seizure: p.source_seizure,
        });
        let s0 = (p.start_s * rec.sampling_rate).round() as usize;
        let data = rec.data.slice(s![.., s0..s0 + samples_per_clip]).to_owned();
        clips.push(super::Clip {
            subject_id: rec.subject_id.clone(),
            clip_id,
            start_s: p.start_s,
            label: p.label,
            source_seizure: p.source_seizure,
            data,
        });
    }
    Ok((manifest, clips))
}

#[cfg(test)]
mod tests {
    use super::*;

    const H: f64 = 3600.0;

    fn count(clips: &[PlannedClip], label: ClipLabel) -> usize {
        clips.iter().filter(|c| c.label == label).count()
    }

    #[test]
    fn single_onset_24h_worked_example() {
        // Onset at hour 12 of a 24 h recording: six preictal clips, and
        // interictal only in [4 h, 8 h) and [16 h, 20 h) -> 48 clips.
        let clips = plan_clips(24.0 * H, &[12.0 * H], &[], &LabelPolicy::default());
        assert_eq!(count(&clips, ClipLabel::Preictal), 6);
        assert_eq!(count(&clips, ClipLabel::Interictal), 48);
        for c in clips.iter().filter(|c| c.label == ClipLabel::Preictal) {
            assert!(c.start_s >= 12.0 * H - 65.0 * 60.0 - 1e-6);
            assert!(c.start_s + 600.0 <= 12.0 * H - 5.0 * 60.0 + 1e-6);
            assert_eq!(c.source_seizure, Some(12.0 * H));
        }
    }

    #[test]
    fn no_onsets_24h_gives_96_interictal() {
        let clips = plan_clips(24.0 * H, &[], &[], &LabelPolicy::default());
        assert_eq!(count(&clips, ClipLabel::Preictal), 0);
        assert_eq!(count(&clips, ClipLabel::Interictal), 96);
    }

    #[test]
    fn onset_inside_previous_exclusion_yields_no_preictal() {
        // Second onset 30 min after the first sits inside the first's
        // 60 min exclusion: all of its would-be preictal clips are dropped.
        let clips = plan_clips(24.0 * H, &[12.0 * H, 12.5 * H], &[], &LabelPolicy::default());
        assert_eq!(count(&clips, ClipLabel::Preictal), 6);
        for c in clips.iter().filter(|c| c.label == ClipLabel::Preictal) {
            assert_eq!(c.source_seizure, Some(12.0 * H));
        }
    }

    #[test]
    fn short_recording_yields_nothing() {
        let clips = plan_clips(7.9 * H, &[4.0 * H], &[], &LabelPolicy::default());
        assert!(clips.is_empty());
    }

    #[test]
    fn artifact_drops_overlapping_clips() {
        // Artifact covering [5 h, 5.05 h) kills exactly one interictal clip.
        let base = plan_clips(24.0 * H, &[12.0 * H], &[], &LabelPolicy::default());
        let with_art = plan_clips(
            24.0 * H,
            &[12.0 * H],
            &[(5.0 * H, 5.05 * H)],
            &LabelPolicy::default(),
        );
        assert_eq!(
            count(&with_art, ClipLabel::Interictal),
            count(&base, ClipLabel::Interictal) - 1
        );
    }

    #[test]
    fn clips_never_overlap_anything_forbidden() {
        // Randomized onset layouts: exclusivity invariants.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let policy = LabelPolicy::default();
        for _ in 0..100 {
            let dur = rng.random_range(9.0..40.0) * H;
            let n_onsets = rng.random_range(0..6);
            let mut onsets: Vec<f64> = (0..n_onsets)
                .map(|_| rng.random_range(0.0..dur))
                .collect();
            onsets.sort_by(|a, b| a.partial_cmp(b).unwrap());
            onsets.dedup_by(|a, b| (*a - *b).abs() < 1.0);
            let clips = plan_clips(dur, &onsets, &[], &policy);
            for (i, c) in clips.iter().enumerate() {
                let (c0, c1) = (c.start_s, c.start_s + 600.0);
                assert!(c0 >= policy.edge_discard_s - 1e-6);
                assert!(c1 <= dur - policy.edge_discard_s + 1e-6);
                for &o in &onsets {
                    assert!(
                        !overlaps(c0, c1, o, o + policy.post_onset_exclusion_s),
                        "clip intersects exclusion"
                    );
                    if c.label == ClipLabel::Interictal {
                        assert!(
                            c1 <= o - policy.interictal_margin_s + 1e-6
                                || c0 >= o + policy.interictal_margin_s - 1e-6,
                            "interictal clip inside margin"
                        );
                    }
                }
                for other in &clips[i + 1..] {
                    assert!(
                        !overlaps(c0, c1, other.start_s, other.start_s + 600.0),
                        "clips overlap"
                    );
                }
            }
        }
    }
}
