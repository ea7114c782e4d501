//! Glue between the recording and the classifiers: canonicalization,
//! labeling, segmentation, split handling, feature-cache persistence, and
//! flattened segment matrices for the CNN.

use ndarray::Array2;
use predcoh_core::data::{
    label_clips, normalize_clip, resample, segment_clip, ClipLabel, ClipManifest, DataError,
    LabelPolicy, ManifestEntry, Recording, Segment, Split,
};
use predcoh_core::features::{
    BiFeatureKind, FeatureCache, FeatureConfig, FeatureError, UniFeatureKind,
};
use predcoh_core::scalar::{real, Real};
use predcoh_core::TARGET_RATE_HZ;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

/// One split's segments plus everything needed to aggregate per clip.
pub struct SplitData<T: Real> {
    pub clip_meta: Vec<(u32, f64, ClipLabel)>,
    pub segments: Vec<Segment<T>>,
    /// Per-segment label, aligned with `segments`.
    pub labels: Vec<f64>,
}

impl<T: Real> SplitData<T> {
    pub fn n_clips(&self) -> usize {
        self.clip_meta.len()
    }
}

pub struct PreparedData<T: Real> {
    pub manifest: ClipManifest,
    pub train: SplitData<T>,
    pub test: SplitData<T>,
    pub seizure_onsets: Vec<f64>,
    /// (clip_id, channel) pairs that were zero-variance at normalization.
    pub flat_channels: Vec<(u32, usize)>,
}

/// Resample to the canonical rate if needed, label, z-score, segment, and
/// split.
pub fn prepare<T: Real>(
    rec: &Recording<T>,
    policy: &LabelPolicy,
) -> Result<PreparedData<T>, DataError> {
    let canonical;
    let rec = if (rec.sampling_rate - TARGET_RATE_HZ).abs() > 1e-9 {
        canonical = resample(rec, TARGET_RATE_HZ)?;
        &canonical
    } else {
        rec
    };
    let (manifest, clips) = label_clips(rec, policy)?;

    let mut flat_channels = Vec::new();
    let mut split_data = |split: Split| -> SplitData<T> {
        let mut clip_meta = Vec::new();
        let mut segments = Vec::new();
        let mut labels = Vec::new();
        for (entry, clip) in manifest.entries.iter().zip(&clips) {
            if entry.split != split {
                continue;
            }
            clip_meta.push((entry.clip_id, entry.start_s, entry.label));
            let (normalized, flat) = normalize_clip(clip);
            for ch in flat {
                flat_channels.push((entry.clip_id, ch));
            }
            for seg in segment_clip(&normalized) {
                segments.push(seg);
                labels.push(entry.label.target());
            }
        }
        SplitData { clip_meta, segments, labels }
    };
    let train = split_data(Split::Train);
    let test = split_data(Split::Test);
    Ok(PreparedData {
        manifest,
        train,
        test,
        seizure_onsets: rec.seizure_onsets.clone(),
        flat_channels,
    })
}

/// Fit/validation clip split for the feature search.
///
/// Plain chronological (validation = last `fraction` of training clips by
/// start time); when that tail misses a class, falls back to a class-wise
/// chronological split (last fraction per class) and reports it.
pub fn validation_split(
    train_entries: &[&ManifestEntry],
    fraction: f64,
) -> (Vec<u32>, Vec<u32>, bool) {
    let mut by_time: Vec<&ManifestEntry> = train_entries.to_vec();
    by_time.sort_by(|a, b| a.start_s.partial_cmp(&b.start_s).unwrap());
    let n_val = ((by_time.len() as f64 * fraction).ceil() as usize)
        .max(1)
        .min(by_time.len() - 1);
    let (fit, val) = by_time.split_at(by_time.len() - n_val);
    let both = |xs: &[&ManifestEntry]| {
        xs.iter().any(|e| e.label == ClipLabel::Preictal)
            && xs.iter().any(|e| e.label == ClipLabel::Interictal)
    };
    if both(fit) && both(val) {
        return (
            fit.iter().map(|e| e.clip_id).collect(),
            val.iter().map(|e| e.clip_id).collect(),
            false,
        );
    }
    // Class-wise chronological fallback.
    let mut fit_ids = Vec::new();
    let mut val_ids = Vec::new();
    for label in [ClipLabel::Preictal, ClipLabel::Interictal] {
        let class: Vec<&&ManifestEntry> = by_time.iter().filter(|e| e.label == label).collect();
        let n_val = ((class.len() as f64 * fraction).ceil() as usize)
            .max(1)
            .min(class.len().saturating_sub(1).max(1));
        let cut = class.len() - n_val;
        for (i, e) in class.iter().enumerate() {
            if i < cut {
                fit_ids.push(e.clip_id);
            } else {
                val_ids.push(e.clip_id);
            }
        }
    }
    fit_ids.sort_unstable();
    val_ids.sort_unstable();
    (fit_ids, val_ids, true)
}

/// Row subset of a feature cache for the given clip ids.
pub fn filter_cache(cache: &FeatureCache, clip_ids: &[u32]) -> FeatureCache {
    let keep: Vec<usize> = (0..cache.clip_ids.len())
        .filter(|&i| clip_ids.contains(&cache.clip_ids[i]))
        .collect();
    let uni = cache
        .uni
        .iter()
        .map(|(k, m)| {
            let mut out = Array2::<f64>::zeros((keep.len(), m.ncols()));
            for (row, &src) in keep.iter().enumerate() {
                out.row_mut(row).assign(&m.row(src));
            }
            (*k, out)
        })
        .collect();
    let bi = cache
        .bi
        .iter()
        .map(|(k, mats)| (*k, keep.iter().map(|&i| mats[i].clone()).collect()))
        .collect();
    FeatureCache {
        n_channels: cache.n_channels,
        clip_ids: keep.iter().map(|&i| cache.clip_ids[i]).collect(),
        segment_indices: keep.iter().map(|&i| cache.segment_indices[i]).collect(),
        uni,
        bi,
        cfg: cache.cfg.clone(),
    }
}

/// Per-segment labels for a cache, from the clip metadata.
pub fn cache_labels(cache: &FeatureCache, clip_meta: &[(u32, f64, ClipLabel)]) -> Vec<f64> {
    let by_id: BTreeMap<u32, f64> =
        clip_meta.iter().map(|(id, _, l)| (*id, l.target())).collect();
    cache.clip_ids.iter().map(|id| by_id[id]).collect()
}

/// Flatten segments into CNN input rows (channel-major, k x 3000 per row).
/// `stride` selects every stride-th segment per clip (1 = all).
pub fn segment_matrix<T: Real>(
    data: &SplitData<T>,
    stride: usize,
) -> (Array2<T>, Vec<f64>, Vec<u32>, Vec<usize>) {
    let picked: Vec<usize> = (0..data.segments.len())
        .filter(|&i| data.segments[i].segment_index % stride == 0)
        .collect();
    let k = data.segments[0].data.nrows();
    let cols = k * data.segments[0].data.ncols();
    let mut x = Array2::<T>::zeros((picked.len(), cols));
    let mut labels = Vec::with_capacity(picked.len());
    let mut clip_ids = Vec::with_capacity(picked.len());
    let mut seg_idx = Vec::with_capacity(picked.len());
    for (row, &i) in picked.iter().enumerate() {
        let seg = &data.segments[i];
        for (col, &v) in seg.data.iter().enumerate() {
            x[[row, col]] = v;
        }
        labels.push(data.labels[i]);
        clip_ids.push(seg.clip_id);
        seg_idx.push(seg.segment_index);
    }
    (x, labels, clip_ids, seg_idx)
}

/// On-disk form of a kind-level feature cache (one per split).
#[derive(Serialize, Deserialize)]
struct CacheMeta {
    n_channels: usize,
    clip_ids: Vec<u32>,
    segment_indices: Vec<usize>,
    cfg: FeatureConfig,
    uni_kinds: Vec<UniFeatureKind>,
    uni_dims: Vec<usize>,
    bi_kinds: Vec<BiFeatureKind>,
}

pub fn write_cache(dir: &Path, split: &str, cache: &FeatureCache) -> Result<(), FeatureError> {
    fs::create_dir_all(dir)?;
    let meta = CacheMeta {
        n_channels: cache.n_channels,
        clip_ids: cache.clip_ids.clone(),
        segment_indices: cache.segment_indices.clone(),
        cfg: cache.cfg.clone(),
        uni_kinds: cache.uni.keys().copied().collect(),
        uni_dims: cache.uni.values().map(|m| m.ncols()).collect(),
        bi_kinds: cache.bi.keys().copied().collect(),
    };
    fs::write(dir.join(format!("{split}.json")), serde_json::to_vec_pretty(&meta)?)?;
    let mut w = std::io::BufWriter::new(fs::File::create(dir.join(format!("{split}.bin")))?);
    for m in cache.uni.values() {
        for v in m.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    for mats in cache.bi.values() {
        for m in mats {
            for v in m.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_cache(dir: &Path, split: &str) -> Result<FeatureCache, FeatureError> {
    let meta: CacheMeta =
        serde_json::from_slice(&fs::read(dir.join(format!("{split}.json")))?)?;
    let mut bytes = Vec::new();
    fs::File::open(dir.join(format!("{split}.bin")))?.read_to_end(&mut bytes)?;
    let mut chunks = bytes.chunks_exact(8);
    let mut next = || f64::from_le_bytes(chunks.next().expect("cache truncated").try_into().unwrap());
    let n = meta.clip_ids.len();
    let mut uni = BTreeMap::new();
    for (k, dim) in meta.uni_kinds.iter().zip(&meta.uni_dims) {
        let mut m = Array2::<f64>::zeros((n, *dim));
        for v in m.iter_mut() {
            *v = next();
        }
        uni.insert(*k, m);
    }
    let mut bi = BTreeMap::new();
    for k in &meta.bi_kinds {
        let mut mats = Vec::with_capacity(n);
        for _ in 0..n {
            let mut m = Array2::<f64>::zeros((meta.n_channels, meta.n_channels));
            for v in m.iter_mut() {
                *v = next();
            }
            mats.push(m);
        }
        bi.insert(*k, mats);
    }
    Ok(FeatureCache {
        n_channels: meta.n_channels,
        clip_ids: meta.clip_ids,
        segment_indices: meta.segment_indices,
        uni,
        bi,
        cfg: meta.cfg,
    })
}

/// Clip metadata in eval's shape for one split of the manifest.
pub fn clip_meta_of(manifest: &ClipManifest, split: Split) -> Vec<(u32, f64, ClipLabel)> {
    manifest
        .split_entries(split)
        .map(|e| (e.clip_id, e.start_s, e.label))
        .collect()
}

/// Gaussian test fixture helper shared by the integration tests.
pub fn noise_matrix<T: Real>(seed: u64, rows: usize, cols: usize) -> Array2<T> {
    let mut rng = predcoh_core::rng::stream(seed, "cli/test-noise", 0);
    let mut buf = vec![0.0f64; rows * cols];
    predcoh_core::rng::fill_gaussian(&mut rng, &mut buf);
    Array2::from_shape_fn((rows, cols), |(i, j)| real(buf[i * cols + j]))
}
