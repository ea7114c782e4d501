//! Per-segment feature extraction: univariate and bivariate catalogs, the
//! three symmetric-matrix variants, assembly into flat vectors, and the
//! on-disk feature store.

pub mod bivariate;
pub mod matrix;
pub mod univariate;

pub use bivariate::{
    mean_phase_coherence, nonlinear_interdependence, nonlinear_interdependence_pair, pearson,
    EmbeddingParams,
};
pub use matrix::{symmetric_eigen, variant_transform, MatrixVariant};
pub use univariate::{ar_fit, band_power, moments, LOG_POWER_FLOOR};

use crate::data::Segment;
use crate::dsp::SpectralEngine;
use crate::scalar::Real;
use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("band ({0}, {1}) Hz outside (0, {2}) Hz")]
    BandOutOfRange(f64, f64, f64),
    #[error("AR order {0} invalid for signal length {1}")]
    BadArOrder(usize, usize),
    #[error("signal too short for embedding: need >= {need} samples, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("degenerate input for {feature}: {detail}")]
    Degenerate { feature: String, detail: String },
    #[error("non-finite value in {feature} at {element}")]
    NonFinite { feature: String, element: String },
    #[error("feature store io: {0}")]
    Io(#[from] std::io::Error),
    #[error("feature store metadata: {0}")]
    Json(#[from] serde_json::Error),
}

/// Standard EEG bands below the 100 Hz Nyquist.
pub const DEFAULT_BANDS: [(f64, f64); 6] = [
    (0.5, 4.0),
    (4.0, 8.0),
    (8.0, 12.0),
    (12.0, 30.0),
    (30.0, 70.0),
    (70.0, 95.0),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UniFeatureKind {
    BandPower,
    Moments,
    ArCoefficients,
    ArPredictionError,
}

impl UniFeatureKind {
    pub const ALL: [UniFeatureKind; 4] = [
        UniFeatureKind::BandPower,
        UniFeatureKind::Moments,
        UniFeatureKind::ArCoefficients,
        UniFeatureKind::ArPredictionError,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            UniFeatureKind::BandPower => "band_power",
            UniFeatureKind::Moments => "moments",
            UniFeatureKind::ArCoefficients => "ar_coefficients",
            UniFeatureKind::ArPredictionError => "ar_prediction_error",
        }
    }

    pub fn dim(self, n_channels: usize, cfg: &FeatureConfig) -> usize {
        n_channels
            * match self {
                UniFeatureKind::BandPower => cfg.bands.len(),
                UniFeatureKind::Moments => 4,
                UniFeatureKind::ArCoefficients => cfg.ar_order,
                UniFeatureKind::ArPredictionError => 1,
            }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiFeatureKind {
    CrossCorrTime,
    CrossCorrFreq,
    MeanPhaseCoherence,
    NonlinearInterdependence,
}

impl BiFeatureKind {
    pub const ALL: [BiFeatureKind; 4] = [
        BiFeatureKind::CrossCorrTime,
        BiFeatureKind::CrossCorrFreq,
        BiFeatureKind::MeanPhaseCoherence,
        BiFeatureKind::NonlinearInterdependence,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BiFeatureKind::CrossCorrTime => "cross_corr_time",
            BiFeatureKind::CrossCorrFreq => "cross_corr_freq",
            BiFeatureKind::MeanPhaseCoherence => "mean_phase_coherence",
            BiFeatureKind::NonlinearInterdependence => "nonlinear_interdependence",
        }
    }
}

/// Knobs for the extraction catalog.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub bands: Vec<(f64, f64)>,
    pub ar_order: usize,
    pub embedding: EmbeddingParams,
    /// Fraction of samples trimmed at each end of the Hilbert phases.
    pub hilbert_edge_trim: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            bands: DEFAULT_BANDS.to_vec(),
            ar_order: 8,
            embedding: EmbeddingParams::default(),
            hilbert_edge_trim: 0.05,
        }
    }
}

/// Univariate feature block for one segment.
pub fn uni_features<T: Real>(
    seg: &ArrayView2<T>,
    kind: UniFeatureKind,
    cfg: &FeatureConfig,
    rate: f64,
    eng: &SpectralEngine<T>,
) -> Result<Vec<f64>, FeatureError> {
    match kind {
        UniFeatureKind::BandPower => band_power(seg, &cfg.bands, rate, eng),
        UniFeatureKind::Moments => Ok(moments(seg)),
        UniFeatureKind::ArCoefficients | UniFeatureKind::ArPredictionError => {
            let mut out = Vec::new();
            for row in seg.rows() {
                let x: Vec<f64> = row.iter().map(|v| v.as_f64()).collect();
                let (coefs, resid) = ar_fit(&x, cfg.ar_order)?;
                match kind {
                    UniFeatureKind::ArCoefficients => out.extend(coefs),
                    _ => out.push(resid),
                }
            }
            Ok(out)
        }
    }
}

/// Symmetric channel-pair matrix for one segment. Correlation-type
/// measures carry ones on the diagonal.
pub fn bivariate_matrix<T: Real>(
    seg: &ArrayView2<T>,
    kind: BiFeatureKind,
    cfg: &FeatureConfig,
    eng: &SpectralEngine<T>,
) -> Result<Array2<f64>, FeatureError> {
    let n = seg.nrows();
    if n < 2 {
        return Err(FeatureError::Degenerate {
            feature: kind.as_str().into(),
            detail: "needs at least 2 channels".into(),
        });
    }
    let mut mat = Array2::<f64>::eye(n);
    let pair_err = |i: usize, j: usize, e: FeatureError| FeatureError::Degenerate {
        feature: format!("{}[{i},{j}]", kind.as_str()),
        detail: e.to_string(),
    };
    match kind {
        BiFeatureKind::CrossCorrTime => {
            let rows: Vec<Vec<f64>> = seg
                .rows()
                .into_iter()
                .map(|r| r.iter().map(|v| v.as_f64()).collect())
                .collect();
            for i in 0..n {
                for j in (i + 1)..n {
                    let r = pearson(&rows[i], &rows[j]).map_err(|e| pair_err(i, j, e))?;
                    mat[[i, j]] = r;
                    mat[[j, i]] = r;
                }
            }
        }
        BiFeatureKind::CrossCorrFreq => {
            let spectra: Vec<Vec<f64>> = seg
                .rows()
                .into_iter()
                .map(|r| {
                    let x: Vec<T> = r.iter().copied().collect();
                    eng.periodogram(&x)
                        .iter()
                        .map(|p| p.max(LOG_POWER_FLOOR).log10())
                        .collect()
                })
                .collect();
            for i in 0..n {
                for j in (i + 1)..n {
                    let r = pearson(&spectra[i], &spectra[j]).map_err(|e| pair_err(i, j, e))?;
                    mat[[i, j]] = r;
                    mat[[j, i]] = r;
                }
            }
        }
        BiFeatureKind::MeanPhaseCoherence => {
            let rows: Vec<Vec<T>> = seg
                .rows()
                .into_iter()
                .map(|r| r.iter().copied().collect())
                .collect();
            for i in 0..n {
                for j in (i + 1)..n {
                    let r = mean_phase_coherence(&rows[i], &rows[j], eng, cfg.hilbert_edge_trim);
                    mat[[i, j]] = r;
                    mat[[j, i]] = r;
                }
            }
        }
        BiFeatureKind::NonlinearInterdependence => {
            let rows: Vec<Vec<T>> = seg
                .rows()
                .into_iter()
                .map(|r| r.iter().copied().collect())
                .collect();
            let engine =
                bivariate::NliEngine::new(&rows, &cfg.embedding).map_err(|e| pair_err(0, 0, e))?;
            for i in 0..n {
                for j in (i + 1)..n {
                    let (sxy, syx) = engine.pair(i, j);
                    let s = 0.5 * (sxy + syx);
                    mat[[i, j]] = s;
                    mat[[j, i]] = s;
                }
            }
        }
    }
    Ok(mat)
}

/// Element-by-element provenance labels plus dimensions for one
/// (uni, bi, variant) combination.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    pub uni: UniFeatureKind,
    pub bi: BiFeatureKind,
    pub variant: MatrixVariant,
    pub n_channels: usize,
    pub bands: Vec<(f64, f64)>,
    pub ar_order: usize,
    pub labels: Vec<String>,
}

impl FeatureDescriptor {
    pub fn new(
        uni: UniFeatureKind,
        bi: BiFeatureKind,
        variant: MatrixVariant,
        n_channels: usize,
        cfg: &FeatureConfig,
    ) -> Self {
        let mut labels = Vec::new();
        for ch in 0..n_channels {
            match uni {
                UniFeatureKind::BandPower => {
                    for (lo, hi) in &cfg.bands {
                        labels.push(format!("band_power:ch{ch}:{lo}-{hi}hz"));
                    }
                }
                UniFeatureKind::Moments => {
                    for stat in ["mean", "var", "skew", "kurt"] {
                        labels.push(format!("moments:ch{ch}:{stat}"));
                    }
                }
                UniFeatureKind::ArCoefficients => {
                    for k in 1..=cfg.ar_order {
                        labels.push(format!("ar_coefficients:ch{ch}:a{k}"));
                    }
                }
                UniFeatureKind::ArPredictionError => {
                    labels.push(format!("ar_prediction_error:ch{ch}"));
                }
            }
        }
        let bi_name = bi.as_str();
        let push_matrix = |labels: &mut Vec<String>| {
            for i in 0..n_channels {
                for j in (i + 1)..n_channels {
                    labels.push(format!("{bi_name}:pair:{i}-{j}"));
                }
            }
        };
        let push_eigen = |labels: &mut Vec<String>| {
            for k in 0..n_channels {
                labels.push(format!("{bi_name}:eval:{k}"));
            }
            for ch in 0..n_channels {
                labels.push(format!("{bi_name}:evec:{ch}"));
            }
            for ch in 0..n_channels {
                labels.push(format!("{bi_name}:rowmax:{ch}"));
            }
        };
        match variant {
            MatrixVariant::Matrix => push_matrix(&mut labels),
            MatrixVariant::Eigen => push_eigen(&mut labels),
            MatrixVariant::Combined => {
                push_matrix(&mut labels);
                push_eigen(&mut labels);
            }
        }
        FeatureDescriptor {
            uni,
            bi,
            variant,
            n_channels,
            bands: cfg.bands.clone(),
            ar_order: cfg.ar_order,
            labels,
        }
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn combo_name(&self) -> String {
        format!(
            "{}+{}+{}",
            self.uni.as_str(),
            self.bi.as_str(),
            self.variant.as_str()
        )
    }
}

/// One assembled feature vector.
#[derive(Debug, Clone)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub descriptor: FeatureDescriptor,
    pub clip_id: u32,
    pub segment_index: usize,
}

/// Assemble uni ++ variant(bi matrix) for one segment, with a finiteness
/// check that names the offending element.
pub fn assemble<T: Real>(
    seg: &Segment<T>,
    uni: UniFeatureKind,
    bi: BiFeatureKind,
    variant: MatrixVariant,
    cfg: &FeatureConfig,
    rate: f64,
    eng: &SpectralEngine<T>,
) -> Result<FeatureVector, FeatureError> {
    let view = seg.data.view();
    let mut values = uni_features(&view, uni, cfg, rate, eng)?;
    let mat = bivariate_matrix(&view, bi, cfg, eng)?;
    values.extend(variant_transform(&mat, variant));
    let descriptor = FeatureDescriptor::new(uni, bi, variant, seg.data.nrows(), cfg);
    debug_assert_eq!(values.len(), descriptor.dim());
    for (i, v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(FeatureError::NonFinite {
                feature: descriptor.combo_name(),
                element: descriptor.labels[i].clone(),
            });
        }
    }
    Ok(FeatureVector {
        values,
        descriptor,
        clip_id: seg.clip_id,
        segment_index: seg.segment_index,
    })
}

/// Kind-level extraction cache: each univariate kind and each bivariate
/// matrix is computed once per segment; the 48 (uni, bi, variant) combos
/// are assembled from here by concatenation.
#[derive(Debug, Clone)]
pub struct FeatureCache {
    pub n_channels: usize,
    pub clip_ids: Vec<u32>,
    pub segment_indices: Vec<usize>,
    pub uni: BTreeMap<UniFeatureKind, Array2<f64>>,
    pub bi: BTreeMap<BiFeatureKind, Vec<Array2<f64>>>,
    pub cfg: FeatureConfig,
}

/// Extract the requested kinds for every segment (parallel across
/// segments, output order stable).
pub fn extract_cache<T: Real>(
    segments: &[Segment<T>],
    uni_kinds: &[UniFeatureKind],
    bi_kinds: &[BiFeatureKind],
    cfg: &FeatureConfig,
    rate: f64,
) -> Result<FeatureCache, FeatureError> {
    assert!(!segments.is_empty());
    let n_channels = segments[0].data.nrows();
    let seg_len = segments[0].data.ncols();
    let eng = SpectralEngine::<T>::new(seg_len);

    struct PerSegment {
        uni: Vec<Vec<f64>>,
        bi: Vec<Array2<f64>>,
    }

    let results: Result<Vec<PerSegment>, FeatureError> = segments
        .par_iter()
        .map(|seg| {
            let view = seg.data.view();
            let mut u = Vec::with_capacity(uni_kinds.len());
            for &k in uni_kinds {
                u.push(uni_features(&view, k, cfg, rate, &eng)?);
            }
            let mut b = Vec::with_capacity(bi_kinds.len());
            for &k in bi_kinds {
                b.push(bivariate_matrix(&view, k, cfg, &eng)?);
            }
            Ok(PerSegment { uni: u, bi: b })
        })
        .collect();
    let results = results?;

    let mut uni = BTreeMap::new();
    for (ki, &k) in uni_kinds.iter().enumerate() {
        let dim = k.dim(n_channels, cfg);
        let mut m = Array2::<f64>::zeros((segments.len(), dim));
        for (si, r) in results.iter().enumerate() {
            for (d, &v) in r.uni[ki].iter().enumerate() {
                m[[si, d]] = v;
            }
        }
        uni.insert(k, m);
    }
    let mut bi = BTreeMap::new();
    for (ki, &k) in bi_kinds.iter().enumerate() {
        bi.insert(k, results.iter().map(|r| r.bi[ki].clone()).collect());
    }
    Ok(FeatureCache {
        n_channels,
        clip_ids: segments.iter().map(|s| s.clip_id).collect(),
        segment_indices: segments.iter().map(|s| s.segment_index).collect(),
        uni,
        bi,
        cfg: cfg.clone(),
    })
}

impl FeatureCache {
    /// Assemble the (n_segments, dim) matrix for one combo from the cache.
    pub fn assemble_matrix(
        &self,
        uni: UniFeatureKind,
        bi: BiFeatureKind,
        variant: MatrixVariant,
    ) -> (FeatureDescriptor, Array2<f64>) {
        let descriptor = FeatureDescriptor::new(uni, bi, variant, self.n_channels, &self.cfg);
        let u = &self.uni[&uni];
        let b = &self.bi[&bi];
        let n = self.clip_ids.len();
        let mut out = Array2::<f64>::zeros((n, descriptor.dim()));
        for s in 0..n {
            let mut col = 0;
            for d in 0..u.ncols() {
                out[[s, col]] = u[[s, d]];
                col += 1;
            }
            for v in variant_transform(&b[s], variant) {
                out[[s, col]] = v;
                col += 1;
            }
        }
        (descriptor, out)
    }
}

/// Sidecar metadata for a stored feature matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureStoreMeta {
    pub subject_id: String,
    pub split: String,
    pub descriptor: FeatureDescriptor,
    pub n_segments: usize,
    pub dim: usize,
    pub clip_ids: Vec<u32>,
    pub segment_indices: Vec<usize>,
}

/// File name stem for a (subject, split, descriptor) store entry.
pub fn store_stem(subject: &str, split: &str, d: &FeatureDescriptor) -> String {
    format!(
        "features_{subject}_{split}_{}_{}_{}",
        d.uni.as_str(),
        d.bi.as_str(),
        d.variant.as_str()
    )
}

/// Write `<stem>.bin` (row-major little-endian f64) and `<stem>.json`.
pub fn write_feature_matrix(
    dir: &Path,
    meta: &FeatureStoreMeta,
    matrix: &Array2<f64>,
) -> Result<PathBuf, FeatureError> {
    fs::create_dir_all(dir)?;
    let stem = store_stem(&meta.subject_id, &meta.split, &meta.descriptor);
    let bin_path = dir.join(format!("{stem}.bin"));
    let mut w = BufWriter::new(fs::File::create(&bin_path)?);
    for v in matrix.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    fs::write(dir.join(format!("{stem}.json")), serde_json::to_vec_pretty(meta)?)?;
    Ok(bin_path)
}

/// Read a stored feature matrix back.
pub fn read_feature_matrix(
    dir: &Path,
    subject: &str,
    split: &str,
    d: &FeatureDescriptor,
) -> Result<(FeatureStoreMeta, Array2<f64>), FeatureError> {
    let stem = store_stem(subject, split, d);
    let meta: FeatureStoreMeta =
        serde_json::from_slice(&fs::read(dir.join(format!("{stem}.json")))?)?;
    let mut bytes = Vec::new();
    fs::File::open(dir.join(format!("{stem}.bin")))?.read_to_end(&mut bytes)?;
    let mut matrix = Array2::<f64>::zeros((meta.n_segments, meta.dim));
    for (slot, chunk) in matrix.iter_mut().zip(bytes.chunks_exact(8)) {
        *slot = f64::from_le_bytes(chunk.try_into().unwrap());
    }
    Ok((meta, matrix))
}

/// CSV export of a feature matrix for eyeballing.
pub fn export_feature_csv(
    path: &Path,
    meta: &FeatureStoreMeta,
    matrix: &Array2<f64>,
) -> Result<(), FeatureError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write!(w, "clip_id,segment_idx")?;
    for l in &meta.descriptor.labels {
        write!(w, ",{l}")?;
    }
    writeln!(w)?;
    for (s, row) in matrix.rows().into_iter().enumerate() {
        write!(w, "{},{}", meta.clip_ids[s], meta.segment_indices[s])?;
        for v in row.iter() {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}
