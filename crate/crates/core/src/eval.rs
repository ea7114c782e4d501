//! Evaluation stack: clip-level predictions, ROC AUC (Mann-Whitney with
//! midrank ties), Hanley-McNeil p-values, prediction correlation c and
//! weighted error correlation c_w, class-conditional permutation p-values,
//! and information-transfer curves with a random-omission control.
//!
//! All statistics here are plain `f64`; the vectors involved are one entry
//! per test clip.

use crate::data::ClipLabel;
use crate::rng::stream;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("both classes must be present")]
    SingleClass,
    #[error("zero variance in {0}")]
    ZeroVariance(String),
    #[error("no errors to correlate (both methods predicted perfectly)")]
    NoErrors,
    #[error("clips missing segments: {0:?}")]
    MissingSegments(Vec<u32>),
    #[error("prediction series are not aligned (clip {0})")]
    Misaligned(u32),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Per-model outputs for one 15 s segment.
#[derive(Debug, Clone)]
pub struct SegmentOutput {
    pub clip_id: u32,
    pub segment_index: usize,
    pub per_model: Vec<f64>,
}

/// One clip in a prediction series.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClipPrediction {
    pub clip_id: u32,
    pub start_s: f64,
    /// 1.0 preictal, 0.0 interictal.
    pub label: f64,
    /// Ensemble-mean probability of preictal.
    pub probability: f64,
    /// Per-model clip probabilities (segment means), for SD reporting.
    pub per_model: Vec<f64>,
}

impl ClipPrediction {
    /// Population SD over ensemble members.
    pub fn model_sd(&self) -> f64 {
        let n = self.per_model.len() as f64;
        if n < 1.0 {
            return 0.0;
        }
        let mean = self.per_model.iter().sum::<f64>() / n;
        (self.per_model.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n).sqrt()
    }
}

/// Clip-level predictions of one method on one test set, ordered by
/// clip_id.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionSeries {
    pub method: String,
    pub clips: Vec<ClipPrediction>,
}

impl PredictionSeries {
    pub fn probabilities(&self) -> Vec<f64> {
        self.clips.iter().map(|c| c.probability).collect()
    }

    pub fn labels(&self) -> Vec<f64> {
        self.clips.iter().map(|c| c.label).collect()
    }

    /// Prediction errors e = |p - L|.
    pub fn errors(&self) -> Vec<f64> {
        self.clips.iter().map(|c| (c.probability - c.label).abs()).collect()
    }

    pub fn auc(&self) -> Result<f64, EvalError> {
        roc_auc(&self.labels(), &self.probabilities())
    }
}

/// Average the 40 segment outputs per clip (per model, then across
/// models — equal weights, so the order is immaterial).
pub fn clip_predict(
    method: &str,
    outputs: &[SegmentOutput],
    clip_meta: &[(u32, f64, ClipLabel)],
    segments_per_clip: usize,
) -> Result<PredictionSeries, EvalError> {
    let mut by_clip: BTreeMap<u32, Vec<&SegmentOutput>> = BTreeMap::new();
    for o in outputs {
        by_clip.entry(o.clip_id).or_default().push(o);
    }
    let mut missing = Vec::new();
    let mut clips = Vec::with_capacity(clip_meta.len());
    let mut meta_sorted = clip_meta.to_vec();
    meta_sorted.sort_by_key(|m| m.0);
    for (clip_id, start_s, label) in meta_sorted {
        let segs = by_clip.get(&clip_id).map(|v| v.as_slice()).unwrap_or(&[]);
        if segs.len() != segments_per_clip {
            missing.push(clip_id);
            continue;
        }
        let n_models = segs[0].per_model.len();
        let mut per_model = vec![0.0; n_models];
        for s in segs {
            for (m, &p) in s.per_model.iter().enumerate() {
                per_model[m] += p;
            }
        }
        for p in &mut per_model {
            *p /= segments_per_clip as f64;
        }
        let probability = per_model.iter().sum::<f64>() / n_models as f64;
        clips.push(ClipPrediction {
            clip_id,
            start_s,
            label: label.target(),
            probability,
            per_model,
        });
    }
    if !missing.is_empty() {
        return Err(EvalError::MissingSegments(missing));
    }
    Ok(PredictionSeries { method: method.to_string(), clips })
}

/// ROC AUC as the Mann-Whitney statistic with midrank tie handling:
/// P(p_pos > p_neg) + 0.5 P(tie), computed exactly.
pub fn roc_auc(labels: &[f64], probs: &[f64]) -> Result<f64, EvalError> {
    assert_eq!(labels.len(), probs.len());
    let n = labels.len();
    let n_pos = labels.iter().filter(|&&y| y > 0.5).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| probs[a].partial_cmp(&probs[b]).unwrap());
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && probs[order[j + 1]] == probs[order[i]] {
            j += 1;
        }
        // Ranks i+1 ..= j+1 share the average rank.
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] > 0.5 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let auc = (rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0) / (n_pos as f64 * n_neg as f64);
    Ok(auc)
}

/// Abramowitz-Stegun 7.1.26 rational approximation of erf (|err| < 1.5e-7,
/// odd and monotone).
fn erf(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    sign * (1.0 - poly * (-x * x).exp())
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

/// Standard error of the AUC plus the intermediate Q1, Q2. The AUC is
/// clamped into [0.5, 1) for the SE evaluation (superiority test against
/// chance; the lower end is harmless, the upper end keeps SE positive).
pub fn hanley_mcneil_se(auc: f64, n_pos: usize, n_neg: usize) -> (f64, f64, f64) {
    assert!(n_pos >= 1 && n_neg >= 1);
    let a = auc.clamp(0.5, 1.0 - 1e-12);
    let q1 = a / (2.0 - a);
    let q2 = 2.0 * a * a / (1.0 + a);
    let (np, nn) = (n_pos as f64, n_neg as f64);
    let var = (a * (1.0 - a) + (np - 1.0) * (q1 - a * a) + (nn - 1.0) * (q2 - a * a)) / (np * nn);
    (var.sqrt(), q1, q2)
}

/// One-sided p-value of the observed AUC against chance (A = 0.5).
pub fn hanley_mcneil_p(auc: f64, n_pos: usize, n_neg: usize) -> f64 {
    let (se, _, _) = hanley_mcneil_se(auc, n_pos, n_neg);
    let z = (auc - 0.5) / se;
    1.0 - normal_cdf(z)
}

/// Pearson correlation of two prediction vectors (population moments).
pub fn pearson_c(p_i: &[f64], p_j: &[f64]) -> Result<f64, EvalError> {
    assert_eq!(p_i.len(), p_j.len());
    let n = p_i.len() as f64;
    let mi = p_i.iter().sum::<f64>() / n;
    let mj = p_j.iter().sum::<f64>() / n;
    let (mut sii, mut sjj, mut sij) = (0.0, 0.0, 0.0);
    for (a, b) in p_i.iter().zip(p_j) {
        let (da, db) = (a - mi, b - mj);
        sii += da * da;
        sjj += db * db;
        sij += da * db;
    }
    if sii <= 0.0 || sjj <= 0.0 {
        return Err(EvalError::ZeroVariance("pearson_c".into()));
    }
    Ok((sij / n) / ((sii / n).sqrt() * (sjj / n).sqrt()))
}

/// Weighted correlation of the two error series with weights
/// w_k = max(e_i,k, e_j,k): weighted means and SDs, covariance of weighted
/// deviations, all per the weighted-moment definitions.
pub fn weighted_cw(e_i: &[f64], e_j: &[f64]) -> Result<f64, EvalError> {
    assert_eq!(e_i.len(), e_j.len());
    let w: Vec<f64> = e_i.iter().zip(e_j).map(|(a, b)| a.max(*b)).collect();
    let w_sum: f64 = w.iter().sum();
    if w_sum <= 0.0 {
        return Err(EvalError::NoErrors);
    }
    let wmean = |z: &[f64]| -> f64 {
        z.iter().zip(&w).map(|(zi, wi)| wi * zi).sum::<f64>() / w_sum
    };
    let (mi, mj) = (wmean(e_i), wmean(e_j));
    let wsd = |z: &[f64], m: f64| -> f64 {
        let m2 = z.iter().zip(&w).map(|(zi, wi)| wi * zi * zi).sum::<f64>() / w_sum;
        (m2 - m * m).max(0.0).sqrt()
    };
    let (si, sj) = (wsd(e_i, mi), wsd(e_j, mj));
    if si <= 0.0 || sj <= 0.0 {
        return Err(EvalError::ZeroVariance("weighted_cw".into()));
    }
    let cov = e_i
        .iter()
        .zip(e_j)
        .zip(&w)
        .map(|((a, b), wi)| wi * (a - mi) * (b - mj))
        .sum::<f64>()
        / w_sum;
    Ok(cov / (si * sj))
}

/// Shuffle predictions within each label class. The multiset of
/// predictions per class is unchanged, so the ROC AUC is preserved
/// exactly.
pub fn permute_within_class(probs: &[f64], labels: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = probs.to_vec();
    for target in [0.0, 1.0] {
        let idx: Vec<usize> = (0..labels.len())
            .filter(|&i| (labels[i] > 0.5) == (target > 0.5))
            .collect();
        let mut vals: Vec<f64> = idx.iter().map(|&i| probs[i]).collect();
        vals.shuffle(rng);
        for (slot, v) in idx.into_iter().zip(vals) {
            out[slot] = v;
        }
    }
    out
}

/// Class-conditional permutation p-values for c and c_w.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PermutationPvalues {
    /// Draws per method.
    pub m: usize,
    /// Unordered pairings: method-1 draw i with method-2 draw j, i <= j,
    /// so M (M + 1) / 2 in total.
    pub n_pairings: usize,
    pub exceed_c: usize,
    pub exceed_cw: usize,
    /// exceed / n_pairings; a value of 0 means p < 1/n_pairings.
    pub p_c: f64,
    pub p_cw: f64,
}

impl PermutationPvalues {
    pub fn display_p(p: f64, n: usize) -> String {
        if p == 0.0 {
            format!("<{:.6}", 1.0 / n as f64)
        } else {
            format!("{p:.6}")
        }
    }
}

fn aligned_labels(s1: &PredictionSeries, s2: &PredictionSeries) -> Result<Vec<f64>, EvalError> {
    if s1.clips.len() != s2.clips.len() {
        return Err(EvalError::Misaligned(0));
    }
    for (a, b) in s1.clips.iter().zip(&s2.clips) {
        if a.clip_id != b.clip_id || a.label != b.label {
            return Err(EvalError::Misaligned(a.clip_id));
        }
    }
    Ok(s1.labels())
}

/// Permutation test: M class-conditional shuffles per method, correlations
/// over the M(M+1)/2 unordered cross-method pairings, p = fraction at or
/// above the observed value.
pub fn permutation_pvalues(
    s1: &PredictionSeries,
    s2: &PredictionSeries,
    m: usize,
    seed: u64,
) -> Result<PermutationPvalues, EvalError> {
    assert!(m >= 2);
    let labels = aligned_labels(s1, s2)?;
    let (p1, p2) = (s1.probabilities(), s2.probabilities());
    let c_obs = pearson_c(&p1, &p2)?;
    let cw_obs = weighted_cw(&s1.errors(), &s2.errors())?;

    let draws = |probs: &[f64], tag: u64| -> Vec<Vec<f64>> {
        (0..m)
            .map(|d| {
                let mut rng = stream(seed, "eval/perm", (tag << 32) | d as u64);
                permute_within_class(probs, &labels, &mut rng)
            })
            .collect()
    };
    let d1 = draws(&p1, 1);
    let d2 = draws(&p2, 2);

    let errors_of = |probs: &[f64]| -> Vec<f64> {
        probs.iter().zip(&labels).map(|(p, y)| (p - y).abs()).collect()
    };
    let e1: Vec<Vec<f64>> = d1.iter().map(|p| errors_of(p)).collect();
    let e2: Vec<Vec<f64>> = d2.iter().map(|p| errors_of(p)).collect();

    let mut exceed_c = 0;
    let mut exceed_cw = 0;
    let mut n_pairings = 0;
    for i in 0..m {
        for j in i..m {
            n_pairings += 1;
            if let Ok(c) = pearson_c(&d1[i], &d2[j]) {
                if c >= c_obs {
                    exceed_c += 1;
                }
            }
            if let Ok(cw) = weighted_cw(&e1[i], &e2[j]) {
                if cw >= cw_obs {
                    exceed_cw += 1;
                }
            }
        }
    }
    Ok(PermutationPvalues {
        m,
        n_pairings,
        exceed_c,
        exceed_cw,
        p_c: exceed_c as f64 / n_pairings as f64,
        p_cw: exceed_cw as f64 / n_pairings as f64,
    })
}

/// Per-method AUC summary for the report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub auc: f64,
    pub hanley_p: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

impl MethodSummary {
    pub fn from_series(s: &PredictionSeries) -> Result<Self, EvalError> {
        let labels = s.labels();
        let n_pos = labels.iter().filter(|&&y| y > 0.5).count();
        let n_neg = labels.len() - n_pos;
        let auc = s.auc()?;
        Ok(MethodSummary {
            method: s.method.clone(),
            auc,
            hanley_p: hanley_mcneil_p(auc, n_pos, n_neg),
            n_pos,
            n_neg,
        })
    }
}

/// c, c_w, their permutation p-values, and per-method AUCs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoherenceReport {
    pub method1: MethodSummary,
    pub method2: MethodSummary,
    pub c: f64,
    pub c_w: f64,
    pub permutation: PermutationPvalues,
}

pub fn coherence_report(
    s1: &PredictionSeries,
    s2: &PredictionSeries,
    m: usize,
    seed: u64,
) -> Result<CoherenceReport, EvalError> {
    let labels = aligned_labels(s1, s2)?;
    let _ = labels;
    Ok(CoherenceReport {
        method1: MethodSummary::from_series(s1)?,
        method2: MethodSummary::from_series(s2)?,
        c: pearson_c(&s1.probabilities(), &s2.probabilities())?,
        c_w: weighted_cw(&s1.errors(), &s2.errors())?,
        permutation: permutation_pvalues(s1, s2, m, seed)?,
    })
}

/// One grid point of an information-transfer curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransferPoint {
    pub e_th: f64,
    pub retained: usize,
    /// AUC of the target method on clips whose filter error is <= e_th;
    /// None when a class disappears.
    pub auc: Option<f64>,
    /// AUC with the same number of clips dropped uniformly at random.
    pub control_auc: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransferCurve {
    /// e.g. "method1_filters_method2".
    pub direction: String,
    pub unfiltered_auc: f64,
    pub points: Vec<TransferPoint>,
}

/// 0.0, 0.05, ..., 1.0.
pub fn default_threshold_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 * 0.05).collect()
}

/// Drop clips the filter method got wrong beyond e_th, score the target
/// method on the remainder, and compare with an equal-size random
/// omission.
pub fn transfer_curve(
    filter: &PredictionSeries,
    target: &PredictionSeries,
    thresholds: &[f64],
    seed: u64,
) -> Result<TransferCurve, EvalError> {
    aligned_labels(filter, target)?;
    assert!(
        thresholds.iter().any(|&t| t >= 1.0),
        "threshold grid must include 1.0"
    );
    let errs = filter.errors();
    let labels = target.labels();
    let probs = target.probabilities();
    let n = labels.len();
    let unfiltered_auc = roc_auc(&labels, &probs)?;

    let auc_of = |idx: &[usize]| -> Option<f64> {
        let l: Vec<f64> = idx.iter().map(|&i| labels[i]).collect();
        let p: Vec<f64> = idx.iter().map(|&i| probs[i]).collect();
        roc_auc(&l, &p).ok()
    };

    let mut points = Vec::with_capacity(thresholds.len());
    for (gi, &e_th) in thresholds.iter().enumerate() {
        let kept: Vec<usize> = (0..n).filter(|&i| errs[i] <= e_th).collect();
        let retained = kept.len();
        let auc = auc_of(&kept);
        let mut all: Vec<usize> = (0..n).collect();
        let mut rng = stream(seed, "eval/transfer", gi as u64);
        all.shuffle(&mut rng);
        let control: Vec<usize> = {
            let mut keep = all[..retained].to_vec();
            keep.sort_unstable();
            keep
        };
        let control_auc = auc_of(&control);
        points.push(TransferPoint { e_th, retained, auc, control_auc });
    }
    Ok(TransferCurve {
        direction: format!("{}_filters_{}", filter.method, target.method),
        unfiltered_auc,
        points,
    })
}

/// `time_s,label,method1_mean,method1_sd,method2_mean,method2_sd` — one
/// row per test clip.
pub fn write_prediction_over_time(
    path: &Path,
    s1: &PredictionSeries,
    s2: &PredictionSeries,
) -> Result<(), EvalError> {
    aligned_labels(s1, s2)?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "time_s,label,method1_mean,method1_sd,method2_mean,method2_sd")?;
    for (a, b) in s1.clips.iter().zip(&s2.clips) {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            a.start_s,
            a.label,
            a.probability,
            a.model_sd(),
            b.probability,
            b.model_sd()
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Long-format transfer CSV: `series,e_th,retained,auc` with one row per
/// grid point per series (filtered and random control per direction);
/// undefined AUCs are left empty.
pub fn write_transfer_csv(path: &Path, curves: &[TransferCurve]) -> Result<(), EvalError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "series,e_th,retained,auc")?;
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for curve in curves {
        for p in &curve.points {
            writeln!(w, "{},{},{},{}", curve.direction, p.e_th, p.retained, fmt(p.auc))?;
        }
        for p in &curve.points {
            writeln!(
                w,
                "{}_random,{},{},{}",
                curve.direction,
                p.e_th,
                p.retained,
                fmt(p.control_auc)
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream as rng_stream, uniform_open01};

    /// O(n^2) pair-counting oracle for the AUC.
    fn auc_brute(labels: &[f64], probs: &[f64]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for i in 0..labels.len() {
            if labels[i] < 0.5 {
                continue;
            }
            for j in 0..labels.len() {
                if labels[j] > 0.5 {
                    continue;
                }
                pairs += 1.0;
                if probs[i] > probs[j] {
                    wins += 1.0;
                } else if probs[i] == probs[j] {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    fn random_instance(seed: u64, n: usize, with_ties: bool) -> (Vec<f64>, Vec<f64>) {
        let mut rng = rng_stream(seed, "auc-test", 0);
        let labels: Vec<f64> = (0..n)
            .map(|i| if i < 2 { (i % 2) as f64 } else { (uniform_open01(&mut rng) < 0.3) as u8 as f64 })
            .collect();
        let probs: Vec<f64> = (0..n)
            .map(|_| {
                let p = uniform_open01(&mut rng);
                if with_ties {
                    (p * 10.0).round() / 10.0
                } else {
                    p
                }
            })
            .collect();
        (labels, probs)
    }

    #[test]
    fn auc_matches_pair_counting_oracle() {
        for seed in 0..50 {
            let n = 50 + (seed as usize * 19) % 951;
            let (labels, probs) = random_instance(seed, n, seed % 2 == 0);
            let fast = roc_auc(&labels, &probs).unwrap();
            let brute = auc_brute(&labels, &probs);
            assert!((fast - brute).abs() < 1e-12, "seed {seed}: {fast} vs {brute}");
        }
    }

    #[test]
    fn auc_basics() {
        let labels = vec![0.0, 0.0, 1.0, 1.0];
        assert_eq!(roc_auc(&labels, &[0.1, 0.2, 0.8, 0.9]).unwrap(), 1.0);
        assert_eq!(roc_auc(&labels, &[0.4, 0.4, 0.4, 0.4]).unwrap(), 0.5);
        assert!(roc_auc(&[1.0, 1.0], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn auc_complement_symmetry() {
        for seed in 0..10 {
            let (labels, probs) = random_instance(100 + seed, 200, true);
            let flipped: Vec<f64> = probs.iter().map(|p| 1.0 - p).collect();
            let a = roc_auc(&labels, &probs).unwrap();
            let b = roc_auc(&labels, &flipped).unwrap();
            assert!((a + b - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn hanley_null_values_are_exact() {
        let (_, q1, q2) = hanley_mcneil_se(0.5, 25, 40);
        assert_eq!(q1, 1.0 / 3.0);
        assert_eq!(q2, 1.0 / 3.0);
        assert_eq!(hanley_mcneil_p(0.5, 25, 40), 0.5);
    }

    #[test]
    fn hanley_se_matches_symbolic_rederivation() {
        // Independent algebraic route: Q1 - A^2 = A(1-A)^2/(2-A),
        // Q2 - A^2 = A^2 (1-A)/(1+A).
        let mut rng = rng_stream(3, "hanley", 0);
        for _ in 0..10 {
            let a = 0.5 + 1e-12 + uniform_open01(&mut rng) * (0.5 - 2e-12);
            let n_pos = 1 + (uniform_open01(&mut rng) * 100.0) as usize;
            let n_neg = 1 + (uniform_open01(&mut rng) * 100.0) as usize;
            let (se, _, _) = hanley_mcneil_se(a, n_pos, n_neg);
            let (np, nn) = (n_pos as f64, n_neg as f64);
            let var = (a * (1.0 - a)
                + (np - 1.0) * (a * (1.0 - a) * (1.0 - a) / (2.0 - a))
                + (nn - 1.0) * (a * a * (1.0 - a) / (1.0 + a)))
                / (np * nn);
            assert!((se - var.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn hanley_p_small_for_strong_auc_and_monotone() {
        assert!(hanley_mcneil_p(0.9, 50, 50) < 0.001);
        let mut last = f64::INFINITY;
        for k in 0..50 {
            let a = 0.5 + 0.009 * k as f64;
            let p = hanley_mcneil_p(a, 30, 60);
            assert!(p <= last + 1e-15, "not monotone at A = {a}");
            last = p;
        }
    }

    #[test]
    fn pearson_c_textbook_value() {
        let p_i = [0.1, 0.4, 0.8];
        let p_j = [0.2, 0.5, 0.7];
        // Second implementation, written straight from the defining sums.
        let n = 3.0;
        let (mi, mj) = (p_i.iter().sum::<f64>() / n, p_j.iter().sum::<f64>() / n);
        let num: f64 = p_i.iter().zip(&p_j).map(|(a, b)| (a - mi) * (b - mj)).sum::<f64>() / n;
        let si = (p_i.iter().map(|a| (a - mi).powi(2)).sum::<f64>() / n).sqrt();
        let sj = (p_j.iter().map(|b| (b - mj).powi(2)).sum::<f64>() / n).sqrt();
        let expect = num / (si * sj);
        assert!((pearson_c(&p_i, &p_j).unwrap() - expect).abs() < 1e-12);
        assert!((pearson_c(&p_i, &p_i).unwrap() - 1.0).abs() < 1e-12);
        let anti: Vec<f64> = p_i.iter().map(|v| 1.0 - v).collect();
        assert!((pearson_c(&p_i, &anti).unwrap() + 1.0).abs() < 1e-12);
    }

    /// Direct transcription of the weighted-correlation definition used as
    /// an independent oracle (expanded covariance form).
    fn cw_oracle(e_i: &[f64], e_j: &[f64]) -> f64 {
        let w: Vec<f64> = e_i.iter().zip(e_j).map(|(a, b)| a.max(*b)).collect();
        let sw: f64 = w.iter().sum();
        let wm = |z: &[f64]| z.iter().zip(&w).map(|(z, w)| w * z).sum::<f64>() / sw;
        let (mi, mj) = (wm(e_i), wm(e_j));
        let wm2 = |z: &[f64]| z.iter().zip(&w).map(|(z, w)| w * z * z).sum::<f64>() / sw;
        let si = (wm2(e_i) - mi * mi).sqrt();
        let sj = (wm2(e_j) - mj * mj).sqrt();
        let cross = e_i
            .iter()
            .zip(e_j)
            .zip(&w)
            .map(|((a, b), w)| w * a * b)
            .sum::<f64>()
            / sw;
        (cross - mi * mj) / (si * sj)
    }

    #[test]
    fn cw_matches_independent_oracle_on_random_vectors() {
        let mut rng = rng_stream(4, "cw", 0);
        for t in 0..100 {
            let n = 10 + t % 50;
            let e_i: Vec<f64> = (0..n).map(|_| uniform_open01(&mut rng)).collect();
            let e_j: Vec<f64> = (0..n).map(|_| uniform_open01(&mut rng)).collect();
            let got = weighted_cw(&e_i, &e_j).unwrap();
            assert!((got - cw_oracle(&e_i, &e_j)).abs() < 1e-12);
        }
    }

    #[test]
    fn cw_perfect_coherence_and_error_cases() {
        let e = vec![0.9, 0.1, 0.8, 0.3];
        assert!((weighted_cw(&e, &e).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(
            weighted_cw(&[0.0, 0.0], &[0.0, 0.0]),
            Err(EvalError::NoErrors)
        ));
        // Worked example against the oracle.
        let e_i = [0.9, 0.1, 0.8];
        let e_j = [0.8, 0.2, 0.9];
        assert!((weighted_cw(&e_i, &e_j).unwrap() - cw_oracle(&e_i, &e_j)).abs() < 1e-12);
    }

    #[test]
    fn cw_with_constant_weights_reduces_to_pearson() {
        // Alternate the 0.8 spike between methods so w is constant while
        // both error series vary.
        let mut e_i = Vec::new();
        let mut e_j = Vec::new();
        let mut rng = rng_stream(5, "cw-const", 0);
        for k in 0..40 {
            let small = 0.5 * uniform_open01(&mut rng);
            if k % 2 == 0 {
                e_i.push(0.8);
                e_j.push(small);
            } else {
                e_i.push(small);
                e_j.push(0.8);
            }
        }
        let cw = weighted_cw(&e_i, &e_j).unwrap();
        let plain = pearson_c(&e_i, &e_j).unwrap();
        assert!((cw - plain).abs() < 1e-12, "{cw} vs {plain}");
    }

    fn series_from(method: &str, labels: &[f64], probs: &[f64]) -> PredictionSeries {
        PredictionSeries {
            method: method.into(),
            clips: labels
                .iter()
                .zip(probs)
                .enumerate()
                .map(|(i, (&label, &probability))| ClipPrediction {
                    clip_id: i as u32,
                    start_s: i as f64 * 600.0,
                    label,
                    probability,
                    per_model: vec![probability],
                })
                .collect(),
        }
    }

    #[test]
    fn permutation_preserves_auc_exactly() {
        let (labels, probs) = random_instance(8, 120, true);
        let base = roc_auc(&labels, &probs).unwrap();
        for d in 0..20 {
            let mut rng = rng_stream(9, "perm-test", d);
            let permuted = permute_within_class(&probs, &labels, &mut rng);
            assert_eq!(roc_auc(&labels, &permuted).unwrap(), base);
        }
    }

    #[test]
    fn permutation_pairing_count_and_identical_series() {
        let (labels, probs) = random_instance(10, 60, false);
        let s1 = series_from("m1", &labels, &probs);
        let s2 = series_from("m2", &labels, &probs);
        let r = permutation_pvalues(&s1, &s2, 100, 42).unwrap();
        assert_eq!(r.n_pairings, 5050);
        assert_eq!(r.exceed_cw, 0, "identical series should beat every pairing");
        assert!(r.p_cw < 1.0 / 5050.0);
    }

    #[test]
    fn clip_predict_means_and_missing_segments() {
        let meta = vec![
            (0u32, 0.0, ClipLabel::Interictal),
            (1u32, 600.0, ClipLabel::Preictal),
        ];
        let mut outputs = Vec::new();
        for clip in 0..2u32 {
            for s in 0..4 {
                outputs.push(SegmentOutput {
                    clip_id: clip,
                    segment_index: s,
                    per_model: vec![0.7, if clip == 0 { 0.1 } else { 0.9 }],
                });
            }
        }
        let series = clip_predict("m", &outputs, &meta, 4).unwrap();
        assert_eq!(series.clips.len(), 2);
        assert!((series.clips[0].probability - 0.4).abs() < 1e-12);
        assert!((series.clips[1].probability - 0.8).abs() < 1e-12);
        // Grand mean equals mean of per-model means exactly here.
        let grand: f64 = series.clips[0].per_model.iter().sum::<f64>() / 2.0;
        assert!((series.clips[0].probability - grand).abs() < 1e-12);

        outputs.pop();
        match clip_predict("m", &outputs, &meta, 4) {
            Err(EvalError::MissingSegments(ids)) => assert_eq!(ids, vec![1]),
            other => panic!("expected MissingSegments, got {other:?}"),
        }
    }

    #[test]
    fn transfer_curve_endpoints() {
        let labels: Vec<f64> = (0..40).map(|i| (i % 4 == 0) as u8 as f64).collect();
        let mut rng = rng_stream(11, "tc", 0);
        // Target tracks the label with noise; filter errs badly on a few.
        let mut probs = Vec::new();
        let mut filter_probs = Vec::new();
        for (i, &y) in labels.iter().enumerate() {
            let noise = 0.2 * uniform_open01(&mut rng);
            probs.push(if y > 0.5 { 0.8 - noise } else { 0.2 + noise });
            filter_probs.push(if i % 7 == 0 { 1.0 - y } else { y * 0.8 + 0.1 });
        }
        let target = series_from("m2", &labels, &probs);
        let filter = series_from("m1", &labels, &filter_probs);
        let grid = default_threshold_grid();
        let curve = transfer_curve(&filter, &target, &grid, 5).unwrap();
        let last = curve.points.last().unwrap();
        assert_eq!(last.e_th, 1.0);
        assert_eq!(last.retained, 40);
        assert_eq!(last.auc.unwrap(), curve.unfiltered_auc);
        assert_eq!(last.control_auc.unwrap(), curve.unfiltered_auc);
        // Retained counts are non-decreasing in e_th.
        for w in curve.points.windows(2) {
            assert!(w[0].retained <= w[1].retained);
        }
    }

    #[test]
    fn self_filtering_removes_misranked_clips() {
        let labels: Vec<f64> = (0..30).map(|i| (i % 3 == 0) as u8 as f64).collect();
        let mut probs = Vec::new();
        for (i, &y) in labels.iter().enumerate() {
            // A handful of confidently wrong clips, the rest confidently
            // right.
            probs.push(if i % 5 == 0 { 1.0 - y * 0.9 - 0.05 } else { y * 0.9 + 0.05 });
        }
        let s = series_from("m", &labels, &probs);
        let curve = transfer_curve(&s, &s, &[0.3, 1.0], 7).unwrap();
        let p = &curve.points[0];
        assert!(p.retained < 30);
        assert_eq!(p.auc.unwrap(), 1.0, "remainder should be perfectly ranked");
    }

    #[test]
    fn correlations_invariant_under_shared_reordering() {
        let (labels, p1) = random_instance(13, 80, false);
        let (_, p2) = random_instance(14, 80, false);
        let c0 = pearson_c(&p1, &p2).unwrap();
        let e1: Vec<f64> = p1.iter().zip(&labels).map(|(p, y)| (p - y).abs()).collect();
        let e2: Vec<f64> = p2.iter().zip(&labels).map(|(p, y)| (p - y).abs()).collect();
        let cw0 = weighted_cw(&e1, &e2).unwrap();
        let mut order: Vec<usize> = (0..80).collect();
        let mut rng = rng_stream(15, "reorder", 0);
        order.shuffle(&mut rng);
        let pick = |v: &[f64]| -> Vec<f64> { order.iter().map(|&i| v[i]).collect() };
        assert!((pearson_c(&pick(&p1), &pick(&p2)).unwrap() - c0).abs() < 1e-12);
        assert!((weighted_cw(&pick(&e1), &pick(&e2)).unwrap() - cw0).abs() < 1e-12);
    }
}
