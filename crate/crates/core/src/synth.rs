//! Deterministic synthetic multichannel recordings.
//!
//! Background is per-channel stable AR noise (EEG-ish 1/f-leaning spectrum,
//! poles at a configurable radius). During preictal windows, configured as a
//! lead time before each seizure onset, a band-limited component is added
//! that (a) multiplies the band's power by `power_gain` and (b) is partly
//! shared across channels so in-band phase coherence rises with
//! `phase_coupling`. Confound intervals inject the *same* signature, scaled
//! by `confound_strength`, with no seizure following — the recipe for
//! coherent false predictions downstream.
//!
//! Everything is derived from ChaCha8 streams plus [`crate::detmath`], so a
//! config maps to bit-identical samples on any platform.

use crate::data::{LabelPolicy, Recording};
use crate::detmath;
use crate::dsp::bandpass_taps;
use crate::rng::{fill_gaussian, stream};
use crate::scalar::{real, Real};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("AR pole radius {0} is not inside the unit circle")]
    UnstableAr(f64),
    #[error("invalid synth config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreictalSignature {
    /// Band carrying the signature (Hz).
    pub band_hz: (f64, f64),
    /// Multiplier on the band power inside signature windows (>= 1).
    pub power_gain: f64,
    /// Fraction of the injected band component shared across channels, in
    /// [0, 1]; raises in-band phase coherence toward this value.
    pub phase_coupling: f64,
    /// Signature window is `[onset - lead_time, onset)`.
    pub lead_time_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Background {
    pub ar_order: usize,
    pub ar_pole_radius: f64,
    pub noise_std: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Circadian {
    pub period_s: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub subject_id: String,
    pub n_channels: usize,
    pub sampling_rate: f64,
    pub duration_s: f64,
    pub seizure_onsets: Vec<f64>,
    pub preictal_signature: PreictalSignature,
    /// Spans that receive the signature without a following seizure.
    pub confound_intervals: Vec<(f64, f64)>,
    /// Amplitude scale of the signature inside confound intervals, [0, 1].
    pub confound_strength: f64,
    pub background: Background,
    pub circadian: Circadian,
}

/// What was actually injected; mirrors the config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seizure_onsets: Vec<f64>,
    pub confound_intervals: Vec<(f64, f64)>,
    pub signature: PreictalSignature,
    pub confound_strength: f64,
}

impl SynthConfig {
    fn validate(&self) -> Result<(), SynthError> {
        if self.background.ar_pole_radius >= 1.0 {
            return Err(SynthError::UnstableAr(self.background.ar_pole_radius));
        }
        let bad = |msg: String| Err(SynthError::BadConfig(msg));
        if self.n_channels == 0 || self.duration_s <= 0.0 || self.sampling_rate <= 0.0 {
            return bad("channels, duration and sampling rate must be positive".into());
        }
        let sig = &self.preictal_signature;
        if sig.power_gain < 1.0 {
            return bad(format!("power_gain {} below 1 cannot be injected", sig.power_gain));
        }
        if !(0.0..=1.0).contains(&sig.phase_coupling) {
            return bad(format!("phase_coupling {} outside [0,1]", sig.phase_coupling));
        }
        if !(0.0..=1.0).contains(&self.confound_strength) {
            return bad(format!("confound_strength {} outside [0,1]", self.confound_strength));
        }
        let (lo, hi) = sig.band_hz;
        if !(0.0 < lo && lo < hi && hi < self.sampling_rate / 2.0) {
            return bad(format!("band ({lo}, {hi}) Hz outside (0, Nyquist)"));
        }
        for &(a, b) in &self.confound_intervals {
            if !(a < b && a >= 0.0 && b <= self.duration_s) {
                return bad(format!("confound interval ({a}, {b}) outside recording"));
            }
        }
        for &o in &self.seizure_onsets {
            if !(0.0..=self.duration_s).contains(&o) {
                return bad(format!("onset {o} outside recording"));
            }
        }
        Ok(())
    }
}

/// AR(1..=p) coefficients `c` in `x_t = sum_k c_k x_{t-k} + eps` with all
/// poles at `radius` and pair angles spread over the low spectrum.
fn ar_coefficients(order: usize, radius: f64) -> Vec<f64> {
    // Polynomial A(z) = prod over pole pairs, coefficients of z^-k.
    let mut poly = vec![1.0];
    let pairs = order / 2;
    for i in 0..pairs {
        let frac = if pairs == 1 { 0.5 } else { i as f64 / (pairs - 1) as f64 };
        let theta = 2.0 * PI * (0.01 + 0.11 * frac);
        let (b1, b2) = (-2.0 * radius * detmath::cos(theta), radius * radius);
        let mut next = vec![0.0; poly.len() + 2];
        for (k, &c) in poly.iter().enumerate() {
            next[k] += c;
            next[k + 1] += c * b1;
            next[k + 2] += c * b2;
        }
        poly = next;
    }
    if order % 2 == 1 {
        let mut next = vec![0.0; poly.len() + 1];
        for (k, &c) in poly.iter().enumerate() {
            next[k] += c;
            next[k + 1] += c * -radius;
        }
        poly = next;
    }
    poly.iter().skip(1).map(|&c| -c).collect()
}

/// Variance of the AR background inside `[lo, hi]` Hz (midpoint quadrature
/// of the AR spectrum; deterministic).
fn ar_band_variance(coefs: &[f64], noise_std: f64, lo: f64, hi: f64, rate: f64) -> f64 {
    let (w1, w2) = (2.0 * PI * lo / rate, 2.0 * PI * hi / rate);
    let n = 2048;
    let dw = (w2 - w1) / n as f64;
    let mut acc = 0.0;
    for j in 0..n {
        let w = w1 + (j as f64 + 0.5) * dw;
        let (mut re, mut im) = (1.0, 0.0);
        for (k, &c) in coefs.iter().enumerate() {
            let kw = w * (k + 1) as f64;
            re -= c * detmath::cos(kw);
            im += c * detmath::sin(kw);
        }
        acc += 1.0 / (re * re + im * im) * dw;
    }
    noise_std * noise_std * acc / PI
}

/// Signature windows as (start_s, end_s, amplitude_scale).
fn signature_windows(cfg: &SynthConfig) -> Vec<(f64, f64, f64)> {
    let mut w: Vec<(f64, f64, f64)> = cfg
        .seizure_onsets
        .iter()
        .map(|&o| ((o - cfg.preictal_signature.lead_time_s).max(0.0), o, 1.0))
        .collect();
    if cfg.confound_strength > 0.0 {
        for &(a, b) in &cfg.confound_intervals {
            w.push((a, b, cfg.confound_strength));
        }
    }
    w.retain(|&(a, b, _)| b > a);
    w.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    w
}

/// Generate a recording plus the ground truth of what was injected.
pub fn generate<T: Real>(cfg: &SynthConfig) -> Result<(Recording<T>, GroundTruth), SynthError> {
    cfg.validate()?;
    let n = (cfg.duration_s * cfg.sampling_rate).round() as usize;
    let rate = cfg.sampling_rate;
    let coefs = ar_coefficients(cfg.background.ar_order, cfg.background.ar_pole_radius);

    // Injection amplitude: adds (power_gain - 1) x background band power.
    let sig = &cfg.preictal_signature;
    let band_var = ar_band_variance(&coefs, cfg.background.noise_std, sig.band_hz.0, sig.band_hz.1, rate);
    let inject_amp = ((sig.power_gain - 1.0) * band_var).sqrt();
    let shared_w = sig.phase_coupling.sqrt();
    let own_w = (1.0 - sig.phase_coupling).sqrt();

    let taps = bandpass_taps(sig.band_hz.0 / rate, sig.band_hz.1 / rate, 201);
    let tap_gain = taps.iter().map(|h| h * h).sum::<f64>().sqrt();
    let pad = taps.len();
    let windows = signature_windows(cfg);
    let ramp_samples = rate; // 1 s amplitude ramp at window edges

    // Band-limited unit-variance noise for one window span; `who` selects
    // the RNG stream (shared component vs per-channel).
    let band_noise = |who: u64, widx: usize, len: usize| -> Vec<f64> {
        let mut rng = stream(cfg.seed, "synth/band", (who << 32) | widx as u64);
        let mut white = vec![0.0; len + 2 * pad];
        fill_gaussian(&mut rng, &mut white);
        let filtered = crate::dsp::fir_filter_centered(&white, &taps);
        filtered[pad..pad + len].iter().map(|v| v / tap_gain).collect()
    };

    let mut data = Array2::<T>::zeros((cfg.n_channels, n));
    let mut shared: Vec<Vec<f64>> = Vec::new(); // per window, generated once
    for (widx, &(a, b, _)) in windows.iter().enumerate() {
        let i0 = (a * rate).round() as usize;
        let i1 = ((b * rate).round() as usize).min(n);
        shared.push(if inject_amp > 0.0 && shared_w > 0.0 && i1 > i0 {
            band_noise(u64::MAX, widx, i1 - i0)
        } else {
            Vec::new()
        });
    }

    for ch in 0..cfg.n_channels {
        // Stable AR background with a warmup run-in.
        let mut rng = stream(cfg.seed, "synth/bg", ch as u64);
        let warmup = 2000;
        let mut drive = vec![0.0; n + warmup];
        fill_gaussian(&mut rng, &mut drive);
        let mut x = vec![0.0f64; n + warmup];
        for t in 0..n + warmup {
            let mut v = cfg.background.noise_std * drive[t];
            for (k, &c) in coefs.iter().enumerate() {
                if t > k {
                    v += c * x[t - k - 1];
                }
            }
            x[t] = v;
        }
        x.drain(..warmup);

        // Signature injection.
        if inject_amp > 0.0 {
            for (widx, &(a, b, strength)) in windows.iter().enumerate() {
                let i0 = (a * rate).round() as usize;
                let i1 = ((b * rate).round() as usize).min(n);
                if i1 <= i0 {
                    continue;
                }
                let own = if own_w > 0.0 {
                    band_noise(ch as u64, widx, i1 - i0)
                } else {
                    Vec::new()
                };
                for t in i0..i1 {
                    let k = t - i0;
                    let edge = ((k as f64 + 1.0) / ramp_samples)
                        .min(((i1 - t) as f64) / ramp_samples)
                        .min(1.0);
                    let mut comp = 0.0;
                    if !shared[widx].is_empty() {
                        comp += shared_w * shared[widx][k];
                    }
                    if !own.is_empty() {
                        comp += own_w * own[k];
                    }
                    x[t] += strength * edge * inject_amp * comp;
                }
            }
        }

        // Global circadian amplitude modulation.
        if cfg.circadian.amplitude != 0.0 {
            let w = 2.0 * PI / cfg.circadian.period_s;
            for (t, v) in x.iter_mut().enumerate() {
                *v *= 1.0 + cfg.circadian.amplitude * detmath::sin(w * t as f64 / rate);
            }
        }

        for (t, &v) in x.iter().enumerate() {
            data[[ch, t]] = real(v);
        }
    }

    let rec = Recording {
        subject_id: cfg.subject_id.clone(),
        sampling_rate: rate,
        channels: (0..cfg.n_channels).map(|i| format!("ch{i:02}")).collect(),
        data,
        seizure_onsets: cfg.seizure_onsets.clone(),
        artifact_intervals: vec![],
    };
    let truth = GroundTruth {
        seizure_onsets: cfg.seizure_onsets.clone(),
        confound_intervals: cfg.confound_intervals.clone(),
        signature: cfg.preictal_signature.clone(),
        confound_strength: cfg.confound_strength,
    };
    Ok((rec, truth))
}

/// A named scenario: generator config plus the labeling policy it is meant
/// to be labeled with.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub synth: SynthConfig,
    pub label_policy: LabelPolicy,
}

const H: f64 = 3600.0;

fn desk_config(name: &str, seed: u64) -> SynthConfig {
    SynthConfig {
        seed,
        subject_id: name.to_string(),
        n_channels: 4,
        sampling_rate: 200.0,
        duration_s: 20.0 * H,
        seizure_onsets: vec![2.5 * H, 8.0 * H, 13.5 * H, 17.0 * H],
        preictal_signature: PreictalSignature {
            band_hz: (18.0, 24.0),
            power_gain: 5.0,
            phase_coupling: 0.7,
            lead_time_s: 65.0 * 60.0,
        },
        confound_intervals: vec![],
        confound_strength: 0.0,
        background: Background {
            ar_order: 6,
            ar_pole_radius: 0.92,
            noise_std: 1.0,
        },
        circadian: Circadian {
            period_s: 24.0 * H,
            amplitude: 0.1,
        },
    }
}

/// The three desk-scale scenarios (20 h, 4 channels, 200 Hz, desk labeling
/// policy; clip counts are roughly a 1/17 fraction of the Dog-2-scale
/// inventory):
///
/// * `separable` — strong band-power/coherence signature before each onset,
///   no confounds. Labeling yields train 12 preictal + 21 interictal, test
///   12 preictal + 21 interictal.
/// * `confounded` — same signature, plus a confound epoch inside the test
///   half that carries the signature with no seizure following.
/// * `null` — no signature at all; classifiers should hover at chance.
pub fn standard_scenarios() -> Vec<Scenario> {
    let separable = desk_config("separable", 0x5e9);

    let mut confounded = desk_config("confounded", 0xc0f);
    confounded.confound_intervals = vec![(10.0 * H, 10.0 * H + 50.0 * 60.0)];
    confounded.confound_strength = 1.0;

    let mut null = desk_config("null", 0x9011);
    null.preictal_signature.power_gain = 1.0;
    null.preictal_signature.phase_coupling = 0.0;
    null.circadian.amplitude = 0.0;

    vec![
        Scenario {
            name: "separable".into(),
            synth: separable,
            label_policy: LabelPolicy::desk(),
        },
        Scenario {
            name: "confounded".into(),
            synth: confounded,
            label_policy: LabelPolicy::desk(),
        },
        Scenario {
            name: "null".into(),
            synth: null,
            label_policy: LabelPolicy::desk(),
        },
    ]
}

/// Look up a scenario by name.
pub fn scenario(name: &str) -> Option<Scenario> {
    standard_scenarios().into_iter().find(|s| s.name == name)
}
