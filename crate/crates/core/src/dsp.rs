//! Shared signal-processing primitives: windowed-sinc FIR design, centered
//! FIR filtering, polyphase rational resampling, periodograms and analytic
//! signals.
//!
//! Filter design goes through [`crate::detmath`] so the synthetic generator
//! (which filters noise with these taps) stays platform independent.

use crate::detmath;
use crate::scalar::{real, Real};
use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

/// sinc(x) = sin(pi x) / (pi x), deterministic.
fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        detmath::sin(PI * x) / (PI * x)
    }
}

fn hamming(n: usize, len: usize) -> f64 {
    0.54 - 0.46 * detmath::cos(2.0 * PI * n as f64 / (len - 1) as f64)
}

/// Hamming-windowed sinc low-pass. `cutoff` is normalized to the sample
/// rate (0..0.5). `n_taps` must be odd so the group delay is integer.
pub fn lowpass_taps(cutoff: f64, n_taps: usize) -> Vec<f64> {
    assert!(n_taps % 2 == 1, "FIR length must be odd");
    assert!(cutoff > 0.0 && cutoff < 0.5);
    let mid = (n_taps / 2) as f64;
    (0..n_taps)
        .map(|n| 2.0 * cutoff * sinc(2.0 * cutoff * (n as f64 - mid)) * hamming(n, n_taps))
        .collect()
}

/// Hamming-windowed sinc band-pass with unit gain at the band center.
pub fn bandpass_taps(lo: f64, hi: f64, n_taps: usize) -> Vec<f64> {
    assert!(n_taps % 2 == 1, "FIR length must be odd");
    assert!(0.0 < lo && lo < hi && hi < 0.5);
    let mid = (n_taps / 2) as f64;
    let mut taps: Vec<f64> = (0..n_taps)
        .map(|n| {
            let t = n as f64 - mid;
            (2.0 * hi * sinc(2.0 * hi * t) - 2.0 * lo * sinc(2.0 * lo * t)) * hamming(n, n_taps)
        })
        .collect();
    // Normalize |H| to 1 at the center frequency.
    let wc = PI * (lo + hi);
    let (mut re, mut im) = (0.0, 0.0);
    for (n, h) in taps.iter().enumerate() {
        re += h * detmath::cos(wc * n as f64);
        im -= h * detmath::sin(wc * n as f64);
    }
    let gain = (re * re + im * im).sqrt();
    for h in &mut taps {
        *h /= gain;
    }
    taps
}

/// Centered FIR filtering (zero-padded edges): output has the input length
/// and no group delay.
pub fn fir_filter_centered<T: Real>(x: &[T], taps: &[f64]) -> Vec<T> {
    let taps_t: Vec<T> = taps.iter().map(|&h| real(h)).collect();
    let mid = taps.len() / 2;
    let n = x.len();
    let mut y = vec![T::zero(); n];
    for (k, &h) in taps_t.iter().enumerate() {
        if h == T::zero() {
            continue;
        }
        // y[t] += h * x[t + mid - k], clipped to valid range.
        let shift = mid as isize - k as isize;
        let (t0, t1) = if shift >= 0 {
            (0usize, n.saturating_sub(shift as usize))
        } else {
            ((-shift) as usize, n)
        };
        for t in t0..t1 {
            let xi = (t as isize + shift) as usize;
            y[t] += h * x[xi];
        }
    }
    y
}

/// Polyphase rational resampler: upsample by `up`, low-pass, downsample by
/// `down`, with the FIR group delay compensated so input and output stay
/// time aligned. Polyphase branches are normalized to unit DC gain, so a
/// constant signal passes through bit-exactly up to rounding.
pub struct Resampler<T: Real> {
    up: usize,
    down: usize,
    /// taps[r][j] applies to x[base - j] for output phase r.
    branches: Vec<Vec<T>>,
    delay: usize,
}

impl<T: Real> Resampler<T> {
    /// `cutoff` is normalized to the *upsampled* rate; `n_taps` odd.
    pub fn new(up: usize, down: usize, cutoff: f64, n_taps: usize) -> Self {
        let taps = lowpass_taps(cutoff, n_taps);
        let mut branches: Vec<Vec<f64>> = vec![Vec::new(); up];
        for (k, &h) in taps.iter().enumerate() {
            branches[k % up].push(h);
        }
        let branches = branches
            .into_iter()
            .map(|b| {
                let s: f64 = b.iter().sum();
                b.into_iter().map(|h| real::<T>(h / s)).collect()
            })
            .collect();
        Resampler {
            up,
            down,
            branches,
            delay: n_taps / 2,
        }
    }

    pub fn output_len(&self, input_len: usize) -> usize {
        input_len * self.up / self.down
    }

    /// Resample one channel.
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let n_out = self.output_len(x.len());
        let mut y = vec![T::zero(); n_out];
        for (n, out) in y.iter_mut().enumerate() {
            // Position on the upsampled grid, delay-compensated.
            let u = n * self.down + self.delay;
            let r = u % self.up;
            let base = u / self.up; // x index of tap j = 0
            let branch = &self.branches[r];
            let mut acc = T::zero();
            for (j, &h) in branch.iter().enumerate() {
                if j > base {
                    break;
                }
                let xi = base - j;
                if xi < x.len() {
                    acc += h * x[xi];
                }
            }
            *out = acc;
        }
        y
    }
}

/// FFT workspace for a fixed transform length: periodograms and analytic
/// signals share the plans.
pub struct SpectralEngine<T: Real> {
    n: usize,
    fwd: Arc<dyn Fft<T>>,
    inv: Arc<dyn Fft<T>>,
}

impl<T: Real> SpectralEngine<T> {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        SpectralEngine {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// One-sided periodogram (bins 0..=n/2). Scaled so the bin values of a
    /// unit-amplitude on-bin sine sum to its power 0.5.
    pub fn periodogram(&self, x: &[T]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut buf: Vec<Complex<T>> = x.iter().map(|&v| Complex::new(v, T::zero())).collect();
        self.fwd.process(&mut buf);
        let half = self.n / 2;
        let norm = 1.0 / (self.n as f64 * self.n as f64);
        (0..=half)
            .map(|k| {
                let mag2 = buf[k].norm_sqr().as_f64();
                let two_sided = if k == 0 || (self.n % 2 == 0 && k == half) {
                    1.0
                } else {
                    2.0
                };
                mag2 * norm * two_sided
            })
            .collect()
    }

    /// Analytic signal via the FFT method (positive frequencies doubled,
    /// negative zeroed).
    pub fn analytic(&self, x: &[T]) -> Vec<Complex<T>> {
        assert_eq!(x.len(), self.n);
        let mut buf: Vec<Complex<T>> = x.iter().map(|&v| Complex::new(v, T::zero())).collect();
        self.fwd.process(&mut buf);
        let half = self.n / 2;
        let two = T::from_f64(2.0).unwrap();
        for (k, v) in buf.iter_mut().enumerate() {
            if k == 0 || (self.n % 2 == 0 && k == half) {
                // keep
            } else if k < half || (self.n % 2 == 1 && k == half) {
                *v = *v * two;
            } else {
                *v = Complex::new(T::zero(), T::zero());
            }
        }
        self.inv.process(&mut buf);
        let scale = T::from_f64(1.0 / self.n as f64).unwrap();
        for v in &mut buf {
            *v = *v * scale;
        }
        buf
    }
}

/// Frequency of periodogram bin `k` for transform length `n` at `rate` Hz.
pub fn bin_hz(k: usize, n: usize, rate: f64) -> f64 {
    k as f64 * rate / n as f64
}
