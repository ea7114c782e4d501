//! Single-channel features: band powers, statistical moments, AR model
//! coefficients and one-step prediction error.

use super::FeatureError;
use crate::dsp::{bin_hz, SpectralEngine};
use crate::scalar::Real;
use ndarray::ArrayView2;

/// Powers below this are clamped before taking log10 (zero-signal guard).
pub const LOG_POWER_FLOOR: f64 = 1e-12;

/// log10 mean periodogram power per channel per band; layout is
/// channel-major (`ch0 band0, ch0 band1, ...`).
pub fn band_power<T: Real>(
    seg: &ArrayView2<T>,
    bands: &[(f64, f64)],
    rate: f64,
    eng: &SpectralEngine<T>,
) -> Result<Vec<f64>, FeatureError> {
    let nyquist = rate / 2.0;
    for &(lo, hi) in bands {
        if !(0.0 < lo && lo < hi && hi < nyquist) {
            return Err(FeatureError::BandOutOfRange(lo, hi, nyquist));
        }
    }
    let n = seg.ncols();
    let mut out = Vec::with_capacity(seg.nrows() * bands.len());
    for row in seg.rows() {
        let x: Vec<T> = row.iter().copied().collect();
        let psd = eng.periodogram(&x);
        for &(lo, hi) in bands {
            let mut acc = 0.0;
            let mut cnt = 0usize;
            for (k, &p) in psd.iter().enumerate() {
                let f = bin_hz(k, n, rate);
                if f >= lo && f < hi {
                    acc += p;
                    cnt += 1;
                }
            }
            let mean = if cnt > 0 { acc / cnt as f64 } else { 0.0 };
            out.push(mean.max(LOG_POWER_FLOOR).log10());
        }
    }
    Ok(out)
}

/// Per-channel (mean, population variance, skewness, excess kurtosis).
/// Zero-variance channels get skew = kurt = 0.
pub fn moments<T: Real>(seg: &ArrayView2<T>) -> Vec<f64> {
    let n = seg.ncols() as f64;
    let mut out = Vec::with_capacity(seg.nrows() * 4);
    for row in seg.rows() {
        let mean = row.iter().map(|v| v.as_f64()).sum::<f64>() / n;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for v in row.iter() {
            let d = v.as_f64() - mean;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
        }
        m2 /= n;
        m3 /= n;
        m4 /= n;
        let (skew, kurt) = if m2 > 0.0 {
            (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
        } else {
            (0.0, 0.0)
        };
        out.extend_from_slice(&[mean, m2, skew, kurt]);
    }
    out
}

/// Yule-Walker AR fit via Levinson-Durbin.
///
/// Returns predictive coefficients `a` of `x_t = sum_k a_k x_{t-k} + eps`
/// plus the one-step residual variance. The signal is demeaned first and
/// the autocorrelation is the biased estimate.
pub fn ar_fit(x: &[f64], p: usize) -> Result<(Vec<f64>, f64), FeatureError> {
    if p == 0 || p >= x.len() {
        return Err(FeatureError::BadArOrder(p, x.len()));
    }
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let mut r = vec![0.0; p + 1];
    for (lag, rv) in r.iter_mut().enumerate() {
        let mut acc = 0.0;
        for t in lag..n {
            acc += (x[t] - mean) * (x[t - lag] - mean);
        }
        *rv = acc / n as f64;
    }
    if r[0] <= 0.0 {
        // Constant signal: nothing to predict.
        return Ok((vec![0.0; p], 0.0));
    }

    let mut a = vec![0.0; p];
    let mut err = r[0];
    for i in 0..p {
        let mut acc = r[i + 1];
        for j in 0..i {
            acc -= a[j] * r[i - j];
        }
        if err <= 0.0 {
            // Signal is perfectly predictable at this order.
            for slot in a.iter_mut().skip(i) {
                *slot = 0.0;
            }
            err = 0.0;
            break;
        }
        let k = acc / err;
        let prev = a.clone();
        a[i] = k;
        for j in 0..i {
            a[j] = prev[j] - k * prev[i - 1 - j];
        }
        err *= 1.0 - k * k;
    }
    Ok((a, err.max(0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{fill_gaussian, stream};
    use ndarray::Array2;
    use std::f64::consts::PI;

    fn seg_from(rows: Vec<Vec<f64>>) -> Array2<f64> {
        let n = rows[0].len();
        Array2::from_shape_fn((rows.len(), n), |(i, j)| rows[i][j])
    }

    #[test]
    fn sine_dominates_its_band() {
        // 10 Hz unit sine: alpha (8-12 Hz) power at least 100x other bands.
        let x: Vec<f64> = (0..3000).map(|i| (2.0 * PI * 10.0 * i as f64 / 200.0).sin()).collect();
        let seg = seg_from(vec![x]);
        let eng = SpectralEngine::new(3000);
        let bands = super::super::DEFAULT_BANDS.to_vec();
        let bp = band_power(&seg.view(), &bands, 200.0, &eng).unwrap();
        let alpha = bp[2];
        for (b, &v) in bp.iter().enumerate() {
            if b != 2 {
                assert!(alpha - v >= 2.0, "band {b}: alpha {alpha} vs {v}"); // >= 100x in power
            }
        }
    }

    #[test]
    fn white_noise_equal_width_bands_balance_out() {
        // Average linear power over 100 seeds: two equal-width bands agree
        // within 20%.
        let eng = SpectralEngine::new(3000);
        let bands = vec![(20.0, 40.0), (40.0, 60.0)];
        let (mut p1, mut p2) = (0.0, 0.0);
        for seedi in 0..100 {
            let mut rng = stream(900 + seedi, "bp-test", 0);
            let mut x = vec![0.0; 3000];
            fill_gaussian(&mut rng, &mut x);
            let seg = seg_from(vec![x]);
            let bp = band_power(&seg.view(), &bands, 200.0, &eng).unwrap();
            p1 += 10f64.powf(bp[0]);
            p2 += 10f64.powf(bp[1]);
        }
        let ratio = p1 / p2;
        assert!((0.8..1.25).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn zero_signal_hits_log_floor() {
        let seg = seg_from(vec![vec![0.0; 3000]]);
        let eng = SpectralEngine::new(3000);
        let bp = band_power(&seg.view(), &[(8.0, 12.0)], 200.0, &eng).unwrap();
        assert_eq!(bp[0], LOG_POWER_FLOOR.log10());
    }

    #[test]
    fn band_outside_nyquist_is_an_error() {
        let seg = seg_from(vec![vec![0.0; 3000]]);
        let eng = SpectralEngine::new(3000);
        assert!(matches!(
            band_power(&seg.view(), &[(90.0, 110.0)], 200.0, &eng),
            Err(FeatureError::BandOutOfRange(..))
        ));
    }

    #[test]
    fn moments_of_zscored_and_sign_flip() {
        let x: Vec<f64> = (0..3000).map(|i| ((i as f64) * 0.013).sin() * 1.7 + 0.4).collect();
        let mean = x.iter().sum::<f64>() / 3000.0;
        let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3000.0).sqrt();
        let z: Vec<f64> = x.iter().map(|v| (v - mean) / sd).collect();
        let m = moments(&seg_from(vec![z.clone()]).view());
        assert!(m[0].abs() < 1e-9);
        assert!((m[1] - 1.0).abs() < 1e-9);

        let neg: Vec<f64> = z.iter().map(|v| -v).collect();
        let mn = moments(&seg_from(vec![neg]).view());
        assert!((mn[2] + m[2]).abs() < 1e-9, "skew should negate");
    }

    #[test]
    fn gaussian_excess_kurtosis_near_zero() {
        let mut rng = stream(31, "kurt", 0);
        let mut x = vec![0.0; 3000];
        fill_gaussian(&mut rng, &mut x);
        let m = moments(&seg_from(vec![x]).view());
        assert!(m[3].abs() < 0.3, "excess kurtosis {}", m[3]);
    }

    #[test]
    fn ar1_coefficient_recovered() {
        let mut rng = stream(7, "ar", 0);
        let mut eps = vec![0.0; 3000];
        fill_gaussian(&mut rng, &mut eps);
        let mut x = vec![0.0; 3000];
        for t in 1..3000 {
            x[t] = 0.8 * x[t - 1] + eps[t];
        }
        let (a, resid) = ar_fit(&x, 4).unwrap();
        assert!((a[0] - 0.8).abs() < 0.05, "a1 {}", a[0]);
        for &c in &a[1..] {
            assert!(c.abs() < 0.1);
        }
        assert!((resid - 1.0).abs() < 0.1, "residual {resid}");
    }

    #[test]
    fn white_noise_has_no_ar_structure() {
        let mut rng = stream(8, "ar", 1);
        let mut x = vec![0.0; 3000];
        fill_gaussian(&mut rng, &mut x);
        let var = x.iter().map(|v| v * v).sum::<f64>() / 3000.0;
        let (a, resid) = ar_fit(&x, 8).unwrap();
        for &c in &a {
            assert!(c.abs() < 0.05, "coef {c}");
        }
        assert!((resid / var - 1.0).abs() < 0.05);
    }

    #[test]
    fn sinusoid_is_predicted_by_ar2() {
        let x: Vec<f64> = (0..3000).map(|i| (0.4 * i as f64).sin()).collect();
        let var = x.iter().map(|v| v * v).sum::<f64>() / 3000.0;
        let (_, resid) = ar_fit(&x, 2).unwrap();
        assert!(resid < 1e-3 * var, "resid {resid} var {var}");
    }

    #[test]
    fn bad_order_rejected() {
        assert!(matches!(ar_fit(&[1.0, 2.0], 0), Err(FeatureError::BadArOrder(..))));
        assert!(matches!(ar_fit(&[1.0, 2.0], 2), Err(FeatureError::BadArOrder(..))));
    }
}
