//! Rate conversion onto the canonical 200 Hz grid.
//!
//! Rational resampling (upsample, windowed-sinc low-pass, downsample): the
//! supported conversions are integral-Hz rate pairs, e.g. 1000 -> 200
//! (down 5), 500 -> 200 (up 2, down 5), 400 -> 200 (down 2). The low-pass
//! cuts at 0.45x the target rate with a Hamming window, which buys > 40 dB
//! in the stopband.

use super::{DataError, Recording};
use crate::dsp::Resampler;
use crate::scalar::Real;
use ndarray::Array2;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Resample every channel of `rec` to `target_rate`. Annotations are in
/// seconds and carry over unchanged; duration is preserved to within one
/// sample.
pub fn resample<T: Real>(rec: &Recording<T>, target_rate: f64) -> Result<Recording<T>, DataError> {
    if target_rate > rec.sampling_rate {
        return Err(DataError::Upsample {
            from: rec.sampling_rate,
            to: target_rate,
        });
    }
    if (rec.sampling_rate - target_rate).abs() < 1e-9 {
        return Ok(rec.clone());
    }
    let src_i = rec.sampling_rate.round();
    let tgt_i = target_rate.round();
    if (src_i - rec.sampling_rate).abs() > 1e-9 || (tgt_i - target_rate).abs() > 1e-9 {
        return Err(DataError::UnsupportedRates {
            from: rec.sampling_rate,
            to: target_rate,
        });
    }
    let g = gcd(src_i as u64, tgt_i as u64);
    let up = (tgt_i as u64 / g) as usize;
    let down = (src_i as u64 / g) as usize;

    // Design at the upsampled rate: cutoff 0.45 x target, transition
    // 0.05 x target so the stopband is fully developed at 0.475 x target.
    let rate_up = rec.sampling_rate * up as f64;
    let cutoff = 0.45 * target_rate / rate_up;
    let transition = 0.05 * target_rate / rate_up;
    let mut n_taps = (3.3 / transition).ceil() as usize;
    if n_taps % 2 == 0 {
        n_taps += 1;
    }
    let rs = Resampler::<T>::new(up, down, cutoff, n_taps);

    let n_out = rs.output_len(rec.n_samples());
    let mut data = Array2::<T>::zeros((rec.n_channels(), n_out));
    for (ch, row) in rec.data.rows().into_iter().enumerate() {
        let x: Vec<T> = row.iter().copied().collect();
        let y = rs.apply(&x);
        data.row_mut(ch)
            .iter_mut()
            .zip(y.iter())
            .for_each(|(dst, &v)| *dst = v);
    }

    Ok(Recording {
        subject_id: rec.subject_id.clone(),
        sampling_rate: target_rate,
        channels: rec.channels.clone(),
        data,
        seizure_onsets: rec.seizure_onsets.clone(),
        artifact_intervals: rec.artifact_intervals.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use std::f64::consts::PI;

    fn rec_from(rate: f64, rows: Vec<Vec<f64>>) -> Recording<f64> {
        let n = rows[0].len();
        let mut data = Array2::zeros((rows.len(), n));
        for (i, r) in rows.iter().enumerate() {
            for (j, &v) in r.iter().enumerate() {
                data[[i, j]] = v;
            }
        }
        Recording {
            subject_id: "t".into(),
            sampling_rate: rate,
            channels: (0..rows.len()).map(|i| format!("ch{i}")).collect(),
            data,
            seizure_onsets: vec![],
            artifact_intervals: vec![],
        }
    }

    fn sine(freq: f64, rate: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * freq * i as f64 / rate).sin()).collect()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn upsampling_request_is_an_error() {
        let rec = rec_from(200.0, vec![vec![0.0; 1000]]);
        assert!(matches!(
            resample(&rec, 400.0),
            Err(DataError::Upsample { .. })
        ));
    }

    #[test]
    fn constant_signal_survives_1000_to_200() {
        let rec = rec_from(1000.0, vec![vec![2.5; 20_000]]);
        let out = resample(&rec, 200.0).unwrap();
        assert_eq!(out.n_samples(), 4000);
        assert_eq!(out.sampling_rate, 200.0);
        for &v in out.data.row(0).iter().skip(200).take(3600) {
            assert!((v - 2.5).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn sine_10hz_survives_1000_to_200_within_1pct() {
        // Against the analytically sampled sine at the output rate.
        let rec = rec_from(1000.0, vec![sine(10.0, 1000.0, 50_000)]);
        let out = resample(&rec, 200.0).unwrap();
        let expect = sine(10.0, 200.0, out.n_samples());
        let mid = 500..out.n_samples() - 500;
        let mut max_err: f64 = 0.0;
        for i in mid {
            max_err = max_err.max((out.data[[0, i]] - expect[i]).abs());
        }
        assert!(max_err < 0.01, "max err {max_err}");
    }

    #[test]
    fn sine_95hz_at_400_is_attenuated_40db() {
        let rec = rec_from(400.0, vec![sine(95.0, 400.0, 40_000)]);
        let input_rms = rms(&sine(95.0, 400.0, 40_000));
        let out = resample(&rec, 200.0).unwrap();
        let row: Vec<f64> = out.data.row(0).iter().copied().collect();
        let out_rms = rms(&row[1000..row.len() - 1000]);
        let db = 20.0 * (out_rms / input_rms).log10();
        assert!(db <= -40.0, "attenuation only {db:.1} dB");
    }

    #[test]
    fn resampler_500_to_200_uses_rational_path_and_keeps_duration() {
        let rec = rec_from(500.0, vec![sine(7.0, 500.0, 25_000)]); // 50 s
        let out = resample(&rec, 200.0).unwrap();
        assert_eq!(out.n_samples(), 10_000); // 50 s at 200 Hz
        let expect = sine(7.0, 200.0, out.n_samples());
        for i in 500..9500 {
            assert!((out.data[[0, i]] - expect[i]).abs() < 0.01);
        }
    }

    #[test]
    fn resampling_is_linear() {
        let a = sine(11.0, 1000.0, 10_000);
        let b = sine(23.0, 1000.0, 10_000);
        let combo: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 2.0 * x - 0.5 * y).collect();
        let ra = resample(&rec_from(1000.0, vec![a]), 200.0).unwrap();
        let rb = resample(&rec_from(1000.0, vec![b]), 200.0).unwrap();
        let rc = resample(&rec_from(1000.0, vec![combo]), 200.0).unwrap();
        for i in 0..rc.n_samples() {
            let lin = 2.0 * ra.data[[0, i]] - 0.5 * rb.data[[0, i]];
            assert!((rc.data[[0, i]] - lin).abs() < 1e-9);
        }
    }
}
