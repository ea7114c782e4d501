//! Channel-pair measures: linear correlation in time and frequency,
//! mean phase coherence, nonlinear interdependence.

use super::FeatureError;
use crate::dsp::SpectralEngine;
use crate::scalar::Real;

/// Pearson correlation of two equal-length sequences.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, FeatureError> {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(FeatureError::Degenerate {
            feature: "pearson".into(),
            detail: "zero-variance input".into(),
        });
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Mean phase coherence R = |<exp(i (phi_x - phi_y))>|.
///
/// Instantaneous phases come from the analytic signal; `edge_trim` is the
/// fraction of samples dropped at each end before averaging (Hilbert edge
/// effects).
pub fn mean_phase_coherence<T: Real>(
    x: &[T],
    y: &[T],
    eng: &SpectralEngine<T>,
    edge_trim: f64,
) -> f64 {
    assert_eq!(x.len(), y.len());
    let ax = eng.analytic(x);
    let ay = eng.analytic(y);
    let n = x.len();
    let trim = ((n as f64) * edge_trim).floor() as usize;
    let (mut re, mut im) = (0.0f64, 0.0f64);
    let mut count = 0usize;
    for t in trim..n - trim {
        // x * conj(y) has argument phi_x - phi_y.
        let zx = ax[t];
        let zy = ay[t];
        let pr = (zx.re * zy.re + zx.im * zy.im).as_f64();
        let pi = (zx.im * zy.re - zx.re * zy.im).as_f64();
        let mag = (pr * pr + pi * pi).sqrt();
        if mag > 0.0 {
            re += pr / mag;
            im += pi / mag;
            count += 1;
        }
    }
    if count == 0 {
        return 0.0;
    }
    (re * re + im * im).sqrt() / count as f64
}

/// Time-delay embedding parameters for nonlinear interdependence.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct EmbeddingParams {
    /// Embedding dimension.
    pub m: usize,
    /// Delay in samples.
    pub tau: usize,
    /// Neighbour count.
    pub k: usize,
    /// Theiler window: |n - j| <= theiler is excluded.
    pub theiler: usize,
}

impl Default for EmbeddingParams {
    fn default() -> Self {
        EmbeddingParams { m: 6, tau: 5, k: 5, theiler: 25 }
    }
}

impl EmbeddingParams {
    pub fn min_len(&self) -> usize {
        (self.m - 1) * self.tau + self.k + 2 * self.theiler
    }

    fn n_points(&self, len: usize) -> usize {
        len - (self.m - 1) * self.tau
    }
}

/// k-nearest-neighbour structure of one embedded signal: neighbour indices
/// and mean squared distance per point.
struct NeighbourMap {
    idx: Vec<u32>,   // n_points * k
    mean_sq: Vec<f64>,
    k: usize,
}

/// Dim-major delay embedding: m rows of n points, so the point-vs-block
/// distance kernel runs over contiguous memory.
fn embed<T: Real>(x: &[T], p: &EmbeddingParams) -> Vec<Vec<T>> {
    let n = p.n_points(x.len());
    (0..p.m).map(|d| x[d * p.tau..d * p.tau + n].to_vec()).collect()
}

/// Squared distance between embedded points i and j (dim-major layout).
#[inline]
fn point_sq_dist<T: Real>(e_dims: &[Vec<T>], i: usize, j: usize) -> T {
    let mut acc = T::zero();
    for dim in e_dims {
        let diff = dim[i] - dim[j];
        acc += diff * diff;
    }
    acc
}

/// Insert (dist, idx) into a fixed-size best-k list kept sorted ascending.
/// Strict `<` keeps the lower index on ties (candidates arrive in index
/// order).
#[inline]
fn insert_best<T: Real>(dists: &mut [T], idxs: &mut [u32], d: T, j: u32) {
    let k = dists.len();
    if d >= dists[k - 1] {
        return;
    }
    let mut pos = k - 1;
    while pos > 0 && d < dists[pos - 1] {
        dists[pos] = dists[pos - 1];
        idxs[pos] = idxs[pos - 1];
        pos -= 1;
    }
    dists[pos] = d;
    idxs[pos] = j;
}

const NN_BLOCK: usize = 256;

fn neighbour_map<T: Real>(e_dims: &[Vec<T>], n: usize, p: &EmbeddingParams) -> NeighbourMap {
    let k = p.k;
    let mut dists = vec![T::infinity(); n * k];
    let mut idxs = vec![u32::MAX; n * k];
    // kth-best distance per point, checked before the slow insert path.
    let mut worst = vec![T::infinity(); n];
    let mut buf = [T::zero(); NN_BLOCK];
    for i in 0..n {
        // Symmetric halving: only j past the Theiler window, updating both
        // lists. Distances are computed blockwise so the inner loops
        // vectorize.
        let lo = i + p.theiler + 1;
        let mut start = lo;
        while start < n {
            let len = NN_BLOCK.min(n - start);
            let block = &mut buf[..len];
            block.fill(T::zero());
            for dim in e_dims {
                let a = dim[i];
                for (slot, &v) in block.iter_mut().zip(&dim[start..start + len]) {
                    let diff = a - v;
                    *slot += diff * diff;
                }
            }
            for (t, &d) in block.iter().enumerate() {
                let j = start + t;
                if d < worst[i] {
                    insert_best(
                        &mut dists[i * k..(i + 1) * k],
                        &mut idxs[i * k..(i + 1) * k],
                        d,
                        j as u32,
                    );
                    worst[i] = dists[(i + 1) * k - 1];
                }
                if d < worst[j] {
                    insert_best(
                        &mut dists[j * k..(j + 1) * k],
                        &mut idxs[j * k..(j + 1) * k],
                        d,
                        i as u32,
                    );
                    worst[j] = dists[(j + 1) * k - 1];
                }
            }
            start += len;
        }
    }
    let mean_sq = (0..n)
        .map(|i| dists[i * k..(i + 1) * k].iter().map(|v| v.as_f64()).sum::<f64>() / k as f64)
        .collect();
    NeighbourMap { idx: idxs, mean_sq, k }
}

fn directed_s<T: Real>(
    own: &NeighbourMap,
    own_embed: &[Vec<T>],
    other: &NeighbourMap,
    n: usize,
) -> f64 {
    let mut acc = 0.0;
    for i in 0..n {
        let mut cross = 0.0;
        for q in 0..other.k {
            let j = other.idx[i * other.k + q] as usize;
            cross += point_sq_dist(own_embed, i, j).as_f64();
        }
        cross /= other.k as f64;
        let own_d = own.mean_sq[i];
        acc += if cross > 0.0 {
            own_d / cross
        } else {
            // All cross-picked points coincide with point i's own
            // position; only happens when both are degenerate.
            1.0
        };
    }
    acc / n as f64
}

/// Shared embeddings + neighbour maps for a set of equal-length channels,
/// so each channel's O(n^2) neighbour search runs once however many pairs
/// it participates in.
pub struct NliEngine<T: Real> {
    embeds: Vec<Vec<Vec<T>>>,
    maps: Vec<NeighbourMap>,
    n: usize,
}

impl<T: Real> NliEngine<T> {
    pub fn new(channels: &[Vec<T>], p: &EmbeddingParams) -> Result<Self, FeatureError> {
        assert!(!channels.is_empty());
        let len = channels[0].len();
        if len <= p.min_len() {
            return Err(FeatureError::TooShort { need: p.min_len() + 1, got: len });
        }
        let n = p.n_points(len);
        let embeds: Vec<Vec<Vec<T>>> = channels.iter().map(|c| embed(c, p)).collect();
        let maps = embeds.iter().map(|e| neighbour_map(e, n, p)).collect();
        Ok(NliEngine { embeds, maps, n })
    }

    /// (S(X_i | X_j), S(X_j | X_i)).
    pub fn pair(&self, i: usize, j: usize) -> (f64, f64) {
        (
            directed_s(&self.maps[i], &self.embeds[i], &self.maps[j], self.n),
            directed_s(&self.maps[j], &self.embeds[j], &self.maps[i], self.n),
        )
    }
}

/// Both directed nonlinear interdependences (S(X|Y), S(Y|X)).
///
/// S(X|Y) = mean over points of R_n(X) / R_n(X|Y), where R_n(X) is the mean
/// squared distance of point n to its k nearest neighbours in X (Theiler
/// window excluded) and R_n(X|Y) replaces the neighbour indices with those
/// of Y. Values lie in (0, 1]; identical signals give exactly 1.
pub fn nonlinear_interdependence_pair<T: Real>(
    x: &[T],
    y: &[T],
    p: &EmbeddingParams,
) -> Result<(f64, f64), FeatureError> {
    assert_eq!(x.len(), y.len());
    let engine = NliEngine::new(&[x.to_vec(), y.to_vec()], p)?;
    Ok(engine.pair(0, 1))
}

/// Directed S(X|Y).
pub fn nonlinear_interdependence<T: Real>(
    x: &[T],
    y: &[T],
    p: &EmbeddingParams,
) -> Result<f64, FeatureError> {
    Ok(nonlinear_interdependence_pair(x, y, p)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{fill_gaussian, stream};
    use std::f64::consts::PI;

    #[test]
    fn pearson_basics() {
        let x = vec![0.1, 0.4, 0.8, 0.3];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v + 1.0).collect();
        assert!((pearson(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        let z: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &z).unwrap() + 1.0).abs() < 1e-12);
        assert!(pearson(&x, &[1.0; 4]).is_err());
    }

    #[test]
    fn mpc_identical_signals() {
        let eng = SpectralEngine::<f64>::new(3000);
        let x: Vec<f64> = (0..3000).map(|i| (0.07 * i as f64).sin() + 0.3 * (0.011 * i as f64).cos()).collect();
        let r = mean_phase_coherence(&x, &x, &eng, 0.05);
        assert!((r - 1.0).abs() < 1e-6, "R {r}");
    }

    #[test]
    fn mpc_constant_phase_lag() {
        // Same-frequency sines with a fixed lag: R = 1.
        let eng = SpectralEngine::<f64>::new(3000);
        let x: Vec<f64> = (0..3000).map(|i| (2.0 * PI * 10.0 * i as f64 / 200.0).sin()).collect();
        let y: Vec<f64> = (0..3000).map(|i| (2.0 * PI * 10.0 * i as f64 / 200.0 + 1.1).sin()).collect();
        let r = mean_phase_coherence(&x, &y, &eng, 0.05);
        assert!((r - 1.0).abs() < 1e-3, "R {r}");
    }

    #[test]
    fn mpc_independent_noise_is_low() {
        let eng = SpectralEngine::<f64>::new(3000);
        let mut below = 0;
        for seed in 0..100 {
            let mut rng = stream(1000 + seed, "mpc", 0);
            let mut x = vec![0.0; 3000];
            let mut y = vec![0.0; 3000];
            fill_gaussian(&mut rng, &mut x);
            fill_gaussian(&mut rng, &mut y);
            if mean_phase_coherence(&x, &y, &eng, 0.05) < 0.1 {
                below += 1;
            }
        }
        assert!(below >= 95, "only {below}/100 seeds below 0.1");
    }

    #[test]
    fn mpc_invariant_under_affine_scaling() {
        let eng = SpectralEngine::<f64>::new(2000);
        let mut rng = stream(5, "mpc-aff", 0);
        let mut x = vec![0.0; 2000];
        let mut y = vec![0.0; 2000];
        fill_gaussian(&mut rng, &mut x);
        fill_gaussian(&mut rng, &mut y);
        let r1 = mean_phase_coherence(&x, &y, &eng, 0.05);
        let xs: Vec<f64> = x.iter().map(|v| 4.2 * v + 3.0).collect();
        // Affine offset shifts the analytic DC; only scale invariance is
        // promised for the phase, offset stays out of the contract.
        let xs2: Vec<f64> = x.iter().map(|v| 4.2 * v).collect();
        let r2 = mean_phase_coherence(&xs2, &y, &eng, 0.05);
        assert!((r1 - r2).abs() < 1e-6);
        let _ = xs;
    }

    fn nli_params() -> EmbeddingParams {
        EmbeddingParams { m: 4, tau: 2, k: 4, theiler: 10 }
    }

    #[test]
    fn nli_self_dependence_is_one() {
        let mut rng = stream(9, "nli", 0);
        let mut x = vec![0.0; 600];
        fill_gaussian(&mut rng, &mut x);
        let (sxy, syx) = nonlinear_interdependence_pair(&x, &x, &nli_params()).unwrap();
        assert!((sxy - 1.0).abs() < 1e-9);
        assert!((syx - 1.0).abs() < 1e-9);
    }

    #[test]
    fn nli_too_short_is_error() {
        let x = vec![0.0; 20];
        assert!(matches!(
            nonlinear_interdependence(&x, &x, &EmbeddingParams::default()),
            Err(FeatureError::TooShort { .. })
        ));
    }

    /// Surrogate oracle: S for y cyclically shifted far from alignment.
    fn surrogate_95th(x: &[f64], y: &[f64], p: &EmbeddingParams) -> f64 {
        let mut vals = Vec::new();
        for s in 0..19 {
            let shift = 60 + s * 25;
            let ys: Vec<f64> = (0..y.len()).map(|i| y[(i + shift) % y.len()]).collect();
            vals.push(nonlinear_interdependence(x, &ys, p).unwrap());
        }
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals[vals.len() - 1]
    }

    #[test]
    fn nli_independent_noise_below_surrogate_and_coupled_above() {
        let p = nli_params();
        let mut rng = stream(11, "nli", 1);
        let mut x = vec![0.0; 600];
        let mut y = vec![0.0; 600];
        fill_gaussian(&mut rng, &mut x);
        fill_gaussian(&mut rng, &mut y);
        // Smooth both a little so the embedding has structure.
        let smooth = |v: &[f64]| -> Vec<f64> {
            (0..v.len())
                .map(|i| {
                    let a = if i > 0 { v[i - 1] } else { v[i] };
                    let b = if i + 1 < v.len() { v[i + 1] } else { v[i] };
                    0.5 * v[i] + 0.25 * (a + b)
                })
                .collect()
        };
        let x = smooth(&smooth(&x));
        let y = smooth(&smooth(&y));

        let s_indep = nonlinear_interdependence(&x, &y, &p).unwrap();
        assert!(
            s_indep <= surrogate_95th(&x, &y, &p) * 1.05,
            "independent S {s_indep} above surrogate band"
        );

        // y = f(x) with smooth invertible f: S well above the independent
        // baseline.
        let fx: Vec<f64> = x.iter().map(|v| v + 0.3 * v * v * v).collect();
        let s_dep = nonlinear_interdependence(&x, &fx, &p).unwrap();
        assert!(
            s_dep > surrogate_95th(&x, &fx, &p),
            "dependent S {s_dep} not above surrogate"
        );
        assert!(s_dep > s_indep);
        assert!(s_dep <= 1.0 + 1e-12);
    }
}
