//! Layer implementations. Train-mode forwards cache what backward needs;
//! infer-mode forwards are pure (`&self`), use batch-norm running stats and
//! skip dropout.

use crate::scalar::{real, Real};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    ReLU,
    Sigmoid,
}

#[inline]
fn axpy<T: Real>(a: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot<T: Real>(x: &[T], y: &[T]) -> T {
    // Eight independent lanes so the reduction vectorizes; lane order is
    // fixed, so results stay deterministic.
    let mut lanes = [T::zero(); 8];
    let mut xc = x.chunks_exact(8);
    let mut yc = y.chunks_exact(8);
    for (a, b) in (&mut xc).zip(&mut yc) {
        for l in 0..8 {
            lanes[l] += a[l] * b[l];
        }
    }
    let mut acc = ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3]))
        + ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
    for (&a, &b) in xc.remainder().iter().zip(yc.remainder()) {
        acc += a * b;
    }
    acc
}

#[derive(Debug, Clone)]
pub struct Dense<T: Real> {
    pub input: usize,
    pub output: usize,
    pub w: Vec<T>, // output x input
    pub b: Vec<T>,
    gw: Vec<T>,
    gb: Vec<T>,
    cache_x: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn new(input: usize, output: usize, w: Vec<T>) -> Self {
        assert_eq!(w.len(), input * output);
        Dense {
            input,
            output,
            w,
            b: vec![T::zero(); output],
            gw: vec![T::zero(); input * output],
            gb: vec![T::zero(); output],
            cache_x: Vec::new(),
        }
    }

    fn forward(&self, x: &[T], batch: usize, out: &mut Vec<T>) {
        out.clear();
        out.resize(batch * self.output, T::zero());
        for s in 0..batch {
            let xs = &x[s * self.input..(s + 1) * self.input];
            let os = &mut out[s * self.output..(s + 1) * self.output];
            for (o, slot) in os.iter_mut().enumerate() {
                *slot = self.b[o] + dot(&self.w[o * self.input..(o + 1) * self.input], xs);
            }
        }
    }

    fn backward(&mut self, gout: &[T], batch: usize) -> Vec<T> {
        let mut gin = vec![T::zero(); batch * self.input];
        for s in 0..batch {
            let xs = &self.cache_x[s * self.input..(s + 1) * self.input];
            let gs = &gout[s * self.output..(s + 1) * self.output];
            let gi = &mut gin[s * self.input..(s + 1) * self.input];
            for (o, &g) in gs.iter().enumerate() {
                axpy(g, &self.w[o * self.input..(o + 1) * self.input], gi);
                axpy(g, xs, &mut self.gw[o * self.input..(o + 1) * self.input]);
                self.gb[o] += g;
            }
        }
        gin
    }
}

#[derive(Debug, Clone)]
pub struct Conv<T: Real> {
    pub in_maps: usize,
    pub out_maps: usize,
    pub kernel: usize,
    pub stride: usize,
    pub in_len: usize,
    pub out_len: usize,
    pub w: Vec<T>, // out x in x kernel
    pub b: Vec<T>,
    gw: Vec<T>,
    gb: Vec<T>,
    cache_x: Vec<T>,
}

impl<T: Real> Conv<T> {
    pub fn new(
        in_maps: usize,
        out_maps: usize,
        kernel: usize,
        stride: usize,
        in_len: usize,
        w: Vec<T>,
    ) -> Self {
        assert_eq!(w.len(), in_maps * out_maps * kernel);
        Conv {
            in_maps,
            out_maps,
            kernel,
            stride,
            in_len,
            out_len: (in_len - kernel) / stride + 1,
            w,
            b: vec![T::zero(); out_maps],
            gw: vec![T::zero(); in_maps * out_maps * kernel],
            gb: vec![T::zero(); out_maps],
            cache_x: Vec::new(),
        }
    }

    #[inline]
    fn wslice(&self, om: usize, im: usize) -> &[T] {
        let base = (om * self.in_maps + im) * self.kernel;
        &self.w[base..base + self.kernel]
    }

    fn forward(&self, x: &[T], batch: usize, out: &mut Vec<T>) {
        let (il, ol) = (self.in_len, self.out_len);
        out.clear();
        out.resize(batch * self.out_maps * ol, T::zero());
        for s in 0..batch {
            let xs = &x[s * self.in_maps * il..(s + 1) * self.in_maps * il];
            let os = &mut out[s * self.out_maps * ol..(s + 1) * self.out_maps * ol];
            for om in 0..self.out_maps {
                let orow = &mut os[om * ol..(om + 1) * ol];
                orow.fill(self.b[om]);
                for im in 0..self.in_maps {
                    let xrow = &xs[im * il..(im + 1) * il];
                    let ws = self.wslice(om, im);
                    if self.stride == 1 {
                        for (k, &wk) in ws.iter().enumerate() {
                            axpy(wk, &xrow[k..k + ol], orow);
                        }
                    } else {
                        for (t, slot) in orow.iter_mut().enumerate() {
                            let base = t * self.stride;
                            *slot += dot(ws, &xrow[base..base + self.kernel]);
                        }
                    }
                }
            }
        }
    }

    fn backward(&mut self, gout: &[T], batch: usize) -> Vec<T> {
        let (il, ol) = (self.in_len, self.out_len);
        let mut gin = vec![T::zero(); batch * self.in_maps * il];
        for s in 0..batch {
            let xs = &self.cache_x[s * self.in_maps * il..(s + 1) * self.in_maps * il];
            let gs = &gout[s * self.out_maps * ol..(s + 1) * self.out_maps * ol];
            let gi = &mut gin[s * self.in_maps * il..(s + 1) * self.in_maps * il];
            for om in 0..self.out_maps {
                let grow = &gs[om * ol..(om + 1) * ol];
                self.gb[om] += grow.iter().copied().sum();
                for im in 0..self.in_maps {
                    let xrow = &xs[im * il..(im + 1) * il];
                    let girow = &mut gi[im * il..(im + 1) * il];
                    let wbase = (om * self.in_maps + im) * self.kernel;
                    if self.stride == 1 {
                        for k in 0..self.kernel {
                            axpy(self.w[wbase + k], grow, &mut girow[k..k + ol]);
                            self.gw[wbase + k] += dot(grow, &xrow[k..k + ol]);
                        }
                    } else {
                        for (t, &g) in grow.iter().enumerate() {
                            let base = t * self.stride;
                            for k in 0..self.kernel {
                                girow[base + k] += self.w[wbase + k] * g;
                                self.gw[wbase + k] += g * xrow[base + k];
                            }
                        }
                    }
                }
            }
        }
        gin
    }
}

#[derive(Debug, Clone)]
pub struct MaxPool {
    pub kernel: usize,
    pub maps: usize,
    pub in_len: usize,
    pub out_len: usize,
    cache_argmax: Vec<u32>,
}

impl MaxPool {
    pub fn new(kernel: usize, maps: usize, in_len: usize) -> Self {
        MaxPool { kernel, maps, in_len, out_len: in_len / kernel, cache_argmax: Vec::new() }
    }

    fn forward<T: Real>(&self, x: &[T], batch: usize, out: &mut Vec<T>, argmax: Option<&mut Vec<u32>>) {
        let rows = batch * self.maps;
        out.clear();
        out.resize(rows * self.out_len, T::zero());
        let mut arg = argmax;
        if let Some(a) = arg.as_deref_mut() {
            a.clear();
            a.resize(rows * self.out_len, 0);
        }
        for r in 0..rows {
            let xr = &x[r * self.in_len..(r + 1) * self.in_len];
            for t in 0..self.out_len {
                let base = t * self.kernel;
                let mut best = xr[base];
                let mut best_k = 0usize;
                for k in 1..self.kernel {
                    // strict > keeps the lowest index on ties
                    if xr[base + k] > best {
                        best = xr[base + k];
                        best_k = k;
                    }
                }
                out[r * self.out_len + t] = best;
                if let Some(a) = arg.as_deref_mut() {
                    a[r * self.out_len + t] = (base + best_k) as u32;
                }
            }
        }
    }

    fn backward<T: Real>(&self, gout: &[T], batch: usize) -> Vec<T> {
        let rows = batch * self.maps;
        let mut gin = vec![T::zero(); rows * self.in_len];
        for r in 0..rows {
            for t in 0..self.out_len {
                let src = self.cache_argmax[r * self.out_len + t] as usize;
                gin[r * self.in_len + src] += gout[r * self.out_len + t];
            }
        }
        gin
    }
}

#[derive(Debug, Clone)]
pub struct AvgPool {
    pub kernel: usize,
    pub maps: usize,
    pub in_len: usize,
    pub out_len: usize,
}

impl AvgPool {
    pub fn new(kernel: usize, maps: usize, in_len: usize) -> Self {
        AvgPool { kernel, maps, in_len, out_len: in_len / kernel }
    }

    fn forward<T: Real>(&self, x: &[T], batch: usize, out: &mut Vec<T>) {
        let rows = batch * self.maps;
        let inv = real::<T>(1.0 / self.kernel as f64);
        out.clear();
        out.resize(rows * self.out_len, T::zero());
        for r in 0..rows {
            let xr = &x[r * self.in_len..(r + 1) * self.in_len];
            for t in 0..self.out_len {
                let base = t * self.kernel;
                out[r * self.out_len + t] = xr[base..base + self.kernel].iter().copied().sum::<T>() * inv;
            }
        }
    }

    fn backward<T: Real>(&self, gout: &[T], batch: usize) -> Vec<T> {
        let rows = batch * self.maps;
        let inv = real::<T>(1.0 / self.kernel as f64);
        let mut gin = vec![T::zero(); rows * self.in_len];
        for r in 0..rows {
            for t in 0..self.out_len {
                let g = gout[r * self.out_len + t] * inv;
                let base = r * self.in_len + t * self.kernel;
                for k in 0..self.kernel {
                    gin[base + k] += g;
                }
            }
        }
        gin
    }
}

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct BatchNorm<T: Real> {
    pub features: usize,
    /// Samples per feature within one item (sequence length for conv
    /// stages, 1 for flat).
    pub inner_len: usize,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    g_gamma: Vec<T>,
    g_beta: Vec<T>,
    cache_xhat: Vec<T>,
    cache_invstd: Vec<f64>,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(features: usize, inner_len: usize) -> Self {
        BatchNorm {
            features,
            inner_len,
            gamma: vec![T::one(); features],
            beta: vec![T::zero(); features],
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
            g_gamma: vec![T::zero(); features],
            g_beta: vec![T::zero(); features],
            cache_xhat: Vec::new(),
            cache_invstd: Vec::new(),
        }
    }

    #[inline]
    fn offset(&self, s: usize, f: usize) -> usize {
        (s * self.features + f) * self.inner_len
    }

    fn forward_train(&mut self, x: &[T], batch: usize, out: &mut Vec<T>) {
        let n_agg = (batch * self.inner_len) as f64;
        out.clear();
        out.resize(x.len(), T::zero());
        self.cache_xhat.clear();
        self.cache_xhat.resize(x.len(), T::zero());
        self.cache_invstd.clear();
        self.cache_invstd.resize(self.features, 0.0);
        for f in 0..self.features {
            let mut mean = 0.0;
            for s in 0..batch {
                let base = self.offset(s, f);
                for i in 0..self.inner_len {
                    mean += x[base + i].as_f64();
                }
            }
            mean /= n_agg;
            let mut var = 0.0;
            for s in 0..batch {
                let base = self.offset(s, f);
                for i in 0..self.inner_len {
                    let d = x[base + i].as_f64() - mean;
                    var += d * d;
                }
            }
            var /= n_agg;
            let invstd = 1.0 / (var + BN_EPS).sqrt();
            self.cache_invstd[f] = invstd;
            self.running_mean[f] = (1.0 - BN_MOMENTUM) * self.running_mean[f] + BN_MOMENTUM * mean;
            self.running_var[f] = (1.0 - BN_MOMENTUM) * self.running_var[f] + BN_MOMENTUM * var;
            let (m_t, inv_t) = (real::<T>(mean), real::<T>(invstd));
            for s in 0..batch {
                let base = self.offset(s, f);
                for i in 0..self.inner_len {
                    let xhat = (x[base + i] - m_t) * inv_t;
                    self.cache_xhat[base + i] = xhat;
                    out[base + i] = self.gamma[f] * xhat + self.beta[f];
                }
            }
        }
    }

    fn forward_infer(&self, x: &[T], batch: usize, out: &mut Vec<T>) {
        out.clear();
        out.resize(x.len(), T::zero());
        for f in 0..self.features {
            let inv = real::<T>(1.0 / (self.running_var[f] + BN_EPS).sqrt());
            let m = real::<T>(self.running_mean[f]);
            for s in 0..batch {
                let base = self.offset(s, f);
                for i in 0..self.inner_len {
                    out[base + i] = self.gamma[f] * (x[base + i] - m) * inv + self.beta[f];
                }
            }
        }
    }

    fn backward(&mut self, gout: &[T], batch: usize) -> Vec<T> {
        let n_agg = (batch * self.inner_len) as f64;
        let mut gin = vec![T::zero(); gout.len()];
        for f in 0..self.features {
            let mut sum_dy = T::zero();
            let mut sum_dy_xhat = T::zero();
            for s in 0..batch {
                let base = self.offset(s, f);
                for i in 0..self.inner_len {
                    let dy = gout[base + i];
                    sum_dy += dy;
                    sum_dy_xhat += dy * self.cache_xhat[base + i];
                }
            }
            self.g_beta[f] += sum_dy;
            self.g_gamma[f] += sum_dy_xhat;
            let scale = self.gamma[f] * real::<T>(self.cache_invstd[f]);
            let inv_n = real::<T>(1.0 / n_agg);
            for s in 0..batch {
                let base = self.offset(s, f);
                for i in 0..self.inner_len {
                    let dy = gout[base + i];
                    let xhat = self.cache_xhat[base + i];
                    gin[base + i] =
                        scale * (dy - inv_n * (sum_dy + xhat * sum_dy_xhat));
                }
            }
        }
        gin
    }
}

#[derive(Debug, Clone)]
pub struct Dropout {
    pub p: f64,
    rng: ChaCha8Rng,
    mask: Vec<bool>,
}

impl Dropout {
    pub fn new(p: f64, rng: ChaCha8Rng) -> Self {
        Dropout { p, rng, mask: Vec::new() }
    }

    fn forward_train<T: Real>(&mut self, x: &[T], out: &mut Vec<T>) {
        let keep = 1.0 - self.p;
        let scale = real::<T>(1.0 / keep);
        self.mask.clear();
        out.clear();
        out.reserve(x.len());
        for &v in x {
            let keep_it = crate::rng::uniform_open01(&mut self.rng) < keep;
            self.mask.push(keep_it);
            out.push(if keep_it { v * scale } else { T::zero() });
        }
    }

    fn backward<T: Real>(&self, gout: &[T]) -> Vec<T> {
        let scale = real::<T>(1.0 / (1.0 - self.p));
        gout.iter()
            .zip(&self.mask)
            .map(|(&g, &m)| if m { g * scale } else { T::zero() })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Act<T: Real> {
    pub kind: Activation,
    cache: Vec<T>, // ReLU: input sign source; Sigmoid: output
}

impl<T: Real> Act<T> {
    pub fn new(kind: Activation) -> Self {
        Act { kind, cache: Vec::new() }
    }

    fn eval(kind: Activation, v: T) -> T {
        match kind {
            Activation::ReLU => {
                if v > T::zero() {
                    v
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => T::one() / (T::one() + (-v).exp()),
        }
    }

    fn forward(&self, x: &[T], out: &mut Vec<T>) {
        out.clear();
        out.extend(x.iter().map(|&v| Self::eval(self.kind, v)));
    }

    fn backward(&self, gout: &[T]) -> Vec<T> {
        match self.kind {
            Activation::ReLU => gout
                .iter()
                .zip(&self.cache)
                .map(|(&g, &x)| if x > T::zero() { g } else { T::zero() })
                .collect(),
            Activation::Sigmoid => gout
                .iter()
                .zip(&self.cache)
                .map(|(&g, &y)| g * y * (T::one() - y))
                .collect(),
        }
    }
}

/// One network layer; static dispatch over the fixed layer set.
#[derive(Debug, Clone)]
pub enum Layer<T: Real> {
    Dense(Dense<T>),
    Conv(Conv<T>),
    MaxPool(MaxPool),
    AvgPool(AvgPool),
    BatchNorm(BatchNorm<T>),
    Dropout(Dropout),
    Act(Act<T>),
    Flatten,
}

impl<T: Real> Layer<T> {
    /// Train-mode forward; caches whatever backward needs.
    pub fn forward_train(&mut self, x: &[T], batch: usize, out: &mut Vec<T>) {
        match self {
            Layer::Dense(l) => {
                l.cache_x = x.to_vec();
                l.forward(x, batch, out);
            }
            Layer::Conv(l) => {
                l.cache_x = x.to_vec();
                l.forward(x, batch, out);
            }
            Layer::MaxPool(l) => {
                let mut arg = std::mem::take(&mut l.cache_argmax);
                l.forward(x, batch, out, Some(&mut arg));
                l.cache_argmax = arg;
            }
            Layer::AvgPool(l) => l.forward(x, batch, out),
            Layer::BatchNorm(l) => l.forward_train(x, batch, out),
            Layer::Dropout(l) => l.forward_train(x, out),
            Layer::Act(l) => {
                match l.kind {
                    Activation::ReLU => l.cache = x.to_vec(),
                    Activation::Sigmoid => {}
                }
                l.forward(x, out);
                if l.kind == Activation::Sigmoid {
                    l.cache = out.clone();
                }
            }
            Layer::Flatten => {
                out.clear();
                out.extend_from_slice(x);
            }
        }
    }

    /// Pure inference forward.
    pub fn forward_infer(&self, x: &[T], batch: usize, out: &mut Vec<T>) {
        match self {
            Layer::Dense(l) => l.forward(x, batch, out),
            Layer::Conv(l) => l.forward(x, batch, out),
            Layer::MaxPool(l) => l.forward(x, batch, out, None),
            Layer::AvgPool(l) => l.forward(x, batch, out),
            Layer::BatchNorm(l) => l.forward_infer(x, batch, out),
            Layer::Dropout(_) | Layer::Flatten => {
                out.clear();
                out.extend_from_slice(x);
            }
            Layer::Act(l) => l.forward(x, out),
        }
    }

    pub fn backward(&mut self, gout: &[T], batch: usize) -> Vec<T> {
        match self {
            Layer::Dense(l) => l.backward(gout, batch),
            Layer::Conv(l) => l.backward(gout, batch),
            Layer::MaxPool(l) => l.backward(gout, batch),
            Layer::AvgPool(l) => l.backward(gout, batch),
            Layer::BatchNorm(l) => l.backward(gout, batch),
            Layer::Dropout(l) => l.backward(gout),
            Layer::Act(l) => l.backward(gout),
            Layer::Flatten => gout.to_vec(),
        }
    }

    /// (params, grads) pairs for the optimizer / serializer / checker.
    pub fn params_mut(&mut self) -> Vec<(&mut Vec<T>, &mut Vec<T>)> {
        match self {
            Layer::Dense(l) => vec![(&mut l.w, &mut l.gw), (&mut l.b, &mut l.gb)],
            Layer::Conv(l) => vec![(&mut l.w, &mut l.gw), (&mut l.b, &mut l.gb)],
            Layer::BatchNorm(l) => {
                vec![(&mut l.gamma, &mut l.g_gamma), (&mut l.beta, &mut l.g_beta)]
            }
            _ => Vec::new(),
        }
    }

    pub fn params(&self) -> Vec<&Vec<T>> {
        match self {
            Layer::Dense(l) => vec![&l.w, &l.b],
            Layer::Conv(l) => vec![&l.w, &l.b],
            Layer::BatchNorm(l) => vec![&l.gamma, &l.beta],
            _ => Vec::new(),
        }
    }

    /// Weight vectors only (biases and batch-norm shifts are exempt from
    /// L1/L2, as usual).
    pub fn weights_mut(&mut self) -> Option<(&mut Vec<T>, &mut Vec<T>)> {
        match self {
            Layer::Dense(l) => Some((&mut l.w, &mut l.gw)),
            Layer::Conv(l) => Some((&mut l.w, &mut l.gw)),
            _ => None,
        }
    }

    pub fn running_stats_mut(&mut self) -> Option<(&mut Vec<f64>, &mut Vec<f64>)> {
        match self {
            Layer::BatchNorm(l) => Some((&mut l.running_mean, &mut l.running_var)),
            _ => None,
        }
    }

    pub fn running_stats(&self) -> Option<(&Vec<f64>, &Vec<f64>)> {
        match self {
            Layer::BatchNorm(l) => Some((&l.running_mean, &l.running_var)),
            _ => None,
        }
    }

    pub fn drop_caches(&mut self) {
        match self {
            Layer::Dense(l) => l.cache_x = Vec::new(),
            Layer::Conv(l) => l.cache_x = Vec::new(),
            Layer::MaxPool(l) => l.cache_argmax = Vec::new(),
            Layer::BatchNorm(l) => {
                l.cache_xhat = Vec::new();
                l.cache_invstd = Vec::new();
            }
            Layer::Dropout(l) => l.mask = Vec::new(),
            Layer::Act(l) => l.cache = Vec::new(),
            _ => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maxpool_definition() {
        // MaxPool1D(2) on [1,3,2,4] -> [3,4].
        let pool = MaxPool::new(2, 1, 4);
        let mut out = Vec::new();
        pool.forward(&[1.0f64, 3.0, 2.0, 4.0], 1, &mut out, None);
        assert_eq!(out, vec![3.0, 4.0]);
    }

    #[test]
    fn maxpool_ties_pick_lowest_index() {
        let pool = MaxPool::new(2, 1, 4);
        let mut out = Vec::new();
        let mut arg = Vec::new();
        pool.forward(&[2.0f64, 2.0, 1.0, 1.0], 1, &mut out, Some(&mut arg));
        assert_eq!(arg, vec![0, 2]);
    }

    #[test]
    fn batchnorm_train_output_is_standardized() {
        let mut bn = BatchNorm::<f64>::new(2, 3);
        let batch = 8;
        let x: Vec<f64> = (0..batch * 2 * 3).map(|i| (i as f64 * 0.7).sin() * 3.0 + 1.0).collect();
        let mut out = Vec::new();
        bn.forward_train(&x, batch, &mut out);
        for f in 0..2 {
            let mut vals = Vec::new();
            for s in 0..batch {
                for i in 0..3 {
                    vals.push(out[(s * 2 + f) * 3 + i]);
                }
            }
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-6, "mean {mean}");
            assert!((var - 1.0).abs() < 1e-5, "var {var}");
        }
    }

    #[test]
    fn dropout_infer_is_identity() {
        let rng = crate::rng::stream(1, "drop", 0);
        let layer: Layer<f64> = Layer::Dropout(Dropout::new(0.5, rng));
        let x = vec![1.0, -2.0, 3.0];
        let mut out = Vec::new();
        layer.forward_infer(&x, 1, &mut out);
        assert_eq!(out, x);
    }

    #[test]
    fn sigmoid_of_zero_is_half() {
        let act = Act::<f64>::new(Activation::Sigmoid);
        let mut out = Vec::new();
        act.forward(&[0.0], &mut out);
        assert_eq!(out, vec![0.5]);
    }
}
