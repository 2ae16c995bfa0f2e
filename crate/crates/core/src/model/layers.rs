//! Layers with explicit forward caches, generic over the float type so the
//! same code trains in `f32` and is gradient-checked in `f64`.
//!
//! Feature maps are stored channel-major: row `c` of a `[C, N*H*W]` matrix
//! holds channel `c` of every sample in the batch.

use ndarray::{Array1, Array2, Axis};
use num_traits::{Float, FromPrimitive};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub trait Scalar:
    Float
    + FromPrimitive
    + ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + std::ops::AddAssign
    + std::fmt::Debug
    + Send
    + Sync
    + 'static
{
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + ndarray::LinalgScalar
        + ndarray::ScalarOperand
        + std::ops::AddAssign
        + std::fmt::Debug
        + Send
        + Sync
        + 'static
{
}

pub(crate) fn c<T: Scalar>(v: f64) -> T {
    T::from_f64(v).expect("representable constant")
}

/// A trainable tensor with its gradient and momentum buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub value: Array2<T>,
    pub grad: Array2<T>,
    pub velocity: Array2<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(value: Array2<T>) -> Self {
        let shape = value.raw_dim();
        Self {
            value,
            grad: Array2::zeros(shape),
            velocity: Array2::zeros(shape),
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    /// Momentum SGD: `v = mu v + g; w -= lr v`.
    pub fn step(&mut self, lr: T, momentum: T) {
        ndarray::Zip::from(&mut self.value)
            .and(&mut self.velocity)
            .and(&self.grad)
            .for_each(|w, v, &g| {
                *v = momentum * *v + g;
                *w = *w - lr * *v;
            });
    }
}

/// He-uniform initialisation.
fn he_uniform<T: Scalar, R: Rng>(rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> Array2<T> {
    let bound = (6.0 / fan_in as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| c(rng.random_range(-bound..bound)))
}

/// A batch of feature maps, `data[c, (n * h + y) * w + x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Maps<T> {
    pub data: Array2<T>,
    pub n: usize,
    pub h: usize,
    pub w: usize,
}

impl<T: Scalar> Maps<T> {
    pub fn new(data: Array2<T>, n: usize, h: usize, w: usize) -> Result<Self> {
        if data.ncols() != n * h * w {
            return Err(Error::dims(format!(
                "maps with {} columns cannot hold {n} x {h} x {w}",
                data.ncols()
            )));
        }
        Ok(Self { data, n, h, w })
    }

    pub fn channels(&self) -> usize {
        self.data.nrows()
    }

    /// From sample-major planes: `samples[n]` is `[C, H, W]` flattened.
    pub fn from_samples(samples: &[&[T]], channels: usize, h: usize, w: usize) -> Result<Self> {
        let plane = h * w;
        let n = samples.len();
        let mut data = Array2::zeros((channels, n * plane));
        for (i, s) in samples.iter().enumerate() {
            if s.len() != channels * plane {
                return Err(Error::dims(format!(
                    "sample of {} values, expected {channels} x {h} x {w}",
                    s.len()
                )));
            }
            for ch in 0..channels {
                let src = &s[ch * plane..(ch + 1) * plane];
                data.row_mut(ch)
                    .slice_mut(ndarray::s![i * plane..(i + 1) * plane])
                    .iter_mut()
                    .zip(src)
                    .for_each(|(d, &v)| *d = v);
            }
        }
        Self::new(data, n, h, w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    /// `[out, in]`.
    pub weight: Param<T>,
    /// `[1, out]`.
    pub bias: Param<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn new<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Self {
            weight: Param::new(he_uniform(outputs, inputs, inputs, rng)),
            bias: Param::new(Array2::zeros((1, outputs))),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.value.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.value.nrows()
    }

    /// `x` is `[N, in]`.
    pub fn forward(&self, x: &Array2<T>) -> Result<Array2<T>> {
        if x.ncols() != self.inputs() {
            return Err(Error::dims(format!(
                "linear layer takes {} inputs, got {}",
                self.inputs(),
                x.ncols()
            )));
        }
        Ok(x.dot(&self.weight.value.t()) + &self.bias.value)
    }

    /// Accumulates parameter gradients; returns the input gradient.
    pub fn backward(&mut self, x: &Array2<T>, dy: &Array2<T>) -> Array2<T> {
        self.weight.grad += &dy.t().dot(x);
        self.bias.grad += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        dy.dot(&self.weight.value)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// 3x3 convolution, stride 1, zero padding 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv3x3<T> {
    /// `[out, in * 9]`, columns ordered `(in, ky, kx)`.
    pub weight: Param<T>,
    /// `[out, 1]`.
    pub bias: Param<T>,
}

pub struct ConvCache<T> {
    col: Array2<T>,
    n: usize,
    h: usize,
    w: usize,
}

fn im2col<T: Scalar>(x: &Maps<T>) -> Array2<T> {
    let (cin, n, h, w) = (x.channels(), x.n, x.h, x.w);
    let plane = h * w;
    let mut col = Array2::zeros((cin * 9, n * plane));
    for ch in 0..cin {
        let src = x.data.row(ch);
        let src = src.as_slice().expect("standard layout");
        for ky in 0..3 {
            for kx in 0..3 {
                let mut dst = col.row_mut(ch * 9 + ky * 3 + kx);
                let dst = dst.as_slice_mut().expect("standard layout");
                for s in 0..n {
                    for y in 0..h {
                        let sy = y + ky;
                        if sy < 1 || sy > h {
                            continue;
                        }
                        let src_row = &src[s * plane + (sy - 1) * w..s * plane + sy * w];
                        let dst_row = &mut dst[s * plane + y * w..s * plane + (y + 1) * w];
                        // Output x reads input x + kx - 1.
                        let (x_lo, x_hi) = (1usize.saturating_sub(kx), (w + 1 - kx).min(w));
                        for xo in x_lo..x_hi {
                            dst_row[xo] = src_row[xo + kx - 1];
                        }
                    }
                }
            }
        }
    }
    col
}

fn col2im<T: Scalar>(col: &Array2<T>, cin: usize, n: usize, h: usize, w: usize) -> Array2<T> {
    let plane = h * w;
    let mut out = Array2::zeros((cin, n * plane));
    for ch in 0..cin {
        let mut dst = out.row_mut(ch);
        let dst = dst.as_slice_mut().expect("standard layout");
        for ky in 0..3 {
            for kx in 0..3 {
                let src = col.row(ch * 9 + ky * 3 + kx);
                let src = src.as_slice().expect("standard layout");
                for s in 0..n {
                    for y in 0..h {
                        let sy = y + ky;
                        if sy < 1 || sy > h {
                            continue;
                        }
                        let src_row = &src[s * plane + y * w..s * plane + (y + 1) * w];
                        let dst_row = &mut dst[s * plane + (sy - 1) * w..s * plane + sy * w];
                        let (x_lo, x_hi) = (1usize.saturating_sub(kx), (w + 1 - kx).min(w));
                        for xo in x_lo..x_hi {
                            dst_row[xo + kx - 1] += src_row[xo];
                        }
                    }
                }
            }
        }
    }
    out
}

impl<T: Scalar> Conv3x3<T> {
    pub fn new<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Self {
            weight: Param::new(he_uniform(outputs, inputs * 9, inputs * 9, rng)),
            bias: Param::new(Array2::zeros((outputs, 1))),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.value.ncols() / 9
    }

    pub fn outputs(&self) -> usize {
        self.weight.value.nrows()
    }

    pub fn forward(&self, x: &Maps<T>) -> Result<(Maps<T>, ConvCache<T>)> {
        if x.channels() != self.inputs() {
            return Err(Error::dims(format!(
                "convolution takes {} channels, got {}",
                self.inputs(),
                x.channels()
            )));
        }
        let col = im2col(x);
        let y = self.weight.value.dot(&col) + &self.bias.value;
        let out = Maps::new(y, x.n, x.h, x.w)?;
        Ok((
            out,
            ConvCache {
                col,
                n: x.n,
                h: x.h,
                w: x.w,
            },
        ))
    }

    /// Returns the input gradient only when `input_grad` is set.
    pub fn backward(&mut self, cache: &ConvCache<T>, dy: &Array2<T>, input_grad: bool) -> Option<Array2<T>> {
        self.weight.grad += &dy.dot(&cache.col.t());
        self.bias.grad += &dy.sum_axis(Axis(1)).insert_axis(Axis(1));
        input_grad.then(|| {
            let dcol = self.weight.value.t().dot(dy);
            col2im(&dcol, self.inputs(), cache.n, cache.h, cache.w)
        })
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Per-channel batch normalisation over rows of a channel-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T> {
    /// `[C, 1]`.
    pub gamma: Param<T>,
    pub beta: Param<T>,
    /// `[C, 1]`, like the parameters.
    pub running_mean: Array2<T>,
    pub running_var: Array2<T>,
    pub momentum: T,
    pub eps: T,
}

pub struct BnCache<T> {
    xhat: Array2<T>,
    inv_std: Array1<T>,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::new(Array2::ones((channels, 1))),
            beta: Param::new(Array2::zeros((channels, 1))),
            running_mean: Array2::zeros((channels, 1)),
            running_var: Array2::ones((channels, 1)),
            momentum: c(0.1),
            eps: c(1e-5),
        }
    }

    /// Batch statistics; updates the running estimates.
    pub fn forward_train(&mut self, x: &Array2<T>) -> (Array2<T>, BnCache<T>) {
        let (chans, cols) = x.dim();
        let m = c::<T>(cols as f64);
        let k = self.momentum;
        let mut y = Array2::zeros((chans, cols));
        let mut xhat = Array2::zeros((chans, cols));
        let mut inv_std = Array1::zeros(chans);
        for ch in 0..chans {
            let row = x.row(ch);
            let row = row.as_slice().expect("standard layout");
            let mean = row.iter().fold(T::zero(), |a, &v| a + v) / m;
            let var = row.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean)) / m;
            let is = T::one() / (var + self.eps).sqrt();
            let (g, b) = (self.gamma.value[[ch, 0]], self.beta.value[[ch, 0]]);
            let mut xh = xhat.row_mut(ch);
            let xh = xh.as_slice_mut().expect("standard layout");
            let mut yr = y.row_mut(ch);
            let yr = yr.as_slice_mut().expect("standard layout");
            for ((o, h), &v) in yr.iter_mut().zip(xh.iter_mut()).zip(row) {
                *h = (v - mean) * is;
                *o = g * *h + b;
            }
            inv_std[ch] = is;
            self.running_mean[[ch, 0]] = self.running_mean[[ch, 0]] * (T::one() - k) + mean * k;
            self.running_var[[ch, 0]] = self.running_var[[ch, 0]] * (T::one() - k) + var * k;
        }
        (y, BnCache { xhat, inv_std })
    }

    pub fn forward_eval(&self, x: &Array2<T>) -> Array2<T> {
        let mut y = x.clone();
        for (ch, mut row) in y.rows_mut().into_iter().enumerate() {
            let scale = self.gamma.value[[ch, 0]] / (self.running_var[[ch, 0]] + self.eps).sqrt();
            let shift = self.beta.value[[ch, 0]] - self.running_mean[[ch, 0]] * scale;
            row.mapv_inplace(|v| v * scale + shift);
        }
        y
    }

    pub fn backward(&mut self, cache: &BnCache<T>, dy: &Array2<T>) -> Array2<T> {
        let (chans, cols) = dy.dim();
        let m = c::<T>(cols as f64);
        let mut dx = Array2::zeros((chans, cols));
        for ch in 0..chans {
            let d = dy.row(ch);
            let d = d.as_slice().expect("standard layout");
            let xh = cache.xhat.row(ch);
            let xh = xh.as_slice().expect("standard layout");
            let (mut sum, mut dot) = (T::zero(), T::zero());
            for (&a, &h) in d.iter().zip(xh) {
                sum += a;
                dot += a * h;
            }
            self.gamma.grad[[ch, 0]] += dot;
            self.beta.grad[[ch, 0]] += sum;
            let g = self.gamma.value[[ch, 0]];
            // dxhat = g * dy, so its sums are g * sum and g * dot.
            let scale = g * cache.inv_std[ch] / m;
            let mut out = dx.row_mut(ch);
            let out = out.as_slice_mut().expect("standard layout");
            for ((o, &a), &h) in out.iter_mut().zip(d).zip(xh) {
                *o = scale * (a * m - sum - h * dot);
            }
        }
        dx
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.gamma, &mut self.beta]
    }
}

pub fn relu<T: Scalar>(x: &Array2<T>) -> Array2<T> {
    x.mapv(|v| v.max(T::zero()))
}

/// Gradient through a ReLU, given the ReLU's output.
pub fn relu_backward<T: Scalar>(y: &Array2<T>, dy: &Array2<T>) -> Array2<T> {
    ndarray::Zip::from(y)
        .and(dy)
        .map_collect(|&y, &d| if y > T::zero() { d } else { T::zero() })
}

/// 2x2 max pooling with stride 2; odd trailing rows or columns are dropped.
pub fn max_pool<T: Scalar>(x: &Maps<T>) -> (Maps<T>, Vec<u32>) {
    let (oh, ow) = (x.h / 2, x.w / 2);
    let (plane, oplane) = (x.h * x.w, oh * ow);
    let chans = x.channels();
    let mut out = Array2::zeros((chans, x.n * oplane));
    let mut arg = vec![0u32; chans * x.n * oplane];
    for ch in 0..chans {
        let src = x.data.row(ch);
        let src = src.as_slice().expect("standard layout");
        for s in 0..x.n {
            for y in 0..oh {
                for xo in 0..ow {
                    let base = s * plane + 2 * y * x.w + 2 * xo;
                    let cand = [base, base + 1, base + x.w, base + x.w + 1];
                    let mut best = cand[0];
                    for &i in &cand[1..] {
                        if src[i] > src[best] {
                            best = i;
                        }
                    }
                    let o = s * oplane + y * ow + xo;
                    out[[ch, o]] = src[best];
                    arg[ch * x.n * oplane + o] = best as u32;
                }
            }
        }
    }
    (
        Maps {
            data: out,
            n: x.n,
            h: oh,
            w: ow,
        },
        arg,
    )
}

pub fn max_pool_backward<T: Scalar>(arg: &[u32], dy: &Array2<T>, input_cols: usize) -> Array2<T> {
    let (chans, ocols) = dy.dim();
    let mut dx = Array2::zeros((chans, input_cols));
    for ch in 0..chans {
        for o in 0..ocols {
            let i = arg[ch * ocols + o] as usize;
            dx[[ch, i]] += dy[[ch, o]];
        }
    }
    dx
}

/// Global average pool to `[N, C]`.
pub fn global_avg_pool<T: Scalar>(x: &Maps<T>) -> Array2<T> {
    let plane = x.h * x.w;
    let inv = c::<T>(1.0 / plane as f64);
    Array2::from_shape_fn((x.n, x.channels()), |(s, ch)| {
        x.data
            .row(ch)
            .slice(ndarray::s![s * plane..(s + 1) * plane])
            .iter()
            .fold(T::zero(), |a, &v| a + v)
            * inv
    })
}

pub fn global_avg_pool_backward<T: Scalar>(dy: &Array2<T>, h: usize, w: usize) -> Array2<T> {
    let plane = h * w;
    let (n, chans) = dy.dim();
    let inv = c::<T>(1.0 / plane as f64);
    Array2::from_shape_fn((chans, n * plane), |(ch, col)| dy[[col / plane, ch]] * inv)
}

/// Inverted dropout mask: kept units are scaled by `1 / (1 - p)`.
pub fn dropout_mask<T: Scalar, R: Rng>(shape: (usize, usize), p: f64, rng: &mut R) -> Array2<T> {
    if p <= 0.0 {
        return Array2::ones(shape);
    }
    let keep = c::<T>(1.0 / (1.0 - p));
    Array2::from_shape_fn(shape, |_| if rng.random::<f64>() < p { T::zero() } else { keep })
}

/// Row-wise softmax.
pub fn softmax<T: Scalar>(logits: &Array2<T>) -> Array2<T> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(T::neg_infinity(), |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Mean cross-entropy and its gradient with respect to the logits.
pub fn softmax_cross_entropy<T: Scalar>(logits: &Array2<T>, labels: &[usize]) -> Result<(T, Array2<T>)> {
    if labels.len() != logits.nrows() {
        return Err(Error::dims("one label per logit row"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= logits.ncols()) {
        return Err(Error::dims(format!("label {bad} outside {} classes", logits.ncols())));
    }
    let n = c::<T>(labels.len() as f64);
    let mut p = softmax(logits);
    let mut loss = T::zero();
    for (i, &l) in labels.iter().enumerate() {
        loss = loss - p[[i, l]].max(c(1e-30)).ln();
        p[[i, l]] = p[[i, l]] - T::one();
    }
    p.mapv_inplace(|v| v / n);
    Ok((loss / n, p))
}

/// Serialisable layer shape, recorded in checkpoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorShape {
    pub name: String,
    pub shape: [usize; 2],
}
