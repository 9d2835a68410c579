//! A small multi-scale fully convolutional pixel labeler.
//!
//! Every scale branch runs the same weights: 3×3 conv (3→16), ReLU, 3×3
//! atrous conv at rate 2 (16→16), ReLU, 1×1 conv (16→C). All convolutions
//! are stride 1 with size-preserving zero padding. Branch outputs are
//! resized back to the input resolution and fused by a per-pixel, per-class
//! maximum.

use std::fmt::Debug;
use std::fs;
use std::iter::Sum;
use std::ops::AddAssign;
use std::path::Path;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::grid::{bilinear_taps, Grid, LabelMap, RgbImage, ScoreMap, IGNORE};
use crate::labeling::softmax_into;

/// Floating-point type the network computes in.
pub trait Real: Float + Sum + AddAssign + Debug + Default + Send + Sync + 'static {}
impl Real for f32 {}
impl Real for f64 {}

pub const HIDDEN: usize = 16;
pub const ATROUS_RATE: usize = 2;
pub const DEFAULT_SCALES: [f64; 3] = [0.5, 0.75, 1.0];
/// Smallest input side the network accepts.
pub const MIN_INPUT: usize = 8;
/// Output stride of the full-size labeler this toy net stands in for. The
/// summed objective counts one term per `stride × stride` block.
pub const REFERENCE_STRIDE: usize = 8;

fn cast<T: Real>(v: f64) -> T {
    T::from(v).expect("representable")
}

/// Channel-major activations `(channel, row, col)`.
#[derive(Debug, Clone, PartialEq)]
struct Tensor<T> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Tensor {
            channels,
            height,
            width,
            data: vec![T::zero(); channels * height * width],
        }
    }

    fn plane(&self, c: usize) -> &[T] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    fn from_image(image: &RgbImage) -> Self {
        let (h, w) = (image.height(), image.width());
        let mut t = Self::zeros(3, h, w);
        let px = image.as_slice();
        for i in 0..h * w {
            for c in 0..3 {
                t.data[c * h * w + i] = cast::<T>(px[i * 3 + c] as f64 / 255.0 - 0.5);
            }
        }
        t
    }

    fn resize(&self, new_h: usize, new_w: usize) -> Self {
        if new_h == self.height && new_w == self.width {
            return self.clone();
        }
        let rows = bilinear_taps(self.height, new_h);
        let cols = bilinear_taps(self.width, new_w);
        let mut out = Self::zeros(self.channels, new_h, new_w);
        for c in 0..self.channels {
            let src = self.plane(c);
            let dst = &mut out.data[c * new_h * new_w..(c + 1) * new_h * new_w];
            for (y, rt) in rows.iter().enumerate() {
                let fy = cast::<T>(rt.frac);
                for (x, ct) in cols.iter().enumerate() {
                    let fx = cast::<T>(ct.frac);
                    let a = src[rt.lo * self.width + ct.lo];
                    let b = src[rt.lo * self.width + ct.hi];
                    let d = src[rt.hi * self.width + ct.lo];
                    let e = src[rt.hi * self.width + ct.hi];
                    let top = a + fx * (b - a);
                    let bottom = d + fx * (e - d);
                    dst[y * new_w + x] = top + fy * (bottom - top);
                }
            }
        }
        out
    }

    /// Adjoint of [`Tensor::resize`] from `(in_h, in_w)` to this tensor's size.
    fn resize_adjoint(&self, in_h: usize, in_w: usize) -> Self {
        if in_h == self.height && in_w == self.width {
            return self.clone();
        }
        let rows = bilinear_taps(in_h, self.height);
        let cols = bilinear_taps(in_w, self.width);
        let mut out = Self::zeros(self.channels, in_h, in_w);
        for c in 0..self.channels {
            let g = self.plane(c);
            let dst = &mut out.data[c * in_h * in_w..(c + 1) * in_h * in_w];
            for (y, rt) in rows.iter().enumerate() {
                let fy = cast::<T>(rt.frac);
                for (x, ct) in cols.iter().enumerate() {
                    let fx = cast::<T>(ct.frac);
                    let v = g[y * self.width + x];
                    let one = T::one();
                    dst[rt.lo * in_w + ct.lo] += v * (one - fx) * (one - fy);
                    dst[rt.lo * in_w + ct.hi] += v * fx * (one - fy);
                    dst[rt.hi * in_w + ct.lo] += v * (one - fx) * fy;
                    dst[rt.hi * in_w + ct.hi] += v * fx * fy;
                }
            }
        }
        out
    }

    fn relu(&mut self) {
        for v in &mut self.data {
            if *v < T::zero() {
                *v = T::zero();
            }
        }
    }
}

/// Square stride-1 convolution with "same" zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub dilation: usize,
    /// `(out, in, ky, kx)` order.
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Conv<T> {
    fn zeros(in_channels: usize, out_channels: usize, kernel: usize, dilation: usize) -> Self {
        Conv {
            in_channels,
            out_channels,
            kernel,
            dilation,
            weights: vec![T::zero(); out_channels * in_channels * kernel * kernel],
            bias: vec![T::zero(); out_channels],
        }
    }

    fn pad(&self) -> isize {
        (self.dilation * (self.kernel - 1) / 2) as isize
    }

    /// Calls `f(ky, kx, dy, dx)` for every kernel tap with its input offset.
    fn taps(&self, mut f: impl FnMut(usize, usize, isize, isize)) {
        let pad = self.pad();
        for ky in 0..self.kernel {
            for kx in 0..self.kernel {
                let dy = (ky * self.dilation) as isize - pad;
                let dx = (kx * self.dilation) as isize - pad;
                f(ky, kx, dy, dx);
            }
        }
    }

    fn weight_index(&self, o: usize, i: usize, ky: usize, kx: usize) -> usize {
        ((o * self.in_channels + i) * self.kernel + ky) * self.kernel + kx
    }

    fn forward(&self, input: &Tensor<T>) -> Tensor<T> {
        let (h, w) = (input.height, input.width);
        let n = h * w;
        let mut out = Tensor::zeros(self.out_channels, h, w);
        for o in 0..self.out_channels {
            let dst = &mut out.data[o * n..(o + 1) * n];
            dst.fill(self.bias[o]);
            for i in 0..self.in_channels {
                let src = input.plane(i);
                self.taps(|ky, kx, dy, dx| {
                    let wv = self.weights[self.weight_index(o, i, ky, kx)];
                    let (x_lo, x_hi) = valid_range(w, dx);
                    for y in valid_rows(h, dy) {
                        let sy = (y as isize + dy) as usize;
                        let d = &mut dst[y * w + x_lo..y * w + x_hi];
                        let s = &src[sy * w + (x_lo as isize + dx) as usize..];
                        for (dv, &sv) in d.iter_mut().zip(s) {
                            *dv += wv * sv;
                        }
                    }
                });
            }
        }
        out
    }

    /// Accumulates parameter gradients into `grad` and returns the gradient
    /// with respect to the input when `want_input` is set.
    fn backward(
        &self,
        input: &Tensor<T>,
        grad_out: &Tensor<T>,
        grad: &mut Conv<T>,
        want_input: bool,
    ) -> Option<Tensor<T>> {
        let (h, w) = (input.height, input.width);
        let n = h * w;
        let mut grad_in = want_input.then(|| Tensor::zeros(self.in_channels, h, w));
        for o in 0..self.out_channels {
            let go = grad_out.plane(o);
            grad.bias[o] += go.iter().copied().sum();
            for i in 0..self.in_channels {
                let src = input.plane(i);
                self.taps(|ky, kx, dy, dx| {
                    let wi = self.weight_index(o, i, ky, kx);
                    let wv = self.weights[wi];
                    let (x_lo, x_hi) = valid_range(w, dx);
                    let mut acc = T::zero();
                    for y in valid_rows(h, dy) {
                        let sy = (y as isize + dy) as usize;
                        let g = &go[y * w + x_lo..y * w + x_hi];
                        let s0 = sy * w + (x_lo as isize + dx) as usize;
                        let s = &src[s0..s0 + g.len()];
                        for (&gv, &sv) in g.iter().zip(s) {
                            acc += gv * sv;
                        }
                        if let Some(gi) = grad_in.as_mut() {
                            let d = &mut gi.data[i * n + s0..i * n + s0 + g.len()];
                            for (dv, &gv) in d.iter_mut().zip(g) {
                                *dv += wv * gv;
                            }
                        }
                    }
                    grad.weights[wi] += acc;
                });
            }
        }
        grad_in
    }

    fn params(&self) -> impl Iterator<Item = &T> {
        self.weights.iter().chain(&self.bias)
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }
}

/// Output columns `[lo, hi)` whose input column `x + dx` is inside `[0, w)`.
fn valid_range(w: usize, dx: isize) -> (usize, usize) {
    let lo = (-dx).max(0) as usize;
    let hi = (w as isize - dx).clamp(0, w as isize) as usize;
    (lo.min(hi), hi)
}

fn valid_rows(h: usize, dy: isize) -> std::ops::Range<usize> {
    let (lo, hi) = valid_range(h, dy);
    lo..hi
}

/// Activations of one branch kept for backpropagation.
struct BranchCache<T> {
    input: Tensor<T>,
    hidden1: Tensor<T>,
    hidden2: Tensor<T>,
    /// Logits at branch resolution.
    logits: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyNet<T> {
    /// Input conv, atrous conv, classifier.
    pub layers: [Conv<T>; 3],
    pub scales: Vec<f64>,
}

/// Parameter gradients, shaped like the network's layers.
pub type Gradients<T> = [Conv<T>; 3];

impl<T: Real> ToyNet<T> {
    /// All parameters zero.
    pub fn zeros(classes: usize, scales: &[f64]) -> Result<Self> {
        if classes < 2 {
            return Err(Error::Invalid(format!(
                "network needs at least 2 classes, got {classes}"
            )));
        }
        if scales.is_empty() || scales.iter().any(|&s| !(s > 0.0 && s <= 1.0)) {
            return Err(Error::Invalid(format!("scales must lie in (0, 1], got {scales:?}")));
        }
        Ok(ToyNet {
            layers: [
                Conv::zeros(3, HIDDEN, 3, 1),
                Conv::zeros(HIDDEN, HIDDEN, 3, ATROUS_RATE),
                Conv::zeros(HIDDEN, classes, 1, 1),
            ],
            scales: scales.to_vec(),
        })
    }

    /// He-normal hidden layers and a small-variance classifier so initial
    /// predictions are close to uniform. Biases start at zero.
    pub fn init(classes: usize, scales: &[f64], seed: u64) -> Result<Self> {
        let mut net = Self::zeros(classes, scales)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (k, layer) in net.layers.iter_mut().enumerate() {
            let fan_in = (layer.in_channels * layer.kernel * layer.kernel) as f64;
            let std = if k == 2 { 0.1 / fan_in.sqrt() } else { (2.0 / fan_in).sqrt() };
            let dist = Normal::new(0.0, std).expect("valid std");
            for w in &mut layer.weights {
                *w = cast(dist.sample(&mut rng));
            }
        }
        Ok(net)
    }

    pub fn classes(&self) -> usize {
        self.layers[2].out_channels
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &T> {
        self.layers.iter().flat_map(|l| l.params())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.layers.iter_mut().flat_map(|l| l.params_mut())
    }

    fn zero_gradients(&self) -> Gradients<T> {
        self.layers
            .clone()
            .map(|l| Conv::zeros(l.in_channels, l.out_channels, l.kernel, l.dilation))
    }

    fn branch_size(&self, scale: f64, h: usize, w: usize) -> (usize, usize) {
        let side = |n: usize| ((n as f64 * scale).round() as usize).max(1);
        (side(h), side(w))
    }

    fn run_branch(&self, input: Tensor<T>) -> BranchCache<T> {
        let mut hidden1 = self.layers[0].forward(&input);
        hidden1.relu();
        let mut hidden2 = self.layers[1].forward(&hidden1);
        hidden2.relu();
        let logits = self.layers[2].forward(&hidden2);
        BranchCache {
            input,
            hidden1,
            hidden2,
            logits,
        }
    }

    fn check_input(&self, image: &RgbImage) -> Result<()> {
        if image.height() < MIN_INPUT || image.width() < MIN_INPUT {
            return Err(Error::Dimension(format!(
                "network input must be at least {MIN_INPUT}x{MIN_INPUT}, got {}x{}",
                image.height(),
                image.width()
            )));
        }
        Ok(())
    }

    /// Per-scale branch caches and the full-resolution logits of each branch.
    fn forward_all(&self, image: &RgbImage) -> (Vec<BranchCache<T>>, Vec<Tensor<T>>) {
        let (h, w) = (image.height(), image.width());
        let full = Tensor::<T>::from_image(image);
        let mut caches = Vec::with_capacity(self.scales.len());
        let mut upsampled = Vec::with_capacity(self.scales.len());
        for &s in &self.scales {
            let (bh, bw) = self.branch_size(s, h, w);
            let cache = self.run_branch(full.resize(bh, bw));
            upsampled.push(cache.logits.resize(h, w));
            caches.push(cache);
        }
        (caches, upsampled)
    }

    /// One full-resolution score map per scale.
    pub fn forward(&self, image: &RgbImage) -> Result<Vec<ScoreMap>> {
        self.check_input(image)?;
        let (_, upsampled) = self.forward_all(image);
        upsampled.iter().map(to_score_map).collect()
    }

    /// Scores fused across scales by element-wise maximum.
    pub fn fused_scores(&self, image: &RgbImage) -> Result<ScoreMap> {
        crate::labeling::max_fuse(&self.forward(image)?)
    }

    /// Mean cross-entropy of the softmax of the max-fused scores over the
    /// non-ignored pixels, and its gradient with respect to every parameter.
    pub fn loss_and_gradients(&self, image: &RgbImage, gt: &LabelMap) -> Result<(f64, Gradients<T>)> {
        self.check_input(image)?;
        let (h, w) = (image.height(), image.width());
        if gt.height() != h || gt.width() != w {
            return Err(Error::Dimension(format!(
                "image is {h}x{w} but ground truth is {}x{}",
                gt.height(),
                gt.width()
            )));
        }
        let classes = self.classes();
        gt.validate(classes)?;
        let supervised = gt.count_annotated();
        if supervised == 0 {
            return Err(Error::NoSupervision);
        }
        let (caches, upsampled) = self.forward_all(image);
        let n = h * w;
        let inv_k = 1.0 / supervised as f64;

        let mut grads_full: Vec<Tensor<T>> = (0..self.scales.len())
            .map(|_| Tensor::zeros(classes, h, w))
            .collect();
        let mut fused = vec![0.0f64; classes];
        let mut winner = vec![0usize; classes];
        let mut prob = vec![0.0f64; classes];
        let mut loss = 0.0f64;
        for (p, &label) in gt.as_slice().iter().enumerate() {
            if label == IGNORE {
                continue;
            }
            for c in 0..classes {
                // lowest scale index wins ties
                let (mut best, mut arg) = (upsampled[0].data[c * n + p], 0);
                for (s, up) in upsampled.iter().enumerate().skip(1) {
                    let v = up.data[c * n + p];
                    if v > best {
                        best = v;
                        arg = s;
                    }
                }
                fused[c] = best.to_f64().unwrap();
                winner[c] = arg;
            }
            softmax_into(&fused, &mut prob);
            loss -= prob[label as usize].ln();
            for c in 0..classes {
                let target = if c == label as usize { 1.0 } else { 0.0 };
                grads_full[winner[c]].data[c * n + p] = cast((prob[c] - target) * inv_k);
            }
        }
        loss *= inv_k;

        let mut grads = self.zero_gradients();
        for (cache, g_full) in caches.iter().zip(&grads_full) {
            let g_logits = g_full.resize_adjoint(cache.logits.height, cache.logits.width);
            let mut g2 = self.layers[2]
                .backward(&cache.hidden2, &g_logits, &mut grads[2], true)
                .unwrap();
            relu_mask(&mut g2, &cache.hidden2);
            let mut g1 = self.layers[1]
                .backward(&cache.hidden1, &g2, &mut grads[1], true)
                .unwrap();
            relu_mask(&mut g1, &cache.hidden1);
            self.layers[0].backward(&cache.input, &g1, &mut grads[0], false);
        }
        Ok((loss, grads))
    }

    /// Plain loss without gradients.
    pub fn loss(&self, image: &RgbImage, gt: &LabelMap) -> Result<f64> {
        let fused = self.fused_scores(image)?;
        cross_entropy(&fused, gt)
    }

    pub fn to_f32(&self) -> ToyNet<f32> {
        self.convert()
    }

    pub fn to_f64(&self) -> ToyNet<f64> {
        self.convert()
    }

    fn convert<U: Real>(&self) -> ToyNet<U> {
        let conv = |l: &Conv<T>| Conv {
            in_channels: l.in_channels,
            out_channels: l.out_channels,
            kernel: l.kernel,
            dilation: l.dilation,
            weights: l.weights.iter().map(|v| cast(v.to_f64().unwrap())).collect(),
            bias: l.bias.iter().map(|v| cast(v.to_f64().unwrap())).collect(),
        };
        ToyNet {
            layers: [conv(&self.layers[0]), conv(&self.layers[1]), conv(&self.layers[2])],
            scales: self.scales.clone(),
        }
    }
}

/// Mean cross-entropy of `softmax(scores)` against `gt` over annotated pixels.
pub fn cross_entropy(scores: &ScoreMap, gt: &LabelMap) -> Result<f64> {
    if gt.height() != scores.height() || gt.width() != scores.width() {
        return Err(Error::Dimension("scores and labels differ in size".into()));
    }
    gt.validate(scores.classes())?;
    let mut prob = vec![0.0; scores.classes()];
    let (mut sum, mut k) = (0.0, 0usize);
    for (p, &label) in gt.as_slice().iter().enumerate() {
        if label == IGNORE {
            continue;
        }
        let px = &scores.as_slice()[p * scores.classes()..(p + 1) * scores.classes()];
        softmax_into(px, &mut prob);
        sum -= prob[label as usize].ln();
        k += 1;
    }
    if k == 0 {
        return Err(Error::NoSupervision);
    }
    Ok(sum / k as f64)
}

fn relu_mask<T: Real>(grad: &mut Tensor<T>, activation: &Tensor<T>) {
    for (g, &a) in grad.data.iter_mut().zip(&activation.data) {
        if a <= T::zero() {
            *g = T::zero();
        }
    }
}

fn to_score_map<T: Real>(t: &Tensor<T>) -> Result<ScoreMap> {
    let n = t.height * t.width;
    ScoreMap::from_fn(t.height, t.width, t.channels, |r, c, k| {
        t.data[k * n + r * t.width + c].to_f64().unwrap()
    })
}

/// Learning rate after `iter` of `max_iter` steps under the poly policy.
pub fn poly_lr(iter: usize, cfg: &TrainConfig) -> Result<f64> {
    if iter > cfg.max_iter {
        return Err(Error::Invalid(format!(
            "iteration {iter} beyond max_iter {}",
            cfg.max_iter
        )));
    }
    if cfg.max_iter == 0 {
        return Ok(cfg.base_lr);
    }
    Ok(cfg.base_lr * (1.0 - iter as f64 / cfg.max_iter as f64).powf(cfg.power))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub power: f64,
    pub max_iter: usize,
    pub batch_size: usize,
    pub crop: usize,
    pub mirror_prob: f64,
    pub momentum: f64,
    /// Objective the SGD step descends. The reported loss is always the mean.
    pub reduction: Reduction,
    pub seed: u64,
    /// Interval between logged loss averages.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            base_lr: 0.001,
            power: 0.9,
            max_iter: 2000,
            batch_size: 1,
            crop: 48,
            mirror_prob: 0.5,
            momentum: 0.9,
            reduction: Reduction::Sum,
            seed: 0,
            log_every: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, image_h: usize, image_w: usize) -> Result<()> {
        if !(self.base_lr > 0.0) {
            return Err(Error::Invalid(format!("base lr must be positive, got {}", self.base_lr)));
        }
        if !(0.0..=1.0).contains(&self.mirror_prob) {
            return Err(Error::Invalid(format!(
                "mirror probability {} outside [0, 1]",
                self.mirror_prob
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Invalid(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if self.batch_size != 1 {
            return Err(Error::Invalid("only batch size 1 is supported".into()));
        }
        if self.crop == 0 || self.crop > image_h || self.crop > image_w {
            return Err(Error::Invalid(format!(
                "crop {} does not fit {image_h}x{image_w} images",
                self.crop
            )));
        }
        Ok(())
    }
}

/// How per-position cross-entropy terms combine into the training objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    /// Sum over the positions of a stride-`REFERENCE_STRIDE` output map
    /// covering the supervised pixels: the step scales with crop area.
    Sum,
    /// Mean over supervised positions.
    Mean,
}

impl Reduction {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(Reduction::Sum),
            "mean" => Ok(Reduction::Mean),
            _ => Err(Error::Invalid(format!("unknown loss reduction {s:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Reduction::Sum => "sum",
            Reduction::Mean => "mean",
        }
    }
}

/// One training pair held in memory.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub image: RgbImage,
    pub labels: LabelMap,
}

/// Augmentation choice for one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Augmentation {
    pub index: usize,
    pub mirror: bool,
    pub row: usize,
    pub col: usize,
}

/// Draws the sample index, mirror flag and crop origin for one iteration.
pub fn sample_augmentation(
    rng: &mut impl Rng,
    samples: usize,
    height: usize,
    width: usize,
    cfg: &TrainConfig,
) -> Augmentation {
    Augmentation {
        index: rng.random_range(0..samples),
        mirror: rng.random_bool(cfg.mirror_prob),
        row: rng.random_range(0..=height - cfg.crop),
        col: rng.random_range(0..=width - cfg.crop),
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    /// Loss of every iteration.
    pub losses: Vec<f64>,
    /// `(iteration, mean loss over the preceding interval)`.
    pub logged: Vec<(usize, f64)>,
}

/// SGD with momentum under the poly learning-rate policy. Each iteration
/// takes one sample, mirrors it with probability `mirror_prob`, crops a
/// random `crop × crop` patch and steps on its loss.
pub fn train<T: Real>(
    net: &mut ToyNet<T>,
    samples: &[TrainSample],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Invalid("empty training set".into()))?;
    let (h, w) = (first.image.height(), first.image.width());
    cfg.validate(h, w)?;
    if let Some(i) = samples
        .iter()
        .position(|s| s.image.height() != h || s.image.width() != w || s.labels.height() != h || s.labels.width() != w)
    {
        return Err(Error::Dimension(format!("training sample {i} differs in size from sample 0")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut velocity = vec![T::zero(); net.num_params()];
    let momentum: T = cast(cfg.momentum);
    let mut report = TrainReport::default();
    for iter in 0..cfg.max_iter {
        let aug = sample_augmentation(&mut rng, samples.len(), h, w, cfg);
        let s = &samples[aug.index];
        let bbox = crate::grid::BoundingBox {
            x0: aug.col,
            y0: aug.row,
            x1: aug.col + cfg.crop,
            y1: aug.row + cfg.crop,
        };
        let (mut image, mut labels) = (s.image.crop(&bbox)?, s.labels.crop(&bbox)?);
        if aug.mirror {
            image = image.mirror_horizontal();
            labels = labels.mirror_horizontal();
        }
        let supervised = labels.count_annotated();
        if supervised == 0 {
            continue;
        }
        let (loss, grads) = net.loss_and_gradients(&image, &labels)?;
        if !loss.is_finite() {
            return Err(Error::Diverged(iter));
        }
        let scale = match cfg.reduction {
            Reduction::Sum => supervised as f64 / (REFERENCE_STRIDE * REFERENCE_STRIDE) as f64,
            Reduction::Mean => 1.0,
        };
        let lr: T = cast(poly_lr(iter, cfg)? * scale);
        let grad_iter = grads.iter().flat_map(|l| l.params());
        for ((p, v), &g) in net.params_mut().zip(velocity.iter_mut()).zip(grad_iter) {
            *v = momentum * *v - lr * g;
            *p += *v;
        }
        if net.params().any(|p| !p.is_finite()) {
            return Err(Error::Diverged(iter));
        }
        report.losses.push(loss);
        if cfg.log_every > 0 && (iter + 1) % cfg.log_every == 0 && report.losses.len() >= cfg.log_every {
            let window = &report.losses[report.losses.len() - cfg.log_every..];
            let mean = window.iter().sum::<f64>() / window.len() as f64;
            log::info!("iter {} loss {mean:.4}", iter + 1);
            report.logged.push((iter + 1, mean));
        }
    }
    Ok(report)
}

const CKPT_MAGIC: &[u8; 4] = b"PXCK";
const CKPT_VERSION: u8 = 1;

impl<T: Real> ToyNet<T> {
    /// `PXCK` checkpoint: magic, version byte, u32 scale count, f32 scales,
    /// u32 layer count, per layer u32 `in, out, kernel, dilation`, then the
    /// weights and biases of each layer as little-endian f32.
    pub fn checkpoint_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(CKPT_MAGIC);
        buf.push(CKPT_VERSION);
        buf.extend_from_slice(&(self.scales.len() as u32).to_le_bytes());
        for &s in &self.scales {
            buf.extend_from_slice(&(s as f32).to_le_bytes());
        }
        buf.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for l in &self.layers {
            for v in [l.in_channels, l.out_channels, l.kernel, l.dilation] {
                buf.extend_from_slice(&(v as u32).to_le_bytes());
            }
        }
        for p in self.params() {
            buf.extend_from_slice(&p.to_f32().unwrap().to_le_bytes());
        }
        buf
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(4)? != CKPT_MAGIC {
            return Err(Error::Format("not a PXCK checkpoint".into()));
        }
        let version = r.take(1)?[0];
        if version != CKPT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let n_scales = r.u32()? as usize;
        if n_scales > 64 {
            return Err(Error::Format(format!("implausible scale count {n_scales}")));
        }
        let scales: Vec<f64> = (0..n_scales).map(|_| r.f32().map(f64::from)).collect::<Result<_>>()?;
        let n_layers = r.u32()? as usize;
        if n_layers != 3 {
            return Err(Error::Format(format!("expected 3 layers, found {n_layers}")));
        }
        let mut shapes = [[0usize; 4]; 3];
        for s in &mut shapes {
            for v in s.iter_mut() {
                *v = r.u32()? as usize;
            }
        }
        let classes = shapes[2][1];
        let expect = [[3, HIDDEN, 3, 1], [HIDDEN, HIDDEN, 3, ATROUS_RATE], [HIDDEN, classes, 1, 1]];
        if shapes != expect {
            return Err(Error::Format(format!("layer shapes {shapes:?} do not match the network")));
        }
        let mut net = ToyNet::zeros(classes, &scales)
            .map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
        for p in net.params_mut() {
            *p = cast(r.f32()? as f64);
        }
        if r.at != bytes.len() {
            return Err(Error::Format("trailing bytes after checkpoint".into()));
        }
        Ok(net)
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.checkpoint_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_bytes(&bytes)
    }

    /// Loads a checkpoint and checks it was trained for `classes` classes.
    pub fn load_checkpoint_for(path: impl AsRef<Path>, classes: usize) -> Result<Self> {
        let net = Self::load_checkpoint(path)?;
        if net.classes() != classes {
            return Err(Error::Format(format!(
                "checkpoint has {} classes, expected {classes}",
                net.classes()
            )));
        }
        Ok(net)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at + n;
        if end > self.bytes.len() {
            return Err(Error::Format("truncated checkpoint".into()));
        }
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> RgbImage {
        RgbImage::new(h, w, (0..h * w * 3).map(|_| rng.random()).collect()).unwrap()
    }

    #[test]
    fn zero_net_outputs_biases() {
        let mut net = ToyNet::<f64>::zeros(4, &DEFAULT_SCALES).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let img = random_image(&mut rng, 10, 12);
        for m in net.forward(&img).unwrap() {
            assert!(m.as_slice().iter().all(|&v| v == 0.0));
        }
        net.layers[2].bias = vec![0.5, -1.0, 2.0, 0.0];
        for m in net.forward(&img).unwrap() {
            for r in 0..10 {
                for c in 0..12 {
                    assert_eq!(m.pixel(r, c), &[0.5, -1.0, 2.0, 0.0]);
                }
            }
        }
    }

    #[test]
    fn single_scale_is_plain_fcn() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = ToyNet::<f64>::init(3, &[1.0], 5).unwrap();
        let img = random_image(&mut rng, 9, 11);
        let maps = net.forward(&img).unwrap();
        assert_eq!(maps.len(), 1);
        let cache = net.run_branch(Tensor::from_image(&img));
        assert_eq!(maps[0], to_score_map(&cache.logits).unwrap());
    }

    #[test]
    fn atrous_impulse_reproduces_spaced_kernel() {
        let mut conv = Conv::<f64>::zeros(1, 1, 3, 2);
        for (i, w) in conv.weights.iter_mut().enumerate() {
            *w = (i + 1) as f64;
        }
        let mut input = Tensor::zeros(1, 9, 9);
        input.data[4 * 9 + 4] = 1.0;
        let out = conv.forward(&input);
        // out(y, x) = Σ w(ky, kx) · in(y + 2ky − 2, x + 2kx − 2)
        for y in 0..9 {
            for x in 0..9 {
                let mut expect = 0.0;
                for ky in 0..3 {
                    for kx in 0..3 {
                        let (sy, sx) = (y as isize + 2 * ky as isize - 2, x as isize + 2 * kx as isize - 2);
                        if sy == 4 && sx == 4 {
                            expect += conv.weights[ky * 3 + kx];
                        }
                    }
                }
                assert_eq!(out.data[y * 9 + x], expect, "({y},{x})");
            }
        }
        // taps two pixels apart, kernel flipped around the impulse
        assert_eq!(out.data[2 * 9 + 2], 9.0);
        assert_eq!(out.data[4 * 9 + 4], 5.0);
        assert_eq!(out.data[6 * 9 + 6], 1.0);
        assert_eq!(out.data[3 * 9 + 3], 0.0);
    }

    #[test]
    fn undersized_input_rejected() {
        let net = ToyNet::<f64>::zeros(3, &DEFAULT_SCALES).unwrap();
        let img = RgbImage::filled(7, 20, [0, 0, 0]).unwrap();
        assert!(matches!(net.forward(&img), Err(Error::Dimension(_))));
    }

    #[test]
    fn uniform_prediction_loss_is_ln_c() {
        let net = ToyNet::<f64>::zeros(4, &DEFAULT_SCALES).unwrap();
        let img = RgbImage::filled(8, 8, [10, 20, 30]).unwrap();
        let mut gt = LabelMap::filled(8, 8, 2).unwrap();
        gt.set(0, 0, IGNORE);
        let (loss, _) = net.loss_and_gradients(&img, &gt).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
        assert!((loss - 1.38629).abs() < 1e-5);
    }

    #[test]
    fn confident_correct_prediction_has_zero_loss() {
        let mut net = ToyNet::<f64>::zeros(2, &DEFAULT_SCALES).unwrap();
        net.layers[2].bias = vec![0.0, 1e4];
        let img = RgbImage::filled(8, 8, [0, 0, 0]).unwrap();
        let gt = LabelMap::filled(8, 8, 1).unwrap();
        assert_eq!(net.loss_and_gradients(&img, &gt).unwrap().0, 0.0);
    }

    #[test]
    fn all_ignored_is_an_error() {
        let net = ToyNet::<f64>::zeros(2, &DEFAULT_SCALES).unwrap();
        let img = RgbImage::filled(8, 8, [0, 0, 0]).unwrap();
        let gt = LabelMap::filled(8, 8, IGNORE).unwrap();
        assert!(matches!(net.loss_and_gradients(&img, &gt), Err(Error::NoSupervision)));
    }

    #[test]
    fn poly_schedule() {
        let cfg = TrainConfig { max_iter: 2000, ..Default::default() };
        assert_eq!(poly_lr(0, &cfg).unwrap(), 0.001);
        assert_eq!(poly_lr(2000, &cfg).unwrap(), 0.0);
        let mid = poly_lr(1000, &cfg).unwrap();
        assert!((mid - 0.001 * 0.5f64.powf(0.9)).abs() < 1e-18);
        assert!((mid - 5.3589e-4).abs() < 1e-8);
        assert!(poly_lr(2001, &cfg).is_err());
    }

    #[test]
    fn zero_iterations_leave_net_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net0 = ToyNet::<f32>::init(3, &DEFAULT_SCALES, 1).unwrap();
        let mut net = net0.clone();
        let samples = vec![TrainSample {
            image: random_image(&mut rng, 16, 16),
            labels: LabelMap::filled(16, 16, 1).unwrap(),
        }];
        let cfg = TrainConfig { max_iter: 0, crop: 12, ..Default::default() };
        let report = train(&mut net, &samples, &cfg).unwrap();
        assert!(report.losses.is_empty());
        assert_eq!(net, net0);
    }

    #[test]
    fn bad_train_config() {
        let samples = vec![TrainSample {
            image: RgbImage::filled(16, 16, [0, 0, 0]).unwrap(),
            labels: LabelMap::filled(16, 16, 1).unwrap(),
        }];
        let mut net = ToyNet::<f32>::zeros(3, &DEFAULT_SCALES).unwrap();
        for cfg in [
            TrainConfig { crop: 17, ..Default::default() },
            TrainConfig { crop: 8, mirror_prob: 1.5, ..Default::default() },
            TrainConfig { crop: 8, base_lr: 0.0, ..Default::default() },
        ] {
            assert!(train(&mut net, &samples, &cfg).is_err());
        }
        assert!(train(&mut net, &[], &TrainConfig::default()).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples = vec![TrainSample {
            image: random_image(&mut rng, 12, 12),
            labels: LabelMap::new(12, 12, (0..144).map(|i| (i % 3) as u8).collect()).unwrap(),
        }];
        let mut net = ToyNet::<f32>::init(3, &DEFAULT_SCALES, 4).unwrap();
        let cfg = TrainConfig { base_lr: 1e30, max_iter: 50, crop: 12, ..Default::default() };
        assert!(matches!(train(&mut net, &samples, &cfg), Err(Error::Diverged(_))));
    }

    #[test]
    fn resize_adjoint_is_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (h, w, nh, nw) in [(6, 6, 12, 12), (9, 12, 12, 12), (5, 7, 3, 11)] {
            let mut x = Tensor::<f64>::zeros(2, h, w);
            x.data.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
            let mut y = Tensor::<f64>::zeros(2, nh, nw);
            y.data.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
            // <R x, y> = <x, Rᵀ y>
            let lhs: f64 = x.resize(nh, nw).data.iter().zip(&y.data).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.data.iter().zip(&y.resize_adjoint(h, w).data).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn checkpoint_round_trip_and_errors() {
        let net = ToyNet::<f32>::init(5, &DEFAULT_SCALES, 9).unwrap();
        let bytes = net.checkpoint_bytes();
        assert_eq!(&bytes[..5], b"PXCK\x01");
        let back = ToyNet::<f32>::from_checkpoint_bytes(&bytes).unwrap();
        assert!(net.params().zip(back.params()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(back.scales, net.scales);
        assert!(matches!(
            ToyNet::<f32>::from_checkpoint_bytes(&bytes[..bytes.len() - 3]),
            Err(Error::Format(_))
        ));
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(ToyNet::<f32>::from_checkpoint_bytes(&wrong).is_err());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pxck");
        net.save_checkpoint(&path).unwrap();
        assert!(ToyNet::<f32>::load_checkpoint_for(&path, 5).is_ok());
        assert!(matches!(
            ToyNet::<f32>::load_checkpoint_for(&path, 8),
            Err(Error::Format(_))
        ));
    }

    proptest::proptest! {
        #[test]
        fn loss_is_nonnegative_and_zero_only_when_certain(
            seed in proptest::prelude::any::<u64>(),
            certain in proptest::prelude::any::<bool>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (h, w, classes) = (5, 6, 4);
            let gt = LabelMap::new(
                h,
                w,
                (0..h * w)
                    .map(|_| if rng.random_bool(0.2) { IGNORE } else { rng.random_range(0..classes) as u8 })
                    .collect(),
            )
            .unwrap();
            let noise: Vec<f64> = (0..h * w * classes).map(|_| rng.random_range(-5.0..5.0)).collect();
            // a margin of 1e3 underflows every competing probability to zero
            let scores = ScoreMap::from_fn(h, w, classes, |r, c, k| {
                if certain && gt.get(r, c) as usize == k { 1e3 } else { noise[(r * w + c) * classes + k] }
            })
            .unwrap();
            match cross_entropy(&scores, &gt) {
                Ok(loss) => {
                    proptest::prop_assert!(loss >= 0.0);
                    proptest::prop_assert_eq!(loss == 0.0, certain);
                }
                Err(e) => proptest::prop_assert!(matches!(e, Error::NoSupervision)),
            }
        }
    }
}
