use std::fmt::Debug;
use std::iter::Sum;
use std::ops::AddAssign;

use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::CnnError;

/// Scalar type the network runs in: `f32` for training, `f64` for checks.
pub trait Real: Float + AddAssign + Sum + Send + Sync + Debug + Default + 'static {
    /// `c ← a·b + beta·c` on strided row-major views.
    ///
    /// # Safety
    /// Every addressed element of `a`, `b` and `c` must be in bounds.
    #[doc(hidden)]
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Real for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

impl Real for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

/// Strides of a dense matrix view: (row stride, column stride).
type View = (usize, usize);

fn extent(rows: usize, cols: usize, (rs, cs): View) -> usize {
    if rows == 0 || cols == 0 {
        0
    } else {
        (rows - 1) * rs + (cols - 1) * cs + 1
    }
}

/// Bounds-checked `c ← a·b + beta·c` with `a` m×k, `b` k×n, `c` m×n.
#[allow(clippy::too_many_arguments)]
fn gemm<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    va: View,
    b: &[T],
    vb: View,
    beta: T,
    c: &mut [T],
    vc: View,
) {
    assert!(extent(m, k, va) <= a.len());
    assert!(extent(k, n, vb) <= b.len());
    assert!(extent(m, n, vc) <= c.len());
    // SAFETY: the extents above bound every index the kernel touches.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            a.as_ptr(),
            va.0 as isize,
            va.1 as isize,
            b.as_ptr(),
            vb.0 as isize,
            vb.1 as isize,
            beta,
            c.as_mut_ptr(),
            vc.0 as isize,
            vc.1 as isize,
        );
    }
}

fn real<T: Real>(x: f64) -> T {
    T::from(x).expect("representable")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub input_size: usize,
    pub in_channels: usize,
    /// Output channels of each conv/ReLU/max-pool block.
    pub channels: Vec<usize>,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            input_size: 224,
            in_channels: 3,
            channels: vec![8, 16, 32, 64],
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<(), CnnError> {
        if self.channels.is_empty() || self.channels.contains(&0) || self.in_channels == 0 {
            return Err(CnnError::Config("channel counts must be positive".into()));
        }
        if self.input_size >> self.channels.len() == 0 {
            return Err(CnnError::Config(format!(
                "input size {} too small for {} pooling blocks",
                self.input_size,
                self.channels.len()
            )));
        }
        Ok(())
    }
}

/// Channel-major dense tensor `[channels][height][width]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn filled(channels: usize, height: usize, width: usize, value: T) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn plane(&self, c: usize) -> &[T] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [T] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .map(|&v| U::from(v).expect("representable"))
                .collect(),
        }
    }

    /// True when every channel equals channel 0.
    pub fn is_replicated(&self) -> bool {
        let first = self.plane(0);
        (1..self.channels).all(|c| self.plane(c) == first)
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Block {
    c_in: usize,
    c_out: usize,
    /// Spatial side of the block input.
    size: usize,
    w_off: usize,
    b_off: usize,
}

/// Conv(3x3, same) → ReLU → MaxPool(2x2) blocks over the ink image `1 − x`,
/// global average pool and a two-logit linear head. Parameters live in one flat vector in declaration
/// order: per block weights `[c_out][c_in][3][3]` then biases, then head
/// weights `[2][c_last]` and biases.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvNet<T> {
    config: NetConfig,
    pub frozen_feature_layers: bool,
    params: Vec<T>,
    blocks: Vec<Block>,
    fc_w_off: usize,
    fc_b_off: usize,
}

struct BlockCache<T> {
    /// im2col expansion of the block input, or the zero-padded input plane
    /// when `fused`.
    col: Vec<T>,
    /// Block output after ReLU and pooling.
    pooled: Vec<T>,
    /// Index into the conv output plane of each pooled maximum.
    argmax: Vec<u32>,
    /// Single-plane first block computed by [`conv1_relu_pool`].
    fused: bool,
}

struct ForwardCache<T> {
    blocks: Vec<BlockCache<T>>,
    features: Vec<T>,
    logits: [T; 2],
}

impl<T: Real> ConvNet<T> {
    /// All-zero parameters.
    pub fn zeroed(config: NetConfig) -> Result<Self, CnnError> {
        config.validate()?;
        let mut blocks = Vec::new();
        let (mut off, mut c_in, mut size) = (0, config.in_channels, config.input_size);
        for &c_out in &config.channels {
            let w_off = off;
            let b_off = w_off + c_out * c_in * 9;
            off = b_off + c_out;
            blocks.push(Block {
                c_in,
                c_out,
                size,
                w_off,
                b_off,
            });
            c_in = c_out;
            size /= 2;
        }
        let fc_w_off = off;
        let fc_b_off = fc_w_off + 2 * c_in;
        Ok(Self {
            config,
            frozen_feature_layers: false,
            params: vec![T::zero(); fc_b_off + 2],
            blocks,
            fc_w_off,
            fc_b_off,
        })
    }

    /// He-normal weights, zero biases.
    pub fn new(config: NetConfig, seed: u64) -> Result<Self, CnnError> {
        let mut net = Self::zeroed(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for b in net.blocks.clone() {
            let std = (2.0 / (b.c_in * 9) as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("positive std");
            for p in &mut net.params[b.w_off..b.b_off] {
                *p = real(normal.sample(&mut rng));
            }
        }
        let c_last = *net.config.channels.last().expect("validated");
        let normal = Normal::new(0.0, (1.0 / c_last as f64).sqrt()).expect("positive std");
        for p in &mut net.params[net.fc_w_off..net.fc_b_off] {
            *p = real(normal.sample(&mut rng));
        }
        Ok(net)
    }

    /// Wraps an existing flat parameter vector; its length must match the
    /// layout of `config`.
    pub fn from_params(config: NetConfig, params: Vec<T>) -> Result<Self, CnnError> {
        let mut net = Self::zeroed(config)?;
        if params.len() != net.params.len() {
            return Err(CnnError::Shape(format!(
                "expected {} parameters, got {}",
                net.params.len(),
                params.len()
            )));
        }
        net.params = params;
        Ok(net)
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    /// Parameters of the conv blocks (everything before the head).
    pub fn feature_params(&self) -> &[T] {
        &self.params[..self.fc_w_off]
    }

    /// Start of the head parameters in the flat vector.
    pub fn head_offset(&self) -> usize {
        self.fc_w_off
    }

    /// Converts the parameters to another scalar type.
    pub fn cast<U: Real>(&self) -> ConvNet<U> {
        ConvNet {
            config: self.config.clone(),
            frozen_feature_layers: self.frozen_feature_layers,
            params: self
                .params
                .iter()
                .map(|&p| U::from(p).expect("representable"))
                .collect(),
            blocks: self.blocks.clone(),
            fc_w_off: self.fc_w_off,
            fc_b_off: self.fc_b_off,
        }
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<(), CnnError> {
        let s = self.config.input_size;
        if x.channels != self.config.in_channels || x.height != s || x.width != s {
            return Err(CnnError::Shape(format!(
                "expected {}x{s}x{s} input, got {}x{}x{}",
                self.config.in_channels, x.channels, x.height, x.width
            )));
        }
        Ok(())
    }

    /// Weights of block 0 summed over input channels, for inputs whose
    /// channels are all equal.
    fn collapsed_first_weights(&self) -> Vec<T> {
        let b = &self.blocks[0];
        let w = &self.params[b.w_off..b.b_off];
        let mut out = vec![T::zero(); b.c_out * 9];
        for co in 0..b.c_out {
            for ci in 0..b.c_in {
                for k in 0..9 {
                    out[co * 9 + k] += w[(co * b.c_in + ci) * 9 + k];
                }
            }
        }
        out
    }

    fn forward_cached(&self, x: &Tensor<T>) -> ForwardCache<T> {
        self.forward_with(x, x.channels > 1 && x.is_replicated())
    }

    fn forward_with(&self, x: &Tensor<T>, replicated: bool) -> ForwardCache<T> {
        // ink = 1 − intensity, so blank paper and the zero padding agree
        let ink: Vec<T> = x.data.iter().map(|&v| T::one() - v).collect();
        let mut caches: Vec<BlockCache<T>> = Vec::with_capacity(self.blocks.len());
        for (l, b) in self.blocks.iter().enumerate() {
            let s = b.size;
            let n = s * s;
            let bias = &self.params[b.b_off..b.b_off + b.c_out];
            let input: &[T] = if l == 0 { &ink } else { &caches[l - 1].pooled };
            let cache = if l == 0 && (replicated || b.c_in == 1) {
                let w = if b.c_in == 1 {
                    self.params[b.w_off..b.b_off].to_vec()
                } else {
                    self.collapsed_first_weights()
                };
                let padded = pad(&input[..n], s);
                let (pooled, argmax) = conv1_relu_pool(&padded, s, &w, bias);
                BlockCache {
                    col: padded,
                    pooled,
                    argmax,
                    fused: true,
                }
            } else {
                let col = im2col(input, b.c_in, s);
                let mut z: Vec<T> = Vec::with_capacity(b.c_out * n);
                for &v in bias {
                    z.resize(z.len() + n, v);
                }
                let k = b.c_in * 9;
                let w = &self.params[b.w_off..b.b_off];
                gemm(
                    b.c_out,
                    k,
                    n,
                    w,
                    (k, 1),
                    &col,
                    (n, 1),
                    T::one(),
                    &mut z,
                    (n, 1),
                );
                let (pooled, argmax) = relu_maxpool(&z, b.c_out, s);
                BlockCache {
                    col,
                    pooled,
                    argmax,
                    fused: false,
                }
            };
            caches.push(cache);
        }
        let c_last = self.blocks.last().expect("validated").c_out;
        let last = &caches.last().expect("validated").pooled;
        let q = last.len() / c_last;
        let features: Vec<T> = last
            .chunks_exact(q)
            .map(|p| p.iter().copied().sum::<T>() / real(q as f64))
            .collect();
        let mut logits = [T::zero(); 2];
        for (j, l) in logits.iter_mut().enumerate() {
            let w = &self.params[self.fc_w_off + j * c_last..self.fc_w_off + (j + 1) * c_last];
            *l = self.params[self.fc_b_off + j] + dot(w, &features);
        }
        ForwardCache {
            blocks: caches,
            features,
            logits,
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<[T; 2], CnnError> {
        self.check_input(x)?;
        Ok(self.forward_cached(x).logits)
    }

    /// Backpropagates `dlogits`, accumulating parameter gradients into `grad`
    /// (head only when `head_only`), and returns the input gradient when
    /// `want_input` is set.
    fn backward(
        &self,
        cache: &ForwardCache<T>,
        dlogits: [T; 2],
        grad: &mut [T],
        head_only: bool,
        want_input: bool,
    ) -> Option<Vec<T>> {
        let c_last = cache.features.len();
        let mut dfeat = vec![T::zero(); c_last];
        for j in 0..2 {
            grad[self.fc_b_off + j] += dlogits[j];
            let gw = &mut grad[self.fc_w_off + j * c_last..self.fc_w_off + (j + 1) * c_last];
            let w = &self.params[self.fc_w_off + j * c_last..self.fc_w_off + (j + 1) * c_last];
            for c in 0..c_last {
                gw[c] += dlogits[j] * cache.features[c];
                dfeat[c] += dlogits[j] * w[c];
            }
        }
        if head_only && !want_input {
            return None;
        }
        let q = cache.blocks.last().expect("validated").pooled.len() / c_last;
        let inv_q: T = real(1.0 / q as f64);
        let mut dpool: Vec<T> = dfeat
            .iter()
            .flat_map(|&d| std::iter::repeat_n(d * inv_q, q))
            .collect();
        for (l, b) in self.blocks.iter().enumerate().rev() {
            let bc = &cache.blocks[l];
            let s = b.size;
            let n = s * s;
            let hh = (s / 2) * (s / 2);
            // ReLU passes gradient only where the pooled output is positive
            for (d, &v) in dpool.iter_mut().zip(&bc.pooled) {
                if v <= T::zero() {
                    *d = T::zero();
                }
            }
            let needs_input = l > 0 || want_input;
            let dz = ((!head_only && !bc.fused) || needs_input).then(|| {
                let mut dz = vec![T::zero(); b.c_out * n];
                for co in 0..b.c_out {
                    let dzp = &mut dz[co * n..(co + 1) * n];
                    let am = &bc.argmax[co * hh..(co + 1) * hh];
                    for (&idx, &g) in am.iter().zip(&dpool[co * hh..(co + 1) * hh]) {
                        dzp[idx as usize] = g;
                    }
                }
                dz
            });
            if !head_only {
                for co in 0..b.c_out {
                    grad[b.b_off + co] += dpool[co * hh..(co + 1) * hh].iter().copied().sum::<T>();
                }
                let gw = &mut grad[b.w_off..b.b_off];
                if bc.fused {
                    let g1 = fused_weight_grad(&bc.col, s, &bc.argmax, &dpool, b.c_out);
                    for co in 0..b.c_out {
                        for ci in 0..b.c_in {
                            for k in 0..9 {
                                gw[(co * b.c_in + ci) * 9 + k] += g1[co * 9 + k];
                            }
                        }
                    }
                } else {
                    let dz = dz.as_ref().expect("built for dense blocks");
                    let k = b.c_in * 9;
                    gemm(
                        b.c_out,
                        n,
                        k,
                        dz,
                        (n, 1),
                        &bc.col,
                        (1, n),
                        T::one(),
                        gw,
                        (k, 1),
                    );
                }
            }
            if needs_input {
                let dz = dz
                    .as_ref()
                    .expect("built when the input gradient is needed");
                let w = &self.params[b.w_off..b.b_off];
                let k = b.c_in * 9;
                let mut dcol = vec![T::zero(); k * n];
                gemm(
                    k,
                    b.c_out,
                    n,
                    w,
                    (1, k),
                    dz,
                    (n, 1),
                    T::zero(),
                    &mut dcol,
                    (n, 1),
                );
                dpool = col2im(&dcol, b.c_in, s);
            }
        }
        want_input.then(|| dpool.into_iter().map(|v| -v).collect())
    }

    /// Softmax cross-entropy for one sample. Adds `scale` × the parameter
    /// gradient into `grad` and returns (loss, logits).
    pub fn loss_and_grad(
        &self,
        x: &Tensor<T>,
        label: bool,
        grad: &mut [T],
        scale: T,
    ) -> Result<(T, [T; 2]), CnnError> {
        self.check_input(x)?;
        if grad.len() != self.params.len() {
            return Err(CnnError::Shape("gradient buffer length mismatch".into()));
        }
        let cache = self.forward_cached(x);
        let p = softmax2(cache.logits);
        let target = usize::from(label);
        let loss = -p[target].max(T::min_positive_value()).ln();
        let mut d = [p[0] * scale, p[1] * scale];
        d[target] = d[target] - scale;
        self.backward(&cache, d, grad, self.frozen_feature_layers, false);
        Ok((loss, cache.logits))
    }

    /// Gradient of logit `class` with respect to the input tensor.
    pub fn input_gradient(&self, x: &Tensor<T>, class: usize) -> Result<Tensor<T>, CnnError> {
        self.check_input(x)?;
        let cache = self.forward_cached(x);
        let mut d = [T::zero(); 2];
        d[class.min(1)] = T::one();
        let mut scratch = vec![T::zero(); self.params.len()];
        let din = self
            .backward(&cache, d, &mut scratch, true, true)
            .expect("input gradient requested");
        Ok(Tensor {
            channels: x.channels,
            height: x.height,
            width: x.width,
            data: din,
        })
    }
}

/// Numerically stable two-way softmax.
pub fn softmax2<T: Real>(logits: [T; 2]) -> [T; 2] {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let s = e0 + e1;
    [e0 / s, e1 / s]
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    acc.iter().copied().sum::<T>() + tail
}

/// Copies a plane of side `s` into a zero-bordered plane of side `s + 2`.
fn pad<T: Real>(plane: &[T], s: usize) -> Vec<T> {
    let p = s + 2;
    let mut out = vec![T::zero(); p * p];
    for y in 0..s {
        out[(y + 1) * p + 1..][..s].copy_from_slice(&plane[y * s..(y + 1) * s]);
    }
    out
}

/// Conv → ReLU → 2x2 max-pool on one padded plane, two conv rows at a time,
/// without materializing the conv output.
fn conv1_relu_pool<T: Real>(padded: &[T], s: usize, w: &[T], bias: &[T]) -> (Vec<T>, Vec<u32>) {
    let p = s + 2;
    let half = s / 2;
    let c_out = bias.len();
    let mut pooled = Vec::with_capacity(c_out * half * half);
    let mut argmax = Vec::with_capacity(c_out * half * half);
    let mut rows = vec![T::zero(); 2 * s];
    for co in 0..c_out {
        let wk = &w[co * 9..co * 9 + 9];
        for py in 0..half {
            for r in 0..2 {
                let y = 2 * py + r;
                let out = &mut rows[r * s..(r + 1) * s];
                out.fill(bias[co]);
                for ky in 0..3 {
                    let src = &padded[(y + ky) * p..][..p];
                    for kx in 0..3 {
                        let wv = wk[ky * 3 + kx];
                        for (o, &v) in out.iter_mut().zip(&src[kx..kx + s]) {
                            *o += wv * v;
                        }
                    }
                }
            }
            let (top, bottom) = rows.split_at(s);
            for px in 0..half {
                let cands = [
                    (top[2 * px], 0),
                    (top[2 * px + 1], 1),
                    (bottom[2 * px], s),
                    (bottom[2 * px + 1], s + 1),
                ];
                let mut best = cands[0];
                for c in &cands[1..] {
                    if c.0 > best.0 {
                        best = *c;
                    }
                }
                pooled.push(best.0.max(T::zero()));
                argmax.push((2 * py * s + 2 * px + best.1) as u32);
            }
        }
    }
    (pooled, argmax)
}

/// Weight gradient of [`conv1_relu_pool`]: only pooled maxima carry
/// gradient, so the sum runs over them alone. `dpool` is already masked.
fn fused_weight_grad<T: Real>(
    padded: &[T],
    s: usize,
    argmax: &[u32],
    dpool: &[T],
    c_out: usize,
) -> Vec<T> {
    let p = s + 2;
    let hh = argmax.len() / c_out;
    let mut g = vec![T::zero(); c_out * 9];
    for co in 0..c_out {
        let mut acc = [T::zero(); 9];
        for (&idx, &d) in argmax[co * hh..(co + 1) * hh]
            .iter()
            .zip(&dpool[co * hh..(co + 1) * hh])
        {
            if d == T::zero() {
                continue;
            }
            let (y, x) = (idx as usize / s, idx as usize % s);
            for ky in 0..3 {
                let row = &padded[(y + ky) * p + x..][..3];
                for kx in 0..3 {
                    acc[ky * 3 + kx] += d * row[kx];
                }
            }
        }
        g[co * 9..co * 9 + 9].copy_from_slice(&acc);
    }
    g
}

/// Unfolds `c` planes of side `s` into a `(c·9) × s²` matrix whose row
/// `(ci, ky, kx)` holds the plane shifted by `(ky − 1, kx − 1)`, zero
/// outside.
fn im2col<T: Real>(input: &[T], c: usize, s: usize) -> Vec<T> {
    let n = s * s;
    let mut col = vec![T::zero(); c * 9 * n];
    for ci in 0..c {
        let src = &input[ci * n..(ci + 1) * n];
        for ky in 0..3 {
            for kx in 0..3 {
                let dst = &mut col[(ci * 9 + ky * 3 + kx) * n..][..n];
                let (x0, x1) = (1usize.saturating_sub(kx), (s + 1 - kx).min(s));
                for y in 0..s {
                    let sy = y + ky;
                    if sy < 1 || sy > s {
                        continue;
                    }
                    let sy = sy - 1;
                    let sx0 = x0 + kx - 1;
                    dst[y * s + x0..y * s + x1]
                        .copy_from_slice(&src[sy * s + sx0..sy * s + sx0 + (x1 - x0)]);
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`]: scatters a `(c·9) × s²` matrix back onto planes.
fn col2im<T: Real>(col: &[T], c: usize, s: usize) -> Vec<T> {
    let n = s * s;
    let mut out = vec![T::zero(); c * n];
    for ci in 0..c {
        let dst = &mut out[ci * n..(ci + 1) * n];
        for ky in 0..3 {
            for kx in 0..3 {
                let src = &col[(ci * 9 + ky * 3 + kx) * n..][..n];
                let (x0, x1) = (1usize.saturating_sub(kx), (s + 1 - kx).min(s));
                for y in 0..s {
                    let sy = y + ky;
                    if sy < 1 || sy > s {
                        continue;
                    }
                    let sy = sy - 1;
                    let sx0 = x0 + kx - 1;
                    let d = &mut dst[sy * s + sx0..sy * s + sx0 + (x1 - x0)];
                    for (o, &v) in d.iter_mut().zip(&src[y * s + x0..y * s + x1]) {
                        *o += v;
                    }
                }
            }
        }
    }
    out
}

fn relu_maxpool<T: Real>(z: &[T], c: usize, s: usize) -> (Vec<T>, Vec<u32>) {
    let half = s / 2;
    let n = s * s;
    let mut pooled = Vec::with_capacity(c * half * half);
    let mut argmax = Vec::with_capacity(c * half * half);
    for ch in 0..c {
        let plane = &z[ch * n..(ch + 1) * n];
        for py in 0..half {
            for px in 0..half {
                let base = 2 * py * s + 2 * px;
                let mut best = base;
                for idx in [base + 1, base + s, base + s + 1] {
                    if plane[idx] > plane[best] {
                        best = idx;
                    }
                }
                pooled.push(plane[best].max(T::zero()));
                argmax.push(best as u32);
            }
        }
    }
    (pooled, argmax)
}
