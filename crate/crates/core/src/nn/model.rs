//! Rotation-invariant front end, causal TDS blocks and a log-softmax head,
//! with hand-written backpropagation over a flat parameter vector.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ctc::{ctc_loss, CtcOutput};
use super::layout::ChannelLayout;
use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::scalar::Real;

pub const DEFAULT_HIDDEN: usize = 256;
pub const DEFAULT_BLOCKS: usize = 4;
pub const DEFAULT_KERNEL: usize = 13;
/// One second of context at a 20 ms hop.
pub const MAX_RECEPTIVE_FIELD: usize = 50;
/// Electrode shifts averaged by the front end.
pub const SHIFTS: [isize; 3] = [-1, 0, 1];
const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TdsConfig {
    pub hidden: usize,
    pub blocks: usize,
    pub kernel: usize,
    /// Output classes: vocabulary size + 1 (blank at 0).
    pub classes: usize,
    pub layout: ChannelLayout,
}

impl TdsConfig {
    pub fn new(layout: ChannelLayout, vocab: usize) -> Self {
        Self {
            hidden: DEFAULT_HIDDEN,
            blocks: DEFAULT_BLOCKS,
            kernel: DEFAULT_KERNEL,
            classes: vocab + 1,
            layout,
        }
    }

    pub fn d_in(&self) -> usize {
        self.layout.dim()
    }

    pub fn receptive_field(&self) -> usize {
        1 + self.blocks * (self.kernel - 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.kernel == 0 || self.classes < 2 || self.d_in() == 0 {
            return Err(Error::InvalidArgument(
                "model needs hidden ≥ 1, kernel ≥ 1, ≥ 1 label and ≥ 1 input dim".into(),
            ));
        }
        if self.receptive_field() > MAX_RECEPTIVE_FIELD {
            return Err(Error::InvalidArgument(format!(
                "receptive field {} exceeds {MAX_RECEPTIVE_FIELD} frames",
                self.receptive_field()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockOffsets {
    pub conv_w: Range<usize>,
    pub conv_b: Range<usize>,
    pub ln1_g: Range<usize>,
    pub ln1_b: Range<usize>,
    pub w1: Range<usize>,
    pub b1: Range<usize>,
    pub w2: Range<usize>,
    pub b2: Range<usize>,
    pub ln2_g: Range<usize>,
    pub ln2_b: Range<usize>,
}

/// Positions of each tensor in the flat parameter vector, in the declared
/// (and serialized) order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Offsets {
    pub rot_w: Range<usize>,
    pub rot_b: Range<usize>,
    pub blocks: Vec<BlockOffsets>,
    pub out_w: Range<usize>,
    pub out_b: Range<usize>,
    pub total: usize,
}

impl Offsets {
    pub fn new(cfg: &TdsConfig) -> Self {
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let h = cfg.hidden;
        let rot_w = take(h * cfg.d_in());
        let rot_b = take(h);
        let blocks = (0..cfg.blocks)
            .map(|_| BlockOffsets {
                conv_w: take(h * cfg.kernel),
                conv_b: take(h),
                ln1_g: take(h),
                ln1_b: take(h),
                w1: take(2 * h * h),
                b1: take(2 * h),
                w2: take(2 * h * h),
                b2: take(h),
                ln2_g: take(h),
                ln2_b: take(h),
            })
            .collect();
        let out_w = take(cfg.classes * h);
        let out_b = take(cfg.classes);
        Self {
            rot_w,
            rot_b,
            blocks,
            out_w,
            out_b,
            total: at,
        }
    }
}

/// Per-dimension standardization applied before the front end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputNorm<T> {
    pub mean: Vec<T>,
    pub scale: Vec<T>,
}

impl<T: Real> InputNorm<T> {
    pub fn identity(d: usize) -> Self {
        Self {
            mean: vec![T::zero(); d],
            scale: vec![T::one(); d],
        }
    }

    /// Mean and inverse standard deviation over all frames. Constant
    /// dimensions pass through unchanged: centering them would zero the
    /// input and hide the sequence start that causal padding exposes.
    pub fn fit<'a>(d: usize, sequences: impl IntoIterator<Item = &'a Matrix<T>>) -> Self {
        let (mut sum, mut sq, mut n) = (vec![0.0; d], vec![0.0; d], 0usize);
        for m in sequences {
            for row in m.iter_rows() {
                for (k, v) in row.iter().enumerate() {
                    sum[k] += v.as_f64();
                    sq[k] += v.as_f64() * v.as_f64();
                }
                n += 1;
            }
        }
        let n = n.max(1) as f64;
        let mut out = Self::identity(d);
        for k in 0..d {
            let m = sum[k] / n;
            let var = (sq[k] / n - m * m).max(0.0);
            if var > 1e-12 * m * m && var > 0.0 {
                out.mean[k] = T::of(m);
                out.scale[k] = T::of(1.0 / var.sqrt());
            }
        }
        out
    }

    fn apply(&self, x: &Matrix<T>) -> Matrix<T> {
        Matrix::from_fn(x.rows(), x.cols(), |t, k| (x[(t, k)] - self.mean[k]) * self.scale[k])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TdsModel<T> {
    pub config: TdsConfig,
    pub params: Vec<T>,
    pub norm: InputNorm<T>,
    offsets: Offsets,
    perms: Vec<Vec<usize>>,
}

struct LnCache<T> {
    xhat: Matrix<T>,
    inv_std: Vec<T>,
}

struct BlockCache<T> {
    x_in: Matrix<T>,
    conv: Matrix<T>,
    ln1: LnCache<T>,
    y1: Matrix<T>,
    q: Matrix<T>,
    u: Matrix<T>,
    ln2: LnCache<T>,
}

struct Cache<T> {
    shifted: Vec<Matrix<T>>,
    pre: Vec<Matrix<T>>,
    blocks: Vec<BlockCache<T>>,
    top: Matrix<T>,
    log_probs: Matrix<T>,
}

fn relu<T: Real>(v: T) -> T {
    if v > T::zero() {
        v
    } else {
        T::zero()
    }
}

/// `y[t] = W x[t] + b` with `W` stored row-major `out × in`.
fn linear<T: Real>(x: &Matrix<T>, w: &[T], b: &[T]) -> Matrix<T> {
    let (n_in, n_out) = (x.cols(), b.len());
    let mut y = Matrix::zeros(x.rows(), n_out);
    for t in 0..x.rows() {
        let xt = x.row(t);
        for (o, yo) in y.row_mut(t).iter_mut().enumerate() {
            *yo = b[o] + dot(&w[o * n_in..(o + 1) * n_in], xt);
        }
    }
    y
}

/// Accumulates weight/bias gradients and, if requested, input gradients.
fn linear_backward<T: Real>(
    x: &Matrix<T>,
    dy: &Matrix<T>,
    w: &[T],
    gw: &mut [T],
    gb: &mut [T],
    mut dx: Option<&mut Matrix<T>>,
) {
    let n_in = x.cols();
    for t in 0..x.rows() {
        let xt = x.row(t);
        for (o, &g) in dy.row(t).iter().enumerate() {
            if g == T::zero() {
                continue;
            }
            gb[o] += g;
            let row = o * n_in..(o + 1) * n_in;
            for (gwi, &xi) in gw[row.clone()].iter_mut().zip(xt) {
                *gwi += g * xi;
            }
            if let Some(dx) = dx.as_deref_mut() {
                for (d, &wi) in dx.row_mut(t).iter_mut().zip(&w[row]) {
                    *d += g * wi;
                }
            }
        }
    }
}

fn layer_norm<T: Real>(x: &Matrix<T>, g: &[T], b: &[T]) -> (Matrix<T>, LnCache<T>) {
    let (rows, h) = x.shape();
    let hn = T::of_usize(h);
    let mut y = Matrix::zeros(rows, h);
    let mut xhat = Matrix::zeros(rows, h);
    let mut inv_std = Vec::with_capacity(rows);
    for t in 0..rows {
        let row = x.row(t);
        let mean = row.iter().copied().sum::<T>() / hn;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / hn;
        let inv = T::one() / (var + T::of(LN_EPS)).sqrt();
        inv_std.push(inv);
        for k in 0..h {
            let xh = (row[k] - mean) * inv;
            xhat[(t, k)] = xh;
            y[(t, k)] = g[k] * xh + b[k];
        }
    }
    (y, LnCache { xhat, inv_std })
}

fn layer_norm_backward<T: Real>(cache: &LnCache<T>, dy: &Matrix<T>, g: &[T], gg: &mut [T], gb: &mut [T]) -> Matrix<T> {
    let (rows, h) = dy.shape();
    let hn = T::of_usize(h);
    let mut dx = Matrix::zeros(rows, h);
    let mut dxhat = vec![T::zero(); h];
    for t in 0..rows {
        let xh = cache.xhat.row(t);
        let (mut mean_d, mut mean_dx) = (T::zero(), T::zero());
        for k in 0..h {
            let d = dy[(t, k)];
            gg[k] += d * xh[k];
            gb[k] += d;
            dxhat[k] = d * g[k];
            mean_d += dxhat[k];
            mean_dx += dxhat[k] * xh[k];
        }
        mean_d /= hn;
        mean_dx /= hn;
        let inv = cache.inv_std[t];
        for k in 0..h {
            dx[(t, k)] = inv * (dxhat[k] - mean_d - xh[k] * mean_dx);
        }
    }
    dx
}

/// Causal depthwise convolution: output `t` sees inputs `t−k+1 ..= t`.
fn depthwise<T: Real>(x: &Matrix<T>, w: &[T], b: &[T], k: usize) -> Matrix<T> {
    let (rows, h) = x.shape();
    let mut y = Matrix::zeros(rows, h);
    for t in 0..rows {
        for c in 0..h {
            let mut acc = b[c];
            for j in 0..k {
                if let Some(src) = (t + j + 1).checked_sub(k) {
                    acc += w[c * k + j] * x[(src, c)];
                }
            }
            y[(t, c)] = acc;
        }
    }
    y
}

fn log_softmax<T: Real>(z: &Matrix<T>) -> Matrix<T> {
    let mut out = z.clone();
    for t in 0..z.rows() {
        let row = out.row_mut(t);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        row.iter_mut().for_each(|v| *v -= lse);
    }
    out
}

impl<T: Real> TdsModel<T> {
    /// All-zero parameters (uniform output distribution).
    pub fn zeros(config: TdsConfig) -> Result<Self> {
        config.validate()?;
        let offsets = Offsets::new(&config);
        let perms = SHIFTS.iter().map(|&s| config.layout.shift_permutation(s)).collect();
        Ok(Self {
            params: vec![T::zero(); offsets.total],
            norm: InputNorm::identity(config.d_in()),
            config,
            offsets,
            perms,
        })
    }

    /// Seeded initialization: scaled Gaussian weights, zero biases, unit
    /// layer-norm gains.
    pub fn new(config: TdsConfig, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, d_in, k) = (m.config.hidden as f64, m.config.d_in() as f64, m.config.kernel as f64);
        let mut fill = |params: &mut [T], r: &Range<usize>, sd: f64| {
            let dist = Normal::new(0.0, sd).expect("positive sd");
            for p in &mut params[r.clone()] {
                *p = T::of(dist.sample(&mut rng));
            }
        };
        let o = m.offsets.clone();
        fill(&mut m.params, &o.rot_w, (2.0 / d_in).sqrt());
        for b in &o.blocks {
            fill(&mut m.params, &b.conv_w, (1.0 / k).sqrt());
            fill(&mut m.params, &b.w1, (2.0 / h).sqrt());
            fill(&mut m.params, &b.w2, (1.0 / (2.0 * h)).sqrt());
            m.params[b.ln1_g.clone()].iter_mut().for_each(|g| *g = T::one());
            m.params[b.ln2_g.clone()].iter_mut().for_each(|g| *g = T::one());
        }
        fill(&mut m.params, &o.out_w, (1.0 / h).sqrt());
        Ok(m)
    }

    /// Rebuilds a model from serialized parts.
    pub fn from_parts(config: TdsConfig, params: Vec<T>, norm: InputNorm<T>) -> Result<Self> {
        let mut m = Self::zeros(config)?;
        if params.len() != m.offsets.total {
            return Err(Error::Format(format!(
                "expected {} parameters, found {}",
                m.offsets.total,
                params.len()
            )));
        }
        if norm.mean.len() != m.config.d_in() || norm.scale.len() != m.config.d_in() {
            return Err(Error::Format("input normalization width mismatch".into()));
        }
        m.params = params;
        m.norm = norm;
        Ok(m)
    }

    pub fn offsets(&self) -> &Offsets {
        &self.offsets
    }

    pub fn cast<U: Real>(&self) -> TdsModel<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::of(x.as_f64())).collect::<Vec<U>>();
        TdsModel {
            config: self.config.clone(),
            params: conv(&self.params),
            norm: InputNorm {
                mean: conv(&self.norm.mean),
                scale: conv(&self.norm.scale),
            },
            offsets: self.offsets.clone(),
            perms: self.perms.clone(),
        }
    }

    fn p(&self, r: &Range<usize>) -> &[T] {
        &self.params[r.clone()]
    }

    fn check_input(&self, x: &Matrix<T>) -> Result<()> {
        if x.cols() != self.config.d_in() {
            return Err(Error::Shape(format!(
                "model expects {} input dims, got {}",
                self.config.d_in(),
                x.cols()
            )));
        }
        if x.rows() == 0 {
            return Err(Error::InvalidArgument("input has no frames".into()));
        }
        Ok(())
    }

    fn shift(&self, x: &Matrix<T>, perm: &[usize]) -> Matrix<T> {
        Matrix::from_fn(x.rows(), x.cols(), |t, k| x[(t, perm[k])])
    }

    /// Mean over electrode shifts of `ReLU(W_r · shift(x) + b_r)`, after
    /// input normalization.
    pub fn rotation_encode(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_input(x)?;
        let (z, _, _) = self.front(&self.norm.apply(x));
        Ok(z)
    }

    fn front(&self, xn: &Matrix<T>) -> (Matrix<T>, Vec<Matrix<T>>, Vec<Matrix<T>>) {
        let o = &self.offsets;
        let third = T::one() / T::of_usize(SHIFTS.len());
        let mut z = Matrix::zeros(xn.rows(), self.config.hidden);
        let (mut shifted, mut pre) = (Vec::new(), Vec::new());
        for perm in &self.perms {
            let xs = self.shift(xn, perm);
            let a = linear(&xs, self.p(&o.rot_w), self.p(&o.rot_b));
            for (zv, &av) in z.as_mut_slice().iter_mut().zip(a.as_slice()) {
                *zv += third * relu(av);
            }
            shifted.push(xs);
            pre.push(a);
        }
        (z, shifted, pre)
    }

    fn forward_cached(&self, x: &Matrix<T>) -> Result<Cache<T>> {
        self.check_input(x)?;
        let xn = self.norm.apply(x);
        let (mut hcur, shifted, pre) = self.front(&xn);
        let k = self.config.kernel;
        let mut blocks = Vec::with_capacity(self.offsets.blocks.len());
        for b in &self.offsets.blocks {
            let conv = depthwise(&hcur, self.p(&b.conv_w), self.p(&b.conv_b), k);
            let mut r1 = hcur.clone();
            for (r, &c) in r1.as_mut_slice().iter_mut().zip(conv.as_slice()) {
                *r += relu(c);
            }
            let (y1, ln1) = layer_norm(&r1, self.p(&b.ln1_g), self.p(&b.ln1_b));
            let q = linear(&y1, self.p(&b.w1), self.p(&b.b1));
            let u = q.map(relu);
            let m = linear(&u, self.p(&b.w2), self.p(&b.b2));
            let mut r2 = y1.clone();
            for (r, &mv) in r2.as_mut_slice().iter_mut().zip(m.as_slice()) {
                *r += mv;
            }
            let (y2, ln2) = layer_norm(&r2, self.p(&b.ln2_g), self.p(&b.ln2_b));
            blocks.push(BlockCache {
                x_in: std::mem::replace(&mut hcur, y2),
                conv,
                ln1,
                y1,
                q,
                u,
                ln2,
            });
        }
        let logits = linear(&hcur, self.p(&self.offsets.out_w), self.p(&self.offsets.out_b));
        Ok(Cache {
            shifted,
            pre,
            blocks,
            log_probs: log_softmax(&logits),
            top: hcur,
        })
    }

    /// Per-frame log-probabilities over `classes`, blank at 0.
    pub fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        Ok(self.forward_cached(x)?.log_probs)
    }

    /// Gradient of a scalar loss with respect to all parameters, given its
    /// gradient with respect to the log-probabilities.
    fn backward(&self, cache: &Cache<T>, dlp: &Matrix<T>) -> Vec<T> {
        let o = &self.offsets;
        let mut grad = vec![T::zero(); o.total];
        let lp = &cache.log_probs;
        let mut dlogits = dlp.clone();
        for t in 0..lp.rows() {
            let total: T = dlp.row(t).iter().copied().sum();
            for (d, &l) in dlogits.row_mut(t).iter_mut().zip(lp.row(t)) {
                *d -= l.exp() * total;
            }
        }
        let mut dh = Matrix::zeros(cache.top.rows(), self.config.hidden);
        {
            let (gw, gb) = split2(&mut grad, &o.out_w, &o.out_b);
            linear_backward(&cache.top, &dlogits, self.p(&o.out_w), gw, gb, Some(&mut dh));
        }

        let k = self.config.kernel;
        for (b, c) in o.blocks.iter().zip(&cache.blocks).rev() {
            let dr2 = {
                let (gg, gb) = split2(&mut grad, &b.ln2_g, &b.ln2_b);
                layer_norm_backward(&c.ln2, &dh, self.p(&b.ln2_g), gg, gb)
            };
            let mut du = Matrix::zeros(c.u.rows(), c.u.cols());
            {
                let (gw, gb) = split2(&mut grad, &b.w2, &b.b2);
                linear_backward(&c.u, &dr2, self.p(&b.w2), gw, gb, Some(&mut du));
            }
            for (d, &q) in du.as_mut_slice().iter_mut().zip(c.q.as_slice()) {
                if q <= T::zero() {
                    *d = T::zero();
                }
            }
            let mut dy1 = dr2;
            {
                let (gw, gb) = split2(&mut grad, &b.w1, &b.b1);
                linear_backward(&c.y1, &du, self.p(&b.w1), gw, gb, Some(&mut dy1));
            }
            let dr1 = {
                let (gg, gb) = split2(&mut grad, &b.ln1_g, &b.ln1_b);
                layer_norm_backward(&c.ln1, &dy1, self.p(&b.ln1_g), gg, gb)
            };
            let mut dx = dr1.clone();
            let w = self.p(&b.conv_w);
            let (gw, gb) = split2(&mut grad, &b.conv_w, &b.conv_b);
            let h = self.config.hidden;
            for t in 0..dr1.rows() {
                for ch in 0..h {
                    if c.conv[(t, ch)] <= T::zero() {
                        continue;
                    }
                    let g = dr1[(t, ch)];
                    gb[ch] += g;
                    for j in 0..k {
                        if let Some(src) = (t + j + 1).checked_sub(k) {
                            gw[ch * k + j] += g * c.x_in[(src, ch)];
                            dx[(src, ch)] += g * w[ch * k + j];
                        }
                    }
                }
            }
            dh = dx;
        }

        let third = T::one() / T::of_usize(SHIFTS.len());
        let (gw, gb) = split2(&mut grad, &o.rot_w, &o.rot_b);
        for (xs, a) in cache.shifted.iter().zip(&cache.pre) {
            let da = Matrix::from_fn(a.rows(), a.cols(), |t, j| {
                if a[(t, j)] > T::zero() {
                    dh[(t, j)] * third
                } else {
                    T::zero()
                }
            });
            linear_backward(xs, &da, self.p(&o.rot_w), gw, gb, None);
        }
        grad
    }

    /// CTC loss of `target` (model class ids) and its parameter gradient.
    /// Infeasible targets give an infinite loss and a zero gradient.
    pub fn loss_and_grad(&self, x: &Matrix<T>, target: &[usize]) -> Result<(CtcOutput<T>, Vec<T>)> {
        if let Some(&c) = target.iter().find(|&&c| c == 0 || c >= self.config.classes) {
            return Err(Error::InvalidArgument(format!(
                "target class {c} outside 1..{}",
                self.config.classes
            )));
        }
        let cache = self.forward_cached(x)?;
        let out = ctc_loss(&cache.log_probs, target);
        let grad = if out.feasible {
            self.backward(&cache, &out.grad)
        } else {
            vec![T::zero(); self.offsets.total]
        };
        Ok((out, grad))
    }
}

/// Two disjoint mutable views into the gradient vector.
fn split2<'a, T>(v: &'a mut [T], a: &Range<usize>, b: &Range<usize>) -> (&'a mut [T], &'a mut [T]) {
    debug_assert!(a.end <= b.start);
    let (left, right) = v.split_at_mut(b.start);
    (&mut left[a.clone()], &mut right[..b.len()])
}
