//! Tape-based reverse-mode differentiation over the ops this crate needs.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::nn::conv::{conv2d_backward, conv2d_forward};
use crate::nn::param::{ParamId, ParamStore};
use crate::scalar::{gemm, lit, MatRef, Scalar};
use crate::tensor::Tensor;
use crate::transforms::{resize_plane, trailing_dims, Plan2d};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

/// Pointwise function applied after subtracting a per-position threshold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ThresholdAct {
    /// `sign(x) * max(|x| - |t|, 0)`
    Soft,
    Relu,
    LeakyRelu(f64),
    Silu,
}

/// Per-channel statistics of one training-mode batch norm call.
#[derive(Clone, Debug)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    /// Unbiased variance, as used for running estimates.
    pub var: Vec<T>,
}

enum Op<T> {
    Leaf,
    Param(ParamId),
    Conv2d { x: Var, w: Var, stride: usize, pad: usize },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T>, training: bool },
    Relu(Var),
    LeakyRelu(Var, T),
    Silu(Var),
    Add(Var, Var),
    Sum(Vec<Var>),
    ScaleConst(Var, T),
    GlobalAvgPool(Var),
    Linear { x: Var, w: Var, b: Var },
    SoftmaxCe { logits: Var, labels: Vec<usize>, probs: Vec<T> },
    WeightedSum { x: Var, weights: Tensor<T> },
    Resize(Var),
    Transform { x: Var, plan: Arc<Plan2d<T>>, inverse: bool },
    ScaleMap { x: Var, a: Var },
    ChannelBias { x: Var, b: Var },
    Threshold { x: Var, t: Var, act: ThresholdAct },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Records values as ops run; [`Graph::backward`] walks the tape in reverse.
///
/// Nodes are appended in evaluation order, so reverse index order is a valid
/// reverse topological order and every node is visited once.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn sign<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

impl ThresholdAct {
    /// Output and local derivative `dy/dz` at `z = x - |t|` (or the soft rule).
    fn eval<T: Scalar>(self, x: T, t: T) -> (T, T) {
        let thr = t.abs();
        match self {
            ThresholdAct::Soft => {
                if x.abs() > thr {
                    (sign(x) * (x.abs() - thr), T::one())
                } else {
                    (T::zero(), T::zero())
                }
            }
            ThresholdAct::Relu => {
                let z = x - thr;
                if z > T::zero() {
                    (z, T::one())
                } else {
                    (T::zero(), T::zero())
                }
            }
            ThresholdAct::LeakyRelu(slope) => {
                let z = x - thr;
                if z > T::zero() {
                    (z, T::one())
                } else {
                    let s = lit::<T>(slope);
                    (s * z, s)
                }
            }
            ThresholdAct::Silu => {
                let z = (x - thr).to_f64_lossy();
                let s = sigmoid(z);
                (lit(z * s), lit(s * (1.0 + z * (1.0 - s))))
            }
        }
    }
}

/// Gradients produced by [`Graph::backward`], indexed by node.
pub struct Grads<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Grads<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads[v.0].as_ref()
    }
}

fn accumulate<T: Scalar>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => *slot = Some(g),
    }
}

fn spatial_broadcast_check<T: Scalar>(x: &Tensor<T>, m: &Tensor<T>, what: &str) -> Result<usize> {
    let (h, w) = trailing_dims(x)?;
    if m.shape() != [h, w] {
        return Err(Error::shape(format!("{what}: expected [{h}, {w}] map, got {:?}", m.shape())));
    }
    Ok(h * w)
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    pub fn conv2d(&mut self, x: Var, w: Var, stride: usize, pad: usize) -> Result<Var> {
        let y = conv2d_forward(self.value(x), self.value(w), stride, pad)?;
        Ok(self.push(y, Op::Conv2d { x, w, stride, pad }))
    }

    fn bn_check(&self, x: Var, gamma: Var, beta: Var) -> Result<[usize; 4]> {
        let d = self.value(x).dims4("batch norm input")?;
        for p in [gamma, beta] {
            if self.value(p).shape() != [d[1]] {
                return Err(Error::shape(format!(
                    "batch norm: {} channels but parameter shape {:?}",
                    d[1],
                    self.value(p).shape()
                )));
            }
        }
        Ok(d)
    }

    fn bn_apply(&mut self, x: Var, gamma: Var, beta: Var, mean: &[T], inv_std: Vec<T>, training: bool) -> Var {
        let [b, c, h, w] = self.value(x).dims4("").unwrap();
        let plane = h * w;
        let xv = self.value(x).data();
        let (g, be) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![T::zero(); xv.len()];
        let mut y = vec![T::zero(); xv.len()];
        for n in 0..b {
            for ch in 0..c {
                let off = (n * c + ch) * plane;
                for i in off..off + plane {
                    let xh = (xv[i] - mean[ch]) * inv_std[ch];
                    xhat[i] = xh;
                    y[i] = g[ch] * xh + be[ch];
                }
            }
        }
        let shape = self.value(x).shape().to_vec();
        self.push(
            Tensor::from_vec(&shape, y).unwrap(),
            Op::BatchNorm { x, gamma, beta, xhat, inv_std, training },
        )
    }

    /// Normalizes with batch statistics; returns them for running-average updates.
    pub fn batch_norm_train(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<(Var, BatchStats<T>)> {
        let [b, c, h, w] = self.bn_check(x, gamma, beta)?;
        let plane = h * w;
        let m = b * plane;
        let xv = self.value(x).data();
        let mut mean = vec![T::zero(); c];
        let mut var = vec![T::zero(); c];
        for ch in 0..c {
            let mut s = 0.0;
            for n in 0..b {
                s += xv[(n * c + ch) * plane..][..plane].iter().map(|v| v.to_f64_lossy()).sum::<f64>();
            }
            let mu = s / m as f64;
            let mut ss = 0.0;
            for n in 0..b {
                ss += xv[(n * c + ch) * plane..][..plane]
                    .iter()
                    .map(|v| (v.to_f64_lossy() - mu).powi(2))
                    .sum::<f64>();
            }
            mean[ch] = lit(mu);
            var[ch] = lit(ss / m as f64);
        }
        let inv_std: Vec<T> = var.iter().map(|v| lit(1.0 / (v.to_f64_lossy() + eps).sqrt())).collect();
        let unbiased = if m > 1 {
            var.iter().map(|v| *v * lit::<T>(m as f64 / (m - 1) as f64)).collect()
        } else {
            var.clone()
        };
        let y = self.bn_apply(x, gamma, beta, &mean, inv_std, true);
        Ok((y, BatchStats { mean, var: unbiased }))
    }

    /// Normalizes with fixed (running) statistics.
    pub fn batch_norm_eval(&mut self, x: Var, gamma: Var, beta: Var, mean: &[T], var: &[T], eps: f64) -> Result<Var> {
        let [_, c, _, _] = self.bn_check(x, gamma, beta)?;
        if mean.len() != c || var.len() != c {
            return Err(Error::shape(format!("batch norm: running stats sized {} for {c} channels", mean.len())));
        }
        let inv_std = var.iter().map(|v| lit(1.0 / (v.to_f64_lossy() + eps).sqrt())).collect();
        Ok(self.bn_apply(x, gamma, beta, mean, inv_std, false))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        self.push(y, Op::Relu(x))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let s = lit::<T>(slope);
        let y = self.value(x).map(|v| if v > T::zero() { v } else { s * v });
        self.push(y, Op::LeakyRelu(x, s))
    }

    pub fn silu(&mut self, x: Var) -> Var {
        let y = self.value(x).map(|v| {
            let z = v.to_f64_lossy();
            lit(z * sigmoid(z))
        });
        self.push(y, Op::Silu(x))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.value(a).zip_map(self.value(b), |p, q| p + q)?;
        Ok(self.push(y, Op::Add(a, b)))
    }

    pub fn sum(&mut self, xs: &[Var]) -> Result<Var> {
        let (first, rest) = xs.split_first().ok_or_else(|| Error::invalid("sum of no terms"))?;
        let mut y = self.value(*first).clone();
        for v in rest {
            self.value(*v).check_same_shape(&y, "sum")?;
            y.add_assign(self.value(*v));
        }
        Ok(self.push(y, Op::Sum(xs.to_vec())))
    }

    pub fn scale_const(&mut self, x: Var, c: f64) -> Var {
        let c = lit::<T>(c);
        let y = self.value(x).map(|v| v * c);
        self.push(y, Op::ScaleConst(x, c))
    }

    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let [b, c, h, w] = self.value(x).dims4("global_avg_pool input")?;
        let plane = h * w;
        let inv = 1.0 / plane as f64;
        let data = self
            .value(x)
            .data()
            .chunks(plane)
            .map(|p| lit(p.iter().map(|v| v.to_f64_lossy()).sum::<f64>() * inv))
            .collect();
        Ok(self.push(Tensor::from_vec(&[b, c], data)?, Op::GlobalAvgPool(x)))
    }

    /// `x [B, in] * w[out, in]^T + b[out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xs = self.value(x).shape();
        let ws = self.value(w).shape();
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] || self.value(b).shape() != [ws[0]] {
            return Err(Error::shape(format!(
                "linear: x {xs:?}, w {ws:?}, b {:?}",
                self.value(b).shape()
            )));
        }
        let (n, din, dout) = (xs[0], xs[1], ws[0]);
        let mut y = Vec::with_capacity(n * dout);
        for _ in 0..n {
            y.extend_from_slice(self.value(b).data());
        }
        gemm(
            T::one(),
            MatRef::new(self.value(x).data(), n, din),
            MatRef::t(self.value(w).data(), dout, din),
            T::one(),
            &mut y,
        );
        Ok(self.push(Tensor::from_vec(&[n, dout], y)?, Op::Linear { x, w, b }))
    }

    /// Mean softmax cross-entropy over the batch.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let s = self.value(logits).shape();
        if s.len() != 2 || s[0] != labels.len() {
            return Err(Error::shape(format!("cross entropy: logits {s:?} for {} labels", labels.len())));
        }
        let (n, k) = (s[0], s[1]);
        if let Some(bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::invalid(format!("label {bad} out of range for {k} classes")));
        }
        let mut probs = vec![T::zero(); n * k];
        let mut loss = 0.0;
        for (i, row) in self.value(logits).data().chunks(k).enumerate() {
            let mx = row.iter().map(|v| v.to_f64_lossy()).fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v.to_f64_lossy() - mx).exp()).sum();
            for (j, v) in row.iter().enumerate() {
                probs[i * k + j] = lit((v.to_f64_lossy() - mx).exp() / z);
            }
            loss += z.ln() + mx - row[labels[i]].to_f64_lossy();
        }
        let value = Tensor::scalar(lit(loss / n as f64));
        Ok(self.push(value, Op::SoftmaxCe { logits, labels: labels.to_vec(), probs }))
    }

    /// `sum(x * weights)`; reduces any tensor to a scalar for gradient checks.
    pub fn weighted_sum(&mut self, x: Var, weights: Tensor<T>) -> Result<Var> {
        self.value(x).check_same_shape(&weights, "weighted_sum")?;
        let s: f64 = self
            .value(x)
            .data()
            .iter()
            .zip(weights.data())
            .map(|(a, b)| a.to_f64_lossy() * b.to_f64_lossy())
            .sum();
        Ok(self.push(Tensor::scalar(lit(s)), Op::WeightedSum { x, weights }))
    }

    /// Zero-pads or crops the trailing plane to `h x w` (top-left anchored).
    pub fn resize(&mut self, x: Var, h: usize, w: usize) -> Result<Var> {
        let y = resize_plane(self.value(x), h, w)?;
        Ok(self.push(y, Op::Resize(x)))
    }

    pub fn transform(&mut self, x: Var, plan: &Arc<Plan2d<T>>, inverse: bool) -> Result<Var> {
        let y = plan.apply(self.value(x), inverse)?;
        Ok(self.push(y, Op::Transform { x, plan: Arc::clone(plan), inverse }))
    }

    /// Elementwise product with a spatial map shared over batch and channels.
    pub fn scale_map(&mut self, x: Var, a: Var) -> Result<Var> {
        let plane = spatial_broadcast_check(self.value(x), self.value(a), "scale")?;
        let av = self.value(a).data();
        let mut y = self.value(x).clone();
        for chunk in y.data_mut().chunks_mut(plane) {
            chunk.iter_mut().zip(av).for_each(|(v, s)| *v *= *s);
        }
        Ok(self.push(y, Op::ScaleMap { x, a }))
    }

    /// Adds `b[c]` to every position of channel `c`.
    pub fn channel_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let [_, c, h, w] = self.value(x).dims4("channel_bias input")?;
        if self.value(b).shape() != [c] {
            return Err(Error::shape(format!("channel_bias: {c} channels, bias {:?}", self.value(b).shape())));
        }
        let bv = self.value(b).data().to_vec();
        let mut y = self.value(x).clone();
        for (i, chunk) in y.data_mut().chunks_mut(h * w).enumerate() {
            chunk.iter_mut().for_each(|v| *v += bv[i % c]);
        }
        Ok(self.push(y, Op::ChannelBias { x, b }))
    }

    /// Pointwise thresholding with a spatial threshold map; `|t|` is the effective threshold.
    pub fn threshold(&mut self, x: Var, t: Var, act: ThresholdAct) -> Result<Var> {
        let plane = spatial_broadcast_check(self.value(x), self.value(t), "threshold")?;
        let tv = self.value(t).data().to_vec();
        let mut y = self.value(x).clone();
        for chunk in y.data_mut().chunks_mut(plane) {
            chunk.iter_mut().zip(&tv).for_each(|(v, &th)| *v = act.eval(*v, th).0);
        }
        Ok(self.push(y, Op::Threshold { x, t, act }))
    }

    /// Gradients of the scalar `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Result<Grads<T>> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape(format!("backward needs a scalar, got {:?}", self.value(loss).shape())));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::from_vec(self.value(loss).shape(), vec![T::one()])?);
        for i in (0..=loss.0).rev() {
            let Some(dy) = grads[i].take() else { continue };
            for (v, g) in self.local_grads(i, &dy)? {
                accumulate(&mut grads[v.0], g);
            }
            grads[i] = Some(dy);
        }
        Ok(Grads { grads })
    }

    /// Adds gradients of parameter nodes into the store.
    pub fn accumulate_param_grads(&self, grads: &Grads<T>, store: &mut ParamStore<T>) {
        for (i, node) in self.nodes.iter().enumerate() {
            if let (Op::Param(id), Some(g)) = (&node.op, &grads.grads[i]) {
                let p = store.get_mut(*id);
                if p.trainable {
                    p.grad.add_assign(g);
                }
            }
        }
    }

    fn local_grads(&self, i: usize, dy: &Tensor<T>) -> Result<Vec<(Var, Tensor<T>)>> {
        let node = &self.nodes[i];
        let out = match &node.op {
            Op::Leaf | Op::Param(_) => vec![],
            Op::Conv2d { x, w, stride, pad } => {
                let (dx, dw) = conv2d_backward(self.value(*x), self.value(*w), dy, *stride, *pad)?;
                vec![(*x, dx), (*w, dw)]
            }
            Op::BatchNorm { x, gamma, beta, xhat, inv_std, training } => {
                let [b, c, h, w] = self.value(*x).dims4("")?;
                let plane = h * w;
                let m = (b * plane) as f64;
                let g = self.value(*gamma).data();
                let dyv = dy.data();
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                for n in 0..b {
                    for ch in 0..c {
                        let off = (n * c + ch) * plane;
                        for k in off..off + plane {
                            dgamma[ch] += dyv[k] * xhat[k];
                            dbeta[ch] += dyv[k];
                        }
                    }
                }
                let mut dx = vec![T::zero(); dyv.len()];
                for n in 0..b {
                    for ch in 0..c {
                        let off = (n * c + ch) * plane;
                        let scale = g[ch] * inv_std[ch];
                        for k in off..off + plane {
                            dx[k] = if *training {
                                let mean_dy = dbeta[ch].to_f64_lossy() / m;
                                let mean_dyx = dgamma[ch].to_f64_lossy() / m;
                                scale * (dyv[k] - lit(mean_dy) - xhat[k] * lit(mean_dyx))
                            } else {
                                scale * dyv[k]
                            };
                        }
                    }
                }
                vec![
                    (*x, Tensor::from_vec(dy.shape(), dx)?),
                    (*gamma, Tensor::from_vec(&[c], dgamma)?),
                    (*beta, Tensor::from_vec(&[c], dbeta)?),
                ]
            }
            Op::Relu(x) => {
                let d = self.value(*x).zip_map(dy, |v, g| if v > T::zero() { g } else { T::zero() })?;
                vec![(*x, d)]
            }
            Op::LeakyRelu(x, s) => {
                let s = *s;
                let d = self.value(*x).zip_map(dy, |v, g| if v > T::zero() { g } else { s * g })?;
                vec![(*x, d)]
            }
            Op::Silu(x) => {
                let d = self.value(*x).zip_map(dy, |v, g| {
                    let z = v.to_f64_lossy();
                    let s = sigmoid(z);
                    g * lit(s * (1.0 + z * (1.0 - s)))
                })?;
                vec![(*x, d)]
            }
            Op::Add(a, b) => vec![(*a, dy.clone()), (*b, dy.clone())],
            Op::Sum(xs) => xs.iter().map(|v| (*v, dy.clone())).collect(),
            Op::ScaleConst(x, c) => vec![(*x, dy.map(|g| g * *c))],
            Op::GlobalAvgPool(x) => {
                let xs = self.value(*x).shape();
                let plane = xs[2] * xs[3];
                let inv = lit::<T>(1.0 / plane as f64);
                let mut d = Vec::with_capacity(plane * dy.len());
                for g in dy.data() {
                    d.extend(std::iter::repeat_n(*g * inv, plane));
                }
                vec![(*x, Tensor::from_vec(xs, d)?)]
            }
            Op::Linear { x, w, b } => {
                let (n, din) = (self.value(*x).shape()[0], self.value(*x).shape()[1]);
                let dout = self.value(*w).shape()[0];
                let mut dx = vec![T::zero(); n * din];
                gemm(T::one(), MatRef::new(dy.data(), n, dout), MatRef::new(self.value(*w).data(), dout, din), T::zero(), &mut dx);
                let mut dw = vec![T::zero(); dout * din];
                gemm(T::one(), MatRef::t(dy.data(), n, dout), MatRef::new(self.value(*x).data(), n, din), T::zero(), &mut dw);
                let mut db = vec![T::zero(); dout];
                for row in dy.data().chunks(dout) {
                    db.iter_mut().zip(row).for_each(|(a, b)| *a += *b);
                }
                vec![
                    (*x, Tensor::from_vec(&[n, din], dx)?),
                    (*w, Tensor::from_vec(&[dout, din], dw)?),
                    (*b, Tensor::from_vec(&[dout], db)?),
                ]
            }
            Op::SoftmaxCe { logits, labels, probs } => {
                let s = self.value(*logits).shape();
                let (n, k) = (s[0], s[1]);
                let scale = dy.data()[0] / lit(n as f64);
                let mut d = probs.clone();
                for (i, &l) in labels.iter().enumerate() {
                    d[i * k + l] -= T::one();
                }
                d.iter_mut().for_each(|v| *v *= scale);
                vec![(*logits, Tensor::from_vec(s, d)?)]
            }
            Op::WeightedSum { x, weights } => {
                let g = dy.data()[0];
                vec![(*x, weights.map(|w| w * g))]
            }
            Op::Resize(x) => {
                let (h, w) = trailing_dims(self.value(*x))?;
                vec![(*x, resize_plane(dy, h, w)?)]
            }
            Op::Transform { x, plan, inverse } => {
                let mut d = dy.clone();
                plan.apply_adjoint_in_place(d.data_mut(), *inverse);
                vec![(*x, d)]
            }
            Op::ScaleMap { x, a } => {
                let av = self.value(*a).data();
                let plane = av.len();
                let xv = self.value(*x).data();
                let mut dx = dy.clone();
                let mut da = vec![T::zero(); plane];
                for (p, chunk) in dx.data_mut().chunks_mut(plane).enumerate() {
                    for (j, g) in chunk.iter_mut().enumerate() {
                        da[j] += *g * xv[p * plane + j];
                        *g *= av[j];
                    }
                }
                vec![(*x, dx), (*a, Tensor::from_vec(self.value(*a).shape(), da)?)]
            }
            Op::ChannelBias { x, b } => {
                let c = self.value(*b).len();
                let plane = dy.len() / (self.value(*x).shape()[0] * c);
                let mut db = vec![T::zero(); c];
                for (i, chunk) in dy.data().chunks(plane).enumerate() {
                    db[i % c] += chunk.iter().copied().sum::<T>();
                }
                vec![(*x, dy.clone()), (*b, Tensor::from_vec(&[c], db)?)]
            }
            Op::Threshold { x, t, act } => {
                let tv = self.value(*t).data();
                let plane = tv.len();
                let xv = self.value(*x).data();
                let mut dx = dy.clone();
                let mut dt = vec![T::zero(); plane];
                for (p, chunk) in dx.data_mut().chunks_mut(plane).enumerate() {
                    for (j, g) in chunk.iter_mut().enumerate() {
                        let xi = xv[p * plane + j];
                        let (_, slope) = act.eval(xi, tv[j]);
                        // d|t|/dt = sign(t); soft rule moves toward zero, others shift left
                        let dthr = match act {
                            ThresholdAct::Soft => -sign(xi) * slope,
                            _ => -slope,
                        };
                        dt[j] += *g * dthr * sign(tv[j]);
                        *g *= slope;
                    }
                }
                vec![(*x, dx), (*t, Tensor::from_vec(self.value(*t).shape(), dt)?)]
            }
        };
        Ok(out)
    }
}
