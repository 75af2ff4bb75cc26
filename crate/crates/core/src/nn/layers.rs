//! Stateful layer wrappers that own parameter ids and, for batch norm, running stats.

use rand::Rng;

use crate::error::Result;
use crate::nn::graph::{BatchStats, Graph, Var};
use crate::nn::init::{fan_in_uniform, kaiming_uniform};
use crate::nn::param::{ParamId, ParamStore};
use crate::nn::{BN_EPS, BN_MOMENTUM};
use crate::scalar::{lit, Scalar};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Bias-free convolution.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
}

impl Conv2d {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        rng: &mut R,
    ) -> Self {
        let w = kaiming_uniform(&[cout, cin, k, k], cin * k * k, rng);
        let weight = store.add(format!("{name}.weight"), w);
        Conv2d { weight, cin, cout, k, stride }
    }

    pub fn pad(&self) -> usize {
        self.k / 2
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        g.conv2d(x, w, self.stride, self.pad())
    }

    pub fn num_params(&self) -> usize {
        self.k * self.k * self.cin * self.cout
    }
}

/// Running per-channel estimates; start at mean 0, variance 1.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Scalar> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        RunningStats { mean: vec![T::zero(); channels], var: vec![T::one(); channels] }
    }

    pub fn update(&mut self, batch: &BatchStats<T>) {
        let m = lit::<T>(BN_MOMENTUM);
        let keep = T::one() - m;
        for c in 0..self.mean.len() {
            self.mean[c] = keep * self.mean[c] + m * batch.mean[c];
            self.var[c] = keep * self.var[c] + m * batch.var[c];
        }
    }
}

/// Read-only view of model state for one forward pass. Training-mode batch
/// norm appends its batch statistics to `pending` instead of mutating.
pub struct ForwardCtx<'a, T> {
    pub store: &'a ParamStore<T>,
    pub stats: &'a [RunningStats<T>],
    pub mode: Mode,
    pub pending: Vec<(usize, BatchStats<T>)>,
}

impl<'a, T: Scalar> ForwardCtx<'a, T> {
    pub fn new(store: &'a ParamStore<T>, stats: &'a [RunningStats<T>], mode: Mode) -> Self {
        ForwardCtx { store, stats, mode, pending: Vec::new() }
    }
}

#[derive(Clone, Debug)]
pub struct BatchNorm2d {
    pub gamma: ParamId,
    pub beta: ParamId,
    /// Index of this layer's [`RunningStats`].
    pub slot: usize,
    pub channels: usize,
}

impl BatchNorm2d {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, stats: &mut Vec<RunningStats<T>>, name: &str, channels: usize) -> Self {
        let gamma = store.add(format!("{name}.gamma"), Tensor::ones(&[channels]));
        let beta = store.add(format!("{name}.beta"), Tensor::zeros(&[channels]));
        stats.push(RunningStats::new(channels));
        BatchNorm2d { gamma, beta, slot: stats.len() - 1, channels }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, ctx: &mut ForwardCtx<'_, T>, x: Var) -> Result<Var> {
        let gamma = g.param(ctx.store, self.gamma);
        let beta = g.param(ctx.store, self.beta);
        match ctx.mode {
            Mode::Train => {
                let (y, batch) = g.batch_norm_train(x, gamma, beta, BN_EPS)?;
                ctx.pending.push((self.slot, batch));
                Ok(y)
            }
            Mode::Eval => {
                let s = &ctx.stats[self.slot];
                g.batch_norm_eval(x, gamma, beta, &s.mean, &s.var, BN_EPS)
            }
        }
    }

    pub fn num_params(&self) -> usize {
        2 * self.channels
    }
}

/// Fully connected classifier `y = x W^T + b`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub din: usize,
    pub dout: usize,
}

impl Linear {
    pub fn new<T: Scalar, R: Rng + ?Sized>(store: &mut ParamStore<T>, name: &str, din: usize, dout: usize, rng: &mut R) -> Self {
        let weight = store.add(format!("{name}.weight"), fan_in_uniform(&[dout, din], din, rng));
        let bias = store.add(format!("{name}.bias"), fan_in_uniform(&[dout], din, rng));
        Linear { weight, bias, din, dout }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        g.linear(x, w, b)
    }

    pub fn num_params(&self) -> usize {
        self.din * self.dout + self.dout
    }
}
