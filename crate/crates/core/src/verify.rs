//! Self-checks shared by the `verify` subcommand and the acceptance suite.
//!
//! Each suite returns named [`Check`]s; a suite passes when all its checks do.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::accounting::{count_macs, Convention};
use crate::checkpoint::Checkpoint;
use crate::data::{self, Dataset};
use crate::error::Result;
use crate::models::{Model, VariantSpec};
use crate::nn::{grad_check, GradCheckReport, Graph, ParamStore, ThresholdAct, BN_EPS, LEAKY_SLOPE};
use crate::tensor::Tensor;
use crate::tp::{Nonlinearity, TpBranchVars, TpConfig, TpLayer};
use crate::train::{self, evaluate, overfit, TrainConfig};
use crate::transforms::fixture::{calibrate_dyadic_exponent, calibrate_symmetric};
use crate::transforms::oracle::symmetric_kernel_response;
use crate::transforms::{
    dct1d, dyadic_convolve_oracle, ht1d, matrix_oracle2d, symmetric_convolve_oracle, transform2d, Plan2d,
    TransformKind,
};

pub const GRAD_TOL: f64 = 1e-4;
pub const FD_EPS: f64 = 1e-5;

/// Published parameter totals.
pub const PARAM_TARGETS: [(&str, u64); 8] = [
    ("resnet20", 272_474),
    ("1c-dct", 151_514),
    ("1c-ht", 151_514),
    ("3c-dct", 199_898),
    ("3c-ht", 199_898),
    ("3c-bwt", 199_898),
    ("resnet20+1c-dct-p", 276_826),
    ("all-dct", 51_034),
];

/// Published MAC totals (millions).
pub const MAC_TARGETS: [(&str, f64); 6] = [
    ("resnet20", 41.32),
    ("1c-dct", 30.79),
    ("3c-dct", 35.68),
    ("1c-ht", 22.53),
    ("3c-ht", 27.42),
    ("3c-bwt", 35.68),
];

pub const MAC_DELTAS: [(&str, i64); 2] = [("1c-dct", -10_530_816), ("1c-ht", -18_788_352)];

/// Ablation switches with their published parameter counts.
pub const ABLATIONS: [(&str, u64); 12] = [
    ("1c-dct", 151_514),
    ("1c-dct,nonlinearity=relu-threshold", 151_514),
    ("1c-dct,nonlinearity=relu", 147_818),
    ("1c-dct,nonlinearity=leaky-relu-threshold", 151_514),
    ("1c-dct,nonlinearity=silu-threshold", 151_514),
    ("1c-dct,tp-shortcut=off", 151_514),
    ("1c-dct,scaling=off", 147_482),
    ("2c-dct", 175_706),
    ("3c-dct", 199_898),
    ("4c-dct", 224_090),
    ("5c-dct", 248_282),
    ("all-dct", 51_034),
];

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), passed, detail: detail.into() }
    }

    fn from_result(name: impl Into<String>, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((ok, detail)) => Check::new(name, ok, detail),
            Err(e) => Check::new(name, false, format!("error: {e}")),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", if self.passed { "ok  " } else { "FAIL" }, self.name, self.detail)
    }
}

#[derive(Clone, Debug)]
pub struct Suite {
    pub name: &'static str,
    pub checks: Vec<Check>,
    pub seconds: f64,
}

impl Suite {
    pub fn run(name: &'static str, f: impl FnOnce() -> Vec<Check>) -> Self {
        let start = Instant::now();
        let checks = f();
        Suite { name, checks, seconds: start.elapsed().as_secs_f64() }
    }

    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn parse(v: &str) -> Result<VariantSpec> {
    v.parse()
}

fn params_of(v: &str) -> Result<u64> {
    Ok(Model::<f32>::new(parse(v)?, 0)?.store().num_trainable() as u64)
}

fn macs_of(v: &str) -> Result<u64> {
    Ok(count_macs(&parse(v)?, 32, Convention::MatrixProduct)?.total_macs())
}

pub fn parameter_counts() -> Vec<Check> {
    PARAM_TARGETS
        .iter()
        .map(|&(v, want)| {
            Check::from_result(format!("params {v}"), params_of(v).map(|got| (got == want, format!("{got} (expected {want})"))))
        })
        .collect()
}

pub fn mac_counts() -> Vec<Check> {
    let mut out = Vec::new();
    let base = macs_of("resnet20");
    for (v, want) in MAC_DELTAS {
        let r = base.as_ref().map_err(|e| crate::Error::invalid(e.to_string())).and_then(|&b| {
            let got = macs_of(v)? as i64 - b as i64;
            Ok((got == want, format!("delta {got} (expected {want})")))
        });
        out.push(Check::from_result(format!("mac delta {v}"), r));
    }
    for (v, want) in MAC_TARGETS {
        let r = macs_of(v).map(|m| {
            let got = m as f64 / 1e6;
            let rel = (got - want) / want;
            (rel.abs() <= 0.005, format!("{got:.3}M vs {want}M ({:+.3}%)", rel * 100.0))
        });
        out.push(Check::from_result(format!("macs {v}"), r));
    }
    out
}

fn round_trip_error(x: &Tensor<f64>, kind: TransformKind) -> Result<(f64, f64)> {
    let back = transform2d(&transform2d(x, kind, false)?, kind, true)?;
    let xf = x.cast::<f32>();
    let backf = transform2d(&transform2d(&xf, kind, false)?, kind, true)?;
    Ok((back.max_abs_diff(x), backf.max_abs_diff(&xf) as f64))
}

fn sizes_for(kind: TransformKind) -> Vec<usize> {
    if kind.needs_pow2() {
        vec![1, 2, 4, 8, 16, 32]
    } else {
        (1..=32).collect()
    }
}

/// Round trips and dense-oracle equivalence, every kind, sizes up to 32.
pub fn transform_invariants() -> Vec<Check> {
    let mut out = Vec::new();
    let mut r = rng(11);
    for kind in TransformKind::ALL {
        let res = (|| -> Result<(bool, String)> {
            let (mut e64, mut e32) = (0f64, 0f64);
            for h in [4, 8, 16, 32] {
                for w in [4, 8, 16, 32] {
                    let x = Tensor::<f64>::uniform(&[3, h, w], -1.0, 1.0, &mut r);
                    let (a, b) = round_trip_error(&x, kind)?;
                    e64 = e64.max(a);
                    e32 = e32.max(b);
                }
            }
            Ok((e64 <= 1e-10 && e32 <= 1e-5, format!("max error {e64:.2e} (f64), {e32:.2e} (f32)")))
        })();
        out.push(Check::from_result(format!("round trip {kind}"), res));

        let res = (|| -> Result<(bool, String)> {
            let sizes = sizes_for(kind);
            let mut worst = 0f64;
            let mut cases = 0;
            for &h in &sizes {
                for &w in &sizes {
                    // every pair for power-of-two kinds, a band of shapes for DCT
                    if !kind.needs_pow2() && h != w && (h + w) % 7 != 0 {
                        continue;
                    }
                    let x = Tensor::<f64>::uniform(&[2, h, w], -1.0, 1.0, &mut r);
                    for inverse in [false, true] {
                        let fast = transform2d(&x, kind, inverse)?;
                        let slow = matrix_oracle2d(&x, kind, inverse)?;
                        worst = worst.max(fast.max_abs_diff(&slow));
                        cases += 1;
                    }
                }
            }
            Ok((worst <= 1e-10, format!("{cases} cases, max deviation {worst:.2e}")))
        })();
        out.push(Check::from_result(format!("dense oracle {kind}"), res));
    }
    out
}

fn impulse(n: usize, i: usize) -> Vec<f64> {
    (0..n).map(|m| f64::from(u8::from(m == i))).collect()
}

/// Dyadic and symmetric convolution theorems under the calibrated scaling.
pub fn convolution_theorems() -> Vec<Check> {
    let mut out = Vec::new();
    let p = calibrate_dyadic_exponent();
    let dyadic = |a: &[f64], x: &[f64]| -> Result<f64> {
        let n = a.len() as f64;
        let lhs = ht1d(&dyadic_convolve_oracle(a, x)?)?;
        let (ha, hx) = (ht1d(a)?, ht1d(x)?);
        Ok((0..a.len()).map(|k| (lhs[k] - n.powf(p) * ha[k] * hx[k]).abs()).fold(0.0, f64::max))
    };
    let res = (|| -> Result<(bool, String)> {
        let mut worst = 0f64;
        let mut pairs = 0;
        for n in [2usize, 4, 8, 16] {
            for i in 0..n {
                for j in 0..n {
                    worst = worst.max(dyadic(&impulse(n, i), &impulse(n, j))?);
                    pairs += 1;
                }
            }
        }
        Ok((worst <= 1e-10, format!("{pairs} impulse pairs, exponent {p}, max deviation {worst:.2e}")))
    })();
    out.push(Check::from_result("dyadic theorem, impulse bases", res));
    let mut r = rng(12);
    let res = (|| -> Result<(bool, String)> {
        let mut worst = 0f64;
        for i in 0..100 {
            let n = [2usize, 4, 8, 16][i % 4];
            let a = Tensor::<f64>::uniform(&[n], -1.0, 1.0, &mut r).into_data();
            let x = Tensor::<f64>::uniform(&[n], -1.0, 1.0, &mut r).into_data();
            worst = worst.max(dyadic(&a, &x)?);
        }
        Ok((worst <= 1e-10, format!("100 random pairs, max deviation {worst:.2e}")))
    })();
    out.push(Check::from_result("dyadic theorem, random pairs", res));

    let res = (|| -> Result<(bool, String)> {
        let Some(per_bin) = calibrate_symmetric(symmetric_kernel_response) else {
            return Ok((false, "no consistent per-bin factor".into()));
        };
        let uniform = per_bin.windows(2).all(|w| w[0] == w[1]);
        let c = per_bin[0];
        let mut worst = 0f64;
        for n in [2usize, 4, 8] {
            for _ in 0..20 {
                let a = Tensor::<f64>::uniform(&[n], -1.0, 1.0, &mut r).into_data();
                let x = Tensor::<f64>::uniform(&[n], -1.0, 1.0, &mut r).into_data();
                let lhs = dct1d(&symmetric_convolve_oracle(&a, &x)?)?;
                let (ka, dx) = (symmetric_kernel_response(&a), dct1d(&x)?);
                for k in 0..n {
                    worst = worst.max((lhs[k] - c * ka[k] * dx[k]).abs());
                }
            }
        }
        Ok((uniform && worst <= 1e-10, format!("factor {per_bin:?}, max deviation {worst:.2e}")))
    })();
    out.push(Check::from_result("symmetric theorem, N = 2, 4, 8", res));

    let res = (|| -> Result<(bool, String)> {
        let mut worst = 0f64;
        for n in [2usize, 4, 8] {
            let a = Tensor::<f64>::uniform(&[n], -1.0, 1.0, &mut r).into_data();
            let x = Tensor::<f64>::uniform(&[n], -1.0, 1.0, &mut r).into_data();
            let period = 2 * n;
            let ext = |s: &[f64], m: isize| {
                let j = m.rem_euclid(period as isize) as usize;
                if j < n {
                    s[j]
                } else {
                    s[period - 1 - j]
                }
            };
            let u: Vec<f64> = (0..period as isize)
                .map(|i| (0..period as isize).map(|j| ext(&a, j) * ext(&x, i - j)).sum())
                .collect();
            let v: Vec<f64> = (0..n).map(|i| 0.5 * (u[i] + u[(i + period - 1) % period])).collect();
            let lhs = dct1d(&v)?;
            let (da, dx) = (dct1d(&a)?, dct1d(&x)?);
            for k in 0..n {
                let rhs = 2.0 * (PI * k as f64 / period as f64).cos() * da[k] * dx[k];
                worst = worst.max((lhs[k] - rhs).abs());
            }
        }
        Ok((worst <= 1e-10, format!("half-sample route, max deviation {worst:.2e}")))
    })();
    out.push(Check::from_result("symmetric theorem, type-II operands", res));
    out
}

type GradFn = Box<dyn Fn(&mut Graph<f64>, &[crate::nn::Var]) -> Result<crate::nn::Var>>;

fn grad_entry(name: &str, inputs: Vec<Tensor<f64>>, tol: f64, f: GradFn) -> Check {
    let r = grad_check(&inputs, FD_EPS, |g, v| f(g, v)).map(|rep: GradCheckReport| {
        let ok = rep.max_rel_error <= tol && rep.checked > rep.skipped;
        (ok, format!("max rel error {:.2e} ({} checked, {} kinks skipped)", rep.max_rel_error, rep.checked, rep.skipped))
    });
    Check::from_result(format!("grad {name}"), r)
}

/// Values bounded away from zero so ReLU-type kinks are never probed.
fn off_zero(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor<f64> {
    let mag = Tensor::<f64>::uniform(shape, 0.05, 1.0, r);
    let sign = Tensor::<f64>::uniform(shape, -1.0, 1.0, r);
    mag.zip_map(&sign, |a, s| if s < 0.0 { -a } else { a }).expect("same shape")
}

fn tp_layer_check(kind: TransformKind, p: usize, nl: Nonlinearity, h: usize, downsample: bool, seed: u64) -> Check {
    let name = format!("tp layer {kind} P={p} {nl} {h}x{h}{}", if downsample { " downsampling" } else { "" });
    let res = (|| -> Result<(bool, String)> {
        let mut r = rng(seed);
        let mut cfg = TpConfig::new(kind, p, 4, h, h);
        cfg.nonlinearity = nl;
        if downsample {
            cfg.downsample = true;
            cfg.shortcut = false;
            cfg.cout = 6;
        }
        let mut store = ParamStore::<f64>::new();
        let layer = TpLayer::new(&mut store, "tp", cfg.clone(), &mut r)?;
        let (ph, pw) = cfg.param_grid();
        let mut inputs = vec![Tensor::<f64>::uniform(&[1, 4, h, h], -1.0, 1.0, &mut r)];
        for b in layer.branches() {
            inputs.push(Tensor::uniform(&[ph, pw], 0.5, 1.5, &mut r));
            inputs.push(store.value(b.mix).clone());
            if b.threshold.is_some() {
                inputs.push(Tensor::uniform(&[ph, pw], 0.05, 0.6, &mut r));
            } else {
                inputs.push(Tensor::uniform(&[cfg.cout], -0.2, 0.2, &mut r));
            }
        }
        let thresholds = nl.has_thresholds();
        let rep = grad_check(&inputs, FD_EPS, |g, v| {
            let vars: Vec<TpBranchVars> = v[1..]
                .chunks(3)
                .map(|c| TpBranchVars {
                    scale: Some(c[0]),
                    mix: c[1],
                    threshold: thresholds.then_some(c[2]),
                    bias: (!thresholds).then_some(c[2]),
                })
                .collect();
            layer.forward_with(g, v[0], &vars)
        })?;
        let ok = rep.max_rel_error <= GRAD_TOL && rep.checked > 4 * rep.skipped;
        Ok((ok, format!("max rel error {:.2e} ({} checked, {} kinks skipped)", rep.max_rel_error, rep.checked, rep.skipped)))
    })();
    Check::from_result(name, res)
}

/// Finite-difference checks of every differentiable op and whole TP layers.
pub fn gradients() -> Vec<Check> {
    let mut r = rng(13);
    let mut out = Vec::new();
    for (k, stride, pad) in [(3, 1, 1), (3, 2, 1), (1, 1, 0), (1, 2, 0)] {
        let inputs = vec![Tensor::uniform(&[2, 3, 4, 4], -1.0, 1.0, &mut r), Tensor::uniform(&[2, 3, k, k], -1.0, 1.0, &mut r)];
        out.push(grad_entry(
            &format!("conv2d k={k} stride={stride}"),
            inputs,
            GRAD_TOL,
            Box::new(move |g, v| g.conv2d(v[0], v[1], stride, pad)),
        ));
    }
    let x = Tensor::uniform(&[4, 3], -1.0, 1.0, &mut r);
    let w = Tensor::uniform(&[5, 3], -1.0, 1.0, &mut r);
    let b = Tensor::uniform(&[5], -1.0, 1.0, &mut r);
    out.push(grad_entry("linear", vec![x.clone(), w.clone(), b.clone()], 1e-10, Box::new(|g, v| g.linear(v[0], v[1], v[2]))));
    out.push(grad_entry(
        "linear + softmax cross-entropy",
        vec![x, w, b],
        GRAD_TOL,
        Box::new(|g, v| {
            let z = g.linear(v[0], v[1], v[2])?;
            g.softmax_cross_entropy(z, &[0, 4, 2, 2])
        }),
    ));
    let x = Tensor::uniform(&[2, 3, 3, 3], -1.0, 1.0, &mut r);
    let gamma = Tensor::uniform(&[3], 0.5, 1.5, &mut r);
    let beta = Tensor::uniform(&[3], -1.0, 1.0, &mut r);
    out.push(grad_entry(
        "batch norm (train)",
        vec![x.clone(), gamma.clone(), beta.clone()],
        GRAD_TOL,
        Box::new(|g, v| Ok(g.batch_norm_train(v[0], v[1], v[2], BN_EPS)?.0)),
    ));
    out.push(grad_entry(
        "batch norm (eval)",
        vec![x, gamma, beta],
        GRAD_TOL,
        Box::new(|g, v| g.batch_norm_eval(v[0], v[1], v[2], &[0.1, -0.2, 0.3], &[0.5, 1.5, 2.0], BN_EPS)),
    ));
    let x = off_zero(&[2, 2, 3, 3], &mut r);
    out.push(grad_entry("relu", vec![x.clone()], GRAD_TOL, Box::new(|g, v| Ok(g.relu(v[0])))));
    out.push(grad_entry("leaky relu", vec![x.clone()], GRAD_TOL, Box::new(|g, v| Ok(g.leaky_relu(v[0], LEAKY_SLOPE)))));
    out.push(grad_entry("silu", vec![x], GRAD_TOL, Box::new(|g, v| Ok(g.silu(v[0])))));
    let a = Tensor::uniform(&[2, 2, 3, 3], -1.0, 1.0, &mut r);
    let b = Tensor::uniform(&[2, 2, 3, 3], -1.0, 1.0, &mut r);
    out.push(grad_entry(
        "add, sum, scale, global average pool",
        vec![a, b],
        GRAD_TOL,
        Box::new(|g, v| {
            let s = g.add(v[0], v[1])?;
            let t = g.sum(&[s, v[0], v[1]])?;
            let t = g.scale_const(t, 0.5);
            g.global_avg_pool(t)
        }),
    ));
    let x = Tensor::uniform(&[1, 2, 3, 5], -1.0, 1.0, &mut r);
    out.push(grad_entry("pad", vec![x.clone()], GRAD_TOL, Box::new(|g, v| g.resize(v[0], 4, 8))));
    out.push(grad_entry("crop", vec![x], GRAD_TOL, Box::new(|g, v| g.resize(v[0], 2, 2))));
    for kind in TransformKind::ALL {
        for inverse in [false, true] {
            let plan = match Plan2d::new(kind, 4, 4) {
                Ok(p) => Arc::new(p),
                Err(e) => {
                    out.push(Check::new(format!("grad transform {kind}"), false, e.to_string()));
                    continue;
                }
            };
            let x = Tensor::uniform(&[1, 2, 4, 4], -1.0, 1.0, &mut r);
            let dir = if inverse { "inverse" } else { "forward" };
            out.push(grad_entry(
                &format!("{dir} {kind}"),
                vec![x],
                GRAD_TOL,
                Box::new(move |g, v| g.transform(v[0], &plan, inverse)),
            ));
        }
    }
    let x = Tensor::uniform(&[2, 3, 4, 4], -1.0, 1.0, &mut r);
    let a = Tensor::uniform(&[4, 4], -1.0, 1.0, &mut r);
    let b = Tensor::uniform(&[3], -1.0, 1.0, &mut r);
    out.push(grad_entry(
        "scaling map + channel bias",
        vec![x.clone(), a, b],
        GRAD_TOL,
        Box::new(|g, v| {
            let y = g.scale_map(v[0], v[1])?;
            g.channel_bias(y, v[2])
        }),
    ));
    for act in [ThresholdAct::Soft, ThresholdAct::Relu, ThresholdAct::LeakyRelu(LEAKY_SLOPE), ThresholdAct::Silu] {
        let t = Tensor::uniform(&[4, 4], 0.1, 0.4, &mut r);
        out.push(grad_entry(&format!("threshold {act:?}"), vec![x.clone(), t], GRAD_TOL, Box::new(move |g, v| g.threshold(v[0], v[1], act))));
    }
    out.push(tp_layer_check(TransformKind::Dct, 1, Nonlinearity::SoftThreshold, 8, false, 21));
    out.push(tp_layer_check(TransformKind::Dct, 2, Nonlinearity::SoftThreshold, 4, false, 22));
    out.push(tp_layer_check(TransformKind::Ht, 1, Nonlinearity::SoftThreshold, 3, false, 23));
    out.push(tp_layer_check(TransformKind::Bwt, 2, Nonlinearity::SoftThreshold, 4, false, 24));
    out.push(tp_layer_check(TransformKind::Dct, 1, Nonlinearity::SoftThreshold, 8, true, 25));
    for (i, nl) in Nonlinearity::ALL.into_iter().enumerate() {
        if nl != Nonlinearity::SoftThreshold {
            out.push(tp_layer_check(TransformKind::Dct, 1, nl, 4, false, 30 + i as u64));
        }
    }
    out
}

/// Input resolution of the overfit smoke runs.
pub const OVERFIT_SIZE: usize = 8;
pub const OVERFIT_IMAGES: usize = 64;
pub const OVERFIT_STEPS: usize = 200;
pub const OVERFIT_TARGET: f64 = 0.1;
pub const OVERFIT_LR: f64 = 0.05;

/// Builds every ablation, checks its parameter count at 32x32 and drives a
/// reduced-resolution copy to near-zero loss on a fixed 64-image set.
pub fn ablation_wiring() -> Vec<Check> {
    let ds = data::synthetic(OVERFIT_IMAGES, OVERFIT_SIZE, 5);
    ABLATIONS
        .iter()
        .map(|&(v, want)| {
            let res = (|| -> Result<(bool, String)> {
                let got = params_of(v)?;
                let small = parse(&format!("{v},input-size={OVERFIT_SIZE}"))?;
                let rep = overfit::<f32>(small, &ds, OVERFIT_STEPS, OVERFIT_TARGET, OVERFIT_LR)?;
                Ok((
                    got == want && rep.reached,
                    format!(
                        "{got} params (expected {want}); loss {:.3} -> {:.3} in {} steps",
                        rep.losses[0],
                        rep.final_loss(),
                        rep.steps()
                    ),
                ))
            })();
            Check::from_result(format!("ablation {v}"), res)
        })
        .collect()
}

/// Small seeded configuration used for the rerun and checkpoint checks.
pub fn determinism_config() -> TrainConfig {
    TrainConfig {
        variant: "3c-dct".into(),
        epochs: 2,
        batch_size: 32,
        lr: 0.05,
        milestones: vec![1],
        subset: Some(512),
        reproducible: true,
        seed: 7,
        ..TrainConfig::default()
    }
}

/// Two seeded runs give identical logs; a checkpoint restores the exact
/// evaluated accuracy through bytes and through a file.
pub fn determinism(train_set: &Dataset, test_set: &Dataset) -> Vec<Check> {
    let cfg = determinism_config();
    let mut out = Vec::new();
    let runs = (|| -> Result<_> {
        let a = train::train::<f32>(&cfg, train_set, test_set, |_| {})?;
        let b = train::train::<f32>(&cfg, train_set, test_set, |_| {})?;
        Ok((a, b))
    })();
    let (a, b) = match runs {
        Ok(r) => r,
        Err(e) => return vec![Check::new("seeded rerun", false, format!("error: {e}"))],
    };
    let same = a.log.same_ignoring_wall_time(&b.log);
    let weights_same = a.model.store().iter().zip(b.model.store().iter()).all(|((_, p), (_, q))| p.value == q.value);
    out.push(Check::new(
        "seeded rerun",
        same && weights_same,
        format!("{} epochs, logs {}, weights {}", a.log.rows.len(), verdict(same), verdict(weights_same)),
    ));
    let res = (|| -> Result<(bool, String)> {
        let (acc, loss) = evaluate(&a.model, test_set, cfg.eval_batch_size)?;
        let ckpt = Checkpoint::capture(&a.model, None, cfg.epochs, acc);
        let restored = Checkpoint::from_bytes(&ckpt.to_bytes())?.restore_model::<f32>()?;
        let (acc2, loss2) = evaluate(&restored, test_set, cfg.eval_batch_size)?;
        let path = std::env::temp_dir().join(format!("tpnet-verify-{}.ckpt", std::process::id()));
        ckpt.save(&path)?;
        let loaded = Checkpoint::load(&path);
        let _ = std::fs::remove_file(&path);
        let from_file = loaded?.restore_model::<f32>()?;
        let (acc3, loss3) = evaluate(&from_file, test_set, cfg.eval_batch_size)?;
        let ok = acc.to_bits() == acc2.to_bits()
            && loss.to_bits() == loss2.to_bits()
            && acc.to_bits() == acc3.to_bits()
            && loss.to_bits() == loss3.to_bits();
        Ok((ok, format!("accuracy {acc} / {acc2} / {acc3}, loss {loss} / {loss2} / {loss3}")))
    })();
    out.push(Check::from_result("checkpoint round trip", res));
    out
}

fn verdict(b: bool) -> &'static str {
    if b {
        "identical"
    } else {
        "differ"
    }
}

/// Desk-scale accuracy targets.
pub const DESK_MIN_ACC: f64 = 0.50;
pub const DESK_MAX_GAP: f64 = 0.05;

/// Desk-scale training of the baseline and 3C-DCT on CIFAR-10.
pub fn learnability(data_dir: Option<&Path>, mut progress: impl FnMut(&str, &train::EpochRecord)) -> Vec<Check> {
    let Some(dir) = data_dir else {
        return vec![Check::new("desk-scale learnability", false, "no CIFAR-10 directory given (set CIFAR10_DIR)")];
    };
    let (train_set, test_set) = match data::load_cifar10(dir) {
        Ok(d) => d,
        Err(e) => return vec![Check::new("desk-scale learnability", false, e.to_string())],
    };
    let mut accs = Vec::new();
    let mut out = Vec::new();
    for v in ["resnet20", "3c-dct"] {
        let cfg = TrainConfig { variant: v.into(), seed: 0, ..TrainConfig::desk_scale() };
        match train::train::<f32>(&cfg, &train_set, &test_set, |row| progress(v, row)) {
            Ok(o) => {
                let acc = o.best_acc;
                out.push(Check::new(format!("desk-scale {v}"), acc >= DESK_MIN_ACC, format!("best test accuracy {:.2}%", acc * 100.0)));
                accs.push(acc);
            }
            Err(e) => out.push(Check::new(format!("desk-scale {v}"), false, format!("error: {e}"))),
        }
    }
    if let [base, tp] = accs[..] {
        let gap = tp - base;
        out.push(Check::new("desk-scale gap", gap.abs() <= DESK_MAX_GAP, format!("3c-dct minus baseline {:+.2} points", gap * 100.0)));
    }
    out
}
