use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tpnet::nn::{grad_check, Graph, ParamStore, ThresholdAct, Var};
use tpnet::tp::{Nonlinearity, TpBranchVars, TpConfig, TpLayer};
use tpnet::transforms::{Plan2d, TransformKind};
use tpnet::{Scalar, Tensor};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn identity_mix<T: Scalar>(c: usize) -> Tensor<T> {
    let mut v = Tensor::zeros(&[c, c, 1, 1]);
    for i in 0..c {
        v.data_mut()[i * c + i] = T::one();
    }
    v
}

fn run<T: Scalar>(layer: &TpLayer<T>, store: &ParamStore<T>, x: &Tensor<T>) -> Tensor<T> {
    let mut g = Graph::new();
    let xv = g.input(x.clone());
    let y = layer.forward(&mut g, store, xv).unwrap();
    g.value(y).clone()
}

fn soft(x: f64, t: f64) -> f64 {
    let mut g = Graph::<f64>::new();
    let xv = g.input(Tensor::from_vec(&[1, 1], vec![x]).unwrap());
    let tv = g.input(Tensor::from_vec(&[1, 1], vec![t]).unwrap());
    let y = g.threshold(xv, tv, ThresholdAct::Soft).unwrap();
    g.value(y).data()[0]
}

#[test]
fn soft_threshold_examples() {
    assert!((soft(1.2, 0.5) - 0.7).abs() < 1e-12);
    assert_eq!(soft(-0.3, 0.5), 0.0);
    assert!((soft(-1.0, 0.5) + 0.5).abs() < 1e-12);
    // the effective threshold is |t|
    assert!((soft(1.2, -0.5) - 0.7).abs() < 1e-12);
    assert_eq!(soft(-0.7, 0.0), -0.7);
}

#[test]
fn soft_threshold_is_antisymmetric() {
    let mut r = rng(1);
    let x = Tensor::<f64>::uniform(&[2, 3, 4, 4], -2.0, 2.0, &mut r);
    let t = Tensor::<f64>::uniform(&[4, 4], -1.0, 1.0, &mut r);
    let mut g = Graph::new();
    let (xp, xn, tv) = (g.input(x.clone()), g.input(x.map(|v| -v)), g.input(t));
    let yp = g.threshold(xp, tv, ThresholdAct::Soft).unwrap();
    let yn = g.threshold(xn, tv, ThresholdAct::Soft).unwrap();
    let sum = g.value(yp).zip_map(g.value(yn), |a, b| a + b).unwrap();
    assert_eq!(sum.max_abs(), 0.0);
    let bad = g.input(Tensor::zeros(&[3, 4]));
    assert!(g.threshold(xp, bad, ThresholdAct::Soft).is_err());
}

#[test]
fn scale_examples_and_gradient() {
    let mut r = rng(2);
    let x = Tensor::<f64>::uniform(&[2, 3, 4, 5], -1.0, 1.0, &mut r);
    let mut g = Graph::new();
    let xv = g.input(x.clone());
    let ones = g.input(Tensor::ones(&[4, 5]));
    let zeros = g.input(Tensor::zeros(&[4, 5]));
    let y1 = g.scale_map(xv, ones).unwrap();
    let y0 = g.scale_map(xv, zeros).unwrap();
    assert_eq!(g.value(y1), &x);
    assert_eq!(g.value(y0).max_abs(), 0.0);
    let a = Tensor::<f64>::uniform(&[4, 5], -1.0, 1.0, &mut r);
    let rep = grad_check(&[x, a], 1e-5, |g, v| g.scale_map(v[0], v[1])).unwrap();
    assert!(rep.max_rel_error <= 1e-4, "{rep:?}");
}

#[test]
fn identity_configuration_doubles_input() {
    let mut r = rng(3);
    for kind in TransformKind::ALL {
        for (h, w) in [(8, 8), (6, 10), (1, 1)] {
            let mut store = ParamStore::<f32>::new();
            let layer = TpLayer::new(&mut store, "tp", TpConfig::new(kind, 1, 3, h, w), &mut r).unwrap();
            store.set_value(layer.branches()[0].mix, identity_mix(3)).unwrap();
            let x = Tensor::<f32>::uniform(&[2, 3, h, w], -1.0, 1.0, &mut r);
            let y = run(&layer, &store, &x);
            assert_eq!(y.shape(), x.shape());
            assert!(y.max_abs_diff(&x.map(|v| 2.0 * v)) <= 1e-5, "{kind} {h}x{w}");
        }
    }
}

#[test]
fn zero_second_branch_equals_single_branch_without_shortcut() {
    let mut r = rng(4);
    for kind in TransformKind::ALL {
        let mut store = ParamStore::<f64>::new();
        let two = TpLayer::new(&mut store, "p2", TpConfig::new(kind, 2, 4, 8, 8), &mut r).unwrap();
        let mut cfg = TpConfig::new(kind, 1, 4, 8, 8);
        cfg.shortcut = false;
        let one = TpLayer::new(&mut store, "p1", cfg, &mut r).unwrap();
        let (b0, b1, s) = (&two.branches()[0], &two.branches()[1], &one.branches()[0]);
        let t0 = Tensor::<f64>::uniform(&[8, 8], -0.5, 0.5, &mut r);
        let a0 = Tensor::<f64>::uniform(&[8, 8], 0.5, 1.5, &mut r);
        store.set_value(s.mix, store.value(b0.mix).clone()).unwrap();
        store.set_value(b0.threshold.unwrap(), t0.clone()).unwrap();
        store.set_value(s.threshold.unwrap(), t0).unwrap();
        store.set_value(b0.scale.unwrap(), a0.clone()).unwrap();
        store.set_value(s.scale.unwrap(), a0).unwrap();
        for id in [b1.scale.unwrap(), b1.mix, b1.threshold.unwrap()] {
            let z = Tensor::zeros(store.value(id).shape());
            store.set_value(id, z).unwrap();
        }
        let x = Tensor::<f64>::uniform(&[2, 4, 8, 8], -1.0, 1.0, &mut r);
        assert!(run(&two, &store, &x).max_abs_diff(&run(&one, &store, &x)) <= 1e-12, "{kind}");
    }
}

#[test]
fn channel_sum_commutes_with_inverse() {
    let mut r = rng(5);
    for kind in TransformKind::ALL {
        let mut store = ParamStore::<f32>::new();
        let layer = TpLayer::new(&mut store, "p3", TpConfig::new(kind, 3, 4, 12, 12), &mut r).unwrap();
        let grid = layer.config().param_grid();
        for b in layer.branches() {
            let t = Tensor::uniform(&[grid.0, grid.1], -0.5, 0.5, &mut r);
            store.set_value(b.threshold.unwrap(), t).unwrap();
        }
        let mut cfg = TpConfig::new(kind, 1, 4, 12, 12);
        cfg.shortcut = false;
        let single = TpLayer::new(&mut ParamStore::<f32>::new(), "one", cfg, &mut r).unwrap();
        let x = Tensor::<f32>::uniform(&[2, 4, 12, 12], -1.0, 1.0, &mut r);
        let whole = run(&layer, &store, &x);
        let mut g = Graph::new();
        let xv = g.input(x.clone());
        let vars = layer.branch_vars(&mut g, &store);
        let parts: Vec<Var> = vars.iter().map(|v| single.forward_with(&mut g, xv, &[*v]).unwrap()).collect();
        let total = g.sum(&parts).unwrap();
        assert!(g.value(total).max_abs_diff(&whole) <= 1e-5 * whole.max_abs().max(1.0), "{kind}");
    }
}

#[test]
fn relu_plain_differs_from_soft_only_pointwise() {
    let mut r = rng(6);
    let x = Tensor::<f64>::uniform(&[1, 3, 8, 8], -1.0, 1.0, &mut r);
    let mut s_store = ParamStore::<f64>::new();
    let soft_layer = TpLayer::new(&mut s_store, "s", TpConfig::new(TransformKind::Dct, 1, 3, 8, 8), &mut r).unwrap();
    let mut cfg = TpConfig::new(TransformKind::Dct, 1, 3, 8, 8);
    cfg.nonlinearity = Nonlinearity::ReluPlain;
    let mut p_store = ParamStore::<f64>::new();
    let plain = TpLayer::new(&mut p_store, "p", cfg, &mut r).unwrap();
    let mix = s_store.value(soft_layer.branches()[0].mix).clone();
    p_store.set_value(plain.branches()[0].mix, mix.clone()).unwrap();
    assert!(plain.branches()[0].threshold.is_none() && plain.branches()[0].bias.is_some());

    let diff = run(&plain, &p_store, &x).zip_map(&run(&soft_layer, &s_store, &x), |a, b| a - b).unwrap();
    // expected: T^-1(relu(m) - m) where m is the mixed spectrum
    let plan = Arc::new(Plan2d::new(TransformKind::Dct, 8, 8).unwrap());
    let mut g = Graph::new();
    let xv = g.input(x);
    let spec = g.transform(xv, &plan, false).unwrap();
    let mv = g.input(mix);
    let m = g.conv2d(spec, mv, 1, 0).unwrap();
    let neg = g.value(m).map(|v| if v < 0.0 { -v } else { 0.0 });
    let nv = g.input(neg);
    let expect = g.transform(nv, &plan, true).unwrap();
    assert!(diff.max_abs_diff(g.value(expect)) <= 1e-10);
}

fn layer_grad_check(kind: TransformKind, p: usize, nonlinearity: Nonlinearity, h: usize, downsample: bool) {
    let mut r = rng(7 + p as u64);
    let mut cfg = TpConfig::new(kind, p, 4, h, h);
    cfg.nonlinearity = nonlinearity;
    if downsample {
        cfg.downsample = true;
        cfg.shortcut = false;
        cfg.cout = 6;
    }
    let mut store = ParamStore::<f64>::new();
    let layer = TpLayer::new(&mut store, "tp", cfg.clone(), &mut r).unwrap();
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
    let thresholds = nonlinearity.has_thresholds();
    let rep = grad_check(&inputs, 1e-5, |g, v| {
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
    })
    .unwrap();
    assert!(rep.max_rel_error <= 1e-4, "{kind} P={p} {nonlinearity}: {rep:?}");
    assert!(rep.checked > 4 * rep.skipped, "{rep:?}");
}

#[test]
fn full_layer_gradient_dct() {
    layer_grad_check(TransformKind::Dct, 1, Nonlinearity::SoftThreshold, 8, false);
}

#[test]
fn full_layer_gradient_multichannel_and_other_kinds() {
    layer_grad_check(TransformKind::Dct, 2, Nonlinearity::SoftThreshold, 4, false);
    layer_grad_check(TransformKind::Ht, 1, Nonlinearity::SoftThreshold, 3, false);
    layer_grad_check(TransformKind::Bwt, 2, Nonlinearity::SoftThreshold, 4, false);
}

#[test]
fn full_layer_gradient_ablation_nonlinearities() {
    for n in Nonlinearity::ALL {
        layer_grad_check(TransformKind::Dct, 1, n, 4, false);
    }
}

#[test]
fn downsampling_layer() {
    layer_grad_check(TransformKind::Dct, 1, Nonlinearity::SoftThreshold, 8, true);
    // constant image with identity-like mixing stays constant at half resolution
    let mut r = rng(9);
    let mut cfg = TpConfig::new(TransformKind::Dct, 1, 2, 8, 8);
    cfg.downsample = true;
    cfg.shortcut = false;
    let mut store = ParamStore::<f64>::new();
    let layer = TpLayer::new(&mut store, "down", cfg, &mut r).unwrap();
    store.set_value(layer.branches()[0].mix, identity_mix(2)).unwrap();
    let x = Tensor::<f64>::full(&[1, 2, 8, 8], 1.25);
    let y = run(&layer, &store, &x);
    assert_eq!(y.shape(), &[1, 2, 4, 4]);
    assert!(y.data().iter().all(|v| (v - 1.25).abs() < 1e-12));
}

#[test]
fn channel_mismatch_is_rejected() {
    let mut r = rng(10);
    let mut store = ParamStore::<f64>::new();
    let layer = TpLayer::new(&mut store, "tp", TpConfig::new(TransformKind::Dct, 1, 4, 8, 8), &mut r).unwrap();
    let mut g = Graph::new();
    let x = g.input(Tensor::zeros(&[1, 3, 8, 8]));
    assert!(layer.forward(&mut g, &store, x).is_err());
}
