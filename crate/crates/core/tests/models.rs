use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tpnet::models::{LayerType, Model, VariantSpec};
use tpnet::nn::{Graph, Mode};
use tpnet::transforms::TransformKind;
use tpnet::Tensor;

fn input(b: usize, n: usize, seed: u64) -> Tensor<f32> {
    Tensor::uniform(&[b, 3, n, n], -2.0, 2.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn loss(model: &Model<f32>, x: &Tensor<f32>, labels: &[usize], mode: Mode) -> f32 {
    let mut g = Graph::new();
    let xv = g.input(x.clone());
    let mut ctx = model.context(mode);
    let logits = model.forward(&mut g, &mut ctx, xv).unwrap();
    let l = g.softmax_cross_entropy(logits, labels).unwrap();
    g.value(l).data()[0]
}

#[test]
fn output_shape_and_initial_loss() {
    for v in ["resnet20", "3c-dct", "1c-ht", "3c-bwt", "resnet20+1c-dct-p", "all-dct"] {
        let model = Model::<f32>::new(v.parse().unwrap(), 1).unwrap();
        for b in [1, 3] {
            assert_eq!(model.predict(&input(b, 32, 2)).unwrap().shape(), &[b, 10], "{v}");
        }
        let labels: Vec<usize> = (0..8).map(|i| i % 10).collect();
        let l = loss(&model, &input(8, 32, 3), &labels, Mode::Train);
        let ln10 = 10f32.ln();
        assert!((l - ln10).abs() <= 0.5, "{v}: initial loss {l}");
    }
}

#[test]
fn eval_forward_is_deterministic() {
    let model = Model::<f32>::new("3c-dct".parse().unwrap(), 4).unwrap();
    let x = input(2, 32, 5);
    assert_eq!(model.predict(&x).unwrap().data(), model.predict(&x).unwrap().data());
    let again = Model::<f32>::new("3c-dct".parse().unwrap(), 4).unwrap();
    assert_eq!(model.predict(&x).unwrap().data(), again.predict(&x).unwrap().data());
}

#[test]
fn wrong_input_shape_is_rejected() {
    let model = Model::<f32>::new(VariantSpec::baseline(), 0).unwrap();
    assert!(model.predict(&Tensor::zeros(&[1, 3, 28, 28])).is_err());
    assert!(model.predict(&Tensor::zeros(&[1, 1, 32, 32])).is_err());
}

#[test]
fn replacement_pattern() {
    let base = Model::<f32>::new(VariantSpec::baseline(), 0).unwrap();
    let sites = base.list_replaceable_sites();
    assert_eq!(sites.len(), 9);
    assert!(sites.iter().all(|s| s.position == 2 && s.stride == 1));
    assert!(base.tp_layers().is_empty());

    for kind in TransformKind::ALL {
        let m = Model::<f32>::new(VariantSpec::tp(kind, 3), 0).unwrap();
        assert_eq!(m.tp_layers().len(), 9);
        let types = m.layer_types();
        assert_eq!(types.len(), 19);
        assert_eq!(types[0].1, LayerType::Conv);
        for (i, (name, t)) in types.iter().enumerate().skip(1) {
            let expect = if i % 2 == 0 { LayerType::Tp } else { LayerType::Conv };
            assert_eq!(*t, expect, "{name}");
        }
        let tp_names: Vec<String> = types.iter().filter(|t| t.1 == LayerType::Tp).map(|t| t.0.clone()).collect();
        let site_names: Vec<String> = m.list_replaceable_sites().into_iter().map(|s| s.name).collect();
        assert_eq!(tp_names, site_names);
    }
}

#[test]
fn all_replaced_pattern() {
    let m = Model::<f32>::new(VariantSpec::all_replaced(), 0).unwrap();
    assert_eq!(m.list_replaceable_sites().len(), 18);
    let types = m.layer_types();
    assert_eq!(types[0].1, LayerType::Conv);
    assert!(types[1..].iter().all(|t| t.1 == LayerType::Tp));
    let down: Vec<_> = m.tp_layers().into_iter().filter(|l| l.config().downsample).collect();
    assert_eq!(down.len(), 2);
    assert!(down.iter().all(|l| !l.config().shortcut));
}

#[test]
fn extra_layer_sits_before_pooling() {
    let m = Model::<f32>::new(VariantSpec::extra_layer(), 0).unwrap();
    let types = m.layer_types();
    assert_eq!(types.last().unwrap(), &("extra".to_string(), LayerType::Tp));
    let cfg = m.tp_layers()[0].config().clone();
    assert_eq!((cfg.cin, cfg.height, cfg.channels, cfg.shortcut), (64, 8, 1, true));
}

#[test]
fn training_mode_updates_running_stats_only_on_commit() {
    let mut model = Model::<f32>::new("1c-dct".parse().unwrap(), 0).unwrap();
    let before = model.running_stats().to_vec();
    let mut g = Graph::new();
    let xv = g.input(input(4, 32, 6));
    let pending = {
        let mut ctx = model.context(Mode::Train);
        model.forward(&mut g, &mut ctx, xv).unwrap();
        ctx.pending
    };
    assert_eq!(model.running_stats(), &before[..]);
    assert_eq!(pending.len(), before.len());
    model.commit_stats(pending);
    assert_ne!(model.running_stats(), &before[..]);
}

#[test]
fn invalid_specs() {
    let mut spec = VariantSpec::all_replaced();
    spec.channels = 3;
    assert!(Model::<f32>::new(spec, 0).is_err());
    let mut spec = VariantSpec::tp(TransformKind::Dct, 0);
    spec.replace_blocks = true;
    assert!(Model::<f32>::new(spec, 0).is_err());
    let mut spec = VariantSpec::baseline();
    spec.input_size = 30;
    assert!(Model::<f32>::new(spec, 0).is_err());
}
