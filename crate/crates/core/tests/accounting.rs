use tpnet::accounting::{count_macs, count_params, cost_report, transform_macs, walk_params, Convention};
use tpnet::models::{Model, VariantSpec};
use tpnet::transforms::TransformKind;

/// (C, N) of the nine replaced block positions.
fn sites() -> Vec<(u64, u64)> {
    [(16, 32), (32, 16), (64, 8)].iter().flat_map(|&s| [s; 3]).collect()
}

fn conv_site_params(c: u64) -> u64 {
    9 * c * c
}

fn tp_site_params(c: u64, n: u64, p: u64) -> u64 {
    p * (2 * n * n + c * c)
}

fn tp_site_macs(kind: TransformKind, c: u64, n: u64, p: u64) -> u64 {
    let transforms = if kind == TransformKind::Ht { 0 } else { 4 * n * n * n * c };
    transforms + p * n * n * c * c + p * n * n * c
}

fn params(variant: &str) -> u64 {
    let m = Model::<f32>::new(variant.parse().unwrap(), 0).unwrap();
    count_params(&m).total_params()
}

fn macs(variant: &str) -> u64 {
    count_macs(&variant.parse().unwrap(), 32, Convention::MatrixProduct).unwrap().total_macs()
}

#[test]
fn table_v_parameter_totals() {
    assert_eq!(params("resnet20"), 272_474);
    assert_eq!(params("1c-dct"), 151_514);
    assert_eq!(params("1c-ht"), 151_514);
    assert_eq!(params("3c-dct"), 199_898);
    assert_eq!(params("3c-ht"), 199_898);
    assert_eq!(params("3c-bwt"), 199_898);
    assert_eq!(params("resnet20+1c-dct-p"), 276_826);
}

#[test]
fn ablation_parameter_totals() {
    assert_eq!(params("1c-dct,tp-shortcut=off"), 151_514);
    assert_eq!(params("1c-dct,scaling=off"), 147_482);
    assert_eq!(params("1c-dct,nonlinearity=relu-threshold"), 151_514);
    assert_eq!(params("1c-dct,nonlinearity=relu"), 147_818);
    assert_eq!(params("1c-dct,nonlinearity=leaky-relu"), 151_514);
    assert_eq!(params("1c-dct,nonlinearity=silu"), 151_514);
    assert_eq!(params("all-dct"), 51_034);
    assert_eq!(params("2c-dct"), 175_706);
    assert_eq!(params("4c-dct,tp-shortcut=on"), 224_090);
    assert_eq!(params("5c-ht"), 248_282);
    assert_eq!(params("6c-ht"), 272_474);
}

#[test]
fn parameter_deltas_match_closed_form() {
    let base = params("resnet20");
    for kind in TransformKind::ALL {
        for p in 1..=6u64 {
            let delta: i64 = sites()
                .iter()
                .map(|&(c, n)| conv_site_params(c) as i64 - tp_site_params(c, n, p) as i64)
                .sum();
            let variant = format!("{p}c-{kind}");
            assert_eq!(base as i64 - params(&variant) as i64, delta, "{variant}");
        }
    }
}

#[test]
fn mac_deltas_match_closed_form() {
    let base = macs("resnet20");
    let expect = |kind, p| -> i64 {
        sites()
            .iter()
            .map(|&(c, n)| (9 * n * n * c * c) as i64 - tp_site_macs(kind, c, n, p) as i64)
            .sum()
    };
    assert_eq!(expect(TransformKind::Dct, 1), 10_530_816);
    assert_eq!(expect(TransformKind::Ht, 1), 18_788_352);
    for kind in TransformKind::ALL {
        for p in 1..=5u64 {
            let variant = format!("{p}c-{kind}");
            assert_eq!(base as i64 - macs(&variant) as i64, expect(kind, p), "{variant}");
        }
    }
}

#[test]
fn mac_totals_within_half_percent_of_table_v() {
    for (variant, paper) in [
        ("resnet20", 41.32),
        ("1c-dct", 30.79),
        ("3c-dct", 35.68),
        ("1c-ht", 22.53),
        ("3c-ht", 27.42),
        ("3c-bwt", 35.68),
        ("resnet20+1c-dct-p", 41.65),
    ] {
        let m = macs(variant) as f64 / 1e6;
        assert!((m - paper).abs() / paper <= 0.005, "{variant}: {m:.3}M vs {paper}M");
    }
}

#[test]
fn counts_are_affine_in_p() {
    let per_site_params: u64 = sites().iter().map(|&(c, n)| 2 * n * n + c * c).sum();
    let per_site_macs: u64 = sites().iter().map(|&(c, n)| n * n * c * c + n * n * c).sum();
    for kind in TransformKind::ALL {
        for p in 1..5 {
            let (a, b) = (format!("{p}c-{kind}"), format!("{}c-{kind}", p + 1));
            assert_eq!(params(&b) - params(&a), per_site_params);
            assert_eq!(macs(&b) - macs(&a), per_site_macs);
        }
    }
}

#[test]
fn formula_and_parameter_walk_agree() {
    for v in [
        "resnet20",
        "1c-dct",
        "3c-ht",
        "3c-bwt",
        "resnet20+1c-dct-p",
        "all-dct",
        "1c-dct,scaling=off",
        "1c-dct,nonlinearity=relu",
        "2c-ht,input-size=28",
    ] {
        let m = Model::<f32>::new(v.parse().unwrap(), 3).unwrap();
        assert_eq!(count_params(&m).total_params(), walk_params(&m), "{v}");
    }
}

#[test]
fn non_power_of_two_inputs_grow_ht_models() {
    let dct = params("1c-dct,input-size=28");
    let ht = params("1c-ht,input-size=28");
    // HT grids pad 28 -> 32, 14 -> 16, 7 -> 8
    let padded: u64 = [(28u64, 32u64), (14, 16), (7, 8)].iter().map(|&(a, b)| 3 * 2 * (b * b - a * a)).sum();
    assert_eq!(ht - dct, padded);
}

#[test]
fn report_rows_sum_and_render() {
    let m = Model::<f32>::new(VariantSpec::tp(TransformKind::Dct, 3), 0).unwrap();
    for convention in Convention::ALL {
        let r = cost_report(&m, convention);
        assert_eq!(r.total_params(), 199_898);
        let csv = r.to_csv();
        assert!(csv.starts_with("layer,params,macs\n"));
        assert!(csv.contains(&format!("total,199898,{}", r.total_macs())));
        assert!(r.to_table().contains("199898"));
    }
    let fast = cost_report(&m, Convention::FastTransform).total_macs();
    let matrix = cost_report(&m, Convention::MatrixProduct).total_macs();
    let free = cost_report(&m, Convention::HtFree).total_macs();
    assert!(free < fast && fast < matrix);
    let transforms: u64 = sites()
        .iter()
        .map(|&(c, n)| 2 * transform_macs(TransformKind::Dct, c as usize, n as usize, n as usize, Convention::MatrixProduct))
        .sum();
    assert_eq!(matrix - free, transforms);
}
