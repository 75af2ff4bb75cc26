use std::f64::consts::PI;
use std::path::PathBuf;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tpnet::transforms::fixture::{self, Fixtures};
use tpnet::transforms::oracle::{
    dyadic_convolve_oracle, matrix_oracle2d, symmetric_convolve_oracle, symmetric_kernel_response, transform_matrix,
};
use tpnet::transforms::{bwt1d, ibwt1d, FilterBank, FilterBankSpec};
use tpnet::transforms::{dct1d, ht1d, idct2_truncate, pad_pow2, transform2d, truncate, TransformKind};
use tpnet::Tensor;

fn fixture_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/transforms.txt")
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn fixture_file_matches_derivation() {
    let generated = fixture::generate().unwrap();
    if std::env::var_os("TPNET_REGEN_FIXTURES").is_some() {
        generated.save(&fixture_path()).unwrap();
    }
    let stored = Fixtures::load(&fixture_path()).unwrap();
    assert_eq!(stored, generated);
}

#[test]
fn fixture_synthesis_taps_are_used_by_the_bank() {
    let stored = Fixtures::load(&fixture_path()).unwrap();
    let bank = FilterBank::new(&FilterBankSpec::bior13()).unwrap();
    let low = stored.get(fixture::BIOR13_SYNTH_LOW).unwrap();
    let high = stored.get(fixture::BIOR13_SYNTH_HIGH).unwrap();
    assert_eq!(low.values, bank.synthesis_low().taps);
    assert_eq!(low.offset, Some(bank.synthesis_low().offset));
    assert_eq!(high.values, bank.synthesis_high().taps);
    assert_eq!(high.offset, Some(bank.synthesis_high().offset));
}

#[test]
fn round_trip_all_kinds_and_sizes() {
    let mut r = rng(1);
    for kind in TransformKind::ALL {
        for n in [4, 8, 16, 32] {
            let x = Tensor::<f64>::uniform(&[2, 3, n, n], -1.0, 1.0, &mut r);
            let back = transform2d(&transform2d(&x, kind, false).unwrap(), kind, true).unwrap();
            assert!(back.max_abs_diff(&x) <= 1e-10, "{kind} n={n}");
            let xf = x.cast::<f32>();
            let back = transform2d(&transform2d(&xf, kind, false).unwrap(), kind, true).unwrap();
            assert!(back.max_abs_diff(&xf) <= 1e-5, "{kind} n={n} f32");
        }
    }
}

#[test]
fn separable_transform_matches_dense_oracle() {
    let mut r = rng(2);
    for kind in TransformKind::ALL {
        for (h, w) in [(4, 4), (8, 4), (16, 32), (2, 8)] {
            let x = Tensor::<f64>::uniform(&[2, h, w], -1.0, 1.0, &mut r);
            for inverse in [false, true] {
                let fast = transform2d(&x, kind, inverse).unwrap();
                let slow = matrix_oracle2d(&x, kind, inverse).unwrap();
                assert!(fast.max_abs_diff(&slow) <= 1e-10, "{kind} {h}x{w} inverse={inverse}");
            }
        }
    }
}

#[test]
fn dct_handles_any_length() {
    let mut r = rng(3);
    for (h, w) in [(7, 5), (28, 28), (1, 1), (3, 1)] {
        let x = Tensor::<f64>::uniform(&[h, w], -1.0, 1.0, &mut r);
        let back = transform2d(&transform2d(&x, TransformKind::Dct, false).unwrap(), TransformKind::Dct, true).unwrap();
        assert!(back.max_abs_diff(&x) <= 1e-10);
    }
    let x = Tensor::<f64>::zeros(&[6, 8]);
    assert!(transform2d(&x, TransformKind::Ht, false).is_err());
    assert!(transform2d(&x, TransformKind::Bwt, false).is_err());
}

#[test]
fn unit_plane_is_identity_scaling() {
    for kind in TransformKind::ALL {
        let x = Tensor::<f64>::from_vec(&[2, 1, 1], vec![3.0, -1.5]).unwrap();
        let y = transform2d(&x, kind, false).unwrap();
        let ratio = y.data()[0] / 3.0;
        assert!((y.data()[1] - ratio * -1.5).abs() < 1e-15, "{kind}");
    }
}

#[test]
fn hadamard_is_self_inverse() {
    let mut r = rng(4);
    let x = Tensor::<f64>::uniform(&[16, 8], -1.0, 1.0, &mut r);
    let y = transform2d(&transform2d(&x, TransformKind::Ht, false).unwrap(), TransformKind::Ht, false).unwrap();
    assert!(y.max_abs_diff(&x) <= 1e-12);
}

#[test]
fn haar_packet_tree_is_a_signed_permutation_of_hadamard() {
    for n in [2, 4, 8, 16, 32] {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let e: Vec<f64> = (0..n).map(|j| f64::from(u8::from(i == j))).collect();
                bwt1d(&e, &FilterBankSpec::hadamard()).unwrap()
            })
            .collect();
        // rows[i][k] is column i of the BWT matrix; rebuild rows of the matrix
        let bwt: Vec<Vec<f64>> = (0..n).map(|k| (0..n).map(|i| rows[i][k]).collect()).collect();
        let ht: Vec<Vec<f64>> = (0..n)
            .map(|k| {
                (0..n)
                    .map(|i| {
                        let e: Vec<f64> = (0..n).map(|j| f64::from(u8::from(i == j))).collect();
                        ht1d(&e).unwrap()[k] * (n as f64).sqrt()
                    })
                    .collect()
            })
            .collect();
        let mut used = vec![false; n];
        for row in &bwt {
            let hit = (0..n).find(|&p| {
                !used[p]
                    && [1.0, -1.0]
                        .iter()
                        .any(|s| row.iter().zip(&ht[p]).all(|(a, b)| (a - s * b).abs() < 1e-12))
            });
            let p = hit.unwrap_or_else(|| panic!("n={n}: row {row:?} is not a signed Hadamard row"));
            used[p] = true;
        }
    }
}

#[test]
fn bior13_round_trip_1d() {
    let mut r = rng(5);
    for n in [2, 4, 8, 16, 32, 64] {
        let x: Vec<f64> = Tensor::<f64>::uniform(&[n], -1.0, 1.0, &mut r).into_data();
        let c = bwt1d(&x, &FilterBankSpec::bior13()).unwrap();
        let back = ibwt1d(&c, &FilterBankSpec::bior13()).unwrap();
        for (a, b) in back.iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn dyadic_convolution_theorem_exhaustive_impulses() {
    for n in [2usize, 4, 8, 16] {
        for i in 0..n {
            for j in 0..n {
                let a: Vec<f64> = (0..n).map(|m| f64::from(u8::from(m == i))).collect();
                let x: Vec<f64> = (0..n).map(|m| f64::from(u8::from(m == j))).collect();
                check_dyadic(&a, &x);
            }
        }
    }
}

#[test]
fn dyadic_convolution_theorem_random_pairs() {
    let mut r = rng(6);
    for pair in 0..100 {
        let n = [2usize, 4, 8, 16][pair % 4];
        let a = Tensor::<f64>::uniform(&[n], -1.0, 1.0, &mut r).into_data();
        let x = Tensor::<f64>::uniform(&[n], -1.0, 1.0, &mut r).into_data();
        check_dyadic(&a, &x);
    }
}

fn check_dyadic(a: &[f64], x: &[f64]) {
    let n = a.len() as f64;
    let stored = Fixtures::load(&fixture_path()).unwrap();
    let p = stored.get(fixture::THEOREM2_SCALE_EXPONENT).unwrap().values[0];
    let lhs = ht1d(&dyadic_convolve_oracle(a, x).unwrap()).unwrap();
    let (ha, hx) = (ht1d(a).unwrap(), ht1d(x).unwrap());
    for k in 0..a.len() {
        assert!((lhs[k] - n.powf(p) * ha[k] * hx[k]).abs() <= 1e-10);
    }
}

#[test]
fn symmetric_convolution_theorem() {
    let stored = Fixtures::load(&fixture_path()).unwrap();
    let mut r = rng(7);
    for n in [2usize, 4, 8] {
        let per_bin = if n == 2 { stored.get(fixture::THEOREM1_PER_BIN).unwrap().values.clone() } else { vec![1.0; n] };
        for _ in 0..20 {
            let a = Tensor::<f64>::uniform(&[n], -1.0, 1.0, &mut r).into_data();
            let x = Tensor::<f64>::uniform(&[n], -1.0, 1.0, &mut r).into_data();
            let lhs = dct1d(&symmetric_convolve_oracle(&a, &x).unwrap()).unwrap();
            let (ka, dx) = (symmetric_kernel_response(&a), dct1d(&x).unwrap());
            for k in 0..n {
                assert!((lhs[k] - per_bin[k] * ka[k] * dx[k]).abs() <= 1e-10, "n={n} k={k}");
            }
        }
    }
    assert_eq!(stored.get(fixture::THEOREM1_TYPE2_KERNEL_CONSISTENT).unwrap().values, vec![0.0]);
}

/// Second, independent route: half-sample symmetric kernel, circular
/// convolution over the 2N period, then a two-tap average onto the
/// half-sample grid. Gives `DCT(v)[k] = 2 cos(pi k / 2N) A[k] X[k]` with
/// type-II transforms on both operands.
#[test]
fn symmetric_convolution_half_sample_route() {
    let mut r = rng(8);
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
        let lhs = dct1d(&v).unwrap();
        let (da, dx) = (dct1d(&a).unwrap(), dct1d(&x).unwrap());
        for k in 0..n {
            let rhs = 2.0 * (PI * k as f64 / (2 * n) as f64).cos() * da[k] * dx[k];
            assert!((lhs[k] - rhs).abs() <= 1e-10, "n={n} k={k}: {} vs {rhs}", lhs[k]);
        }
    }
}

#[test]
fn pad_and_truncate() {
    let mut r = rng(9);
    let x = Tensor::<f64>::uniform(&[2, 28, 28], -1.0, 1.0, &mut r);
    let p = pad_pow2(&x).unwrap();
    assert_eq!(p.shape(), &[2, 32, 32]);
    assert_eq!(truncate(&p, 28, 28).unwrap(), x);
    assert!(truncate(&x, 32, 32).is_err());
}

#[test]
fn truncated_inverse_keeps_constants() {
    let x = Tensor::<f64>::full(&[1, 16, 16], 2.5);
    let spec = transform2d(&x, TransformKind::Dct, false).unwrap();
    let y = idct2_truncate(&spec).unwrap();
    assert_eq!(y.shape(), &[1, 8, 8]);
    assert!(y.data().iter().all(|v| (v - 2.5).abs() < 1e-12));
}

#[test]
fn dense_matrices_invert() {
    for kind in TransformKind::ALL {
        let f = transform_matrix(kind, 8, false).unwrap();
        let g = transform_matrix(kind, 8, true).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let s: f64 = (0..8).map(|k| g[i][k] * f[k][j]).sum();
                assert!((s - f64::from(u8::from(i == j))).abs() < 1e-12);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn linearity(kind_ix in 0usize..3, log_h in 0u32..6, log_w in 0u32..6, alpha in -3.0f64..3.0, seed in any::<u64>()) {
        let kind = TransformKind::ALL[kind_ix];
        let (h, w) = (1usize << log_h, 1usize << log_w);
        let mut r = rng(seed);
        let x = Tensor::<f64>::uniform(&[h, w], -1.0, 1.0, &mut r);
        let y = Tensor::<f64>::uniform(&[h, w], -1.0, 1.0, &mut r);
        let mix = x.zip_map(&y, |a, b| alpha * a + b).unwrap();
        let lhs = transform2d(&mix, kind, false).unwrap();
        let tx = transform2d(&x, kind, false).unwrap();
        let ty = transform2d(&y, kind, false).unwrap();
        let rhs = tx.zip_map(&ty, |a, b| alpha * a + b).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-9 * (h * w) as f64);
    }

    #[test]
    fn round_trip_random(kind_ix in 0usize..3, log_h in 0u32..6, log_w in 0u32..6, seed in any::<u64>()) {
        let kind = TransformKind::ALL[kind_ix];
        let (h, w) = (1usize << log_h, 1usize << log_w);
        let mut r = rng(seed);
        let x = Tensor::<f64>::uniform(&[2, h, w], -10.0, 10.0, &mut r);
        let back = transform2d(&transform2d(&x, kind, false).unwrap(), kind, true).unwrap();
        prop_assert!(back.max_abs_diff(&x) <= 1e-10 * 10.0);
    }
}
