//! Reference implementations used to cross-check the fast kernels.
//!
//! Nothing here shares code with the fast paths: transform matrices are
//! built from their defining formulas (cosine sum, Kronecker recursion,
//! product of per-stage filter-bank matrices) and applied by plain loops.

use std::f64::consts::PI;

use super::hadamard::hadamard_matrix;
use super::wavelet::{analysis_stage_matrix, invert, FilterBankSpec};
use super::TransformKind;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Dense `n x n` matrix of the 1-D transform of `kind`.
pub fn transform_matrix(kind: TransformKind, n: usize, inverse: bool) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::invalid("transform_matrix: n must be positive"));
    }
    match kind {
        TransformKind::Dct => {
            let nf = n as f64;
            let m = (0..n)
                .map(|r| {
                    (0..n)
                        .map(|c| {
                            if inverse {
                                // row = sample, column = frequency
                                let w = if c == 0 { 1.0 / nf } else { 2.0 / nf };
                                w * (PI * (2 * r + 1) as f64 * c as f64 / (2.0 * nf)).cos()
                            } else {
                                (PI * (2 * c + 1) as f64 * r as f64 / (2.0 * nf)).cos()
                            }
                        })
                        .collect()
                })
                .collect();
            Ok(m)
        }
        TransformKind::Ht => {
            let s = 1.0 / (n as f64).sqrt();
            Ok(hadamard_matrix(n)?.into_iter().map(|row| row.into_iter().map(|v| v * s).collect()).collect())
        }
        TransformKind::Bwt => {
            let fwd = block_wavelet_matrix(&FilterBankSpec::bior13(), n)?;
            if inverse {
                invert(&fwd).ok_or_else(|| Error::invalid("block wavelet matrix is singular"))
            } else {
                Ok(fwd)
            }
        }
    }
}

/// Product of the block-diagonal stage matrices of the full packet tree.
pub fn block_wavelet_matrix(spec: &FilterBankSpec, n: usize) -> Result<Vec<Vec<f64>>> {
    let stages = FilterBankSpec::stages_for(n)?;
    let mut total: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for s in 0..stages {
        let seg = n >> s;
        let block = analysis_stage_matrix(spec, seg)?;
        let mut stage = vec![vec![0.0; n]; n];
        for start in (0..n).step_by(seg) {
            for i in 0..seg {
                for j in 0..seg {
                    stage[start + i][start + j] = block[i][j];
                }
            }
        }
        total = matmul(&stage, &total);
    }
    Ok(total)
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let m = b[0].len();
    let k = b.len();
    (0..n)
        .map(|i| (0..m).map(|j| (0..k).map(|t| a[i][t] * b[t][j]).sum()).collect())
        .collect()
}

/// `Y = M_H X M_W^T` per trailing `H x W` plane, by explicit matrix products.
pub fn matrix_oracle2d<T: Scalar>(x: &Tensor<T>, kind: TransformKind, inverse: bool) -> Result<Tensor<T>> {
    let shape = x.shape();
    if shape.len() < 2 {
        return Err(Error::shape("matrix_oracle2d needs at least 2 dimensions"));
    }
    let (h, w) = (shape[shape.len() - 2], shape[shape.len() - 1]);
    super::check_kind_dims(kind, h, w)?;
    let mh = transform_matrix(kind, h, inverse)?;
    let mw = transform_matrix(kind, w, inverse)?;
    let planes = x.len() / (h * w);
    let mut out = Vec::with_capacity(x.len());
    for p in 0..planes {
        let plane = &x.data()[p * h * w..(p + 1) * h * w];
        // tmp = M_H X
        let mut tmp = vec![0.0; h * w];
        for i in 0..h {
            for j in 0..w {
                tmp[i * w + j] = (0..h).map(|t| mh[i][t] * plane[t * w + j].to_f64_lossy()).sum();
            }
        }
        for i in 0..h {
            for j in 0..w {
                let v: f64 = (0..w).map(|t| tmp[i * w + t] * mw[j][t]).sum();
                out.push(T::from_f64_lossy(v));
            }
        }
    }
    Tensor::from_vec(shape, out)
}

/// Symmetric convolution `a *_s x = a~ * x`, with `a~[k] = a[|N-1-k|]`.
///
/// `x` is extended half-sample symmetrically (`x[-1-n] = x[n]`,
/// `x[2N-1-n] = x[n]`) and the output window is centred on the kernel
/// midpoint, so `y[n] = sum_k a~[k] x[n + N - 1 - k]`.
pub fn symmetric_convolve_oracle(a: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    if a.len() != n {
        return Err(Error::invalid(format!("symmetric convolution: lengths {} and {n} differ", a.len())));
    }
    if n == 0 {
        return Err(Error::invalid("symmetric convolution: empty input"));
    }
    let ext = symmetric_kernel(a);
    let period = 2 * n as isize;
    let sample = |m: isize| {
        let r = m.rem_euclid(period) as usize;
        if r < n {
            x[r]
        } else {
            x[2 * n - 1 - r]
        }
    };
    Ok((0..n)
        .map(|i| {
            ext.iter()
                .enumerate()
                .map(|(k, &c)| c * sample(i as isize + n as isize - 1 - k as isize))
                .sum()
        })
        .collect())
}

/// `a~[k] = a[|N-1-k|]` for `k = 0..2N-2`.
pub fn symmetric_kernel(a: &[f64]) -> Vec<f64> {
    let n = a.len() as isize;
    (0..2 * n - 1).map(|k| a[(n - 1 - k).unsigned_abs()]).collect()
}

/// Frequency response of the whole-sample symmetric kernel `a~` on the
/// type-II DCT grid: `K[k] = a[0] + 2 sum_{m>=1} a[m] cos(pi k m / N)`.
pub fn symmetric_kernel_response(a: &[f64]) -> Vec<f64> {
    let n = a.len();
    (0..n)
        .map(|k| {
            a[0] + 2.0
                * (1..n)
                    .map(|m| a[m] * (PI * k as f64 * m as f64 / n as f64).cos())
                    .sum::<f64>()
        })
        .collect()
}

/// Dyadic convolution `y[n] = sum_m a[m] x[n XOR m]`.
pub fn dyadic_convolve_oracle(a: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    if a.len() != n {
        return Err(Error::invalid(format!("dyadic convolution: lengths {} and {n} differ", a.len())));
    }
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::invalid(format!("dyadic convolution: length {n} is not a power of two")));
    }
    Ok((0..n).map(|i| (0..n).map(|m| a[m] * x[i ^ m]).sum()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn dyadic_identity_and_swap() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(dyadic_convolve_oracle(&[1.0, 0.0, 0.0, 0.0], &x).unwrap(), x.to_vec());
        assert_eq!(dyadic_convolve_oracle(&[0.0, 1.0, 0.0, 0.0], &x).unwrap(), vec![2.0, 1.0, 4.0, 3.0]);
        assert!(dyadic_convolve_oracle(&[1.0; 3], &[1.0; 3]).is_err());
    }

    #[test]
    fn symmetric_centre_impulse_is_identity() {
        let x = [0.3, -1.2, 2.0, 0.7];
        let y = symmetric_convolve_oracle(&[1.0, 0.0, 0.0, 0.0], &x).unwrap();
        for (a, b) in y.iter().zip(x) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
        assert_eq!(symmetric_convolve_oracle(&[0.0; 4], &x).unwrap(), vec![0.0; 4]);
        assert!(symmetric_convolve_oracle(&[1.0; 3], &x).is_err());
    }

    #[test]
    fn kernel_index_rule() {
        assert_eq!(symmetric_kernel(&[1.0, 2.0, 3.0]), vec![3.0, 2.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn dct_matrices_invert() {
        let f = transform_matrix(TransformKind::Dct, 8, false).unwrap();
        let g = transform_matrix(TransformKind::Dct, 8, true).unwrap();
        let p = matmul(&g, &f);
        for (i, row) in p.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_abs_diff_eq!(v, f64::from(u8::from(i == j)), epsilon = 1e-12);
            }
        }
    }
}
