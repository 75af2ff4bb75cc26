//! Type-II DCT with the unnormalized forward / `1/N, 2/N` weighted inverse pair.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::scalar::{gemm, MatRef, Scalar};

/// `X[k] = sum_n x[n] cos(pi/N (n + 1/2) k)`.
pub fn dct1d<T: Scalar>(x: &[T]) -> Result<Vec<T>> {
    if x.is_empty() {
        return Err(Error::invalid("dct1d: empty input"));
    }
    let n = x.len();
    Ok((0..n)
        .map(|k| {
            let mut acc = 0.0;
            for (i, &v) in x.iter().enumerate() {
                acc += v.to_f64_lossy() * basis(n, i, k);
            }
            T::from_f64_lossy(acc)
        })
        .collect())
}

/// `x[n] = X[0]/N + (2/N) sum_{k>=1} X[k] cos(pi/N (n + 1/2) k)`.
pub fn idct1d<T: Scalar>(spectrum: &[T]) -> Result<Vec<T>> {
    if spectrum.is_empty() {
        return Err(Error::invalid("idct1d: empty input"));
    }
    let n = spectrum.len();
    Ok((0..n)
        .map(|i| {
            let mut acc = 0.0;
            for (k, &v) in spectrum.iter().enumerate() {
                acc += inverse_weight(n, k) * v.to_f64_lossy() * basis(n, i, k);
            }
            T::from_f64_lossy(acc)
        })
        .collect())
}

#[inline]
pub(crate) fn basis(n: usize, i: usize, k: usize) -> f64 {
    (PI / n as f64 * (i as f64 + 0.5) * k as f64).cos()
}

#[inline]
pub(crate) fn inverse_weight(n: usize, k: usize) -> f64 {
    if k == 0 {
        1.0 / n as f64
    } else {
        2.0 / n as f64
    }
}

/// Scale that turns the unnormalized coefficient `X[k]` into the orthonormal one.
pub fn orthonormal_scale(n: usize, k: usize) -> f64 {
    if k == 0 {
        (1.0 / n as f64).sqrt()
    } else {
        (2.0 / n as f64).sqrt()
    }
}

/// Precomputed forward and inverse matrices for batched application.
#[derive(Clone, Debug)]
pub(crate) struct DctPlan<T> {
    n: usize,
    /// `forward[k * n + i] = cos(pi/N (i + 1/2) k)`
    forward: Vec<T>,
    /// `inverse[i * n + k] = w_k cos(pi/N (i + 1/2) k)`
    inverse: Vec<T>,
}

impl<T: Scalar> DctPlan<T> {
    pub(crate) fn new(n: usize) -> Self {
        let mut forward = Vec::with_capacity(n * n);
        for k in 0..n {
            for i in 0..n {
                forward.push(T::from_f64_lossy(basis(n, i, k)));
            }
        }
        let mut inverse = Vec::with_capacity(n * n);
        for i in 0..n {
            for k in 0..n {
                inverse.push(T::from_f64_lossy(inverse_weight(n, k) * basis(n, i, k)));
            }
        }
        DctPlan { n, forward, inverse }
    }

    pub(crate) fn matrix(&self, inverse: bool) -> &[T] {
        if inverse {
            &self.inverse
        } else {
            &self.forward
        }
    }

    /// Transform the middle axis of a `[outer, n, inner]` buffer.
    pub(crate) fn apply(&self, data: &mut [T], outer: usize, inner: usize, inverse: bool, scratch: &mut Vec<T>) {
        self.multiply(data, outer, inner, inverse, false, scratch);
    }

    /// Applies the transpose of the forward (or inverse) matrix.
    pub(crate) fn apply_adjoint(&self, data: &mut [T], outer: usize, inner: usize, inverse: bool, scratch: &mut Vec<T>) {
        self.multiply(data, outer, inner, inverse, true, scratch);
    }

    fn multiply(&self, data: &mut [T], outer: usize, inner: usize, inverse: bool, transpose: bool, scratch: &mut Vec<T>) {
        let n = self.n;
        let m = self.matrix(inverse);
        if inner == 1 {
            // rows: [outer, n] * M^T
            scratch.clear();
            scratch.extend_from_slice(data);
            let rhs = if transpose { MatRef::new(m, n, n) } else { MatRef::t(m, n, n) };
            gemm(T::one(), MatRef::new(scratch, outer, n), rhs, T::zero(), data);
        } else {
            // M * [n, outer * inner]: every block side by side in one product
            let lhs = if transpose { MatRef::t(m, n, n) } else { MatRef::new(m, n, n) };
            let (block, ld) = (n * inner, outer * inner);
            scratch.clear();
            scratch.resize(2 * data.len(), T::zero());
            let (wide, prod) = scratch.split_at_mut(data.len());
            for o in 0..outer {
                for r in 0..n {
                    wide[r * ld + o * inner..][..inner].copy_from_slice(&data[o * block + r * inner..][..inner]);
                }
            }
            gemm(T::one(), lhs, MatRef::new(wide, n, ld), T::zero(), prod);
            for o in 0..outer {
                for r in 0..n {
                    data[o * block + r * inner..][..inner].copy_from_slice(&prod[r * ld + o * inner..][..inner]);
                }
            }
        }
    }
}
