//! Walsh-Hadamard transform in natural (Sylvester) order.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `X = sqrt(1/N) H_N x`. Self-inverse.
pub fn ht1d<T: Scalar>(x: &[T]) -> Result<Vec<T>> {
    let n = x.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::invalid(format!("ht1d: length {n} is not a power of two")));
    }
    let mut out = x.to_vec();
    butterfly(&mut out, 1, 1);
    let s = T::from_f64_lossy(1.0 / (n as f64).sqrt());
    out.iter_mut().for_each(|v| *v *= s);
    Ok(out)
}

/// Unnormalized in-place butterflies along the middle axis of `[outer, n, inner]`.
///
/// Each of the `log2(n)` stages performs only additions and subtractions.
pub(crate) fn butterfly<T: Scalar>(data: &mut [T], outer: usize, inner: usize) {
    let n = data.len() / (outer * inner);
    debug_assert!(n.is_power_of_two());
    let block = n * inner;
    for o in 0..outer {
        let sig = &mut data[o * block..(o + 1) * block];
        let mut half = 1;
        while half < n {
            for start in (0..n).step_by(2 * half) {
                for j in start..start + half {
                    let (lo, hi) = sig.split_at_mut((j + half) * inner);
                    let a = &mut lo[j * inner..(j + 1) * inner];
                    let b = &mut hi[..inner];
                    for (p, q) in a.iter_mut().zip(b.iter_mut()) {
                        let (u, v) = (*p, *q);
                        *p = u + v;
                        *q = u - v;
                    }
                }
            }
            half *= 2;
        }
    }
}

/// `H_N` built by the Kronecker recursion `H_N = H_2 (x) H_{N/2}`.
pub fn hadamard_matrix(n: usize) -> Result<Vec<Vec<f64>>> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::invalid(format!("hadamard_matrix: {n} is not a power of two")));
    }
    let mut h = vec![vec![1.0]];
    while h.len() < n {
        let m = h.len();
        let mut next = vec![vec![0.0; 2 * m]; 2 * m];
        for (i, row) in h.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                next[i][j] = v;
                next[i][j + m] = v;
                next[i + m][j] = v;
                next[i + m][j + m] = -v;
            }
        }
        h = next;
    }
    Ok(h)
}
