//! Separable 2-D DCT, Hadamard and block wavelet transforms.
//!
//! Every 2-D routine acts on the two trailing axes `[.., H, W]` and treats
//! the leading axes as independent planes.

mod dct;
pub mod fixture;
mod hadamard;
pub mod oracle;
mod wavelet;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub use dct::{dct1d, idct1d};
pub use hadamard::{hadamard_matrix, ht1d};
pub use oracle::{dyadic_convolve_oracle, matrix_oracle2d, symmetric_convolve_oracle};
pub use wavelet::{analysis_stage_matrix, bwt1d, ibwt1d, FilterBank, FilterBankSpec, PlacedFilter};

pub use dct::orthonormal_scale;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TransformKind {
    /// Type-II DCT, unnormalized forward.
    Dct,
    /// Walsh-Hadamard, `1/sqrt(N)` on both directions.
    Ht,
    /// Bior 1.3 block wavelet packet.
    Bwt,
}

impl TransformKind {
    pub const ALL: [TransformKind; 3] = [TransformKind::Dct, TransformKind::Ht, TransformKind::Bwt];

    /// HT and BWT only exist on power-of-two lengths.
    pub fn needs_pow2(self) -> bool {
        !matches!(self, TransformKind::Dct)
    }

    /// The Hadamard transform needs no multiplications.
    pub fn is_multiplication_free(self) -> bool {
        matches!(self, TransformKind::Ht)
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransformKind::Dct => "dct",
            TransformKind::Ht => "ht",
            TransformKind::Bwt => "bwt",
        })
    }
}

impl FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dct" => Ok(TransformKind::Dct),
            "ht" | "hadamard" => Ok(TransformKind::Ht),
            "bwt" | "wavelet" => Ok(TransformKind::Bwt),
            other => Err(Error::invalid(format!("unknown transform kind '{other}'"))),
        }
    }
}

pub(crate) fn check_kind_dims(kind: TransformKind, h: usize, w: usize) -> Result<()> {
    if h == 0 || w == 0 {
        return Err(Error::shape("transform of an empty plane"));
    }
    if kind.needs_pow2() && !(h.is_power_of_two() && w.is_power_of_two()) {
        return Err(Error::shape(format!(
            "{kind} needs power-of-two spatial dims, got {h}x{w}; pad first"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug)]
enum Axis<T> {
    Dct(dct::DctPlan<T>),
    Ht(usize),
    Bwt(FilterBank),
}

impl<T: Scalar> Axis<T> {
    fn new(kind: TransformKind, n: usize) -> Result<Self> {
        Ok(match kind {
            TransformKind::Dct => Axis::Dct(dct::DctPlan::new(n)),
            TransformKind::Ht => Axis::Ht(n),
            TransformKind::Bwt => Axis::Bwt(FilterBank::new(&FilterBankSpec::bior13())?),
        })
    }

    fn apply(&self, data: &mut [T], outer: usize, inner: usize, inverse: bool, scratch: &mut Vec<T>) {
        match self {
            Axis::Dct(plan) => plan.apply(data, outer, inner, inverse, scratch),
            Axis::Ht(n) => {
                hadamard::butterfly(data, outer, inner);
                let s = T::from_f64_lossy(1.0 / (*n as f64).sqrt());
                data.iter_mut().for_each(|v| *v *= s);
            }
            Axis::Bwt(bank) => {
                if inverse {
                    bank.inverse_lanes(data, outer, inner, scratch)
                } else {
                    bank.forward_lanes(data, outer, inner, scratch)
                }
            }
        }
    }

    fn apply_adjoint(&self, data: &mut [T], outer: usize, inner: usize, inverse: bool, scratch: &mut Vec<T>) {
        match self {
            Axis::Dct(plan) => plan.apply_adjoint(data, outer, inner, inverse, scratch),
            // orthogonal and symmetric
            Axis::Ht(_) => self.apply(data, outer, inner, inverse, scratch),
            Axis::Bwt(bank) => {
                if inverse {
                    bank.inverse_adjoint_lanes(data, outer, inner, scratch)
                } else {
                    bank.forward_adjoint_lanes(data, outer, inner, scratch)
                }
            }
        }
    }
}

/// Reusable separable 2-D transform for a fixed `H x W` plane size.
#[derive(Clone, Debug)]
pub struct Plan2d<T> {
    kind: TransformKind,
    h: usize,
    w: usize,
    rows: Axis<T>,
    cols: Axis<T>,
}

impl<T: Scalar> Plan2d<T> {
    pub fn new(kind: TransformKind, h: usize, w: usize) -> Result<Self> {
        check_kind_dims(kind, h, w)?;
        Ok(Plan2d { kind, h, w, rows: Axis::new(kind, w)?, cols: Axis::new(kind, h)? })
    }

    pub fn kind(&self) -> TransformKind {
        self.kind
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    /// Transforms every trailing `H x W` plane of `data` in place: width first, then height.
    pub fn apply_in_place(&self, data: &mut [T], inverse: bool) {
        let planes = data.len() / (self.h * self.w);
        let mut scratch = Vec::new();
        self.rows.apply(data, planes * self.h, 1, inverse, &mut scratch);
        self.cols.apply(data, planes, self.w, inverse, &mut scratch);
    }

    /// Applies the transpose of the forward (or inverse) 2-D operator; used by backprop.
    pub fn apply_adjoint_in_place(&self, data: &mut [T], inverse: bool) {
        let planes = data.len() / (self.h * self.w);
        let mut scratch = Vec::new();
        self.cols.apply_adjoint(data, planes, self.w, inverse, &mut scratch);
        self.rows.apply_adjoint(data, planes * self.h, 1, inverse, &mut scratch);
    }

    pub fn apply(&self, x: &Tensor<T>, inverse: bool) -> Result<Tensor<T>> {
        let (h, w) = trailing_dims(x)?;
        if (h, w) != (self.h, self.w) {
            return Err(Error::shape(format!(
                "plan is {}x{}, input plane is {h}x{w}",
                self.h, self.w
            )));
        }
        let mut out = x.clone();
        self.apply_in_place(out.data_mut(), inverse);
        Ok(out)
    }
}

pub fn trailing_dims<T: Scalar>(x: &Tensor<T>) -> Result<(usize, usize)> {
    let s = x.shape();
    if s.len() < 2 {
        return Err(Error::shape(format!("expected at least 2 dims, got {s:?}")));
    }
    Ok((s[s.len() - 2], s[s.len() - 1]))
}

/// Separable 2-D transform (or its inverse) of every trailing plane.
pub fn transform2d<T: Scalar>(x: &Tensor<T>, kind: TransformKind, inverse: bool) -> Result<Tensor<T>> {
    let (h, w) = trailing_dims(x)?;
    Plan2d::new(kind, h, w)?.apply(x, inverse)
}

/// Zero-pads the trailing plane up to the next power of two on each axis.
pub fn pad_pow2<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (h, w) = trailing_dims(x)?;
    resize_plane(x, h.next_power_of_two(), w.next_power_of_two())
}

/// Keeps the top-left `h x w` corner of every trailing plane.
pub fn truncate<T: Scalar>(x: &Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>> {
    let (ih, iw) = trailing_dims(x)?;
    if h > ih || w > iw {
        return Err(Error::invalid(format!("cannot truncate {ih}x{iw} to larger {h}x{w}")));
    }
    resize_plane(x, h, w)
}

/// Copies the overlapping corner into a zeroed `h x w` plane.
pub fn resize_plane<T: Scalar>(x: &Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>> {
    let (ih, iw) = trailing_dims(x)?;
    if (ih, iw) == (h, w) {
        return Ok(x.clone());
    }
    let planes = x.len() / (ih * iw);
    let mut shape = x.shape().to_vec();
    let nd = shape.len();
    shape[nd - 2] = h;
    shape[nd - 1] = w;
    let mut out = vec![T::zero(); planes * h * w];
    let (ch, cw) = (ih.min(h), iw.min(w));
    for p in 0..planes {
        for r in 0..ch {
            let src = &x.data()[p * ih * iw + r * iw..][..cw];
            out[p * h * w + r * w..][..cw].copy_from_slice(src);
        }
    }
    Tensor::from_vec(&shape, out)
}

/// `(N/2)/N` per axis: rescales the half-grid inverse to full-grid weights.
pub const TRUNCATED_INVERSE_GAIN: f64 = 0.25;

/// Half-size reconstruction from the low-frequency quarter of a 2-D DCT.
///
/// Keeps `X[.., 0:H/2, 0:W/2]` and inverts it on the `H/2 x W/2` grid with the
/// inverse weights of the full `H x W` grid (`1/N`, `2/N`), so a constant
/// image maps to a constant of the same value.
pub fn idct2_truncate<T: Scalar>(spectrum: &Tensor<T>) -> Result<Tensor<T>> {
    let (h, w) = trailing_dims(spectrum)?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::invalid(format!("idct2_truncate needs even dims, got {h}x{w}")));
    }
    let low = resize_plane(spectrum, h / 2, w / 2)?;
    let mut out = transform2d(&low, TransformKind::Dct, true)?;
    out.scale_in_place(T::from_f64_lossy(TRUNCATED_INVERSE_GAIN));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kind_parse_roundtrip() {
        for k in TransformKind::ALL {
            assert_eq!(k.to_string().parse::<TransformKind>().unwrap(), k);
        }
        assert!("fft".parse::<TransformKind>().is_err());
    }

    #[test]
    fn constant_plane_dct_dc() {
        let x = Tensor::<f64>::full(&[1, 4, 4], 2.5);
        let y = transform2d(&x, TransformKind::Dct, false).unwrap();
        assert_abs_diff_eq!(y.data()[0], 16.0 * 2.5, epsilon = 1e-12);
        for v in &y.data()[1..] {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn pad_and_truncate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::<f32>::uniform(&[3, 28, 28], -1.0, 1.0, &mut rng);
        let p = pad_pow2(&x).unwrap();
        assert_eq!(p.shape(), &[3, 32, 32]);
        assert_eq!(p.data()[28], 0.0);
        assert_eq!(p.data()[28 * 32], 0.0);
        assert_eq!(truncate(&p, 28, 28).unwrap(), x);
        let same = Tensor::<f32>::zeros(&[3, 32, 32]);
        assert_eq!(pad_pow2(&same).unwrap().shape(), &[3, 32, 32]);
        assert!(truncate(&x, 30, 28).is_err());
    }

    #[test]
    fn pow2_required_for_ht() {
        let x = Tensor::<f64>::zeros(&[1, 6, 8]);
        assert!(transform2d(&x, TransformKind::Ht, false).is_err());
        assert!(transform2d(&x, TransformKind::Bwt, false).is_err());
        assert!(transform2d(&x, TransformKind::Dct, false).is_ok());
    }

    #[test]
    fn truncated_inverse_constant() {
        let x = Tensor::<f64>::full(&[2, 8, 8], -1.75);
        let spec = transform2d(&x, TransformKind::Dct, false).unwrap();
        let half = idct2_truncate(&spec).unwrap();
        assert_eq!(half.shape(), &[2, 4, 4]);
        for v in half.data() {
            assert_abs_diff_eq!(*v, -1.75, epsilon = 1e-12);
        }
        let z = idct2_truncate(&Tensor::<f64>::zeros(&[1, 8, 8])).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
        assert!(idct2_truncate(&Tensor::<f64>::zeros(&[1, 7, 8])).is_err());
    }

    #[test]
    fn truncated_inverse_energy_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let x = Tensor::<f64>::uniform(&[3, 16, 16], -1.0, 1.0, &mut rng);
            let spec = transform2d(&x, TransformKind::Dct, false).unwrap();
            let full = transform2d(&spec, TransformKind::Dct, true).unwrap();
            let half = idct2_truncate(&spec).unwrap();
            assert!(half.sum_sq() <= full.sum_sq());
        }
    }

    #[test]
    fn adjoint_identity() {
        // <T x, y> == <x, T^T y>
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for kind in TransformKind::ALL {
            for inverse in [false, true] {
                let plan = Plan2d::<f64>::new(kind, 8, 4).unwrap();
                let x = Tensor::<f64>::uniform(&[2, 8, 4], -1.0, 1.0, &mut rng);
                let y = Tensor::<f64>::uniform(&[2, 8, 4], -1.0, 1.0, &mut rng);
                let tx = plan.apply(&x, inverse).unwrap();
                let mut ty = y.data().to_vec();
                plan.apply_adjoint_in_place(&mut ty, inverse);
                let lhs: f64 = tx.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
                let rhs: f64 = x.data().iter().zip(&ty).map(|(a, b)| a * b).sum();
                assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn orthonormal_parseval() {
        // the internal orthonormal scaling preserves energy
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = Tensor::<f64>::uniform(&[16], -1.0, 1.0, &mut rng).into_data();
        let y = dct1d(&x).unwrap();
        let e: f64 = y.iter().enumerate().map(|(k, v)| (v * orthonormal_scale(16, k)).powi(2)).sum();
        assert_abs_diff_eq!(e, x.iter().map(|v| v * v).sum::<f64>(), epsilon = 1e-10);
    }
}
