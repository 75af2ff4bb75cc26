//! Convolution kernels (im2col + GEMM) and a direct reference.

use crate::error::{Error, Result};
use crate::scalar::{gemm, MatRef, Scalar};
use crate::tensor::Tensor;

/// Static geometry of one convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn new(x: &[usize], kernel: &[usize], stride: usize, pad: usize) -> Result<Self> {
        if x.len() != 4 || kernel.len() != 4 {
            return Err(Error::shape(format!("conv2d expects 4-d input and kernel, got {x:?} and {kernel:?}")));
        }
        let (batch, cin, h, w) = (x[0], x[1], x[2], x[3]);
        let (cout, kc, kh, kw) = (kernel[0], kernel[1], kernel[2], kernel[3]);
        if kc != cin {
            return Err(Error::shape(format!("conv2d: input has {cin} channels, kernel expects {kc}")));
        }
        if kh != kw || kh == 0 {
            return Err(Error::shape(format!("conv2d: kernel must be square, got {kh}x{kw}")));
        }
        if stride == 0 {
            return Err(Error::invalid("conv2d: stride must be positive"));
        }
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(Error::shape(format!("conv2d: {h}x{w} input too small for {kh}x{kw} kernel")));
        }
        let ho = (h + 2 * pad - kh) / stride + 1;
        let wo = (w + 2 * pad - kw) / stride + 1;
        Ok(ConvGeom { batch, cin, h, w, cout, k: kh, stride, pad, ho, wo })
    }

    /// 1x1, stride 1, unpadded: the input plane already is the column matrix.
    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    fn col_rows(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn out_plane(&self) -> usize {
        self.ho * self.wo
    }

    pub fn output_shape(&self) -> [usize; 4] {
        [self.batch, self.cout, self.ho, self.wo]
    }

    /// Multiply-accumulates of the forward pass.
    pub fn macs(&self) -> u64 {
        (self.k * self.k * self.cin * self.cout * self.ho * self.wo) as u64
    }

    fn source(&self, o: usize, kk: usize, limit: usize) -> Option<usize> {
        let pos = (o * self.stride + kk) as isize - self.pad as isize;
        (pos >= 0 && (pos as usize) < limit).then_some(pos as usize)
    }

    /// Outputs `lo..hi` (of `n_out`) whose source `o * stride + kk - pad`
    /// falls inside `0..limit`.
    fn valid_range(&self, kk: usize, limit: usize, n_out: usize) -> (usize, usize) {
        let lo = if self.pad > kk { (self.pad - kk).div_ceil(self.stride) } else { 0 };
        let hi = if limit + self.pad > kk { ((limit - 1 + self.pad - kk) / self.stride + 1).min(n_out) } else { 0 };
        (lo.min(hi), hi)
    }
}

fn im2col<T: Scalar>(g: &ConvGeom, x: &[T], col: &mut [T], ld: usize, off: usize) {
    let (k, plane) = (g.k, g.out_plane());
    for c in 0..g.cin {
        for kh in 0..k {
            for kw in 0..k {
                let row = &mut col[((c * k + kh) * k + kw) * ld + off..][..plane];
                let (lo, hi) = g.valid_range(kw, g.w, g.wo);
                for oh in 0..g.ho {
                    let dst = &mut row[oh * g.wo..(oh + 1) * g.wo];
                    let Some(ih) = g.source(oh, kh, g.h) else {
                        dst.fill(T::zero());
                        continue;
                    };
                    let src = &x[(c * g.h + ih) * g.w..][..g.w];
                    dst[..lo].fill(T::zero());
                    dst[hi..].fill(T::zero());
                    if lo < hi {
                        let first = lo * g.stride + kw - g.pad;
                        if g.stride == 1 {
                            dst[lo..hi].copy_from_slice(&src[first..first + hi - lo]);
                        } else {
                            for (d, s) in dst[lo..hi].iter_mut().zip(src[first..].iter().step_by(g.stride)) {
                                *d = *s;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(g: &ConvGeom, col: &[T], ld: usize, off: usize, dx: &mut [T]) {
    let (k, plane) = (g.k, g.out_plane());
    for c in 0..g.cin {
        for kh in 0..k {
            for kw in 0..k {
                let row = &col[((c * k + kh) * k + kw) * ld + off..][..plane];
                let (lo, hi) = g.valid_range(kw, g.w, g.wo);
                if lo >= hi {
                    continue;
                }
                let first = lo * g.stride + kw - g.pad;
                for oh in 0..g.ho {
                    let Some(ih) = g.source(oh, kh, g.h) else { continue };
                    let dst = &mut dx[(c * g.h + ih) * g.w..][..g.w];
                    let src = &row[oh * g.wo + lo..oh * g.wo + hi];
                    for (d, s) in dst[first..].iter_mut().step_by(g.stride).zip(src) {
                        *d += *s;
                    }
                }
            }
        }
    }
}

/// Columns per GEMM; small planes are grouped so the kernel sees wide matrices.
const TARGET_COLUMNS: usize = 4096;

fn chunk_len(g: &ConvGeom) -> usize {
    TARGET_COLUMNS.div_ceil(g.out_plane()).clamp(1, g.batch.max(1))
}

/// Copies `[nb, c, plane]` images into a `c x (nb * plane)` matrix.
fn gather_planes<T: Scalar>(src: &[T], nb: usize, c: usize, plane: usize, dst: &mut [T]) {
    let ld = nb * plane;
    for j in 0..nb {
        for ch in 0..c {
            dst[ch * ld + j * plane..][..plane].copy_from_slice(&src[(j * c + ch) * plane..][..plane]);
        }
    }
}

/// Inverse of [`gather_planes`].
fn scatter_planes<T: Scalar>(src: &[T], nb: usize, c: usize, plane: usize, dst: &mut [T]) {
    let ld = nb * plane;
    for j in 0..nb {
        for ch in 0..c {
            dst[(j * c + ch) * plane..][..plane].copy_from_slice(&src[ch * ld + j * plane..][..plane]);
        }
    }
}

/// Fills the column matrix of images `b0..b0 + nb`.
fn columns<T: Scalar>(g: &ConvGeom, x: &[T], b0: usize, nb: usize, col: &mut [T]) {
    let (in_img, plane) = (g.cin * g.h * g.w, g.out_plane());
    let xs = &x[b0 * in_img..(b0 + nb) * in_img];
    if g.is_pointwise() {
        gather_planes(xs, nb, g.cin, plane, col);
    } else {
        for j in 0..nb {
            im2col(g, &xs[j * in_img..(j + 1) * in_img], col, nb * plane, j * plane);
        }
    }
}

pub fn conv2d_forward<T: Scalar>(x: &Tensor<T>, kernel: &Tensor<T>, stride: usize, pad: usize) -> Result<Tensor<T>> {
    let g = ConvGeom::new(x.shape(), kernel.shape(), stride, pad)?;
    let (out_img, plane, rows) = (g.cout * g.out_plane(), g.out_plane(), g.col_rows());
    let mut out = vec![T::zero(); g.batch * out_img];
    let chunk = chunk_len(&g);
    let mut col = vec![T::zero(); rows * chunk * plane];
    let mut tmp = vec![T::zero(); g.cout * chunk * plane];
    let w = MatRef::new(kernel.data(), g.cout, rows);
    for b0 in (0..g.batch).step_by(chunk) {
        let nb = chunk.min(g.batch - b0);
        let ld = nb * plane;
        columns(&g, x.data(), b0, nb, &mut col);
        gemm(T::one(), w, MatRef::new(&col[..rows * ld], rows, ld), T::zero(), &mut tmp[..g.cout * ld]);
        scatter_planes(&tmp, nb, g.cout, plane, &mut out[b0 * out_img..(b0 + nb) * out_img]);
    }
    Tensor::from_vec(&g.output_shape(), out)
}

/// Returns `(dx, dkernel)` for an upstream gradient `dy`.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    dy: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let g = ConvGeom::new(x.shape(), kernel.shape(), stride, pad)?;
    if dy.shape() != g.output_shape() {
        return Err(Error::shape(format!("conv2d backward: dy {:?} vs {:?}", dy.shape(), g.output_shape())));
    }
    let (in_img, out_img) = (g.cin * g.h * g.w, g.cout * g.out_plane());
    let (rows, plane) = (g.col_rows(), g.out_plane());
    let chunk = chunk_len(&g);
    let mut dx = vec![T::zero(); x.len()];
    let mut dk = vec![T::zero(); kernel.len()];
    let mut col = vec![T::zero(); rows * chunk * plane];
    let mut dcol = vec![T::zero(); rows * chunk * plane];
    let mut dyc = vec![T::zero(); g.cout * chunk * plane];
    let wt = MatRef::t(kernel.data(), g.cout, rows);
    for b0 in (0..g.batch).step_by(chunk) {
        let nb = chunk.min(g.batch - b0);
        let ld = nb * plane;
        columns(&g, x.data(), b0, nb, &mut col);
        gather_planes(&dy.data()[b0 * out_img..(b0 + nb) * out_img], nb, g.cout, plane, &mut dyc);
        let dym = MatRef::new(&dyc[..g.cout * ld], g.cout, ld);
        // dK += dY * cols^T
        gemm(T::one(), dym, MatRef::t(&col[..rows * ld], rows, ld), T::one(), &mut dk);
        // dcols = K^T * dY
        gemm(T::one(), wt, dym, T::zero(), &mut dcol[..rows * ld]);
        let dxs = &mut dx[b0 * in_img..(b0 + nb) * in_img];
        if g.is_pointwise() {
            scatter_planes(&dcol, nb, g.cin, plane, dxs);
        } else {
            for j in 0..nb {
                col2im(&g, &dcol, ld, j * plane, &mut dxs[j * in_img..(j + 1) * in_img]);
            }
        }
    }
    Ok((Tensor::from_vec(x.shape(), dx)?, Tensor::from_vec(kernel.shape(), dk)?))
}

/// Direct six-loop cross-correlation, used as an oracle.
pub fn conv2d_reference<T: Scalar>(x: &Tensor<T>, kernel: &Tensor<T>, stride: usize, pad: usize) -> Result<Tensor<T>> {
    let g = ConvGeom::new(x.shape(), kernel.shape(), stride, pad)?;
    let mut out = Tensor::zeros(&g.output_shape());
    let (xd, kd) = (x.data(), kernel.data());
    let od = out.data_mut();
    for b in 0..g.batch {
        for co in 0..g.cout {
            for oh in 0..g.ho {
                for ow in 0..g.wo {
                    let mut acc = 0.0f64;
                    for ci in 0..g.cin {
                        for kh in 0..g.k {
                            for kw in 0..g.k {
                                let ih = (oh * stride + kh) as isize - pad as isize;
                                let iw = (ow * stride + kw) as isize - pad as isize;
                                if ih < 0 || iw < 0 || ih as usize >= g.h || iw as usize >= g.w {
                                    continue;
                                }
                                let xv = xd[((b * g.cin + ci) * g.h + ih as usize) * g.w + iw as usize];
                                let kv = kd[((co * g.cin + ci) * g.k + kh) * g.k + kw];
                                acc += xv.to_f64_lossy() * kv.to_f64_lossy();
                            }
                        }
                    }
                    od[((b * g.cout + co) * g.ho + oh) * g.wo + ow] = T::from_f64_lossy(acc);
                }
            }
        }
    }
    Ok(out)
}
