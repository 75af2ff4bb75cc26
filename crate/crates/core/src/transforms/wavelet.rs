//! Block wavelet transform: a full `M`-stage subband (wavelet packet) tree of
//! a two-channel analysis filter bank with periodic extension at every stage.
//!
//! Output bands are ordered depth-first with the low-pass branch first, so
//! `x0` is the band that passed through the low-pass filter at every stage.
//! Synthesis filters are not given by the analysis pair; they are derived
//! numerically by inverting the per-stage analysis matrix.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Analysis filter pair of a two-channel filter bank.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterBankSpec {
    /// Low-pass analysis taps.
    pub h: Vec<f64>,
    /// High-pass analysis taps.
    pub g: Vec<f64>,
}

impl FilterBankSpec {
    /// Haar pair whose packet tree is the Hadamard transform.
    pub fn hadamard() -> Self {
        FilterBankSpec { h: vec![1.0, 1.0], g: vec![-1.0, 1.0] }
    }

    /// Biorthogonal 1.3 analysis pair.
    pub fn bior13() -> Self {
        FilterBankSpec {
            h: vec![-0.125, 0.125, 1.0, 1.0, 0.125, -0.125],
            g: vec![-1.0, 1.0],
        }
    }

    /// Number of stages for an `n`-point block (`log2 n`).
    pub fn stages_for(n: usize) -> Result<usize> {
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::invalid(format!("block wavelet length {n} is not a power of two")));
        }
        Ok(n.trailing_zeros() as usize)
    }

    fn validate(&self) -> Result<()> {
        for (name, f) in [("h", &self.h), ("g", &self.g)] {
            if f.is_empty() || f.len() % 2 != 0 {
                return Err(Error::invalid(format!(
                    "filter {name} must have a positive even number of taps, got {}",
                    f.len()
                )));
            }
        }
        Ok(())
    }
}

/// FIR filter placed so that its first tap touches sample `2i - offset`.
#[derive(Clone, Debug, PartialEq)]
pub struct PlacedFilter {
    pub taps: Vec<f64>,
    pub offset: usize,
}

impl PlacedFilter {
    /// Analysis filters of even length are centred on the pair `(2i, 2i + 1)`.
    fn centred(taps: &[f64]) -> Self {
        PlacedFilter { taps: taps.to_vec(), offset: (taps.len() - 2) / 2 }
    }

    #[inline]
    fn index(&self, i: usize, j: usize, len: usize) -> usize {
        (2 * i as isize + j as isize - self.offset as isize).rem_euclid(len as isize) as usize
    }
}

/// Analysis pair plus the derived synthesis pair.
#[derive(Clone, Debug)]
pub struct FilterBank {
    spec: FilterBankSpec,
    analysis_low: PlacedFilter,
    analysis_high: PlacedFilter,
    synthesis_low: PlacedFilter,
    synthesis_high: PlacedFilter,
}

const DERIVATION_LEN: usize = 64;
const TAP_EPS: f64 = 1e-12;

impl FilterBank {
    pub fn new(spec: &FilterBankSpec) -> Result<Self> {
        spec.validate()?;
        let analysis_low = PlacedFilter::centred(&spec.h);
        let analysis_high = PlacedFilter::centred(&spec.g);
        let (synthesis_low, synthesis_high) = derive_synthesis(spec)?;
        Ok(FilterBank { spec: spec.clone(), analysis_low, analysis_high, synthesis_low, synthesis_high })
    }

    pub fn spec(&self) -> &FilterBankSpec {
        &self.spec
    }

    pub fn synthesis_low(&self) -> &PlacedFilter {
        &self.synthesis_low
    }

    pub fn synthesis_high(&self) -> &PlacedFilter {
        &self.synthesis_high
    }

    /// Decimating stage: band sample `i` of each filter gathers from `src`.
    fn gather<T: Scalar>(low: &PlacedFilter, high: &PlacedFilter, src: &[T], dst: &mut [T], len: usize, inner: usize) {
        let half = len / 2;
        dst[..len * inner].iter_mut().for_each(|v| *v = T::zero());
        for (band, filter) in [(0, low), (half, high)] {
            for i in 0..half {
                let out = (band + i) * inner;
                for (j, &c) in filter.taps.iter().enumerate() {
                    let c = T::from_f64_lossy(c);
                    let at = filter.index(i, j, len) * inner;
                    for l in 0..inner {
                        dst[out + l] += c * src[at + l];
                    }
                }
            }
        }
    }

    /// Interpolating stage: band sample `i` of each filter scatters into `dst`.
    fn scatter<T: Scalar>(low: &PlacedFilter, high: &PlacedFilter, src: &[T], dst: &mut [T], len: usize, inner: usize) {
        let half = len / 2;
        dst[..len * inner].iter_mut().for_each(|v| *v = T::zero());
        for (band, filter) in [(0, low), (half, high)] {
            for i in 0..half {
                let from = (band + i) * inner;
                for (j, &c) in filter.taps.iter().enumerate() {
                    let c = T::from_f64_lossy(c);
                    let at = filter.index(i, j, len) * inner;
                    for l in 0..inner {
                        dst[at + l] += c * src[from + l];
                    }
                }
            }
        }
    }

    /// Runs the packet tree top-down (`gather`) or bottom-up (`scatter`).
    fn tree<T: Scalar>(&self, data: &mut [T], outer: usize, inner: usize, scratch: &mut Vec<T>, synthesis_filters: bool, top_down: bool) {
        let (low, high) = if synthesis_filters {
            (&self.synthesis_low, &self.synthesis_high)
        } else {
            (&self.analysis_low, &self.analysis_high)
        };
        let n = data.len() / (outer * inner);
        let stages = n.trailing_zeros() as usize;
        scratch.resize(n * inner, T::zero());
        for o in 0..outer {
            let sig = &mut data[o * n * inner..(o + 1) * n * inner];
            for step in 0..stages {
                let s = if top_down { step } else { stages - 1 - step };
                let seg = n >> s;
                for start in (0..n).step_by(seg) {
                    let range = start * inner..(start + seg) * inner;
                    if top_down {
                        Self::gather(low, high, &sig[range.clone()], scratch, seg, inner);
                    } else {
                        Self::scatter(low, high, &sig[range.clone()], scratch, seg, inner);
                    }
                    sig[range].copy_from_slice(&scratch[..seg * inner]);
                }
            }
        }
    }

    /// Full packet tree along the middle axis of `[outer, n, inner]`.
    pub(crate) fn forward_lanes<T: Scalar>(&self, data: &mut [T], outer: usize, inner: usize, scratch: &mut Vec<T>) {
        self.tree(data, outer, inner, scratch, false, true);
    }

    pub(crate) fn inverse_lanes<T: Scalar>(&self, data: &mut [T], outer: usize, inner: usize, scratch: &mut Vec<T>) {
        self.tree(data, outer, inner, scratch, true, false);
    }

    /// Transpose of [`Self::forward_lanes`].
    pub(crate) fn forward_adjoint_lanes<T: Scalar>(&self, data: &mut [T], outer: usize, inner: usize, scratch: &mut Vec<T>) {
        self.tree(data, outer, inner, scratch, false, false);
    }

    /// Transpose of [`Self::inverse_lanes`].
    pub(crate) fn inverse_adjoint_lanes<T: Scalar>(&self, data: &mut [T], outer: usize, inner: usize, scratch: &mut Vec<T>) {
        self.tree(data, outer, inner, scratch, true, true);
    }
}

/// Dense `len x len` matrix of one analysis stage (rows: low band, then high band).
pub fn analysis_stage_matrix(spec: &FilterBankSpec, len: usize) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    if len < 2 || !len.is_multiple_of(2) {
        return Err(Error::invalid(format!("stage length {len} must be even and >= 2")));
    }
    let half = len / 2;
    let mut m = vec![vec![0.0; len]; len];
    for (band, taps) in [(0, &spec.h), (half, &spec.g)] {
        let filter = PlacedFilter::centred(taps);
        for i in 0..half {
            for (j, &c) in filter.taps.iter().enumerate() {
                m[band + i][filter.index(i, j, len)] += c;
            }
        }
    }
    Ok(m)
}

/// Gauss-Jordan inverse with partial pivoting.
pub(crate) fn invert(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut inv: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let p = a[col][col];
        for j in 0..n {
            a[col][j] /= p;
            inv[col][j] /= p;
        }
        for r in 0..n {
            if r != col {
                let f = a[r][col];
                if f != 0.0 {
                    for j in 0..n {
                        a[r][j] -= f * a[col][j];
                        inv[r][j] -= f * inv[col][j];
                    }
                }
            }
        }
    }
    Some(inv)
}

/// Reads the synthesis filters off the columns of the inverted stage matrix.
fn derive_synthesis(spec: &FilterBankSpec) -> Result<(PlacedFilter, PlacedFilter)> {
    let len = DERIVATION_LEN.max((4 * (spec.h.len() + spec.g.len())).next_power_of_two());
    let stage = analysis_stage_matrix(spec, len)?;
    let inv = invert(&stage)
        .ok_or_else(|| Error::invalid("analysis stage is singular; no perfect-reconstruction synthesis exists"))?;
    let half = len / 2;
    let centre = half / 2;
    let extract = |column: usize| -> Result<PlacedFilter> {
        // position of output sample relative to 2 * centre
        let mut support: Vec<(isize, f64)> = (0..len)
            .map(|p| (p as isize - 2 * centre as isize, inv[p][column]))
            .filter(|&(_, v)| v.abs() > TAP_EPS)
            .collect();
        support.sort_by_key(|&(d, _)| d);
        let (first, last) = match (support.first(), support.last()) {
            (Some(f), Some(l)) => (f.0, l.0),
            _ => return Err(Error::invalid("derived synthesis filter is empty")),
        };
        if (last - first) as usize >= half || first > 0 {
            return Err(Error::invalid("derived synthesis filter is not FIR within the derivation window"));
        }
        let mut taps = vec![0.0; (last - first + 1) as usize];
        for (d, v) in support {
            taps[(d - first) as usize] = v;
        }
        Ok(PlacedFilter { taps, offset: (-first) as usize })
    };
    Ok((extract(centre)?, extract(half + centre)?))
}

/// Block wavelet transform of a power-of-two length signal.
pub fn bwt1d<T: Scalar>(x: &[T], spec: &FilterBankSpec) -> Result<Vec<T>> {
    FilterBankSpec::stages_for(x.len())?;
    let bank = FilterBank::new(spec)?;
    let mut out = x.to_vec();
    bank.forward_lanes(&mut out, 1, 1, &mut Vec::new());
    Ok(out)
}

/// Inverse of [`bwt1d`] using the derived synthesis filters.
pub fn ibwt1d<T: Scalar>(coeffs: &[T], spec: &FilterBankSpec) -> Result<Vec<T>> {
    FilterBankSpec::stages_for(coeffs.len())?;
    let bank = FilterBank::new(spec)?;
    let mut out = coeffs.to_vec();
    bank.inverse_lanes(&mut out, 1, 1, &mut Vec::new());
    Ok(out)
}
