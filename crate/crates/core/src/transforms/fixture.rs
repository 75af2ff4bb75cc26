//! Text fixture holding derived filter-bank and convolution-theorem constants.
//!
//! Format: `#` starts a comment line; `[section]` opens a section; an
//! optional `offset <n>` line follows; then one value per line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::dct::dct1d;
use super::hadamard::ht1d;
use super::oracle::{dyadic_convolve_oracle, symmetric_convolve_oracle, symmetric_kernel_response};
use super::wavelet::{FilterBank, FilterBankSpec};
use crate::error::{Error, Result};

pub const BIOR13_SYNTH_LOW: &str = "bior13.synthesis.low";
pub const BIOR13_SYNTH_HIGH: &str = "bior13.synthesis.high";
pub const THEOREM1_PER_BIN: &str = "theorem1.per_bin";
pub const THEOREM1_TYPE2_KERNEL_CONSISTENT: &str = "theorem1.type2_kernel_consistent";
pub const THEOREM2_SCALE_EXPONENT: &str = "theorem2.scale_exponent";

const HEADER: &str = "\
# tpnet transform fixtures, version 1
#
# Lines starting with '#' are comments. '[name]' opens a section, an optional
# 'offset <n>' line gives the number of output samples a filter reaches before
# position 2i, and each following line holds one coefficient.
#
# bior13.synthesis.low / .high
#     synthesis filters of the Bior 1.3 bank, obtained by inverting the
#     periodic analysis stage matrix; contribution of band sample i to output
#     sample 2i - offset + j is taps[j].
# theorem1.per_bin
#     c[k] in DCT(a *_s x)[k] = c[k] K(a)[k] DCT(x)[k], K(a) the cosine
#     response of the whole-sample symmetric kernel, solved on N = 2 impulses.
# theorem1.type2_kernel_consistent
#     1 if a per-bin factor also exists with K(a) replaced by DCT-II(a), else 0.
# theorem2.scale_exponent
#     p in HT(a *_d x) = N^p HT(a) HT(x) for the 1/sqrt(N) normalized HT,
#     solved on N = 2 impulses.
";

#[derive(Clone, Debug, PartialEq)]
pub struct Section {
    pub offset: Option<usize>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Fixtures {
    pub sections: BTreeMap<String, Section>,
}

impl Fixtures {
    pub fn get(&self, name: &str) -> Result<&Section> {
        self.sections.get(name).ok_or_else(|| Error::Fixture(format!("missing section [{name}]")))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut sections = BTreeMap::new();
        let mut current: Option<(String, Section)> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                if let Some((n, s)) = current.take() {
                    sections.insert(n, s);
                }
                current = Some((name.to_string(), Section { offset: None, values: Vec::new() }));
                continue;
            }
            let (_, section) = current
                .as_mut()
                .ok_or_else(|| Error::Fixture(format!("line {}: value outside a section", lineno + 1)))?;
            if let Some(off) = line.strip_prefix("offset") {
                section.offset = Some(off.trim().parse().map_err(|_| {
                    Error::Fixture(format!("line {}: bad offset '{line}'", lineno + 1))
                })?);
            } else {
                section.values.push(
                    line.parse()
                        .map_err(|_| Error::Fixture(format!("line {}: bad number '{line}'", lineno + 1)))?,
                );
            }
        }
        if let Some((n, s)) = current {
            sections.insert(n, s);
        }
        Ok(Fixtures { sections })
    }

    pub fn render(&self) -> String {
        let mut out = String::from(HEADER);
        for (name, section) in &self.sections {
            let _ = writeln!(out, "\n[{name}]");
            if let Some(off) = section.offset {
                let _ = writeln!(out, "offset {off}");
            }
            for v in &section.values {
                let _ = writeln!(out, "{v:?}");
            }
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }
}

/// Recomputes every fixture value from first principles.
pub fn generate() -> Result<Fixtures> {
    let bank = FilterBank::new(&FilterBankSpec::bior13())?;
    let mut sections = BTreeMap::new();
    for (name, filter) in [(BIOR13_SYNTH_LOW, bank.synthesis_low()), (BIOR13_SYNTH_HIGH, bank.synthesis_high())] {
        let values = filter.taps.iter().map(|&v| clean(v)).collect();
        sections.insert(name.to_string(), Section { offset: Some(filter.offset), values });
    }
    let per_bin = calibrate_symmetric(symmetric_kernel_response)
        .ok_or_else(|| Error::Fixture("symmetric-convolution calibration is inconsistent".into()))?;
    sections.insert(THEOREM1_PER_BIN.to_string(), Section { offset: None, values: per_bin });
    let type2 = calibrate_symmetric(|a| dct1d(a).expect("non-empty")).is_some();
    sections.insert(
        THEOREM1_TYPE2_KERNEL_CONSISTENT.to_string(),
        Section { offset: None, values: vec![if type2 { 1.0 } else { 0.0 }] },
    );
    sections.insert(
        THEOREM2_SCALE_EXPONENT.to_string(),
        Section { offset: None, values: vec![calibrate_dyadic_exponent()] },
    );
    Ok(Fixtures { sections })
}

fn clean(v: f64) -> f64 {
    // round away the last-ulp noise of the numerical inversion
    let r = (v * 2f64.powi(40)).round() / 2f64.powi(40);
    if (r - v).abs() < 1e-12 {
        r
    } else {
        v
    }
}

/// Solves `DCT(a *_s x)[k] = c[k] kernel(a)[k] DCT(x)[k]` over all pairs of
/// N = 2 impulses; `None` if no single `c[k]` fits every pair.
pub fn calibrate_symmetric(kernel: impl Fn(&[f64]) -> Vec<f64>) -> Option<Vec<f64>> {
    let n = 2;
    let impulses: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    let mut factors: Vec<Option<f64>> = vec![None; n];
    for a in &impulses {
        for x in &impulses {
            let y = symmetric_convolve_oracle(a, x).ok()?;
            let lhs = dct1d(&y).ok()?;
            let ka = kernel(a);
            let dx = dct1d(x).ok()?;
            for k in 0..n {
                let denom = ka[k] * dx[k];
                if denom.abs() < 1e-12 {
                    if lhs[k].abs() > 1e-9 {
                        return None;
                    }
                    continue;
                }
                let c = lhs[k] / denom;
                match factors[k] {
                    None => factors[k] = Some(c),
                    Some(prev) if (prev - c).abs() > 1e-9 => return None,
                    _ => {}
                }
            }
        }
    }
    Some(factors.into_iter().map(|f| clean(f.unwrap_or(1.0))).collect())
}

/// Exponent `p` with `HT(a *_d x) = N^p HT(a) HT(x)`, from N = 2 impulses.
pub fn calibrate_dyadic_exponent() -> f64 {
    let a = [1.0, 0.0];
    let y = dyadic_convolve_oracle(&a, &a).expect("power of two");
    let lhs = ht1d(&y).expect("power of two")[0];
    let ha = ht1d(&a).expect("power of two")[0];
    clean((lhs / (ha * ha)).log2())
}
