//! Parameter and multiply-accumulate counts.
//!
//! Counting rules:
//! - `K x K` conv: `K^2 Cin Cout` parameters, `K^2 Ho Wo Cin Cout` MACs.
//! - batch norm: `2C` parameters; 2 MACs per element (scale and shift).
//! - residual add: 1 per element; global average pooling: 1 per input element.
//! - linear: `in * out + out` parameters, `in * out` MACs.
//! - TP layer: per branch a scaling map, a threshold map and a `Cin x Cout`
//!   mixing kernel; MACs are the transform pair, `P N^2 C` for scaling and
//!   thresholding, and `P N^2 Cin Cout` for mixing. The layer-internal
//!   shortcut add is not counted. HT transforms cost nothing.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::models::{LayerDesc, Model, VariantSpec};
use crate::scalar::Scalar;
use crate::tp::TpConfig;
use crate::transforms::TransformKind;

/// How 2-D DCT/BWT transforms are charged.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Convention {
    /// Dense matrix products: `H W (H + W)` MACs per channel.
    #[default]
    MatrixProduct,
    /// Fast algorithm: `5/2 N^2 log2 N + N^2/3 - 6N + 62/3` per channel.
    FastTransform,
    /// Every transform treated as free.
    HtFree,
}

impl Convention {
    pub const ALL: [Convention; 3] = [Convention::MatrixProduct, Convention::FastTransform, Convention::HtFree];
}

impl fmt::Display for Convention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Convention::MatrixProduct => "matrix-product-transform",
            Convention::FastTransform => "fast-transform",
            Convention::HtFree => "ht-free",
        })
    }
}

impl FromStr for Convention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "matrix-product-transform" | "matrix-product" | "matrix" => Ok(Convention::MatrixProduct),
            "fast-transform" | "fast" => Ok(Convention::FastTransform),
            "ht-free" | "free" => Ok(Convention::HtFree),
            other => Err(Error::invalid(format!("unknown counting convention '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CostRow {
    pub layer: String,
    pub params: u64,
    pub macs: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CostReport {
    pub convention: Convention,
    pub rows: Vec<CostRow>,
}

impl CostReport {
    pub fn total_params(&self) -> u64 {
        self.rows.iter().map(|r| r.params).sum()
    }

    pub fn total_macs(&self) -> u64 {
        self.rows.iter().map(|r| r.macs).sum()
    }

    /// `layer,params,macs` rows with a header and a final `total` row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("layer,params,macs\n");
        for r in &self.rows {
            s += &format!("{},{},{}\n", r.layer, r.params, r.macs);
        }
        s += &format!("total,{},{}\n", self.total_params(), self.total_macs());
        s
    }

    pub fn to_table(&self) -> String {
        let width = self.rows.iter().map(|r| r.layer.len()).max().unwrap_or(5).max(5);
        let mut s = format!("{:<width$}  {:>10}  {:>12}\n", "layer", "params", "macs");
        for r in &self.rows {
            s += &format!("{:<width$}  {:>10}  {:>12}\n", r.layer, r.params, r.macs);
        }
        s += &format!("{:<width$}  {:>10}  {:>12}\n", "total", self.total_params(), self.total_macs());
        s += &format!(
            "convention: {}; {:.2}K params, {:.2}M MACs\n",
            self.convention,
            self.total_params() as f64 / 1e3,
            self.total_macs() as f64 / 1e6
        );
        s
    }
}

/// MACs of one 2-D transform of a `C x H x W` tensor.
pub fn transform_macs(kind: TransformKind, c: usize, h: usize, w: usize, convention: Convention) -> u64 {
    if kind == TransformKind::Ht {
        return 0;
    }
    let (c, h, w) = (c as u64, h as u64, w as u64);
    match convention {
        Convention::MatrixProduct => h * w * (h + w) * c,
        Convention::FastTransform => {
            let n = h.max(w) as f64;
            let per = 2.5 * n * n * n.log2() + n * n / 3.0 - 6.0 * n + 62.0 / 3.0;
            (per.max(0.0) * c as f64).round() as u64
        }
        Convention::HtFree => 0,
    }
}

/// Parameter count of a TP layer from its configuration.
pub fn tp_params(cfg: &TpConfig) -> u64 {
    let (h, w) = cfg.param_grid();
    let grid = (h * w) as u64;
    let nl = cfg.nonlinearity;
    let per_branch = if cfg.scaling { grid } else { 0 }
        + if nl.has_thresholds() { grid } else { 0 }
        + (cfg.cin * cfg.cout) as u64
        + if nl.has_thresholds() { 0 } else { cfg.cout as u64 };
    cfg.channels as u64 * per_branch
}

/// MAC count of a TP layer.
pub fn tp_macs(cfg: &TpConfig, convention: Convention) -> u64 {
    let (th, tw) = cfg.transform_grid();
    let (ph, pw) = cfg.param_grid();
    let grid = (ph * pw) as u64;
    let p = cfg.channels as u64;
    let pair = transform_macs(cfg.kind, cfg.cin, th, tw, convention) + transform_macs(cfg.kind, cfg.cout, ph, pw, convention);
    pair + p * grid * cfg.cout as u64 + p * grid * (cfg.cin * cfg.cout) as u64
}

fn row(layer: &str, params: u64, macs: u64) -> CostRow {
    CostRow { layer: layer.to_string(), params, macs }
}

/// Rows for an ordered layer list.
pub fn cost_of_layers(layers: &[LayerDesc], convention: Convention) -> CostReport {
    let rows = layers
        .iter()
        .map(|l| match l {
            LayerDesc::Conv { name, cin, cout, k, stride, in_h, in_w } => {
                let pad = k / 2;
                let ho = (in_h + 2 * pad - k) / stride + 1;
                let wo = (in_w + 2 * pad - k) / stride + 1;
                let params = (k * k * cin * cout) as u64;
                row(name, params, params * (ho * wo) as u64)
            }
            LayerDesc::BatchNorm { name, c, h, w } => row(name, 2 * *c as u64, 2 * (c * h * w) as u64),
            LayerDesc::Tp { name, config } => row(name, tp_params(config), tp_macs(config, convention)),
            LayerDesc::ResidualAdd { name, c, h, w } => row(name, 0, (c * h * w) as u64),
            LayerDesc::GlobalAvgPool { c, h, w } => row("gap", 0, (c * h * w) as u64),
            LayerDesc::Linear { name, din, dout } => row(name, (din * dout + dout) as u64, (din * dout) as u64),
        })
        .collect();
    CostReport { convention, rows }
}

/// Full cost report of a model.
pub fn cost_report<T: Scalar>(model: &Model<T>, convention: Convention) -> CostReport {
    cost_of_layers(&model.describe(), convention)
}

/// Parameter report; totals are convention independent.
pub fn count_params<T: Scalar>(model: &Model<T>) -> CostReport {
    cost_report(model, Convention::MatrixProduct)
}

/// MAC report of `spec` at a square input resolution.
pub fn count_macs(spec: &VariantSpec, input_size: usize, convention: Convention) -> Result<CostReport> {
    let mut spec = spec.clone();
    spec.input_size = input_size;
    let model = Model::<f32>::new(spec, 0)?;
    Ok(cost_report(&model, convention))
}

/// Trainable scalars found by walking the model's parameter store.
pub fn walk_params<T: Scalar>(model: &Model<T>) -> u64 {
    model.store().num_trainable() as u64
}
