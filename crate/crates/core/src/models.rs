//! CIFAR ResNet-20 and its transform-domain variants.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{BatchNorm2d, BatchStats, Conv2d, ForwardCtx, Graph, Linear, Mode, ParamStore, RunningStats, Var};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::tp::{Nonlinearity, TpConfig, TpLayer};
use crate::transforms::TransformKind;

pub const NUM_CLASSES: usize = 10;
pub const STAGE_WIDTHS: [usize; 3] = [16, 32, 64];
pub const BLOCKS_PER_STAGE: usize = 3;

/// Which network to build.
#[derive(Clone, Debug, PartialEq)]
pub struct VariantSpec {
    /// Transform used by every TP layer of the model.
    pub kind: TransformKind,
    /// Number of TP branches `P` in the replaced block layers.
    pub channels: usize,
    /// Replace the second conv of every block.
    pub replace_blocks: bool,
    /// Append a single-channel TP layer and BN before pooling.
    pub extra_tp_before_gap: bool,
    /// Replace every 3x3 conv inside the residual blocks.
    pub replace_all: bool,
    pub nonlinearity: Nonlinearity,
    pub tp_shortcut: Option<bool>,
    /// Train the scaling maps `A`; off removes them.
    pub scaling: bool,
    /// Square input resolution.
    pub input_size: usize,
}

impl Default for VariantSpec {
    fn default() -> Self {
        VariantSpec {
            kind: TransformKind::Dct,
            channels: 1,
            replace_blocks: false,
            extra_tp_before_gap: false,
            replace_all: false,
            nonlinearity: Nonlinearity::SoftThreshold,
            tp_shortcut: None,
            scaling: true,
            input_size: 32,
        }
    }
}

impl VariantSpec {
    pub fn baseline() -> Self {
        Self::default()
    }

    pub fn tp(kind: TransformKind, channels: usize) -> Self {
        VariantSpec { kind, channels, replace_blocks: true, ..Self::default() }
    }

    pub fn extra_layer() -> Self {
        VariantSpec { extra_tp_before_gap: true, ..Self::default() }
    }

    pub fn all_replaced() -> Self {
        VariantSpec { replace_all: true, ..Self::default() }
    }

    pub fn has_tp(&self) -> bool {
        self.replace_blocks || self.extra_tp_before_gap || self.replace_all
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::InvalidSpec("channel count P must be at least 1".into()));
        }
        if self.input_size == 0 || !self.input_size.is_multiple_of(4) {
            return Err(Error::InvalidSpec(format!(
                "input size {} must be a positive multiple of 4",
                self.input_size
            )));
        }
        if self.replace_all {
            if self.channels != 1 || self.kind != TransformKind::Dct {
                return Err(Error::InvalidSpec("replace_all supports only single-channel DCT layers".into()));
            }
            if self.replace_blocks || self.extra_tp_before_gap {
                return Err(Error::InvalidSpec("replace_all cannot be combined with other variants".into()));
            }
        }
        Ok(())
    }

    fn block_tp_config(&self, c: usize, n: usize) -> TpConfig {
        let mut cfg = TpConfig::new(self.kind, self.channels, c, n, n);
        if let Some(s) = self.tp_shortcut {
            cfg.shortcut = s;
        }
        cfg.scaling = self.scaling;
        cfg.nonlinearity = self.nonlinearity;
        cfg
    }

    /// Canonical name; ablation switches are appended as `key=value`.
    pub fn name(&self) -> String {
        let mut s = if self.replace_all {
            "all-dct".to_string()
        } else if self.replace_blocks {
            format!("{}c-{}", self.channels, self.kind)
        } else if self.extra_tp_before_gap {
            format!("resnet20+1c-{}-p", self.kind)
        } else {
            "resnet20".to_string()
        };
        if self.nonlinearity != Nonlinearity::SoftThreshold {
            s += &format!(",nonlinearity={}", self.nonlinearity);
        }
        if let Some(on) = self.tp_shortcut {
            s += &format!(",tp-shortcut={}", if on { "on" } else { "off" });
        }
        if !self.scaling {
            s += ",scaling=off";
        }
        if self.input_size != 32 {
            s += &format!(",input-size={}", self.input_size);
        }
        s
    }

    /// Applies one `key=value` ablation switch.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let flag = |v: &str| match v {
            "on" | "true" | "1" | "yes" => Ok(true),
            "off" | "false" | "0" | "no" => Ok(false),
            other => Err(Error::invalid(format!("expected on/off for {key}, got '{other}'"))),
        };
        match key {
            "nonlinearity" => self.nonlinearity = value.parse()?,
            "tp-shortcut" | "tp_shortcut" => self.tp_shortcut = Some(flag(value)?),
            "scaling" => self.scaling = flag(value)?,
            "channels" => {
                self.channels = value.parse().map_err(|_| Error::invalid(format!("bad channel count '{value}'")))?
            }
            "kind" => self.kind = value.parse()?,
            "input-size" | "input_size" => {
                self.input_size = value.parse().map_err(|_| Error::invalid(format!("bad input size '{value}'")))?
            }
            other => return Err(Error::invalid(format!("unknown variant option '{other}'"))),
        }
        Ok(())
    }
}

fn parse_pc_kind(s: &str) -> Option<(usize, TransformKind)> {
    let (p, kind) = s.split_once("c-")?;
    Some((p.parse().ok()?, kind.parse().ok()?))
}

impl FromStr for VariantSpec {
    type Err = Error;

    /// `resnet20`, `{P}c-{kind}`, `resnet20+1c-{kind}-p`, `all-dct`, each
    /// optionally followed by `,key=value` switches.
    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split(',');
        let head = parts.next().unwrap_or_default().trim().to_ascii_lowercase();
        let mut spec = if head == "resnet20" || head == "baseline" {
            VariantSpec::baseline()
        } else if head == "all-dct" {
            VariantSpec::all_replaced()
        } else if let Some(rest) = head.strip_prefix("resnet20+").and_then(|r| r.strip_suffix("-p")) {
            match parse_pc_kind(rest) {
                Some((1, kind)) => VariantSpec { kind, ..VariantSpec::extra_layer() },
                _ => return Err(Error::InvalidSpec(format!("unknown variant '{s}'"))),
            }
        } else if let Some((p, kind)) = parse_pc_kind(&head) {
            VariantSpec::tp(kind, p)
        } else {
            return Err(Error::InvalidSpec(format!("unknown variant '{s}'")));
        };
        for opt in parts {
            let (k, v) = opt
                .split_once('=')
                .ok_or_else(|| Error::InvalidSpec(format!("variant option '{opt}' is not key=value")))?;
            spec.set(k.trim(), v.trim())?;
        }
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for VariantSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// A 3x3 conv position of the network and its geometry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Site {
    pub name: String,
    pub stage: usize,
    pub block: usize,
    /// 1 or 2 inside the block.
    pub position: usize,
    pub cin: usize,
    pub cout: usize,
    pub in_size: usize,
    pub stride: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerType {
    Conv,
    Tp,
}

/// Cost-relevant description of one layer, in forward order.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerDesc {
    Conv { name: String, cin: usize, cout: usize, k: usize, stride: usize, in_h: usize, in_w: usize },
    BatchNorm { name: String, c: usize, h: usize, w: usize },
    Tp { name: String, config: TpConfig },
    ResidualAdd { name: String, c: usize, h: usize, w: usize },
    GlobalAvgPool { c: usize, h: usize, w: usize },
    Linear { name: String, din: usize, dout: usize },
}

#[derive(Clone, Debug)]
enum Transforming<T> {
    Conv(Conv2d),
    Tp(TpLayer<T>),
}

/// Transforming layer followed by batch norm.
#[derive(Clone, Debug)]
struct Unit<T> {
    name: String,
    op: Transforming<T>,
    bn: BatchNorm2d,
    in_size: usize,
}

impl<T: Scalar> Unit<T> {
    fn forward(&self, g: &mut Graph<T>, ctx: &mut ForwardCtx<'_, T>, x: Var) -> Result<Var> {
        let y = match &self.op {
            Transforming::Conv(c) => c.forward(g, ctx.store, x)?,
            Transforming::Tp(tp) => tp.forward(g, ctx.store, x)?,
        };
        self.bn.forward(g, ctx, y)
    }

    fn out_size(&self) -> usize {
        match &self.op {
            Transforming::Conv(c) => (self.in_size + 2 * c.pad() - c.k) / c.stride + 1,
            Transforming::Tp(tp) => tp.config().output_dims().1,
        }
    }

    fn describe(&self, out: &mut Vec<LayerDesc>) {
        match &self.op {
            Transforming::Conv(c) => out.push(LayerDesc::Conv {
                name: self.name.clone(),
                cin: c.cin,
                cout: c.cout,
                k: c.k,
                stride: c.stride,
                in_h: self.in_size,
                in_w: self.in_size,
            }),
            Transforming::Tp(tp) => out.push(LayerDesc::Tp { name: self.name.clone(), config: tp.config().clone() }),
        }
        let n = self.out_size();
        out.push(LayerDesc::BatchNorm { name: format!("{}.bn", self.name), c: self.bn.channels, h: n, w: n });
    }

    fn layer_type(&self) -> LayerType {
        match self.op {
            Transforming::Conv(_) => LayerType::Conv,
            Transforming::Tp(_) => LayerType::Tp,
        }
    }
}

#[derive(Clone, Debug)]
enum Shortcut {
    Identity,
    /// 1x1 stride-2 conv + BN.
    Projection { conv: Conv2d, bn: BatchNorm2d },
}

#[derive(Clone, Debug)]
struct Block<T> {
    name: String,
    first: Unit<T>,
    second: Unit<T>,
    shortcut: Shortcut,
}

/// ResNet-20 family network with its parameters and batch-norm state.
#[derive(Clone, Debug)]
pub struct Model<T> {
    spec: VariantSpec,
    store: ParamStore<T>,
    stats: Vec<RunningStats<T>>,
    stem: Unit<T>,
    blocks: Vec<Block<T>>,
    extra: Option<Unit<T>>,
    head: Linear,
}

struct Builder<'a, T> {
    store: &'a mut ParamStore<T>,
    stats: &'a mut Vec<RunningStats<T>>,
    rng: ChaCha8Rng,
}

impl<T: Scalar> Builder<'_, T> {
    fn conv_unit(&mut self, name: &str, cin: usize, cout: usize, stride: usize, in_size: usize) -> Unit<T> {
        let conv = Conv2d::new(self.store, &format!("{name}.conv"), cin, cout, 3, stride, &mut self.rng);
        let bn = BatchNorm2d::new(self.store, self.stats, &format!("{name}.bn"), cout);
        Unit { name: name.to_string(), op: Transforming::Conv(conv), bn, in_size }
    }

    fn tp_unit(&mut self, name: &str, cfg: TpConfig) -> Result<Unit<T>> {
        let in_size = cfg.height;
        let cout = cfg.cout;
        let tp = TpLayer::new(self.store, &format!("{name}.tp"), cfg, &mut self.rng)?;
        let bn = BatchNorm2d::new(self.store, self.stats, &format!("{name}.bn"), cout);
        Ok(Unit { name: name.to_string(), op: Transforming::Tp(tp), bn, in_size })
    }
}

/// Every 3x3 conv position inside the residual blocks, in forward order.
fn block_sites(input_size: usize) -> Vec<Site> {
    let mut sites = Vec::new();
    let mut size = input_size;
    let mut cin = STAGE_WIDTHS[0];
    for (s, &c) in STAGE_WIDTHS.iter().enumerate() {
        for b in 0..BLOCKS_PER_STAGE {
            let stride = if s > 0 && b == 0 { 2 } else { 1 };
            let name = format!("stage{}.block{}", s + 1, b + 1);
            sites.push(Site { name: format!("{name}.layer1"), stage: s + 1, block: b + 1, position: 1, cin, cout: c, in_size: size, stride });
            size /= stride;
            sites.push(Site { name: format!("{name}.layer2"), stage: s + 1, block: b + 1, position: 2, cin: c, cout: c, in_size: size, stride: 1 });
            cin = c;
        }
    }
    sites
}

impl<T: Scalar> Model<T> {
    pub fn new(spec: VariantSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut store = ParamStore::new();
        let mut stats = Vec::new();
        let mut b = Builder { store: &mut store, stats: &mut stats, rng: ChaCha8Rng::seed_from_u64(seed) };
        let n0 = spec.input_size;
        let stem = b.conv_unit("stem", 3, STAGE_WIDTHS[0], 1, n0);
        let replaced = |site: &Site| spec.replace_all || (spec.replace_blocks && site.position == 2);
        let sites = block_sites(n0);
        let mut blocks = Vec::new();
        for pair in sites.chunks(2) {
            let (s1, s2) = (&pair[0], &pair[1]);
            let name = s1.name.trim_end_matches(".layer1").to_string();
            let first = if replaced(s1) {
                let mut cfg = spec.block_tp_config(s1.cout, s1.in_size);
                if s1.stride == 2 {
                    cfg.cin = s1.cin;
                    cfg.downsample = true;
                    cfg.shortcut = false;
                }
                b.tp_unit(&s1.name, cfg)?
            } else {
                b.conv_unit(&s1.name, s1.cin, s1.cout, s1.stride, s1.in_size)
            };
            let second = if replaced(s2) {
                b.tp_unit(&s2.name, spec.block_tp_config(s2.cout, s2.in_size))?
            } else {
                b.conv_unit(&s2.name, s2.cin, s2.cout, 1, s2.in_size)
            };
            let shortcut = if s1.stride != 1 || s1.cin != s1.cout {
                let conv = Conv2d::new(b.store, &format!("{name}.shortcut.conv"), s1.cin, s1.cout, 1, s1.stride, &mut b.rng);
                let bn = BatchNorm2d::new(b.store, b.stats, &format!("{name}.shortcut.bn"), s1.cout);
                Shortcut::Projection { conv, bn }
            } else {
                Shortcut::Identity
            };
            blocks.push(Block { name, first, second, shortcut });
        }
        let last_c = STAGE_WIDTHS[2];
        let last_n = n0 / 4;
        let extra = if spec.extra_tp_before_gap {
            let mut cfg = TpConfig::new(spec.kind, 1, last_c, last_n, last_n);
            cfg.nonlinearity = spec.nonlinearity;
            cfg.scaling = spec.scaling;
            if let Some(s) = spec.tp_shortcut {
                cfg.shortcut = s;
            }
            Some(b.tp_unit("extra", cfg)?)
        } else {
            None
        };
        let head = Linear::new(b.store, "fc", last_c, NUM_CLASSES, &mut b.rng);
        Ok(Model { spec, store, stats, stem, blocks, extra, head })
    }

    pub fn spec(&self) -> &VariantSpec {
        &self.spec
    }

    pub fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn running_stats(&self) -> &[RunningStats<T>] {
        &self.stats
    }

    pub fn running_stats_mut(&mut self) -> &mut [RunningStats<T>] {
        &mut self.stats
    }

    /// Folds training-mode batch statistics into the running estimates.
    pub fn commit_stats(&mut self, pending: Vec<(usize, BatchStats<T>)>) {
        for (slot, batch) in pending {
            self.stats[slot].update(&batch);
        }
    }

    pub fn context(&self, mode: Mode) -> ForwardCtx<'_, T> {
        ForwardCtx::new(&self.store, &self.stats, mode)
    }

    /// Records the forward pass on `g`; returns the logits var.
    pub fn forward(&self, g: &mut Graph<T>, ctx: &mut ForwardCtx<'_, T>, x: Var) -> Result<Var> {
        let [_, c, h, w] = g.value(x).dims4("model input")?;
        let n = self.spec.input_size;
        if (c, h, w) != (3, n, n) {
            return Err(Error::shape(format!("model expects [B, 3, {n}, {n}] input, got [B, {c}, {h}, {w}]")));
        }
        let y = self.stem.forward(g, ctx, x)?;
        let mut y = g.relu(y);
        for block in &self.blocks {
            let a = block.first.forward(g, ctx, y)?;
            let a = g.relu(a);
            let a = block.second.forward(g, ctx, a)?;
            let s = match &block.shortcut {
                Shortcut::Identity => y,
                Shortcut::Projection { conv, bn } => {
                    let p = conv.forward(g, ctx.store, y)?;
                    bn.forward(g, ctx, p)?
                }
            };
            let sum = g.add(a, s)?;
            y = g.relu(sum);
        }
        if let Some(extra) = &self.extra {
            y = extra.forward(g, ctx, y)?;
        }
        let pooled = g.global_avg_pool(y)?;
        self.head.forward(g, ctx.store, pooled)
    }

    /// Eval-mode logits for a batch.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let xv = g.input(x.clone());
        let mut ctx = self.context(Mode::Eval);
        let logits = self.forward(&mut g, &mut ctx, xv)?;
        Ok(g.value(logits).clone())
    }

    /// Block conv positions this variant replaces (for the baseline, the
    /// positions a TP variant would replace).
    pub fn list_replaceable_sites(&self) -> Vec<Site> {
        let all = block_sites(self.spec.input_size);
        if self.spec.replace_all {
            all
        } else {
            all.into_iter().filter(|s| s.position == 2).collect()
        }
    }

    /// Type of every transforming layer in forward order (stem, blocks, extra).
    pub fn layer_types(&self) -> Vec<(String, LayerType)> {
        let mut out = vec![(self.stem.name.clone(), self.stem.layer_type())];
        for b in &self.blocks {
            for u in [&b.first, &b.second] {
                out.push((u.name.clone(), u.layer_type()));
            }
        }
        if let Some(e) = &self.extra {
            out.push((e.name.clone(), e.layer_type()));
        }
        out
    }

    pub fn tp_layers(&self) -> Vec<&TpLayer<T>> {
        let units = std::iter::once(&self.stem)
            .chain(self.blocks.iter().flat_map(|b| [&b.first, &b.second]))
            .chain(self.extra.as_ref());
        units
            .filter_map(|u| match &u.op {
                Transforming::Tp(tp) => Some(tp),
                Transforming::Conv(_) => None,
            })
            .collect()
    }

    /// Cost-relevant layer list in forward order.
    pub fn describe(&self) -> Vec<LayerDesc> {
        let mut out = Vec::new();
        self.stem.describe(&mut out);
        for b in &self.blocks {
            b.first.describe(&mut out);
            b.second.describe(&mut out);
            if let Shortcut::Projection { conv, bn } = &b.shortcut {
                let n = b.first.in_size;
                out.push(LayerDesc::Conv {
                    name: format!("{}.shortcut", b.name),
                    cin: conv.cin,
                    cout: conv.cout,
                    k: conv.k,
                    stride: conv.stride,
                    in_h: n,
                    in_w: n,
                });
                let m = n / conv.stride;
                out.push(LayerDesc::BatchNorm { name: format!("{}.shortcut.bn", b.name), c: bn.channels, h: m, w: m });
            }
            let n = b.second.out_size();
            out.push(LayerDesc::ResidualAdd { name: format!("{}.add", b.name), c: b.second.bn.channels, h: n, w: n });
        }
        if let Some(e) = &self.extra {
            e.describe(&mut out);
        }
        let n = self.spec.input_size / 4;
        out.push(LayerDesc::GlobalAvgPool { c: STAGE_WIDTHS[2], h: n, w: n });
        out.push(LayerDesc::Linear { name: "fc".into(), din: self.head.din, dout: self.head.dout });
        out
    }
}
