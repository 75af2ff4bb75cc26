//! Transform-domain perceptron layers.
//!
//! A layer maps `x` to `T^-1( sum_i f_{t_i}( (T(x) o A_i) * V_i ) )`, plus `x`
//! when the single-channel shortcut is on. `T` is computed once per input and
//! the inverse once after the channel sum.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::init::kaiming_uniform;
use crate::nn::{Graph, ParamId, ParamStore, ThresholdAct, Var, LEAKY_SLOPE};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::transforms::{Plan2d, TransformKind, TRUNCATED_INVERSE_GAIN};

/// Pointwise function applied in the transform domain.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Nonlinearity {
    #[default]
    SoftThreshold,
    /// `max(x - |t|, 0)` with the same threshold map.
    ReluWithThresholds,
    /// Plain ReLU; the mixing kernel gets a bias and there are no thresholds.
    ReluPlain,
    LeakyReluWithThresholds,
    SiluWithThresholds,
}

impl Nonlinearity {
    pub const ALL: [Nonlinearity; 5] = [
        Nonlinearity::SoftThreshold,
        Nonlinearity::ReluWithThresholds,
        Nonlinearity::ReluPlain,
        Nonlinearity::LeakyReluWithThresholds,
        Nonlinearity::SiluWithThresholds,
    ];

    pub fn has_thresholds(self) -> bool {
        self != Nonlinearity::ReluPlain
    }

    fn act(self) -> ThresholdAct {
        match self {
            Nonlinearity::SoftThreshold => ThresholdAct::Soft,
            Nonlinearity::ReluWithThresholds | Nonlinearity::ReluPlain => ThresholdAct::Relu,
            Nonlinearity::LeakyReluWithThresholds => ThresholdAct::LeakyRelu(LEAKY_SLOPE),
            Nonlinearity::SiluWithThresholds => ThresholdAct::Silu,
        }
    }
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Nonlinearity::SoftThreshold => "soft",
            Nonlinearity::ReluWithThresholds => "relu-threshold",
            Nonlinearity::ReluPlain => "relu",
            Nonlinearity::LeakyReluWithThresholds => "leaky-relu-threshold",
            Nonlinearity::SiluWithThresholds => "silu-threshold",
        })
    }
}

impl FromStr for Nonlinearity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "soft" | "soft-threshold" => Nonlinearity::SoftThreshold,
            "relu-threshold" | "relu-thresholds" => Nonlinearity::ReluWithThresholds,
            "relu" | "relu-plain" => Nonlinearity::ReluPlain,
            "leaky-relu-threshold" | "leaky-relu" | "leaky" => Nonlinearity::LeakyReluWithThresholds,
            "silu-threshold" | "silu" => Nonlinearity::SiluWithThresholds,
            other => return Err(Error::invalid(format!("unknown nonlinearity '{other}'"))),
        })
    }
}

/// Static description of a TP layer.
#[derive(Clone, Debug, PartialEq)]
pub struct TpConfig {
    pub kind: TransformKind,
    pub channels: usize,
    pub cin: usize,
    pub cout: usize,
    /// Input spatial size.
    pub height: usize,
    pub width: usize,
    pub shortcut: bool,
    pub scaling: bool,
    pub nonlinearity: Nonlinearity,
    /// Keep the low-frequency quarter and reconstruct at half resolution (DCT only).
    pub downsample: bool,
}

impl TpConfig {
    /// Standard same-shape layer; shortcut on iff `P = 1`.
    pub fn new(kind: TransformKind, channels: usize, c: usize, height: usize, width: usize) -> Self {
        TpConfig {
            kind,
            channels,
            cin: c,
            cout: c,
            height,
            width,
            shortcut: channels == 1,
            scaling: true,
            nonlinearity: Nonlinearity::SoftThreshold,
            downsample: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.cin == 0 || self.cout == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::InvalidSpec(format!("TP layer dimensions must be positive: {self:?}")));
        }
        if self.downsample {
            if self.kind != TransformKind::Dct {
                return Err(Error::InvalidSpec("downsampling TP layers need the DCT".into()));
            }
            if !self.height.is_multiple_of(2) || !self.width.is_multiple_of(2) {
                return Err(Error::InvalidSpec(format!(
                    "downsampling TP layer needs even input, got {}x{}",
                    self.height, self.width
                )));
            }
            if self.shortcut {
                return Err(Error::InvalidSpec("a downsampling TP layer cannot carry an identity shortcut".into()));
            }
        } else if self.cin != self.cout {
            return Err(Error::InvalidSpec(format!(
                "same-size TP layer needs cin == cout, got {} and {}",
                self.cin, self.cout
            )));
        }
        Ok(())
    }

    /// Transform grid: padded to powers of two for HT and BWT.
    pub fn transform_grid(&self) -> (usize, usize) {
        transform_grid(self.kind, self.height, self.width)
    }

    /// Grid on which `A`, `V` and the thresholds act.
    pub fn param_grid(&self) -> (usize, usize) {
        let (h, w) = self.transform_grid();
        if self.downsample {
            (h / 2, w / 2)
        } else {
            (h, w)
        }
    }

    pub fn output_dims(&self) -> (usize, usize, usize) {
        if self.downsample {
            (self.cout, self.height / 2, self.width / 2)
        } else {
            (self.cout, self.height, self.width)
        }
    }
}

pub fn transform_grid(kind: TransformKind, h: usize, w: usize) -> (usize, usize) {
    if kind.needs_pow2() {
        (h.next_power_of_two(), w.next_power_of_two())
    } else {
        (h, w)
    }
}

/// One named parameter tensor of a layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamShape {
    pub name: String,
    pub shape: Vec<usize>,
}

impl ParamShape {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Parameter inventory of a standard `P`-channel layer on an (already padded)
/// `h x w` grid: per channel one scaling map, one threshold map and one
/// `C x C` mixing kernel.
pub fn tp_param_shapes(c: usize, h: usize, w: usize, p: usize) -> Vec<ParamShape> {
    (0..p)
        .flat_map(|i| {
            [
                ParamShape { name: format!("branch{i}.scale"), shape: vec![h, w] },
                ParamShape { name: format!("branch{i}.mix"), shape: vec![c, c, 1, 1] },
                ParamShape { name: format!("branch{i}.threshold"), shape: vec![h, w] },
            ]
        })
        .collect()
}

/// Parameter ids of one branch.
#[derive(Clone, Debug, PartialEq)]
pub struct TpBranch {
    pub scale: Option<ParamId>,
    pub mix: ParamId,
    pub threshold: Option<ParamId>,
    pub bias: Option<ParamId>,
}

/// Graph handles of one branch's parameters.
#[derive(Clone, Copy, Debug)]
pub struct TpBranchVars {
    pub scale: Option<Var>,
    pub mix: Var,
    pub threshold: Option<Var>,
    pub bias: Option<Var>,
}

#[derive(Clone, Debug)]
pub struct TpLayer<T> {
    config: TpConfig,
    branches: Vec<TpBranch>,
    forward_plan: Arc<Plan2d<T>>,
    inverse_plan: Arc<Plan2d<T>>,
}

impl<T: Scalar> TpLayer<T> {
    /// Registers parameters: `A = 1`, `t = 0`, `V` fan-in uniform.
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore<T>, name: &str, config: TpConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let (th, tw) = config.transform_grid();
        let (ph, pw) = config.param_grid();
        let forward_plan = Arc::new(Plan2d::new(config.kind, th, tw)?);
        let inverse_plan = if config.downsample {
            Arc::new(Plan2d::new(config.kind, ph, pw)?)
        } else {
            Arc::clone(&forward_plan)
        };
        let branches = (0..config.channels)
            .map(|i| {
                let prefix = format!("{name}.branch{i}");
                let scale = config.scaling.then(|| store.add(format!("{prefix}.scale"), Tensor::ones(&[ph, pw])));
                let mix = store.add(
                    format!("{prefix}.mix"),
                    kaiming_uniform(&[config.cout, config.cin, 1, 1], config.cin, rng),
                );
                let threshold = config
                    .nonlinearity
                    .has_thresholds()
                    .then(|| store.add(format!("{prefix}.threshold"), Tensor::zeros(&[ph, pw])));
                let bias = (!config.nonlinearity.has_thresholds())
                    .then(|| store.add(format!("{prefix}.bias"), Tensor::zeros(&[config.cout])));
                TpBranch { scale, mix, threshold, bias }
            })
            .collect();
        Ok(TpLayer { config, branches, forward_plan, inverse_plan })
    }

    pub fn config(&self) -> &TpConfig {
        &self.config
    }

    pub fn branches(&self) -> &[TpBranch] {
        &self.branches
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.branches
            .iter()
            .flat_map(|b| [b.scale, Some(b.mix), b.threshold, b.bias])
            .flatten()
            .collect()
    }

    pub fn num_params(&self, store: &ParamStore<T>) -> usize {
        self.param_ids().iter().map(|id| store.value(*id).len()).sum()
    }

    pub fn branch_vars(&self, g: &mut Graph<T>, store: &ParamStore<T>) -> Vec<TpBranchVars> {
        self.branches
            .iter()
            .map(|b| TpBranchVars {
                scale: b.scale.map(|id| g.param(store, id)),
                mix: g.param(store, b.mix),
                threshold: b.threshold.map(|id| g.param(store, id)),
                bias: b.bias.map(|id| g.param(store, id)),
            })
            .collect()
    }

    pub fn forward(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let vars = self.branch_vars(g, store);
        self.forward_with(g, x, &vars)
    }

    /// Forward pass with explicit parameter vars (used by gradient checks).
    pub fn forward_with(&self, g: &mut Graph<T>, x: Var, vars: &[TpBranchVars]) -> Result<Var> {
        let cfg = &self.config;
        let [_, c, h, w] = g.value(x).dims4("TP layer input")?;
        if c != cfg.cin || (h, w) != (cfg.height, cfg.width) {
            return Err(Error::shape(format!(
                "TP layer built for [{}, {}, {}], got [{c}, {h}, {w}]",
                cfg.cin, cfg.height, cfg.width
            )));
        }
        if vars.len() != self.branches.len() {
            return Err(Error::invalid(format!("{} branch var sets for {} branches", vars.len(), self.branches.len())));
        }
        let (th, tw) = cfg.transform_grid();
        let (ph, pw) = cfg.param_grid();
        let padded = if (th, tw) != (h, w) { g.resize(x, th, tw)? } else { x };
        let mut spectrum = g.transform(padded, &self.forward_plan, false)?;
        if cfg.downsample {
            spectrum = g.resize(spectrum, ph, pw)?;
        }
        let act = cfg.nonlinearity.act();
        let mut terms = Vec::with_capacity(vars.len());
        for b in vars {
            let scaled = match b.scale {
                Some(a) => g.scale_map(spectrum, a)?,
                None => spectrum,
            };
            let mixed = g.conv2d(scaled, b.mix, 1, 0)?;
            let y = match (b.threshold, b.bias) {
                (Some(t), _) => g.threshold(mixed, t, act)?,
                (None, Some(bias)) => {
                    let z = g.channel_bias(mixed, bias)?;
                    g.relu(z)
                }
                (None, None) => g.relu(mixed),
            };
            terms.push(y);
        }
        let summed = if terms.len() == 1 { terms[0] } else { g.sum(&terms)? };
        let mut y = g.transform(summed, &self.inverse_plan, true)?;
        if cfg.downsample {
            y = g.scale_const(y, TRUNCATED_INVERSE_GAIN);
        } else if (th, tw) != (h, w) {
            y = g.resize(y, h, w)?;
        }
        if cfg.shortcut {
            y = g.add(y, x)?;
        }
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nonlinearity_names_round_trip() {
        for n in Nonlinearity::ALL {
            assert_eq!(n.to_string().parse::<Nonlinearity>().unwrap(), n);
        }
        assert!("tanh".parse::<Nonlinearity>().is_err());
    }

    #[test]
    fn manifest_counts() {
        let total = |c, n, p| tp_param_shapes(c, n, n, p).iter().map(ParamShape::numel).sum::<usize>();
        assert_eq!(total(16, 32, 1), 2304);
        assert_eq!(total(64, 8, 3), 12672);
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = TpConfig::new(TransformKind::Ht, 1, 4, 8, 8);
        cfg.downsample = true;
        cfg.shortcut = false;
        assert!(cfg.validate().is_err());
        let mut cfg = TpConfig::new(TransformKind::Dct, 1, 4, 8, 8);
        cfg.cout = 8;
        assert!(cfg.validate().is_err());
        cfg.downsample = true;
        assert!(cfg.validate().is_err(), "shortcut must be off");
        cfg.shortcut = false;
        assert!(cfg.validate().is_ok());
    }
}
