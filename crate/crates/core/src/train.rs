//! SGD training loop, evaluation and run configuration.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::mpsc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::data::{self, Dataset};
use crate::error::{Error, Result};
use crate::models::{Model, VariantSpec};
use crate::nn::{Graph, Mode, ParamStore};
use crate::scalar::{lit, Scalar};
use crate::tensor::Tensor;

pub const LOG_HEADER: &str = "epoch,lr,train_loss,train_acc,test_loss,test_acc,wall_seconds";
pub const LOG_FILE: &str = "log.csv";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";

/// Element type used for a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        })
    }
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" | "single" => Ok(Precision::F32),
            "f64" | "double" => Ok(Precision::F64),
            other => Err(Error::Config(format!("unknown precision '{other}' (expected f32 or f64)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Variant string, e.g. `3c-dct` or `1c-dct,nonlinearity=relu`.
    pub variant: String,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// 1-based epochs after which the rate is multiplied by `gamma`.
    pub milestones: Vec<usize>,
    pub gamma: f64,
    pub seed: u64,
    pub data_dir: Option<PathBuf>,
    /// Train on the first `n` training images only.
    pub subset: Option<usize>,
    pub precision: Precision,
    pub out_dir: Option<PathBuf>,
    /// Build batches on the training thread instead of a prefetch thread.
    pub reproducible: bool,
    pub augment: bool,
    pub eval_batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: "resnet20".into(),
            epochs: 200,
            batch_size: 128,
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 1e-4,
            milestones: vec![82, 122, 163],
            gamma: 0.1,
            seed: 0,
            data_dir: None,
            subset: None,
            precision: Precision::F32,
            out_dir: None,
            reproducible: false,
            augment: true,
            eval_batch_size: 500,
        }
    }
}

fn parse_num<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value.parse().map_err(|_| Error::Config(format!("bad value '{value}' for {key}")))
}

fn parse_flag(key: &str, value: &str) -> Result<bool> {
    match value {
        "on" | "true" | "1" | "yes" => Ok(true),
        "off" | "false" | "0" | "no" => Ok(false),
        other => Err(Error::Config(format!("expected on/off for {key}, got '{other}'"))),
    }
}

impl TrainConfig {
    /// 5000 training images, 20 epochs, milestones scaled to {8, 12, 16}.
    pub fn desk_scale() -> Self {
        TrainConfig { subset: Some(5000), epochs: 20, milestones: vec![8, 12, 16], ..Self::default() }
    }

    pub fn spec(&self) -> Result<VariantSpec> {
        self.variant.parse()
    }

    pub fn validate(&self) -> Result<()> {
        self.spec()?;
        if self.epochs == 0 || self.batch_size == 0 || self.eval_batch_size == 0 {
            return Err(Error::Config("epochs and batch sizes must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !(0.0..1.0).contains(&self.momentum) || !nonneg(self.weight_decay) || !nonneg(self.gamma) || self.gamma == 0.0 {
            return Err(Error::Config("need 0 <= momentum < 1, weight decay >= 0 and gamma > 0".into()));
        }
        if self.milestones.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("milestones {:?} must be strictly increasing", self.milestones)));
        }
        if let Some(&m) = self.milestones.last() {
            if m >= self.epochs {
                return Err(Error::Config(format!("milestone {m} must be below the epoch count {}", self.epochs)));
            }
        }
        if self.subset == Some(0) {
            return Err(Error::Config("subset must be positive".into()));
        }
        Ok(())
    }

    /// Learning rate used during 1-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let drops = self.milestones.iter().filter(|&&m| epoch > m).count();
        self.lr * self.gamma.powi(drops as i32)
    }

    /// Applies one `key=value` setting; variant switches are appended to the
    /// variant string.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        match key.as_str() {
            "variant" => self.variant = value.to_string(),
            "kind" | "channels" | "nonlinearity" | "tp-shortcut" | "scaling" | "input-size" => {
                self.variant = format!("{},{key}={value}", self.variant);
            }
            "epochs" => self.epochs = parse_num(&key, value)?,
            "batch-size" => self.batch_size = parse_num(&key, value)?,
            "eval-batch-size" => self.eval_batch_size = parse_num(&key, value)?,
            "lr" => self.lr = parse_num(&key, value)?,
            "momentum" => self.momentum = parse_num(&key, value)?,
            "weight-decay" => self.weight_decay = parse_num(&key, value)?,
            "gamma" => self.gamma = parse_num(&key, value)?,
            "milestones" => {
                self.milestones = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse_num(&key, s))
                    .collect::<Result<_>>()?
            }
            "seed" => self.seed = parse_num(&key, value)?,
            "data-dir" => self.data_dir = Some(PathBuf::from(value)),
            "subset" => self.subset = Some(parse_num(&key, value)?),
            "precision" => self.precision = value.parse()?,
            "out-dir" => self.out_dir = Some(PathBuf::from(value)),
            "reproducible" => self.reproducible = parse_flag(&key, value)?,
            "augment" => self.augment = parse_flag(&key, value)?,
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got '{line}'", i + 1)))?;
            self.set(k, v).map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        self.apply_text(&text)
    }
}

/// SGD with momentum and coupled L2 weight decay:
/// `g += wd * w; buf = m * buf + g; w -= lr * buf`.
#[derive(Clone, Debug)]
pub struct Sgd<T> {
    pub momentum: f64,
    pub weight_decay: f64,
    buffers: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(momentum: f64, weight_decay: f64) -> Self {
        Sgd { momentum, weight_decay, buffers: Vec::new() }
    }

    /// One buffer slot per parameter, `None` until its first step.
    pub fn buffers(&self) -> &[Option<Tensor<T>>] {
        &self.buffers
    }

    pub fn set_buffers(&mut self, buffers: Vec<Option<Tensor<T>>>) {
        self.buffers = buffers;
    }

    pub fn step(&mut self, store: &mut ParamStore<T>, lr: f64) {
        self.buffers.resize(store.len(), None);
        let (m, wd, lr) = (lit::<T>(self.momentum), lit::<T>(self.weight_decay), lit::<T>(lr));
        for ((_, p), slot) in store.iter_mut().zip(&mut self.buffers) {
            if !p.trainable {
                continue;
            }
            let buf = slot.get_or_insert_with(|| Tensor::zeros(p.value.shape()));
            for ((b, w), g) in buf.data_mut().iter_mut().zip(p.value.data_mut()).zip(p.grad.data()) {
                *b = m * *b + (*g + wd * *w);
                *w -= lr * *b;
            }
        }
    }
}

/// One row of the metrics log. Accuracies are fractions in [0, 1].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_loss: f64,
    pub test_acc: f64,
    pub wall_seconds: f64,
}

impl EpochRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.3}",
            self.epoch, self.lr, self.train_loss, self.train_acc, self.test_loss, self.test_acc, self.wall_seconds
        )
    }

    /// The row without its timing column; equal for seeded reruns.
    pub fn without_wall_time(&self) -> EpochRecord {
        EpochRecord { wall_seconds: 0.0, ..*self }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{LOG_HEADER}\n");
        for r in &self.rows {
            s += &r.csv_row();
            s.push('\n');
        }
        s
    }

    pub fn same_ignoring_wall_time(&self, other: &TrainLog) -> bool {
        self.rows.len() == other.rows.len()
            && self.rows.iter().zip(&other.rows).all(|(a, b)| a.without_wall_time() == b.without_wall_time())
    }
}

/// Per-sample cross-entropy (natural log) and correctness of `[B, K]` logits.
pub fn score_logits<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> (f64, usize) {
    let k = logits.shape()[1];
    let mut loss = 0.0;
    let mut correct = 0;
    for (row, &label) in logits.data().chunks(k).zip(labels) {
        let vals: Vec<f64> = row.iter().map(|v| v.to_f64_lossy()).collect();
        let mx = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = vals.iter().map(|v| (v - mx).exp()).sum();
        loss += z.ln() + mx - vals[label];
        let arg = vals.iter().enumerate().fold(0, |best, (j, &v)| if v > vals[best] { j } else { best });
        correct += usize::from(arg == label);
    }
    (loss, correct)
}

/// Eval-mode top-1 accuracy and mean loss over the whole dataset.
pub fn evaluate<T: Scalar>(model: &Model<T>, ds: &Dataset, batch_size: usize) -> Result<(f64, f64)> {
    if ds.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty dataset"));
    }
    let order: Vec<usize> = (0..ds.len()).collect();
    let mut loss = 0.0;
    let mut correct = 0;
    for idx in order.chunks(batch_size.max(1)) {
        let (x, labels) = data::make_batch::<T, ChaCha8Rng>(ds, idx, None)?;
        let logits = model.predict(&x)?;
        let (l, c) = score_logits(&logits, &labels);
        loss += l;
        correct += c;
    }
    Ok((correct as f64 / ds.len() as f64, loss / ds.len() as f64))
}

/// L2 norms of every parameter value and gradient, one line each.
pub fn param_norm_table<T: Scalar>(store: &ParamStore<T>) -> String {
    let width = store.iter().map(|(_, p)| p.name.len()).max().unwrap_or(9).max(9);
    let mut s = format!("{:<width$}  {:>14}  {:>14}\n", "parameter", "|w|", "|grad|");
    for (_, p) in store.iter() {
        let w = p.value.sum_sq().to_f64_lossy().sqrt();
        let g = p.grad.sum_sq().to_f64_lossy().sqrt();
        s += &format!("{:<width$}  {w:>14.6e}  {g:>14.6e}\n", p.name);
    }
    s
}

/// Forward, backward, BN-stat commit and optimizer step on one batch.
/// Returns the summed per-sample loss and the number of correct predictions.
pub fn train_step<T: Scalar>(
    model: &mut Model<T>,
    opt: &mut Sgd<T>,
    x: Tensor<T>,
    labels: &[usize],
    lr: f64,
) -> Result<(f64, usize)> {
    let mut g = Graph::new();
    let xv = g.input(x);
    let (loss, logits, pending) = {
        let mut ctx = model.context(Mode::Train);
        let logits = model.forward(&mut g, &mut ctx, xv)?;
        let loss = g.softmax_cross_entropy(logits, labels)?;
        (loss, logits, ctx.pending)
    };
    let value = g.value(loss).data()[0].to_f64_lossy();
    if !value.is_finite() {
        return Err(Error::Diverged(format!("loss is {value}")));
    }
    let (_, correct) = score_logits(g.value(logits), labels);
    let grads = g.backward(loss)?;
    model.store_mut().zero_grad();
    g.accumulate_param_grads(&grads, model.store_mut());
    model.commit_stats(pending);
    opt.step(model.store_mut(), lr);
    Ok((value * labels.len() as f64, correct))
}

fn batch_rng(seed: u64, epoch: usize, batch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 32) | batch as u64);
    rng
}

/// Full permutation of `0..n` for 1-based `epoch`.
pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((1 << 63) | epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Builds batches of `order` and hands them to `f` in order. Each batch
/// draws its augmentation from its own stream, so prefetching on a second
/// thread does not change the result.
fn for_each_batch<T, F>(
    ds: &Dataset,
    order: &[usize],
    batch_size: usize,
    augment: Option<(u64, usize)>,
    prefetch: bool,
    mut f: F,
) -> Result<()>
where
    T: Scalar,
    F: FnMut(usize, Tensor<T>, Vec<usize>) -> Result<()>,
{
    let n = order.len().div_ceil(batch_size);
    let make = |b: usize| {
        let idx = &order[b * batch_size..((b + 1) * batch_size).min(order.len())];
        match augment {
            Some((seed, epoch)) => data::make_batch::<T, _>(ds, idx, Some(&mut batch_rng(seed, epoch, b))),
            None => data::make_batch::<T, ChaCha8Rng>(ds, idx, None),
        }
    };
    if !prefetch || n < 2 {
        for b in 0..n {
            let (x, labels) = make(b)?;
            f(b, x, labels)?;
        }
        return Ok(());
    }
    std::thread::scope(|s| {
        let (tx, rx) = mpsc::sync_channel(2);
        s.spawn(move || {
            for b in 0..n {
                if tx.send(make(b)).is_err() {
                    break;
                }
            }
        });
        for b in 0..n {
            let (x, labels) = rx.recv().map_err(|_| Error::invalid("batch producer stopped"))??;
            f(b, x, labels)?;
        }
        Ok(())
    })
}

pub struct TrainOutcome<T> {
    /// Model after the final epoch.
    pub model: Model<T>,
    pub log: TrainLog,
    pub best_acc: f64,
    pub best_epoch: usize,
    pub best: Checkpoint,
}

/// Runs the configured schedule. `on_epoch` sees every log row as it is
/// produced; with `out_dir` set the log and checkpoints are written there.
pub fn train<T: Scalar>(
    cfg: &TrainConfig,
    train_set: &Dataset,
    test_set: &Dataset,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    let spec = cfg.spec()?;
    for ds in [train_set, test_set] {
        if ds.size() != spec.input_size {
            return Err(Error::Config(format!(
                "variant expects {0}x{0} images, dataset has {1}x{1}",
                spec.input_size,
                ds.size()
            )));
        }
    }
    let train_set = match cfg.subset {
        Some(n) => train_set.subset(n),
        None => train_set.clone(),
    };
    if train_set.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if let Some(dir) = &cfg.out_dir {
        fs::create_dir_all(dir)?;
    }
    let mut model = Model::<T>::new(spec, cfg.seed)?;
    let mut opt = Sgd::new(cfg.momentum, cfg.weight_decay);
    let mut log = TrainLog::default();
    let mut best = Checkpoint::capture(&model, Some(&opt), 0, 0.0);
    let (mut best_acc, mut best_epoch) = (f64::NEG_INFINITY, 0);
    let start = Instant::now();
    for epoch in 1..=cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let order = epoch_order(cfg.seed, epoch, train_set.len());
        let (mut loss_sum, mut correct) = (0.0, 0);
        let augment = cfg.augment.then_some((cfg.seed, epoch));
        for_each_batch::<T, _>(&train_set, &order, cfg.batch_size, augment, !cfg.reproducible, |b, x, labels| {
            let (l, c) = train_step(&mut model, &mut opt, x, &labels, lr).map_err(|e| match e {
                Error::Diverged(msg) => Error::Diverged(format!(
                    "{msg} at epoch {epoch}, batch {b}\n{}",
                    param_norm_table(model.store())
                )),
                other => other,
            })?;
            loss_sum += l;
            correct += c;
            Ok(())
        })?;
        let (test_acc, test_loss) = evaluate(&model, test_set, cfg.eval_batch_size)?;
        let row = EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / train_set.len() as f64,
            train_acc: correct as f64 / train_set.len() as f64,
            test_loss,
            test_acc,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        log.rows.push(row);
        on_epoch(&row);
        if test_acc > best_acc {
            best_acc = test_acc;
            best_epoch = epoch;
            best = Checkpoint::capture(&model, Some(&opt), epoch, best_acc);
            if let Some(dir) = &cfg.out_dir {
                best.save(&dir.join(BEST_CHECKPOINT))?;
            }
        }
        if let Some(dir) = &cfg.out_dir {
            fs::write(dir.join(LOG_FILE), log.to_csv())?;
        }
    }
    if let Some(dir) = &cfg.out_dir {
        Checkpoint::capture(&model, Some(&opt), cfg.epochs, best_acc).save(&dir.join(LAST_CHECKPOINT))?;
    }
    Ok(TrainOutcome { model, log, best_acc, best_epoch, best })
}

#[derive(Clone, Debug, PartialEq)]
pub struct OverfitReport {
    /// Train-mode batch loss before each step.
    pub losses: Vec<f64>,
    pub reached: bool,
}

impl OverfitReport {
    pub fn steps(&self) -> usize {
        self.losses.len()
    }

    pub fn final_loss(&self) -> f64 {
        self.losses.last().copied().unwrap_or(f64::NAN)
    }
}

/// Full-batch SGD on a fixed set without augmentation until the loss drops
/// below `target` or `max_steps` steps have been taken.
pub fn overfit<T: Scalar>(spec: VariantSpec, ds: &Dataset, max_steps: usize, target: f64, lr: f64) -> Result<OverfitReport> {
    let mut model = Model::<T>::new(spec, 0)?;
    let mut opt = Sgd::new(0.9, 0.0);
    let idx: Vec<usize> = (0..ds.len()).collect();
    let (x, labels) = data::make_batch::<T, ChaCha8Rng>(ds, &idx, None)?;
    let mut losses = Vec::new();
    for _ in 0..max_steps {
        let (sum, _) = train_step(&mut model, &mut opt, x.clone(), &labels, lr)?;
        let loss = sum / ds.len() as f64;
        losses.push(loss);
        if loss < target {
            return Ok(OverfitReport { losses, reached: true });
        }
    }
    Ok(OverfitReport { losses, reached: false })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.lr_at(1), 0.1);
        assert_eq!(cfg.lr_at(82), 0.1);
        assert!((cfg.lr_at(83) - 0.01).abs() < 1e-15);
        assert!((cfg.lr_at(123) - 0.001).abs() < 1e-15);
        assert!((cfg.lr_at(164) - 0.0001).abs() < 1e-15);
        cfg.validate().unwrap();
        TrainConfig::desk_scale().validate().unwrap();
    }

    #[test]
    fn config_text() {
        let mut cfg = TrainConfig::default();
        cfg.apply_text("# desk run\nvariant = 3c-dct\nepochs=20\nmilestones=8,12,16\nbatch_size=64\nreproducible=on\n")
            .unwrap();
        assert_eq!(cfg.epochs, 20);
        assert_eq!(cfg.batch_size, 64);
        assert_eq!(cfg.milestones, vec![8, 12, 16]);
        assert!(cfg.reproducible);
        cfg.set("nonlinearity", "relu").unwrap();
        assert_eq!(cfg.spec().unwrap().name(), "3c-dct,nonlinearity=relu");
        assert!(cfg.apply_text("colour=blue").is_err());
        assert!(cfg.apply_text("epochs").is_err());
    }

    #[test]
    fn invalid_milestones() {
        let mut cfg = TrainConfig { milestones: vec![10, 5], ..TrainConfig::default() };
        assert!(cfg.validate().is_err());
        cfg.milestones = vec![200];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn epoch_order_is_a_permutation() {
        let mut o = epoch_order(3, 1, 100);
        assert_ne!(o, epoch_order(3, 2, 100));
        assert_eq!(o, epoch_order(3, 1, 100));
        o.sort_unstable();
        assert_eq!(o, (0..100).collect::<Vec<_>>());
    }
}
