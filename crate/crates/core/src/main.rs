use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tpnet::accounting::{count_macs, Convention};
use tpnet::checkpoint::Checkpoint;
use tpnet::data::{self, Dataset};
use tpnet::models::{Model, VariantSpec};
use tpnet::scalar::DType;
use tpnet::train::{self, evaluate, Precision, TrainConfig, LOG_HEADER};
use tpnet::verify::{self, Suite};
use tpnet::{Scalar, Tensor};

/// Transform-domain perceptron networks on CIFAR-10.
#[derive(Parser)]
#[command(name = "tpnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a variant with SGD and write a log and checkpoints.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test set.
    Eval(EvalArgs),
    /// Print per-layer parameter and MAC counts.
    Count(CountArgs),
    /// Run the transform, theorem, gradient and counting self-checks.
    Verify(VerifyArgs),
    /// Time eval-mode forward passes.
    Bench(BenchArgs),
}

#[derive(Args, Default)]
struct VariantArgs {
    /// resnet20, {P}c-{dct,ht,bwt}, resnet20+1c-{kind}-p or all-dct
    #[arg(long)]
    variant: Option<String>,
    /// Transform kind of the TP layers (dct, ht, bwt).
    #[arg(long)]
    kind: Option<String>,
    /// Number of TP branches P.
    #[arg(long)]
    channels: Option<usize>,
    /// soft, relu-threshold, relu, leaky-relu-threshold or silu-threshold.
    #[arg(long)]
    nonlinearity: Option<String>,
    /// Shortcut inside TP layers (on/off).
    #[arg(long)]
    tp_shortcut: Option<String>,
    /// Trainable scaling maps (on/off).
    #[arg(long)]
    scaling: Option<String>,
}

impl VariantArgs {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        if let Some(s) = &self.variant {
            v.push(("variant", s.clone()));
        }
        if let Some(s) = &self.kind {
            v.push(("kind", s.clone()));
        }
        if let Some(p) = self.channels {
            v.push(("channels", p.to_string()));
        }
        if let Some(s) = &self.nonlinearity {
            v.push(("nonlinearity", s.clone()));
        }
        if let Some(s) = &self.tp_shortcut {
            v.push(("tp-shortcut", s.clone()));
        }
        if let Some(s) = &self.scaling {
            v.push(("scaling", s.clone()));
        }
        v
    }

    fn spec(&self, default: &str) -> anyhow::Result<VariantSpec> {
        let mut spec: VariantSpec = self.variant.as_deref().unwrap_or(default).parse()?;
        for (k, v) in self.pairs() {
            if k != "variant" {
                spec.set(k, &v)?;
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    variant: VariantArgs,
    /// key=value file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from the desk-scale preset (5000 images, 20 epochs).
    #[arg(long)]
    desk: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Comma-separated 1-based epochs after which the rate drops tenfold.
    #[arg(long)]
    milestones: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Train on the first N training images.
    #[arg(long)]
    subset: Option<usize>,
    /// CIFAR-10 binary directory (defaults to $CIFAR10_DIR).
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// f32 or f64.
    #[arg(long)]
    precision: Option<String>,
    /// Single-threaded batch assembly.
    #[arg(long)]
    reproducible: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    batch_size: usize,
}

#[derive(Args)]
struct CountArgs {
    #[command(flatten)]
    variant: VariantArgs,
    /// matrix-product-transform, fast-transform or ht-free.
    #[arg(long, default_value = "matrix-product-transform")]
    convention: String,
    #[arg(long, default_value_t = 32)]
    input_size: usize,
    /// Also write the per-layer rows as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Also run the ablation overfit and determinism checks (slower).
    #[arg(long)]
    full: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Variants to time.
    #[arg(long, value_delimiter = ',', default_value = "resnet20,1c-dct,3c-dct,1c-ht,3c-ht,3c-bwt")]
    variants: Vec<String>,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 5)]
    iters: usize,
    #[arg(long, default_value_t = 32)]
    input_size: usize,
}

fn data_dir(flag: Option<PathBuf>) -> anyhow::Result<PathBuf> {
    flag.or_else(|| std::env::var_os("CIFAR10_DIR").map(PathBuf::from))
        .context("no dataset directory: pass --data-dir or set CIFAR10_DIR")
}

fn thousands(n: u64) -> String {
    let s = n.to_string();
    let mut out = String::new();
    for (i, ch) in s.chars().enumerate() {
        if i > 0 && (s.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

fn train_config(args: TrainArgs) -> anyhow::Result<TrainConfig> {
    let mut cfg = if args.desk { TrainConfig::desk_scale() } else { TrainConfig::default() };
    if let Some(path) = &args.config {
        cfg.apply_file(path)?;
    }
    for (k, v) in args.variant.pairs() {
        cfg.set(k, &v)?;
    }
    if let Some(v) = args.epochs {
        cfg.epochs = v;
        // keep a desk/default schedule valid for shorter runs
        if args.milestones.is_none() {
            cfg.milestones.retain(|&m| m < v);
        }
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.lr {
        cfg.lr = v;
    }
    if let Some(v) = &args.milestones {
        cfg.set("milestones", v)?;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.subset {
        cfg.subset = Some(v);
    }
    if let Some(v) = args.data_dir {
        cfg.data_dir = Some(v);
    }
    if let Some(v) = args.out_dir {
        cfg.out_dir = Some(v);
    }
    if let Some(v) = &args.precision {
        cfg.precision = v.parse()?;
    }
    if args.reproducible {
        cfg.reproducible = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_train<T: Scalar>(cfg: &TrainConfig, train_set: &Dataset, test_set: &Dataset) -> anyhow::Result<()> {
    println!("{LOG_HEADER}");
    let outcome = train::train::<T>(cfg, train_set, test_set, |row| println!("{}", row.csv_row()))?;
    println!(
        "best test accuracy {:.2}% at epoch {}",
        outcome.best_acc * 100.0,
        outcome.best_epoch
    );
    if let Some(dir) = &cfg.out_dir {
        println!("wrote {}", dir.display());
    }
    Ok(())
}

fn cmd_train(args: TrainArgs) -> anyhow::Result<()> {
    let mut cfg = train_config(args)?;
    let dir = data_dir(cfg.data_dir.clone())?;
    cfg.data_dir = Some(dir.clone());
    let (train_set, test_set) = data::load_cifar10(&dir)?;
    eprintln!(
        "variant {}, {} epochs, batch {}, lr {} (milestones {:?}), {} training images",
        cfg.spec()?,
        cfg.epochs,
        cfg.batch_size,
        cfg.lr,
        cfg.milestones,
        cfg.subset.unwrap_or(train_set.len()).min(train_set.len())
    );
    match cfg.precision {
        Precision::F32 => run_train::<f32>(&cfg, &train_set, &test_set),
        Precision::F64 => run_train::<f64>(&cfg, &train_set, &test_set),
    }
}

fn eval_with<T: Scalar>(ckpt: &Checkpoint, test_set: &Dataset, batch: usize) -> anyhow::Result<()> {
    let model = ckpt.restore_model::<T>()?;
    let (acc, loss) = evaluate(&model, test_set, batch)?;
    println!("variant {}", model.spec());
    println!("epoch {}", ckpt.epoch()?);
    println!("test accuracy {:.2}%", acc * 100.0);
    println!("test loss {loss:.6}");
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> anyhow::Result<()> {
    let ckpt = Checkpoint::load(&args.checkpoint).with_context(|| format!("reading {}", args.checkpoint.display()))?;
    let (_, test_set) = data::load_cifar10(&data_dir(args.data_dir)?)?;
    let dtype = ckpt.records.first().map(|r| r.dtype).unwrap_or(DType::F32);
    match dtype {
        DType::F32 => eval_with::<f32>(&ckpt, &test_set, args.batch_size),
        DType::F64 => eval_with::<f64>(&ckpt, &test_set, args.batch_size),
    }
}

fn cmd_count(args: CountArgs) -> anyhow::Result<()> {
    let spec = args.variant.spec("resnet20")?;
    let convention: Convention = args.convention.parse()?;
    let report = count_macs(&spec, args.input_size, convention)?;
    print!("{}", report.to_table());
    println!(
        "{}: total params {}, total MACs {}",
        spec,
        thousands(report.total_params()),
        thousands(report.total_macs())
    );
    if let Some(path) = &args.csv {
        std::fs::write(path, report.to_csv()).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn print_suite(s: &Suite) -> bool {
    for c in &s.checks {
        println!("  {c}");
    }
    let ok = s.passed();
    println!("{} {} ({:.2}s)", if ok { "PASS" } else { "FAIL" }, s.name, s.seconds);
    ok
}

fn cmd_verify(args: VerifyArgs) -> anyhow::Result<()> {
    let mut suites = vec![
        Suite::run("parameter counts", verify::parameter_counts),
        Suite::run("MAC counts", verify::mac_counts),
        Suite::run("transforms", verify::transform_invariants),
        Suite::run("convolution theorems", verify::convolution_theorems),
        Suite::run("gradients", verify::gradients),
    ];
    if args.full {
        suites.push(Suite::run("ablation wiring", verify::ablation_wiring));
        let (tr, te) = (data::synthetic(512, 32, 1), data::synthetic(500, 32, 2));
        suites.push(Suite::run("determinism", || verify::determinism(&tr, &te)));
    }
    let mut all = true;
    for s in &suites {
        all &= print_suite(s);
    }
    if !all {
        bail!("some checks failed");
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> anyhow::Result<()> {
    if args.iters == 0 || args.batch_size == 0 {
        bail!("--iters and --batch-size must be positive");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let n = args.input_size;
    let x = Tensor::<f32>::uniform(&[args.batch_size, 3, n, n], -1.0, 1.0, &mut rng);
    println!("{:<24} {:>12} {:>12} {:>14}", "variant", "ms/batch", "ms/image", "MACs/image");
    let mut baseline = None;
    for v in &args.variants {
        let mut spec: VariantSpec = v.parse()?;
        spec.input_size = n;
        let model = Model::<f32>::new(spec.clone(), 0)?;
        model.predict(&x)?;
        let start = Instant::now();
        for _ in 0..args.iters {
            model.predict(&x)?;
        }
        let ms = start.elapsed().as_secs_f64() * 1e3 / args.iters as f64;
        let macs = count_macs(&spec, n, Convention::MatrixProduct)?.total_macs();
        let rel = match baseline {
            None => {
                baseline = Some(ms);
                String::new()
            }
            Some(b) => format!("  ({:.2}x first)", ms / b),
        };
        println!("{:<24} {:>12.2} {:>12.3} {:>14}{rel}", v, ms, ms / args.batch_size as f64, thousands(macs));
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Count(a) => cmd_count(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
