mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::warn;

use config::{ConfigError, EvalMode, RunConfig};
use ppn_core::data::{generate_synthetic, load_bundle, save_bundle, DatasetBundle, BUNDLE_MAGIC};
use ppn_core::eval::{default_grid, sweep_to_tsv, Evaluator};
use ppn_core::training::gradcheck::{CheckDims, GradCheckInstance, GradCheckOptions};
use ppn_core::training::{load_checkpoint, save_checkpoint, train_with_restarts, TrainError, CHECKPOINT_MAGIC};
use ppn_core::{Error, ErrorClass};

#[derive(Parser, Debug)]
#[command(name = "ppn", version, about = "Part prototype network for zero-shot learning")]
struct Cli {
    /// Config file of `key = value` lines; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (also read from PPN_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a planted-attribute synthetic bundle.
    Synth(SynthArgs),
    /// Train a model on a bundle and write checkpoints plus the training log.
    Train(TrainArgs),
    /// Evaluate a checkpoint (ZSL T1 and calibrated GZSL u/s/H).
    Eval(EvalArgs),
    /// Sweep a calibration parameter and write (parameter, u, s, H) rows.
    Sweep(SweepArgs),
    /// Compare analytic gradients with central finite differences.
    Gradcheck(GradcheckArgs),
    /// Print the manifest and a summary of a bundle or checkpoint.
    Inspect(InspectArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output bundle directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seen_classes: Option<usize>,
    #[arg(long)]
    unseen_classes: Option<usize>,
    #[arg(long)]
    attributes: Option<usize>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    regions: Option<usize>,
    #[arg(long)]
    feature_dim: Option<usize>,
    #[arg(long)]
    examples_per_class: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    bundle: Option<PathBuf>,
    /// Output directory: best checkpoint, `last/` checkpoint and `train_log.tsv`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    /// val_h, val_t1 or none.
    #[arg(long)]
    early_stop: Option<String>,
    #[arg(long)]
    patience: Option<usize>,
    /// tensor_fibers, prior_rows or none.
    #[arg(long)]
    attribute_norm: Option<String>,
    /// Independent initializations; the best on validation is kept.
    #[arg(long)]
    restarts: Option<usize>,
}

#[derive(Args, Debug)]
struct CalibrationArgs {
    /// multiplicative, additive or none.
    #[arg(long)]
    calibration: Option<String>,
    #[arg(long)]
    z: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    bundle: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// zsl or gzsl.
    #[arg(long)]
    mode: Option<String>,
    #[command(flatten)]
    cal: CalibrationArgs,
    /// Write the tab-delimited report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    bundle: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// multiplicative or additive.
    #[arg(long)]
    calibration: Option<String>,
    /// Comma-separated ascending grid; defaults to the mode's standard grid.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 5)]
    classes: usize,
    #[arg(long, default_value_t = 7)]
    attributes: usize,
    #[arg(long, default_value_t = 11)]
    embed_dim: usize,
    #[arg(long, default_value_t = 3)]
    regions: usize,
    #[arg(long, default_value_t = 13)]
    feature_dim: usize,
    #[arg(long, default_value_t = 4)]
    batch: usize,
    /// Number of random instances, seeded from `--seed` upward.
    #[arg(long, default_value_t = 1)]
    instances: u64,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    /// Perturb one analytic coordinate (negative control).
    #[arg(long, hide = true)]
    corrupt: bool,
}

#[derive(Args, Debug)]
struct InspectArgs {
    path: PathBuf,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Core(Error),
    Train(TrainError),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        let class = match self {
            CliError::Usage(_) => ErrorClass::Usage,
            CliError::Core(e) => e.class(),
            CliError::Train(e) => e.class(),
        };
        match class {
            ErrorClass::Usage => 1,
            ErrorClass::Data => 2,
            ErrorClass::Numeric => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Train(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.0)
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        CliError::Train(e)
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn set_opt<T: ToString>(cfg: &mut RunConfig, key: &str, v: &Option<T>) -> CliResult {
    if let Some(v) = v {
        cfg.set(key, &v.to_string())?;
    }
    Ok(())
}

fn set_path(cfg: &mut RunConfig, key: &str, v: &Option<PathBuf>) -> CliResult {
    if let Some(p) = v {
        cfg.set(key, &p.to_string_lossy())?;
    }
    Ok(())
}

fn build_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    if let Ok(v) = std::env::var("PPN_THREADS") {
        if !cfg.explicit.contains("threads") {
            cfg.set("threads", &v)
                .map_err(|e| CliError::Usage(format!("PPN_THREADS: {e}")))?;
        }
    }
    set_opt(&mut cfg, "seed", &cli.seed)?;
    set_opt(&mut cfg, "threads", &cli.threads)?;
    let c = &mut cfg;
    match &cli.command {
        Command::Synth(a) => {
            set_path(c, "paths.out", &a.out)?;
            set_opt(c, "synth.seen_classes", &a.seen_classes)?;
            set_opt(c, "synth.unseen_classes", &a.unseen_classes)?;
            set_opt(c, "synth.attributes", &a.attributes)?;
            set_opt(c, "synth.embed_dim", &a.embed_dim)?;
            set_opt(c, "synth.regions", &a.regions)?;
            set_opt(c, "synth.feature_dim", &a.feature_dim)?;
            set_opt(c, "synth.examples_per_class", &a.examples_per_class)?;
            set_opt(c, "synth.noise", &a.noise)?;
        }
        Command::Train(a) => {
            set_path(c, "paths.bundle", &a.bundle)?;
            set_path(c, "paths.out", &a.out)?;
            set_opt(c, "train.epochs", &a.epochs)?;
            set_opt(c, "train.batch_size", &a.batch_size)?;
            set_opt(c, "train.learning_rate", &a.lr)?;
            set_opt(c, "train.lambda1", &a.lambda1)?;
            set_opt(c, "train.lambda2", &a.lambda2)?;
            set_opt(c, "train.early_stop", &a.early_stop)?;
            set_opt(c, "train.patience", &a.patience)?;
            set_opt(c, "train.attribute_norm", &a.attribute_norm)?;
            set_opt(c, "train.restarts", &a.restarts)?;
        }
        Command::Eval(a) => {
            set_path(c, "paths.bundle", &a.bundle)?;
            set_path(c, "paths.checkpoint", &a.checkpoint)?;
            set_path(c, "paths.out", &a.out)?;
            set_opt(c, "eval.mode", &a.mode)?;
            set_opt(c, "eval.calibration", &a.cal.calibration)?;
            set_opt(c, "eval.z", &a.cal.z)?;
            set_opt(c, "eval.gamma", &a.cal.gamma)?;
        }
        Command::Sweep(a) => {
            set_path(c, "paths.bundle", &a.bundle)?;
            set_path(c, "paths.checkpoint", &a.checkpoint)?;
            set_path(c, "paths.out", &a.out)?;
            set_opt(c, "eval.calibration", &a.calibration)?;
            set_opt(c, "eval.grid", &a.grid)?;
        }
        Command::Gradcheck(a) => {
            set_opt(c, "train.lambda1", &a.lambda1)?;
            set_opt(c, "train.lambda2", &a.lambda2)?;
        }
        Command::Inspect(_) => {}
    }
    cfg.train.seed = cfg.seed;
    cfg.validate()?;
    Ok(cfg)
}

fn required<'a>(v: &'a Option<PathBuf>, what: &str) -> CliResult<&'a Path> {
    v.as_deref()
        .ok_or_else(|| CliError::Usage(format!("missing {what} (flag or config key)")))
}

fn ensure_writable(path: &Path, force: bool) -> CliResult {
    if path.exists() && !force {
        return Err(CliError::Usage(format!(
            "{} already exists; pass --force to overwrite",
            path.display()
        )));
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> CliResult {
    fs::write(path, text).map_err(|e| {
        CliError::Core(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn cmd_synth(cfg: &RunConfig, force: bool) -> CliResult {
    let out = required(&cfg.out, "--out")?;
    ensure_writable(out, force)?;
    let bundle = generate_synthetic(&cfg.synth, cfg.seed)?;
    save_bundle(&bundle, out)?;
    println!("wrote {} ({}, {} examples)", out.display(), bundle.dims(), bundle.examples().len());
    Ok(())
}

fn load(cfg: &RunConfig) -> CliResult<DatasetBundle> {
    Ok(load_bundle(required(&cfg.bundle, "--bundle")?)?)
}

fn cmd_train(cfg: &RunConfig, force: bool) -> CliResult {
    let out = required(&cfg.out, "--out")?;
    ensure_writable(out, force)?;
    let bundle = load(cfg)?;
    let outcome = match train_with_restarts(&bundle, &cfg.train, cfg.restarts) {
        Ok(o) => o,
        Err(TrainError::NonFinite {
            epoch,
            last_good,
            source,
        }) => {
            let dir = out.join("last_good");
            save_checkpoint(&last_good, &dir)?;
            write_text(&out.join("train_log.tsv"), &last_good.log_tsv())?;
            eprintln!("last good checkpoint (epoch {}) written to {}", last_good.epoch, dir.display());
            return Err(CliError::Train(TrainError::NonFinite {
                epoch,
                last_good,
                source,
            }));
        }
        Err(e) => return Err(e.into()),
    };
    save_checkpoint(&outcome.best, out)?;
    save_checkpoint(&outcome.last, &out.join("last"))?;
    write_text(&out.join("train_log.tsv"), &outcome.last.log_tsv())?;
    let tail = outcome.last.log.last().map(|r| r.to_tsv()).unwrap_or_else(|| "-".into());
    println!(
        "trained {} epochs (best epoch {}{}); last log row: {tail}",
        outcome.last.epoch,
        outcome.best.epoch,
        if outcome.stopped_early { ", stopped early" } else { "" }
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_eval(cfg: &RunConfig, force: bool) -> CliResult {
    let bundle = load(cfg)?;
    let ckpt = load_checkpoint(required(&cfg.checkpoint, "--checkpoint")?)?;
    let ev = Evaluator::for_checkpoint(&ckpt, &bundle)?;
    let text = match cfg.mode {
        EvalMode::Zsl => {
            if cfg.calibration_explicit() {
                warn!("calibration settings are ignored in zsl mode");
            }
            let t1 = ev.zsl()?;
            println!("ZSL  T1 = {:.4}", t1.mean);
            let mut tsv = format!("metric\tvalue\nt1_unseen\t{}\n\nclass\tcorrect\ttotal\taccuracy\n", t1.mean);
            for r in &t1.per_class {
                let _ = writeln!(tsv, "{}\t{}\t{}\t{}", r.class, r.correct, r.total, r.accuracy());
            }
            tsv
        }
        EvalMode::Gzsl => {
            let report = ev.gzsl(&cfg.calibration)?;
            print!("{}", report.summary());
            report.to_tsv()
        }
    };
    if let Some(out) = &cfg.out {
        ensure_writable(out, force)?;
        write_text(out, &text)?;
    }
    Ok(())
}

fn cmd_sweep(cfg: &RunConfig, force: bool) -> CliResult {
    let bundle = load(cfg)?;
    let ckpt = load_checkpoint(required(&cfg.checkpoint, "--checkpoint")?)?;
    let mode = cfg.calibration.mode;
    let grid = cfg.grid.clone().unwrap_or_else(|| default_grid(mode));
    let rows = Evaluator::for_checkpoint(&ckpt, &bundle)?.sweep(mode, &grid)?;
    let text = sweep_to_tsv(mode, &rows);
    print!("{text}");
    if let Some(out) = &cfg.out {
        ensure_writable(out, force)?;
        write_text(out, &text)?;
    }
    Ok(())
}

fn cmd_gradcheck(cfg: &RunConfig, a: &GradcheckArgs) -> CliResult {
    let dims = CheckDims {
        classes: a.classes,
        attributes: a.attributes,
        embed_dim: a.embed_dim,
        regions: a.regions,
        feature_dim: a.feature_dim,
        batch: a.batch,
    };
    let opts = GradCheckOptions {
        corrupt: a.corrupt,
        ..GradCheckOptions::default()
    };
    let mut failures = 0;
    for seed in cfg.seed..cfg.seed + a.instances {
        let inst = GradCheckInstance::random(dims, seed)?;
        let report = inst.check(cfg.train.lambda1, cfg.train.lambda2, &opts)?;
        println!("# instance seed {seed}");
        println!("{report}");
        if !report.passed() {
            failures += 1;
        }
    }
    if failures > 0 {
        return Err(Error::GradCheck(format!("{failures} of {} instances failed", a.instances)).into());
    }
    Ok(())
}

fn cmd_inspect(path: &Path) -> CliResult {
    let manifest = path.join(ppn_core::data::container::MANIFEST_FILE);
    let text = fs::read_to_string(&manifest).map_err(|e| {
        CliError::Core(Error::Io {
            path: manifest.clone(),
            source: e,
        })
    })?;
    print!("{text}");
    let magic = text.split_whitespace().next().unwrap_or("");
    println!();
    if magic == BUNDLE_MAGIC {
        let b = load_bundle(path)?;
        let s = b.splits();
        println!("bundle: {}", b.dims());
        println!(
            "examples {}; seen classes {}, unseen classes {}; train {}, test_seen {}, test_unseen {}, val {}",
            b.examples().len(),
            s.seen_classes.len(),
            s.unseen_classes.len(),
            s.train.len(),
            s.test_seen.len(),
            s.test_unseen.len(),
            s.val.len()
        );
    } else if magic == CHECKPOINT_MAGIC {
        let c = load_checkpoint(path)?;
        println!(
            "checkpoint: epoch {}, {} parameters, {:?}",
            c.epoch,
            c.params.num_params(),
            c.config
        );
        print!("{}", c.log_tsv());
    } else {
        return Err(Error::Manifest {
            path: manifest,
            msg: format!("unrecognized magic `{magic}`"),
        }
        .into());
    }
    Ok(())
}

fn run(cli: &Cli) -> CliResult {
    let cfg = build_config(cli)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Synth(_) => cmd_synth(&cfg, cli.force),
        Command::Train(_) => cmd_train(&cfg, cli.force),
        Command::Eval(_) => cmd_eval(&cfg, cli.force),
        Command::Sweep(_) => cmd_sweep(&cfg, cli.force),
        Command::Gradcheck(a) => cmd_gradcheck(&cfg, a),
        Command::Inspect(a) => cmd_inspect(&a.path),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
