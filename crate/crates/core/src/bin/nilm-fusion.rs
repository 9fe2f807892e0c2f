use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use nilm_fusion::eval;
use nilm_fusion::features::FeatureKind;
use nilm_fusion::mixer::Split;
use nilm_fusion::pipeline::{self, EvalInputs, PlaidSource, RunConfig, SourceConfig};
use nilm_fusion::{NilmError, Result};

// stdout may be a closed pipe (`| head`); losing output is fine, panicking is not
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Parser)]
#[command(name = "nilm-fusion", version, about = "Multi-label appliance recognition from aggregate current")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the mixed aggregate dataset.
    Generate(Common),
    /// Fit features and train the classifier.
    Train {
        #[command(flatten)]
        common: Common,
        /// Continue from an existing checkpoint in the model directory.
        #[arg(long)]
        resume: bool,
    },
    /// Predict a split and write metric reports.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        override_hash_check: bool,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        transform: Option<PathBuf>,
        /// Aggregate dataset directory.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
    },
    /// Recompute reports from a predictions file.
    Report {
        /// Defaults to `<out>/eval/predictions.json`.
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

#[derive(Args)]
struct Common {
    /// JSON or TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// PLAID-style recordings directory (CSV files plus manifest.json).
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = parse_features)]
    features: Option<FeatureKind>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    n_max: Option<usize>,
}

fn parse_features(s: &str) -> std::result::Result<FeatureKind, String> {
    s.parse().map_err(|e: NilmError| e.to_string())
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(dir) = &self.data_dir {
            let classes = match &cfg.source {
                SourceConfig::Plaid(p) => p.classes.clone(),
                SourceConfig::Synthetic(_) => Default::default(),
            };
            cfg.source = SourceConfig::Plaid(PlaidSource { dir: dir.clone(), classes });
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(f) = self.features {
            cfg.features = f;
        }
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
        }
        if let Some(b) = self.batch_size {
            cfg.train.batch_size = b;
        }
        if let Some(lr) = self.lr {
            cfg.train.lr = lr;
        }
        if let Some(n) = self.n_max {
            cfg.mix.n_max = n;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    pipeline::init_thread_pool()?;
    match cli.command {
        Command::Generate(common) => {
            let cfg = common.resolve()?;
            let m = pipeline::cmd_generate(&cfg)?;
            say!(
                "wrote {} aggregates from {} windows to {}",
                m.aggregates_after_mixing,
                m.windows_before_mixing,
                cfg.dataset_dir().display()
            );
            for (k, n) in &m.per_k {
                say!("  k={k:<3} {n}");
            }
        }
        Command::Train { common, resume } => {
            let cfg = common.resolve()?;
            let s = pipeline::cmd_train(&cfg, resume)?;
            say!(
                "{} features -> {} parameters; {} epochs, best val F1 {:.4} at epoch {}",
                s.input_dim, s.param_count, s.epochs_run, s.best_val_f1, s.best_epoch
            );
        }
        Command::Eval {
            common,
            override_hash_check,
            checkpoint,
            transform,
            dataset,
            split,
        } => {
            let cfg = common.resolve()?;
            let inputs = EvalInputs {
                checkpoint,
                transform,
                dataset,
                split: Some(match split {
                    SplitArg::Train => Split::Train,
                    SplitArg::Val => Split::Val,
                    SplitArg::Test => Split::Test,
                }),
                override_hash_check,
            };
            let report = pipeline::cmd_eval(&cfg, &inputs)?;
            print_report(&report);
        }
        Command::Report { predictions, common } => {
            let cfg = common.resolve()?;
            let dir = cfg.eval_dir();
            let predictions = predictions.unwrap_or_else(|| dir.join(eval::PREDICTIONS_FILE));
            let report = pipeline::cmd_report(&predictions, &dir)?;
            print_report(&report);
        }
    }
    Ok(())
}

fn print_report(r: &eval::MetricsReport) {
    say!("F1 (sample-averaged) {:.4} over {} samples", r.f1_mean, r.n_samples);
    for c in &r.per_class {
        say!("  {:<28} {:.4}", c.class, c.f1);
    }
    for k in &r.per_k {
        say!("  k={:<3} n={:<5} F1 {:.4}  tp={} fp={} tn={} fn={}", k.k, k.n_samples, k.f1, k.tp, k.fp, k.tn, k.fn_);
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(pipeline::exit_code(&e) as u8)
        }
    }
}
