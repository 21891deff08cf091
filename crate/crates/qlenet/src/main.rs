use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qlenet::config::{parse_optimizer, Dataset, FileConfig, Result, RunConfig, VariantName};

/// Dataset distillation for hybrid classical–quantum LeNet models.
#[derive(Parser)]
#[command(name = "qlenet", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand; a TOML config file may supply any
/// of them, and explicit flags win over the file.
#[derive(Args)]
struct CommonArgs {
    /// TOML config file; command-line flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// mnist | cifar10
    #[arg(long)]
    dataset: Option<String>,
    /// classical | q-nr-nh | q-nr-h | q-r-h | q-r-h-frozen
    #[arg(long)]
    variant: Option<String>,
    /// Number of synthetic samples N (must divide evenly by 10 classes)
    #[arg(long)]
    n_synthetic: Option<usize>,
    /// Unrolled inner gradient steps T
    #[arg(long)]
    inner_steps: Option<usize>,
    /// Outer epochs (passes over the real training data)
    #[arg(long)]
    epochs: Option<usize>,
    /// Outer learning rate α
    #[arg(long)]
    alpha: Option<f64>,
    /// Initial learnable inner learning rate η̃
    #[arg(long)]
    eta_init: Option<f64>,
    /// Real-data minibatch size for the outer loss
    #[arg(long)]
    batch_size: Option<usize>,
    /// Seed for θ₀, synthetic init, and batch shuffling
    #[arg(long)]
    seed: Option<u64>,
    /// Strongly entangling layers L in the quantum circuit
    #[arg(long)]
    layers: Option<usize>,
    /// Outer optimizer: plain-gd | adam
    #[arg(long)]
    optimizer: Option<String>,
    /// Use only the first K training samples
    #[arg(long)]
    train_limit: Option<usize>,
    /// Use only the first K test samples
    #[arg(long)]
    test_limit: Option<usize>,
    /// Directory holding mnist/ and cifar10/ subdirectories
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Output directory for artifacts
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Distill the training set into N synthetic images plus η̃
    Distill(CommonArgs),
    /// Re-evaluate a distilled dataset file on the test set
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        /// Path to the distilled .qdd1 file
        #[arg(long)]
        distilled: PathBuf,
    },
    /// Train the selected variant on real data (contextualizes distillation)
    TrainBaseline(CommonArgs),
    /// Export a distilled dataset's images as PGM/PPM plus a contact sheet
    ExportImages {
        #[command(flatten)]
        common: CommonArgs,
        /// Path to the distilled .qdd1 file
        #[arg(long)]
        distilled: PathBuf,
    },
    /// Run the gradient oracle suite and report per-check max relative errors
    Gradcheck(CommonArgs),
}

fn resolve(args: &CommonArgs) -> Result<RunConfig> {
    let file = match &args.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let dataset = Dataset::parse(
        args.dataset
            .as_deref()
            .or(file.dataset.as_deref())
            .unwrap_or("mnist"),
    )?;
    let variant = VariantName::parse(
        args.variant
            .as_deref()
            .or(file.variant.as_deref())
            .unwrap_or("q-r-h"),
    )?;
    let mut distill = RunConfig::default_distill(dataset);
    if let Some(v) = file.n_synthetic {
        distill.n_synthetic = v;
    }
    if let Some(v) = file.inner_steps {
        distill.inner_steps = v;
    }
    if let Some(v) = file.epochs {
        distill.epochs = v;
    }
    if let Some(v) = file.alpha {
        distill.alpha = v;
    }
    if let Some(v) = file.eta_init {
        distill.eta_init = v;
    }
    if let Some(v) = file.batch_size {
        distill.batch_size = v;
    }
    if let Some(v) = file.seed {
        distill.seed = v;
    }
    if let Some(v) = &file.optimizer {
        distill.outer_optimizer = parse_optimizer(v)?;
    }
    if let Some(v) = args.n_synthetic {
        distill.n_synthetic = v;
    }
    if let Some(v) = args.inner_steps {
        distill.inner_steps = v;
    }
    if let Some(v) = args.epochs {
        distill.epochs = v;
    }
    if let Some(v) = args.alpha {
        distill.alpha = v;
    }
    if let Some(v) = args.eta_init {
        distill.eta_init = v;
    }
    if let Some(v) = args.batch_size {
        distill.batch_size = v;
    }
    if let Some(v) = args.seed {
        distill.seed = v;
    }
    if let Some(v) = &args.optimizer {
        distill.outer_optimizer = parse_optimizer(v)?;
    }
    Ok(RunConfig {
        dataset,
        variant,
        layers: args.layers.or(file.layers).unwrap_or(3),
        distill,
        train_limit: args.train_limit.or(file.train_limit),
        test_limit: args.test_limit.or(file.test_limit),
        data_dir: args
            .data_dir
            .clone()
            .or(file.data_dir.map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("data")),
        out_dir: args
            .out_dir
            .clone()
            .or(file.out_dir.map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out")),
    })
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Distill(args) => {
            let config = resolve(&args)?;
            let outcome = qlenet::cmd_distill(&config)?;
            println!(
                "distilled {} synthetic samples in {} outer steps; eta={} accuracy={:.4}",
                outcome.synth.n(),
                outcome.loss_history.len(),
                outcome.synth.eta,
                outcome.accuracy
            );
            println!("artifacts written to {}", config.out_dir.display());
            Ok(true)
        }
        Command::Eval { common, distilled } => {
            let config = resolve(&common)?;
            let accuracy = qlenet::cmd_eval(&config, &distilled)?;
            println!("accuracy={accuracy:.4}");
            Ok(true)
        }
        Command::TrainBaseline(args) => {
            let config = resolve(&args)?;
            let accuracy = qlenet::cmd_train_baseline(&config)?;
            println!("baseline accuracy={accuracy:.4}");
            Ok(true)
        }
        Command::ExportImages { common, distilled } => {
            let config = resolve(&common)?;
            let paths = qlenet::cmd_export_images(&config, &distilled)?;
            println!("exported {} files to {}", paths.len(), config.out_dir.display());
            Ok(true)
        }
        Command::Gradcheck(args) => {
            let config = resolve(&args)?;
            let results = qlenet::run_gradcheck(config.distill.seed)?;
            let mut all_ok = true;
            for r in &results {
                let status = if r.passed() { "ok" } else { "FAIL" };
                println!(
                    "{status:>4}  {:<36} max_rel_err={:.3e} (threshold {:.0e})",
                    r.name, r.max_rel_err, r.threshold
                );
                all_ok &= r.passed();
            }
            if !all_ok {
                let failures: Vec<&str> =
                    results.iter().filter(|r| !r.passed()).map(|r| r.name.as_str()).collect();
                eprintln!("gradcheck failed: {}", failures.join(", "));
            }
            Ok(all_ok)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
