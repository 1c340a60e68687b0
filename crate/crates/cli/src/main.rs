use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rckl::solver::Mode;
use rckl::LossKind;
use rckl_cli::commands::{self, TrainRequest};
use rckl_cli::config::RunConfig;
use rckl_cli::CliResult;

#[derive(Parser)]
#[command(
    name = "rckl",
    version,
    about = "Kernel learning from relative-comparison triplets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a kernel to a triplet file and write a model file.
    Train(TrainArgs),
    /// Print the fraction of triplets a model violates.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        triplets: PathBuf,
    },
    /// Triplet-set utilities.
    #[command(subcommand)]
    Triplets(TripletCommand),
    /// Run the synthetic learning-curve study and write one CSV row per cell.
    Experiment {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Override the configured number of trials.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Write the synthetic kernels and one trial's triplet files.
    Generate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        trial: usize,
        /// Learning-curve point whose train/validation rounds are written.
        #[arg(long, default_value_t = 10)]
        subset: usize,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    triplets: PathBuf,
    /// Auxiliary kernel file; repeat for several.
    #[arg(long = "kernel")]
    kernels: Vec<PathBuf>,
    /// Rescale auxiliary kernels to unit trace.
    #[arg(long)]
    normalize_kernels: bool,
    /// JSON config; its `solver` section is used.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    loss: Option<LossKind>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum TripletCommand {
    /// Number of distinct triplet questions over n objects.
    Count { n: usize },
    /// Transitive closure of a triplet file.
    Closure {
        file: PathBuf,
        /// Only the triplets not already in the input.
        #[arg(long)]
        inferred_only: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Report pairs of contradictory triplets.
    Conflicts { file: PathBuf },
    /// An order of all triplets in which no prefix implies anything new.
    Adversarial {
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Check every prefix and print the result.
        #[arg(long)]
        verify: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::Train(args) => {
            let mut cfg = RunConfig::load_or_default(args.config.as_deref())?.solver;
            cfg.mode = args.mode.unwrap_or(cfg.mode);
            cfg.loss = args.loss.unwrap_or(cfg.loss);
            cfg.lambda1 = args.lambda1.unwrap_or(cfg.lambda1);
            cfg.lambda2 = args.lambda2.unwrap_or(cfg.lambda2);
            cfg.eta = args.eta.unwrap_or(cfg.eta);
            cfg.max_iters = args.max_iters.unwrap_or(cfg.max_iters);
            cfg.seed = args.seed.unwrap_or(cfg.seed);
            let req = TrainRequest {
                triplets: &args.triplets,
                kernels: &args.kernels,
                normalize_kernels: args.normalize_kernels,
                config: cfg,
                model_out: &args.out,
            };
            commands::train(&req, out).map(|_| ())
        }
        Command::Evaluate { model, triplets } => {
            commands::evaluate(&model, &triplets, out).map(|_| ())
        }
        Command::Triplets(cmd) => match cmd {
            TripletCommand::Count { n } => commands::count(n, out),
            TripletCommand::Closure {
                file,
                inferred_only,
                out: dest,
            } => commands::closure(&file, inferred_only, dest.as_deref(), out),
            TripletCommand::Conflicts { file } => commands::conflicts(&file, out),
            TripletCommand::Adversarial {
                n,
                seed,
                verify,
                out: dest,
            } => commands::adversarial(n, seed, verify, dest.as_deref(), out),
        },
        Command::Experiment {
            config,
            out: dest,
            trials,
        } => {
            let mut cfg = RunConfig::load_or_default(config.as_deref())?.experiment;
            cfg.trials = trials.unwrap_or(cfg.trials);
            commands::experiment(&cfg, &dest, out).map(|_| ())
        }
        Command::Generate {
            config,
            out_dir,
            trial,
            subset,
        } => {
            let cfg = RunConfig::load_or_default(config.as_deref())?.experiment;
            commands::generate(&cfg, trial, subset, &out_dir, out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(cli, &mut lock) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = lock.flush();
            eprintln!("{}: {e}", e.code());
            ExitCode::FAILURE
        }
    }
}
