use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use mpcnn::commands::{
    parse_class_weights, parse_sweep, run_bench, run_detect, run_eval, run_segment, run_synth,
    run_train, BenchArgs, DetectArgs, EvalArgs, SegmentArgs, SynthArgs, ThresholdArg, TrainArgs,
};
use mpcnn::error::AppError;
use mpcnn::Precision;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PrecisionArg {
    Double,
    Single,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OptimizerArg {
    /// Per-image gradient descent safeguarded by the Armijo rule.
    SgdArmijo,
    /// Full-batch L-BFGS over the training split.
    Lbfgs,
}

#[derive(Parser)]
#[command(
    name = "mpcnn",
    about = "Train and run max-pooling convolutional networks for per-pixel \
             image segmentation, processing whole images in one dense pass",
    version
)]
struct Cli {
    /// Architecture config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Dataset manifest CSV (columns id,imagePath,labelPath,split).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,

    /// Model file (output of train, input everywhere else).
    #[arg(long, global = true)]
    model: Option<PathBuf>,

    /// Seed for every random choice (init, shuffling, sampling).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Force deterministic execution. All computation here is single-threaded
    /// and seeded, so runs are always deterministic; the flag is accepted for
    /// interface stability.
    #[arg(long, global = true)]
    deterministic: bool,

    /// Scalar precision; `single` is allowed for bench only.
    #[arg(long, global = true, value_enum, default_value_t = PrecisionArg::Double)]
    precision: PrecisionArg,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a labelled dataset (requires --config, --manifest,
    /// --model).
    Train {
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long, value_enum, default_value_t = OptimizerArg::SgdArmijo)]
        optimizer: OptimizerArg,
        /// `auto` (inverse class frequency) or explicit `w0,w1,...`.
        #[arg(long, default_value = "auto")]
        class_weights: String,
        /// Epoch log CSV path (default: model path with .log.csv extension).
        #[arg(long)]
        log: Option<PathBuf>,
        /// Expand the training split with the 8 square symmetries.
        #[arg(long)]
        augment: bool,
    },
    /// Segment one image: per-class probability PNGs plus an argmax label
    /// PNG (requires --model).
    Segment {
        #[arg(long)]
        image: PathBuf,
        /// Output prefix; files are <prefix>_prob_c<k>.png and
        /// <prefix>_argmax.png.
        #[arg(long)]
        out: PathBuf,
    },
    /// Flag images whose predicted defect pixel count exceeds a threshold
    /// (requires --model, --manifest).
    Detect {
        #[arg(long, default_value_t = 1)]
        defect_class: usize,
        /// Pixel-count threshold, or `auto` to sweep on the validation split.
        #[arg(long, default_value = "auto")]
        threshold: String,
        /// Auto-sweep range `min,max,step` (default 0,maxArea,1% of area).
        #[arg(long)]
        sweep: Option<String>,
        #[arg(long, default_value = "detect_report.csv")]
        out: PathBuf,
    },
    /// Balanced per-pixel error on sampled test pixels plus a full confusion
    /// matrix (requires --model, --manifest).
    Eval {
        #[arg(long, default_value_t = 5000)]
        npos: usize,
        #[arg(long, default_value_t = 5000)]
        nneg: usize,
        #[arg(long, default_value_t = 1)]
        positive_class: usize,
        #[arg(long, default_value = "eval_report.csv")]
        out: PathBuf,
    },
    /// Time the dense pass against the patch-by-patch baseline on a random
    /// image (requires --model).
    Bench {
        #[arg(long, default_value_t = 256)]
        size: usize,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        /// Also write the report as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate the synthetic two-texture dataset with a manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 30)]
        images: usize,
        #[arg(long, default_value_t = 64)]
        rows: usize,
        #[arg(long, default_value_t = 64)]
        cols: usize,
    },
}

fn require(opt: Option<PathBuf>, flag: &str) -> Result<PathBuf, AppError> {
    opt.ok_or_else(|| AppError::config(format!("missing required flag --{flag}")))
}

fn run(cli: Cli) -> Result<(), AppError> {
    let precision = match cli.precision {
        PrecisionArg::Double => Precision::Double,
        PrecisionArg::Single => Precision::Single,
    };
    match cli.command {
        Command::Train {
            epochs,
            optimizer,
            class_weights,
            log,
            augment,
        } => run_train(&TrainArgs {
            config: require(cli.config, "config")?,
            manifest: require(cli.manifest, "manifest")?,
            model_out: require(cli.model, "model")?,
            epochs,
            optimizer: match optimizer {
                OptimizerArg::SgdArmijo => mpcnn_core::optim::OptimizerKind::SgdArmijo,
                OptimizerArg::Lbfgs => mpcnn_core::optim::OptimizerKind::Lbfgs,
            },
            seed: cli.seed,
            class_weights: parse_class_weights(&class_weights)?,
            log,
            augment,
            precision,
        }),
        Command::Segment { image, out } => run_segment(&SegmentArgs {
            model: require(cli.model, "model")?,
            image,
            out_prefix: out,
            precision,
        }),
        Command::Detect {
            defect_class,
            threshold,
            sweep,
            out,
        } => run_detect(&DetectArgs {
            model: require(cli.model, "model")?,
            manifest: require(cli.manifest, "manifest")?,
            defect_class,
            threshold: if threshold == "auto" {
                ThresholdArg::Auto
            } else {
                ThresholdArg::Fixed(threshold.parse().map_err(|_| {
                    AppError::config(format!("bad threshold '{threshold}'"))
                })?)
            },
            sweep: sweep.as_deref().map(parse_sweep).transpose()?,
            out,
            precision,
        }),
        Command::Eval {
            npos,
            nneg,
            positive_class,
            out,
        } => run_eval(&EvalArgs {
            model: require(cli.model, "model")?,
            manifest: require(cli.manifest, "manifest")?,
            n_pos: npos,
            n_neg: nneg,
            positive_class,
            seed: cli.seed,
            out,
            precision,
        })
        .map(|_| ()),
        Command::Bench { size, repeats, out } => run_bench(&BenchArgs {
            model: require(cli.model, "model")?,
            size,
            repeats,
            seed: cli.seed,
            precision,
            out,
        })
        .map(|_| ()),
        Command::Synth {
            out,
            images,
            rows,
            cols,
        } => run_synth(&SynthArgs {
            out_dir: out,
            images,
            rows,
            cols,
            seed: cli.seed,
        }),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
