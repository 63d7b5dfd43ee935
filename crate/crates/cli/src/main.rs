//! `inhernet`: train a teacher, inherit it into gated low-rank layers,
//! fine-tune or distill, and check the accounting.

mod commands;
mod data;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use inhernet::inherit::{Combiner, GateInput, InheritOptions, RankPolicy, Variant};
use inhernet::train::{LossKind, Schedule, TrainConfig};
use inhernet::verify::Suite;

use data::DataArgs;

#[derive(Debug, Parser)]
#[command(name = "inhernet", version, about = "SVD-driven network inheritance", propagate_version = true)]
struct Cli {
    /// Worker threads for seed sweeps and kernels (overrides INHERIT_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a ReLU MLP teacher from scratch.
    TrainTeacher(TrainTeacherArgs),
    /// Turn a teacher checkpoint into an inherited network.
    Inherit(InheritArgs),
    /// Fine-tune a checkpoint on its task.
    Train(TrainCmdArgs),
    /// Fine-tune a student under cross-entropy plus distillation from a teacher.
    Distill(DistillArgs),
    /// Report loss and accuracy of a checkpoint on the eval split.
    Eval(EvalArgs),
    /// Compression, spectral and preservation accounting of teacher vs inherited.
    Analyze(AnalyzeArgs),
    /// Run the property suites and print a pass/fail table.
    Verify(VerifyArgs),
    /// Reproduce one of the seed-swept experiments.
    Insight(InsightArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScheduleArg {
    InverseSqrt,
    Constant,
    StepDecay,
}

#[derive(Debug, Clone, Args)]
struct TrainArgs {
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, value_enum, default_value = "inverse-sqrt")]
    schedule: ScheduleArg,
    /// Step indices at which `step-decay` multiplies the rate by --decay-factor.
    #[arg(long, value_delimiter = ',')]
    milestones: Vec<usize>,
    #[arg(long, default_value_t = 0.1)]
    decay_factor: f64,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Eval loss at which epochs-to-threshold is recorded.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, requires = "threshold")]
    stop_at_threshold: bool,
}

impl TrainArgs {
    fn config(&self, loss: LossKind) -> TrainConfig {
        TrainConfig {
            base_lr: self.lr,
            schedule: match self.schedule {
                ScheduleArg::InverseSqrt => Schedule::InverseSqrt,
                ScheduleArg::Constant => Schedule::Constant,
                ScheduleArg::StepDecay => Schedule::StepDecay {
                    milestones: self.milestones.clone(),
                    factor: self.decay_factor,
                },
            },
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            loss,
            threshold: self.threshold,
            stop_at_threshold: self.stop_at_threshold,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
struct LogArgs {
    /// RunLog CSV path (default: the output checkpoint with a .csv extension).
    #[arg(long, value_name = "FILE")]
    log: Option<PathBuf>,
    /// Also write an SVG loss chart next to the log.
    #[arg(long)]
    plot: bool,
}

#[derive(Debug, Args)]
struct TrainTeacherArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Hidden layer widths.
    #[arg(long, value_delimiter = ',', default_value = "64,64")]
    hidden: Vec<usize>,
    #[command(flatten)]
    train: TrainArgs,
    #[command(flatten)]
    log: LogArgs,
    #[arg(long, value_name = "CKPT")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    /// Heads start at Σ^½Vᵀ so uniform gating reproduces W_r.
    Convex,
    /// Heads start at (1/H)·Σ^½Vᵀ so uniform gating gives W_r/H.
    Paper,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GateArg {
    Code,
    Input,
}

#[derive(Debug, Args)]
struct InheritArgs {
    #[arg(long, value_name = "CKPT")]
    teacher: PathBuf,
    /// Rank for every layer, or one rank per inheritable layer (comma separated).
    #[arg(long, value_delimiter = ',', required_unless_present = "energy", conflicts_with = "energy")]
    rank: Vec<usize>,
    /// Pick each layer's rank so the discarded spectral energy fraction is at most this.
    #[arg(long)]
    energy: Option<f64>,
    #[arg(long, default_value_t = 3)]
    heads: usize,
    #[arg(long, value_enum, default_value = "convex")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "code")]
    gate: GateArg,
    /// standard, no-svd, no-gate, symmetric or inverse.
    #[arg(long, default_value = "standard")]
    variant: Variant,
    /// Seed for random initializations (no-svd weights, --gate-init-std).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Standard deviation of random gate weights; 0 keeps gating exactly uniform.
    #[arg(long, default_value_t = 0.0)]
    gate_init_std: f64,
    /// Also write the full theory report as JSON.
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
    #[arg(long, value_name = "CKPT")]
    out: PathBuf,
}

impl InheritArgs {
    fn options(&self) -> InheritOptions {
        let rank = match (self.energy, self.rank.as_slice()) {
            (Some(eps), _) => RankPolicy::Energy(eps),
            (None, [r]) => RankPolicy::Fixed(*r),
            (None, rs) => RankPolicy::PerLayer(rs.to_vec()),
        };
        InheritOptions {
            rank,
            heads: self.heads,
            combiner: self.mode.combiner(),
            gate_input: self.gate.input(),
            variant: self.variant,
            seed: self.seed,
            gate_init_std: self.gate_init_std,
        }
    }
}

impl ModeArg {
    fn combiner(self) -> Combiner {
        match self {
            ModeArg::Convex => Combiner::ConvexExact,
            ModeArg::Paper => Combiner::PaperLiteral,
        }
    }
}

impl GateArg {
    fn input(self) -> GateInput {
        match self {
            GateArg::Code => GateInput::Code,
            GateArg::Input => GateInput::Input,
        }
    }
}

#[derive(Debug, Args)]
struct TrainCmdArgs {
    #[arg(long, value_name = "CKPT")]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    train: TrainArgs,
    #[command(flatten)]
    log: LogArgs,
    #[arg(long, value_name = "CKPT")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DistillArgs {
    #[arg(long, value_name = "CKPT")]
    teacher: PathBuf,
    #[arg(long, value_name = "CKPT")]
    student: PathBuf,
    #[arg(long, default_value_t = 9.0)]
    lambda_kd: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda_ce: f64,
    /// Softmax temperature τ.
    #[arg(long, default_value_t = 2.0)]
    tau: f64,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    train: TrainArgs,
    #[command(flatten)]
    log: LogArgs,
    #[arg(long, value_name = "CKPT")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long, value_name = "CKPT")]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Write the metrics as JSON.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(long, value_name = "CKPT")]
    teacher: PathBuf,
    #[arg(long, value_name = "CKPT")]
    model: PathBuf,
    /// Per-layer influence weights α (default uniform).
    #[arg(long, value_delimiter = ',')]
    alpha: Vec<f64>,
    /// Compare outputs on the eval split of this data (default: the model's recorded task).
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// svd, gradients, theory or all.
    #[arg(long, default_value = "all")]
    suite: Suite,
    /// Also check that this checkpoint loads.
    #[arg(long, value_name = "CKPT")]
    checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InsightArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    which: u8,
    /// Number of seeds; runs use seeds 1..=k.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    plot: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = inhernet::parallel::init_thread_pool(cli.threads) {
        eprintln!("using {n} worker threads");
    }
    let result = match cli.command {
        Command::TrainTeacher(a) => commands::train_teacher(a),
        Command::Inherit(a) => commands::inherit(a),
        Command::Train(a) => commands::train(a),
        Command::Distill(a) => commands::distill(a),
        Command::Eval(a) => commands::eval(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::Verify(a) => commands::verify(a),
        Command::Insight(a) => commands::insight(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
