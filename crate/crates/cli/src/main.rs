use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rankaxis_core::embstore::SplitPart;
use rankaxis_core::experiments::ReportFormat;

mod commands;
mod output;

#[derive(Parser)]
#[command(name = "rankaxis", version, about = "Rank axes in embedding spaces")]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct GlobalOpts {
    /// Base seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,
    /// error, warn, info, debug or trace; overrides RANKAXIS_LOG.
    #[arg(long, global = true)]
    pub log_level: Option<String>,
    /// Human-readable tables instead of JSON on stdout.
    #[arg(long, global = true)]
    pub pretty: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a dataset manifest and print its summary.
    Ingest {
        manifest: PathBuf,
    },
    /// Fit an axis (or, for mlp, a nonlinear model) and write it as JSON.
    Fit(FitArgs),
    /// Test (or train/val) SRCC of an axis on a dataset.
    Eval {
        manifest: PathBuf,
        axis: PathBuf,
        #[arg(long, default_value = "test", value_parser = parse_split)]
        split: SplitPart,
    },
    /// Few-shot curve: ridge or SGD fits on random train subsets.
    Fewshot(FewshotArgs),
    /// Extreme-shot curve: extreme-pair axes from k exemplars per tail.
    Extremeshot(ExtremeshotArgs),
    /// Cross-dataset SRCC matrix and axis cosine matrix.
    Transfer(TransferArgs),
    /// No-train, linear and nonlinear reference SRCCs.
    Baselines(BaselinesArgs),
    /// Items at the given percentiles of an axis, as JSON lines.
    Percentiles {
        manifest: PathBuf,
        axis: PathBuf,
        /// Comma-separated percentiles in [0, 100].
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0])]
        r: Vec<f64>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value = "rankaxis-state")]
        state_dir: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
    },
    /// Write a synthetic dataset with a planted rank axis.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq, Debug)]
pub enum FitMethod {
    Ridge,
    Sgd,
    Mlp,
    Extremes,
    ZeroshotSingle,
    ZeroshotDiff,
}

#[derive(Args)]
pub struct FitArgs {
    pub manifest: PathBuf,
    #[arg(long, value_enum)]
    pub method: FitMethod,
    /// Output file.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Ridge penalty.
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
    /// Z-score features before a ridge fit.
    #[arg(long)]
    pub standardize: bool,
    #[command(flatten)]
    pub search: SearchOpts,
    /// Low exemplar ids for extremes.
    #[arg(long, value_delimiter = ',')]
    pub low: Vec<String>,
    /// High exemplar ids for extremes.
    #[arg(long, value_delimiter = ',')]
    pub high: Vec<String>,
    /// Take the extremes from the bottom/top quantile of train labels.
    #[arg(long)]
    pub tail_quantile: Option<f64>,
    /// Prompt embeddings (.npy), row-aligned with --prompts.
    #[arg(long)]
    pub prompt_embeddings: Option<PathBuf>,
    /// Prompt texts, one per line.
    #[arg(long)]
    pub prompts: Option<PathBuf>,
    /// Single prompt to use; without it every prompt is scored on val.
    #[arg(long)]
    pub prompt: Option<String>,
    #[arg(long)]
    pub prompt_high: Option<String>,
    #[arg(long)]
    pub prompt_low: Option<String>,
}

#[derive(Args, Clone)]
pub struct SearchOpts {
    #[arg(long, default_value_t = 30)]
    pub n_trials: usize,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 512)]
    pub hidden_width: usize,
}

#[derive(Args)]
pub struct ReportOut {
    /// Report file; JSON goes to stdout when absent.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// csv, md or json. Defaults from the extension of --out.
    #[arg(long, value_parser = parse_format)]
    pub format: Option<ReportFormat>,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq, Debug)]
pub enum CurveSolver {
    Ridge,
    Sgd,
}

#[derive(Args)]
pub struct FewshotArgs {
    pub manifest: PathBuf,
    /// Train subset sizes; default 16, 32, 64, ... and the full train split.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = rankaxis_core::experiments::DEFAULT_REPEATS)]
    pub repeats: usize,
    #[arg(long, value_enum, default_value = "ridge")]
    pub solver: CurveSolver,
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
    #[command(flatten)]
    pub search: SearchOpts,
    #[command(flatten)]
    pub report: ReportOut,
}

#[derive(Args)]
pub struct ExtremeshotArgs {
    pub manifest: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 4, 8, 16])]
    pub k: Vec<usize>,
    #[arg(long, default_value_t = rankaxis_core::experiments::DEFAULT_TAIL_QUANTILE)]
    pub tail_quantile: f64,
    #[arg(long, default_value_t = rankaxis_core::experiments::DEFAULT_REPEATS)]
    pub repeats: usize,
    #[command(flatten)]
    pub report: ReportOut,
}

#[derive(Args)]
pub struct TransferArgs {
    /// Dataset manifests, one per row/column of the matrices.
    #[arg(long = "manifest", required = true)]
    pub manifests: Vec<PathBuf>,
    /// Axis files matching --manifest; fitted by ridge on train when absent.
    #[arg(long = "axis")]
    pub axes: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
    #[command(flatten)]
    pub report: ReportOut,
}

#[derive(Args)]
pub struct BaselinesArgs {
    #[arg(long = "manifest", required = true)]
    pub manifests: Vec<PathBuf>,
    /// Embeddings of an untrained encoder, matching each --manifest.
    /// Gaussian noise of the same shape is used when absent.
    #[arg(long = "notrain-manifest")]
    pub notrain: Vec<PathBuf>,
    #[command(flatten)]
    pub search: SearchOpts,
    #[command(flatten)]
    pub report: ReportOut,
}

#[derive(Args)]
pub struct SynthArgs {
    /// Directory for manifest.json and its data files.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    /// Relative off-axis noise bound.
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    /// Isotropic noise standard deviation.
    #[arg(long, default_value_t = 0.0)]
    pub background: f64,
    #[arg(long, default_value = "synthetic")]
    pub name: String,
}

fn parse_split(s: &str) -> Result<SplitPart, String> {
    s.parse().map_err(|e: rankaxis_core::Error| e.to_string())
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse().map_err(|e: rankaxis_core::Error| e.to_string())
}

fn init_logging(level: Option<&str>) {
    let env = env_logger::Env::new().filter_or("RANKAXIS_LOG", "warn");
    let mut builder = env_logger::Builder::from_env(env);
    if let Some(level) = level {
        builder.parse_filters(level);
    }
    builder.format_timestamp(None).init();
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.into())
            .build_global()
            .context("configuring the worker pool")?;
    }
    let g = &cli.global;
    match cli.command {
        Command::Ingest { manifest } => commands::ingest(g, &manifest),
        Command::Fit(args) => commands::fit(g, &args),
        Command::Eval { manifest, axis, split } => commands::eval(g, &manifest, &axis, split),
        Command::Fewshot(args) => commands::fewshot(g, &args),
        Command::Extremeshot(args) => commands::extremeshot(g, &args),
        Command::Transfer(args) => commands::transfer(g, &args),
        Command::Baselines(args) => commands::baselines(g, &args),
        Command::Percentiles { manifest, axis, r } => commands::percentiles(g, &manifest, &axis, &r),
        Command::Serve { state_dir, bind } => serve(&state_dir, bind, cli.global.threads),
        Command::Synth(args) => commands::synth(g, &args),
    }
}

fn serve(state_dir: &Path, bind: SocketAddr, threads: Option<u16>) -> Result<()> {
    let mut rt = tokio::runtime::Builder::new_multi_thread();
    if let Some(n) = threads {
        rt.worker_threads(n.into());
    }
    let rt = rt.enable_all().build().context("starting the async runtime")?;
    rt.block_on(rankaxis_service::serve(state_dir, bind))
        .with_context(|| format!("serving on {bind}"))
}

/// 2 for input the user can fix, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    let validation = err
        .chain()
        .find_map(|e| e.downcast_ref::<rankaxis_core::Error>())
        .is_some_and(|e| e.is_validation());
    if validation {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.global.log_level.as_deref());
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = exit_code(&err);
            let core_code = err
                .chain()
                .find_map(|e| e.downcast_ref::<rankaxis_core::Error>())
                .map(|e| format!("{}: ", e.code()))
                .unwrap_or_default();
            let msg = format!("{err:#}").replace('\n', " ");
            eprintln!("rankaxis: {core_code}{msg}");
            ExitCode::from(code)
        }
    }
}
