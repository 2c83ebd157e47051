use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use transporter_cli::commands::{
    self, load_config, resolve_seed, Command, CornersConfig, EncodeConfig, EvalConfig, RingDemoConfig,
    TrainCommandConfig,
};
use transporter_cli::{classify, ConfigError};
use transporter_core::dataset::{DatasetSpec, EncoderPath};
use transporter_core::ring::Stopper;

#[derive(Parser)]
#[command(name = "transporter", version, about = "Photon transport, ring encoding and SNN lifetime estimation")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// JSON configuration file for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides TRANSPORTER_SEED and the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory that receives all outputs and the run manifest.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads (defaults to the available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate train, validation and test splits.
    GenDataset {
        #[arg(long, value_enum)]
        encoder: Option<EncoderArg>,
    },
    /// Feed a periodic source into the ring and trace every tick.
    RingDemo {
        #[arg(long)]
        stopper: Option<Stopper>,
        /// Ring clock frequency in Hz.
        #[arg(long)]
        freq: Option<f64>,
        #[arg(long)]
        source_period: Option<f64>,
    },
    /// Simulate one acquisition and write its spike train.
    Encode {
        #[arg(long)]
        stopper: Option<Stopper>,
        #[arg(long)]
        freq: Option<f64>,
        #[arg(long, value_enum)]
        encoder: Option<EncoderArg>,
        /// Shorthand for `--encoder oracle`.
        #[arg(long, conflicts_with = "encoder")]
        oracle: bool,
    },
    /// Train the lifetime estimator.
    Train {
        #[arg(long)]
        dataset_dir: Option<PathBuf>,
    },
    /// Evaluate a model on a dataset file.
    Eval {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Tabulate clock-frequency corners.
    Corners {
        /// Corner frequency in Hz; repeat for several.
        #[arg(long)]
        freq: Vec<f64>,
    },
    /// Rerun a manifest and compare output hashes.
    Replay {
        manifest: PathBuf,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum EncoderArg {
    Ring,
    Oracle,
}

impl From<EncoderArg> for EncoderPath {
    fn from(e: EncoderArg) -> Self {
        match e {
            EncoderArg::Ring => EncoderPath::Ring,
            EncoderArg::Oracle => EncoderPath::Oracle,
        }
    }
}

fn absolute(p: PathBuf) -> Result<PathBuf> {
    if p.is_absolute() {
        Ok(p)
    } else {
        Ok(std::env::current_dir()?.join(p))
    }
}

fn build(common: &Common, cmd: Cmd) -> Result<Command> {
    let cfg_path = common.config.as_deref();
    Ok(match cmd {
        Cmd::GenDataset { encoder } => {
            let mut spec: DatasetSpec = load_config(cfg_path)?;
            spec.seed = resolve_seed(common.seed, spec.seed)?;
            if let Some(e) = encoder {
                spec.encoder_path = e.into();
            }
            Command::GenDataset(spec)
        }
        Cmd::RingDemo { stopper, freq, source_period } => {
            let mut c: RingDemoConfig = load_config(cfg_path)?;
            c.stopper = stopper.unwrap_or(c.stopper);
            c.ring_clock_hz = freq.unwrap_or(c.ring_clock_hz);
            c.source_period_ns = source_period.unwrap_or(c.source_period_ns);
            Command::RingDemo(c)
        }
        Cmd::Encode { stopper, freq, encoder, oracle } => {
            let mut c: EncodeConfig = load_config(cfg_path)?;
            c.seed = resolve_seed(common.seed, c.seed)?;
            c.stopper = stopper.unwrap_or(c.stopper);
            if freq.is_some() {
                c.ring_clock_hz = freq;
            }
            if oracle {
                c.encoder = EncoderPath::Oracle;
            } else if let Some(e) = encoder {
                c.encoder = e.into();
            }
            Command::Encode(c)
        }
        Cmd::Train { dataset_dir } => {
            let mut c: TrainCommandConfig = load_config(cfg_path)?;
            c.train.seed = resolve_seed(common.seed, c.train.seed)?;
            c.dataset_dir = absolute(dataset_dir.unwrap_or(c.dataset_dir))?;
            Command::Train(c)
        }
        Cmd::Eval { model, dataset } => {
            let mut c: EvalConfig = load_config(cfg_path)?;
            c.model_path = absolute(model.unwrap_or(c.model_path))?;
            c.dataset_path = absolute(dataset.unwrap_or(c.dataset_path))?;
            Command::Eval(c)
        }
        Cmd::Corners { freq } => {
            let mut c: CornersConfig = load_config(cfg_path)?;
            if !freq.is_empty() {
                c.frequencies_hz = freq;
            }
            c.model_path = c.model_path.map(absolute).transpose()?;
            c.dataset_path = c.dataset_path.map(absolute).transpose()?;
            Command::Corners(c)
        }
        Cmd::Replay { .. } => unreachable!("replay is handled before build"),
    })
}

fn threads(common: &Common) -> Result<usize> {
    match common.threads {
        Some(0) => Err(ConfigError("--threads must be at least 1".into()).into()),
        Some(n) => Ok(n),
        None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn run(cli: Cli) -> Result<()> {
    let out_dir: &Path = &cli.common.out_dir;
    if let Cmd::Replay { manifest } = &cli.command {
        let report = commands::replay(manifest, out_dir, cli.common.threads)?;
        if report.mismatched.is_empty() {
            println!("replay: all {} artifacts match", report.checked);
            return Ok(());
        }
        anyhow::bail!("replay: artifacts differ: {}", report.mismatched.join(", "));
    }
    let n_threads = threads(&cli.common)?;
    let cmd = build(&cli.common, cli.command)?;
    let (outcome, _) = commands::execute(&cmd, out_dir, n_threads)?;
    print!("{}", outcome.summary);
    println!("outputs written to {}", out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(classify(&e) as u8)
        }
    }
}
