mod circuit_cmd;
mod dist_cmd;
mod manifest;
mod report_cmd;
mod train_cmd;
mod verify_cmd;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use manifest::ConfigDoc;

/// File formats accepted by the commands, printed on usage errors.
const SCHEMA: &str = "\
Input formats:
  circuit file   {\"depth\": d, \"gates\": [[layer 1], ..., [layer d]]}; layer i lists
                 2^(i-1) gates, each a 4-character table over +/- for the input
                 patterns (-,-), (-,+), (+,-), (+,+). Layer d reads the inputs.
  spec file      {\"kind\": \"product\", \"p\": [P(x_j = +1), ...]} (labeled by --circuit)
                 or {\"kind\": \"generative\", \"circuit\": <circuit>}
  dataset CSV    one row per sample: x_1, ..., x_n, y with entries 1 or -1, no header
  bit vector     comma or space separated 1/-1 values
  config file    JSON object keyed by section (circuit_gen, dist_sample, layerwise,
                 baseline, lemmas, rankbound) plus an optional top-level seed;
                 a manifest.json from an earlier run is accepted as well";

#[derive(Parser, Debug)]
#[command(name = "circuitlearn", version, about = "Layerwise learning of tree-structured Boolean circuits")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON configuration document or an earlier run manifest.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for artifacts and the run manifest.
    #[arg(long, global = true, default_value = "circuitlearn-out")]
    pub out: PathBuf,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build, evaluate and analyze circuits.
    #[command(subcommand)]
    Circuit(circuit_cmd::CircuitCmd),
    /// Sample, enumerate and certify labeled distributions.
    #[command(subcommand)]
    Dist(dist_cmd::DistCmd),
    /// Layerwise training and the end-to-end baseline.
    #[command(subcommand)]
    Train(train_cmd::TrainCmd),
    /// Executable checks with pass/fail exit status.
    #[command(subcommand)]
    Verify(verify_cmd::VerifyCmd),
    /// Plot-ready CSV from JSON artifacts.
    #[command(subcommand)]
    Report(report_cmd::ReportCmd),
}

/// How a command ended short of success.
pub enum Failure {
    /// Bad arguments or input files: exit 2.
    Usage(anyhow::Error),
    /// A check ran and did not pass: exit 1.
    Verification(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Failure {
        Failure::Usage(e)
    }
}

impl From<circuitlearn::Error> for Failure {
    fn from(e: circuitlearn::Error) -> Failure {
        Failure::Usage(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Failure {
        Failure::Usage(e.into())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Failure {
        Failure::Usage(e.into())
    }
}

pub type CmdResult = Result<(), Failure>;

/// Context shared by all commands.
pub struct Ctx {
    pub global: Global,
    pub config: ConfigDoc,
}

impl Ctx {
    /// `--seed`, else the config file's seed, else 0.
    pub fn seed(&self) -> u64 {
        self.global.seed.or(self.config.seed()).unwrap_or(0)
    }
}

fn run(cli: Cli) -> CmdResult {
    if cli.global.threads == 0 {
        return Err(Failure::Usage(anyhow::anyhow!("--threads must be at least 1")));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.global.threads)
        .build_global()
        .map_err(|e| Failure::Usage(e.into()))?;
    let ctx = Ctx {
        config: ConfigDoc::load(cli.global.config.as_deref())?,
        global: cli.global,
    };
    match cli.command {
        Command::Circuit(c) => circuit_cmd::run(&ctx, c),
        Command::Dist(c) => dist_cmd::run(&ctx, c),
        Command::Train(c) => train_cmd::run(&ctx, c),
        Command::Verify(c) => verify_cmd::run(&ctx, c),
        Command::Report(c) => report_cmd::run(&ctx, c),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}\n\n{SCHEMA}");
            ExitCode::from(2)
        }
    }
}
