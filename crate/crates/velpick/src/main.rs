use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use velpick::cli::{self, RunConfig};

#[derive(Parser)]
#[command(name = "velpick", about = "Automatic stacking-velocity picking from semblance spectra")]
struct Args {
    /// Flat key=value config file; command line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Picking method: uel, kmeans, or dbscan.
    #[arg(long, global = true)]
    method: Option<String>,
    /// Worker threads.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Signal-to-noise ratio: a number, a fraction like 2/3, or inf.
    #[arg(long, global = true)]
    snr: Option<String>,
    /// Base RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Dataset directory (input for pick/eval/qc).
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic ground-truthed dataset.
    Synth,
    /// Pick velocity functions for every location of a dataset.
    Pick,
    /// Compare picks with ground truth and write metric reports.
    Eval,
    /// Render NMO-corrected gathers and stack sections as images.
    Qc,
}

fn run(args: Args) -> Result<(), cli::CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)?;
        cfg.apply_file(&text)?;
    }
    if let Some(m) = args.method {
        cfg.set("method", &m)?;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    if let Some(s) = args.snr {
        cfg.set("snr", &s)?;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(o) = args.out {
        cfg.out = o;
    }
    if let Some(d) = args.dataset {
        cfg.dataset = d;
    }
    match args.command {
        Command::Synth => cli::cmd_synth(&cfg),
        Command::Pick => cli::cmd_pick(&cfg),
        Command::Eval => cli::cmd_eval(&cfg),
        Command::Qc => cli::cmd_qc(&cfg),
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("velpick: {e}");
            ExitCode::FAILURE
        }
    }
}
