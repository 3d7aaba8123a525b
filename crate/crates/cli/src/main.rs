//! Command-line front end for the satcalc pipeline.
//!
//! One executable, seven verbs: index and ecovar map computation, scene
//! synthesis, dataset construction, training (with an optional decoder-depth
//! sweep), evaluation, prediction, and a finite-difference gradient check.
//!
//! Exit status is 0 on success, 1 on a user error (bad flags, bad files),
//! and 2 on an internal invariant breach. Outputs are written via temporary
//! siblings and renamed, so an interrupted run never leaves a partial file
//! under its final name.

mod commands;
mod util;

use clap::{Parser, Subcommand};

use commands::{dataset, ecovars, eval, gradcheck, indices, predict, train};
use util::{Ctx, Fail};

#[derive(Parser, Debug)]
#[command(
    name = "satcalc",
    version,
    about = "Spectral indices, ecological variables, and multi-task inversion"
)]
struct Cli {
    /// Worker threads for per-sample and per-tile work. Defaults to
    /// $SATCALC_THREADS, then 1. Outputs never depend on the value.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Seed for everything random in the invoked command.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Progress notes on stderr.
    #[arg(long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Spectral index maps from a four-band stack.
    #[command(subcommand)]
    Indices(indices::IndicesCmd),
    /// Biomass and carbon-stock maps from a canopy-height raster.
    Ecovars(ecovars::EcovarsArgs),
    /// Synthesize scenes, or build a training set from one.
    #[command(subcommand)]
    Dataset(dataset::DatasetCmd),
    /// Fit the trainable parameters on a built dataset.
    Train(train::TrainArgs),
    /// Metric report for a checkpoint on a dataset split.
    Eval(eval::EvalArgs),
    /// Per-task prediction maps for a band stack, tiling large rasters.
    Predict(predict::PredictArgs),
    /// Compare analytic gradients against central finite differences.
    Gradcheck(gradcheck::GradcheckArgs),
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successful outcomes; everything else is
            // a user error, reported before any work starts.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };

    let outcome = (|| {
        let threads = resolve_threads(cli.threads)?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Fail::internal(format!("thread pool: {e}")))?;

        let ctx = Ctx { seed: cli.seed, verbose: cli.verbose };
        match &cli.cmd {
            Cmd::Indices(c) => indices::run(&ctx, c),
            Cmd::Ecovars(a) => ecovars::run(&ctx, a),
            Cmd::Dataset(c) => dataset::run(&ctx, c),
            Cmd::Train(a) => train::run(&ctx, a),
            Cmd::Eval(a) => eval::run(&ctx, a),
            Cmd::Predict(a) => predict::run(&ctx, a),
            Cmd::Gradcheck(a) => gradcheck::run(&ctx, a),
        }
    })();
    match outcome {
        Ok(()) => 0,
        Err(Fail::User(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Fail::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            2
        }
    }
}

/// Thread count from the flag, then $SATCALC_THREADS, then 1.
fn resolve_threads(flag: Option<usize>) -> Result<usize, Fail> {
    let n = match flag {
        Some(n) => n,
        None => match std::env::var("SATCALC_THREADS") {
            Ok(s) => s.parse::<usize>().map_err(|_| {
                Fail::user(format!("SATCALC_THREADS must be a positive integer, got '{s}'"))
            })?,
            Err(_) => 1,
        },
    };
    if n == 0 {
        return Err(Fail::user("thread count must be at least 1"));
    }
    Ok(n)
}
