//! Batch front end of the otlab toolkit.

pub mod commands;
pub mod config;
pub mod error;
pub mod plot;

use std::ffi::OsString;
use std::time::Instant;

use clap::{Parser, Subcommand};

pub use error::{CliError, EXIT_SOLVER, EXIT_VALIDATION};

#[derive(Parser, Debug)]
#[command(name = "otlab", version, about = "Numerical checks for quadratic-cost optimal transport")]
pub struct Cli {
    /// Worker threads for the parallel parts of the library (default: logical cores)
    #[arg(long, global = true, env = "OTLAB_THREADS")]
    pub threads: Option<usize>,
    /// Seed for randomized families and suites
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Record wall-clock timings in JSON output (makes output non-reproducible)
    #[arg(long, global = true)]
    pub wall_clock: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Transport distance between two densities
    D2(commands::D2Opts),
    /// Sample a density path at given times
    Path(commands::PathOpts),
    /// Solve the linearized response problem along a path
    Response(commands::ResponseOpts),
    /// Compare the second-variation formula with finite differences
    SecondVariation(commands::SecondVariationOpts),
    /// Stability ratio sweep over a density family
    Stability(commands::StabilityOpts),
    /// Ratio table of the degenerate counterexample family
    Sharpness(commands::SharpnessOpts),
    /// Structural identity and variance-bound suites
    Identities(commands::IdentitiesOpts),
}

/// Settings shared by every subcommand.
#[derive(Clone, Copy, Debug)]
pub struct Globals {
    pub seed: Option<u64>,
    pub wall_clock: bool,
    pub started: Instant,
}

fn init_threads(threads: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::invalid("threads", "thread count must be at least 1"));
        }
        // a pool configured by an earlier call in the same process stays in place
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Parse `argv` (including the program name), run the subcommand and return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { 0 };
        }
    };
    let globals = Globals { seed: cli.seed, wall_clock: cli.wall_clock, started: Instant::now() };
    let result = init_threads(cli.threads).and_then(|_| match cli.command {
        Command::D2(o) => commands::d2(o, globals),
        Command::Path(o) => commands::path(o, globals),
        Command::Response(o) => commands::response(o, globals),
        Command::SecondVariation(o) => commands::second_variation(o, globals),
        Command::Stability(o) => commands::stability(o, globals),
        Command::Sharpness(o) => commands::sharpness(o, globals),
        Command::Identities(o) => commands::identities(o, globals),
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
