//! `magdiv`: magnitude, weightings, and diversity-maximizing measures of
//! finite metric spaces and weighted trees.
//!
//! Every subcommand prints a single JSON report to stdout and exits 0;
//! failures print a JSON error object to stderr and exit nonzero. Output is
//! deterministic for fixed inputs and flags.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod report;

use commands::CliError;

#[derive(Parser)]
#[command(
    name = "magdiv",
    version,
    about = "Magnitude and maximum diversity of finite metric spaces and weighted trees"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Kind {
    /// A weighted tree file (`# magdiv-tree v1`).
    Tree,
    /// A distance-matrix CSV (`label,<l1>,...` header).
    Matrix,
}

/// Input selection shared by the commands that accept either kind of space.
#[derive(Args)]
struct SpaceArgs {
    /// Input file.
    input: PathBuf,

    /// Input format.
    #[arg(long, value_enum, default_value_t = Kind::Tree)]
    kind: Kind,

    /// Skip the O(n³) triangle-inequality validation of matrix inputs.
    #[arg(long)]
    skip_triangle_check: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Magnitude and per-vertex weights of a weighted tree.
    Magnitude {
        /// Tree file.
        input: PathBuf,
    },

    /// Diversity-maximizing measure via the peeling algorithm.
    Diversity {
        #[command(flatten)]
        space: SpaceArgs,

        /// Multiply all distances by this factor before computing.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
    },

    /// Exhaustive subset oracle for maximum diversity (at most 20 points).
    Oracle {
        #[command(flatten)]
        space: SpaceArgs,
    },

    /// Diversity profile t ↦ |(X, td)|₊ over a grid of scales.
    Profile {
        #[command(flatten)]
        space: SpaceArgs,

        /// Smallest scale (must be positive).
        #[arg(long)]
        tmin: f64,

        /// Largest scale.
        #[arg(long)]
        tmax: f64,

        /// Number of grid points (at least 2).
        #[arg(long)]
        steps: usize,

        /// Space the grid logarithmically instead of linearly.
        #[arg(long)]
        log: bool,

        /// Also write the profile table to this CSV file.
        #[arg(long)]
        csv: Option<PathBuf>,
    },

    /// Magnitude of edge subdivisions against the continuum value 1 + L/2.
    Converge {
        /// Tree file.
        input: PathBuf,

        /// Comma-separated subdivision factors, strictly increasing.
        #[arg(long, value_delimiter = ',', required = true)]
        k: Vec<usize>,

        /// Also write the convergence table to this CSV file.
        #[arg(long)]
        csv: Option<PathBuf>,
    },

    /// Generate a random weighted tree file.
    Gen {
        /// Number of vertices.
        n: usize,

        /// Edge length law: `fixed:<c>` or `uniform:<lo>,<hi>`.
        #[arg(long)]
        law: String,

        /// RNG seed; identical seeds reproduce identical files.
        #[arg(long, default_value_t = 0)]
        seed: u64,

        /// Output tree file.
        #[arg(long)]
        out: PathBuf,
    },

    /// Verify the optimality certificate of a user-supplied measure.
    Check {
        #[command(flatten)]
        space: SpaceArgs,

        /// Multiply all distances by this factor before checking.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,

        /// JSON file mapping point labels to masses.
        #[arg(long)]
        measure: PathBuf,
    },
}

fn run(command: Command) -> Result<String, CliError> {
    match command {
        Command::Magnitude { input } => commands::magnitude(&input),
        Command::Diversity { space, scale } => commands::diversity(&space, scale),
        Command::Oracle { space } => commands::oracle(&space),
        Command::Profile {
            space,
            tmin,
            tmax,
            steps,
            log,
            csv,
        } => commands::profile(&space, tmin, tmax, steps, log, csv.as_deref()),
        Command::Converge { input, k, csv } => commands::converge(&input, &k, csv.as_deref()),
        Command::Gen { n, law, seed, out } => commands::gen(n, &law, seed, &out),
        Command::Check {
            space,
            scale,
            measure,
        } => commands::check(&space, scale, &measure),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) if err.use_stderr() => {
            let usage = CliError::Usage(err.render().to_string());
            eprintln!("{}", usage.to_json());
            return ExitCode::from(2);
        }
        Err(err) => {
            // --help and --version render to stdout and exit 0.
            print!("{}", err.render());
            return ExitCode::SUCCESS;
        }
    };
    match run(cli.command) {
        Ok(json) => {
            println!("{json}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{}", err.to_json());
            ExitCode::FAILURE
        }
    }
}
