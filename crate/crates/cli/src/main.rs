use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

/// Quantum chi-squared goodness-of-fit testing.
#[derive(Parser, Debug)]
#[command(name = "qchi2", version, about)]
struct Cli {
    /// Override the PSD tolerance for states and POVM elements.
    #[arg(long, global = true, value_name = "TOL")]
    tol_psd: Option<f64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Divergence rate of a hypothesis state.
    Xi {
        state: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measurement design attaining the divergence rate.
    OptimalPovm {
        state: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample a click record from a plan file.
    Simulate {
        plan: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the goodness-of-fit test on a record.
    Test {
        record: PathBuf,
        state: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long)]
        two_sided: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Brute-force checks of the closed forms on random inputs.
    Verify(VerifyArgs),
    /// Closed-form divergence-rate table and a qubit power curve.
    PaperExamples {
        /// Directory for `xi_examples.csv` and `power_curve.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 2000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Check a state, POVM, design, plan or record file.
    Validate { file: PathBuf },
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long)]
    lemma1: bool,
    #[arg(long)]
    xi: bool,
    #[arg(long)]
    split: bool,
    #[arg(long)]
    all: bool,
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
