use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fermiborn::cli::commands::{self, DatasetKind, EvalArgs, ExportArgs, GenerateArgs, OracleCheckArgs, TrainArgs};
use fermiborn::cli::{exit_code, EXIT_USAGE};
use fermiborn::compiler::ExportFormat;

#[derive(Parser)]
#[command(name = "fermiborn", version, about = "Classical training of fermionic Born machines")]
struct Cli {
    /// Worker threads for string evaluation (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset file.
    Generate {
        /// grid-mn or game-of-life.
        kind: String,
        /// Grid size as ROWSxCOLS.
        #[arg(long, default_value = "3x4")]
        dims: String,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        /// Game-of-Life evolution steps.
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model from a JSON run configuration.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the configuration).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Continue from a checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Test-set MMD² over a bandwidth sweep plus covariance matrices.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated bandwidths.
        #[arg(long, value_delimiter = ',', default_value = "0.5,1,2,5,10")]
        sigmas: Vec<f64>,
        #[arg(long, default_value_t = 2)]
        ell_max: usize,
        #[arg(long, default_value_t = 1000)]
        n_ops: usize,
        /// Enumerate all strings instead of sampling.
        #[arg(long)]
        exact: bool,
        /// Also report the training objective of this configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for CSV outputs.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export the sampling circuit.
    Export {
        #[arg(long)]
        model: PathBuf,
        /// native or qasm.
        #[arg(long, default_value = "native")]
        format: String,
        /// Merge all layers into a single one first.
        #[arg(long)]
        compile: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare engine expectations with a statevector simulation.
    OracleCheck {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 4)]
        max_len: usize,
    },
}

fn run(cli: Cli) -> fermiborn::Result<()> {
    let mut log = std::io::stdout();
    match cli.command {
        Command::Generate {
            kind,
            dims,
            count,
            steps,
            seed,
            out,
        } => {
            let kind: DatasetKind = kind.parse()?;
            commands::generate(
                &GenerateArgs {
                    kind,
                    dims,
                    count,
                    steps,
                    seed,
                    out,
                },
                &mut log,
            )?;
        }
        Command::Train {
            config,
            out,
            seed,
            resume,
        } => {
            commands::train(
                &TrainArgs {
                    config,
                    out,
                    seed,
                    resume,
                },
                &mut log,
            )?;
        }
        Command::Eval {
            model,
            data,
            sigmas,
            ell_max,
            n_ops,
            exact,
            config,
            seed,
            out,
        } => {
            commands::eval(
                &EvalArgs {
                    model,
                    data,
                    sigmas,
                    ell_max,
                    n_ops,
                    seed,
                    exact,
                    config,
                    out,
                },
                &mut log,
            )?;
        }
        Command::Export {
            model,
            format,
            compile,
            out,
        } => {
            let format: ExportFormat = format.parse()?;
            commands::export_cmd(
                &ExportArgs {
                    model,
                    format,
                    out,
                    compile,
                },
                &mut log,
            )?;
        }
        Command::OracleCheck { model, max_len } => {
            commands::oracle_check(&OracleCheckArgs { model, max_len }, &mut log)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    if let Some(w) = cli.workers {
        if w == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(EXIT_USAGE as u8);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE as u8);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
