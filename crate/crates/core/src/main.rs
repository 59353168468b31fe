use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use rotnum::cli::{self, CliError, OutputFormat, ScanOptions, EXIT_USAGE};

#[derive(Parser)]
#[command(
    name = "rotnum",
    version,
    about = "Rotation numbers of Schrödinger operators with almost periodic backgrounds and delta interactions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan an energy grid and write one row of rotation-number data per energy.
    Scan {
        /// JSON run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Output file (defaults to the config's output path, else stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Output format (defaults to the config's, else csv).
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
        /// Worker threads (default: ROTNUM_JOBS, else the processor count).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Report epsilon-almost periods, density and mean values.
    Apdiag {
        #[arg(long)]
        config: PathBuf,
        /// Entourage radius for the almost-period test.
        #[arg(long)]
        eps: f64,
        /// Shifts tau in [-range, range] are searched.
        #[arg(long)]
        range: i64,
    },
    /// Compare the estimators against the applicable independent references.
    OracleCompare {
        #[arg(long)]
        config: PathBuf,
        /// Maximum allowed deviation (default 1e-3).
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Check the mean-value decomposition over [0, span).
    DecomposeCheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        span: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        }
    }
}

fn main() -> ExitCode {
    // Behave like a regular pipeline tool when the reader closes early.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }

    let parsed = Cli::try_parse();
    let cli = match parsed {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are not errors; everything else is usage.
            let code = if e.use_stderr() { EXIT_USAGE as u8 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let result = match cli.command {
        Command::Scan {
            config,
            out,
            format,
            jobs,
        } => cli::cmd_scan(
            &config,
            &ScanOptions {
                out,
                format: format.map(Into::into),
                jobs,
            },
        ),
        Command::Apdiag { config, eps, range } => cli::cmd_apdiag(&config, eps, range),
        Command::OracleCompare { config, tol } => cli::cmd_oracle_compare(&config, tol),
        Command::DecomposeCheck { config, span } => cli::cmd_decompose_check(&config, span),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ CliError::Usage(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(e @ CliError::Numeric(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
