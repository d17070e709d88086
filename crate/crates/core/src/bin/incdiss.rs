use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use incdiss::cli::{self, Options};

#[derive(Parser)]
#[command(name = "incdiss", version, about = "Incremental dissipativity certificates and dissipation ledgers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Output directory (overrides the config's output.dir).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// LMI residual tolerance (analyze, verify) or ledger tolerance factor (simulate).
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    /// Log-spaced kappa grid for the peak gain: lo,hi,n.
    #[arg(long, global = true)]
    kappa_grid: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a certificate for the configured notion.
    Analyze { config: PathBuf },
    /// Simulate the configured scenario and check the dissipation ledgers.
    Simulate { config: PathBuf },
    /// Re-check a saved certificate against a config.
    Verify { certificate: PathBuf, config: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { cli::EXIT_ERROR as u8 } else { 0 });
        }
    };
    let kappa_grid = match cli.common.kappa_grid.as_deref().map(cli::parse_kappa_grid).transpose() {
        Ok(g) => g,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(cli::EXIT_ERROR as u8);
        }
    };
    let opts = Options {
        out_dir: cli.common.out_dir,
        tolerance: cli.common.tolerance,
        kappa_grid,
    };
    if let Some(t) = opts.tolerance {
        if !(t.is_finite() && t >= 0.0) {
            eprintln!("error: --tolerance must be finite and non-negative");
            return ExitCode::from(cli::EXIT_ERROR as u8);
        }
    }
    let code = match &cli.command {
        Command::Analyze { config } => cli::cmd_analyze(config, &opts),
        Command::Simulate { config } => cli::cmd_simulate(config, &opts),
        Command::Verify { certificate, config } => cli::cmd_verify(certificate, config, &opts),
    };
    ExitCode::from(code as u8)
}
