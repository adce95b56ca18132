use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedkan_cli::{cmd_compare, cmd_generate, cmd_train, exit_code, CliError, Overrides};

/// Federated KAN vs MLP traffic-composition forecasting over satellite beams.
///
/// Log verbosity follows the FEDKAN_LOG environment variable (e.g. `info`).
#[derive(Debug, Parser)]
#[command(name = "fedkan", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write seeded synthetic beam CSVs.
    Generate {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 743)]
        hours: usize,
        #[arg(long, default_value_t = 4)]
        beams: usize,
        #[arg(long, default_value = "beams")]
        out: PathBuf,
    },
    /// Train the model kind named in the config and write its report.
    Train(RunArgs),
    /// Train Fed-KAN and Fed-MLP on identical data and compare them.
    Compare(RunArgs),
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Train a round's clients concurrently (results are unchanged).
    #[arg(long)]
    parallel_clients: bool,
    /// Per-round client participation probability in (0, 1].
    #[arg(long)]
    availability: Option<f64>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            out: self.out.clone(),
            parallel_clients: self.parallel_clients,
            availability: self.availability,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate {
            seed,
            hours,
            beams,
            out,
        } => {
            for path in cmd_generate(seed, hours, beams, &out)? {
                println!("{}", path.display());
            }
        }
        Command::Train(args) => {
            let outcome = cmd_train(&args.config, &args.overrides())?;
            println!("report: {}", outcome.report_path.display());
            println!("weights: {}", outcome.weights_path.display());
            println!(
                "{} final average test loss: {:.6}",
                outcome.report.model_config.kind.label(),
                outcome.report.final_avg_test_loss
            );
        }
        Command::Compare(args) => {
            let outcome = cmd_compare(&args.config, &args.overrides())?;
            println!("comparison: {}", outcome.comparison_path.display());
            print!("{}", outcome.summary);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FEDKAN_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}
