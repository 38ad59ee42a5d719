use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use exchange_q::scenario::{self, ScenarioError};

#[derive(Parser)]
#[command(name = "exchange-q", version, about = "Validate and run exchange-q scenario files")]
struct Cli {
    /// Worker threads for particle computations. Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// error, warn, info, debug or trace
    #[arg(long, global = true, default_value = "warn")]
    log_level: log::LevelFilter,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario and print a pass/fail table.
    Validate { file: PathBuf },
    /// Run every query in a scenario and write a JSON report.
    Run {
        file: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn report_error(err: &ScenarioError) -> ExitCode {
    eprintln!("error: {err}");
    if !err.pointer().is_empty() {
        eprintln!("pointer: {}", err.pointer());
    }
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().filter_level(cli.log_level).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match cli.command {
        Command::Validate { file } => {
            let config = match scenario::load_config(&file) {
                Ok(c) => c,
                Err(e) => return report_error(&e),
            };
            let (built, checks) = scenario::build_with_checks(&config);
            print!("{}", scenario::format_checks(&checks));
            match built {
                Some(_) => ExitCode::SUCCESS,
                None => report_error(&scenario::first_failure(&checks)),
            }
        }
        Command::Run { file, output } => {
            let report = match scenario::run_file(&file) {
                Ok(r) => r,
                Err(e) => return report_error(&e),
            };
            let text = serde_json::to_string_pretty(&report).expect("report serializes");
            if let Err(e) = std::fs::write(&output, text + "\n") {
                eprintln!("error: cannot write {}: {e}", output.display());
                return ExitCode::from(1);
            }
            log::info!("wrote {}", output.display());
            ExitCode::SUCCESS
        }
    }
}
