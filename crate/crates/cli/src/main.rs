use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "fbchan", about = "Capacity solves and coding experiments from JSON configs")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute a single experiment config.
    Run { config: PathBuf },
    /// Execute a config with a parameter grid into one CSV.
    Sweep { config: PathBuf },
    /// Reshape a sweep CSV into a gnuplot-ready data file.
    Plotdata { csv: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Run { config } => fbchan_cli::run(&config),
        Cmd::Sweep { config } => fbchan_cli::sweep(&config),
        Cmd::Plotdata { csv } => fbchan_cli::plotdata(&csv).map(|p| vec![p]),
    };
    match result {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            let obj = serde_json::json!({ "error": err });
            eprintln!("{obj}");
            ExitCode::FAILURE
        }
    }
}
