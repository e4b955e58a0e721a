use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use jumpflow_cli::{run, RunOptions};

#[derive(Parser)]
#[command(name = "jumpflow", version, about = "Run a jumpflow experiment described by a TOML file")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the experiment in CONFIG.
    Run {
        config: PathBuf,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Output directory; overrides JUMPFLOW_OUT and the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, threads, out } => match run(&config, &RunOptions { threads, out }) {
            Ok(r) => {
                println!("{}", r.out_dir.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.exit_code() as u8)
            }
        },
    }
}
