use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vortexlab_cli::selftest::{self, Mutation};
use vortexlab_cli::{config, run_file};

#[derive(Parser)]
#[command(
    name = "vortexlab",
    version,
    about = "Gravitating vortex experiments on the torus and the sphere"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run { config: PathBuf },
    /// Run the fast consistency checks.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Inject a known defect to check that the suite notices it.
        #[arg(long, value_enum)]
        mutation: Option<Mutation>,
    },
    /// Print the annotated config schema.
    Schema,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config } => run_file(&config),
        Command::Selftest { seed, mutation } => {
            let results = selftest::run(seed, mutation);
            print!("{}", selftest::render(&results));
            if results.iter().all(|r| r.passed) {
                0
            } else {
                1
            }
        }
        Command::Schema => {
            print!("{}", config::SCHEMA);
            0
        }
    };
    ExitCode::from(code as u8)
}
