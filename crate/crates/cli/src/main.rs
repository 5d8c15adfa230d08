use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use symabs_cli::{exit_code, parse_spec, run_pipeline, write_artifacts};

#[derive(Parser)]
#[command(
    name = "symabs",
    version,
    about = "Compositional symbolic abstractions for networks of subsystems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline on a network spec.
    Run {
        spec: PathBuf,
        /// Output directory for the report, abstraction dumps and traces.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Worker threads; results do not depend on this.
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { spec, out, threads } => {
            if let Some(n) = threads {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("error: thread pool: {e}");
                    return ExitCode::from(2);
                }
            }
            let spec = match parse_spec(&spec) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(exit_code(&e));
                }
            };
            let outcome = run_pipeline(&spec);
            if let Err(e) = write_artifacts(&outcome, &out) {
                eprintln!("error: writing {}: {e}", out.display());
                return ExitCode::from(2);
            }
            print!("{}", outcome.report);
            if let Some(e) = &outcome.error {
                eprintln!("error in stage {}: {}", e.stage, e.error);
            }
            ExitCode::from(outcome.exit_code())
        }
    }
}
