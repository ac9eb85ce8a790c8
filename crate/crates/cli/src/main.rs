use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hrlab_cli::{run, Command, Options};

#[derive(Parser)]
#[command(name = "hrlab", version, about = "Nonautonomous diffusive Hindmarsh-Rose laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate one run and export its trajectory.
    Simulate(Common),
    /// Evaluate every constant of the estimates.
    Constants(Common),
    /// Run the estimate monitors on fresh runs.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Exit with status 3 when any monitor is violated.
        #[arg(long)]
        strict: bool,
    },
    /// Approximate pullback attractor fibres.
    Pullback(Common),
    /// Compare a uniform run with the ODE oracle.
    OracleCompare(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for ensemble work.
    #[arg(long)]
    threads: Option<usize>,
    /// Replaces `[experiment] seed`.
    #[arg(long)]
    seed_override: Option<u64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let (command, common, strict) = match cli.command {
        Cmd::Simulate(c) => (Command::Simulate, c, false),
        Cmd::Constants(c) => (Command::Constants, c, false),
        Cmd::Verify { common, strict } => (Command::Verify, common, strict),
        Cmd::Pullback(c) => (Command::Pullback, c, false),
        Cmd::OracleCompare(c) => (Command::OracleCompare, c, false),
    };
    let opts = Options {
        command,
        config: common.config,
        out: common.out,
        threads: common.threads,
        seed_override: common.seed_override,
        strict,
    };
    match run(&opts) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            ExitCode::from(outcome.exit_code(strict) as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
