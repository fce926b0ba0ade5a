use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use rk::{run, CliError, RunOptions, Task};

/// Resonance lattice and slow system experiments.
#[derive(Parser, Debug)]
#[command(name = "rk", version)]
struct Args {
    /// Task to run; must match the `task` field of the config.
    #[arg(value_enum)]
    task: Task,
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output root; the run goes to `<out>/<config hash prefix>/`.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn threads_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var("RK_THREADS") {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Validation(format!("RK_THREADS must be a positive integer, got {s:?}"))),
        },
    }
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("{}", e.to_json());
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(CliError::Validation(e.to_string())),
    };
    let threads = match threads_from_env() {
        Ok(t) => t,
        Err(e) => return fail(e),
    };
    let opts = RunOptions { task: args.task, config: args.config, out: args.out, seed: args.seed, threads };
    match run(&opts) {
        Ok(outcome) => {
            let failed: Vec<&str> = outcome.report.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
            println!(
                "{} {} {}",
                outcome.report.task.name(),
                if outcome.report.pass { "pass" } else { "FAIL" },
                outcome.dir.join("report.json").display()
            );
            for name in failed {
                println!("  failed: {name}");
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => fail(e),
    }
}
