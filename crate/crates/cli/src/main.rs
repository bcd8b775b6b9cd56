mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use commands::Outcome;

fn run(cli: &Cli) -> anyhow::Result<Outcome> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    commands::ensure_dir(&cli.out)?;
    match &cli.command {
        Command::Fit(a) => commands::fit(a, &cli.out),
        Command::Test(a) => commands::test(a, &cli.out),
        Command::SelectTuning(a) => commands::select_tuning(a, &cli.out),
        Command::SimulateFluctuation(a) => commands::simulate_fluctuation(a, &cli.out),
        Command::SimulateCoverage(a) => commands::simulate_coverage(a, &cli.out),
    }
}

fn main() -> ExitCode {
    // clap reports usage errors with status 2, which is reserved here for
    // non-convergence
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged) => {
            eprintln!("warning: the solver did not converge; outputs were written anyway");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
