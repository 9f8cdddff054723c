mod cli;
mod run;

use std::process::ExitCode;

use clap::Parser;

use cli::{Cli, Command};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Solve(a) => run::solve(a),
        Command::Sweep(a) => run::sweep(a),
        Command::Table1(a) => run::table1(a),
        Command::MinPmu(a) => run::min_pmu(a),
        Command::Montecarlo(a) => run::montecarlo(a),
        Command::Snapshot(a) => run::snapshot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(pmu_core::Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
