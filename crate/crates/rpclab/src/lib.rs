//! Command-line driver and std-side tooling for `rpclab-core`: deterministic
//! parallel Monte Carlo, `key = value` configuration, JSON and CSV output.

pub mod cli;
pub mod commands;
pub mod config;
pub mod output;
pub mod parallel;
pub mod verify;

use std::ffi::OsString;

use clap::Parser;

use crate::cli::{Cli, Command};
use crate::commands::Outcome;
use crate::config::Format;

/// Exit status for a configuration or input error.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status when a `verify` check fails.
pub const EXIT_VERIFY: i32 = 1;

/// Parses `argv`, runs the command and writes its output. Returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    let is_verify = matches!(cli.command, Command::Verify(_));
    let outcome = match dispatch(&cli.command) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e:#}");
            return EXIT_CONFIG;
        }
    };
    if let Err(e) = write(&outcome) {
        eprintln!("error: {e:#}");
        return EXIT_CONFIG;
    }
    if is_verify && !outcome.report.all_passed() {
        for c in outcome.report.checks.iter().filter(|c| !c.passed) {
            eprintln!("FAILED: {}", c.name);
        }
        return EXIT_VERIFY;
    }
    0
}

pub fn dispatch(cmd: &Command) -> anyhow::Result<Outcome> {
    match cmd {
        Command::Eval(a) => commands::eval(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Derivatives(a) => commands::derivatives(a),
        Command::Minimize(a) => commands::minimize(a),
        Command::AtLine(a) => commands::at_line(a),
        Command::SkOracle(a) => commands::sk_oracle(a),
        Command::Verify(a) => verify::run(a),
    }
}

fn write(o: &Outcome) -> anyhow::Result<()> {
    let text = match o.format {
        Format::Json => o.report.render_json(),
        Format::Csv => o.report.render_csv()?,
    };
    output::emit(o.output.as_deref(), &text)?;
    for (path, body) in &o.extra {
        output::emit(Some(path), body)?;
    }
    Ok(())
}
