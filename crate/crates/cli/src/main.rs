//! `tq`: quantize, inspect, verify, and benchmark ternary-packed
//! checkpoints.
//!
//! Exit codes: 0 success, 1 configuration or usage error (also a failed
//! verification), 2 I/O, format, or data error, 3 internal error. Reports
//! go to stdout, diagnostics to stderr.

mod commands;
mod import;
mod render;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "tq",
    version,
    about = "Ternary weight quantization toolkit",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Quantize a dense checkpoint (or import directory) into a mixed
    /// packed/dense TQCK checkpoint.
    Quantize(commands::quantize::QuantizeArgs),
    /// Compare dense and quantized forward passes on seeded inputs.
    Verify(commands::verify::VerifyArgs),
    /// List checkpoint records and compression figures.
    Inspect(commands::inspect::InspectArgs),
    /// Time the packed GEMV paths against the dense baseline.
    Bench(commands::bench::BenchArgs),
    /// Generate a toy block-stack checkpoint to experiment on.
    GenToy(commands::gen_toy::GenToyArgs),
}

fn classify(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<tq_core::Error>() {
        Some(tq_core::Error::InvalidPattern { .. })
        | Some(tq_core::Error::InvalidConfig { .. }) => 1,
        Some(_) => 2,
        None => 3,
    }
}

fn main() -> ExitCode {
    // Die quietly when a pager or `head` closes stdout instead of
    // panicking on the broken pipe.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Quantize(args) => commands::quantize::run(args),
        Command::Verify(args) => commands::verify::run(args),
        Command::Inspect(args) => commands::inspect::run(args),
        Command::Bench(args) => commands::bench::run(args),
        Command::GenToy(args) => commands::gen_toy::run(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify(&err))
        }
    }
}
