//! `tq bench`: fixed-workload GEMV timing.

use clap::Args;
use tq_core::bench::{bench_gemv, BenchConfig, BenchPath};
use tq_core::report::DEFAULT_BASELINE_WIDTH_BYTES;

use crate::render::{print_bench_report, OutputFormat};

fn parse_shape(s: &str) -> Result<(usize, usize), String> {
    let (rows, cols) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("shape {s:?} is not of the form ROWSxCOLS"))?;
    let rows = rows.trim().parse().map_err(|e| format!("bad rows in {s:?}: {e}"))?;
    let cols = cols.trim().parse().map_err(|e| format!("bad cols in {s:?}: {e}"))?;
    Ok((rows, cols))
}

fn parse_path(s: &str) -> Result<BenchPath, String> {
    s.parse().map_err(|e: tq_core::Error| e.to_string())
}

#[derive(Args)]
pub struct BenchArgs {
    /// Matrix shape as ROWSxCOLS, e.g. 3072x3072.
    #[arg(long, value_parser = parse_shape, default_value = "256x256")]
    pub shape: (usize, usize),

    /// Timed repetitions per path.
    #[arg(long, default_value_t = 16)]
    pub reps: usize,

    /// Paths to time.
    #[arg(
        long,
        value_parser = parse_path,
        value_delimiter = ',',
        default_value = "reference,lut,dense-baseline"
    )]
    pub paths: Vec<BenchPath>,

    #[arg(long, env = "TQ_SEED", default_value_t = 42)]
    pub seed: u64,

    /// Bytes per dense weight element for the traffic accounting.
    #[arg(long, default_value_t = DEFAULT_BASELINE_WIDTH_BYTES)]
    pub baseline_width: usize,

    #[arg(long, value_enum, default_value = "human")]
    pub format: OutputFormat,
}

pub fn run(args: BenchArgs) -> anyhow::Result<u8> {
    let cfg = BenchConfig {
        rows: args.shape.0,
        cols: args.shape.1,
        repetitions: args.reps,
        paths: args.paths,
        seed: args.seed,
        baseline_width_bytes: args.baseline_width,
    };
    let report = bench_gemv(&cfg)?;
    print_bench_report(&report, args.format);
    Ok(0)
}
