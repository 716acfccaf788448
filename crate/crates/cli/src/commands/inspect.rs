//! `tq inspect`: record table plus compression report for a checkpoint.

use std::path::PathBuf;

use clap::Args;
use tq_core::checkpoint::CheckpointReader;
use tq_core::checkpoint_stats;
use tq_core::report::DEFAULT_BASELINE_WIDTH_BYTES;

use crate::render::{print_compression_report, print_records, OutputFormat};

#[derive(Args)]
pub struct InspectArgs {
    /// TQCK checkpoint to inspect.
    #[arg(long, short = 'i')]
    pub input: PathBuf,

    /// Baseline bytes per parameter for the compression report.
    #[arg(long, default_value_t = DEFAULT_BASELINE_WIDTH_BYTES)]
    pub baseline_width: usize,

    #[arg(long, value_enum, default_value = "human")]
    pub format: OutputFormat,
}

pub fn run(args: InspectArgs) -> anyhow::Result<u8> {
    let reader = CheckpointReader::open(&args.input)?;
    print_records(reader.records(), args.format);
    drop(reader);
    let report = checkpoint_stats(&args.input, args.baseline_width)?;
    print_compression_report(&report, args.format);
    Ok(0)
}
