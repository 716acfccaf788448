//! `tq quantize`: dense checkpoint in, mixed packed/dense checkpoint out.

use std::path::PathBuf;

use clap::Args;
use tq_core::calib::{fold_prompts_into_seed, quantize_map};
use tq_core::report::DEFAULT_BASELINE_WIDTH_BYTES;
use tq_core::ternary::{Granularity, QuantConfig, Rounding};
use tq_core::{checkpoint_stats, write_checkpoint};

use crate::import::load_input;
use crate::render::{print_compression_report, OutputFormat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum GranularityArg {
    PerRow,
    PerTensor,
}

impl From<GranularityArg> for Granularity {
    fn from(g: GranularityArg) -> Self {
        match g {
            GranularityArg::PerRow => Granularity::PerRow,
            GranularityArg::PerTensor => Granularity::PerTensor,
        }
    }
}

#[derive(Args)]
pub struct QuantizeArgs {
    /// TQCK checkpoint file or dense-import directory.
    #[arg(long, short = 'i')]
    pub input: PathBuf,

    /// Output TQCK checkpoint path.
    #[arg(long, short = 'o')]
    pub output: PathBuf,

    /// Regex selecting tensor names to quantize; empty quantizes nothing
    /// (useful to convert an import directory to TQCK as-is).
    #[arg(long, default_value = "")]
    pub pattern: String,

    /// Scale grouping.
    #[arg(long, value_enum, default_value = "per-row")]
    pub granularity: GranularityArg,

    /// Calibration inputs per layer (used when --calib-rounds > 0).
    #[arg(long, default_value_t = 256)]
    pub calib_samples: usize,

    /// Rounds of code reassignment + scale refit; 0 skips calibration.
    #[arg(long, default_value_t = 0)]
    pub calib_rounds: usize,

    /// Master RNG seed.
    #[arg(long, env = "TQ_SEED", default_value_t = 42)]
    pub seed: u64,

    /// Optional prompt list (one per line), hashed into the seed.
    #[arg(long)]
    pub prompts: Option<PathBuf>,

    /// Baseline bytes per parameter for the compression report.
    #[arg(long, default_value_t = DEFAULT_BASELINE_WIDTH_BYTES)]
    pub baseline_width: usize,

    #[arg(long, value_enum, default_value = "human")]
    pub format: OutputFormat,
}

pub fn run(args: QuantizeArgs) -> anyhow::Result<u8> {
    let map = load_input(&args.input)?;

    let mut seed = args.seed;
    if let Some(prompts_path) = &args.prompts {
        let text = std::fs::read_to_string(prompts_path).map_err(tq_core::Error::Io)?;
        let (folded, count) = fold_prompts_into_seed(seed, &text);
        eprintln!("folded {count} prompts into the calibration seed");
        seed = folded;
    }

    let cfg = QuantConfig {
        granularity: args.granularity.into(),
        rounding: Rounding::HalfAwayFromZero,
        zero_scale_epsilon: 1e-12,
        layer_pattern: args.pattern.clone(),
        calib_samples: args.calib_samples,
        calib_rounds: args.calib_rounds,
        seed,
    };
    let (quantized, summary) = quantize_map(&map, &cfg)?;
    write_checkpoint(&quantized, &args.output)?;

    eprintln!(
        "quantized {} of {} tensors ({} of {} params)",
        summary.layers_quantized,
        summary.layers_quantized + summary.layers_passthrough,
        summary.quantized_params,
        summary.total_params
    );
    let report = checkpoint_stats(&args.output, args.baseline_width)?;
    print_compression_report(&report, args.format);
    Ok(0)
}
