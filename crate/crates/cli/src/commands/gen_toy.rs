//! `tq gen-toy`: write a dense toy block-stack checkpoint to experiment on.
//!
//! The map holds `block.{i}.linear{1,2}` weights plus a small
//! `final_norm.scale` tensor that the usual quantize patterns leave alone,
//! so generated checkpoints exercise the passthrough path too.

use std::path::PathBuf;

use clap::Args;
use rand::{Rng, SeedableRng};
use tq_core::checkpoint::{RealWidth, TensorData};
use tq_core::model::ToyModel;
use tq_core::{write_checkpoint, WeightMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum WeightStyle {
    /// Seeded Gaussian weights.
    Random,
    /// Every weight is exactly scale * code with codes in {-1, +1}; plain
    /// ternarization reproduces such a model bit for bit.
    Exact,
    /// Exactly representable but with zero codes mixed in; exact recovery
    /// additionally needs calibration (--calib-rounds >= 1 on quantize).
    ExactSparse,
}

#[derive(Args)]
pub struct GenToyArgs {
    /// Output TQCK checkpoint path.
    #[arg(long, short = 'o')]
    pub output: PathBuf,

    #[arg(long, default_value_t = 4)]
    pub depth: usize,

    #[arg(long, default_value_t = 64)]
    pub width: usize,

    #[arg(long, env = "TQ_SEED", default_value_t = 42)]
    pub seed: u64,

    #[arg(long, value_enum, default_value = "random")]
    pub weights: WeightStyle,
}

pub fn run(args: GenToyArgs) -> anyhow::Result<u8> {
    let model = match args.weights {
        WeightStyle::Random => ToyModel::random(args.depth, args.width, args.seed),
        WeightStyle::Exact => {
            ToyModel::exactly_representable(args.depth, args.width, args.seed, false)
        }
        WeightStyle::ExactSparse => {
            ToyModel::exactly_representable(args.depth, args.width, args.seed, true)
        }
    };
    let mut map = model.to_tensor_map(RealWidth::F32)?;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(args.seed ^ 0x6e6f726d);
    let norm: Vec<f64> = (0..args.width).map(|_| rng.random_range(0.5..1.5)).collect();
    map.insert(
        "final_norm.scale".to_string(),
        TensorData::dense(WeightMatrix::new(args.width, 1, norm)?, RealWidth::F32)?,
    );

    write_checkpoint(&map, &args.output)?;
    eprintln!(
        "wrote toy checkpoint: depth {}, width {}, {} tensors",
        args.depth,
        args.width,
        map.len()
    );
    Ok(0)
}
