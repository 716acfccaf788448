//! `tq verify`: paired dense vs quantized forward passes on seeded inputs.

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use tq_core::model::{
    relative_forward_errors, seeded_inputs, QuantizedToyModel, ToyModel,
};
use tq_core::read_checkpoint;

use crate::render::OutputFormat;

#[derive(Args)]
pub struct VerifyArgs {
    /// Full-precision TQCK checkpoint.
    #[arg(long)]
    pub original: PathBuf,

    /// Quantized TQCK checkpoint with matching names and shapes.
    #[arg(long)]
    pub quantized: PathBuf,

    /// Number of seeded inputs to compare on.
    #[arg(long, default_value_t = 64)]
    pub samples: usize,

    /// Maximum allowed relative output error.
    #[arg(long, default_value_t = 1e-6)]
    pub tolerance: f64,

    #[arg(long, env = "TQ_SEED", default_value_t = 42)]
    pub seed: u64,

    #[arg(long, value_enum, default_value = "human")]
    pub format: OutputFormat,
}

#[derive(Serialize)]
struct VerifyLine {
    #[serde(rename = "type")]
    kind: &'static str,
    samples: usize,
    max_relative_error: f64,
    mean_relative_error: f64,
    tolerance: f64,
    passed: bool,
}

pub fn run(args: VerifyArgs) -> anyhow::Result<u8> {
    let original = read_checkpoint(&args.original)?;
    let quantized = read_checkpoint(&args.quantized)?;

    // Architectures must agree name by name, shape by shape.
    for (name, tensor) in &original {
        match quantized.get(name) {
            None => {
                return Err(tq_core::Error::InvalidRecord {
                    name: name.clone(),
                    reason: "missing from the quantized checkpoint".to_string(),
                }
                .into())
            }
            Some(q) if q.rows() != tensor.rows() || q.cols() != tensor.cols() => {
                return Err(tq_core::Error::ShapeMismatch {
                    expected_rows: tensor.rows(),
                    expected_cols: tensor.cols(),
                    found_rows: q.rows(),
                    found_cols: q.cols(),
                }
                .into())
            }
            Some(_) => {}
        }
    }
    if let Some(extra) = quantized.keys().find(|k| !original.contains_key(*k)) {
        return Err(tq_core::Error::InvalidRecord {
            name: extra.clone(),
            reason: "not present in the original checkpoint".to_string(),
        }
        .into());
    }

    let dense = ToyModel::from_tensor_map(&original)?;
    let quant = QuantizedToyModel::from_tensor_map(&quantized)?;
    let inputs = seeded_inputs(args.samples, dense.width(), args.seed);
    let errors = relative_forward_errors(&dense, &quant, &inputs)?;

    let max = errors.iter().cloned().fold(0.0f64, f64::max);
    let mean = if errors.is_empty() {
        0.0
    } else {
        errors.iter().sum::<f64>() / errors.len() as f64
    };
    let passed = max <= args.tolerance;
    match args.format {
        OutputFormat::Human => {
            println!("samples              {}", errors.len());
            println!("max relative error   {max:.3e}");
            println!("mean relative error  {mean:.3e}");
            println!("tolerance            {:.3e}", args.tolerance);
            println!("verdict              {}", if passed { "PASS" } else { "FAIL" });
        }
        OutputFormat::JsonLines => {
            let line = VerifyLine {
                kind: "verify",
                samples: errors.len(),
                max_relative_error: max,
                mean_relative_error: mean,
                tolerance: args.tolerance,
                passed,
            };
            println!("{}", serde_json::to_string(&line)?);
        }
    }
    if passed {
        Ok(0)
    } else {
        eprintln!("max relative error {max:.3e} exceeds tolerance {:.3e}", args.tolerance);
        Ok(1)
    }
}
