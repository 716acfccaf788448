//! Compression accounting: bits-per-parameter arithmetic and the report
//! shared by checkpoint stats, the toy-model memory report, and the CLI.

use serde::Serialize;

/// Reference element width for ratio reporting: checkpoints being quantized
/// are assumed to originate at 16-bit precision unless configured otherwise.
pub const DEFAULT_BASELINE_WIDTH_BYTES: usize = 2;

/// Physical bits per stored ternary code.
pub const CODE_BITS: f64 = 2.0;

/// Bytes per stored scale (scales are serialized as f32).
pub const SCALE_WIDTH_BYTES: usize = 4;

/// Parameter counts and byte accounting for one quantized artifact, split by
/// encoding class, against a full-precision baseline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompressionReport {
    pub total_params: u64,
    pub quantized_params: u64,
    /// `quantized_params / total_params`, in [0, 1].
    pub quantized_fraction: f64,
    /// `total_params * baseline_width_bytes`.
    pub baseline_bytes: u64,
    pub packed_payload_bytes: u64,
    pub scale_bytes: u64,
    pub passthrough_bytes: u64,
    /// Sum of the three stored classes.
    pub stored_bytes: u64,
    /// `baseline_bytes / stored_bytes`.
    pub ratio: f64,
    pub baseline_width_bytes: usize,
}

impl CompressionReport {
    pub fn from_classes(
        quantized_params: u64,
        passthrough_params: u64,
        packed_payload_bytes: u64,
        scale_bytes: u64,
        passthrough_bytes: u64,
        baseline_width_bytes: usize,
    ) -> Self {
        let total_params = quantized_params + passthrough_params;
        let baseline_bytes = total_params * baseline_width_bytes as u64;
        let stored_bytes = packed_payload_bytes + scale_bytes + passthrough_bytes;
        let quantized_fraction = if total_params == 0 {
            0.0
        } else {
            quantized_params as f64 / total_params as f64
        };
        let ratio = if stored_bytes == 0 {
            if baseline_bytes == 0 {
                1.0
            } else {
                f64::INFINITY
            }
        } else {
            baseline_bytes as f64 / stored_bytes as f64
        };
        Self {
            total_params,
            quantized_params,
            quantized_fraction,
            baseline_bytes,
            packed_payload_bytes,
            scale_bytes,
            passthrough_bytes,
            stored_bytes,
            ratio,
            baseline_width_bytes,
        }
    }
}

/// Closed-form compression estimate for a model of `total_params` parameters
/// with a `quantized_fraction` stored at `code_bits` (+ scale overhead) per
/// parameter and the rest kept at `baseline_bits`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimatedCompression {
    pub baseline_bytes: f64,
    pub stored_bytes: f64,
    pub ratio: f64,
}

pub fn estimate_compression(
    total_params: f64,
    quantized_fraction: f64,
    code_bits: f64,
    baseline_bits: f64,
    scale_overhead_bits_per_param: f64,
) -> EstimatedCompression {
    let stored_bits_per_param = quantized_fraction * (code_bits + scale_overhead_bits_per_param)
        + (1.0 - quantized_fraction) * baseline_bits;
    EstimatedCompression {
        baseline_bytes: total_params * baseline_bits / 8.0,
        stored_bytes: total_params * stored_bits_per_param / 8.0,
        ratio: baseline_bits / stored_bits_per_param,
    }
}

/// Amortized scale cost for per-row granularity: one f32 scale per `cols`
/// parameters.
pub fn per_row_scale_overhead_bits(cols: usize) -> f64 {
    (SCALE_WIDTH_BYTES * 8) as f64 / cols as f64
}
