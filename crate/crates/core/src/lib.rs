//! Ternary post-training weight quantization for linear layers.
//!
//! The pipeline: [`ternary`] maps full-precision matrices to {-1, 0, +1}
//! codes with absmean scales, [`bitpack`] stores the codes in 2-bit slots,
//! [`kernel`] multiplies straight from the packed bytes, [`calib`] refits
//! scales against the full-precision teacher without any external data,
//! [`checkpoint`] persists mixed packed/dense tensor maps in the TQCK
//! container, and [`model`]/[`bench`]/[`report`] provide a toy block stack
//! plus the storage and latency accounting around it.

pub mod bench;
pub mod bitpack;
pub mod calib;
pub mod checkpoint;
pub mod error;
pub mod kernel;
pub mod model;
pub mod report;
pub mod ternary;

pub use error::{Error, Result};

pub use bitpack::{pack, packed_size_bytes, unpack, PackedTensor};
pub use checkpoint::{
    checkpoint_stats, read_checkpoint, write_checkpoint, CheckpointReader, RealWidth, TensorData,
};
pub use report::{estimate_compression, CompressionReport};
pub use ternary::{
    dequantize, quantization_error, ternarize, Granularity, QuantConfig, TernaryTensor,
    WeightMatrix,
};
