//! Fixed-workload wall-clock micro-benchmark for the GEMV paths.
//!
//! Times each requested path on one seeded random instance and reports
//! median and minimum latency plus the weight bytes a call has to read. The
//! report measures; it never declares a winner.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bitpack::{pack, PackedTensor};
use crate::error::{Error, Result};
use crate::kernel::{dense_matvec, gemv_lut, gemv_reference, DecodeLut};
use crate::report::{DEFAULT_BASELINE_WIDTH_BYTES, SCALE_WIDTH_BYTES};
use crate::ternary::{dequantize, Granularity, TernaryTensor, WeightMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchPath {
    Reference,
    Lut,
    DenseBaseline,
}

impl BenchPath {
    pub const ALL: [BenchPath; 3] = [BenchPath::Reference, BenchPath::Lut, BenchPath::DenseBaseline];
}

impl fmt::Display for BenchPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BenchPath::Reference => write!(f, "reference"),
            BenchPath::Lut => write!(f, "lut"),
            BenchPath::DenseBaseline => write!(f, "dense-baseline"),
        }
    }
}

impl FromStr for BenchPath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reference" => Ok(BenchPath::Reference),
            "lut" => Ok(BenchPath::Lut),
            "dense-baseline" => Ok(BenchPath::DenseBaseline),
            other => Err(Error::InvalidConfig {
                reason: format!(
                    "unknown path {other:?}, expected reference, lut, or dense-baseline"
                ),
            }),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub rows: usize,
    pub cols: usize,
    pub repetitions: usize,
    pub paths: Vec<BenchPath>,
    pub seed: u64,
    /// Element width assumed for the dense baseline's weight traffic.
    pub baseline_width_bytes: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            rows: 256,
            cols: 256,
            repetitions: 16,
            paths: BenchPath::ALL.to_vec(),
            seed: 42,
            baseline_width_bytes: DEFAULT_BASELINE_WIDTH_BYTES,
        }
    }
}

/// Latency and weight-byte figures for one path.
#[derive(Debug, Clone, Serialize)]
pub struct PathStats {
    pub path: BenchPath,
    pub rows: usize,
    pub cols: usize,
    pub repetitions: usize,
    pub median_ns: u128,
    pub min_ns: u128,
    /// Weight bytes one call reads: packed payload + scales for the packed
    /// paths, `rows * cols * baseline_width_bytes` for the dense baseline.
    pub weight_bytes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub rows: usize,
    pub cols: usize,
    pub repetitions: usize,
    pub entries: Vec<PathStats>,
}

/// Weight bytes a packed GEMV call touches.
pub fn packed_weight_bytes(p: &PackedTensor) -> usize {
    p.bytes().len() + p.scales().len() * SCALE_WIDTH_BYTES
}

fn time_reps<F: FnMut()>(reps: usize, mut f: F) -> (u128, u128) {
    let mut samples = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        f();
        samples.push(start.elapsed().as_nanos());
    }
    samples.sort_unstable();
    (samples[samples.len() / 2], samples[0])
}

/// Run the requested paths on one seeded random instance of `rows x cols`.
pub fn bench_gemv(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.repetitions == 0 {
        return Err(Error::InvalidConfig { reason: "repetitions must be >= 1".to_string() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let codes: Vec<i8> = (0..cfg.rows * cfg.cols).map(|_| rng.random_range(-1..=1)).collect();
    let scales: Vec<f32> = (0..cfg.rows).map(|_| rng.random_range(0.01..2.0f32)).collect();
    let t = TernaryTensor::new(cfg.rows, cfg.cols, codes, scales, Granularity::PerRow)?;
    let p = pack(&t)?;
    let dense: WeightMatrix = dequantize(&t);
    let x: Vec<f64> = (0..cfg.cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    let lut = DecodeLut::global();

    let mut entries = Vec::with_capacity(cfg.paths.len());
    for &path in &cfg.paths {
        let (median_ns, min_ns, weight_bytes) = match path {
            BenchPath::Reference => {
                let (m, lo) = time_reps(cfg.repetitions, || {
                    std::hint::black_box(gemv_reference(&p, &x).unwrap());
                });
                (m, lo, packed_weight_bytes(&p))
            }
            BenchPath::Lut => {
                let (m, lo) = time_reps(cfg.repetitions, || {
                    std::hint::black_box(gemv_lut(&p, &x, lut).unwrap());
                });
                (m, lo, packed_weight_bytes(&p))
            }
            BenchPath::DenseBaseline => {
                let (m, lo) = time_reps(cfg.repetitions, || {
                    std::hint::black_box(dense_matvec(&dense, &x).unwrap());
                });
                (m, lo, cfg.rows * cfg.cols * cfg.baseline_width_bytes)
            }
        };
        entries.push(PathStats {
            path,
            rows: cfg.rows,
            cols: cfg.cols,
            repetitions: cfg.repetitions,
            median_ns,
            min_ns,
            weight_bytes,
        });
    }
    Ok(BenchReport { rows: cfg.rows, cols: cfg.cols, repetitions: cfg.repetitions, entries })
}
