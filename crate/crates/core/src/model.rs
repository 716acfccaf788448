//! A toy feed-forward block stack for end-to-end parity experiments:
//! `x := x + linear2(gelu(linear1(x)))` per block, with `linear1` of shape
//! `4w x w` and `linear2` of shape `w x 4w`. Only the linear weights exist;
//! quantization never touches anything else.
//!
//! Tensor names follow `block.{i}.linear{1,2}` so the usual layer-selection
//! patterns apply. The quantized executor runs matched layers through the
//! packed kernel and passthrough layers through the dense path with the
//! same accumulation order.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::bitpack::{pack, PackedTensor};
use crate::calib::{alternate_rounds, compile_pattern, fork_seed, CalibSampleSet};
use crate::checkpoint::TensorData;
use crate::error::{Error, Result};
use crate::kernel::{dense_matvec, gemv_lut, DecodeLut};
use crate::report::{CompressionReport, SCALE_WIDTH_BYTES};
use crate::ternary::{ternarize, QuantConfig, WeightMatrix};

/// Exact GELU: `x/2 * (1 + erf(x / sqrt(2)))`.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyBlock {
    pub linear1: WeightMatrix,
    pub linear2: WeightMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    width: usize,
    blocks: Vec<ToyBlock>,
}

/// Name of block `i`'s linear `j` (j is 1 or 2).
pub fn tensor_name(block: usize, linear: usize) -> String {
    format!("block.{block}.linear{linear}")
}

/// Parse `block.{i}.linear{1,2}` back into its indices.
pub fn parse_tensor_name(name: &str) -> Option<(usize, usize)> {
    let rest = name.strip_prefix("block.")?;
    let (idx, layer) = rest.split_once('.')?;
    let block = idx.parse().ok()?;
    match layer {
        "linear1" => Some((block, 1)),
        "linear2" => Some((block, 2)),
        _ => None,
    }
}

impl ToyModel {
    pub fn new(width: usize, blocks: Vec<ToyBlock>) -> Result<Self> {
        for (i, b) in blocks.iter().enumerate() {
            let ok = b.linear1.rows() == 4 * width
                && b.linear1.cols() == width
                && b.linear2.rows() == width
                && b.linear2.cols() == 4 * width;
            if !ok {
                return Err(Error::InvalidConfig {
                    reason: format!(
                        "block {i} shapes {}x{} / {}x{} do not chain for width {width}",
                        b.linear1.rows(),
                        b.linear1.cols(),
                        b.linear2.rows(),
                        b.linear2.cols()
                    ),
                });
            }
        }
        Ok(Self { width, blocks })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn depth(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[ToyBlock] {
        &self.blocks
    }

    /// Seeded random model; weight scale shrinks with fan-in so depth does
    /// not blow up the residual stream.
    pub fn random(depth: usize, width: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gen_matrix = |rows: usize, cols: usize| {
            let sigma = 1.0 / (cols as f64).sqrt();
            let values: Vec<f64> =
                (0..rows * cols).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect();
            WeightMatrix::new(rows, cols, values).unwrap()
        };
        let blocks = (0..depth)
            .map(|_| ToyBlock {
                linear1: gen_matrix(4 * width, width),
                linear2: gen_matrix(width, 4 * width),
            })
            .collect();
        Self { width, blocks }
    }

    /// Model whose every weight is exactly `scale * code` with per-row f32
    /// scales. With `zero_codes` false, rows are dense in {-1, +1} and
    /// plain absmean ternarization reproduces the weights exactly; with
    /// zeros present, exact recovery additionally needs a scale refit.
    pub fn exactly_representable(depth: usize, width: usize, seed: u64, zero_codes: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gen_matrix = |rows: usize, cols: usize| {
            let mut values = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let scale = rng.random_range(0.25..2.0f32) as f64;
                let mut any_nonzero = false;
                for c in 0..cols {
                    let code: i8 = if zero_codes {
                        rng.random_range(-1..=1)
                    } else if rng.random_bool(0.5) {
                        1
                    } else {
                        -1
                    };
                    let code = if c == cols - 1 && !any_nonzero && code == 0 { 1 } else { code };
                    any_nonzero |= code != 0;
                    values.push(scale * code as f64);
                }
            }
            WeightMatrix::new(rows, cols, values).unwrap()
        };
        let blocks = (0..depth)
            .map(|_| ToyBlock {
                linear1: gen_matrix(4 * width, width),
                linear2: gen_matrix(width, 4 * width),
            })
            .collect();
        Self { width, blocks }
    }

    /// Dense tensor map under the standard block names.
    pub fn to_tensor_map(&self, width: crate::checkpoint::RealWidth) -> Result<BTreeMap<String, TensorData>> {
        let mut map = BTreeMap::new();
        for (i, b) in self.blocks.iter().enumerate() {
            map.insert(tensor_name(i, 1), TensorData::dense(b.linear1.clone(), width)?);
            map.insert(tensor_name(i, 2), TensorData::dense(b.linear2.clone(), width)?);
        }
        Ok(map)
    }

    /// Rebuild a model from the dense block tensors of a map; other names
    /// are ignored. Every block 0..depth must be complete.
    pub fn from_tensor_map(map: &BTreeMap<String, TensorData>) -> Result<Self> {
        let mut blocks: BTreeMap<usize, (Option<LayerExec>, Option<LayerExec>)> = BTreeMap::new();
        for (name, tensor) in map {
            let Some((i, j)) = parse_tensor_name(name) else { continue };
            let TensorData::Dense(d) = tensor else {
                return Err(Error::InvalidRecord {
                    name: name.clone(),
                    reason: "expected a dense tensor for the full-precision model".to_string(),
                });
            };
            let slot = blocks.entry(i).or_default();
            match j {
                1 => slot.0 = Some(LayerExec::Dense(d.matrix().clone())),
                _ => slot.1 = Some(LayerExec::Dense(d.matrix().clone())),
            }
        }
        assemble_blocks(blocks, |l1, l2| {
            Ok(ToyBlock { linear1: l1.dense()?, linear2: l2.dense()? })
        })
        .and_then(|(width, blocks)| ToyModel::new(width, blocks))
    }
}

/// One linear layer of the quantized executor.
#[derive(Debug, Clone)]
pub enum LayerExec {
    Dense(WeightMatrix),
    Packed(PackedTensor),
}

impl LayerExec {
    fn rows(&self) -> usize {
        match self {
            LayerExec::Dense(w) => w.rows(),
            LayerExec::Packed(p) => p.rows(),
        }
    }

    fn cols(&self) -> usize {
        match self {
            LayerExec::Dense(w) => w.cols(),
            LayerExec::Packed(p) => p.cols(),
        }
    }

    fn dense(self) -> Result<WeightMatrix> {
        match self {
            LayerExec::Dense(w) => Ok(w),
            LayerExec::Packed(_) => Err(Error::InvalidConfig {
                reason: "packed tensor where a dense one was required".to_string(),
            }),
        }
    }

    fn apply(&self, x: &[f64], lut: &DecodeLut) -> Result<Vec<f64>> {
        match self {
            LayerExec::Dense(w) => dense_matvec(w, x),
            LayerExec::Packed(p) => gemv_lut(p, x, lut),
        }
    }
}

#[derive(Debug, Clone)]
pub struct QuantBlock {
    pub linear1: LayerExec,
    pub linear2: LayerExec,
}

/// Block stack whose matched linears run on the packed kernel.
#[derive(Debug, Clone)]
pub struct QuantizedToyModel {
    width: usize,
    blocks: Vec<QuantBlock>,
}

impl QuantizedToyModel {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn depth(&self) -> usize {
        self.blocks.len()
    }

    /// Rebuild an executor from a mixed tensor map (packed and dense block
    /// tensors); other names are ignored.
    pub fn from_tensor_map(map: &BTreeMap<String, TensorData>) -> Result<Self> {
        let mut blocks: BTreeMap<usize, (Option<LayerExec>, Option<LayerExec>)> = BTreeMap::new();
        for (name, tensor) in map {
            let Some((i, j)) = parse_tensor_name(name) else { continue };
            let exec = match tensor {
                TensorData::Dense(d) => LayerExec::Dense(d.matrix().clone()),
                TensorData::Packed(p) => LayerExec::Packed(p.clone()),
            };
            let slot = blocks.entry(i).or_default();
            match j {
                1 => slot.0 = Some(exec),
                _ => slot.1 = Some(exec),
            }
        }
        let (width, blocks) =
            assemble_blocks(blocks, |l1, l2| Ok(QuantBlock { linear1: l1, linear2: l2 }))?;
        for (i, b) in blocks.iter().enumerate() {
            let ok = b.linear1.rows() == 4 * width
                && b.linear1.cols() == width
                && b.linear2.rows() == width
                && b.linear2.cols() == 4 * width;
            if !ok {
                return Err(Error::InvalidConfig {
                    reason: format!("block {i} shapes do not chain for width {width}"),
                });
            }
        }
        Ok(Self { width, blocks })
    }
}

fn assemble_blocks<B>(
    found: BTreeMap<usize, (Option<LayerExec>, Option<LayerExec>)>,
    build: impl Fn(LayerExec, LayerExec) -> Result<B>,
) -> Result<(usize, Vec<B>)> {
    let depth = found.keys().next_back().map_or(0, |i| i + 1);
    if found.len() != depth {
        return Err(Error::InvalidConfig {
            reason: format!("block indices are not contiguous 0..{depth}"),
        });
    }
    let mut width = 0;
    let mut blocks = Vec::with_capacity(depth);
    for (i, (l1, l2)) in found {
        let (Some(l1), Some(l2)) = (l1, l2) else {
            return Err(Error::InvalidConfig { reason: format!("block {i} is missing a linear") });
        };
        if i == 0 {
            width = l1.cols();
        }
        blocks.push(build(l1, l2)?);
    }
    Ok((width, blocks))
}

fn check_input(width: usize, x: &[f64]) -> Result<()> {
    if x.len() != width {
        return Err(Error::LengthMismatch {
            context: "model input",
            expected: width,
            found: x.len(),
        });
    }
    Ok(())
}

/// Full-precision forward pass.
pub fn forward_dense(m: &ToyModel, x: &[f64]) -> Result<Vec<f64>> {
    check_input(m.width, x)?;
    let mut cur = x.to_vec();
    for b in &m.blocks {
        let hidden: Vec<f64> =
            dense_matvec(&b.linear1, &cur)?.into_iter().map(gelu).collect();
        let delta = dense_matvec(&b.linear2, &hidden)?;
        for (c, d) in cur.iter_mut().zip(&delta) {
            *c += d;
        }
    }
    Ok(cur)
}

/// Forward pass through the mixed packed/dense executor.
pub fn forward_quantized(m: &QuantizedToyModel, x: &[f64]) -> Result<Vec<f64>> {
    check_input(m.width, x)?;
    let lut = DecodeLut::global();
    let mut cur = x.to_vec();
    for b in &m.blocks {
        let hidden: Vec<f64> = b.linear1.apply(&cur, lut)?.into_iter().map(gelu).collect();
        let delta = b.linear2.apply(&hidden, lut)?;
        for (c, d) in cur.iter_mut().zip(&delta) {
            *c += d;
        }
    }
    Ok(cur)
}

/// Input activation seen by every linear layer when the dense model runs on
/// `inputs`: the teacher-propagated calibration samples.
pub fn capture_activations(
    m: &ToyModel,
    inputs: &[Vec<f64>],
) -> Result<BTreeMap<String, Vec<Vec<f64>>>> {
    let mut captured: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    for x in inputs {
        check_input(m.width, x)?;
        let mut cur = x.to_vec();
        for (i, b) in m.blocks.iter().enumerate() {
            captured.entry(tensor_name(i, 1)).or_default().push(cur.clone());
            let hidden: Vec<f64> =
                dense_matvec(&b.linear1, &cur)?.into_iter().map(gelu).collect();
            captured.entry(tensor_name(i, 2)).or_default().push(hidden.clone());
            let delta = dense_matvec(&b.linear2, &hidden)?;
            for (c, d) in cur.iter_mut().zip(&delta) {
                *c += d;
            }
        }
    }
    Ok(captured)
}

/// Seeded standard-normal model inputs.
pub fn seeded_inputs(count: usize, width: usize, seed: u64) -> Vec<Vec<f64>> {
    CalibSampleSet::standard_normal(count, width, fork_seed(seed, "model-inputs"))
        .inputs()
        .to_vec()
}

/// Quantize a toy model's matched linears. With `calib_rounds > 0` each
/// layer is calibrated on teacher-propagated activations driven by seeded
/// model inputs, rather than on layer-local noise.
pub fn quantize_toy_model(m: &ToyModel, cfg: &QuantConfig) -> Result<QuantizedToyModel> {
    cfg.validate()?;
    let re = compile_pattern(&cfg.layer_pattern)?;
    let captured = if cfg.calib_rounds > 0 {
        let inputs = seeded_inputs(cfg.calib_samples, m.width, cfg.seed);
        Some(capture_activations(m, &inputs)?)
    } else {
        None
    };

    let quantize_layer = |name: String, w: &WeightMatrix| -> Result<LayerExec> {
        if !re.as_ref().is_some_and(|re| re.is_match(&name)) {
            return Ok(LayerExec::Dense(w.clone()));
        }
        let t = match &captured {
            Some(acts) => {
                let samples = CalibSampleSet::from_inputs(w.cols(), acts[&name].clone())?;
                alternate_rounds(w, cfg, &samples)?.tensor
            }
            None => ternarize(w, cfg)?,
        };
        Ok(LayerExec::Packed(pack(&t)?))
    };

    let mut blocks = Vec::with_capacity(m.depth());
    for (i, b) in m.blocks.iter().enumerate() {
        blocks.push(QuantBlock {
            linear1: quantize_layer(tensor_name(i, 1), &b.linear1)?,
            linear2: quantize_layer(tensor_name(i, 2), &b.linear2)?,
        });
    }
    Ok(QuantizedToyModel { width: m.width, blocks })
}

/// Per-sample relative L2 error between the dense and quantized forwards.
pub fn relative_forward_errors(
    dense: &ToyModel,
    quant: &QuantizedToyModel,
    inputs: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let mut errors = Vec::with_capacity(inputs.len());
    for x in inputs {
        let yd = forward_dense(dense, x)?;
        let yq = forward_quantized(quant, x)?;
        let mut diff_sq = 0.0f64;
        let mut ref_sq = 0.0f64;
        for (a, b) in yd.iter().zip(&yq) {
            diff_sq += (a - b) * (a - b);
            ref_sq += a * a;
        }
        errors.push(if ref_sq == 0.0 {
            if diff_sq == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (diff_sq / ref_sq).sqrt()
        });
    }
    Ok(errors)
}

/// Weight-resident byte accounting for a tensor map, with the explicit
/// caveat that runtime activation and workspace memory is excluded. The
/// byte classes are computed exactly as the container stores them, so this
/// report and `checkpoint_stats` of the written map agree to the byte.
#[derive(Debug, Clone, Serialize)]
pub struct WeightMemoryReport {
    #[serde(flatten)]
    pub report: CompressionReport,
    pub caveat: &'static str,
}

pub const MEMORY_CAVEAT: &str =
    "weight-resident memory only; runtime activation and workspace memory is excluded";

pub fn weight_memory_report(
    map: &BTreeMap<String, TensorData>,
    baseline_width_bytes: usize,
) -> WeightMemoryReport {
    let mut quantized_params = 0u64;
    let mut passthrough_params = 0u64;
    let mut packed_payload = 0u64;
    let mut scale_bytes = 0u64;
    let mut passthrough_bytes = 0u64;
    for tensor in map.values() {
        match tensor {
            TensorData::Packed(p) => {
                quantized_params += p.param_count() as u64;
                packed_payload += p.bytes().len() as u64;
                scale_bytes += (p.scales().len() * SCALE_WIDTH_BYTES) as u64;
            }
            TensorData::Dense(d) => {
                passthrough_params += d.matrix().values().len() as u64;
                passthrough_bytes += (d.matrix().values().len() * d.width().bytes()) as u64;
            }
        }
    }
    WeightMemoryReport {
        report: CompressionReport::from_classes(
            quantized_params,
            passthrough_params,
            packed_payload,
            scale_bytes,
            passthrough_bytes,
            baseline_width_bytes,
        ),
        caveat: MEMORY_CAVEAT,
    }
}
