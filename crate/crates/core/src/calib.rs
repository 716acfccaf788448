//! Data-free scale calibration: the full-precision layer is the teacher,
//! its ternary form the student, and no external data is involved.
//!
//! With codes held fixed, the per-group scale minimizing the layer-output
//! error `sum_n (w_r . x_n - s * (T_r . x_n))^2` over a calibration set has
//! the closed form `s* = sum(a*b) / sum(a*a)` with `a = T_r . x_n` and
//! `b = w_r . x_n`. The refit is closed form rather than a training loop:
//! deterministic, no hyperparameters, and its optimality is directly
//! checkable. Degenerate groups (no code signal, a non-positive fit, or a
//! fit that does not actually improve the objective) keep their absmean
//! scale.
//!
//! Calibration inputs are seeded standard-normal vectors by default;
//! pipelines that know the surrounding architecture can substitute
//! teacher-propagated activations. Per-layer generators are forked from the
//! master seed by hashing the layer name, so results do not depend on
//! scheduling.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use regex::Regex;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bitpack::pack;
use crate::checkpoint::TensorData;
use crate::error::{Error, Result};
use crate::ternary::{
    assign_codes, ternarize, QuantConfig, TernaryTensor, WeightMatrix,
};

/// Denominators below this carry no usable signal; the row keeps its scale.
pub const REFIT_DENOMINATOR_EPSILON: f64 = 1e-20;

/// A set of calibration input vectors, all of one dimension, all finite.
#[derive(Debug, Clone)]
pub struct CalibSampleSet {
    dim: usize,
    inputs: Vec<Vec<f64>>,
}

impl CalibSampleSet {
    /// Seeded standard-normal samples.
    pub fn standard_normal(count: usize, dim: usize, seed: [u8; 32]) -> Self {
        let mut rng = ChaCha8Rng::from_seed(seed);
        let inputs = (0..count)
            .map(|_| (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        Self { dim, inputs }
    }

    /// Wrap externally produced samples (e.g. teacher activations).
    pub fn from_inputs(dim: usize, inputs: Vec<Vec<f64>>) -> Result<Self> {
        for x in &inputs {
            if x.len() != dim {
                return Err(Error::LengthMismatch {
                    context: "calibration sample",
                    expected: dim,
                    found: x.len(),
                });
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { context: "calibration sample" });
            }
        }
        Ok(Self { dim, inputs })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }
}

/// Derive a per-layer RNG seed from the master seed and the layer name.
pub fn fork_seed(master: u64, layer_name: &str) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(layer_name.as_bytes());
    hasher.finalize().into()
}

/// Fold a prompt list (one prompt per line) into the master seed. Prompts
/// only perturb the calibration RNG; their text is not otherwise
/// interpreted.
pub fn fold_prompts_into_seed(master: u64, prompts: &str) -> (u64, usize) {
    let mut hasher = Sha256::new();
    let mut count = 0usize;
    for line in prompts.lines() {
        hasher.update(line.as_bytes());
        hasher.update([0u8]);
        count += 1;
    }
    let digest = hasher.finalize();
    let fold = u64::from_le_bytes(digest[0..8].try_into().unwrap());
    (master ^ fold, count)
}

fn row_dot(row: &[f64], x: &[f64]) -> f64 {
    row.iter().zip(x).map(|(a, b)| a * b).sum()
}

fn code_dot(t: &TernaryTensor, row: usize, x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (c, &xv) in x.iter().enumerate() {
        match t.code(row, c) {
            1 => acc += xv,
            -1 => acc -= xv,
            _ => {}
        }
    }
    acc
}

fn check_refit_shapes(w: &WeightMatrix, t: &TernaryTensor, samples: &CalibSampleSet) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    if w.rows() != t.rows() || w.cols() != t.cols() {
        return Err(Error::ShapeMismatch {
            expected_rows: w.rows(),
            expected_cols: w.cols(),
            found_rows: t.rows(),
            found_cols: t.cols(),
        });
    }
    if samples.dim() != w.cols() {
        return Err(Error::LengthMismatch {
            context: "calibration sample dimension",
            expected: w.cols(),
            found: samples.dim(),
        });
    }
    Ok(())
}

/// Replace each scale group with its least-squares minimizer over the
/// sample set, keeping codes fixed. Groups with a degenerate or
/// non-improving fit keep their current scale, so the layer-output MSE
/// never increases.
pub fn refit_scales(
    w: &WeightMatrix,
    t: &TernaryTensor,
    samples: &CalibSampleSet,
) -> Result<TernaryTensor> {
    check_refit_shapes(w, t, samples)?;

    let groups = t.granularity().group_count(t.rows());
    // Per-group normal-equation terms: num = sum(a*b), den = sum(a*a),
    // plus sum(b*b) so objectives can be compared without a second pass.
    let mut num = vec![0.0f64; groups];
    let mut den = vec![0.0f64; groups];
    let mut bb = vec![0.0f64; groups];
    for x in samples.inputs() {
        for r in 0..t.rows() {
            let g = t.granularity().group_of(r);
            let a = code_dot(t, r, x);
            let b = row_dot(w.row(r), x);
            num[g] += a * b;
            den[g] += a * a;
            bb[g] += b * b;
        }
    }

    let mut scales = t.scales().to_vec();
    for g in 0..groups {
        if den[g] < REFIT_DENOMINATOR_EPSILON {
            continue;
        }
        let fitted = num[g] / den[g];
        if !fitted.is_finite() || fitted <= 0.0 {
            continue;
        }
        let candidate = fitted as f32;
        if !candidate.is_finite() || candidate <= 0.0 {
            continue;
        }
        // Quadratic objective q(s) = bb - 2 s num + s^2 den; take the
        // candidate only when it does not lose to the current scale after
        // f32 rounding.
        let q = |s: f64| bb[g] - 2.0 * s * num[g] + s * s * den[g];
        if q(candidate as f64) <= q(scales[g] as f64) {
            scales[g] = candidate;
        }
    }
    t.with_scales(scales)
}

/// Mean squared layer-output difference between the teacher `w` and the
/// student `t` over the sample set (mean over samples and output rows).
pub fn layer_output_mse(
    w: &WeightMatrix,
    t: &TernaryTensor,
    samples: &CalibSampleSet,
) -> Result<f64> {
    check_refit_shapes(w, t, samples)?;
    let mut sq = 0.0f64;
    for x in samples.inputs() {
        for r in 0..t.rows() {
            let teacher = row_dot(w.row(r), x);
            let student = t.scale_of(r) as f64 * code_dot(t, r, x);
            let d = teacher - student;
            sq += d * d;
        }
    }
    let n = samples.len() * t.rows();
    Ok(if n == 0 { 0.0 } else { sq / n as f64 })
}

/// Objectives recorded for one calibration round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoundObjective {
    /// MSE after codes were reassigned under the incoming scales.
    pub after_reassign: f64,
    /// MSE after the scales were refit to those codes.
    pub after_refit: f64,
}

#[derive(Debug, Clone)]
pub struct CalibrationOutcome {
    pub tensor: TernaryTensor,
    pub rounds: Vec<RoundObjective>,
}

/// Alternate code reassignment and scale refitting for
/// `cfg.calib_rounds` rounds. Zero rounds is plain ternarization.
pub fn alternate_rounds(
    w: &WeightMatrix,
    cfg: &QuantConfig,
    samples: &CalibSampleSet,
) -> Result<CalibrationOutcome> {
    cfg.validate()?;
    let mut t = ternarize(w, cfg)?;
    let mut rounds = Vec::with_capacity(cfg.calib_rounds);
    for _ in 0..cfg.calib_rounds {
        let codes = assign_codes(w, t.scales(), t.granularity());
        t = TernaryTensor::new(w.rows(), w.cols(), codes, t.scales().to_vec(), t.granularity())?;
        let after_reassign = layer_output_mse(w, &t, samples)?;
        t = refit_scales(w, &t, samples)?;
        let after_refit = layer_output_mse(w, &t, samples)?;
        rounds.push(RoundObjective { after_reassign, after_refit });
    }
    Ok(CalibrationOutcome { tensor: t, rounds })
}

/// Names split into quantize / passthrough by the layer pattern.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerPartition {
    pub quantize: Vec<String>,
    pub passthrough: Vec<String>,
}

/// Compile the layer pattern: a regular expression matched anywhere in the
/// tensor name. The empty pattern selects nothing.
pub fn compile_pattern(pattern: &str) -> Result<Option<Regex>> {
    if pattern.is_empty() {
        return Ok(None);
    }
    Regex::new(pattern).map(Some).map_err(|source| Error::InvalidPattern {
        pattern: pattern.to_string(),
        source,
    })
}

/// Deterministic partition of tensor names by the pattern.
pub fn select_layers(names: &[String], pattern: &str) -> Result<LayerPartition> {
    let re = compile_pattern(pattern)?;
    let mut out = LayerPartition { quantize: Vec::new(), passthrough: Vec::new() };
    for name in names {
        let matched = re.as_ref().is_some_and(|re| re.is_match(name));
        if matched {
            out.quantize.push(name.clone());
        } else {
            out.passthrough.push(name.clone());
        }
    }
    Ok(out)
}

/// Fraction of parameters held by pattern-matched layers.
pub fn matched_param_fraction(layers: &[(String, u64)], pattern: &str) -> Result<f64> {
    let re = compile_pattern(pattern)?;
    let mut matched = 0u64;
    let mut total = 0u64;
    for (name, params) in layers {
        total += params;
        if re.as_ref().is_some_and(|re| re.is_match(name)) {
            matched += params;
        }
    }
    Ok(if total == 0 { 0.0 } else { matched as f64 / total as f64 })
}

/// Per-pass tallies reported by [`quantize_map`].
#[derive(Debug, Clone, Serialize)]
pub struct QuantizeSummary {
    pub total_params: u64,
    pub quantized_params: u64,
    pub quantized_fraction: f64,
    pub layers_quantized: usize,
    pub layers_passthrough: usize,
}

/// Quantize every dense tensor whose name matches `cfg.layer_pattern`,
/// passing everything else through unchanged. With `calib_rounds > 0` each
/// matched layer is calibrated against itself on standard-normal inputs
/// forked per layer from `cfg.seed`.
pub fn quantize_map(
    map: &BTreeMap<String, TensorData>,
    cfg: &QuantConfig,
) -> Result<(BTreeMap<String, TensorData>, QuantizeSummary)> {
    cfg.validate()?;
    let re = compile_pattern(&cfg.layer_pattern)?;
    let mut out = BTreeMap::new();
    let mut summary = QuantizeSummary {
        total_params: 0,
        quantized_params: 0,
        quantized_fraction: 0.0,
        layers_quantized: 0,
        layers_passthrough: 0,
    };
    for (name, tensor) in map {
        let params = tensor.param_count() as u64;
        summary.total_params += params;
        let matched = re.as_ref().is_some_and(|re| re.is_match(name));
        let result = match tensor {
            TensorData::Dense(d) if matched => {
                let w = d.matrix();
                let t = if cfg.calib_rounds > 0 {
                    let samples = CalibSampleSet::standard_normal(
                        cfg.calib_samples,
                        w.cols(),
                        fork_seed(cfg.seed, name),
                    );
                    alternate_rounds(w, cfg, &samples)?.tensor
                } else {
                    ternarize(w, cfg)?
                };
                TensorData::packed(pack(&t)?)
            }
            other => other.clone(),
        };
        if result.is_packed() {
            summary.quantized_params += params;
            summary.layers_quantized += 1;
        } else {
            summary.layers_passthrough += 1;
        }
        out.insert(name.clone(), result);
    }
    summary.quantized_fraction = if summary.total_params == 0 {
        0.0
    } else {
        summary.quantized_params as f64 / summary.total_params as f64
    };
    Ok((out, summary))
}
