//! Absmean ternarization: maps full-precision weight matrices to codes in
//! {-1, 0, +1} plus positive per-group scales.
//!
//! The scale of a group is the mean absolute value of its weights; each
//! weight then becomes `clamp(round(w / scale), -1, +1)` with
//! half-away-from-zero rounding. Groups are either one per output row
//! (default) or one per tensor. All-zero groups fall back to scale 1.0 so
//! they quantize to all-zero codes without dividing by zero.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scale grouping: one scale per output row, or a single scale per tensor.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Granularity {
    #[default]
    PerRow,
    PerTensor,
}

impl Granularity {
    /// Number of scale groups for a matrix with `rows` rows.
    pub fn group_count(self, rows: usize) -> usize {
        match self {
            Granularity::PerRow => rows,
            Granularity::PerTensor => 1,
        }
    }

    /// Scale group that row `row` belongs to.
    #[inline]
    pub fn group_of(self, row: usize) -> usize {
        match self {
            Granularity::PerRow => row,
            Granularity::PerTensor => 0,
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Granularity::PerRow => write!(f, "per-row"),
            Granularity::PerTensor => write!(f, "per-tensor"),
        }
    }
}

impl FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-row" => Ok(Granularity::PerRow),
            "per-tensor" => Ok(Granularity::PerTensor),
            other => Err(Error::InvalidConfig {
                reason: format!("unknown granularity {other:?}, expected per-row or per-tensor"),
            }),
        }
    }
}

/// Rounding rule for code assignment. Half-away-from-zero is the only rule:
/// it is symmetric around zero and keeps the three code levels unbiased.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rounding {
    #[default]
    HalfAwayFromZero,
}

/// Settings for a quantization pass.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuantConfig {
    pub granularity: Granularity,
    pub rounding: Rounding,
    /// Group means below this threshold use the fallback scale 1.0.
    pub zero_scale_epsilon: f64,
    /// Regular expression selecting tensor names to quantize. Empty selects
    /// nothing.
    pub layer_pattern: String,
    /// Calibration inputs per layer (used when `calib_rounds > 0`).
    pub calib_samples: usize,
    /// Rounds of code reassignment + scale refit. Zero means plain
    /// ternarization.
    pub calib_rounds: usize,
    pub seed: u64,
}

impl Default for QuantConfig {
    fn default() -> Self {
        Self {
            granularity: Granularity::PerRow,
            rounding: Rounding::HalfAwayFromZero,
            zero_scale_epsilon: 1e-12,
            layer_pattern: String::new(),
            calib_samples: 256,
            calib_rounds: 0,
            seed: 42,
        }
    }
}

impl QuantConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.zero_scale_epsilon.is_finite() || self.zero_scale_epsilon <= 0.0 {
            return Err(Error::InvalidConfig {
                reason: format!(
                    "zero_scale_epsilon must be positive and finite, got {}",
                    self.zero_scale_epsilon
                ),
            });
        }
        if self.calib_rounds > 0 && self.calib_samples == 0 {
            return Err(Error::InvalidConfig {
                reason: "calib_rounds > 0 requires calib_samples > 0".to_string(),
            });
        }
        Ok(())
    }
}

/// A dense weight matrix in row-major order. Values are finite f64.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl WeightMatrix {
    /// Build a matrix, checking the length and that every value is finite.
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        let expected = rows
            .checked_mul(cols)
            .ok_or(Error::InvalidDimensions { rows, cols, expected: usize::MAX, found: values.len() })?;
        if values.len() != expected {
            return Err(Error::InvalidDimensions { rows, cols, expected, found: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "weight matrix values" });
        }
        Ok(Self { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    /// One row as a slice.
    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }
}

/// Ternary codes plus per-group scales; the quantized form of a matrix.
/// The reconstructed weight is `scale_of(row) * code`.
#[derive(Debug, Clone, PartialEq)]
pub struct TernaryTensor {
    rows: usize,
    cols: usize,
    codes: Vec<i8>,
    scales: Vec<f32>,
    granularity: Granularity,
}

impl TernaryTensor {
    /// Build from parts, validating code range, scale count, and positivity.
    pub fn new(
        rows: usize,
        cols: usize,
        codes: Vec<i8>,
        scales: Vec<f32>,
        granularity: Granularity,
    ) -> Result<Self> {
        if codes.len() != rows * cols {
            return Err(Error::InvalidDimensions {
                rows,
                cols,
                expected: rows * cols,
                found: codes.len(),
            });
        }
        if let Some(pos) = codes.iter().position(|c| !matches!(c, -1..=1)) {
            return Err(Error::InvalidCode {
                value: codes[pos],
                row: pos.checked_div(cols).unwrap_or(0),
                col: pos.checked_rem(cols).unwrap_or(0),
            });
        }
        let expected = granularity.group_count(rows);
        if scales.len() != expected {
            return Err(Error::LengthMismatch {
                context: "scales",
                expected,
                found: scales.len(),
            });
        }
        if let Some(pos) = scales.iter().position(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::InvalidScale { value: scales[pos], group: pos });
        }
        Ok(Self { rows, cols, codes, scales, granularity })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn codes(&self) -> &[i8] {
        &self.codes
    }

    pub fn scales(&self) -> &[f32] {
        &self.scales
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    /// Scale applying to `row`.
    #[inline]
    pub fn scale_of(&self, row: usize) -> f32 {
        self.scales[self.granularity.group_of(row)]
    }

    #[inline]
    pub fn code(&self, row: usize, col: usize) -> i8 {
        self.codes[row * self.cols + col]
    }

    /// Replace all scales, keeping codes. Validates the new scales.
    pub fn with_scales(&self, scales: Vec<f32>) -> Result<Self> {
        Self::new(self.rows, self.cols, self.codes.clone(), scales, self.granularity)
    }
}

/// Mean absolute value per scale group, with the epsilon fallback.
///
/// Means are accumulated in f64 and stored as f32; the stored value is the
/// one later used as the divisor, so code assignment and dequantization see
/// exactly the same scale.
pub fn absmean_scale(
    w: &WeightMatrix,
    granularity: Granularity,
    zero_scale_epsilon: f64,
) -> Result<Vec<f32>> {
    let group_mean = |sum: f64, count: usize| -> Result<f32> {
        let mean = if count == 0 { 0.0 } else { sum / count as f64 };
        if !mean.is_finite() {
            return Err(Error::NonFinite { context: "absmean scale" });
        }
        Ok(if mean < zero_scale_epsilon { 1.0 } else { mean as f32 })
    };
    match granularity {
        Granularity::PerRow => (0..w.rows())
            .map(|r| {
                let sum: f64 = w.row(r).iter().map(|v| v.abs()).sum();
                group_mean(sum, w.cols())
            })
            .collect(),
        Granularity::PerTensor => {
            let sum: f64 = w.values().iter().map(|v| v.abs()).sum();
            Ok(vec![group_mean(sum, w.values().len())?])
        }
    }
}

/// Quantize a matrix: absmean scales, then per-element
/// `clamp(round(w / scale), -1, +1)`.
pub fn ternarize(w: &WeightMatrix, cfg: &QuantConfig) -> Result<TernaryTensor> {
    cfg.validate()?;
    let scales = absmean_scale(w, cfg.granularity, cfg.zero_scale_epsilon)?;
    let t = assign_codes(w, &scales, cfg.granularity);
    TernaryTensor::new(w.rows(), w.cols(), t, scales, cfg.granularity)
}

/// Code assignment under fixed scales. `f64::round` is half-away-from-zero,
/// which is the `Rounding::HalfAwayFromZero` rule.
pub(crate) fn assign_codes(w: &WeightMatrix, scales: &[f32], granularity: Granularity) -> Vec<i8> {
    let mut codes = Vec::with_capacity(w.rows() * w.cols());
    for r in 0..w.rows() {
        let s = scales[granularity.group_of(r)] as f64;
        for &v in w.row(r) {
            codes.push((v / s).round().clamp(-1.0, 1.0) as i8);
        }
    }
    codes
}

/// Reconstruct the approximate weights `scale_of(row) * code`.
pub fn dequantize(t: &TernaryTensor) -> WeightMatrix {
    let mut values = Vec::with_capacity(t.rows() * t.cols());
    for r in 0..t.rows() {
        let s = t.scale_of(r) as f64;
        for c in 0..t.cols() {
            values.push(s * t.code(r, c) as f64);
        }
    }
    WeightMatrix { rows: t.rows(), cols: t.cols(), values }
}

/// Elementwise reconstruction error between a matrix and its quantized form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuantizationError {
    pub max_abs_error: f64,
    pub mse: f64,
}

/// Max absolute and mean squared difference between `w` and `dequantize(t)`.
pub fn quantization_error(w: &WeightMatrix, t: &TernaryTensor) -> Result<QuantizationError> {
    if w.rows() != t.rows() || w.cols() != t.cols() {
        return Err(Error::ShapeMismatch {
            expected_rows: w.rows(),
            expected_cols: w.cols(),
            found_rows: t.rows(),
            found_cols: t.cols(),
        });
    }
    let mut max_abs = 0.0f64;
    let mut sq_sum = 0.0f64;
    for r in 0..w.rows() {
        let s = if t.rows() == 0 { 0.0 } else { t.scale_of(r) as f64 };
        for c in 0..w.cols() {
            let diff = w.get(r, c) - s * t.code(r, c) as f64;
            max_abs = max_abs.max(diff.abs());
            sq_sum += diff * diff;
        }
    }
    let n = w.rows() * w.cols();
    let mse = if n == 0 { 0.0 } else { sq_sum / n as f64 };
    Ok(QuantizationError { max_abs_error: max_abs, mse })
}
