//! Matrix-vector products straight from the packed representation:
//! `y[r] = scale_of(r) * sum_c codes[r,c] * x[c]`, computed with additions
//! and subtractions only. Activations stay full precision.
//!
//! Two decode paths share one accumulation discipline (f64, strictly
//! left-to-right per row), so their outputs are required to be bit
//! identical; only the slot decoding differs. `dense_matvec` uses the same
//! discipline and serves as the comparison baseline.

use std::sync::OnceLock;

use crate::bitpack::{row_bytes, PackedTensor};
use crate::error::{Error, Result};
use crate::ternary::WeightMatrix;

/// Dense reference product with the same left-to-right accumulation order
/// as the packed paths. `x.len()` must equal `w.cols()`.
pub fn dense_matvec(w: &WeightMatrix, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != w.cols() {
        return Err(Error::LengthMismatch {
            context: "activation length",
            expected: w.cols(),
            found: x.len(),
        });
    }
    let mut out = Vec::with_capacity(w.rows());
    for r in 0..w.rows() {
        let mut acc = 0.0f64;
        for (wv, xv) in w.row(r).iter().zip(x) {
            acc += wv * xv;
        }
        out.push(acc);
    }
    Ok(out)
}

/// Byte-level decode table: entry `b` holds the four codes packed in byte
/// `b`, plus a bitmask of slots that hold the reserved pattern.
pub struct DecodeLut {
    codes: [[i8; 4]; 256],
    reserved: [u8; 256],
}

impl DecodeLut {
    pub fn new() -> Self {
        let mut codes = [[0i8; 4]; 256];
        let mut reserved = [0u8; 256];
        for byte in 0..256usize {
            for (slot, code) in codes[byte].iter_mut().enumerate() {
                match (byte >> (2 * slot)) & 0b11 {
                    0b00 => *code = 0,
                    0b01 => *code = 1,
                    0b11 => *code = -1,
                    _ => reserved[byte] |= 1 << slot,
                }
            }
        }
        Self { codes, reserved }
    }

    /// Shared table, built on first use.
    pub fn global() -> &'static DecodeLut {
        static LUT: OnceLock<DecodeLut> = OnceLock::new();
        LUT.get_or_init(DecodeLut::new)
    }

    #[inline]
    pub fn codes_of(&self, byte: u8) -> &[i8; 4] {
        &self.codes[byte as usize]
    }

    /// Bitmask of slots in `byte` holding the reserved pattern.
    #[inline]
    pub fn reserved_slots(&self, byte: u8) -> u8 {
        self.reserved[byte as usize]
    }
}

impl Default for DecodeLut {
    fn default() -> Self {
        Self::new()
    }
}

fn check_len(p: &PackedTensor, x: &[f64]) -> Result<()> {
    if x.len() != p.cols() {
        return Err(Error::LengthMismatch {
            context: "activation length",
            expected: p.cols(),
            found: x.len(),
        });
    }
    Ok(())
}

/// GEMV decoding each slot by bit arithmetic.
pub fn gemv_reference(p: &PackedTensor, x: &[f64]) -> Result<Vec<f64>> {
    check_len(p, x)?;
    let rb = row_bytes(p.cols());
    let mut out = Vec::with_capacity(p.rows());
    for row in 0..p.rows() {
        let row_buf = p.row_bytes_of(row);
        let mut acc = 0.0f64;
        for (i, &byte) in row_buf.iter().enumerate() {
            let base = i * 4;
            let occupied = (p.cols() - base).min(4);
            for slot in 0..occupied {
                match (byte >> (2 * slot)) & 0b11 {
                    0b00 => {}
                    0b01 => acc += x[base + slot],
                    0b11 => acc -= x[base + slot],
                    _ => {
                        return Err(Error::CorruptData { byte_offset: row * rb + i, slot });
                    }
                }
            }
        }
        out.push(p.scale_of(row) as f64 * acc);
    }
    Ok(out)
}

/// GEMV decoding whole bytes through the lookup table. Produces exactly the
/// bits of [`gemv_reference`]: same additions, same order.
pub fn gemv_lut(p: &PackedTensor, x: &[f64], lut: &DecodeLut) -> Result<Vec<f64>> {
    check_len(p, x)?;
    let rb = row_bytes(p.cols());
    let mut out = Vec::with_capacity(p.rows());
    for row in 0..p.rows() {
        let row_buf = p.row_bytes_of(row);
        let mut acc = 0.0f64;
        for (i, &byte) in row_buf.iter().enumerate() {
            let base = i * 4;
            let occupied = (p.cols() - base).min(4);
            let occupied_mask = if occupied == 4 { 0b1111 } else { (1u8 << occupied) - 1 };
            let bad = lut.reserved_slots(byte) & occupied_mask;
            if bad != 0 {
                return Err(Error::CorruptData {
                    byte_offset: row * rb + i,
                    slot: bad.trailing_zeros() as usize,
                });
            }
            let codes = lut.codes_of(byte);
            for slot in 0..occupied {
                match codes[slot] {
                    1 => acc += x[base + slot],
                    -1 => acc -= x[base + slot],
                    _ => {}
                }
            }
        }
        out.push(p.scale_of(row) as f64 * acc);
    }
    Ok(out)
}

/// Batched GEMV: output `j` is `gemv(p, xs[j])`. Rows are independent, so a
/// caller may also split the batch across workers; the result does not
/// depend on any partitioning.
pub fn gemm(p: &PackedTensor, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let lut = DecodeLut::global();
    xs.iter().map(|x| gemv_lut(p, x, lut)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitpack::pack;
    use crate::ternary::{dequantize, Granularity, TernaryTensor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn packed(rows: usize, cols: usize, codes: &[i8], scales: &[f32]) -> PackedTensor {
        let t = TernaryTensor::new(rows, cols, codes.to_vec(), scales.to_vec(), Granularity::PerRow)
            .unwrap();
        pack(&t).unwrap()
    }

    fn random_packed(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> PackedTensor {
        let codes: Vec<i8> = (0..rows * cols).map(|_| rng.random_range(-1..=1)).collect();
        let scales: Vec<f32> = (0..rows).map(|_| rng.random_range(0.01..4.0f32)).collect();
        packed(rows, cols, &codes, &scales)
    }

    #[test]
    fn gemv_hand_example() {
        // T = [[1,-1,0],[0,1,1]], s = [0.5, 2.0], x = [1,2,3]
        // raw sums [-1, 5] -> out [-0.5, 10.0]
        let p = packed(2, 3, &[1, -1, 0, 0, 1, 1], &[0.5, 2.0]);
        let x = [1.0, 2.0, 3.0];
        let y = gemv_reference(&p, &x).unwrap();
        assert_eq!(y, vec![-0.5, 10.0]);
        // Cross-check against the dense path on dequantized weights.
        let dense = dense_matvec(&dequantize(&unpackable(&p)), &x).unwrap();
        for (a, b) in y.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    fn unpackable(p: &PackedTensor) -> TernaryTensor {
        crate::bitpack::unpack(p).unwrap()
    }

    #[test]
    fn gemv_zero_codes_give_zero_output() {
        let p = packed(3, 6, &[0; 18], &[1.0, 2.0, 3.0]);
        let x = [9.0, -1.0, 0.5, 2.0, 2.0, 2.0];
        assert_eq!(gemv_reference(&p, &x).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn gemv_identity_pattern_returns_input() {
        let n = 5;
        let mut codes = vec![0i8; n * n];
        for i in 0..n {
            codes[i * n + i] = 1;
        }
        let p = packed(n, n, &codes, &vec![1.0; n]);
        let x: Vec<f64> = (0..n).map(|i| i as f64 - 2.0).collect();
        assert_eq!(gemv_reference(&p, &x).unwrap(), x);
    }

    #[test]
    fn gemv_single_byte_row() {
        let p = packed(1, 4, &[1, -1, 0, 1], &[1.0]);
        let y = gemv_lut(&p, &[1.0, 1.0, 1.0, 1.0], DecodeLut::global()).unwrap();
        assert_eq!(y, vec![1.0]);
    }

    #[test]
    fn gemv_empty_matrix() {
        let p = packed(0, 4, &[], &[]);
        assert!(gemv_reference(&p, &[0.0; 4]).unwrap().is_empty());
        assert!(gemv_lut(&p, &[0.0; 4], DecodeLut::global()).unwrap().is_empty());
    }

    #[test]
    fn gemv_rejects_length_mismatch() {
        let p = packed(1, 4, &[0; 4], &[1.0]);
        assert!(matches!(
            gemv_reference(&p, &[1.0, 2.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn both_paths_reject_corrupt_bytes_identically() {
        let p = PackedTensor::from_parts(1, 4, vec![0x08], vec![1.0], Granularity::PerRow).unwrap();
        let x = [1.0; 4];
        let a = gemv_reference(&p, &x);
        let b = gemv_lut(&p, &x, DecodeLut::global());
        match (a, b) {
            (
                Err(Error::CorruptData { byte_offset: o1, slot: s1 }),
                Err(Error::CorruptData { byte_offset: o2, slot: s2 }),
            ) => {
                assert_eq!((o1, s1), (0, 1));
                assert_eq!((o2, s2), (0, 1));
            }
            other => panic!("expected matching CorruptData, got {other:?}"),
        }
    }

    #[test]
    fn lut_decodes_every_packable_byte() {
        let lut = DecodeLut::new();
        let vals = [-1i8, 0, 1];
        for &a in &vals {
            for &b in &vals {
                for &c in &vals {
                    for &d in &vals {
                        let p = packed(1, 4, &[a, b, c, d], &[1.0]);
                        let byte = p.bytes()[0];
                        assert_eq!(lut.codes_of(byte), &[a, b, c, d]);
                        assert_eq!(lut.reserved_slots(byte), 0);
                    }
                }
            }
        }
    }

    #[test]
    fn lut_flags_reserved_slots() {
        let lut = DecodeLut::new();
        assert_eq!(lut.reserved_slots(0b10), 0b0001);
        assert_eq!(lut.reserved_slots(0b10_00_00_00), 0b1000);
        assert_eq!(lut.reserved_slots(0x00), 0);
    }

    #[test]
    fn paths_agree_bitwise_and_match_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let rows = rng.random_range(0..12);
            let cols = rng.random_range(0..40);
            let p = random_packed(&mut rng, rows, cols);
            let x: Vec<f64> = (0..cols).map(|_| rng.random_range(-2.0..2.0)).collect();

            let a = gemv_reference(&p, &x).unwrap();
            let b = gemv_lut(&p, &x, DecodeLut::global()).unwrap();
            let bits_a: Vec<u64> = a.iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = b.iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);

            let dense = dense_matvec(&dequantize(&unpackable(&p)), &x).unwrap();
            let max_x = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let max_s = p.scales().iter().fold(0.0f32, |m, v| m.max(*v)) as f64;
            let tol = 1e-9 * (cols as f64 * max_x * max_s).max(f64::MIN_POSITIVE);
            for (ya, yd) in a.iter().zip(&dense) {
                assert!((ya - yd).abs() <= tol, "{ya} vs {yd} tol {tol}");
            }
        }
    }

    #[test]
    fn gemv_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_packed(&mut rng, 8, 21);
        let x: Vec<f64> = (0..21).map(|_| rng.random_range(-1.0..1.0)).collect();
        let z: Vec<f64> = (0..21).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (alpha, beta) = (0.7, -1.3);
        let combo: Vec<f64> = x.iter().zip(&z).map(|(a, b)| alpha * a + beta * b).collect();

        let y_combo = gemv_reference(&p, &combo).unwrap();
        let yx = gemv_reference(&p, &x).unwrap();
        let yz = gemv_reference(&p, &z).unwrap();
        let max_s = p.scales().iter().fold(0.0f32, |m, v| m.max(*v)) as f64;
        let tol = 1e-9 * 21.0 * 2.0 * max_s;
        for i in 0..8 {
            assert!((y_combo[i] - (alpha * yx[i] + beta * yz[i])).abs() <= tol);
        }
    }

    #[test]
    fn gemm_matches_per_column_gemv_and_selects_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_packed(&mut rng, 6, 9);

        // Batch of one equals gemv.
        let x: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
        let batch = gemm(&p, std::slice::from_ref(&x)).unwrap();
        assert_eq!(batch.len(), 1);
        assert_eq!(batch[0], gemv_reference(&p, &x).unwrap());

        // Identity batch reads out the dequantized matrix column by column.
        let eye: Vec<Vec<f64>> = (0..9)
            .map(|j| (0..9).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let cols_out = gemm(&p, &eye).unwrap();
        let w = dequantize(&unpackable(&p));
        for (j, col) in cols_out.iter().enumerate() {
            for (r, v) in col.iter().enumerate() {
                assert!((v - w.get(r, j)).abs() < 1e-12);
            }
        }

        // Empty batch.
        assert!(gemm(&p, &[]).unwrap().is_empty());
    }

    #[test]
    fn repeated_calls_are_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let p = random_packed(&mut rng, 4, 13);
        let x: Vec<f64> = (0..13).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = gemv_reference(&p, &x).unwrap();
        let b = gemv_reference(&p, &x).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}
