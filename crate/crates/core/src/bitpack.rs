//! Bit-exact codec between ternary codes and the 2-bit packed byte form.
//!
//! Each byte holds 4 codes in two's-complement 2-bit slots, least
//! significant slot first:
//!
//! ```text
//! code  bits
//!  +1   0b01
//!   0   0b00
//!  -1   0b11
//!        0b10  reserved; never written, rejected on decode
//! ```
//!
//! Code `i` of a row occupies bits `2i..2i+1` of byte `i / 4`. Rows are
//! padded independently to a 4-code boundary with 0b00, so every row starts
//! on a byte boundary and `bytes.len() == rows * ceil(cols / 4)`.

use crate::error::{Error, Result};
use crate::ternary::{Granularity, TernaryTensor};

/// Bit pattern that never encodes a code. Doubles as a corruption detector.
pub const RESERVED_BITS: u8 = 0b10;

/// Packed bytes per row for `cols` logical codes.
#[inline]
pub fn row_bytes(cols: usize) -> usize {
    cols.div_ceil(4)
}

/// Total packed payload size in bytes: `rows * ceil(cols / 4)`.
#[inline]
pub fn packed_size_bytes(rows: usize, cols: usize) -> usize {
    rows * row_bytes(cols)
}

#[inline]
fn encode_code(code: i8) -> Option<u8> {
    match code {
        0 => Some(0b00),
        1 => Some(0b01),
        -1 => Some(0b11),
        _ => None,
    }
}

#[inline]
fn decode_bits(bits: u8) -> Option<i8> {
    match bits & 0b11 {
        0b00 => Some(0),
        0b01 => Some(1),
        0b11 => Some(-1),
        _ => None, // 0b10 reserved
    }
}

/// The 2-bit packed form of a ternary tensor: byte payload plus the scales
/// carried through unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedTensor {
    rows: usize,
    cols: usize,
    bytes: Vec<u8>,
    scales: Vec<f32>,
    granularity: Granularity,
}

impl PackedTensor {
    /// Assemble from raw parts. Checks buffer and scale lengths and scale
    /// positivity; slot contents are checked by [`unpack`] and
    /// [`PackedTensor::validate`], not here.
    pub fn from_parts(
        rows: usize,
        cols: usize,
        bytes: Vec<u8>,
        scales: Vec<f32>,
        granularity: Granularity,
    ) -> Result<Self> {
        let expected = packed_size_bytes(rows, cols);
        if bytes.len() != expected {
            return Err(Error::LengthMismatch {
                context: "packed bytes",
                expected,
                found: bytes.len(),
            });
        }
        let groups = granularity.group_count(rows);
        if scales.len() != groups {
            return Err(Error::LengthMismatch {
                context: "packed scales",
                expected: groups,
                found: scales.len(),
            });
        }
        if let Some(pos) = scales.iter().position(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::InvalidScale { value: scales[pos], group: pos });
        }
        Ok(Self { rows, cols, bytes, scales, granularity })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn scales(&self) -> &[f32] {
        &self.scales
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    #[inline]
    pub fn scale_of(&self, row: usize) -> f32 {
        self.scales[self.granularity.group_of(row)]
    }

    /// Bytes of one row's packed codes.
    #[inline]
    pub fn row_bytes_of(&self, row: usize) -> &[u8] {
        let rb = row_bytes(self.cols);
        &self.bytes[row * rb..(row + 1) * rb]
    }

    /// Logical parameter count (excludes padding slots).
    pub fn param_count(&self) -> usize {
        self.rows * self.cols
    }

    /// Scan the whole payload: reserved bits in occupied slots and nonzero
    /// padding are both corruption. Reports the absolute byte offset.
    pub fn validate(&self) -> Result<()> {
        let rb = row_bytes(self.cols);
        for row in 0..self.rows {
            for (i, &byte) in self.row_bytes_of(row).iter().enumerate() {
                let byte_offset = row * rb + i;
                for slot in 0..4 {
                    let col = i * 4 + slot;
                    let bits = (byte >> (2 * slot)) & 0b11;
                    if col < self.cols {
                        if bits == RESERVED_BITS {
                            return Err(Error::CorruptData { byte_offset, slot });
                        }
                    } else if bits != 0 {
                        return Err(Error::CorruptData { byte_offset, slot });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Pack a ternary tensor into 2-bit slots, 4 codes per byte, rows padded
/// independently with 0b00.
pub fn pack(t: &TernaryTensor) -> Result<PackedTensor> {
    let rb = row_bytes(t.cols());
    let mut bytes = vec![0u8; t.rows() * rb];
    for row in 0..t.rows() {
        for col in 0..t.cols() {
            let code = t.code(row, col);
            let bits = encode_code(code)
                .ok_or(Error::InvalidCode { value: code, row, col })?;
            bytes[row * rb + col / 4] |= bits << (2 * (col % 4));
        }
    }
    PackedTensor::from_parts(t.rows(), t.cols(), bytes, t.scales().to_vec(), t.granularity())
}

/// Decode back to a ternary tensor. Exact inverse of [`pack`] on the logical
/// region; padding bits are ignored. A reserved pattern in an occupied slot
/// is a [`Error::CorruptData`] with the byte offset and slot index.
pub fn unpack(p: &PackedTensor) -> Result<TernaryTensor> {
    let rb = row_bytes(p.cols());
    let mut codes = Vec::with_capacity(p.rows() * p.cols());
    for row in 0..p.rows() {
        let row_buf = p.row_bytes_of(row);
        for col in 0..p.cols() {
            let byte = row_buf[col / 4];
            let slot = col % 4;
            let code = decode_bits(byte >> (2 * slot)).ok_or(Error::CorruptData {
                byte_offset: row * rb + col / 4,
                slot,
            })?;
            codes.push(code);
        }
    }
    TernaryTensor::new(p.rows(), p.cols(), codes, p.scales().to_vec(), p.granularity())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ternary::Granularity;

    fn tt(rows: usize, cols: usize, codes: &[i8]) -> TernaryTensor {
        TernaryTensor::new(rows, cols, codes.to_vec(), vec![1.0; rows], Granularity::PerRow)
            .unwrap()
    }

    #[test]
    fn pack_single_row_bit_layout() {
        // [+1, -1, 0, +1] -> bits 7..0 = 01 00 11 01 = 0x4D.
        let p = pack(&tt(1, 4, &[1, -1, 0, 1])).unwrap();
        assert_eq!(p.bytes(), &[0x4D]);
    }

    #[test]
    fn pack_zeros_are_zero_bytes() {
        let p = pack(&tt(3, 5, &[0; 15])).unwrap();
        assert!(p.bytes().iter().all(|&b| b == 0));
        assert_eq!(p.bytes().len(), 3 * 2);
    }

    #[test]
    fn pack_pads_final_byte_with_zero_bits() {
        let p = pack(&tt(1, 5, &[1, 1, 1, 1, -1])).unwrap();
        assert_eq!(p.bytes().len(), 2);
        // Second byte: slot 0 = -1 (0b11), slots 1..3 padding.
        assert_eq!(p.bytes()[1] & !0b11, 0);
        assert_eq!(p.bytes()[1] & 0b11, 0b11);
    }

    #[test]
    fn unpack_inverts_pack_example() {
        let p = PackedTensor::from_parts(1, 4, vec![0x4D], vec![1.0], Granularity::PerRow).unwrap();
        let t = unpack(&p).unwrap();
        assert_eq!(t.codes(), &[1, -1, 0, 1]);
    }

    #[test]
    fn unpack_rejects_reserved_bits_with_location() {
        // 0x08 = slot 1 holds 0b10.
        let p = PackedTensor::from_parts(1, 4, vec![0x08], vec![1.0], Granularity::PerRow).unwrap();
        match unpack(&p) {
            Err(Error::CorruptData { byte_offset: 0, slot: 1 }) => {}
            other => panic!("expected CorruptData at byte 0 slot 1, got {other:?}"),
        }
    }

    #[test]
    fn unpack_ignores_padding_content() {
        // cols = 2: slots 2 and 3 of the byte are padding. A reserved
        // pattern there is invisible to unpack (validate flags it).
        let bytes = vec![0b10_00_01_11u8]; // slot0=-1, slot1=+1, slot3=reserved
        let p = PackedTensor::from_parts(1, 2, bytes, vec![1.0], Granularity::PerRow).unwrap();
        let t = unpack(&p).unwrap();
        assert_eq!(t.codes(), &[-1, 1]);
        assert!(matches!(p.validate(), Err(Error::CorruptData { byte_offset: 0, slot: 3 })));
    }

    #[test]
    fn validate_accepts_packed_output() {
        let t = tt(2, 7, &[1, 0, -1, 1, 1, -1, 0, 0, 1, -1, -1, 0, 1, 0]);
        let p = pack(&t).unwrap();
        p.validate().unwrap();
    }

    #[test]
    fn packed_size_examples() {
        assert_eq!(packed_size_bytes(3072, 3072), 2_359_296);
        assert_eq!(packed_size_bytes(1, 5), 2);
        assert_eq!(packed_size_bytes(0, 9), 0);
        assert_eq!(packed_size_bytes(4, 0), 0);
    }

    #[test]
    fn from_parts_checks_lengths() {
        assert!(matches!(
            PackedTensor::from_parts(1, 5, vec![0u8; 1], vec![1.0], Granularity::PerRow),
            Err(Error::LengthMismatch { context: "packed bytes", .. })
        ));
        assert!(matches!(
            PackedTensor::from_parts(2, 4, vec![0u8; 2], vec![1.0], Granularity::PerRow),
            Err(Error::LengthMismatch { context: "packed scales", .. })
        ));
        assert!(matches!(
            PackedTensor::from_parts(1, 4, vec![0u8; 1], vec![-2.0], Granularity::PerRow),
            Err(Error::InvalidScale { .. })
        ));
    }

    #[test]
    fn density_is_two_bits_per_code_up_to_row_padding() {
        for cols in 1..40usize {
            let rows = 3;
            let bytes = packed_size_bytes(rows, cols) as f64;
            let codes = (rows * cols) as f64;
            assert!(bytes / codes <= 0.25 * (1.0 + 3.0 / cols as f64) + 1e-12, "cols={cols}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_tensor() -> impl Strategy<Value = TernaryTensor> {
            (0usize..8, 0usize..33).prop_flat_map(|(rows, cols)| {
                (
                    proptest::collection::vec(prop_oneof![Just(-1i8), Just(0i8), Just(1i8)], rows * cols),
                    proptest::collection::vec(0.001f32..100.0, rows),
                    Just((rows, cols)),
                )
                    .prop_map(|(codes, scales, (rows, cols))| {
                        TernaryTensor::new(rows, cols, codes, scales, Granularity::PerRow).unwrap()
                    })
            })
        }

        proptest! {
            #[test]
            fn round_trip_identity(t in arb_tensor()) {
                let p = pack(&t).unwrap();
                prop_assert_eq!(p.bytes().len(), packed_size_bytes(t.rows(), t.cols()));
                p.validate().unwrap();
                let back = unpack(&p).unwrap();
                prop_assert_eq!(back, t);
            }
        }
    }
}
