//! The TQCK on-disk container: a mix of packed-ternary and passthrough
//! dense tensors, bit-exact and digest-protected.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! header (48 bytes)
//!   magic          "TQCK"                          4
//!   version        u32                             4
//!   record count   u64                             8
//!   index digest   sha256 of the index region     32
//! index, one entry per record, sorted by name
//!   name length    u32
//!   name           UTF-8 bytes
//!   encoding       u8   0 = dense-real, 1 = packed-ternary
//!   aux            u8   packed: granularity (0 per-row, 1 per-tensor)
//!                       dense:  element width in bytes (2, 4, or 8)
//!   rank           u32
//!   dims           u64 x rank
//!   data offset    u64  (64-byte aligned)
//!   data length    u64
//!   scale offset   u64  (packed only, else 0)
//!   scale length   u64  (packed only, else 0)
//!   payload digest sha256 of data ++ scale bytes  32
//! payload regions, each starting 64-byte aligned
//! ```
//!
//! Scales are serialized as f32. Per-record payload digests let a reader
//! verify a single tensor without touching the rest of the file; the header
//! digest covers the index (and through it, every payload digest).
//!
//! The writer serializes caller-supplied buffers verbatim; all validation
//! happens on the read side, which is the trust boundary for files.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, Read, Seek, SeekFrom, Write};
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bitpack::{packed_size_bytes, PackedTensor};
use crate::error::{Error, Result};
use crate::report::{CompressionReport, SCALE_WIDTH_BYTES};
use crate::ternary::{Granularity, WeightMatrix};

pub const MAGIC: [u8; 4] = *b"TQCK";
pub const FORMAT_VERSION: u32 = 1;
pub const ALIGNMENT: u64 = 64;
const HEADER_LEN: usize = 48;
const DIGEST_LEN: usize = 32;
/// Cap on serialized tensor names; keeps a corrupt length field from
/// forcing a huge allocation during parsing.
const MAX_NAME_LEN: usize = 4096;

/// Serialized element width of a dense tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RealWidth {
    F16,
    F32,
    F64,
}

impl RealWidth {
    pub fn bytes(self) -> usize {
        match self {
            RealWidth::F16 => 2,
            RealWidth::F32 => 4,
            RealWidth::F64 => 8,
        }
    }

    pub fn from_bytes(bytes: u8) -> Option<Self> {
        match bytes {
            2 => Some(RealWidth::F16),
            4 => Some(RealWidth::F32),
            8 => Some(RealWidth::F64),
            _ => None,
        }
    }
}

impl fmt::Display for RealWidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RealWidth::F16 => write!(f, "f16"),
            RealWidth::F32 => write!(f, "f32"),
            RealWidth::F64 => write!(f, "f64"),
        }
    }
}

/// A dense tensor bound to its serialized width. Construction rounds the
/// values to that width, so writing is lossless and a write/read round trip
/// is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    matrix: WeightMatrix,
    width: RealWidth,
}

impl DenseTensor {
    pub fn new(matrix: WeightMatrix, width: RealWidth) -> Result<Self> {
        let rounded: Vec<f64> = match width {
            RealWidth::F64 => return Ok(Self { matrix, width }),
            RealWidth::F32 => matrix.values().iter().map(|&v| v as f32 as f64).collect(),
            RealWidth::F16 => {
                matrix.values().iter().map(|&v| half::f16::from_f64(v).to_f64()).collect()
            }
        };
        // Values beyond the narrow type's range round to infinity.
        let matrix = WeightMatrix::new(matrix.rows(), matrix.cols(), rounded)?;
        Ok(Self { matrix, width })
    }

    pub fn matrix(&self) -> &WeightMatrix {
        &self.matrix
    }

    pub fn width(&self) -> RealWidth {
        self.width
    }

    fn encode(&self) -> Vec<u8> {
        let vals = self.matrix.values();
        match self.width {
            RealWidth::F16 => vals
                .iter()
                .flat_map(|&v| half::f16::from_f64(v).to_le_bytes())
                .collect(),
            RealWidth::F32 => vals.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect(),
            RealWidth::F64 => vals.iter().flat_map(|&v| v.to_le_bytes()).collect(),
        }
    }

    fn decode(rows: usize, cols: usize, width: RealWidth, bytes: &[u8]) -> Result<Self> {
        let mut values = Vec::with_capacity(rows * cols);
        match width {
            RealWidth::F16 => {
                for ch in bytes.chunks_exact(2) {
                    values.push(half::f16::from_le_bytes([ch[0], ch[1]]).to_f64());
                }
            }
            RealWidth::F32 => {
                for ch in bytes.chunks_exact(4) {
                    values.push(f32::from_le_bytes(ch.try_into().unwrap()) as f64);
                }
            }
            RealWidth::F64 => {
                for ch in bytes.chunks_exact(8) {
                    values.push(f64::from_le_bytes(ch.try_into().unwrap()));
                }
            }
        }
        Ok(Self { matrix: WeightMatrix::new(rows, cols, values)?, width })
    }
}

/// One named tensor: packed ternary or passthrough dense.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    Dense(DenseTensor),
    Packed(PackedTensor),
}

impl TensorData {
    /// Passthrough tensor at the given width.
    pub fn dense(matrix: WeightMatrix, width: RealWidth) -> Result<Self> {
        Ok(TensorData::Dense(DenseTensor::new(matrix, width)?))
    }

    pub fn packed(p: PackedTensor) -> Self {
        TensorData::Packed(p)
    }

    pub fn rows(&self) -> usize {
        match self {
            TensorData::Dense(d) => d.matrix.rows(),
            TensorData::Packed(p) => p.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            TensorData::Dense(d) => d.matrix.cols(),
            TensorData::Packed(p) => p.cols(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.rows() * self.cols()
    }

    pub fn is_packed(&self) -> bool {
        matches!(self, TensorData::Packed(_))
    }
}

/// Tensor encoding as stored in the index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Encoding {
    DenseReal,
    PackedTernary,
}

impl fmt::Display for Encoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Encoding::DenseReal => write!(f, "dense-real"),
            Encoding::PackedTernary => write!(f, "packed-ternary"),
        }
    }
}

/// Parsed index entry.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorRecord {
    pub name: String,
    pub encoding: Encoding,
    /// Granularity for packed records.
    pub granularity: Option<Granularity>,
    /// Element width for dense records.
    pub width: Option<RealWidth>,
    pub rows: u64,
    pub cols: u64,
    pub data_offset: u64,
    pub data_len: u64,
    pub scale_offset: u64,
    pub scale_len: u64,
    pub payload_digest: [u8; 32],
}

impl TensorRecord {
    pub fn param_count(&self) -> u64 {
        self.rows * self.cols
    }

    /// Total stored payload bytes for this record.
    pub fn stored_bytes(&self) -> u64 {
        self.data_len + self.scale_len
    }
}

fn align_up(v: u64) -> u64 {
    v.div_ceil(ALIGNMENT) * ALIGNMENT
}

fn encode_scales(scales: &[f32]) -> Vec<u8> {
    scales.iter().flat_map(|s| s.to_le_bytes()).collect()
}

fn index_entry_len(name: &str) -> u64 {
    // name_len + name + encoding + aux + rank + 2 dims + 4 offsets/lengths + digest
    (4 + name.len() + 1 + 1 + 4 + 16 + 32 + DIGEST_LEN) as u64
}

/// Write a tensor map as a TQCK file. Records are sorted by name and the
/// layout is fully determined by the input, so identical maps produce byte
/// identical files.
pub fn write_checkpoint(tensors: &BTreeMap<String, TensorData>, path: &Path) -> Result<()> {
    // First pass: region layout. BTreeMap iteration is already name-sorted.
    let index_len: u64 = tensors.keys().map(|n| index_entry_len(n)).sum();
    let mut cursor = align_up(HEADER_LEN as u64 + index_len);

    struct Planned<'a> {
        name: &'a str,
        tensor: &'a TensorData,
        data: Vec<u8>,
        scales: Vec<u8>,
        data_offset: u64,
        scale_offset: u64,
    }

    let mut planned = Vec::with_capacity(tensors.len());
    for (name, tensor) in tensors {
        if name.len() > MAX_NAME_LEN {
            return Err(Error::InvalidRecord {
                name: name.clone(),
                reason: format!("name exceeds the {MAX_NAME_LEN} byte cap"),
            });
        }
        let (data, scales) = match tensor {
            TensorData::Dense(d) => (d.encode(), Vec::new()),
            TensorData::Packed(p) => (p.bytes().to_vec(), encode_scales(p.scales())),
        };
        let data_offset = cursor;
        cursor = align_up(cursor + data.len() as u64);
        let scale_offset = if scales.is_empty() { 0 } else { cursor };
        if !scales.is_empty() {
            cursor = align_up(cursor + scales.len() as u64);
        }
        planned.push(Planned { name, tensor, data, scales, data_offset, scale_offset });
    }

    // Second pass: serialize the index.
    let mut index = Vec::with_capacity(index_len as usize);
    for p in &planned {
        index.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        index.extend_from_slice(p.name.as_bytes());
        match p.tensor {
            TensorData::Dense(d) => {
                index.push(0u8);
                index.push(d.width().bytes() as u8);
            }
            TensorData::Packed(t) => {
                index.push(1u8);
                index.push(match t.granularity() {
                    Granularity::PerRow => 0u8,
                    Granularity::PerTensor => 1u8,
                });
            }
        }
        index.extend_from_slice(&2u32.to_le_bytes());
        index.extend_from_slice(&(p.tensor.rows() as u64).to_le_bytes());
        index.extend_from_slice(&(p.tensor.cols() as u64).to_le_bytes());
        index.extend_from_slice(&p.data_offset.to_le_bytes());
        index.extend_from_slice(&(p.data.len() as u64).to_le_bytes());
        index.extend_from_slice(&p.scale_offset.to_le_bytes());
        index.extend_from_slice(&(p.scales.len() as u64).to_le_bytes());
        let mut hasher = Sha256::new();
        hasher.update(&p.data);
        hasher.update(&p.scales);
        index.extend_from_slice(&hasher.finalize());
    }
    debug_assert_eq!(index.len() as u64, index_len);

    let mut out = Vec::with_capacity(cursor as usize);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u64).to_le_bytes());
    out.extend_from_slice(&Sha256::digest(&index));
    out.extend_from_slice(&index);
    for p in &planned {
        out.resize(p.data_offset as usize, 0);
        out.extend_from_slice(&p.data);
        if !p.scales.is_empty() {
            out.resize(p.scale_offset as usize, 0);
            out.extend_from_slice(&p.scales);
        }
    }

    let mut file = File::create(path)?;
    file.write_all(&out)?;
    file.sync_all()?;
    Ok(())
}

/// Open checkpoint with a verified index; tensors are fetched on demand so a
/// single name can be read without loading the rest of the payload.
pub struct CheckpointReader {
    file: File,
    file_len: u64,
    records: Vec<TensorRecord>,
}

impl CheckpointReader {
    /// Parse and validate the header and index: magic, version, index
    /// digest, record ordering, and region bounds. Payload digests are
    /// checked when a tensor is actually read.
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let file_len = file.metadata()?.len();
        let mut reader = BufReader::new(file);

        let mut header = [0u8; HEADER_LEN];
        reader
            .read_exact(&mut header)
            .map_err(|_| Error::Truncated { what: "header".to_string() })?;
        let magic: [u8; 4] = header[0..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(Error::BadMagic { found: magic });
        }
        let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion { found: version });
        }
        let count = u64::from_le_bytes(header[8..16].try_into().unwrap());
        let stored_digest: [u8; 32] = header[16..48].try_into().unwrap();

        let mut index_bytes = Vec::new();
        let mut records = Vec::new();
        for _ in 0..count {
            records.push(parse_entry(&mut reader, &mut index_bytes)?);
        }
        let actual: [u8; 32] = Sha256::digest(&index_bytes).into();
        if actual != stored_digest {
            return Err(Error::DigestMismatch { region: "index".to_string() });
        }

        validate_records(&records, file_len)?;
        let file = reader.into_inner();
        Ok(Self { file, file_len, records })
    }

    pub fn records(&self) -> &[TensorRecord] {
        &self.records
    }

    pub fn record(&self, name: &str) -> Option<&TensorRecord> {
        self.records
            .binary_search_by(|r| r.name.as_str().cmp(name))
            .ok()
            .map(|i| &self.records[i])
    }

    /// Fetch one tensor, verifying its payload digest and decoding it.
    pub fn read_tensor(&mut self, name: &str) -> Result<TensorData> {
        let idx = self
            .records
            .binary_search_by(|r| r.name.as_str().cmp(name))
            .map_err(|_| Error::TensorNotFound { name: name.to_string() })?;
        let rec = self.records[idx].clone();

        let data = self.read_region(rec.data_offset, rec.data_len)?;
        let scales_raw = self.read_region(rec.scale_offset, rec.scale_len)?;
        let mut hasher = Sha256::new();
        hasher.update(&data);
        hasher.update(&scales_raw);
        let digest: [u8; 32] = hasher.finalize().into();
        if digest != rec.payload_digest {
            return Err(Error::DigestMismatch { region: rec.name.clone() });
        }

        let rows = rec.rows as usize;
        let cols = rec.cols as usize;
        match rec.encoding {
            Encoding::DenseReal => {
                let d = DenseTensor::decode(rows, cols, rec.width.unwrap(), &data)?;
                Ok(TensorData::Dense(d))
            }
            Encoding::PackedTernary => {
                let scales: Vec<f32> = scales_raw
                    .chunks_exact(4)
                    .map(|ch| f32::from_le_bytes(ch.try_into().unwrap()))
                    .collect();
                let p = PackedTensor::from_parts(
                    rows,
                    cols,
                    data,
                    scales,
                    rec.granularity.unwrap(),
                )?;
                p.validate()?;
                Ok(TensorData::Packed(p))
            }
        }
    }

    fn read_region(&mut self, offset: u64, len: u64) -> Result<Vec<u8>> {
        if len == 0 {
            return Ok(Vec::new());
        }
        self.file.seek(SeekFrom::Start(offset))?;
        let mut buf = vec![0u8; len as usize];
        self.file
            .read_exact(&mut buf)
            .map_err(|_| Error::Truncated { what: format!("region at {offset}") })?;
        Ok(buf)
    }

    pub fn file_len(&self) -> u64 {
        self.file_len
    }
}

fn parse_entry(reader: &mut impl Read, raw: &mut Vec<u8>) -> Result<TensorRecord> {
    let mut take = |n: usize, what: &str| -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        reader
            .read_exact(&mut buf)
            .map_err(|_| Error::Truncated { what: format!("index field {what}") })?;
        raw.extend_from_slice(&buf);
        Ok(buf)
    };

    let name_len = u32::from_le_bytes(take(4, "name length")?.try_into().unwrap()) as usize;
    if name_len > MAX_NAME_LEN {
        return Err(Error::InvalidRecord {
            name: "<unreadable>".to_string(),
            reason: format!("name length {name_len} exceeds the {MAX_NAME_LEN} byte cap"),
        });
    }
    let name_bytes = take(name_len, "name")?;
    let name = String::from_utf8(name_bytes).map_err(|_| Error::InvalidRecord {
        name: "<non-utf8>".to_string(),
        reason: "name is not valid UTF-8".to_string(),
    })?;
    let encoding_byte = take(1, "encoding")?[0];
    let aux = take(1, "aux")?[0];
    let rank = u32::from_le_bytes(take(4, "rank")?.try_into().unwrap());
    if !(1..=2).contains(&rank) {
        return Err(Error::InvalidRecord { name, reason: format!("unsupported rank {rank}") });
    }
    let mut dims = [1u64; 2];
    for d in dims.iter_mut().take(rank as usize) {
        *d = u64::from_le_bytes(take(8, "dim")?.try_into().unwrap());
    }
    let (rows, cols) = (dims[0], dims[1]);
    let data_offset = u64::from_le_bytes(take(8, "data offset")?.try_into().unwrap());
    let data_len = u64::from_le_bytes(take(8, "data length")?.try_into().unwrap());
    let scale_offset = u64::from_le_bytes(take(8, "scale offset")?.try_into().unwrap());
    let scale_len = u64::from_le_bytes(take(8, "scale length")?.try_into().unwrap());
    let payload_digest: [u8; 32] = take(DIGEST_LEN, "payload digest")?.try_into().unwrap();

    let (encoding, granularity, width) = match encoding_byte {
        0 => {
            let width = RealWidth::from_bytes(aux).ok_or_else(|| Error::InvalidRecord {
                name: name.clone(),
                reason: format!("bad dense element width {aux}"),
            })?;
            (Encoding::DenseReal, None, Some(width))
        }
        1 => {
            let granularity = match aux {
                0 => Granularity::PerRow,
                1 => Granularity::PerTensor,
                other => {
                    return Err(Error::InvalidRecord {
                        name,
                        reason: format!("bad granularity byte {other}"),
                    })
                }
            };
            (Encoding::PackedTernary, Some(granularity), None)
        }
        other => {
            return Err(Error::InvalidRecord {
                name,
                reason: format!("bad encoding byte {other}"),
            })
        }
    };

    Ok(TensorRecord {
        name,
        encoding,
        granularity,
        width,
        rows,
        cols,
        data_offset,
        data_len,
        scale_offset,
        scale_len,
        payload_digest,
    })
}

fn validate_records(records: &[TensorRecord], file_len: u64) -> Result<()> {
    let mut regions: Vec<(u64, u64)> = Vec::new();
    for pair in records.windows(2) {
        if pair[0].name >= pair[1].name {
            return Err(Error::InvalidRecord {
                name: pair[1].name.clone(),
                reason: "records not sorted by unique name".to_string(),
            });
        }
    }
    for rec in records {
        let params = rec.rows.checked_mul(rec.cols).ok_or_else(|| Error::InvalidRecord {
            name: rec.name.clone(),
            reason: "dimension overflow".to_string(),
        })?;
        match rec.encoding {
            Encoding::PackedTernary => {
                let expected = packed_size_bytes(rec.rows as usize, rec.cols as usize) as u64;
                if rec.data_len != expected {
                    return Err(Error::InvalidRecord {
                        name: rec.name.clone(),
                        reason: format!("packed length {} != expected {expected}", rec.data_len),
                    });
                }
                let groups = rec.granularity.unwrap().group_count(rec.rows as usize) as u64;
                if rec.scale_len != groups * SCALE_WIDTH_BYTES as u64 {
                    return Err(Error::InvalidRecord {
                        name: rec.name.clone(),
                        reason: format!("scale length {} != {} groups", rec.scale_len, groups),
                    });
                }
            }
            Encoding::DenseReal => {
                let expected = params * rec.width.unwrap().bytes() as u64;
                if rec.data_len != expected {
                    return Err(Error::InvalidRecord {
                        name: rec.name.clone(),
                        reason: format!("dense length {} != expected {expected}", rec.data_len),
                    });
                }
                if rec.scale_len != 0 || rec.scale_offset != 0 {
                    return Err(Error::InvalidRecord {
                        name: rec.name.clone(),
                        reason: "dense record carries scale region".to_string(),
                    });
                }
            }
        }
        for (offset, len, what) in [
            (rec.data_offset, rec.data_len, "data"),
            (rec.scale_offset, rec.scale_len, "scales"),
        ] {
            if len == 0 && offset == 0 {
                continue;
            }
            if offset % ALIGNMENT != 0 {
                return Err(Error::InvalidRecord {
                    name: rec.name.clone(),
                    reason: format!("{what} offset {offset} not {ALIGNMENT}-byte aligned"),
                });
            }
            let end = offset.checked_add(len).ok_or_else(|| Error::Truncated {
                what: format!("{} {what} region", rec.name),
            })?;
            if end > file_len {
                return Err(Error::Truncated { what: format!("{} {what} region", rec.name) });
            }
            if len > 0 {
                regions.push((offset, end));
            }
        }
    }
    regions.sort_unstable();
    for pair in regions.windows(2) {
        if pair[1].0 < pair[0].1 {
            return Err(Error::Truncated {
                what: format!("overlapping payload regions at {}", pair[1].0),
            });
        }
    }
    Ok(())
}

/// Load every tensor in the checkpoint.
pub fn read_checkpoint(path: &Path) -> Result<BTreeMap<String, TensorData>> {
    let mut reader = CheckpointReader::open(path)?;
    let names: Vec<String> = reader.records().iter().map(|r| r.name.clone()).collect();
    let mut out = BTreeMap::new();
    for name in names {
        let tensor = reader.read_tensor(&name)?;
        out.insert(name, tensor);
    }
    Ok(out)
}

/// Byte and parameter accounting from the index alone; payloads are not
/// loaded.
pub fn checkpoint_stats(path: &Path, baseline_width_bytes: usize) -> Result<CompressionReport> {
    let reader = CheckpointReader::open(path)?;
    let mut quantized_params = 0u64;
    let mut passthrough_params = 0u64;
    let mut packed_payload = 0u64;
    let mut scale_bytes = 0u64;
    let mut passthrough_bytes = 0u64;
    for rec in reader.records() {
        match rec.encoding {
            Encoding::PackedTernary => {
                quantized_params += rec.param_count();
                packed_payload += rec.data_len;
                scale_bytes += rec.scale_len;
            }
            Encoding::DenseReal => {
                passthrough_params += rec.param_count();
                passthrough_bytes += rec.data_len;
            }
        }
    }
    Ok(CompressionReport::from_classes(
        quantized_params,
        passthrough_params,
        packed_payload,
        scale_bytes,
        passthrough_bytes,
        baseline_width_bytes,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitpack::pack;
    use crate::ternary::TernaryTensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn packed_tensor(rows: usize, cols: usize, seed: u64) -> PackedTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let codes: Vec<i8> = (0..rows * cols).map(|_| rng.random_range(-1..=1)).collect();
        let scales: Vec<f32> = (0..rows).map(|_| rng.random_range(0.01..2.0f32)).collect();
        pack(&TernaryTensor::new(rows, cols, codes, scales, Granularity::PerRow).unwrap()).unwrap()
    }

    fn dense_tensor(rows: usize, cols: usize, width: RealWidth, seed: u64) -> DenseTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        DenseTensor::new(WeightMatrix::new(rows, cols, values).unwrap(), width).unwrap()
    }

    fn tmpfile(name: &str) -> std::path::PathBuf {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(name);
        std::mem::forget(dir); // keep alive for the test process
        path
    }

    #[test]
    fn empty_map_is_header_only() {
        let path = tmpfile("empty.tqck");
        write_checkpoint(&BTreeMap::new(), &path).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), HEADER_LEN as u64);
        let map = read_checkpoint(&path).unwrap();
        assert!(map.is_empty());
    }

    #[test]
    fn single_packed_record_layout() {
        let path = tmpfile("one.tqck");
        let mut map = BTreeMap::new();
        map.insert("w".to_string(), TensorData::packed(packed_tensor(4, 4, 1)));
        write_checkpoint(&map, &path).unwrap();

        let reader = CheckpointReader::open(&path).unwrap();
        assert_eq!(reader.records().len(), 1);
        let rec = &reader.records()[0];
        assert_eq!(rec.data_len, 4);
        assert_eq!(rec.scale_len, 16);
        assert_eq!(rec.data_offset % ALIGNMENT, 0);
        assert_eq!(rec.scale_offset % ALIGNMENT, 0);
    }

    #[test]
    fn mixed_map_round_trips() {
        let path = tmpfile("mixed.tqck");
        let mut map = BTreeMap::new();
        map.insert("a.packed".to_string(), TensorData::packed(packed_tensor(3, 7, 2)));
        map.insert("b.dense16".to_string(), TensorData::Dense(dense_tensor(2, 5, RealWidth::F16, 3)));
        map.insert("c.dense32".to_string(), TensorData::Dense(dense_tensor(4, 1, RealWidth::F32, 4)));
        map.insert("d.dense64".to_string(), TensorData::Dense(dense_tensor(1, 9, RealWidth::F64, 5)));
        map.insert("e.empty".to_string(), TensorData::packed(packed_tensor(0, 4, 6)));
        write_checkpoint(&map, &path).unwrap();
        let back = read_checkpoint(&path).unwrap();
        assert_eq!(back, map);
    }

    #[test]
    fn serialization_is_deterministic() {
        let mut map = BTreeMap::new();
        map.insert("x".to_string(), TensorData::packed(packed_tensor(5, 13, 7)));
        map.insert("y".to_string(), TensorData::Dense(dense_tensor(3, 3, RealWidth::F32, 8)));
        let p1 = tmpfile("d1.tqck");
        let p2 = tmpfile("d2.tqck");
        write_checkpoint(&map, &p1).unwrap();
        write_checkpoint(&map, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn single_tensor_read_without_full_load() {
        let path = tmpfile("pick.tqck");
        let mut map = BTreeMap::new();
        map.insert("first".to_string(), TensorData::packed(packed_tensor(2, 4, 9)));
        map.insert("second".to_string(), TensorData::Dense(dense_tensor(2, 2, RealWidth::F64, 10)));
        write_checkpoint(&map, &path).unwrap();

        let mut reader = CheckpointReader::open(&path).unwrap();
        let t = reader.read_tensor("second").unwrap();
        assert_eq!(&t, map.get("second").unwrap());
        assert!(matches!(
            reader.read_tensor("missing"),
            Err(Error::TensorNotFound { .. })
        ));
    }

    #[test]
    fn bad_magic_detected() {
        let path = tmpfile("magic.tqck");
        write_checkpoint(&BTreeMap::new(), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(CheckpointReader::open(&path), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn unsupported_version_detected() {
        let path = tmpfile("ver.tqck");
        write_checkpoint(&BTreeMap::new(), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 99;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            CheckpointReader::open(&path),
            Err(Error::UnsupportedVersion { found: 99 })
        ));
    }

    #[test]
    fn index_corruption_detected() {
        let path = tmpfile("idx.tqck");
        let mut map = BTreeMap::new();
        map.insert("w".to_string(), TensorData::packed(packed_tensor(4, 4, 11)));
        write_checkpoint(&map, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        // First index byte is the low byte of the name length; flip a name
        // character instead so the entry still parses.
        bytes[HEADER_LEN + 4] ^= 0x01;
        std::fs::write(&path, &bytes).unwrap();
        match CheckpointReader::open(&path) {
            Err(Error::DigestMismatch { region }) => assert_eq!(region, "index"),
            Err(other) => panic!("expected index digest mismatch, got {other:?}"),
            Ok(_) => panic!("index corruption not detected"),
        }
    }

    #[test]
    fn payload_corruption_detected() {
        let path = tmpfile("payload.tqck");
        let mut map = BTreeMap::new();
        map.insert("w".to_string(), TensorData::packed(packed_tensor(4, 4, 12)));
        write_checkpoint(&map, &path).unwrap();

        let reader = CheckpointReader::open(&path).unwrap();
        let offset = reader.records()[0].data_offset as usize;
        drop(reader);
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[offset] ^= 0xFF;
        std::fs::write(&path, &bytes).unwrap();

        match read_checkpoint(&path) {
            Err(Error::DigestMismatch { region }) => assert_eq!(region, "w"),
            other => panic!("expected payload digest mismatch, got {other:?}"),
        }
    }

    #[test]
    fn truncated_file_detected() {
        let path = tmpfile("trunc.tqck");
        let mut map = BTreeMap::new();
        map.insert("w".to_string(), TensorData::packed(packed_tensor(8, 17, 13)));
        write_checkpoint(&map, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
        assert!(matches!(CheckpointReader::open(&path), Err(Error::Truncated { .. })));
    }

    #[test]
    fn reserved_code_in_stored_payload_detected() {
        // from_parts does not inspect slot contents, so a buffer with the
        // reserved pattern can be written; the reader must reject it.
        let path = tmpfile("reserved.tqck");
        let bad = PackedTensor::from_parts(1, 4, vec![0x08], vec![1.0], Granularity::PerRow)
            .unwrap();
        let mut map = BTreeMap::new();
        map.insert("w".to_string(), TensorData::packed(bad));
        write_checkpoint(&map, &path).unwrap();
        match read_checkpoint(&path) {
            Err(Error::CorruptData { byte_offset: 0, slot: 1 }) => {}
            other => panic!("expected CorruptData, got {other:?}"),
        }
    }

    #[test]
    fn stats_all_dense_at_baseline_width_is_unity() {
        let path = tmpfile("dense.tqck");
        let mut map = BTreeMap::new();
        map.insert("a".to_string(), TensorData::Dense(dense_tensor(4, 6, RealWidth::F16, 14)));
        map.insert("b".to_string(), TensorData::Dense(dense_tensor(2, 3, RealWidth::F16, 15)));
        write_checkpoint(&map, &path).unwrap();
        let report = checkpoint_stats(&path, 2).unwrap();
        assert_eq!(report.ratio, 1.0);
        assert_eq!(report.quantized_fraction, 0.0);
    }

    #[test]
    fn stats_single_large_packed_tensor() {
        let path = tmpfile("big.tqck");
        let mut map = BTreeMap::new();
        map.insert("w".to_string(), TensorData::packed(packed_tensor(3072, 3072, 16)));
        write_checkpoint(&map, &path).unwrap();
        let report = checkpoint_stats(&path, 2).unwrap();
        let expected = (3072.0 * 3072.0 * 2.0) / (3072.0 * 768.0 + 3072.0 * 4.0);
        assert!((report.ratio - expected).abs() < 1e-9);
        assert!((report.ratio - 7.96).abs() < 0.01);
    }

    #[test]
    fn dense_widths_round_values_on_construction() {
        let w = WeightMatrix::new(1, 2, vec![0.1, -0.3]).unwrap();
        let d16 = DenseTensor::new(w.clone(), RealWidth::F16).unwrap();
        // 0.1 is not representable in f16; construction must have rounded.
        assert_ne!(d16.matrix().values()[0], 0.1);
        assert_eq!(d16.matrix().values()[0], half::f16::from_f64(0.1).to_f64());
        // Re-rounding is a no-op.
        let again = DenseTensor::new(d16.matrix().clone(), RealWidth::F16).unwrap();
        assert_eq!(again, d16);
    }

    #[test]
    fn dense_overflowing_width_is_rejected() {
        let w = WeightMatrix::new(1, 1, vec![1e10]).unwrap();
        assert!(matches!(
            DenseTensor::new(w, RealWidth::F16),
            Err(Error::NonFinite { .. })
        ));
    }
}
