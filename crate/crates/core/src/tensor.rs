//! The `UQT1` binary tensor format.
//!
//! Layout (all integers little-endian):
//!
//! | offset        | size        | content                                   |
//! |---------------|-------------|-------------------------------------------|
//! | 0             | 4           | magic `b"UQT1"`                           |
//! | 4             | 1           | dtype code: 0=f32, 1=f64, 2=u8, 3=i64     |
//! | 5             | 1           | ndim, 1..=5                               |
//! | 6             | 8 * ndim    | extents as u64                            |
//! | 6 + 8 * ndim  | numel * w   | row-major payload                         |
//!
//! Trailing bytes after the payload are rejected.

use std::fs;
use std::path::Path;

use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"UQT1";
pub const MAX_RANK: usize = 5;
const HEADER_FIXED: usize = 6;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("bad magic at byte offset {offset}: expected \"UQT1\"")]
    BadMagic { offset: usize },
    #[error("unknown dtype code {code} at byte offset {offset}")]
    UnknownDtype { code: u8, offset: usize },
    #[error("invalid rank {ndim} at byte offset {offset} (must be 1..=5)")]
    BadRank { ndim: usize, offset: usize },
    #[error("zero extent in dimension {axis} at byte offset {offset}")]
    ZeroExtent { axis: usize, offset: usize },
    #[error("truncated payload at byte offset {offset}: expected {expected} bytes, found {found}")]
    TruncatedPayload {
        offset: usize,
        expected: usize,
        found: usize,
    },
    #[error("{extra} trailing bytes after payload end at byte offset {offset}")]
    TrailingBytes { offset: usize, extra: usize },
    #[error("invalid tensor shape {dims:?}: {reason}")]
    BadShape { dims: Vec<usize>, reason: String },
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
    U8,
    I64,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
            DType::U8 => 2,
            DType::I64 => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DType::F32),
            1 => Some(DType::F64),
            2 => Some(DType::U8),
            3 => Some(DType::I64),
            _ => None,
        }
    }

    pub fn width(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
            DType::U8 => 1,
            DType::I64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U8(Vec<u8>),
    I64(Vec<i64>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
            TensorData::U8(v) => v.len(),
            TensorData::I64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
            TensorData::U8(_) => DType::U8,
            TensorData::I64(_) => DType::I64,
        }
    }
}

/// A dense row-major tensor. Construction enforces `product(dims) == len`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: TensorData,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: TensorData) -> Result<Self, TensorError> {
        if dims.is_empty() || dims.len() > MAX_RANK {
            return Err(TensorError::BadShape {
                reason: format!("rank must be 1..={MAX_RANK}"),
                dims,
            });
        }
        if dims.contains(&0) {
            return Err(TensorError::BadShape {
                reason: "every extent must be >= 1".into(),
                dims,
            });
        }
        let numel = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| TensorError::BadShape {
                reason: "element count overflows".into(),
                dims: dims.clone(),
            })?;
        if numel != data.len() {
            return Err(TensorError::BadShape {
                reason: format!("payload has {} elements, dims imply {numel}", data.len()),
                dims,
            });
        }
        Ok(Self { dims, data })
    }

    pub fn from_f64(dims: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        Self::new(dims, TensorData::F64(data))
    }

    pub fn from_f32(dims: Vec<usize>, data: Vec<f32>) -> Result<Self, TensorError> {
        Self::new(dims, TensorData::F32(data))
    }

    pub fn from_u8(dims: Vec<usize>, data: Vec<u8>) -> Result<Self, TensorError> {
        Self::new(dims, TensorData::U8(data))
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Payload widened to `f64` (lossless for f32/u8; i64 beyond 2^53 rounds).
    pub fn to_f64_vec(&self) -> Vec<f64> {
        match &self.data {
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::F64(v) => v.clone(),
            TensorData::U8(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::I64(v) => v.iter().map(|&x| x as f64).collect(),
        }
    }

    /// Integer payload as `i64`; `None` for floating dtypes.
    pub fn to_i64_vec(&self) -> Option<Vec<i64>> {
        match &self.data {
            TensorData::U8(v) => Some(v.iter().map(|&x| x as i64).collect()),
            TensorData::I64(v) => Some(v.clone()),
            _ => None,
        }
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_FIXED + 8 * self.dims.len() + self.numel() * self.dtype().width()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&MAGIC);
        out.push(self.dtype().code());
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        match &self.data {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::U8(v) => out.extend_from_slice(v),
            TensorData::I64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TensorError> {
        if bytes.len() < 4 || bytes[..4] != MAGIC {
            return Err(TensorError::BadMagic { offset: 0 });
        }
        if bytes.len() < HEADER_FIXED {
            return Err(TensorError::TruncatedPayload {
                offset: bytes.len(),
                expected: HEADER_FIXED,
                found: bytes.len(),
            });
        }
        let dtype = DType::from_code(bytes[4]).ok_or(TensorError::UnknownDtype {
            code: bytes[4],
            offset: 4,
        })?;
        let ndim = bytes[5] as usize;
        if ndim == 0 || ndim > MAX_RANK {
            return Err(TensorError::BadRank { ndim, offset: 5 });
        }
        let header_len = HEADER_FIXED + 8 * ndim;
        if bytes.len() < header_len {
            return Err(TensorError::TruncatedPayload {
                offset: bytes.len(),
                expected: header_len,
                found: bytes.len(),
            });
        }
        let mut dims = Vec::with_capacity(ndim);
        let mut numel = 1usize;
        for axis in 0..ndim {
            let at = HEADER_FIXED + 8 * axis;
            let extent = u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
            if extent == 0 {
                return Err(TensorError::ZeroExtent { axis, offset: at });
            }
            let extent = usize::try_from(extent).map_err(|_| TensorError::BadShape {
                dims: dims.clone(),
                reason: format!("extent {extent} does not fit in memory"),
            })?;
            numel = numel
                .checked_mul(extent)
                .ok_or_else(|| TensorError::BadShape {
                    dims: dims.clone(),
                    reason: "element count overflows".into(),
                })?;
            dims.push(extent);
        }
        let expected = numel
            .checked_mul(dtype.width())
            .ok_or_else(|| TensorError::BadShape {
                dims: dims.clone(),
                reason: "payload size overflows".into(),
            })?;
        let payload = &bytes[header_len..];
        if payload.len() < expected {
            return Err(TensorError::TruncatedPayload {
                offset: header_len,
                expected,
                found: payload.len(),
            });
        }
        if payload.len() > expected {
            return Err(TensorError::TrailingBytes {
                offset: header_len + expected,
                extra: payload.len() - expected,
            });
        }
        let data = match dtype {
            DType::F32 => TensorData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            DType::F64 => TensorData::F64(
                payload
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            DType::U8 => TensorData::U8(payload.to_vec()),
            DType::I64 => TensorData::I64(
                payload
                    .chunks_exact(8)
                    .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
        };
        Ok(Self { dims, data })
    }
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor, TensorError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| TensorError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Tensor::decode(&bytes)
}

pub fn write_tensor(t: &Tensor, path: impl AsRef<Path>) -> Result<(), TensorError> {
    let path = path.as_ref();
    fs::write(path, t.encode()).map_err(|source| TensorError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn header(dtype: u8, dims: &[u64]) -> Vec<u8> {
        let mut b = MAGIC.to_vec();
        b.push(dtype);
        b.push(dims.len() as u8);
        for d in dims {
            b.extend_from_slice(&d.to_le_bytes());
        }
        b
    }

    #[test]
    fn smallest_valid_file_decodes() {
        let mut bytes = header(0, &[2, 2]);
        for x in [1.0f32, 2.0, 3.0, 4.0] {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        let t = Tensor::decode(&bytes).unwrap();
        assert_eq!(t.dims(), &[2, 2]);
        assert_eq!(t.data(), &TensorData::F32(vec![1.0, 2.0, 3.0, 4.0]));
    }

    #[test]
    fn short_payload_is_truncated() {
        // dims [3,3] f32 needs 36 payload bytes; only 8 supplied.
        let mut bytes = header(0, &[3, 3]);
        bytes.extend_from_slice(&[0u8; 8]);
        match Tensor::decode(&bytes) {
            Err(TensorError::TruncatedPayload {
                offset,
                expected,
                found,
            }) => {
                assert_eq!(offset, 22);
                assert_eq!(expected, 36);
                assert_eq!(found, 8);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_dtype_are_reported() {
        assert!(matches!(
            Tensor::decode(b"UQT2\x00\x01"),
            Err(TensorError::BadMagic { offset: 0 })
        ));
        let bytes = header(9, &[1]);
        assert!(matches!(
            Tensor::decode(&bytes),
            Err(TensorError::UnknownDtype { code: 9, offset: 4 })
        ));
        let bytes = header(1, &[]);
        assert!(matches!(
            Tensor::decode(&bytes),
            Err(TensorError::BadRank { ndim: 0, offset: 5 })
        ));
    }

    #[test]
    fn zero_dim_rejected_before_write() {
        assert!(Tensor::from_f64(vec![], vec![]).is_err());
        assert!(Tensor::from_f64(vec![0, 3], vec![]).is_err());
        assert!(Tensor::from_f64(vec![2], vec![1.0]).is_err());
    }

    #[test]
    fn f64_60x8_file_size() {
        let t = Tensor::from_f64(vec![60, 8], vec![0.5; 480]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.uqt");
        write_tensor(&t, &p).unwrap();
        let len = std::fs::metadata(&p).unwrap().len();
        assert_eq!(len, 4 + 1 + 1 + 16 + 60 * 8 * 8);
    }

    #[test]
    fn writes_are_deterministic() {
        let t = Tensor::new(vec![3], TensorData::I64(vec![-1, 0, i64::MAX])).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        write_tensor(&t, &a).unwrap();
        write_tensor(&t, &b).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }

    fn arb_tensor() -> impl Strategy<Value = Tensor> {
        prop::collection::vec(1usize..4, 1..=5).prop_flat_map(|dims| {
            let n: usize = dims.iter().product();
            prop_oneof![
                prop::collection::vec(any::<u32>(), n)
                    .prop_map(|v| TensorData::F32(v.into_iter().map(f32::from_bits).collect())),
                prop::collection::vec(any::<u64>(), n)
                    .prop_map(|v| TensorData::F64(v.into_iter().map(f64::from_bits).collect())),
                prop::collection::vec(any::<u8>(), n).prop_map(TensorData::U8),
                prop::collection::vec(any::<i64>(), n).prop_map(TensorData::I64),
            ]
            .prop_map(move |data| Tensor::new(dims.clone(), data).unwrap())
        })
    }

    proptest! {
        #[test]
        fn round_trip_is_bitwise(t in arb_tensor()) {
            let bytes = t.encode();
            prop_assert_eq!(bytes.len(), t.encoded_len());
            let back = Tensor::decode(&bytes).unwrap();
            prop_assert_eq!(back.encode(), bytes);
            prop_assert_eq!(back.dims(), t.dims());
        }
    }
}
