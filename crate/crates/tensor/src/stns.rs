//! STNS binary tensor container.
//!
//! Layout: the magic bytes `STNS`, a little-endian `u32` header length, the
//! UTF-8 header `"<dtype> <extent> <extent> ..."` (dtype one of `f32`, `f64`,
//! `u8`), then the row-major payload in little-endian element order.
//! Round-trips are bit-exact.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::dtype::{Dtype, Scalar};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"STNS";

#[derive(Debug, Error)]
pub enum StnsError {
    #[error("bad magic at offset 0 (not an STNS file)")]
    BadMagic,
    #[error("corrupt header at offset {offset}: {reason}")]
    CorruptHeader { offset: usize, reason: String },
    #[error("truncated payload at offset {offset}: expected {expected} bytes, found {found}")]
    Truncated {
        offset: usize,
        expected: usize,
        found: usize,
    },
    #[error("trailing {0} bytes after payload")]
    TrailingData(usize),
    #[error("expected dtype {expected}, file holds {found}")]
    DtypeMismatch {
        expected: &'static str,
        found: &'static str,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One decoded container: shape plus typed payload.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U8(Vec<u8>),
}

impl Payload {
    pub fn dtype(&self) -> Dtype {
        match self {
            Payload::F32(_) => Dtype::F32,
            Payload::F64(_) => Dtype::F64,
            Payload::U8(_) => Dtype::U8,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Payload::F32(v) => v.len(),
            Payload::F64(v) => v.len(),
            Payload::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub shape: Vec<usize>,
    pub payload: Payload,
}

pub fn write_record(w: &mut impl Write, rec: &Record) -> io::Result<()> {
    let mut header = rec.payload.dtype().name().to_string();
    for d in &rec.shape {
        header.push(' ');
        header.push_str(&d.to_string());
    }
    w.write_all(MAGIC)?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(header.as_bytes())?;
    match &rec.payload {
        Payload::F32(v) => {
            for x in v {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Payload::F64(v) => {
            for x in v {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Payload::U8(v) => w.write_all(v)?,
    }
    Ok(())
}

pub fn read_record(r: &mut impl Read) -> Result<Record, StnsError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode_record(&bytes)
}

pub fn decode_record(bytes: &[u8]) -> Result<Record, StnsError> {
    let (rec, used) = decode_record_prefix(bytes)?;
    if used != bytes.len() {
        return Err(StnsError::TrailingData(bytes.len() - used));
    }
    Ok(rec)
}

/// Decodes one record from the front of `bytes`, returning the byte count it
/// consumed. Checkpoint files concatenate records, hence the prefix form.
pub fn decode_record_prefix(bytes: &[u8]) -> Result<(Record, usize), StnsError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(StnsError::BadMagic);
    }
    if bytes.len() < 8 {
        return Err(StnsError::CorruptHeader {
            offset: 4,
            reason: "missing header length".into(),
        });
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let header_end = 8 + header_len;
    if bytes.len() < header_end {
        return Err(StnsError::CorruptHeader {
            offset: 8,
            reason: format!("declared header length {header_len} overruns file"),
        });
    }
    let header = std::str::from_utf8(&bytes[8..header_end]).map_err(|e| StnsError::CorruptHeader {
        offset: 8 + e.valid_up_to(),
        reason: "header is not UTF-8".into(),
    })?;
    let mut fields = header.split(' ');
    let dtype_str = fields.next().unwrap_or("");
    let dtype = Dtype::parse(dtype_str).ok_or_else(|| StnsError::CorruptHeader {
        offset: 8,
        reason: format!("unknown dtype '{dtype_str}'"),
    })?;
    let mut shape = Vec::new();
    for f in fields {
        let d: usize = f.parse().map_err(|_| StnsError::CorruptHeader {
            offset: 8,
            reason: format!("bad extent '{f}'"),
        })?;
        if d == 0 {
            return Err(StnsError::CorruptHeader {
                offset: 8,
                reason: "zero extent".into(),
            });
        }
        shape.push(d);
    }
    let numel: usize = shape.iter().product();
    let payload_len = numel * dtype.size_of();
    let end = header_end + payload_len;
    if bytes.len() < end {
        return Err(StnsError::Truncated {
            offset: header_end,
            expected: payload_len,
            found: bytes.len() - header_end,
        });
    }
    let body = &bytes[header_end..end];
    let payload = match dtype {
        Dtype::F32 => Payload::F32(
            body.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        Dtype::F64 => Payload::F64(
            body.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        Dtype::U8 => Payload::U8(body.to_vec()),
    };
    Ok((Record { shape, payload }, end))
}

pub fn encode_record(rec: &Record) -> Vec<u8> {
    let mut out = Vec::new();
    write_record(&mut out, rec).expect("writing to a Vec cannot fail");
    out
}

/// Writes bytes to `path` via a temporary sibling file and an atomic rename,
/// so failed writes never leave partial output behind.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let stem = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = dir.join(format!(".{stem}.tmp-{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

pub fn save_tensor<F: Scalar>(t: &Tensor<F>, path: &Path) -> Result<(), StnsError> {
    let payload = match F::DTYPE {
        Dtype::F32 => Payload::F32(t.data().iter().map(|v| v.as_f64() as f32).collect()),
        _ => Payload::F64(t.data().iter().map(|v| v.as_f64()).collect()),
    };
    let rec = Record {
        shape: t.shape().to_vec(),
        payload,
    };
    atomic_write(path, &encode_record(&rec))?;
    Ok(())
}

pub fn load_tensor<F: Scalar>(path: &Path) -> Result<Tensor<F>, StnsError> {
    let rec = decode_record(&fs::read(path)?)?;
    let data: Vec<F> = match &rec.payload {
        Payload::F32(v) => v.iter().map(|&x| F::from_f64(x as f64)).collect(),
        Payload::F64(v) => v.iter().map(|&x| F::from_f64(x)).collect(),
        Payload::U8(_) => {
            return Err(StnsError::DtypeMismatch {
                expected: F::DTYPE.name(),
                found: "u8",
            })
        }
    };
    Ok(Tensor::new(rec.shape, data).expect("container guarantees consistent extents"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let rec = Record {
            shape: vec![2, 3],
            payload: Payload::F64(vec![0.1, -2.5e300, f64::MIN_POSITIVE, 0.0, 1.0, -0.0]),
        };
        let bytes = encode_record(&rec);
        let back = decode_record(&bytes).unwrap();
        let again = encode_record(&back);
        assert_eq!(bytes, again);
    }

    #[test]
    fn u8_roundtrip() {
        let rec = Record {
            shape: vec![4],
            payload: Payload::U8(vec![0, 1, 255, 128]),
        };
        assert_eq!(decode_record(&encode_record(&rec)).unwrap(), rec);
    }

    #[test]
    fn truncation_reports_offset() {
        let rec = Record {
            shape: vec![8],
            payload: Payload::F32(vec![1.0; 8]),
        };
        let bytes = encode_record(&rec);
        let cut = &bytes[..bytes.len() - 5];
        match decode_record(cut) {
            Err(StnsError::Truncated { expected, found, .. }) => {
                assert_eq!(expected, 32);
                assert_eq!(found, 27);
            }
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_header() {
        assert!(matches!(decode_record(b"NOPE"), Err(StnsError::BadMagic)));
        let mut bytes = encode_record(&Record {
            shape: vec![1],
            payload: Payload::F32(vec![1.0]),
        });
        bytes[8] = b'q'; // dtype becomes "q32"
        assert!(matches!(
            decode_record(&bytes),
            Err(StnsError::CorruptHeader { .. })
        ));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = encode_record(&Record {
            shape: vec![1],
            payload: Payload::F32(vec![1.0]),
        });
        bytes.push(0);
        assert!(matches!(decode_record(&bytes), Err(StnsError::TrailingData(1))));
    }
}
