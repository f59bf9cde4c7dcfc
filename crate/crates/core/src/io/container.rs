//! Fixed 64-byte header + little-endian `f32` payload.
//!
//! ```text
//! offset  size  field
//!      0     4  magic  b"EMGS"
//!      4     2  version (u16, currently 1)
//!      6     2  kind (u16, see ContainerKind)
//!      8     4  rows (u32)
//!     12     4  cols (u32)
//!     16     8  rate (f64: sampling rate in Hz, or hop in ms for features)
//!     24     8  window (f64: window in ms for features, 0 otherwise)
//!     32     4  aux0 (u32: electrodes V, or reference index + 1 for recordings)
//!     36     4  aux1 (u32: bands per electrode for band power)
//!     40     8  seed (u64: codebooks)
//!     48    16  reserved, zero
//!     64     -  rows * cols little-endian f32, row-major
//! ```
//! All integers are little-endian.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const MAGIC: [u8; 4] = *b"EMGS";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u16)]
pub enum ContainerKind {
    Recording = 0,
    VecE = 1,
    DiagE = 2,
    VecB = 3,
    MelA = 4,
    SsH = 5,
    Codebook = 6,
    Audio = 7,
}

impl ContainerKind {
    pub fn from_code(code: u16) -> Result<Self> {
        Ok(match code {
            0 => Self::Recording,
            1 => Self::VecE,
            2 => Self::DiagE,
            3 => Self::VecB,
            4 => Self::MelA,
            5 => Self::SsH,
            6 => Self::Codebook,
            7 => Self::Audio,
            other => return Err(Error::Format(format!("unknown container kind {other}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Header {
    pub kind: ContainerKind,
    pub rows: u32,
    pub cols: u32,
    pub rate: f64,
    pub window: f64,
    pub aux0: u32,
    pub aux1: u32,
    pub seed: u64,
}

impl Header {
    pub fn new(kind: ContainerKind, rows: usize, cols: usize) -> Self {
        Self {
            kind,
            rows: rows as u32,
            cols: cols as u32,
            rate: 0.0,
            window: 0.0,
            aux0: 0,
            aux1: 0,
            seed: 0,
        }
    }

    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(&MAGIC);
        b[4..6].copy_from_slice(&VERSION.to_le_bytes());
        b[6..8].copy_from_slice(&(self.kind as u16).to_le_bytes());
        b[8..12].copy_from_slice(&self.rows.to_le_bytes());
        b[12..16].copy_from_slice(&self.cols.to_le_bytes());
        b[16..24].copy_from_slice(&self.rate.to_le_bytes());
        b[24..32].copy_from_slice(&self.window.to_le_bytes());
        b[32..36].copy_from_slice(&self.aux0.to_le_bytes());
        b[36..40].copy_from_slice(&self.aux1.to_le_bytes());
        b[40..48].copy_from_slice(&self.seed.to_le_bytes());
        b
    }

    pub fn decode(b: &[u8]) -> Result<Self> {
        if b.len() < HEADER_LEN {
            return Err(Error::Format(format!(
                "malformed header: {} bytes, need {HEADER_LEN}",
                b.len()
            )));
        }
        if b[0..4] != MAGIC {
            return Err(Error::Format("malformed header: bad magic".into()));
        }
        let version = u16::from_le_bytes([b[4], b[5]]);
        if version != VERSION {
            return Err(Error::Format(format!(
                "malformed header: unsupported version {version}"
            )));
        }
        let u32_at = |o: usize| u32::from_le_bytes(b[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(b[o..o + 8].try_into().unwrap());
        Ok(Self {
            kind: ContainerKind::from_code(u16::from_le_bytes([b[6], b[7]]))?,
            rows: u32_at(8),
            cols: u32_at(12),
            rate: f64_at(16),
            window: f64_at(24),
            aux0: u32_at(32),
            aux1: u32_at(36),
            seed: u64::from_le_bytes(b[40..48].try_into().unwrap()),
        })
    }
}

pub fn write_container(path: &Path, header: &Header, payload: &Matrix<f32>) -> Result<()> {
    if payload.rows() != header.rows as usize || payload.cols() != header.cols as usize {
        return Err(Error::Shape(format!(
            "header declares {}x{}, payload is {}x{}",
            header.rows,
            header.cols,
            payload.rows(),
            payload.cols()
        )));
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut buf = Vec::with_capacity(HEADER_LEN + payload.as_slice().len() * 4);
    buf.extend_from_slice(&header.encode());
    for v in payload.as_slice() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_container(path: &Path) -> Result<(Header, Matrix<f32>)> {
    let bytes = fs::read(path)?;
    decode_container(&bytes)
}

pub fn decode_container(bytes: &[u8]) -> Result<(Header, Matrix<f32>)> {
    let header = Header::decode(bytes)?;
    let rows = header.rows as usize;
    let cols = header.cols as usize;
    let payload = &bytes[HEADER_LEN..];
    let expected = rows * cols * 4;
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "sample count mismatch: header declares {rows}x{cols} ({expected} bytes), payload has {} bytes",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((header, Matrix::from_vec(rows, cols, data)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_round_trip() {
        let mut h = Header::new(ContainerKind::VecB, 3, 155);
        h.rate = 20.0;
        h.window = 25.0;
        h.aux0 = 31;
        h.aux1 = 5;
        h.seed = 0xdead_beef_0042;
        assert_eq!(Header::decode(&h.encode()).unwrap(), h);
    }

    #[test]
    fn rejects_bad_magic_and_kind() {
        let mut b = Header::new(ContainerKind::DiagE, 1, 1).encode();
        b[6] = 99;
        assert!(matches!(Header::decode(&b), Err(Error::Format(_))));
        b[0] = b'X';
        assert!(Header::decode(&b).unwrap_err().to_string().contains("magic"));
        assert!(Header::decode(&b[..10]).is_err());
    }
}
