//! Raw matrix blobs: a 24-byte little-endian header followed by row-major
//! `f64` payload.
//!
//! | bytes  | field                          |
//! |--------|--------------------------------|
//! | 0..4   | magic `AKCS`                   |
//! | 4..6   | format version (`1`)           |
//! | 6..8   | payload kind, see [`BlobKind`] |
//! | 8..16  | rows (`u64`)                   |
//! | 16..24 | cols (`u64`)                   |
//!
//! Operator files are two blobs back to back: `Phi` then `Psi` for KCS, or
//! the stacked `phi_i` rows (`m x H`) then the stacked `Psi_i` (`mn x W`)
//! for AKCS.

use std::io::Write;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::sensing::{AkcsOperator, AkcsRow, KcsOperator, SensingOperator};

pub const MAGIC: &[u8; 4] = b"AKCS";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u16)]
pub enum BlobKind {
    Matrix = 0,
    Measurement = 1,
    KcsPhi = 2,
    KcsPsi = 3,
    AkcsPhiStack = 4,
    AkcsPsiStack = 5,
}

impl BlobKind {
    fn from_u16(v: u16, offset: usize) -> Result<Self> {
        Ok(match v {
            0 => BlobKind::Matrix,
            1 => BlobKind::Measurement,
            2 => BlobKind::KcsPhi,
            3 => BlobKind::KcsPsi,
            4 => BlobKind::AkcsPhiStack,
            5 => BlobKind::AkcsPsiStack,
            other => return Err(Error::parse(offset, format!("unknown blob kind {other}"))),
        })
    }
}

pub fn encode_matrix(kind: BlobKind, m: &DenseMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.len());
    write_matrix(&mut out, kind, m).expect("writing to a Vec cannot fail");
    out
}

pub fn write_matrix(w: &mut impl Write, kind: BlobKind, m: &DenseMatrix) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(kind as u16).to_le_bytes())?;
    w.write_all(&(m.rows() as u64).to_le_bytes())?;
    w.write_all(&(m.cols() as u64).to_le_bytes())?;
    for v in m.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Decodes one blob starting at `offset`; returns the kind, the matrix and
/// the offset just past it.
pub fn decode_matrix(bytes: &[u8], offset: usize) -> Result<(BlobKind, DenseMatrix, usize)> {
    let header = bytes
        .get(offset..offset + HEADER_LEN)
        .ok_or_else(|| Error::parse(offset, format!("truncated header: need {HEADER_LEN} bytes")))?;
    if &header[0..4] != MAGIC {
        return Err(Error::parse(offset, "bad magic, expected 'AKCS'"));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != VERSION {
        return Err(Error::parse(offset + 4, format!("unsupported version {version}")));
    }
    let kind = BlobKind::from_u16(u16::from_le_bytes([header[6], header[7]]), offset + 6)?;
    let rows = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(header[16..24].try_into().unwrap()) as usize;
    let start = offset + HEADER_LEN;
    let len = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::parse(offset + 8, "dimensions overflow"))?;
    let payload = bytes.get(start..start + len).ok_or_else(|| {
        Error::parse(
            bytes.len(),
            format!("truncated payload: expected {len} bytes from offset {start}"),
        )
    })?;
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let m = DenseMatrix::new(rows, cols, data).map_err(|e| Error::parse(start, e.to_string()))?;
    Ok((kind, m, start + len))
}

pub fn encode_operator(op: &SensingOperator) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    match op {
        SensingOperator::Kcs(k) => {
            write_matrix(&mut out, BlobKind::KcsPhi, k.phi())?;
            write_matrix(&mut out, BlobKind::KcsPsi, k.psi())?;
        }
        SensingOperator::Akcs(a) => {
            let (m, n) = a.measurement_shape();
            let (h, w) = a.image_shape();
            let phi = DenseMatrix::new(m, h, a.rows().iter().flat_map(|r| r.phi.as_slice().to_vec()).collect())?;
            let psi = DenseMatrix::new(
                m * n,
                w,
                a.rows().iter().flat_map(|r| r.psi.as_slice().to_vec()).collect(),
            )?;
            write_matrix(&mut out, BlobKind::AkcsPhiStack, &phi)?;
            write_matrix(&mut out, BlobKind::AkcsPsiStack, &psi)?;
        }
    }
    Ok(out)
}

pub fn decode_operator(bytes: &[u8]) -> Result<SensingOperator> {
    let (k1, first, next) = decode_matrix(bytes, 0)?;
    let (k2, second, end) = decode_matrix(bytes, next)?;
    if end != bytes.len() {
        return Err(Error::parse(end, "trailing bytes after operator blobs"));
    }
    match (k1, k2) {
        (BlobKind::KcsPhi, BlobKind::KcsPsi) => Ok(KcsOperator::new(first, second).into()),
        (BlobKind::AkcsPhiStack, BlobKind::AkcsPsiStack) => {
            let m = first.rows();
            if second.rows() % m != 0 {
                return Err(Error::parse(
                    next + 8,
                    format!("psi stack has {} rows, not a multiple of m = {m}", second.rows()),
                ));
            }
            let n = second.rows() / m;
            let w = second.cols();
            let rows = (0..m)
                .map(|i| {
                    Ok(AkcsRow {
                        phi: DenseMatrix::row_vector(first.row(i).to_vec())?,
                        psi: DenseMatrix::new(n, w, second.as_slice()[i * n * w..(i + 1) * n * w].to_vec())?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(AkcsOperator::new(rows)?.into())
        }
        (a, b) => Err(Error::parse(
            6,
            format!("blob kinds {a:?}/{b:?} do not form an operator"),
        )),
    }
}
