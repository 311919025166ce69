//! Binary lattice snapshots.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   4 bytes  "PEPS"
//! version u32      currently 1
//! height  u32
//! width   u32
//! sites   row-major, each:
//!   legs  u8       leg count
//!   per leg: code u8 (0 up, 1 down, 2 left, 3 right, 4 physical), dim u32
//!   data  f64 * product(dims), canonical leg order
//! ```
//!
//! Legs are written in canonical order, so the codes are redundant with the
//! site coordinate; they are stored anyway and checked on load, which makes
//! files self-describing and catches transposed or corrupted sites early.
//! Element bytes are the IEEE-754 words themselves, so a round trip restores
//! every bit.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::lattice::{LatticeError, PepsLattice};
use crate::tensor::{IndexLabel, Tensor};

const MAGIC: [u8; 4] = *b"PEPS";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic {0:?}, expected \"PEPS\"")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("file ends early: need {need} bytes at offset {offset}")]
    Truncated { offset: usize, need: usize },
    #[error("{0} trailing bytes after the last site")]
    TrailingBytes(usize),
    #[error("site ({row}, {col}) carries leg code {code}, which is undefined")]
    BadLegCode { row: usize, col: usize, code: u8 },
    #[error("site ({row}, {col}) leg list does not match its position")]
    LegPattern { row: usize, col: usize },
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Direction codes of site `(r, c)` in canonical leg order.
fn leg_codes(height: usize, width: usize, r: usize, c: usize) -> Vec<u8> {
    let mut codes = Vec::with_capacity(5);
    if r > 0 {
        codes.push(0);
    }
    if r + 1 < height {
        codes.push(1);
    }
    if c > 0 {
        codes.push(2);
    }
    if c + 1 < width {
        codes.push(3);
    }
    codes.push(4);
    codes
}

pub fn to_bytes(lat: &PepsLattice) -> Vec<u8> {
    let (h, w) = (lat.height(), lat.width());
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    out.extend_from_slice(&(w as u32).to_le_bytes());
    for r in 0..h {
        for c in 0..w {
            let t = lat.site(r, c);
            let codes = leg_codes(h, w, r, c);
            debug_assert_eq!(codes.len(), t.rank());
            out.push(codes.len() as u8);
            for (code, l) in codes.iter().zip(t.labels()) {
                out.push(*code);
                out.extend_from_slice(&(l.dim as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<PepsLattice, CheckpointError> {
    let mut pos = 0usize;
    let take = |pos: &mut usize, need: usize| -> Result<&[u8], CheckpointError> {
        let end = pos.checked_add(need).filter(|&e| e <= bytes.len());
        match end {
            Some(end) => {
                let s = &bytes[*pos..end];
                *pos = end;
                Ok(s)
            }
            None => Err(CheckpointError::Truncated {
                offset: *pos,
                need,
            }),
        }
    };
    let read_u32 =
        |pos: &mut usize| -> Result<u32, CheckpointError> {
            Ok(u32::from_le_bytes(take(pos, 4)?.try_into().unwrap()))
        };

    let magic: [u8; 4] = take(&mut pos, 4)?.try_into().unwrap();
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    let version = read_u32(&mut pos)?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let h = read_u32(&mut pos)? as usize;
    let w = read_u32(&mut pos)? as usize;

    let mut sites = Vec::with_capacity(h.saturating_mul(w));
    for r in 0..h {
        for c in 0..w {
            let legs = take(&mut pos, 1)?[0] as usize;
            let mut codes = Vec::with_capacity(legs);
            let mut dims = Vec::with_capacity(legs);
            for _ in 0..legs {
                let code = take(&mut pos, 1)?[0];
                if code > 4 {
                    return Err(CheckpointError::BadLegCode { row: r, col: c, code });
                }
                codes.push(code);
                dims.push(read_u32(&mut pos)? as usize);
            }
            if codes != leg_codes(h, w, r, c) {
                return Err(CheckpointError::LegPattern { row: r, col: c });
            }
            let ids = crate::lattice::site_label_ids(h, w, r, c);
            let labels: Vec<IndexLabel> = ids
                .into_iter()
                .zip(&dims)
                .map(|(id, &dim)| IndexLabel::new(id, dim))
                .collect();
            // Checked so absurd extents from a corrupt file fail as truncation
            // instead of overflowing the byte count.
            let count = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .and_then(|n| n.checked_mul(8))
                .ok_or(CheckpointError::Truncated { offset: pos, need: usize::MAX })?;
            let raw = take(&mut pos, count)?;
            let data: Vec<f64> = raw
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect();
            sites.push(Tensor::new(labels, data).map_err(LatticeError::from)?);
        }
    }
    if pos != bytes.len() {
        return Err(CheckpointError::TrailingBytes(bytes.len() - pos));
    }
    Ok(PepsLattice::from_parts(h, w, sites)?)
}

pub fn save(lat: &PepsLattice, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    fs::write(path, to_bytes(lat))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<PepsLattice, CheckpointError> {
    from_bytes(&fs::read(path)?)
}
