//! Height-field serialization: versioned JSON and the flat `SOSH` binary.
//!
//! Binary layout (little-endian): the 4 magic bytes `SOSH`, `u32` L,
//! `u32` m, then `L * m` `i32` heights in row-major order.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, SosError};
use crate::model::{FloorMode, HeightField};

pub const HEIGHT_FIELD_JSON_VERSION: u32 = 1;
pub const SOSH_MAGIC: &[u8; 4] = b"SOSH";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeightFieldDoc {
    pub version: u32,
    pub dims: [usize; 2],
    pub floor_mode: FloorMode,
    pub heights: Vec<i32>,
}

impl HeightFieldDoc {
    pub fn new(eta: &HeightField, floor_mode: FloorMode) -> Self {
        HeightFieldDoc {
            version: HEIGHT_FIELD_JSON_VERSION,
            dims: [eta.l, eta.m],
            floor_mode,
            heights: eta.heights.clone(),
        }
    }

    pub fn into_field(self) -> Result<(HeightField, FloorMode)> {
        if self.version != HEIGHT_FIELD_JSON_VERSION {
            return Err(SosError::Format(format!("unsupported height field version {}", self.version)));
        }
        let eta = HeightField::from_vec(self.dims[0], self.dims[1], self.heights)?;
        Ok((eta, self.floor_mode))
    }
}

pub fn to_json(eta: &HeightField, floor_mode: FloorMode) -> Result<String> {
    Ok(serde_json::to_string(&HeightFieldDoc::new(eta, floor_mode))?)
}

pub fn from_json(s: &str) -> Result<(HeightField, FloorMode)> {
    serde_json::from_str::<HeightFieldDoc>(s)?.into_field()
}

pub fn to_binary(eta: &HeightField) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * eta.heights.len());
    out.extend_from_slice(SOSH_MAGIC);
    out.extend_from_slice(&(eta.l as u32).to_le_bytes());
    out.extend_from_slice(&(eta.m as u32).to_le_bytes());
    for h in &eta.heights {
        out.extend_from_slice(&h.to_le_bytes());
    }
    out
}

pub fn from_binary(bytes: &[u8]) -> Result<HeightField> {
    if bytes.len() < 12 || &bytes[..4] != SOSH_MAGIC {
        return Err(SosError::Format("missing SOSH header".into()));
    }
    let word = |i: usize| [bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]];
    let l = u32::from_le_bytes(word(4)) as usize;
    let m = u32::from_le_bytes(word(8)) as usize;
    let n = l.checked_mul(m).ok_or_else(|| SosError::Format("dims overflow".into()))?;
    if bytes.len() != 12 + 4 * n {
        return Err(SosError::Format(format!("expected {} bytes, got {}", 12 + 4 * n, bytes.len())));
    }
    let heights = (0..n).map(|i| i32::from_le_bytes(word(12 + 4 * i))).collect();
    HeightField::from_vec(l, m, heights)
}

pub fn write_binary(path: &Path, eta: &HeightField) -> Result<()> {
    std::fs::write(path, to_binary(eta))?;
    Ok(())
}

pub fn read_binary(path: &Path) -> Result<HeightField> {
    from_binary(&std::fs::read(path)?)
}

/// Hex SHA-256 of the binary encoding; used as a final-state digest.
pub fn digest(eta: &HeightField) -> String {
    let d = Sha256::digest(to_binary(eta));
    d.iter().map(|b| format!("{b:02x}")).collect()
}

/// Write `contents` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
