//! Binary export of sampled grids.
//!
//! Layout, all little-endian: the 8 magic bytes `GPGMMGRD`, a `u32` version,
//! origin as three `f64`, spacing as `f64`, dims as three `u64`, then the
//! node values and the node variances as `f64` arrays with x varying fastest.

use std::fs;
use std::path::Path;

use gpgmm_core::surface::ScalarGrid;
use gpgmm_core::Vector3;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"GPGMMGRD";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 3 * 8 + 8 + 3 * 8;

pub fn encode_grid(grid: &ScalarGrid) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * grid.values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in grid.origin.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&grid.spacing.to_le_bytes());
    for d in grid.dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in grid.values.iter().chain(&grid.variances) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_grid(bytes: &[u8], path: &Path) -> Result<ScalarGrid> {
    let bad = |msg: &str| Error::Format {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    };
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return Err(bad("not a grid file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(bad(&format!("unsupported grid version {version}")));
    }
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let origin = Vector3::new(f64_at(12), f64_at(20), f64_at(28));
    let spacing = f64_at(36);
    let mut dims = [0usize; 3];
    for (k, d) in dims.iter_mut().enumerate() {
        *d = usize::try_from(u64_at(44 + 8 * k)).map_err(|_| bad("grid too large"))?;
    }
    let n = dims
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| bad("grid too large"))?;
    if bytes.len() != HEADER_LEN + 16 * n {
        return Err(bad("payload length does not match the header"));
    }
    let read = |start: usize| -> Vec<f64> { (0..n).map(|i| f64_at(start + 8 * i)).collect() };
    let grid = ScalarGrid {
        origin,
        spacing,
        dims,
        values: read(HEADER_LEN),
        variances: read(HEADER_LEN + 8 * n),
    };
    grid.validate().map_err(|e| bad(&e.to_string()))?;
    Ok(grid)
}

pub fn write_grid(path: &Path, grid: &ScalarGrid) -> Result<()> {
    fs::write(path, encode_grid(grid)).map_err(|e| Error::io(path, e))
}

pub fn read_grid(path: &Path) -> Result<ScalarGrid> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_grid(&bytes, path)
}
