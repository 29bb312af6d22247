//! The `.vol3` volume format and binary PGM slice export.
//!
//! A `.vol3` file is an 8-byte magic `VOL3\0\0\0\x01`, three `u32` dims,
//! three `f64` spacings (mm), a `u32` dtype code (1 = `f64`) and the payload
//! in x-fastest order. Every field is little-endian.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::volume::Volume;

pub const VOL3_MAGIC: [u8; 8] = *b"VOL3\0\0\0\x01";
pub const DTYPE_F64: u32 = 1;
pub const VOL3_HEADER_LEN: usize = 8 + 3 * 4 + 3 * 8 + 4;

pub fn encode_volume(v: &Volume) -> Vec<u8> {
    let mut out = Vec::with_capacity(VOL3_HEADER_LEN + 8 * v.len());
    out.extend_from_slice(&VOL3_MAGIC);
    let (nx, ny, nz) = v.dims();
    for d in [nx, ny, nz] {
        let d = u32::try_from(d).expect("dimension fits in u32");
        out.extend_from_slice(&d.to_le_bytes());
    }
    let (sx, sy, sz) = v.spacing();
    for s in [sx, sy, sz] {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out.extend_from_slice(&DTYPE_F64.to_le_bytes());
    for x in v.data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_volume(bytes: &[u8]) -> Result<Volume> {
    let magic_len = bytes.len().min(VOL3_MAGIC.len());
    if bytes[..magic_len] != VOL3_MAGIC[..magic_len] {
        return Err(Error::BadMagic);
    }
    if bytes.len() < VOL3_HEADER_LEN {
        return Err(Error::Truncated {
            expected: VOL3_HEADER_LEN,
            found: bytes.len(),
        });
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let dims = (u32_at(8) as usize, u32_at(12) as usize, u32_at(16) as usize);
    let spacing = (f64_at(20), f64_at(28), f64_at(36));
    let dtype = u32_at(44);
    if dtype != DTYPE_F64 {
        return Err(Error::UnsupportedDtype(dtype));
    }
    let count = dims
        .0
        .checked_mul(dims.1)
        .and_then(|n| n.checked_mul(dims.2))
        .ok_or(Error::InvalidDims(dims))?;
    let expected = count
        .checked_mul(8)
        .and_then(|n| n.checked_add(VOL3_HEADER_LEN))
        .ok_or(Error::InvalidDims(dims))?;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::TrailingBytes(bytes.len() - expected));
    }
    let data = bytes[VOL3_HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Volume::from_vec(dims, spacing, data)
}

pub fn write_volume(path: impl AsRef<Path>, v: &Volume) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_volume(v)).map_err(|e| Error::io(path, e))
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_volume(&bytes)
}

/// A 2D grayscale image, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    /// Binary P5 with max value 255.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_pgm()).map_err(|e| Error::io(path, e))
    }
}

/// The `z`-th axial slice, x along rows.
pub fn axial_slice(v: &Volume, z: usize) -> Result<Vec<f64>> {
    let (nx, ny, nz) = v.dims();
    if z >= nz {
        return Err(Error::InvalidParameter(format!("slice {z} outside 0..{nz}")));
    }
    Ok(v.data()[z * nx * ny..(z + 1) * nx * ny].to_vec())
}

/// Min-max scaling to 0..=255; a constant slice maps to 0.
pub fn scale_min_max(values: &[f64]) -> Vec<u8> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0; values.len()];
    }
    values
        .iter()
        .map(|v| ((v - lo) / (hi - lo) * 255.0).round() as u8)
        .collect()
}

/// Symmetric scaling about zero: `−m → 0`, `0 → 128`, `m → 255` with
/// `m = max |v|`. An all-zero slice is uniformly 128.
pub fn scale_signed(values: &[f64]) -> Vec<u8> {
    let m = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if m == 0.0 {
        return vec![128; values.len()];
    }
    values
        .iter()
        .map(|v| (127.5 + 127.5 * v / m).round().clamp(0.0, 255.0) as u8)
        .collect()
}

pub fn slice_image(v: &Volume, z: usize, signed: bool) -> Result<GrayImage> {
    let (nx, ny, _) = v.dims();
    let values = axial_slice(v, z)?;
    Ok(GrayImage {
        width: nx,
        height: ny,
        pixels: if signed { scale_signed(&values) } else { scale_min_max(&values) },
    })
}
