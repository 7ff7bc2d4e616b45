//! Binary volume files, all fields little-endian:
//!
//! ```text
//! magic "C2FV" | u32 version | u32 num_points | u32 n_y | u32 n_z | u32 channels (8)
//! f32 grasp points [num_points][3]
//! f32 cells        [num_points][n_y][n_z][8]
//! ```
//!
//! Values are stored as `f32`, so a read/write cycle after the first write
//! is bit-exact.

use std::path::Path;

use crate::codec::{C2FVolume, GridShape, CHANNELS};
use crate::error::{Error, Result};
use crate::geometry::Vec3;

pub const MAGIC: &[u8; 4] = b"C2FV";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 5 * 4;

pub fn write_volume(volumes: &[C2FVolume], path: impl AsRef<Path>) -> Result<()> {
    super::write_bytes(path.as_ref(), &volume_to_bytes(volumes)?)
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<Vec<C2FVolume>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    volume_from_bytes(&bytes).map_err(|message| Error::Format {
        path: path.to_path_buf(),
        message,
    })
}

/// All volumes must share one grid shape; an empty list is written with the
/// default shape.
pub fn volume_to_bytes(volumes: &[C2FVolume]) -> Result<Vec<u8>> {
    let shape = volumes.first().map_or_else(GridShape::default, |v| v.shape());
    if let Some(p) = volumes.iter().position(|v| v.shape() != shape) {
        return Err(Error::ShapeMismatch(format!(
            "volume {p} has shape {:?}, expected {shape:?}",
            volumes[p].shape()
        )));
    }
    let n = u32::try_from(volumes.len()).map_err(|_| Error::invalid("too many volumes"))?;
    let floats = volumes.len() * (3 + shape.cells() * CHANNELS);
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * floats);
    out.extend_from_slice(MAGIC);
    for v in [VERSION, n, shape.n_y as u32, shape.n_z as u32, CHANNELS as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in volumes {
        for c in v.grasp_point.iter() {
            out.extend_from_slice(&(*c as f32).to_le_bytes());
        }
    }
    for v in volumes {
        for x in v.flatten() {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Decodes a volume file image; errors are plain messages for the caller to
/// attach a path to.
pub fn volume_from_bytes(bytes: &[u8]) -> std::result::Result<Vec<C2FVolume>, String> {
    if bytes.len() < HEADER_LEN {
        return Err(format!("file is {} bytes, shorter than the header", bytes.len()));
    }
    if &bytes[..4] != MAGIC {
        return Err("bad magic, not a C2FV volume file".into());
    }
    let word = |k: usize| u32::from_le_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().expect("4 bytes"));
    let (version, num_points, n_y, n_z, channels) = (word(0), word(1), word(2), word(3), word(4));
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    if channels as usize != CHANNELS {
        return Err(format!("expected {CHANNELS} channels, header says {channels}"));
    }
    let shape = GridShape::new(n_y as usize, n_z as usize).map_err(|e| e.to_string())?;
    let num_points = num_points as usize;
    let per_volume = shape.cells() * CHANNELS;
    let expected = num_points
        .checked_mul(3 + per_volume)
        .and_then(|f| f.checked_mul(4))
        .and_then(|b| b.checked_add(HEADER_LEN))
        .ok_or("header sizes overflow")?;
    if bytes.len() != expected {
        return Err(format!(
            "payload is {} bytes, header implies {}{}",
            bytes.len(),
            expected,
            if bytes.len() < expected { " (truncated)" } else { "" }
        ));
    }
    let mut floats = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64);
    let points: Vec<Vec3> = (0..num_points)
        .map(|_| {
            let mut next = || floats.next().expect("length checked");
            Vec3::new(next(), next(), next())
        })
        .collect();
    let mut volumes = Vec::with_capacity(num_points);
    let mut buf = vec![0.0; per_volume];
    for p in points {
        for x in buf.iter_mut() {
            *x = floats.next().expect("length checked");
        }
        volumes.push(C2FVolume::from_flat(p, shape, &buf).map_err(|e| e.to_string())?);
    }
    Ok(volumes)
}
