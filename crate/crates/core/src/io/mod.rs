//! File formats: ASCII PLY clouds, grasp text files and binary volume files.
//! Every writer is deterministic.

pub mod grasps;
pub mod ply;
pub mod volume;

pub use grasps::{format_grasps, parse_grasps, read_grasps, write_grasps};
pub use ply::{format_ply, parse_ply, read_ply, write_ply};
pub use volume::{read_volume, volume_from_bytes, volume_to_bytes, write_volume};

use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
