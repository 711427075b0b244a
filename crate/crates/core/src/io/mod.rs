//! Reading and writing models (IGES, JSON) and mesh correspondences.

pub mod iges;
mod json;
mod mesh;

pub use iges::{read_iges, write_iges, write_iges_with, IgesDocument, IgesWriteOptions};
pub use json::{read_model_json, write_model_json, MODEL_SCHEMA};
pub use mesh::{read_mesh_pair, read_points, write_mesh_pair, write_points};

use std::path::Path;

use crate::error::Result;

/// Write `bytes` to `path` through a temporary file in the same directory, so the target only
/// ever holds complete content.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    if let Err(e) = std::fs::rename(&tmp, path) {
        let _ = std::fs::remove_file(&tmp);
        return Err(e.into());
    }
    Ok(())
}
