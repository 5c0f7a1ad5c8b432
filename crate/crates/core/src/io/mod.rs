//! On-disk artifacts: Netpbm images, track labels, anchor files, dataset
//! indexes and model checkpoints. Every writer goes through
//! [`write_atomic`].

mod anchor_file;
mod checkpoint;
mod index;
mod labels;
mod pnm;

pub use anchor_file::{format_anchors, parse_anchors, read_anchors, write_anchors};
pub use checkpoint::{
    check_anchor_consistency, decode_checkpoint, encode_checkpoint, load_checkpoint,
    load_checkpoint_expecting, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use index::{DatasetIndex, IndexEntry};
pub use labels::{format_labels, parse_labels, read_labels, write_labels};
pub use pnm::{decode_pnm, encode_pnm, read_pnm, write_pnm, Raster};

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Writes `bytes` to a sibling temp file and renames it over `path`, so a
/// killed process never leaves a half-written artifact behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| Error::Input(format!("{} has no file name", path.display())))?;
    let tmp = path.with_file_name(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}
