//! File formats: pose records, heatmaps, SVM models, PGM images and flat
//! key=value configuration. Every writer replaces its target atomically.

pub mod config;
pub mod heatmap;
pub mod pgm;
pub mod records;
pub mod svm_file;

use std::io::Write;
use std::path::Path;

pub use config::ConfigMap;
pub use heatmap::{read_heatmaps, write_heatmaps};
pub use pgm::{read_pgm, write_pgm};
pub use records::{read_records, write_records, PoseRecord};
pub use svm_file::{read_svm, write_svm};

use crate::error::Result;

/// Writes `bytes` to a temporary file next to `path`, then renames it over
/// `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
