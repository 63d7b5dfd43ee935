//! Persistence and data ingestion: checkpoints, synthetic tasks, delimited text.

mod checkpoint;
mod delimited;
mod synthetic;

pub use checkpoint::{
    load_checkpoint, load_checkpoint_full, save_checkpoint, save_checkpoint_full, Checkpoint, LayerSpec,
    CHECKPOINT_VERSION, MAGIC,
};
pub use delimited::{load_csv, save_csv, CsvSchema};
pub use synthetic::{gen_synthetic, split_dataset, SyntheticTask, TaskKind};

use std::io::Write;
use std::path::Path;

use crate::error::Result;

/// Write `bytes` to a temporary file beside `path`, then rename over it.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
