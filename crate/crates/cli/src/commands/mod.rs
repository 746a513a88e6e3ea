pub mod bench;
pub mod evaluate;
pub mod fit_lofi;
pub mod ingest;
pub mod predict;
pub mod synth;
pub mod train;

use std::path::Path;

pub fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| anyhow::anyhow!("creating {}: {e}", dir.display()))
}
