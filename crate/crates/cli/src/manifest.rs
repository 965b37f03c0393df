//! Run provenance: every command emits a manifest with a stable hash of its
//! flag configuration, so ablation runs can be matched to their settings.

use std::path::{Path, PathBuf};
use std::time::Instant;

/// FNV-1a 64-bit over the canonical flag string.
fn fnv1a64(text: &str) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for byte in text.bytes() {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct RunManifest {
    pub command: String,
    /// Hex of a 64-bit hash over the canonical flag set; stable across runs
    /// with identical flags.
    pub config_hash: String,
    pub input_paths: Vec<String>,
    pub seed: u64,
    pub tool_version: String,
    pub wall_ms: u64,
}

pub struct ManifestBuilder {
    manifest: RunManifest,
    start: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, canonical_config: &str, input_paths: &[&Path], seed: u64) -> Self {
        Self {
            manifest: RunManifest {
                command: command.to_string(),
                config_hash: format!("{:016x}", fnv1a64(canonical_config)),
                input_paths: input_paths.iter().map(|p| p.display().to_string()).collect(),
                seed,
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                wall_ms: 0,
            },
            start: Instant::now(),
        }
    }

    pub fn finish(mut self) -> RunManifest {
        self.manifest.wall_ms = self.start.elapsed().as_millis() as u64;
        self.manifest
    }
}

/// Write via a temp file in the target directory plus rename, so readers
/// never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).map(Path::to_path_buf);
    let parent = parent.unwrap_or_else(|| PathBuf::from("."));
    let mut tmp = tempfile::NamedTempFile::new_in(&parent)?;
    std::io::Write::write_all(&mut tmp, bytes)?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_hash_is_stable_and_flag_sensitive() {
        let a = ManifestBuilder::new("fuse", "strategy=multiply seed=1", &[], 1).finish();
        let b = ManifestBuilder::new("fuse", "strategy=multiply seed=1", &[], 1).finish();
        let c = ManifestBuilder::new("fuse", "strategy=concat seed=1", &[], 1).finish();
        assert_eq!(a.config_hash, b.config_hash);
        assert_ne!(a.config_hash, c.config_hash);
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.bin");
        write_atomic(&path, b"first").unwrap();
        write_atomic(&path, b"second").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"second");
    }
}
