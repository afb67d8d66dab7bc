//! File emission with content hashes for the run manifest.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct OutputFile {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects written files so the manifest can list them with digests.
#[derive(Debug, Default)]
pub struct Inventory {
    pub files: Vec<OutputFile>,
}

impl Inventory {
    /// Writes `bytes` under `dir/name`, gzip-compressed (as `name.gz`) when asked.
    pub fn emit(&mut self, dir: &Path, name: &str, bytes: &[u8], gzip: bool) -> Result<()> {
        let (name, data) = if gzip {
            let mut enc = GzEncoder::new(Vec::new(), Compression::default());
            enc.write_all(bytes)?;
            (format!("{name}.gz"), enc.finish()?)
        } else {
            (name.to_string(), bytes.to_vec())
        };
        write_bytes(&dir.join(&name), &data)?;
        self.files.push(OutputFile {
            file: name,
            bytes: data.len(),
            sha256: hex(&Sha256::digest(&data)),
        });
        Ok(())
    }

    pub fn emit_json<T: Serialize>(&mut self, dir: &Path, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.emit(dir, name, text.as_bytes(), false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let mut inv = Inventory::default();
        inv.emit(dir.path(), "a.txt", b"abc", false).unwrap();
        assert_eq!(
            inv.files[0].sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        inv.emit(dir.path(), "a.txt", b"abc", true).unwrap();
        assert_eq!(inv.files[1].file, "a.txt.gz");
        let again = {
            let mut i = Inventory::default();
            i.emit(dir.path(), "b.txt", b"abc", true).unwrap();
            i.files.remove(0).sha256
        };
        assert_eq!(inv.files[1].sha256, again);
    }
}
