//! Run manifests: what a command read, what it wrote, and how to redo it.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const TOOL_VERSION: &str = concat!("repstab ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name, as typed.
    pub args: Vec<String>,
    /// Working directory the arguments are relative to.
    pub cwd: String,
    pub inputs: Vec<FileDigest>,
    /// Output file names, relative to the output directory.
    pub outputs: Vec<FileDigest>,
    pub config: Value,
    pub seed: u64,
    pub tool_version: String,
}

pub fn digest_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes).as_slice())
}

pub fn digest_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(digest_bytes(&bytes))
}

/// Where the manifest for `output` lives.
pub fn manifest_path(output: &Path, is_dir: bool) -> PathBuf {
    if is_dir {
        output.join("manifest.json")
    } else {
        let mut name = output.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        output.with_file_name(name)
    }
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Recomputes every input digest and fails on the first mismatch.
    pub fn verify_inputs(&self) -> Result<()> {
        for f in &self.inputs {
            let now = digest_file(Path::new(&f.path))?;
            if now != f.sha256 {
                return Err(Error::Manifest(format!("input {} changed since the run", f.path)));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_known_value() {
        assert_eq!(digest_bytes(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn manifest_locations() {
        assert_eq!(manifest_path(Path::new("out/sim.bxm1"), false), PathBuf::from("out/sim.bxm1.manifest.json"));
        assert_eq!(manifest_path(Path::new("out"), true), PathBuf::from("out/manifest.json"));
    }
}
