//! Run manifests: a digest of the driving configuration, echoes of the
//! validated grid/problem, and a checksummed list of every emitted file.
//! The manifest body serializes canonically, so re-parsing and
//! re-serializing reproduces the identical digest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("manifest serialize error: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("manifest digest mismatch: stored {stored}, recomputed {recomputed}")]
    DigestMismatch { stored: String, recomputed: String },
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    hex_string(&h.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct RunManifest {
    /// sha256 of the raw config text that drove the run.
    pub config_digest: String,
    pub grid_echo: String,
    pub problem_echo: String,
    pub scheme: String,
    pub deterministic: bool,
    pub version: String,
    pub files: Vec<FileEntry>,
}

impl RunManifest {
    pub fn new(config_text: &str, grid_echo: String, problem_echo: String, scheme: String) -> Self {
        RunManifest {
            config_digest: sha256_hex(config_text.as_bytes()),
            grid_echo,
            problem_echo,
            scheme,
            deterministic: true,
            version: env!("CARGO_PKG_VERSION").to_string(),
            files: Vec::new(),
        }
    }

    /// Registers an emitted file; the checksum is computed on the spot.
    pub fn add_file(&mut self, path: &Path) -> Result<(), ManifestError> {
        let bytes = std::fs::read(path)?;
        self.files.push(FileEntry {
            name: path
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    pub fn canonical_body(&self) -> Result<String, ManifestError> {
        Ok(toml::to_string(self)?)
    }

    pub fn digest(&self) -> Result<String, ManifestError> {
        Ok(sha256_hex(self.canonical_body()?.as_bytes()))
    }

    /// Writes `manifest.toml`: the canonical body plus a digest trailer
    /// comment (comments do not survive parsing, so round trips reproduce
    /// the identical digest).
    pub fn write(&self, dir: &Path) -> Result<PathBuf, ManifestError> {
        std::fs::create_dir_all(dir)?;
        let body = self.canonical_body()?;
        let digest = sha256_hex(body.as_bytes());
        let path = dir.join("manifest.toml");
        std::fs::write(&path, format!("{body}# manifest-digest: {digest}\n"))?;
        Ok(path)
    }
}

/// Reads a manifest back and checks that re-serialization reproduces the
/// stored digest.
pub fn verify_manifest(path: &Path) -> Result<RunManifest, ManifestError> {
    let text = std::fs::read_to_string(path)?;
    let stored = text
        .lines()
        .rev()
        .find_map(|l| l.strip_prefix("# manifest-digest: "))
        .unwrap_or("")
        .to_string();
    let manifest: RunManifest = toml::from_str(&text)?;
    let recomputed = manifest.digest()?;
    if stored != recomputed {
        return Err(ManifestError::DigestMismatch { stored, recomputed });
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_digest() {
        let dir = std::env::temp_dir().join("wavelab-manifest-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let file = dir.join("series.csv");
        std::fs::write(&file, "t,v\n0,1\n").unwrap();

        let mut m = RunManifest::new(
            "[grid]\nmode = \"radial\"\n",
            "radial d=3 h=0.02 n=2001".into(),
            "p=4 nonlinear conservative".into(),
            "conservative".into(),
        );
        m.add_file(&file).unwrap();
        let path = m.write(&dir).unwrap();

        let back = verify_manifest(&path).unwrap();
        assert_eq!(back, m);

        // tampering breaks the digest
        let mut text = std::fs::read_to_string(&path).unwrap();
        text = text.replace("p=4", "p=5");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(
            verify_manifest(&path),
            Err(ManifestError::DigestMismatch { .. })
        ));
    }
}
