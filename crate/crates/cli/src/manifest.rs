//! Run manifests: a TOML sidecar next to every output recording what
//! produced it.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::files::write_atomic;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(Self {
            path: path.to_path_buf(),
            sha256: sha256_hex(&bytes),
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub command_line: Vec<String>,
    /// RFC 3339, UTC. Taken from `SOURCE_DATE_EPOCH` when set.
    pub timestamp: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            command_line: std::env::args().collect(),
            timestamp: timestamp(),
            scenario: None,
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileDigest::of(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(FileDigest::of(path)?);
        Ok(())
    }

    /// `<output>.manifest.toml`.
    pub fn sidecar_path(output: &Path) -> PathBuf {
        let mut name = output.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.toml");
        output.with_file_name(name)
    }

    /// Writes the manifest next to `output`.
    pub fn write_beside(&self, output: &Path) -> Result<PathBuf> {
        let path = Self::sidecar_path(output);
        let text = toml::to_string(self).context("serializing manifest")?;
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }

    /// Recomputes every digest and fails on the first mismatch.
    pub fn verify(&self) -> Result<()> {
        let mut bad = Vec::new();
        for f in self.inputs.iter().chain(&self.outputs) {
            match FileDigest::of(&f.path) {
                Ok(d) if d.sha256 == f.sha256 => {}
                Ok(_) => bad.push(format!("{}: digest mismatch", f.path.display())),
                Err(e) => bad.push(format!("{}: {e:#}", f.path.display())),
            }
        }
        if !bad.is_empty() {
            bail!("manifest check failed: {}", bad.join("; "));
        }
        Ok(())
    }
}

fn timestamp() -> String {
    let epoch = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok());
    let at = match epoch.and_then(|s| chrono::DateTime::from_timestamp(s, 0)) {
        Some(t) => t,
        None => chrono::Utc::now(),
    };
    at.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_name() {
        assert_eq!(
            RunManifest::sidecar_path(Path::new("out/em.csv")),
            PathBuf::from("out/em.csv.manifest.toml")
        );
    }

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn round_trip_and_verify() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("o.csv");
        fs::write(&out, "a\n").unwrap();
        let mut m = RunManifest::new("compute");
        m.seed = Some(7);
        m.output(&out).unwrap();
        let path = m.write_beside(&out).unwrap();
        let back = RunManifest::read(&path).unwrap();
        assert_eq!(back, m);
        back.verify().unwrap();
        fs::write(&out, "b\n").unwrap();
        assert!(back
            .verify()
            .unwrap_err()
            .to_string()
            .contains("digest mismatch"));
    }
}
