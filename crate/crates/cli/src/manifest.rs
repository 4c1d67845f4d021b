//! Run manifests: what produced an output directory, and from which inputs.

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use superclt::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const VERSION: &str = env!("SUPERCLT_BUILD_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    /// File name relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    /// SHA-256 over the config text and the seed-free run settings.
    pub config_hash: String,
    pub seed: Option<u64>,
    /// Seconds since the Unix epoch; the only non-reproducible fields.
    pub started_at: u64,
    pub finished_at: u64,
    pub outputs: Vec<OutputFile>,
}

pub fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of the config text followed by a canonical settings string. Line
/// endings are normalised so the same config hashes alike on every platform.
pub fn config_hash(config_text: &str, settings: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(config_text.replace("\r\n", "\n").as_bytes());
    hasher.update([0u8]);
    hasher.update(settings.as_bytes());
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn new(subcommand: &str, config_hash: String, seed: Option<u64>, started_at: u64) -> Self {
        RunManifest {
            tool: "superclt".into(),
            version: VERSION.into(),
            subcommand: subcommand.into(),
            config_hash,
            seed,
            started_at,
            finished_at: started_at,
            outputs: Vec::new(),
        }
    }

    /// Write `contents` into `dir` and list it.
    pub fn write_output(&mut self, dir: &Path, name: &str, contents: &str) -> Result<()> {
        fs::write(dir.join(name), contents)?;
        self.outputs.push(OutputFile {
            path: name.into(),
            sha256: sha256_hex(contents.as_bytes()),
        });
        Ok(())
    }

    pub fn finish(mut self, dir: &Path) -> Result<()> {
        self.finished_at = now();
        let text = serde_json::to_string_pretty(&self).expect("manifest serializes");
        fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::ManifestMismatch(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    /// Read a listed output, checking it against its recorded digest.
    pub fn read_verified(&self, dir: &Path, name: &str) -> Result<String> {
        let entry = self.outputs.iter().find(|o| o.path == name).ok_or_else(|| {
            Error::ManifestMismatch(format!("{} does not list {name}", dir.join(MANIFEST_FILE).display()))
        })?;
        let path = dir.join(name);
        let text = fs::read_to_string(&path)?;
        if sha256_hex(text.as_bytes()) != entry.sha256 {
            return Err(Error::ManifestMismatch(format!(
                "{} was modified after the run that produced it",
                path.display()
            )));
        }
        Ok(text)
    }
}
