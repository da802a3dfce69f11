//! Reproducibility manifest emitted alongside every command output.

use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Command name, resolved configuration, seed, input digests, and tool
/// version. Re-running a command with the recorded seed reproduces its
/// numeric outputs byte for byte.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub inputs: Vec<InputDigest>,
    pub version: String,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seed: u64, inputs: &[&Path]) -> anyhow::Result<Self> {
        let mut digests = Vec::with_capacity(inputs.len());
        for path in inputs {
            let bytes = fs::read(path)
                .map_err(|e| anyhow::anyhow!("reading {} for digest: {e}", path.display()))?;
            let mut hasher = Sha256::new();
            hasher.update(&bytes);
            let digest = hasher.finalize();
            digests.push(InputDigest {
                path: path.display().to_string(),
                sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
            });
        }
        Ok(Self {
            command: command.to_string(),
            config,
            seed,
            inputs: digests,
            version: env!("CARGO_PKG_VERSION").to_string(),
        })
    }

    /// Writes `<output>.manifest.json` next to a file artifact.
    pub fn write_beside(&self, output: &Path) -> anyhow::Result<()> {
        let mut name = output.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        let path = output.with_file_name(name);
        fs::write(&path, serde_json::to_string_pretty(self)?)
            .map_err(|e| anyhow::anyhow!("writing {}: {e}", path.display()))?;
        Ok(())
    }
}
