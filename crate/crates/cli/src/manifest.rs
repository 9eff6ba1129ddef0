use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliResult;
use crate::io::OutDir;

/// Record of one invocation, written as `manifest.json` next to its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    /// SHA-256 of the input bytes, hex encoded.
    pub input_hash: Option<String>,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub wall_time_s: f64,
    pub outputs: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_manifest(
    out: &mut OutDir,
    command: &str,
    config: serde_json::Value,
    input_hash: Option<String>,
    seed: Option<u64>,
    started: Instant,
) -> CliResult<()> {
    let manifest = RunManifest {
        command: command.to_string(),
        config,
        input_hash,
        seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_s: started.elapsed().as_secs_f64(),
        outputs: out.written().to_vec(),
    };
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| crate::error::CliError::runtime(format!("manifest encoding: {e}")))?;
    out.write("manifest.json", text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
