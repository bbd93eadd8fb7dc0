//! Run manifests: hashed inputs and outputs plus the resolved parameters.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::{is_spec_file, RunConfig};
use crate::error::CliResult;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
    /// Digest of the binary payload next to a field header.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload_sha256: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub cli_version: String,
    pub core_version: String,
    pub subcommand: String,
    pub seed: u64,
    pub parameters: Value,
    pub inputs: Vec<FileDigest>,
    /// Paths relative to the output directory, in write order.
    pub outputs: Vec<FileDigest>,
    pub exit_code: i32,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

fn digest(path: &Path, shown: &Path) -> CliResult<FileDigest> {
    let bin = fundform::fields::io::payload_path(path);
    let header = path.extension().is_some_and(|e| e == "json") && !is_spec_file(path) && bin.exists();
    Ok(FileDigest {
        path: shown.to_path_buf(),
        sha256: sha256_file(path)?,
        payload_sha256: if header { Some(sha256_file(&bin)?) } else { None },
    })
}

impl Manifest {
    pub fn build(cfg: &RunConfig, outputs: &[PathBuf], exit_code: i32) -> CliResult<Self> {
        let inputs = cfg.inputs.iter().map(|p| digest(p, p)).collect::<CliResult<_>>()?;
        let outputs = outputs
            .iter()
            .filter(|p| !p.extension().is_some_and(|e| e == "bin"))
            .map(|p| digest(&cfg.output_dir.join(p), p))
            .collect::<CliResult<_>>()?;
        Ok(Self {
            tool: "fundform".into(),
            cli_version: env!("CARGO_PKG_VERSION").into(),
            core_version: fundform::VERSION.into(),
            subcommand: cfg.subcommand.clone(),
            seed: cfg.seed,
            parameters: cfg.parameters(),
            inputs,
            outputs,
            exit_code,
        })
    }

    pub fn write(&self, dir: &Path) -> CliResult<PathBuf> {
        let path = dir.join(MANIFEST_NAME);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text)?;
        Ok(path)
    }
}
