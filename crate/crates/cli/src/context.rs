//! Per-run state: effective config, output directory and the provenance
//! record (config hash, seed, input and output hashes).

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use emgspeech::io::{GestureManifest, Manifest};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::new("missing_input", format!("{}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Serialize)]
pub struct Provenance {
    pub command: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub struct Context {
    pub command: &'static str,
    pub cfg: PipelineConfig,
    pub out: PathBuf,
    inputs: Mutex<BTreeMap<String, String>>,
    outputs: Mutex<BTreeSet<String>>,
}

impl Context {
    pub fn new(command: &'static str, cfg: PipelineConfig) -> CliResult<Self> {
        let out = cfg.paths.out.clone();
        fs::create_dir_all(&out)?;
        Ok(Self {
            command,
            cfg,
            out,
            inputs: Mutex::new(BTreeMap::new()),
            outputs: Mutex::new(BTreeSet::new()),
        })
    }

    /// Records the hash of a file the run reads.
    pub fn input(&self, path: &Path) -> CliResult<()> {
        let hash = sha256_file(path)?;
        self.inputs
            .lock()
            .expect("input log")
            .insert(path.display().to_string(), hash);
        Ok(())
    }

    /// Records an input unless it is absent.
    pub fn input_if_exists(&self, path: &Path) -> CliResult<()> {
        if path.exists() {
            self.input(path)?;
        }
        Ok(())
    }

    pub fn manifest_path(&self) -> CliResult<PathBuf> {
        self.cfg
            .paths
            .manifest
            .clone()
            .ok_or_else(|| CliError::missing("--manifest"))
    }

    fn checked_input(&self, path: &Path) -> CliResult<()> {
        if !path.exists() {
            return Err(CliError::new(
                "missing_input",
                format!("{} does not exist", path.display()),
            ));
        }
        self.input(path)
    }

    /// Loads the manifest with its root made absolute, so rewritten
    /// manifests in the output directory still resolve the original files.
    pub fn manifest(&self) -> CliResult<Manifest> {
        let path = self.manifest_path()?;
        self.checked_input(&path)?;
        let mut m = Manifest::load(&path)?;
        m.root = absolute_root(&m.root)?;
        Ok(m)
    }

    pub fn gesture_manifest(&self) -> CliResult<GestureManifest> {
        let path = self.manifest_path()?;
        self.checked_input(&path)?;
        let mut m = GestureManifest::load(&path)?;
        m.root = absolute_root(&m.root)?;
        Ok(m)
    }

    pub fn checkpoint_path(&self) -> CliResult<PathBuf> {
        let path = self
            .cfg
            .paths
            .checkpoint
            .clone()
            .ok_or_else(|| CliError::missing("--checkpoint"))?;
        self.checked_input(&path)?;
        Ok(path)
    }

    pub fn out_path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    /// Registers a file written under the output directory.
    pub fn output(&self, rel: &str) {
        self.outputs.lock().expect("output log").insert(rel.to_string());
    }

    pub fn write_text(&self, rel: &str, text: &str) -> CliResult<()> {
        let path = self.out_path(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, text)?;
        self.output(rel);
        Ok(())
    }

    pub fn write_json(&self, rel: &str, value: &impl Serialize) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(rel, &text)
    }

    /// Echoes the effective config and writes the provenance record.
    pub fn finish(&self) -> CliResult<()> {
        let config = self.cfg.to_toml();
        self.write_text(&format!("{}.config.toml", self.command), &config)?;
        let outputs = self
            .outputs
            .lock()
            .expect("output log")
            .iter()
            .map(|rel| Ok((rel.clone(), sha256_file(&self.out_path(rel))?)))
            .collect::<CliResult<BTreeMap<_, _>>>()?;
        let record = Provenance {
            command: self.command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: sha256_hex(config.as_bytes()),
            seed: self.cfg.seed,
            inputs: self.inputs.lock().expect("input log").clone(),
            outputs,
        };
        let mut text = serde_json::to_string_pretty(&record)?;
        text.push('\n');
        fs::write(self.out_path(&format!("{}.provenance.json", self.command)), text)?;
        Ok(())
    }
}

fn absolute_root(root: &Path) -> CliResult<PathBuf> {
    if root.as_os_str().is_empty() {
        return Ok(std::env::current_dir()?);
    }
    Ok(std::path::absolute(root)?)
}
