//! Output directories and run manifests.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;

pub const MANIFEST_FILE: &str = "manifest.txt";

/// SHA-256 of the serialized config, hex encoded.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    hex::encode(Sha256::digest(cfg.serialize().as_bytes()))
}

/// Identity of a run: what ran, with which config and seeds, and what it wrote.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seeds: Vec<(String, u64)>,
    pub artifacts: Vec<String>,
    pub version: String,
}

impl RunManifest {
    pub fn new(command: &str, cfg: &ExperimentConfig) -> Self {
        Self {
            command: command.to_string(),
            config_hash: config_hash(cfg),
            seeds: vec![("master".into(), cfg.seed)],
            artifacts: Vec::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "command = {}\nversion = {}\nconfig_hash = {}\n",
            self.command, self.version, self.config_hash
        );
        for (name, seed) in &self.seeds {
            s.push_str(&format!("seed.{name} = {seed}\n"));
        }
        for a in &self.artifacts {
            s.push_str(&format!("artifact = {a}\n"));
        }
        s
    }

    /// Parse the text form (used to verify manifests after a run).
    pub fn parse(text: &str) -> Option<Self> {
        let mut m = RunManifest {
            command: String::new(),
            config_hash: String::new(),
            seeds: Vec::new(),
            artifacts: Vec::new(),
            version: String::new(),
        };
        for line in text.lines() {
            let (k, v) = line.split_once(" = ")?;
            match k {
                "command" => m.command = v.into(),
                "version" => m.version = v.into(),
                "config_hash" => m.config_hash = v.into(),
                "artifact" => m.artifacts.push(v.into()),
                _ => m.seeds.push((k.strip_prefix("seed.")?.into(), v.parse().ok()?)),
            }
        }
        Some(m)
    }
}

/// An output directory that records every file written through it.
#[derive(Debug)]
pub struct OutDir {
    root: PathBuf,
    manifest: RunManifest,
}

impl OutDir {
    pub fn create(root: &Path, manifest: RunManifest) -> io::Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf(), manifest })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn add_seed(&mut self, name: &str, seed: u64) {
        self.manifest.seeds.push((name.to_string(), seed));
    }

    /// Write `contents` to `rel` (slash-separated, relative to the root).
    pub fn write(&mut self, rel: &str, contents: &str) -> io::Result<PathBuf> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, contents)?;
        if !self.manifest.artifacts.iter().any(|a| a == rel) {
            self.manifest.artifacts.push(rel.to_string());
        }
        Ok(path)
    }

    /// Write the manifest and return it.
    pub fn finish(self) -> io::Result<RunManifest> {
        fs::write(self.root.join(MANIFEST_FILE), self.manifest.to_text())?;
        Ok(self.manifest)
    }
}
