use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::config::ExperimentConfig;

/// Reason an invocation stopped short of success.
#[derive(Debug)]
pub enum Failure {
    /// Unreadable input or configuration (exit 2).
    Usage(String),
    /// A check, solve or fit failed (exit 1).
    Domain(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Domain(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Domain(m) => m,
        }
    }
}

pub fn usage(e: impl ToString) -> Failure {
    Failure::Usage(e.to_string())
}

pub fn domain(e: impl ToString) -> Failure {
    Failure::Domain(e.to_string())
}

/// Output directory of one invocation. Every file written through it is
/// listed in `manifest.json`.
pub struct RunDir {
    root: PathBuf,
    command: &'static str,
    hash: String,
    seed: u64,
    files: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config_hash: &'a str,
    seed: u64,
    status: &'a str,
    exit_code: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    reason: Option<&'a str>,
    files: &'a [String],
}

impl RunDir {
    pub fn create(command: &'static str, config: &ExperimentConfig, out: Option<&Path>) -> Result<Self, Failure> {
        let hash = config.hash();
        let root = match (out, &config.outputs.directory) {
            (Some(p), _) => p.to_path_buf(),
            (None, Some(p)) => p.clone(),
            (None, None) => PathBuf::from("runs").join(format!("{command}-{}", &hash[..12])),
        };
        fs::create_dir_all(&root).map_err(|e| usage(format!("cannot create {}: {e}", root.display())))?;
        let mut dir = Self {
            root,
            command,
            hash,
            seed: config.seed,
            files: Vec::new(),
        };
        dir.write("config.toml", &config.to_toml())?;
        Ok(dir)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), Failure> {
        let path = self.root.join(name);
        fs::write(&path, contents).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(())
    }

    /// Writes a JSON report with the command and config hash embedded.
    pub fn report(&mut self, name: &str, body: Value) -> Result<(), Failure> {
        let mut doc = serde_json::json!({
            "command": self.command,
            "config_hash": self.hash,
            "seed": self.seed,
        });
        if let (Some(d), Value::Object(b)) = (doc.as_object_mut(), body) {
            d.extend(b);
        }
        let text = serde_json::to_string_pretty(&doc).map_err(usage)?;
        self.write(name, &(text + "\n"))
    }

    pub fn finish(self, result: &Result<(), Failure>) -> Result<(), Failure> {
        let (status, exit_code, reason) = match result {
            Ok(()) => ("pass", 0, None),
            Err(f) => ("fail", f.exit_code(), Some(f.message())),
        };
        let manifest = Manifest {
            tool: "nlsys",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            config_hash: &self.hash,
            seed: self.seed,
            status,
            exit_code,
            reason,
            files: &self.files,
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(usage)?;
        let path = self.root.join("manifest.json");
        fs::write(&path, text + "\n").map_err(|e| usage(format!("cannot write {}: {e}", path.display())))
    }
}
