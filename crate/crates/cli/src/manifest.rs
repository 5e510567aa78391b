use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::{domain, Failure};

/// Effective options plus content hashes of every file read and written.
/// Holds no timestamps, so identical runs write identical manifests.
#[derive(Serialize)]
pub(crate) struct Manifest {
    command: String,
    version: &'static str,
    options: BTreeMap<String, Value>,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

fn sha256_file(path: &Path) -> Result<String, Failure> {
    let bytes = std::fs::read(path).map_err(|e| domain(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl Manifest {
    pub(crate) fn new(command: &str, options: &impl Serialize) -> Self {
        let mut m = Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            options: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        };
        m.set("args", options);
        m
    }

    pub(crate) fn set(&mut self, key: &str, value: &impl Serialize) {
        self.options.insert(key.to_string(), serde_json::to_value(value).expect("options serialize"));
    }

    pub(crate) fn input(&mut self, path: &Path) -> Result<(), Failure> {
        let hash = sha256_file(path)?;
        self.inputs.insert(path.display().to_string(), hash);
        Ok(())
    }

    pub(crate) fn input_bytes(&mut self, name: &str, bytes: &[u8]) {
        self.inputs.insert(name.to_string(), hex::encode(Sha256::digest(bytes)));
    }

    pub(crate) fn output(&mut self, path: &Path) -> Result<(), Failure> {
        let hash = sha256_file(path)?;
        self.outputs.insert(path.display().to_string(), hash);
        Ok(())
    }

    pub(crate) fn write_to(&self, path: &Path) -> Result<(), Failure> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| domain(format!("{}: {e}", path.display())))
    }

    /// Writes `<output>.manifest.json`.
    pub(crate) fn write_next_to(&self, output: &Path) -> Result<(), Failure> {
        let mut name = output.as_os_str().to_owned();
        name.push(".manifest.json");
        self.write_to(Path::new(&name))
    }
}
