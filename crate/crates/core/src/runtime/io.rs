//! Reading inputs and writing outputs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde_json::Value;

use crate::error::{Error, Result};

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

/// Parse JSON; any syntax or schema failure is a configuration error.
pub fn parse_json<T: DeserializeOwned>(text: &str, what: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Config(format!("{what}: {e}")))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    parse_json(&read_text(path)?, &path.display().to_string())
}

/// An inline object, or a string naming a file relative to `base`.
pub fn resolve<T: DeserializeOwned>(value: &Value, base: &Path, what: &str) -> Result<T> {
    match value {
        Value::String(rel) => read_json(&base.join(rel)),
        other => T::deserialize(other).map_err(|e| Error::Config(format!("{what}: {e}"))),
    }
}

/// Write every `(name, contents)` pair under `dir`, creating it if needed.
pub fn write_outputs(dir: &Path, files: &[(String, String)]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    files
        .iter()
        .map(|(name, contents)| {
            let path = dir.join(name);
            fs::write(&path, contents)?;
            Ok(path)
        })
        .collect()
}
