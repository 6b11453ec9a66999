//! Run configuration: a JSON object from `--config`, overlaid with flags.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::CliError;

/// Flag values collected as a JSON object, skipping flags that were not given.
#[derive(Default)]
pub struct Overrides(Map<String, Value>);

impl Overrides {
    pub fn put<T: Serialize>(&mut self, key: &str, value: &Option<T>) -> &mut Self {
        if let Some(v) = value {
            let v = serde_json::to_value(v).expect("flag values serialize");
            self.0.insert(key.to_string(), v);
        }
        self
    }

    /// Sets `value` under the object stored at `section`.
    pub fn put_in<T: Serialize>(&mut self, section: &str, key: &str, value: &Option<T>) -> &mut Self {
        if let Some(v) = value {
            let v = serde_json::to_value(v).expect("flag values serialize");
            let entry = self
                .0
                .entry(section.to_string())
                .or_insert_with(|| Value::Object(Map::new()));
            if let Value::Object(m) = entry {
                m.insert(key.to_string(), v);
            }
        }
        self
    }

    pub fn flag(&mut self, key: &str, set: bool) -> &mut Self {
        if set {
            self.0.insert(key.to_string(), Value::Bool(true));
        }
        self
    }
}

/// Reads the `--config` file, if any, and overlays the flags on it.
pub fn merged(config: Option<&Path>, flags: Overrides) -> Result<Map<String, Value>, CliError> {
    let mut base = match config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Invalid(format!("cannot read config {}: {e}", path.display())))?;
            match serde_json::from_str::<Value>(&text) {
                Ok(Value::Object(m)) => m,
                Ok(_) => return Err(CliError::Invalid(format!("config {} must be a JSON object", path.display()))),
                Err(e) => return Err(CliError::Invalid(format!("config {}: {e}", path.display()))),
            }
        }
        None => Map::new(),
    };
    for (key, value) in flags.0 {
        match (base.get_mut(&key), value) {
            (Some(Value::Object(inner)), Value::Object(over)) => inner.extend(over),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
    Ok(base)
}

/// Removes `key` and decodes it, falling back to `default` when absent.
pub fn take<T: DeserializeOwned>(map: &mut Map<String, Value>, key: &str, default: T) -> Result<T, CliError> {
    match map.remove(key) {
        Some(v) => serde_json::from_value(v).map_err(|e| CliError::Invalid(format!("field `{key}`: {e}"))),
        None => Ok(default),
    }
}

/// Removes a required `key` and decodes it.
pub fn require<T: DeserializeOwned>(map: &mut Map<String, Value>, key: &str) -> Result<T, CliError> {
    match map.remove(key) {
        Some(v) => serde_json::from_value(v).map_err(|e| CliError::Invalid(format!("field `{key}`: {e}"))),
        None => Err(CliError::Invalid(format!("missing required field `{key}`"))),
    }
}

/// Decodes what is left of the map as `T`, which rejects unknown keys.
pub fn decode<T: DeserializeOwned>(map: Map<String, Value>, what: &str) -> Result<T, CliError> {
    serde_json::from_value(Value::Object(map)).map_err(|e| CliError::Invalid(format!("{what}: {e}")))
}

/// Fails on any key left over after the known ones were taken.
pub fn finish(map: &Map<String, Value>, what: &str) -> Result<(), CliError> {
    match map.keys().next() {
        Some(key) => Err(CliError::Invalid(format!("{what}: unknown field `{key}`"))),
        None => Ok(()),
    }
}

/// Output directory: the flag, then `LTS_OUT_DIR`, then the working directory.
pub fn out_dir(flag: Option<&Path>) -> Result<PathBuf, CliError> {
    let dir = flag
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os("LTS_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::Invalid(format!("cannot create output directory {}: {e}", dir.display())))?;
    Ok(dir)
}

pub fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", path.display())))
}

pub fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .map_err(|e| CliError::Invalid(format!("cannot create {}: {e}", parent.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::Invalid(format!("cannot write {}: {e}", path.display())))?;
    log::info!("wrote {}", path.display());
    Ok(())
}
