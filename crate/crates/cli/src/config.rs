//! Config-file merging and provenance stamps.

use std::collections::BTreeSet;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Parsed TOML file as JSON, so it can be overlaid on flag values.
pub fn load_file(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let table: toml::Table =
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
    serde_json::to_value(table).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

pub fn keys_of<T: Serialize + Default>() -> BTreeSet<String> {
    match serde_json::to_value(T::default()) {
        Ok(Value::Object(m)) => m.into_iter().map(|(k, _)| k).collect(),
        _ => BTreeSet::new(),
    }
}

/// Flags win over the `[command]` table, which wins over top-level keys.
///
/// `all_keys` is the union over commands, so a top-level key meant for a
/// different command is accepted while a misspelt one is not.
pub fn merge<T: Serialize + DeserializeOwned + Default>(
    flags: &T,
    file: Option<&Value>,
    command: &str,
    all_keys: &BTreeSet<String>,
) -> Result<T, CliError> {
    let Some(file) = file else {
        return Ok(flags_clone(flags)?);
    };
    let own = keys_of::<T>();
    let mut merged = Map::new();
    let top = file.as_object().cloned().unwrap_or_default();
    for (k, v) in &top {
        if v.is_object() {
            continue;
        }
        if !all_keys.contains(k) {
            return Err(CliError::Usage(format!("unknown config key `{k}`")));
        }
        if own.contains(k) {
            merged.insert(k.clone(), v.clone());
        }
    }
    if let Some(Value::Object(section)) = top.get(command) {
        for (k, v) in section {
            if !own.contains(k) {
                return Err(CliError::Usage(format!("unknown key `{k}` in [{command}]")));
            }
            merged.insert(k.clone(), v.clone());
        }
    }
    for (k, v) in as_object(flags)? {
        if !v.is_null() {
            merged.insert(k, v);
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::Usage(format!("config: {e}")))
}

fn as_object<T: Serialize>(v: &T) -> Result<Map<String, Value>, CliError> {
    match serde_json::to_value(v) {
        Ok(Value::Object(m)) => Ok(m),
        _ => Err(CliError::Runtime("options do not serialize to a table".into())),
    }
}

fn flags_clone<T: Serialize + DeserializeOwned>(v: &T) -> Result<T, CliError> {
    serde_json::from_value(Value::Object(as_object(v)?)).map_err(|e| CliError::Runtime(e.to_string()))
}

/// Who made a file: tool version, seed and a digest of the resolved options.
#[derive(Clone, Debug)]
pub struct Provenance {
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
}

impl Provenance {
    pub fn new<T: Serialize>(command: &str, resolved: &T, seed: u64) -> Provenance {
        // serde_json maps are ordered, so the digest does not depend on flag order;
        // where the files go does not change what is in them
        let mut options = serde_json::to_value(resolved).unwrap_or(Value::Null);
        if let Value::Object(m) = &mut options {
            m.remove("out");
        }
        let canonical = serde_json::to_string(&serde_json::json!({ "command": command, "options": options }))
            .unwrap_or_default();
        let digest = Sha256::digest(canonical.as_bytes());
        let config_hash = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
        Provenance {
            command: command.to_string(),
            seed,
            config_hash,
        }
    }

    /// One `#` line for the top of a CSV table.
    pub fn header(&self) -> String {
        format!(
            "# liesym {} command={} seed={} config={}\n",
            env!("CARGO_PKG_VERSION"),
            self.command,
            self.seed,
            self.config_hash
        )
    }

    pub fn json(&self) -> Value {
        serde_json::json!({
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "seed": self.seed,
            "config_hash": self.config_hash,
        })
    }
}
