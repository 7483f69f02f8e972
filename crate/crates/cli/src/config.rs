//! Layered configuration: built-in defaults, then a TOML or JSON file, then flags.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::UsageError;

/// Recursively overlays `over` onto `base`; objects merge key by key, other values replace.
pub fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, o) => *b = o,
    }
}

/// Reads a config file by extension. A run manifest is accepted too; its
/// `config` member is used.
pub fn read_config_file(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let value: Value = match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => toml::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())))?,
        Some("json") => serde_json::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())))?,
        _ => bail!(UsageError(format!("config {} must end in .toml or .json", path.display()))),
    };
    match value {
        Value::Object(mut m) if m.contains_key("command") && m.contains_key("config") => Ok(m.remove("config").unwrap_or_default()),
        Value::Object(_) => Ok(value),
        _ => bail!(UsageError(format!("config {} must hold a table", path.display()))),
    }
}

/// Builder for the flag layer: only flags that were given are inserted.
#[derive(Default)]
pub struct Overrides(Map<String, Value>);

impl Overrides {
    pub fn set<T: Serialize>(&mut self, path: &str, value: Option<T>) -> &mut Self {
        if let Some(v) = value {
            let mut keys: Vec<&str> = path.split('.').collect();
            let last = keys.pop().expect("non-empty path");
            let mut node = &mut self.0;
            for k in keys {
                node = node
                    .entry(k.to_string())
                    .or_insert_with(|| Value::Object(Map::new()))
                    .as_object_mut()
                    .expect("override paths do not collide");
            }
            node.insert(last.to_string(), serde_json::to_value(v).expect("serializable flag"));
        }
        self
    }

    pub fn into_value(self) -> Value {
        Value::Object(self.0)
    }
}

/// Merges the layers and deserializes; unknown keys are usage errors.
pub fn resolve<T: Serialize + DeserializeOwned>(defaults: &T, file: Option<Value>, flags: Value) -> Result<T> {
    let mut v = serde_json::to_value(defaults)?;
    if let Some(f) = file {
        merge(&mut v, f);
    }
    merge(&mut v, flags);
    serde_json::from_value(v).map_err(|e| UsageError(format!("invalid configuration: {e}")).into())
}

/// Peeks at one dotted key across the file and flag layers, flags first.
pub fn peek<T: DeserializeOwned>(path: &str, file: Option<&Value>, flags: &Value) -> Result<Option<T>> {
    let find = |root: &Value| -> Option<Value> {
        path.split('.').try_fold(root, |node, k| node.get(k)).cloned()
    };
    match find(flags).or_else(|| file.and_then(find)) {
        Some(v) => Ok(Some(serde_json::from_value(v).map_err(|e| UsageError(format!("{path}: {e}")))?)),
        None => Ok(None),
    }
}
