//! Config resolution: a JSON file supplies defaults, flags that were given
//! override individual keys, serde fills the rest.

use std::path::Path;

use anyhow::Context;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::failure::usage;

pub fn read_config(path: Option<&Path>) -> anyhow::Result<Map<String, Value>> {
    let Some(path) = path else {
        return Ok(Map::new());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(usage(format!("{}: config must be a JSON object", path.display()))),
        Err(e) => Err(usage(format!("{}: {e}", path.display()))),
    }
}

/// Overlays the non-null fields of `flags` on `base` and deserializes the result.
pub fn resolve<T: DeserializeOwned>(mut base: Map<String, Value>, flags: &impl Serialize) -> anyhow::Result<T> {
    match serde_json::to_value(flags)? {
        Value::Object(map) => {
            for (k, v) in map {
                if !v.is_null() {
                    base.insert(k, v);
                }
            }
        }
        other => anyhow::bail!("flags serialized to {other}"),
    }
    serde_json::from_value(Value::Object(base)).map_err(|e| usage(e.to_string()))
}
