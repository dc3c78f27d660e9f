//! JSON configuration files.
//!
//! Any numeric key may instead be given in decibels: `name_db` is converted
//! to `10^(x/10)` and `name_dbm` to `10^((x - 30)/10)` watts before the
//! document is checked against the schema. Arrays of numbers convert
//! element-wise.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::simkit::SimulationConfig;

/// `x` dB as a linear ratio.
pub fn from_db(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

/// `x` dBm in watts.
pub fn from_dbm(x: f64) -> f64 {
    10f64.powf((x - 30.0) / 10.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub sim: SimulationConfig,
    /// Primary output file.
    pub out: Option<PathBuf>,
    /// Summary JSON for `simulate` and `eval-feedback`.
    pub summary: Option<PathBuf>,
}

type Unit = fn(f64) -> f64;

fn convert(value: &mut Value, path: &str) -> Result<()> {
    match value {
        Value::Object(map) => {
            let mut converted = Map::new();
            for (key, mut v) in std::mem::take(map) {
                let here = if path.is_empty() {
                    key.clone()
                } else {
                    format!("{path}.{key}")
                };
                let (name, f): (String, Option<Unit>) = if let Some(base) = key.strip_suffix("_dbm")
                {
                    (base.to_string(), Some(from_dbm))
                } else if let Some(base) = key.strip_suffix("_db") {
                    (base.to_string(), Some(from_db))
                } else {
                    (key, None)
                };
                match f {
                    Some(f) => apply(&mut v, f, &here)?,
                    None => convert(&mut v, &here)?,
                }
                if converted.contains_key(&name) {
                    return Err(Error::Format(format!(
                        "{here}: `{name}` is given in more than one unit"
                    )));
                }
                converted.insert(name, v);
            }
            *map = converted;
            Ok(())
        }
        Value::Array(items) => {
            for (i, v) in items.iter_mut().enumerate() {
                convert(v, &format!("{path}[{i}]"))?;
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

fn apply(value: &mut Value, f: Unit, path: &str) -> Result<()> {
    match value {
        Value::Number(n) => {
            let x = n.as_f64().expect("JSON numbers are finite");
            *value = serde_json::Number::from_f64(f(x))
                .map(Value::Number)
                .ok_or_else(|| {
                    Error::Format(format!("{path}: {x} does not convert to a finite value"))
                })?;
            Ok(())
        }
        Value::Array(items) => {
            for (i, v) in items.iter_mut().enumerate() {
                apply(v, f, &format!("{path}[{i}]"))?;
            }
            Ok(())
        }
        _ => Err(Error::Format(format!(
            "{path}: decibel values must be numbers"
        ))),
    }
}

fn parse_value(text: &str, source: &str) -> Result<Value> {
    let mut value: Value = serde_json::from_str(text)
        .map_err(|e| Error::Format(format!("{source}:{}:{}: {e}", e.line(), e.column())))?;
    convert(&mut value, "").map_err(|e| Error::Format(format!("{source}: {e}")))?;
    Ok(value)
}

/// Parse JSON text, apply unit conversion and deserialize into `T`.
/// `source` names the input in error messages.
pub fn parse_document<T: DeserializeOwned>(text: &str, source: &str) -> Result<T> {
    from_value(parse_value(text, source)?, source)
}

fn from_value<T: DeserializeOwned>(value: Value, source: &str) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        Error::Format(format!("{source}: at `{path}`: {}", e.into_inner()))
    })
}

pub fn parse_config(text: &str, source: &str) -> Result<CliConfig> {
    let mut value = parse_value(text, source)?;
    let Value::Object(map) = &mut value else {
        return Err(Error::Format(format!("{source}: expected a JSON object")));
    };
    let mut path = |key: &str| -> Result<Option<PathBuf>> {
        match map.remove(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(PathBuf::from(s))),
            Some(_) => Err(Error::Format(format!(
                "{source}: at `{key}`: expected a path string"
            ))),
        }
    };
    let out = path("out")?;
    let summary = path("summary")?;
    let sim: SimulationConfig = from_value(value, source)?;
    sim.validate()
        .map_err(|e| Error::Format(format!("{source}: {e}")))?;
    Ok(CliConfig { sim, out, summary })
}

pub fn load_config(path: Option<&Path>) -> Result<CliConfig> {
    match path {
        None => Ok(CliConfig {
            sim: SimulationConfig::default(),
            out: None,
            summary: None,
        }),
        Some(p) => parse_config(&read(p)?, &p.display().to_string()),
    }
}

pub fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}
