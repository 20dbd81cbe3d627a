//! Run configuration. A config is one JSON document; command-line flags
//! override it, and it overrides the built-in defaults.

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value as Json};

use crate::units::{Dimension, Value};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Evaluate,
    Optimize,
    Sweep,
    Robustness,
    Vstirap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Destination file; standard output when absent.
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    /// Mode-specific inputs. Numbers are SI; strings may carry a unit suffix.
    #[serde(default)]
    pub parameters: Map<String, Json>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputSpec,
}

impl RunConfig {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            parameters: Map::new(),
            seed: 0,
            output: OutputSpec::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::validation("config", e.to_string()))
    }

    /// Applies a `key=value` override. Dotted keys reach into nested objects
    /// (`fixed.diameter=200um`); values that parse as JSON are taken as JSON,
    /// anything else as a string.
    pub fn set_parameter(&mut self, assignment: &str) -> Result<(), CliError> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::validation("param", format!("expected key=value, got `{assignment}`")))?;
        let value = serde_json::from_str::<Json>(raw).unwrap_or_else(|_| Json::String(raw.to_string()));
        let mut path: Vec<&str> = key.split('.').collect();
        let last = path.pop().filter(|k| !k.is_empty()).ok_or_else(|| CliError::validation("param", "empty key"))?;
        let mut node = &mut self.parameters;
        for part in path {
            let entry = node.entry(part.to_string()).or_insert_with(|| Json::Object(Map::new()));
            node = entry
                .as_object_mut()
                .ok_or_else(|| CliError::validation(part, "is not an object and cannot take nested keys"))?;
        }
        node.insert(last.to_string(), value);
        Ok(())
    }
}

/// Consumes keys from a parameter object and reports any left unread.
pub struct Fields {
    scope: String,
    map: Map<String, Json>,
    used: BTreeSet<String>,
}

impl Fields {
    pub fn new(scope: &str, map: Map<String, Json>) -> Self {
        Self {
            scope: scope.to_string(),
            map,
            used: BTreeSet::new(),
        }
    }

    fn name(&self, key: &str) -> String {
        if self.scope.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.scope)
        }
    }

    fn take(&mut self, key: &str) -> Option<Json> {
        self.used.insert(key.to_string());
        self.map.get(key).cloned()
    }

    pub fn keys(&self) -> Vec<String> {
        self.map.keys().cloned().collect()
    }

    pub fn quantity(&mut self, key: &str, dim: Dimension) -> Result<Option<f64>, CliError> {
        let name = self.name(key);
        self.take(key)
            .map(|j| {
                let v: Value = serde_json::from_value(j).map_err(|_| CliError::validation(&name, "expected a number or a string"))?;
                v.si(&name, dim)
            })
            .transpose()
    }

    pub fn required(&mut self, key: &str, dim: Dimension) -> Result<f64, CliError> {
        let name = self.name(key);
        self.quantity(key, dim)?.ok_or_else(|| CliError::validation(&name, "is required"))
    }

    /// A list given as a JSON array or a comma-separated string.
    pub fn list(&mut self, key: &str, dim: Dimension) -> Result<Option<Vec<f64>>, CliError> {
        let name = self.name(key);
        let items: Vec<Value> = match self.take(key) {
            None => return Ok(None),
            Some(Json::Array(a)) => a
                .into_iter()
                .map(serde_json::from_value)
                .collect::<Result<_, _>>()
                .map_err(|_| CliError::validation(&name, "expected numbers or strings"))?,
            Some(Json::String(s)) => s.split(',').map(|x| Value::Text(x.trim().to_string())).collect(),
            Some(Json::Number(n)) => vec![Value::Number(n.as_f64().unwrap_or(f64::NAN))],
            Some(_) => return Err(CliError::validation(&name, "expected a list")),
        };
        items.iter().map(|v| v.si(&name, dim)).collect::<Result<Vec<_>, _>>().map(Some)
    }

    pub fn count(&mut self, key: &str) -> Result<Option<usize>, CliError> {
        let name = self.name(key);
        self.take(key)
            .map(|j| match j {
                Json::Number(n) => n.as_u64().map(|n| n as usize),
                Json::String(s) => s.trim().parse().ok(),
                _ => None,
            }
            .ok_or_else(|| CliError::validation(&name, "expected a non-negative integer")))
            .transpose()
    }

    pub fn flag(&mut self, key: &str) -> Result<Option<bool>, CliError> {
        let name = self.name(key);
        self.take(key)
            .map(|j| match j {
                Json::Bool(b) => Some(b),
                Json::String(s) => s.parse().ok(),
                _ => None,
            }
            .ok_or_else(|| CliError::validation(&name, "expected true or false")))
            .transpose()
    }

    /// A value deserialised from its JSON form (enums, nested records).
    pub fn typed<T: serde::de::DeserializeOwned>(&mut self, key: &str) -> Result<Option<T>, CliError> {
        let name = self.name(key);
        self.take(key)
            .map(|j| serde_json::from_value(j).map_err(|e| CliError::validation(&name, e.to_string())))
            .transpose()
    }

    pub fn object(&mut self, key: &str) -> Result<Option<Fields>, CliError> {
        let name = self.name(key);
        match self.take(key) {
            None => Ok(None),
            Some(Json::Object(m)) => Ok(Some(Fields::new(&name, m))),
            Some(_) => Err(CliError::validation(&name, "expected an object")),
        }
    }

    pub fn array(&mut self, key: &str) -> Result<Option<Vec<Fields>>, CliError> {
        let name = self.name(key);
        match self.take(key) {
            None => Ok(None),
            Some(Json::Array(items)) => items
                .into_iter()
                .enumerate()
                .map(|(k, item)| match item {
                    Json::Object(m) => Ok(Fields::new(&format!("{name}[{k}]"), m)),
                    _ => Err(CliError::validation(&name, "expected a list of objects")),
                })
                .collect::<Result<_, _>>()
                .map(Some),
            Some(_) => Err(CliError::validation(&name, "expected a list")),
        }
    }

    /// Errors on the first key that was never read.
    pub fn finish(self) -> Result<(), CliError> {
        match self.map.keys().find(|k| !self.used.contains(*k)) {
            Some(k) => Err(CliError::validation(&self.name(k), "unknown key")),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_top_level_keys_are_rejected() {
        assert!(RunConfig::from_json(r#"{"mode": "evaluate", "sead": 3}"#).is_err());
        let c = RunConfig::from_json(r#"{"mode": "sweep", "seed": 3}"#).unwrap();
        assert_eq!((c.mode, c.seed, c.output.format), (Mode::Sweep, 3, Format::Csv));
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let mut c = RunConfig::new(Mode::Sweep);
        c.set_parameter("fixed.diameter=200um").unwrap();
        c.set_parameter("quantity=p_ext").unwrap();
        c.set_parameter("steps=41").unwrap();
        assert_eq!(c.parameters["fixed"]["diameter"], "200um");
        assert_eq!(c.parameters["quantity"], "p_ext");
        assert_eq!(c.parameters["steps"], 41);
        assert!(c.set_parameter("quantity.x=1").is_err());
        assert!(c.set_parameter("novalue").is_err());
    }

    #[test]
    fn fields_report_unread_keys() {
        let map = serde_json::from_str(r#"{"length": "130um", "lenght": 1}"#).unwrap();
        let mut f = Fields::new("", map);
        assert!((f.required("length", Dimension::Length).unwrap() - 130e-6).abs() < 1e-18);
        let err = f.finish().unwrap_err();
        assert_eq!(err.field.as_deref(), Some("lenght"));
    }

    #[test]
    fn lists_accept_arrays_and_strings() {
        let map = serde_json::from_str(r#"{"a": [0.1, "1", 10], "b": "0.1, 1,10"}"#).unwrap();
        let mut f = Fields::new("", map);
        let a = f.list("a", Dimension::Pure).unwrap().unwrap();
        let b = f.list("b", Dimension::Pure).unwrap().unwrap();
        assert_eq!(a, vec![0.1, 1.0, 10.0]);
        assert_eq!(a, b);
    }
}
