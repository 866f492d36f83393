use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use serde_json::Value;

use crate::Failure;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// `<path><suffix>`, e.g. `run.csv` + `.manifest.json`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<(), Failure>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header).context("writing CSV header")?;
    for row in rows {
        w.write_record(&row).with_context(|| format!("writing {}", path.display()))?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).context("serializing JSON")?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct Outcome {
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<Value>,
}

impl Outcome {
    pub fn ok() -> Self {
        Outcome {
            status: "ok",
            failure_time: None,
            detail: None,
        }
    }
}

/// Record of one run, written after every artifact it lists.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: &'static str,
    pub config: Value,
    pub artifact_paths: Vec<String>,
    pub tool_version: &'static str,
    pub timestamp: String,
    pub outcome: Outcome,
}

impl Manifest {
    pub fn new(command: &'static str, config: Value, artifacts: &[PathBuf], outcome: Outcome) -> Self {
        Manifest {
            command,
            config,
            artifact_paths: artifacts.iter().map(|p| p.display().to_string()).collect(),
            tool_version: env!("CARGO_PKG_VERSION"),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            outcome,
        }
    }

    pub fn write(&self, data_path: &Path) -> Result<PathBuf, Failure> {
        let path = sibling(data_path, ".manifest.json");
        write_json(&path, self)?;
        Ok(path)
    }
}

/// Resolved flag values of several argument groups as one JSON object.
pub fn resolved_config(parts: &[Value]) -> Value {
    let mut all = serde_json::Map::new();
    for part in parts {
        if let Value::Object(map) = part {
            for (k, v) in map {
                if !v.is_null() {
                    all.insert(k.clone(), v.clone());
                }
            }
        }
    }
    Value::Object(all)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 123456.789, -2.5e17, f64::MIN_POSITIVE] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(opt_num(None), "");
    }

    #[test]
    fn sibling_paths() {
        assert_eq!(sibling(Path::new("out/run.csv"), ".manifest.json"), PathBuf::from("out/run.csv.manifest.json"));
    }

    #[test]
    fn config_drops_unset_values() {
        let v = resolved_config(&[serde_json::json!({"a": 1.0, "b": null}), serde_json::json!({"c": "x"})]);
        assert_eq!(v, serde_json::json!({"a": 1.0, "c": "x"}));
    }
}
