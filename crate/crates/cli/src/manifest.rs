use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

/// Inputs keep the path as given; outputs are named relative to the
/// output directory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

/// One per command run, written last as `manifest.json` in the output
/// directory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub version: String,
    pub seed: u64,
    pub threads: usize,
    /// Resolved configuration, keyed by section. Passing this file back
    /// with `--config` reruns the command with the same settings.
    pub config: Map<String, Value>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub status: String,
    pub wall_clock_seconds: f64,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Collects inputs, outputs and resolved config while a command runs.
pub struct Run {
    pub command: String,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub threads: usize,
    config: Map<String, Value>,
    inputs: Vec<FileRecord>,
    outputs: Vec<FileRecord>,
    started: Instant,
}

impl Run {
    pub fn new(command: &str, out_dir: &Path, seed: u64, threads: usize) -> Result<Run> {
        fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
        Ok(Run {
            command: command.to_string(),
            out_dir: out_dir.to_path_buf(),
            seed,
            threads,
            config: Map::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileRecord {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    pub fn config<T: Serialize>(&mut self, section: &str, value: &T) -> Result<()> {
        self.config.insert(section.to_string(), serde_json::to_value(value)?);
        Ok(())
    }

    /// Writes `name` in the output directory and records its hash.
    pub fn write(&mut self, name: &str, contents: &[u8]) -> Result<PathBuf> {
        let path = self.out_dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(FileRecord {
            path: name.to_string(),
            sha256: hex::encode(Sha256::digest(contents)),
        });
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    pub fn finish(self, status: &str) -> Result<PathBuf> {
        let manifest = RunManifest {
            command: self.command,
            argv: std::env::args().collect(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.seed,
            threads: self.threads,
            config: self.config,
            inputs: self.inputs,
            outputs: self.outputs,
            status: status.to_string(),
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        };
        let path = self.out_dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// The `--config` document. A run manifest is accepted too: its `config`
/// object is used.
#[derive(Clone, Debug, Default)]
pub struct ConfigDoc(Map<String, Value>);

impl ConfigDoc {
    pub fn load(path: Option<&Path>) -> Result<ConfigDoc> {
        let Some(path) = path else {
            return Ok(ConfigDoc::default());
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let v: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let Value::Object(mut map) = v else {
            anyhow::bail!("{} must hold a JSON object", path.display());
        };
        if map.contains_key("command") {
            if let Some(Value::Object(cfg)) = map.remove("config") {
                return Ok(ConfigDoc(cfg));
            }
        }
        Ok(ConfigDoc(map))
    }

    pub fn section(&self, name: &str) -> Option<&Value> {
        self.0.get(name)
    }

    pub fn seed(&self) -> Option<u64> {
        self.0.get("seed").and_then(Value::as_u64)
    }
}

/// Recursively overwrites keys of `base` with those of `top`.
pub fn merge(base: &mut Value, top: &Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, t) => *b = t.clone(),
    }
}

/// `defaults`, then the config section, then the non-null flag values.
pub fn resolve<T: Serialize + for<'de> Deserialize<'de>>(
    defaults: &T,
    section: Option<&Value>,
    flags: Value,
) -> Result<T> {
    let mut v = serde_json::to_value(defaults)?;
    if let Some(s) = section {
        merge(&mut v, s);
    }
    merge(&mut v, &strip_nulls(flags));
    serde_json::from_value(v).context("invalid configuration")
}

fn strip_nulls(v: Value) -> Value {
    match v {
        Value::Object(m) => Value::Object(
            m.into_iter()
                .filter(|(_, v)| !v.is_null())
                .map(|(k, v)| (k, strip_nulls(v)))
                .collect(),
        ),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct P {
        a: u32,
        b: String,
        inner: Inner,
    }

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Inner {
        x: f64,
        y: f64,
    }

    #[test]
    fn flags_beat_config_beat_defaults() {
        let d = P {
            a: 1,
            b: "d".into(),
            inner: Inner { x: 0.0, y: 0.0 },
        };
        let section = json!({"a": 2, "inner": {"x": 5.0}});
        let r: P = resolve(&d, Some(&section), json!({"a": 3, "b": null, "inner": {"y": 7.0}})).unwrap();
        assert_eq!(
            r,
            P {
                a: 3,
                b: "d".into(),
                inner: Inner { x: 5.0, y: 7.0 }
            }
        );
    }
}
