//! Run directories: deterministic artifacts plus a `meta.json` sidecar that
//! holds everything time-dependent.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const OUT_ENV: &str = "OPTPROXY_OUT";
pub const DEFAULT_ROOT: &str = "runs";

/// Output root: the flag, then the environment, then `./runs`.
pub fn output_root(flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_ROOT))
}

/// `<command>-<first 12 hex digits of the provenance hash>`
pub fn default_run_name(command: &str, provenance: &Value) -> String {
    let digest = Sha256::digest(provenance.to_string().as_bytes());
    format!("{command}-{}", &hex::encode(digest)[..12])
}

pub struct RunDir {
    pub path: PathBuf,
    command: String,
    started: SystemTime,
    clock: Instant,
    timings: BTreeMap<String, f64>,
    files: Vec<String>,
}

impl RunDir {
    pub fn create(path: PathBuf, command: &str) -> CliResult<Self> {
        std::fs::create_dir_all(&path).map_err(|e| CliError::io(&path, e))?;
        Ok(Self {
            path,
            command: command.to_string(),
            started: SystemTime::now(),
            clock: Instant::now(),
            timings: BTreeMap::new(),
            files: Vec::new(),
        })
    }

    pub fn join(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> CliResult<()> {
        let p = self.join(name);
        std::fs::write(&p, text).map_err(|e| CliError::io(&p, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Pretty JSON with every `*seconds*` field moved to the sidecar.
    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut v = serde_json::to_value(value).map_err(optproxy::Error::from)?;
        let stem = name.trim_end_matches(".json");
        strip_timings(&mut v, stem, &mut self.timings);
        let text = serde_json::to_string_pretty(&v).map_err(optproxy::Error::from)?;
        self.write_text(name, &(text + "\n"))
    }

    /// Record a file written by other code.
    pub fn record(&mut self, name: &str) {
        self.files.push(name.to_string());
    }

    pub fn timing(&mut self, key: &str, seconds: f64) {
        self.timings.insert(key.to_string(), seconds);
    }

    pub fn finish(mut self, args: &[String]) -> CliResult<PathBuf> {
        let secs = |t: SystemTime| t.duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
        self.timings.insert("total".into(), self.clock.elapsed().as_secs_f64());
        let meta = serde_json::json!({
            "command": self.command,
            "args": args,
            "version": env!("CARGO_PKG_VERSION"),
            "git_hash": git_hash(),
            "started_unix": secs(self.started),
            "finished_unix": secs(SystemTime::now()),
            "timings_seconds": self.timings,
            "artifacts": self.files,
        });
        let p = self.join("meta.json");
        let text = serde_json::to_string_pretty(&meta).map_err(optproxy::Error::from)?;
        std::fs::write(&p, text + "\n").map_err(|e| CliError::io(&p, e))?;
        Ok(self.path)
    }
}

fn strip_timings(v: &mut Value, prefix: &str, out: &mut BTreeMap<String, f64>) {
    match v {
        Value::Object(map) => {
            let keys: Vec<String> = map.keys().filter(|k| k.contains("seconds")).cloned().collect();
            for k in keys {
                if let Some(x) = map.remove(&k) {
                    match x {
                        Value::Number(n) => {
                            out.insert(format!("{prefix}.{k}"), n.as_f64().unwrap_or(f64::NAN));
                        }
                        Value::Array(a) => {
                            let vals: Vec<f64> = a.iter().filter_map(Value::as_f64).collect();
                            let mean = vals.iter().sum::<f64>() / vals.len().max(1) as f64;
                            out.insert(format!("{prefix}.{k}.mean"), mean);
                        }
                        _ => {}
                    }
                }
            }
            for (k, child) in map.iter_mut() {
                strip_timings(child, &format!("{prefix}.{k}"), out);
            }
        }
        Value::Array(items) => {
            for child in items {
                strip_timings(child, prefix, out);
            }
        }
        _ => {}
    }
}

fn git_hash() -> String {
    std::process::Command::new("git")
        .args(["rev-parse", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}
