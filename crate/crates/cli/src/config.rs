//! TOML config files. Keys mirror the long flags: `out`, `threads` and
//! `no-timing` at top level, experiment flags in a table named after the
//! subcommand.
//!
//! ```toml
//! out = "runs/gamma2"
//!
//! [resolvent-scan]
//! gamma = 2.0
//! h-min = 0.002
//! ```

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::{usage, CommonArgs, OUT_ENV};

const SUBCOMMANDS: [&str; 6] =
    ["resolvent-scan", "helmholtz-constant", "wave-decay", "sphere-tube", "quasimode-check", "report"];

#[derive(Debug, Default, Clone, PartialEq)]
pub struct ConfigFile {
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub no_timing: Option<bool>,
    /// Keys of the table for the running subcommand.
    pub section: Map<String, Value>,
}

/// Parses `text` and keeps the table belonging to `subcommand`.
pub fn parse(text: &str, subcommand: &str) -> Result<ConfigFile> {
    let table: toml::Table = toml::from_str(text).map_err(|e| usage(format!("config is not valid TOML: {e}")))?;
    let mut file = ConfigFile::default();
    for (key, value) in table {
        match key.as_str() {
            "out" => file.out = Some(PathBuf::from(expect_str(&key, &value)?)),
            "threads" => {
                let n = value.as_integer().filter(|n| *n > 0).ok_or_else(|| usage("config key `threads` must be a positive integer"))?;
                file.threads = Some(n as usize);
            }
            "no-timing" => file.no_timing = Some(value.as_bool().ok_or_else(|| usage("config key `no-timing` must be a boolean"))?),
            k if SUBCOMMANDS.contains(&k) => {
                if k == subcommand {
                    match serde_json::to_value(&value)? {
                        Value::Object(map) => file.section = map,
                        _ => return Err(usage(format!("config entry `{k}` must be a table"))),
                    }
                }
            }
            other => return Err(usage(format!("unknown config key `{other}`"))),
        }
    }
    Ok(file)
}

fn expect_str<'a>(key: &str, value: &'a toml::Value) -> Result<&'a str> {
    value.as_str().ok_or_else(|| usage(format!("config key `{key}` must be a string")))
}

pub fn load(path: Option<&Path>, subcommand: &str) -> Result<ConfigFile> {
    match path {
        None => Ok(ConfigFile::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))
                .map_err(|e| usage(format!("{e:#}")))?;
            parse(&text, subcommand)
        }
    }
}

/// Overlays the flags given on the command line onto the config table.
/// Fields left unset on the command line serialize as `null` and are skipped.
pub fn merge<A: Serialize + DeserializeOwned>(flags: &A, file: &ConfigFile) -> Result<A> {
    let mut merged = file.section.clone();
    if let Value::Object(set) = serde_json::to_value(flags)? {
        for (k, v) in set {
            if !v.is_null() {
                merged.insert(k, v);
            }
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| usage(format!("invalid configuration: {e}")))
}

/// Settings shared by every subcommand after merging.
#[derive(Debug, Clone, PartialEq)]
pub struct Common {
    pub out: PathBuf,
    pub threads: Option<usize>,
    pub no_timing: bool,
}

pub fn common(flags: &CommonArgs, file: &ConfigFile) -> Result<Common> {
    let out = flags
        .out
        .clone()
        .or_else(|| file.out.clone())
        .or_else(|| std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"));
    let threads = flags.threads.or(file.threads);
    if threads == Some(0) {
        return Err(usage("--threads must be positive"));
    }
    Ok(Common { out, threads, no_timing: flags.no_timing || file.no_timing.unwrap_or(false) })
}
