//! Artifact plumbing: atomic writes, config echo, prediction files.

use std::error::Error;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

pub type AnyError = Box<dyn Error>;

/// Writes via a temp file plus rename so partial artifacts never appear.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), AnyError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Standard artifact envelope: tool version and config echo around a result.
#[derive(Serialize)]
pub struct Artifact<T: Serialize> {
    pub tool_version: &'static str,
    pub config_echo: serde_json::Value,
    pub result: T,
}

pub fn write_artifact<T: Serialize>(
    path: &Path,
    config_echo: serde_json::Value,
    result: T,
) -> Result<(), AnyError> {
    let artifact = Artifact { tool_version: fairbound::VERSION, config_echo, result };
    let mut text = serde_json::to_string_pretty(&artifact)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// One prediction per line, values in [0,1]; a `pred` header line is
/// tolerated.
pub fn read_predictions(path: &Path) -> Result<Vec<f64>, AnyError> {
    let text = fs::read_to_string(path)?;
    let mut preds = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.eq_ignore_ascii_case("pred")) {
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|_| format!("line {}: `{line}` is not a number", i + 1))?;
        if !(0.0..=1.0).contains(&v) {
            return Err(format!("line {}: prediction {v} outside [0,1]", i + 1).into());
        }
        preds.push(v);
    }
    if preds.is_empty() {
        return Err("prediction file has no values".into());
    }
    Ok(preds)
}

pub fn out_dir(out: &Option<PathBuf>) -> Result<PathBuf, AnyError> {
    let dir = out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}
