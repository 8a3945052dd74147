//! Flat `key = value` run files mirrored by command-line flags.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

/// Reads a run file into ordered key/value pairs. Blank lines and lines
/// starting with `#` are ignored.
pub fn read(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("{}:{}: expected key=value, got {line:?}", path.display(), i + 1);
        };
        let key = k.trim().replace('_', "-");
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '-') {
            bail!("{}:{}: bad key {k:?}", path.display(), i + 1);
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

/// Replaces `--config <file>` with the file's settings as flags placed
/// directly after the subcommand, so flags given on the command line win.
pub fn expand(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(sub) = args.iter().skip(1).position(|a| !a.to_string_lossy().starts_with('-')) else {
        return Ok(args);
    };
    let sub = sub + 1;
    let mut rest = Vec::new();
    let mut file = None;
    let mut it = args[sub + 1..].iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            let v = it.next().context("--config needs a file")?;
            file = Some(v.clone());
        } else if let Some(v) = s.strip_prefix("--config=") {
            file = Some(OsString::from(v));
        } else {
            rest.push(a.clone());
        }
    }
    let Some(file) = file else {
        return Ok(args);
    };
    let mut out: Vec<OsString> = args[..=sub].to_vec();
    for (k, v) in read(Path::new(&file))? {
        match v.as_str() {
            "true" => out.push(format!("--{k}").into()),
            "false" => {}
            _ => out.push(format!("--{k}={v}").into()),
        }
    }
    out.extend(rest);
    Ok(out)
}

/// Every resolved setting of a subcommand as flat strings.
pub fn resolved<T: Serialize>(command: &str, args: &T) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    map.insert("command".to_string(), command.to_string());
    let serde_json::Value::Object(obj) = serde_json::to_value(args)? else {
        bail!("settings did not serialize to an object");
    };
    for (k, v) in obj {
        let s = match v {
            serde_json::Value::Null => continue,
            serde_json::Value::String(s) => s,
            other => other.to_string(),
        };
        map.insert(k, s);
    }
    Ok(map)
}
