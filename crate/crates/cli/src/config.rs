//! Flat `key = value` configuration files.
//!
//! Keys are long flag names without the dashes. Blank lines and lines
//! starting with `#` are ignored. `true`/`false` toggle switches.

use std::fs;
use std::path::Path;

#[derive(Debug)]
pub struct ConfigError(pub String);

/// Parses `text` into `(key, value)` pairs in file order.
pub fn parse(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError(format!("line {}: expected key = value", n + 1)));
        };
        let key = key.trim().trim_start_matches("--");
        if key.is_empty() {
            return Err(ConfigError(format!("line {}: empty key", n + 1)));
        }
        let value = value.trim().trim_matches('"');
        out.push((key.to_owned(), value.to_owned()));
    }
    Ok(out)
}

pub fn load(path: &Path) -> Result<Vec<(String, String)>, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    parse(&text)
}

/// The pairs as command-line arguments; `false` switches are dropped.
pub fn to_args(pairs: &[(String, String)]) -> Vec<String> {
    let mut args = Vec::new();
    for (k, v) in pairs {
        match v.as_str() {
            "true" => args.push(format!("--{k}")),
            "false" => {}
            _ => {
                args.push(format!("--{k}"));
                args.push(v.clone());
            }
        }
    }
    args
}
