use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Flat `key = value` text. `#` starts a comment; blank lines are skipped;
/// duplicate keys are rejected.
pub fn parse_key_values(text: &str, origin: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fail = |msg: String| Error::Format { path: origin.to_path_buf(), msg: format!("line {}: {msg}", i + 1) };
        let (k, v) = line.split_once('=').ok_or_else(|| fail("expected key = value".into()))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(fail("empty key".into()));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(fail(format!("duplicate key '{k}'")));
        }
    }
    Ok(out)
}

pub fn read_key_values(path: &Path) -> Result<BTreeMap<String, String>> {
    parse_key_values(&std::fs::read_to_string(path).map_err(Error::at(path))?, path)
}
