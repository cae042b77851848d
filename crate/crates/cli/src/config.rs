//! TOML run configuration with `key.path=value` overrides from the command line.

use std::fmt;
use std::path::Path;

use anyhow::Result;
use serde::de::DeserializeOwned;
use toml::{Table, Value};

/// Bad input from the user: unreadable config, unknown key, malformed override.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Parses the right-hand side of an override as a TOML value, falling back to
/// a bare string so that `out=data.bin` works without quotes.
fn parse_value(raw: &str) -> Value {
    match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.to_string())),
        Err(_) => Value::String(raw.to_string()),
    }
}

fn apply_override(table: &mut Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| usage(format!("override `{assignment}` is not of the form key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(usage(format!("override `{assignment}` has an empty key")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| usage(format!("override `{assignment}`: `{p}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

/// Reads `path` (if any), applies the overrides in order and deserializes.
/// Unknown keys are rejected by the target types.
pub fn load<T: DeserializeOwned>(path: Option<&Path>, overrides: &[String]) -> Result<T> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| usage(format!("cannot read {}: {e}", p.display())))?;
            text.parse::<Table>().map_err(|e| usage(format!("{}: {e}", p.display())))?
        }
        None => Table::new(),
    };
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let what = path.map_or_else(|| "configuration".to_string(), |p| p.display().to_string());
    Value::Table(table)
        .try_into::<T>()
        .map_err(|e| usage(format!("{what}: {}", e.message())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_create_nested_tables() {
        let mut t = Table::new();
        apply_override(&mut t, "solver.m=20").unwrap();
        apply_override(&mut t, "out=data.bin").unwrap();
        apply_override(&mut t, "solver.tol=1e-8").unwrap();
        assert_eq!(t["solver"]["m"].as_integer(), Some(20));
        assert_eq!(t["solver"]["tol"].as_float(), Some(1e-8));
        assert_eq!(t["out"].as_str(), Some("data.bin"));
    }

    #[test]
    fn malformed_override_is_a_usage_error() {
        let e = apply_override(&mut Table::new(), "noequals").unwrap_err();
        assert!(e.downcast_ref::<UsageError>().is_some());
    }
}
