//! `--config file.toml` support.
//!
//! The file is a flat table whose keys are flag names of the chosen
//! subcommand (`max-iter = 200`, `initial-pass = true`). Its entries are
//! turned into flags and spliced in right after the subcommand, so anything
//! given on the command line still wins.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use toml::Value;

use crate::Usage;

/// Global flags that may precede the subcommand; `true` when they take a value.
const GLOBAL_FLAGS: &[(&str, bool)] = &[("--config", true), ("--verbose", false), ("--quiet", false)];

fn is_global_short(arg: &str) -> bool {
    arg.len() > 1 && arg.starts_with('-') && !arg.starts_with("--") && arg[1..].chars().all(|c| c == 'v' || c == 'q')
}

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut iter = args.iter().skip(1);
    while let Some(arg) = iter.next() {
        let s = arg.to_string_lossy();
        if s == "--" {
            break;
        }
        if s == "--config" {
            return iter.next().cloned();
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(v.into());
        }
    }
    None
}

/// Index just past the `<group> <command>` words.
fn insertion_point(args: &[OsString]) -> Option<usize> {
    let mut words = 0;
    let mut i = 1;
    while i < args.len() {
        let s = args[i].to_string_lossy();
        if let Some(&(_, takes_value)) = GLOBAL_FLAGS.iter().find(|(f, _)| *f == s) {
            i += if takes_value { 2 } else { 1 };
            continue;
        }
        if s.starts_with("--config=") || is_global_short(&s) {
            i += 1;
            continue;
        }
        if s.starts_with('-') {
            return None;
        }
        words += 1;
        i += 1;
        if words == 2 {
            return Some(i);
        }
    }
    None
}

fn scalar(key: &str, v: &Value) -> Result<String> {
    Ok(match v {
        Value::String(s) => s.clone(),
        Value::Integer(n) => n.to_string(),
        Value::Float(f) => f.to_string(),
        other => bail!("config key {key:?}: unsupported value {other}"),
    })
}

/// Flags equivalent to a parsed config table.
pub fn flags_from_table(table: &toml::Table) -> Result<Vec<OsString>> {
    let mut out = Vec::new();
    for (key, value) in table {
        let flag = format!("--{}", key.replace('_', "-"));
        match value {
            Value::Boolean(true) => out.push(flag.into()),
            Value::Boolean(false) => {}
            Value::Array(items) => {
                let joined = items.iter().map(|v| scalar(key, v)).collect::<Result<Vec<_>>>()?.join(",");
                out.push(flag.into());
                out.push(joined.into());
            }
            Value::Table(_) => bail!("config key {key:?}: nested tables are not supported"),
            v => {
                out.push(flag.into());
                out.push(scalar(key, v)?.into());
            }
        }
    }
    Ok(out)
}

fn read_table(path: &Path) -> Result<toml::Table> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    text.parse::<toml::Table>().with_context(|| format!("parsing config {}", path.display()))
}

/// Returns `args` with the config file's flags inserted.
pub fn expand(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let table = read_table(Path::new(&path)).map_err(|e| Usage(format!("{e:#}")))?;
    let flags = flags_from_table(&table).map_err(|e| Usage(format!("{e:#}")))?;
    let Some(at) = insertion_point(&args) else {
        return Err(Usage("--config needs a subcommand, e.g. `entred entre run --config run.toml`".into()).into());
    };
    let mut out = args[..at].to_vec();
    out.extend(flags);
    out.extend_from_slice(&args[at..]);
    Ok(out)
}
