//! `key=value` config files. Keys are long flag names of the chosen subcommand.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::{ArgAction, Command};

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// Parses `key = value` lines. Blank lines and lines starting with `#` are ignored.
pub fn parse(text: &str) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("line {}: expected `key=value`, found `{line}`", i + 1);
        };
        let key = key.trim();
        if key.is_empty() {
            bail!("line {}: empty key", i + 1);
        }
        out.push(Entry {
            line: i + 1,
            key: key.to_string(),
            value: value.trim().to_string(),
        });
    }
    Ok(out)
}

pub fn read(path: &Path) -> Result<Vec<Entry>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    parse(&text).with_context(|| format!("in config {}", path.display()))
}

/// Inserts config entries as flags right after the subcommand token at `at`. A key already
/// given on the command line is skipped, so flags take precedence.
pub fn inject(args: &[OsString], at: usize, sub: &Command, entries: &[Entry]) -> Result<Vec<OsString>> {
    let given: Vec<String> = args[at + 1..]
        .iter()
        .filter_map(|a| a.to_str())
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a).to_string())
        .collect();
    let mut extra = Vec::new();
    for e in entries {
        let Some(arg) = sub.get_arguments().find(|a| a.get_long() == Some(e.key.as_str())) else {
            bail!(
                "config line {}: `{}` is not an option of `{}`",
                e.line,
                e.key,
                sub.get_name()
            );
        };
        if given.contains(&e.key) {
            continue;
        }
        match arg.get_action() {
            ArgAction::SetTrue => match e.value.as_str() {
                "true" | "1" | "yes" => extra.push(OsString::from(format!("--{}", e.key))),
                "false" | "0" | "no" => {}
                v => bail!("config line {}: `{}` takes true or false, found `{v}`", e.line, e.key),
            },
            _ => extra.push(OsString::from(format!("--{}={}", e.key, e.value))),
        }
    }
    let mut out = args[..=at].to_vec();
    out.extend(extra);
    out.extend_from_slice(&args[at + 1..]);
    Ok(out)
}
