use std::ffi::OsString;
use std::path::Path;

use clap::CommandFactory;

use crate::args::Cli;
use crate::error::CliError;

const GLOBAL_VALUE_FLAGS: [&str; 3] = ["--config", "--out", "--workers"];

/// One `key=value` entry of a config file.
#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
/// Keys may use `_` or `-`.
pub fn parse_config_text(text: &str) -> Result<Vec<Entry>, CliError> {
    let mut entries: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("config line {}: expected key=value", i + 1)))?;
        let key = key.trim().replace('_', "-");
        if key.is_empty() {
            return Err(CliError::Config(format!("config line {}: empty key", i + 1)));
        }
        if let Some(prev) = entries.iter().find(|e| e.key == key) {
            return Err(CliError::Config(format!(
                "config line {}: key `{key}` already set on line {}",
                i + 1,
                prev.line
            )));
        }
        entries.push(Entry {
            key,
            value: value.trim().to_string(),
            line: i + 1,
        });
    }
    Ok(entries)
}

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        if a == "--" {
            return None;
        }
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(rest) = a.to_str().and_then(|s| s.strip_prefix("--config=")) {
            return Some(rest.into());
        }
    }
    None
}

/// Index of the subcommand name in `args`, skipping global flags and values.
fn subcommand_index(args: &[OsString]) -> Option<usize> {
    let mut i = 1;
    while i < args.len() {
        let a = args[i].to_str()?;
        if GLOBAL_VALUE_FLAGS.contains(&a) {
            i += 2;
        } else if a.starts_with('-') {
            i += 1;
        } else {
            return Some(i);
        }
    }
    None
}

fn known_keys(subcommand: &str) -> Option<Vec<String>> {
    let cli = Cli::command();
    let sub = cli.find_subcommand(subcommand)?;
    let mut keys: Vec<String> = sub.get_arguments().filter_map(|a| a.get_long()).map(String::from).collect();
    keys.extend(cli.get_arguments().filter_map(|a| a.get_long()).map(String::from));
    keys.retain(|k| k != "config" && k != "help" && k != "version");
    Some(keys)
}

/// Inserts the entries of the config file named by `--config` right after
/// the subcommand, so that flags given on the command line override them.
pub fn expand_args(args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config file {}: {e}", path.display())))?;
    let entries = parse_config_text(&text)?;
    let Some(at) = subcommand_index(&args) else {
        return Ok(args);
    };
    let sub = args[at].to_string_lossy().into_owned();
    let Some(keys) = known_keys(&sub) else {
        return Ok(args);
    };
    let mut injected = Vec::with_capacity(2 * entries.len());
    for e in entries {
        if !keys.contains(&e.key) {
            return Err(CliError::Config(format!(
                "{} line {}: unknown key `{}` for `{sub}`",
                path.display(),
                e.line,
                e.key
            )));
        }
        injected.push(OsString::from(format!("--{}={}", e.key, e.value)));
    }
    let mut out = args;
    out.splice(at + 1..at + 1, injected);
    Ok(out)
}
