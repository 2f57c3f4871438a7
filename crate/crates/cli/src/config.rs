//! `--config` files: flat `key = value` lines turned into flags inserted
//! right after the subcommand name. Keys also given on the command line are
//! skipped, so explicit flags win.

use std::ffi::OsString;
use std::path::Path;

use clap::Command;

use crate::Usage;

/// Flag defaults read from a config file, in file order.
pub fn parse(text: &str) -> Result<Vec<(String, String)>, Usage> {
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Usage(format!("config line {}: expected key=value", n + 1)))?;
        let key = key.trim().replace('_', "-");
        if key.is_empty() {
            return Err(Usage(format!("config line {}: empty key", n + 1)));
        }
        pairs.push((key, value.trim().to_string()));
    }
    Ok(pairs)
}

fn config_path(argv: &[OsString]) -> Option<OsString> {
    let mut iter = argv.iter().skip(1);
    while let Some(arg) = iter.next() {
        let s = arg.to_string_lossy();
        if s == "--" {
            break;
        }
        if s == "--config" {
            return iter.next().cloned();
        }
        if let Some(path) = s.strip_prefix("--config=") {
            return Some(path.into());
        }
    }
    None
}

/// Position of the subcommand name in `argv`, skipping leading global flags.
fn subcommand_position(argv: &[OsString], cmd: &Command) -> Option<usize> {
    let mut i = 1;
    while i < argv.len() {
        let s = argv[i].to_string_lossy();
        match s.strip_prefix("--") {
            Some(name) if !name.contains('=') => {
                let takes_value = cmd
                    .get_arguments()
                    .find(|a| a.get_long() == Some(name))
                    .is_some_and(|a| a.get_action().takes_values());
                i += if takes_value { 2 } else { 1 };
            }
            Some(_) => i += 1,
            None => return Some(i),
        }
    }
    None
}

/// Expands `--config` into explicit flags. Without a config file `argv` is
/// returned unchanged.
pub fn expand(argv: Vec<OsString>, cmd: &Command) -> Result<Vec<OsString>, Usage> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path)
        .map_err(|e| Usage(format!("cannot read config file {}: {e}", path.display())))?;
    let Some(at) = subcommand_position(&argv, cmd) else {
        return Ok(argv);
    };
    let name = argv[at].to_string_lossy().into_owned();
    let Some(sub) = cmd.find_subcommand(&name) else {
        return Ok(argv);
    };
    let explicit: Vec<String> = argv
        .iter()
        .skip(1)
        .filter_map(|a| a.to_str()?.strip_prefix("--").map(|f| f.split('=').next().unwrap_or(f).to_string()))
        .collect();
    let mut flags: Vec<OsString> = Vec::new();
    for (key, value) in parse(&text)? {
        if key == "config" {
            return Err(Usage("config files cannot include other config files".into()));
        }
        if explicit.contains(&key) {
            continue;
        }
        let arg = sub
            .get_arguments()
            .chain(cmd.get_arguments())
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| Usage(format!("config key {key:?} is not a flag of {name}")))?;
        if arg.get_action().takes_values() {
            flags.push(format!("--{key}").into());
            flags.push(value.into());
        } else {
            match value.as_str() {
                "true" | "1" | "yes" => flags.push(format!("--{key}").into()),
                "false" | "0" | "no" => {}
                _ => return Err(Usage(format!("config key {key:?} expects true or false, got {value:?}"))),
            }
        }
    }
    let mut out = argv;
    out.splice(at + 1..at + 1, flags);
    Ok(out)
}
