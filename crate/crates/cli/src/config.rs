//! `key=value` config files merged into the argument list.
//!
//! Keys are long flag names (`n-speakers` or `n_speakers`). A key is only
//! injected when the flag is absent from the command line, so flags win.

use std::path::Path;

use clap::{ArgAction, CommandFactory};

use crate::args::Cli;
use crate::error::{CliError, CliResult};

fn config_path(argv: &[String]) -> Option<String> {
    let mut it = argv.iter();
    while let Some(tok) = it.next() {
        if tok == "--" {
            break;
        }
        if tok == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = tok.strip_prefix("--config=") {
            return Some(p.to_string());
        }
    }
    None
}

fn flag_present(argv: &[String], long: &str) -> bool {
    let bare = format!("--{long}");
    let with_eq = format!("--{long}=");
    argv.iter().any(|t| *t == bare || t.starts_with(&with_eq))
}

fn parse_bool(v: &str) -> Option<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Some(true),
        "false" | "0" | "no" | "off" => Some(false),
        _ => None,
    }
}

/// Returns `argv` with config-file entries appended after the explicit flags.
pub fn merge_config(argv: Vec<String>) -> CliResult<Vec<String>> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    // The subcommand is the first token after the program name.
    let Some(sub_name) = argv.get(1) else {
        return Ok(argv);
    };
    let root = Cli::command();
    let Some(sub) = root.find_subcommand(sub_name) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(Path::new(&path), e))?;

    let mut extra = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let at = || format!("{path}:{}", i + 1);
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("{}: expected key=value", at())))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()) && key != "config")
            .ok_or_else(|| CliError::Usage(format!("{}: unknown key '{key}' for {sub_name}", at())))?;
        if flag_present(&argv, &key) {
            continue;
        }
        if matches!(arg.get_action(), ArgAction::SetTrue) {
            let on = parse_bool(value)
                .ok_or_else(|| CliError::Usage(format!("{}: '{value}' is not a boolean", at())))?;
            if on {
                extra.push(format!("--{key}"));
            }
        } else {
            extra.push(format!("--{key}={value}"));
        }
    }
    let mut merged = argv;
    match merged.iter().position(|t| t == "--") {
        Some(pos) => {
            merged.splice(pos..pos, extra);
        }
        None => merged.extend(extra),
    }
    Ok(merged)
}
