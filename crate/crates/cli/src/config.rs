//! Flat `key = value` config files, turned into command-line tokens that are
//! placed ahead of the real flags so that flags win.

use std::fs;
use std::path::Path;

use crate::error::CliError;

/// Flags that take no value; a config `true` enables them.
const SWITCHES: [&str; 1] = ["timing"];

/// Parse config text into `--key value` tokens. Blank lines and lines
/// starting with `#` are ignored; keys may use `_` or `-`.
pub fn config_tokens(text: &str, origin: &str) -> Result<Vec<String>, CliError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Invalid(format!("{origin}:{}: expected key=value, got '{line}'", n + 1))
        })?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key.is_empty() {
            return Err(CliError::Invalid(format!("{origin}:{}: empty key", n + 1)));
        }
        if SWITCHES.contains(&key.as_str()) {
            match value {
                "true" | "1" | "yes" => out.push(format!("--{key}")),
                "false" | "0" | "no" => {}
                other => {
                    return Err(CliError::Invalid(format!(
                        "{origin}:{}: '{key}' expects true or false, got '{other}'",
                        n + 1
                    )))
                }
            }
        } else {
            out.push(format!("--{key}"));
            out.push(value.to_string());
        }
    }
    Ok(out)
}

/// Pull `--config PATH` (or `--config=PATH`) out of `args` and splice the
/// file's tokens right after the subcommand name.
pub fn expand_config(mut args: Vec<String>) -> Result<Vec<String>, CliError> {
    let mut path = None;
    let mut k = 1;
    while k < args.len() {
        if args[k] == "--config" {
            if k + 1 >= args.len() {
                return Err(CliError::Invalid("--config needs a file path".into()));
            }
            path = Some(args.remove(k + 1));
            args.remove(k);
        } else if let Some(p) = args[k].strip_prefix("--config=") {
            path = Some(p.to_string());
            args.remove(k);
        } else {
            k += 1;
        }
    }
    let Some(path) = path else {
        return Ok(args);
    };
    let text = fs::read_to_string(Path::new(&path)).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    let tokens = config_tokens(&text, &path)?;
    // The subcommand is the first token that is not an option.
    let at = args
        .iter()
        .skip(1)
        .position(|a| !a.starts_with('-'))
        .map(|p| p + 2)
        .unwrap_or(args.len());
    let tail = args.split_off(at.min(args.len()));
    args.extend(tokens);
    args.extend(tail);
    Ok(args)
}
