//! `key=value` config files. Keys are long flag names without the dashes.
//! A key given on the command line wins over the file; the file wins over
//! built-in defaults.

use std::path::Path;

use crate::error::{MtsxError, Result};
use crate::io::read_text;

/// Pairs in file order. `#` starts a comment line; a key may repeat.
pub fn parse_config(text: &str, path: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            MtsxError::parse(path, i + 1, format!("expected key=value, found {line:?}"))
        })?;
        let k = k.trim();
        if k.is_empty()
            || !k
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return Err(MtsxError::parse(path, i + 1, format!("bad key {k:?}")));
        }
        out.push((k.replace('_', "-"), v.trim().to_owned()));
    }
    Ok(out)
}

fn given_on_command_line(args: &[String], key: &str) -> bool {
    let flag = format!("--{key}");
    args.iter()
        .any(|a| *a == flag || a.starts_with(&format!("{flag}=")))
}

/// Strip `--config <path>` from `args` and append every config entry whose
/// flag is absent. `true` becomes a bare switch, `false` is dropped.
pub fn merge_config(args: Vec<String>) -> Result<Vec<String>> {
    let mut rest = Vec::with_capacity(args.len());
    let mut config = None;
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            let p = it
                .next()
                .ok_or_else(|| MtsxError::Usage("--config needs a path".into()))?;
            config = Some(p);
        } else if let Some(p) = a.strip_prefix("--config=") {
            config = Some(p.to_owned());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = config else {
        return Ok(rest);
    };
    let path = Path::new(&path);
    let entries = parse_config(&read_text(path)?, path)?;
    let given: Vec<bool> = entries
        .iter()
        .map(|(k, _)| given_on_command_line(&rest, k))
        .collect();
    for ((k, v), given) in entries.into_iter().zip(given) {
        if given {
            continue;
        }
        match v.as_str() {
            "true" => rest.push(format!("--{k}")),
            "false" => {}
            _ => rest.push(format!("--{k}={v}")),
        }
    }
    Ok(rest)
}
