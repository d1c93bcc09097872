//! Flat key=value configuration files. Every key mirrors a long CLI
//! flag; explicit flags win over file values. The fully resolved map is
//! echoed into each command's JSON output for provenance.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::{CliError, CliResult};

/// Parsed file contents plus the record of what was finally used.
#[derive(Debug, Clone, Default)]
pub struct Resolver {
    file: BTreeMap<String, String>,
    resolved: std::cell::RefCell<BTreeMap<String, String>>,
}

/// Parse `key = value` lines; `#` starts a comment, blank lines are
/// ignored.
pub fn parse_config_file(path: &Path) -> CliResult<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Validation(format!(
                "{}:{}: expected key=value, found '{raw}'",
                path.display(),
                idx + 1
            )));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

impl Resolver {
    pub fn from_file(path: Option<&Path>) -> CliResult<Self> {
        let file = match path {
            Some(p) => parse_config_file(p)?,
            None => BTreeMap::new(),
        };
        Ok(Resolver {
            file,
            resolved: Default::default(),
        })
    }

    fn record(&self, key: &str, value: impl ToString) {
        self.resolved
            .borrow_mut()
            .insert(key.to_string(), value.to_string());
    }

    /// Flag value if given, else the file value, else the default.
    pub fn get_or<T: FromStr + ToString + Clone>(
        &self,
        key: &str,
        flag: Option<T>,
        default: T,
    ) -> CliResult<T> {
        let value = match flag {
            Some(v) => v,
            None => match self.file.get(key) {
                Some(raw) => raw.parse().map_err(|_| {
                    CliError::Validation(format!("config key '{key}': cannot parse '{raw}'"))
                })?,
                None => default,
            },
        };
        self.record(key, value.to_string());
        Ok(value)
    }

    /// Flag value if given, else the file value, else an error naming
    /// the key.
    pub fn require<T: FromStr + ToString>(&self, key: &str, flag: Option<T>) -> CliResult<T> {
        let value = match flag {
            Some(v) => v,
            None => match self.file.get(key) {
                Some(raw) => raw.parse().map_err(|_| {
                    CliError::Validation(format!("config key '{key}': cannot parse '{raw}'"))
                })?,
                None => {
                    return Err(CliError::Validation(format!(
                        "missing required option --{key} (or config key '{key}')"
                    )))
                }
            },
        };
        self.record(key, value.to_string());
        Ok(value)
    }

    /// Optional value: flag, else file, else `None`.
    pub fn optional<T: FromStr + ToString>(
        &self,
        key: &str,
        flag: Option<T>,
    ) -> CliResult<Option<T>> {
        let value = match flag {
            Some(v) => Some(v),
            None => match self.file.get(key) {
                Some(raw) => Some(raw.parse().map_err(|_| {
                    CliError::Validation(format!("config key '{key}': cannot parse '{raw}'"))
                })?),
                None => None,
            },
        };
        if let Some(v) = &value {
            self.record(key, v.to_string());
        }
        Ok(value)
    }

    /// Boolean switch: true when the flag was passed or the file says
    /// true/1/yes.
    pub fn switch(&self, key: &str, flag: bool) -> CliResult<bool> {
        let value = if flag {
            true
        } else {
            match self.file.get(key).map(|s| s.as_str()) {
                Some("true") | Some("1") | Some("yes") => true,
                Some("false") | Some("0") | Some("no") | None => false,
                Some(other) => {
                    return Err(CliError::Validation(format!(
                        "config key '{key}': cannot parse '{other}' as a boolean"
                    )))
                }
            }
        };
        self.record(key, value);
        Ok(value)
    }

    /// Required path-valued option.
    pub fn require_path(&self, key: &str, flag: Option<std::path::PathBuf>) -> CliResult<std::path::PathBuf> {
        let value = match flag {
            Some(v) => v,
            None => match self.file.get(key) {
                Some(raw) => std::path::PathBuf::from(raw),
                None => {
                    return Err(CliError::Validation(format!(
                        "missing required option --{key} (or config key '{key}')"
                    )))
                }
            },
        };
        self.record(key, value.display());
        Ok(value)
    }

    /// Optional path-valued option.
    pub fn optional_path(
        &self,
        key: &str,
        flag: Option<std::path::PathBuf>,
    ) -> CliResult<Option<std::path::PathBuf>> {
        let value = match flag {
            Some(v) => Some(v),
            None => self.file.get(key).map(std::path::PathBuf::from),
        };
        if let Some(v) = &value {
            self.record(key, v.display());
        }
        Ok(value)
    }

    /// Snapshot of every resolved key, for provenance output.
    pub fn resolved(&self) -> BTreeMap<String, String> {
        self.resolved.borrow().clone()
    }
}
