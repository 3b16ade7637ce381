//! Flat `key=value` configuration with `#` comments. Later sources override
//! earlier ones; every lookup remembers where the value came from so errors
//! can point at the offending line.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    path: PathBuf,
    line: usize,
}

#[derive(Debug, Default)]
pub struct Config {
    entries: BTreeMap<String, Entry>,
    used: RefCell<BTreeSet<String>>,
}

pub const COMMAND_LINE: &str = "<command line>";

fn config_error(path: &Path, line: usize, field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.display().to_string(),
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

fn valid_key(key: &str) -> bool {
    !key.is_empty()
        && key
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

impl Config {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(config_error(path, i + 1, line, "expected key=value"));
            };
            let k = k.trim();
            if !valid_key(k) {
                return Err(config_error(path, i + 1, k, "invalid key"));
            }
            if cfg.entries.contains_key(k) {
                return Err(config_error(path, i + 1, k, "key given twice"));
            }
            cfg.entries.insert(
                k.to_string(),
                Entry {
                    value: v.trim().to_string(),
                    path: path.to_path_buf(),
                    line: i + 1,
                },
            );
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Applies `--key=value` overrides.
    pub fn set_override(&mut self, arg: &str) -> Result<()> {
        let cl = Path::new(COMMAND_LINE);
        let body = arg
            .strip_prefix("--")
            .ok_or_else(|| config_error(cl, 0, arg, "overrides look like --key=value"))?;
        let (k, v) = body
            .split_once('=')
            .ok_or_else(|| config_error(cl, 0, body, "overrides look like --key=value"))?;
        if !valid_key(k) {
            return Err(config_error(cl, 0, k, "invalid key"));
        }
        self.set(k, v, cl);
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str, origin: &Path) {
        self.entries.insert(
            key.to_string(),
            Entry {
                value: value.trim().to_string(),
                path: origin.to_path_buf(),
                line: 0,
            },
        );
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.used.borrow_mut().insert(key.to_string());
        self.entries.get(key).map(|e| e.value.as_str())
    }

    /// Error attributed to `key`'s source line (or the command line when the
    /// key is absent).
    pub fn error(&self, key: &str, message: impl Into<String>) -> Error {
        match self.entries.get(key) {
            Some(e) => config_error(&e.path, e.line, key, message),
            None => config_error(Path::new(COMMAND_LINE), 0, key, message),
        }
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| self.error(key, format!("cannot parse {v:?}: {e}"))),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        self.get(key)?
            .ok_or_else(|| self.error(key, "required key is missing"))
    }

    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: Display,
    {
        let Some(v) = self.raw(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|e| self.error(key, format!("cannot parse {s:?}: {e}")))
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    /// Rejects keys nobody asked for; catches typos.
    pub fn finish(&self) -> Result<()> {
        let used = self.used.borrow();
        match self.entries.keys().find(|k| !used.contains(*k)) {
            Some(k) => Err(self.error(k, "unknown key")),
            None => Ok(()),
        }
    }
}
