//! Config file plus `--set` overrides, with unknown-key detection.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::str::FromStr;

use apcd::formats::KeyValues;

use crate::error::{read_file, CliError};
use crate::ConfigArgs;

pub struct Settings {
    values: KeyValues,
    used: RefCell<BTreeSet<String>>,
}

impl Settings {
    pub fn load(args: &ConfigArgs) -> Result<Self, CliError> {
        let mut values = match &args.config {
            Some(path) => KeyValues::parse(&read_file(path)?, None)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?,
            None => KeyValues::new(),
        };
        for item in &args.set {
            let Some((k, v)) = item.split_once('=') else {
                return Err(CliError::Usage(format!("--set expects KEY=VALUE, got {item:?}")));
            };
            values.set(k.trim(), v.trim());
        }
        Ok(Settings {
            values,
            used: RefCell::new(BTreeSet::new()),
        })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.used.borrow_mut().insert(key.to_string());
        self.values.get(key)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.raw(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| CliError::Usage(format!("bad value {v:?} for key {key:?}")))
            })
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// All entries, marking none as used.
    pub fn entries(&self) -> &[(String, String)] {
        self.values.entries()
    }

    pub fn mark_used(&self, key: &str) {
        self.used.borrow_mut().insert(key.to_string());
    }

    /// Fails on keys nobody asked for.
    pub fn finish(&self) -> Result<(), CliError> {
        let used = self.used.borrow();
        let unknown: Vec<&str> = self
            .values
            .entries()
            .iter()
            .map(|(k, _)| k.as_str())
            .filter(|k| !used.contains(*k))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(CliError::Usage(format!("unknown config keys: {}", unknown.join(", "))))
        }
    }
}

/// Parses a comma-separated list of floats.
pub fn parse_float_list(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("bad number {s:?} in list {text:?}")))
        })
        .collect()
}
