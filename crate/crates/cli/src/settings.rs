//! `key=value` settings files. Command-line flags use the same names with
//! dashes and win on conflict.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

#[derive(Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Settings::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key=value, got `{line}`", n + 1)))?;
            values.insert(k.trim().replace('-', "_"), v.trim().to_string());
        }
        Ok(Settings { values })
    }

    /// Flag if given, else the file value, else `default`. The key counts as
    /// consumed either way.
    pub fn take<T: FromStr>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError> {
        Ok(self.take_opt(key, flag)?.unwrap_or(default))
    }

    pub fn take_opt<T: FromStr>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError> {
        let file = self.values.remove(key);
        if flag.is_some() {
            return Ok(flag);
        }
        file.map(|v| {
            v.parse()
                .map_err(|_| CliError::Usage(format!("key `{key}`: cannot parse `{v}`")))
        })
        .transpose()
    }

    /// Raw string values for `keys`, flags overriding the file.
    pub fn take_pairs(&mut self, keys: &[&str], flags: Vec<(&str, String)>) -> Vec<(String, String)> {
        let mut pairs: Vec<(String, String)> = keys
            .iter()
            .filter_map(|k| self.values.remove(*k).map(|v| (k.to_string(), v)))
            .collect();
        pairs.extend(flags.into_iter().map(|(k, v)| (k.to_string(), v)));
        pairs
    }

    /// Fails on any key the command did not ask for.
    pub fn finish(self) -> Result<(), CliError> {
        match self.values.keys().next() {
            None => Ok(()),
            Some(k) => Err(CliError::Usage(format!("unknown key `{k}` for this command"))),
        }
    }
}
