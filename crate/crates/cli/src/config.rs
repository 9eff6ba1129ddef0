//! `key = value` config files. Command-line flags win over the file, and the
//! file wins over built-in defaults.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>, allowed: &[&str]) -> CliResult<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                Self::parse(&text, allowed).map_err(|e| match e {
                    CliError::Usage(m) => CliError::usage(format!("{}: {m}", p.display())),
                    other => other,
                })
            }
        }
    }

    /// Keys are case-insensitive and `-`/`_` are interchangeable.
    pub fn parse(text: &str, allowed: &[&str]) -> CliResult<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("line {}: expected `key = value`", i + 1)))?;
            let key = k.trim().to_ascii_lowercase().replace('-', "_");
            if !allowed.contains(&key.as_str()) {
                return Err(CliError::usage(format!(
                    "line {}: unknown key {key:?} (expected one of {})",
                    i + 1,
                    allowed.join(", ")
                )));
            }
            values.insert(key, v.trim().to_string());
        }
        Ok(Self { values })
    }

    /// Flag value if given, else the parsed file value.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> CliResult<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        self.values
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| CliError::usage(format!("config key {key}: cannot parse {v:?}")))
            })
            .transpose()
    }

    /// Switches: an explicit flag turns them on, otherwise the file decides.
    pub fn switch(&self, flag: bool, key: &str) -> CliResult<bool> {
        Ok(flag || self.pick::<bool>(None, key)?.unwrap_or(false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_beats_file_beats_default() {
        let cfg = ConfigFile::parse("alpha = 5000\n# note\nmax-iter = 20\n", &["alpha", "max_iter", "rho"]).unwrap();
        assert_eq!(cfg.pick(Some(1.0), "alpha").unwrap(), Some(1.0));
        assert_eq!(cfg.pick::<f64>(None, "alpha").unwrap(), Some(5000.0));
        assert_eq!(cfg.pick::<usize>(None, "max_iter").unwrap(), Some(20));
        assert_eq!(cfg.pick::<f64>(None, "rho").unwrap(), None);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ConfigFile::parse("beta = 1", &["alpha"]).is_err());
        assert!(ConfigFile::parse("alpha", &["alpha"]).is_err());
        let cfg = ConfigFile::parse("alpha = x", &["alpha"]).unwrap();
        assert!(cfg.pick::<f64>(None, "alpha").is_err());
    }

    #[test]
    fn switches() {
        let cfg = ConfigFile::parse("demean = true", &["demean", "zscore"]).unwrap();
        assert!(cfg.switch(false, "demean").unwrap());
        assert!(!cfg.switch(false, "zscore").unwrap());
        assert!(cfg.switch(true, "zscore").unwrap());
    }
}
