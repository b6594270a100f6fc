//! Layered run configuration: built-in defaults, then `NPPROV_SEED`, then
//! the `--config` file, then command-line flags.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use npprov_core::config::ConfigMap;

use crate::failure::{CliResult, Failure};

pub const SEED_ENV: &str = "NPPROV_SEED";

/// Flag values in key order; `None` means the flag was not given.
#[derive(Default)]
pub struct Flags(Vec<(&'static str, Option<String>)>);

impl Flags {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(mut self, key: &'static str, value: Option<impl Display>) -> Self {
        self.0.push((key, value.map(|v| v.to_string())));
        self
    }

    pub fn path(self, key: &'static str, value: Option<&PathBuf>) -> Self {
        self.add(key, value.map(|p| p.display()))
    }
}

pub fn read_config_file(path: &Path) -> CliResult<ConfigMap> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    ConfigMap::parse(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn env_seed() -> CliResult<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(raw) => raw
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure::usage(format!("{SEED_ENV}={raw:?} is not an unsigned integer"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(Failure::usage(format!("{SEED_ENV}: {e}"))),
    }
}

/// The effective configuration of one command.
pub struct Settings {
    pub map: ConfigMap,
}

impl Settings {
    /// Merge the layers. `file` may only use keys in `allowed`.
    pub fn resolve(defaults: ConfigMap, file: Option<&ConfigMap>, allowed: &[&str], flags: Flags) -> CliResult<Self> {
        let mut map = defaults;
        if allowed.contains(&"seed") {
            if let Some(seed) = env_seed()? {
                map.set("seed", seed);
            }
        }
        if let Some(file) = file {
            file.reject_unknown(allowed)
                .map_err(|e| Failure::usage(format!("config file: {e}")))?;
            map.merge(file);
        }
        for (key, value) in flags.0 {
            if let Some(v) = value {
                map.set(key, v);
            }
        }
        Ok(Settings { map })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> CliResult<T>
    where
        T::Err: Display,
    {
        self.map.get(key).map_err(|e| Failure::usage(e.to_string()))
    }

    pub fn required(&self, key: &str) -> CliResult<String> {
        self.map
            .raw(key)
            .map(str::to_string)
            .ok_or_else(|| Failure::usage(format!("missing required setting {key:?} (flag --{})", key.replace('_', "-"))))
    }

    pub fn path(&self, key: &str) -> CliResult<PathBuf> {
        self.required(key).map(PathBuf::from)
    }

    pub fn optional_path(&self, key: &str) -> Option<PathBuf> {
        self.map.raw(key).map(PathBuf::from)
    }

    /// Print the effective configuration, one `key=value` per line.
    pub fn echo(&self, command: &str) {
        print!("# npprov {command} effective configuration\n{}", self.map.to_text());
    }
}
