//! Run configuration: flags override the config file, which overrides the
//! built-in defaults.
//!
//! The config file is INI-style. Keys are long flag names; a section named
//! after a subcommand applies to that subcommand, and `[defaults]` (or keys
//! before any section) apply to all of them:
//!
//! ```text
//! [defaults]
//! seed = 0xC0FFEE
//!
//! [entropy-fit]
//! rho-grid = 4:9:0.5
//! samples = 2e5
//! ```

use std::path::Path;
use std::str::FromStr;

use ini::Ini;

use crate::error::CliError;

#[derive(Debug, Default)]
pub struct Config {
    ini: Option<Ini>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let ini = Ini::load_from_file(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Ok(Self { ini: Some(ini) })
    }

    /// Raw value of `key` for `command`.
    pub fn raw(&self, command: &str, key: &str) -> Option<&str> {
        let ini = self.ini.as_ref()?;
        [Some(command), Some("defaults"), None]
            .into_iter()
            .find_map(|section| ini.section(section).and_then(|props| props.get(key)))
    }

    /// `flag`, else the config entry parsed with `parse`, else `default`.
    pub fn resolve<T>(
        &self,
        command: &str,
        key: &str,
        flag: Option<T>,
        parse: impl Fn(&str) -> Result<T, String>,
        default: T,
    ) -> Result<T, CliError> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.raw(command, key) {
            Some(text) => parse(text).map_err(|e| CliError::Usage(format!("config key {key}: {e}"))),
            None => Ok(default),
        }
    }

    /// [`Config::resolve`] for types with a `FromStr` parser.
    pub fn value<T: FromStr>(&self, command: &str, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.resolve(command, key, flag, |s| s.trim().parse::<T>().map_err(|e| e.to_string()), default)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn precedence() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "samples = 7\n[defaults]\nseed = 5\n[ball-volume]\nseed = 9").unwrap();
        let cfg = Config::load(Some(file.path())).unwrap();
        assert_eq!(cfg.value("ball-volume", "seed", None, 0u64).unwrap(), 9);
        assert_eq!(cfg.value("entropy-fit", "seed", None, 0u64).unwrap(), 5);
        assert_eq!(cfg.value("entropy-fit", "seed", Some(3u64), 0).unwrap(), 3);
        assert_eq!(cfg.value("entropy-fit", "samples", None, 1usize).unwrap(), 7);
        assert_eq!(cfg.value("entropy-fit", "restarts", None, 4usize).unwrap(), 4);
        assert!(cfg.value::<u64>("verify", "samples", None, 0).is_ok());
    }

    #[test]
    fn missing_file_is_a_usage_error() {
        let err = Config::load(Some(Path::new("/nonexistent/solvgeo.ini"))).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
