//! Run configuration shared by the subcommands: a small key=value file
//! plus the PVS_SEED environment variable. Precedence everywhere is
//! command-line flag, then environment, then config file, then the
//! built-in default.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_DAYS: u32 = 30;
pub const DEFAULT_TEST_FRACTION: f64 = 0.2;

pub const SEED_ENV_VAR: &str = "PVS_SEED";

/// Parsed key=value config file. Unknown keys are rejected so typos
/// surface immediately.
#[derive(Debug, Clone, Default)]
pub struct FileConfig {
    values: HashMap<String, String>,
}

const KNOWN_KEYS: [&str; 6] = [
    "seed",
    "days",
    "test_fraction",
    "settings",
    "algorithms",
    "out_dir",
];

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let mut values = HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!(
                    "{}:{}: expected key=value, got '{line}'",
                    path.display(),
                    lineno + 1
                );
            };
            let key = key.trim();
            if !KNOWN_KEYS.contains(&key) {
                bail!(
                    "{}:{}: unknown key '{key}' (known: {})",
                    path.display(),
                    lineno + 1,
                    KNOWN_KEYS.join(", ")
                );
            }
            values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(FileConfig { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(s) => match s.parse::<T>() {
                Ok(v) => Ok(Some(v)),
                Err(e) => bail!("config key '{key}': cannot parse '{s}': {e}"),
            },
        }
    }
}

/// Seed resolution: flag beats PVS_SEED beats the file beats 1.
pub fn resolve_seed(flag: Option<u64>, file: &FileConfig) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Ok(raw) = std::env::var(SEED_ENV_VAR) {
        return raw
            .parse::<u64>()
            .with_context(|| format!("{SEED_ENV_VAR}='{raw}' is not a valid seed"));
    }
    Ok(file.parsed::<u64>("seed")?.unwrap_or(DEFAULT_SEED))
}

pub fn resolve_days(flag: Option<u32>, file: &FileConfig) -> Result<u32> {
    if let Some(d) = flag {
        return Ok(d);
    }
    Ok(file.parsed::<u32>("days")?.unwrap_or(DEFAULT_DAYS))
}

pub fn resolve_test_fraction(flag: Option<f64>, file: &FileConfig) -> Result<f64> {
    let frac = match flag {
        Some(f) => f,
        None => file
            .parsed::<f64>("test_fraction")?
            .unwrap_or(DEFAULT_TEST_FRACTION),
    };
    if !(0.0..1.0).contains(&frac) {
        bail!("test fraction {frac} must be in [0, 1)");
    }
    Ok(frac)
}

/// Comma-separated list resolution for settings/algorithms.
pub fn resolve_list<T: std::str::FromStr>(
    flag: Option<&str>,
    file: &FileConfig,
    key: &str,
    default_all: &[T],
) -> Result<Vec<T>>
where
    T: Clone,
    T::Err: std::fmt::Display,
{
    let raw = match flag {
        Some(s) => Some(s.to_string()),
        None => file.get(key).map(String::from),
    };
    match raw {
        None => Ok(default_all.to_vec()),
        Some(s) => {
            let mut out = Vec::new();
            for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                match part.parse::<T>() {
                    Ok(v) => out.push(v),
                    Err(e) => bail!("'{part}' in {key} list: {e}"),
                }
            }
            if out.is_empty() {
                bail!("{key} list is empty");
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pvs_core::attack::{SettingId, ALL_SETTINGS};
    use std::io::Write;

    fn write_cfg(text: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(text.as_bytes()).unwrap();
        (dir, path)
    }

    #[test]
    fn file_parses_and_flag_wins() {
        let (_dir, path) = write_cfg("seed = 77\ndays=3 # comment\n\n# full line comment\n");
        let cfg = FileConfig::load(&path).unwrap();
        assert_eq!(resolve_days(None, &cfg).unwrap(), 3);
        assert_eq!(resolve_days(Some(9), &cfg).unwrap(), 9);
        assert_eq!(resolve_seed(Some(5), &cfg).unwrap(), 5);
    }

    #[test]
    fn unknown_key_rejected() {
        let (_dir, path) = write_cfg("sede = 77\n");
        assert!(FileConfig::load(&path).is_err());
    }

    #[test]
    fn lists_parse_or_default() {
        let (_dir, path) = write_cfg("settings = s1, s3\n");
        let cfg = FileConfig::load(&path).unwrap();
        let got: Vec<SettingId> =
            resolve_list(None, &cfg, "settings", &ALL_SETTINGS).unwrap();
        assert_eq!(got, vec![SettingId::S1, SettingId::S3]);
        let all: Vec<SettingId> =
            resolve_list(None, &FileConfig::default(), "settings", &ALL_SETTINGS).unwrap();
        assert_eq!(all.len(), 4);
        assert!(
            resolve_list::<SettingId>(Some("s9"), &cfg, "settings", &ALL_SETTINGS).is_err()
        );
    }
}
