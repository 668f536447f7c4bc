//! Configuration resolution. Precedence per knob: command-line flag, then
//! `--config` file entry, then `ALR_<KEY>` environment variable, then the
//! built-in default. The file is `key = value` lines with `#` comments; keys
//! mirror the service configuration in lower_snake_case.

use crate::error::{CliError, CliResult};
use alr_core::RewardWeights64;
use std::collections::HashMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

pub const KNOWN_KEYS: [&str; 8] =
    ["bind_addr", "weights", "beta", "tau", "epsilon", "tol", "max_batch_size", "request_timeout_secs"];

/// `format,evidence,answer` weight triple for flags, config files, and env.
#[derive(Debug, Clone, Copy)]
pub struct WeightsSpec(pub RewardWeights64);

impl FromStr for WeightsSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(format!("expected three comma-separated weights, got `{s}`"));
        }
        let mut vals = [0.0f64; 3];
        for (slot, part) in vals.iter_mut().zip(&parts) {
            *slot = part.parse::<f64>().map_err(|e| format!("bad weight `{part}`: {e}"))?;
        }
        RewardWeights64::new(vals[0], vals[1], vals[2])
            .map(WeightsSpec)
            .map_err(|e| e.to_string())
    }
}

/// Parsed `--config` file plus the lookup logic.
#[derive(Debug, Default)]
pub struct Resolver {
    file: HashMap<String, String>,
}

impl Resolver {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else { return Ok(Resolver::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::validation(format!("config {}: {e}", path.display())))?;
        let mut file = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::validation(format!(
                    "config {} line {}: expected `key = value`",
                    path.display(),
                    lineno + 1
                )));
            };
            let key = key.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::validation(format!(
                    "config {} line {}: unknown key `{key}`",
                    path.display(),
                    lineno + 1
                )));
            }
            file.insert(key, value.trim().to_string());
        }
        Ok(Resolver { file })
    }

    /// flag > file > env > default.
    pub fn resolve<T>(&self, flag: Option<T>, key: &str, default: T) -> CliResult<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        if let Some(raw) = self.file.get(key) {
            return raw
                .parse()
                .map_err(|e| CliError::validation(format!("config key `{key}`: {e}")));
        }
        let env_key = format!("ALR_{}", key.to_uppercase());
        if let Ok(raw) = std::env::var(&env_key) {
            return raw.parse().map_err(|e| CliError::validation(format!("{env_key}: {e}")));
        }
        Ok(default)
    }
}
