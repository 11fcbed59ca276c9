//! Flat key-value run configuration: INI-style files with dotted keys,
//! `--set` overrides, typed access with defaults, and rejection of unknown
//! keys so typos never pass silently.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::error::{Error, Result};
use crate::spectra::FilterEnergy;

/// Every key any subcommand understands. Provided keys outside this list
/// are rejected up front.
pub const KNOWN_KEYS: &[&str] = &[
    "system.sites",
    "ham.j",
    "ham.delta",
    "ham.epsilon0",
    "detect.p",
    "detect.q",
    "detect.tau",
    "detect.steps",
    "filter.energy",
    "filter.sigma",
    "filter.seed",
    "cheb.tol",
    "arnoldi.dim",
    "arnoldi.restarts",
    "arnoldi.tol",
    "arnoldi.stall",
    "sweep.deltas",
    "rn.with_lambda1",
    "dynamics.t_max",
    "dynamics.samples",
    "dynamics.site",
    "singleshot.time",
    "transition.epsilon",
    "trajectory.count",
    "trajectory.click_times",
    "opdump.kind",
    "plot.floor",
];

/// Parsed configuration plus a record of every key actually resolved
/// (defaults included), which is what lands in the run manifest.
#[derive(Debug, Default)]
pub struct Config {
    provided: BTreeMap<String, String>,
    resolved: std::cell::RefCell<BTreeMap<String, String>>,
}

impl Config {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Parse an INI-like file: `# comments`, `[section]` headers prefixing
    /// the keys that follow, `key = value` lines (keys may also be written
    /// fully dotted). Duplicate keys are rejected.
    pub fn from_str(text: &str) -> Result<Self> {
        let mut provided = BTreeMap::new();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Validation(format!(
                    "config line {}: expected `key = value`, got `{line}`",
                    lineno + 1
                )));
            };
            let key = key.trim();
            let full = if section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            if provided
                .insert(full.clone(), value.trim().to_string())
                .is_some()
            {
                return Err(Error::Validation(format!(
                    "config line {}: duplicate key `{full}`",
                    lineno + 1
                )));
            }
        }
        Ok(Self {
            provided,
            resolved: Default::default(),
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str(&text)
    }

    /// Apply a `KEY=VALUE` override.
    pub fn set_override(&mut self, spec: &str) -> Result<()> {
        let Some((key, value)) = spec.split_once('=') else {
            return Err(Error::Validation(format!(
                "override `{spec}` is not of the form KEY=VALUE"
            )));
        };
        self.provided
            .insert(key.trim().to_string(), value.trim().to_string());
        Ok(())
    }

    /// Reject any provided key outside the known registry.
    pub fn reject_unknown_keys(&self) -> Result<()> {
        let known: BTreeSet<&str> = KNOWN_KEYS.iter().copied().collect();
        let unknown: Vec<&str> = self
            .provided
            .keys()
            .map(String::as_str)
            .filter(|k| !known.contains(k))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "unknown configuration key(s): {}",
                unknown.join(", ")
            )))
        }
    }

    fn record(&self, key: &str, value: String) {
        self.resolved.borrow_mut().insert(key.to_string(), value);
    }

    pub fn get_str(&self, key: &str, default: &str) -> String {
        let v = self
            .provided
            .get(key)
            .cloned()
            .unwrap_or_else(|| default.to_string());
        self.record(key, v.clone());
        v
    }

    pub fn get_f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.provided.get(key) {
            None => {
                self.record(key, format!("{default}"));
                Ok(default)
            }
            Some(s) => {
                let v: f64 = s
                    .parse()
                    .map_err(|_| Error::Validation(format!("key `{key}`: `{s}` is not a number")))?;
                self.record(key, format!("{v}"));
                Ok(v)
            }
        }
    }

    pub fn get_usize(&self, key: &str, default: usize) -> Result<usize> {
        match self.provided.get(key) {
            None => {
                self.record(key, format!("{default}"));
                Ok(default)
            }
            Some(s) => {
                let v: usize = s.parse().map_err(|_| {
                    Error::Validation(format!("key `{key}`: `{s}` is not a nonnegative integer"))
                })?;
                self.record(key, format!("{v}"));
                Ok(v)
            }
        }
    }

    pub fn get_i64(&self, key: &str, default: i64) -> Result<i64> {
        match self.provided.get(key) {
            None => {
                self.record(key, format!("{default}"));
                Ok(default)
            }
            Some(s) => {
                let v: i64 = s
                    .parse()
                    .map_err(|_| Error::Validation(format!("key `{key}`: `{s}` is not an integer")))?;
                self.record(key, format!("{v}"));
                Ok(v)
            }
        }
    }

    pub fn get_u64(&self, key: &str, default: u64) -> Result<u64> {
        Ok(self.get_i64(key, default as i64)? as u64)
    }

    pub fn get_bool(&self, key: &str, default: bool) -> Result<bool> {
        let s = self.get_str(key, if default { "true" } else { "false" });
        match s.as_str() {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            other => Err(Error::Validation(format!(
                "key `{key}`: `{other}` is not a boolean"
            ))),
        }
    }

    /// Comma-separated float list; must be nonempty and strictly ascending.
    pub fn get_f64_list(&self, key: &str, default: &str) -> Result<Vec<f64>> {
        let s = self.get_str(key, default);
        if s.trim().is_empty() {
            return Err(Error::Validation(format!("key `{key}`: empty list")));
        }
        let vals: Vec<f64> = s
            .split(',')
            .map(|item| {
                item.trim().parse::<f64>().map_err(|_| {
                    Error::Validation(format!("key `{key}`: `{item}` is not a number"))
                })
            })
            .collect::<Result<_>>()?;
        if vals.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation(format!(
                "key `{key}`: values must be strictly ascending"
            )));
        }
        Ok(vals)
    }

    /// `ground`, `mid`, or an explicit energy value.
    pub fn get_filter_energy(&self, key: &str) -> Result<FilterEnergy> {
        let s = self.get_str(key, "ground");
        match s.as_str() {
            "ground" => Ok(FilterEnergy::Ground),
            "mid" => Ok(FilterEnergy::Mid),
            other => other.parse::<f64>().map(FilterEnergy::Value).map_err(|_| {
                Error::Validation(format!(
                    "key `{key}`: expected `ground`, `mid` or a number, got `{other}`"
                ))
            }),
        }
    }

    /// Everything resolved so far plus everything provided, for the manifest.
    pub fn manifest_view(&self) -> BTreeMap<String, String> {
        let mut out = self.resolved.borrow().clone();
        for (k, v) in &self.provided {
            out.insert(k.clone(), v.clone());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_dotted_keys() {
        let text = "# comment\nham.delta = 2.0\n[detect]\np = 3\nq = 5\n";
        let config = Config::from_str(text).unwrap();
        assert_eq!(config.get_f64("ham.delta", 1.0).unwrap(), 2.0);
        assert_eq!(config.get_i64("detect.p", 1).unwrap(), 3);
        assert_eq!(config.get_i64("detect.q", 2).unwrap(), 5);
        assert!(config.reject_unknown_keys().is_ok());
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys() {
        let config = Config::from_str("ham.delat = 2.0\n").unwrap();
        assert!(config.reject_unknown_keys().is_err());
        assert!(Config::from_str("a = 1\na = 2\n").is_err());
        assert!(Config::from_str("just a line\n").is_err());
    }

    #[test]
    fn overrides_replace_file_values() {
        let mut config = Config::from_str("ham.delta = 2.0\n").unwrap();
        config.set_override("ham.delta=0.5").unwrap();
        assert_eq!(config.get_f64("ham.delta", 1.0).unwrap(), 0.5);
        assert!(config.set_override("nonsense").is_err());
    }

    #[test]
    fn lists_must_ascend() {
        let config = Config::empty();
        assert_eq!(
            config.get_f64_list("sweep.deltas", "0.5,1.0,2.0").unwrap(),
            vec![0.5, 1.0, 2.0]
        );
        let bad = Config::from_str("sweep.deltas = 1.0,0.5\n").unwrap();
        assert!(bad.get_f64_list("sweep.deltas", "1.0").is_err());
        let empty = Config::from_str("sweep.deltas =\n").unwrap();
        assert!(empty.get_f64_list("sweep.deltas", "1.0").is_err());
    }

    #[test]
    fn manifest_view_includes_defaults_once_read() {
        let config = Config::empty();
        let _ = config.get_f64("detect.tau", 2.0).unwrap();
        let view = config.manifest_view();
        assert_eq!(view.get("detect.tau").map(String::as_str), Some("2"));
    }

    #[test]
    fn filter_energy_forms() {
        let config = Config::from_str("filter.energy = mid\n").unwrap();
        assert_eq!(
            config.get_filter_energy("filter.energy").unwrap(),
            FilterEnergy::Mid
        );
        let num = Config::from_str("filter.energy = -3.25\n").unwrap();
        assert_eq!(
            num.get_filter_energy("filter.energy").unwrap(),
            FilterEnergy::Value(-3.25)
        );
        let bad = Config::from_str("filter.energy = low\n").unwrap();
        assert!(bad.get_filter_energy("filter.energy").is_err());
    }
}
