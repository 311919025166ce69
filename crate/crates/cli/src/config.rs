//! Flat key=value run configuration with flag overrides.
//!
//! A config file holds one `key=value` pair per line; blank lines and `#`
//! comments are skipped. Flags override file entries. The single-tensor
//! memory ceiling layers as flag, then file, then the `PEPS_MEM_CEILING`
//! environment variable, then the built-in default. Problems are collected
//! rather than returned one at a time, so a bad invocation reports every
//! violation at once.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

/// Default single-tensor element ceiling: `2^30` elements, 8 GiB of doubles.
pub const DEFAULT_MEM_CEILING: u64 = 1 << 30;

pub const MEM_CEILING_ENV: &str = "PEPS_MEM_CEILING";

pub struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn empty() -> Self {
        FileConfig {
            values: BTreeMap::new(),
        }
    }

    pub fn load(path: &Path, errors: &mut Vec<String>) -> Self {
        let mut values = BTreeMap::new();
        match std::fs::read_to_string(path) {
            Err(e) => errors.push(format!("config {}: {e}", path.display())),
            Ok(text) => {
                for (i, raw) in text.lines().enumerate() {
                    let line = raw.trim();
                    if line.is_empty() || line.starts_with('#') {
                        continue;
                    }
                    match line.split_once('=') {
                        None => errors.push(format!(
                            "config line {}: expected key=value, got `{line}`",
                            i + 1
                        )),
                        Some((k, v)) => {
                            let key = k.trim().to_string();
                            if values.insert(key.clone(), v.trim().to_string()).is_some() {
                                errors.push(format!("config key {key} appears more than once"));
                            }
                        }
                    }
                }
            }
        }
        FileConfig { values }
    }

    /// Consumes `key` so that whatever remains at the end is unknown.
    pub fn take<T: FromStr>(&mut self, key: &str, errors: &mut Vec<String>) -> Option<T>
    where
        T::Err: Display,
    {
        let raw = self.values.remove(key)?;
        match raw.parse() {
            Ok(v) => Some(v),
            Err(e) => {
                errors.push(format!("config key {key}: cannot parse `{raw}`: {e}"));
                None
            }
        }
    }

    pub fn reject_leftovers(self, errors: &mut Vec<String>) {
        for k in self.values.keys() {
            errors.push(format!("unknown config key {k}"));
        }
    }
}

/// Ceiling precedence: flag, file, environment, default.
pub fn mem_ceiling(flag: Option<u64>, file: Option<u64>, errors: &mut Vec<String>) -> u64 {
    if let Some(v) = flag.or(file) {
        if v == 0 {
            errors.push("mem_ceiling must be at least 1 element".into());
            return DEFAULT_MEM_CEILING;
        }
        return v;
    }
    if let Ok(s) = std::env::var(MEM_CEILING_ENV) {
        match s.parse::<u64>() {
            Ok(v) if v >= 1 => return v,
            _ => errors.push(format!(
                "{MEM_CEILING_ENV}: cannot parse `{s}` as a positive element count"
            )),
        }
    }
    DEFAULT_MEM_CEILING
}

pub fn require(cond: bool, errors: &mut Vec<String>, msg: impl Into<String>) {
    if !cond {
        errors.push(msg.into());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn parses_keys_and_skips_comments() {
        let f = write_temp("# run setup\nchi_max = 4\n\nepsilon=0.01\n");
        let mut errs = Vec::new();
        let mut cfg = FileConfig::load(f.path(), &mut errs);
        assert!(errs.is_empty(), "{errs:?}");
        assert_eq!(cfg.take::<usize>("chi_max", &mut errs), Some(4));
        assert_eq!(cfg.take::<f64>("epsilon", &mut errs), Some(0.01));
        cfg.reject_leftovers(&mut errs);
        assert!(errs.is_empty(), "{errs:?}");
    }

    #[test]
    fn collects_every_problem() {
        let f = write_temp("chi_max=zero\nbogus line\nlh=4\nlh=5\nmystery=1\n");
        let mut errs = Vec::new();
        let mut cfg = FileConfig::load(f.path(), &mut errs);
        assert!(errs.iter().any(|e| e.contains("line 2")));
        assert!(errs.iter().any(|e| e.contains("lh appears more than once")));
        cfg.take::<usize>("chi_max", &mut errs);
        assert!(errs.iter().any(|e| e.contains("chi_max")));
        cfg.take::<usize>("lh", &mut errs);
        cfg.reject_leftovers(&mut errs);
        assert!(errs.iter().any(|e| e.contains("unknown config key mystery")));
        assert_eq!(errs.len(), 4);
    }

    #[test]
    fn missing_file_is_one_error() {
        let mut errs = Vec::new();
        FileConfig::load(Path::new("/nonexistent/peps.cfg"), &mut errs);
        assert_eq!(errs.len(), 1);
    }

    #[test]
    fn ceiling_precedence_runs_flag_file_env_default() {
        let mut errs = Vec::new();
        assert_eq!(mem_ceiling(Some(7), Some(9), &mut errs), 7);
        assert_eq!(mem_ceiling(None, Some(9), &mut errs), 9);
        assert!(errs.is_empty());
        // Env handling exercised in one place to avoid races between tests.
        std::env::set_var(MEM_CEILING_ENV, "123");
        assert_eq!(mem_ceiling(None, None, &mut errs), 123);
        std::env::set_var(MEM_CEILING_ENV, "junk");
        assert_eq!(mem_ceiling(None, None, &mut errs), DEFAULT_MEM_CEILING);
        assert!(errs.iter().any(|e| e.contains(MEM_CEILING_ENV)));
        std::env::remove_var(MEM_CEILING_ENV);
        assert_eq!(mem_ceiling(None, None, &mut errs), DEFAULT_MEM_CEILING);
        let n = errs.len();
        assert_eq!(mem_ceiling(Some(0), None, &mut errs), DEFAULT_MEM_CEILING);
        assert_eq!(errs.len(), n + 1);
    }
}
