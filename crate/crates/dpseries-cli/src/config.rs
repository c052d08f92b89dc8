//! Run configuration: built-in defaults, then a `key = value` file, then
//! `DPSERIES_*` environment variables, then command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use dpseries::error::{Error, Result};

/// Prefix of environment overrides; `cache_dir` becomes `DPSERIES_CACHE_DIR`.
pub const ENV_PREFIX: &str = "DPSERIES_";

/// Keys accepted in the config file and as environment overrides.
pub const KEYS: [&str; 12] = [
    "datum",
    "cache_dir",
    "q",
    "prime_seed",
    "workers",
    "block_rows",
    "candidates",
    "references",
    "scripts_dir",
    "run_kernels",
    "spill",
    "spill_limit",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    pub datum: String,
    pub cache_dir: PathBuf,
    /// Residue field size used for Hecke computations.
    pub q: i64,
    /// Seeds the choice of random primes and projections in kernel runs.
    pub prime_seed: u64,
    pub workers: usize,
    pub block_rows: usize,
    /// Candidate table; the bundled one when `None`.
    pub candidates: Option<PathBuf>,
    /// Reference verdicts for cells no method computes; bundled when `None`.
    pub references: Option<PathBuf>,
    /// Extra proof scripts, searched before the bundled ones.
    pub scripts_dir: Option<PathBuf>,
    /// Compute scripted kernels during classification instead of falling
    /// back to a cached result or a reference verdict.
    pub run_kernels: bool,
    /// Write module rows to the spill file before elimination.
    pub spill: bool,
    /// Size limit in bytes for the spill file.
    pub spill_limit: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            datum: "E7".into(),
            cache_dir: PathBuf::from("dpseries-cache"),
            q: 2,
            prime_seed: 0x5eed,
            workers: 1,
            block_rows: 64,
            candidates: None,
            references: None,
            scripts_dir: None,
            run_kernels: false,
            spill: false,
            spill_limit: None,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!(
            "{key}: expected a boolean, got {value:?}"
        ))),
    }
}

fn optional_path(value: &str) -> Option<PathBuf> {
    let v = value.trim();
    (!v.is_empty()).then(|| PathBuf::from(v))
}

impl RunConfig {
    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "datum" => self.datum = value.trim().to_string(),
            "cache_dir" => self.cache_dir = PathBuf::from(value.trim()),
            "q" => self.q = parse_num(key, value)?,
            "prime_seed" => self.prime_seed = parse_num(key, value)?,
            "workers" => self.workers = parse_num(key, value)?,
            "block_rows" => self.block_rows = parse_num(key, value)?,
            "candidates" => self.candidates = optional_path(value),
            "references" => self.references = optional_path(value),
            "scripts_dir" => self.scripts_dir = optional_path(value),
            "run_kernels" => self.run_kernels = parse_bool(key, value)?,
            "spill" => self.spill = parse_bool(key, value)?,
            "spill_limit" => {
                self.spill_limit = if value.trim().is_empty() {
                    None
                } else {
                    Some(parse_num(key, value)?)
                }
            }
            _ => return Err(Error::Config(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` text. Blank lines and lines starting
    /// with `#` are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("{origin}:{}: expected key = value", n + 1))
            })?;
            self.set(k.trim(), v)
                .map_err(|e| Error::Config(format!("{origin}:{}: {e}", n + 1)))?;
        }
        Ok(())
    }

    /// Applies every `DPSERIES_<KEY>` variable whose key is known.
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) -> Result<()> {
        let mut vars: Vec<(String, String)> = vars.into_iter().collect();
        vars.sort();
        for (name, value) in vars {
            let Some(key) = name.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let key = key.to_ascii_lowercase();
            if KEYS.contains(&key.as_str()) {
                self.set(&key, &value)
                    .map_err(|e| Error::Config(format!("{name}: {e}")))?;
            }
        }
        Ok(())
    }

    /// Defaults, then the file (if any), then the environment.
    pub fn load<I: IntoIterator<Item = (String, String)>>(
        file: Option<&Path>,
        env: I,
    ) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            let text = fs::read_to_string(path).map_err(|e| {
                Error::Config(format!("cannot read config {}: {e}", path.display()))
            })?;
            cfg.apply_text(&text, &path.display().to_string())?;
        }
        cfg.apply_env(env)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        dpseries::rootsys::build_root_datum(&self.datum)?;
        if self.q < 2 {
            return Err(Error::Config(format!(
                "q must be at least 2, got {}",
                self.q
            )));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.block_rows == 0 {
            return Err(Error::Config("block_rows must be at least 1".into()));
        }
        Ok(())
    }

    /// The configuration as `key = value` lines, in [`KEYS`] order.
    pub fn to_text(&self) -> String {
        let p = |x: &Option<PathBuf>| {
            x.as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        };
        let values = [
            self.datum.clone(),
            self.cache_dir.display().to_string(),
            self.q.to_string(),
            self.prime_seed.to_string(),
            self.workers.to_string(),
            self.block_rows.to_string(),
            p(&self.candidates),
            p(&self.references),
            p(&self.scripts_dir),
            self.run_kernels.to_string(),
            self.spill.to_string(),
            self.spill_limit.map(|v| v.to_string()).unwrap_or_default(),
        ];
        KEYS.iter()
            .zip(values)
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}
