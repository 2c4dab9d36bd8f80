//! Flat `key = value` run configuration with presets and overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
enum Origin {
    Default,
    Preset(String),
    File { path: String, line: usize },
    Flag,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Default => write!(f, "default"),
            Origin::Preset(p) => write!(f, "preset {p}"),
            Origin::File { path, line } => write!(f, "{path}:{line}"),
            Origin::Flag => write!(f, "command line"),
        }
    }
}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    origin: Origin,
}

#[derive(Debug, Clone, Default)]
pub struct Config {
    entries: BTreeMap<String, Entry>,
}

/// Every key a config may contain.
pub const KNOWN_KEYS: &[&str] = &[
    "preset",
    "model",
    "delta",
    "deltas",
    "length",
    "rate",
    "half_width",
    "alpha",
    "alphas",
    "theta",
    "mean_level",
    "sigma",
    "dt",
    "x_max",
    "n_particles",
    "two_n",
    "window",
    "initial",
    "seed",
    "seeds",
    "grid_size",
    "tol",
    "max_iter",
    "met_n",
    "eval_start",
    "eval_stop",
    "eval_count",
    "chain_length",
    "dump_trajectory",
    "horizons",
    "deviations",
    "methods",
    "systems",
    "chains",
    "naive_replicates",
    "twisted_replicates",
    "x0",
    "curve_alphas",
    "curve_particles",
    "curve_n",
    "curve_seeds",
    "t_values",
    "scaling",
    "scaling_particles",
    "scaling_seeds",
    "scaling_point",
];

fn preset(name: &str) -> Option<&'static [(&'static str, &'static str)]> {
    let entries: &'static [(&str, &str)] = match name {
        "neutron-wells" => &[
            ("model", "neutron"),
            ("deltas", "0,0.5,1,2,5"),
            ("n_particles", "250"),
            ("two_n", "2000"),
            ("window", "100"),
            ("initial", "dirac:0"),
            ("eval_count", "150"),
        ],
        "unit" => &[
            ("model", "rare-event"),
            ("half_width", "2"),
            ("alpha", "0"),
            ("n_particles", "100"),
            ("two_n", "40"),
            ("window", "4"),
        ],
        "cir-bellman" => &[
            ("model", "cir"),
            ("delta", "5"),
            ("n_particles", "500"),
            ("two_n", "4000"),
            ("window", "1000"),
            ("initial", "dirac:10"),
            ("eval_start", "4"),
            ("eval_stop", "20"),
            ("eval_count", "321"),
        ],
        "rare-event-decay" => &[
            ("model", "rare-event"),
            ("half_width", "1"),
            ("alpha", "6"),
            ("n_particles", "250"),
            ("two_n", "1000"),
            ("horizons", "1,2,3,4,5,6,7,8,9,10"),
            ("deviations", "0.8,0.9,0.99"),
            ("systems", "2000"),
            ("chains", "1"),
            ("methods", "conditional"),
            ("curve_alphas", "0,1,2,3,4,5,6,7,8,9,10,11,12,13,14,15,16"),
            ("curve_particles", "250"),
            ("curve_n", "500"),
        ],
        "alpha-sweep" => &[
            ("model", "rare-event"),
            ("half_width", "1"),
            ("alphas", "1,2,4,8,16"),
            ("n_particles", "100"),
            ("two_n", "16"),
            ("horizons", "2,4,6,8"),
            ("deviations", "0.9"),
            ("systems", "2000"),
            ("chains", "20"),
            ("methods", "naive,conditional"),
            ("naive_replicates", "1000000"),
        ],
        _ => return None,
    };
    Some(entries)
}

pub const PRESETS: &[&str] = &["neutron-wells", "unit", "cir-bellman", "rare-event-decay", "alpha-sweep"];

impl Config {
    /// Layers a config file, a preset named in either, and flag overrides.
    pub fn assemble(file: Option<&Path>, overrides: &[(String, String)]) -> CliResult<Self> {
        let mut file_cfg = Config::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
            file_cfg = Config::parse(&text, &path.display().to_string())?;
        }
        let preset_name = overrides
            .iter()
            .rev()
            .find(|(k, _)| k == "preset")
            .map(|(_, v)| v.clone())
            .or_else(|| file_cfg.entries.get("preset").map(|e| e.value.clone()));

        let mut cfg = Config::default();
        if let Some(name) = preset_name {
            let entries = preset(&name).ok_or_else(|| {
                CliError::Config(format!("unknown preset {name:?}; available: {}", PRESETS.join(", ")))
            })?;
            for (k, v) in entries {
                cfg.insert(k, v, Origin::Preset(name.clone()));
            }
        }
        for (k, e) in file_cfg.entries {
            cfg.entries.insert(k, e);
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn parse(text: &str, source: &str) -> CliResult<Self> {
        let mut cfg = Config::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("{source}:{}: expected `key = value`, got {raw:?}", idx + 1))
            })?;
            let key = key.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(CliError::Config(format!("{source}:{}: unknown key {key:?}", idx + 1)));
            }
            cfg.insert(key, value.trim(), Origin::File { path: source.to_string(), line: idx + 1 });
        }
        Ok(cfg)
    }

    fn insert(&mut self, key: &str, value: &str, origin: Origin) {
        self.entries.insert(key.to_string(), Entry { value: value.to_string(), origin });
    }

    /// A command-line override.
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let key = key.replace('-', "_");
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(CliError::Config(format!("unknown option --{key}")));
        }
        self.insert(&key, value, Origin::Flag);
        Ok(())
    }

    /// Records a value chosen by the program, unless the user set one.
    pub fn default_value(&mut self, key: &str, value: &str) {
        if !self.entries.contains_key(key) {
            self.insert(key, value, Origin::Default);
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    fn bad(&self, key: &str, what: &str) -> CliError {
        let e = &self.entries[key];
        CliError::Config(format!("{}: {key} = {:?} {what}", e.origin, e.value))
    }

    pub fn get<T: FromStr>(&self, key: &str, default: T) -> CliResult<T> {
        match self.entries.get(key) {
            None => Ok(default),
            Some(e) => e.value.parse().map_err(|_| self.bad(key, "cannot be parsed")),
        }
    }

    /// A count that must be at least 1.
    pub fn count(&self, key: &str, default: usize) -> CliResult<usize> {
        let v: usize = self.get(key, default)?;
        if v == 0 {
            return Err(match self.entries.get(key) {
                Some(_) => self.bad(key, "must be positive"),
                None => CliError::Config(format!("{key} must be positive")),
            });
        }
        Ok(v)
    }

    pub fn list<T: FromStr>(&self, key: &str, default: &[T]) -> CliResult<Vec<T>>
    where
        T: Clone,
    {
        match self.entries.get(key) {
            None => Ok(default.to_vec()),
            Some(e) => e
                .value
                .split(',')
                .map(|s| s.trim().parse().map_err(|_| self.bad(key, "is not a comma-separated list")))
                .collect(),
        }
    }

    pub fn flag(&self, key: &str) -> CliResult<bool> {
        match self.raw(key) {
            None => Ok(false),
            Some("true" | "1" | "yes") => Ok(true),
            Some("false" | "0" | "no") => Ok(false),
            Some(_) => Err(self.bad(key, "is not a boolean")),
        }
    }

    /// The effective configuration as sorted `key = value` pairs.
    pub fn effective(&self) -> BTreeMap<String, String> {
        self.entries.iter().map(|(k, e)| (k.clone(), e.value.clone())).collect()
    }
}
