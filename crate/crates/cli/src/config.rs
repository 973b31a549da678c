//! Flat `key = value` configuration with `--key value` overrides.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::CliError;

/// Defaults of the two shipped profiles.
fn profile_defaults(name: &str) -> Option<&'static [(&'static str, &'static str)]> {
    const DESK: &[(&str, &str)] = &[
        ("rows", "8"),
        ("cols", "8"),
        ("filters", "16"),
        ("residual_units", "2"),
        ("closeness", "1,2,3"),
        ("period_lags", "24,48,72"),
        ("trend", "168"),
        ("epochs_main", "8"),
        ("epochs_finetune", "2"),
    ];
    const FULL: &[(&str, &str)] = &[
        ("rows", "16"),
        ("cols", "16"),
        ("filters", "64"),
        ("residual_units", "6"),
        ("closeness", "1,2,3"),
        ("period_lags", "24,48,72"),
        ("trend", "168,336,504"),
        ("epochs_main", "200"),
        ("epochs_finetune", "50"),
    ];
    match name {
        "desk" => Some(DESK),
        "full" => Some(FULL),
        _ => None,
    }
}

/// Resolved configuration of one invocation.
///
/// Later sources win: profile defaults, then the `--config` file, then
/// command-line overrides. Every key a command reads is recorded so the
/// manifest lists the effective values, and leftover keys are rejected.
#[derive(Debug, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
    paths: BTreeMap<String, PathBuf>,
}

pub fn parse_text(text: &str, origin: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("{origin}:{}: expected `key = value`", i + 1)))?;
        let k = normalize_key(k.trim());
        if k.is_empty() {
            return Err(CliError::Usage(format!("{origin}:{}: empty key", i + 1)));
        }
        out.insert(k, v.trim().to_string());
    }
    Ok(out)
}

fn normalize_key(k: &str) -> String {
    k.replace('-', "_")
}

impl Config {
    /// Builds the configuration from the arguments after the subcommand.
    pub fn from_args(args: &[String]) -> Result<Self, CliError> {
        let mut overrides = BTreeMap::new();
        let mut config_file = None;
        let mut it = args.iter();
        while let Some(flag) = it.next() {
            let key = flag
                .strip_prefix("--")
                .filter(|k| !k.is_empty())
                .ok_or_else(|| CliError::Usage(format!("expected `--key value`, got `{flag}`")))?;
            let (key, value) = match key.split_once('=') {
                Some((k, v)) => (k.to_string(), v.to_string()),
                None => {
                    let v = it
                        .next()
                        .ok_or_else(|| CliError::Usage(format!("--{key} needs a value")))?;
                    (key.to_string(), v.clone())
                }
            };
            let key = normalize_key(&key);
            if key == "config" {
                config_file = Some(value);
            } else {
                overrides.insert(key, value);
            }
        }
        let mut file_values = BTreeMap::new();
        if let Some(path) = &config_file {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {path}: {e}")))?;
            file_values = parse_text(&text, path)?;
        }
        let profile = overrides
            .get("profile")
            .or_else(|| file_values.get("profile"))
            .cloned()
            .unwrap_or_else(|| "desk".into());
        let defaults = profile_defaults(&profile)
            .ok_or_else(|| CliError::Usage(format!("unknown profile `{profile}` (desk or full)")))?;
        let mut values: BTreeMap<String, String> =
            defaults.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        values.extend(file_values);
        values.extend(overrides);
        let mut cfg = Config { values, ..Default::default() };
        cfg.values.remove("profile");
        cfg.resolved.insert("profile".into(), profile);
        Ok(cfg)
    }

    fn raw(&mut self, key: &str) -> Option<String> {
        self.values.get(key).cloned()
    }

    fn record(&mut self, key: &str, value: String) {
        self.values.remove(key);
        self.resolved.insert(key.to_string(), value);
    }

    pub fn opt<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError> {
        match self.raw(key) {
            None => {
                self.values.remove(key);
                Ok(None)
            }
            Some(v) => {
                let parsed = v
                    .parse()
                    .map_err(|_| CliError::Usage(format!("bad value `{v}` for `{key}`")))?;
                self.record(key, v);
                Ok(Some(parsed))
            }
        }
    }

    pub fn get<T: FromStr + ToString>(&mut self, key: &str, default: T) -> Result<T, CliError> {
        match self.opt(key)? {
            Some(v) => Ok(v),
            None => {
                self.record(key, default.to_string());
                Ok(default)
            }
        }
    }

    pub fn require<T: FromStr>(&mut self, key: &str) -> Result<T, CliError> {
        self.opt(key)?.ok_or_else(|| CliError::Usage(format!("missing required key `{key}`")))
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&mut self, key: &str, default: &str) -> Result<Vec<T>, CliError> {
        let v = self.raw(key).unwrap_or_else(|| default.to_string());
        let out = v
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| CliError::Usage(format!("bad list item `{s}` in `{key}`"))))
            .collect::<Result<Vec<T>, _>>()?;
        self.record(key, v);
        Ok(out)
    }

    /// An input path. Paths are kept out of the recorded config; the
    /// manifest lists a content hash for them instead.
    pub fn input_path(&mut self, key: &str) -> Result<Option<PathBuf>, CliError> {
        let Some(v) = self.raw(key) else {
            return Ok(None);
        };
        self.values.remove(key);
        let p = PathBuf::from(v);
        if !p.exists() {
            return Err(CliError::Usage(format!("`{key}` path {} does not exist", p.display())));
        }
        self.paths.insert(key.to_string(), p.clone());
        Ok(Some(p))
    }

    pub fn require_input(&mut self, key: &str) -> Result<PathBuf, CliError> {
        self.input_path(key)?.ok_or_else(|| CliError::Usage(format!("missing required key `{key}`")))
    }

    /// Comma-separated input paths, hashed as `<key>.<i>`.
    pub fn input_list(&mut self, key: &str) -> Result<Vec<PathBuf>, CliError> {
        let Some(v) = self.raw(key) else {
            return Ok(Vec::new());
        };
        self.values.remove(key);
        let mut out = Vec::new();
        for (i, s) in v.split(',').map(str::trim).filter(|s| !s.is_empty()).enumerate() {
            let p = PathBuf::from(s);
            if !p.exists() {
                return Err(CliError::Usage(format!("`{key}` path {} does not exist", p.display())));
            }
            self.paths.insert(format!("{key}.{i}"), p.clone());
            out.push(p);
        }
        Ok(out)
    }

    /// The output directory; created if missing.
    pub fn out_dir(&mut self) -> Result<PathBuf, CliError> {
        let v = self.raw("out").ok_or_else(|| CliError::Usage("missing required key `out`".into()))?;
        self.values.remove("out");
        let p = PathBuf::from(v);
        fs::create_dir_all(&p)?;
        Ok(p)
    }

    /// Rejects keys nobody read. Profile defaults for keys a command does
    /// not use are dropped silently.
    pub fn finish(&mut self) -> Result<(), CliError> {
        let profile = self.resolved.get("profile").cloned().unwrap_or_default();
        let defaults = profile_defaults(&profile).unwrap_or(&[]);
        let unknown: Vec<&String> = self
            .values
            .iter()
            .filter(|(k, v)| !defaults.iter().any(|(dk, dv)| dk == k && dv == v))
            .map(|(k, _)| k)
            .collect();
        if !unknown.is_empty() {
            let names: Vec<&str> = unknown.iter().map(|s| s.as_str()).collect();
            return Err(CliError::Usage(format!("unknown key(s): {}", names.join(", "))));
        }
        Ok(())
    }

    pub fn resolved(&self) -> &BTreeMap<String, String> {
        &self.resolved
    }

    pub fn inputs(&self) -> &BTreeMap<String, PathBuf> {
        &self.paths
    }
}
