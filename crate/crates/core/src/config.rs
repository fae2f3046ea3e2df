//! Simulation and batch configuration, loaded from a TOML file with
//! `[sim]` and `[batch]` sections. Every field has a default, so an empty
//! file is a valid configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("bad override `{0}`: expected KEY=VALUE")]
    Override(String),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_firms: u32,
    pub n_markets: u32,
    pub n_cycles: u32,
    pub market_size_choices: Vec<u32>,
    pub initial_cash: f64,
    /// Interval for initial firm bundles and market barriers, per component.
    pub resource_init_range: [f64; 2],
    /// Interval for initial share values `v_j(0)`.
    pub share_value_range: [f64; 2],
    /// Imperfect-information amplitude; a firm of age `a` sees noise
    /// `amp / (1 + a / noise_horizon)`.
    pub noise_amplitude: f64,
    /// Age scale, in cycles, over which estimation noise decays.
    pub noise_horizon: f64,
    /// Probability that an attached IO firm reconsiders its market in a cycle.
    pub io_revision_rate: f64,
    /// Fraction of total asset value charged as cost every cycle.
    pub maintenance_rate: f64,
    pub crowding: f64,
    pub share_value_noise: f64,
    pub share_value_floor: f64,
    pub price_sensitivity: f64,
    pub price_floor: f64,
    pub initial_price: f64,
    pub initial_stock: f64,
    /// Value of off-market output sales relative to expected entry profit.
    pub output_fraction: f64,
    pub bankruptcy_grace: u32,
    /// Weight applied per elapsed cycle when accumulating total performance.
    pub discount: f64,
    pub rng_seed: u64,
    pub checkpoint_cycles: Vec<u32>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_firms: 200,
            n_markets: 20,
            n_cycles: 200,
            market_size_choices: vec![10, 100, 1000],
            initial_cash: 1000.0,
            resource_init_range: [0.0, 100.0],
            share_value_range: [0.5, 2.0],
            noise_amplitude: 0.5,
            noise_horizon: 1.0,
            io_revision_rate: 0.1,
            maintenance_rate: 0.01,
            crowding: 0.05,
            share_value_noise: 0.05,
            share_value_floor: 0.01,
            price_sensitivity: 0.1,
            price_floor: 0.01,
            initial_price: 1.0,
            initial_stock: 1e6,
            output_fraction: 0.5,
            bankruptcy_grace: 10,
            discount: 1.0,
            rng_seed: 0,
            checkpoint_cycles: vec![20, 200],
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError::Invalid(msg));
        if self.n_firms == 0 || !self.n_firms.is_multiple_of(2) {
            return fail(format!(
                "n_firms must be even and >= 2, got {}",
                self.n_firms
            ));
        }
        if self.n_markets == 0 {
            return fail("n_markets must be >= 1".into());
        }
        if self.market_size_choices.is_empty() || self.market_size_choices.contains(&0) {
            return fail("market_size_choices must be non-empty and positive".into());
        }
        if !(self.initial_cash.is_finite() && self.initial_cash >= 0.0) {
            return fail("initial_cash must be finite and >= 0".into());
        }
        check_range("resource_init_range", self.resource_init_range, 0.0)?;
        check_range(
            "share_value_range",
            self.share_value_range,
            f64::MIN_POSITIVE,
        )?;
        for (name, v) in [
            ("noise_amplitude", self.noise_amplitude),
            ("maintenance_rate", self.maintenance_rate),
            ("share_value_noise", self.share_value_noise),
        ] {
            if !(0.0..1.0).contains(&v) {
                return fail(format!("{name} must lie in [0, 1), got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.io_revision_rate) {
            return fail(format!(
                "io_revision_rate must lie in [0, 1], got {}",
                self.io_revision_rate
            ));
        }
        for (name, v) in [
            ("crowding", self.crowding),
            ("price_sensitivity", self.price_sensitivity),
            ("output_fraction", self.output_fraction),
            ("initial_stock", self.initial_stock),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return fail(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        for (name, v) in [
            ("noise_horizon", self.noise_horizon),
            ("share_value_floor", self.share_value_floor),
            ("price_floor", self.price_floor),
            ("initial_price", self.initial_price),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return fail(format!("{name} must be finite and > 0, got {v}"));
            }
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return fail(format!(
                "discount must lie in (0, 1], got {}",
                self.discount
            ));
        }
        if self.bankruptcy_grace == 0 {
            return fail("bankruptcy_grace must be >= 1".into());
        }
        if self.checkpoint_cycles.is_empty() {
            return fail("checkpoint_cycles must not be empty".into());
        }
        if self.checkpoint_cycles.windows(2).any(|w| w[0] >= w[1]) {
            return fail("checkpoint_cycles must be strictly increasing".into());
        }
        Ok(())
    }
}

fn check_range(name: &str, r: [f64; 2], min: f64) -> Result<(), ConfigError> {
    if r.iter().all(|x| x.is_finite()) && r[0] >= min && r[0] <= r[1] {
        Ok(())
    } else {
        Err(ConfigError::Invalid(format!(
            "{name} must be an interval [lo, hi] with {min} <= lo <= hi, got {r:?}"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchConfig {
    pub n_runs: u32,
    pub base_seed: u64,
    /// Worker threads; 0 means one per available core.
    pub workers: usize,
    pub trace: bool,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self {
            n_runs: 1008,
            base_seed: 0,
            workers: 0,
            trace: false,
        }
    }
}

impl BatchConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_runs == 0 {
            return Err(ConfigError::Invalid("n_runs must be >= 1".into()));
        }
        Ok(())
    }
}

/// The whole config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub sim: SimConfig,
    pub batch: BatchConfig,
}

impl Config {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        toml::from_str(s).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.sim.validate()?;
        self.batch.validate()
    }

    /// Applies `KEY=VALUE` overrides. `KEY` is `section.field` or a bare
    /// field name, looked up in `sim` first and then `batch`. `VALUE` is a
    /// TOML value (`0.3`, `[10, 100]`, `true`); anything that does not parse
    /// as one is taken as a string.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<(), ConfigError> {
        if overrides.is_empty() {
            return Ok(());
        }
        let mut root = toml::Value::try_from(&*self).expect("config always serializes");
        for raw in overrides {
            let raw = raw.as_ref();
            let (key, value) = raw
                .split_once('=')
                .ok_or_else(|| ConfigError::Override(raw.to_string()))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::Override(raw.to_string()));
            }
            let value = parse_value(value.trim());
            let table = root.as_table_mut().expect("root is a table");
            let (section, field) = match key.split_once('.') {
                Some((s, f)) => (s.to_string(), f.to_string()),
                None => {
                    let section = ["sim", "batch"]
                        .into_iter()
                        .find(|s| table[*s].get(key).is_some())
                        .ok_or_else(|| ConfigError::UnknownKey(key.to_string()))?;
                    (section.to_string(), key.to_string())
                }
            };
            let slot = table
                .get_mut(&section)
                .and_then(|s| s.as_table_mut())
                .and_then(|s| s.get_mut(&field))
                .ok_or_else(|| ConfigError::UnknownKey(key.to_string()))?;
            *slot = coerce(slot, value);
        }
        *self = root
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        Ok(())
    }
}

fn parse_value(s: &str) -> toml::Value {
    let doc = format!("v = {s}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(s.to_string()),
    }
}

/// Integers given for float fields (and vice versa for whole floats) are
/// converted so `--set initial_cash=500` works.
fn coerce(slot: &toml::Value, value: toml::Value) -> toml::Value {
    match (slot, &value) {
        (toml::Value::Float(_), toml::Value::Integer(i)) => toml::Value::Float(*i as f64),
        (toml::Value::Array(old), toml::Value::Array(new)) => {
            let proto = old.first();
            toml::Value::Array(
                new.iter()
                    .map(|v| match proto {
                        Some(p) => coerce(p, v.clone()),
                        None => v.clone(),
                    })
                    .collect(),
            )
        }
        _ => value,
    }
}
