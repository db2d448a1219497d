//! Scenario configuration, unit conversions and the flat `key = value` file format.
//!
//! Every scenario, PHY, scheme and learning hyperparameter lives in one
//! [`SimConfig`]. Files are UTF-8, one `key = value` per line, `#` starts a
//! comment, lists are written `[1, 2, 4]` (brackets optional). Keys that are
//! absent keep their defaults, which reproduce the reference scenario
//! (20000 bursty UEs over 2 s, 10 km cell, 23 dBm, -132 dBm noise, -10 dB
//! threshold, K in {1,2,4,6,8}, C in {12,24,36,48}, F = 4, 2 ms budget).

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Environment variable that overrides the `seed` key of a loaded file.
pub const SEED_ENV_VAR: &str = "GFNOMA_SEED";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("invalid `{key}`: {msg}")]
    Invalid { key: &'static str, msg: String },
}

fn invalid(key: &'static str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key,
        msg: msg.into(),
    }
}

/// Grant-free repetition scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    /// K blind repetitions, feedback only after the last one.
    KRepetition,
    /// Up to K repetitions, early stop on ACK (three-TTI feedback lag).
    Proactive,
}

impl Scheme {
    pub fn key(self) -> &'static str {
        match self {
            Scheme::KRepetition => "krep",
            Scheme::Proactive => "proactive",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "krep" | "k-repetition" | "krepetition" => Ok(Scheme::KRepetition),
            "proactive" | "proa" => Ok(Scheme::Proactive),
            other => Err(format!("unknown scheme `{other}` (expected krep or proactive)")),
        }
    }
}

/// Learning hyperparameters shared by every Q-learning agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnConfig {
    /// RMSProp learning rate.
    pub lr: f64,
    /// Discount factor.
    pub gamma: f64,
    /// Floor of the exploration rate.
    pub eps_min: f64,
    pub minibatch: usize,
    pub replay_capacity: usize,
    /// Target-network copy period, counted in gradient steps.
    pub target_sync_every: usize,
    pub hidden_sizes: Vec<usize>,
    /// Number of past (action, observation) slots in the cooperative state.
    pub m_obs: usize,
    pub episodes: usize,
    /// Fraction of the episodes over which epsilon decays linearly from 1.
    pub eps_decay_fraction: f64,
    /// Decouple argmax (online net) from evaluation (target net).
    pub ddqn: bool,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            gamma: 0.5,
            eps_min: 0.1,
            minibatch: 32,
            replay_capacity: 10_000,
            target_sync_every: 1000,
            hidden_sizes: vec![128, 128],
            m_obs: 5,
            episodes: 300,
            eps_decay_fraction: 0.5,
            ddqn: true,
        }
    }
}

impl LearnConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(invalid("lr", format!("must be > 0, got {}", self.lr)));
        }
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return Err(invalid("gamma", format!("must lie in [0, 1), got {}", self.gamma)));
        }
        if !(self.eps_min > 0.0 && self.eps_min <= 1.0) {
            return Err(invalid("eps_min", format!("must lie in (0, 1], got {}", self.eps_min)));
        }
        if self.minibatch == 0 {
            return Err(invalid("minibatch", "must be >= 1"));
        }
        if self.minibatch > self.replay_capacity {
            return Err(invalid(
                "minibatch",
                format!(
                    "minibatch {} exceeds replay_capacity {}",
                    self.minibatch, self.replay_capacity
                ),
            ));
        }
        if self.m_obs == 0 {
            return Err(invalid("m_obs", "must be >= 1"));
        }
        if self.target_sync_every == 0 {
            return Err(invalid("target_sync_every", "must be >= 1"));
        }
        if self.hidden_sizes.contains(&0) {
            return Err(invalid("hidden_sizes", "layer widths must be positive"));
        }
        if !(0.0..=1.0).contains(&self.eps_decay_fraction) {
            return Err(invalid("eps_decay_fraction", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Complete, validated scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_ues: usize,
    pub cell_radius_m: f64,
    pub pathloss_exp: f64,
    pub tx_power_dbm: f64,
    pub noise_dbm: f64,
    pub sinr_threshold_db: f64,
    pub tti_ms: f64,
    pub traffic_total_s: f64,
    pub beta_alpha: f64,
    pub beta_beta: f64,
    pub scheme: Scheme,
    pub k_set: Vec<u32>,
    pub c_set: Vec<u32>,
    pub n_rbs: u32,
    pub latency_constraint_ms: f64,
    pub learn: LearnConfig,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_ues: 20_000,
            cell_radius_m: 10_000.0,
            pathloss_exp: 4.0,
            tx_power_dbm: 23.0,
            noise_dbm: -132.0,
            sinr_threshold_db: -10.0,
            tti_ms: 0.125,
            traffic_total_s: 2.0,
            beta_alpha: 2.0,
            beta_beta: 4.0,
            scheme: Scheme::KRepetition,
            k_set: vec![1, 2, 4, 6, 8],
            c_set: vec![12, 24, 36, 48],
            n_rbs: 4,
            latency_constraint_ms: 2.0,
            learn: LearnConfig::default(),
            seed: 1,
        }
    }
}

/// Named scale presets for the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Profile {
    /// 2000 UEs over 0.5 s, 300 training episodes, 50 evaluation episodes.
    Desk,
    /// The full 20000-UE, 2 s scenario.
    Paper,
}

impl Profile {
    /// Overwrites the scale-related keys of `cfg`.
    pub fn apply(self, cfg: &mut SimConfig) {
        match self {
            Profile::Desk => {
                cfg.n_ues = 2000;
                cfg.traffic_total_s = 0.5;
                cfg.learn.episodes = 300;
            }
            Profile::Paper => {
                cfg.n_ues = 20_000;
                cfg.traffic_total_s = 2.0;
                cfg.learn.episodes = 1000;
            }
        }
    }

    pub fn eval_episodes(self) -> usize {
        match self {
            Profile::Desk => 50,
            Profile::Paper => 1000,
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Profile::Desk => "desk",
            Profile::Paper => "paper",
        }
    }
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => Err(format!("unknown profile `{other}` (expected desk or paper)")),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check_positive_finite("tti_ms", self.tti_ms)?;
        check_positive_finite("traffic_total_s", self.traffic_total_s)?;
        check_positive_finite("cell_radius_m", self.cell_radius_m)?;
        check_positive_finite("beta_alpha", self.beta_alpha)?;
        check_positive_finite("beta_beta", self.beta_beta)?;
        check_positive_finite("latency_constraint_ms", self.latency_constraint_ms)?;
        for (key, v) in [
            ("pathloss_exp", self.pathloss_exp),
            ("tx_power_dbm", self.tx_power_dbm),
            ("noise_dbm", self.noise_dbm),
            ("sinr_threshold_db", self.sinr_threshold_db),
        ] {
            if !v.is_finite() {
                return Err(invalid(key, "must be finite"));
            }
        }
        if self.n_rbs == 0 {
            return Err(invalid("n_rbs", "must be >= 1"));
        }
        check_increasing("k_set", &self.k_set)?;
        check_increasing("c_set", &self.c_set)?;
        if let Some(&c) = self.c_set.iter().find(|&&c| c % self.n_rbs != 0) {
            return Err(invalid(
                "c_set",
                format!("C not divisible by F: {c} % {} != 0", self.n_rbs),
            ));
        }
        let budget = self.latency_budget_ttis()?;
        let shortest = rtt_duration_ttis(self.k_set[0]);
        if budget < shortest {
            return Err(invalid(
                "latency_constraint_ms",
                format!("budget of {budget} TTIs cannot hold one RTT of {shortest} TTIs"),
            ));
        }
        self.learn.validate()
    }

    /// The latency constraint expressed in TTIs.
    pub fn latency_budget_ttis(&self) -> Result<u32, ConfigError> {
        latency_budget_ttis(self.latency_constraint_ms, self.tti_ms)
    }

    /// Traffic horizon `T` in TTIs (rounded up).
    pub fn horizon_ttis(&self) -> u64 {
        (self.traffic_total_s * 1e3 / self.tti_ms - 1e-9).ceil().max(0.0) as u64
    }

    pub fn tti_s(&self) -> f64 {
        self.tti_ms * 1e-3
    }

    pub fn c_max(&self) -> u32 {
        *self.c_set.last().expect("validated c_set is nonempty")
    }

    /// Serialize to the canonical `key = value` text, one key per field.
    pub fn to_kv_string(&self) -> String {
        let l = &self.learn;
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        put("n_ues", self.n_ues.to_string());
        put("cell_radius_m", fmt_f64(self.cell_radius_m));
        put("pathloss_exp", fmt_f64(self.pathloss_exp));
        put("tx_power_dbm", fmt_f64(self.tx_power_dbm));
        put("noise_dbm", fmt_f64(self.noise_dbm));
        put("sinr_threshold_db", fmt_f64(self.sinr_threshold_db));
        put("tti_ms", fmt_f64(self.tti_ms));
        put("traffic_total_s", fmt_f64(self.traffic_total_s));
        put("beta_alpha", fmt_f64(self.beta_alpha));
        put("beta_beta", fmt_f64(self.beta_beta));
        put("scheme", self.scheme.key().to_string());
        put("k_set", fmt_list(&self.k_set));
        put("c_set", fmt_list(&self.c_set));
        put("n_rbs", self.n_rbs.to_string());
        put("latency_constraint_ms", fmt_f64(self.latency_constraint_ms));
        put("seed", self.seed.to_string());
        put("lr", fmt_f64(l.lr));
        put("gamma", fmt_f64(l.gamma));
        put("eps_min", fmt_f64(l.eps_min));
        put("minibatch", l.minibatch.to_string());
        put("replay_capacity", l.replay_capacity.to_string());
        put("target_sync_every", l.target_sync_every.to_string());
        put("hidden_sizes", fmt_list(&l.hidden_sizes));
        put("m_obs", l.m_obs.to_string());
        put("episodes", l.episodes.to_string());
        put("eps_decay_fraction", fmt_f64(l.eps_decay_fraction));
        put("ddqn", l.ddqn.to_string());
        s
    }

    /// Parse `key = value` text on top of the defaults and validate.
    pub fn from_kv_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = SimConfig::default();
        cfg.apply_kv_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply `key = value` lines on top of `self` without validating.
    pub fn apply_kv_str(&mut self, text: &str) -> Result<(), ConfigError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
                line: idx + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| match e {
                    ConfigError::Parse { msg, .. } => ConfigError::Parse { line: idx + 1, msg },
                    other => other,
                })?;
        }
        Ok(())
    }

    /// Set one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let l = &mut self.learn;
        match key {
            "n_ues" => self.n_ues = parse(key, value)?,
            "cell_radius_m" => self.cell_radius_m = parse(key, value)?,
            "pathloss_exp" => self.pathloss_exp = parse(key, value)?,
            "tx_power_dbm" => self.tx_power_dbm = parse(key, value)?,
            "noise_dbm" => self.noise_dbm = parse(key, value)?,
            "sinr_threshold_db" => self.sinr_threshold_db = parse(key, value)?,
            "tti_ms" => self.tti_ms = parse(key, value)?,
            "traffic_total_s" => self.traffic_total_s = parse(key, value)?,
            "beta_alpha" => self.beta_alpha = parse(key, value)?,
            "beta_beta" => self.beta_beta = parse(key, value)?,
            "scheme" => {
                self.scheme = value.parse().map_err(|msg| ConfigError::Parse { line: 0, msg })?
            }
            "k_set" => self.k_set = parse_list(key, value)?,
            "c_set" => self.c_set = parse_list(key, value)?,
            "n_rbs" => self.n_rbs = parse(key, value)?,
            "latency_constraint_ms" => self.latency_constraint_ms = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "lr" => l.lr = parse(key, value)?,
            "gamma" => l.gamma = parse(key, value)?,
            "eps_min" => l.eps_min = parse(key, value)?,
            "minibatch" => l.minibatch = parse(key, value)?,
            "replay_capacity" => l.replay_capacity = parse(key, value)?,
            "target_sync_every" => l.target_sync_every = parse(key, value)?,
            "hidden_sizes" => l.hidden_sizes = parse_list(key, value)?,
            "m_obs" => l.m_obs = parse(key, value)?,
            "episodes" => l.episodes = parse(key, value)?,
            "eps_decay_fraction" => l.eps_decay_fraction = parse(key, value)?,
            "ddqn" => l.ddqn = parse(key, value)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Applies a textual seed override, as read from [`SEED_ENV_VAR`].
    pub fn apply_seed_override(&mut self, value: Option<&str>) -> Result<(), ConfigError> {
        if let Some(v) = value {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| invalid("seed", format!("{SEED_ENV_VAR}=`{v}` is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ConfigError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_kv_string()).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Read, parse and validate a config file. `GFNOMA_SEED`, when set, replaces `seed`.
pub fn load_config(path: impl AsRef<Path>) -> Result<SimConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut cfg = SimConfig::default();
    cfg.apply_kv_str(&text)?;
    cfg.apply_seed_override(std::env::var(SEED_ENV_VAR).ok().as_deref())?;
    cfg.validate()?;
    Ok(cfg)
}

/// Convert a power in dBm to watts: `10^(p/10) * 1e-3`.
pub fn dbm_to_watt<T: Scalar>(p_dbm: T) -> T {
    T::of(10.0).powf(p_dbm / T::of(10.0)) * T::of(1e-3)
}

/// Convert a ratio in dB to linear scale.
pub fn db_to_linear<T: Scalar>(x_db: T) -> T {
    T::of(10.0).powf(x_db / T::of(10.0))
}

/// Length of one round trip: K repetitions plus feedback and two processing TTIs.
pub fn rtt_duration_ttis(k: u32) -> u32 {
    debug_assert!(k >= 1);
    k + 3
}

/// `latency_ms / tti_ms`, rejected unless it is an integer to within 1e-9.
pub fn latency_budget_ttis(latency_ms: f64, tti_ms: f64) -> Result<u32, ConfigError> {
    let q = latency_ms / tti_ms;
    let r = q.round();
    if !q.is_finite() || (q - r).abs() > 1e-9 || r < 0.0 || r > u32::MAX as f64 {
        return Err(invalid(
            "latency_constraint_ms",
            format!("{latency_ms} ms is not a whole number of {tti_ms} ms TTIs"),
        ));
    }
    Ok(r as u32)
}

fn check_positive_finite(key: &'static str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(key, format!("must be > 0, got {v}")))
    }
}

fn check_increasing(key: &'static str, xs: &[u32]) -> Result<(), ConfigError> {
    if xs.is_empty() {
        return Err(invalid(key, "must be nonempty"));
    }
    if xs[0] == 0 {
        return Err(invalid(key, "values must be positive"));
    }
    if xs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid(key, "values must be strictly increasing"));
    }
    Ok(())
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::Parse {
        line: 0,
        msg: format!("cannot parse `{value}` for `{key}`"),
    })
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError> {
    let inner = value.trim();
    let inner = inner.strip_prefix('[').unwrap_or(inner);
    let inner = inner.strip_suffix(']').unwrap_or(inner).trim();
    if inner.is_empty() {
        return Ok(Vec::new());
    }
    inner
        .split(',')
        .map(|item| parse(key, item.trim()))
        .collect()
}

fn fmt_f64(x: f64) -> String {
    // `{:?}` is the shortest representation that round-trips exactly.
    format!("{x:?}")
}

fn fmt_list<T: fmt::Display>(xs: &[T]) -> String {
    let items: Vec<String> = xs.iter().map(|x| x.to_string()).collect();
    format!("[{}]", items.join(", "))
}
