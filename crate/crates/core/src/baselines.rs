//! Comparison policies: load-estimation CTU selection (LE-URC), a fixed
//! configuration and uniform random choice, behind the same [`Policy`]
//! interface the learned agents use in evaluation.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::SimConfig;
use crate::env::{Action, GfNomaEnv};
use crate::rng::{substream, Stream};

/// Repetition value of the fixed baseline and of LE-URC.
pub const FIXED_K: u32 = 8;
/// CTU count of the fixed baseline.
pub const FIXED_C: u32 = 48;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PolicyError {
    #[error("repetition value {0} not in k_set")]
    KNotAvailable(u32),
    #[error("CTU count {0} not in c_set")]
    CNotAvailable(u32),
}

/// Maps the environment's current state to the next action.
pub trait Policy {
    fn name(&self) -> &str;
    /// Called after every environment reset with the episode seed.
    fn reset(&mut self, env: &GfNomaEnv, seed: u64);
    fn act(&mut self, env: &GfNomaEnv) -> Action;
}

/// Expected idle CTUs when `n` UEs pick uniformly among `c`: `c (1 - 1/c)^n`.
pub fn le_expected_idle(c: u32, n: f64) -> f64 {
    let c = c as f64;
    c * (1.0 - 1.0 / c).powf(n)
}

/// Load estimate from the idle count: `ln(v_ic / c) / ln(1 - 1/c)`.
/// `v_ic` is floored at 0.5 so an all-busy pool stays finite.
pub fn le_invert(v_ic: f64, c: u32) -> f64 {
    debug_assert!(c >= 2);
    let cf = c as f64;
    let v = v_ic.clamp(0.5, cf);
    (v / cf).ln() / (1.0 - 1.0 / cf).ln()
}

/// Expected singleton CTUs: `n (1 - 1/c)^(n - 1)`.
pub fn le_expected_success(c: u32, n: f64) -> f64 {
    if n <= 0.0 {
        return 0.0;
    }
    let c = c as f64;
    n * (1.0 - 1.0 / c).powf(n - 1.0)
}

/// The `c` maximising expected successes; ties go to the smallest.
pub fn le_choose_c(n: f64, c_set: &[u32]) -> u32 {
    let mut sorted = c_set.to_vec();
    sorted.sort_unstable();
    let mut best = sorted[0];
    let mut best_v = le_expected_success(best, n);
    for &c in &sorted[1..] {
        let v = le_expected_success(c, n);
        if v > best_v {
            best = c;
            best_v = v;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeState {
    /// Load estimate for the previous RTT.
    pub prev_estimate: f64,
    pub prev_delta: f64,
    /// CTU count the last observation was taken under.
    pub prev_c: u32,
    pub fixed_k: u32,
}

impl LeState {
    pub fn new(prev_c: u32, fixed_k: u32) -> Self {
        Self {
            prev_estimate: 0.0,
            prev_delta: 0.0,
            prev_c,
            fixed_k,
        }
    }
}

/// Predicted load for the coming RTT: the idle-count inversion extrapolated by
/// its last change, but never below twice the observed collision count.
pub fn le_predict(state: &mut LeState, v_ic_obs: u32, v_cc_obs: u32) -> f64 {
    let observed = le_invert(v_ic_obs as f64, state.prev_c);
    let delta = observed - state.prev_estimate;
    state.prev_estimate = observed;
    state.prev_delta = delta;
    (2.0 * v_cc_obs as f64).max(observed + delta)
}

#[derive(Debug, Clone)]
pub struct LeUrcPolicy {
    pub state: LeState,
    c_set: Vec<u32>,
}

impl LeUrcPolicy {
    pub fn new(cfg: &SimConfig) -> Result<Self, PolicyError> {
        if !cfg.k_set.contains(&FIXED_K) {
            return Err(PolicyError::KNotAvailable(FIXED_K));
        }
        Ok(Self {
            state: LeState::new(cfg.c_max(), FIXED_K),
            c_set: cfg.c_set.clone(),
        })
    }
}

impl Policy for LeUrcPolicy {
    fn name(&self) -> &str {
        "leurc"
    }

    fn reset(&mut self, env: &GfNomaEnv, _seed: u64) {
        let c = env.last_observation().map(|o| o.action_c).unwrap_or(self.state.prev_c);
        self.state = LeState::new(c, self.state.fixed_k);
    }

    fn act(&mut self, env: &GfNomaEnv) -> Action {
        let obs = env.last_observation().expect("environment records an observation at reset");
        self.state.prev_c = obs.action_c;
        let n = le_predict(&mut self.state, obs.v_ic, obs.v_cc);
        let c = le_choose_c(n, &self.c_set);
        Action {
            k: self.state.fixed_k,
            c,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FixedPolicy {
    pub action: Action,
}

/// Constant `(K, C) = (8, 48)`.
pub fn fixed_policy(cfg: &SimConfig) -> Result<FixedPolicy, PolicyError> {
    if !cfg.k_set.contains(&FIXED_K) {
        return Err(PolicyError::KNotAvailable(FIXED_K));
    }
    if !cfg.c_set.contains(&FIXED_C) {
        return Err(PolicyError::CNotAvailable(FIXED_C));
    }
    Ok(FixedPolicy {
        action: Action { k: FIXED_K, c: FIXED_C },
    })
}

impl Policy for FixedPolicy {
    fn name(&self) -> &str {
        "fixed"
    }

    fn reset(&mut self, _env: &GfNomaEnv, _seed: u64) {}

    fn act(&mut self, _env: &GfNomaEnv) -> Action {
        self.action
    }
}

/// Uniform over `k_set x c_set`, reseeded per episode.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    k_set: Vec<u32>,
    c_set: Vec<u32>,
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(cfg: &SimConfig) -> Self {
        Self {
            k_set: cfg.k_set.clone(),
            c_set: cfg.c_set.clone(),
            rng: substream(cfg.seed, Stream::RandomPolicy),
        }
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> &str {
        "random"
    }

    fn reset(&mut self, _env: &GfNomaEnv, seed: u64) {
        self.rng = substream(seed, Stream::RandomPolicy);
    }

    fn act(&mut self, _env: &GfNomaEnv) -> Action {
        Action {
            k: *self.k_set.choose(&mut self.rng).unwrap(),
            c: *self.c_set.choose(&mut self.rng).unwrap(),
        }
    }
}
