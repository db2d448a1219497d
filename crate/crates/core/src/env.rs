//! RTT-stepped grant-free NOMA uplink environment.
//!
//! Each [`GfNomaEnv::step`] runs one round trip under the chosen `{K, C}`:
//! newly activated UEs join the backlog, every backlogged UE passes the
//! latency check, transmitters pick CTUs, each RB is SIC-decoded, decoded
//! UEs leave as served and the rest stay backlogged for the next RTT. The
//! reward is the number of UEs served in the round.
//!
//! Latency counts only whole RTTs a UE has entered (time spent waiting for
//! the next RTT boundary is not charged). An episode ends once the traffic
//! horizon has passed and the backlog is empty, or at twice the horizon, at
//! which point anything left over is dropped.

use std::collections::VecDeque;

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::access::{build_pool, classify, select_ctus};
use crate::config::{rtt_duration_ttis, ConfigError, SimConfig};
use crate::phy::{place_ues, LinkBudget, UeId, UePhy};
use crate::rng::{derive_seed, substream, Stream};
use crate::sic::{decode, CounterFading, RbRound};
use crate::traffic::{arrivals_in_window, sample_activations, ActivationSchedule};

use rand::Rng;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("repetition value {0} is not in k_set")]
    InvalidK(u32),
    #[error("CTU count {0} is not in c_set")]
    InvalidC(u32),
    #[error("action index {index} out of range for {len} choices")]
    InvalidIndex { index: usize, len: usize },
    #[error("step called on a finished episode")]
    StepAfterDone,
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UeStatus {
    Dormant,
    Backlogged,
    Served,
    Dropped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UeRecord {
    pub ue_id: UeId,
    pub phy: UePhy<f64>,
    /// First TTI boundary at or after the activation instant.
    pub activation_tti: u64,
    pub harq_index: u32,
    pub latency_ttis: u32,
    pub status: UeStatus,
}

/// Resource configuration for one RTT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Action {
    pub k: u32,
    pub c: u32,
}

/// What the base station measures after one RTT, plus the action that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RttObservation {
    pub v_cc: u32,
    pub v_ic: u32,
    pub v_sc: u32,
    pub v_sd: u32,
    pub v_ud: u32,
    pub action_k: u32,
    pub action_c: u32,
    /// TTI at which the RTT started.
    pub tti_clock: u64,
}

impl RttObservation {
    pub fn counts(&self) -> [u32; 5] {
        [self.v_cc, self.v_ic, self.v_sc, self.v_sd, self.v_ud]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Transmit,
    Drop,
}

/// Start-of-RTT latency check. Admitted UEs are charged the RTT up front.
pub fn latency_admit(ue: &mut UeRecord, k: u32, budget_ttis: u32) -> Admission {
    debug_assert_eq!(ue.status, UeStatus::Backlogged);
    let prospective = ue.latency_ttis + rtt_duration_ttis(k);
    if prospective > budget_ttis {
        ue.status = UeStatus::Dropped;
        Admission::Drop
    } else {
        ue.latency_ttis = prospective;
        ue.harq_index += 1;
        Admission::Transmit
    }
}

/// Result of one RTT.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub obs: RttObservation,
    pub reward: f64,
    pub done: bool,
    /// UEs that sat on collision CTUs.
    pub collided_ues: u32,
    pub transmitting: u32,
    pub dropped_now: u32,
    pub backlog_size: u32,
    pub served_cum: u32,
    pub dropped_cum: u32,
    pub activated_cum: u32,
}

/// Layout of the state vector fed to the value networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObsMode {
    /// Last observation only: 5 counts.
    Single,
    /// Last `m_obs` (action, observation) slots: 7 values each.
    Multi,
}

pub const SLOT_WIDTH: usize = 7;

#[derive(Debug, Clone)]
pub struct GfNomaEnv {
    cfg: SimConfig,
    link: LinkBudget<f64>,
    budget_ttis: u32,
    horizon_ttis: u64,
    fading_seed: u64,
    ctu_rng: ChaCha8Rng,
    ues: Vec<UeRecord>,
    schedule: ActivationSchedule,
    backlog: Vec<UeId>,
    admitted: usize,
    admitted_upto_tti: u64,
    tti_clock: u64,
    rtt_index: u64,
    history: VecDeque<(Action, RttObservation)>,
    done: bool,
    served: u32,
    dropped: u32,
}

/// Fresh episode for `seed`. Returns the environment and its initial observation.
pub fn env_reset(cfg: &SimConfig, seed: u64) -> Result<(GfNomaEnv, RttObservation), EnvError> {
    let env = GfNomaEnv::new(cfg, seed)?;
    let obs = env.last_observation().expect("reset records an observation");
    Ok((env, obs))
}

impl GfNomaEnv {
    pub fn new(cfg: &SimConfig, seed: u64) -> Result<Self, EnvError> {
        cfg.validate()?;
        let budget_ttis = cfg.latency_budget_ttis()?;
        let mut env = Self {
            cfg: cfg.clone(),
            link: LinkBudget::from_config(cfg),
            budget_ttis,
            horizon_ttis: cfg.horizon_ttis(),
            fading_seed: 0,
            ctu_rng: substream(seed, Stream::CtuChoice),
            ues: Vec::new(),
            schedule: ActivationSchedule {
                times: Vec::new(),
                horizon_s: cfg.traffic_total_s,
            },
            backlog: Vec::new(),
            admitted: 0,
            admitted_upto_tti: 0,
            tti_clock: 0,
            rtt_index: 0,
            history: VecDeque::new(),
            done: false,
            served: 0,
            dropped: 0,
        };
        env.reset(seed);
        Ok(env)
    }

    /// Re-initialise placement, traffic and clocks for a new episode.
    pub fn reset(&mut self, seed: u64) {
        let cfg = &self.cfg;
        let phys: Vec<UePhy<f64>> = place_ues(cfg, &mut substream(seed, Stream::Placement));
        self.schedule = sample_activations(cfg, &mut substream(seed, Stream::Activation));
        let tti_s = cfg.tti_s();
        self.ues = phys
            .into_iter()
            .zip(&self.schedule.times)
            .map(|(phy, &tau)| UeRecord {
                ue_id: phy.ue_id,
                phy,
                activation_tti: (tau / tti_s - 1e-9).ceil().max(0.0) as u64,
                harq_index: 0,
                latency_ttis: 0,
                status: UeStatus::Dormant,
            })
            .collect();
        self.ctu_rng = substream(seed, Stream::CtuChoice);
        self.fading_seed = derive_seed(seed, Stream::Fading as u64, 0);
        self.backlog.clear();
        self.admitted = 0;
        self.admitted_upto_tti = 0;
        self.tti_clock = 0;
        self.rtt_index = 0;
        self.done = false;
        self.served = 0;
        self.dropped = 0;

        let mut init = substream(seed, Stream::InitAction);
        let action = Action {
            k: cfg.k_set[init.gen_range(0..cfg.k_set.len())],
            c: cfg.c_set[init.gen_range(0..cfg.c_set.len())],
        };
        let obs = RttObservation {
            v_ic: action.c,
            action_k: action.k,
            action_c: action.c,
            ..RttObservation::default()
        };
        self.history.clear();
        self.history.push_front((action, obs));
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn tti_clock(&self) -> u64 {
        self.tti_clock
    }

    pub fn horizon_ttis(&self) -> u64 {
        self.horizon_ttis
    }

    pub fn budget_ttis(&self) -> u32 {
        self.budget_ttis
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn ues(&self) -> &[UeRecord] {
        &self.ues
    }

    pub fn schedule(&self) -> &ActivationSchedule {
        &self.schedule
    }

    pub fn backlog_len(&self) -> usize {
        self.backlog.len()
    }

    /// Most recent first.
    pub fn history(&self) -> &VecDeque<(Action, RttObservation)> {
        &self.history
    }

    pub fn last_observation(&self) -> Option<RttObservation> {
        self.history.front().map(|(_, o)| *o)
    }

    pub fn served(&self) -> u32 {
        self.served
    }

    pub fn dropped(&self) -> u32 {
        self.dropped
    }

    pub fn activated(&self) -> u32 {
        self.admitted as u32
    }

    pub fn action_from_indices(&self, k_idx: usize, c_idx: usize) -> Result<Action, EnvError> {
        let k = *self.cfg.k_set.get(k_idx).ok_or(EnvError::InvalidIndex {
            index: k_idx,
            len: self.cfg.k_set.len(),
        })?;
        let c = *self.cfg.c_set.get(c_idx).ok_or(EnvError::InvalidIndex {
            index: c_idx,
            len: self.cfg.c_set.len(),
        })?;
        Ok(Action { k, c })
    }

    /// Run one RTT under `action`.
    pub fn step(&mut self, action: Action) -> Result<StepInfo, EnvError> {
        if self.done {
            return Err(EnvError::StepAfterDone);
        }
        if !self.cfg.k_set.contains(&action.k) {
            return Err(EnvError::InvalidK(action.k));
        }
        if !self.cfg.c_set.contains(&action.c) {
            return Err(EnvError::InvalidC(action.c));
        }
        let start = self.tti_clock;

        // 1. arrivals since the previous RTT boundary
        if start > self.admitted_upto_tti {
            let ids = arrivals_in_window(&self.schedule, self.admitted_upto_tti, start, self.cfg.tti_s());
            debug_assert_eq!(ids.start, self.admitted);
            for id in ids.clone() {
                self.ues[id].status = UeStatus::Backlogged;
                self.backlog.push(id);
            }
            self.admitted = ids.end;
            self.admitted_upto_tti = start;
        }

        // 2. latency check
        let mut transmitting = Vec::with_capacity(self.backlog.len());
        let mut dropped_now = 0u32;
        for &id in &self.backlog {
            match latency_admit(&mut self.ues[id], action.k, self.budget_ttis) {
                Admission::Transmit => transmitting.push(id),
                Admission::Drop => dropped_now += 1,
            }
        }
        self.dropped += dropped_now;

        // 3. CTU selection and collision detection
        let pool = build_pool(action.c, self.cfg.n_rbs).expect("validated c_set");
        let assignment = select_ctus(&transmitting, &pool, &mut self.ctu_rng);
        let report = classify(&assignment, &pool);

        // 4. per-RB SIC decoding
        let mut rounds: Vec<RbRound<f64>> = (1..=pool.n_rbs)
            .map(|rb| RbRound {
                rb,
                singleton_ues: Vec::new(),
                collision_ues: Vec::new(),
                k_max: action.k,
            })
            .collect();
        for &(ctu, ue) in &report.singleton {
            rounds[(pool.rb_of(ctu) - 1) as usize].singleton_ues.push(self.ues[ue].phy);
        }
        for (ctu, ues) in &report.collision {
            let round = &mut rounds[(pool.rb_of(*ctu) - 1) as usize];
            round.collision_ues.extend(ues.iter().map(|&u| self.ues[u].phy));
        }
        let mut fading = CounterFading {
            seed: self.fading_seed,
            rtt: self.rtt_index,
        };
        let mut v_sd = 0u32;
        for round in &rounds {
            let result = decode(self.cfg.scheme, round, &self.link, &mut fading);
            for &ue in &result.decoded {
                self.ues[ue].status = UeStatus::Served;
            }
            v_sd += result.decoded.len() as u32;
        }
        self.served += v_sd;

        // 5. HARQ: undecoded and collided UEs stay for the next RTT
        let ues = &self.ues;
        self.backlog.retain(|&id| ues[id].status == UeStatus::Backlogged);

        // 6. clock and observation
        self.tti_clock += rtt_duration_ttis(action.k) as u64;
        self.rtt_index += 1;
        let obs = RttObservation {
            v_cc: report.v_cc,
            v_ic: report.v_ic,
            v_sc: report.v_sc,
            v_sd,
            v_ud: report.v_sc - v_sd,
            action_k: action.k,
            action_c: action.c,
            tti_clock: start,
        };
        self.history.push_front((action, obs));
        self.history.truncate(self.cfg.learn.m_obs.max(1));

        // 7. termination
        let all_arrived = self.admitted == self.ues.len();
        if self.tti_clock >= self.horizon_ttis && self.backlog.is_empty() && all_arrived {
            self.done = true;
        } else if self.tti_clock >= 2 * self.horizon_ttis {
            self.done = true;
            let mut forced = 0u32;
            for ue in &mut self.ues {
                if matches!(ue.status, UeStatus::Backlogged | UeStatus::Dormant) {
                    ue.status = UeStatus::Dropped;
                    forced += 1;
                }
            }
            self.admitted = self.ues.len();
            self.backlog.clear();
            self.dropped += forced;
            dropped_now += forced;
        }

        Ok(StepInfo {
            obs,
            reward: v_sd as f64,
            done: self.done,
            collided_ues: report.collided_ues() as u32,
            transmitting: transmitting.len() as u32,
            dropped_now,
            backlog_size: self.backlog.len() as u32,
            served_cum: self.served,
            dropped_cum: self.dropped,
            activated_cum: self.admitted as u32,
        })
    }

    /// Normalised state vector for the value networks.
    pub fn observation_vector(&self, mode: ObsMode) -> Vec<f64> {
        match mode {
            ObsMode::Single => {
                let c_max = self.cfg.c_max() as f64;
                self.last_observation()
                    .map(|o| o.counts().iter().map(|&v| v as f64 / c_max).collect())
                    .unwrap_or_else(|| vec![0.0; 5])
            }
            ObsMode::Multi => history_state(&self.history, &self.cfg, self.cfg.learn.m_obs),
        }
    }
}

/// `[A^{t-1}, U^{t-1}, ..., A^{t-m}, U^{t-m}]`, zero-padded, each slot
/// `(k index, c index, v_cc, v_ic, v_sc, v_sd, v_ud)` scaled to [0, 1].
pub fn history_state<'a, I>(history: I, cfg: &SimConfig, m_obs: usize) -> Vec<f64>
where
    I: IntoIterator<Item = &'a (Action, RttObservation)>,
{
    let c_max = cfg.c_max() as f64;
    let index_norm = |set: &[u32], v: u32| -> f64 {
        let idx = set.iter().position(|&x| x == v).unwrap_or(0);
        if set.len() > 1 {
            idx as f64 / (set.len() - 1) as f64
        } else {
            0.0
        }
    };
    let mut out = vec![0.0; m_obs * SLOT_WIDTH];
    for (slot, (action, obs)) in history.into_iter().take(m_obs).enumerate() {
        let s = &mut out[slot * SLOT_WIDTH..(slot + 1) * SLOT_WIDTH];
        s[0] = index_norm(&cfg.k_set, action.k);
        s[1] = index_norm(&cfg.c_set, action.c);
        for (dst, &v) in s[2..].iter_mut().zip(obs.counts().iter()) {
            *dst = v as f64 / c_max;
        }
    }
    out
}
