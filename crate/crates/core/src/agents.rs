//! Replay memory, epsilon-greedy exploration and the DQN training loop for
//! one agent (repetition value only) or two cooperating agents (repetition
//! value and CTU count) that share state and reward.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::{LearnConfig, SimConfig};
use crate::env::{history_state, Action, EnvError, GfNomaEnv, ObsMode, RttObservation};
use crate::rng::{derive_seed, indexed_substream, labels, Stream};
use crate::valuefn::{argmax, copy_into_target, net_init, rmsprop_step, td_gradient, Transition, ValueNet};

/// Scalar type used for training.
pub type Real = f32;

/// Outcome of one environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    /// Episode over.
    pub done: bool,
    /// No bootstrapping from the next state. `done` without `terminal` is a time limit.
    pub terminal: bool,
}

/// Discrete multi-head environment driven by one agent per action head.
pub trait Environment {
    /// Size of each agent's action set.
    fn action_dims(&self) -> Vec<usize>;
    fn state_dim(&self) -> usize;
    fn reset(&mut self, seed: u64);
    /// State shared by all agents.
    fn observe(&self) -> Vec<f64>;
    fn step(&mut self, actions: &[usize]) -> Result<StepOutcome, EnvError>;
}

/// Single-agent mode: the agent picks K, C stays fixed.
#[derive(Debug, Clone)]
pub struct SingleParamEnv {
    pub env: GfNomaEnv,
    pub c: u32,
}

impl SingleParamEnv {
    pub fn new(cfg: &SimConfig, c: u32) -> Result<Self, EnvError> {
        if !cfg.c_set.contains(&c) {
            return Err(EnvError::InvalidC(c));
        }
        Ok(Self {
            env: GfNomaEnv::new(cfg, cfg.seed)?,
            c,
        })
    }
}

impl Environment for SingleParamEnv {
    fn action_dims(&self) -> Vec<usize> {
        vec![self.env.config().k_set.len()]
    }

    fn state_dim(&self) -> usize {
        5
    }

    fn reset(&mut self, seed: u64) {
        self.env.reset(seed);
    }

    fn observe(&self) -> Vec<f64> {
        self.env.observation_vector(ObsMode::Single)
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepOutcome, EnvError> {
        let k = self.env.action_from_indices(actions[0], 0)?.k;
        let info = self.env.step(Action { k, c: self.c })?;
        Ok(StepOutcome {
            reward: info.reward,
            done: info.done,
            terminal: info.done,
        })
    }
}

/// Cooperative mode: agent 0 picks K, agent 1 picks C.
#[derive(Debug, Clone)]
pub struct JointParamEnv {
    pub env: GfNomaEnv,
}

impl JointParamEnv {
    pub fn new(cfg: &SimConfig) -> Result<Self, EnvError> {
        Ok(Self {
            env: GfNomaEnv::new(cfg, cfg.seed)?,
        })
    }
}

impl Environment for JointParamEnv {
    fn action_dims(&self) -> Vec<usize> {
        let cfg = self.env.config();
        vec![cfg.k_set.len(), cfg.c_set.len()]
    }

    fn state_dim(&self) -> usize {
        self.env.config().learn.m_obs * crate::env::SLOT_WIDTH
    }

    fn reset(&mut self, seed: u64) {
        self.env.reset(seed);
    }

    fn observe(&self) -> Vec<f64> {
        self.env.observation_vector(ObsMode::Multi)
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepOutcome, EnvError> {
        let action = self.env.action_from_indices(actions[0], actions[1])?;
        let info = self.env.step(action)?;
        Ok(StepOutcome {
            reward: info.reward,
            done: info.done,
            terminal: info.done,
        })
    }
}

/// Shared state of the cooperative agents: the last `m_obs` (action, observation) slots.
pub fn cma_state<'a, I>(history: I, cfg: &SimConfig, m_obs: usize) -> Vec<f64>
where
    I: IntoIterator<Item = &'a (Action, RttObservation)>,
{
    history_state(history, cfg, m_obs)
}

/// FIFO ring buffer with uniform sampling with replacement.
#[derive(Debug, Clone)]
pub struct ReplayMemory<T> {
    capacity: usize,
    buf: Vec<Transition<T>>,
    cursor: usize,
    pushed: u64,
}

impl<T> ReplayMemory<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            buf: Vec::with_capacity(capacity),
            cursor: 0,
            pushed: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn total_pushed(&self) -> u64 {
        self.pushed
    }

    pub fn push(&mut self, t: Transition<T>) {
        if self.buf.len() < self.capacity {
            self.buf.push(t);
        } else {
            self.buf[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        self.pushed += 1;
    }

    /// Contents from oldest to newest.
    pub fn iter_oldest_first(&self) -> impl Iterator<Item = &Transition<T>> {
        let split = if self.buf.len() < self.capacity { 0 } else { self.cursor };
        self.buf[split..].iter().chain(self.buf[..split].iter())
    }

    pub fn sample<'a, R: Rng + ?Sized>(&'a self, n: usize, rng: &mut R) -> Vec<&'a Transition<T>> {
        if self.buf.is_empty() {
            return Vec::new();
        }
        (0..n).map(|_| &self.buf[rng.gen_range(0..self.buf.len())]).collect()
    }

    /// Address of the backing storage, for buffer-separation audits.
    pub fn storage_addr(&self) -> usize {
        self.buf.as_ptr() as usize
    }
}

/// One DQN agent: online and target nets, its own replay memory and random streams.
#[derive(Debug, Clone)]
pub struct AgentBundle {
    pub online: ValueNet<Real>,
    pub target: ValueNet<Real>,
    pub memory: ReplayMemory<Real>,
    /// Size of the action set this agent indexes into.
    pub n_actions: usize,
    pub eps: f64,
    pub step_count: u64,
    pub grad_steps: u64,
    pub target_syncs: u64,
    explore_rng: ChaCha8Rng,
    replay_rng: ChaCha8Rng,
}

impl AgentBundle {
    pub fn new(state_dim: usize, n_actions: usize, learn: &LearnConfig, seed: u64, agent: u64) -> Self {
        let mut dims = vec![state_dim];
        dims.extend(&learn.hidden_sizes);
        dims.push(n_actions);
        let online: ValueNet<Real> =
            net_init(&dims, &mut indexed_substream(seed, Stream::NetInit, agent)).expect("validated dims");
        Self {
            target: copy_into_target(&online),
            online,
            memory: ReplayMemory::new(learn.replay_capacity),
            n_actions,
            eps: 1.0,
            step_count: 0,
            grad_steps: 0,
            target_syncs: 0,
            explore_rng: indexed_substream(seed, Stream::Exploration, agent),
            replay_rng: indexed_substream(seed, Stream::ReplaySampling, agent),
        }
    }

    /// Greedy or random action using the agent's own exploration stream.
    pub fn act(&mut self, s: &[Real]) -> usize {
        explore_or_exploit(self.eps, self.n_actions, &self.online, s, &mut self.explore_rng)
    }

    /// Store a transition and, once the memory holds a minibatch, take one gradient step.
    /// Returns the minibatch loss when a step was taken.
    pub fn observe_and_learn(&mut self, t: Transition<Real>, learn: &LearnConfig) -> Option<f64> {
        self.memory.push(t);
        self.step_count += 1;
        if self.memory.len() < learn.minibatch {
            return None;
        }
        let batch = self.memory.sample(learn.minibatch, &mut self.replay_rng);
        let (grad, loss) = td_gradient(&self.online, &self.target, &batch, learn.gamma as Real, learn.ddqn);
        rmsprop_step(&mut self.online, &grad, learn.lr as Real);
        self.grad_steps += 1;
        if self.grad_steps.is_multiple_of(learn.target_sync_every as u64) {
            self.target = copy_into_target(&self.online);
            self.target_syncs += 1;
        }
        Some(loss as f64)
    }
}

/// Uniform random action with probability `eps`, else the greedy action (lowest index on ties).
pub fn epsilon_greedy<R: Rng + ?Sized>(bundle: &AgentBundle, s: &[Real], rng: &mut R) -> usize {
    explore_or_exploit(bundle.eps, bundle.n_actions, &bundle.online, s, rng)
}

fn explore_or_exploit<R: Rng + ?Sized>(eps: f64, n: usize, net: &ValueNet<Real>, s: &[Real], rng: &mut R) -> usize {
    if eps > 0.0 && rng.gen::<f64>() < eps {
        rng.gen_range(0..n)
    } else {
        greedy_action(net, s)
    }
}

pub fn greedy_action(net: &ValueNet<Real>, s: &[Real]) -> usize {
    argmax(&net.forward(s).expect("state width matches network"))
}

/// Linear decay from 1 to `eps_min` over the first `eps_decay_fraction` of episodes.
pub fn anneal_epsilon(bundle: &mut AgentBundle, episode: usize, total_episodes: usize, learn: &LearnConfig) -> f64 {
    bundle.eps = epsilon_at(episode, total_episodes, learn);
    bundle.eps
}

pub fn epsilon_at(episode: usize, total_episodes: usize, learn: &LearnConfig) -> f64 {
    let horizon = learn.eps_decay_fraction * total_episodes as f64;
    if horizon <= 0.0 || episode as f64 >= horizon {
        learn.eps_min
    } else {
        1.0 - (1.0 - learn.eps_min) * episode as f64 / horizon
    }
}

/// One row of the learning curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub episode: usize,
    /// Average per-step reward.
    pub mean_reward: f64,
    pub eps: f64,
    /// Mean minibatch loss over the episode's gradient steps, averaged over agents; NaN if none.
    pub loss_mean: f64,
    pub total_reward: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TrainOptions {
    /// Hold epsilon at this value instead of annealing.
    pub fixed_eps: Option<f64>,
    /// Stop once this many environment steps have been taken in total.
    pub max_steps: Option<usize>,
    /// Called after every finished episode.
    pub progress: Option<fn(&CurveRow)>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agents: Vec<AgentBundle>,
    pub curve: Vec<CurveRow>,
    pub total_steps: usize,
}

pub fn to_real(s: &[f64]) -> Vec<Real> {
    s.iter().map(|&v| v as Real).collect()
}

/// Algorithm loop shared by every mode: one agent per action head, common reward,
/// separate memories, independent gradient steps and target syncs.
pub fn train_agents<E: Environment>(
    env: &mut E,
    learn: &LearnConfig,
    episodes: usize,
    seed: u64,
    opts: TrainOptions,
) -> Result<TrainOutcome, EnvError> {
    let state_dim = env.state_dim();
    let mut agents: Vec<AgentBundle> = env
        .action_dims()
        .into_iter()
        .enumerate()
        .map(|(i, n)| AgentBundle::new(state_dim, n, learn, seed, i as u64))
        .collect();
    let mut curve = Vec::with_capacity(episodes);
    let mut total_steps = 0usize;
    let mut actions = vec![0usize; agents.len()];

    'episodes: for episode in 0..episodes {
        let eps = opts.fixed_eps.unwrap_or_else(|| epsilon_at(episode, episodes, learn));
        for a in &mut agents {
            a.eps = eps;
        }
        env.reset(derive_seed(seed, labels::TRAIN_EPISODE, episode as u64));
        let mut s = to_real(&env.observe());
        let (mut total_reward, mut steps, mut loss_sum, mut loss_n) = (0.0, 0usize, 0.0, 0usize);
        loop {
            for (a, slot) in agents.iter_mut().zip(actions.iter_mut()) {
                *slot = a.act(&s);
            }
            let out = env.step(&actions)?;
            let next = to_real(&env.observe());
            for (a, &action) in agents.iter_mut().zip(&actions) {
                let t = Transition {
                    state: s.clone(),
                    action,
                    reward: out.reward as Real,
                    next_state: next.clone(),
                    terminal: out.terminal,
                };
                if let Some(l) = a.observe_and_learn(t, learn) {
                    loss_sum += l;
                    loss_n += 1;
                }
            }
            total_reward += out.reward;
            steps += 1;
            total_steps += 1;
            s = next;
            let out_of_budget = opts.max_steps.is_some_and(|m| total_steps >= m);
            if out.done || out_of_budget {
                curve.push(CurveRow {
                    episode,
                    mean_reward: total_reward / steps as f64,
                    eps,
                    loss_mean: if loss_n > 0 { loss_sum / loss_n as f64 } else { f64::NAN },
                    total_reward,
                    steps,
                });
                if let Some(report) = opts.progress {
                    report(curve.last().unwrap());
                }
                if out_of_budget {
                    break 'episodes;
                }
                break;
            }
        }
    }
    Ok(TrainOutcome {
        agents,
        curve,
        total_steps,
    })
}

/// Single-agent training over K with C fixed at `c`.
pub fn train_single(cfg: &SimConfig, c: u32, opts: TrainOptions) -> Result<TrainOutcome, EnvError> {
    let mut env = SingleParamEnv::new(cfg, c)?;
    train_agents(&mut env, &cfg.learn, cfg.learn.episodes, cfg.seed, opts)
}

/// Two cooperating agents over (K, C).
pub fn train_cma(cfg: &SimConfig, opts: TrainOptions) -> Result<TrainOutcome, EnvError> {
    let mut env = JointParamEnv::new(cfg)?;
    train_agents(&mut env, &cfg.learn, cfg.learn.episodes, cfg.seed, opts)
}

/// Deterministic two-state, two-action MDP with a non-myopic optimum.
///
/// | state | action | reward | next |
/// |-------|--------|--------|------|
/// | 0     | 0      | 1      | 0    |
/// | 0     | 1      | 0      | 1    |
/// | 1     | 0      | 0      | 0    |
/// | 1     | 1      | 3      | 1    |
///
/// With discount 0.5 the optimal policy takes action 1 in both states,
/// even though action 0 pays more immediately in state 0. Episodes last
/// `episode_len` steps and start in state `seed % 2`; the cut-off is a
/// time limit, not a terminal state.
#[derive(Debug, Clone)]
pub struct ToyMdp {
    pub state: usize,
    pub t: usize,
    pub episode_len: usize,
}

impl ToyMdp {
    pub const REWARD: [[f64; 2]; 2] = [[1.0, 0.0], [0.0, 3.0]];
    pub const NEXT: [[usize; 2]; 2] = [[0, 1], [0, 1]];

    pub fn new(episode_len: usize) -> Self {
        Self {
            state: 0,
            t: 0,
            episode_len,
        }
    }

    pub fn encode(state: usize) -> Vec<f64> {
        let mut v = vec![0.0; 2];
        v[state] = 1.0;
        v
    }
}

impl Environment for ToyMdp {
    fn action_dims(&self) -> Vec<usize> {
        vec![2]
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn reset(&mut self, seed: u64) {
        self.state = (seed % 2) as usize;
        self.t = 0;
    }

    fn observe(&self) -> Vec<f64> {
        Self::encode(self.state)
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepOutcome, EnvError> {
        let a = actions[0];
        if a > 1 {
            return Err(EnvError::InvalidIndex { index: a, len: 2 });
        }
        let reward = Self::REWARD[self.state][a];
        self.state = Self::NEXT[self.state][a];
        self.t += 1;
        Ok(StepOutcome {
            reward,
            done: self.t >= self.episode_len,
            terminal: false,
        })
    }
}

/// Learning settings used for the toy problem.
pub fn toy_learn_config() -> LearnConfig {
    LearnConfig {
        lr: 1e-3,
        gamma: 0.5,
        hidden_sizes: vec![32, 32],
        target_sync_every: 100,
        ..LearnConfig::default()
    }
}
