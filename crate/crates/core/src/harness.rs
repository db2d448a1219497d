//! Training, evaluation and comparison runs with their CSV and manifest outputs.
//!
//! Every run is described by a [`RunSpec`]; the spec is stored in the run's
//! `manifest.json`, and executing a stored spec again reproduces all CSVs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::agents::{greedy_action, to_real, train_cma, train_single, CurveRow, Real, TrainOptions, TrainOutcome};
use crate::baselines::{fixed_policy, LeUrcPolicy, Policy, PolicyError, RandomPolicy};
use crate::config::{ConfigError, Profile, SimConfig};
use crate::env::{Action, EnvError, GfNomaEnv, ObsMode};
use crate::rng::{derive_seed, labels};
use crate::valuefn::{NetError, ValueNet};
use crate::verify::{self, SuiteReport};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CURVE_FILE: &str = "curve.csv";
pub const K_AGENT_FILE: &str = "agent_k.qnet";
pub const C_AGENT_FILE: &str = "agent_c.qnet";
/// Bucket width of the per-TTI evaluation table.
pub const DEFAULT_BUCKET_TTIS: u64 = 100;
/// Start of the late window, as a fraction of the traffic horizon.
pub const LATE_WINDOW_START: f64 = 0.8;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Usage(String),
    #[error("checkpoint not found: {0}")]
    MissingCheckpoint(PathBuf),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Single,
    Cma,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single" => Ok(Mode::Single),
            "cma" => Ok(Mode::Cma),
            other => Err(format!("unknown mode `{other}` (expected single or cma)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyKind {
    Cma,
    Single,
    LeUrc,
    Fixed,
    Random,
}

impl PolicyKind {
    pub fn key(self) -> &'static str {
        match self {
            PolicyKind::Cma => "cma",
            PolicyKind::Single => "single",
            PolicyKind::LeUrc => "leurc",
            PolicyKind::Fixed => "fixed",
            PolicyKind::Random => "random",
        }
    }

    pub fn is_learned(self) -> bool {
        matches!(self, PolicyKind::Cma | PolicyKind::Single)
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cma" => Ok(PolicyKind::Cma),
            "single" => Ok(PolicyKind::Single),
            "leurc" => Ok(PolicyKind::LeUrc),
            "fixed" => Ok(PolicyKind::Fixed),
            "random" => Ok(PolicyKind::Random),
            other => Err(format!("unknown policy `{other}` (expected cma, single, leurc, fixed or random)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Command {
    Train,
    Eval,
    Compare,
}

/// Everything needed to execute (and re-execute) a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub command: Command,
    /// Resolved configuration as `key = value` text.
    pub config: String,
    pub profile: Option<Profile>,
    pub mode: Mode,
    pub policies: Vec<PolicyKind>,
    /// Training episodes for `train`, evaluation episodes otherwise.
    pub episodes: usize,
    /// Fixed CTU count in single-agent mode.
    pub ctus: Option<u32>,
    /// Directory written by a training run.
    pub checkpoint: Option<PathBuf>,
    pub bucket_ttis: u64,
}

impl RunSpec {
    pub fn sim_config(&self) -> Result<SimConfig, HarnessError> {
        Ok(SimConfig::from_kv_str(&self.config)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub seed: u64,
    pub scheme: String,
    pub spec: RunSpec,
    /// Files written, relative to the run directory.
    pub artifacts: Vec<String>,
}

impl RunManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// One per-RTT row of an episode trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub tti_clock: u64,
    pub k: u32,
    pub c: u32,
    pub v_cc: u32,
    pub v_ic: u32,
    pub v_sc: u32,
    pub v_sd: u32,
    pub v_ud: u32,
    pub collided_ues: u32,
    pub reward: f64,
    pub backlog_size: u32,
    pub dropped_cum: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub seed: u64,
    pub total_reward: f64,
    pub served: u32,
    pub dropped: u32,
    pub activated: u32,
    pub horizon_ttis: u64,
    pub trace: Vec<TraceRow>,
    pub wallclock_s: f64,
}

impl EpisodeMetrics {
    pub fn steps(&self) -> usize {
        self.trace.len()
    }

    /// UEs served in RTTs starting at or after `from_tti`.
    pub fn served_from(&self, from_tti: u64) -> u32 {
        self.trace.iter().filter(|r| r.tti_clock >= from_tti).map(|r| r.v_sd).sum()
    }

    /// UEs served in the final fifth of the traffic horizon.
    pub fn late_served(&self) -> u32 {
        self.served_from((LATE_WINDOW_START * self.horizon_ttis as f64).ceil() as u64)
    }
}

/// Greedy play from trained networks.
#[derive(Debug, Clone)]
pub struct LearnedPolicy {
    kind: PolicyKind,
    k_net: ValueNet<Real>,
    c_net: Option<ValueNet<Real>>,
    fixed_c: u32,
}

impl LearnedPolicy {
    /// Load the networks written by a training run in `dir`.
    pub fn load(dir: &Path, kind: PolicyKind, cfg: &SimConfig) -> Result<Self, HarnessError> {
        let manifest_path = dir.join(MANIFEST_FILE);
        if !manifest_path.exists() {
            return Err(HarnessError::MissingCheckpoint(dir.to_path_buf()));
        }
        let manifest = RunManifest::load(&manifest_path)?;
        if manifest.spec.command != Command::Train {
            return Err(HarnessError::Usage(format!("{} is not a training run", dir.display())));
        }
        let expected = match kind {
            PolicyKind::Cma => Mode::Cma,
            PolicyKind::Single => Mode::Single,
            _ => unreachable!("baseline policies have no checkpoint"),
        };
        if manifest.spec.mode != expected {
            return Err(HarnessError::Usage(format!(
                "policy {} needs a {:?}-mode checkpoint, {} holds {:?}",
                kind.key(),
                expected,
                dir.display(),
                manifest.spec.mode
            )));
        }
        let load = |name: &str| -> Result<ValueNet<Real>, HarnessError> {
            let p = dir.join(name);
            if !p.exists() {
                return Err(HarnessError::MissingCheckpoint(p));
            }
            Ok(ValueNet::load(&p)?)
        };
        let k_net = load(K_AGENT_FILE)?;
        let c_net = if kind == PolicyKind::Cma { Some(load(C_AGENT_FILE)?) } else { None };
        let (state_dim, mode_name) = match kind {
            PolicyKind::Cma => (cfg.learn.m_obs * crate::env::SLOT_WIDTH, "cma"),
            _ => (5, "single"),
        };
        if k_net.input_dim() != state_dim || k_net.output_dim() != cfg.k_set.len() {
            return Err(HarnessError::Usage(format!("{mode_name} checkpoint shape does not fit the configuration")));
        }
        if let Some(c) = &c_net {
            if c.input_dim() != state_dim || c.output_dim() != cfg.c_set.len() {
                return Err(HarnessError::Usage("CTU agent shape does not fit the configuration".into()));
            }
        }
        let fixed_c = manifest.spec.ctus.unwrap_or(cfg.c_max());
        if kind == PolicyKind::Single && !cfg.c_set.contains(&fixed_c) {
            return Err(HarnessError::Usage(format!("checkpoint CTU count {fixed_c} not in c_set")));
        }
        Ok(Self {
            kind,
            k_net,
            c_net,
            fixed_c,
        })
    }

    pub fn from_nets(k_net: ValueNet<Real>, c_net: Option<ValueNet<Real>>, fixed_c: u32) -> Self {
        Self {
            kind: if c_net.is_some() { PolicyKind::Cma } else { PolicyKind::Single },
            k_net,
            c_net,
            fixed_c,
        }
    }
}

impl Policy for LearnedPolicy {
    fn name(&self) -> &str {
        self.kind.key()
    }

    fn reset(&mut self, _env: &GfNomaEnv, _seed: u64) {}

    fn act(&mut self, env: &GfNomaEnv) -> Action {
        let cfg = env.config();
        match &self.c_net {
            Some(c_net) => {
                let s = to_real(&env.observation_vector(ObsMode::Multi));
                Action {
                    k: cfg.k_set[greedy_action(&self.k_net, &s)],
                    c: cfg.c_set[greedy_action(c_net, &s)],
                }
            }
            None => {
                let s = to_real(&env.observation_vector(ObsMode::Single));
                Action {
                    k: cfg.k_set[greedy_action(&self.k_net, &s)],
                    c: self.fixed_c,
                }
            }
        }
    }
}

pub fn make_policy(kind: PolicyKind, cfg: &SimConfig, checkpoint: Option<&Path>) -> Result<Box<dyn Policy>, HarnessError> {
    Ok(match kind {
        PolicyKind::Fixed => Box::new(fixed_policy(cfg)?),
        PolicyKind::LeUrc => Box::new(LeUrcPolicy::new(cfg)?),
        PolicyKind::Random => Box::new(RandomPolicy::new(cfg)),
        PolicyKind::Cma | PolicyKind::Single => {
            let dir = checkpoint.ok_or_else(|| {
                HarnessError::Usage(format!("policy {} needs --checkpoint <training run dir>", kind.key()))
            })?;
            Box::new(LearnedPolicy::load(dir, kind, cfg)?)
        }
    })
}

/// Play one episode from `env`'s current reset state.
pub fn run_episode(env: &mut GfNomaEnv, policy: &mut dyn Policy, episode: usize, seed: u64) -> Result<EpisodeMetrics, EnvError> {
    let start = Instant::now();
    policy.reset(env, seed);
    let mut trace = Vec::new();
    let mut total_reward = 0.0;
    loop {
        let action = policy.act(env);
        let info = env.step(action)?;
        total_reward += info.reward;
        trace.push(TraceRow {
            tti_clock: info.obs.tti_clock,
            k: action.k,
            c: action.c,
            v_cc: info.obs.v_cc,
            v_ic: info.obs.v_ic,
            v_sc: info.obs.v_sc,
            v_sd: info.obs.v_sd,
            v_ud: info.obs.v_ud,
            collided_ues: info.collided_ues,
            reward: info.reward,
            backlog_size: info.backlog_size,
            dropped_cum: info.dropped_cum,
        });
        if info.done {
            return Ok(EpisodeMetrics {
                episode,
                seed,
                total_reward,
                served: info.served_cum,
                dropped: info.dropped_cum,
                activated: info.activated_cum,
                horizon_ttis: env.horizon_ttis(),
                trace,
                wallclock_s: start.elapsed().as_secs_f64(),
            });
        }
    }
}

/// Evaluation seeds are shared by all policies evaluated under the same master seed.
pub fn eval_seed(seed: u64, episode: usize) -> u64 {
    derive_seed(seed, labels::EVAL_EPISODE, episode as u64)
}

pub fn eval_policy(cfg: &SimConfig, policy: &mut dyn Policy, episodes: usize) -> Result<Vec<EpisodeMetrics>, EnvError> {
    let mut env = GfNomaEnv::new(cfg, eval_seed(cfg.seed, 0))?;
    let mut out = Vec::with_capacity(episodes);
    for i in 0..episodes {
        let seed = eval_seed(cfg.seed, i);
        if i > 0 {
            env.reset(seed);
        }
        out.push(run_episode(&mut env, policy, i, seed)?);
    }
    Ok(out)
}

/// Sample mean and standard deviation (n - 1 denominator; 0 for one value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Two-sided 95% Student-t interval for the mean.
pub fn ci95(xs: &[f64]) -> (f64, f64) {
    let (mean, sd) = mean_std(xs);
    if xs.len() < 2 {
        return (mean, mean);
    }
    let n = xs.len() as f64;
    let t = StudentsT::new(0.0, 1.0, n - 1.0).expect("dof > 0").inverse_cdf(0.975);
    let half = t * sd / n.sqrt();
    (mean - half, mean + half)
}

/// Per-bucket means over episodes of (served, non-collision, collision, decoding-failure) UEs.
pub fn bucket_table(episodes: &[EpisodeMetrics], width: u64) -> Vec<(u64, [f64; 4])> {
    let width = width.max(1);
    let mut sums: BTreeMap<u64, [f64; 4]> = BTreeMap::new();
    for ep in episodes {
        for r in &ep.trace {
            let e = sums.entry(r.tti_clock / width * width).or_default();
            e[0] += r.v_sd as f64;
            e[1] += r.v_sc as f64;
            e[2] += r.collided_ues as f64;
            e[3] += r.v_ud as f64;
        }
    }
    let Some(&last) = sums.keys().next_back() else {
        return Vec::new();
    };
    let n = episodes.len() as f64;
    (0..=last / width)
        .map(|b| {
            let key = b * width;
            let v = sums.get(&key).copied().unwrap_or_default();
            (key, v.map(|x| x / n))
        })
        .collect()
}

pub fn curve_csv(curve: &[CurveRow]) -> String {
    let mut s = String::from("episode,mean_reward,eps,loss_mean\n");
    for r in curve {
        let _ = writeln!(s, "{},{},{},{}", r.episode, r.mean_reward, r.eps, r.loss_mean);
    }
    s
}

pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut s = String::from("tti_clock,k,c,v_cc,v_ic,v_sc,v_sd,v_ud,collided_ues,reward,backlog_size,dropped_cum\n");
    for r in trace {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.tti_clock, r.k, r.c, r.v_cc, r.v_ic, r.v_sc, r.v_sd, r.v_ud, r.collided_ues, r.reward, r.backlog_size, r.dropped_cum
        );
    }
    s
}

pub fn buckets_csv(rows: &[(u64, [f64; 4])]) -> String {
    let mut s = String::from("tti_bucket,succ,non_coll,coll,dec_fail\n");
    for (b, v) in rows {
        let _ = writeln!(s, "{},{},{},{},{}", b, v[0], v[1], v[2], v[3]);
    }
    s
}

pub fn episodes_csv(episodes: &[EpisodeMetrics]) -> String {
    let mut s = String::from("episode,seed,total_reward,served,dropped,activated,steps,late_served\n");
    for e in episodes {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            e.episode,
            e.seed,
            e.total_reward,
            e.served,
            e.dropped,
            e.activated,
            e.steps(),
            e.late_served()
        );
    }
    s
}

/// Mean and standard deviation over episodes of per-step rates and per-episode totals.
pub fn summary_csv(episodes: &[EpisodeMetrics]) -> String {
    let per_step = |f: &dyn Fn(&TraceRow) -> f64| -> Vec<f64> {
        episodes
            .iter()
            .map(|e| e.trace.iter().map(f).sum::<f64>() / e.steps().max(1) as f64)
            .collect()
    };
    let rows: Vec<(&str, Vec<f64>)> = vec![
        ("reward_per_rtt", per_step(&|r| r.reward)),
        ("succ_per_rtt", per_step(&|r| r.v_sd as f64)),
        ("non_coll_per_rtt", per_step(&|r| r.v_sc as f64)),
        ("coll_per_rtt", per_step(&|r| r.collided_ues as f64)),
        ("dec_fail_per_rtt", per_step(&|r| r.v_ud as f64)),
        ("served_total", episodes.iter().map(|e| e.served as f64).collect()),
        ("dropped_total", episodes.iter().map(|e| e.dropped as f64).collect()),
        ("activated_total", episodes.iter().map(|e| e.activated as f64).collect()),
        ("late_served", episodes.iter().map(|e| e.late_served() as f64).collect()),
        ("rtts", episodes.iter().map(|e| e.steps() as f64).collect()),
    ];
    let mut s = String::from("metric,mean,std\n");
    for (name, xs) in rows {
        let (m, sd) = mean_std(&xs);
        let _ = writeln!(s, "{name},{m},{sd}");
    }
    s
}

struct RunDir<'a> {
    dir: &'a Path,
    artifacts: Vec<String>,
}

impl RunDir<'_> {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), HarnessError> {
        let p = self.dir.join(name);
        fs::write(&p, bytes).map_err(io_err(&p))?;
        self.artifacts.push(name.to_string());
        Ok(())
    }
}

/// Execute `spec`, writing every artifact and the manifest into `out_dir`.
pub fn execute(spec: &RunSpec, out_dir: &Path) -> Result<RunManifest, HarnessError> {
    execute_with(spec, out_dir, TrainOptions::default())
}

/// [`execute`] with training options (progress reporting); options never change outputs.
pub fn execute_with(spec: &RunSpec, out_dir: &Path, opts: TrainOptions) -> Result<RunManifest, HarnessError> {
    let mut cfg = spec.sim_config()?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut run = RunDir {
        dir: out_dir,
        artifacts: Vec::new(),
    };
    match spec.command {
        Command::Train => {
            cfg.learn.episodes = spec.episodes;
            let opts = TrainOptions {
                progress: opts.progress,
                ..TrainOptions::default()
            };
            let outcome = train_from_spec(spec, &cfg, opts)?;
            run.write(CURVE_FILE, curve_csv(&outcome.curve).as_bytes())?;
            run.write(K_AGENT_FILE, &outcome.agents[0].online.to_bytes())?;
            if let Some(c_agent) = outcome.agents.get(1) {
                run.write(C_AGENT_FILE, &c_agent.online.to_bytes())?;
            }
        }
        Command::Eval => {
            if spec.policies.is_empty() {
                return Err(HarnessError::Usage("eval needs a --policy".into()));
            }
            for &kind in &spec.policies {
                let mut policy = make_policy(kind, &cfg, spec.checkpoint.as_deref())?;
                let eps = eval_policy(&cfg, policy.as_mut(), spec.episodes)?;
                let p = kind.key();
                run.write(&format!("eval_{p}_buckets.csv"), buckets_csv(&bucket_table(&eps, spec.bucket_ttis)).as_bytes())?;
                run.write(&format!("eval_{p}_summary.csv"), summary_csv(&eps).as_bytes())?;
                run.write(&format!("eval_{p}_episodes.csv"), episodes_csv(&eps).as_bytes())?;
                if let Some(first) = eps.first() {
                    run.write(&format!("eval_{p}_trace.csv"), trace_csv(&first.trace).as_bytes())?;
                }
            }
        }
        Command::Compare => {
            if spec.policies.len() < 2 {
                return Err(HarnessError::Usage("compare needs at least two policies".into()));
            }
            let mut rows = Vec::new();
            for &kind in &spec.policies {
                let mut policy = make_policy(kind, &cfg, spec.checkpoint.as_deref())?;
                let eps = eval_policy(&cfg, policy.as_mut(), spec.episodes)?;
                run.write(&format!("compare_{}_episodes.csv", kind.key()), episodes_csv(&eps).as_bytes())?;
                rows.push((kind, eps));
            }
            run.write("compare.csv", compare_csv(&rows).as_bytes())?;
        }
    }
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        scheme: cfg.scheme.key().to_string(),
        spec: spec.clone(),
        artifacts: run.artifacts.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    run.write(MANIFEST_FILE, json.as_bytes())?;
    Ok(manifest)
}

/// Comparison table: served-UE statistics per policy, ratios against the first.
pub fn compare_csv(rows: &[(PolicyKind, Vec<EpisodeMetrics>)]) -> String {
    let served = |eps: &[EpisodeMetrics]| -> Vec<f64> { eps.iter().map(|e| e.served as f64).collect() };
    let base = mean_std(&served(&rows[0].1)).0;
    let mut s = String::from("policy,mean_served,std_served,ratio,mean_late_served\n");
    for (kind, eps) in rows {
        let (m, sd) = mean_std(&served(eps));
        let late: Vec<f64> = eps.iter().map(|e| e.late_served() as f64).collect();
        let _ = writeln!(s, "{},{},{},{},{}", kind.key(), m, sd, m / base, mean_std(&late).0);
    }
    s
}

fn train_from_spec(spec: &RunSpec, cfg: &SimConfig, opts: TrainOptions) -> Result<TrainOutcome, HarnessError> {
    match spec.mode {
        Mode::Single => {
            let c = spec.ctus.unwrap_or(cfg.c_max());
            if !cfg.c_set.contains(&c) {
                return Err(HarnessError::Usage(format!("--ctus {c} is not in c_set {:?}", cfg.c_set)));
            }
            Ok(train_single(cfg, c, opts)?)
        }
        Mode::Cma => {
            if spec.ctus.is_some() {
                return Err(HarnessError::Usage("--ctus fixes C and only applies to --mode single".into()));
            }
            Ok(train_cma(cfg, opts)?)
        }
    }
}

/// Re-execute the run recorded in `manifest_path` into `out_dir`.
pub fn rerun(manifest_path: &Path, out_dir: &Path) -> Result<RunManifest, HarnessError> {
    let manifest = RunManifest::load(manifest_path)?;
    execute(&manifest.spec, out_dir)
}

/// All oracle suites.
pub fn cmd_verify() -> Vec<SuiteReport> {
    verify::run_all()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> SimConfig {
        let mut cfg = SimConfig {
            n_ues: 150,
            traffic_total_s: 0.02,
            latency_constraint_ms: 8.0,
            seed: 7,
            ..SimConfig::default()
        };
        cfg.learn.hidden_sizes = vec![8, 8];
        cfg.learn.minibatch = 8;
        cfg
    }

    fn spec(command: Command, mode: Mode, policies: Vec<PolicyKind>, episodes: usize) -> RunSpec {
        RunSpec {
            command,
            config: tiny_cfg().to_kv_string(),
            profile: None,
            mode,
            policies,
            episodes,
            ctus: None,
            checkpoint: None,
            bucket_ttis: 50,
        }
    }

    #[test]
    fn ci_and_std() {
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 2f64.sqrt()));
        let (lo, hi) = ci95(&[1.0, 2.0, 3.0, 4.0]);
        // t(0.975, 3) = 3.182446305
        let half = 3.182446305284263 * (5.0f64 / 3.0).sqrt() / 2.0;
        assert!((lo - (2.5 - half)).abs() < 1e-9 && (hi - (2.5 + half)).abs() < 1e-9);
    }

    #[test]
    fn random_policy_conserves_ues() {
        let cfg = tiny_cfg();
        let mut p = RandomPolicy::new(&cfg);
        for e in eval_policy(&cfg, &mut p, 10).unwrap() {
            assert!(e.served <= e.activated);
            assert_eq!(e.served + e.dropped, e.activated);
        }
    }

    #[test]
    fn buckets_average_over_episodes() {
        let cfg = tiny_cfg();
        let mut p = fixed_policy(&cfg).unwrap();
        let eps = eval_policy(&cfg, &mut p, 4).unwrap();
        let rows = bucket_table(&eps, 50);
        let served: f64 = rows.iter().map(|r| r.1[0]).sum();
        let mean_served = eps.iter().map(|e| e.served as f64).sum::<f64>() / 4.0;
        assert!((served - mean_served).abs() < 1e-9);
        assert!(rows.windows(2).all(|w| w[1].0 == w[0].0 + 50));
        assert!(buckets_csv(&rows).starts_with("tti_bucket,succ,non_coll,coll,dec_fail\n"));
    }

    #[test]
    fn train_eval_compare_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let train_dir = dir.path().join("train");
        let m = execute(&spec(Command::Train, Mode::Cma, vec![], 3), &train_dir).unwrap();
        assert!(m.artifacts.contains(&K_AGENT_FILE.to_string()) && m.artifacts.contains(&C_AGENT_FILE.to_string()));
        let curve = fs::read_to_string(train_dir.join(CURVE_FILE)).unwrap();
        assert_eq!(curve.lines().count(), 4);

        let mut cmp = spec(Command::Compare, Mode::Cma, vec![PolicyKind::Cma, PolicyKind::Fixed, PolicyKind::LeUrc], 3);
        cmp.checkpoint = Some(train_dir.clone());
        let out = dir.path().join("cmp");
        execute(&cmp, &out).unwrap();
        let table = fs::read_to_string(out.join("compare.csv")).unwrap();
        let first = table.lines().nth(1).unwrap();
        assert!(first.starts_with("cma,"));
        assert_eq!(first.split(',').nth(3).unwrap(), "1");
        assert!(table.contains("\nleurc,"));

        // re-run from the manifest reproduces every artifact
        let again = dir.path().join("cmp2");
        rerun(&out.join(MANIFEST_FILE), &again).unwrap();
        for name in ["compare.csv", "compare_cma_episodes.csv", "compare_fixed_episodes.csv", MANIFEST_FILE] {
            assert_eq!(fs::read(out.join(name)).unwrap(), fs::read(again.join(name)).unwrap(), "{name}");
        }
    }

    #[test]
    fn usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = spec(Command::Train, Mode::Cma, vec![], 1);
        s.ctus = Some(24);
        assert!(matches!(execute(&s, dir.path()), Err(HarnessError::Usage(_))));
        let mut s = spec(Command::Train, Mode::Single, vec![], 1);
        s.ctus = Some(30);
        assert!(matches!(execute(&s, dir.path()), Err(HarnessError::Usage(_))));
        let s = spec(Command::Eval, Mode::Cma, vec![PolicyKind::Cma], 1);
        assert!(matches!(execute(&s, dir.path()), Err(HarnessError::Usage(_))));
        let mut s = spec(Command::Eval, Mode::Cma, vec![PolicyKind::Cma], 1);
        s.checkpoint = Some(dir.path().join("nowhere"));
        assert!(matches!(execute(&s, dir.path()), Err(HarnessError::MissingCheckpoint(_))));
        assert!("dqn".parse::<PolicyKind>().is_err());
    }

    #[test]
    fn single_checkpoint_evaluates_with_its_ctu_count() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = spec(Command::Train, Mode::Single, vec![], 2);
        s.ctus = Some(24);
        let train_dir = dir.path().join("t");
        execute(&s, &train_dir).unwrap();
        let cfg = tiny_cfg();
        let mut p = make_policy(PolicyKind::Single, &cfg, Some(&train_dir)).unwrap();
        let eps = eval_policy(&cfg, p.as_mut(), 1).unwrap();
        assert!(eps[0].trace.iter().all(|r| r.c == 24));
        assert!(make_policy(PolicyKind::Cma, &cfg, Some(&train_dir)).is_err());
    }
}
