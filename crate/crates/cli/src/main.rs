use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gfnoma::agents::{CurveRow, TrainOptions};
use gfnoma::config::SEED_ENV_VAR;
use gfnoma::harness::{self, Command, HarnessError, Mode, PolicyKind, RunManifest, RunSpec, DEFAULT_BUCKET_TTIS};
use gfnoma::{load_config, Profile, Scheme, SimConfig};

const EXIT_USAGE: u8 = 1;
const EXIT_VERIFY_FAILED: u8 = 2;

#[derive(Parser)]
#[command(name = "gfnoma", version, about = "Grant-free NOMA resource configuration: simulation, training and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a single-agent (K only) or cooperative (K and C) controller.
    Train(RunArgs),
    /// Evaluate policies greedily and write per-TTI tables.
    Eval(RunArgs),
    /// Evaluate several policies on shared seeds and tabulate served UEs.
    Compare(RunArgs),
    /// Run every oracle suite; exit code 2 on any failure.
    Verify,
}

#[derive(Args)]
struct RunArgs {
    /// `key = value` configuration file; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// krep or proactive.
    #[arg(long)]
    scheme: Option<Scheme>,
    /// single or cma.
    #[arg(long, default_value = "cma")]
    mode: Mode,
    /// Policy name(s), comma separated: cma, single, leurc, fixed, random.
    #[arg(long, value_delimiter = ',')]
    policy: Vec<PolicyKind>,
    /// Training episodes (train) or evaluation episodes (eval, compare).
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// desk or paper; defaults to desk unless --config is given.
    #[arg(long)]
    profile: Option<Profile>,
    /// Fixed CTU count for --mode single; must be in c_set.
    #[arg(long)]
    ctus: Option<u32>,
    /// Training run directory holding the networks for learned policies.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Width in TTIs of the evaluation buckets.
    #[arg(long, default_value_t = DEFAULT_BUCKET_TTIS)]
    bucket_ttis: u64,
    /// Re-execute the run recorded in this manifest; other run flags are ignored.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value = "runs/latest")]
    out_dir: PathBuf,
}

fn resolve_config(args: &RunArgs) -> Result<(SimConfig, Option<Profile>)> {
    let (mut cfg, profile) = match &args.config {
        Some(path) => (load_config(path)?, args.profile),
        None => {
            let mut cfg = SimConfig::default();
            cfg.apply_seed_override(std::env::var(SEED_ENV_VAR).ok().as_deref())?;
            (cfg, Some(args.profile.unwrap_or(Profile::Desk)))
        }
    };
    if let Some(p) = profile {
        p.apply(&mut cfg);
    }
    if let Some(s) = args.scheme {
        cfg.scheme = s;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok((cfg, profile))
}

fn build_spec(command: Command, args: &RunArgs) -> Result<RunSpec> {
    let (cfg, profile) = resolve_config(args)?;
    let episodes = match (args.episodes, command) {
        (Some(n), _) => n,
        (None, Command::Train) => cfg.learn.episodes,
        (None, _) => profile.unwrap_or(Profile::Desk).eval_episodes(),
    };
    let mut policies = args.policy.clone();
    match command {
        Command::Train => {
            if !policies.is_empty() {
                bail!(HarnessError::Usage("train takes --mode, not --policy".into()));
            }
        }
        Command::Eval if policies.is_empty() => {
            bail!(HarnessError::Usage("eval needs --policy".into()));
        }
        Command::Compare if policies.is_empty() => {
            policies = vec![PolicyKind::Cma, PolicyKind::Fixed, PolicyKind::LeUrc];
        }
        _ => {}
    }
    if command != Command::Train && args.ctus.is_some() {
        bail!(HarnessError::Usage("--ctus only applies to train --mode single".into()));
    }
    Ok(RunSpec {
        command,
        config: cfg.to_kv_string(),
        profile,
        mode: args.mode,
        policies,
        episodes,
        ctus: args.ctus,
        checkpoint: args.checkpoint.clone(),
        bucket_ttis: args.bucket_ttis,
    })
}

fn print_progress(row: &CurveRow) {
    if row.episode.is_multiple_of(10) {
        eprintln!(
            "episode {:>5}  mean reward {:>8.3}  eps {:.3}  loss {:.4}  rtts {}",
            row.episode, row.mean_reward, row.eps, row.loss_mean, row.steps
        );
    }
}

fn run(command: Command, args: &RunArgs) -> Result<()> {
    let spec = match &args.manifest {
        Some(path) => {
            let m = RunManifest::load(path).with_context(|| format!("reading {}", path.display()))?;
            if m.spec.command != command {
                bail!(HarnessError::Usage(format!(
                    "manifest records a {:?} run, not {command:?}",
                    m.spec.command
                )));
            }
            m.spec
        }
        None => build_spec(command, args)?,
    };
    let opts = TrainOptions {
        progress: Some(print_progress),
        ..TrainOptions::default()
    };
    let manifest = harness::execute_with(&spec, &args.out_dir, opts)?;
    report(&manifest, &args.out_dir)
}

fn report(manifest: &RunManifest, dir: &Path) -> Result<()> {
    let show = |name: &str| -> Result<()> {
        let p = dir.join(name);
        print!("{}", std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?);
        Ok(())
    };
    match manifest.spec.command {
        Command::Train => {
            let curve = std::fs::read_to_string(dir.join(harness::CURVE_FILE))?;
            if let Some(last) = curve.lines().last() {
                println!("final curve row: {last}");
            }
        }
        Command::Eval => {
            for p in &manifest.spec.policies {
                println!("[{}]", p.key());
                show(&format!("eval_{}_summary.csv", p.key()))?;
            }
        }
        Command::Compare => show("compare.csv")?,
    }
    println!("wrote {} files to {}", manifest.artifacts.len(), dir.display());
    Ok(())
}

fn is_usage(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        matches!(
            e.downcast_ref::<HarnessError>(),
            Some(HarnessError::Usage(_) | HarnessError::MissingCheckpoint(_))
        ) || e.downcast_ref::<gfnoma::config::ConfigError>().is_some()
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Cmd::Train(a) => run(Command::Train, a),
        Cmd::Eval(a) => run(Command::Eval, a),
        Cmd::Compare(a) => run(Command::Compare, a),
        Cmd::Verify => {
            let reports = harness::cmd_verify();
            for r in &reports {
                println!("{r}");
            }
            return if reports.iter().all(|r| r.passed()) {
                println!("all {} suites passed", reports.len());
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VERIFY_FAILED)
            };
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if !is_usage(&e) {
                eprintln!("(run failed)");
            }
            ExitCode::from(EXIT_USAGE)
        }
    }
}
