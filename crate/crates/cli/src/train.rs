//! The `train` and `eval` subcommands.

use std::fs::{self, File};
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use revalued::agents::{ActMode, Agent};
use revalued::envs::{EnvKind, Environment, NoiseWrapperConfig, PointMass, PointMassConfig};
use revalued::metrics::{cvar_windows, detrend, evaluate, EvalRecord, GreedyPolicy, RunLog, UpdateRecord};
use revalued::net::checkpoint;
use revalued::replay::{NStepAssembler, PrioritizedBuffer, RawStep};
use revalued::{Error, GlobalAction};
use serde::Serialize;

use crate::config::RunConfig;

/// Independent generator `stream` of the family keyed by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn derive_seed(seed: u64, stream: u64) -> u64 {
    stream_rng(seed, stream).next_u64()
}

const ENV_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;
const ACT_STREAM: u64 = 3;
const REPLAY_STREAM: u64 = 4;
const EVAL_STREAM: u64 = 5;

/// Seed of the fresh environment used for the evaluation at `update_idx`.
pub fn eval_env_seed(seed: u64, update_idx: u64) -> u64 {
    derive_seed(derive_seed(seed, EVAL_STREAM), update_idx)
}

/// Outcome of one training seed.
#[derive(Debug)]
pub struct SeedOutcome {
    pub agent: Agent,
    pub log: RunLog,
}

/// Per-seed metadata written next to the CSV logs.
#[derive(Debug, Serialize)]
struct RunMetadata<'a> {
    seed: u64,
    config_hash: &'a str,
    algorithm: &'a str,
    ensemble_size: usize,
    beta: f64,
    updates_completed: u64,
    final_eval_return: Option<f64>,
    grad_norm_cvar: Vec<f64>,
    cvar_level: f64,
    checkpoint: String,
}

struct CsvLog {
    writer: csv::Writer<File>,
}

impl CsvLog {
    fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let mut writer = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        writer.write_record(header)?;
        writer.flush()?;
        Ok(Self { writer })
    }

    fn row(&mut self, fields: &[String]) -> Result<()> {
        self.writer.write_record(fields)?;
        self.writer.flush()?;
        Ok(())
    }
}

/// Drives one environment instance and feeds n-step transitions to replay.
struct Collector {
    env: Box<dyn Environment + Send>,
    observation: Vec<f32>,
    assembler: NStepAssembler,
}

impl Collector {
    fn step(&mut self, agent: &Agent, rng: &mut ChaCha8Rng, buffer: &mut PrioritizedBuffer) -> Result<()> {
        let action = agent.select_action(&self.observation, agent.epsilon(), ActMode::Train, rng)?;
        let step = self.env.step(&action)?;
        let raw = RawStep {
            state: std::mem::take(&mut self.observation),
            action,
            reward: step.reward,
            next_state: step.observation.clone(),
            done: step.done,
        };
        for t in self.assembler.push(raw)? {
            buffer.push(t);
        }
        self.observation = if step.done { self.env.reset() } else { step.observation };
        Ok(())
    }
}

/// Mean greedy return of `policy` on a fresh environment seeded for `update_idx`.
pub fn evaluate_policy<P: GreedyPolicy + ?Sized>(
    policy: &P,
    kind: &EnvKind,
    noise: &NoiseWrapperConfig,
    seed: u64,
    update_idx: u64,
    episodes: usize,
) -> Result<f64> {
    let mut env = kind.build(noise, eval_env_seed(seed, update_idx))?;
    Ok(evaluate(policy, &mut env, episodes)?)
}

/// Trains one seed. With `out_dir` set, writes `train_<seed>.csv`,
/// `eval_<seed>.csv`, `run_<seed>.toml` and `checkpoint_<seed>.bin`; rows are
/// flushed as they are produced so a failed run leaves its partial logs.
pub fn train_seed(config: &RunConfig, seed: u64, out_dir: Option<&Path>) -> Result<SeedOutcome> {
    config.validate()?;
    let kind = config.env.resolve()?;
    let spec = kind.action_space()?;
    let env = kind.build(&config.noise, derive_seed(seed, ENV_STREAM))?;
    let agent_cfg = config.agent.clone();
    let mut agent = Agent::new(agent_cfg.clone(), env.observation_dim(), spec, derive_seed(seed, INIT_STREAM))?;
    let mut act_rng = stream_rng(seed, ACT_STREAM);
    let mut replay_rng = stream_rng(seed, REPLAY_STREAM);
    let mut buffer = PrioritizedBuffer::new(agent_cfg.replay)?;
    let assembler = NStepAssembler::new(agent_cfg.replay.n_step, agent_cfg.gamma as f32)?;
    let mut env = env;
    let observation = env.reset();
    let mut collector = Collector { env, observation, assembler };

    let hash = config.hash()?;
    let mut log = RunLog::new(seed, hash.clone());
    let (mut train_csv, mut eval_csv) = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            (
                Some(CsvLog::create(&dir.join(format!("train_{seed}.csv")), &["update_idx", "loss", "grad_norm", "epsilon"])?),
                Some(CsvLog::create(&dir.join(format!("eval_{seed}.csv")), &["update_idx", "eval_return"])?),
            )
        }
        None => (None, None),
    };

    let t = &config.training;
    for _ in 0..t.warmup {
        collector.step(&agent, &mut act_rng, &mut buffer)?;
    }
    while buffer.len() < agent_cfg.replay.batch_size {
        collector.step(&agent, &mut act_rng, &mut buffer)?;
    }

    for update_idx in 1..=t.total_updates {
        for _ in 0..t.env_steps_per_update {
            collector.step(&agent, &mut act_rng, &mut buffer)?;
        }
        let report = match agent.total_update(&mut buffer, &mut replay_rng) {
            Err(Error::NonFinite(what)) => return Err(anyhow!("non-finite {what} at update {update_idx}; run aborted")),
            other => other?,
        };
        let record = UpdateRecord { update_idx, loss: report.loss, grad_norm: report.grad_norm, epsilon: agent.epsilon() };
        if let Some(csv) = train_csv.as_mut() {
            csv.row(&[
                update_idx.to_string(),
                record.loss.to_string(),
                record.grad_norm.to_string(),
                record.epsilon.to_string(),
            ])?;
        }
        log.push_update(record)?;
        if update_idx % t.eval_every == 0 {
            let eval_return = evaluate_policy(&agent, &kind, &config.noise, seed, update_idx, t.eval_episodes)?;
            if let Some(csv) = eval_csv.as_mut() {
                csv.row(&[update_idx.to_string(), eval_return.to_string()])?;
            }
            log.push_eval(EvalRecord { update_idx, eval_return })?;
        }
    }

    if let Some(dir) = out_dir {
        let checkpoint_name = format!("checkpoint_{seed}.bin");
        checkpoint::save(dir.join(&checkpoint_name), &agent.to_checkpoint())?;
        let norms = log.grad_norms();
        let grad_norm_cvar = if norms.len() >= 2 {
            cvar_windows(&detrend(&norms)?, t.cvar_level, t.cvar_window)?
        } else {
            Vec::new()
        };
        let meta = RunMetadata {
            seed,
            config_hash: &hash,
            algorithm: agent_cfg.algorithm.name(),
            ensemble_size: agent_cfg.ensemble_size(),
            beta: agent_cfg.beta(),
            updates_completed: agent.updates(),
            final_eval_return: log.evals.last().map(|e| e.eval_return),
            grad_norm_cvar,
            cvar_level: t.cvar_level,
            checkpoint: checkpoint_name,
        };
        fs::write(dir.join(format!("run_{seed}.toml")), toml::to_string(&meta)?)?;
    }
    Ok(SeedOutcome { agent, log })
}

/// Runs every configured seed in turn, writing into `config.out_dir`.
pub fn run_train(config: &RunConfig) -> Result<Vec<SeedOutcome>> {
    config.validate()?;
    fs::create_dir_all(&config.out_dir).with_context(|| format!("creating {}", config.out_dir.display()))?;
    fs::write(config.out_dir.join("config.toml"), config.to_toml()?)?;
    config
        .seeds
        .iter()
        .map(|&seed| train_seed(config, seed, Some(&config.out_dir)).with_context(|| format!("seed {seed}")))
        .collect()
}

/// Loads a checkpoint into an agent shaped by `config` and returns its mean
/// greedy return over `config.training.eval_episodes` episodes.
pub fn run_eval(config: &RunConfig, checkpoint_path: &Path, seed: u64) -> Result<f64> {
    config.validate()?;
    let kind = config.env.resolve()?;
    let env = kind.build(&config.noise, 0)?;
    let mut agent = Agent::new(config.agent.clone(), env.observation_dim(), kind.action_space()?, 0)?;
    let arrays = checkpoint::load(checkpoint_path).with_context(|| format!("reading {}", checkpoint_path.display()))?;
    agent.load_checkpoint(&arrays).context("checkpoint does not match the configured network")?;
    evaluate_policy(&agent, &kind, &config.noise, seed, 0, config.training.eval_episodes)
}

/// Greedy returns of the uniform-random and move-to-target policies on the
/// point mass, over the same fresh-environment seeds as [`evaluate_policy`].
pub fn point_mass_baselines(
    config: &PointMassConfig,
    noise: &NoiseWrapperConfig,
    seed: u64,
    update_idx: u64,
    episodes: usize,
) -> Result<(f64, f64)> {
    let kind = EnvKind::PointMass(config.clone());
    let spec = kind.action_space()?;
    let rng = std::cell::RefCell::new(stream_rng(seed, u64::MAX));
    let random = |_: &[f32]| -> revalued::Result<GlobalAction> {
        let mut rng = rng.borrow_mut();
        Ok(GlobalAction::new(spec.sizes().iter().map(|&n| rng.random_range(0..n)).collect()))
    };
    let random_return = evaluate_policy(&random, &kind, noise, seed, update_idx, episodes)?;
    // The oracle reads the true position, so it is evaluated on the
    // noise-free environment.
    let oracle_env = PointMass::new(config.clone(), 0)?;
    let oracle = |s: &[f32]| -> revalued::Result<GlobalAction> { Ok(oracle_env.oracle_action(s)) };
    let oracle_return = evaluate_policy(&oracle, &kind, &NoiseWrapperConfig::default(), seed, update_idx, episodes)?;
    Ok((random_return, oracle_return))
}
