//! The TOML run configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use revalued::agents::{AgentConfig, TabularConfig, WeightFn};
use revalued::envs::{EnvKind, NoiseWrapperConfig, PointMassConfig, TabularCreditConfig};
use revalued::theory::{NoiseModel, MIN_TRIALS};
use revalued::ActionSpaceSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub env: EnvSection,
    pub noise: NoiseWrapperConfig,
    pub agent: AgentConfig,
    pub training: TrainingConfig,
    pub theory: TheoryConfig,
    pub tabular: TabularSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0],
            out_dir: PathBuf::from("runs"),
            env: EnvSection::default(),
            noise: NoiseWrapperConfig::default(),
            agent: AgentConfig::default(),
            training: TrainingConfig::default(),
            theory: TheoryConfig::default(),
            tabular: TabularSection::default(),
        }
    }
}

/// Environment name plus its parameters. Parameters not given fall back to
/// per-environment defaults; parameters that do not apply are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<usize>,
    /// Sub-actions per dimension of the credit task.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_scale: Option<f32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Vec<f32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<Vec<f32>>,
}

impl Default for EnvSection {
    fn default() -> Self {
        Self {
            name: "point_mass".into(),
            dims: None,
            n: None,
            bins: None,
            step_scale: None,
            horizon: None,
            target: None,
            initial_state: None,
        }
    }
}

pub const ENV_NAMES: [&str; 2] = ["point_mass", "tabular_credit"];

impl EnvSection {
    pub fn resolve(&self) -> Result<EnvKind> {
        let kind = match self.name.as_str() {
            "point_mass" => {
                if self.n.is_some() {
                    bail!("env.n does not apply to point_mass (use env.bins)");
                }
                let dims = self.dims.unwrap_or(6);
                EnvKind::PointMass(PointMassConfig {
                    dims,
                    bins: self.bins.unwrap_or(3),
                    step_scale: self.step_scale.unwrap_or(0.1),
                    horizon: self.horizon.unwrap_or(50),
                    target: self.target.clone().unwrap_or_else(|| vec![0.0; dims]),
                    initial_state: self.initial_state.clone(),
                })
            }
            "tabular_credit" => {
                if self.bins.is_some()
                    || self.step_scale.is_some()
                    || self.horizon.is_some()
                    || self.target.is_some()
                    || self.initial_state.is_some()
                {
                    bail!("env: tabular_credit only takes dims and n");
                }
                EnvKind::TabularCredit(TabularCreditConfig::new(self.dims.unwrap_or(5), self.n.unwrap_or(10)))
            }
            other => bail!("env.name: unknown environment '{other}' (expected one of {ENV_NAMES:?})"),
        };
        kind.action_space().context("env")?;
        if let EnvKind::PointMass(c) = &kind {
            c.validate().context("env")?;
        }
        Ok(kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub total_updates: u64,
    pub env_steps_per_update: usize,
    /// Environment steps collected before the first update.
    pub warmup: usize,
    pub eval_every: u64,
    pub eval_episodes: usize,
    /// Tail level of the gradient-norm CVaR reported in the run metadata.
    pub cvar_level: f64,
    /// CVaR window in updates; the whole run when absent.
    pub cvar_window: Option<usize>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            total_updates: 100_000,
            env_steps_per_update: 5,
            warmup: 1000,
            eval_every: 1000,
            eval_episodes: 1,
            cvar_level: 0.95,
            cvar_window: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryConfig {
    /// Inclusive range of the number of dimensions in the closed-form grid.
    pub dims: [usize; 2],
    /// Inclusive range of sub-action counts in the closed-form grid.
    pub sizes: [usize; 2],
    pub b: f64,
    pub gamma: f64,
    pub k: usize,
    pub trials: usize,
    /// Specs that additionally get a Monte Carlo estimate of every mode.
    pub monte_carlo_specs: Vec<Vec<usize>>,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self {
            dims: [1, 5],
            sizes: [2, 10],
            b: 1.0,
            gamma: 1.0,
            k: 10,
            trials: 1_000_000,
            monte_carlo_specs: vec![vec![3, 3], vec![3, 3, 3]],
        }
    }
}

impl TheoryConfig {
    pub fn validate(&self) -> Result<()> {
        NoiseModel::new(self.b, self.gamma).context("theory")?;
        if self.dims[0] < 1 || self.dims[0] > self.dims[1] {
            bail!("theory.dims must be an increasing range starting at 1 or more");
        }
        if self.sizes[0] < 2 || self.sizes[0] > self.sizes[1] {
            bail!("theory.sizes must be an increasing range starting at 2 or more");
        }
        if self.k < 1 {
            bail!("theory.k must be at least 1");
        }
        if self.trials < MIN_TRIALS {
            bail!("theory.trials must be at least {MIN_TRIALS}, got {}", self.trials);
        }
        for s in &self.monte_carlo_specs {
            ActionSpaceSpec::new(s.clone()).context("theory.monte_carlo_specs")?;
        }
        Ok(())
    }
}

/// Credit-assignment experiment. DecQN runs with the same constants and
/// `beta = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TabularSection {
    pub dims: usize,
    pub n: usize,
    pub trials: usize,
    pub updates: usize,
    pub alpha: f64,
    pub beta: f64,
    pub polyak: f64,
    pub epsilon: f64,
    pub weight_fn: WeightFn,
}

impl Default for TabularSection {
    fn default() -> Self {
        let l = TabularConfig::default();
        Self {
            dims: 5,
            n: 10,
            trials: 1000,
            updates: 100,
            alpha: l.alpha,
            beta: l.beta,
            polyak: l.polyak,
            epsilon: l.epsilon,
            weight_fn: l.weight_fn,
        }
    }
}

impl TabularSection {
    pub fn learning(&self) -> TabularConfig {
        TabularConfig {
            alpha: self.alpha,
            beta: self.beta,
            polyak: self.polyak,
            epsilon: self.epsilon,
            weight_fn: self.weight_fn,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).context("parsing run config")?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("seeds must list at least one seed");
        }
        self.env.resolve()?;
        self.noise.validate().context("noise")?;
        self.agent.validate().context("agent")?;
        let t = &self.training;
        if t.env_steps_per_update == 0 || t.eval_every == 0 || t.eval_episodes == 0 {
            bail!("training.env_steps_per_update, eval_every and eval_episodes must be positive");
        }
        if !(t.cvar_level > 0.0 && t.cvar_level < 1.0) {
            bail!("training.cvar_level must lie in (0, 1)");
        }
        self.theory.validate()?;
        self.tabular.learning().validate().context("tabular")?;
        if self.tabular.trials < 2 || self.tabular.updates == 0 {
            bail!("tabular.trials must be at least 2 and tabular.updates at least 1");
        }
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().take(8).map(|b| format!("{b:02x}")).collect())
    }
}
