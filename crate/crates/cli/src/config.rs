//! Run configuration: a sectioned TOML file.
//!
//! ```toml
//! [env]
//! kind = "explore_grid"
//! width = 5
//! height = 5
//! n_agents = 2
//! starts = [[0, 0], [4, 4]]
//!
//! [utility]
//! preset = "state_entropy"
//!
//! [topology]
//! kind = "complete"
//! agents = 2
//! rounds = 1
//!
//! [critic]
//! features = "factored"
//!
//! [schedule]
//! mode = "manual"
//! iterations = 300
//! batch = 100
//! horizon = 40
//! eta_theta = 1.0
//! eta_w = 0.1
//!
//! [run]
//! seed = 1
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dsac::critic::FeatureMap;
use dsac::envs::{build_explore_mdp, build_nav_mdp, ExploreGridConfig, GridNavConfig, NavTask};
use dsac::graph::{build_topology, metropolis_weights};
use dsac::rng::{label, stream};
use dsac::trainer::{initial_mu_w, Dsac, Schedule, ScheduleContext, ScheduleSpec};
use dsac::{FactoredMdp, MixingMatrix, TopologyKind, UtilitySpec};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvSection,
    pub utility: UtilitySection,
    pub topology: TopologySection,
    #[serde(default)]
    pub critic: CriticSection,
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvSection {
    GridNav(GridNavConfig),
    ExploreGrid(ExploreGridConfig),
    /// A factored MDP with Dirichlet-like random kernels.
    Random {
        local_states: Vec<usize>,
        local_actions: Vec<usize>,
        discount: f64,
        #[serde(default)]
        env_seed: u64,
    },
    /// A single-agent MDP given row by row: `kernel[s * n_actions + a]` is
    /// the next-state distribution.
    Tabular {
        n_states: usize,
        n_actions: usize,
        kernel: Vec<Vec<f64>>,
        initial: Vec<f64>,
        discount: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityPreset {
    /// Linear utilities on the navigation distance rewards.
    NavLinear,
    /// Distance reward minus `penalty · (⟨λ, c⟩ - C)²`.
    NavPenalty,
    /// Unnormalized state entropy for every agent.
    StateEntropy,
}

/// Either a preset or an explicit utility per agent.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilitySection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<UtilityPreset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub agents: Vec<UtilitySpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologySection {
    #[serde(flatten)]
    pub kind: TopologyKind,
    pub agents: usize,
    #[serde(default = "one")]
    pub rounds: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    #[default]
    OneHot,
    Factored,
    RandomProjection,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticSection {
    #[serde(default)]
    pub features: FeatureKind,
    /// Dimension of the random projection.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// Abort when a critic's norm exceeds this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub metrics_interval: usize,
    /// Write an intermediate checkpoint every this many iterations; 0 keeps
    /// only the final one.
    #[serde(default)]
    pub checkpoint_interval: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Record real iteration times; off by default so that metrics files
    /// are reproducible byte for byte.
    #[serde(default)]
    pub wall_clock: bool,
    /// Log the exact gradient norm each iteration (small problems only).
    #[serde(default)]
    pub oracle_metrics: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 0,
            metrics_interval: 1,
            checkpoint_interval: 0,
            output_dir: default_output_dir(),
            wall_clock: false,
            oracle_metrics: false,
        }
    }
}

fn one() -> usize {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs/latest")
}

/// The environment with any per-agent tables it carries.
pub struct BuiltEnv {
    pub mdp: FactoredMdp,
    pub nav: Option<NavTask>,
}

/// Everything `run` and `oracle-check` need.
pub struct Problem {
    pub dsac: Dsac,
    pub nav: Option<NavTask>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configs always serialize")
    }

    pub fn n_agents(&self) -> usize {
        match &self.env {
            EnvSection::GridNav(c) => c.n_agents,
            EnvSection::ExploreGrid(c) => c.n_agents,
            EnvSection::Random { local_states, .. } => local_states.len(),
            EnvSection::Tabular { .. } => 1,
        }
    }

    /// Cross-section checks that the individual sections cannot make.
    pub fn validate(&self) -> Result<(), CliError> {
        let n = self.n_agents();
        if self.topology.agents != n {
            return Err(CliError::Usage(format!(
                "topology has {} agents but the environment has {n}",
                self.topology.agents
            )));
        }
        let u = &self.utility;
        match (u.preset, u.agents.is_empty()) {
            (Some(_), false) => return Err(CliError::Usage("utility: give either a preset or agents, not both".into())),
            (None, true) => return Err(CliError::Usage("utility: missing preset or agents".into())),
            (None, false) if u.agents.len() != n => {
                return Err(CliError::Usage(format!("utility: {} agents listed, environment has {n}", u.agents.len())))
            }
            _ => {}
        }
        let is_nav = matches!(self.env, EnvSection::GridNav(_));
        match u.preset {
            Some(UtilityPreset::NavLinear | UtilityPreset::NavPenalty) if !is_nav => {
                return Err(CliError::Usage("navigation utility presets need env kind grid_nav".into()))
            }
            Some(UtilityPreset::NavPenalty) if u.penalty.is_none() => {
                return Err(CliError::Usage("utility preset nav_penalty needs a penalty".into()))
            }
            _ => {}
        }
        if u.penalty.is_some() && u.preset != Some(UtilityPreset::NavPenalty) {
            return Err(CliError::Usage("utility: penalty only applies to the nav_penalty preset".into()));
        }
        if self.critic.features == FeatureKind::RandomProjection && self.critic.dim.is_none() {
            return Err(CliError::Usage("critic: random_projection needs dim".into()));
        }
        if self.run.metrics_interval == 0 {
            return Err(CliError::Usage("run: metrics_interval must be >= 1".into()));
        }
        Ok(())
    }

    pub fn build_env(&self) -> Result<BuiltEnv, CliError> {
        Ok(match &self.env {
            EnvSection::GridNav(c) => {
                let task = build_nav_mdp(c).map_err(config_error)?;
                BuiltEnv {
                    mdp: task.mdp.clone(),
                    nav: Some(task),
                }
            }
            EnvSection::ExploreGrid(c) => BuiltEnv {
                mdp: build_explore_mdp(c).map_err(config_error)?,
                nav: None,
            },
            EnvSection::Random {
                local_states,
                local_actions,
                discount,
                env_seed,
            } => BuiltEnv {
                mdp: FactoredMdp::random(
                    local_states.clone(),
                    local_actions.clone(),
                    *discount,
                    &mut stream(*env_seed, &[label::ENV]),
                )
                .map_err(config_error)?,
                nav: None,
            },
            EnvSection::Tabular {
                n_states,
                n_actions,
                kernel,
                initial,
                discount,
            } => {
                let rows = kernel
                    .iter()
                    .map(|row| row.iter().copied().enumerate().filter(|(_, p)| *p != 0.0).collect())
                    .collect();
                BuiltEnv {
                    mdp: FactoredMdp::from_rows(vec![*n_states], vec![*n_actions], rows, initial.clone(), *discount)
                        .map_err(config_error)?,
                    nav: None,
                }
            }
        })
    }

    pub fn utilities(&self, env: &BuiltEnv) -> Vec<UtilitySpec> {
        let n = env.mdp.n_agents();
        match self.utility.preset {
            None => self.utility.agents.clone(),
            Some(UtilityPreset::StateEntropy) => vec![UtilitySpec::state_entropy(); n],
            Some(UtilityPreset::NavLinear) => env.nav.as_ref().expect("validated").linear_utilities(),
            Some(UtilityPreset::NavPenalty) => env
                .nav
                .as_ref()
                .expect("validated")
                .penalty_utilities(self.utility.penalty.expect("validated")),
        }
    }

    pub fn mixing(&self) -> Result<MixingMatrix, CliError> {
        let mut rng = stream(self.run.seed, &[label::TOPOLOGY]);
        let graph = build_topology(self.topology.kind, self.topology.agents, &mut rng).map_err(config_error)?;
        metropolis_weights(&graph).map_err(config_error)
    }

    pub fn features(&self, mdp: &FactoredMdp) -> Result<FeatureMap, CliError> {
        match self.critic.features {
            FeatureKind::OneHot => Ok(FeatureMap::one_hot(mdp)),
            FeatureKind::Factored => Ok(FeatureMap::factored(mdp)),
            FeatureKind::RandomProjection => {
                let dim = self.critic.dim.expect("validated");
                FeatureMap::random_projection(mdp, dim, &mut stream(self.run.seed, &[label::FEATURES])).map_err(config_error)
            }
        }
    }

    pub fn build(&self) -> Result<Problem, CliError> {
        let env = self.build_env()?;
        let utilities = self.utilities(&env);
        let features = self.features(&env.mdp)?;
        let mixing = self.mixing()?;
        let mu_w = if self.schedule.needs_mu_w() {
            Some(initial_mu_w(&env.mdp, &features).map_err(config_error)?)
        } else {
            None
        };
        let ctx = ScheduleContext {
            n_agents: env.mdp.n_agents(),
            discount: env.mdp.discount(),
            feature_bound: features.bound(),
            mu_w,
        };
        let schedule = Schedule::new(self.schedule.clone(), ctx).map_err(config_error)?;
        let mut dsac = Dsac::new(env.mdp, utilities, features, mixing, self.topology.rounds, schedule).map_err(config_error)?;
        if let Some(cap) = self.critic.cap {
            dsac = dsac.with_critic_cap(cap);
        }
        if self.run.oracle_metrics {
            dsac = dsac.with_oracle_metrics(true).map_err(CliError::from_oracle)?;
        }
        Ok(Problem { dsac, nav: env.nav })
    }
}

fn config_error(e: dsac::Error) -> CliError {
    match e.root() {
        dsac::Error::Oracle(_) => CliError::OracleCap(e.to_string()),
        _ => CliError::Usage(e.to_string()),
    }
}
