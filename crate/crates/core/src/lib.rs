//! Decentralized shadow-reward actor-critic for cooperative multi-agent
//! reinforcement learning with general utilities.
//!
//! Each agent `i` maximizes a utility `F_i(λ_i)` of its local occupancy
//! measure. Linearizing `F_i` at the current policy yields a *shadow
//! reward* `∂F_i/∂λ_i`; agents fit linear critics to the shadow reward,
//! average them over a communication graph and take policy-gradient
//! steps. Exact dynamic-programming oracles for small problems live in
//! [`oracle`].

pub mod critic;
pub mod envs;
pub mod error;
pub mod graph;
pub mod mdp;
pub mod oracle;
pub mod policy;
pub mod rng;
pub mod trainer;
pub mod utility;

pub use critic::{CriticWeights, FeatureMap};
pub use error::{Error, Result};
pub use graph::{CommGraph, MixingMatrix, TopologyKind};
pub use mdp::{FactoredMdp, OccupancyMeasure, Scope, Trajectory};
pub use policy::{JointPolicy, SoftmaxPolicyParams};
pub use trainer::{Dsac, IterationMetrics, Schedule, ScheduleSpec, TrainerState};
pub use utility::{ShadowRewardTable, Support, UtilitySpec};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/occupancy.md")]
    struct Occupancy;
    #[doc = include_str!("../../../book/src/utilities.md")]
    struct Utilities;
    #[doc = include_str!("../../../book/src/policy-gradient.md")]
    struct PolicyGradient;
    #[doc = include_str!("../../../book/src/critics.md")]
    struct Critics;
    #[doc = include_str!("../../../book/src/consensus.md")]
    struct Consensus;
    #[doc = include_str!("../../../book/src/training.md")]
    struct Training;
    #[doc = include_str!("../../../book/src/schedules.md")]
    struct Schedules;
    #[doc = include_str!("../../../book/src/experiments.md")]
    struct Experiments;
}
