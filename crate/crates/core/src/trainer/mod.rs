//! The decentralized actor-critic loop.
//!
//! One iteration, in order:
//!
//! 1. sample `B_k` trajectories of length `H_k` under the current policy;
//! 2. every agent estimates its local occupancy `λ̂_i` and shadow reward
//!    `r̂_i = ∇F_i(λ̂_i)`;
//! 3. every agent takes one critic step from its current weights;
//! 4. the stacked critics go through `m` gossip rounds;
//! 5. every agent takes an actor step scored by its *mixed* critic.

mod checkpoint;
pub mod reference;
pub mod schedule;

use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use schedule::{AnalysisConstants, IterationParams, Schedule, ScheduleContext, ScheduleSpec};

use crate::critic::{batch_critic_direction, strong_convexity_modulus, CriticWeights, FeatureMap};
use crate::error::{Error, Result};
use crate::graph::{consensus_error, mix, MixingMatrix};
use crate::mdp::{empirical_local_occupancy, rollout, FactoredMdp, OccupancyMeasure, Trajectory};
use crate::oracle::{check_cap, exact_occupancy, exact_policy_gradient, DEFAULT_MAX_STATES};
use crate::policy::{JointPolicy, SoftmaxPolicyParams};
use crate::rng::{label, stream};
use crate::utility::{aggregate_global, ShadowRewardTable, UtilitySpec};

/// Add `scale · Σ_t γ^t Q_w(s^t, a^t) ∇ log π_i(a^t_i | s^t)` into `out`.
#[allow(clippy::too_many_arguments)]
pub fn accumulate_actor_gradient(
    mdp: &FactoredMdp,
    traj: &Trajectory,
    agent: &SoftmaxPolicyParams,
    w: &[f64],
    phi: &FeatureMap,
    discount: f64,
    scale: f64,
    out: &mut [f64],
) {
    let i = agent.agent();
    let mut probs = vec![0.0; agent.n_actions()];
    let mut g = scale;
    for &(s, a) in traj.steps() {
        let q = phi.dot(s, a, w);
        agent.accumulate_score(s, mdp.local_action(a, i), g * q, &mut probs, out);
        g *= discount;
    }
}

/// The per-trajectory actor gradient of one agent, shaped like its logits.
pub fn actor_gradient(
    mdp: &FactoredMdp,
    traj: &Trajectory,
    agent: &SoftmaxPolicyParams,
    w: &[f64],
    phi: &FeatureMap,
    discount: f64,
) -> Result<Vec<f64>> {
    if w.len() != phi.dim() {
        return Err(Error::Shape("critic and feature dimensions differ".into()));
    }
    if agent.n_states() != mdp.n_states() || agent.agent() >= mdp.n_agents() {
        return Err(Error::Shape("policy table does not match the MDP".into()));
    }
    let mut out = vec![0.0; agent.logits().len()];
    accumulate_actor_gradient(mdp, traj, agent, w, phi, discount, 1.0, &mut out);
    Ok(out)
}

/// Batch mean of [`actor_gradient`], reduced in trajectory order.
pub fn batch_actor_direction(
    mdp: &FactoredMdp,
    batch: &[Trajectory],
    agent: &SoftmaxPolicyParams,
    w: &[f64],
    phi: &FeatureMap,
    discount: f64,
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::Estimator("empty trajectory batch".into()));
    }
    if w.len() != phi.dim() {
        return Err(Error::Shape("critic and feature dimensions differ".into()));
    }
    let mut out = vec![0.0; agent.logits().len()];
    let scale = 1.0 / batch.len() as f64;
    for traj in batch {
        accumulate_actor_gradient(mdp, traj, agent, w, phi, discount, scale, &mut out);
    }
    Ok(out)
}

/// Policy, stacked critics (`d x N`, one column per agent) and position.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerState {
    pub policy: JointPolicy,
    pub critics: DMatrix<f64>,
    pub k: usize,
    pub seed: u64,
}

impl TrainerState {
    pub fn critic(&self, agent: usize) -> Vec<f64> {
        self.critics.column(agent).iter().copied().collect()
    }
}

/// What one iteration reports.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationMetrics {
    pub k: usize,
    /// `(1/N) Σ_i F_i(λ̂_i)`.
    pub global_utility: f64,
    pub utility: Vec<f64>,
    /// After mixing.
    pub consensus_error: f64,
    pub pre_mix_consensus_error: f64,
    /// `Σ_i ‖Δ̂_θ_i‖²`.
    pub grad_norm_sq: f64,
    /// `Σ_j η_θ^j ‖Δ̂_θ^j‖² / Σ_j η_θ^j` over the run so far.
    pub weighted_grad_norm_sq: f64,
    /// `⟨λ̂_i, c⟩ - C`, or NaN when agent `i` has no constraint.
    pub constraint_gap: Vec<f64>,
    /// Entropy of each agent's normalized empirical state marginal.
    pub entropy: Vec<f64>,
    /// `‖∇_θ F‖²` at the pre-update policy, when oracle metrics are on.
    pub exact_grad_norm_sq: Option<f64>,
    pub params: IterationParams,
    pub wall_ms: f64,
}

/// Observation points inside an iteration, for instrumentation.
pub trait IterationHooks {
    fn after_estimation(&mut self, _k: usize, _occupancies: &[OccupancyMeasure], _shadows: &[ShadowRewardTable]) {}
    fn before_critic_step(&mut self, _k: usize, _critics: &DMatrix<f64>) {}
    fn before_actor_step(&mut self, _k: usize, _critics: &DMatrix<f64>) {}
}

pub struct NoHooks;

impl IterationHooks for NoHooks {}

/// `μ_w` of the critic loss at the uniform policy, computed exactly.
pub fn initial_mu_w(mdp: &FactoredMdp, features: &FeatureMap) -> Result<f64> {
    let lambda = exact_occupancy(mdp, &JointPolicy::uniform(mdp))?;
    let mu = strong_convexity_modulus(features, &lambda);
    if mu > 0.0 {
        Ok(mu)
    } else {
        Err(Error::Config(format!(
            "feature covariance is singular at the initial policy (min eigenvalue {mu}); set mu_w explicitly"
        )))
    }
}

/// A configured training problem.
pub struct Dsac {
    mdp: FactoredMdp,
    utilities: Vec<UtilitySpec>,
    features: FeatureMap,
    mixing: MixingMatrix,
    rounds: usize,
    schedule: Schedule,
    critic_cap: Option<f64>,
    oracle_metrics: bool,
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl Dsac {
    pub fn new(
        mdp: FactoredMdp,
        utilities: Vec<UtilitySpec>,
        features: FeatureMap,
        mixing: MixingMatrix,
        rounds: usize,
        schedule: Schedule,
    ) -> Result<Self> {
        let n = mdp.n_agents();
        if utilities.len() != n {
            return Err(Error::Config(format!("{} utilities for {n} agents", utilities.len())));
        }
        for (i, u) in utilities.iter().enumerate() {
            u.validate(mdp.local_state_sizes()[i], mdp.local_action_sizes()[i])
                .map_err(|e| Error::Config(format!("utility of agent {i}: {e}")))?;
        }
        features.check_mdp(&mdp)?;
        if mixing.n() != n {
            return Err(Error::Config(format!("mixing matrix is for {} agents, MDP has {n}", mixing.n())));
        }
        if rounds == 0 {
            return Err(Error::Config("mixing rounds must be at least 1".into()));
        }
        Ok(Self {
            mdp,
            utilities,
            features,
            mixing,
            rounds,
            schedule,
            critic_cap: None,
            oracle_metrics: false,
            pool: None,
        })
    }

    /// Surface critic weights whose norm exceeds `cap`.
    pub fn with_critic_cap(mut self, cap: f64) -> Self {
        self.critic_cap = Some(cap);
        self
    }

    /// Also log the exact gradient norm each iteration; needs a small MDP.
    pub fn with_oracle_metrics(mut self, on: bool) -> Result<Self> {
        if on {
            check_cap(&self.mdp, DEFAULT_MAX_STATES)?;
        }
        self.oracle_metrics = on;
        Ok(self)
    }

    /// Sample rollouts on `threads` worker threads. Results do not depend
    /// on the thread count.
    pub fn with_threads(mut self, threads: usize) -> Result<Self> {
        self.pool = if threads > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Some(Arc::new(pool))
        } else {
            None
        };
        Ok(self)
    }

    pub fn mdp(&self) -> &FactoredMdp {
        &self.mdp
    }

    pub fn utilities(&self) -> &[UtilitySpec] {
        &self.utilities
    }

    pub fn features(&self) -> &FeatureMap {
        &self.features
    }

    pub fn mixing(&self) -> &MixingMatrix {
        &self.mixing
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    /// Uniform policy and zero critics.
    pub fn initial_state(&self, seed: u64) -> TrainerState {
        TrainerState {
            policy: JointPolicy::uniform(&self.mdp),
            critics: DMatrix::zeros(self.features.dim(), self.mdp.n_agents()),
            k: 0,
            seed,
        }
    }

    pub fn check_state(&self, state: &TrainerState) -> Result<()> {
        self.mdp.check_policy(&state.policy)?;
        if state.critics.nrows() != self.features.dim() || state.critics.ncols() != self.mdp.n_agents() {
            return Err(Error::Shape(format!(
                "critic stack is {}x{}, expected {}x{}",
                state.critics.nrows(),
                state.critics.ncols(),
                self.features.dim(),
                self.mdp.n_agents()
            )));
        }
        Ok(())
    }

    /// `B` rollouts of iteration `k`, each on its own random stream.
    pub fn sample_batch(&self, policy: &JointPolicy, seed: u64, k: usize, batch: usize, horizon: usize) -> Result<Vec<Trajectory>> {
        let one = |b: usize| {
            let mut rng = stream(seed, &[label::ROLLOUT, k as u64, b as u64]);
            rollout(&self.mdp, policy, horizon, &mut rng)
        };
        match &self.pool {
            Some(pool) => pool.install(|| (0..batch).into_par_iter().map(one).collect()),
            None => (0..batch).map(one).collect(),
        }
    }

    /// Run iteration `state.k` and advance the state.
    pub fn iteration(&self, state: &mut TrainerState, hooks: &mut dyn IterationHooks) -> Result<IterationMetrics> {
        let k = state.k;
        self.iteration_inner(state, hooks).map_err(|e| e.at_iteration(k))
    }

    fn iteration_inner(&self, state: &mut TrainerState, hooks: &mut dyn IterationHooks) -> Result<IterationMetrics> {
        let start = Instant::now();
        let k = state.k;
        self.check_state(state)?;
        let n = self.mdp.n_agents();
        let gamma = self.mdp.discount();
        let params = self.schedule.try_params(k)?;

        let exact_grad_norm_sq = if self.oracle_metrics {
            let g = exact_policy_gradient(&self.mdp, &state.policy, &self.utilities)?;
            Some(g.iter().map(|x| x * x).sum())
        } else {
            None
        };

        let batch = self.sample_batch(&state.policy, state.seed, k, params.batch, params.horizon)?;

        let mut occupancies = Vec::with_capacity(n);
        let mut shadows = Vec::with_capacity(n);
        let mut utility = Vec::with_capacity(n);
        let mut constraint_gap = Vec::with_capacity(n);
        let mut entropy = Vec::with_capacity(n);
        for (i, u) in self.utilities.iter().enumerate() {
            let lambda = empirical_local_occupancy(&self.mdp, &batch, i, gamma)?;
            shadows.push(u.shadow_reward(&lambda)?);
            utility.push(u.value(&lambda)?);
            constraint_gap.push(u.constraint_gap(&lambda).unwrap_or(f64::NAN));
            entropy.push(lambda.state_entropy());
            occupancies.push(lambda);
        }
        hooks.after_estimation(k, &occupancies, &shadows);

        hooks.before_critic_step(k, &state.critics);
        let mut stepped = state.critics.clone();
        for i in 0..n {
            let w = CriticWeights {
                agent: i,
                w: state.critics.column(i).iter().copied().collect(),
            };
            let dir = batch_critic_direction(&self.mdp, &batch, &shadows[i], i, &w, &self.features, gamma)?;
            for (j, g) in dir.iter().enumerate() {
                stepped[(j, i)] = w.w[j] - params.eta_w * g;
            }
        }

        let pre_mix_consensus_error = consensus_error(&stepped);
        let mixed = mix(&stepped, &self.mixing, self.rounds)?;
        let consensus = consensus_error(&mixed);
        if let Some(cap) = self.critic_cap {
            for i in 0..n {
                let norm = mixed.column(i).norm();
                if !(norm <= cap) {
                    return Err(Error::BoundViolation(format!("critic {i} norm {norm} exceeds cap {cap}")));
                }
            }
        }

        hooks.before_actor_step(k, &mixed);
        let mut directions = Vec::with_capacity(n);
        for i in 0..n {
            let w = mixed.column(i).iter().copied().collect::<Vec<_>>();
            directions.push(batch_actor_direction(
                &self.mdp,
                &batch,
                state.policy.agent(i),
                &w,
                &self.features,
                gamma,
            )?);
        }
        let grad_norm_sq: f64 = directions.iter().flatten().map(|x| x * x).sum();
        for (i, dir) in directions.iter().enumerate() {
            for (t, g) in state.policy.agent_mut(i).logits_mut().iter_mut().zip(dir) {
                *t += params.eta_theta * g;
            }
        }
        state.critics = mixed;
        state.k += 1;

        let values = [utility.as_slice(), &[consensus, grad_norm_sq]].concat();
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("non-finite metric".into()));
        }
        Ok(IterationMetrics {
            k,
            global_utility: aggregate_global(&utility)?,
            utility,
            consensus_error: consensus,
            pre_mix_consensus_error,
            grad_norm_sq,
            weighted_grad_norm_sq: grad_norm_sq,
            constraint_gap,
            entropy,
            exact_grad_norm_sq,
            params,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    }

    /// Run from `state` until the schedule's `T` iterations are done,
    /// calling `observer` after each one.
    pub fn run(
        &self,
        mut state: TrainerState,
        hooks: &mut dyn IterationHooks,
        mut observer: impl FnMut(&TrainerState, &IterationMetrics) -> Result<()>,
    ) -> Result<(TrainerState, Vec<IterationMetrics>)> {
        let mut metrics = Vec::with_capacity(self.schedule.iterations().saturating_sub(state.k));
        let mut weighted = 0.0;
        let mut weights = 0.0;
        while state.k < self.schedule.iterations() {
            let mut m = self.iteration(&mut state, hooks)?;
            weighted += m.params.eta_theta * m.grad_norm_sq;
            weights += m.params.eta_theta;
            m.weighted_grad_norm_sq = weighted / weights;
            observer(&state, &m).map_err(|e| e.at_iteration(m.k))?;
            metrics.push(m);
        }
        Ok((state, metrics))
    }

    pub fn train(&self, seed: u64) -> Result<(TrainerState, Vec<IterationMetrics>)> {
        self.run(self.initial_state(seed), &mut NoHooks, |_, _| Ok(()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critic::critic_gradient;
    use crate::graph::{build_topology, metropolis_weights, TopologyKind};
    use crate::oracle::{exact_occupancy, exact_shadow_q, finite_diff_gradient, global_shadow_reward};
    use crate::rng::stream;
    use crate::utility::Support;

    fn manual(iterations: usize, batch: usize, horizon: usize, eta_theta: f64, eta_w: f64) -> ScheduleSpec {
        ScheduleSpec::Manual {
            iterations,
            batch,
            horizon,
            eta_theta,
            eta_w,
        }
    }

    fn problem(seed: u64, n: usize, utilities: impl Fn(usize, usize) -> UtilitySpec, spec: ScheduleSpec, topology: TopologyKind) -> Dsac {
        let mdp = FactoredMdp::random(vec![2; n], vec![2; n], 0.8, &mut stream(seed, &[])).unwrap();
        let features = FeatureMap::one_hot(&mdp);
        let mixing = metropolis_weights(&build_topology(topology, n, &mut stream(seed, &[label::TOPOLOGY])).unwrap()).unwrap();
        let ctx = ScheduleContext {
            n_agents: n,
            discount: 0.8,
            feature_bound: features.bound(),
            mu_w: None,
        };
        let utilities = (0..n).map(|i| utilities(i, 2)).collect();
        Dsac::new(mdp, utilities, features, mixing, 1, Schedule::new(spec, ctx).unwrap()).unwrap()
    }

    fn linear(i: usize, ns: usize) -> UtilitySpec {
        UtilitySpec::Linear {
            reward: (0..ns * 2).map(|k| ((k + 3 * i) as f64).cos()).collect(),
        }
    }

    #[test]
    fn zero_critic_gives_zero_actor_gradient() {
        let mdp = FactoredMdp::random(vec![3], vec![2], 0.9, &mut stream(1, &[])).unwrap();
        let policy = JointPolicy::random(&mdp, 1.0, &mut stream(2, &[]));
        let traj = rollout(&mdp, &policy, 10, &mut stream(3, &[])).unwrap();
        let phi = FeatureMap::one_hot(&mdp);
        let g = actor_gradient(&mdp, &traj, policy.agent(0), &vec![0.0; phi.dim()], &phi, 0.9).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn constant_positive_critic_favours_the_action_taken() {
        let mdp = FactoredMdp::from_dense(vec![1], vec![2], &[1.0, 1.0], vec![1.0], 0.5).unwrap();
        let policy = JointPolicy::uniform(&mdp);
        let phi = FeatureMap::one_hot(&mdp);
        let traj = Trajectory::new(vec![(0, 1), (0, 1), (0, 0)]).unwrap();
        let g = actor_gradient(&mdp, &traj, policy.agent(0), &[1.0, 1.0], &phi, 0.5).unwrap();
        // weights 1 + 0.5 on action 1, 0.25 on action 0, each scaled by ±1/2
        assert!((g[1] - 0.625).abs() < 1e-15);
        assert!((g[0] + 0.625).abs() < 1e-15);
    }

    #[test]
    fn population_actor_direction_matches_finite_differences() {
        // exact critic fit plus exact λ weighting, linear utilities
        for seed in 0..5 {
            let mdp = FactoredMdp::random(vec![2, 2], vec![2, 2], 0.8, &mut stream(10 + seed, &[])).unwrap();
            let policy = JointPolicy::random(&mdp, 1.0, &mut stream(20 + seed, &[]));
            let utilities: Vec<_> = (0..2).map(|i| linear(i, 2)).collect();
            let shadows: Vec<_> = (0..2)
                .map(|i| {
                    let UtilitySpec::Linear { reward } = &utilities[i] else { unreachable!() };
                    ShadowRewardTable::new(2, 2, reward.clone()).unwrap()
                })
                .collect();
            let q = exact_shadow_q(&mdp, &policy, &global_shadow_reward(&mdp, &shadows)).unwrap();
            let lambda = exact_occupancy(&mdp, &policy).unwrap();
            let phi = FeatureMap::one_hot(&mdp);
            let mut pop = Vec::new();
            for i in 0..2 {
                let agent = policy.agent(i);
                let mut g = vec![0.0; agent.logits().len()];
                let mut probs = vec![0.0; 2];
                for s in 0..mdp.n_states() {
                    for a in 0..mdp.n_actions() {
                        let qw = phi.dot(s, a, &q);
                        agent.accumulate_score(s, mdp.local_action(a, i), lambda.get(s, a) * qw, &mut probs, &mut g);
                    }
                }
                pop.extend(g);
            }
            let fd = finite_diff_gradient(&mdp, &policy, &utilities, 1e-5).unwrap();
            let norm = fd.iter().map(|x| x * x).sum::<f64>().sqrt();
            let err = pop.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(err <= 1e-4 * norm.max(1e-12), "seed {seed}: {err} vs {norm}");
        }
    }

    #[test]
    fn zero_iterations_return_the_initial_state() {
        let dsac = problem(1, 2, linear, manual(0, 3, 4, 0.1, 0.1), TopologyKind::Complete);
        let (state, metrics) = dsac.train(9).unwrap();
        assert!(metrics.is_empty());
        assert_eq!(state, dsac.initial_state(9));
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let dsac = problem(2, 2, linear, manual(10, 8, 6, 0.5, 0.1), TopologyKind::Ring);
        let (a, ma) = dsac.train(5).unwrap();
        let (b, mb) = dsac.train(5).unwrap();
        assert_eq!(a, b);
        // NaN gaps compare unequal, so compare the printed form
        let strip = |m: &[IterationMetrics]| {
            let v: Vec<_> = m.iter().map(|m| IterationMetrics { wall_ms: 0.0, ..m.clone() }).collect();
            format!("{v:?}")
        };
        assert_eq!(strip(&ma), strip(&mb));
        let (c, _) = dsac.train(6).unwrap();
        assert_ne!(a.policy, c.policy);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let dsac = problem(3, 2, linear, manual(5, 16, 6, 0.5, 0.1), TopologyKind::Complete);
        let (seq, _) = dsac.train(1).unwrap();
        let dsac = dsac.with_threads(4).unwrap();
        let (par, _) = dsac.train(1).unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn zero_utilities_leave_policy_and_decay_critics() {
        let zero = |_: usize, ns: usize| UtilitySpec::Linear { reward: vec![0.0; ns * 2] };
        let dsac = problem(4, 2, zero, manual(3, 4, 5, 1.0, 0.1), TopologyKind::Complete);
        let mut state = dsac.initial_state(0);
        state.critics = DMatrix::from_fn(state.critics.nrows(), 2, |r, _| 1.0 + r as f64);
        let before = state.critics.clone();
        let mut policy0 = state.policy.clone();
        dsac.iteration(&mut state, &mut NoHooks).unwrap();
        // the critic moves toward zero targets, nothing else moves
        assert!(state.critics.norm() < before.norm());
        for (a, b) in state.critics.iter().zip(before.iter()) {
            assert!(a.abs() <= b.abs());
        }
        // the actor is scored by a nonzero critic, so only check a zero critic
        let dsac = problem(4, 2, zero, manual(3, 4, 5, 1.0, 0.1), TopologyKind::Complete);
        let mut state = dsac.initial_state(0);
        dsac.iteration(&mut state, &mut NoHooks).unwrap();
        assert_eq!(state.policy, policy0);
        assert!(state.critics.iter().all(|&x| x == 0.0));
        policy0 = state.policy.clone();
        dsac.iteration(&mut state, &mut NoHooks).unwrap();
        assert_eq!(state.policy, policy0);
    }

    #[derive(Default)]
    struct Recorder {
        pre_critic: Vec<DMatrix<f64>>,
        pre_actor: Vec<DMatrix<f64>>,
        shadows: Vec<Vec<ShadowRewardTable>>,
    }

    impl IterationHooks for Recorder {
        fn after_estimation(&mut self, _: usize, _: &[OccupancyMeasure], shadows: &[ShadowRewardTable]) {
            self.shadows.push(shadows.to_vec());
        }
        fn before_critic_step(&mut self, _: usize, critics: &DMatrix<f64>) {
            self.pre_critic.push(critics.clone());
        }
        fn before_actor_step(&mut self, _: usize, critics: &DMatrix<f64>) {
            self.pre_actor.push(critics.clone());
        }
    }

    #[test]
    fn order_fidelity() {
        let entropy = |_: usize, _: usize| UtilitySpec::Entropy {
            support: Support::State,
            smoothing: 1e-8,
            normalized: false,
        };
        let dsac = problem(5, 3, entropy, manual(4, 6, 5, 0.5, 0.2), TopologyKind::Ring);
        let mut state = dsac.initial_state(3);
        let mut rec = Recorder::default();
        for _ in 0..4 {
            let w_k = state.critics.clone();
            let policy_k = state.policy.clone();
            let m = dsac.iteration(&mut state, &mut rec).unwrap();
            let k = m.k;
            assert_eq!(rec.pre_critic[k], w_k);
            // the actor sees the mixed critic, which is what the state keeps
            assert_eq!(rec.pre_actor[k], state.critics);

            // rebuild the critic step from w^k and r̂^k
            let batch = dsac.sample_batch(&policy_k, 3, k, 6, 5).unwrap();
            let mut stepped = w_k.clone();
            for i in 0..3 {
                let w = CriticWeights { agent: i, w: w_k.column(i).iter().copied().collect() };
                let mut dir = vec![0.0; w.w.len()];
                for t in &batch {
                    let g = critic_gradient(dsac.mdp(), t, &rec.shadows[k][i], i, &w, dsac.features(), 0.8).unwrap();
                    for (d, x) in dir.iter_mut().zip(g) {
                        *d += x / 6.0;
                    }
                }
                for (j, g) in dir.iter().enumerate() {
                    stepped[(j, i)] -= 0.2 * g;
                }
            }
            let mixed = mix(&stepped, dsac.mixing(), 1).unwrap();
            assert!((mixed - &state.critics).amax() < 1e-12);

            // the actor used the mixed critic
            for i in 0..3 {
                let w: Vec<f64> = state.critics.column(i).iter().copied().collect();
                let dir = batch_actor_direction(dsac.mdp(), &batch, policy_k.agent(i), &w, dsac.features(), 0.8).unwrap();
                for ((new, old), g) in state.policy.agent(i).logits().iter().zip(policy_k.agent(i).logits()).zip(dir) {
                    assert!((new - old - 0.5 * g).abs() < 1e-12);
                }
            }
            assert!(m.consensus_error <= dsac.mixing().rho().powi(2) * m.pre_mix_consensus_error + 1e-15);
        }
    }

    #[test]
    fn complete_graph_mixing_equalizes_columns() {
        let dsac = problem(6, 3, linear, manual(1, 5, 5, 0.3, 0.2), TopologyKind::Complete);
        let mut rec = Recorder::default();
        let mut state = dsac.initial_state(8);
        dsac.iteration(&mut state, &mut rec).unwrap();
        let w = &rec.pre_actor[0];
        for i in 1..3 {
            assert!((w.column(i) - w.column(0)).amax() < 1e-15);
        }
    }

    #[test]
    fn critic_cap_violation_is_reported_with_iteration() {
        let dsac = problem(7, 2, linear, manual(5, 5, 5, 0.3, 0.2), TopologyKind::Complete).with_critic_cap(1e-9);
        let err = dsac.train(1).unwrap_err();
        assert!(matches!(err, Error::Iteration { k: 0, .. }));
        assert!(matches!(err.root(), Error::BoundViolation(_)));
    }

    #[test]
    fn exact_grad_norm_is_logged_on_request() {
        let dsac = problem(8, 2, linear, manual(2, 5, 5, 0.3, 0.2), TopologyKind::Complete)
            .with_oracle_metrics(true)
            .unwrap();
        let (_, metrics) = dsac.train(1).unwrap();
        let g = exact_policy_gradient(dsac.mdp(), &dsac.initial_state(1).policy, dsac.utilities()).unwrap();
        let expect: f64 = g.iter().map(|x| x * x).sum();
        assert_eq!(metrics[0].exact_grad_norm_sq, Some(expect));
        assert!(metrics.iter().all(|m| m.consensus_error >= 0.0));
    }
}
