//! The `oracle-check` battery: exact identities evaluated on the
//! configured problem.

use nalgebra::DMatrix;
use rand::Rng;

use dsac::critic::{lipschitz_lw, FeatureMap};
use dsac::graph::{build_topology, consensus_error, metropolis_weights, mix};
use dsac::mdp::{empirical_local_occupancy, marginalize, rollout};
use dsac::oracle::{
    check_cap, exact_global_utility, exact_policy_gradient_with, exact_shadow_q, iterative_q_evaluation,
    truncated_occupancy, DEFAULT_FD_STEP, DEFAULT_MAX_STATES,
};
use dsac::rng::{label, stream};
use dsac::trainer::reference::{single_agent_actor_critic, ReferenceSettings};
use dsac::trainer::{Dsac, NoHooks, Schedule, ScheduleContext, ScheduleSpec};
use dsac::{FactoredMdp, JointPolicy, MixingMatrix, TopologyKind, UtilitySpec};

use crate::config::RunConfig;
use crate::CliError;

const GRADIENT_REL_TOL: f64 = 1e-4;
const GRADIENT_ABS_TOL: f64 = 1e-8;
const CONTRACTION_SLACK: f64 = 1e-10;
const ESTIMATOR_SEEDS: u64 = 20;
const ESTIMATOR_BATCHES: (usize, usize) = (100, 1600);
const ESTIMATOR_MAX_RATIO: f64 = 0.25;
const Q_TOL: f64 = 1e-9;
const REFERENCE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for CheckResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CheckOptions {
    /// Flip the sign of every shadow reward in the gradient identity, as a
    /// negative control.
    pub corrupt_shadow_sign: bool,
}

fn runtime(e: dsac::Error) -> CliError {
    CliError::from_oracle(e)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn run_checks(cfg: &RunConfig, opts: CheckOptions) -> Result<Vec<CheckResult>, CliError> {
    let env = cfg.build_env()?;
    check_cap(&env.mdp, DEFAULT_MAX_STATES).map_err(runtime)?;
    let utilities = cfg.utilities(&env);
    let features = cfg.features(&env.mdp)?;
    let mixing = cfg.mixing()?;
    let seed = cfg.run.seed;
    Ok(vec![
        gradient_identity(&env.mdp, &utilities, seed, opts)?,
        mixing_contraction(&mixing, cfg.topology.kind, seed)?,
        estimator_consistency(&env.mdp, seed)?,
        linear_reduction(&env.mdp, &features, seed)?,
    ])
}

fn test_policies(mdp: &FactoredMdp, seed: u64) -> Vec<JointPolicy> {
    let mut out = vec![JointPolicy::uniform(mdp)];
    for j in 0..2 {
        out.push(JointPolicy::random(mdp, 1.0, &mut stream(seed, &[label::INIT, j])));
    }
    out
}

/// Problems with more logits than this are checked along random
/// directions instead of coordinate by coordinate.
const MAX_FD_COORDS: usize = 64;
const FD_DIRECTIONS: usize = 16;

/// Central difference of the global utility along `dir`.
fn directional_fd(mdp: &FactoredMdp, policy: &JointPolicy, utilities: &[UtilitySpec], dir: &[f64]) -> Result<f64, CliError> {
    let shifted = |sign: f64| -> Result<f64, CliError> {
        let mut work = policy.clone();
        for (k, d) in dir.iter().enumerate() {
            *work.param_mut(k) += sign * DEFAULT_FD_STEP * d;
        }
        exact_global_utility(mdp, &work, utilities).map_err(runtime)
    };
    Ok((shifted(1.0)? - shifted(-1.0)?) / (2.0 * DEFAULT_FD_STEP))
}

fn gradient_identity(mdp: &FactoredMdp, utilities: &[UtilitySpec], seed: u64, opts: CheckOptions) -> Result<CheckResult, CliError> {
    let mut worst: f64 = 0.0;
    let mut passed = true;
    let mut directions = 0;
    for (j, policy) in test_policies(mdp, seed).into_iter().enumerate() {
        let exact = exact_policy_gradient_with(mdp, &policy, utilities, |t| {
            if opts.corrupt_shadow_sign {
                t.negated()
            } else {
                t
            }
        })
        .map_err(runtime)?;
        let n = exact.len();
        let dirs: Vec<Vec<f64>> = if n <= MAX_FD_COORDS {
            (0..n).map(|k| (0..n).map(|i| if i == k { 1.0 } else { 0.0 }).collect()).collect()
        } else {
            let mut rng = stream(seed, &[label::INIT, 20, j as u64]);
            (0..FD_DIRECTIONS)
                .map(|_| {
                    let v: Vec<f64> = (0..n).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
                    let len = norm(&v);
                    v.into_iter().map(|x| x / len).collect()
                })
                .collect()
        };
        let mut fd = Vec::with_capacity(dirs.len());
        let mut predicted = Vec::with_capacity(dirs.len());
        for d in &dirs {
            fd.push(directional_fd(mdp, &policy, utilities, d)?);
            predicted.push(d.iter().zip(&exact).map(|(a, b)| a * b).sum::<f64>());
        }
        let diff: Vec<f64> = predicted.iter().zip(&fd).map(|(a, b)| a - b).collect();
        let err = norm(&diff);
        passed &= err <= GRADIENT_REL_TOL * norm(&fd) + GRADIENT_ABS_TOL;
        worst = worst.max(err / norm(&fd).max(GRADIENT_ABS_TOL));
        directions += dirs.len();
    }
    Ok(CheckResult {
        name: "gradient-identity",
        passed,
        detail: format!(
            "3 policies, {directions} difference directions, worst relative error {worst:.2e} (tol {GRADIENT_REL_TOL:.0e})"
        ),
    })
}

fn mixing_contraction(mixing: &MixingMatrix, kind: TopologyKind, seed: u64) -> Result<CheckResult, CliError> {
    let mut rng = stream(seed, &[label::TOPOLOGY, 1]);
    let mut matrices = vec![mixing.clone()];
    // a few more draws of the same family
    for _ in 0..3 {
        let graph = build_topology(kind, mixing.n(), &mut rng).map_err(runtime)?;
        matrices.push(metropolis_weights(&graph).map_err(runtime)?);
    }
    let mut worst = f64::NEG_INFINITY;
    for m in &matrices {
        for _ in 0..100 {
            let w = DMatrix::from_fn(4, m.n(), |_, _| 2.0 * rng.random::<f64>() - 1.0);
            let before = consensus_error(&w).sqrt();
            for rounds in 1..=10 {
                let after = consensus_error(&mix(&w, m, rounds).map_err(runtime)?).sqrt();
                worst = worst.max(after - m.rho().powi(rounds as i32) * before);
            }
        }
    }
    Ok(CheckResult {
        name: "mixing-contraction",
        passed: worst <= CONTRACTION_SLACK,
        detail: format!(
            "{} matrices (rho {:.4}), m = 1..10, max excess over bound {worst:.1e}",
            matrices.len(),
            mixing.rho()
        ),
    })
}

fn estimator_consistency(mdp: &FactoredMdp, seed: u64) -> Result<CheckResult, CliError> {
    let gamma = mdp.discount();
    let horizon = ((1e-4f64.ln() / gamma.ln()).ceil() as usize).clamp(1, 200);
    let policy = JointPolicy::random(mdp, 1.0, &mut stream(seed, &[label::INIT, 9]));
    let truncated = truncated_occupancy(mdp, &policy, horizon).map_err(runtime)?;
    let exact = (0..mdp.n_agents())
        .map(|i| marginalize(mdp, &truncated, i))
        .collect::<dsac::Result<Vec<_>>>()
        .map_err(runtime)?;
    let mse = |batch: usize| -> Result<f64, CliError> {
        let mut total = 0.0;
        for s in 0..ESTIMATOR_SEEDS {
            let trajectories = (0..batch)
                .map(|b| rollout(mdp, &policy, horizon, &mut stream(seed, &[label::ROLLOUT, 1_000_000 + s, batch as u64, b as u64])))
                .collect::<dsac::Result<Vec<_>>>()
                .map_err(runtime)?;
            for (i, ex) in exact.iter().enumerate() {
                let est = empirical_local_occupancy(mdp, &trajectories, i, gamma).map_err(runtime)?;
                total += est.mass().iter().zip(ex.mass()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            }
        }
        Ok(total / ESTIMATOR_SEEDS as f64)
    };
    let (small, large) = ESTIMATOR_BATCHES;
    let ratio = mse(large)? / mse(small)?;
    Ok(CheckResult {
        name: "estimator-consistency",
        passed: ratio <= ESTIMATOR_MAX_RATIO,
        detail: format!(
            "H={horizon}, MSE(B={large}) / MSE(B={small}) = {ratio:.4} (1/B rate {:.4}, need <= {ESTIMATOR_MAX_RATIO})",
            small as f64 / large as f64
        ),
    })
}

fn linear_reduction(mdp: &FactoredMdp, features: &FeatureMap, seed: u64) -> Result<CheckResult, CliError> {
    let mut rng = stream(seed, &[label::INIT, 10]);
    let n = mdp.n_states() * mdp.n_actions();
    let reward: Vec<f64> = (0..n).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
    let policy = JointPolicy::random(mdp, 1.0, &mut rng);
    let shadow_q = exact_shadow_q(mdp, &policy, &reward).map_err(runtime)?;
    let classical = iterative_q_evaluation(mdp, &policy, &reward, 1e-13).map_err(runtime)?;
    let q_err = shadow_q
        .iter()
        .zip(&classical)
        .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
        .fold(0.0, f64::max);
    let mut passed = q_err <= Q_TOL;
    let mut detail = format!("shadow Q vs classical evaluation {q_err:.1e}");
    if mdp.n_agents() == 1 {
        let ref_err = reference_gap(mdp, features, &reward, seed)?;
        passed &= ref_err <= REFERENCE_TOL;
        detail.push_str(&format!(", trainer vs plain actor-critic {ref_err:.1e}"));
    }
    Ok(CheckResult {
        name: "linear-reduction",
        passed,
        detail,
    })
}

/// Largest iterate difference between the trainer with a linear utility
/// and the stand-alone single-agent actor-critic.
fn reference_gap(mdp: &FactoredMdp, features: &FeatureMap, reward: &[f64], seed: u64) -> Result<f64, CliError> {
    let settings = ReferenceSettings {
        iterations: 5,
        batch: 4,
        horizon: 10,
        eta_theta: 0.5,
        eta_w: 0.5 / lipschitz_lw(features, mdp.discount()),
    };
    let ctx = ScheduleContext {
        n_agents: 1,
        discount: mdp.discount(),
        feature_bound: features.bound(),
        mu_w: None,
    };
    let spec = ScheduleSpec::Manual {
        iterations: settings.iterations,
        batch: settings.batch,
        horizon: settings.horizon,
        eta_theta: settings.eta_theta,
        eta_w: settings.eta_w,
    };
    let schedule = Schedule::new(spec, ctx).map_err(runtime)?;
    let single = metropolis_weights(&build_topology(TopologyKind::Complete, 1, &mut stream(0, &[])).map_err(runtime)?).map_err(runtime)?;
    let utility = UtilitySpec::Linear { reward: reward.to_vec() };
    let dsac = Dsac::new(mdp.clone(), vec![utility], features.clone(), single, 1, schedule).map_err(runtime)?;
    let mut iterates = Vec::new();
    dsac.run(dsac.initial_state(seed), &mut NoHooks, |s, _| {
        iterates.push((s.policy.flatten(), s.critic(0)));
        Ok(())
    })
    .map_err(runtime)?;
    let reference = single_agent_actor_critic(mdp, reward, features, settings, seed).map_err(runtime)?;
    let mut worst: f64 = 0.0;
    for ((logits, critic), r) in iterates.iter().zip(&reference) {
        for (x, y) in logits.iter().zip(&r.logits).chain(critic.iter().zip(&r.critic)) {
            worst = worst.max((x - y).abs());
        }
    }
    Ok(worst)
}
