//! Independent reference paths used to cross-check [`Dsac`].

use nalgebra::DMatrix;

use super::{batch_actor_direction, Dsac, TrainerState};
use crate::critic::{batch_critic_direction, CriticWeights, FeatureMap};
use crate::error::{Error, Result};
use crate::mdp::{empirical_local_occupancy, rollout, FactoredMdp};
use crate::policy::{JointPolicy, SoftmaxPolicyParams};
use crate::rng::{label, stream};

/// The centralized variant: after the critic step every agent's weights
/// are replaced by their exact average. Returns `θ^1, ..., θ^T`.
pub fn centralized_policies(dsac: &Dsac, seed: u64, iterations: usize) -> Result<Vec<JointPolicy>> {
    let mdp = dsac.mdp();
    let n = mdp.n_agents();
    let gamma = mdp.discount();
    let mut state: TrainerState = dsac.initial_state(seed);
    let mut out = Vec::with_capacity(iterations);
    for k in 0..iterations {
        let params = dsac.schedule().try_params(k)?;
        let batch = dsac.sample_batch(&state.policy, seed, k, params.batch, params.horizon)?;
        let d = dsac.features().dim();
        let mut mean = vec![0.0; d];
        for (i, u) in dsac.utilities().iter().enumerate() {
            let lambda = empirical_local_occupancy(mdp, &batch, i, gamma)?;
            let shadow = u.shadow_reward(&lambda)?;
            let w = CriticWeights {
                agent: i,
                w: state.critics.column(i).iter().copied().collect(),
            };
            let g = batch_critic_direction(mdp, &batch, &shadow, i, &w, dsac.features(), gamma)?;
            for ((m, wj), gj) in mean.iter_mut().zip(&w.w).zip(g) {
                *m += (wj - params.eta_w * gj) / n as f64;
            }
        }
        state.critics = DMatrix::from_fn(d, n, |r, _| mean[r]);
        let directions = (0..n)
            .map(|i| batch_actor_direction(mdp, &batch, state.policy.agent(i), &mean, dsac.features(), gamma))
            .collect::<Result<Vec<_>>>()?;
        for (i, dir) in directions.iter().enumerate() {
            for (t, g) in state.policy.agent_mut(i).logits_mut().iter_mut().zip(dir) {
                *t += params.eta_theta * g;
            }
        }
        out.push(state.policy.clone());
    }
    Ok(out)
}

/// Settings of [`single_agent_actor_critic`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSettings {
    pub iterations: usize,
    pub batch: usize,
    pub horizon: usize,
    pub eta_theta: f64,
    pub eta_w: f64,
}

/// Logits and critic weights after one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceIterate {
    pub logits: Vec<f64>,
    pub critic: Vec<f64>,
}

fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = row.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

/// Plain single-agent actor-critic with Monte-Carlo return targets on a
/// fixed reward table, written without the multi-agent machinery.
/// Trajectories come from the same random streams as [`Dsac`].
pub fn single_agent_actor_critic(
    mdp: &FactoredMdp,
    reward: &[f64],
    features: &FeatureMap,
    settings: ReferenceSettings,
    seed: u64,
) -> Result<Vec<ReferenceIterate>> {
    if mdp.n_agents() != 1 {
        return Err(Error::Config("the single-agent reference needs exactly one agent".into()));
    }
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    if reward.len() != ns * na {
        return Err(Error::Shape("reward table does not match the MDP".into()));
    }
    let gamma = mdp.discount();
    let mut logits = vec![0.0; ns * na];
    let mut w = vec![0.0; features.dim()];
    let mut out = Vec::with_capacity(settings.iterations);
    for k in 0..settings.iterations {
        let policy = JointPolicy::new(vec![SoftmaxPolicyParams::from_logits(0, ns, na, logits.clone())?])?;
        let batch = (0..settings.batch)
            .map(|b| rollout(mdp, &policy, settings.horizon, &mut stream(seed, &[label::ROLLOUT, k as u64, b as u64])))
            .collect::<Result<Vec<_>>>()?;
        let inv_b = 1.0 / settings.batch as f64;

        let mut critic_grad = vec![0.0; w.len()];
        for traj in &batch {
            let steps = traj.steps();
            let mut returns = vec![0.0; steps.len()];
            let mut tail = 0.0;
            for t in (0..steps.len()).rev() {
                let (s, a) = steps[t];
                tail = reward[s * na + a] + gamma * tail;
                returns[t] = tail;
            }
            for (t, &(s, a)) in steps.iter().enumerate() {
                let phi = features.evaluate(s, a);
                let q: f64 = phi.iter().zip(&w).map(|(x, y)| x * y).sum();
                let c = inv_b * gamma.powi(t as i32) * (q - returns[t]);
                for (g, x) in critic_grad.iter_mut().zip(&phi) {
                    *g += c * x;
                }
            }
        }
        for (wj, g) in w.iter_mut().zip(&critic_grad) {
            *wj -= settings.eta_w * g;
        }

        let mut actor_grad = vec![0.0; ns * na];
        for traj in &batch {
            for (t, &(s, a)) in traj.steps().iter().enumerate() {
                let phi = features.evaluate(s, a);
                let q: f64 = phi.iter().zip(&w).map(|(x, y)| x * y).sum();
                let probs = softmax(&logits[s * na..(s + 1) * na]);
                let c = inv_b * gamma.powi(t as i32) * q;
                for (b, p) in probs.iter().enumerate() {
                    let indicator = if b == a { 1.0 } else { 0.0 };
                    actor_grad[s * na + b] += c * (indicator - p);
                }
            }
        }
        for (l, g) in logits.iter_mut().zip(&actor_grad) {
            *l += settings.eta_theta * g;
        }
        out.push(ReferenceIterate {
            logits: logits.clone(),
            critic: w.clone(),
        });
    }
    Ok(out)
}
