//! Exact dynamic-programming ground truth for small MDPs.
//!
//! Everything here is computed in closed form with dense linear solves, and
//! is what the stochastic estimators elsewhere in the crate are tested
//! against.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mdp::{marginalize, FactoredMdp, OccupancyMeasure, Scope};
use crate::policy::JointPolicy;
use crate::utility::{aggregate_global, ShadowRewardTable, UtilitySpec};

/// Largest global state space the oracle will factor by default.
pub const DEFAULT_MAX_STATES: usize = 5000;

/// Default central-difference step for [`finite_diff_gradient`].
pub const DEFAULT_FD_STEP: f64 = 1e-5;

const RESIDUAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactSolveReport {
    pub residual_norm: f64,
    pub matrix_dim: usize,
}

/// Fail with [`Error::Oracle`] if `mdp` exceeds `max_states`.
pub fn check_cap(mdp: &FactoredMdp, max_states: usize) -> Result<()> {
    if mdp.n_states() > max_states {
        return Err(Error::Oracle(format!(
            "{} global states exceed the oracle cap of {max_states}",
            mdp.n_states()
        )));
    }
    Ok(())
}

/// The state-to-state kernel `P_π(s, s') = Σ_a π(a|s) P_a(s, s')` and the
/// joint policy rows it was built from.
fn policy_kernel(mdp: &FactoredMdp, policy: &JointPolicy) -> Result<(DMatrix<f64>, Vec<Vec<f64>>)> {
    mdp.check_policy(policy)?;
    let n = mdp.n_states();
    let mut p = DMatrix::zeros(n, n);
    let mut rows = Vec::with_capacity(n);
    for s in 0..n {
        let pi = policy.joint_probs(mdp, s)?;
        for (a, &pa) in pi.iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            for (sp, q) in mdp.transitions(s, a) {
                p[(s, sp)] += pa * q;
            }
        }
        rows.push(pi);
    }
    Ok((p, rows))
}

fn solve(a: DMatrix<f64>, b: DVector<f64>) -> Result<(DVector<f64>, ExactSolveReport)> {
    let dim = a.nrows();
    let x = a
        .clone()
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Oracle("singular linear system".into()))?;
    let residual_norm = (&a * &x - &b).amax();
    if !(residual_norm <= RESIDUAL_TOL) {
        return Err(Error::Oracle(format!("solve residual {residual_norm} exceeds {RESIDUAL_TOL}")));
    }
    Ok((
        x,
        ExactSolveReport {
            residual_norm,
            matrix_dim: dim,
        },
    ))
}

/// Discounted state visitation `ν` solving `(I - γ P_πᵀ) ν = ξ`.
pub fn exact_state_visitation(mdp: &FactoredMdp, policy: &JointPolicy) -> Result<(Vec<f64>, ExactSolveReport)> {
    check_cap(mdp, DEFAULT_MAX_STATES)?;
    let (p, _) = policy_kernel(mdp, policy)?;
    let n = mdp.n_states();
    let a = DMatrix::identity(n, n) - p.transpose() * mdp.discount();
    let (nu, report) = solve(a, DVector::from_column_slice(mdp.initial()))?;
    Ok((nu.iter().copied().collect(), report))
}

/// The exact global occupancy measure `λ(s, a) = ν(s) π(a|s)`.
pub fn exact_occupancy(mdp: &FactoredMdp, policy: &JointPolicy) -> Result<OccupancyMeasure> {
    exact_occupancy_with_report(mdp, policy).map(|(l, _)| l)
}

pub fn exact_occupancy_with_report(
    mdp: &FactoredMdp,
    policy: &JointPolicy,
) -> Result<(OccupancyMeasure, ExactSolveReport)> {
    let (nu, report) = exact_state_visitation(mdp, policy)?;
    let na = mdp.n_actions();
    let mut mass = vec![0.0; mdp.n_states() * na];
    for (s, &v) in nu.iter().enumerate() {
        let pi = policy.joint_probs(mdp, s)?;
        for (a, p) in pi.into_iter().enumerate() {
            // clamp round-off below zero
            mass[s * na + a] = (v * p).max(0.0);
        }
    }
    let lambda = OccupancyMeasure::new(Scope::Global, mdp.n_states(), na, mass, mdp.discount())?;
    Ok((lambda, report))
}

/// Every agent's exact local occupancy measure.
pub fn exact_local_occupancies(mdp: &FactoredMdp, policy: &JointPolicy) -> Result<Vec<OccupancyMeasure>> {
    let global = exact_occupancy(mdp, policy)?;
    (0..mdp.n_agents()).map(|i| marginalize(mdp, &global, i)).collect()
}

/// Exact `Q(s, a) = r(s, a) + γ Σ_{s'} P_a(s, s') Σ_{a'} π(a'|s') Q(s', a')`
/// for a global reward table laid out `[s][a]`.
///
/// Solved through the state values `V = (I - γ P_π)^{-1} r_π`, then
/// `Q = r + γ P V`.
pub fn exact_shadow_q(mdp: &FactoredMdp, policy: &JointPolicy, reward: &[f64]) -> Result<Vec<f64>> {
    exact_shadow_q_with_report(mdp, policy, reward).map(|(q, _)| q)
}

pub fn exact_shadow_q_with_report(
    mdp: &FactoredMdp,
    policy: &JointPolicy,
    reward: &[f64],
) -> Result<(Vec<f64>, ExactSolveReport)> {
    check_cap(mdp, DEFAULT_MAX_STATES)?;
    let (n, na) = (mdp.n_states(), mdp.n_actions());
    if reward.len() != n * na {
        return Err(Error::Shape(format!("reward table has {} entries, expected {}", reward.len(), n * na)));
    }
    if reward.iter().any(|r| !r.is_finite()) {
        return Err(Error::Domain("reward must be finite".into()));
    }
    let (p, pi) = policy_kernel(mdp, policy)?;
    let r_pi = DVector::from_iterator(
        n,
        (0..n).map(|s| pi[s].iter().zip(&reward[s * na..(s + 1) * na]).map(|(p, r)| p * r).sum()),
    );
    let a = DMatrix::identity(n, n) - p * mdp.discount();
    let (v, report) = solve(a, r_pi)?;
    let mut q = reward.to_vec();
    for s in 0..n {
        for a in 0..na {
            let ev: f64 = mdp.transitions(s, a).map(|(sp, pr)| pr * v[sp]).sum();
            q[s * na + a] += mdp.discount() * ev;
        }
    }
    Ok((q, report))
}

/// Lift agent `agent`'s local table onto the global `[s][a]` grid.
pub fn lift_local(mdp: &FactoredMdp, agent: usize, table: &ShadowRewardTable) -> Vec<f64> {
    let na = mdp.n_actions();
    let mut out = vec![0.0; mdp.n_states() * na];
    for s in 0..mdp.n_states() {
        let si = mdp.local_state(s, agent);
        for a in 0..na {
            out[s * na + a] = table.get(si, mdp.local_action(a, agent));
        }
    }
    out
}

/// `r(s, a) = (1/N) Σ_i r_i(s_i, a_i)`.
pub fn global_shadow_reward(mdp: &FactoredMdp, locals: &[ShadowRewardTable]) -> Vec<f64> {
    let n = locals.len() as f64;
    let mut out = vec![0.0; mdp.n_states() * mdp.n_actions()];
    for (i, table) in locals.iter().enumerate() {
        for (o, v) in out.iter_mut().zip(lift_local(mdp, i, table)) {
            *o += v / n;
        }
    }
    out
}

fn check_utilities(mdp: &FactoredMdp, utilities: &[UtilitySpec]) -> Result<()> {
    if utilities.len() != mdp.n_agents() {
        return Err(Error::Config(format!(
            "{} utilities for {} agents",
            utilities.len(),
            mdp.n_agents()
        )));
    }
    Ok(())
}

/// `R(π_θ) = (1/N) Σ_i F_i(λ_i)` from the exact occupancy measure.
pub fn exact_global_utility(mdp: &FactoredMdp, policy: &JointPolicy, utilities: &[UtilitySpec]) -> Result<f64> {
    check_utilities(mdp, utilities)?;
    let locals = exact_local_occupancies(mdp, policy)?;
    let values = utilities
        .iter()
        .zip(&locals)
        .map(|(u, l)| u.value(l))
        .collect::<Result<Vec<_>>>()?;
    aggregate_global(&values)
}

/// Exact shadow reward tables, one per agent, at the current policy.
pub fn exact_shadow_rewards(
    mdp: &FactoredMdp,
    policy: &JointPolicy,
    utilities: &[UtilitySpec],
) -> Result<Vec<ShadowRewardTable>> {
    check_utilities(mdp, utilities)?;
    exact_local_occupancies(mdp, policy)?
        .iter()
        .zip(utilities)
        .map(|(l, u)| u.shadow_reward(l))
        .collect()
}

/// `Σ_{s,a} λ(s,a) Q(s,a) ∇_θ log π(a|s)` for a given global Q table,
/// flattened agent-major like [`JointPolicy::flatten`].
pub fn occupancy_weighted_gradient(
    mdp: &FactoredMdp,
    policy: &JointPolicy,
    lambda: &OccupancyMeasure,
    q: &[f64],
) -> Result<Vec<f64>> {
    let na = mdp.n_actions();
    let mut out = Vec::with_capacity(policy.n_params());
    for (i, agent) in policy.agents().iter().enumerate() {
        let ai = agent.n_actions();
        let mut grad = vec![0.0; mdp.n_states() * ai];
        for s in 0..mdp.n_states() {
            let probs = agent.action_probs(s)?;
            let row = &mut grad[s * ai..(s + 1) * ai];
            for a in 0..na {
                let w = lambda.get(s, a) * q[s * na + a];
                if w == 0.0 {
                    continue;
                }
                for (b, g) in row.iter_mut().enumerate() {
                    *g -= w * probs[b];
                }
                row[mdp.local_action(a, i)] += w;
            }
        }
        out.extend(grad);
    }
    Ok(out)
}

/// The policy gradient assembled from exact occupancy, exact shadow reward
/// and exact shadow Q.
pub fn exact_policy_gradient(mdp: &FactoredMdp, policy: &JointPolicy, utilities: &[UtilitySpec]) -> Result<Vec<f64>> {
    exact_policy_gradient_with(mdp, policy, utilities, |t| t)
}

/// Like [`exact_policy_gradient`] but passes every local shadow reward
/// through `tamper` first. Used for negative controls.
pub fn exact_policy_gradient_with(
    mdp: &FactoredMdp,
    policy: &JointPolicy,
    utilities: &[UtilitySpec],
    tamper: impl Fn(ShadowRewardTable) -> ShadowRewardTable,
) -> Result<Vec<f64>> {
    check_utilities(mdp, utilities)?;
    let global = exact_occupancy(mdp, policy)?;
    let shadows = (0..mdp.n_agents())
        .map(|i| {
            let local = marginalize(mdp, &global, i)?;
            utilities[i].shadow_reward(&local).map(&tamper)
        })
        .collect::<Result<Vec<_>>>()?;
    let r = global_shadow_reward(mdp, &shadows);
    let q = exact_shadow_q(mdp, policy, &r)?;
    occupancy_weighted_gradient(mdp, policy, &global, &q)
}

/// Central differences of [`exact_global_utility`] in every logit.
pub fn finite_diff_gradient(
    mdp: &FactoredMdp,
    policy: &JointPolicy,
    utilities: &[UtilitySpec],
    h: f64,
) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(Error::Config(format!("finite-difference step {h} must be > 0")));
    }
    let mut work = policy.clone();
    (0..policy.n_params())
        .map(|k| {
            let x = *work.param_mut(k);
            *work.param_mut(k) = x + h;
            let plus = exact_global_utility(mdp, &work, utilities)?;
            *work.param_mut(k) = x - h;
            let minus = exact_global_utility(mdp, &work, utilities)?;
            *work.param_mut(k) = x;
            Ok((plus - minus) / (2.0 * h))
        })
        .collect()
}

/// Classical action values by fixed-point iteration of the Bellman
/// evaluation operator directly on `(s, a)`; an independent route to
/// [`exact_shadow_q`] for linear utilities.
pub fn iterative_q_evaluation(mdp: &FactoredMdp, policy: &JointPolicy, reward: &[f64], tol: f64) -> Result<Vec<f64>> {
    let (n, na) = (mdp.n_states(), mdp.n_actions());
    if reward.len() != n * na {
        return Err(Error::Shape("reward table does not match the MDP".into()));
    }
    let pi = (0..n).map(|s| policy.joint_probs(mdp, s)).collect::<Result<Vec<_>>>()?;
    let mut q = reward.to_vec();
    let gamma = mdp.discount();
    let max_iter = ((tol.ln() / gamma.ln()).ceil() as usize).saturating_mul(4).max(100);
    for _ in 0..max_iter {
        let v: Vec<f64> = (0..n)
            .map(|s| pi[s].iter().zip(&q[s * na..(s + 1) * na]).map(|(p, x)| p * x).sum())
            .collect();
        let mut delta: f64 = 0.0;
        for s in 0..n {
            for a in 0..na {
                let next = reward[s * na + a] + gamma * mdp.transitions(s, a).map(|(sp, p)| p * v[sp]).sum::<f64>();
                delta = delta.max((next - q[s * na + a]).abs());
                q[s * na + a] = next;
            }
        }
        if delta <= tol * (1.0 - gamma) {
            return Ok(q);
        }
    }
    Err(Error::Oracle("iterative evaluation did not converge".into()))
}

/// `Σ_{t=0}^{H} γ^t P(s^t = s, a^t = a)` by propagating the state
/// distribution forward; equals the expectation of an H-truncated empirical
/// measure.
pub fn truncated_occupancy(mdp: &FactoredMdp, policy: &JointPolicy, horizon: usize) -> Result<OccupancyMeasure> {
    mdp.check_policy(policy)?;
    let (n, na) = (mdp.n_states(), mdp.n_actions());
    let pi = (0..n).map(|s| policy.joint_probs(mdp, s)).collect::<Result<Vec<_>>>()?;
    let mut dist = mdp.initial().to_vec();
    let mut mass = vec![0.0; n * na];
    let mut g = 1.0;
    for t in 0..=horizon {
        let mut next = vec![0.0; n];
        for s in 0..n {
            if dist[s] == 0.0 {
                continue;
            }
            for a in 0..na {
                let p = dist[s] * pi[s][a];
                mass[s * na + a] += g * p;
                if t < horizon && p > 0.0 {
                    for (sp, q) in mdp.transitions(s, a) {
                        next[sp] += p * q;
                    }
                }
            }
        }
        dist = next;
        g *= mdp.discount();
    }
    OccupancyMeasure::new(Scope::Global, n, na, mass, mdp.discount())
}
