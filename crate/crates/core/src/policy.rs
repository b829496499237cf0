//! Factorized tabular softmax policies.
//!
//! Each agent holds a logit table over `(global state, local action)`, so the
//! joint policy is the product `π_θ(a|s) = Π_i π_i(a_i|s)`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::mdp::{encode, FactoredMdp};
use crate::rng::{categorical, StreamRng};

/// Bound on the Euclidean norm of a tabular softmax score vector.
pub const SCORE_BOUND: f64 = std::f64::consts::SQRT_2;

/// One agent's softmax logits, row-major `[global state][local action]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxPolicyParams {
    agent: usize,
    n_states: usize,
    n_actions: usize,
    logits: Vec<f64>,
}

impl SoftmaxPolicyParams {
    pub fn zeros(agent: usize, n_states: usize, n_actions: usize) -> Self {
        Self {
            agent,
            n_states,
            n_actions,
            logits: vec![0.0; n_states * n_actions],
        }
    }

    pub fn from_logits(agent: usize, n_states: usize, n_actions: usize, logits: Vec<f64>) -> Result<Self> {
        if logits.len() != n_states * n_actions {
            return Err(Error::Shape(format!(
                "logit table has {} entries, expected {n_states}x{n_actions}",
                logits.len()
            )));
        }
        if logits.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("logits must be finite".into()));
        }
        Ok(Self {
            agent,
            n_states,
            n_actions,
            logits,
        })
    }

    pub fn agent(&self) -> usize {
        self.agent
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut [f64] {
        &mut self.logits
    }

    fn check_state(&self, s: usize) -> Result<()> {
        if s >= self.n_states {
            return Err(Error::Index(format!("state {s} out of range ({} states)", self.n_states)));
        }
        Ok(())
    }

    /// Softmax of the logit row of state `s`.
    pub fn action_probs(&self, s: usize) -> Result<Vec<f64>> {
        self.check_state(s)?;
        let mut out = vec![0.0; self.n_actions];
        self.action_probs_into(s, &mut out);
        Ok(out)
    }

    pub(crate) fn action_probs_into(&self, s: usize, out: &mut [f64]) {
        let row = &self.logits[s * self.n_actions..(s + 1) * self.n_actions];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (o, &x) in out.iter_mut().zip(row) {
            *o = (x - max).exp();
            total += *o;
        }
        out.iter_mut().for_each(|o| *o /= total);
    }

    /// `∇_θ log π(a_i|s)`: nonzero only on row `s`, returned as that row.
    pub fn score(&self, s: usize, a_i: usize) -> Result<Vec<f64>> {
        self.check_state(s)?;
        if a_i >= self.n_actions {
            return Err(Error::Index(format!("action {a_i} out of range")));
        }
        let mut row = self.action_probs(s)?;
        row.iter_mut().for_each(|p| *p = -*p);
        row[a_i] += 1.0;
        Ok(row)
    }

    /// Add `scale * score(s, a_i)` into a dense gradient over this table.
    pub(crate) fn accumulate_score(&self, s: usize, a_i: usize, scale: f64, probs: &mut [f64], grad: &mut [f64]) {
        self.action_probs_into(s, probs);
        let row = &mut grad[s * self.n_actions..(s + 1) * self.n_actions];
        for (g, &p) in row.iter_mut().zip(probs.iter()) {
            *g -= scale * p;
        }
        row[a_i] += scale;
    }
}

/// The team policy: one softmax table per agent.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPolicy {
    per_agent: Vec<SoftmaxPolicyParams>,
}

impl JointPolicy {
    pub fn new(per_agent: Vec<SoftmaxPolicyParams>) -> Result<Self> {
        let first = per_agent
            .first()
            .ok_or_else(|| Error::Config("joint policy needs at least one agent".into()))?;
        if per_agent.iter().any(|p| p.n_states != first.n_states) {
            return Err(Error::Config("agents disagree on the number of global states".into()));
        }
        if per_agent.iter().enumerate().any(|(i, p)| p.agent != i) {
            return Err(Error::Config("agent tables must be ordered by agent index".into()));
        }
        Ok(Self { per_agent })
    }

    /// All-zero logits, i.e. the uniform policy.
    pub fn uniform(mdp: &FactoredMdp) -> Self {
        let per_agent = mdp
            .local_action_sizes()
            .iter()
            .enumerate()
            .map(|(i, &a)| SoftmaxPolicyParams::zeros(i, mdp.n_states(), a))
            .collect();
        Self { per_agent }
    }

    /// Logits drawn uniformly from `[-scale, scale]`.
    pub fn random(mdp: &FactoredMdp, scale: f64, rng: &mut StreamRng) -> Self {
        let mut p = Self::uniform(mdp);
        for agent in &mut p.per_agent {
            for x in agent.logits.iter_mut() {
                *x = scale * (2.0 * rng.random::<f64>() - 1.0);
            }
        }
        p
    }

    pub fn n_agents(&self) -> usize {
        self.per_agent.len()
    }

    pub fn agents(&self) -> &[SoftmaxPolicyParams] {
        &self.per_agent
    }

    pub fn agent(&self, i: usize) -> &SoftmaxPolicyParams {
        &self.per_agent[i]
    }

    pub fn agent_mut(&mut self, i: usize) -> &mut SoftmaxPolicyParams {
        &mut self.per_agent[i]
    }

    /// `π(a|s)` as the product of the local factors.
    pub fn joint_prob(&self, mdp: &FactoredMdp, s: usize, a: usize) -> Result<f64> {
        let mut p = 1.0;
        for (i, agent) in self.per_agent.iter().enumerate() {
            p *= agent.action_probs(s)?[mdp.local_action(a, i)];
        }
        Ok(p)
    }

    /// The full row `π(·|s)` over global actions.
    pub fn joint_probs(&self, mdp: &FactoredMdp, s: usize) -> Result<Vec<f64>> {
        let locals = self
            .per_agent
            .iter()
            .map(|p| p.action_probs(s))
            .collect::<Result<Vec<_>>>()?;
        Ok((0..mdp.n_actions())
            .map(|a| {
                locals
                    .iter()
                    .enumerate()
                    .map(|(i, probs)| probs[mdp.local_action(a, i)])
                    .product()
            })
            .collect())
    }

    /// Sample each agent's action independently and encode the joint action.
    pub fn sample_joint_action(&self, mdp: &FactoredMdp, s: usize, rng: &mut StreamRng) -> Result<usize> {
        let mut local = Vec::with_capacity(self.per_agent.len());
        let mut buf = Vec::new();
        for agent in &self.per_agent {
            agent.check_state(s)?;
            buf.resize(agent.n_actions, 0.0);
            agent.action_probs_into(s, &mut buf);
            local.push(categorical(rng, &buf));
        }
        encode(&local, mdp.local_action_sizes())
    }

    /// Flatten all logits (agent-major) into one parameter vector.
    pub fn flatten(&self) -> Vec<f64> {
        self.per_agent.iter().flat_map(|p| p.logits.iter().copied()).collect()
    }

    /// Total number of logits across agents.
    pub fn n_params(&self) -> usize {
        self.per_agent.iter().map(|p| p.logits.len()).sum()
    }

    /// Mutable access to the `k`-th flattened logit.
    pub fn param_mut(&mut self, mut k: usize) -> &mut f64 {
        for p in &mut self.per_agent {
            if k < p.logits.len() {
                return &mut p.logits[k];
            }
            k -= p.logits.len();
        }
        panic!("parameter index out of range");
    }
}
