//! Factored MDPs, trajectories and occupancy measures.
//!
//! Global states and actions are products of per-agent factors. A global
//! index is the row-major mixed-radix encoding of the local tuple, with agent
//! 0 as the most significant digit, so `(1, 2)` over sizes `[3, 4]` encodes
//! to `1 * 4 + 2 = 6`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::policy::JointPolicy;
use crate::rng::{categorical, StreamRng};

const STOCHASTIC_TOL: f64 = 1e-12;

/// Encode a local tuple into its global mixed-radix index.
pub fn encode(tuple: &[usize], sizes: &[usize]) -> Result<usize> {
    if tuple.len() != sizes.len() {
        return Err(Error::Index(format!(
            "tuple has {} components, expected {}",
            tuple.len(),
            sizes.len()
        )));
    }
    let mut index = 0usize;
    for (pos, (&x, &n)) in tuple.iter().zip(sizes).enumerate() {
        if x >= n {
            return Err(Error::Index(format!(
                "component {pos} = {x} out of range for factor size {n}"
            )));
        }
        index = index * n + x;
    }
    Ok(index)
}

/// Decode a global index back into its local tuple.
pub fn decode(index: usize, sizes: &[usize]) -> Result<Vec<usize>> {
    let total: usize = sizes.iter().product();
    if index >= total {
        return Err(Error::Index(format!(
            "index {index} out of range for product size {total}"
        )));
    }
    let mut out = vec![0; sizes.len()];
    let mut rest = index;
    for (slot, &n) in out.iter_mut().zip(sizes).rev() {
        *slot = rest % n;
        rest /= n;
    }
    Ok(out)
}

/// A finite MDP whose state and action spaces factor over `N` agents.
///
/// The transition kernel is stored row-compressed: each `(s, a)` row keeps
/// only its nonzero successor probabilities.
#[derive(Debug, Clone)]
pub struct FactoredMdp {
    local_state_sizes: Vec<usize>,
    local_action_sizes: Vec<usize>,
    n_states: usize,
    n_actions: usize,
    row_ptr: Vec<usize>,
    next_state: Vec<u32>,
    next_prob: Vec<f64>,
    initial: Vec<f64>,
    discount: f64,
    state_local: Vec<u32>,
    action_local: Vec<u32>,
}

impl FactoredMdp {
    /// Build from explicit sparse rows, one per `(s, a)` in `s * A + a` order.
    pub fn from_rows(
        local_state_sizes: Vec<usize>,
        local_action_sizes: Vec<usize>,
        rows: Vec<Vec<(usize, f64)>>,
        initial: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        if local_state_sizes.is_empty() || local_state_sizes.len() != local_action_sizes.len() {
            return Err(Error::Config(format!(
                "need one state and one action factor per agent, got {} and {}",
                local_state_sizes.len(),
                local_action_sizes.len()
            )));
        }
        if local_state_sizes.iter().chain(&local_action_sizes).any(|&n| n == 0) {
            return Err(Error::Config("factor sizes must be positive".into()));
        }
        if !(discount > 0.0 && discount < 1.0) {
            return Err(Error::Config(format!("discount {discount} not in (0, 1)")));
        }
        let n_states: usize = local_state_sizes.iter().product();
        let n_actions: usize = local_action_sizes.iter().product();
        if rows.len() != n_states * n_actions {
            return Err(Error::Shape(format!(
                "kernel has {} rows, expected S*A = {}",
                rows.len(),
                n_states * n_actions
            )));
        }
        check_distribution(&initial, n_states, "initial distribution")?;

        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut next_state = Vec::new();
        let mut next_prob = Vec::new();
        row_ptr.push(0);
        for (r, row) in rows.into_iter().enumerate() {
            let mut sum = 0.0;
            for (sp, p) in row {
                if sp >= n_states {
                    return Err(Error::Index(format!("row {r}: next state {sp} out of range")));
                }
                if !(p >= 0.0) || !p.is_finite() {
                    return Err(Error::Domain(format!("row {r}: invalid probability {p}")));
                }
                if p > 0.0 {
                    next_state.push(sp as u32);
                    next_prob.push(p);
                    sum += p;
                }
            }
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::Domain(format!("kernel row {r} sums to {sum}")));
            }
            row_ptr.push(next_state.len());
        }

        let n = local_state_sizes.len();
        let mut state_local = Vec::with_capacity(n_states * n);
        for s in 0..n_states {
            state_local.extend(decode(s, &local_state_sizes)?.into_iter().map(|x| x as u32));
        }
        let mut action_local = Vec::with_capacity(n_actions * n);
        for a in 0..n_actions {
            action_local.extend(decode(a, &local_action_sizes)?.into_iter().map(|x| x as u32));
        }

        Ok(Self {
            local_state_sizes,
            local_action_sizes,
            n_states,
            n_actions,
            row_ptr,
            next_state,
            next_prob,
            initial,
            discount,
            state_local,
            action_local,
        })
    }

    /// Build from a dense kernel laid out as `kernel[(s * A + a) * S + s']`.
    pub fn from_dense(
        local_state_sizes: Vec<usize>,
        local_action_sizes: Vec<usize>,
        kernel: &[f64],
        initial: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        let s: usize = local_state_sizes.iter().product();
        let a: usize = local_action_sizes.iter().product();
        if kernel.len() != s * a * s {
            return Err(Error::Shape(format!(
                "dense kernel has {} entries, expected {}",
                kernel.len(),
                s * a * s
            )));
        }
        let rows = kernel
            .chunks(s)
            .map(|row| row.iter().copied().enumerate().collect())
            .collect();
        Self::from_rows(local_state_sizes, local_action_sizes, rows, initial, discount)
    }

    /// A random instance with full-support Dirichlet-like rows, for tests and
    /// oracle checks.
    pub fn random(
        local_state_sizes: Vec<usize>,
        local_action_sizes: Vec<usize>,
        discount: f64,
        rng: &mut StreamRng,
    ) -> Result<Self> {
        let s: usize = local_state_sizes.iter().product();
        let a: usize = local_action_sizes.iter().product();
        let rows = (0..s * a)
            .map(|_| {
                let w: Vec<f64> = (0..s).map(|_| -(rng.random::<f64>().max(1e-300)).ln()).collect();
                let total: f64 = w.iter().sum();
                w.into_iter().map(|x| x / total).enumerate().collect()
            })
            .collect();
        let w: Vec<f64> = (0..s).map(|_| 0.1 + rng.random::<f64>()).collect();
        let total: f64 = w.iter().sum();
        let initial = normalize_exact(w.into_iter().map(|x| x / total).collect());
        Self::from_rows(local_state_sizes, local_action_sizes, rows, initial, discount)
    }

    pub fn n_agents(&self) -> usize {
        self.local_state_sizes.len()
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn local_state_sizes(&self) -> &[usize] {
        &self.local_state_sizes
    }

    pub fn local_action_sizes(&self) -> &[usize] {
        &self.local_action_sizes
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// Agent `agent`'s coordinate of global state `s`.
    #[inline]
    pub fn local_state(&self, s: usize, agent: usize) -> usize {
        self.state_local[s * self.n_agents() + agent] as usize
    }

    /// Agent `agent`'s coordinate of global action `a`.
    #[inline]
    pub fn local_action(&self, a: usize, agent: usize) -> usize {
        self.action_local[a * self.n_agents() + agent] as usize
    }

    /// Nonzero successors of `(s, a)` as `(s', P_a(s, s'))`.
    pub fn transitions(&self, s: usize, a: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = s * self.n_actions + a;
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.next_state[span.clone()]
            .iter()
            .zip(&self.next_prob[span])
            .map(|(&sp, &p)| (sp as usize, p))
    }

    /// `P_a(s, s')`.
    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transitions(s, a)
            .filter(|&(sp, _)| sp == next)
            .map(|(_, p)| p)
            .sum()
    }

    fn sample_next(&self, s: usize, a: usize, rng: &mut StreamRng) -> usize {
        let r = s * self.n_actions + a;
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        let k = categorical(rng, &self.next_prob[span.clone()]);
        self.next_state[span.start + k] as usize
    }

    pub(crate) fn check_policy(&self, policy: &JointPolicy) -> Result<()> {
        if policy.n_agents() != self.n_agents() {
            return Err(Error::Config(format!(
                "policy has {} agents, MDP has {}",
                policy.n_agents(),
                self.n_agents()
            )));
        }
        for (i, p) in policy.agents().iter().enumerate() {
            if p.n_states() != self.n_states || p.n_actions() != self.local_action_sizes[i] {
                return Err(Error::Config(format!(
                    "agent {i} policy is {}x{}, MDP expects {}x{}",
                    p.n_states(),
                    p.n_actions(),
                    self.n_states,
                    self.local_action_sizes[i]
                )));
            }
        }
        Ok(())
    }
}

fn normalize_exact(mut p: Vec<f64>) -> Vec<f64> {
    // push the rounding residue onto the largest entry
    let total: f64 = p.iter().sum();
    if let Some(imax) = (0..p.len()).max_by(|&i, &j| p[i].total_cmp(&p[j])) {
        p[imax] += 1.0 - total;
    }
    p
}

fn check_distribution(p: &[f64], n: usize, what: &str) -> Result<()> {
    if p.len() != n {
        return Err(Error::Shape(format!("{what} has length {}, expected {n}", p.len())));
    }
    if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::Domain(format!("{what} has a negative or non-finite entry")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::Domain(format!("{what} sums to {total}")));
    }
    Ok(())
}

/// A sampled trajectory `(s^0, a^0), ..., (s^H, a^H)` in global indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    steps: Vec<(usize, usize)>,
}

impl Trajectory {
    pub fn new(steps: Vec<(usize, usize)>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::Shape("trajectory needs at least one step".into()));
        }
        Ok(Self { steps })
    }

    pub fn steps(&self) -> &[(usize, usize)] {
        &self.steps
    }

    pub fn horizon(&self) -> usize {
        self.steps.len() - 1
    }

    pub fn states(&self) -> impl Iterator<Item = usize> + '_ {
        self.steps.iter().map(|&(s, _)| s)
    }
}

/// Sample one trajectory of `horizon + 1` state-action pairs.
pub fn rollout(
    mdp: &FactoredMdp,
    policy: &JointPolicy,
    horizon: usize,
    rng: &mut StreamRng,
) -> Result<Trajectory> {
    mdp.check_policy(policy)?;
    let mut steps = Vec::with_capacity(horizon + 1);
    let mut s = categorical(rng, mdp.initial());
    for t in 0..=horizon {
        let a = policy.sample_joint_action(mdp, s, rng)?;
        steps.push((s, a));
        if t < horizon {
            s = mdp.sample_next(s, a, rng);
        }
    }
    Ok(Trajectory { steps })
}

/// Whether a measure covers the global product space or one agent's factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Global,
    Local(usize),
}

/// Discounted state-action visitation mass, stored row-major `[s][a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMeasure {
    scope: Scope,
    n_states: usize,
    n_actions: usize,
    mass: Vec<f64>,
    discount: f64,
}

impl OccupancyMeasure {
    pub fn new(
        scope: Scope,
        n_states: usize,
        n_actions: usize,
        mass: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        if mass.len() != n_states * n_actions {
            return Err(Error::Shape(format!(
                "mass table has {} entries, expected {}x{}",
                mass.len(),
                n_states,
                n_actions
            )));
        }
        if mass.iter().any(|&m| !(m >= 0.0) || !m.is_finite()) {
            return Err(Error::Domain("occupancy mass must be finite and nonnegative".into()));
        }
        Ok(Self {
            scope,
            n_states,
            n_actions,
            mass,
            discount,
        })
    }

    pub(crate) fn from_parts_unchecked(
        scope: Scope,
        n_states: usize,
        n_actions: usize,
        mass: Vec<f64>,
        discount: f64,
    ) -> Self {
        Self {
            scope,
            n_states,
            n_actions,
            mass,
            discount,
        }
    }

    /// A zero measure with the local shape of `agent` in `mdp`.
    pub fn zeros_local(mdp: &FactoredMdp, agent: usize) -> Self {
        let (s, a) = (mdp.local_state_sizes()[agent], mdp.local_action_sizes()[agent]);
        Self::from_parts_unchecked(Scope::Local(agent), s, a, vec![0.0; s * a], mdp.discount())
    }

    pub fn scope(&self) -> Scope {
        self.scope
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.mass[s * self.n_actions + a]
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// `Σ_a λ(s, a)` for each state.
    pub fn state_marginal(&self) -> Vec<f64> {
        self.mass
            .chunks(self.n_actions)
            .map(|row| row.iter().sum())
            .collect()
    }

    pub fn l2_distance(&self, other: &OccupancyMeasure) -> Result<f64> {
        self.same_shape(other)?;
        Ok(self
            .mass
            .iter()
            .zip(&other.mass)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt())
    }

    /// `α·self + β·other`, used to check linearity of marginalization.
    pub fn combine(&self, alpha: f64, other: &OccupancyMeasure, beta: f64) -> Result<Self> {
        self.same_shape(other)?;
        let mass = self
            .mass
            .iter()
            .zip(&other.mass)
            .map(|(x, y)| alpha * x + beta * y)
            .collect();
        Self::new(self.scope, self.n_states, self.n_actions, mass, self.discount)
    }

    /// Shannon entropy of the normalized state marginal (nats).
    pub fn state_entropy(&self) -> f64 {
        let marginal = self.state_marginal();
        let total: f64 = marginal.iter().sum();
        if total <= 0.0 {
            return 0.0;
        }
        marginal
            .iter()
            .filter(|&&m| m > 0.0)
            .map(|&m| {
                let p = m / total;
                -p * p.ln()
            })
            .sum::<f64>()
            .max(0.0)
    }

    fn same_shape(&self, other: &OccupancyMeasure) -> Result<()> {
        if self.scope != other.scope
            || self.n_states != other.n_states
            || self.n_actions != other.n_actions
        {
            return Err(Error::Shape("occupancy measures have different shapes".into()));
        }
        Ok(())
    }
}

/// Expected total mass of an H-truncated empirical measure.
pub fn truncated_mass(discount: f64, horizon: usize) -> f64 {
    (1.0 - discount.powi(horizon as i32 + 1)) / (1.0 - discount)
}

/// Batch-averaged discounted visit counts of agent `agent`'s local pairs.
pub fn empirical_local_occupancy(
    mdp: &FactoredMdp,
    batch: &[Trajectory],
    agent: usize,
    discount: f64,
) -> Result<OccupancyMeasure> {
    if batch.is_empty() {
        return Err(Error::Estimator("empty trajectory batch".into()));
    }
    if agent >= mdp.n_agents() {
        return Err(Error::Index(format!("agent {agent} out of range")));
    }
    let horizon = batch[0].horizon();
    if batch.iter().any(|t| t.horizon() != horizon) {
        return Err(Error::Estimator("trajectories have different horizons".into()));
    }
    let mut lambda = OccupancyMeasure::zeros_local(mdp, agent);
    let n_local_actions = lambda.n_actions;
    let scale = 1.0 / batch.len() as f64;
    let mut traj_mass = vec![0.0; lambda.mass.len()];
    for traj in batch {
        traj_mass.iter_mut().for_each(|m| *m = 0.0);
        let mut g = 1.0;
        for &(s, a) in traj.steps() {
            let idx = mdp.local_state(s, agent) * n_local_actions + mdp.local_action(a, agent);
            traj_mass[idx] += g;
            g *= discount;
        }
        for (acc, m) in lambda.mass.iter_mut().zip(&traj_mass) {
            *acc += scale * m;
        }
    }
    lambda.discount = discount;
    Ok(lambda)
}

/// Sum a global measure over every coordinate except agent `agent`'s.
pub fn marginalize(
    mdp: &FactoredMdp,
    global: &OccupancyMeasure,
    agent: usize,
) -> Result<OccupancyMeasure> {
    if global.scope != Scope::Global {
        return Err(Error::Scope("marginalize expects a global measure".into()));
    }
    if global.n_states != mdp.n_states() || global.n_actions != mdp.n_actions() {
        return Err(Error::Shape("global measure does not match the MDP".into()));
    }
    if agent >= mdp.n_agents() {
        return Err(Error::Index(format!("agent {agent} out of range")));
    }
    let mut local = OccupancyMeasure::zeros_local(mdp, agent);
    local.discount = global.discount;
    let la = local.n_actions;
    for s in 0..global.n_states {
        let si = mdp.local_state(s, agent);
        let row = &global.mass[s * global.n_actions..(s + 1) * global.n_actions];
        for (a, &m) in row.iter().enumerate() {
            local.mass[si * la + mdp.local_action(a, agent)] += m;
        }
    }
    Ok(local)
}
