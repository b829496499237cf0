//! Linear shadow-Q critics `Q_w(s, a) = ⟨φ(s, a), w⟩`.
//!
//! Features are indexed by *global* state and action. Shadow rewards, which
//! live on an agent's local coordinates, are looked up by decoding the
//! global indices of each visited pair.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::mdp::{FactoredMdp, OccupancyMeasure, Trajectory};
use crate::rng::StreamRng;
use crate::utility::ShadowRewardTable;

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMap {
    /// Indicator of the global pair: `d = S·A`, `C_φ = 1`.
    OneHot { n_states: usize, n_actions: usize },
    /// An explicit feature table laid out `[(s * A + a) * d + j]`.
    Dense {
        n_states: usize,
        n_actions: usize,
        dim: usize,
        table: Vec<f64>,
        bound: f64,
    },
    /// Stacked per-agent indicators `[e(s_1, a_1); ...; e(s_N, a_N)] / √N`
    /// of the local pairs: `d = Σ_i S_i A_i`, `C_φ = 1`.
    Factored {
        n_states: usize,
        n_actions: usize,
        n_agents: usize,
        dim: usize,
        /// `offset_i + s_i A_i`, laid out `[s * N + i]`.
        state_base: Vec<usize>,
        /// `a_i`, laid out `[a * N + i]`.
        action_local: Vec<usize>,
    },
}

impl FeatureMap {
    pub fn one_hot(mdp: &FactoredMdp) -> Self {
        FeatureMap::OneHot {
            n_states: mdp.n_states(),
            n_actions: mdp.n_actions(),
        }
    }

    pub fn factored(mdp: &FactoredMdp) -> Self {
        let n = mdp.n_agents();
        let mut offsets = Vec::with_capacity(n);
        let mut dim = 0;
        for i in 0..n {
            offsets.push(dim);
            dim += mdp.local_state_sizes()[i] * mdp.local_action_sizes()[i];
        }
        let mut state_base = Vec::with_capacity(mdp.n_states() * n);
        for s in 0..mdp.n_states() {
            for (i, off) in offsets.iter().enumerate() {
                state_base.push(off + mdp.local_state(s, i) * mdp.local_action_sizes()[i]);
            }
        }
        let mut action_local = Vec::with_capacity(mdp.n_actions() * n);
        for a in 0..mdp.n_actions() {
            for i in 0..n {
                action_local.push(mdp.local_action(a, i));
            }
        }
        FeatureMap::Factored {
            n_states: mdp.n_states(),
            n_actions: mdp.n_actions(),
            n_agents: n,
            dim,
            state_base,
            action_local,
        }
    }

    pub fn dense(n_states: usize, n_actions: usize, dim: usize, table: Vec<f64>) -> Result<Self> {
        if dim == 0 || table.len() != n_states * n_actions * dim {
            return Err(Error::Shape(format!(
                "feature table has {} entries, expected {}x{}x{}",
                table.len(),
                n_states,
                n_actions,
                dim
            )));
        }
        if table.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("features must be finite".into()));
        }
        let bound = table
            .chunks(dim)
            .map(|row| row.iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        Ok(FeatureMap::Dense {
            n_states,
            n_actions,
            dim,
            table,
            bound,
        })
    }

    /// Random features with i.i.d. entries uniform on `±sqrt(3/d)`.
    pub fn random_projection(mdp: &FactoredMdp, dim: usize, rng: &mut StreamRng) -> Result<Self> {
        let scale = (3.0 / dim.max(1) as f64).sqrt();
        let table = (0..mdp.n_states() * mdp.n_actions() * dim)
            .map(|_| scale * (2.0 * rng.random::<f64>() - 1.0))
            .collect();
        Self::dense(mdp.n_states(), mdp.n_actions(), dim, table)
    }

    pub fn dim(&self) -> usize {
        match self {
            FeatureMap::OneHot { n_states, n_actions } => n_states * n_actions,
            FeatureMap::Dense { dim, .. } | FeatureMap::Factored { dim, .. } => *dim,
        }
    }

    /// `C_φ`, the largest feature norm.
    pub fn bound(&self) -> f64 {
        match self {
            FeatureMap::OneHot { .. } | FeatureMap::Factored { .. } => 1.0,
            FeatureMap::Dense { bound, .. } => *bound,
        }
    }

    fn shape(&self) -> (usize, usize) {
        match self {
            FeatureMap::OneHot { n_states, n_actions }
            | FeatureMap::Dense { n_states, n_actions, .. }
            | FeatureMap::Factored { n_states, n_actions, .. } => (*n_states, *n_actions),
        }
    }

    pub fn check_mdp(&self, mdp: &FactoredMdp) -> Result<()> {
        if self.shape() != (mdp.n_states(), mdp.n_actions()) {
            return Err(Error::Shape("feature map does not match the MDP".into()));
        }
        Ok(())
    }

    /// `φ(s, a)` as a dense vector.
    pub fn evaluate(&self, s: usize, a: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.axpy(s, a, 1.0, &mut out);
        out
    }

    /// `⟨φ(s, a), w⟩`.
    #[inline]
    pub fn dot(&self, s: usize, a: usize, w: &[f64]) -> f64 {
        match self {
            FeatureMap::OneHot { n_actions, .. } => w[s * n_actions + a],
            FeatureMap::Dense { n_actions, dim, table, .. } => {
                let row = &table[(s * n_actions + a) * dim..(s * n_actions + a + 1) * dim];
                row.iter().zip(w).map(|(x, y)| x * y).sum()
            }
            FeatureMap::Factored {
                n_agents,
                state_base,
                action_local,
                ..
            } => {
                let n = *n_agents;
                let bases = &state_base[s * n..(s + 1) * n];
                let acts = &action_local[a * n..(a + 1) * n];
                let sum: f64 = bases.iter().zip(acts).map(|(b, ai)| w[b + ai]).sum();
                sum / (n as f64).sqrt()
            }
        }
    }

    /// `out += scale · φ(s, a)`.
    #[inline]
    pub fn axpy(&self, s: usize, a: usize, scale: f64, out: &mut [f64]) {
        match self {
            FeatureMap::OneHot { n_actions, .. } => out[s * n_actions + a] += scale,
            FeatureMap::Dense { n_actions, dim, table, .. } => {
                let row = &table[(s * n_actions + a) * dim..(s * n_actions + a + 1) * dim];
                for (o, x) in out.iter_mut().zip(row) {
                    *o += scale * x;
                }
            }
            FeatureMap::Factored {
                n_agents,
                state_base,
                action_local,
                ..
            } => {
                let n = *n_agents;
                let v = scale / (n as f64).sqrt();
                for i in 0..n {
                    out[state_base[s * n + i] + action_local[a * n + i]] += v;
                }
            }
        }
    }
}

/// One agent's critic weight vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticWeights {
    pub agent: usize,
    pub w: Vec<f64>,
}

impl CriticWeights {
    pub fn zeros(agent: usize, dim: usize) -> Self {
        Self {
            agent,
            w: vec![0.0; dim],
        }
    }

    pub fn norm(&self) -> f64 {
        self.w.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Surface a violation of the weight-norm cap `D_w`.
    pub fn check_norm(&self, cap: f64) -> Result<()> {
        if self.w.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain(format!("critic {} has non-finite weights", self.agent)));
        }
        let norm = self.norm();
        if norm > cap {
            return Err(Error::BoundViolation(format!(
                "critic {} norm {norm} exceeds cap {cap}",
                self.agent
            )));
        }
        Ok(())
    }
}

pub fn q_value(w: &CriticWeights, phi: &FeatureMap, s: usize, a: usize) -> Result<f64> {
    if w.w.len() != phi.dim() {
        return Err(Error::Shape(format!(
            "critic has dimension {}, features have {}",
            w.w.len(),
            phi.dim()
        )));
    }
    let (ns, na) = phi.shape();
    if s >= ns || a >= na {
        return Err(Error::Index(format!("pair ({s}, {a}) out of range")));
    }
    Ok(phi.dot(s, a, &w.w))
}

/// Monte-Carlo tail sums `Q̂^t = Σ_{t' ≥ t} γ^{t'-t} r_i(s^{t'}_i, a^{t'}_i)`.
pub fn mc_q_targets(
    mdp: &FactoredMdp,
    traj: &Trajectory,
    shadow: &ShadowRewardTable,
    agent: usize,
    discount: f64,
) -> Vec<f64> {
    let mut out = vec![0.0; traj.steps().len()];
    let mut tail = 0.0;
    for (t, &(s, a)) in traj.steps().iter().enumerate().rev() {
        tail = shadow.get(mdp.local_state(s, agent), mdp.local_action(a, agent)) + discount * tail;
        out[t] = tail;
    }
    out
}

/// `G_w = Σ_t γ^t (Q_w(s^t, a^t) - Q̂^t) φ(s^t, a^t)`, added into `out`
/// scaled by `scale`.
pub fn accumulate_critic_gradient(
    mdp: &FactoredMdp,
    traj: &Trajectory,
    shadow: &ShadowRewardTable,
    agent: usize,
    w: &[f64],
    phi: &FeatureMap,
    discount: f64,
    scale: f64,
    out: &mut [f64],
) {
    let targets = mc_q_targets(mdp, traj, shadow, agent, discount);
    let mut g = scale;
    for (&(s, a), q_hat) in traj.steps().iter().zip(targets) {
        let residual = phi.dot(s, a, w) - q_hat;
        phi.axpy(s, a, g * residual, out);
        g *= discount;
    }
}

/// The per-trajectory critic gradient.
pub fn critic_gradient(
    mdp: &FactoredMdp,
    traj: &Trajectory,
    shadow: &ShadowRewardTable,
    agent: usize,
    w: &CriticWeights,
    phi: &FeatureMap,
    discount: f64,
) -> Result<Vec<f64>> {
    if w.w.len() != phi.dim() {
        return Err(Error::Shape("critic and feature dimensions differ".into()));
    }
    let mut out = vec![0.0; phi.dim()];
    accumulate_critic_gradient(mdp, traj, shadow, agent, &w.w, phi, discount, 1.0, &mut out);
    Ok(out)
}

/// Batch mean of [`critic_gradient`], reduced in trajectory order.
pub fn batch_critic_direction(
    mdp: &FactoredMdp,
    batch: &[Trajectory],
    shadow: &ShadowRewardTable,
    agent: usize,
    w: &CriticWeights,
    phi: &FeatureMap,
    discount: f64,
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::Estimator("empty trajectory batch".into()));
    }
    if w.w.len() != phi.dim() {
        return Err(Error::Shape("critic and feature dimensions differ".into()));
    }
    let mut out = vec![0.0; phi.dim()];
    let scale = 1.0 / batch.len() as f64;
    for traj in batch {
        accumulate_critic_gradient(mdp, traj, shadow, agent, &w.w, phi, discount, scale, &mut out);
    }
    Ok(out)
}

/// Smoothness constant `L_w = C_φ² / (1 - γ)` of the critic objective.
pub fn lipschitz_lw(phi: &FeatureMap, discount: f64) -> f64 {
    phi.bound().powi(2) / (1.0 - discount)
}

/// `Σ_{s,a} λ(s, a) φ(s, a) φ(s, a)ᵀ`, the Hessian of the critic loss.
pub fn feature_covariance(phi: &FeatureMap, lambda: &OccupancyMeasure) -> DMatrix<f64> {
    let d = phi.dim();
    let mut h = DMatrix::zeros(d, d);
    for s in 0..lambda.n_states() {
        for a in 0..lambda.n_actions() {
            let m = lambda.get(s, a);
            if m == 0.0 {
                continue;
            }
            let f = DVector::from_vec(phi.evaluate(s, a));
            h += &f * f.transpose() * m;
        }
    }
    h
}

/// The strong-convexity modulus `μ_w` of the critic loss under `λ`.
///
/// One-hot features give a diagonal Hessian, reported as its smallest
/// *positive* entry; dense features report the smallest eigenvalue.
pub fn strong_convexity_modulus(phi: &FeatureMap, lambda: &OccupancyMeasure) -> f64 {
    match phi {
        FeatureMap::OneHot { .. } => lambda
            .mass()
            .iter()
            .copied()
            .filter(|&m| m > 0.0)
            .fold(f64::INFINITY, f64::min),
        _ => feature_covariance(phi, lambda).symmetric_eigenvalues().min(),
    }
}

/// `½ Σ λ (⟨φ, w⟩ - Q)²`.
pub fn critic_loss(phi: &FeatureMap, w: &[f64], lambda: &OccupancyMeasure, q: &[f64]) -> f64 {
    let na = lambda.n_actions();
    let mut loss = 0.0;
    for s in 0..lambda.n_states() {
        for a in 0..na {
            let e = phi.dot(s, a, w) - q[s * na + a];
            loss += 0.5 * lambda.get(s, a) * e * e;
        }
    }
    loss
}

/// Minimize [`critic_loss`] by solving the normal equations
/// `(Σ λ φφᵀ) w = Σ λ φ Q` with a pseudo-inverse.
pub fn fit_normal_equations(phi: &FeatureMap, lambda: &OccupancyMeasure, q: &[f64]) -> Result<Vec<f64>> {
    let d = phi.dim();
    let na = lambda.n_actions();
    let h = feature_covariance(phi, lambda);
    let mut b = DVector::zeros(d);
    for s in 0..lambda.n_states() {
        for a in 0..na {
            let m = lambda.get(s, a);
            if m > 0.0 {
                let mut col = vec![0.0; d];
                phi.axpy(s, a, m * q[s * na + a], &mut col);
                b += DVector::from_vec(col);
            }
        }
    }
    let eps = 1e-13 * h.amax().max(1.0);
    let w = h
        .svd(true, true)
        .solve(&b, eps)
        .map_err(|e| Error::Oracle(format!("normal equations: {e}")))?;
    Ok(w.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::rollout;
    use crate::oracle::{exact_occupancy, exact_shadow_q};
    use crate::policy::JointPolicy;
    use crate::rng::stream;

    fn small_mdp(seed: u64) -> FactoredMdp {
        FactoredMdp::random(vec![2, 2], vec![2, 1], 0.8, &mut stream(seed, &[])).unwrap()
    }

    #[test]
    fn q_value_examples() {
        let mdp = small_mdp(1);
        let phi = FeatureMap::one_hot(&mdp);
        let zero = CriticWeights::zeros(0, phi.dim());
        assert_eq!(q_value(&zero, &phi, 3, 1).unwrap(), 0.0);
        let w = CriticWeights {
            agent: 0,
            w: (0..phi.dim()).map(|k| k as f64).collect(),
        };
        assert_eq!(q_value(&w, &phi, 3, 1).unwrap(), 7.0);
        let short = CriticWeights::zeros(0, 3);
        assert!(matches!(q_value(&short, &phi, 0, 0), Err(Error::Shape(_))));

        let dense = FeatureMap::random_projection(&mdp, 5, &mut stream(2, &[])).unwrap();
        let w = CriticWeights {
            agent: 0,
            w: vec![0.5, -1.0, 2.0, 0.25, 3.0],
        };
        let f = dense.evaluate(2, 0);
        let brute: f64 = f.iter().zip(&w.w).map(|(x, y)| x * y).sum();
        assert!((q_value(&w, &dense, 2, 0).unwrap() - brute).abs() < 1e-15);
    }

    #[test]
    fn factored_features_match_their_definition() {
        let mdp = FactoredMdp::random(vec![2, 3], vec![2, 2], 0.9, &mut stream(30, &[])).unwrap();
        let phi = FeatureMap::factored(&mdp);
        assert_eq!(phi.dim(), 2 * 2 + 3 * 2);
        for s in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                let mut expect = vec![0.0; 10];
                expect[mdp.local_state(s, 0) * 2 + mdp.local_action(a, 0)] = 0.5f64.sqrt();
                expect[4 + mdp.local_state(s, 1) * 2 + mdp.local_action(a, 1)] = 0.5f64.sqrt();
                for (x, y) in phi.evaluate(s, a).iter().zip(&expect) {
                    assert!((x - y).abs() < 1e-15);
                }
                let w: Vec<f64> = (0..10).map(|j| j as f64 - 3.0).collect();
                let brute: f64 = expect.iter().zip(&w).map(|(x, y)| x * y).sum();
                assert!((phi.dot(s, a, &w) - brute).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mc_targets_examples() {
        let mdp = FactoredMdp::from_dense(vec![1], vec![1], &[1.0], vec![1.0], 0.5).unwrap();
        let traj = Trajectory::new(vec![(0, 0); 3]).unwrap();
        let zero = ShadowRewardTable::zeros(1, 1);
        assert_eq!(mc_q_targets(&mdp, &traj, &zero, 0, 0.5), vec![0.0; 3]);
        let one = ShadowRewardTable::new(1, 1, vec![1.0]).unwrap();
        assert_eq!(mc_q_targets(&mdp, &traj, &one, 0, 0.5), vec![1.75, 1.5, 1.0]);
    }

    #[test]
    fn mc_targets_match_double_sum() {
        let mdp = small_mdp(3);
        let policy = JointPolicy::uniform(&mdp);
        let mut rng = stream(4, &[]);
        let shadow = ShadowRewardTable::new(2, 1, vec![rng.random(), -rng.random::<f64>()]).unwrap();
        let traj = rollout(&mdp, &policy, 15, &mut rng).unwrap();
        let targets = mc_q_targets(&mdp, &traj, &shadow, 1, 0.8);
        let r: Vec<f64> = traj
            .steps()
            .iter()
            .map(|&(s, a)| shadow.get(mdp.local_state(s, 1), mdp.local_action(a, 1)))
            .collect();
        for t in 0..r.len() {
            let direct: f64 = (t..r.len()).map(|u| 0.8f64.powi((u - t) as i32) * r[u]).sum();
            assert!((targets[t] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn perfect_fit_and_zero_reward_give_zero_gradient() {
        let mdp = small_mdp(5);
        let policy = JointPolicy::uniform(&mdp);
        let phi = FeatureMap::one_hot(&mdp);
        let traj = rollout(&mdp, &policy, 0, &mut stream(6, &[])).unwrap();
        let zero = ShadowRewardTable::zeros(2, 2);
        let w = CriticWeights::zeros(0, phi.dim());
        let g = critic_gradient(&mdp, &traj, &zero, 0, &w, &phi, 0.8).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));

        // a single-step trajectory is fitted exactly by writing its target
        let shadow = ShadowRewardTable::new(2, 2, vec![0.3, -0.7, 1.1, 0.2]).unwrap();
        let (s, a) = traj.steps()[0];
        let mut w = CriticWeights::zeros(0, phi.dim());
        w.w[s * mdp.n_actions() + a] = mc_q_targets(&mdp, &traj, &shadow, 0, 0.8)[0];
        let g = critic_gradient(&mdp, &traj, &shadow, 0, &w, &phi, 0.8).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn critic_gradient_matches_finite_differences_of_loss() {
        let mdp = small_mdp(7);
        let policy = JointPolicy::random(&mdp, 1.0, &mut stream(8, &[]));
        let phi = FeatureMap::random_projection(&mdp, 4, &mut stream(9, &[])).unwrap();
        let shadow = ShadowRewardTable::new(2, 2, vec![0.5, -0.2, 1.0, 0.1]).unwrap();
        let traj = rollout(&mdp, &policy, 12, &mut stream(10, &[])).unwrap();
        let w = CriticWeights {
            agent: 0,
            w: vec![0.3, -0.4, 1.2, 0.05],
        };
        let targets = mc_q_targets(&mdp, &traj, &shadow, 0, 0.8);
        let loss = |w: &[f64]| -> f64 {
            traj.steps()
                .iter()
                .enumerate()
                .map(|(t, &(s, a))| 0.5 * 0.8f64.powi(t as i32) * (phi.dot(s, a, w) - targets[t]).powi(2))
                .sum()
        };
        let g = critic_gradient(&mdp, &traj, &shadow, 0, &w, &phi, 0.8).unwrap();
        let h = 1e-6;
        for j in 0..4 {
            let mut plus = w.w.clone();
            plus[j] += h;
            let mut minus = w.w.clone();
            minus[j] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            assert!((g[j] - fd).abs() <= 1e-5 * fd.abs().max(1.0), "j={j}: {} vs {fd}", g[j]);
        }
    }

    #[test]
    fn batch_direction_is_trajectory_mean() {
        let mdp = small_mdp(11);
        let policy = JointPolicy::uniform(&mdp);
        let phi = FeatureMap::one_hot(&mdp);
        let shadow = ShadowRewardTable::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let w = CriticWeights::zeros(1, phi.dim());
        let batch: Vec<_> = (0..5).map(|k| rollout(&mdp, &policy, 6, &mut stream(12, &[k])).unwrap()).collect();
        let mean = batch_critic_direction(&mdp, &batch, &shadow, 1, &w, &phi, 0.8).unwrap();
        let mut manual = vec![0.0; phi.dim()];
        for t in &batch {
            let g = critic_gradient(&mdp, t, &shadow, 1, &w, &phi, 0.8).unwrap();
            for (m, x) in manual.iter_mut().zip(g) {
                *m += x * (1.0 / 5.0);
            }
        }
        for (a, b) in mean.iter().zip(&manual) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        let again = batch_critic_direction(&mdp, &batch, &shadow, 1, &w, &phi, 0.8).unwrap();
        assert_eq!(mean, again);
    }

    #[test]
    fn lipschitz_examples() {
        let mdp = small_mdp(13);
        assert!((lipschitz_lw(&FeatureMap::one_hot(&mdp), 0.9) - 10.0).abs() < 1e-12);
        let phi = FeatureMap::dense(1, 1, 1, vec![2.0]).unwrap();
        assert_eq!(lipschitz_lw(&phi, 0.5), 8.0);
    }

    #[test]
    fn critic_hessian_is_bounded_by_lw() {
        for seed in 0..10 {
            let mdp = small_mdp(20 + seed);
            let policy = JointPolicy::random(&mdp, 2.0, &mut stream(40 + seed, &[]));
            let lambda = exact_occupancy(&mdp, &policy).unwrap();
            for phi in [
                FeatureMap::one_hot(&mdp),
                FeatureMap::factored(&mdp),
                FeatureMap::random_projection(&mdp, 3, &mut stream(60 + seed, &[])).unwrap(),
            ] {
                let top = feature_covariance(&phi, &lambda).symmetric_eigenvalues().max();
                assert!(top <= lipschitz_lw(&phi, mdp.discount()) + 1e-12);
            }
        }
    }

    #[test]
    fn one_hot_fit_reproduces_shadow_q_on_support() {
        let mdp = small_mdp(14);
        let policy = JointPolicy::random(&mdp, 1.0, &mut stream(15, &[]));
        let lambda = exact_occupancy(&mdp, &policy).unwrap();
        let r: Vec<f64> = (0..mdp.n_states() * mdp.n_actions()).map(|k| (k as f64).sin()).collect();
        let q = exact_shadow_q(&mdp, &policy, &r).unwrap();
        let phi = FeatureMap::one_hot(&mdp);
        let w = fit_normal_equations(&phi, &lambda, &q).unwrap();
        for (k, (&wk, &qk)) in w.iter().zip(&q).enumerate() {
            if lambda.mass()[k] > 0.0 {
                assert!((wk - qk).abs() < 1e-8);
            }
        }
        let mu = strong_convexity_modulus(&phi, &lambda);
        let min_pos = lambda.mass().iter().copied().filter(|&m| m > 0.0).fold(f64::INFINITY, f64::min);
        assert_eq!(mu, min_pos);
    }

    #[test]
    fn norm_cap_violation_is_surfaced() {
        let w = CriticWeights {
            agent: 2,
            w: vec![3.0, 4.0],
        };
        assert!(w.check_norm(5.0).is_ok());
        assert!(matches!(w.check_norm(4.9), Err(Error::BoundViolation(_))));
    }
}
