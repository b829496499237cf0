//! Communication graphs, Metropolis mixing matrices and gossip rounds.
//!
//! Critic weights of the `N` agents are stacked as the columns of a `d x N`
//! matrix `W`; one gossip round replaces it by `W·M`, so each agent's new
//! column is a weighted average of its neighbours' columns.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;

const MAX_TOPOLOGY_RETRIES: usize = 1000;

/// Graph families used in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopologyKind {
    Complete,
    Ring,
    /// Erdős–Rényi with a fixed edge probability.
    ErdosRenyi { p: f64 },
    /// Erdős–Rényi with `p` redrawn uniformly from `(0, 1)` on every attempt.
    Random,
    /// Watts–Strogatz: ring lattice with `k / 2` neighbours per side, each
    /// edge rewired with probability `p`.
    WattsStrogatz { k: usize, p: f64 },
}

/// An undirected simple graph on `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommGraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl CommGraph {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Topology("graph needs at least one node".into()));
        }
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i == j {
                return Err(Error::Topology(format!("self-loop at {i}")));
            }
            if i >= n || j >= n {
                return Err(Error::Topology(format!("edge ({i}, {j}) out of range")));
            }
            set.insert((i.min(j), i.max(j)));
        }
        Ok(Self { n, edges: set })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Edges as ordered pairs `(i, j)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    pub fn is_connected(&self) -> bool {
        let mut adj = vec![Vec::new(); self.n];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|b| b)
    }
}

fn erdos_renyi(n: usize, p: f64, rng: &mut StreamRng) -> Result<CommGraph> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    CommGraph::new(n, edges)
}

fn watts_strogatz(n: usize, k: usize, p: f64, rng: &mut StreamRng) -> Result<CommGraph> {
    let half = k / 2;
    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    for i in 0..n {
        for off in 1..=half {
            let j = (i + off) % n;
            if i != j {
                edges.insert((i.min(j), i.max(j)));
            }
        }
    }
    // rewire each lattice edge (i, i+off) by moving its far end
    for off in 1..=half {
        for i in 0..n {
            let j = (i + off) % n;
            let e = (i.min(j), i.max(j));
            if !edges.contains(&e) || rng.random::<f64>() >= p {
                continue;
            }
            let candidates: Vec<usize> = (0..n)
                .filter(|&w| w != i && !edges.contains(&(i.min(w), i.max(w))))
                .collect();
            if candidates.is_empty() {
                continue;
            }
            let w = candidates[rng.random_range(0..candidates.len())];
            edges.remove(&e);
            edges.insert((i.min(w), i.max(w)));
        }
    }
    CommGraph::new(n, edges)
}

/// Build a connected graph of the requested family, resampling random
/// families until connected.
pub fn build_topology(kind: TopologyKind, n: usize, rng: &mut StreamRng) -> Result<CommGraph> {
    if n == 0 {
        return Err(Error::Topology("graph needs at least one node".into()));
    }
    let g = match kind {
        TopologyKind::Complete => CommGraph::new(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))))?,
        TopologyKind::Ring => CommGraph::new(n, (0..n).map(|i| (i, (i + 1) % n)).filter(|(i, j)| i != j))?,
        TopologyKind::ErdosRenyi { p } => {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Topology(format!("edge probability {p} not in [0, 1]")));
            }
            retry_until_connected(|rng| erdos_renyi(n, p, rng), rng)?
        }
        TopologyKind::Random => retry_until_connected(
            |rng| {
                let p = rng.random::<f64>();
                erdos_renyi(n, p, rng)
            },
            rng,
        )?,
        TopologyKind::WattsStrogatz { k, p } => {
            if !(0.0..=1.0).contains(&p) || k == 0 || (n > 1 && k >= n) {
                return Err(Error::Topology(format!("invalid Watts-Strogatz parameters k={k}, p={p} for n={n}")));
            }
            retry_until_connected(|rng| watts_strogatz(n, k, p, rng), rng)?
        }
    };
    if !g.is_connected() {
        return Err(Error::Topology("graph is not connected".into()));
    }
    Ok(g)
}

fn retry_until_connected(
    mut sample: impl FnMut(&mut StreamRng) -> Result<CommGraph>,
    rng: &mut StreamRng,
) -> Result<CommGraph> {
    for _ in 0..MAX_TOPOLOGY_RETRIES {
        let g = sample(rng)?;
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::Topology(format!(
        "no connected sample after {MAX_TOPOLOGY_RETRIES} attempts"
    )))
}

/// A symmetric doubly stochastic mixing matrix and its contraction factor
/// `ρ = max(|σ_2|, |σ_N|)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    m: DMatrix<f64>,
    rho: f64,
    eigenvalues: Vec<f64>,
}

impl MixingMatrix {
    /// Wrap an explicit matrix after checking symmetry and stochasticity.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if n == 0 || m.ncols() != n {
            return Err(Error::Shape("mixing matrix must be square and nonempty".into()));
        }
        for i in 0..n {
            let row: f64 = m.row(i).sum();
            let col: f64 = m.column(i).sum();
            if (row - 1.0).abs() > 1e-12 || (col - 1.0).abs() > 1e-12 {
                return Err(Error::Domain(format!("row/column {i} does not sum to 1")));
            }
            for j in 0..n {
                if m[(i, j)] < 0.0 || (m[(i, j)] - m[(j, i)]).abs() > 1e-15 {
                    return Err(Error::Domain("mixing matrix must be symmetric and nonnegative".into()));
                }
            }
        }
        let mut eigenvalues: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        let rho = if n == 1 {
            0.0
        } else {
            eigenvalues[1].abs().max(eigenvalues[n - 1].abs())
        };
        if rho >= 1.0 {
            return Err(Error::Topology(format!("spectral factor {rho} >= 1; graph disconnected?")));
        }
        Ok(Self { m, rho, eigenvalues })
    }

    pub fn n(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Eigenvalues in nonincreasing order; the first is 1.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }
}

/// Metropolis–Hastings weights `M(i, j) = 1 / (1 + max(deg_i, deg_j))` on
/// edges, with the remaining mass on the diagonal.
pub fn metropolis_weights(g: &CommGraph) -> Result<MixingMatrix> {
    if !g.is_connected() {
        return Err(Error::Topology("Metropolis weights need a connected graph".into()));
    }
    let n = g.n();
    let deg = g.degrees();
    let mut m = DMatrix::zeros(n, n);
    for (i, j) in g.edges() {
        let w = 1.0 / (1.0 + deg[i].max(deg[j]) as f64);
        m[(i, j)] = w;
        m[(j, i)] = w;
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| m[(i, j)]).sum();
        m[(i, i)] = 1.0 - off;
    }
    MixingMatrix::from_matrix(m)
}

/// `W·M^m`, applied as `m` successive gossip rounds.
pub fn mix(w: &DMatrix<f64>, m: &MixingMatrix, rounds: usize) -> Result<DMatrix<f64>> {
    if w.ncols() != m.n() {
        return Err(Error::Shape(format!(
            "critic stack has {} columns, mixing matrix is {}x{}",
            w.ncols(),
            m.n(),
            m.n()
        )));
    }
    if rounds == 0 {
        return Err(Error::Config("mixing needs at least one round".into()));
    }
    let mut out = w.clone();
    for _ in 0..rounds {
        out = &out * m.matrix();
    }
    Ok(out)
}

/// Column mean `w̄` of a stacked critic matrix.
pub fn column_mean(w: &DMatrix<f64>) -> Vec<f64> {
    let n = w.ncols() as f64;
    w.row_iter().map(|row| row.sum() / n).collect()
}

/// `Σ_i ‖w_i - w̄‖²`.
pub fn consensus_error(w: &DMatrix<f64>) -> f64 {
    let mean = column_mean(w);
    w.column_iter()
        .map(|col| col.iter().zip(&mean).map(|(x, m)| (x - m) * (x - m)).sum::<f64>())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn topology_examples() {
        let mut rng = stream(1, &[]);
        let g = build_topology(TopologyKind::Complete, 3, &mut rng).unwrap();
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1), (0, 2), (1, 2)]);
        let g = build_topology(TopologyKind::Ring, 4, &mut rng).unwrap();
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1), (0, 3), (1, 2), (2, 3)]);
        let g = build_topology(TopologyKind::ErdosRenyi { p: 1.0 }, 5, &mut rng).unwrap();
        assert_eq!(g, build_topology(TopologyKind::Complete, 5, &mut rng).unwrap());
    }

    #[test]
    fn random_families_are_connected() {
        for seed in 0..20 {
            let mut rng = stream(seed, &[]);
            for kind in [
                TopologyKind::ErdosRenyi { p: 0.4 },
                TopologyKind::Random,
                TopologyKind::WattsStrogatz { k: 3, p: 0.5 },
                TopologyKind::WattsStrogatz { k: 4, p: 0.2 },
            ] {
                let g = build_topology(kind, 8, &mut rng).unwrap();
                assert!(g.is_connected());
                assert_eq!(g.n(), 8);
            }
        }
    }

    #[test]
    fn hopeless_erdos_renyi_fails() {
        let mut rng = stream(2, &[]);
        assert!(matches!(
            build_topology(TopologyKind::ErdosRenyi { p: 0.0 }, 4, &mut rng),
            Err(Error::Topology(_))
        ));
    }

    #[test]
    fn metropolis_examples() {
        let mut rng = stream(3, &[]);
        let g = build_topology(TopologyKind::Complete, 5, &mut rng).unwrap();
        let m = metropolis_weights(&g).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert!((m.get(i, j) - 0.2).abs() < 1e-15);
            }
        }
        assert!(m.rho() < 1e-12);

        let g = build_topology(TopologyKind::Ring, 4, &mut rng).unwrap();
        let m = metropolis_weights(&g).unwrap();
        assert!((m.get(0, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.get(0, 0) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.get(0, 2), 0.0);
        // circulant spectrum (1 + 2 cos(2πk/4)) / 3 = {1, 1/3, -1/3, 1/3}
        assert!((m.rho() - 1.0 / 3.0).abs() < 1e-12);

        let g = CommGraph::new(1, []).unwrap();
        let m = metropolis_weights(&g).unwrap();
        assert_eq!(m.get(0, 0), 1.0);
        assert_eq!(m.rho(), 0.0);

        let disconnected = CommGraph::new(3, [(0, 1)]).unwrap();
        assert!(matches!(metropolis_weights(&disconnected), Err(Error::Topology(_))));
    }

    #[test]
    fn eigen_structure() {
        let mut rng = stream(4, &[]);
        for kind in [TopologyKind::Ring, TopologyKind::Random, TopologyKind::WattsStrogatz { k: 3, p: 0.5 }] {
            let m = metropolis_weights(&build_topology(kind, 9, &mut rng).unwrap()).unwrap();
            let ev = m.eigenvalues();
            assert!((ev[0] - 1.0).abs() < 1e-10);
            assert!(ev[1..].iter().all(|x| x.abs() <= m.rho() + 1e-15));
            for i in 0..9 {
                for j in 0..9 {
                    let positive = m.get(i, j) > 0.0;
                    assert_eq!(positive, i == j || m.matrix()[(i, j)] > 0.0);
                }
            }
        }
    }

    fn random_stack(d: usize, n: usize, rng: &mut StreamRng) -> DMatrix<f64> {
        DMatrix::from_fn(d, n, |_, _| 2.0 * rng.random::<f64>() - 1.0)
    }

    #[test]
    fn mix_examples() {
        let mut rng = stream(5, &[]);
        let ring = metropolis_weights(&build_topology(TopologyKind::Ring, 5, &mut rng).unwrap()).unwrap();
        let col = [1.0, -2.0, 0.5];
        let same = DMatrix::from_fn(3, 5, |r, _| col[r]);
        let mixed = mix(&same, &ring, 7).unwrap();
        assert!((mixed - &same).amax() < 1e-15);

        let complete = metropolis_weights(&build_topology(TopologyKind::Complete, 5, &mut rng).unwrap()).unwrap();
        let w = random_stack(3, 5, &mut rng);
        let mean = column_mean(&w);
        let mixed = mix(&w, &complete, 1).unwrap();
        for col in mixed.column_iter() {
            for (x, m) in col.iter().zip(&mean) {
                assert!((x - m).abs() < 1e-15);
            }
        }

        let w = random_stack(4, 5, &mut rng);
        let cubed = ring.matrix() * ring.matrix() * ring.matrix();
        assert!((mix(&w, &ring, 3).unwrap() - &w * cubed).amax() < 1e-12);

        assert!(matches!(mix(&random_stack(2, 4, &mut rng), &ring, 1), Err(Error::Shape(_))));
        assert!(matches!(mix(&w, &ring, 0), Err(Error::Config(_))));
    }

    #[test]
    fn consensus_error_examples() {
        let same = DMatrix::from_fn(3, 4, |r, _| r as f64);
        assert_eq!(consensus_error(&same), 0.0);
        let v = [1.0, 2.0, -3.0];
        let w = DMatrix::from_fn(3, 2, |r, c| if c == 0 { v[r] } else { -v[r] });
        assert!((consensus_error(&w) - 2.0 * 14.0).abs() < 1e-12);

        let mut rng = stream(6, &[]);
        let w = random_stack(5, 6, &mut rng);
        let mean = column_mean(&w);
        let centered = DMatrix::from_fn(5, 6, |r, c| w[(r, c)] - mean[r]);
        assert!((consensus_error(&w) - centered.norm_squared()).abs() < 1e-12);
    }

    #[test]
    fn mixing_contracts_and_preserves_mean() {
        let mut rng = stream(7, &[]);
        for kind in [TopologyKind::Ring, TopologyKind::Random, TopologyKind::WattsStrogatz { k: 3, p: 0.5 }] {
            let m = metropolis_weights(&build_topology(kind, 8, &mut rng).unwrap()).unwrap();
            for _ in 0..20 {
                let w = random_stack(6, 8, &mut rng);
                let before = consensus_error(&w).sqrt();
                for rounds in 1..=10 {
                    let out = mix(&w, &m, rounds).unwrap();
                    assert!(consensus_error(&out).sqrt() <= m.rho().powi(rounds as i32) * before + 1e-10);
                    for (x, y) in column_mean(&out).iter().zip(column_mean(&w)) {
                        assert!((x - y).abs() < 1e-12);
                    }
                }
            }
        }
    }
}
