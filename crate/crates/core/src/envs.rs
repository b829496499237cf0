//! Gridworlds with one factor per agent.
//!
//! Each agent lives on its own copy of a `width x height` grid. Its local
//! state is its cell `y * width + x` and its local actions are
//! [`LEFT`], [`RIGHT`], [`UP`], [`DOWN`] and [`STAY`]. Moves off the grid
//! leave the agent in place, and agents move independently, so the global
//! kernel is the product of the per-agent kernels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{encode, FactoredMdp};
use crate::utility::UtilitySpec;

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;
pub const UP: usize = 2;
pub const DOWN: usize = 3;
pub const STAY: usize = 4;
pub const N_MOVES: usize = 5;

/// A grid cell `(x, y)`.
pub type Cell = (usize, usize);

pub fn manhattan_distance(a: Cell, b: Cell) -> usize {
    a.0.abs_diff(b.0) + a.1.abs_diff(b.1)
}

fn default_discount() -> f64 {
    0.9
}

fn default_collision() -> f64 {
    -1.0
}

fn default_one() -> f64 {
    1.0
}

fn default_threshold() -> f64 {
    0.001
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridNavConfig {
    pub width: usize,
    pub height: usize,
    pub n_agents: usize,
    pub starts: Vec<Cell>,
    pub goals: Vec<Cell>,
    #[serde(default)]
    pub unsafe_cells: Vec<Cell>,
    /// Added to every agent's reward in states where two agents share a cell.
    #[serde(default = "default_collision")]
    pub collision_penalty: f64,
    #[serde(default = "default_one")]
    pub distance_reward_scale: f64,
    #[serde(default = "default_one")]
    pub cost_value: f64,
    #[serde(default = "default_threshold")]
    pub cost_threshold: f64,
    /// Probability that a move is replaced by a uniformly random one.
    #[serde(default)]
    pub slip_prob: f64,
    /// An agent that reaches its goal stays there.
    #[serde(default = "default_true")]
    pub absorbing_goals: bool,
    #[serde(default = "default_discount")]
    pub discount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExploreGridConfig {
    pub width: usize,
    pub height: usize,
    pub n_agents: usize,
    pub starts: Vec<Cell>,
    #[serde(default)]
    pub slip_prob: f64,
    #[serde(default = "default_discount")]
    pub discount: f64,
}

/// A navigation task: the MDP plus per-agent tables.
#[derive(Debug, Clone)]
pub struct NavTask {
    pub mdp: FactoredMdp,
    /// Local distance rewards `-scale · dist(cell_i, goal_i)`, shape `S_i x A_i`.
    pub rewards: Vec<Vec<f64>>,
    /// Local costs `cost_value · 1[cell_i unsafe]`, shape `S_i x A_i`.
    pub costs: Vec<Vec<f64>>,
    /// `1[two agents share a cell]` per global state.
    pub collision: Vec<f64>,
    pub collision_penalty: f64,
    pub cost_threshold: f64,
}

impl NavTask {
    /// Agent `i`'s full reward `r_i(s, a) = distance term + penalty · 1[collision in s]`
    /// over global pairs.
    pub fn global_reward(&self, agent: usize) -> Vec<f64> {
        let (ns, na) = (self.mdp.n_states(), self.mdp.n_actions());
        let local_na = self.mdp.local_action_sizes()[agent];
        let mut out = Vec::with_capacity(ns * na);
        for s in 0..ns {
            let si = self.mdp.local_state(s, agent);
            for a in 0..na {
                let ai = self.mdp.local_action(a, agent);
                out.push(self.rewards[agent][si * local_na + ai] + self.collision_penalty * self.collision[s]);
            }
        }
        out
    }

    /// Penalized utilities `⟨λ_i, r_i⟩ - z (⟨λ_i, c_i⟩ - C)²`, one per agent.
    pub fn penalty_utilities(&self, penalty: f64) -> Vec<UtilitySpec> {
        self.rewards
            .iter()
            .zip(&self.costs)
            .map(|(r, c)| UtilitySpec::QuadPenalty {
                reward: r.clone(),
                cost: c.clone(),
                threshold: self.cost_threshold,
                penalty,
            })
            .collect()
    }

    /// Unconstrained linear utilities `⟨λ_i, r_i⟩`.
    pub fn linear_utilities(&self) -> Vec<UtilitySpec> {
        self.rewards
            .iter()
            .map(|r| UtilitySpec::Linear { reward: r.clone() })
            .collect()
    }
}

fn check_cells(width: usize, height: usize, cells: &[Cell], what: &str) -> Result<()> {
    for &(x, y) in cells {
        if x >= width || y >= height {
            return Err(Error::Config(format!("{what} cell ({x}, {y}) outside {width}x{height} grid")));
        }
    }
    Ok(())
}

fn check_grid(width: usize, height: usize, n_agents: usize, starts: &[Cell], slip: f64) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::Config("grid must have at least one cell".into()));
    }
    if n_agents == 0 || starts.len() != n_agents {
        return Err(Error::Config(format!("{} start cells for {n_agents} agents", starts.len())));
    }
    if !(0.0..1.0).contains(&slip) {
        return Err(Error::Config(format!("slip_prob {slip} not in [0, 1)")));
    }
    check_cells(width, height, starts, "start")
}

fn step(width: usize, height: usize, (x, y): Cell, action: usize) -> Cell {
    match action {
        LEFT => (x.saturating_sub(1), y),
        RIGHT => ((x + 1).min(width - 1), y),
        UP => (x, (y + 1).min(height - 1)),
        DOWN => (x, y.saturating_sub(1)),
        _ => (x, y),
    }
}

/// One agent's kernel as sparse rows indexed `cell * 5 + action`.
fn local_kernel(width: usize, height: usize, slip: f64, absorbing: Option<usize>) -> Vec<Vec<(usize, f64)>> {
    let mut rows = Vec::with_capacity(width * height * N_MOVES);
    for cell in 0..width * height {
        let here = (cell % width, cell / width);
        for action in 0..N_MOVES {
            let mut row: Vec<(usize, f64)> = Vec::new();
            let mut add = |c: Cell, p: f64| {
                let idx = c.1 * width + c.0;
                match row.iter_mut().find(|(j, _)| *j == idx) {
                    Some(e) => e.1 += p,
                    None => row.push((idx, p)),
                }
            };
            if absorbing == Some(cell) {
                add(here, 1.0);
            } else {
                add(step(width, height, here, action), 1.0 - slip);
                if slip > 0.0 {
                    for other in 0..N_MOVES {
                        add(step(width, height, here, other), slip / N_MOVES as f64);
                    }
                }
            }
            row.sort_by_key(|e| e.0);
            rows.push(row);
        }
    }
    rows
}

/// The product of independent per-agent kernels.
fn product_mdp(local: &[Vec<Vec<(usize, f64)>>], n_cells: usize, starts: &[usize], discount: f64) -> Result<FactoredMdp> {
    let n = local.len();
    let sizes = vec![n_cells; n];
    let moves = vec![N_MOVES; n];
    let n_states = n_cells.pow(n as u32);
    let n_actions = N_MOVES.pow(n as u32);
    let mut rows = Vec::with_capacity(n_states * n_actions);
    let mut cells = vec![0; n];
    let mut acts = vec![0; n];
    for s in 0..n_states {
        let mut r = s;
        for i in (0..n).rev() {
            cells[i] = r % n_cells;
            r /= n_cells;
        }
        for a in 0..n_actions {
            let mut r = a;
            for i in (0..n).rev() {
                acts[i] = r % N_MOVES;
                r /= N_MOVES;
            }
            let mut row: Vec<(usize, f64)> = vec![(0, 1.0)];
            for i in 0..n {
                let factor = &local[i][cells[i] * N_MOVES + acts[i]];
                row = row
                    .iter()
                    .flat_map(|&(base, p)| factor.iter().map(move |&(c, q)| (base * n_cells + c, p * q)))
                    .collect();
            }
            rows.push(row);
        }
    }
    let mut initial = vec![0.0; n_states];
    initial[encode(starts, &sizes)?] = 1.0;
    FactoredMdp::from_rows(sizes, moves, rows, initial, discount)
}

pub fn build_nav_mdp(cfg: &GridNavConfig) -> Result<NavTask> {
    check_grid(cfg.width, cfg.height, cfg.n_agents, &cfg.starts, cfg.slip_prob)?;
    if cfg.goals.len() != cfg.n_agents {
        return Err(Error::Config(format!("{} goal cells for {} agents", cfg.goals.len(), cfg.n_agents)));
    }
    check_cells(cfg.width, cfg.height, &cfg.goals, "goal")?;
    check_cells(cfg.width, cfg.height, &cfg.unsafe_cells, "unsafe")?;
    for (x, name) in [
        (cfg.collision_penalty, "collision_penalty"),
        (cfg.distance_reward_scale, "distance_reward_scale"),
        (cfg.cost_value, "cost_value"),
        (cfg.cost_threshold, "cost_threshold"),
    ] {
        if !x.is_finite() {
            return Err(Error::Config(format!("{name} must be finite")));
        }
    }
    let width = cfg.width;
    let n_cells = width * cfg.height;
    let index = |c: Cell| c.1 * width + c.0;

    let local: Vec<_> = cfg
        .goals
        .iter()
        .map(|&g| local_kernel(width, cfg.height, cfg.slip_prob, cfg.absorbing_goals.then(|| index(g))))
        .collect();
    let starts: Vec<usize> = cfg.starts.iter().map(|&c| index(c)).collect();
    let mdp = product_mdp(&local, n_cells, &starts, cfg.discount)?;

    let cell_of = |k: usize| (k % width, k / width);
    let rewards = cfg
        .goals
        .iter()
        .map(|&g| {
            (0..n_cells)
                .flat_map(|k| {
                    let r = -cfg.distance_reward_scale * manhattan_distance(cell_of(k), g) as f64;
                    std::iter::repeat_n(r, N_MOVES)
                })
                .collect()
        })
        .collect();
    let costs = (0..cfg.n_agents)
        .map(|_| {
            (0..n_cells)
                .flat_map(|k| {
                    let c = if cfg.unsafe_cells.contains(&cell_of(k)) { cfg.cost_value } else { 0.0 };
                    std::iter::repeat_n(c, N_MOVES)
                })
                .collect()
        })
        .collect();
    let collision = (0..mdp.n_states())
        .map(|s| {
            let here: Vec<usize> = (0..cfg.n_agents).map(|i| mdp.local_state(s, i)).collect();
            let shared = (0..here.len()).any(|i| here[i + 1..].contains(&here[i]));
            if shared {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Ok(NavTask {
        mdp,
        rewards,
        costs,
        collision,
        collision_penalty: cfg.collision_penalty,
        cost_threshold: cfg.cost_threshold,
    })
}

pub fn build_explore_mdp(cfg: &ExploreGridConfig) -> Result<FactoredMdp> {
    check_grid(cfg.width, cfg.height, cfg.n_agents, &cfg.starts, cfg.slip_prob)?;
    let local = local_kernel(cfg.width, cfg.height, cfg.slip_prob, None);
    let kernels = vec![local; cfg.n_agents];
    let starts: Vec<usize> = cfg.starts.iter().map(|c| c.1 * cfg.width + c.0).collect();
    product_mdp(&kernels, cfg.width * cfg.height, &starts, cfg.discount)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::exact_local_occupancies;
    use crate::policy::JointPolicy;
    use crate::rng::stream;
    use rand::Rng;

    fn nav(width: usize, height: usize, slip: f64) -> GridNavConfig {
        GridNavConfig {
            width,
            height,
            n_agents: 2,
            starts: vec![(0, 0), (width - 1, height - 1)],
            goals: vec![(width - 1, height - 1), (0, 0)],
            unsafe_cells: vec![(1, 1)],
            collision_penalty: -1.0,
            distance_reward_scale: 1.0,
            cost_value: 1.0,
            cost_threshold: 0.001,
            slip_prob: slip,
            absorbing_goals: true,
            discount: 0.9,
        }
    }

    #[test]
    fn manhattan_examples() {
        assert_eq!(manhattan_distance((0, 0), (0, 0)), 0);
        assert_eq!(manhattan_distance((0, 0), (2, 3)), 5);
        let mut rng = stream(1, &[]);
        for _ in 0..100 {
            let a = (rng.random_range(0..50), rng.random_range(0..50));
            let b = (rng.random_range(0..50), rng.random_range(0..50));
            assert_eq!(manhattan_distance(a, b), manhattan_distance(b, a));
        }
    }

    #[test]
    fn nav_rewards_and_collisions() {
        let task = build_nav_mdp(&nav(3, 3, 0.0)).unwrap();
        // agent 0 at its goal (2, 2) = cell 8
        assert_eq!(task.rewards[0][8 * N_MOVES + STAY], 0.0);
        assert_eq!(task.rewards[0][0], -4.0);
        let sizes = [9, 9];
        let same = encode(&[4, 4], &sizes).unwrap();
        let apart = encode(&[4, 5], &sizes).unwrap();
        assert_eq!(task.collision[same], 1.0);
        assert_eq!(task.collision[apart], 0.0);
        let a = 3;
        let r0 = task.global_reward(0);
        let na = task.mdp.n_actions();
        let local = task.rewards[0][4 * N_MOVES + task.mdp.local_action(a, 0)];
        assert_eq!(r0[same * na + a], local - 1.0);
        assert_eq!(r0[apart * na + a], local);
        assert_eq!(task.costs[1][4 * N_MOVES + LEFT], 1.0);
        assert_eq!(task.costs[1][5 * N_MOVES + LEFT], 0.0);
    }

    #[test]
    fn deterministic_moves_give_one_hot_rows() {
        let task = build_nav_mdp(&nav(3, 3, 0.0)).unwrap();
        let mdp = &task.mdp;
        for s in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                let row: Vec<_> = mdp.transitions(s, a).collect();
                assert_eq!(row.len(), 1);
                assert_eq!(row[0].1, 1.0);
            }
        }
    }

    #[test]
    fn kernel_factorizes() {
        let cfg = nav(3, 3, 0.3);
        let task = build_nav_mdp(&cfg).unwrap();
        let mdp = &task.mdp;
        let locals: Vec<_> = (0..2)
            .map(|i| local_kernel(3, 3, 0.3, Some(cfg.goals[i].1 * 3 + cfg.goals[i].0)))
            .collect();
        let local_p = |i: usize, c: usize, a: usize, c2: usize| {
            locals[i][c * N_MOVES + a].iter().find(|e| e.0 == c2).map_or(0.0, |e| e.1)
        };
        for s in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                let mut total = 0.0;
                for s2 in 0..mdp.n_states() {
                    let expect: f64 = (0..2)
                        .map(|i| local_p(i, mdp.local_state(s, i), mdp.local_action(a, i), mdp.local_state(s2, i)))
                        .product();
                    assert!((mdp.prob(s, a, s2) - expect).abs() < 1e-15);
                    total += mdp.prob(s, a, s2);
                }
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn goals_absorb() {
        let task = build_nav_mdp(&nav(3, 3, 0.2)).unwrap();
        let mdp = &task.mdp;
        // agent 0 at goal 8, agent 1 at goal 0: every joint action stays put
        let s = encode(&[8, 0], &[9, 9]).unwrap();
        for a in 0..mdp.n_actions() {
            assert_eq!(mdp.prob(s, a, s), 1.0);
        }
        let mut cfg = nav(3, 3, 0.0);
        cfg.absorbing_goals = false;
        let task = build_nav_mdp(&cfg).unwrap();
        let a = encode(&[LEFT, STAY], &[5, 5]).unwrap();
        assert_eq!(task.mdp.prob(s, a, s), 0.0);
    }

    #[test]
    fn invalid_cells_are_config_errors() {
        let mut cfg = nav(3, 3, 0.0);
        cfg.goals[1] = (3, 0);
        assert!(matches!(build_nav_mdp(&cfg), Err(Error::Config(_))));
        let mut cfg = nav(3, 3, 0.0);
        cfg.unsafe_cells.push((0, 7));
        assert!(matches!(build_nav_mdp(&cfg), Err(Error::Config(_))));
        let mut cfg = nav(3, 3, 0.0);
        cfg.slip_prob = 1.0;
        assert!(matches!(build_nav_mdp(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn explore_examples() {
        let one = ExploreGridConfig {
            width: 1,
            height: 1,
            n_agents: 1,
            starts: vec![(0, 0)],
            slip_prob: 0.0,
            discount: 0.9,
        };
        let mdp = build_explore_mdp(&one).unwrap();
        assert_eq!(mdp.n_states(), 1);
        for a in 0..N_MOVES {
            assert_eq!(mdp.prob(0, a, 0), 1.0);
        }

        let big = ExploreGridConfig {
            width: 10,
            height: 10,
            n_agents: 2,
            starts: vec![(0, 0), (9, 9)],
            slip_prob: 0.0,
            discount: 0.9,
        };
        let mdp = build_explore_mdp(&big).unwrap();
        assert_eq!(mdp.local_state_sizes(), &[100, 100]);
    }

    #[test]
    fn uniform_policy_occupancy_is_symmetric() {
        // a centred start makes the 5x5 grid symmetric under its dihedral group
        let cfg = ExploreGridConfig {
            width: 5,
            height: 5,
            n_agents: 1,
            starts: vec![(2, 2)],
            slip_prob: 0.0,
            discount: 0.9,
        };
        let mdp = build_explore_mdp(&cfg).unwrap();
        let lambda = &exact_local_occupancies(&mdp, &JointPolicy::uniform(&mdp)).unwrap()[0];
        let nu = lambda.state_marginal();
        let at = |x: usize, y: usize| nu[y * 5 + x];
        for y in 0..5 {
            for x in 0..5 {
                let images = [(4 - x, y), (x, 4 - y), (y, x), (4 - y, 4 - x)];
                for (x2, y2) in images {
                    assert!((at(x, y) - at(x2, y2)).abs() < 1e-12);
                }
            }
        }
    }
}
