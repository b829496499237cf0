//! Local utilities of an agent's occupancy measure and their shadow rewards.
//!
//! Each [`UtilitySpec`] maps a local measure `λ_i` (shape `S_i x A_i`) to a
//! scalar `F_i(λ_i)` and to its gradient `∂F_i/∂λ_i`, the *shadow reward*
//! that stands in for the reward when the utility is linearized. Every
//! variant is maximized; the KL variant therefore returns the negated
//! divergence.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::OccupancyMeasure;

/// Default smoothing added inside logarithms.
pub const DEFAULT_SMOOTHING: f64 = 1e-8;

/// Which coordinates an entropy or KL utility is computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    /// The state marginal `Σ_a λ(s, a)`; gradients are broadcast over actions.
    State,
    StateAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UtilitySpec {
    /// `⟨λ, r⟩`.
    Linear { reward: Vec<f64> },
    /// `-Σ x log(x + ε)` over the chosen support, where `x = λ̃` or, when
    /// `normalized`, `x = (1-γ)λ̃`.
    Entropy {
        support: Support,
        smoothing: f64,
        #[serde(default)]
        normalized: bool,
    },
    /// `-Σ u log((u + ε) / (λ̄ + ε))` with `u = (1-γ)λ̃`.
    KlPrior {
        support: Support,
        prior: Vec<f64>,
        discount: f64,
        smoothing: f64,
    },
    /// `⟨λ, r⟩ - z (⟨λ, c⟩ - C)^2`.
    QuadPenalty {
        reward: Vec<f64>,
        cost: Vec<f64>,
        threshold: f64,
        penalty: f64,
    },
}

/// `∂F_i/∂λ_i`, tabulated over the local `(s, a)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ShadowRewardTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl ShadowRewardTable {
    pub fn new(n_states: usize, n_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_states * n_actions {
            return Err(Error::Shape("shadow reward table has the wrong size".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("shadow reward must be finite".into()));
        }
        Ok(Self {
            n_states,
            n_actions,
            values,
        })
    }

    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            values: vec![0.0; n_states * n_actions],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Flip the sign of every entry. Only useful as a negative control.
    pub fn negated(&self) -> Self {
        Self {
            values: self.values.iter().map(|v| -v).collect(),
            ..self.clone()
        }
    }
}

impl UtilitySpec {
    /// Plain entropy over the state marginal with default smoothing.
    pub fn state_entropy() -> Self {
        UtilitySpec::Entropy {
            support: Support::State,
            smoothing: DEFAULT_SMOOTHING,
            normalized: false,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            UtilitySpec::Linear { .. } => "linear",
            UtilitySpec::Entropy { .. } => "entropy",
            UtilitySpec::KlPrior { .. } => "kl_prior",
            UtilitySpec::QuadPenalty { .. } => "quad_penalty",
        }
    }

    /// Check tables and parameters against a local `S_i x A_i` shape.
    pub fn validate(&self, n_states: usize, n_actions: usize) -> Result<()> {
        let n = n_states * n_actions;
        let table = |t: &[f64], what: &str| -> Result<()> {
            if t.len() != n {
                return Err(Error::Shape(format!(
                    "{what} table has {} entries, expected {n_states}x{n_actions}",
                    t.len()
                )));
            }
            if t.iter().any(|x| !x.is_finite()) {
                return Err(Error::Domain(format!("{what} table has non-finite entries")));
            }
            Ok(())
        };
        match self {
            UtilitySpec::Linear { reward } => table(reward, "reward"),
            UtilitySpec::Entropy { smoothing, .. } => check_smoothing(*smoothing),
            UtilitySpec::KlPrior {
                support,
                prior,
                discount,
                smoothing,
            } => {
                check_smoothing(*smoothing)?;
                if !(*discount > 0.0 && *discount < 1.0) {
                    return Err(Error::Domain(format!("discount {discount} not in (0, 1)")));
                }
                let expected = match support {
                    Support::State => n_states,
                    Support::StateAction => n,
                };
                if prior.len() != expected {
                    return Err(Error::Shape(format!(
                        "prior has {} entries, expected {expected}",
                        prior.len()
                    )));
                }
                if prior.iter().any(|&p| !(p >= 0.0)) {
                    return Err(Error::Domain("prior has negative entries".into()));
                }
                let total: f64 = prior.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::Domain(format!("prior sums to {total}, expected 1")));
                }
                Ok(())
            }
            UtilitySpec::QuadPenalty {
                reward,
                cost,
                threshold,
                penalty,
            } => {
                table(reward, "reward")?;
                table(cost, "cost")?;
                if !threshold.is_finite() {
                    return Err(Error::Domain("threshold must be finite".into()));
                }
                if !(*penalty >= 0.0) {
                    return Err(Error::Domain(format!("penalty {penalty} must be >= 0")));
                }
                Ok(())
            }
        }
    }

    fn check_input(&self, lambda: &OccupancyMeasure) -> Result<()> {
        self.validate(lambda.n_states(), lambda.n_actions())?;
        if lambda.mass().iter().any(|&m| m < 0.0) {
            return Err(Error::Domain("occupancy measure has negative mass".into()));
        }
        Ok(())
    }

    /// `F_i(λ_i)`.
    pub fn value(&self, lambda: &OccupancyMeasure) -> Result<f64> {
        self.check_input(lambda)?;
        let mass = lambda.mass();
        Ok(match self {
            UtilitySpec::Linear { reward } => dot(mass, reward),
            UtilitySpec::Entropy {
                support,
                smoothing,
                normalized,
            } => {
                let scale = if *normalized { 1.0 - lambda.discount() } else { 1.0 };
                support_view(lambda, *support)
                    .iter()
                    .map(|&x| {
                        let u = scale * x;
                        -u * (u + smoothing).ln()
                    })
                    .sum()
            }
            UtilitySpec::KlPrior {
                support,
                prior,
                discount,
                smoothing,
            } => support_view(lambda, *support)
                .iter()
                .zip(prior)
                .map(|(&x, &p)| {
                    let u = (1.0 - discount) * x;
                    -u * ((u + smoothing) / (p + smoothing)).ln()
                })
                .sum(),
            UtilitySpec::QuadPenalty {
                reward,
                cost,
                threshold,
                penalty,
            } => {
                let gap = dot(mass, cost) - threshold;
                dot(mass, reward) - penalty * gap * gap
            }
        })
    }

    /// The shadow reward `∂F_i/∂λ_i` at `λ_i`.
    ///
    /// For the smoothed entropy and KL variants the table is checked against
    /// the cap `|ln ε| + 2`; exceeding it returns [`Error::BoundViolation`].
    pub fn shadow_reward(&self, lambda: &OccupancyMeasure) -> Result<ShadowRewardTable> {
        self.check_input(lambda)?;
        let (ns, na) = (lambda.n_states(), lambda.n_actions());
        let mass = lambda.mass();
        let values = match self {
            UtilitySpec::Linear { reward } => reward.clone(),
            UtilitySpec::Entropy {
                support,
                smoothing,
                normalized,
            } => {
                let scale = if *normalized { 1.0 - lambda.discount() } else { 1.0 };
                let grad: Vec<f64> = support_view(lambda, *support)
                    .iter()
                    .map(|&x| {
                        let u = scale * x;
                        -scale * ((u + smoothing).ln() + u / (u + smoothing))
                    })
                    .collect();
                broadcast(grad, *support, ns, na)
            }
            UtilitySpec::KlPrior {
                support,
                prior,
                discount,
                smoothing,
            } => {
                let g = 1.0 - discount;
                let grad: Vec<f64> = support_view(lambda, *support)
                    .iter()
                    .zip(prior)
                    .map(|(&x, &p)| {
                        let u = g * x;
                        -g * (((u + smoothing) / (p + smoothing)).ln() + u / (u + smoothing))
                    })
                    .collect();
                broadcast(grad, *support, ns, na)
            }
            UtilitySpec::QuadPenalty {
                reward,
                cost,
                threshold,
                penalty,
            } => {
                let gap = dot(mass, cost) - threshold;
                reward
                    .iter()
                    .zip(cost)
                    .map(|(r, c)| r - 2.0 * penalty * gap * c)
                    .collect()
            }
        };
        let table = ShadowRewardTable::new(ns, na, values)?;
        if let Some(cap) = self.shadow_cap() {
            let sup = table.sup_norm();
            if sup > cap {
                return Err(Error::BoundViolation(format!(
                    "{} shadow reward sup-norm {sup} exceeds cap {cap}",
                    self.name()
                )));
            }
        }
        Ok(table)
    }

    /// The sup-norm cap `C_F` that smoothed log-utilities must respect on
    /// measures of mass at most `1/ε`; `None` for variants without one.
    pub fn shadow_cap(&self) -> Option<f64> {
        match self {
            UtilitySpec::Entropy { smoothing, .. } | UtilitySpec::KlPrior { smoothing, .. } => {
                Some(smoothing.ln().abs() + 2.0)
            }
            _ => None,
        }
    }

    /// The constraint residual `⟨λ, c⟩ - C`, when the utility carries one.
    pub fn constraint_gap(&self, lambda: &OccupancyMeasure) -> Option<f64> {
        match self {
            UtilitySpec::QuadPenalty { cost, threshold, .. } if cost.len() == lambda.mass().len() => {
                Some(dot(lambda.mass(), cost) - threshold)
            }
            _ => None,
        }
    }
}

fn check_smoothing(eps: f64) -> Result<()> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::Domain(format!("smoothing {eps} must be > 0")));
    }
    Ok(())
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn support_view(lambda: &OccupancyMeasure, support: Support) -> Vec<f64> {
    match support {
        Support::State => lambda.state_marginal(),
        Support::StateAction => lambda.mass().to_vec(),
    }
}

fn broadcast(grad: Vec<f64>, support: Support, ns: usize, na: usize) -> Vec<f64> {
    match support {
        Support::StateAction => grad,
        Support::State => (0..ns * na).map(|k| grad[k / na]).collect(),
    }
}

/// `R = (1/N) Σ_i F_i`.
pub fn aggregate_global(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Aggregate("no local utilities to aggregate".into()));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}
