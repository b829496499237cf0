//! Batch sizes, horizons and step sizes per iteration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::SCORE_BOUND;

/// Constants that appear only inside the actor step-size formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConstants {
    /// Strong-convexity modulus of the critic loss. When absent it is
    /// computed from the feature covariance at the initial policy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_w: Option<f64>,
    #[serde(default = "one")]
    pub critic_bound: f64,
    #[serde(default = "one")]
    pub l_theta: f64,
}

impl Default for AnalysisConstants {
    fn default() -> Self {
        Self {
            mu_w: None,
            critic_bound: 1.0,
            l_theta: 1.0,
        }
    }
}

fn one() -> f64 {
    1.0
}

fn two() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    /// Constant parameters targeting an ε-stationary point:
    /// `T = ⌈t_scale ε^{-3/2}⌉`, `H = ⌈h_scale log(1/ε)/(1-γ)⌉`,
    /// `B = ⌈b_scale log(1/δ_k)/ε⌉` with `δ_k = δ/(3N(T+1))`, and
    /// `η_w = min(eta_w_scale √ε, 1/L_w)`.
    Constant {
        epsilon: f64,
        delta: f64,
        #[serde(default = "one")]
        t_scale: f64,
        #[serde(default = "one")]
        h_scale: f64,
        #[serde(default = "one")]
        b_scale: f64,
        #[serde(default = "one")]
        eta_w_scale: f64,
        #[serde(default)]
        analysis: AnalysisConstants,
    },
    /// Growing batches and horizons with `δ_k = 2δ/(Nπ²(k+1)²)`,
    /// `H_k = ⌈h_scale log(k+2)/(1-γ)⌉`, `B_k = ⌈log(1/δ_k)(k+1)^{2/3}⌉`
    /// and `η_w^k = min((k+1)^{-1/3}, 1/L_w)`.
    Adaptive {
        iterations: usize,
        delta: f64,
        #[serde(default = "two")]
        h_scale: f64,
        #[serde(default)]
        analysis: AnalysisConstants,
    },
    /// Fixed, user-chosen parameters.
    Manual {
        iterations: usize,
        batch: usize,
        horizon: usize,
        eta_theta: f64,
        eta_w: f64,
    },
}

impl ScheduleSpec {
    pub fn analysis(&self) -> Option<&AnalysisConstants> {
        match self {
            ScheduleSpec::Constant { analysis, .. } | ScheduleSpec::Adaptive { analysis, .. } => Some(analysis),
            ScheduleSpec::Manual { .. } => None,
        }
    }

    /// Whether the actor step needs `μ_w` and none was supplied.
    pub fn needs_mu_w(&self) -> bool {
        self.analysis().is_some_and(|a| a.mu_w.is_none())
    }
}

/// Problem quantities the schedule formulas depend on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleContext {
    pub n_agents: usize,
    pub discount: f64,
    /// Feature bound `C_φ`.
    pub feature_bound: f64,
    /// Used when the spec leaves `μ_w` unset.
    pub mu_w: Option<f64>,
}

/// Parameters of one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationParams {
    pub batch: usize,
    pub horizon: usize,
    pub eta_theta: f64,
    pub eta_w: f64,
    /// Per-iteration failure probability, when the mode defines one.
    pub delta_k: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    spec: ScheduleSpec,
    ctx: ScheduleContext,
    mu_w: f64,
    iterations: usize,
}

/// Ceiling that ignores float noise just above an integer.
fn ceil_tol(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

fn to_count(x: f64, what: &str) -> Result<usize> {
    if !x.is_finite() || x > 1e12 {
        return Err(Error::Config(format!("{what} = {x} is not a usable count")));
    }
    Ok((ceil_tol(x) as usize).max(1))
}

fn positive(x: f64, what: &str) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} must be positive and finite, got {x}")))
    }
}

impl Schedule {
    pub fn new(spec: ScheduleSpec, ctx: ScheduleContext) -> Result<Self> {
        if ctx.n_agents == 0 {
            return Err(Error::Config("schedule needs at least one agent".into()));
        }
        if !(ctx.discount > 0.0 && ctx.discount < 1.0) {
            return Err(Error::Config(format!("discount {} not in (0, 1)", ctx.discount)));
        }
        positive(ctx.feature_bound, "feature bound")?;
        let mut mu_w = f64::NAN;
        let iterations = match &spec {
            ScheduleSpec::Constant {
                epsilon,
                delta,
                t_scale,
                h_scale,
                b_scale,
                eta_w_scale,
                analysis,
            } => {
                if !(*epsilon > 0.0 && *epsilon < 1.0) {
                    return Err(Error::Config(format!("epsilon {epsilon} not in (0, 1)")));
                }
                if !(*delta > 0.0 && *delta < 1.0) {
                    return Err(Error::Config(format!("delta {delta} not in (0, 1)")));
                }
                for (x, name) in [
                    (*t_scale, "t_scale"),
                    (*h_scale, "h_scale"),
                    (*b_scale, "b_scale"),
                    (*eta_w_scale, "eta_w_scale"),
                ] {
                    positive(x, name)?;
                }
                mu_w = Self::resolve_mu_w(analysis, &ctx)?;
                to_count(t_scale * epsilon.powf(-1.5), "T")?
            }
            ScheduleSpec::Adaptive {
                iterations,
                delta,
                h_scale,
                analysis,
            } => {
                if !(*delta > 0.0 && *delta < 1.0) {
                    return Err(Error::Config(format!("delta {delta} not in (0, 1)")));
                }
                positive(*h_scale, "h_scale")?;
                mu_w = Self::resolve_mu_w(analysis, &ctx)?;
                *iterations
            }
            ScheduleSpec::Manual {
                iterations,
                batch,
                horizon,
                eta_theta,
                eta_w,
            } => {
                if *batch == 0 || *horizon == 0 {
                    return Err(Error::Config("batch and horizon must be at least 1".into()));
                }
                positive(*eta_theta, "eta_theta")?;
                positive(*eta_w, "eta_w")?;
                let l_w = ctx.feature_bound.powi(2) / (1.0 - ctx.discount);
                if *eta_w > 1.0 / l_w * (1.0 + 1e-12) {
                    return Err(Error::Config(format!("eta_w {eta_w} exceeds 1/L_w = {}", 1.0 / l_w)));
                }
                *iterations
            }
        };
        let schedule = Self {
            spec,
            ctx,
            mu_w,
            iterations,
        };
        // constant mode: surface unusable batch sizes now rather than mid-run
        if let ScheduleSpec::Constant { .. } = schedule.spec {
            schedule.try_params(0)?;
        }
        Ok(schedule)
    }

    fn resolve_mu_w(analysis: &AnalysisConstants, ctx: &ScheduleContext) -> Result<f64> {
        positive(analysis.critic_bound, "critic_bound")?;
        positive(analysis.l_theta, "l_theta")?;
        let mu = analysis
            .mu_w
            .or(ctx.mu_w)
            .ok_or_else(|| Error::Config("mu_w is required by this schedule".into()))?;
        positive(mu, "mu_w")?;
        Ok(mu)
    }

    pub fn spec(&self) -> &ScheduleSpec {
        &self.spec
    }

    /// `T`, the number of iterations.
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// The resolved `μ_w`, or NaN in manual mode.
    pub fn mu_w(&self) -> f64 {
        self.mu_w
    }

    /// `L_w = C_φ²/(1-γ)`.
    pub fn l_w(&self) -> f64 {
        self.ctx.feature_bound.powi(2) / (1.0 - self.ctx.discount)
    }

    /// `η_θ` as a function of the critic step it is paired with.
    pub fn actor_step(&self, eta_w: f64, analysis: &AnalysisConstants) -> f64 {
        let n = self.ctx.n_agents as f64;
        let denom = (4.0 * (3.0 * n).sqrt()).max(6.0 * 10f64.sqrt());
        let coupled = (1.0 - self.ctx.discount) * self.mu_w * eta_w
            / (analysis.critic_bound * self.ctx.feature_bound * SCORE_BOUND)
            / denom;
        coupled.min(1.0 / (4.0 * analysis.l_theta))
    }

    pub fn params(&self, k: usize) -> IterationParams {
        self.try_params(k).expect("schedule parameters were validated")
    }

    pub fn try_params(&self, k: usize) -> Result<IterationParams> {
        let gamma = self.ctx.discount;
        let n = self.ctx.n_agents as f64;
        match &self.spec {
            ScheduleSpec::Constant {
                epsilon,
                delta,
                h_scale,
                b_scale,
                eta_w_scale,
                analysis,
                ..
            } => {
                let delta_k = delta / (3.0 * n * (self.iterations as f64 + 1.0));
                let horizon = to_count(h_scale * (1.0 / epsilon).ln() / (1.0 - gamma), "H")?;
                let batch = to_count(b_scale * (1.0 / delta_k).ln() / epsilon, "B")?;
                let eta_w = (eta_w_scale * epsilon.sqrt()).min(1.0 / self.l_w());
                Ok(IterationParams {
                    batch,
                    horizon,
                    eta_theta: self.actor_step(eta_w, analysis),
                    eta_w,
                    delta_k: Some(delta_k),
                })
            }
            ScheduleSpec::Adaptive {
                delta,
                h_scale,
                analysis,
                ..
            } => {
                let kp1 = k as f64 + 1.0;
                let delta_k = adaptive_delta(*delta, self.ctx.n_agents, k);
                let horizon = to_count(h_scale * (k as f64 + 2.0).ln() / (1.0 - gamma), "H")?;
                let batch = to_count((1.0 / delta_k).ln() * kp1.cbrt().powi(2), "B")?;
                let eta_w_at = |j: f64| (1.0 / j.cbrt()).min(1.0 / self.l_w());
                Ok(IterationParams {
                    batch,
                    horizon,
                    eta_theta: self.actor_step(eta_w_at(kp1 + 1.0), analysis),
                    eta_w: eta_w_at(kp1),
                    delta_k: Some(delta_k),
                })
            }
            ScheduleSpec::Manual {
                batch,
                horizon,
                eta_theta,
                eta_w,
                ..
            } => Ok(IterationParams {
                batch: *batch,
                horizon: *horizon,
                eta_theta: *eta_theta,
                eta_w: *eta_w,
                delta_k: None,
            }),
        }
    }
}

/// `δ_k = 2δ/(Nπ²(k+1)²)`, whose union bound `3N Σ_k δ_k` stays below `δ`.
pub fn adaptive_delta(delta: f64, n_agents: usize, k: usize) -> f64 {
    let kp1 = k as f64 + 1.0;
    2.0 * delta / (n_agents as f64 * std::f64::consts::PI.powi(2) * kp1 * kp1)
}
