//! JSON snapshots of a [`TrainerState`].
//!
//! ```json
//! {
//!   "magic": "DSAC-CHECKPOINT",
//!   "version": 1,
//!   "k": 12,
//!   "seed": 7,
//!   "policy": [{ "n_states": 4, "n_actions": 2, "logits": [...] }, ...],
//!   "critics": { "rows": 8, "cols": 2, "data": [...] }
//! }
//! ```
//!
//! `policy` holds one logit table per agent, row-major by global state.
//! `critics.data` is the `rows x cols` critic stack in column-major order,
//! so agent `i`'s weights are `data[i * rows..(i + 1) * rows]`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::TrainerState;
use crate::error::{Error, Result};
use crate::policy::{JointPolicy, SoftmaxPolicyParams};

pub const CHECKPOINT_MAGIC: &str = "DSAC-CHECKPOINT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    pub n_states: usize,
    pub n_actions: usize,
    pub logits: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticStack {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub magic: String,
    pub version: u32,
    pub k: usize,
    pub seed: u64,
    pub policy: Vec<PolicyTable>,
    pub critics: CriticStack,
}

impl Checkpoint {
    pub fn from_state(state: &TrainerState) -> Self {
        Self {
            magic: CHECKPOINT_MAGIC.into(),
            version: CHECKPOINT_VERSION,
            k: state.k,
            seed: state.seed,
            policy: state
                .policy
                .agents()
                .iter()
                .map(|p| PolicyTable {
                    n_states: p.n_states(),
                    n_actions: p.n_actions(),
                    logits: p.logits().to_vec(),
                })
                .collect(),
            critics: CriticStack {
                rows: state.critics.nrows(),
                cols: state.critics.ncols(),
                data: state.critics.as_slice().to_vec(),
            },
        }
    }

    pub fn into_state(self) -> Result<TrainerState> {
        if self.magic != CHECKPOINT_MAGIC {
            return Err(Error::Config(format!("not a checkpoint (magic {:?})", self.magic)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!("unsupported checkpoint version {}", self.version)));
        }
        let per_agent = self
            .policy
            .into_iter()
            .enumerate()
            .map(|(i, t)| SoftmaxPolicyParams::from_logits(i, t.n_states, t.n_actions, t.logits))
            .collect::<Result<Vec<_>>>()?;
        let c = self.critics;
        if c.data.len() != c.rows * c.cols {
            return Err(Error::Shape(format!("critic data has {} entries, expected {}x{}", c.data.len(), c.rows, c.cols)));
        }
        Ok(TrainerState {
            policy: JointPolicy::new(per_agent)?,
            critics: DMatrix::from_vec(c.rows, c.cols, c.data),
            k: self.k,
            seed: self.seed,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Domain(format!("checkpoint serialization: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("checkpoint parse: {e}")))
    }
}
