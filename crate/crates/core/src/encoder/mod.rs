//! Sources of per-sub-token contextual hidden states: a trainable toy
//! transformer and a store of states exported from an external model.

mod store;
mod toy;

pub use store::{PrecomputedStore, NULL_PAIR_ID};
pub use toy::{joint_ids, EncoderConfig, EncoderOutput, JointLayout, ToyEncoder};

use crate::error::{dim_err, Result};
use crate::numgrad::Tensor;

/// Last-layer hidden states, one row per sub-token.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenStates {
    matrix: Tensor,
}

impl HiddenStates {
    pub fn new(matrix: Tensor) -> Result<Self> {
        if matrix.shape().len() != 2 {
            return Err(dim_err!(
                "hidden states must be T×H, got {:?}",
                matrix.shape()
            ));
        }
        matrix.check_finite("hidden states")?;
        Ok(HiddenStates { matrix })
    }

    pub fn matrix(&self) -> &Tensor {
        &self.matrix
    }

    pub fn into_matrix(self) -> Tensor {
        self.matrix
    }

    pub fn token_count(&self) -> usize {
        self.matrix.shape()[0]
    }

    pub fn hidden_size(&self) -> usize {
        self.matrix.shape()[1]
    }
}
