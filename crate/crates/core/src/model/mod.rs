//! The encoder: patch embedding, windowed attention blocks, checkpoint
//! adaptation and the full forward pass.

mod adapt;
mod blocks;
mod forward;
mod weights;

pub use adapt::{adapt_patch_kernel, adapt_pos_embedding, PosEmbedding};
pub use blocks::{encoder_block, mhsa, patch_embed, AttentionScores, HEADS, LN_EPS};
pub use forward::{
    forward, forward_graph, forward_traced, FeatureMap, FeatureOutput, ForwardTrace, GraphOutputs,
};
pub use weights::{BlockWeights, EmbedWeights, WeightSet};

use crate::error::{dim_err, Result};
use crate::tensor::Tensor;

/// `h×w` lattice of `d`-wide tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenGrid {
    values: Tensor,
}

impl TokenGrid {
    pub fn new(values: Tensor) -> Result<Self> {
        if values.rank() != 3 {
            return Err(dim_err(format!(
                "token grid must be h×w×d, got dims {:?}",
                values.dims()
            )));
        }
        Ok(Self { values })
    }

    /// Builds a grid from `h·w` rows of width `d`.
    pub fn from_rows(h: usize, w: usize, rows: Tensor) -> Result<Self> {
        let d = rows.last_dim();
        Self::new(rows.reshape(&[h, w, d])?)
    }

    pub fn h(&self) -> usize {
        self.values.dims()[0]
    }

    pub fn w(&self) -> usize {
        self.values.dims()[1]
    }

    pub fn d(&self) -> usize {
        self.values.dims()[2]
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn into_values(self) -> Tensor {
        self.values
    }

    /// The tokens as an `(h·w)×d` matrix.
    pub fn rows(&self) -> Tensor {
        self.values
            .reshape(&[self.h() * self.w(), self.d()])
            .expect("same element count")
    }
}
