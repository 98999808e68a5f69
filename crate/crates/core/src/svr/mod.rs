//! Siamese reconstruction of high-quality embeddings from low-quality ones.
//!
//! Two weight-shared copies of one network map a pair of low-quality
//! embeddings; training pulls each output toward its high-quality counterpart
//! while pushing the outputs' cosine toward 1 for same-speaker pairs and 0
//! otherwise. At inference only the single network is used.

mod loss;
mod mlp;
mod pairs;
mod train;

pub use loss::{
    batch_loss_and_grad, svr_pair_grad, svr_pair_loss, LossWeights, PairLoss, PairSample,
    MIN_OUTPUT_NORM,
};
pub use mlp::{load_model, save_model, Activation, DenseLayer, MlpGradient, MlpParameters};
pub use pairs::{sample_pairs, PairedData};
pub use train::{train, write_loss_curve, OptimizerKind, TrainConfig, TrainOutcome};

use crate::embedding::EmbeddingSet;
use crate::{Error, Result};

/// Replaces every vector by the network output; ids and order are kept.
pub fn reconstruct(params: &MlpParameters, set: &EmbeddingSet) -> Result<EmbeddingSet> {
    if set.dim() != params.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.dim(),
            found: set.dim(),
        });
    }
    set.try_map_vectors(|v| params.forward(v))
}
