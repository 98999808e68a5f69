//! Trial scoring backends and their adaptation/normalization companions.

mod plda;
mod snorm;
mod trials;

pub use plda::{
    load_plda, plda_adapt, plda_train_em, save_plda, PldaModel, PldaScorer, PldaTraining,
};
pub use snorm::{snorm, snorm_score, Cohort, CohortStats, DEFAULT_TOP_K};
pub use trials::{score_trials, Backend, ScoreOptions};
