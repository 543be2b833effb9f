//! Baseline systems the hybrid scheme is measured against: time-series
//! prediction pooled through Cross-Association co-clustering (with an
//! optional victim k-NN stage), and benefit-ranked pairwise sharing.

use thiserror::Error;

mod cross_association;
mod pair_selection;
mod ts_pipeline;

pub use cross_association::{cross_associate, BinaryMatrix, CoClustering};
pub use pair_selection::{
    candidate_pair_count, pairwise_intersection_extras, select_pairs, PairSelection,
    PairSelectionMode,
};
pub use ts_pipeline::{
    ts_ca_knn_predict, ts_ca_predict, ts_ca_predict_detailed, victim_attacker_matrix,
    VictimAttackerMatrix,
};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("k = {k} out of range for {n} organizations")]
    BadK { k: usize, n: usize },
    #[error("pair percentage {0} outside [0, 100]")]
    BadPercent(f64),
}
