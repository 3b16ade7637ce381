//! Evaluation battery for trained coders.

mod ablation;
mod f1;
mod firing;
mod probe;
mod readout;
mod recovery;

pub use ablation::{
    ablation_loss, binned_ablation, equal_count_partition, AblationBin, AblationCurve, Downstream,
};
pub use f1::{aggregate, f1_score, oracle_f1, F1Result, FeatureF1};
pub use firing::{
    firing_stats, flag_ultra_high, FeatureStats, MAJORITY_THRESHOLD, ULTRA_HIGH_THRESHOLD,
};
pub use probe::{dense_latents, labels_from_codes, select_latents, sparse_probe, ProbeConfig};
pub use readout::{
    class_labels, designate_features, patch_loss_increase, Readout, ReadoutFit,
};
pub use recovery::{
    cosine_matrix, greedy_matching, learned_directions, optimal_matching, recovery, recovery_with, MatchStrategy,
    Recovery,
};
