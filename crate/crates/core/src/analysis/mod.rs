//! Evaluation statistics and structure discovery.
//!
//! Everything here is a pure function of its inputs; callers parallelize
//! across folds or targets as they see fit.

pub mod export;
pub mod stats;
pub mod survival;
pub mod ward;

pub use export::export_distances;
pub use stats::{auc_roc, spearman, wilcoxon_signed_rank_greater, AucBin};
pub use survival::{aggregate_fold_pvalues, concordance_index, km_curve, logrank, KMCurve};
pub use ward::{ward_cluster, Dendrogram};
