//! Fair multi-task regression under a Mann-Whitney rank constraint.
//!
//! The solver minimizes a group-sparse least-squares loss over `k` tasks while
//! keeping the sum-rank of the protected partition inside a band around its
//! independence value. The non-convex rank constraint is handled with a
//! non-convex ADMM loop: a convex proximal step ([`proximal`]), a heuristic
//! projection onto the rank band ([`projection`]) and a scaled dual update
//! ([`ncadmm`]).

pub mod data;
pub mod error;
pub mod metrics;
pub mod ncadmm;
pub mod projection;
pub mod proximal;
pub mod ranking;

/// Matrix types used throughout the public API.
pub use nalgebra;

pub use data::{
    generate_synthetic, load_csv, split_folds, standardize, CsvSchema, Fold, Group,
    StandardizationParams, SyntheticSpec, TaskDataset,
};
pub use error::{Error, Result};
pub use metrics::{
    auc, auc_demoted, balanced_residuals, disadvantaged_partition, impact_rank_ratio,
    impact_rank_ratio_demoted, impact_rank_ratio_for, is_discriminatory, mean_difference, rmse,
    MetricsReport, IRR_THRESHOLD,
};
pub use ncadmm::{run, RunOutput, SolverConfig, SolverState, SolverTrace, TraceRecord};
pub use projection::{
    brute_force_project, demotion_rank, grow_sum_rank, project_onto_q, shrink_sum_rank,
    ProjectionOutcome, Route,
};
pub use proximal::{group_shrink, pseudo_inverse, InnerReport, ProximalParams, ProximalState};
pub use ranking::{
    assign_ranks, auc_from_u, constraint_bounds, constraint_bounds_with, mann_whitney_u,
    rank_with_demotion, sum_rank_partition, ConstraintSpec, KappaMode, RankVector,
};
