//! Disturbance ensembles, guaranteed-result estimates and studies.
//!
//! Every estimate here is a sup over a *finite* set of disturbances and so
//! a lower estimate of the guaranteed result it stands for. Estimates
//! against arbitrary disturbances only add a greedy adversary to the random
//! banks and carry the same caveat.

mod ensemble;
mod estimate;
mod study;

pub use ensemble::{
    random_bang_bang_signal, Adversary, AdversaryMode, DisturbanceEnsemble, EnsembleKind, Member,
};
pub use estimate::{
    chain_check, estimate_guaranteed_result, run_member, ChainReport, ChainViolation, CostFn, EstimateOptions,
    FeedbackFactory, MemberCost, ResultEstimate,
};
pub use study::{convergence_study, Reference, StrategyFamily, StudyRow, StudySpec, StudyTable, MONOTONE_SLACK};
