//! Brute-force ground truth for desk-scale instances.
//!
//! Everything here is exact and exhaustive: policy enumeration with concave
//! envelopes, dynamic programs over joint system states, full outcome-tree
//! evaluation of strategies and stopping-set enumeration for Gittins
//! indices. Each entry point refuses inputs beyond an explicit size bound.

mod dp;
mod enumerate;
mod exact;
mod stopping;

use thiserror::Error;

use crate::policies::Action;

pub use dp::{optimal_budgeted, optimal_budgeted_value, optimal_finite_horizon_value, BudgetedOptimum, DpOptions, JointDp};
pub use enumerate::{
    enumerate, enumerate_policies, envelope_curve, envelope_points, Enumeration, PolicyPoint, MAX_ENUMERATED_POLICIES,
    MAX_ENUMERATION_STATES,
};
pub use exact::{
    exact_policy_value, exact_reward_profile, restart_property_check, RestartCheck, MAX_OUTCOME_NODES,
};
pub use stopping::{gittins_by_stopping_sets, MAX_STOPPING_STATES};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("sub-DAG has {states} states; enumeration is limited to {limit}")]
    TooManyStates { states: usize, limit: usize },
    #[error("more than {limit} policies; enumeration refused")]
    TooManyPolicies { limit: usize },
    #[error("joint state space needs up to {entries} memo entries; limit is {limit}")]
    StateSpace { entries: u128, limit: usize },
    #[error("outcome tree exceeds {limit} nodes")]
    OutcomeTree { limit: usize },
    #[error("strategy chose {action} with no budget left at step {step}")]
    InvalidAction { step: usize, action: Action },
    #[error("instance has no arms")]
    NoArms,
    #[error("prefix refers to arm {arm} but the instance has {arms} arms")]
    UnknownArm { arm: usize, arms: usize },
}
