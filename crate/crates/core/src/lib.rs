//! Index policies for budgeted learning and finite-horizon Bayesian bandits.
//!
//! * [`profit_curve`] builds, bottom-up and in exact rationals, the concave
//!   profit curve of every arm state and reads off ratio indices and
//!   deterministic ratio-index policies.
//! * [`gittins`] computes discounted Gittins indices on truncated DAGs.
//! * [`policies`] holds the composite strategies (greedy, persistent,
//!   switch and scale variants).
//! * [`oracle`] is the brute-force ground truth: policy enumeration, concave
//!   envelopes and exact dynamic programs over joint states.
//! * [`evaluator`] runs seeded Monte Carlo and discounted evaluation.
//! * [`certify`] checks the approximation guarantees on concrete instances.

pub mod arm_model;
pub mod certify;
pub mod evaluator;
pub mod gittins;
pub mod numeric;
pub mod oracle;
pub mod policies;
pub mod profit_curve;

pub use arm_model::{ArmDag, NodeId, SystemState};
pub use numeric::Rational;
pub use policies::Action;
