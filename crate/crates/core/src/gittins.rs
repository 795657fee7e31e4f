//! Gittins indices on truncated arms with absorbing leaves.
//!
//! For a retirement reward `lambda`, the excess value of continuing is
//!
//! ```text
//! W(leaf) = max(0, (zeta(leaf) - lambda) / (1 - theta))
//! W(u)    = max(0, zeta(u) - lambda + theta * sum_v P_uv W(v))
//! ```
//!
//! `W(u)` is nonincreasing in `lambda` and vanishes exactly from the index
//! upwards, so the index is found by bisection on `[min zeta, max zeta]` of
//! the sub-DAG.

use thiserror::Error;

use crate::arm_model::{ArmDag, NodeId};
use crate::numeric::to_f64;

pub const DEFAULT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GittinsError {
    #[error("discount factor {0} is outside (0, 1)")]
    Theta(f64),
    #[error("tolerance must be positive, got {0}")]
    Tolerance(f64),
}

#[derive(Debug, Clone, Copy)]
pub struct GittinsQuery<'a> {
    pub dag: &'a ArmDag,
    pub state: NodeId,
    pub theta: f64,
    pub tolerance: f64,
}

/// `1 - 1/h`, the discount matched to budget `h`; `None` for `h <= 1`
/// where it leaves `(0, 1)`.
pub fn discount_for_budget(h: usize) -> Option<f64> {
    (h >= 2).then(|| 1.0 - 1.0 / h as f64)
}

/// Float copy of an arm for repeated sweeps.
struct FloatArm {
    zeta: Vec<f64>,
    succ: Vec<Vec<(usize, f64)>>,
}

impl FloatArm {
    fn new(dag: &ArmDag) -> Self {
        Self {
            zeta: dag.nodes().iter().map(|n| to_f64(&n.zeta)).collect(),
            succ: dag
                .ids()
                .map(|u| dag.successors(u).into_iter().map(|(v, p)| (v.0, to_f64(&p))).collect())
                .collect(),
        }
    }

    /// `W(order[0])` for retirement reward `lambda`; `order` must list the
    /// sub-DAG top-down.
    fn excess(&self, order: &[NodeId], theta: f64, lambda: f64, w: &mut [f64]) -> f64 {
        for &u in order.iter().rev() {
            let u = u.0;
            let value = if self.succ[u].is_empty() {
                (self.zeta[u] - lambda) / (1.0 - theta)
            } else {
                self.zeta[u] - lambda + theta * self.succ[u].iter().map(|&(v, p)| p * w[v]).sum::<f64>()
            };
            w[u] = value.max(0.0);
        }
        w[order[0].0]
    }

    fn index(&self, dag: &ArmDag, state: NodeId, theta: f64, tolerance: f64, w: &mut [f64]) -> f64 {
        let order = dag.sub_dag(state);
        let (mut lo, mut hi) = order.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(self.zeta[v.0]), hi.max(self.zeta[v.0]))
        });
        while hi - lo > tolerance {
            let mid = 0.5 * (lo + hi);
            if self.excess(&order, theta, mid, w) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

fn check(theta: f64, tolerance: f64) -> Result<(), GittinsError> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(GittinsError::Theta(theta));
    }
    if tolerance.is_nan() || tolerance <= 0.0 {
        return Err(GittinsError::Tolerance(tolerance));
    }
    Ok(())
}

/// `W_lambda(state)`, exposed for bracket checks.
pub fn retirement_excess(dag: &ArmDag, state: NodeId, theta: f64, lambda: f64) -> Result<f64, GittinsError> {
    check(theta, DEFAULT_TOLERANCE)?;
    let arm = FloatArm::new(dag);
    let mut w = vec![0.0; dag.len()];
    Ok(arm.excess(&dag.sub_dag(state), theta, lambda, &mut w))
}

pub fn gittins_index(q: &GittinsQuery) -> Result<f64, GittinsError> {
    check(q.theta, q.tolerance)?;
    let arm = FloatArm::new(q.dag);
    let mut w = vec![0.0; q.dag.len()];
    Ok(arm.index(q.dag, q.state, q.theta, q.tolerance, &mut w))
}

/// Index of every state, indexed by node.
pub fn gittins_indices_all(dag: &ArmDag, theta: f64, tolerance: f64) -> Result<Vec<f64>, GittinsError> {
    check(theta, tolerance)?;
    let arm = FloatArm::new(dag);
    let mut w = vec![0.0; dag.len()];
    Ok(dag.ids().map(|u| arm.index(dag, u, theta, tolerance, &mut w)).collect())
}
