//! Arm state spaces as layered DAGs.
//!
//! An arm is a set of states with an expected payoff `zeta` per state and
//! known transition probabilities. Playing (exploring) an arm in state `u`
//! moves it to child `v` with probability `P_uv`. The expected payoff is a
//! martingale: `zeta(u) = sum_v P_uv * zeta(v)` at every non-leaf state.
//! Leaves are absorbing: they keep their payoff forever.

mod generate;
mod io;
mod layerize;
pub mod random;
mod validate;

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{ParseRationalError, Rational};

pub use generate::{beta_bernoulli_arm, constant_arm};
pub use io::{arm_from_str, arm_to_string, load_arm, serialize_arm, ArmSpec, EdgeSpec, NodeSpec, RationalLit};
pub use layerize::{layerize, BetaBernoulliGraph, FiniteStateGraph, StateGraph};
pub use validate::{validate, ValidationReport, Violation};

/// Index of a node inside one [`ArmDag`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub to: NodeId,
    pub prob: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArmNode {
    /// External identifier, unique within the arm.
    pub id: String,
    pub layer: usize,
    /// Expected payoff of the state.
    pub zeta: Rational,
    pub edges: Vec<Edge>,
}

/// How a play of the arm turns into a realized reward in simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardModel {
    /// Each play pays exactly `zeta(node)`.
    #[default]
    Payoff,
    /// (alpha, beta)-arm: the first edge is the success edge (reward 1), the
    /// second the failure edge (reward 0). Absorbing leaves pay
    /// Bernoulli(`zeta`).
    Bernoulli,
}

#[derive(Debug, Error)]
pub enum ArmError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid field `{path}`: {message}")]
    Field { path: String, message: String },
    #[error("invalid rational at `{path}`: {source}")]
    Rational {
        path: String,
        source: ParseRationalError,
    },
    #[error("node {from:?} has a transition to unknown state {to:?}")]
    DanglingEdge { from: String, to: String },
    #[error("duplicate state id {0:?}")]
    DuplicateId(String),
    #[error("unknown root state {0:?}")]
    UnknownRoot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A single arm's layered state space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArmDag {
    nodes: Vec<ArmNode>,
    root: NodeId,
    depth_bound: usize,
    reward_model: RewardModel,
}

impl ArmDag {
    /// Builds a DAG from nodes whose edges already use node indices.
    ///
    /// Only referential integrity is checked here; use [`validate`] for the
    /// probability, martingale and layering invariants.
    pub fn new(nodes: Vec<ArmNode>, root: NodeId, depth_bound: usize) -> Result<Self, ArmError> {
        if root.0 >= nodes.len() {
            return Err(ArmError::UnknownRoot(root.to_string()));
        }
        let mut seen = HashMap::new();
        for (i, node) in nodes.iter().enumerate() {
            if seen.insert(node.id.as_str(), i).is_some() {
                return Err(ArmError::DuplicateId(node.id.clone()));
            }
            for e in &node.edges {
                if e.to.0 >= nodes.len() {
                    return Err(ArmError::DanglingEdge {
                        from: node.id.clone(),
                        to: e.to.to_string(),
                    });
                }
            }
        }
        Ok(Self {
            nodes,
            root,
            depth_bound,
            reward_model: RewardModel::Payoff,
        })
    }

    pub fn with_reward_model(mut self, model: RewardModel) -> Self {
        self.reward_model = model;
        self
    }

    pub fn nodes(&self) -> &[ArmNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &ArmNode {
        &self.nodes[id.0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn depth_bound(&self) -> usize {
        self.depth_bound
    }

    pub fn reward_model(&self) -> RewardModel {
        self.reward_model
    }

    pub fn zeta(&self, id: NodeId) -> &Rational {
        &self.nodes[id.0].zeta
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn find(&self, external_id: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.id == external_id).map(NodeId)
    }

    /// Positive-probability successors, with parallel edges to the same
    /// child summed, sorted by child index.
    pub fn successors(&self, id: NodeId) -> Vec<(NodeId, Rational)> {
        let mut acc: BTreeMap<NodeId, Rational> = BTreeMap::new();
        for e in &self.nodes[id.0].edges {
            if e.prob.is_positive() {
                *acc.entry(e.to).or_insert_with(Rational::zero) += &e.prob;
            }
        }
        acc.into_iter().collect()
    }

    /// A state with no positive-probability transitions; absorbing.
    pub fn is_leaf(&self, id: NodeId) -> bool {
        !self.nodes[id.0].edges.iter().any(|e| e.prob.is_positive())
    }

    /// States reachable from `start` through positive-probability edges,
    /// including `start`, ordered by (layer, index).
    pub fn sub_dag(&self, start: NodeId) -> Vec<NodeId> {
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = VecDeque::from([start]);
        seen[start.0] = true;
        let mut out = Vec::new();
        while let Some(u) = queue.pop_front() {
            out.push(u);
            for e in &self.nodes[u.0].edges {
                if e.prob.is_positive() && !seen[e.to.0] {
                    seen[e.to.0] = true;
                    queue.push_back(e.to);
                }
            }
        }
        out.sort_by_key(|id| (self.nodes[id.0].layer, id.0));
        out
    }

    /// Node indices ordered deepest layer first (ties by index).
    pub fn bottom_up_order(&self) -> Vec<NodeId> {
        let mut order: Vec<NodeId> = self.ids().collect();
        order.sort_by_key(|id| (std::cmp::Reverse(self.nodes[id.0].layer), id.0));
        order
    }

    /// Largest payoff among states reachable from `start`, and smallest.
    pub fn zeta_range(&self, start: NodeId) -> (Rational, Rational) {
        let sub = self.sub_dag(start);
        let mut lo = self.zeta(start).clone();
        let mut hi = lo.clone();
        for id in sub {
            let z = self.zeta(id);
            if *z < lo {
                lo = z.clone();
            }
            if *z > hi {
                hi = z.clone();
            }
        }
        (lo, hi)
    }

    /// Structural equality up to renaming of node ids: same layers, payoffs
    /// and edge lists when both DAGs are relabelled in breadth-first order
    /// from the root. Reward models are ignored.
    pub fn is_isomorphic(&self, other: &ArmDag) -> bool {
        let (a, b) = (self.canonical_order(), other.canonical_order());
        if a.len() != b.len() {
            return false;
        }
        let index_a: HashMap<NodeId, usize> = a.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let index_b: HashMap<NodeId, usize> = b.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        a.iter().zip(&b).all(|(&x, &y)| {
            let (nx, ny) = (self.node(x), other.node(y));
            nx.layer == ny.layer
                && nx.zeta == ny.zeta
                && nx.edges.len() == ny.edges.len()
                && nx.edges.iter().zip(&ny.edges).all(|(ex, ey)| {
                    ex.prob == ey.prob && index_a.get(&ex.to) == index_b.get(&ey.to)
                })
        })
    }

    fn canonical_order(&self) -> Vec<NodeId> {
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = VecDeque::from([self.root]);
        seen[self.root.0] = true;
        let mut out = Vec::new();
        while let Some(u) = queue.pop_front() {
            out.push(u);
            for e in &self.nodes[u.0].edges {
                if !seen[e.to.0] {
                    seen[e.to.0] = true;
                    queue.push_back(e.to);
                }
            }
        }
        out
    }
}

/// Joint state of all arms plus the remaining exploration budget.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SystemState {
    pub arm_states: Vec<NodeId>,
    pub remaining_budget: usize,
}

impl SystemState {
    /// All arms at their roots with budget `budget`.
    pub fn initial(arms: &[ArmDag], budget: usize) -> Self {
        Self {
            arm_states: arms.iter().map(ArmDag::root).collect(),
            remaining_budget: budget,
        }
    }

    pub fn with_arm(&self, arm: usize, node: NodeId) -> Self {
        let mut next = self.clone();
        next.arm_states[arm] = node;
        next
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::numeric::{int, rat};

    /// Root with payoff 1/2 and two absorbing children paying 1 and 0.
    pub(crate) fn split_arm() -> ArmDag {
        let nodes = vec![
            ArmNode {
                id: "u".into(),
                layer: 0,
                zeta: rat(1, 2),
                edges: vec![
                    Edge { to: NodeId(1), prob: rat(1, 2) },
                    Edge { to: NodeId(2), prob: rat(1, 2) },
                ],
            },
            ArmNode { id: "v1".into(), layer: 1, zeta: int(1), edges: vec![] },
            ArmNode { id: "v2".into(), layer: 1, zeta: int(0), edges: vec![] },
        ];
        ArmDag::new(nodes, NodeId(0), 1).unwrap()
    }

    #[test]
    fn rejects_dangling_edges_and_duplicates() {
        let node = |id: &str, edges| ArmNode { id: id.into(), layer: 0, zeta: int(0), edges };
        let bad = vec![node("a", vec![Edge { to: NodeId(5), prob: int(1) }])];
        assert!(matches!(ArmDag::new(bad, NodeId(0), 0), Err(ArmError::DanglingEdge { .. })));
        let dup = vec![node("a", vec![]), node("a", vec![])];
        assert!(matches!(ArmDag::new(dup, NodeId(0), 0), Err(ArmError::DuplicateId(_))));
        assert!(matches!(ArmDag::new(vec![], NodeId(0), 0), Err(ArmError::UnknownRoot(_))));
    }

    #[test]
    fn successors_merge_parallel_edges_and_drop_zeros() {
        let nodes = vec![
            ArmNode {
                id: "r".into(),
                layer: 0,
                zeta: rat(1, 2),
                edges: vec![
                    Edge { to: NodeId(1), prob: rat(1, 4) },
                    Edge { to: NodeId(2), prob: int(0) },
                    Edge { to: NodeId(1), prob: rat(3, 4) },
                ],
            },
            ArmNode { id: "a".into(), layer: 1, zeta: rat(1, 2), edges: vec![] },
            ArmNode { id: "b".into(), layer: 1, zeta: int(1), edges: vec![] },
        ];
        let dag = ArmDag::new(nodes, NodeId(0), 1).unwrap();
        assert_eq!(dag.successors(NodeId(0)), vec![(NodeId(1), int(1))]);
        assert_eq!(dag.sub_dag(NodeId(0)), vec![NodeId(0), NodeId(1)]);
    }

    #[test]
    fn split_arm_basics() {
        let dag = split_arm();
        assert!(dag.is_leaf(NodeId(1)));
        assert!(!dag.is_leaf(NodeId(0)));
        assert_eq!(dag.find("v2"), Some(NodeId(2)));
        assert_eq!(dag.zeta_range(dag.root()), (int(0), int(1)));
        assert_eq!(dag.bottom_up_order()[2], NodeId(0));
    }
}
