use num_bigint::BigInt;
use num_rational::BigRational;

use super::{ArmDag, ArmNode, Edge, NodeId, RewardModel};
use crate::numeric::Rational;

/// Posterior lattice of an (alpha, beta)-Bernoulli arm, truncated at `depth`.
///
/// State `(a, b)` has payoff `a / (a + b)`; its success edge leads to
/// `(a + 1, b)` with probability `a / (a + b)` and its failure edge to
/// `(a, b + 1)`. States with equal `(a, b)` are merged, so layer `j` holds
/// `j + 1` nodes and the DAG has `(depth + 1)(depth + 2) / 2` nodes.
pub fn beta_bernoulli_arm(alpha: u64, beta: u64, depth: usize) -> ArmDag {
    assert!(alpha > 0 && beta > 0, "alpha and beta must be positive");
    let mut nodes = Vec::with_capacity((depth + 1) * (depth + 2) / 2);
    // Layer j starts at offset j(j+1)/2; within a layer, position s counts
    // failures so far.
    let offset = |layer: usize| layer * (layer + 1) / 2;
    for layer in 0..=depth {
        for failures in 0..=layer {
            let a = alpha + (layer - failures) as u64;
            let b = beta + failures as u64;
            let total = BigInt::from(a + b);
            let edges = if layer < depth {
                let next = offset(layer + 1);
                vec![
                    Edge {
                        to: NodeId(next + failures),
                        prob: BigRational::new(BigInt::from(a), total.clone()),
                    },
                    Edge {
                        to: NodeId(next + failures + 1),
                        prob: BigRational::new(BigInt::from(b), total.clone()),
                    },
                ]
            } else {
                Vec::new()
            };
            nodes.push(ArmNode {
                id: format!("{a},{b}"),
                layer,
                zeta: BigRational::new(BigInt::from(a), total),
                edges,
            });
        }
    }
    ArmDag::new(nodes, NodeId(0), depth)
        .expect("generated lattice is well formed")
        .with_reward_model(RewardModel::Bernoulli)
}

/// A single absorbing state paying `zeta` (a standard arm).
pub fn constant_arm(zeta: Rational) -> ArmDag {
    let node = ArmNode {
        id: "s".into(),
        layer: 0,
        zeta,
        edges: Vec::new(),
    };
    ArmDag::new(vec![node], NodeId(0), 0).expect("single node is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arm_model::validate;
    use crate::numeric::rat;

    #[test]
    fn one_one_depth_one() {
        let dag = beta_bernoulli_arm(1, 1, 1);
        assert_eq!(dag.len(), 3);
        assert_eq!(*dag.zeta(dag.root()), rat(1, 2));
        let succ = dag.successors(dag.root());
        assert_eq!(succ.len(), 2);
        assert_eq!(*dag.zeta(succ[0].0), rat(2, 3));
        assert_eq!(succ[0].1, rat(1, 2));
        assert_eq!(*dag.zeta(succ[1].0), rat(1, 3));
        assert_eq!(succ[1].1, rat(1, 2));
    }

    #[test]
    fn five_four_success_child() {
        let dag = beta_bernoulli_arm(5, 4, 1);
        assert_eq!(*dag.zeta(dag.root()), rat(5, 9));
        let success = dag.node(dag.root()).edges[0].to;
        assert_eq!(*dag.zeta(success), rat(6, 10));
    }

    #[test]
    fn zero_depth_is_a_single_leaf() {
        let dag = beta_bernoulli_arm(7, 3, 0);
        assert_eq!(dag.len(), 1);
        assert_eq!(*dag.zeta(dag.root()), rat(7, 10));
        assert!(dag.is_leaf(dag.root()));
    }

    #[test]
    fn merged_lattice_size_and_validity() {
        for depth in 0..7 {
            let dag = beta_bernoulli_arm(2, 3, depth);
            assert_eq!(dag.len(), (depth + 1) * (depth + 2) / 2);
            assert!(validate(&dag).is_empty(), "depth {depth}");
        }
    }

    #[test]
    fn merged_node_has_two_parents() {
        let dag = beta_bernoulli_arm(1, 1, 2);
        let middle = dag.find("2,2").unwrap();
        let parents = dag
            .ids()
            .filter(|&u| dag.node(u).edges.iter().any(|e| e.to == middle))
            .count();
        assert_eq!(parents, 2);
    }
}
