use std::fmt;

use num_traits::{One, Signed, Zero};

use super::ArmDag;
use crate::numeric::{format_rational, Rational};

/// One violated invariant of an [`ArmDag`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// Outgoing probabilities of a non-leaf node do not sum to one.
    Stochasticity { node: String, sum: Rational },
    NegativeProbability { node: String, to: String, prob: Rational },
    /// `sum_v P_uv zeta(v) - zeta(u)` is nonzero.
    Martingale { node: String, residual: Rational },
    /// An edge that does not go from layer `j` to layer `j + 1`.
    Layering { from: String, to: String, from_layer: usize, to_layer: usize },
    DepthExceeded { node: String, layer: usize, depth_bound: usize },
    RootLayer { layer: usize },
    Unreachable { node: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Stochasticity { node, sum } => write!(
                f,
                "stochasticity violation at node {node}: probabilities sum to {}",
                format_rational(sum)
            ),
            Violation::NegativeProbability { node, to, prob } => write!(
                f,
                "negative probability {} on edge {node} -> {to}",
                format_rational(prob)
            ),
            Violation::Martingale { node, residual } => write!(
                f,
                "martingale violation at node {node}, residual {}",
                format_rational(residual)
            ),
            Violation::Layering { from, to, from_layer, to_layer } => write!(
                f,
                "layering violation: edge {from} (layer {from_layer}) -> {to} (layer {to_layer})"
            ),
            Violation::DepthExceeded { node, layer, depth_bound } => write!(
                f,
                "node {node} at layer {layer} exceeds depth bound {depth_bound}"
            ),
            Violation::RootLayer { layer } => write!(f, "root is at layer {layer}, expected 0"),
            Violation::Unreachable { node } => write!(f, "node {node} is unreachable from the root"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks every structural invariant exactly and lists all violations.
pub fn validate(dag: &ArmDag) -> ValidationReport {
    let mut violations = Vec::new();
    let root = dag.node(dag.root());
    if root.layer != 0 {
        violations.push(Violation::RootLayer { layer: root.layer });
    }

    for node in dag.nodes() {
        if node.layer > dag.depth_bound() {
            violations.push(Violation::DepthExceeded {
                node: node.id.clone(),
                layer: node.layer,
                depth_bound: dag.depth_bound(),
            });
        }
        if node.edges.is_empty() {
            continue;
        }
        let mut sum = Rational::zero();
        let mut expected = Rational::zero();
        for e in &node.edges {
            let child = dag.node(e.to);
            if e.prob.is_negative() {
                violations.push(Violation::NegativeProbability {
                    node: node.id.clone(),
                    to: child.id.clone(),
                    prob: e.prob.clone(),
                });
            }
            if child.layer != node.layer + 1 {
                violations.push(Violation::Layering {
                    from: node.id.clone(),
                    to: child.id.clone(),
                    from_layer: node.layer,
                    to_layer: child.layer,
                });
            }
            sum += &e.prob;
            expected += &e.prob * &child.zeta;
        }
        if !sum.is_one() {
            violations.push(Violation::Stochasticity { node: node.id.clone(), sum });
        }
        let residual = expected - &node.zeta;
        if !residual.is_zero() {
            violations.push(Violation::Martingale { node: node.id.clone(), residual });
        }
    }

    let mut reachable = vec![false; dag.len()];
    for id in dag.sub_dag(dag.root()) {
        reachable[id.0] = true;
    }
    for (node, seen) in dag.nodes().iter().zip(reachable) {
        if !seen {
            violations.push(Violation::Unreachable { node: node.id.clone() });
        }
    }
    ValidationReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arm_model::{beta_bernoulli_arm, ArmNode, Edge, NodeId};
    use crate::numeric::{int, rat};

    fn node(id: &str, layer: usize, zeta: Rational, edges: Vec<Edge>) -> ArmNode {
        ArmNode { id: id.into(), layer, zeta, edges }
    }

    #[test]
    fn generated_arm_is_clean() {
        assert!(validate(&beta_bernoulli_arm(1, 1, 3)).is_empty());
    }

    #[test]
    fn reports_stochasticity() {
        let nodes = vec![
            node(
                "u",
                0,
                rat(1, 2),
                vec![Edge { to: NodeId(1), prob: rat(1, 2) }, Edge { to: NodeId(2), prob: rat(1, 3) }],
            ),
            node("a", 1, rat(1, 2), vec![]),
            node("b", 1, rat(1, 2), vec![]),
        ];
        let report = validate(&ArmDag::new(nodes, NodeId(0), 1).unwrap());
        assert!(report.violations.contains(&Violation::Stochasticity { node: "u".into(), sum: rat(5, 6) }));
        assert!(report.to_string().contains("stochasticity violation at node u"));
    }

    #[test]
    fn reports_martingale_residual() {
        let nodes = vec![
            node(
                "u",
                0,
                rat(1, 2),
                vec![Edge { to: NodeId(1), prob: rat(1, 2) }, Edge { to: NodeId(2), prob: rat(1, 2) }],
            ),
            node("a", 1, int(1), vec![]),
            node("b", 1, rat(1, 4), vec![]),
        ];
        let report = validate(&ArmDag::new(nodes, NodeId(0), 1).unwrap());
        assert_eq!(
            report.violations,
            vec![Violation::Martingale { node: "u".into(), residual: rat(1, 8) }]
        );
        assert_eq!(report.violations[0].to_string(), "martingale violation at node u, residual 1/8");
    }

    #[test]
    fn reports_layering_depth_and_reachability() {
        let nodes = vec![
            node("r", 0, int(1), vec![Edge { to: NodeId(1), prob: int(1) }]),
            node("skip", 2, int(1), vec![]),
            node("orphan", 1, int(0), vec![]),
        ];
        let report = validate(&ArmDag::new(nodes, NodeId(0), 1).unwrap());
        let kinds: Vec<_> = report.violations.iter().map(std::mem::discriminant).collect();
        assert_eq!(report.violations.len(), 3, "{report}");
        assert!(kinds.contains(&std::mem::discriminant(&Violation::Layering {
            from: String::new(),
            to: String::new(),
            from_layer: 0,
            to_layer: 0
        })));
        assert!(report.violations.contains(&Violation::Unreachable { node: "orphan".into() }));
        assert!(report.violations.iter().any(|v| matches!(v, Violation::DepthExceeded { layer: 2, .. })));
    }

    #[test]
    fn reports_negative_probability_and_root_layer() {
        let nodes = vec![
            node(
                "r",
                1,
                int(0),
                vec![Edge { to: NodeId(1), prob: int(2) }, Edge { to: NodeId(2), prob: int(-1) }],
            ),
            node("a", 2, int(0), vec![]),
            node("b", 2, int(0), vec![]),
        ];
        let report = validate(&ArmDag::new(nodes, NodeId(0), 2).unwrap());
        assert!(report.violations.contains(&Violation::RootLayer { layer: 1 }));
        assert!(report.violations.iter().any(|v| matches!(v, Violation::NegativeProbability { .. })));
        // b is reached only through a negative edge
        assert!(report.violations.contains(&Violation::Unreachable { node: "b".into() }));
    }
}
