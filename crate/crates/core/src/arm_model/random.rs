//! Seeded generators of random martingale arms for sweeps and property tests.
//!
//! Payoffs are drawn at the leaves and propagated upwards, so every
//! generated arm satisfies the martingale and stochasticity invariants
//! exactly.

use num_traits::Zero;
use rand::seq::SliceRandom;
use rand::Rng;

use super::{beta_bernoulli_arm, ArmDag, ArmNode, Edge, NodeId};
use crate::numeric::{rat, Rational};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DagParams {
    pub max_depth: usize,
    /// Maximum number of nodes per layer (layered DAGs) and maximum
    /// out-degree.
    pub max_branching: usize,
    /// Leaf payoffs are `k / q` with `q <= max_denominator`.
    pub max_denominator: i64,
    /// Node cap for tree-shaped arms.
    pub max_tree_nodes: usize,
}

impl Default for DagParams {
    fn default() -> Self {
        Self {
            max_depth: 3,
            max_branching: 3,
            max_denominator: 8,
            max_tree_nodes: 14,
        }
    }
}

fn leaf_payoff<R: Rng>(rng: &mut R, params: &DagParams) -> Rational {
    let q = rng.gen_range(1..=params.max_denominator);
    rat(rng.gen_range(0..=q), q)
}

fn random_distribution<R: Rng>(rng: &mut R, n: usize) -> Vec<Rational> {
    let weights: Vec<i64> = (0..n).map(|_| rng.gen_range(1..=4)).collect();
    let total: i64 = weights.iter().sum();
    weights.into_iter().map(|w| rat(w, total)).collect()
}

fn expected_payoff(edges: &[Edge], nodes: &[ArmNode]) -> Rational {
    edges
        .iter()
        .fold(Rational::zero(), |acc, e| acc + &e.prob * &nodes[e.to.0].zeta)
}

/// Random layered DAG: layer widths in `1..=max_branching`, every node of
/// a non-final layer has `1..=max_branching` children in the next layer and
/// every node has at least one parent. Shared children make it a proper DAG.
pub fn random_martingale_dag<R: Rng>(rng: &mut R, params: &DagParams) -> ArmDag {
    let depth = rng.gen_range(1..=params.max_depth.max(1));
    let widths: Vec<usize> = (0..=depth)
        .map(|j| if j == 0 { 1 } else { rng.gen_range(1..=params.max_branching) })
        .collect();
    let mut offsets = vec![0; depth + 2];
    for j in 0..=depth {
        offsets[j + 1] = offsets[j] + widths[j];
    }
    let mut nodes: Vec<ArmNode> = (0..=depth)
        .flat_map(|j| (0..widths[j]).map(move |i| (j, i)))
        .map(|(layer, i)| ArmNode {
            id: format!("L{layer}n{i}"),
            layer,
            zeta: Rational::zero(),
            edges: Vec::new(),
        })
        .collect();

    for node in nodes[offsets[depth]..offsets[depth + 1]].iter_mut() {
        node.zeta = leaf_payoff(rng, params);
    }
    for layer in (0..depth).rev() {
        let parents: Vec<usize> = (offsets[layer]..offsets[layer + 1]).collect();
        let children: Vec<usize> = (offsets[layer + 1]..offsets[layer + 2]).collect();
        let mut chosen: Vec<Vec<usize>> = vec![Vec::new(); parents.len()];
        for &c in &children {
            chosen[rng.gen_range(0..parents.len())].push(c);
        }
        for set in chosen.iter_mut() {
            let target = rng.gen_range(1..=params.max_branching.min(children.len()));
            let mut pool = children.clone();
            pool.shuffle(rng);
            for c in pool {
                if set.len() >= target {
                    break;
                }
                if !set.contains(&c) {
                    set.push(c);
                }
            }
            set.sort_unstable();
        }
        for (&p, set) in parents.iter().zip(chosen) {
            let probs = random_distribution(rng, set.len());
            let edges: Vec<Edge> = set
                .into_iter()
                .zip(probs)
                .map(|(c, prob)| Edge { to: NodeId(c), prob })
                .collect();
            nodes[p].zeta = expected_payoff(&edges, &nodes);
            nodes[p].edges = edges;
        }
    }
    ArmDag::new(nodes, NodeId(0), depth).expect("generated DAG is well formed")
}

/// Random tree with depth `<= max_depth`, out-degree `<= max_branching`
/// and at most `max_tree_nodes` nodes; internal nodes may be cut short.
pub fn random_martingale_tree<R: Rng>(rng: &mut R, params: &DagParams) -> ArmDag {
    let depth = rng.gen_range(1..=params.max_depth.max(1));
    let mut nodes = vec![ArmNode {
        id: "t0".into(),
        layer: 0,
        zeta: Rational::zero(),
        edges: Vec::new(),
    }];
    let mut children: Vec<Vec<usize>> = vec![Vec::new()];
    let mut frontier = vec![0usize];
    for layer in 0..depth {
        let mut next = Vec::new();
        for &u in &frontier {
            // The root always branches so the tree is not a single leaf.
            let k = if u == 0 { rng.gen_range(1..=params.max_branching) } else { rng.gen_range(0..=params.max_branching) };
            for _ in 0..k {
                if nodes.len() >= params.max_tree_nodes {
                    break;
                }
                let id = nodes.len();
                nodes.push(ArmNode {
                    id: format!("t{id}"),
                    layer: layer + 1,
                    zeta: Rational::zero(),
                    edges: Vec::new(),
                });
                children.push(Vec::new());
                children[u].push(id);
                next.push(id);
            }
        }
        frontier = next;
    }
    let max_layer = nodes.iter().map(|n| n.layer).max().unwrap_or(0);
    for u in (0..nodes.len()).rev() {
        if children[u].is_empty() {
            nodes[u].zeta = leaf_payoff(rng, params);
        } else {
            let probs = random_distribution(rng, children[u].len());
            let edges: Vec<Edge> = children[u]
                .iter()
                .zip(probs)
                .map(|(&c, prob)| Edge { to: NodeId(c), prob })
                .collect();
            nodes[u].zeta = expected_payoff(&edges, &nodes);
            nodes[u].edges = edges;
        }
    }
    ArmDag::new(nodes, NodeId(0), max_layer).expect("generated tree is well formed")
}

/// One random arm: a layered DAG, a tree, or an (alpha, beta) lattice.
pub fn random_arm<R: Rng>(rng: &mut R, params: &DagParams) -> ArmDag {
    match rng.gen_range(0..3) {
        0 => random_martingale_dag(rng, params),
        1 => random_martingale_tree(rng, params),
        _ => {
            let depth = rng.gen_range(1..=params.max_depth.max(1));
            beta_bernoulli_arm(rng.gen_range(1..=6), rng.gen_range(1..=6), depth)
        }
    }
}

/// A multi-arm instance with `2..=max_arms` random arms.
pub fn random_instance<R: Rng>(rng: &mut R, max_arms: usize, params: &DagParams) -> Vec<ArmDag> {
    let n = rng.gen_range(2..=max_arms.max(2));
    (0..n).map(|_| random_arm(rng, params)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arm_model::validate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_arms_are_valid_and_bounded() {
        let params = DagParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..300 {
            for dag in [
                random_martingale_dag(&mut rng, &params),
                random_martingale_tree(&mut rng, &params),
            ] {
                let report = validate(&dag);
                assert!(report.is_empty(), "{report}");
                assert!(dag.depth_bound() <= params.max_depth);
                assert!(dag.len() <= 1 + 3 * params.max_branching.max(params.max_tree_nodes));
                for u in dag.ids() {
                    assert!(dag.successors(u).len() <= params.max_branching);
                }
            }
        }
    }

    #[test]
    fn generation_is_seed_deterministic() {
        let params = DagParams::default();
        let a = random_instance(&mut ChaCha8Rng::seed_from_u64(3), 3, &params);
        let b = random_instance(&mut ChaCha8Rng::seed_from_u64(3), 3, &params);
        assert_eq!(a, b);
    }
}
