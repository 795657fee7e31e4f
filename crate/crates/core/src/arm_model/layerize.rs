use std::collections::{BTreeMap, HashMap};
use std::fmt::Display;
use std::hash::Hash;

use num_bigint::BigInt;
use num_rational::BigRational;

use super::{ArmDag, ArmError, ArmNode, Edge, NodeId};
use crate::numeric::Rational;

/// A (possibly cyclic or infinite) state graph with payoffs and transition
/// rows, explored lazily from its initial state.
pub trait StateGraph {
    type State: Clone + Eq + Hash + Display;

    fn initial(&self) -> Self::State;
    fn payoff(&self, state: &Self::State) -> Result<Rational, ArmError>;
    fn transitions(&self, state: &Self::State) -> Result<Vec<(Self::State, Rational)>, ArmError>;
}

/// Explicit finite graph keyed by string state names.
#[derive(Debug, Clone, Default)]
pub struct FiniteStateGraph {
    states: BTreeMap<String, (Rational, Vec<(String, Rational)>)>,
    initial: String,
}

impl FiniteStateGraph {
    pub fn new(initial: impl Into<String>) -> Self {
        Self {
            states: BTreeMap::new(),
            initial: initial.into(),
        }
    }

    pub fn state(mut self, name: impl Into<String>, payoff: Rational, row: Vec<(&str, Rational)>) -> Self {
        let row = row.into_iter().map(|(to, p)| (to.to_string(), p)).collect();
        self.states.insert(name.into(), (payoff, row));
        self
    }
}

impl StateGraph for FiniteStateGraph {
    type State = String;

    fn initial(&self) -> String {
        self.initial.clone()
    }

    fn payoff(&self, state: &String) -> Result<Rational, ArmError> {
        self.states
            .get(state)
            .map(|(z, _)| z.clone())
            .ok_or_else(|| ArmError::UnknownRoot(state.clone()))
    }

    fn transitions(&self, state: &String) -> Result<Vec<(String, Rational)>, ArmError> {
        let (_, row) = self
            .states
            .get(state)
            .ok_or_else(|| ArmError::UnknownRoot(state.clone()))?;
        for (to, _) in row {
            if !self.states.contains_key(to) {
                return Err(ArmError::DanglingEdge {
                    from: state.clone(),
                    to: to.clone(),
                });
            }
        }
        Ok(row.clone())
    }
}

/// The unbounded (alpha, beta) posterior recurrence.
#[derive(Debug, Clone, Copy)]
pub struct BetaBernoulliGraph {
    pub alpha: u64,
    pub beta: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BetaState(pub u64, pub u64);

impl Display for BetaState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{}", self.0, self.1)
    }
}

impl StateGraph for BetaBernoulliGraph {
    type State = BetaState;

    fn initial(&self) -> BetaState {
        BetaState(self.alpha, self.beta)
    }

    fn payoff(&self, s: &BetaState) -> Result<Rational, ArmError> {
        Ok(BigRational::new(BigInt::from(s.0), BigInt::from(s.0 + s.1)))
    }

    fn transitions(&self, s: &BetaState) -> Result<Vec<(BetaState, Rational)>, ArmError> {
        let total = BigInt::from(s.0 + s.1);
        Ok(vec![
            (BetaState(s.0 + 1, s.1), BigRational::new(BigInt::from(s.0), total.clone())),
            (BetaState(s.0, s.1 + 1), BigRational::new(BigInt::from(s.1), total)),
        ])
    }
}

/// Unrolls `graph` into a layered DAG of depth `h`: node `(s, j)` is state
/// `s` reached after exactly `j` transitions. States at layer `h` become
/// absorbing leaves. At most `(#states) * (h + 1)` nodes are produced.
pub fn layerize<G: StateGraph>(graph: &G, h: usize) -> Result<ArmDag, ArmError> {
    let mut nodes: Vec<ArmNode> = Vec::new();
    let mut layer_index: HashMap<G::State, usize> = HashMap::new();
    let mut frontier = vec![graph.initial()];
    let mut frontier_ids = vec![0usize];
    nodes.push(ArmNode {
        id: format!("{}@0", frontier[0]),
        layer: 0,
        zeta: graph.payoff(&frontier[0])?,
        edges: Vec::new(),
    });

    for layer in 0..h {
        layer_index.clear();
        let mut next = Vec::new();
        let mut next_ids = Vec::new();
        for (state, &id) in frontier.iter().zip(&frontier_ids) {
            let mut edges = Vec::new();
            for (to, prob) in graph.transitions(state)? {
                let child = match layer_index.get(&to) {
                    Some(&c) => c,
                    None => {
                        let c = nodes.len();
                        nodes.push(ArmNode {
                            id: format!("{to}@{}", layer + 1),
                            layer: layer + 1,
                            zeta: graph.payoff(&to)?,
                            edges: Vec::new(),
                        });
                        layer_index.insert(to.clone(), c);
                        next.push(to);
                        next_ids.push(c);
                        c
                    }
                };
                edges.push(Edge { to: NodeId(child), prob });
            }
            nodes[id].edges = edges;
        }
        frontier = next;
        frontier_ids = next_ids;
        if frontier.is_empty() {
            break;
        }
    }
    ArmDag::new(nodes, NodeId(0), h)
}
