use std::collections::BTreeMap;

use num_traits::{One, Zero};

use super::OracleError;
use crate::arm_model::{ArmDag, NodeId};
use crate::numeric::Rational;

pub const MAX_STOPPING_STATES: usize = 16;

/// Exact Gittins index of `u` as the best ratio of expected discounted
/// reward to expected discounted time over all continuation sets that
/// contain `u`. Leaves in the continuation set are played forever.
pub fn gittins_by_stopping_sets(dag: &ArmDag, u: NodeId, theta: &Rational) -> Result<Rational, OracleError> {
    let states = dag.sub_dag(u);
    if states.len() > MAX_STOPPING_STATES {
        return Err(OracleError::TooManyStates { states: states.len(), limit: MAX_STOPPING_STATES });
    }
    let position: BTreeMap<NodeId, usize> = states.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let base = dag.node(u).layer;
    let forever = Rational::one() / (Rational::one() - theta);
    // Discounted time weight of one visit to each state.
    let visit: Vec<Rational> = states
        .iter()
        .map(|&v| {
            let mut d = Rational::one();
            for _ in base..dag.node(v).layer {
                d *= theta;
            }
            if dag.is_leaf(v) {
                d *= &forever;
            }
            d
        })
        .collect();
    let children: Vec<Vec<(usize, Rational)>> = states
        .iter()
        .map(|&v| dag.successors(v).into_iter().map(|(c, p)| (position[&c], p)).collect())
        .collect();

    let mut best: Option<Rational> = None;
    let mut w = vec![Rational::zero(); states.len()];
    w[0] = Rational::one();
    search(dag, &states, &children, &visit, 0, &mut w, &Rational::zero(), &Rational::zero(), &mut best);
    Ok(best.expect("continuing at the start is always feasible"))
}

#[allow(clippy::too_many_arguments)]
fn search(
    dag: &ArmDag,
    states: &[NodeId],
    children: &[Vec<(usize, Rational)>],
    visit: &[Rational],
    pos: usize,
    w: &mut [Rational],
    reward: &Rational,
    time: &Rational,
    best: &mut Option<Rational>,
) {
    if pos == states.len() {
        let ratio = reward / time;
        if best.as_ref().is_none_or(|b| ratio > *b) {
            *best = Some(ratio);
        }
        return;
    }
    let reach = w[pos].clone();
    // Stopping here (or never reaching the state); the start always continues.
    if pos > 0 || reach.is_zero() {
        search(dag, states, children, visit, pos + 1, w, reward, time, best);
    }
    if reach.is_zero() {
        return;
    }
    let t = &reach * &visit[pos];
    let r = &t * dag.zeta(states[pos]);
    for (c, p) in &children[pos] {
        w[*c] += p * &reach;
    }
    search(dag, states, children, visit, pos + 1, w, &(reward + r), &(time + t), best);
    for (c, p) in &children[pos] {
        w[*c] -= p * &reach;
    }
}
