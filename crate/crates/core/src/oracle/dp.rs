use std::collections::HashMap;

use super::OracleError;
use crate::arm_model::{ArmDag, NodeId};
use crate::numeric::Rational;
use crate::policies::Action;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DpOptions {
    /// Refuse instances whose joint state space could exceed this many memo
    /// entries.
    pub memo_limit: usize,
    /// Treat structurally identical arms as interchangeable in memo keys.
    pub canonicalize: bool,
}

impl Default for DpOptions {
    fn default() -> Self {
        Self { memo_limit: 1_000_000, canonicalize: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BudgetedOptimum {
    pub value: Rational,
    /// Exploit (argmax payoff) unless some exploration is strictly better.
    pub first_action: Action,
}

type Key = (Vec<(usize, usize)>, usize);

/// Memoized exact dynamic programs over joint states `(u_1..u_n, budget)`.
pub struct JointDp<'a> {
    arms: &'a [ArmDag],
    /// `group[i]` is the first arm equal to arm `i` (or `i` itself when
    /// canonicalization is off).
    group: Vec<usize>,
    budgeted: HashMap<Key, Rational>,
    horizon: HashMap<Key, Rational>,
}

impl<'a> JointDp<'a> {
    /// Checks `prod_i |reachable states of arm i| * (steps + 1)` against the
    /// memo limit.
    pub fn new(arms: &'a [ArmDag], steps: usize, options: DpOptions) -> Result<Self, OracleError> {
        if arms.is_empty() {
            return Err(OracleError::NoArms);
        }
        let entries = arms
            .iter()
            .fold(steps as u128 + 1, |acc, a| acc.saturating_mul(a.sub_dag(a.root()).len() as u128));
        if entries > options.memo_limit as u128 {
            return Err(OracleError::StateSpace { entries, limit: options.memo_limit });
        }
        let group = (0..arms.len())
            .map(|i| match options.canonicalize {
                true => (0..i).find(|&j| arms[j] == arms[i]).unwrap_or(i),
                false => i,
            })
            .collect();
        Ok(Self { arms, group, budgeted: HashMap::new(), horizon: HashMap::new() })
    }

    fn key(&self, states: &[NodeId], steps: usize) -> Key {
        let mut k: Vec<(usize, usize)> = states.iter().enumerate().map(|(i, s)| (self.group[i], s.0)).collect();
        k.sort_unstable();
        (k, steps)
    }

    fn best_payoff(&self, states: &[NodeId]) -> (usize, Rational) {
        let mut best = 0;
        for i in 1..states.len() {
            if self.arms[i].zeta(states[i]) > self.arms[best].zeta(states[best]) {
                best = i;
            }
        }
        (best, self.arms[best].zeta(states[best]).clone())
    }

    /// Expected value of exploring arm `i` once, continuing optimally.
    fn explore_value(&mut self, states: &mut Vec<NodeId>, i: usize, budget: usize) -> Option<Rational> {
        let succ = self.arms[i].successors(states[i]);
        if succ.is_empty() {
            return None;
        }
        let here = states[i];
        let mut total = Rational::from_integer(0.into());
        for (v, p) in succ {
            states[i] = v;
            total += p * self.budgeted(states, budget - 1);
        }
        states[i] = here;
        Some(total)
    }

    /// `B*(h, S)`: `V(S,0) = max_i zeta(u_i)`,
    /// `V(S,d) = max(max_i zeta(u_i), max_i sum_v P V(S[i->v], d-1))`.
    pub fn budgeted(&mut self, states: &mut Vec<NodeId>, budget: usize) -> Rational {
        let key = self.key(states, budget);
        if let Some(v) = self.budgeted.get(&key) {
            return v.clone();
        }
        let (_, mut best) = self.best_payoff(states);
        if budget > 0 {
            for i in 0..states.len() {
                if let Some(v) = self.explore_value(states, i, budget) {
                    if v > best {
                        best = v;
                    }
                }
            }
        }
        self.budgeted.insert(key, best.clone());
        best
    }

    pub fn budgeted_optimum(&mut self, states: &[NodeId], budget: usize) -> BudgetedOptimum {
        let mut states = states.to_vec();
        let (arm, exploit) = self.best_payoff(&states);
        let mut best = (exploit, Action::Exploit(arm));
        if budget > 0 {
            for i in 0..states.len() {
                if let Some(v) = self.explore_value(&mut states, i, budget) {
                    if v > best.0 {
                        best = (v, Action::Explore(i));
                    }
                }
            }
        }
        BudgetedOptimum { value: best.0, first_action: best.1 }
    }

    /// `F*(t, S)`: `V(S,0) = 0`,
    /// `V(S,t) = max_i [zeta(u_i) + sum_v P V(S[i->v], t-1)]`; a leaf
    /// stays put when played.
    pub fn horizon(&mut self, states: &mut Vec<NodeId>, steps: usize) -> Rational {
        if steps == 0 {
            return Rational::from_integer(0.into());
        }
        let key = self.key(states, steps);
        if let Some(v) = self.horizon.get(&key) {
            return v.clone();
        }
        let mut best: Option<Rational> = None;
        for i in 0..states.len() {
            let here = states[i];
            let mut value = self.arms[i].zeta(here).clone();
            let succ = self.arms[i].successors(here);
            if succ.is_empty() {
                value += self.horizon(states, steps - 1);
            } else {
                for (v, p) in succ {
                    states[i] = v;
                    value += p * self.horizon(states, steps - 1);
                }
                states[i] = here;
            }
            if best.as_ref().is_none_or(|b| value > *b) {
                best = Some(value);
            }
        }
        let best = best.expect("at least one arm");
        self.horizon.insert(key, best.clone());
        best
    }
}

fn roots(arms: &[ArmDag]) -> Vec<NodeId> {
    arms.iter().map(ArmDag::root).collect()
}

pub fn optimal_budgeted(arms: &[ArmDag], h: usize, options: DpOptions) -> Result<BudgetedOptimum, OracleError> {
    let mut dp = JointDp::new(arms, h, options)?;
    Ok(dp.budgeted_optimum(&roots(arms), h))
}

/// `B*(h)` from the arms' roots.
pub fn optimal_budgeted_value(arms: &[ArmDag], h: usize) -> Result<Rational, OracleError> {
    let mut dp = JointDp::new(arms, h, DpOptions::default())?;
    Ok(dp.budgeted(&mut roots(arms), h))
}

/// `F*(h)` from the arms' roots.
pub fn optimal_finite_horizon_value(arms: &[ArmDag], h: usize) -> Result<Rational, OracleError> {
    let mut dp = JointDp::new(arms, h, DpOptions::default())?;
    Ok(dp.horizon(&mut roots(arms), h))
}
