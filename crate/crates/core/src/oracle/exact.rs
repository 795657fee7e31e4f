use num_traits::{One, Zero};

use super::dp::{DpOptions, JointDp};
use super::OracleError;
use crate::arm_model::{ArmDag, NodeId, SystemState};
use crate::numeric::Rational;
use crate::policies::{Action, EpisodeMemory, Mode, Strategy};

/// Cap on outcome-tree nodes visited by one exact evaluation.
pub const MAX_OUTCOME_NODES: usize = 5_000_000;

struct Tree<'a> {
    strategy: &'a dyn Strategy,
    arms: &'a [ArmDag],
    visited: usize,
}

impl Tree<'_> {
    fn visit(&mut self) -> Result<(), OracleError> {
        self.visited += 1;
        if self.visited > MAX_OUTCOME_NODES {
            return Err(OracleError::OutcomeTree { limit: MAX_OUTCOME_NODES });
        }
        Ok(())
    }

    /// Probability-weighted profit of the exploited arm.
    fn budgeted(
        &mut self,
        state: SystemState,
        memory: EpisodeMemory,
        step: usize,
        weight: &Rational,
        total: &mut Rational,
    ) -> Result<(), OracleError> {
        self.visit()?;
        let mut memory = memory;
        let action = self.strategy.act(self.arms, &state, step, &mut memory);
        match action {
            Action::Abandon => Ok(()),
            Action::Exploit(i) => {
                *total += weight * self.arms[i].zeta(state.arm_states[i]);
                Ok(())
            }
            Action::Explore(i) => {
                if state.remaining_budget == 0 {
                    return Err(OracleError::InvalidAction { step, action });
                }
                let mut next = state.clone();
                next.remaining_budget -= 1;
                let succ = self.arms[i].successors(state.arm_states[i]);
                if succ.is_empty() {
                    return self.budgeted(next, memory, step + 1, weight, total);
                }
                for (v, p) in succ {
                    let child = next.with_arm(i, v);
                    self.budgeted(child, memory.clone(), step + 1, &(weight * p), total)?;
                }
                Ok(())
            }
        }
    }

    /// Adds the probability-weighted expected reward of each step to
    /// `profile[t]`.
    fn horizon(
        &mut self,
        state: SystemState,
        memory: EpisodeMemory,
        step: usize,
        weight: &Rational,
        profile: &mut [Rational],
    ) -> Result<(), OracleError> {
        if step == profile.len() {
            return Ok(());
        }
        self.visit()?;
        let mut memory = memory;
        let Some(i) = self.strategy.act(self.arms, &state, step, &mut memory).arm() else {
            return Ok(());
        };
        let here = state.arm_states[i];
        profile[step] += weight * self.arms[i].zeta(here);
        let succ = self.arms[i].successors(here);
        if succ.is_empty() {
            return self.horizon(state, memory, step + 1, weight, profile);
        }
        for (v, p) in succ {
            self.horizon(state.with_arm(i, v), memory.clone(), step + 1, &(weight * p), profile)?;
        }
        Ok(())
    }
}

/// Expected reward at each step `t < horizon` when `strategy` plays the
/// finite-horizon problem from the arms' roots.
pub fn exact_reward_profile(
    strategy: &dyn Strategy,
    arms: &[ArmDag],
    horizon: usize,
) -> Result<Vec<Rational>, OracleError> {
    if arms.is_empty() {
        return Err(OracleError::NoArms);
    }
    let mut tree = Tree { strategy, arms, visited: 0 };
    let mut profile = vec![Rational::zero(); horizon];
    let state = SystemState::initial(arms, horizon);
    tree.horizon(state, EpisodeMemory::default(), 0, &Rational::one(), &mut profile)?;
    Ok(profile)
}

/// Exact expected profit (budgeted mode) or cumulative reward (horizon
/// mode) of `strategy`, by full outcome-tree traversal.
pub fn exact_policy_value(strategy: &dyn Strategy, arms: &[ArmDag], h: usize, mode: Mode) -> Result<Rational, OracleError> {
    match mode {
        Mode::Horizon => Ok(exact_reward_profile(strategy, arms, h)?.into_iter().sum()),
        Mode::Budgeted => {
            if arms.is_empty() {
                return Err(OracleError::NoArms);
            }
            let mut tree = Tree { strategy, arms, visited: 0 };
            let mut total = Rational::zero();
            let state = SystemState::initial(arms, h);
            tree.budgeted(state, EpisodeMemory::default(), 0, &Rational::one(), &mut total)?;
            Ok(total)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RestartCheck {
    /// `E_T[B*(h, T)]` over outcomes `T` of the prefix explorations.
    pub after_prefix: Rational,
    /// `B*(h, S)` from the roots.
    pub fresh: Rational,
}

impl RestartCheck {
    pub fn holds(&self) -> bool {
        self.after_prefix >= self.fresh
    }
}

/// Compares the optimum after free extra explorations `prefix` (arm
/// indices, applied in order) with the optimum from the start.
pub fn restart_property_check(arms: &[ArmDag], h: usize, prefix: &[usize]) -> Result<RestartCheck, OracleError> {
    if let Some(&arm) = prefix.iter().find(|&&a| a >= arms.len()) {
        return Err(OracleError::UnknownArm { arm, arms: arms.len() });
    }
    let mut dp = JointDp::new(arms, h, DpOptions::default())?;
    let mut states: Vec<NodeId> = arms.iter().map(ArmDag::root).collect();
    let fresh = dp.budgeted(&mut states, h);
    let after_prefix = expected_after(&mut dp, arms, &mut states, prefix, h);
    Ok(RestartCheck { after_prefix, fresh })
}

fn expected_after(dp: &mut JointDp, arms: &[ArmDag], states: &mut Vec<NodeId>, prefix: &[usize], h: usize) -> Rational {
    let Some((&i, rest)) = prefix.split_first() else {
        return dp.budgeted(states, h);
    };
    let here = states[i];
    let succ = arms[i].successors(here);
    if succ.is_empty() {
        return expected_after(dp, arms, states, rest, h);
    }
    let mut total = Rational::zero();
    for (v, p) in succ {
        states[i] = v;
        total += p * expected_after(dp, arms, states, rest, h);
    }
    states[i] = here;
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arm_model::{beta_bernoulli_arm, constant_arm, ArmNode, Edge};
    use crate::numeric::{int, rat};
    use crate::oracle::optimal_budgeted_value;
    use crate::policies::{IndexStrategy, StrategyConfig, StrategyKind};

    fn strategy(kind: StrategyKind, h: usize, arms: &[ArmDag]) -> IndexStrategy {
        IndexStrategy::new(StrategyConfig::new(kind, h), arms).unwrap()
    }

    #[test]
    fn exploit_best_budgeted_value() {
        let arms = [beta_bernoulli_arm(2, 3, 2), beta_bernoulli_arm(4, 3, 2)];
        let s = strategy(StrategyKind::ExploitBest, 2, &arms);
        assert_eq!(exact_policy_value(&s, &arms, 2, Mode::Budgeted).unwrap(), rat(4, 7));
    }

    #[test]
    fn greedy_is_bounded_by_the_optimum() {
        let arms = [beta_bernoulli_arm(5, 4, 1), beta_bernoulli_arm(28, 19, 1)];
        let s = strategy(StrategyKind::GreedyRatio, 1, &arms);
        let greedy = exact_policy_value(&s, &arms, 1, Mode::Budgeted).unwrap();
        let best = optimal_budgeted_value(&arms, 1).unwrap();
        assert!(greedy <= best);
        let picks_optimal = s.act(&arms, &SystemState::initial(&arms, 1), 0, &mut EpisodeMemory::default())
            == Action::Explore(0);
        assert_eq!(greedy == best, picks_optimal);
    }

    #[test]
    fn constant_arm_horizon_profile() {
        let arms = [constant_arm(rat(1, 3))];
        let s = strategy(StrategyKind::ExploitBest, 4, &arms);
        assert_eq!(exact_reward_profile(&s, &arms, 4).unwrap(), vec![rat(1, 3); 4]);
        assert_eq!(exact_policy_value(&s, &arms, 4, Mode::Horizon).unwrap(), rat(4, 3));
    }

    #[test]
    fn explore_without_budget_is_rejected() {
        struct AlwaysExplore;
        impl Strategy for AlwaysExplore {
            fn name(&self) -> String {
                "always_explore".into()
            }
            fn act(&self, _: &[ArmDag], _: &SystemState, _: usize, _: &mut EpisodeMemory) -> Action {
                Action::Explore(0)
            }
        }
        let arms = [beta_bernoulli_arm(1, 1, 1)];
        let err = exact_policy_value(&AlwaysExplore, &arms, 1, Mode::Budgeted).unwrap_err();
        assert!(matches!(err, OracleError::InvalidAction { step: 1, .. }));
    }

    #[test]
    fn restart_holds_on_martingale_arms() {
        let arms = [beta_bernoulli_arm(1, 1, 3), beta_bernoulli_arm(2, 1, 3)];
        assert_eq!(restart_property_check(&arms, 2, &[]).unwrap().after_prefix, optimal_budgeted_value(&arms, 2).unwrap());
        for prefix in [vec![0], vec![1, 0], vec![0, 0, 1]] {
            assert!(restart_property_check(&arms, 2, &prefix).unwrap().holds());
        }
        assert!(restart_property_check(&arms, 2, &[2]).is_err());
    }

    #[test]
    fn restart_can_fail_without_the_martingale() {
        // Exploring the second arm drops its payoff from 1 to 0 for sure.
        let inflated = ArmDag::new(
            vec![
                ArmNode { id: "hi".into(), layer: 0, zeta: int(1), edges: vec![Edge { to: NodeId(1), prob: int(1) }] },
                ArmNode { id: "lo".into(), layer: 1, zeta: int(0), edges: vec![] },
            ],
            NodeId(0),
            1,
        )
        .unwrap();
        let arms = [constant_arm(rat(1, 2)), inflated];
        let check = restart_property_check(&arms, 1, &[1]).unwrap();
        assert!(!check.holds());
        assert_eq!((check.after_prefix, check.fresh), (rat(1, 2), int(1)));
    }
}
