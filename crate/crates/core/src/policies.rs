//! Composite index strategies.
//!
//! A strategy maps the joint system state to an [`Action`]. In budgeted mode
//! `Explore(i)` spends one unit of budget on arm `i` and `Exploit(i)` picks
//! arm `i` as the winner, ending the episode. In horizon mode both
//! `Explore(i)` and `Exploit(i)` mean "play arm `i` this step". All argmax
//! ties go to the lowest arm index.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arm_model::{ArmDag, NodeId, SystemState};
use crate::gittins::{discount_for_budget, gittins_indices_all, GittinsError, DEFAULT_TOLERANCE};
use crate::numeric::Rational;
use crate::profit_curve::{compute_all_curves, extract_ratio_policy, CurveError, Label, SingleArmPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Explore(usize),
    Exploit(usize),
    Abandon,
}

impl Action {
    pub fn arm(self) -> Option<usize> {
        match self {
            Action::Explore(i) | Action::Exploit(i) => Some(i),
            Action::Abandon => None,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Explore(i) => write!(f, "explore({i})"),
            Action::Exploit(i) => write!(f, "exploit({i})"),
            Action::Abandon => f.write_str("abandon"),
        }
    }
}

/// Budgeted learning (explore up to `h` times, then pick one arm) or the
/// finite-horizon problem (collect rewards for `h` plays).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Budgeted,
    Horizon,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Budgeted => "budgeted",
            Mode::Horizon => "horizon",
        })
    }
}

/// Per-episode mutable state. Only the persistent strategy uses it: the arm
/// it is committed to and the state its single-arm policy started from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct EpisodeMemory {
    pub commitment: Option<(usize, NodeId)>,
}

pub trait Strategy: Sync {
    fn name(&self) -> String;

    /// `step` counts actions taken so far in the episode.
    fn act(&self, arms: &[ArmDag], state: &SystemState, step: usize, memory: &mut EpisodeMemory) -> Action;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    GreedyRatio,
    Persistent,
    GittinsGreedy,
    ExploitBest,
    RatioSwitch,
    GittinsSwitch,
    RatioScale,
    GittinsScale,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 8] = [
        StrategyKind::GreedyRatio,
        StrategyKind::Persistent,
        StrategyKind::GittinsGreedy,
        StrategyKind::ExploitBest,
        StrategyKind::RatioSwitch,
        StrategyKind::GittinsSwitch,
        StrategyKind::RatioScale,
        StrategyKind::GittinsScale,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::GreedyRatio => "greedy_ratio",
            StrategyKind::Persistent => "persistent",
            StrategyKind::GittinsGreedy => "gittins_greedy",
            StrategyKind::ExploitBest => "exploit_best",
            StrategyKind::RatioSwitch => "ratio_switch",
            StrategyKind::GittinsSwitch => "gittins_switch",
            StrategyKind::RatioScale => "ratio_scale",
            StrategyKind::GittinsScale => "gittins_scale",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown strategy {0:?}")]
pub struct UnknownStrategy(pub String);

impl FromStr for StrategyKind {
    type Err = UnknownStrategy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| UnknownStrategy(s.to_string()))
    }
}

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    /// Frozen budget (greedy, persistent, Gittins greedy) or horizon
    /// (switch and scale strategies).
    pub h: usize,
    /// Bisection tolerance for Gittins tables.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind, h: usize) -> Self {
        Self { kind, h, tolerance: DEFAULT_TOLERANCE }
    }
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Gittins(#[from] GittinsError),
}

/// Which index a switch phase explores by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum IndexFamily {
    Ratio,
    Gittins,
}

/// Index tables frozen at construction; `act` never recomputes them.
#[derive(Debug, Clone)]
pub struct IndexStrategy {
    config: StrategyConfig,
    /// budget -> arm -> node -> r(node, budget)
    ratio: BTreeMap<usize, Vec<Vec<Rational>>>,
    /// budget -> arm -> node -> Gittins index at theta = 1 - 1/budget
    gittins: BTreeMap<usize, Vec<Vec<f64>>>,
    /// arm -> node -> ratio policy started at node (persistent only)
    ratio_policies: Vec<Vec<SingleArmPolicy>>,
}

/// First maximizer; later entries must be strictly larger to win.
fn argmax_by<T, F: Fn(usize) -> T>(n: usize, key: F) -> usize
where
    T: PartialOrd,
{
    let mut best = 0;
    let mut best_key = key(0);
    for i in 1..n {
        let k = key(i);
        if k > best_key {
            best = i;
            best_key = k;
        }
    }
    best
}

pub fn argmax_zeta(arms: &[ArmDag], state: &SystemState) -> usize {
    argmax_by(arms.len(), |i| arms[i].zeta(state.arm_states[i]))
}

/// Block `k` of the scale schedule covers steps `[2^k - 1, 2^(k+1) - 1)`.
/// Returns `(k, step within block)`.
pub fn scale_block(step: usize) -> (u32, usize) {
    let k = (step + 1).ilog2();
    (k, step + 1 - (1usize << k))
}

/// Exploration budgets `floor(H/2)` of every switch block that starts
/// before `horizon`.
fn scale_budgets(horizon: usize) -> Vec<usize> {
    (0..usize::BITS)
        .take_while(|&k| (1usize << k) - 1 < horizon)
        .map(|k| (1usize << k) / 2)
        .filter(|&b| b >= 1)
        .collect()
}

impl IndexStrategy {
    pub fn new(config: StrategyConfig, arms: &[ArmDag]) -> Result<Self, PolicyError> {
        let h = config.h;
        let mut ratio_budgets = Vec::new();
        let mut gittins_budgets = Vec::new();
        match config.kind {
            StrategyKind::GreedyRatio | StrategyKind::Persistent => ratio_budgets.push(h),
            StrategyKind::GittinsGreedy => gittins_budgets.push(h),
            StrategyKind::ExploitBest => {}
            StrategyKind::RatioSwitch => ratio_budgets.push(h / 2),
            StrategyKind::GittinsSwitch => gittins_budgets.push(h / 2),
            StrategyKind::RatioScale => ratio_budgets.extend(scale_budgets(h)),
            StrategyKind::GittinsScale => gittins_budgets.extend(scale_budgets(h)),
        }
        let mut ratio = BTreeMap::new();
        let mut curve_sets = Vec::new();
        for b in ratio_budgets.into_iter().filter(|&b| b >= 1) {
            let sets = arms.iter().map(|a| compute_all_curves(a, b)).collect::<Result<Vec<_>, _>>()?;
            ratio.insert(b, sets.iter().map(|s| s.ratio_indices()).collect());
            curve_sets = sets;
        }
        let mut gittins = BTreeMap::new();
        for b in gittins_budgets {
            if let Some(theta) = discount_for_budget(b) {
                let tables = arms
                    .iter()
                    .map(|a| gittins_indices_all(a, theta, config.tolerance))
                    .collect::<Result<Vec<_>, _>>()?;
                gittins.insert(b, tables);
            }
        }
        let mut ratio_policies = Vec::new();
        if config.kind == StrategyKind::Persistent && h >= 1 {
            for (arm, curves) in arms.iter().zip(&curve_sets) {
                let per_node = arm
                    .ids()
                    .map(|u| extract_ratio_policy(arm, curves, u))
                    .collect::<Result<Vec<_>, _>>()?;
                ratio_policies.push(per_node);
            }
        }
        Ok(Self { config, ratio, gittins, ratio_policies })
    }

    pub fn config(&self) -> &StrategyConfig {
        &self.config
    }

    /// Frozen `r(u, b)` table for arm `arm`, if built.
    pub fn ratio_table(&self, budget: usize, arm: usize) -> Option<&[Rational]> {
        self.ratio.get(&budget).map(|t| t[arm].as_slice())
    }

    pub fn gittins_table(&self, budget: usize, arm: usize) -> Option<&[f64]> {
        self.gittins.get(&budget).map(|t| t[arm].as_slice())
    }

    fn argmax_index(&self, family: IndexFamily, budget: usize, arms: &[ArmDag], state: &SystemState) -> usize {
        let n = arms.len();
        let node = |i: usize| state.arm_states[i].0;
        match family {
            IndexFamily::Ratio => match self.ratio.get(&budget) {
                Some(t) => argmax_by(n, |i| &t[i][node(i)]),
                None => argmax_zeta(arms, state),
            },
            // Without a valid discount the index degenerates to the payoff.
            IndexFamily::Gittins => match self.gittins.get(&budget) {
                Some(t) => argmax_by(n, |i| t[i][node(i)]),
                None => argmax_zeta(arms, state),
            },
        }
    }

    /// First `floor(H/2)` steps by index at budget `floor(H/2)`, then the
    /// highest current payoff.
    fn switch(&self, family: IndexFamily, horizon: usize, step: usize, arms: &[ArmDag], state: &SystemState) -> Action {
        let half = horizon / 2;
        if family == IndexFamily::Gittins && half <= 1 {
            return Action::Exploit(argmax_zeta(arms, state));
        }
        if step < half {
            Action::Explore(self.argmax_index(family, half, arms, state))
        } else {
            Action::Exploit(argmax_zeta(arms, state))
        }
    }

    fn persistent(&self, arms: &[ArmDag], state: &SystemState, memory: &mut EpisodeMemory) -> Action {
        let h = self.config.h;
        if state.remaining_budget == 0 || h == 0 {
            memory.commitment = None;
            return Action::Exploit(self.argmax_index(IndexFamily::Ratio, h, arms, state));
        }
        for _ in 0..2 {
            if let Some((i, start)) = memory.commitment {
                match self.ratio_policies[i][start.0].label(state.arm_states[i]) {
                    Label::Explore => return Action::Explore(i),
                    Label::Exploit => {
                        memory.commitment = None;
                        return Action::Exploit(i);
                    }
                    Label::Abandon => memory.commitment = None,
                }
            }
            let i = self.argmax_index(IndexFamily::Ratio, h, arms, state);
            memory.commitment = Some((i, state.arm_states[i]));
        }
        unreachable!("a fresh ratio policy never abandons its start state")
    }
}

impl Strategy for IndexStrategy {
    fn name(&self) -> String {
        self.config.kind.to_string()
    }

    fn act(&self, arms: &[ArmDag], state: &SystemState, step: usize, memory: &mut EpisodeMemory) -> Action {
        let h = self.config.h;
        let explore_or_exploit = |family| {
            if state.remaining_budget > 0 {
                Action::Explore(self.argmax_index(family, h, arms, state))
            } else {
                Action::Exploit(argmax_zeta(arms, state))
            }
        };
        match self.config.kind {
            StrategyKind::GreedyRatio => explore_or_exploit(IndexFamily::Ratio),
            StrategyKind::GittinsGreedy => explore_or_exploit(IndexFamily::Gittins),
            StrategyKind::Persistent => self.persistent(arms, state, memory),
            StrategyKind::ExploitBest => Action::Exploit(argmax_zeta(arms, state)),
            StrategyKind::RatioSwitch => self.switch(IndexFamily::Ratio, h, step, arms, state),
            StrategyKind::GittinsSwitch => self.switch(IndexFamily::Gittins, h, step, arms, state),
            StrategyKind::RatioScale | StrategyKind::GittinsScale => {
                let family = match self.config.kind {
                    StrategyKind::RatioScale => IndexFamily::Ratio,
                    _ => IndexFamily::Gittins,
                };
                let (k, local) = scale_block(step);
                self.switch(family, 1usize << k, local, arms, state)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arm_model::{beta_bernoulli_arm, constant_arm};
    use crate::numeric::rat;
    use crate::profit_curve::compute_all_curves;

    fn build(kind: StrategyKind, h: usize, arms: &[ArmDag]) -> IndexStrategy {
        IndexStrategy::new(StrategyConfig::new(kind, h), arms).unwrap()
    }

    fn act(s: &IndexStrategy, arms: &[ArmDag], budget: usize, step: usize) -> Action {
        s.act(arms, &SystemState::initial(arms, budget), step, &mut EpisodeMemory::default())
    }

    #[test]
    fn greedy_exploits_best_payoff_without_budget() {
        let arms = [constant_arm(rat(1, 3)), constant_arm(rat(2, 5))];
        let s = build(StrategyKind::GreedyRatio, 2, &arms);
        assert_eq!(act(&s, &arms, 0, 2), Action::Exploit(1));
    }

    #[test]
    fn ties_go_to_the_lowest_arm() {
        let arms = [beta_bernoulli_arm(1, 1, 2), beta_bernoulli_arm(1, 1, 2)];
        for kind in [StrategyKind::GreedyRatio, StrategyKind::GittinsGreedy, StrategyKind::Persistent] {
            assert_eq!(act(&build(kind, 8, &arms), &arms, 8, 0), Action::Explore(0), "{kind}");
        }
    }

    #[test]
    fn greedy_explores_the_higher_ratio_index() {
        let arms = [beta_bernoulli_arm(5, 4, 1), beta_bernoulli_arm(28, 19, 1)];
        let s = build(StrategyKind::GreedyRatio, 1, &arms);
        let r: Vec<_> = arms.iter().map(|a| compute_all_curves(a, 1).unwrap().ratio_index(a.root())).collect();
        let expected = if r[1] > r[0] { 1 } else { 0 };
        assert_eq!(act(&s, &arms, 1, 0), Action::Explore(expected));
        assert_eq!(s.ratio_table(1, 0).unwrap()[0], r[0]);
    }

    #[test]
    fn exploit_best_picks_first_maximum() {
        let arms = [constant_arm(rat(1, 3)), constant_arm(rat(2, 5)), constant_arm(rat(2, 5))];
        let s = build(StrategyKind::ExploitBest, 3, &arms);
        assert_eq!(act(&s, &arms, 3, 0), Action::Exploit(1));
        let single = [constant_arm(rat(1, 9))];
        assert_eq!(act(&build(StrategyKind::ExploitBest, 1, &single), &single, 1, 0), Action::Exploit(0));
    }

    #[test]
    fn switch_schedule() {
        let arms = [constant_arm(rat(1, 2)), beta_bernoulli_arm(1, 1, 2)];
        let s1 = build(StrategyKind::RatioSwitch, 1, &arms);
        assert_eq!(act(&s1, &arms, 1, 0), Action::Exploit(0));
        let s2 = build(StrategyKind::RatioSwitch, 2, &arms);
        let r0 = compute_all_curves(&arms[0], 1).unwrap().ratio_index(arms[0].root());
        let r1 = compute_all_curves(&arms[1], 1).unwrap().ratio_index(arms[1].root());
        let first = if r1 > r0 { 1 } else { 0 };
        assert_eq!(act(&s2, &arms, 2, 0), Action::Explore(first));
        assert_eq!(act(&s2, &arms, 2, 1), Action::Exploit(0));
    }

    #[test]
    fn gittins_switch_falls_back_for_short_horizons() {
        let arms = [constant_arm(rat(1, 3)), beta_bernoulli_arm(1, 1, 3)];
        for h in 0..4 {
            let s = build(StrategyKind::GittinsSwitch, h, &arms);
            for t in 0..h {
                assert_eq!(act(&s, &arms, h, t), Action::Exploit(1));
            }
        }
    }

    #[test]
    fn scale_blocks() {
        assert_eq!(scale_block(0), (0, 0));
        assert_eq!(scale_block(1), (1, 0));
        assert_eq!(scale_block(2), (1, 1));
        assert_eq!(scale_block(5), (2, 2));
        assert_eq!(scale_block(7), (3, 0));
        assert_eq!(scale_budgets(7), vec![1, 2]);
        assert_eq!(scale_budgets(8), vec![1, 2, 4]);
        let arms = [constant_arm(rat(1, 2)), beta_bernoulli_arm(1, 1, 3)];
        let s = build(StrategyKind::RatioScale, 8, &arms);
        assert_eq!(act(&s, &arms, 8, 0), Action::Exploit(0));
        assert_eq!(act(&s, &arms, 8, 5), Action::Exploit(0));
    }

    #[test]
    fn persistent_follows_its_policy() {
        // At h = 2 exploring a uniform prior cannot pay; at h = 8 it does.
        let arms = [beta_bernoulli_arm(1, 1, 2)];
        assert_eq!(act(&build(StrategyKind::Persistent, 2, &arms), &arms, 2, 0), Action::Exploit(0));
        let s = build(StrategyKind::Persistent, 8, &arms);
        let mut memory = EpisodeMemory::default();
        let state = SystemState::initial(&arms, 8);
        let first = s.act(&arms, &state, 0, &mut memory);
        assert_eq!(first, Action::Explore(0));
        assert_eq!(memory.commitment, Some((0, arms[0].root())));
        let done = s.act(&arms, &SystemState { remaining_budget: 0, ..state }, 2, &mut memory);
        assert_eq!(done, Action::Exploit(0));
        assert_eq!(memory.commitment, None);
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in StrategyKind::ALL {
            assert_eq!(kind.as_str().parse::<StrategyKind>().unwrap(), kind);
        }
        assert!("nope".parse::<StrategyKind>().is_err());
    }
}
