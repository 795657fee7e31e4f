//! Seeded Monte Carlo evaluation of strategies.
//!
//! Trial `i` draws from `ChaCha8Rng` seeded with `seed` on stream `i`, and
//! per-trial results are summed in trial order, so reports are bitwise
//! identical for any worker count.

use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::arm_model::{ArmDag, NodeId, RewardModel, SystemState};
use crate::numeric::{format_rational, to_f64, Rational};
use crate::policies::{Action, EpisodeMemory, Mode, Strategy};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("at least one trial is required")]
    ZeroTrials,
    #[error("instance has no arms")]
    NoArms,
    #[error("strategy chose {action} with no budget left (trial {trial}, step {step})")]
    ExploreWithoutBudget { trial: usize, step: usize, action: Action },
    #[error("invalid discount sequence: {0}")]
    Discount(String),
    #[error("cannot build worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimulationConfig {
    pub mode: Mode,
    pub h: usize,
    pub trials: usize,
    pub seed: u64,
    /// Worker threads; 0 uses the global pool.
    pub workers: usize,
    pub keep_traces: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceStep {
    pub t: usize,
    pub arm: usize,
    pub node_id: String,
    pub next_node_id: String,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeTrace {
    pub seed: u64,
    pub trial: usize,
    pub steps: Vec<TraceStep>,
    /// Final action of a budgeted episode.
    pub terminal: Option<Action>,
    /// Payoff of the exploited arm (budgeted) or total reward (horizon).
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub traces: Option<Vec<EpisodeTrace>>,
}

/// Realized reward of one play of `node` in arm `dag`.
///
/// Payoff-model arms pay `zeta(node)`. Bernoulli arms pay 1 on the success
/// (first) edge and 0 otherwise; at an absorbing leaf (`sampled_edge` is
/// `None`) they pay 1 iff `uniform < zeta(node)`.
pub fn reward_realization(dag: &ArmDag, node: NodeId, sampled_edge: Option<usize>, uniform: f64) -> f64 {
    match dag.reward_model() {
        RewardModel::Payoff => to_f64(dag.zeta(node)),
        RewardModel::Bernoulli => match sampled_edge {
            Some(0) => 1.0,
            Some(_) => 0.0,
            None => f64::from(uniform < to_f64(dag.zeta(node))),
        },
    }
}

/// Float transition tables for sampling.
struct Sampler<'a> {
    arms: &'a [ArmDag],
    /// arm -> node -> (edge index, child, cumulative probability)
    cumulative: Vec<Vec<Vec<(usize, NodeId, f64)>>>,
    zeta: Vec<Vec<f64>>,
}

impl<'a> Sampler<'a> {
    fn new(arms: &'a [ArmDag]) -> Self {
        let cumulative = arms
            .iter()
            .map(|a| {
                a.nodes()
                    .iter()
                    .map(|n| {
                        let mut acc = 0.0;
                        n.edges
                            .iter()
                            .enumerate()
                            .filter(|(_, e)| e.prob.is_positive())
                            .map(|(k, e)| {
                                acc += to_f64(&e.prob);
                                (k, e.to, acc)
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let zeta = arms
            .iter()
            .map(|a| a.nodes().iter().map(|n| to_f64(&n.zeta)).collect())
            .collect();
        Self { arms, cumulative, zeta }
    }

    /// Next state and realized reward of playing arm `i` at `node`.
    fn play<R: Rng>(&self, i: usize, node: NodeId, rng: &mut R) -> (NodeId, f64) {
        let table = &self.cumulative[i][node.0];
        let u: f64 = rng.gen();
        if table.is_empty() {
            return (node, reward_realization(&self.arms[i], node, None, u));
        }
        let &(edge, next, _) = table.iter().find(|(_, _, c)| u < *c).unwrap_or(table.last().expect("nonempty"));
        (next, reward_realization(&self.arms[i], node, Some(edge), u))
    }
}

pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

struct Episode {
    value: f64,
    rewards: Vec<f64>,
    trace: Option<EpisodeTrace>,
}

fn run_episode(
    strategy: &dyn Strategy,
    sampler: &Sampler,
    cfg: &SimulationConfig,
    trial: usize,
) -> Result<Episode, EvalError> {
    let arms = sampler.arms;
    let mut rng = trial_rng(cfg.seed, trial);
    let mut memory = EpisodeMemory::default();
    let mut state = SystemState::initial(arms, cfg.h);
    let mut steps = Vec::new();
    let mut rewards = Vec::new();
    let mut terminal = None;
    let mut value = 0.0;
    let mut record = |t: usize, arm: usize, from: NodeId, to: NodeId, reward: f64| {
        if cfg.keep_traces {
            steps.push(TraceStep {
                t,
                arm,
                node_id: arms[arm].node(from).id.clone(),
                next_node_id: arms[arm].node(to).id.clone(),
                reward,
            });
        }
    };
    match cfg.mode {
        Mode::Budgeted => {
            for t in 0.. {
                let action = strategy.act(arms, &state, t, &mut memory);
                match action {
                    Action::Explore(i) => {
                        if state.remaining_budget == 0 {
                            return Err(EvalError::ExploreWithoutBudget { trial, step: t, action });
                        }
                        let from = state.arm_states[i];
                        let (to, _) = sampler.play(i, from, &mut rng);
                        record(t, i, from, to, 0.0);
                        state.arm_states[i] = to;
                        state.remaining_budget -= 1;
                    }
                    Action::Exploit(i) => {
                        value = sampler.zeta[i][state.arm_states[i].0];
                        terminal = Some(action);
                        break;
                    }
                    Action::Abandon => {
                        terminal = Some(action);
                        break;
                    }
                }
            }
        }
        Mode::Horizon => {
            for t in 0..cfg.h {
                let Some(i) = strategy.act(arms, &state, t, &mut memory).arm() else {
                    break;
                };
                let from = state.arm_states[i];
                let (to, reward) = sampler.play(i, from, &mut rng);
                record(t, i, from, to, reward);
                state.arm_states[i] = to;
                value += reward;
                rewards.push(reward);
            }
        }
    }
    let trace = cfg.keep_traces.then_some(EpisodeTrace { seed: cfg.seed, trial, steps, terminal, value });
    Ok(Episode { value, rewards, trace })
}

fn run_trials<T: Send>(
    workers: usize,
    trials: usize,
    f: impl Fn(usize) -> Result<T, EvalError> + Sync + Send,
) -> Result<Vec<T>, EvalError> {
    let job = || (0..trials).into_par_iter().map(&f).collect::<Result<Vec<T>, EvalError>>();
    if workers == 0 {
        job()
    } else {
        rayon::ThreadPoolBuilder::new().num_threads(workers).build()?.install(job)
    }
}

/// Mean and standard error of the mean, accumulated in order. Sums are
/// taken relative to the first value so constant outcomes give exactly
/// that value and zero error.
fn mean_stderr(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let Some(first) = values.clone().next() else {
        return (f64::NAN, f64::NAN);
    };
    let n = values.clone().count() as f64;
    let shift = values.clone().map(|v| v - first).sum::<f64>() / n;
    let mean = first + shift;
    if n < 2.0 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - first - shift).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn simulate(strategy: &dyn Strategy, arms: &[ArmDag], cfg: &SimulationConfig) -> Result<SimulationReport, EvalError> {
    if cfg.trials == 0 {
        return Err(EvalError::ZeroTrials);
    }
    if arms.is_empty() {
        return Err(EvalError::NoArms);
    }
    let sampler = Sampler::new(arms);
    let episodes = run_trials(cfg.workers, cfg.trials, |i| run_episode(strategy, &sampler, cfg, i))?;
    let (mean, stderr) = mean_stderr(episodes.iter().map(|e| e.value));
    let traces = cfg
        .keep_traces
        .then(|| episodes.into_iter().filter_map(|e| e.trace).collect());
    Ok(SimulationReport { mean, stderr, trials: cfg.trials, traces })
}

/// Weights `1 = L_0 >= L_1 >= ... >= 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DiscountSequence {
    /// `L_t = theta^t`.
    Geometric(Rational),
    /// `L_t = 1` for `t < h`, then 0.
    Horizon(usize),
    /// Given prefix, zero afterwards.
    Explicit(Vec<Rational>),
}

impl DiscountSequence {
    pub fn validate(&self) -> Result<(), EvalError> {
        match self {
            DiscountSequence::Geometric(theta) => {
                if !theta.is_positive() || *theta >= Rational::one() {
                    return Err(EvalError::Discount(format!("theta {} is outside (0, 1)", format_rational(theta))));
                }
            }
            DiscountSequence::Horizon(_) => {}
            DiscountSequence::Explicit(values) => {
                if values.first().is_some_and(|v| !v.is_one()) {
                    return Err(EvalError::Discount("the first weight must be 1".into()));
                }
                if values.iter().any(Signed::is_negative) {
                    return Err(EvalError::Discount("weights must be nonnegative".into()));
                }
                if let Some(t) = values.windows(2).position(|w| w[1] > w[0]) {
                    return Err(EvalError::Discount(format!("weights increase at t = {}", t + 1)));
                }
            }
        }
        Ok(())
    }

    pub fn weight(&self, t: usize) -> Rational {
        match self {
            DiscountSequence::Geometric(theta) => {
                let mut w = Rational::one();
                for _ in 0..t {
                    w *= theta;
                }
                w
            }
            DiscountSequence::Horizon(h) => {
                if t < *h {
                    Rational::one()
                } else {
                    Rational::zero()
                }
            }
            DiscountSequence::Explicit(values) => values.get(t).cloned().unwrap_or_else(Rational::zero),
        }
    }

    /// Upper bound on `sum_{t >= horizon} L_t E[r(t)]` when expected
    /// rewards are at most `max_reward`.
    pub fn tail_bound(&self, horizon: usize, max_reward: f64) -> f64 {
        match self {
            DiscountSequence::Geometric(theta) => {
                let theta = to_f64(theta);
                theta.powi(horizon as i32) * max_reward / (1.0 - theta)
            }
            DiscountSequence::Horizon(h) => h.saturating_sub(horizon) as f64 * max_reward,
            DiscountSequence::Explicit(values) => {
                values.iter().skip(horizon).map(to_f64).sum::<f64>() * max_reward
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscountedReport {
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
    /// Bound on the weight of rewards beyond the evaluation horizon.
    pub tail_bound: f64,
}

/// Monte Carlo estimate of `sum_{t < eval_horizon} L_t r(t)`.
pub fn discounted_value(
    strategy: &dyn Strategy,
    arms: &[ArmDag],
    discount: &DiscountSequence,
    eval_horizon: usize,
    trials: usize,
    seed: u64,
    workers: usize,
) -> Result<DiscountedReport, EvalError> {
    discount.validate()?;
    if trials == 0 {
        return Err(EvalError::ZeroTrials);
    }
    if arms.is_empty() {
        return Err(EvalError::NoArms);
    }
    let cfg = SimulationConfig { mode: Mode::Horizon, h: eval_horizon, trials, seed, workers, keep_traces: false };
    let weights: Vec<f64> = (0..eval_horizon).map(|t| to_f64(&discount.weight(t))).collect();
    let sampler = Sampler::new(arms);
    let totals = run_trials(workers, trials, |i| {
        let e = run_episode(strategy, &sampler, &cfg, i)?;
        Ok(e.rewards.iter().zip(&weights).map(|(r, w)| r * w).sum::<f64>())
    })?;
    let (mean, stderr) = mean_stderr(totals.iter().copied());
    let max_zeta = sampler.zeta.iter().flatten().fold(0.0f64, |m, &z| m.max(z));
    Ok(DiscountedReport { mean, stderr, trials, tail_bound: discount.tail_bound(eval_horizon, max_zeta) })
}

/// Pre-drawn transition for every non-leaf state of every arm, coupling
/// strategies that visit the same states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutcomeTape {
    next: Vec<Vec<Option<NodeId>>>,
}

impl OutcomeTape {
    pub fn sample<R: Rng>(arms: &[ArmDag], rng: &mut R) -> Self {
        let sampler = Sampler::new(arms);
        let next = arms
            .iter()
            .enumerate()
            .map(|(i, a)| {
                a.ids()
                    .map(|u| (!a.is_leaf(u)).then(|| sampler.play(i, u, rng).0))
                    .collect()
            })
            .collect();
        Self { next }
    }

    pub fn next(&self, arm: usize, node: NodeId) -> Option<NodeId> {
        self.next[arm][node.0]
    }
}

/// Arms explored, in order, by a budgeted episode whose transitions are
/// read from `tape`.
pub fn exploration_sequence(
    strategy: &dyn Strategy,
    arms: &[ArmDag],
    h: usize,
    tape: &OutcomeTape,
) -> Result<Vec<usize>, EvalError> {
    let mut memory = EpisodeMemory::default();
    let mut state = SystemState::initial(arms, h);
    let mut explored = Vec::new();
    for t in 0.. {
        match strategy.act(arms, &state, t, &mut memory) {
            Action::Explore(i) => {
                if state.remaining_budget == 0 {
                    return Err(EvalError::ExploreWithoutBudget { trial: 0, step: t, action: Action::Explore(i) });
                }
                explored.push(i);
                if let Some(v) = tape.next(i, state.arm_states[i]) {
                    state.arm_states[i] = v;
                }
                state.remaining_budget -= 1;
            }
            Action::Exploit(_) | Action::Abandon => break,
        }
    }
    Ok(explored)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arm_model::{beta_bernoulli_arm, constant_arm};
    use crate::numeric::rat;
    use crate::oracle::{exact_policy_value, exact_reward_profile};
    use crate::policies::{IndexStrategy, StrategyConfig, StrategyKind};

    fn strategy(kind: StrategyKind, h: usize, arms: &[ArmDag]) -> IndexStrategy {
        IndexStrategy::new(StrategyConfig::new(kind, h), arms).unwrap()
    }

    fn config(mode: Mode, h: usize, trials: usize, seed: u64, workers: usize) -> SimulationConfig {
        SimulationConfig { mode, h, trials, seed, workers, keep_traces: false }
    }

    #[test]
    fn deterministic_rewards_have_zero_error() {
        let arms = [constant_arm(rat(3, 8))];
        let s = strategy(StrategyKind::ExploitBest, 5, &arms);
        let r = simulate(&s, &arms, &config(Mode::Horizon, 5, 50, 1, 2)).unwrap();
        assert_eq!(r.mean, 5.0 * 0.375);
        assert_eq!(r.stderr, 0.0);
        let arms = [constant_arm(rat(28, 47))];
        let s = strategy(StrategyKind::ExploitBest, 1, &arms);
        let r = simulate(&s, &arms, &config(Mode::Budgeted, 1, 777, 1, 3)).unwrap();
        assert_eq!((r.mean, r.stderr), (to_f64(&rat(28, 47)), 0.0));
    }

    #[test]
    fn greedy_mean_matches_exact_value() {
        let arms = [beta_bernoulli_arm(5, 4, 1), beta_bernoulli_arm(28, 19, 1)];
        let s = strategy(StrategyKind::GreedyRatio, 1, &arms);
        let exact = to_f64(&exact_policy_value(&s, &arms, 1, Mode::Budgeted).unwrap());
        let r = simulate(&s, &arms, &config(Mode::Budgeted, 1, 100_000, 9, 0)).unwrap();
        assert!((r.mean - exact).abs() <= 4.0 * r.stderr, "{} vs {exact} ± {}", r.mean, r.stderr);
    }

    #[test]
    fn same_seed_same_report_for_any_worker_count() {
        let arms = [beta_bernoulli_arm(1, 1, 3), beta_bernoulli_arm(2, 3, 3)];
        let s = strategy(StrategyKind::RatioSwitch, 6, &arms);
        let one = simulate(&s, &arms, &config(Mode::Horizon, 6, 2000, 42, 1)).unwrap();
        let eight = simulate(&s, &arms, &config(Mode::Horizon, 6, 2000, 42, 8)).unwrap();
        assert_eq!(one.mean.to_bits(), eight.mean.to_bits());
        assert_eq!(one.stderr.to_bits(), eight.stderr.to_bits());
        let other = simulate(&s, &arms, &config(Mode::Horizon, 6, 2000, 43, 1)).unwrap();
        assert_ne!(one.mean.to_bits(), other.mean.to_bits());
    }

    #[test]
    fn traces_replay() {
        let arms = [beta_bernoulli_arm(2, 3, 2), beta_bernoulli_arm(1, 1, 2)];
        let s = strategy(StrategyKind::GreedyRatio, 2, &arms);
        let cfg = SimulationConfig { keep_traces: true, ..config(Mode::Horizon, 4, 5, 3, 1) };
        let a = simulate(&s, &arms, &cfg).unwrap();
        let b = simulate(&s, &arms, &SimulationConfig { workers: 4, ..cfg }).unwrap();
        assert_eq!(a.traces, b.traces);
        let traces = a.traces.unwrap();
        assert_eq!(traces.len(), 5);
        assert_eq!(traces[0].steps.len(), 4);
        for tr in &traces {
            assert_eq!(tr.value, tr.steps.iter().map(|s| s.reward).sum::<f64>());
        }
    }

    #[test]
    fn bernoulli_realization() {
        let dag = beta_bernoulli_arm(2, 3, 1);
        let root = dag.root();
        assert_eq!(reward_realization(&dag, root, Some(0), 0.9), 1.0);
        assert_eq!(reward_realization(&dag, root, Some(1), 0.1), 0.0);
        let leaf = dag.node(root).edges[0].to;
        assert_eq!(reward_realization(&dag, leaf, None, 0.4), 1.0);
        assert_eq!(reward_realization(&dag, leaf, None, 0.6), 0.0);
        let generic = constant_arm(rat(3, 7));
        assert_eq!(reward_realization(&generic, generic.root(), None, 0.0), 3.0 / 7.0);
        // Expected Bernoulli reward equals the payoff.
        let p_success = to_f64(&dag.node(root).edges[0].prob);
        assert_eq!(p_success, to_f64(dag.zeta(root)));
    }

    #[test]
    fn geometric_discount_of_constant_reward() {
        let c = 0.25;
        let arms = [constant_arm(rat(1, 4))];
        let s = strategy(StrategyKind::ExploitBest, 10, &arms);
        let seq = DiscountSequence::Geometric(rat(1, 2));
        let r = discounted_value(&s, &arms, &seq, 10, 3, 0, 1).unwrap();
        let expected = c * (1.0 - 0.5f64.powi(10)) / 0.5;
        assert!((r.mean - expected).abs() < 1e-12);
        assert!((r.tail_bound - 0.5f64.powi(10) * c / 0.5).abs() < 1e-15);
    }

    #[test]
    fn horizon_discount_equals_horizon_simulation() {
        let arms = [beta_bernoulli_arm(1, 2, 3), beta_bernoulli_arm(2, 2, 3)];
        let s = strategy(StrategyKind::RatioScale, 5, &arms);
        let d = discounted_value(&s, &arms, &DiscountSequence::Horizon(5), 5, 500, 7, 2).unwrap();
        let m = simulate(&s, &arms, &config(Mode::Horizon, 5, 500, 7, 3)).unwrap();
        assert_eq!(d.mean, m.mean);
        assert_eq!(d.tail_bound, 0.0);
    }

    #[test]
    fn abel_summation_over_prefix_values() {
        let arms = [beta_bernoulli_arm(1, 1, 3), constant_arm(rat(1, 2))];
        let s = strategy(StrategyKind::RatioScale, 6, &arms);
        let profile = exact_reward_profile(&s, &arms, 6).unwrap();
        let seq = DiscountSequence::Explicit(vec![rat(1, 1), rat(4, 5), rat(4, 5), rat(1, 3), rat(1, 7), rat(0, 1)]);
        seq.validate().unwrap();
        let direct: Rational = (0..6).map(|t| seq.weight(t) * &profile[t]).sum();
        let prefix = |h: usize| -> Rational { profile[..h].iter().cloned().sum() };
        let abel: Rational = (1..=6).map(|h| (seq.weight(h - 1) - seq.weight(h)) * prefix(h)).sum();
        assert_eq!(direct, abel);
    }

    #[test]
    fn rejects_bad_discounts_and_trials() {
        let arms = [constant_arm(rat(1, 4))];
        let s = strategy(StrategyKind::ExploitBest, 1, &arms);
        for bad in [
            DiscountSequence::Explicit(vec![rat(1, 1), rat(1, 2), rat(3, 4)]),
            DiscountSequence::Explicit(vec![rat(1, 2)]),
            DiscountSequence::Geometric(rat(1, 1)),
        ] {
            assert!(matches!(discounted_value(&s, &arms, &bad, 3, 1, 0, 1), Err(EvalError::Discount(_))));
        }
        assert!(matches!(
            simulate(&s, &arms, &config(Mode::Horizon, 1, 0, 0, 1)),
            Err(EvalError::ZeroTrials)
        ));
    }

    #[test]
    fn tape_couples_transitions() {
        let arms = [beta_bernoulli_arm(1, 1, 3), beta_bernoulli_arm(3, 1, 3)];
        let tape = OutcomeTape::sample(&arms, &mut trial_rng(5, 0));
        let s = strategy(StrategyKind::GreedyRatio, 3, &arms);
        let a = exploration_sequence(&s, &arms, 3, &tape).unwrap();
        assert_eq!(a, exploration_sequence(&s, &arms, 3, &tape).unwrap());
        assert_eq!(a.len(), 3);
    }
}
