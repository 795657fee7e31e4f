//! Exploration-profit and profit curves, ratio indices and ratio policies.
//!
//! For a state `u` and budget `h`, the profit curve `P_u(C)` is the best
//! expected payoff of a single-arm policy started at `u` whose cost (expected
//! explorations divided by `h`, plus the probability of exploiting) is at
//! most `C`, for `C` in `[0, 1]`. It is concave and piecewise linear, and is
//! built from the curves of the successors of `u`:
//!
//! * the exploration curve `X_u` pays the fixed cost `1/h` and then spends
//!   budget on the successors in order of decreasing marginal profit, which
//!   is a k-way merge of the successors' segments scaled by `P_uv`;
//! * `P_u` is the concave envelope of the origin, the corners of `X_u` and
//!   the exploit-now point `(1, zeta(u))`.
//!
//! The slope of the first segment is the ratio index `r(u, h)`.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;

use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::arm_model::{ArmDag, NodeId};
use crate::numeric::{format_rational, rat, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CurveError {
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("state {node} has negative payoff {zeta}")]
    NegativePayoff { node: String, zeta: String },
    #[error("missing profit curve for successor {child} of state {node}")]
    MissingDescendant { node: String, child: String },
    #[error("allocation {allocation} to state {node} is not a corner of its profit curve")]
    OffCorner { node: String, allocation: String },
    #[error("state {node} is reached with conflicting decisions")]
    ConflictingLabels { node: String },
}

/// One corner of a curve. `allocations[v]` is the cost position on the
/// curve of successor `v` (unscaled, in `[0, 1]`); it is empty for the
/// exploit-now corner.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CurveCorner {
    pub cost: Rational,
    pub profit: Rational,
    pub allocations: BTreeMap<NodeId, Rational>,
}

impl CurveCorner {
    fn exploit(zeta: &Rational) -> Self {
        Self {
            cost: Rational::one(),
            profit: zeta.clone(),
            allocations: BTreeMap::new(),
        }
    }

    /// Whether this corner is realized by exploiting immediately.
    pub fn is_exploit(&self) -> bool {
        self.allocations.is_empty()
    }
}

/// Concave piecewise-linear profit curve, implicitly starting at `(0, 0)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProfitCurve {
    pub owner: NodeId,
    pub horizon: usize,
    pub corners: Vec<CurveCorner>,
}

/// Exploration-profit curve: profit when `u` is explored first, starting
/// from `(fixed_cost, 0)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExplorationCurve {
    pub owner: NodeId,
    pub fixed_cost: Rational,
    pub corners: Vec<CurveCorner>,
}

/// Text form of a corner, rationals as `"num/den"`, allocations keyed by
/// state id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CornerRecord {
    pub cost: String,
    pub profit: String,
    pub allocations: BTreeMap<String, String>,
}

fn slope(from: (&Rational, &Rational), to: (&Rational, &Rational)) -> Rational {
    (to.1 - from.1) / (to.0 - from.0)
}

impl ProfitCurve {
    /// Slope of the first segment.
    pub fn ratio_index(&self) -> Rational {
        let first = &self.corners[0];
        &first.profit / &first.cost
    }

    pub fn points(&self) -> Vec<(Rational, Rational)> {
        self.corners.iter().map(|c| (c.cost.clone(), c.profit.clone())).collect()
    }

    pub fn slopes(&self) -> Vec<Rational> {
        let zero = Rational::zero();
        let mut prev = (&zero, &zero);
        self.corners
            .iter()
            .map(|c| {
                let s = slope(prev, (&c.cost, &c.profit));
                prev = (&c.cost, &c.profit);
                s
            })
            .collect()
    }

    /// Linear interpolation between corners; constant beyond cost 1.
    pub fn value_at(&self, cost: &Rational) -> Rational {
        if !cost.is_positive() {
            return Rational::zero();
        }
        let (mut pc, mut pp) = (Rational::zero(), Rational::zero());
        for c in &self.corners {
            if *cost <= c.cost {
                return &pp + (cost - &pc) * slope((&pc, &pp), (&c.cost, &c.profit));
            }
            pc = c.cost.clone();
            pp = c.profit.clone();
        }
        pp
    }

    pub fn corner_at(&self, cost: &Rational) -> Option<usize> {
        self.corners.iter().position(|c| c.cost == *cost)
    }

    pub fn records(&self, dag: &ArmDag) -> Vec<CornerRecord> {
        self.corners
            .iter()
            .map(|c| CornerRecord {
                cost: format_rational(&c.cost),
                profit: format_rational(&c.profit),
                allocations: c
                    .allocations
                    .iter()
                    .map(|(v, e)| (dag.node(*v).id.clone(), format_rational(e)))
                    .collect(),
            })
            .collect()
    }
}

/// A successor segment waiting in the merge heap. Field order gives the
/// heap order: larger slope first, then smaller successor id, then earlier
/// segment.
#[derive(PartialEq, Eq, PartialOrd, Ord)]
struct Head {
    slope: Rational,
    child: Reverse<NodeId>,
    segment: Reverse<usize>,
    slot: usize,
}

fn child_segment(curve: &ProfitCurve, k: usize) -> (Rational, Rational) {
    let c = &curve.corners[k];
    match k {
        0 => (c.cost.clone(), c.profit.clone()),
        _ => {
            let p = &curve.corners[k - 1];
            (&c.cost - &p.cost, &c.profit - &p.profit)
        }
    }
}

/// Merges the successors' curves of `u` into its exploration curve.
/// `curves[v.0]` must hold the curve of every successor `v`.
pub fn compute_exploration_curve(
    dag: &ArmDag,
    u: NodeId,
    curves: &[Option<ProfitCurve>],
    h: usize,
) -> Result<ExplorationCurve, CurveError> {
    if h == 0 {
        return Err(CurveError::ZeroHorizon);
    }
    let mut children = Vec::new();
    for (v, p) in dag.successors(u) {
        let curve = curves
            .get(v.0)
            .and_then(Option::as_ref)
            .ok_or_else(|| CurveError::MissingDescendant {
                node: dag.node(u).id.clone(),
                child: dag.node(v).id.clone(),
            })?;
        children.push((v, p, curve));
    }

    let head = |slot: usize, k: usize| {
        let (v, _, curve) = &children[slot];
        let (dc, dp) = child_segment(curve, k);
        Head {
            slope: dp / dc,
            child: Reverse(*v),
            segment: Reverse(k),
            slot,
        }
    };
    let mut heap: BinaryHeap<Head> = (0..children.len()).map(|slot| head(slot, 0)).collect();

    let fixed_cost = rat(1, h as i64);
    let mut cost = fixed_cost.clone();
    let mut profit = Rational::zero();
    let mut allocations: BTreeMap<NodeId, Rational> =
        children.iter().map(|(v, _, _)| (*v, Rational::zero())).collect();
    let mut corners = Vec::new();
    while let Some(top) = heap.pop() {
        let (v, p, curve) = &children[top.slot];
        let k = top.segment.0;
        let (dc, dp) = child_segment(curve, k);
        cost += p * dc;
        profit += p * dp;
        allocations.insert(*v, curve.corners[k].cost.clone());
        if k + 1 < curve.corners.len() {
            heap.push(head(top.slot, k + 1));
        }
        if heap.peek().is_none_or(|next| next.slope != top.slope) {
            corners.push(CurveCorner {
                cost: cost.clone(),
                profit: profit.clone(),
                allocations: allocations.clone(),
            });
        }
    }
    Ok(ExplorationCurve { owner: u, fixed_cost, corners })
}

/// Concave envelope of `(0, 0)`, the corners of `x` and `(1, zeta_u)`.
pub fn compute_profit_curve(x: &ExplorationCurve, zeta_u: &Rational, horizon: usize) -> ProfitCurve {
    let exploit = CurveCorner::exploit(zeta_u);
    // Last maximizer of X_j / S_j, so the first segment absorbs every
    // corner collinear with the origin. On valid arms any corner beating
    // zeta_u has cost below 1.
    let mut best: Option<(usize, Rational)> = None;
    for (j, c) in x.corners.iter().enumerate() {
        if c.cost >= Rational::one() {
            break;
        }
        let r = &c.profit / &c.cost;
        if best.as_ref().is_none_or(|(_, b)| r >= *b) {
            best = Some((j, r));
        }
    }
    let corners = match best {
        Some((j, r)) if r > *zeta_u => {
            let mut corners = vec![x.corners[j].clone()];
            for c in &x.corners[j + 1..] {
                let last = corners.last().expect("nonempty");
                if last.cost >= Rational::one() {
                    break;
                }
                let segment = slope((&last.cost, &last.profit), (&c.cost, &c.profit));
                let to_exploit = (zeta_u - &last.profit) / (Rational::one() - &last.cost);
                if segment <= to_exploit {
                    break;
                }
                corners.push(c.clone());
            }
            corners.push(exploit);
            corners
        }
        _ => vec![exploit],
    };
    ProfitCurve { owner: x.owner, horizon, corners }
}

/// Profit curves of every state of one arm for one budget.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CurveSet {
    pub horizon: usize,
    curves: Vec<ProfitCurve>,
}

impl CurveSet {
    pub fn get(&self, id: NodeId) -> &ProfitCurve {
        &self.curves[id.0]
    }

    pub fn ratio_index(&self, id: NodeId) -> Rational {
        self.curves[id.0].ratio_index()
    }

    /// `r(u, h)` for every state, indexed by node.
    pub fn ratio_indices(&self) -> Vec<Rational> {
        self.curves.iter().map(ProfitCurve::ratio_index).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ProfitCurve> {
        self.curves.iter()
    }
}

impl std::ops::Index<NodeId> for CurveSet {
    type Output = ProfitCurve;

    fn index(&self, id: NodeId) -> &ProfitCurve {
        &self.curves[id.0]
    }
}

fn check_inputs(dag: &ArmDag, h: usize) -> Result<(), CurveError> {
    if h == 0 {
        return Err(CurveError::ZeroHorizon);
    }
    if let Some(node) = dag.nodes().iter().find(|n| n.zeta.is_negative()) {
        return Err(CurveError::NegativePayoff {
            node: node.id.clone(),
            zeta: format_rational(&node.zeta),
        });
    }
    Ok(())
}

fn curve_of(dag: &ArmDag, u: NodeId, slots: &[Option<ProfitCurve>], h: usize) -> Result<ProfitCurve, CurveError> {
    if dag.is_leaf(u) {
        return Ok(ProfitCurve {
            owner: u,
            horizon: h,
            corners: vec![CurveCorner::exploit(dag.zeta(u))],
        });
    }
    let x = compute_exploration_curve(dag, u, slots, h)?;
    Ok(compute_profit_curve(&x, dag.zeta(u), h))
}

fn finish(slots: Vec<Option<ProfitCurve>>, h: usize) -> CurveSet {
    CurveSet {
        horizon: h,
        curves: slots.into_iter().map(|c| c.expect("every state visited")).collect(),
    }
}

/// Profit curves of all states, deepest layer first.
pub fn compute_all_curves(dag: &ArmDag, h: usize) -> Result<CurveSet, CurveError> {
    check_inputs(dag, h)?;
    let mut slots: Vec<Option<ProfitCurve>> = vec![None; dag.len()];
    for u in dag.bottom_up_order() {
        slots[u.0] = Some(curve_of(dag, u, &slots, h)?);
    }
    Ok(finish(slots, h))
}

/// Same result as [`compute_all_curves`], with the states of each layer
/// processed in parallel.
pub fn compute_all_curves_parallel(dag: &ArmDag, h: usize) -> Result<CurveSet, CurveError> {
    check_inputs(dag, h)?;
    let mut layers: BTreeMap<Reverse<usize>, Vec<NodeId>> = BTreeMap::new();
    for u in dag.ids() {
        layers.entry(Reverse(dag.node(u).layer)).or_default().push(u);
    }
    let mut slots: Vec<Option<ProfitCurve>> = vec![None; dag.len()];
    for layer in layers.values() {
        let done: Vec<Result<ProfitCurve, CurveError>> =
            layer.par_iter().map(|&u| curve_of(dag, u, &slots, h)).collect();
        for (&u, curve) in layer.iter().zip(done) {
            slots[u.0] = Some(curve?);
        }
    }
    Ok(finish(slots, h))
}

/// Convenience: `r(u, h)` for a single state.
pub fn ratio_index(curve: &ProfitCurve) -> Rational {
    curve.ratio_index()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Abandon,
    Explore,
    Exploit,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Abandon => "abandon",
            Label::Explore => "explore",
            Label::Exploit => "exploit",
        })
    }
}

/// Expected exploration and exploitation masses of a single-arm policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyMass {
    /// `sum_v z_v`: expected number of explorations.
    pub explore: Rational,
    /// `sum_v x_v`: probability of exploiting.
    pub exploit: Rational,
    /// `sum_v x_v zeta(v)`.
    pub profit: Rational,
}

impl PolicyMass {
    /// `C = sum z / h + sum x`.
    pub fn cost(&self, h: usize) -> Rational {
        &self.explore / rat(h as i64, 1) + &self.exploit
    }
}

/// Deterministic single-arm policy: one label per state. Unlisted states
/// are abandoned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SingleArmPolicy {
    pub start: NodeId,
    pub labels: BTreeMap<NodeId, Label>,
}

impl SingleArmPolicy {
    pub fn label(&self, v: NodeId) -> Label {
        self.labels.get(&v).copied().unwrap_or(Label::Abandon)
    }

    /// Forward propagation of reach probabilities from `start`.
    pub fn evaluate(&self, dag: &ArmDag) -> PolicyMass {
        RandomizedPolicy::from(self).evaluate(dag)
    }

    /// Labels of the states the policy actually reaches, by state id.
    pub fn reachable_labels(&self, dag: &ArmDag) -> BTreeMap<String, Label> {
        let mut reached = vec![false; dag.len()];
        reached[self.start.0] = true;
        let mut out = BTreeMap::new();
        for v in dag.sub_dag(self.start) {
            if !reached[v.0] {
                continue;
            }
            let label = self.label(v);
            out.insert(dag.node(v).id.clone(), label);
            if label == Label::Explore {
                for (c, _) in dag.successors(v) {
                    reached[c.0] = true;
                }
            }
        }
        out
    }
}

/// Randomized single-arm policy: at state `v`, explore with probability
/// `e_v` and exploit with probability `p_v` (abandon otherwise).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RandomizedPolicy {
    pub start: NodeId,
    pub probs: BTreeMap<NodeId, (Rational, Rational)>,
}

impl From<&SingleArmPolicy> for RandomizedPolicy {
    fn from(p: &SingleArmPolicy) -> Self {
        let probs = p
            .labels
            .iter()
            .map(|(&v, &l)| {
                let pair = match l {
                    Label::Abandon => (Rational::zero(), Rational::zero()),
                    Label::Explore => (Rational::one(), Rational::zero()),
                    Label::Exploit => (Rational::zero(), Rational::one()),
                };
                (v, pair)
            })
            .collect();
        Self { start: p.start, probs }
    }
}

impl RandomizedPolicy {
    /// `w_v` reach probability, `z_v = e_v w_v`, `x_v = p_v w_v`.
    pub fn evaluate(&self, dag: &ArmDag) -> PolicyMass {
        let mut w = vec![Rational::zero(); dag.len()];
        w[self.start.0] = Rational::one();
        let mut mass = PolicyMass {
            explore: Rational::zero(),
            exploit: Rational::zero(),
            profit: Rational::zero(),
        };
        for v in dag.sub_dag(self.start) {
            if w[v.0].is_zero() {
                continue;
            }
            let Some((e, p)) = self.probs.get(&v) else {
                continue;
            };
            let reach = w[v.0].clone();
            if p.is_positive() {
                let x = p * &reach;
                mass.profit += &x * dag.zeta(v);
                mass.exploit += x;
            }
            if e.is_positive() {
                let z = e * &reach;
                for (c, prob) in dag.successors(v) {
                    w[c.0] += &prob * &z;
                }
                mass.explore += z;
            }
        }
        mass
    }
}

/// The deterministic policy realizing the first corner of `u`'s curve.
pub fn extract_ratio_policy(dag: &ArmDag, curves: &CurveSet, u: NodeId) -> Result<SingleArmPolicy, CurveError> {
    extract_corner_policy(dag, curves, u, 0)
}

/// The deterministic policy realizing corner `corner` of `u`'s curve.
pub fn extract_corner_policy(
    dag: &ArmDag,
    curves: &CurveSet,
    u: NodeId,
    corner: usize,
) -> Result<SingleArmPolicy, CurveError> {
    // Each visited state remembers its label and, when explored, the corner
    // it was entered at; a state reached twice must agree on both.
    let mut seen: BTreeMap<NodeId, (Label, Option<usize>)> = BTreeMap::new();
    let mut stack = vec![(u, corner)];
    let assign = |seen: &mut BTreeMap<NodeId, (Label, Option<usize>)>, v: NodeId, entry: (Label, Option<usize>)| {
        match seen.get(&v) {
            Some(prev) if *prev != entry => Err(CurveError::ConflictingLabels { node: dag.node(v).id.clone() }),
            Some(_) => Ok(false),
            None => {
                seen.insert(v, entry);
                Ok(true)
            }
        }
    };
    while let Some((v, k)) = stack.pop() {
        let c = &curves[v].corners[k];
        if c.is_exploit() {
            assign(&mut seen, v, (Label::Exploit, None))?;
            continue;
        }
        if !assign(&mut seen, v, (Label::Explore, Some(k)))? {
            continue;
        }
        for (&w, e) in &c.allocations {
            if e.is_zero() {
                assign(&mut seen, w, (Label::Abandon, None))?;
                continue;
            }
            let child = curves[w].corner_at(e).ok_or_else(|| CurveError::OffCorner {
                node: dag.node(w).id.clone(),
                allocation: format_rational(e),
            })?;
            let entry = if curves[w].corners[child].is_exploit() {
                (Label::Exploit, None)
            } else {
                (Label::Explore, Some(child))
            };
            if seen.get(&w).is_some_and(|prev| *prev != entry) {
                return Err(CurveError::ConflictingLabels { node: dag.node(w).id.clone() });
            }
            stack.push((w, child));
        }
    }
    Ok(SingleArmPolicy {
        start: u,
        labels: seen.into_iter().map(|(v, (l, _))| (v, l)).collect(),
    })
}
