use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};

use super::OracleError;
use crate::arm_model::{ArmDag, NodeId};
use crate::numeric::{rat, Rational};
use crate::profit_curve::{CurveCorner, Label, PolicyMass, ProfitCurve, SingleArmPolicy};

pub const MAX_ENUMERATION_STATES: usize = 20;
pub const MAX_ENUMERATED_POLICIES: usize = 2_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyPoint {
    pub cost: Rational,
    pub profit: Rational,
    pub policy: SingleArmPolicy,
}

/// All deterministic pseudo-policies from one start state. Masses do not
/// depend on the budget, so one enumeration serves every `h`.
#[derive(Debug, Clone)]
pub struct Enumeration {
    pub start: NodeId,
    /// Sub-DAG states in (layer, index) order; `labels[k]` below aligns
    /// with this list.
    pub states: Vec<NodeId>,
    pub policies: Vec<(PolicyMass, Vec<Label>)>,
}

impl Enumeration {
    /// `(cost, profit)` of every policy at budget `h`.
    pub fn points(&self, h: usize) -> Vec<(Rational, Rational)> {
        let inv_h = rat(1, h as i64);
        self.policies
            .iter()
            .map(|(m, _)| (&m.explore * &inv_h + &m.exploit, m.profit.clone()))
            .collect()
    }

    pub fn policy_points(&self, h: usize) -> Vec<PolicyPoint> {
        self.points(h)
            .into_iter()
            .zip(&self.policies)
            .map(|((cost, profit), (_, labels))| PolicyPoint {
                cost,
                profit,
                policy: SingleArmPolicy {
                    start: self.start,
                    labels: self.states.iter().copied().zip(labels.iter().copied()).collect(),
                },
            })
            .collect()
    }
}

struct Walk<'a> {
    dag: &'a ArmDag,
    states: &'a [NodeId],
    children: Vec<Vec<(usize, Rational)>>,
    w: Vec<Rational>,
    labels: Vec<Label>,
    out: Vec<(PolicyMass, Vec<Label>)>,
}

impl Walk<'_> {
    fn run(&mut self, pos: usize, explore: &Rational, exploit: &Rational, profit: &Rational) -> Result<(), OracleError> {
        if pos == self.states.len() {
            if self.out.len() >= MAX_ENUMERATED_POLICIES {
                return Err(OracleError::TooManyPolicies { limit: MAX_ENUMERATED_POLICIES });
            }
            let mass = PolicyMass {
                explore: explore.clone(),
                exploit: exploit.clone(),
                profit: profit.clone(),
            };
            self.out.push((mass, self.labels.clone()));
            return Ok(());
        }
        let reach = self.w[pos].clone();
        self.labels[pos] = Label::Abandon;
        self.run(pos + 1, explore, exploit, profit)?;
        if reach.is_zero() {
            return Ok(());
        }

        self.labels[pos] = Label::Exploit;
        let zeta = self.dag.zeta(self.states[pos]);
        self.run(pos + 1, explore, &(exploit + &reach), &(profit + &reach * zeta))?;

        if !self.children[pos].is_empty() {
            self.labels[pos] = Label::Explore;
            for k in 0..self.children[pos].len() {
                let (c, p) = &self.children[pos][k];
                let add = p * &reach;
                self.w[*c] += add;
            }
            self.run(pos + 1, &(explore + &reach), exploit, profit)?;
            for k in 0..self.children[pos].len() {
                let (c, p) = &self.children[pos][k];
                let add = p * &reach;
                self.w[*c] -= add;
            }
        }
        self.labels[pos] = Label::Abandon;
        Ok(())
    }
}

/// Every assignment of Abandon / Exploit / Explore to the states reached
/// from `u`; states not reached are canonically Abandon, leaves are never
/// explored.
pub fn enumerate(dag: &ArmDag, u: NodeId) -> Result<Enumeration, OracleError> {
    let states = dag.sub_dag(u);
    if states.len() > MAX_ENUMERATION_STATES {
        return Err(OracleError::TooManyStates { states: states.len(), limit: MAX_ENUMERATION_STATES });
    }
    let position: BTreeMap<NodeId, usize> = states.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let children = states
        .iter()
        .map(|&v| dag.successors(v).into_iter().map(|(c, p)| (position[&c], p)).collect())
        .collect();
    let mut w = vec![Rational::zero(); states.len()];
    w[0] = Rational::one();
    let mut walk = Walk {
        dag,
        states: &states,
        children,
        w,
        labels: vec![Label::Abandon; states.len()],
        out: Vec::new(),
    };
    let zero = Rational::zero();
    walk.run(0, &zero, &zero, &zero)?;
    let policies = walk.out;
    Ok(Enumeration { start: u, states, policies })
}

pub fn enumerate_policies(dag: &ArmDag, u: NodeId, h: usize) -> Result<Vec<PolicyPoint>, OracleError> {
    Ok(enumerate(dag, u)?.policy_points(h))
}

/// Whether `b` lies on or below the line through `a` and `c`
/// (`a.0 < b.0 < c.0` not required; this is the cross-product sign).
fn not_above(a: &(Rational, Rational), b: &(Rational, Rational), c: &(Rational, Rational)) -> bool {
    let cross = (&b.0 - &a.0) * (&c.1 - &a.1) - (&b.1 - &a.1) * (&c.0 - &a.0);
    !cross.is_negative()
}

/// Corners of the nondecreasing upper concave envelope of `points` and the
/// origin over costs `[0, 1]`, excluding the origin and ending at cost 1.
/// Collinear points are dropped.
pub fn envelope_points(points: impl IntoIterator<Item = (Rational, Rational)>) -> Vec<(Rational, Rational)> {
    let mut pts: Vec<(Rational, Rational)> = points.into_iter().collect();
    pts.push((Rational::zero(), Rational::zero()));
    pts.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
    pts.dedup_by(|later, earlier| later.0 == earlier.0);

    let mut hull: Vec<(Rational, Rational)> = Vec::new();
    for p in pts {
        while hull.len() >= 2 && not_above(&hull[hull.len() - 2], &hull[hull.len() - 1], &p) {
            hull.pop();
        }
        hull.push(p);
    }

    // Clip at cost 1, interpolating the segment that crosses it.
    let one = Rational::one();
    let mut clipped: Vec<(Rational, Rational)> = Vec::new();
    for p in hull {
        if p.0 <= one {
            clipped.push(p);
            continue;
        }
        let prev = clipped.last().expect("origin comes first").clone();
        if prev.0 < one {
            let y = &prev.1 + (&one - &prev.0) * (&p.1 - &prev.1) / (&p.0 - &prev.0);
            clipped.push((one.clone(), y));
        }
        break;
    }

    // Profit is nondecreasing in the allowed cost: flatten after the peak.
    let peak = (0..clipped.len())
        .fold(0, |best, i| if clipped[i].1 > clipped[best].1 { i } else { best });
    clipped.truncate(peak + 1);
    let peak_profit = clipped[peak].1.clone();
    if clipped[peak].0 < one {
        clipped.push((one, peak_profit));
    }
    clipped.remove(0);
    clipped
}

/// Envelope of enumerated policies as a curve. Envelope corners carry no
/// allocations.
pub fn envelope_curve(points: &[PolicyPoint], owner: NodeId, h: usize) -> ProfitCurve {
    let corners = envelope_points(points.iter().map(|p| (p.cost.clone(), p.profit.clone())))
        .into_iter()
        .map(|(cost, profit)| CurveCorner { cost, profit, allocations: BTreeMap::new() })
        .collect();
    ProfitCurve { owner, horizon: h, corners }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arm_model::tests::split_arm;
    use crate::arm_model::{constant_arm, ArmNode, Edge};
    use crate::numeric::int;

    fn point_set(dag: &ArmDag, h: usize) -> Vec<(Rational, Rational)> {
        let mut pts = enumerate(dag, dag.root()).unwrap().points(h);
        pts.sort();
        pts
    }

    #[test]
    fn leaf_points() {
        let c = rat(2, 9);
        let dag = constant_arm(c.clone());
        assert_eq!(point_set(&dag, 3), vec![(int(0), int(0)), (int(1), c.clone())]);
        let pp = enumerate_policies(&dag, dag.root(), 3).unwrap();
        assert_eq!(envelope_curve(&pp, dag.root(), 3).points(), vec![(int(1), c)]);
    }

    #[test]
    fn split_points_and_envelope() {
        let dag = split_arm();
        let mut expected = vec![
            (int(0), int(0)),
            (int(1), rat(1, 2)),
            (rat(1, 4), int(0)),
            (rat(3, 4), rat(1, 2)),
            (rat(3, 4), int(0)),
            (rat(5, 4), rat(1, 2)),
        ];
        expected.sort();
        assert_eq!(point_set(&dag, 4), expected);
        let pp = enumerate_policies(&dag, dag.root(), 4).unwrap();
        assert_eq!(envelope_curve(&pp, dag.root(), 4).points(), vec![(rat(3, 4), rat(1, 2)), (int(1), rat(1, 2))]);
    }

    /// Full binary tree of the given depth with arbitrary valid payoffs.
    fn binary_tree(depth: usize) -> ArmDag {
        let mut nodes = Vec::new();
        let total = (1 << (depth + 1)) - 1;
        for i in 0..total {
            let layer = (i + 1usize).ilog2() as usize;
            let edges = if layer < depth {
                vec![
                    Edge { to: NodeId(2 * i + 1), prob: rat(1, 2) },
                    Edge { to: NodeId(2 * i + 2), prob: rat(1, 2) },
                ]
            } else {
                vec![]
            };
            nodes.push(ArmNode { id: format!("n{i}"), layer, zeta: rat(1, 2), edges });
        }
        ArmDag::new(nodes, NodeId(0), depth).unwrap()
    }

    fn count(dag: &ArmDag, u: NodeId) -> usize {
        let succ = dag.successors(u);
        if succ.is_empty() {
            2
        } else {
            2 + succ.iter().map(|(v, _)| count(dag, *v)).product::<usize>()
        }
    }

    #[test]
    fn tree_counts_follow_the_recursion() {
        let depth1 = binary_tree(1);
        assert_eq!(enumerate(&depth1, depth1.root()).unwrap().policies.len(), 2 + 2 * 2);
        let depth2 = binary_tree(2);
        let n = enumerate(&depth2, depth2.root()).unwrap().policies.len();
        assert_eq!(n, 2 + 6 * 6);
        assert_eq!(n, count(&depth2, depth2.root()));
    }

    #[test]
    fn policy_points_evaluate_consistently() {
        let dag = binary_tree(2);
        for p in enumerate_policies(&dag, dag.root(), 3).unwrap() {
            let mass = p.policy.evaluate(&dag);
            assert_eq!(mass.cost(3), p.cost);
            assert_eq!(mass.profit, p.profit);
        }
    }

    #[test]
    fn size_guard() {
        let dag = crate::arm_model::beta_bernoulli_arm(1, 1, 5);
        assert!(matches!(enumerate(&dag, dag.root()), Err(OracleError::TooManyStates { states: 21, .. })));
    }

    #[test]
    fn envelope_clips_and_flattens() {
        let pts = vec![(rat(1, 2), int(1)), (int(2), int(1))];
        assert_eq!(envelope_points(pts), vec![(rat(1, 2), int(1)), (int(1), int(1))]);
        let pts = vec![(rat(1, 2), rat(1, 2)), (int(2), int(2))];
        assert_eq!(envelope_points(pts), vec![(int(1), int(1))]);
        let pts = vec![(rat(1, 2), rat(1, 4)), (int(3), int(1))];
        assert_eq!(envelope_points(pts), vec![(rat(1, 2), rat(1, 4)), (int(1), rat(2, 5))]);
    }
}
