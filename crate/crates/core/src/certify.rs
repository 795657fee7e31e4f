//! Claim suite: the approximation guarantees checked on concrete instances.
//!
//! Each criterion produces one [`ClaimRow`] per individual comparison and
//! passes only if every row does. Exact claims compare rationals with zero
//! tolerance; Gittins and Monte Carlo claims compare floats.

use std::fmt;
use std::time::Instant;

use num_traits::{ToPrimitive, Zero};
use rand::Rng;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::arm_model::random::{random_arm, random_instance, DagParams};
use crate::arm_model::{beta_bernoulli_arm, ArmDag, NodeId};
use crate::evaluator::{exploration_sequence, simulate, trial_rng, OutcomeTape, SimulationConfig};
use crate::gittins::{discount_for_budget, gittins_indices_all, DEFAULT_TOLERANCE};
use crate::numeric::{format_float, format_rational, int, rat, to_f64, Rational};
use crate::oracle::{
    enumerate, envelope_points, exact_policy_value, optimal_budgeted, restart_property_check, DpOptions, JointDp,
};
use crate::policies::{Action, IndexStrategy, Mode, StrategyConfig, StrategyKind};
use crate::profit_curve::{compute_all_curves, extract_ratio_policy, CurveSet, Label};

/// Greedy ratio-index strategy versus the budgeted optimum.
pub fn greedy_constant() -> Rational {
    rat(22, 100)
}

/// `B*(floor(h/2))` versus `B*(h)`.
pub fn halving_constant() -> Rational {
    rat(17, 100)
}

/// `(1/2) * 0.22 * 0.17` for RatioSwitch and RatioScale.
pub fn switch_constant() -> Rational {
    rat(1, 2) * greedy_constant() * halving_constant()
}

/// Greedy constant with the ratio guarantee weakened by the Gittins
/// sandwich: `1 - exp(-1 / (4 * 4 * 18))`.
pub fn gittins_greedy_constant() -> f64 {
    1.0 - (-1.0f64 / 288.0).exp()
}

pub fn gittins_switch_constant() -> f64 {
    0.5 * gittins_greedy_constant() * 0.17
}

/// Upper Gittins/ratio factor.
pub const SANDWICH_UPPER: f64 = 18.0;
pub const FLOAT_SLACK: f64 = 1e-6;
/// Monte Carlo acceptance width in standard errors.
pub const SIM_SIGMAS: f64 = 4.0;

pub const CRITERIA: [(u8, &str); 12] = [
    (1, "no exact index counterexample"),
    (2, "profit curve equals enumerated envelope"),
    (3, "segment bound"),
    (4, "greedy constant"),
    (5, "budget halving"),
    (6, "greedy dominates persistent"),
    (7, "gittins ratio sandwich"),
    (8, "finite horizon sandwich"),
    (9, "switch and scale lower bounds"),
    (10, "restart property"),
    (11, "ratio policy structure"),
    (12, "simulation fidelity"),
];

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Exact(Rational),
    Float(f64),
    Text(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Exact(r) => f.write_str(&format_rational(r)),
            Value::Float(x) => f.write_str(&format_float(*x)),
            Value::Text(s) => f.write_str(s),
        }
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Eq => "==",
            Relation::Le => "<=",
            Relation::Ge => ">=",
        })
    }
}

impl Relation {
    fn holds<T: PartialOrd>(self, lhs: &T, rhs: &T) -> bool {
        match self {
            Relation::Eq => lhs == rhs,
            Relation::Le => lhs <= rhs,
            Relation::Ge => lhs >= rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClaimRow {
    pub criterion: u8,
    pub claim: String,
    pub instance: String,
    pub lhs: Value,
    pub relation: Relation,
    pub rhs: Value,
    pub pass: bool,
}

impl ClaimRow {
    fn exact(criterion: u8, claim: &str, instance: String, lhs: Rational, relation: Relation, rhs: Rational) -> Self {
        let pass = relation.holds(&lhs, &rhs);
        Self { criterion, claim: claim.into(), instance, lhs: Value::Exact(lhs), relation, rhs: Value::Exact(rhs), pass }
    }

    fn float(criterion: u8, claim: &str, instance: String, lhs: f64, relation: Relation, rhs: f64) -> Self {
        let pass = relation.holds(&lhs, &rhs);
        Self { criterion, claim: claim.into(), instance, lhs: Value::Float(lhs), relation, rhs: Value::Float(rhs), pass }
    }

    fn text(criterion: u8, claim: &str, instance: String, lhs: String, rhs: String) -> Self {
        let pass = lhs == rhs;
        Self { criterion, claim: claim.into(), instance, lhs: Value::Text(lhs), relation: Relation::Eq, rhs: Value::Text(rhs), pass }
    }

    fn error(criterion: u8, claim: &str, instance: String, err: impl fmt::Display) -> Self {
        Self {
            criterion,
            claim: claim.into(),
            instance,
            lhs: Value::Text(format!("error: {err}")),
            relation: Relation::Eq,
            rhs: Value::Text("ok".into()),
            pass: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionReport {
    pub id: u8,
    pub title: String,
    pub rows: Vec<ClaimRow>,
    /// Measured extremes, e.g. the smallest observed ratio.
    pub notes: Vec<String>,
    pub seconds: f64,
}

impl CriterionReport {
    pub fn passed(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ClaimRow> {
        self.rows.iter().filter(|r| !r.pass)
    }

    /// `criterion 4 [greedy constant]: PASS (812 checks; ...)`
    pub fn summary(&self) -> String {
        let failed = self.failures().count();
        let status = if self.passed() { "PASS" } else { "FAIL" };
        let mut line = format!("criterion {} [{}]: {status} ({} checks", self.id, self.title, self.rows.len());
        if failed > 0 {
            line.push_str(&format!(", {failed} failed"));
        }
        for n in &self.notes {
            line.push_str("; ");
            line.push_str(n);
        }
        line.push(')');
        line
    }
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub name: String,
    pub arms: Vec<ArmDag>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteConfig {
    pub seed: u64,
    /// Random multi-arm instances.
    pub instances: usize,
    pub max_arms: usize,
    pub params: DagParams,
    /// Random 2-arm instances for the restart property.
    pub restart_instances: usize,
    /// Shared outcome tapes per (instance, h) for the prefix check.
    pub tapes: usize,
    /// Instances (from the front of the sweep) used for Monte Carlo checks.
    pub sim_instances: usize,
    pub sim_trials: usize,
    pub workers: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 2008,
            instances: 200,
            max_arms: 3,
            params: DagParams::default(),
            restart_instances: 100,
            tapes: 16,
            sim_instances: 12,
            sim_trials: 4000,
            workers: 0,
        }
    }
}

/// Random instance `k` of a sweep is drawn from stream `k` of `seed`.
pub fn sweep_instances(seed: u64, count: usize, max_arms: usize, params: &DagParams) -> Vec<Instance> {
    (0..count)
        .map(|k| Instance {
            name: format!("sweep{seed}/{k}"),
            arms: random_instance(&mut trial_rng(seed, k), max_arms, params),
        })
        .collect()
}

/// The two- and three-arm instances with no exact index.
pub fn counterexample_instances() -> Vec<Instance> {
    let a = beta_bernoulli_arm(5, 4, 1);
    let b = beta_bernoulli_arm(28, 19, 1);
    vec![
        Instance { name: "counterexample{A,B}".into(), arms: vec![a.clone(), b.clone()] },
        Instance { name: "counterexample{A,B,C}".into(), arms: vec![a, b.clone(), b] },
    ]
}

fn restart_instances(seed: u64, count: usize, params: &DagParams) -> Vec<Instance> {
    (0..count)
        .map(|k| {
            let mut rng = trial_rng(seed.wrapping_add(1), k);
            Instance { name: format!("restart{seed}/{k}"), arms: vec![random_arm(&mut rng, params), random_arm(&mut rng, params)] }
        })
        .collect()
}

fn state_name(dag: &ArmDag, u: NodeId) -> String {
    dag.node(u).id.clone()
}

fn format_points(points: &[(Rational, Rational)]) -> String {
    let inner: Vec<String> =
        points.iter().map(|(c, p)| format!("({},{})", format_rational(c), format_rational(p))).collect();
    format!("[{}]", inner.join(","))
}

/// Tracks the smallest `value / reference` seen.
#[derive(Default)]
struct MinRatio {
    best: Option<(f64, String)>,
}

impl MinRatio {
    fn observe(&mut self, value: f64, reference: f64, at: &str) {
        if reference <= 0.0 {
            return;
        }
        let r = value / reference;
        if self.best.as_ref().is_none_or(|(b, _)| r < *b) {
            self.best = Some((r, at.to_string()));
        }
    }

    fn note(&self, what: &str) -> String {
        match &self.best {
            Some((r, at)) => format!("min {what} = {r:.6} at {at}"),
            None => format!("min {what}: no positive reference"),
        }
    }
}

pub struct Suite {
    pub config: SuiteConfig,
    /// Oracle-checked instances: the counterexamples, then the sweep.
    pub instances: Vec<Instance>,
    pub restart: Vec<Instance>,
}

impl Suite {
    pub fn new(config: SuiteConfig) -> Self {
        let mut instances = counterexample_instances();
        instances.extend(sweep_instances(config.seed, config.instances, config.max_arms, &config.params));
        let restart = restart_instances(config.seed, config.restart_instances, &config.params);
        Self { config, instances, restart }
    }

    /// Suite over caller-supplied instances; the restart check uses them too.
    pub fn with_instances(config: SuiteConfig, instances: Vec<Instance>) -> Self {
        Self { config, restart: instances.clone(), instances }
    }

    pub fn run_all(&self) -> Vec<CriterionReport> {
        CRITERIA.iter().map(|&(id, _)| self.run(id)).collect()
    }

    /// Runs one criterion; `id` outside `1..=12` yields an empty failing
    /// report.
    pub fn run(&self, id: u8) -> CriterionReport {
        let started = Instant::now();
        let (rows, notes) = match id {
            1 => counterexample(),
            2 => self.curve_equivalence(),
            3 => self.segment_bound(),
            4 => self.greedy_constant(),
            5 => self.halving(),
            6 => self.greedy_vs_persistent(),
            7 => self.gittins_sandwich(),
            8 => self.horizon_sandwich(),
            9 => self.switch_scale(),
            10 => self.restart_property(),
            11 => self.ratio_policy_structure(),
            12 => self.simulation_fidelity(),
            _ => (Vec::new(), vec![format!("unknown criterion {id}")]),
        };
        let title = CRITERIA.iter().find(|c| c.0 == id).map_or("unknown", |c| c.1).to_string();
        CriterionReport { id, title, rows, notes, seconds: started.elapsed().as_secs_f64() }
    }

    fn pool<T: Send>(&self, job: impl FnOnce() -> T + Send) -> T {
        match self.config.workers {
            0 => job(),
            n => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                Ok(pool) => pool.install(job),
                Err(_) => job(),
            },
        }
    }

    /// `f` over every instance in parallel, rows concatenated in instance
    /// order.
    fn per_instance(&self, f: impl Fn(&Instance) -> Vec<ClaimRow> + Sync + Send) -> Vec<ClaimRow> {
        self.per(&self.instances, f)
    }

    fn per(&self, instances: &[Instance], f: impl Fn(&Instance) -> Vec<ClaimRow> + Sync + Send) -> Vec<ClaimRow> {
        self.pool(|| instances.par_iter().map(&f).collect::<Vec<_>>()).into_iter().flatten().collect()
    }

    /// Every distinct single arm of the instances with its location.
    fn arms(&self) -> Vec<(String, &ArmDag)> {
        self.instances
            .iter()
            .flat_map(|inst| inst.arms.iter().enumerate().map(move |(i, a)| (format!("{} arm{i}", inst.name), a)))
            .collect()
    }

    fn curve_equivalence(&self) -> (Vec<ClaimRow>, Vec<String>) {
        let arms = self.arms();
        let rows: Vec<ClaimRow> = self
            .pool(|| {
                arms.par_iter()
                    .map(|(name, dag)| {
                        let mut rows = Vec::new();
                        let enumerations: Vec<_> = dag.ids().map(|u| enumerate(dag, u)).collect();
                        for h in 1..=5 {
                            let curves = match compute_all_curves(dag, h) {
                                Ok(c) => c,
                                Err(e) => {
                                    rows.push(ClaimRow::error(2, "curve == envelope", format!("{name} h={h}"), e));
                                    continue;
                                }
                            };
                            for u in dag.ids() {
                                let at = format!("{name} state {} h={h}", state_name(dag, u));
                                match &enumerations[u.0] {
                                    Ok(en) => {
                                        let expected = envelope_points(en.points(h));
                                        let got = curves.get(u).points();
                                        rows.push(ClaimRow::text(2, "curve == envelope", at, format_points(&got), format_points(&expected)));
                                    }
                                    Err(e) => rows.push(ClaimRow::error(2, "curve == envelope", at, e)),
                                }
                            }
                        }
                        rows
                    })
                    .collect::<Vec<_>>()
            })
            .into_iter()
            .flatten()
            .collect();
        let note = format!("{} arms, h in 1..=5", arms.len());
        (rows, vec![note])
    }

    fn segment_bound(&self) -> (Vec<ClaimRow>, Vec<String>) {
        let arms = self.arms();
        let mut worst = (0.0f64, String::new());
        let mut rows = Vec::new();
        for (name, dag) in &arms {
            for h in 1..=5 {
                let Ok(curves) = compute_all_curves(dag, h) else {
                    rows.push(ClaimRow::error(3, "corners <= 2 states", format!("{name} h={h}"), "curve failed"));
                    continue;
                };
                for u in dag.ids() {
                    let corners = curves.get(u).corners.len();
                    let states = dag.sub_dag(u).len();
                    let at = format!("{name} state {} h={h}", state_name(dag, u));
                    let fill = corners as f64 / (2 * states) as f64;
                    if fill > worst.0 {
                        worst = (fill, at.clone());
                    }
                    rows.push(ClaimRow::exact(3, "corners <= 2 states", at, int(corners as i64), Relation::Le, int(2 * states as i64)));
                }
            }
        }
        (rows, vec![format!("max corners/(2 states) = {:.4} at {}", worst.0, worst.1)])
    }

    fn greedy_constant(&self) -> (Vec<ClaimRow>, Vec<String>) {
        let c = greedy_constant();
        let rows = self.per_instance(|inst| {
            let mut rows = Vec::new();
            for h in 1..=4 {
                let at = format!("{} h={h}", inst.name);
                match greedy_and_optimum(inst, h) {
                    Ok((greedy, opt)) => rows.push(ClaimRow::exact(4, "greedy >= 0.22 B*", at, greedy, Relation::Ge, &c * opt)),
                    Err(e) => rows.push(ClaimRow::error(4, "greedy >= 0.22 B*", at, e)),
                }
            }
            rows
        });
        let note = min_ratio_note(&rows, &c, "greedy/B*");
        (rows, vec![note])
    }

    fn halving(&self) -> (Vec<ClaimRow>, Vec<String>) {
        let c = halving_constant();
        let rows = self.per_instance(|inst| {
            let mut dp = match JointDp::new(&inst.arms, 4, DpOptions::default()) {
                Ok(dp) => dp,
                Err(e) => return vec![ClaimRow::error(5, "B*(h/2) >= 0.17 B*(h)", inst.name.clone(), e)],
            };
            let mut roots: Vec<NodeId> = inst.arms.iter().map(ArmDag::root).collect();
            (1..=4)
                .map(|h| {
                    let half = dp.budgeted(&mut roots, h / 2);
                    let full = dp.budgeted(&mut roots, h);
                    ClaimRow::exact(5, "B*(h/2) >= 0.17 B*(h)", format!("{} h={h}", inst.name), half, Relation::Ge, &c * full)
                })
                .collect()
        });
        let note = min_ratio_note(&rows, &c, "B*(h/2)/B*(h)");
        (rows, vec![note])
    }

    fn greedy_vs_persistent(&self) -> (Vec<ClaimRow>, Vec<String>) {
        let tapes = self.config.tapes;
        let seed = self.config.seed;
        let rows = self.per(&self.instances, |inst| {
            let mut rows = Vec::new();
            for h in 1..=4 {
                let at = format!("{} h={h}", inst.name);
                let built = IndexStrategy::new(StrategyConfig::new(StrategyKind::GreedyRatio, h), &inst.arms).and_then(|g| {
                    Ok((g, IndexStrategy::new(StrategyConfig::new(StrategyKind::Persistent, h), &inst.arms)?))
                });
                let (greedy, persistent) = match built {
                    Ok(pair) => pair,
                    Err(e) => {
                        rows.push(ClaimRow::error(6, "greedy >= persistent", at, e));
                        continue;
                    }
                };
                let values = exact_policy_value(&greedy, &inst.arms, h, Mode::Budgeted)
                    .and_then(|g| Ok((g, exact_policy_value(&persistent, &inst.arms, h, Mode::Budgeted)?)));
                match values {
                    Ok((g, p)) => rows.push(ClaimRow::exact(6, "greedy >= persistent", at.clone(), g, Relation::Ge, p)),
                    Err(e) => rows.push(ClaimRow::error(6, "greedy >= persistent", at.clone(), e)),
                }
                let mut prefix_ok = 0;
                let mut first_bad = None;
                for k in 0..tapes {
                    let tape = OutcomeTape::sample(&inst.arms, &mut trial_rng(seed.wrapping_add(2), k + h * tapes));
                    let g = exploration_sequence(&greedy, &inst.arms, h, &tape);
                    let p = exploration_sequence(&persistent, &inst.arms, h, &tape);
                    match (g, p) {
                        (Ok(g), Ok(p)) if g.starts_with(&p) => prefix_ok += 1,
                        (g, p) => {
                            first_bad.get_or_insert(format!("tape {k}: greedy {g:?}, persistent {p:?}"));
                        }
                    }
                }
                let lhs = first_bad.unwrap_or_else(|| format!("{prefix_ok}/{tapes} prefixes"));
                rows.push(ClaimRow::text(6, "persistent sequence is a prefix", at, lhs, format!("{tapes}/{tapes} prefixes")));
            }
            rows
        });
        (rows, Vec::new())
    }

    fn gittins_sandwich(&self) -> (Vec<ClaimRow>, Vec<String>) {
        let arms = self.arms();
        let per_arm: Vec<(Vec<ClaimRow>, MinRatio, MinRatio)> = self.pool(|| {
            arms.par_iter()
                .map(|(name, dag)| {
                    let mut rows = Vec::new();
                    let (mut low, mut high) = (MinRatio::default(), MinRatio::default());
                    for h in 2..=5 {
                        let theta = discount_for_budget(h).expect("h >= 2");
                        let at = format!("{name} h={h}");
                        let (curves, rho) = match (compute_all_curves(dag, h), gittins_indices_all(dag, theta, DEFAULT_TOLERANCE)) {
                            (Ok(c), Ok(g)) => (c, g),
                            (Err(e), _) => {
                                rows.push(ClaimRow::error(7, "gittins sandwich", at, e));
                                continue;
                            }
                            (_, Err(e)) => {
                                rows.push(ClaimRow::error(7, "gittins sandwich", at, e));
                                continue;
                            }
                        };
                        let shrink = theta.powi(h as i32);
                        for u in dag.ids() {
                            let r = to_f64(&curves.ratio_index(u));
                            let at = format!("{name} state {} h={h}", state_name(dag, u));
                            low.observe(rho[u.0], r * shrink, &at);
                            high.observe(r * SANDWICH_UPPER, rho[u.0], &at);
                            rows.push(ClaimRow::float(7, "rho >= r(1-1/h)^h", at.clone(), rho[u.0], Relation::Ge, r * shrink - FLOAT_SLACK));
                            rows.push(ClaimRow::float(7, "rho <= 18 r", at, rho[u.0], Relation::Le, SANDWICH_UPPER * r + FLOAT_SLACK));
                        }
                    }
                    (rows, low, high)
                })
                .collect()
        });
        let (mut low, mut high) = (MinRatio::default(), MinRatio::default());
        let mut rows = Vec::new();
        for (r, l, h) in per_arm {
            rows.extend(r);
            for (into, from) in [(&mut low, l), (&mut high, h)] {
                if let Some((v, at)) = from.best {
                    into.observe(v, 1.0, &at);
                }
            }
        }
        (rows, vec![low.note("rho/(r(1-1/h)^h)"), high.note("18r/rho")])
    }

    fn horizon_sandwich(&self) -> (Vec<ClaimRow>, Vec<String>) {
        let rows = self.per_instance(|inst| {
            let mut dp = match JointDp::new(&inst.arms, 6, DpOptions::default()) {
                Ok(dp) => dp,
                Err(e) => return vec![ClaimRow::error(8, "horizon sandwich", inst.name.clone(), e)],
            };
            let mut roots: Vec<NodeId> = inst.arms.iter().map(ArmDag::root).collect();
            let mut rows = Vec::new();
            for h in 1..=6usize {
                let at = format!("{} h={h}", inst.name);
                let f = dp.horizon(&mut roots, h);
                let lower = int(h.div_ceil(2) as i64) * dp.budgeted(&mut roots, h / 2);
                let upper = int(h as i64) * dp.budgeted(&mut roots, h);
                rows.push(ClaimRow::exact(8, "ceil(h/2) B*(h/2) <= F*(h)", at.clone(), lower, Relation::Le, f.clone()));
                rows.push(ClaimRow::exact(8, "F*(h) <= h B*(h)", at, f, Relation::Le, upper));
            }
            rows
        });
        (rows, Vec::new())
    }

    fn switch_scale(&self) -> (Vec<ClaimRow>, Vec<String>) {
        let ratio_c = switch_constant();
        let gittins_c = gittins_switch_constant();
        let kinds = [
            StrategyKind::RatioSwitch,
            StrategyKind::RatioScale,
            StrategyKind::GittinsSwitch,
            StrategyKind::GittinsScale,
        ];
        let rows = self.per_instance(|inst| {
            let mut rows = Vec::new();
            let mut dp = match JointDp::new(&inst.arms, 6, DpOptions::default()) {
                Ok(dp) => dp,
                Err(e) => return vec![ClaimRow::error(9, "switch lower bound", inst.name.clone(), e)],
            };
            let mut roots: Vec<NodeId> = inst.arms.iter().map(ArmDag::root).collect();
            for h in 1..=6 {
                let f = dp.horizon(&mut roots, h);
                for kind in kinds {
                    let claim = format!("{kind} >= c F*");
                    let at = format!("{} h={h}", inst.name);
                    let value = IndexStrategy::new(StrategyConfig::new(kind, h), &inst.arms)
                        .map_err(|e| e.to_string())
                        .and_then(|s| exact_policy_value(&s, &inst.arms, h, Mode::Horizon).map_err(|e| e.to_string()));
                    let row = match value {
                        Err(e) => ClaimRow::error(9, &claim, at, e),
                        Ok(v) => match kind {
                            StrategyKind::RatioSwitch | StrategyKind::RatioScale => {
                                ClaimRow::exact(9, &claim, at, v, Relation::Ge, &ratio_c * &f)
                            }
                            _ => ClaimRow::float(9, &claim, at, to_f64(&v), Relation::Ge, gittins_c * to_f64(&f)),
                        },
                    };
                    rows.push(row);
                }
            }
            rows
        });
        let mut notes = Vec::new();
        for kind in kinds {
            let mut m = MinRatio::default();
            let claim = format!("{kind} >= c F*");
            let c = match kind {
                StrategyKind::RatioSwitch | StrategyKind::RatioScale => to_f64(&ratio_c),
                _ => gittins_c,
            };
            for r in rows.iter().filter(|r| r.claim == claim) {
                if let (Some(l), Some(rhs)) = (value_f64(&r.lhs), value_f64(&r.rhs)) {
                    m.observe(l, rhs / c, &r.instance);
                }
            }
            notes.push(m.note(&format!("{kind}/F*")));
        }
        notes.push(format!("gittins constant {}", format_float(gittins_c)));
        (rows, notes)
    }

    fn restart_property(&self) -> (Vec<ClaimRow>, Vec<String>) {
        let seed = self.config.seed;
        let rows = self
            .pool(|| {
                self.restart
                    .par_iter()
                    .enumerate()
                    .map(|(k, inst)| {
                        let mut rng = trial_rng(seed.wrapping_add(3), k);
                        let n = inst.arms.len();
                        (0..4)
                            .map(|_| {
                                let h = rng.gen_range(1..=4);
                                let len = rng.gen_range(0..=3);
                                let prefix: Vec<usize> = (0..len).map(|_| rng.gen_range(0..n)).collect();
                                let at = format!("{} h={h} prefix={prefix:?}", inst.name);
                                match restart_property_check(&inst.arms, h, &prefix) {
                                    Ok(c) => ClaimRow::exact(10, "E[B*(h,T)] >= B*(h,S)", at, c.after_prefix, Relation::Ge, c.fresh),
                                    Err(e) => ClaimRow::error(10, "E[B*(h,T)] >= B*(h,S)", at, e),
                                }
                            })
                            .collect::<Vec<_>>()
                    })
                    .collect::<Vec<_>>()
            })
            .into_iter()
            .flatten()
            .collect();
        (rows, Vec::new())
    }

    fn ratio_policy_structure(&self) -> (Vec<ClaimRow>, Vec<String>) {
        let arms = self.arms();
        let rows = self
            .pool(|| {
                arms.par_iter()
                    .map(|(name, dag)| {
                        let mut rows = Vec::new();
                        for h in 1..=5 {
                            match compute_all_curves(dag, h) {
                                Ok(curves) => rows.extend(policy_structure_rows(name, dag, &curves, h)),
                                Err(e) => rows.push(ClaimRow::error(11, "ratio policy", format!("{name} h={h}"), e)),
                            }
                        }
                        rows
                    })
                    .collect::<Vec<_>>()
            })
            .into_iter()
            .flatten()
            .collect();
        (rows, Vec::new())
    }

    fn simulation_fidelity(&self) -> (Vec<ClaimRow>, Vec<String>) {
        let cfg = self.config;
        let take = cfg.sim_instances.min(self.instances.len());
        let mut rows = Vec::new();
        let mut worst = (0.0f64, String::new());
        for (idx, inst) in self.instances[..take].iter().enumerate() {
            for kind in StrategyKind::ALL {
                for (mode, h) in [(Mode::Budgeted, 3), (Mode::Horizon, 4)] {
                    let at = format!("{} {kind} {mode} h={h}", inst.name);
                    let strategy = match IndexStrategy::new(StrategyConfig::new(kind, h), &inst.arms) {
                        Ok(s) => s,
                        Err(e) => {
                            rows.push(ClaimRow::error(12, "simulation matches exact", at, e));
                            continue;
                        }
                    };
                    let exact = match exact_policy_value(&strategy, &inst.arms, h, mode) {
                        Ok(v) => to_f64(&v),
                        Err(e) => {
                            rows.push(ClaimRow::error(12, "simulation matches exact", at, e));
                            continue;
                        }
                    };
                    let sim_cfg = SimulationConfig {
                        mode,
                        h,
                        trials: cfg.sim_trials,
                        seed: cfg.seed.wrapping_add(idx as u64),
                        workers: cfg.workers,
                        keep_traces: false,
                    };
                    match simulate(&strategy, &inst.arms, &sim_cfg) {
                        Ok(r) => {
                            let gap = (r.mean - exact).abs();
                            let width = SIM_SIGMAS * r.stderr + 1e-9;
                            if gap / width > worst.0 {
                                worst = (gap / width, at.clone());
                            }
                            rows.push(ClaimRow::float(12, "|mean - exact| <= 4 stderr", at, gap, Relation::Le, width));
                        }
                        Err(e) => rows.push(ClaimRow::error(12, "simulation matches exact", at, e)),
                    }
                }
            }
        }
        rows.extend(self.worker_determinism());
        (rows, vec![format!("max gap/(4 stderr) = {:.4} at {}", worst.0, worst.1)])
    }

    /// Reports and traces under 1 and 8 workers serialize identically.
    fn worker_determinism(&self) -> Vec<ClaimRow> {
        let take = self.config.sim_instances.min(self.instances.len()).min(3);
        let mut rows = Vec::new();
        for inst in &self.instances[..take] {
            for kind in [StrategyKind::GreedyRatio, StrategyKind::RatioScale, StrategyKind::GittinsScale] {
                for mode in [Mode::Budgeted, Mode::Horizon] {
                    let at = format!("{} {kind} {mode}", inst.name);
                    let Ok(strategy) = IndexStrategy::new(StrategyConfig::new(kind, 4), &inst.arms) else {
                        rows.push(ClaimRow::error(12, "workers 1 == workers 8", at, "strategy construction failed"));
                        continue;
                    };
                    let run = |workers| {
                        let cfg = SimulationConfig { mode, h: 4, trials: 500, seed: self.config.seed, workers, keep_traces: true };
                        simulate(&strategy, &inst.arms, &cfg)
                            .map_err(|e| e.to_string())
                            .and_then(|r| serde_json::to_string(&r).map_err(|e| e.to_string()))
                    };
                    match (run(1), run(8)) {
                        (Ok(a), Ok(b)) => {
                            let digest = |s: &str| format!("{} bytes, {:016x}", s.len(), fnv1a(s.as_bytes()));
                            rows.push(ClaimRow::text(12, "workers 1 == workers 8", at, digest(&a), digest(&b)));
                        }
                        (Err(e), _) | (_, Err(e)) => rows.push(ClaimRow::error(12, "workers 1 == workers 8", at, e)),
                    }
                }
            }
        }
        rows
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

fn value_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Exact(r) => Some(to_f64(r)),
        Value::Float(x) => Some(*x),
        Value::Text(_) => None,
    }
}

/// Smallest `lhs / (rhs / c)` over exact rows.
fn min_ratio_note(rows: &[ClaimRow], c: &Rational, what: &str) -> String {
    let mut m = MinRatio::default();
    for r in rows {
        if let (Value::Exact(l), Value::Exact(rhs)) = (&r.lhs, &r.rhs) {
            if !rhs.is_zero() {
                m.observe(to_f64(l), to_f64(&(rhs / c)), &r.instance);
            }
        }
    }
    m.note(what)
}

fn greedy_and_optimum(inst: &Instance, h: usize) -> Result<(Rational, Rational), String> {
    let greedy = IndexStrategy::new(StrategyConfig::new(StrategyKind::GreedyRatio, h), &inst.arms).map_err(|e| e.to_string())?;
    let value = exact_policy_value(&greedy, &inst.arms, h, Mode::Budgeted).map_err(|e| e.to_string())?;
    let opt = optimal_budgeted(&inst.arms, h, DpOptions::default()).map_err(|e| e.to_string())?;
    Ok((value, opt.value))
}

fn policy_structure_rows(name: &str, dag: &ArmDag, curves: &CurveSet, h: usize) -> Vec<ClaimRow> {
    let mut rows = Vec::new();
    for u in dag.ids() {
        let at = format!("{name} state {} h={h}", state_name(dag, u));
        let policy = match extract_ratio_policy(dag, curves, u) {
            Ok(p) => p,
            Err(e) => {
                rows.push(ClaimRow::error(11, "ratio policy", at, e));
                continue;
            }
        };
        let cost = policy.evaluate(dag).cost(h);
        rows.push(ClaimRow::exact(11, "ratio policy cost <= 1", at.clone(), cost, Relation::Le, int(1)));
        let r_u = curves.ratio_index(u);
        let mut violations = Vec::new();
        for (id, label) in policy.reachable_labels(dag) {
            let v = dag.find(&id).expect("label of a known state");
            let r_v = curves.ratio_index(v);
            let bad = match label {
                Label::Abandon => r_v > r_u,
                Label::Explore | Label::Exploit => r_v < r_u,
            };
            if bad {
                violations.push(format!("{id}:{label}"));
            }
        }
        let lhs = if violations.is_empty() { "ordered".to_string() } else { violations.join(" ") };
        rows.push(ClaimRow::text(11, "labels follow ratio order", at, lhs, "ordered".into()));
    }
    rows
}

/// Exact counterexample rows: values, optimal first actions and the
/// four-place decimals.
fn counterexample() -> (Vec<ClaimRow>, Vec<String>) {
    let insts = counterexample_instances();
    let expected = [
        (rat(5, 9) * rat(6, 10) + rat(4, 9) * rat(28, 47), Action::Explore(0), "0.5981"),
        (rat(28, 47) * rat(29, 48) + rat(19, 47) * rat(28, 47), Action::Explore(1), "0.6008"),
    ];
    let mut rows = Vec::new();
    for (inst, (value, action, decimal)) in insts.iter().zip(expected) {
        match optimal_budgeted(&inst.arms, 1, DpOptions::default()) {
            Ok(opt) => {
                rows.push(ClaimRow::exact(1, "B*(1)", inst.name.clone(), opt.value.clone(), Relation::Eq, value));
                rows.push(ClaimRow::text(1, "optimal first action", inst.name.clone(), opt.first_action.to_string(), action.to_string()));
                rows.push(ClaimRow::text(1, "B*(1) to 4 places", inst.name.clone(), four_places(&opt.value), decimal.into()));
            }
            Err(e) => rows.push(ClaimRow::error(1, "B*(1)", inst.name.clone(), e)),
        }
    }
    let b = &insts[0].arms[1];
    let single = b.zeta(b.root()).clone();
    rows.push(ClaimRow::exact(1, "payoff of B", "arm (28,19)".into(), single.clone(), Relation::Eq, rat(28, 47)));
    rows.push(ClaimRow::text(1, "payoff of B to 4 places", "arm (28,19)".into(), four_places(&single), "0.5957".into()));
    (rows, vec!["adding a copy of B flips the optimal first action from A to B".into()])
}

/// Decimal rounded half up to four places.
fn four_places(r: &Rational) -> String {
    let scaled = (r * int(10_000) + rat(1, 2)).floor();
    let n = scaled.to_integer().to_i64().unwrap_or(0);
    format!("{}.{:04}", n / 10_000, n % 10_000)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SuiteConfig {
        SuiteConfig { instances: 6, restart_instances: 6, tapes: 4, sim_instances: 2, sim_trials: 500, ..SuiteConfig::default() }
    }

    #[test]
    fn constants() {
        assert_eq!(switch_constant(), rat(187, 10_000));
        assert!((gittins_greedy_constant() - 0.003466).abs() < 1e-6);
    }

    #[test]
    fn counterexample_passes() {
        let report = Suite::with_instances(small(), Vec::new()).run(1);
        assert!(report.passed(), "{:?}", report.failures().collect::<Vec<_>>());
        assert_eq!(report.rows.len(), 8);
    }

    #[test]
    fn four_place_rounding() {
        assert_eq!(four_places(&rat(28, 47)), "0.5957");
        assert_eq!(four_places(&rat(1, 2)), "0.5000");
        assert_eq!(four_places(&rat(99_999, 100_000)), "1.0000");
    }

    #[test]
    fn sweep_is_seeded() {
        let p = DagParams::default();
        let a = sweep_instances(5, 4, 3, &p);
        let b = sweep_instances(5, 4, 3, &p);
        assert!(a.iter().zip(&b).all(|(x, y)| x.arms == y.arms && x.name == y.name));
    }

    #[test]
    fn small_suite_passes() {
        let suite = Suite::new(small());
        for report in suite.run_all() {
            assert!(report.passed(), "{}: {:?}", report.summary(), report.failures().take(3).collect::<Vec<_>>());
        }
    }

    #[test]
    fn failing_rows_fail_the_report() {
        let row = ClaimRow::exact(4, "x", "i".into(), int(1), Relation::Ge, int(2));
        let report = CriterionReport { id: 4, title: "t".into(), rows: vec![row], notes: vec![], seconds: 0.0 };
        assert!(!report.passed());
        assert!(report.summary().contains("FAIL"));
        assert!(!Suite::with_instances(small(), Vec::new()).run(99).passed());
    }
}
