use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use ratio_index::certify::{CriterionReport, Instance, Suite, SuiteConfig, Value, CRITERIA};
use ratio_index::evaluator::{discounted_value, simulate as run_simulation, SimulationConfig};
use ratio_index::gittins::{gittins_index, GittinsQuery};
use ratio_index::numeric::{format_float, one, parse_rational, rat, to_f64, zero};
use ratio_index::oracle::{
    exact_policy_value, exact_reward_profile, gittins_by_stopping_sets, optimal_budgeted_value,
    optimal_finite_horizon_value, MAX_STOPPING_STATES,
};
use ratio_index::policies::{IndexStrategy, Mode, StrategyConfig, StrategyKind};
use ratio_index::profit_curve::{compute_all_curves, extract_ratio_policy};
use ratio_index::{ArmDag, NodeId, Rational};
use serde_json::{json, Map, Value as Json};

use crate::config::{load_experiment, load_valid_arm, Experiment, ExperimentMode};
use crate::output::{csv_line, emit, Numeric};
use crate::{Common, Outcome};

fn state_of(dag: &ArmDag, id: Option<&str>) -> Result<NodeId> {
    match id {
        None => Ok(dag.root()),
        Some(s) => dag.find(s).ok_or_else(|| anyhow!("unknown state {s:?}")),
    }
}

fn pretty(v: &Json) -> String {
    serde_json::to_string_pretty(v).expect("json values serialize") + "\n"
}

/// Exact stopping-set index when the numeric mode is exact and the sub-DAG
/// is small enough, bisection otherwise.
fn gittins_entry(dag: &ArmDag, u: NodeId, theta: &Rational, numeric: Numeric, tolerance: f64) -> Result<Json> {
    if numeric == Numeric::Exact && dag.sub_dag(u).len() <= MAX_STOPPING_STATES {
        let value = gittins_by_stopping_sets(dag, u, theta)?;
        return Ok(json!({ "state": dag.node(u).id, "index": numeric.rational(&value), "method": "stopping_sets" }));
    }
    let q = GittinsQuery { dag, state: u, theta: to_f64(theta), tolerance };
    let value = gittins_index(&q)?;
    Ok(json!({ "state": dag.node(u).id, "index": format_float(value), "method": "bisection" }))
}

pub fn index(common: &Common, arm: &Path, h: usize, state: Option<&str>, with_gittins: bool) -> Result<Outcome> {
    let numeric = common.mode.unwrap_or_default();
    let dag = load_valid_arm(arm)?;
    let u = state_of(&dag, state)?;
    if h == 0 {
        bail!("--h must be at least 1");
    }
    let curves = compute_all_curves(&dag, h)?;
    let curve = curves.get(u);
    let policy = extract_ratio_policy(&dag, &curves, u)?;
    let corners: Vec<Json> = curve
        .corners
        .iter()
        .map(|c| json!({ "cost": numeric.rational(&c.cost), "profit": numeric.rational(&c.profit) }))
        .collect();
    let labels: Map<String, Json> =
        policy.reachable_labels(&dag).into_iter().map(|(id, l)| (id, Json::String(l.to_string()))).collect();
    let mut out = json!({
        "state": dag.node(u).id,
        "h": h,
        "ratio_index": numeric.rational(&curve.ratio_index()),
        "corners": corners,
        "policy": labels,
    });
    if with_gittins {
        out["gittins"] = match h {
            0 | 1 => Json::Null,
            _ => {
                let theta = one() - rat(1, h as i64);
                let mut g = gittins_entry(&dag, u, &theta, numeric, ratio_index::gittins::DEFAULT_TOLERANCE)?;
                g["theta"] = Json::String(numeric.rational(&theta));
                g
            }
        };
    }
    emit(common.out.as_deref(), &pretty(&out))?;
    Ok(Outcome::Ok)
}

pub fn gittins(
    common: &Common,
    arm: &Path,
    theta: Option<&str>,
    h: Option<usize>,
    state: Option<&str>,
    tolerance: f64,
) -> Result<Outcome> {
    let numeric = common.mode.unwrap_or_default();
    let dag = load_valid_arm(arm)?;
    let theta = match (theta, h) {
        (Some(t), _) => parse_rational(t).with_context(|| format!("--theta {t}"))?,
        (None, Some(h)) if h >= 2 => one() - rat(1, h as i64),
        (None, Some(h)) => bail!("--h {h} gives a discount outside (0, 1); use h >= 2"),
        (None, None) => bail!("give --theta or --h"),
    };
    if theta <= zero() || theta >= one() {
        bail!("discount {} is outside (0, 1)", numeric.rational(&theta));
    }
    let states: Vec<NodeId> = match state {
        Some(_) => vec![state_of(&dag, state)?],
        None => dag.ids().collect(),
    };
    let indices = states
        .into_iter()
        .map(|u| gittins_entry(&dag, u, &theta, numeric, tolerance))
        .collect::<Result<Vec<_>>>()?;
    let out = json!({ "theta": numeric.rational(&theta), "indices": indices });
    emit(common.out.as_deref(), &pretty(&out))?;
    Ok(Outcome::Ok)
}

pub fn validate(arms: &[PathBuf]) -> Result<Outcome> {
    let mut bad = 0;
    for path in arms {
        match load_valid_arm(path) {
            Ok(dag) => println!("{}: ok ({} states)", path.display(), dag.len()),
            Err(e) => {
                bad += 1;
                println!("{}: {e:#}", path.display());
            }
        }
    }
    if bad > 0 {
        bail!("{bad} of {} arm files failed validation", arms.len());
    }
    Ok(Outcome::Ok)
}

fn value_text(v: &Value, numeric: Numeric) -> String {
    match v {
        Value::Exact(r) => numeric.rational(r),
        other => other.to_string(),
    }
}

fn certify_csv(reports: &[CriterionReport], numeric: Numeric) -> String {
    let mut text = csv_line(&["criterion", "claim", "instance", "lhs", "relation", "rhs", "pass"]);
    for row in reports.iter().flat_map(|r| &r.rows) {
        text.push_str(&csv_line(&[
            row.criterion.to_string(),
            row.claim.clone(),
            row.instance.clone(),
            value_text(&row.lhs, numeric),
            row.relation.to_string(),
            value_text(&row.rhs, numeric),
            row.pass.to_string(),
        ]));
    }
    text
}

pub fn certify(common: &Common, config: Option<&Path>, criteria: &[u8], instances: Option<usize>) -> Result<Outcome> {
    let mut suite_config = SuiteConfig::default();
    if let Some(seed) = common.seed {
        suite_config.seed = seed;
    }
    if let Some(trials) = common.trials {
        suite_config.sim_trials = trials;
    }
    if let Some(n) = instances {
        suite_config.instances = n;
    }
    suite_config.workers = common.workers.unwrap_or(0);
    let mut numeric = common.mode;
    let suite = match config {
        None => Suite::new(suite_config),
        Some(path) => {
            let exp = load_experiment(path)?;
            numeric = numeric.or(exp.config.numeric);
            let name = path.file_stem().map_or("config".into(), |s| s.to_string_lossy().into_owned());
            Suite::with_instances(suite_config, vec![Instance { name, arms: exp.arms }])
        }
    };
    let ids: Vec<u8> = if criteria.is_empty() { CRITERIA.iter().map(|c| c.0).collect() } else { criteria.to_vec() };
    if let Some(bad) = ids.iter().find(|&&id| !(1..=12).contains(&id)) {
        bail!("unknown criterion {bad}; criteria are 1 to 12");
    }
    let reports: Vec<CriterionReport> = ids.iter().map(|&id| suite.run(id)).collect();
    for r in &reports {
        println!("{}", r.summary());
        for f in r.failures().take(5) {
            println!("    failed: {} | {} | {} {} {}", f.claim, f.instance, f.lhs, f.relation, f.rhs);
        }
    }
    if let Some(out) = &common.out {
        emit(Some(out), &certify_csv(&reports, numeric.unwrap_or_default()))?;
    }
    if reports.iter().all(CriterionReport::passed) {
        Ok(Outcome::Ok)
    } else {
        Ok(Outcome::CertificationFailed)
    }
}

struct SimRow {
    fields: Vec<String>,
    traces: Vec<String>,
    json: Json,
}

fn mode_name(mode: ExperimentMode) -> &'static str {
    match mode {
        ExperimentMode::Budgeted => "budgeted",
        ExperimentMode::Horizon => "horizon",
        ExperimentMode::Discounted => "discounted",
    }
}

/// Exact strategy value and optimum, when the oracle bounds allow.
fn oracle_columns(exp: &Experiment, strategy: &IndexStrategy, h: usize, numeric: Numeric) -> Result<[String; 2]> {
    let arms = &exp.arms;
    let cfg = &exp.config;
    Ok(match cfg.mode {
        ExperimentMode::Budgeted => [
            numeric.rational(&exact_policy_value(strategy, arms, h, Mode::Budgeted)?),
            numeric.rational(&optimal_budgeted_value(arms, h)?),
        ],
        ExperimentMode::Horizon => [
            numeric.rational(&exact_policy_value(strategy, arms, h, Mode::Horizon)?),
            numeric.rational(&optimal_finite_horizon_value(arms, h)?),
        ],
        ExperimentMode::Discounted => {
            let seq = cfg.discount.as_ref().expect("checked").sequence();
            let profile = exact_reward_profile(strategy, arms, cfg.eval_horizon.expect("checked"))?;
            let total: Rational = profile.iter().enumerate().map(|(t, r)| seq.weight(t) * r).sum();
            [numeric.rational(&total), String::new()]
        }
    })
}

fn simulate_one(
    exp: &Experiment,
    kind: StrategyKind,
    tolerance: Option<f64>,
    h: usize,
    run: &SimulationConfig,
    timing: bool,
    numeric: Numeric,
) -> Result<SimRow> {
    let cfg = &exp.config;
    let mut sc = StrategyConfig::new(kind, h);
    if let Some(t) = tolerance {
        sc.tolerance = t;
    }
    let strategy = IndexStrategy::new(sc, &exp.arms).with_context(|| format!("building {kind} at h = {h}"))?;
    let started = Instant::now();
    let (mean, stderr, trials, traces) = match cfg.mode {
        ExperimentMode::Discounted => {
            let seq = cfg.discount.as_ref().expect("checked").sequence();
            let eval = cfg.eval_horizon.expect("checked");
            let r = discounted_value(&strategy, &exp.arms, &seq, eval, run.trials, run.seed, run.workers)?;
            (r.mean, r.stderr, r.trials, None)
        }
        _ => {
            let r = run_simulation(&strategy, &exp.arms, &SimulationConfig { h, ..*run })?;
            (r.mean, r.stderr, r.trials, r.traces)
        }
    };
    let seconds = if timing { format!("{:.6}", started.elapsed().as_secs_f64()) } else { "0".into() };
    let mut fields = vec![
        kind.to_string(),
        mode_name(cfg.mode).to_string(),
        h.to_string(),
        trials.to_string(),
        run.seed.to_string(),
        format_float(mean),
        format_float(stderr),
        seconds,
    ];
    let mut json = json!({
        "strategy": kind.to_string(),
        "mode": mode_name(cfg.mode),
        "h": h,
        "trials": trials,
        "seed": run.seed,
        "mean": format_float(mean),
        "stderr": format_float(stderr),
        "seconds": fields[7],
    });
    if cfg.oracle {
        let [exact, optimum] = oracle_columns(exp, &strategy, h, numeric)?;
        json["exact"] = Json::String(exact.clone());
        json["optimum"] = Json::String(optimum.clone());
        fields.push(exact);
        fields.push(optimum);
    }
    let traces = traces
        .unwrap_or_default()
        .into_iter()
        .flat_map(|episode| {
            let strategy = kind.to_string();
            episode.steps.into_iter().map(move |s| {
                let record = json!({
                    "strategy": strategy,
                    "h": h,
                    "trial": episode.trial,
                    "t": s.t,
                    "arm": s.arm,
                    "node_id": s.node_id,
                    "next_node_id": s.next_node_id,
                    "reward": s.reward,
                });
                record.to_string() + "\n"
            })
        })
        .collect();
    Ok(SimRow { fields, traces, json })
}

pub fn simulate(common: &Common, path: &Path, timing: bool) -> Result<Outcome> {
    let exp = load_experiment(path)?;
    let cfg = &exp.config;
    let numeric = common.mode.or(cfg.numeric).unwrap_or_default();
    let trace_path = cfg.output.traces.as_ref().map(|p| exp.resolve(p));
    let run = SimulationConfig {
        mode: cfg.simulation_mode(),
        h: 0,
        trials: common.trials.unwrap_or(cfg.trials),
        seed: common.seed.unwrap_or(cfg.seed),
        workers: common.workers.unwrap_or(0),
        keep_traces: trace_path.is_some() && cfg.mode != ExperimentMode::Discounted,
    };
    if run.trials == 0 {
        bail!("--trials must be at least 1");
    }
    let kinds: Vec<(StrategyKind, Option<f64>)> = if cfg.strategies.is_empty() {
        StrategyKind::ALL.iter().map(|&k| (k, None)).collect()
    } else {
        cfg.strategies.iter().map(|s| (s.kind(), s.tolerance())).collect()
    };

    let mut header = vec!["strategy", "mode", "h", "trials", "seed", "mean", "stderr", "seconds"];
    if cfg.oracle {
        header.extend(["exact", "optimum"]);
    }
    let mut csv = csv_line(&header);
    let mut traces = String::new();
    let mut rows = Vec::new();
    for &(kind, tolerance) in &kinds {
        for h in cfg.horizons() {
            let row = simulate_one(&exp, kind, tolerance, h, &run, timing, numeric)?;
            csv.push_str(&csv_line(&row.fields));
            traces.extend(row.traces);
            rows.push(row.json);
        }
    }
    let csv_path = common.out.clone().or_else(|| cfg.output.csv.as_ref().map(|p| exp.resolve(p)));
    emit(csv_path.as_deref(), &csv)?;
    if let Some(p) = &cfg.output.json {
        emit(Some(&exp.resolve(p)), &pretty(&Json::Array(rows)))?;
    }
    if let Some(p) = trace_path {
        emit(Some(&p), &traces)?;
    }
    Ok(Outcome::Ok)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ratio_index::arm_model::beta_bernoulli_arm;

    #[test]
    fn values_follow_the_numeric_mode() {
        let v = Value::Exact(rat(1, 8));
        assert_eq!(value_text(&v, Numeric::Exact), "1/8");
        assert_eq!(value_text(&v, Numeric::Float), "1.2500000000000000e-1");
        assert_eq!(value_text(&Value::Text("ok".into()), Numeric::Float), "ok");
    }

    #[test]
    fn certify_csv_has_one_line_per_row() {
        let suite = Suite::with_instances(SuiteConfig::default(), Vec::new());
        let report = suite.run(1);
        let csv = certify_csv(std::slice::from_ref(&report), Numeric::Exact);
        assert_eq!(csv.lines().count(), 1 + report.rows.len());
        assert!(csv.starts_with("criterion,claim,instance,lhs,relation,rhs,pass\n"));
    }

    #[test]
    fn gittins_entry_switches_method_by_size() {
        let small = beta_bernoulli_arm(1, 1, 2);
        let theta = rat(1, 2);
        let e = gittins_entry(&small, small.root(), &theta, Numeric::Exact, 1e-9).unwrap();
        assert_eq!(e["method"], "stopping_sets");
        let large = beta_bernoulli_arm(1, 1, 6);
        let e = gittins_entry(&large, large.root(), &theta, Numeric::Exact, 1e-9).unwrap();
        assert_eq!(e["method"], "bisection");
        assert_eq!(mode_name(ExperimentMode::Discounted), "discounted");
    }
}
