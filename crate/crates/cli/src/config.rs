//! Experiment config files.
//!
//! ```json
//! {
//!   "arms": [{ "beta_bernoulli": [5, 4], "depth": 1 }, "arms/b.json"],
//!   "mode": "budgeted",
//!   "h": [1, 2, 3],
//!   "strategies": ["greedy_ratio", { "kind": "gittins_scale", "tolerance": 1e-10 }],
//!   "trials": 10000,
//!   "seed": 7,
//!   "numeric": "exact",
//!   "oracle": true,
//!   "output": { "csv": "results.csv" }
//! }
//! ```
//!
//! Arms are inline arm specs or paths relative to the config file.
//! `"mode": "discounted"` additionally needs `discount` and `eval_horizon`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ratio_index::arm_model::{validate, ArmSpec, RationalLit};
use ratio_index::evaluator::DiscountSequence;
use ratio_index::policies::{Mode, StrategyKind};
use ratio_index::{ArmDag, Rational};
use serde::Deserialize;

use crate::output::Numeric;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ArmRef {
    Path(PathBuf),
    Inline(ArmSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentMode {
    Budgeted,
    Horizon,
    Discounted,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Horizons {
    One(usize),
    Many(Vec<usize>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum StrategyEntry {
    Name(StrategyKind),
    Full {
        kind: StrategyKind,
        #[serde(default)]
        tolerance: Option<f64>,
    },
}

impl StrategyEntry {
    pub fn kind(&self) -> StrategyKind {
        match self {
            StrategyEntry::Name(k) | StrategyEntry::Full { kind: k, .. } => *k,
        }
    }

    pub fn tolerance(&self) -> Option<f64> {
        match self {
            StrategyEntry::Name(_) => None,
            StrategyEntry::Full { tolerance, .. } => *tolerance,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DiscountSpec {
    Geometric(RationalLit),
    Horizon(usize),
    Explicit(Vec<RationalLit>),
}

impl DiscountSpec {
    pub fn sequence(&self) -> DiscountSequence {
        match self {
            DiscountSpec::Geometric(t) => DiscountSequence::Geometric(t.0.clone()),
            DiscountSpec::Horizon(h) => DiscountSequence::Horizon(*h),
            DiscountSpec::Explicit(v) => DiscountSequence::Explicit(v.iter().map(|l| l.0.clone()).collect::<Vec<Rational>>()),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    pub csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
    /// Per-step trace records (JSON lines).
    pub traces: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub arms: Vec<ArmRef>,
    pub mode: ExperimentMode,
    pub h: Option<Horizons>,
    #[serde(default)]
    pub strategies: Vec<StrategyEntry>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub numeric: Option<Numeric>,
    /// Append exact strategy value and optimum columns.
    #[serde(default)]
    pub oracle: bool,
    pub discount: Option<DiscountSpec>,
    pub eval_horizon: Option<usize>,
    #[serde(default)]
    pub output: OutputPaths,
}

fn default_trials() -> usize {
    1000
}

/// A parsed config with its arms loaded and validated.
#[derive(Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub arms: Vec<ArmDag>,
    /// Directory relative paths resolve against.
    pub base: PathBuf,
}

impl ExperimentConfig {
    pub fn horizons(&self) -> Vec<usize> {
        match &self.h {
            None => Vec::new(),
            Some(Horizons::One(h)) => vec![*h],
            Some(Horizons::Many(v)) => v.clone(),
        }
    }

    pub fn simulation_mode(&self) -> Mode {
        match self.mode {
            ExperimentMode::Budgeted => Mode::Budgeted,
            ExperimentMode::Horizon | ExperimentMode::Discounted => Mode::Horizon,
        }
    }

    fn check(&self) -> Result<()> {
        if self.arms.is_empty() {
            bail!("`arms` is empty");
        }
        if self.h.is_none() || self.horizons().is_empty() {
            bail!("`h` is required");
        }
        if self.trials == 0 {
            bail!("`trials` must be at least 1");
        }
        if self.mode == ExperimentMode::Discounted {
            if self.discount.is_none() {
                bail!("mode `discounted` needs `discount`");
            }
            if self.eval_horizon.is_none() {
                bail!("mode `discounted` needs `eval_horizon`");
            }
        }
        Ok(())
    }
}

/// Loads an arm file and rejects it unless every invariant holds.
pub fn load_valid_arm(path: &Path) -> Result<ArmDag> {
    let dag = ratio_index::arm_model::load_arm(path).with_context(|| format!("reading arm {}", path.display()))?;
    check_valid(&dag, &path.display().to_string())?;
    Ok(dag)
}

pub fn check_valid(dag: &ArmDag, what: &str) -> Result<()> {
    let report = validate(dag);
    if !report.is_empty() {
        bail!("arm {what} is invalid:\n{}", report.to_string().trim_end());
    }
    Ok(())
}

pub fn load_experiment(path: &Path) -> Result<Experiment> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let config: ExperimentConfig =
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    config.check().with_context(|| format!("config {}", path.display()))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let arms = config
        .arms
        .iter()
        .enumerate()
        .map(|(i, a)| match a {
            ArmRef::Path(p) => load_valid_arm(&base.join(p)),
            ArmRef::Inline(spec) => {
                let dag = spec.clone().into_dag().with_context(|| format!("arms[{i}]"))?;
                check_valid(&dag, &format!("arms[{i}]"))?;
                Ok(dag)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Experiment { config, arms, base })
}

impl Experiment {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base.join(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        let c: ExperimentConfig = serde_json::from_str(text)?;
        c.check()?;
        Ok(c)
    }

    #[test]
    fn full_config() {
        let c = parse(
            r#"{ "arms": [{ "beta_bernoulli": [5, 4], "depth": 1 }, "b.json"], "mode": "discounted", "h": 3,
                 "strategies": ["greedy_ratio", { "kind": "gittins_scale", "tolerance": 1e-10 }],
                 "discount": { "explicit": [1, "1/2", 0] }, "eval_horizon": 3, "numeric": "float" }"#,
        )
        .unwrap();
        assert!(matches!(c.arms[1], ArmRef::Path(_)));
        assert_eq!(c.horizons(), vec![3]);
        assert_eq!(c.strategies[1].kind(), StrategyKind::GittinsScale);
        assert_eq!(c.strategies[1].tolerance(), Some(1e-10));
        assert_eq!(c.simulation_mode(), Mode::Horizon);
        assert_eq!(c.numeric, Some(Numeric::Float));
        assert_eq!(c.trials, 1000);
        assert!(matches!(c.discount.unwrap().sequence(), DiscountSequence::Explicit(v) if v.len() == 3));
    }

    #[test]
    fn missing_fields_are_reported() {
        let no_h = parse(r#"{ "arms": ["a.json"], "mode": "budgeted" }"#).unwrap_err();
        assert!(no_h.to_string().contains("`h`"));
        let no_discount = parse(r#"{ "arms": ["a.json"], "mode": "discounted", "h": 2 }"#).unwrap_err();
        assert!(no_discount.to_string().contains("discount"));
        assert!(parse(r#"{ "arms": [], "mode": "horizon", "h": 2 }"#).is_err());
        assert!(parse(r#"{ "arms": ["a.json"], "mode": "horizon", "h": 2, "typo": 1 }"#).is_err());
        assert!(parse(r#"{ "arms": ["a.json"], "mode": "horizon", "h": 2, "strategies": ["nope"] }"#).is_err());
    }
}
