//! JSON arm-spec format.
//!
//! Either an explicit node list
//!
//! ```json
//! { "root": "u", "nodes": [ { "id": "u", "layer": 0, "zeta": "1/2",
//!   "edges": [ { "to": "v1", "p": "1/2" }, { "to": "v2", "p": 0.5 } ] }, ... ] }
//! ```
//!
//! or the generator shorthand `{ "beta_bernoulli": [5, 4], "depth": 1 }`.
//! Rationals are strings `"num/den"` or decimal literals (string or number).

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{beta_bernoulli_arm, ArmDag, ArmError, ArmNode, Edge, NodeId, RewardModel};
use crate::numeric::{format_rational, from_f64, parse_rational, Rational};

/// A rational literal as it appears in spec files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RationalLit(pub Rational);

impl Serialize for RationalLit {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_rational(&self.0))
    }
}

impl<'de> Deserialize<'de> for RationalLit {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct LitVisitor;
        impl Visitor<'_> for LitVisitor {
            type Value = RationalLit;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a rational as \"num/den\", a decimal string, or a number")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<RationalLit, E> {
                parse_rational(v).map(RationalLit).map_err(E::custom)
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<RationalLit, E> {
                Ok(RationalLit(crate::numeric::int(v)))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<RationalLit, E> {
                Ok(RationalLit(Rational::from_integer(v.into())))
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<RationalLit, E> {
                // Shortest round-trip text recovers the decimal literal.
                parse_rational(&v.to_string())
                    .ok()
                    .or_else(|| from_f64(v))
                    .map(RationalLit)
                    .ok_or_else(|| E::custom("non-finite number"))
            }
        }
        d.deserialize_any(LitVisitor)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub to: String,
    pub p: RationalLit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: String,
    pub layer: usize,
    pub zeta: RationalLit,
    #[serde(default)]
    pub edges: Vec<EdgeSpec>,
}

/// Textual arm specification, in either explicit or generator form.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_bernoulli: Option<[u64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_bound: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<RewardModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<Vec<NodeSpec>>,
}

fn field(path: impl Into<String>, message: impl Into<String>) -> ArmError {
    ArmError::Field {
        path: path.into(),
        message: message.into(),
    }
}

impl ArmSpec {
    pub fn from_dag(dag: &ArmDag) -> Self {
        let nodes = dag
            .nodes()
            .iter()
            .map(|n| NodeSpec {
                id: n.id.clone(),
                layer: n.layer,
                zeta: RationalLit(n.zeta.clone()),
                edges: n
                    .edges
                    .iter()
                    .map(|e| EdgeSpec {
                        to: dag.node(e.to).id.clone(),
                        p: RationalLit(e.prob.clone()),
                    })
                    .collect(),
            })
            .collect();
        Self {
            root: Some(dag.node(dag.root()).id.clone()),
            depth_bound: Some(dag.depth_bound()),
            reward: (dag.reward_model() != RewardModel::Payoff).then_some(dag.reward_model()),
            nodes: Some(nodes),
            ..Self::default()
        }
    }

    pub fn into_dag(self) -> Result<ArmDag, ArmError> {
        match (self.beta_bernoulli, self.nodes) {
            (Some(_), Some(_)) => Err(field("beta_bernoulli", "cannot be combined with `nodes`")),
            (None, None) => Err(field("nodes", "missing: give `nodes` + `root` or `beta_bernoulli` + `depth`")),
            (Some([alpha, beta]), None) => {
                if alpha == 0 || beta == 0 {
                    return Err(field("beta_bernoulli", "alpha and beta must be positive"));
                }
                let depth = self.depth.ok_or_else(|| field("depth", "required with `beta_bernoulli`"))?;
                Ok(beta_bernoulli_arm(alpha, beta, depth))
            }
            (None, Some(specs)) => {
                if self.depth.is_some() {
                    return Err(field("depth", "only valid with `beta_bernoulli`; use `depth_bound`"));
                }
                let root = self.root.ok_or_else(|| field("root", "required with `nodes`"))?;
                let mut index = HashMap::new();
                for (i, n) in specs.iter().enumerate() {
                    if index.insert(n.id.clone(), i).is_some() {
                        return Err(ArmError::DuplicateId(n.id.clone()));
                    }
                }
                let root_id = *index.get(&root).ok_or_else(|| ArmError::UnknownRoot(root.clone()))?;
                let depth_bound = self
                    .depth_bound
                    .unwrap_or_else(|| specs.iter().map(|n| n.layer).max().unwrap_or(0));
                let mut nodes = Vec::with_capacity(specs.len());
                for spec in &specs {
                    let mut edges = Vec::with_capacity(spec.edges.len());
                    for e in &spec.edges {
                        let to = *index.get(&e.to).ok_or_else(|| ArmError::DanglingEdge {
                            from: spec.id.clone(),
                            to: e.to.clone(),
                        })?;
                        edges.push(Edge {
                            to: NodeId(to),
                            prob: e.p.0.clone(),
                        });
                    }
                    nodes.push(ArmNode {
                        id: spec.id.clone(),
                        layer: spec.layer,
                        zeta: spec.zeta.0.clone(),
                        edges,
                    });
                }
                Ok(ArmDag::new(nodes, NodeId(root_id), depth_bound)?
                    .with_reward_model(self.reward.unwrap_or_default()))
            }
        }
    }
}

/// Parses an arm spec from JSON text.
pub fn arm_from_str(text: &str) -> Result<ArmDag, ArmError> {
    let spec: ArmSpec = serde_json::from_str(text).map_err(|e| ArmError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    spec.into_dag()
}

pub fn load_arm(path: impl AsRef<Path>) -> Result<ArmDag, ArmError> {
    arm_from_str(&std::fs::read_to_string(path)?)
}

/// Explicit-form JSON for `dag`.
pub fn arm_to_string(dag: &ArmDag) -> String {
    serde_json::to_string_pretty(&ArmSpec::from_dag(dag)).expect("arm spec serializes")
}

pub fn serialize_arm(dag: &ArmDag, path: impl AsRef<Path>) -> Result<(), ArmError> {
    std::fs::write(path, arm_to_string(dag) + "\n")?;
    Ok(())
}
