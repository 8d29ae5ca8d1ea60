//! Scenario definition, the TOML scenario file and the built-in experiments.
//!
//! A scenario file looks like:
//!
//! ```toml
//! group_address = 0xC000        # destination of every flow
//! epoch_ms = 0                  # wall-clock origin of the run
//! delivery_timeout_ms = 5000
//!
//! [radio]                       # optional, defaults shown in RadioModel
//! path_loss_exp = 3.0
//!
//! [policy]                      # optional, defaults to the built-in policy
//! default_priority = 2
//! classes = [{ priority = 1, n_rep = 2, adv_interval_ms = 20, ttl = 7, tx_power_dbm = 4 }]
//! opcodes = [{ opcode = 0xC00059, priority = 1 }]
//!
//! [[node]]
//! id = "A"
//! x = 0.0
//! y = 0.0
//! elements = [0x0091, 0x0092, 0x0093]
//! subscriptions = []
//! relay = true
//!
//! [[flow]]
//! source = "A"
//! destination = "H"
//! packet_count = 6000
//! generation_interval_ms = 2000
//! priority_weights = [[1, 1.0], [2, 1.0], [3, 1.0]]
//! ```
//!
//! Unknown keys are rejected.
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::node::{NodeConfig, Position, SimTime};
use crate::pdu::Address;
use crate::qos::{QosPolicy, TxParams};
use crate::sim::RadioModel;

pub const EXPERIMENT1_TOML: &str = include_str!("../scenarios/experiment1.toml");
pub const EXPERIMENT2_TOML: &str = include_str!("../scenarios/experiment2.toml");

/// Names accepted by [`Scenario::builtin`].
pub const BUILTIN_NAMES: [&str; 2] = ["experiment1", "experiment2"];

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficFlow {
    pub source_node: String,
    pub destination_node: String,
    pub packet_count: u32,
    pub generation_interval_ms: u32,
    /// `(priority class, weight)` pairs.
    pub priority_weights: Vec<(u8, f64)>,
}

impl TrafficFlow {
    /// Classes with a positive weight, ascending. The k-th class is sent from
    /// the source's k-th element.
    pub fn classes(&self) -> Vec<u8> {
        let mut c: Vec<u8> = self
            .priority_weights
            .iter()
            .filter(|(_, w)| *w > 0.0)
            .map(|(p, _)| *p)
            .collect();
        c.sort_unstable();
        c.dedup();
        c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub nodes: Vec<NodeConfig>,
    pub radio: RadioModel,
    pub policy: QosPolicy,
    pub traffic: Vec<TrafficFlow>,
    pub group_address: Address,
    pub epoch_ms: u64,
    pub delivery_timeout_ms: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("{0}")]
    Parse(String),
    #[error("invalid scenario:\n{}", .0.iter().map(|v| format!("  {v}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Violation>),
    #[error("unknown built-in scenario `{0}` (expected one of: experiment1, experiment2)")]
    UnknownBuiltin(String),
}

/// One packet to be generated by a flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrafficOrigination {
    pub at: SimTime,
    pub packet_id: u32,
    pub priority: u8,
    pub opcode: u32,
    pub element_index: usize,
}

/// Packet times `k * generation_interval`, each with a weighted random class
/// sent through the element dedicated to it.
///
/// # Panics
/// If the flow has no positive weight or a class has no opcode in `policy`;
/// [`Scenario::validate`] rules both out.
pub fn generate_traffic<R: Rng + ?Sized>(
    flow: &TrafficFlow,
    policy: &QosPolicy,
    rng: &mut R,
) -> Vec<TrafficOrigination> {
    let classes = flow.classes();
    let weights: Vec<f64> = classes
        .iter()
        .map(|c| {
            flow.priority_weights
                .iter()
                .filter(|(p, w)| p == c && *w > 0.0)
                .map(|(_, w)| w)
                .sum()
        })
        .collect();
    let dist = WeightedIndex::new(&weights).expect("flow has a positive weight");
    let opcodes: Vec<u32> = classes
        .iter()
        .map(|&c| policy.opcode_for_priority(c).expect("class has an opcode"))
        .collect();
    let interval = u64::from(flow.generation_interval_ms) * 1000;
    (0..flow.packet_count)
        .map(|k| {
            let i = dist.sample(rng);
            TrafficOrigination {
                at: u64::from(k) * interval,
                packet_id: k,
                priority: classes[i],
                opcode: opcodes[i],
                element_index: i,
            }
        })
        .collect()
}

impl Scenario {
    pub fn builtin(name: &str) -> Result<Scenario, ScenarioError> {
        match name {
            "experiment1" => Ok(experiment1()),
            "experiment2" => Ok(experiment2()),
            other => Err(ScenarioError::UnknownBuiltin(other.to_string())),
        }
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.node_id == id)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&file::ScenarioFile::from(self)).expect("scenario serializes")
    }

    /// Every violated invariant, or `Ok` for a runnable scenario.
    pub fn validate(&self) -> Result<(), Vec<Violation>> {
        let mut out = Vec::new();
        let mut err = |field: String, message: String| out.push(Violation { field, message });

        if self.nodes.len() < 2 {
            err(
                "node".into(),
                format!("{} nodes, need at least 2", self.nodes.len()),
            );
        }
        if !self.group_address.is_group() {
            err(
                "group_address".into(),
                format!("{} is not a group address", self.group_address),
            );
        }
        if self.delivery_timeout_ms == 0 {
            err("delivery_timeout_ms".into(), "must be > 0".into());
        }
        for (field, message) in self.radio.problems() {
            err(format!("radio.{field}"), message);
        }
        if let Err(vs) = self.policy.validate() {
            for v in vs {
                let field = match v.priority {
                    Some(p) => format!("policy.class[{p}].{}", v.field),
                    None => format!("policy.{}", v.field),
                };
                err(field, v.message);
            }
        }

        let mut ids = HashSet::new();
        let mut addrs = HashMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            let at = format!("node[{i}]");
            if n.node_id.is_empty() {
                err(format!("{at}.id"), "empty node id".into());
            } else if !ids.insert(n.node_id.as_str()) {
                err(
                    format!("{at}.id"),
                    format!("duplicate node id `{}`", n.node_id),
                );
            }
            if n.elements.is_empty() {
                err(
                    format!("{at}.elements"),
                    "a node needs at least one element".into(),
                );
            }
            for e in &n.elements {
                if !e.is_unicast() {
                    err(
                        format!("{at}.elements"),
                        format!("{e} is not a unicast address"),
                    );
                } else if let Some(prev) = addrs.insert(*e, n.node_id.as_str()) {
                    err(
                        format!("{at}.elements"),
                        format!("duplicate element address {e} (also on node `{prev}`)"),
                    );
                }
            }
            for s in &n.subscriptions {
                if !s.is_group() {
                    err(
                        format!("{at}.subscriptions"),
                        format!("{s} is not a group address"),
                    );
                }
            }
            if !(n.position.x.is_finite() && n.position.y.is_finite()) {
                err(
                    format!("{at}.position"),
                    "coordinates must be finite".into(),
                );
            }
            for (j, m) in self.nodes[..i].iter().enumerate() {
                if m.position == n.position {
                    err(
                        format!("{at}.position"),
                        format!("coincides with node[{j}]"),
                    );
                }
            }
        }

        for (i, f) in self.traffic.iter().enumerate() {
            let at = format!("flow[{i}]");
            let src = self.node_index(&f.source_node);
            let dst = self.node_index(&f.destination_node);
            if src.is_none() {
                err(
                    format!("{at}.source"),
                    format!("unknown node `{}`", f.source_node),
                );
            }
            match dst {
                None => err(
                    format!("{at}.destination"),
                    format!("unknown node `{}`", f.destination_node),
                ),
                Some(d) if !self.nodes[d].subscriptions.contains(&self.group_address) => err(
                    format!("{at}.destination"),
                    format!(
                        "node `{}` does not subscribe to {}",
                        f.destination_node, self.group_address
                    ),
                ),
                _ => {}
            }
            if src.is_some() && src == dst {
                err(
                    format!("{at}.destination"),
                    "source and destination are the same node".into(),
                );
            }
            if f.packet_count == 0 {
                err(format!("{at}.packet_count"), "must be >= 1".into());
            }
            if f.generation_interval_ms == 0 {
                err(format!("{at}.generation_interval_ms"), "must be > 0".into());
            }
            if f.priority_weights
                .iter()
                .any(|(_, w)| !(*w >= 0.0 && w.is_finite()))
            {
                err(
                    format!("{at}.priority_weights"),
                    "weights must be finite and >= 0".into(),
                );
            }
            let classes = f.classes();
            if classes.is_empty() {
                err(
                    format!("{at}.priority_weights"),
                    "no class has a positive weight".into(),
                );
            }
            for c in &classes {
                if self.policy.opcode_for_priority(*c).is_none() {
                    err(
                        format!("{at}.priority_weights"),
                        format!("class {c} has no opcode in the policy"),
                    );
                }
            }
            if let Some(s) = src {
                let n = self.nodes[s].elements.len();
                if classes.len() > n {
                    err(
                        format!("{at}.priority_weights"),
                        format!(
                            "{} classes but source `{}` has only {n} elements",
                            classes.len(),
                            f.source_node
                        ),
                    );
                }
            }
        }

        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }
}

pub fn load_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let file: file::ScenarioFile =
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    let scenario = file.into_scenario()?;
    scenario.validate().map_err(ScenarioError::Invalid)?;
    Ok(scenario)
}

pub fn experiment1() -> Scenario {
    load_scenario(EXPERIMENT1_TOML).expect("built-in experiment1 is valid")
}

pub fn experiment2() -> Scenario {
    load_scenario(EXPERIMENT2_TOML).expect("built-in experiment2 is valid")
}

mod file {
    use super::*;

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct ScenarioFile {
        #[serde(default = "default_group")]
        group_address: u16,
        #[serde(default)]
        epoch_ms: u64,
        #[serde(default = "default_timeout")]
        delivery_timeout_ms: u32,
        #[serde(default)]
        radio: RadioSection,
        #[serde(default)]
        policy: Option<PolicySection>,
        #[serde(default, rename = "node")]
        nodes: Vec<NodeSection>,
        #[serde(default, rename = "flow")]
        flows: Vec<FlowSection>,
    }

    fn default_group() -> u16 {
        Address::GROUP_START
    }

    fn default_timeout() -> u32 {
        5000
    }

    fn default_true() -> bool {
        true
    }

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields, default)]
    struct RadioSection {
        path_loss_ref_db: f64,
        path_loss_exp: f64,
        sensitivity_dbm: f64,
        capture_margin_db: f64,
        scan_duty: f64,
        airtime_us: u64,
        tx_jitter_max_ms: u32,
    }

    impl Default for RadioSection {
        fn default() -> Self {
            RadioModel::default().into()
        }
    }

    impl From<RadioModel> for RadioSection {
        fn from(m: RadioModel) -> Self {
            RadioSection {
                path_loss_ref_db: m.path_loss_ref_db,
                path_loss_exp: m.path_loss_exp,
                sensitivity_dbm: m.sensitivity_dbm,
                capture_margin_db: m.capture_margin_db,
                scan_duty: m.scan_duty,
                airtime_us: m.airtime_us,
                tx_jitter_max_ms: m.tx_jitter_max_ms,
            }
        }
    }

    impl From<RadioSection> for RadioModel {
        fn from(s: RadioSection) -> Self {
            RadioModel {
                path_loss_ref_db: s.path_loss_ref_db,
                path_loss_exp: s.path_loss_exp,
                sensitivity_dbm: s.sensitivity_dbm,
                capture_margin_db: s.capture_margin_db,
                scan_duty: s.scan_duty,
                airtime_us: s.airtime_us,
                tx_jitter_max_ms: s.tx_jitter_max_ms,
            }
        }
    }

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct PolicySection {
        default_priority: u8,
        classes: Vec<ClassEntry>,
        #[serde(default)]
        opcodes: Vec<OpcodeEntry>,
    }

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct ClassEntry {
        priority: u8,
        n_rep: u16,
        adv_interval_ms: u32,
        ttl: u8,
        tx_power_dbm: i8,
    }

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct OpcodeEntry {
        opcode: u32,
        priority: u8,
    }

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct NodeSection {
        id: String,
        x: f64,
        y: f64,
        elements: Vec<u16>,
        #[serde(default)]
        subscriptions: Vec<u16>,
        #[serde(default = "default_true")]
        relay: bool,
    }

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct FlowSection {
        source: String,
        destination: String,
        packet_count: u32,
        generation_interval_ms: u32,
        priority_weights: Vec<(u8, f64)>,
    }

    impl ScenarioFile {
        pub fn into_scenario(self) -> Result<Scenario, ScenarioError> {
            let policy = match self.policy {
                None => QosPolicy::builtin(),
                Some(p) => p.into_policy()?,
            };
            Ok(Scenario {
                nodes: self
                    .nodes
                    .into_iter()
                    .map(|n| NodeConfig {
                        node_id: n.id,
                        elements: n.elements.into_iter().map(Address).collect(),
                        subscriptions: n.subscriptions.into_iter().map(Address).collect(),
                        relay_enabled: n.relay,
                        position: Position::new(n.x, n.y),
                    })
                    .collect(),
                radio: self.radio.into(),
                policy,
                traffic: self
                    .flows
                    .into_iter()
                    .map(|f| TrafficFlow {
                        source_node: f.source,
                        destination_node: f.destination,
                        packet_count: f.packet_count,
                        generation_interval_ms: f.generation_interval_ms,
                        priority_weights: f.priority_weights,
                    })
                    .collect(),
                group_address: Address(self.group_address),
                epoch_ms: self.epoch_ms,
                delivery_timeout_ms: self.delivery_timeout_ms,
            })
        }
    }

    impl PolicySection {
        fn into_policy(self) -> Result<QosPolicy, ScenarioError> {
            let mut dup = Vec::new();
            let mut priority_to_params = BTreeMap::new();
            for c in self.classes {
                let params = TxParams::new(c.n_rep, c.adv_interval_ms, c.ttl, c.tx_power_dbm);
                if priority_to_params.insert(c.priority, params).is_some() {
                    dup.push(Violation {
                        field: "policy.classes".into(),
                        message: format!("class {} defined twice", c.priority),
                    });
                }
            }
            let mut opcode_to_priority = BTreeMap::new();
            for o in self.opcodes {
                if let Some(prev) = opcode_to_priority.insert(o.opcode, o.priority) {
                    dup.push(Violation {
                        field: "policy.opcodes".into(),
                        message: format!(
                            "opcode 0x{:X} registered twice (classes {prev} and {})",
                            o.opcode, o.priority
                        ),
                    });
                }
            }
            if !dup.is_empty() {
                return Err(ScenarioError::Invalid(dup));
            }
            Ok(QosPolicy {
                opcode_to_priority,
                priority_to_params,
                default_priority: self.default_priority,
            })
        }
    }

    impl From<&Scenario> for ScenarioFile {
        fn from(s: &Scenario) -> Self {
            ScenarioFile {
                group_address: s.group_address.0,
                epoch_ms: s.epoch_ms,
                delivery_timeout_ms: s.delivery_timeout_ms,
                radio: s.radio.clone().into(),
                policy: Some(PolicySection {
                    default_priority: s.policy.default_priority,
                    classes: s
                        .policy
                        .priority_to_params
                        .iter()
                        .map(|(&priority, p)| ClassEntry {
                            priority,
                            n_rep: p.n_rep,
                            adv_interval_ms: p.adv_interval_ms,
                            ttl: p.ttl,
                            tx_power_dbm: p.tx_power_dbm,
                        })
                        .collect(),
                    opcodes: s
                        .policy
                        .opcode_to_priority
                        .iter()
                        .map(|(&opcode, &priority)| OpcodeEntry { opcode, priority })
                        .collect(),
                }),
                nodes: s
                    .nodes
                    .iter()
                    .map(|n| NodeSection {
                        id: n.node_id.clone(),
                        x: n.position.x,
                        y: n.position.y,
                        elements: n.elements.iter().map(|a| a.0).collect(),
                        subscriptions: n.subscriptions.iter().map(|a| a.0).collect(),
                        relay: n.relay_enabled,
                    })
                    .collect(),
                flows: s
                    .traffic
                    .iter()
                    .map(|f| FlowSection {
                        source: f.source_node.clone(),
                        destination: f.destination_node.clone(),
                        packet_count: f.packet_count,
                        generation_interval_ms: f.generation_interval_ms,
                        priority_weights: f.priority_weights.clone(),
                    })
                    .collect(),
            }
        }
    }
}
