//! Priority classes for BLE Mesh controlled flooding.
//!
//! The priority class rides in the top octet of the network PDU's former
//! 24-bit SEQ field, selects per-class transmission parameters at the source
//! and at every relay, and is evaluated here with a deterministic
//! discrete-event simulator of the advertising bearer.
pub mod cli;
pub mod metrics;
pub mod node;
pub mod pdu;
pub mod qos;
pub mod scenario;
pub mod sim;

pub use metrics::{compute_kpis, ecdf, kpi_report, KpiReport, KpiTable, PacketRecord};
pub use node::{NodeConfig, NodeState, Position, RelayDecision};
pub use pdu::{decode_network_pdu, encode_network_pdu, Address, NetworkPdu};
pub use qos::{QosPolicy, TxParams};
pub use scenario::{load_scenario, Scenario, ScenarioError, TrafficFlow};
pub use sim::{run, RadioModel, RunOutput};
