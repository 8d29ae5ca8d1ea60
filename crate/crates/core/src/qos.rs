//! Opcode to priority class, and priority class to transmission parameters.
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::pdu::{MAX_TTL, NO_PRIORITY};

pub const N_REP_MAX: u16 = 1000;
pub const ADV_INTERVAL_MIN_MS: u32 = 20;
pub const ADV_INTERVAL_MAX_MS: u32 = 10_240;
/// Transmit powers the radio supports, in dBm.
pub const TX_POWER_LEVELS: [i8; 5] = [4, 0, -8, -20, -40];

/// Transmission configuration of one priority class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TxParams {
    /// Transmissions beyond the first.
    pub n_rep: u16,
    pub adv_interval_ms: u32,
    pub ttl: u8,
    pub tx_power_dbm: i8,
}

impl TxParams {
    pub const fn new(n_rep: u16, adv_interval_ms: u32, ttl: u8, tx_power_dbm: i8) -> Self {
        TxParams {
            n_rep,
            adv_interval_ms,
            ttl,
            tx_power_dbm,
        }
    }

    fn violations(&self, class: u8, out: &mut Vec<PolicyViolation>) {
        let mut push = |field: &'static str, message: String| {
            out.push(PolicyViolation {
                priority: Some(class),
                field,
                message,
            })
        };
        if self.n_rep > N_REP_MAX {
            push("n_rep", format!("{} outside 0..={N_REP_MAX}", self.n_rep));
        }
        if !(ADV_INTERVAL_MIN_MS..=ADV_INTERVAL_MAX_MS).contains(&self.adv_interval_ms) {
            push(
                "adv_interval_ms",
                format!(
                    "{} ms outside {ADV_INTERVAL_MIN_MS}..={ADV_INTERVAL_MAX_MS} ms",
                    self.adv_interval_ms
                ),
            );
        }
        if self.ttl > MAX_TTL {
            push("ttl", format!("{} outside 0..={MAX_TTL}", self.ttl));
        }
        if !TX_POWER_LEVELS.contains(&self.tx_power_dbm) {
            push(
                "tx_power_dbm",
                format!(
                    "{} dBm not in the supported set {{4, 0, -8, -20, -40}} dBm",
                    self.tx_power_dbm
                ),
            );
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyViolation {
    /// Priority class the violation belongs to, if any.
    pub priority: Option<u8>,
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for PolicyViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.priority {
            Some(p) => write!(f, "priority {p}: {}: {}", self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

/// Network-wide QoS policy.
///
/// Lower class numbers get the better service. Lookups never fail: anything
/// unmapped, including [`NO_PRIORITY`], resolves to `default_priority`.
#[derive(Debug, Clone, PartialEq)]
pub struct QosPolicy {
    pub opcode_to_priority: BTreeMap<u32, u8>,
    pub priority_to_params: BTreeMap<u8, TxParams>,
    pub default_priority: u8,
}

/// Vendor opcodes (company 0x0059) of the three sensor models.
pub const SENSOR_OPCODES: [u32; 3] = [0xC0_0059, 0xC1_0059, 0xC2_0059];

impl QosPolicy {
    /// Three-class healthcare policy: one sensor model per class.
    pub fn builtin() -> QosPolicy {
        let priority_to_params = BTreeMap::from([
            (1, TxParams::new(2, 20, 7, 4)),
            (2, TxParams::new(2, 100, 5, -8)),
            (3, TxParams::new(2, 200, 3, -20)),
        ]);
        let opcode_to_priority = SENSOR_OPCODES
            .iter()
            .zip(1u8..)
            .map(|(&op, p)| (op, p))
            .collect();
        QosPolicy {
            opcode_to_priority,
            priority_to_params,
            default_priority: 2,
        }
    }

    pub fn priority_for_opcode(&self, opcode: u32) -> u8 {
        self.opcode_to_priority
            .get(&opcode)
            .copied()
            .unwrap_or(self.default_priority)
    }

    /// # Panics
    /// If `default_priority` has no parameters. [`QosPolicy::validate`]
    /// rejects such policies, and scenarios are validated on load.
    pub fn params_for_priority(&self, priority: u8) -> TxParams {
        self.priority_to_params
            .get(&priority)
            .or_else(|| self.priority_to_params.get(&self.default_priority))
            .copied()
            .expect("default priority has transmission parameters")
    }

    /// First opcode registered for `priority`.
    pub fn opcode_for_priority(&self, priority: u8) -> Option<u32> {
        self.opcode_to_priority
            .iter()
            .find(|(_, &p)| p == priority)
            .map(|(&op, _)| op)
    }

    pub fn validate(&self) -> Result<(), Vec<PolicyViolation>> {
        let mut out = Vec::new();
        for (&class, params) in &self.priority_to_params {
            if class == NO_PRIORITY {
                out.push(PolicyViolation {
                    priority: Some(class),
                    field: "priority",
                    message: "class 0 is reserved for unprioritized packets".into(),
                });
            }
            params.violations(class, &mut out);
        }
        for (&opcode, &class) in &self.opcode_to_priority {
            if class == NO_PRIORITY {
                out.push(PolicyViolation {
                    priority: None,
                    field: "opcode",
                    message: format!("opcode 0x{opcode:X} maps to reserved class 0"),
                });
            } else if !self.priority_to_params.contains_key(&class) {
                out.push(PolicyViolation {
                    priority: Some(class),
                    field: "opcode",
                    message: format!(
                        "opcode 0x{opcode:X} maps to class {class} which has no parameters"
                    ),
                });
            }
        }
        if !self.priority_to_params.contains_key(&self.default_priority) {
            out.push(PolicyViolation {
                priority: Some(self.default_priority),
                field: "default_priority",
                message: format!("default class {} has no parameters", self.default_priority),
            });
        }
        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }
}

impl Default for QosPolicy {
    fn default() -> Self {
        QosPolicy::builtin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_classes() {
        let p = QosPolicy::builtin();
        assert_eq!(p.params_for_priority(1), TxParams::new(2, 20, 7, 4));
        assert_eq!(p.params_for_priority(2), TxParams::new(2, 100, 5, -8));
        assert_eq!(p.params_for_priority(3), TxParams::new(2, 200, 3, -20));
        assert_eq!(p.default_priority, 2);
        assert_eq!(p.validate(), Ok(()));
    }

    #[test]
    fn opcode_lookup_falls_back_to_default() {
        let p = QosPolicy::builtin();
        assert_eq!(p.priority_for_opcode(SENSOR_OPCODES[0]), 1);
        assert_eq!(p.priority_for_opcode(SENSOR_OPCODES[2]), 3);
        assert_eq!(p.priority_for_opcode(0x8201), 2);
        assert_eq!(p.opcode_for_priority(3), Some(SENSOR_OPCODES[2]));
        assert_eq!(p.opcode_for_priority(9), None);
    }

    #[test]
    fn params_lookup_is_total() {
        let p = QosPolicy::builtin();
        let fallback = p.params_for_priority(2);
        assert_eq!(p.params_for_priority(0), fallback);
        assert_eq!(p.params_for_priority(99), fallback);
        for class in 0..=255u8 {
            let mut v = Vec::new();
            p.params_for_priority(class).violations(class, &mut v);
            assert!(v.is_empty());
        }
    }

    #[test]
    fn builtin_is_monotone() {
        let p = QosPolicy::builtin();
        let params: Vec<_> = p.priority_to_params.values().collect();
        for w in params.windows(2) {
            assert!(w[0].adv_interval_ms < w[1].adv_interval_ms);
            assert!(w[0].tx_power_dbm > w[1].tx_power_dbm);
            assert!(w[0].ttl > w[1].ttl);
        }
    }

    #[test]
    fn interval_below_floor_is_rejected() {
        let mut p = QosPolicy::builtin();
        p.priority_to_params.get_mut(&1).unwrap().adv_interval_ms = 10;
        let v = p.validate().unwrap_err();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "adv_interval_ms");
        assert_eq!(v[0].priority, Some(1));
    }

    #[test]
    fn unsupported_power_names_the_set() {
        let mut p = QosPolicy::builtin();
        p.priority_to_params.get_mut(&3).unwrap().tx_power_dbm = -3;
        let v = p.validate().unwrap_err();
        assert_eq!(v[0].field, "tx_power_dbm");
        assert!(
            v[0].to_string().contains("{4, 0, -8, -20, -40}"),
            "{}",
            v[0]
        );
    }

    #[test]
    fn dangling_references_are_reported() {
        let mut p = QosPolicy::builtin();
        p.opcode_to_priority.insert(0x1234, 7);
        p.default_priority = 9;
        let v = p.validate().unwrap_err();
        let fields: Vec<_> = v.iter().map(|v| v.field).collect();
        assert_eq!(fields, ["opcode", "default_priority"]);
    }

    #[test]
    fn every_range_is_checked() {
        let mut p = QosPolicy::builtin();
        p.priority_to_params
            .insert(4, TxParams::new(1001, 10_241, 128, 5));
        let v = p.validate().unwrap_err();
        assert_eq!(v.len(), 4);
    }
}
