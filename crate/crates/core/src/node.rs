//! Per-node protocol state: origination, the relay decision and
//! retransmission scheduling.
use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng;
use thiserror::Error;

use crate::pdu::{Address, NetworkPdu, PduError, MAX_PAYLOAD};
use crate::qos::{QosPolicy, TxParams};

/// Simulation time in microseconds since the start of a run.
pub type SimTime = u64;

/// Message cache size.
pub const CACHE_CAPACITY: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AdvChannel {
    Ch37,
    Ch38,
    Ch39,
}

impl AdvChannel {
    /// Order in which one advertising event visits the channels.
    pub const ALL: [AdvChannel; 3] = [AdvChannel::Ch37, AdvChannel::Ch38, AdvChannel::Ch39];

    pub fn number(self) -> u8 {
        match self {
            AdvChannel::Ch37 => 37,
            AdvChannel::Ch38 => 38,
            AdvChannel::Ch39 => 39,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Planar position in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeConfig {
    pub node_id: String,
    pub elements: Vec<Address>,
    pub subscriptions: BTreeSet<Address>,
    pub relay_enabled: bool,
    pub position: Position,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NodeError {
    #[error("node {node} has no element {index}")]
    NoSuchElement { node: String, index: usize },
    #[error("payload of {0} octets exceeds the {MAX_PAYLOAD}-octet unsegmented limit")]
    PayloadTooLong(usize),
    #[error(transparent)]
    Pdu(#[from] PduError),
}

/// Bounded set of recently seen `(src, seq)` pairs, least recently used
/// entries evicted first.
#[derive(Debug, Clone)]
pub struct MessageCache {
    capacity: usize,
    clock: u64,
    stamps: HashMap<(Address, u16), u64>,
    order: BTreeMap<u64, (Address, u16)>,
}

impl MessageCache {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "cache capacity must be positive");
        MessageCache {
            capacity,
            clock: 0,
            stamps: HashMap::with_capacity(capacity + 1),
            order: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.stamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stamps.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Returns whether the pair was already cached, and records it as most
    /// recently used either way.
    pub fn check_insert(&mut self, src: Address, seq: u16) -> bool {
        let key = (src, seq);
        self.clock += 1;
        let seen = match self.stamps.insert(key, self.clock) {
            Some(old) => {
                self.order.remove(&old);
                true
            }
            None => false,
        };
        self.order.insert(self.clock, key);
        if self.stamps.len() > self.capacity {
            if let Some((_, oldest)) = self.order.pop_first() {
                self.stamps.remove(&oldest);
            }
        }
        seen
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiscardReason {
    Duplicate,
    TtlExpired,
    RelayDisabled,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RelayDecision {
    /// Hand the packet to the upper layers; `Address` is the matched
    /// destination (own element or subscribed group).
    Deliver(Address),
    DeliverAndRelay(Address, NetworkPdu, TxParams),
    Relay(NetworkPdu, TxParams),
    Discard(DiscardReason),
}

impl RelayDecision {
    pub fn delivered(&self) -> Option<Address> {
        match self {
            RelayDecision::Deliver(a) | RelayDecision::DeliverAndRelay(a, ..) => Some(*a),
            _ => None,
        }
    }

    pub fn relay(&self) -> Option<(&NetworkPdu, &TxParams)> {
        match self {
            RelayDecision::DeliverAndRelay(_, pdu, params) | RelayDecision::Relay(pdu, params) => {
                Some((pdu, params))
            }
            _ => None,
        }
    }
}

/// One advertising event: the PDU sent once on each channel, back to back.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Broadcast {
    pub at: SimTime,
    pub channels: [AdvChannel; 3],
}

/// `1 + n_rep` advertising events spaced by the advertising interval, each
/// delayed by a uniform random jitter in `[0, jitter_max_us]`.
pub fn schedule_transmissions<R: Rng + ?Sized>(
    params: &TxParams,
    now: SimTime,
    jitter_max_us: u64,
    rng: &mut R,
) -> Vec<Broadcast> {
    let interval_us = u64::from(params.adv_interval_ms) * 1000;
    (0..=u64::from(params.n_rep))
        .map(|k| {
            let jitter = if jitter_max_us == 0 {
                0
            } else {
                rng.gen_range(0..=jitter_max_us)
            };
            Broadcast {
                at: now + k * interval_us + jitter,
                channels: AdvChannel::ALL,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Origination {
    pub pdu: NetworkPdu,
    pub params: TxParams,
    pub schedule: Vec<Broadcast>,
}

#[derive(Debug, Clone)]
pub struct NodeState {
    pub config: NodeConfig,
    seq_counters: Vec<u16>,
    cache: MessageCache,
}

impl NodeState {
    pub fn new(config: NodeConfig) -> Self {
        Self::with_cache_capacity(config, CACHE_CAPACITY)
    }

    pub fn with_cache_capacity(config: NodeConfig, capacity: usize) -> Self {
        let seq_counters = vec![0; config.elements.len()];
        NodeState {
            config,
            seq_counters,
            cache: MessageCache::new(capacity),
        }
    }

    pub fn cache(&self) -> &MessageCache {
        &self.cache
    }

    pub fn next_seq(&self, element_index: usize) -> Option<u16> {
        self.seq_counters.get(element_index).copied()
    }

    /// Sets the next sequence number an element will use.
    pub fn set_next_seq(&mut self, element_index: usize, seq: u16) {
        self.seq_counters[element_index] = seq;
    }

    pub fn owns(&self, addr: Address) -> bool {
        self.config.elements.contains(&addr)
    }

    pub fn cache_check_insert(&mut self, src: Address, seq: u16) -> bool {
        self.cache.check_insert(src, seq)
    }

    /// Originates a message from one element. The priority comes from the
    /// opcode and the PDU starts with that class's TTL.
    #[allow(clippy::too_many_arguments)]
    pub fn originate<R: Rng + ?Sized>(
        &mut self,
        element_index: usize,
        opcode: u32,
        payload: &[u8],
        dst: Address,
        policy: &QosPolicy,
        now: SimTime,
        jitter_max_us: u64,
        rng: &mut R,
    ) -> Result<Origination, NodeError> {
        let src =
            *self
                .config
                .elements
                .get(element_index)
                .ok_or_else(|| NodeError::NoSuchElement {
                    node: self.config.node_id.clone(),
                    index: element_index,
                })?;
        if payload.len() > MAX_PAYLOAD {
            return Err(NodeError::PayloadTooLong(payload.len()));
        }
        let priority = policy.priority_for_opcode(opcode);
        let params = policy.params_for_priority(priority);
        let seq = self.seq_counters[element_index];
        let pdu = NetworkPdu {
            src,
            dst,
            ttl: params.ttl,
            seq,
            priority,
            payload: payload.to_vec(),
        };
        pdu.validate()?;
        self.seq_counters[element_index] = seq.wrapping_add(1);
        // Our own copy must not come back as a relay candidate.
        self.cache.check_insert(src, seq);
        let schedule = schedule_transmissions(&params, now, jitter_max_us, rng);
        Ok(Origination {
            pdu,
            params,
            schedule,
        })
    }

    pub fn handle_received(&mut self, pdu: &NetworkPdu, policy: &QosPolicy) -> RelayDecision {
        if self.cache.check_insert(pdu.src, pdu.seq) {
            return RelayDecision::Discard(DiscardReason::Duplicate);
        }
        if self.owns(pdu.dst) {
            return RelayDecision::Deliver(pdu.dst);
        }
        let relay = self.relay_copy(pdu, policy);
        if self.config.subscriptions.contains(&pdu.dst) {
            return match relay {
                Ok((copy, params)) => RelayDecision::DeliverAndRelay(pdu.dst, copy, params),
                Err(_) => RelayDecision::Deliver(pdu.dst),
            };
        }
        match relay {
            Ok((copy, params)) => RelayDecision::Relay(copy, params),
            Err(reason) => RelayDecision::Discard(reason),
        }
    }

    fn relay_copy(
        &self,
        pdu: &NetworkPdu,
        policy: &QosPolicy,
    ) -> Result<(NetworkPdu, TxParams), DiscardReason> {
        if !self.config.relay_enabled {
            return Err(DiscardReason::RelayDisabled);
        }
        if pdu.ttl < 2 {
            return Err(DiscardReason::TtlExpired);
        }
        Ok((pdu.relayed(), policy.params_for_priority(pdu.priority)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qos::SENSOR_OPCODES;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn node_a() -> NodeState {
        NodeState::new(NodeConfig {
            node_id: "A".into(),
            elements: vec![Address(0x0091), Address(0x0092), Address(0x0093)],
            subscriptions: BTreeSet::from([Address(0xC000)]),
            relay_enabled: true,
            position: Position::new(0.0, 0.0),
        })
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn cache_semantics() {
        let mut c = MessageCache::new(CACHE_CAPACITY);
        assert!(!c.check_insert(Address(1), 5));
        assert!(c.check_insert(Address(1), 5));
        assert!(!c.check_insert(Address(2), 5));
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn cache_evicts_least_recently_used() {
        let mut c = MessageCache::new(128);
        for seq in 0..129u16 {
            assert!(!c.check_insert(Address(1), seq));
        }
        assert_eq!(c.len(), 128);
        assert!(!c.check_insert(Address(1), 0));

        let mut c = MessageCache::new(3);
        c.check_insert(Address(1), 0);
        c.check_insert(Address(1), 1);
        c.check_insert(Address(1), 2);
        // Refresh 0 so 1 becomes the oldest.
        assert!(c.check_insert(Address(1), 0));
        c.check_insert(Address(1), 3);
        assert!(c.check_insert(Address(1), 0));
        assert!(!c.check_insert(Address(1), 1));
    }

    #[test]
    fn schedule_without_jitter() {
        let policy = QosPolicy::builtin();
        let at = |p: u8| -> Vec<SimTime> {
            schedule_transmissions(&policy.params_for_priority(p), 1_000, 0, &mut rng())
                .iter()
                .map(|b| b.at)
                .collect()
        };
        assert_eq!(at(1), [1_000, 21_000, 41_000]);
        assert_eq!(at(3), [1_000, 201_000, 401_000]);
        let once = schedule_transmissions(&TxParams::new(0, 20, 3, 0), 5, 0, &mut rng());
        assert_eq!(
            once,
            [Broadcast {
                at: 5,
                channels: AdvChannel::ALL
            }]
        );
    }

    #[test]
    fn schedule_jitter_is_bounded() {
        let params = TxParams::new(5, 20, 3, 0);
        let mut r = rng();
        for _ in 0..200 {
            let s = schedule_transmissions(&params, 0, 10_000, &mut r);
            assert_eq!(s.len(), 6);
            for (k, b) in s.iter().enumerate() {
                let base = k as u64 * 20_000;
                assert!(b.at >= base && b.at <= base + 10_000);
            }
        }
    }

    #[test]
    fn originate_uses_opcode_priority() {
        let policy = QosPolicy::builtin();
        let mut a = node_a();
        let o = a
            .originate(
                0,
                SENSOR_OPCODES[0],
                &[0; 11],
                Address(0x00C4),
                &policy,
                0,
                0,
                &mut rng(),
            )
            .unwrap();
        assert_eq!(o.pdu.src, Address(0x0091));
        assert_eq!(o.pdu.ttl, 7);
        assert_eq!(o.pdu.priority, 1);
        assert_eq!(o.schedule.len(), 3);
        let o2 = a
            .originate(
                0,
                SENSOR_OPCODES[0],
                &[],
                Address(0x00C4),
                &policy,
                0,
                0,
                &mut rng(),
            )
            .unwrap();
        assert_eq!(o2.pdu.seq, o.pdu.seq + 1);
        // Unknown opcode gets the default class.
        let o3 = a
            .originate(1, 0x8201, &[], Address(0xC000), &policy, 0, 0, &mut rng())
            .unwrap();
        assert_eq!((o3.pdu.priority, o3.pdu.ttl), (2, 5));
    }

    #[test]
    fn originate_wraps_sequence() {
        let policy = QosPolicy::builtin();
        let mut a = node_a();
        a.set_next_seq(2, u16::MAX);
        let o = a
            .originate(
                2,
                SENSOR_OPCODES[2],
                &[],
                Address(0xC000),
                &policy,
                0,
                0,
                &mut rng(),
            )
            .unwrap();
        assert_eq!(o.pdu.seq, u16::MAX);
        assert_eq!(a.next_seq(2), Some(0));
    }

    #[test]
    fn originate_errors() {
        let policy = QosPolicy::builtin();
        let mut a = node_a();
        assert!(matches!(
            a.originate(3, 0, &[], Address(0xC000), &policy, 0, 0, &mut rng()),
            Err(NodeError::NoSuchElement { index: 3, .. })
        ));
        assert_eq!(
            a.originate(0, 0, &[0; 12], Address(0xC000), &policy, 0, 0, &mut rng()),
            Err(NodeError::PayloadTooLong(12))
        );
        assert_eq!(a.next_seq(0), Some(0));
    }

    #[test]
    fn own_origination_is_not_relayed() {
        let policy = QosPolicy::builtin();
        let mut a = node_a();
        let o = a
            .originate(
                0,
                SENSOR_OPCODES[0],
                &[],
                Address(0x0200),
                &policy,
                0,
                0,
                &mut rng(),
            )
            .unwrap();
        assert_eq!(
            a.handle_received(&o.pdu, &policy),
            RelayDecision::Discard(DiscardReason::Duplicate)
        );
    }
}
