use std::collections::BTreeSet;

use meshqos::node::{DiscardReason, NodeConfig, NodeState, Position, RelayDecision};
use meshqos::pdu::{Address, NetworkPdu};
use meshqos::qos::{QosPolicy, TxParams};

const GROUP: Address = Address(0xC000);

fn node(relay: bool, subscribe: bool) -> NodeState {
    let subscriptions = if subscribe {
        BTreeSet::from([GROUP])
    } else {
        BTreeSet::new()
    };
    NodeState::new(NodeConfig {
        node_id: "R".into(),
        elements: vec![Address(0x00A0), Address(0x00A1)],
        subscriptions,
        relay_enabled: relay,
        position: Position::new(0.0, 0.0),
    })
}

fn pdu(dst: Address, ttl: u8, priority: u8) -> NetworkPdu {
    NetworkPdu {
        src: Address(0x0091),
        dst,
        ttl,
        seq: 77,
        priority,
        payload: vec![0xC0, 0x00, 0x59, 1, 2, 3],
    }
}

#[test]
fn own_unicast_is_delivered_and_not_relayed() {
    let mut n = node(true, false);
    let d = n.handle_received(&pdu(Address(0x00A1), 5, 2), &QosPolicy::builtin());
    assert_eq!(d, RelayDecision::Deliver(Address(0x00A1)));
    assert!(d.relay().is_none());
}

#[test]
fn subscribed_group_is_delivered_and_relayed() {
    let policy = QosPolicy::builtin();
    let mut n = node(true, true);
    let rx = pdu(GROUP, 5, 2);
    match n.handle_received(&rx, &policy) {
        RelayDecision::DeliverAndRelay(addr, copy, params) => {
            assert_eq!(addr, GROUP);
            assert_eq!(copy.ttl, 4);
            assert_eq!(params, policy.params_for_priority(2));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn subscribed_group_at_ttl_one_is_delivered_only() {
    let mut n = node(true, true);
    let d = n.handle_received(&pdu(GROUP, 1, 2), &QosPolicy::builtin());
    assert_eq!(d, RelayDecision::Deliver(GROUP));
}

#[test]
fn foreign_unicast_is_relayed() {
    let mut n = node(true, false);
    let d = n.handle_received(&pdu(Address(0x0200), 3, 3), &QosPolicy::builtin());
    match &d {
        RelayDecision::Relay(copy, _) => assert_eq!(copy.ttl, 2),
        other => panic!("{other:?}"),
    }
    assert!(d.delivered().is_none());
}

#[test]
fn unsubscribed_group_is_relayed_not_delivered() {
    let mut n = node(true, false);
    let d = n.handle_received(&pdu(GROUP, 3, 1), &QosPolicy::builtin());
    assert!(matches!(d, RelayDecision::Relay(..)));
}

#[test]
fn duplicate_is_discarded_before_anything_else() {
    let policy = QosPolicy::builtin();
    let mut n = node(true, true);
    let rx = pdu(GROUP, 5, 2);
    assert!(n.handle_received(&rx, &policy).delivered().is_some());
    assert_eq!(
        n.handle_received(&rx, &policy),
        RelayDecision::Discard(DiscardReason::Duplicate)
    );
    // A copy with a different TTL is still the same message.
    assert_eq!(
        n.handle_received(&pdu(GROUP, 2, 2), &policy),
        RelayDecision::Discard(DiscardReason::Duplicate)
    );
}

#[test]
fn ttl_one_and_zero_are_not_relayed() {
    for ttl in [0, 1] {
        let mut n = node(true, false);
        assert_eq!(
            n.handle_received(&pdu(Address(0x0200), ttl, 2), &QosPolicy::builtin()),
            RelayDecision::Discard(DiscardReason::TtlExpired)
        );
    }
}

#[test]
fn relay_disabled_discards_foreign_traffic() {
    let mut n = node(false, false);
    assert_eq!(
        n.handle_received(&pdu(Address(0x0200), 5, 2), &QosPolicy::builtin()),
        RelayDecision::Discard(DiscardReason::RelayDisabled)
    );
}

#[test]
fn relayed_copy_differs_only_in_ttl() {
    let mut n = node(true, false);
    let rx = pdu(Address(0x0200), 6, 1);
    let d = n.handle_received(&rx, &QosPolicy::builtin());
    let (copy, _) = d.relay().expect("relayed");
    assert_eq!(copy.ttl, rx.ttl - 1);
    let mut expected = rx.clone();
    expected.ttl = copy.ttl;
    assert_eq!(*copy, expected);
}

#[test]
fn relay_params_follow_the_packet_priority() {
    let mut policy = QosPolicy::builtin();
    policy
        .priority_to_params
        .insert(9, TxParams::new(5, 40, 9, 0));
    for priority in [1, 2, 3, 9] {
        let mut n = node(true, false);
        let rx = pdu(Address(0x0200), 4, priority);
        let d = n.handle_received(&rx, &policy);
        let (copy, params) = d.relay().expect("relayed");
        assert_eq!(*params, policy.params_for_priority(priority));
        // The relayed TTL is the received one minus one, not the class TTL.
        assert_eq!(copy.ttl, 3);
        assert_eq!(copy.priority, priority);
    }
}

#[test]
fn unknown_priority_relays_with_default_class() {
    let policy = QosPolicy::builtin();
    let mut n = node(true, false);
    let d = n.handle_received(&pdu(Address(0x0200), 4, 42), &policy);
    let (_, params) = d.relay().expect("relayed");
    assert_eq!(*params, policy.params_for_priority(policy.default_priority));
}
