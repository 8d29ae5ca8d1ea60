use meshqos::pdu::Address;
use meshqos::scenario::Scenario;
use meshqos::{load_scenario, run};

/// Nodes on the x axis, one flow from the first to the last.
fn line(xs: &[f64], weights: &str, packets: u32, jitter_ms: u32) -> Scenario {
    let mut text = format!(
        "[radio]\ntx_jitter_max_ms = {jitter_ms}\n\n[[flow]]\nsource = \"N0\"\ndestination = \"N{}\"\n\
         packet_count = {packets}\ngeneration_interval_ms = 2000\npriority_weights = {weights}\n",
        xs.len() - 1
    );
    for (i, x) in xs.iter().enumerate() {
        let base = 0x0100 + 3 * i as u16;
        let subs = if i == xs.len() - 1 { "[0xC000]" } else { "[]" };
        text.push_str(&format!(
            "\n[[node]]\nid = \"N{i}\"\nx = {x:?}\ny = 0.0\nelements = [{}, {}, {}]\nsubscriptions = {subs}\n",
            base,
            base + 1,
            base + 2
        ));
    }
    load_scenario(&text).expect("test scenario is valid")
}

#[test]
fn chain_of_three_matches_hand_trace() {
    // Class 3 (-20 dBm) reaches 10 m, so N0 -> N2 needs N1. With no jitter,
    // N0 ends channel 37 at 376 us, N1 relays at once, and N2 hears the
    // relayed channel 37 copy complete at 2 * 376 = 752 us.
    let s = line(&[0.0, 9.0, 18.0], "[[3, 1.0]]", 1, 0);
    let out = run(&s, 1).unwrap();
    assert_eq!(out.records.len(), 1);
    let d = out.deliveries[0].expect("delivered");
    assert_eq!(d.pdt_us, 752);
    assert_eq!(d.ttl_at_delivery, 2);
    let r = &out.records[0];
    assert!(r.delivered);
    assert_eq!(r.number_of_hops, Some(1));
    assert_eq!(r.pdt_ms, Some(1));
    assert_eq!(r.ttl, 3);
    assert_eq!(r.tx_power_dbm, -20);
    // The only class of the flow is sent from the first element.
    assert_eq!(r.sender_address, Address(0x0100));
    assert_eq!(r.receiver_address, Address(0xC000));
}

#[test]
fn direct_neighbour_is_one_airtime_away() {
    let s = line(&[0.0, 5.0], "[[1, 1.0]]", 3, 0);
    let out = run(&s, 1).unwrap();
    for (r, d) in out.records.iter().zip(&out.deliveries) {
        assert_eq!(r.number_of_hops, Some(0));
        assert_eq!(d.unwrap().pdt_us, 376);
    }
}

#[test]
fn out_of_range_is_never_delivered() {
    let s = line(&[0.0, 100.0], "[[1, 1.0], [2, 1.0], [3, 1.0]]", 20, 10);
    let out = run(&s, 3).unwrap();
    assert_eq!(out.records.len(), 20);
    assert!(out.records.iter().all(|r| !r.delivered));
    assert!(out
        .records
        .iter()
        .all(|r| r.pdt_ms.is_none() && r.number_of_hops.is_none()));
    assert_eq!(out.stats.receptions, 0);
}

#[test]
fn relay_disabled_breaks_the_chain() {
    let mut s = line(&[0.0, 9.0, 18.0], "[[3, 1.0]]", 5, 10);
    s.nodes[1].relay_enabled = false;
    let out = run(&s, 1).unwrap();
    assert!(out.records.iter().all(|r| !r.delivered));
}

#[test]
fn ttl_limits_the_path_length() {
    // Class 3 has TTL 3: two relays at most, so four hops of 9 m is too far.
    let s = line(&[0.0, 9.0, 18.0, 27.0, 36.0], "[[3, 1.0]]", 10, 10);
    let out = run(&s, 2).unwrap();
    assert!(out.records.iter().all(|r| !r.delivered));
    let s = line(&[0.0, 9.0, 18.0, 27.0], "[[3, 1.0]]", 10, 10);
    let out = run(&s, 2).unwrap();
    assert!(out.records.iter().all(|r| r.number_of_hops == Some(2)));
}

#[test]
fn same_seed_same_output() {
    let mut s = Scenario::builtin("experiment2").unwrap();
    for f in &mut s.traffic {
        f.packet_count = 200;
    }
    let a = run(&s, 42).unwrap();
    let b = run(&s, 42).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(a.deliveries, b.deliveries);
    assert_eq!(a.stats, b.stats);
    let c = run(&s, 43).unwrap();
    assert_ne!(a.deliveries, c.deliveries);
}

#[test]
fn records_are_conserved_and_bounded() {
    let mut s = Scenario::builtin("experiment2").unwrap();
    for f in &mut s.traffic {
        f.packet_count = 300;
    }
    let out = run(&s, 5).unwrap();
    assert_eq!(out.records.len(), 600);
    for (i, r) in out.records.iter().enumerate() {
        let flow = i / 300;
        assert_eq!(r.test_id as usize, flow + 1);
        assert_eq!(r.packet_id as usize, i % 300);
        assert_eq!(r.delivered, out.deliveries[i].is_some());
        if let Some(d) = out.deliveries[i] {
            assert!(r.number_of_hops.unwrap() <= r.ttl);
            assert_eq!(r.pdt_ms, Some((d.pdt_us + 500) / 1000));
            assert!(d.pdt_us <= 5_000_000);
        }
    }
}

#[test]
fn invalid_scenario_is_rejected_by_run() {
    let mut s = Scenario::builtin("experiment1").unwrap();
    s.traffic[0].generation_interval_ms = 0;
    assert!(run(&s, 1).is_err());
}

#[test]
fn lockstep_relays_still_deliver() {
    // Without jitter both relays are due at the same instants as the
    // source's later events; the direct copy still arrives first.
    let s = line(&[0.0, 5.0, 10.0], "[[1, 1.0]]", 50, 0);
    let out = run(&s, 9).unwrap();
    assert!(out.records.iter().all(|r| r.delivered));
}
