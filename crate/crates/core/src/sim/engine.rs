use std::collections::HashMap;
use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::queue::EventQueue;
use super::radio::{link_rssi, reception_outcome};
use crate::metrics::{hops_from_ttl, PacketRecord};
use crate::node::{AdvChannel, Broadcast, NodeState, SimTime};
use crate::pdu::{decode_network_pdu, encode_network_pdu, Address, MAX_PAYLOAD};
use crate::scenario::{generate_traffic, Scenario, ScenarioError, TrafficOrigination};

// Independent random streams derived from the run seed.
const TRAFFIC_STREAM: u64 = 1;
const MAC_STREAM: u64 = 1 << 32;
const SCAN_STREAM: u64 = (1 << 32) + 1;

/// First delivery of one packet at its destination.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Delivery {
    pub at: SimTime,
    pub pdt_us: u64,
    pub ttl_at_delivery: u8,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunStats {
    pub events: u64,
    /// Single-channel transmissions put on air.
    pub transmissions: u64,
    pub receptions: u64,
    /// Above sensitivity but lost to an overlapping signal.
    pub collisions: u64,
    pub relays: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    /// One per (origination, destination), ordered by flow then packet id.
    pub records: Vec<PacketRecord>,
    /// Microsecond-resolution delivery trace, parallel to `records`.
    pub deliveries: Vec<Option<Delivery>>,
    /// Origination time of each record.
    pub originated_at: Vec<SimTime>,
    pub stats: RunStats,
}

#[derive(Debug)]
enum Event {
    Origination {
        flow: usize,
        index: usize,
    },
    /// A node's advertising event is due; it starts once the radio is free.
    AdvertisingDue(usize),
    BroadcastStart(usize),
    BroadcastEnd(usize),
    DeliveryTimeout(usize),
}

struct OnAir {
    node: usize,
    channel: AdvChannel,
    start: SimTime,
    end: SimTime,
    power_dbm: f64,
    frame: Rc<[u8]>,
}

struct PendingAdv {
    node: usize,
    channels: [AdvChannel; 3],
    power_dbm: f64,
    frame: Rc<[u8]>,
}

type PendingKey = (Address, u16, usize);

struct Engine<'a> {
    scenario: &'a Scenario,
    nodes: Vec<NodeState>,
    /// Path loss in dB between every pair of nodes.
    loss: Vec<Vec<f64>>,
    queue: EventQueue<Event>,
    on_air: Vec<OnAir>,
    adv: Vec<Option<PendingAdv>>,
    /// End of each node's last scheduled transmission.
    busy_until: Vec<SimTime>,
    active: [Vec<usize>; 3],
    traffic: Vec<Vec<TrafficOrigination>>,
    flow_ends: Vec<(usize, usize)>,
    record_base: Vec<usize>,
    records: Vec<Option<PacketRecord>>,
    deliveries: Vec<Option<Delivery>>,
    originated_at: Vec<SimTime>,
    pending: HashMap<PendingKey, usize>,
    pending_key: Vec<Option<PendingKey>>,
    mac_rng: ChaCha8Rng,
    scan_rng: ChaCha8Rng,
    stats: RunStats,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Runs every flow of `scenario` to quiescence. Identical inputs give
/// identical output.
pub fn run(scenario: &Scenario, seed: u64) -> Result<RunOutput, ScenarioError> {
    scenario.validate().map_err(ScenarioError::Invalid)?;
    let mut engine = Engine::new(scenario, seed);
    engine.execute();
    Ok(RunOutput {
        records: engine
            .records
            .into_iter()
            .map(|r| r.expect("every origination executed"))
            .collect(),
        deliveries: engine.deliveries,
        originated_at: engine.originated_at,
        stats: engine.stats,
    })
}

impl<'a> Engine<'a> {
    fn new(scenario: &'a Scenario, seed: u64) -> Self {
        let n = scenario.nodes.len();
        let mut loss = vec![vec![0.0; n]; n];
        for (a, row) in loss.iter_mut().enumerate() {
            for (b, cell) in row.iter_mut().enumerate() {
                if a != b {
                    let pa = &scenario.nodes[a].position;
                    let pb = &scenario.nodes[b].position;
                    *cell = -link_rssi(&scenario.radio, pa, pb, 0.0)
                        .expect("validated positions are distinct");
                }
            }
        }
        let flow_ends = scenario
            .traffic
            .iter()
            .map(|f| {
                (
                    scenario.node_index(&f.source_node).expect("validated"),
                    scenario.node_index(&f.destination_node).expect("validated"),
                )
            })
            .collect();
        let traffic: Vec<Vec<TrafficOrigination>> = scenario
            .traffic
            .iter()
            .enumerate()
            .map(|(i, f)| {
                generate_traffic(
                    f,
                    &scenario.policy,
                    &mut stream(seed, TRAFFIC_STREAM + i as u64),
                )
            })
            .collect();
        let mut record_base = Vec::with_capacity(traffic.len());
        let mut total = 0;
        for t in &traffic {
            record_base.push(total);
            total += t.len();
        }
        let mut queue = EventQueue::new();
        for (flow, t) in traffic.iter().enumerate() {
            for (index, o) in t.iter().enumerate() {
                queue.push(o.at, Event::Origination { flow, index });
            }
        }
        Engine {
            scenario,
            nodes: scenario.nodes.iter().cloned().map(NodeState::new).collect(),
            loss,
            queue,
            on_air: Vec::new(),
            adv: Vec::new(),
            busy_until: vec![0; n],
            active: Default::default(),
            traffic,
            flow_ends,
            record_base,
            records: vec![None; total],
            deliveries: vec![None; total],
            originated_at: vec![0; total],
            pending: HashMap::new(),
            pending_key: vec![None; total],
            mac_rng: stream(seed, MAC_STREAM),
            scan_rng: stream(seed, SCAN_STREAM),
            stats: RunStats::default(),
        }
    }

    fn execute(&mut self) {
        while let Some(s) = self.queue.pop() {
            self.stats.events += 1;
            match s.event {
                Event::Origination { flow, index } => self.originate(flow, index),
                Event::AdvertisingDue(id) => self.start_adv_event(id),
                Event::BroadcastStart(id) => {
                    let tx = &self.on_air[id];
                    self.active[tx.channel.index()].push(id);
                    self.queue.push(tx.end, Event::BroadcastEnd(id));
                }
                Event::BroadcastEnd(id) => self.broadcast_end(id),
                Event::DeliveryTimeout(rec) => {
                    if let Some(key) = self.pending_key[rec].take() {
                        self.pending.remove(&key);
                    }
                }
            }
        }
    }

    fn record_index(&self, flow: usize, index: usize) -> usize {
        self.record_base[flow] + index
    }

    fn originate(&mut self, flow: usize, index: usize) {
        let o = self.traffic[flow][index];
        let (src_node, dst_node) = self.flow_ends[flow];
        let now = self.queue.now();
        let mut payload = [0u8; MAX_PAYLOAD];
        payload[..3].copy_from_slice(&o.opcode.to_be_bytes()[1..]);
        payload[3] = flow as u8;
        payload[4..8].copy_from_slice(&o.packet_id.to_be_bytes());
        let orig = self.nodes[src_node]
            .originate(
                o.element_index,
                o.opcode,
                &payload,
                self.scenario.group_address,
                &self.scenario.policy,
                now,
                self.scenario.radio.jitter_max_us(),
                &mut self.mac_rng,
            )
            .expect("validated flow originates");

        let rec = self.record_index(flow, index);
        self.records[rec] = Some(PacketRecord {
            timestamp_ms: self.scenario.epoch_ms + now / 1000,
            test_id: flow as u32 + 1,
            packet_id: o.packet_id,
            sender_address: orig.pdu.src,
            receiver_address: orig.pdu.dst,
            ttl: orig.params.ttl,
            tx_power_dbm: orig.params.tx_power_dbm,
            priority_class: orig.pdu.priority,
            delivered: false,
            number_of_hops: None,
            pdt_ms: None,
        });
        self.originated_at[rec] = now;
        let key = (orig.pdu.src, orig.pdu.seq, dst_node);
        if let Some(stale) = self.pending.insert(key, rec) {
            self.pending_key[stale] = None;
        }
        self.pending_key[rec] = Some(key);
        self.queue.push(
            now + u64::from(self.scenario.delivery_timeout_ms) * 1000,
            Event::DeliveryTimeout(rec),
        );
        let frame: Rc<[u8]> = encode_network_pdu(&orig.pdu).expect("valid pdu").into();
        let power = f64::from(orig.params.tx_power_dbm);
        for b in &orig.schedule {
            self.enqueue_broadcast(src_node, &frame, power, b);
        }
    }

    fn enqueue_broadcast(&mut self, node: usize, frame: &Rc<[u8]>, power_dbm: f64, b: &Broadcast) {
        let id = self.adv.len();
        self.adv.push(Some(PendingAdv {
            node,
            channels: b.channels,
            power_dbm,
            frame: Rc::clone(frame),
        }));
        self.queue.push(b.at, Event::AdvertisingDue(id));
    }

    /// One radio per node: an event due while the node is still on air is
    /// deferred until its previous event has finished.
    fn start_adv_event(&mut self, id: usize) {
        let adv = self.adv[id].take().expect("advertising event fires once");
        let air = self.scenario.radio.airtime_us;
        let mut start = self.queue.now().max(self.busy_until[adv.node]);
        for &channel in &adv.channels {
            let tx = self.on_air.len();
            self.on_air.push(OnAir {
                node: adv.node,
                channel,
                start,
                end: start + air,
                power_dbm: adv.power_dbm,
                frame: Rc::clone(&adv.frame),
            });
            self.queue.push(start, Event::BroadcastStart(tx));
            self.stats.transmissions += 1;
            start += air;
        }
        self.busy_until[adv.node] = start;
    }

    fn broadcast_end(&mut self, id: usize) {
        let now = self.queue.now();
        let scenario = self.scenario;
        let radio = &scenario.radio;
        let (tx_node, ch, start, end, power) = {
            let t = &self.on_air[id];
            (t.node, t.channel.index(), t.start, t.end, t.power_dbm)
        };
        let frame = Rc::clone(&self.on_air[id].frame);
        let mut overlapping = Vec::new();
        for rx in 0..self.nodes.len() {
            if rx == tx_node {
                continue;
            }
            let rssi = power - self.loss[tx_node][rx];
            if rssi < radio.sensitivity_dbm {
                continue;
            }
            overlapping.clear();
            for &other in &self.active[ch] {
                let o = &self.on_air[other];
                if other != id && o.node != rx && o.start < end && o.end > start {
                    overlapping.push(o.power_dbm - self.loss[o.node][rx]);
                }
            }
            if !reception_outcome(radio, rssi, &overlapping, &mut self.scan_rng) {
                let strongest = overlapping
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max);
                if rssi < strongest + radio.capture_margin_db {
                    self.stats.collisions += 1;
                }
                continue;
            }
            self.stats.receptions += 1;
            let Ok(pdu) = decode_network_pdu(&frame) else {
                continue;
            };
            let decision = self.nodes[rx].handle_received(&pdu, &scenario.policy);
            if decision.delivered().is_some() {
                if let Some(rec) = self.pending.remove(&(pdu.src, pdu.seq, rx)) {
                    self.pending_key[rec] = None;
                    self.mark_delivered(rec, now, pdu.ttl);
                }
            }
            if let Some((copy, params)) = decision.relay() {
                self.stats.relays += 1;
                let relay_frame: Rc<[u8]> = encode_network_pdu(copy).expect("valid pdu").into();
                let schedule = crate::node::schedule_transmissions(
                    params,
                    now,
                    radio.jitter_max_us(),
                    &mut self.mac_rng,
                );
                let power = f64::from(params.tx_power_dbm);
                for b in &schedule {
                    self.enqueue_broadcast(rx, &relay_frame, power, b);
                }
            }
        }
        let air = radio.airtime_us;
        let on_air = &self.on_air;
        self.active[ch].retain(|&t| on_air[t].end + air > now);
    }

    fn mark_delivered(&mut self, rec: usize, now: SimTime, ttl: u8) {
        let pdt_us = now - self.originated_at[rec];
        let r = self.records[rec].as_mut().expect("originated");
        r.delivered = true;
        r.number_of_hops = Some(hops_from_ttl(r.ttl, ttl).expect("TTL only decreases"));
        r.pdt_ms = Some((pdt_us + 500) / 1000);
        self.deliveries[rec] = Some(Delivery {
            at: now,
            pdt_us,
            ttl_at_delivery: ttl,
        });
    }
}
