//! Discrete-event packet simulation over a beaconed topology.
//!
//! One logical clock drives everything; wall-clock time never enters.
//! Latencies are drawn from a ChaCha8 stream, so a (topology, scenario,
//! seed) triple always yields the same samples.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use fabrid_core::addr::{AsId, HostAddr};
use fabrid_core::control_plane::{EndToEndPath, PolicyIndex};
use fabrid_core::data_plane::{
    dest_key, dest_process, Confirmation, ControlMessage, DestDrop, DropReason, Freshness, HopField,
    Packet, PathCheck, RouteId, RouterAction, RouterCtx, SourceHost,
};
use fabrid_core::drkey::{derive_as_level, derive_host_as};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::beacon::{SegmentStore, EPOCH_NS};
use crate::router::BorderRouter;
use crate::topology::Topology;

const NS_PER_MS: f64 = 1_000_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum FaultKind {
    /// Forwards but leaves the old HVF in place.
    SkipHvfUpdate,
    /// Flips a bit of the next hop's encrypted index after forwarding.
    TamperIndex,
    /// Ignores the index and always uses its default route.
    WrongRoute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fault {
    pub as_id: AsId,
    pub kind: FaultKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("unknown AS {0}")]
    UnknownAs(AsId),
    #[error("no path from {0} to {1}")]
    NoPath(AsId, AsId),
    #[error("honest router {as_id} dropped packet {seq}: {reason:?}")]
    HonestDrop { seq: u64, as_id: AsId, reason: DropReason },
    #[error("honest destination dropped packet {seq}: {reason}")]
    HonestDestDrop { seq: u64, reason: DestDrop },
    #[error("packet build failed: {0}")]
    Build(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RttSample {
    pub seq: u64,
    pub index: u16,
    pub rtt_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Delivered(PathCheck),
    Dropped { at: AsId, reason: DropReason },
    ControlReply { msg: ControlMessage, authentic: bool },
    DestDropped(DestDrop),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RttScenario {
    pub src: AsId,
    pub dst: AsId,
    /// Requested at every on-path AS after the first that announces it.
    pub index: u16,
    pub count: u64,
    pub interval_ms: f64,
    /// Which candidate path to use, shortest first.
    pub path: usize,
    /// Overrides the topology seed for jitter draws.
    pub seed: Option<u64>,
}

impl RttScenario {
    pub fn new(src: AsId, dst: AsId, index: u16) -> Self {
        RttScenario { src, dst, index, count: 60, interval_ms: 1000.0, path: 0, seed: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RttRun {
    pub path: Vec<AsId>,
    pub indices: Vec<PolicyIndex>,
    pub samples: Vec<RttSample>,
    /// One per packet sent, in sequence order.
    pub outcomes: Vec<Outcome>,
    /// Intra-AS route each packet took at each hop it passed.
    pub routes: Vec<Vec<RouteId>>,
}

impl RttRun {
    pub fn delivered(&self) -> usize {
        self.outcomes.iter().filter(|o| matches!(o, Outcome::Delivered(_))).count()
    }

    pub fn mean_rtt_ms(&self) -> Option<f64> {
        if self.samples.is_empty() {
            return None;
        }
        Some(self.samples.iter().map(|s| s.rtt_ms).sum::<f64>() / self.samples.len() as f64)
    }

    /// `seq,index,rtt_ms` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("seq,index,rtt_ms\n");
        for s in &self.samples {
            out.push_str(&format!("{},{},{:.3}\n", s.seq, s.index, s.rtt_ms));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    Send,
    AtRouter(usize),
    AtHost,
    Returning(usize),
    AtSource,
}

/// Time-ordered queue; ties break by insertion order.
#[derive(Debug)]
pub struct EventQueue<E: Ord> {
    heap: BinaryHeap<Reverse<(u64, u64, E)>>,
    next: u64,
}

impl<E: Ord> Default for EventQueue<E> {
    fn default() -> Self {
        EventQueue { heap: BinaryHeap::new(), next: 0 }
    }
}

impl<E: Ord> EventQueue<E> {
    pub fn push(&mut self, at: u64, e: E) {
        self.heap.push(Reverse((at, self.next, e)));
        self.next += 1;
    }

    pub fn pop(&mut self) -> Option<(u64, E)> {
        self.heap.pop().map(|Reverse((t, _, e))| (t, e))
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

struct Flight {
    pkt: Packet,
    sent_at: u64,
    routes: Vec<RouteId>,
    conf: Option<Confirmation>,
}

pub struct Simulator<'t> {
    pub topo: &'t Topology,
    pub store: &'t SegmentStore,
    routers: BTreeMap<AsId, BorderRouter>,
    faults: BTreeMap<AsId, BTreeSet<FaultKind>>,
    /// Simulated time only moves forward, also across runs, so routers
    /// never see an earlier run's timestamps again.
    clock: u64,
}

impl<'t> Simulator<'t> {
    pub fn new(topo: &'t Topology, store: &'t SegmentStore) -> Self {
        let routers = topo
            .ases
            .iter()
            .map(|a| {
                let ctx = RouterCtx { secret: a.secret.clone(), freshness: Freshness::default() };
                (a.id, BorderRouter::new(ctx, a.forwarding_table()))
            })
            .collect();
        Simulator { topo, store, routers, faults: BTreeMap::new(), clock: EPOCH_NS }
    }

    pub fn inject_fault(&mut self, fault: Fault) -> Result<(), SimError> {
        self.topo.get(fault.as_id).ok_or(SimError::UnknownAs(fault.as_id))?;
        self.faults.entry(fault.as_id).or_default().insert(fault.kind);
        Ok(())
    }

    pub fn clear_faults(&mut self) {
        self.faults.clear();
    }

    /// Current simulated time in nanoseconds.
    pub fn now(&self) -> u64 {
        self.clock
    }

    pub fn router(&self, id: AsId) -> Option<&BorderRouter> {
        self.routers.get(&id)
    }

    fn has_fault(&self, id: AsId, k: FaultKind) -> bool {
        self.faults.get(&id).is_some_and(|s| s.contains(&k))
    }

    /// Per-hop indices: `index` wherever the hop announces it, else 0.
    pub fn indices_for(path: &EndToEndPath, index: u16) -> Vec<PolicyIndex> {
        path.hops
            .iter()
            .enumerate()
            .map(|(i, h)| {
                let want = PolicyIndex(index);
                let ok = i > 0 && h.maps.as_ref().is_some_and(|m| m.dmap.contains_key(&want));
                if ok { want } else { PolicyIndex::NONE }
            })
            .collect()
    }

    fn route_ms(&self, as_id: AsId, route: RouteId, rng: &mut ChaCha8Rng) -> f64 {
        let node = self.topo.get(as_id).expect("on-path AS");
        node.route(route).map_or(0.0, |r| r.latency.sample_ms(rng))
    }

    fn link_ms(&self, as_id: AsId, egress: u16, rng: &mut ChaCha8Rng) -> f64 {
        self.topo.link_at(as_id, egress).map_or(0.0, |l| l.latency.sample_ms(rng))
    }

    pub fn run_rtt_experiment(&mut self, sc: &RttScenario) -> Result<RttRun, SimError> {
        for id in [sc.src, sc.dst] {
            self.topo.get(id).ok_or(SimError::UnknownAs(id))?;
        }
        let paths = self.store.paths(self.topo, sc.src, sc.dst);
        let path = paths.get(sc.path).ok_or(SimError::NoPath(sc.src, sc.dst))?.clone();
        let hops = HopField::from_path(&path);
        let indices = Self::indices_for(&path, sc.index);
        let src_node = self.topo.get(sc.src).expect("checked");
        let dst_node = self.topo.get(sc.dst).expect("checked");
        let (src_host, dst_host) = (src_node.host(1), dst_node.host(2));
        // Stand-in for key fetching: the simulator knows every AS secret.
        let hop_keys: Vec<_> = hops
            .iter()
            .map(|h| {
                let s = &self.topo.get(h.as_id).expect("on-path AS").secret;
                Some(derive_host_as(&derive_as_level(s, sc.src), src_host).expect("AS-level").key)
            })
            .collect();
        let dvf_key = dest_key(&dst_node.secret, dst_host, sc.src, src_host);
        let mut source = SourceHost::new(sc.src, src_host);
        let mut rng = ChaCha8Rng::seed_from_u64(sc.seed.unwrap_or(self.topo.seed) ^ 0x7274_7400);

        let mut q: EventQueue<(u64, Event)> = EventQueue::default();
        let interval = (sc.interval_ms * NS_PER_MS) as u64;
        for seq in 0..sc.count {
            q.push(self.clock + seq * interval, (seq, Event::Send));
        }
        let mut flights: BTreeMap<u64, Flight> = BTreeMap::new();
        let mut outcomes: BTreeMap<u64, Outcome> = BTreeMap::new();
        let mut samples = Vec::new();
        let last = hops.len() - 1;
        let mut end = self.clock;
        while let Some((now, (seq, ev))) = q.pop() {
            end = now;
            match ev {
                Event::Send => {
                    let ts = source.next_ts(now);
                    let pkt = source
                        .send(ts, (sc.dst, dst_host), &hops, &indices, &hop_keys, &dvf_key, b"probe", now)
                        .map_err(|e| SimError::Build(e.to_string()))?;
                    flights.insert(seq, Flight { pkt, sent_at: now, routes: Vec::new(), conf: None });
                    q.push(now, (seq, Event::AtRouter(0)));
                }
                Event::AtRouter(pos) => {
                    let f = flights.get_mut(&seq).expect("in flight");
                    let as_id = hops[pos].as_id;
                    let router = &self.routers[&as_id];
                    let before = f.pkt.auth[pos].hvf;
                    match router.process(&mut f.pkt, now) {
                        RouterAction::Forward(mut route) => {
                            if self.has_fault(as_id, FaultKind::SkipHvfUpdate) {
                                f.pkt.auth[pos].hvf = before;
                            }
                            if self.has_fault(as_id, FaultKind::TamperIndex) && pos < last {
                                f.pkt.auth[pos + 1].enc_index[1] ^= 1;
                            }
                            if self.has_fault(as_id, FaultKind::WrongRoute) {
                                route = router.table().lookup(PolicyIndex::NONE).expect("default route")[0];
                            }
                            f.routes.push(route);
                            let mut t = now as f64 + self.route_ms(as_id, route, &mut rng) * NS_PER_MS;
                            if pos == last {
                                q.push(t as u64, (seq, Event::AtHost));
                            } else {
                                t += self.link_ms(as_id, hops[pos].egress, &mut rng) * NS_PER_MS;
                                q.push(t as u64, (seq, Event::AtRouter(pos + 1)));
                            }
                        }
                        RouterAction::Drop(reason) => {
                            outcomes.insert(seq, Outcome::Dropped { at: as_id, reason });
                        }
                        RouterAction::ControlReply(msg) => {
                            let authentic = source.verify_control_message(&msg, now).is_ok();
                            outcomes.insert(seq, Outcome::ControlReply { msg, authentic });
                        }
                    }
                }
                Event::AtHost => {
                    let f = flights.get_mut(&seq).expect("in flight");
                    match dest_process(&dst_node.secret, dst_host, &f.pkt) {
                        Ok(conf) => {
                            f.conf = Some(conf);
                            let r = *f.routes.last().expect("last hop forwarded");
                            let t = now as f64 + self.route_ms(hops[last].as_id, r, &mut rng) * NS_PER_MS;
                            q.push(t as u64, (seq, Event::Returning(last)));
                        }
                        Err(e) => {
                            outcomes.insert(seq, Outcome::DestDropped(e));
                        }
                    }
                }
                Event::Returning(pos) => {
                    if pos == 0 {
                        q.push(now, (seq, Event::AtSource));
                        continue;
                    }
                    let prev = pos - 1;
                    let r = flights[&seq].routes[prev];
                    let t = now as f64
                        + (self.link_ms(hops[prev].as_id, hops[prev].egress, &mut rng)
                            + self.route_ms(hops[prev].as_id, r, &mut rng))
                            * NS_PER_MS;
                    q.push(t as u64, (seq, Event::Returning(prev)));
                }
                Event::AtSource => {
                    let f = &flights[&seq];
                    let conf = f.conf.as_ref().expect("confirmed");
                    let check = source.validate(conf, now).map_err(|e| SimError::Build(e.to_string()))?;
                    samples.push(RttSample {
                        seq,
                        index: sc.index,
                        rtt_ms: (now - f.sent_at) as f64 / NS_PER_MS,
                    });
                    outcomes.insert(seq, Outcome::Delivered(check));
                }
            }
        }
        // The next run starts a second later than the last event of this one.
        self.clock = end + 1_000_000_000;
        if self.faults.is_empty() {
            for (seq, o) in &outcomes {
                match o {
                    Outcome::Dropped { at, reason } => {
                        return Err(SimError::HonestDrop { seq: *seq, as_id: *at, reason: *reason })
                    }
                    Outcome::DestDropped(reason) => {
                        return Err(SimError::HonestDestDrop { seq: *seq, reason: *reason })
                    }
                    _ => {}
                }
            }
        }
        samples.sort_by_key(|s| s.seq);
        Ok(RttRun {
            path: path.ases(),
            indices,
            samples,
            outcomes: outcomes.into_values().collect(),
            routes: flights.into_values().map(|f| f.routes).collect(),
        })
    }
}

/// The topology's default host pair for an AS pair.
pub fn default_hosts(topo: &Topology, src: AsId, dst: AsId) -> Option<(HostAddr, HostAddr)> {
    Some((topo.get(src)?.host(1), topo.get(dst)?.host(2)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn queue_orders_by_time_then_insertion() {
        let mut q = EventQueue::default();
        q.push(5, 'a');
        q.push(1, 'z');
        q.push(5, 'b');
        assert_eq!(q.pop(), Some((1, 'z')));
        assert_eq!(q.pop(), Some((5, 'a')));
        assert_eq!(q.pop(), Some((5, 'b')));
        assert!(q.is_empty());
    }
}
