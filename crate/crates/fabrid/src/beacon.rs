//! Beacon propagation and segment lookup over a topology.
//!
//! Each round, core ASes originate one beacon per child link and per core
//! link. Non-core ASes extend beacons from parents to their children; core
//! ASes extend core beacons to other core ASes they have not yet seen.
//! Every AS reached also terminates a copy (egress 0) and stores it.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use fabrid_core::addr::AsId;
use fabrid_core::control_plane::{
    combine_segments, extend_pcb, originate_pcb, verify_pcb, AnnouncementLedger, AsContext,
    EndToEndPath, InterfaceId, Pcb, PcbError, PolicyIndex, PolicyMaps, SegmentInfo, Validity,
};
use fabrid_core::crypto::prf;

use crate::topology::{AsNode, LinkKind, Topology};

/// Start of simulated time, so timestamps never underflow.
pub const EPOCH_NS: u64 = 1_700_000_000_000_000_000;
pub const ROUND_NS: u64 = 60 * 1_000_000_000;
pub const SEGMENT_LIFETIME_NS: u64 = 6 * 3600 * 1_000_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub as_id: AsId,
    pub error: PcbError,
}

#[derive(Debug, Clone, Default)]
pub struct SegmentStore {
    /// Intra-ISD segments from a core AS down to the key AS.
    pub down: BTreeMap<AsId, Vec<Pcb>>,
    /// Core segments from their originator to the key core AS.
    pub core: BTreeMap<AsId, Vec<Pcb>>,
    pub diagnostics: Vec<Diagnostic>,
}

impl SegmentStore {
    pub fn up_segments(&self, id: AsId) -> &[Pcb] {
        self.down.get(&id).map_or(&[], Vec::as_slice)
    }

    pub fn all(&self) -> impl Iterator<Item = &Pcb> {
        self.down.values().chain(self.core.values()).flatten()
    }

    fn store(map: &mut BTreeMap<AsId, Vec<Pcb>>, at: AsId, pcb: Pcb) {
        let v = map.entry(at).or_default();
        let key: Vec<_> = pcb.ases().collect();
        let ifs = |p: &Pcb| p.entries.iter().map(|e| (e.body.ingress, e.body.egress)).collect::<Vec<_>>();
        // Keep only the newest beacon per hop sequence.
        v.retain(|p| !(p.ases().collect::<Vec<_>>() == key && ifs(p) == ifs(&pcb)));
        v.push(pcb);
    }

    /// All end-to-end paths from `src` to `dst`, shortest first.
    pub fn paths(&self, topo: &Topology, src: AsId, dst: AsId) -> Vec<EndToEndPath> {
        if src == dst {
            return Vec::new();
        }
        let is_core = |x: AsId| topo.get(x).is_some_and(|a| a.core);
        let ups: Vec<Option<&Pcb>> =
            if is_core(src) { vec![None] } else { self.up_segments(src).iter().map(Some).collect() };
        let downs: Vec<Option<&Pcb>> =
            if is_core(dst) { vec![None] } else { self.up_segments(dst).iter().map(Some).collect() };
        let cores: Vec<&Pcb> = self.core.values().flatten().collect();
        let mut out: Vec<EndToEndPath> = Vec::new();
        // Core segments are usable in both directions, so the same hops can
        // be reached twice; keep the first.
        let hops = |p: &EndToEndPath| p.hops.iter().map(|h| (h.as_id, h.ingress, h.egress)).collect::<Vec<_>>();
        let mut seen = BTreeSet::new();
        let mut push = |p: EndToEndPath| {
            if seen.insert(hops(&p)) {
                out.push(p);
            }
        };
        for u in &ups {
            let cu = u.and_then(Pcb::first_as).unwrap_or(src);
            for d in &downs {
                let cd = d.and_then(Pcb::first_as).unwrap_or(dst);
                if cu == cd {
                    if let Ok(p) = combine_segments(*u, None, *d) {
                        push(p);
                    }
                    continue;
                }
                for c in &cores {
                    let ends = (c.first_as(), c.last_as());
                    if ends == (Some(cu), Some(cd)) || ends == (Some(cd), Some(cu)) {
                        if let Ok(p) = combine_segments(*u, Some(c), *d) {
                            push(p);
                        }
                    }
                }
            }
        }
        out.sort_by_key(|p| (p.hops.len(), p.ases()));
        out
    }
}

/// Per-AS state that outlives a round.
#[derive(Debug, Default)]
pub struct Beaconer {
    ledgers: BTreeMap<AsId, AnnouncementLedger>,
    pub store: SegmentStore,
    round: u64,
}

fn sigma(node: &AsNode, ingress: InterfaceId, egress: InterfaceId, validity: Validity) -> [u8; 16] {
    let mut m = [0u8; 28];
    m[..8].copy_from_slice(&node.id.to_bytes());
    m[8..10].copy_from_slice(&ingress.to_be_bytes());
    m[10..12].copy_from_slice(&egress.to_be_bytes());
    m[12..20].copy_from_slice(&validity.from.to_be_bytes());
    m[20..].copy_from_slice(&validity.until.to_be_bytes());
    prf(&node.secret.key, &m).expect("short input")
}

struct InFlight {
    pcb: Pcb,
    at: AsId,
    ingress: InterfaceId,
    kind: LinkKind,
}

impl Beaconer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> u64 {
        EPOCH_NS + self.round * ROUND_NS
    }

    /// Adds this AS's entry, dropping its policy maps if they are rejected.
    fn add_entry(
        &mut self,
        topo: &Topology,
        node: &AsNode,
        pcb: Option<&Pcb>,
        info: SegmentInfo,
        ingress: InterfaceId,
        egress: InterfaceId,
    ) -> Option<Pcb> {
        let validity = Validity { from: self.now(), until: self.now() + SEGMENT_LIFETIME_NS };
        let full = node.policy_maps();
        let empty = PolicyMaps::default();
        let serves = |i: PolicyIndex| node.serves(i);
        let ledger = self.ledgers.entry(node.id).or_default();
        for maps in [&full, &empty] {
            let ctx = AsContext {
                as_id: node.id,
                key: &node.key,
                maps,
                ingress,
                egress,
                validity,
                sigma: sigma(node, ingress, egress, validity),
            };
            let res = match pcb {
                None => originate_pcb(info, &ctx, &serves, ledger),
                Some(p) => extend_pcb(p, &topo.trust, &ctx, &serves, ledger),
            };
            match res {
                Ok(p) => return Some(p),
                Err(e @ (PcbError::UnsupportedAnnouncement(_) | PcbError::InconsistentAnnouncement { .. }))
                    if maps == &full =>
                {
                    let d = Diagnostic { as_id: node.id, error: e };
                    if !self.store.diagnostics.contains(&d) {
                        self.store.diagnostics.push(d);
                    }
                }
                Err(e) => {
                    self.store.diagnostics.push(Diagnostic { as_id: node.id, error: e });
                    return None;
                }
            }
        }
        None
    }

    pub fn run_round(&mut self, topo: &Topology) {
        let mut queue = VecDeque::new();
        let mut seg_id = 0u16;
        for node in topo.ases.iter().filter(|a| a.core) {
            for link in topo.links_of(node.id) {
                let (egress, next, next_if) = link.other(node.id).expect("incident link");
                let downward = link.kind == LinkKind::Parent && link.a == node.id;
                if !(downward || link.kind == LinkKind::Core) {
                    continue;
                }
                seg_id = seg_id.wrapping_add(1);
                let info = SegmentInfo { timestamp: self.now(), seg_id };
                if let Some(pcb) = self.add_entry(topo, node, None, info, 0, egress) {
                    queue.push_back(InFlight { pcb, at: next, ingress: next_if, kind: link.kind });
                }
            }
        }
        while let Some(f) = queue.pop_front() {
            let node = topo.get(f.at).expect("linked AS exists");
            if f.pcb.ases().any(|a| a == node.id) {
                continue;
            }
            let info = f.pcb.info;
            if let Some(term) = self.add_entry(topo, node, Some(&f.pcb), info, f.ingress, 0) {
                let map = if f.kind == LinkKind::Core { &mut self.store.core } else { &mut self.store.down };
                SegmentStore::store(map, node.id, term);
            }
            for link in topo.links_of(node.id) {
                let (egress, next, next_if) = link.other(node.id).expect("incident link");
                let follow = match f.kind {
                    LinkKind::Parent => link.kind == LinkKind::Parent && link.a == node.id,
                    LinkKind::Core => link.kind == LinkKind::Core,
                };
                if follow && !f.pcb.ases().any(|a| a == next) {
                    if let Some(pcb) = self.add_entry(topo, node, Some(&f.pcb), info, f.ingress, egress) {
                        queue.push_back(InFlight { pcb, at: next, ingress: next_if, kind: f.kind });
                    }
                }
            }
        }
        self.round += 1;
    }
}

/// Runs `rounds` beaconing rounds and returns the segment stores.
pub fn run_beaconing(topo: &Topology, rounds: u32) -> SegmentStore {
    let mut b = Beaconer::new();
    for _ in 0..rounds {
        b.run_round(topo);
    }
    b.store
}

/// Checks every stored segment against the topology's trust store.
pub fn verify_store(store: &SegmentStore, topo: &Topology, now: u64) -> Result<(), PcbError> {
    store.all().try_for_each(|p| verify_pcb(p, &topo.trust, now))
}

/// Names of the ASes on a segment, in beacon order.
pub fn segment_names(topo: &Topology, pcb: &Pcb) -> Vec<String> {
    pcb.ases().map(|a| topo.name(a)).collect()
}

pub fn distinct_names(store: &SegmentStore, topo: &Topology) -> BTreeSet<Vec<String>> {
    store.all().map(|p| segment_names(topo, p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> Topology {
        Topology::from_toml(
            r#"
            [[ases]]
            id = "1-1"
            name = "A"
            core = true
            [[ases]]
            id = "1-2"
            name = "B"
            [[ases]]
            id = "1-3"
            name = "C"
            [[ases]]
            id = "1-4"
            name = "D"
            [[links]]
            a = "A"
            a_if = 1
            b = "B"
            b_if = 1
            kind = "parent"
            [[links]]
            a = "B"
            a_if = 2
            b = "C"
            b_if = 1
            kind = "parent"
            [[links]]
            a = "C"
            a_if = 2
            b = "D"
            b_if = 1
            kind = "parent"
            "#,
        )
        .unwrap()
    }

    #[test]
    fn chain_one_round() {
        let t = chain();
        let s = run_beaconing(&t, 1);
        let leaf = t.resolve("D").unwrap();
        assert_eq!(s.up_segments(leaf).len(), 1);
        assert_eq!(s.up_segments(leaf)[0].len(), 4);
        verify_store(&s, &t, EPOCH_NS).unwrap();
        let paths = s.paths(&t, leaf, t.resolve("A").unwrap());
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].hops.len(), 4);
        // Would need a shortcut through B, which is not supported.
        assert!(s.paths(&t, leaf, t.resolve("B").unwrap()).is_empty());
    }

    #[test]
    fn rounds_replace_rather_than_accumulate() {
        let t = chain();
        let s = run_beaconing(&t, 3);
        assert_eq!(s.up_segments(t.resolve("D").unwrap()).len(), 1);
    }
}
