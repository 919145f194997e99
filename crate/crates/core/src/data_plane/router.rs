//! Border-router processing.

use alloc::collections::VecDeque;
use alloc::vec::Vec;
use core::cell::RefCell;
use core::sync::atomic::Ordering;

use hashbrown::{HashMap, HashSet};
use subtle::ConstantTimeEq;

use super::packet::{decrypt_index, hop_mac, hvf_input, Packet};
use crate::addr::{AsId, HostAddr};
use crate::control_plane::PolicyIndex;
use crate::crypto::prf;
use crate::drkey::{router_rederive, AsSecret};

pub const MS: u64 = 1_000_000;

/// Acceptable distance between packet timestamp and local clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Freshness {
    /// Tolerated clock skew in either direction.
    pub skew: u64,
    /// How long a packet may be in flight.
    pub lifetime: u64,
}

impl Default for Freshness {
    fn default() -> Self {
        Freshness { skew: 500 * MS, lifetime: 1_000 * MS }
    }
}

impl Freshness {
    pub fn accepts(&self, ts: u64, now: u64) -> bool {
        ts <= now.saturating_add(self.skew) && now <= ts.saturating_add(self.skew + self.lifetime)
    }
}

/// Identifies an intra-AS route in the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RouteId(pub u32);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForwardingTable {
    routes: HashMap<PolicyIndex, Vec<RouteId>>,
}

impl ForwardingTable {
    /// `default` serves index 0 and must not be empty.
    pub fn new(default: Vec<RouteId>) -> Self {
        assert!(!default.is_empty(), "default route required");
        let mut routes = HashMap::new();
        routes.insert(PolicyIndex::NONE, default);
        ForwardingTable { routes }
    }

    pub fn insert(&mut self, index: PolicyIndex, routes: Vec<RouteId>) {
        if !index.is_none() && !routes.is_empty() {
            self.routes.insert(index, routes);
        }
    }

    pub fn lookup(&self, index: PolicyIndex) -> Option<&[RouteId]> {
        self.routes.get(&index).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.routes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.routes.is_empty()
    }

    pub fn indices(&self) -> impl Iterator<Item = PolicyIndex> + '_ {
        self.routes.keys().copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ReplayKey {
    pub src_as: AsId,
    pub src_host: HostAddr,
    pub ts: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DupCheck {
    Fresh,
    Replay,
}

/// Sliding-window duplicate suppression. Keys are forgotten `window`
/// nanoseconds after they were first seen.
#[derive(Debug, Clone)]
pub struct DuplicateWindow {
    window: u64,
    seen: HashSet<ReplayKey>,
    order: VecDeque<(u64, ReplayKey)>,
}

impl DuplicateWindow {
    pub const DEFAULT_WINDOW: u64 = 2_000 * MS;

    pub fn new(window: u64) -> Self {
        DuplicateWindow { window, seen: HashSet::new(), order: VecDeque::new() }
    }

    pub fn check(&mut self, key: ReplayKey, now: u64) -> DupCheck {
        while let Some((t, k)) = self.order.front() {
            if t.saturating_add(self.window) > now {
                break;
            }
            self.seen.remove(k);
            self.order.pop_front();
        }
        if self.seen.insert(key) {
            self.order.push_back((now, key));
            DupCheck::Fresh
        } else {
            DupCheck::Replay
        }
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }
}

impl Default for DuplicateWindow {
    fn default() -> Self {
        Self::new(Self::DEFAULT_WINDOW)
    }
}

/// Shared duplicate-suppression state.
pub trait ReplayGuard {
    fn check(&self, key: ReplayKey, now: u64) -> DupCheck;
}

impl ReplayGuard for RefCell<DuplicateWindow> {
    fn check(&self, key: ReplayKey, now: u64) -> DupCheck {
        self.borrow_mut().check(key, now)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DropReason {
    Malformed,
    WrongHop,
    Stale,
    Replay,
    BadHvf,
    UnsupportedIndex,
}

impl DropReason {
    pub const ALL: [DropReason; 6] = [
        DropReason::Malformed,
        DropReason::WrongHop,
        DropReason::Stale,
        DropReason::Replay,
        DropReason::BadHvf,
        DropReason::UnsupportedIndex,
    ];
}

// Targets without 64-bit atomics count in 32 bits.
#[cfg(target_has_atomic = "64")]
type Counter = core::sync::atomic::AtomicU64;
#[cfg(not(target_has_atomic = "64"))]
type Counter = core::sync::atomic::AtomicU32;

#[derive(Debug, Default)]
pub struct DropCounters {
    counts: [Counter; 6],
}

impl DropCounters {
    pub fn bump(&self, r: DropReason) {
        self.counts[r as usize].fetch_add(1, Ordering::Relaxed);
    }

    #[allow(clippy::unnecessary_cast)] // a widening cast where counters are 32-bit
    pub fn get(&self, r: DropReason) -> u64 {
        self.counts[r as usize].load(Ordering::Relaxed) as u64
    }

    pub fn total(&self) -> u64 {
        DropReason::ALL.iter().map(|r| self.get(*r)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlKind {
    UnsupportedPolicyIndex = 1,
}

/// Sent back to the source when a valid packet asks for an index the AS
/// cannot serve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ControlMessage {
    pub kind: ControlKind,
    pub ts: u64,
    pub index: PolicyIndex,
    pub as_id: AsId,
    pub src_as: AsId,
    pub src_host: HostAddr,
    pub mac: [u8; 4],
}

/// `PRF_{K_i}(kind || ts || index || as)[0..4]`
pub fn control_mac(key: &crate::crypto::SymKey, kind: ControlKind, ts: u64, index: PolicyIndex, as_id: AsId) -> [u8; 4] {
    let mut m = [0u8; 19];
    m[0] = kind as u8;
    m[1..9].copy_from_slice(&ts.to_be_bytes());
    m[9..11].copy_from_slice(&index.0.to_be_bytes());
    m[11..].copy_from_slice(&as_id.to_bytes());
    let mac = prf(key, &m).expect("fixed-size input");
    [mac[0], mac[1], mac[2], mac[3]]
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RouterAction {
    /// The packet was updated in place and leaves on this route.
    Forward(RouteId),
    Drop(DropReason),
    ControlReply(ControlMessage),
}

#[derive(Debug, Clone)]
pub struct RouterCtx {
    pub secret: AsSecret,
    pub freshness: Freshness,
}

impl RouterCtx {
    pub fn as_id(&self) -> AsId {
        self.secret.owner
    }
}

/// 64-bit FNV-1a over the flow tuple, so one flow sticks to one route.
pub fn flow_hash(p: &Packet) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for b in bytes {
            h ^= *b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    eat(&p.src_as.to_bytes());
    eat(&p.src_host.to_bytes());
    eat(&p.dst_as.to_bytes());
    eat(&p.dst_host.to_bytes());
    h
}

/// One border-router pass over the current hop.
///
/// Order: freshness, duplicate check, key derivation, HVF check, index
/// decryption, table lookup. Nothing after a failed HVF check runs.
pub fn router_process(
    ctx: &RouterCtx,
    table: &ForwardingTable,
    guard: &dyn ReplayGuard,
    counters: &DropCounters,
    pkt: &mut Packet,
    now: u64,
) -> RouterAction {
    let drop = |r: DropReason| {
        counters.bump(r);
        RouterAction::Drop(r)
    };
    let i = pkt.cur as usize;
    if i >= pkt.hops.len() || pkt.auth.len() != pkt.hops.len() {
        return drop(DropReason::Malformed);
    }
    if pkt.hops[i].as_id != ctx.as_id() {
        return drop(DropReason::WrongHop);
    }
    if !ctx.freshness.accepts(pkt.ts, now) {
        return drop(DropReason::Stale);
    }
    let key = ReplayKey { src_as: pkt.src_as, src_host: pkt.src_host, ts: pkt.ts };
    if guard.check(key, now) == DupCheck::Replay {
        return drop(DropReason::Replay);
    }
    let k = router_rederive(&ctx.secret, pkt.src_as, pkt.src_host).key;
    let auth = pkt.auth[i];
    let mac = hop_mac(&k, &hvf_input(pkt.ts, pkt.src_as, pkt.src_host, &pkt.hops[i].sigma, auth.enc_index));
    if !bool::from(mac[..4].ct_eq(&auth.hvf)) {
        return drop(DropReason::BadHvf);
    }
    let index = decrypt_index(&k, pkt.ts, auth.enc_index);
    match table.lookup(index) {
        Some(routes) => {
            let route = routes[(flow_hash(pkt) % routes.len() as u64) as usize];
            pkt.auth[i].hvf = [mac[4], mac[5], mac[6], mac[7]];
            pkt.cur += 1;
            RouterAction::Forward(route)
        }
        None => {
            counters.bump(DropReason::UnsupportedIndex);
            let kind = ControlKind::UnsupportedPolicyIndex;
            RouterAction::ControlReply(ControlMessage {
                kind,
                ts: pkt.ts,
                index,
                as_id: ctx.as_id(),
                src_as: pkt.src_as,
                src_host: pkt.src_host,
                mac: control_mac(&k, kind, pkt.ts, index, ctx.as_id()),
            })
        }
    }
}
