//! End-to-end paths from segments, and endpoint-side path selection.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::cmp::Reverse;

use thiserror::Error;

use super::maps::{Endpoint, IfIpPair, InterfaceId, PolicyIndex, PolicyMaps};
use super::pcb::{AsEntry, Pcb, TrustStore, Validity};
use crate::addr::{AsId, HostAddr};
use crate::crypto::Principal;
use crate::policy::{check_containment, ContainmentBounds, Policy, PolicyError, Verdict};
use crate::registry::{PolicyId, Registry, RegistryError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathHop {
    pub as_id: AsId,
    /// 0 when the path starts inside this AS.
    pub ingress: InterfaceId,
    /// 0 when the path ends inside this AS.
    pub egress: InterfaceId,
    pub validity: Validity,
    pub sigma: [u8; 16],
    pub maps: Option<PolicyMaps>,
}

impl PathHop {
    fn from_entry(e: &AsEntry, reversed: bool) -> Self {
        let (ingress, egress) = if reversed {
            (e.body.egress, e.body.ingress)
        } else {
            (e.body.ingress, e.body.egress)
        };
        PathHop {
            as_id: e.body.as_id,
            ingress,
            egress,
            validity: e.body.validity,
            sigma: e.body.sigma,
            // Undecodable maps count as no announcement.
            maps: e.maps().and_then(Result::ok),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EndToEndPath {
    pub hops: Vec<PathHop>,
}

impl EndToEndPath {
    pub fn ases(&self) -> Vec<AsId> {
        self.hops.iter().map(|h| h.as_id).collect()
    }

    pub fn src(&self) -> AsId {
        self.hops[0].as_id
    }

    pub fn dst(&self) -> AsId {
        self.hops[self.hops.len() - 1].as_id
    }

    pub fn validity(&self) -> Validity {
        self.hops.iter().fold(Validity { from: 0, until: u64::MAX }, |v, h| Validity {
            from: v.from.max(h.validity.from),
            until: v.until.min(h.validity.until),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CombineError {
    #[error("segments do not join at a shared AS")]
    JoinMismatch,
    #[error("no segments given")]
    Empty,
    #[error("AS {0} appears twice on the combined path")]
    Loop(AsId),
}

fn segment_hops(pcb: &Pcb, reversed: bool) -> Vec<PathHop> {
    let mut hops: Vec<_> = pcb.entries.iter().map(|e| PathHop::from_entry(e, reversed)).collect();
    if reversed {
        hops.reverse();
    }
    hops
}

fn merge_maps(a: Option<PolicyMaps>, b: Option<PolicyMaps>) -> Option<PolicyMaps> {
    match (a, b) {
        (Some(mut a), Some(b)) => {
            for (k, set) in b.imap {
                a.imap.entry(k).or_default().extend(set);
            }
            for (i, pid) in b.dmap {
                a.dmap.entry(i).or_insert(pid);
            }
            Some(a)
        }
        (a, b) => a.or(b),
    }
}

/// Appends `next` to `acc`, fusing the shared AS into one hop.
fn join(acc: &mut Vec<PathHop>, next: Vec<PathHop>) -> Result<(), CombineError> {
    let mut it = next.into_iter();
    let Some(first) = it.next() else { return Err(CombineError::JoinMismatch) };
    match acc.last_mut() {
        None => acc.push(first),
        Some(last) if last.as_id == first.as_id => {
            last.egress = first.egress;
            last.validity = Validity {
                from: last.validity.from.max(first.validity.from),
                until: last.validity.until.min(first.validity.until),
            };
            last.maps = merge_maps(last.maps.take(), first.maps);
        }
        Some(_) => return Err(CombineError::JoinMismatch),
    }
    acc.extend(it);
    Ok(())
}

/// Builds a source-to-destination path.
///
/// `up` is a beacon from a core AS down to the source and is traversed in
/// reverse; `down` runs from a core AS to the destination. `core` may be
/// given in either direction.
pub fn combine_segments(
    up: Option<&Pcb>,
    core: Option<&Pcb>,
    down: Option<&Pcb>,
) -> Result<EndToEndPath, CombineError> {
    let mut hops = Vec::new();
    let mut pieces = Vec::new();
    if let Some(u) = up {
        pieces.push(segment_hops(u, true));
    }
    if let Some(c) = core {
        let start = pieces.last().and_then(|p: &Vec<PathHop>| p.last()).map(|h| h.as_id);
        let end = down.and_then(Pcb::first_as);
        let fwd = start.is_none_or(|s| Some(s) == c.first_as()) && end.is_none_or(|e| Some(e) == c.last_as());
        let rev = start.is_none_or(|s| Some(s) == c.last_as()) && end.is_none_or(|e| Some(e) == c.first_as());
        match (fwd, rev) {
            (true, _) => pieces.push(segment_hops(c, false)),
            (false, true) => pieces.push(segment_hops(c, true)),
            _ => return Err(CombineError::JoinMismatch),
        }
    }
    if let Some(d) = down {
        pieces.push(segment_hops(d, false));
    }
    if pieces.is_empty() {
        return Err(CombineError::Empty);
    }
    for p in pieces {
        join(&mut hops, p)?;
    }
    let mut seen = BTreeSet::new();
    for h in &hops {
        if !seen.insert(h.as_id) {
            return Err(CombineError::Loop(h.as_id));
        }
    }
    Ok(EndToEndPath { hops })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResolveError {
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("registered description does not parse: {0}")]
    Policy(#[from] PolicyError),
    #[error("no registry reachable for {0}")]
    Unavailable(PolicyId),
}

/// Fetches the description behind a policy id.
pub trait PolicyResolver {
    fn resolve(&self, id: PolicyId) -> Result<Policy, ResolveError>;
}

/// Resolves directly against in-memory registries, verifying responses
/// with the keys in the trust store.
pub struct RegistryResolver<'a> {
    pub registries: &'a [&'a Registry],
    pub trust: &'a TrustStore,
}

impl PolicyResolver for RegistryResolver<'_> {
    fn resolve(&self, id: PolicyId) -> Result<Policy, ResolveError> {
        let owner: Principal = id.scope.owner();
        let reg = self
            .registries
            .iter()
            .find(|r| r.owner() == owner)
            .ok_or(ResolveError::Unavailable(id))?;
        let pk = self.trust.get(owner).ok_or(RegistryError::SignatureInvalid)?;
        let entry = reg.lookup(id)?.open(pk)?;
        if entry.id != id {
            return Err(RegistryError::Malformed.into());
        }
        Ok(entry.policy()?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HopVerdict {
    Compliant(PolicyIndex),
    NonCompliant,
    Untrusted,
    /// `warning` is set when announcements existed but none could be resolved.
    NoAnnouncement { warning: bool },
}

#[derive(Debug, Clone, Default)]
pub struct FilterOptions {
    pub src_host: Option<HostAddr>,
    pub dst_host: Option<HostAddr>,
    pub bounds: ContainmentBounds,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedPath {
    pub path: EndToEndPath,
    /// One per hop, source AS included.
    pub verdicts: Vec<HopVerdict>,
}

impl RankedPath {
    pub fn has_untrusted(&self) -> bool {
        self.verdicts.contains(&HopVerdict::Untrusted)
    }

    pub fn compliant_hops(&self) -> usize {
        self.verdicts.iter().filter(|v| matches!(v, HopVerdict::Compliant(_))).count()
    }

    /// Indices to put in the packet, one per hop after the source AS.
    pub fn indices(&self) -> Vec<PolicyIndex> {
        self.verdicts[1..]
            .iter()
            .map(|v| match v {
                HopVerdict::Compliant(i) => *i,
                _ => PolicyIndex::NONE,
            })
            .collect()
    }
}

/// Candidate indices for how `path` traverses hop `i`: the exact interface
/// pair first, then address-range entries at either end of the path.
fn traversal_indices(path: &EndToEndPath, i: usize, opts: &FilterOptions) -> BTreeSet<PolicyIndex> {
    let hop = &path.hops[i];
    let Some(maps) = &hop.maps else { return BTreeSet::new() };
    if let Some(set) = maps.imap.get(&IfIpPair::interfaces(hop.ingress, hop.egress)) {
        return set.clone();
    }
    let mut out = BTreeSet::new();
    for (key, set) in &maps.imap {
        let hit = match (key.from(), key.to()) {
            (Endpoint::Ip(p), Endpoint::If(eg)) => {
                i == 0 && eg == hop.egress && opts.src_host.is_some_and(|h| p.contains(h))
            }
            (Endpoint::If(ing), Endpoint::Ip(p)) => {
                i + 1 == path.hops.len()
                    && ing == hop.ingress
                    && opts.dst_host.is_some_and(|h| p.contains(h))
            }
            _ => false,
        };
        if hit {
            out.extend(set);
        }
    }
    out
}

/// Scores every path against the preference and ranks them: fully trusted
/// paths first, then by compliant hop count, then by length, then by AS
/// sequence.
pub fn filter_paths(
    paths: &[EndToEndPath],
    pref: &Policy,
    trusted: &BTreeSet<AsId>,
    resolver: &dyn PolicyResolver,
    opts: &FilterOptions,
) -> Vec<RankedPath> {
    // Each announced policy is resolved and checked once per call.
    let mut cache: BTreeMap<PolicyId, Option<bool>> = BTreeMap::new();
    let mut ranked: Vec<RankedPath> = paths
        .iter()
        .map(|path| {
            let verdicts = (0..path.hops.len())
                .map(|i| hop_verdict(path, i, pref, trusted, resolver, opts, &mut cache))
                .collect();
            RankedPath { path: path.clone(), verdicts }
        })
        .collect();
    ranked.sort_by_cached_key(|r| {
        (r.has_untrusted(), Reverse(r.compliant_hops()), r.path.hops.len(), r.path.ases())
    });
    ranked
}

fn hop_verdict(
    path: &EndToEndPath,
    i: usize,
    pref: &Policy,
    trusted: &BTreeSet<AsId>,
    resolver: &dyn PolicyResolver,
    opts: &FilterOptions,
    cache: &mut BTreeMap<PolicyId, Option<bool>>,
) -> HopVerdict {
    let hop = &path.hops[i];
    if !trusted.contains(&hop.as_id) {
        return HopVerdict::Untrusted;
    }
    let Some(maps) = &hop.maps else {
        return HopVerdict::NoAnnouncement { warning: false };
    };
    let candidates = traversal_indices(path, i, opts);
    let mut failed = false;
    for idx in &candidates {
        let Some(pid) = maps.dmap.get(idx) else { continue };
        let ok = *cache.entry(*pid).or_insert_with(|| {
            resolver.resolve(*pid).ok().map(|p| {
                matches!(check_containment(&p, pref, &opts.bounds), Ok(Verdict::Contained))
            })
        });
        match ok {
            Some(true) => return HopVerdict::Compliant(*idx),
            Some(false) => {}
            None => failed = true,
        }
    }
    if failed {
        HopVerdict::NoAnnouncement { warning: true }
    } else {
        HopVerdict::NonCompliant
    }
}

/// Maps per-AS policy choices to packet indices, one per hop after the
/// first. Hops without a choice or announcement get index 0.
pub fn assign_indices(path: &EndToEndPath, choices: &BTreeMap<AsId, PolicyId>) -> Vec<PolicyIndex> {
    path.hops
        .iter()
        .skip(1)
        .map(|h| {
            choices
                .get(&h.as_id)
                .and_then(|pid| h.maps.as_ref()?.index_of(*pid))
                .unwrap_or(PolicyIndex::NONE)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control_plane::pcb::{originate_pcb, extend_pcb, AnnouncementLedger, AsContext, SegmentInfo};
    use crate::crypto::SigKeyPair;
    use crate::policy::parse_policy;

    fn ia(n: u64) -> AsId {
        AsId::new(1, n).unwrap()
    }

    fn key(n: u64) -> SigKeyPair {
        SigKeyPair::from_seed(Principal::As(ia(n)), [n as u8; 32])
    }

    const WIN: Validity = Validity { from: 0, until: 1_000 };

    /// Beacon over `(as, ingress, egress, maps)` hops.
    fn beacon(hops: &[(u64, u16, u16, PolicyMaps)], trust: &TrustStore) -> Pcb {
        let all = |_: PolicyIndex| true;
        let mut ledger = AnnouncementLedger::new();
        let mut pcb: Option<Pcb> = None;
        for (n, ing, eg, m) in hops {
            let k = key(*n);
            let ctx = AsContext { as_id: ia(*n), key: &k, maps: m, ingress: *ing, egress: *eg, validity: WIN, sigma: [0; 16] };
            pcb = Some(match pcb {
                None => originate_pcb(SegmentInfo { timestamp: 0, seg_id: 1 }, &ctx, &all, &mut ledger).unwrap(),
                Some(p) => extend_pcb(&p, trust, &ctx, &all, &mut ledger).unwrap(),
            });
        }
        pcb.unwrap()
    }

    fn trust(ns: &[u64]) -> TrustStore {
        let mut t = TrustStore::new();
        ns.iter().for_each(|n| t.insert(key(*n).public()));
        t
    }

    fn announce(pairs: &[(u16, u16)], idx: u16, pid: u32) -> PolicyMaps {
        let mut m = PolicyMaps::default();
        for (a, b) in pairs {
            m.imap.insert(IfIpPair::interfaces(*a, *b), BTreeSet::from([PolicyIndex(idx)]));
        }
        m.dmap.insert(PolicyIndex(idx), PolicyId::global(pid));
        m
    }

    fn none() -> PolicyMaps {
        PolicyMaps::default()
    }

    #[test]
    fn three_segment_join() {
        let t = trust(&[1, 2, 3, 4, 5, 6]);
        // up: 1 -> 2 -> 3 (source is 3), core: 1 -> 4, down: 4 -> 5 -> 6
        let up = beacon(&[(1, 0, 10), (2, 20, 21), (3, 30, 0)].map(|(a, b, c)| (a, b, c, none())), &t);
        let core = beacon(&[(1, 0, 11), (4, 40, 0)].map(|(a, b, c)| (a, b, c, none())), &t);
        let down = beacon(&[(4, 0, 41), (5, 50, 51), (6, 60, 0)].map(|(a, b, c)| (a, b, c, none())), &t);
        let p = combine_segments(Some(&up), Some(&core), Some(&down)).unwrap();
        assert_eq!(p.ases(), [3, 2, 1, 4, 5, 6].map(ia));
        let ifs: Vec<_> = p.hops.iter().map(|h| (h.ingress, h.egress)).collect();
        assert_eq!(ifs, [(0, 30), (21, 20), (10, 11), (40, 41), (50, 51), (60, 0)]);
        // Core beacon in the other direction works too.
        let core_rev = beacon(&[(4, 0, 40), (1, 11, 0)].map(|(a, b, c)| (a, b, c, none())), &t);
        let p2 = combine_segments(Some(&up), Some(&core_rev), Some(&down)).unwrap();
        assert_eq!(p2.ases(), p.ases());
        assert_eq!(p2.hops[2].egress, 11);
    }

    #[test]
    fn shared_core_and_mismatch() {
        let t = trust(&[1, 2, 3, 4]);
        let up = beacon(&[(1, 0, 10), (2, 20, 0)].map(|(a, b, c)| (a, b, c, none())), &t);
        let down = beacon(&[(1, 0, 11), (3, 30, 0)].map(|(a, b, c)| (a, b, c, none())), &t);
        let p = combine_segments(Some(&up), None, Some(&down)).unwrap();
        assert_eq!(p.ases(), [2, 1, 3].map(ia));
        assert_eq!(p.hops[1].ingress, 10);
        assert_eq!(p.hops[1].egress, 11);
        let other = beacon(&[(4, 0, 1), (3, 30, 0)].map(|(a, b, c)| (a, b, c, none())), &t);
        assert_eq!(combine_segments(Some(&up), None, Some(&other)), Err(CombineError::JoinMismatch));
        assert_eq!(combine_segments(None, None, None), Err(CombineError::Empty));
    }

    struct Fixed(BTreeMap<PolicyId, Policy>);

    impl PolicyResolver for Fixed {
        fn resolve(&self, id: PolicyId) -> Result<Policy, ResolveError> {
            self.0.get(&id).cloned().ok_or(ResolveError::Unavailable(id))
        }
    }

    fn resolver() -> Fixed {
        let mut m = BTreeMap::new();
        m.insert(PolicyId::global(1), parse_policy("const m: M = 9\nmanu(r) = m").unwrap());
        m.insert(PolicyId::global(2), parse_policy("const m: M = 8\nmanu(r) = m").unwrap());
        Fixed(m)
    }

    fn pref() -> Policy {
        parse_policy("const m: M = 9\nmanu(r) = m").unwrap()
    }

    fn path_with(maps: [PolicyMaps; 3]) -> EndToEndPath {
        let t = trust(&[1, 2, 3]);
        let [a, b, c] = maps;
        let seg = beacon(&[(1, 0, 1, a), (2, 1, 2, b), (3, 1, 0, c)], &t);
        combine_segments(None, None, Some(&seg)).unwrap()
    }

    #[test]
    fn verdicts_and_ranking() {
        let trusted: BTreeSet<_> = [1, 2, 3].map(ia).into();
        let opts = FilterOptions::default();
        let good = path_with([none(), announce(&[(1, 2)], 4, 1), announce(&[(1, 0)], 5, 1)]);
        let r = filter_paths(core::slice::from_ref(&good), &pref(), &trusted, &resolver(), &opts);
        assert_eq!(
            r[0].verdicts,
            [
                HopVerdict::NonCompliant,
                HopVerdict::Compliant(PolicyIndex(4)),
                HopVerdict::Compliant(PolicyIndex(5))
            ]
        );
        assert_eq!(r[0].indices(), [PolicyIndex(4), PolicyIndex(5)]);

        // One AS announces only a non-matching policy.
        let partial = path_with([none(), announce(&[(1, 2)], 4, 2), announce(&[(1, 0)], 5, 1)]);
        let r = filter_paths(&[partial.clone(), good.clone()], &pref(), &trusted, &resolver(), &opts);
        assert_eq!(r[0].path, good);
        assert_eq!(r[1].verdicts[1], HopVerdict::NonCompliant);

        // Untrusted beats nothing.
        let fewer: BTreeSet<_> = [1, 3].map(ia).into();
        let r = filter_paths(core::slice::from_ref(&good), &pref(), &fewer, &resolver(), &opts);
        assert_eq!(r[0].verdicts[1], HopVerdict::Untrusted);

        // Unresolvable announcements raise the warning flag.
        let unknown = path_with([none(), announce(&[(1, 2)], 4, 77), none()]);
        let r = filter_paths(&[unknown], &pref(), &trusted, &resolver(), &opts);
        assert_eq!(r[0].verdicts[1], HopVerdict::NoAnnouncement { warning: true });
    }

    #[test]
    fn ip_range_entries_at_path_ends() {
        use crate::control_plane::maps::IpPrefix;
        let pfx = IpPrefix::new(HostAddr([10, 0, 0, 0]), 8).unwrap();
        let mut last = PolicyMaps::default();
        last.imap.insert(
            IfIpPair::new(Endpoint::If(1), Endpoint::Ip(pfx)).unwrap(),
            BTreeSet::from([PolicyIndex(6)]),
        );
        last.dmap.insert(PolicyIndex(6), PolicyId::global(1));
        let p = path_with([none(), none(), last]);
        let trusted: BTreeSet<_> = [1, 2, 3].map(ia).into();
        let mut opts = FilterOptions { dst_host: Some(HostAddr([10, 1, 2, 3])), ..Default::default() };
        let r = filter_paths(core::slice::from_ref(&p), &pref(), &trusted, &resolver(), &opts);
        assert_eq!(r[0].verdicts[2], HopVerdict::Compliant(PolicyIndex(6)));
        opts.dst_host = Some(HostAddr([11, 0, 0, 1]));
        let r = filter_paths(&[p], &pref(), &trusted, &resolver(), &opts);
        assert_eq!(r[0].verdicts[2], HopVerdict::NonCompliant);
    }

    #[test]
    fn index_assignment() {
        let p = path_with([announce(&[(0, 1)], 1, 1), announce(&[(1, 2)], 3, 1), none()]);
        let choices = BTreeMap::from([(ia(1), PolicyId::global(1)), (ia(2), PolicyId::global(1)), (ia(3), PolicyId::global(1))]);
        assert_eq!(assign_indices(&p, &choices), [PolicyIndex(3), PolicyIndex(0)]);
        assert_eq!(assign_indices(&p, &BTreeMap::new()), [PolicyIndex(0), PolicyIndex(0)]);
    }

    #[test]
    fn registry_resolver_verifies() {
        let ga = SigKeyPair::from_seed(Principal::GlobalAuthority, [9; 32]);
        let mut reg = Registry::new(ga.clone());
        reg.register(Principal::GlobalAuthority, PolicyId::global(1), &pref(), 0).unwrap();
        let mut t = TrustStore::new();
        t.insert(ga.public());
        let regs = [&reg];
        let r = RegistryResolver { registries: &regs, trust: &t };
        assert_eq!(r.resolve(PolicyId::global(1)).unwrap(), pref());
        assert!(matches!(r.resolve(PolicyId::global(2)), Err(ResolveError::Registry(RegistryError::NotFound(_)))));
        assert_eq!(r.resolve(PolicyId::local(ia(1), 1)), Err(ResolveError::Unavailable(PolicyId::local(ia(1), 1))));
        let empty = TrustStore::new();
        let r = RegistryResolver { registries: &regs, trust: &empty };
        assert!(r.resolve(PolicyId::global(1)).is_err());
    }
}
