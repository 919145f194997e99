//! Policy maps announced in beacon extensions and their wire layout.
//!
//! `imap` says which policy indices an interface pair (or an interface and
//! an address range) supports; `dmap` resolves each index to a policy id.
//!
//! Encoding, all integers big-endian. Each section starts with a 2-byte
//! entry count:
//!
//! ```text
//! IF->IF  : in(2) eg(2) n(1) idx(2)*n
//! IF->IP  : if(2) addr(8) prefix(1) n(1) idx(2)*n
//! IP->IF  : addr(8) prefix(1) if(2) n(1) idx(2)*n
//! D       : idx(2) scope(1) pid(4) reserved(1)
//! ```

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::addr::{AsId, HostAddr};
use crate::registry::{PolicyId, Scope};

/// Per-AS policy index; 0 means "no preference" and is never announced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct PolicyIndex(pub u16);

impl PolicyIndex {
    pub const NONE: PolicyIndex = PolicyIndex(0);

    pub fn is_none(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for PolicyIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

pub type InterfaceId = u16;

/// IPv4 range carried in an 8-byte address field plus prefix length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IpPrefix {
    pub addr: HostAddr,
    pub len: u8,
}

impl IpPrefix {
    pub fn new(addr: HostAddr, len: u8) -> Option<Self> {
        (len <= 32).then_some(IpPrefix { addr, len })
    }

    pub fn contains(&self, host: HostAddr) -> bool {
        if self.len == 0 {
            return true;
        }
        let mask = u32::MAX << (32 - self.len as u32);
        (self.addr.to_u32() & mask) == (host.to_u32() & mask)
    }

    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&[0; 4]);
        out.extend_from_slice(&self.addr.to_bytes());
        out.push(self.len);
    }
}

impl fmt::Display for IpPrefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.addr, self.len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Endpoint {
    If(InterfaceId),
    Ip(IpPrefix),
}

/// Ordered (from, to) traversal key. At most one side is an address range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IfIpPair {
    from: Endpoint,
    to: Endpoint,
}

impl IfIpPair {
    pub fn new(from: Endpoint, to: Endpoint) -> Result<Self, MapsError> {
        if matches!((from, to), (Endpoint::Ip(_), Endpoint::Ip(_))) {
            return Err(MapsError::IpToIp);
        }
        Ok(IfIpPair { from, to })
    }

    pub fn interfaces(ingress: InterfaceId, egress: InterfaceId) -> Self {
        IfIpPair { from: Endpoint::If(ingress), to: Endpoint::If(egress) }
    }

    pub fn from(&self) -> Endpoint {
        self.from
    }

    pub fn to(&self) -> Endpoint {
        self.to
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MapsError {
    #[error("address-range to address-range pairs are not allowed")]
    IpToIp,
    #[error("{0} indices in one entry exceed the 255 limit")]
    TooManyIndices(usize),
    #[error("index 0 cannot be announced")]
    ZeroIndex,
    #[error("index {0} has no policy id")]
    MissingPolicyId(PolicyIndex),
    #[error("local policy of another AS announced at index {0}")]
    ForeignLocalPolicy(PolicyIndex),
    #[error("truncated or malformed maps encoding")]
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PolicyMaps {
    pub imap: BTreeMap<IfIpPair, BTreeSet<PolicyIndex>>,
    pub dmap: BTreeMap<PolicyIndex, PolicyId>,
}

impl PolicyMaps {
    /// Checks the map invariants for maps announced by `owner`.
    pub fn validate(&self, owner: AsId) -> Result<(), MapsError> {
        for (idx, pid) in &self.dmap {
            if idx.is_none() {
                return Err(MapsError::ZeroIndex);
            }
            if matches!(pid.scope, Scope::Local(ia) if ia != owner) {
                return Err(MapsError::ForeignLocalPolicy(*idx));
            }
        }
        for set in self.imap.values() {
            for idx in set {
                if idx.is_none() {
                    return Err(MapsError::ZeroIndex);
                }
                if !self.dmap.contains_key(idx) {
                    return Err(MapsError::MissingPolicyId(*idx));
                }
            }
        }
        Ok(())
    }

    /// Indices announced for a traversal key.
    pub fn indices(&self, key: &IfIpPair) -> Option<&BTreeSet<PolicyIndex>> {
        self.imap.get(key)
    }

    /// Smallest index that resolves to `pid`.
    pub fn index_of(&self, pid: PolicyId) -> Option<PolicyIndex> {
        self.dmap.iter().find(|(_, p)| **p == pid).map(|(i, _)| *i)
    }
}

/// Byte sizes of the encoded sections, without their count headers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SectionSizes {
    pub if_if: usize,
    pub if_ip: usize,
    pub ip_if: usize,
    pub d: usize,
    /// Count headers, 2 bytes per section.
    pub headers: usize,
}

impl SectionSizes {
    pub fn total(&self) -> usize {
        self.if_if + self.if_ip + self.ip_if + self.d + self.headers
    }
}

fn put_indices(out: &mut Vec<u8>, set: &BTreeSet<PolicyIndex>) -> Result<(), MapsError> {
    let n = u8::try_from(set.len()).map_err(|_| MapsError::TooManyIndices(set.len()))?;
    out.push(n);
    for idx in set {
        out.extend_from_slice(&idx.0.to_be_bytes());
    }
    Ok(())
}

pub fn encode_maps(maps: &PolicyMaps) -> Result<Vec<u8>, MapsError> {
    encode_maps_measured(maps).map(|(b, _)| b)
}

/// Encodes and reports how many bytes each section occupies.
pub fn encode_maps_measured(maps: &PolicyMaps) -> Result<(Vec<u8>, SectionSizes), MapsError> {
    let mut out = Vec::new();
    let mut sizes = SectionSizes::default();
    let section = |out: &mut Vec<u8>,
                       pick: &dyn Fn(&IfIpPair) -> bool,
                       write_key: &dyn Fn(&IfIpPair, &mut Vec<u8>)|
     -> Result<usize, MapsError> {
        let entries: Vec<_> = maps.imap.iter().filter(|(k, _)| pick(k)).collect();
        let count = u16::try_from(entries.len()).map_err(|_| MapsError::Malformed)?;
        out.extend_from_slice(&count.to_be_bytes());
        let start = out.len();
        for (k, set) in entries {
            write_key(k, out);
            put_indices(out, set)?;
        }
        Ok(out.len() - start)
    };
    sizes.if_if = section(
        &mut out,
        &|k| matches!((k.from, k.to), (Endpoint::If(_), Endpoint::If(_))),
        &|k, out| {
            if let (Endpoint::If(a), Endpoint::If(b)) = (k.from, k.to) {
                out.extend_from_slice(&a.to_be_bytes());
                out.extend_from_slice(&b.to_be_bytes());
            }
        },
    )?;
    sizes.if_ip = section(
        &mut out,
        &|k| matches!((k.from, k.to), (Endpoint::If(_), Endpoint::Ip(_))),
        &|k, out| {
            if let (Endpoint::If(a), Endpoint::Ip(p)) = (k.from, k.to) {
                out.extend_from_slice(&a.to_be_bytes());
                p.write(out);
            }
        },
    )?;
    sizes.ip_if = section(
        &mut out,
        &|k| matches!((k.from, k.to), (Endpoint::Ip(_), Endpoint::If(_))),
        &|k, out| {
            if let (Endpoint::Ip(p), Endpoint::If(b)) = (k.from, k.to) {
                p.write(out);
                out.extend_from_slice(&b.to_be_bytes());
            }
        },
    )?;
    let count = u16::try_from(maps.dmap.len()).map_err(|_| MapsError::Malformed)?;
    out.extend_from_slice(&count.to_be_bytes());
    let start = out.len();
    for (idx, pid) in &maps.dmap {
        out.extend_from_slice(&idx.0.to_be_bytes());
        out.push(match pid.scope {
            Scope::Global => 0,
            Scope::Local(_) => 1,
        });
        out.extend_from_slice(&pid.pid.to_be_bytes());
        out.push(0);
    }
    sizes.d = out.len() - start;
    sizes.headers = 8;
    Ok((out, sizes))
}

struct Reader<'a> {
    b: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], MapsError> {
        if self.b.len() < n {
            return Err(MapsError::Malformed);
        }
        let (head, rest) = self.b.split_at(n);
        self.b = rest;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, MapsError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, MapsError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, MapsError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn prefix(&mut self) -> Result<IpPrefix, MapsError> {
        let a = self.take(8)?;
        if a[..4] != [0; 4] {
            return Err(MapsError::Malformed);
        }
        let addr = HostAddr([a[4], a[5], a[6], a[7]]);
        IpPrefix::new(addr, self.u8()?).ok_or(MapsError::Malformed)
    }

    fn indices(&mut self) -> Result<BTreeSet<PolicyIndex>, MapsError> {
        let n = self.u8()? as usize;
        let mut set = BTreeSet::new();
        for _ in 0..n {
            if !set.insert(PolicyIndex(self.u16()?)) {
                return Err(MapsError::Malformed);
            }
        }
        Ok(set)
    }
}

/// Exact inverse of [`encode_maps`]; local policy ids are attributed to
/// `owner`, the announcing AS.
pub fn decode_maps(bytes: &[u8], owner: AsId) -> Result<PolicyMaps, MapsError> {
    let mut r = Reader { b: bytes };
    let mut maps = PolicyMaps::default();
    // Keys must arrive in encoder order within each section so that
    // decoding is injective.
    let insert = |maps: &mut PolicyMaps, last: &mut Option<IfIpPair>, k: IfIpPair, set| {
        if last.is_some_and(|l| l >= k) {
            return Err(MapsError::Malformed);
        }
        *last = Some(k);
        maps.imap.insert(k, set);
        Ok(())
    };
    let mut last = None;
    for _ in 0..r.u16()? {
        let k = IfIpPair::interfaces(r.u16()?, r.u16()?);
        let set = r.indices()?;
        insert(&mut maps, &mut last, k, set)?;
    }
    let mut last = None;
    for _ in 0..r.u16()? {
        let a = r.u16()?;
        let p = r.prefix()?;
        let set = r.indices()?;
        insert(&mut maps, &mut last, IfIpPair::new(Endpoint::If(a), Endpoint::Ip(p))?, set)?;
    }
    let mut last = None;
    for _ in 0..r.u16()? {
        let p = r.prefix()?;
        let b = r.u16()?;
        let set = r.indices()?;
        insert(&mut maps, &mut last, IfIpPair::new(Endpoint::Ip(p), Endpoint::If(b))?, set)?;
    }
    let mut prev = None;
    for _ in 0..r.u16()? {
        let idx = PolicyIndex(r.u16()?);
        let scope = match r.u8()? {
            0 => Scope::Global,
            1 => Scope::Local(owner),
            _ => return Err(MapsError::Malformed),
        };
        let pid = r.u32()?;
        if r.u8()? != 0 || prev.is_some_and(|p| p >= idx) {
            return Err(MapsError::Malformed);
        }
        prev = Some(idx);
        maps.dmap.insert(idx, PolicyId { scope, pid });
    }
    if !r.b.is_empty() {
        return Err(MapsError::Malformed);
    }
    Ok(maps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn owner() -> AsId {
        AsId::new(1, 0x110).unwrap()
    }

    fn indices(n: u16) -> BTreeSet<PolicyIndex> {
        (1..=n).map(PolicyIndex).collect()
    }

    #[test]
    fn interleaved_sections_round_trip() {
        let pfx = IpPrefix::new(HostAddr([10, 0, 0, 0]), 24).unwrap();
        let mut m = PolicyMaps::default();
        for a in 1..=3u16 {
            for b in 1..=3u16 {
                if a != b {
                    m.imap.insert(IfIpPair::interfaces(a, b), indices(2));
                }
            }
            m.imap.insert(IfIpPair::new(Endpoint::If(a), Endpoint::Ip(pfx)).unwrap(), indices(1));
            m.imap.insert(IfIpPair::new(Endpoint::Ip(pfx), Endpoint::If(a)).unwrap(), indices(1));
        }
        let b = encode_maps(&m).unwrap();
        assert_eq!(decode_maps(&b, owner()).unwrap(), m);
    }

    #[test]
    fn empty_maps_are_headers_only() {
        let (b, s) = encode_maps_measured(&PolicyMaps::default()).unwrap();
        assert_eq!(b.len(), 8);
        assert_eq!((s.if_if, s.if_ip, s.ip_if, s.d), (0, 0, 0, 0));
        assert_eq!(decode_maps(&b, owner()).unwrap(), PolicyMaps::default());
    }

    #[test]
    fn entry_sizes() {
        let mut m = PolicyMaps::default();
        m.imap.insert(IfIpPair::interfaces(1, 2), indices(5));
        let pfx = IpPrefix::new(HostAddr([10, 0, 0, 0]), 8).unwrap();
        m.imap.insert(IfIpPair::new(Endpoint::If(1), Endpoint::Ip(pfx)).unwrap(), indices(5));
        m.imap.insert(IfIpPair::new(Endpoint::Ip(pfx), Endpoint::If(1)).unwrap(), indices(5));
        for i in 1..=5 {
            m.dmap.insert(PolicyIndex(i), PolicyId::global(i as u32));
        }
        let (b, s) = encode_maps_measured(&m).unwrap();
        assert_eq!((s.if_if, s.if_ip, s.ip_if, s.d), (15, 22, 22, 40));
        assert_eq!(b.len(), s.total());
        assert_eq!(decode_maps(&b, owner()).unwrap(), m);
    }

    #[test]
    fn too_many_indices() {
        let mut m = PolicyMaps::default();
        m.imap.insert(IfIpPair::interfaces(1, 2), indices(256));
        assert_eq!(encode_maps(&m), Err(MapsError::TooManyIndices(256)));
    }

    #[test]
    fn ip_to_ip_rejected() {
        let p = IpPrefix::new(HostAddr([1, 2, 3, 4]), 32).unwrap();
        assert_eq!(IfIpPair::new(Endpoint::Ip(p), Endpoint::Ip(p)), Err(MapsError::IpToIp));
    }

    #[test]
    fn validation() {
        let mut m = PolicyMaps::default();
        m.imap.insert(IfIpPair::interfaces(1, 2), indices(1));
        assert_eq!(m.validate(owner()), Err(MapsError::MissingPolicyId(PolicyIndex(1))));
        m.dmap.insert(PolicyIndex(1), PolicyId::local(AsId::new(1, 5).unwrap(), 1));
        assert_eq!(m.validate(owner()), Err(MapsError::ForeignLocalPolicy(PolicyIndex(1))));
        m.dmap.insert(PolicyIndex(1), PolicyId::local(owner(), 1));
        assert_eq!(m.validate(owner()), Ok(()));
        m.dmap.insert(PolicyIndex(0), PolicyId::global(1));
        assert_eq!(m.validate(owner()), Err(MapsError::ZeroIndex));
    }

    #[test]
    fn prefix_membership() {
        let p = IpPrefix::new(HostAddr([10, 1, 0, 0]), 16).unwrap();
        assert!(p.contains(HostAddr([10, 1, 200, 3])));
        assert!(!p.contains(HostAddr([10, 2, 0, 1])));
        assert!(IpPrefix::new(HostAddr([0; 4]), 0).unwrap().contains(HostAddr([9, 9, 9, 9])));
        assert!(IpPrefix::new(HostAddr([0; 4]), 33).is_none());
    }
}
