//! Path-segment construction beacons.
//!
//! Each AS entry has a signed body and an unsigned detachable extension
//! carrying the encoded policy maps. The body holds the digest of the
//! extension, so the maps can travel out-of-band and still be checked.
//!
//! ```text
//! info   : timestamp(8) seg_id(2) n(1)
//! body   : as(8) ingress(2) egress(2) valid_from(8) valid_until(8) sigma(16) digest(16)
//! entry  : body signature(64) flags(2) [len(4) maps]
//! ```
//!
//! The signature of entry `i` covers timestamp and seg_id, the bodies and
//! signatures of entries `0..i`, and body `i`. Extensions are never signed
//! directly.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use thiserror::Error;

use super::maps::{decode_maps, encode_maps, InterfaceId, MapsError, PolicyIndex, PolicyMaps};
use crate::addr::AsId;
use crate::crypto::{digest16, verify, Digest16, Principal, PubKey, SigKeyPair, Signature, SIGNATURE_LEN};
use crate::registry::PolicyId;

pub const INFO_LEN: usize = 11;
pub const BODY_LEN: usize = 68;
pub const DIGEST_LEN: usize = 16;
pub const FLAGS_LEN: usize = 2;
/// Bytes a detached entry spends on policy maps: signed digest plus flags.
pub const DETACHED_MARKER_LEN: usize = DIGEST_LEN + FLAGS_LEN;

const FLAG_ATTACHED: u16 = 1;

/// Closed validity window, in nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Validity {
    pub from: u64,
    pub until: u64,
}

impl Validity {
    pub fn contains(&self, t: u64) -> bool {
        self.from <= t && t <= self.until
    }

    pub fn overlaps(&self, other: &Validity) -> bool {
        self.from <= other.until && other.from <= self.until
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentInfo {
    pub timestamp: u64,
    pub seg_id: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EntryBody {
    pub as_id: AsId,
    /// 0 at the originating AS.
    pub ingress: InterfaceId,
    /// 0 at the terminal AS.
    pub egress: InterfaceId,
    pub validity: Validity,
    /// Opaque hop authenticator copied into data-plane hop fields.
    pub sigma: [u8; 16],
    pub digest: Digest16,
}

impl EntryBody {
    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.as_id.to_bytes());
        out.extend_from_slice(&self.ingress.to_be_bytes());
        out.extend_from_slice(&self.egress.to_be_bytes());
        out.extend_from_slice(&self.validity.from.to_be_bytes());
        out.extend_from_slice(&self.validity.until.to_be_bytes());
        out.extend_from_slice(&self.sigma);
        out.extend_from_slice(&self.digest.0);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsEntry {
    pub body: EntryBody,
    pub signature: Signature,
    /// Encoded maps, or `None` once detached.
    pub extension: Option<Vec<u8>>,
}

impl AsEntry {
    pub fn is_detached(&self) -> bool {
        self.extension.is_none()
    }

    /// Decodes the attached maps, if any.
    pub fn maps(&self) -> Option<Result<PolicyMaps, MapsError>> {
        self.extension.as_deref().map(|b| decode_maps(b, self.body.as_id))
    }

    pub fn encoded_len(&self) -> usize {
        BODY_LEN + SIGNATURE_LEN + FLAGS_LEN + self.extension.as_ref().map_or(0, |e| 4 + e.len())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pcb {
    pub info: SegmentInfo,
    pub entries: Vec<AsEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PcbError {
    #[error("signature of hop {0} does not verify")]
    SignatureInvalid(usize),
    #[error("upstream signature of hop {0} does not verify")]
    UpstreamSignatureInvalid(usize),
    #[error("hop {0} is outside its validity window")]
    Expired(usize),
    #[error("extension digest mismatch at hop {0}")]
    DigestMismatch(usize),
    #[error("index {0} announced without a configured intra-AS route")]
    UnsupportedAnnouncement(PolicyIndex),
    #[error("index {index} already maps to {existing} in an overlapping window")]
    InconsistentAnnouncement { index: PolicyIndex, existing: PolicyId },
    #[error("blob count does not match hop count")]
    BlobCount,
    #[error("invalid policy maps: {0}")]
    Maps(#[from] MapsError),
    #[error("malformed PCB encoding")]
    Malformed,
}

impl Pcb {
    /// Bytes signed by hop `i`.
    fn signed_input(&self, i: usize) -> Vec<u8> {
        let mut out = Vec::with_capacity(INFO_LEN + (i + 1) * (BODY_LEN + SIGNATURE_LEN));
        self.write_info(&mut out);
        for e in &self.entries[..i] {
            e.body.write(&mut out);
            out.extend_from_slice(&e.signature.0);
        }
        self.entries[i].body.write(&mut out);
        out
    }

    fn write_info(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.info.timestamp.to_be_bytes());
        out.extend_from_slice(&self.info.seg_id.to_be_bytes());
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn first_as(&self) -> Option<AsId> {
        self.entries.first().map(|e| e.body.as_id)
    }

    pub fn last_as(&self) -> Option<AsId> {
        self.entries.last().map(|e| e.body.as_id)
    }

    pub fn ases(&self) -> impl DoubleEndedIterator<Item = AsId> + '_ {
        self.entries.iter().map(|e| e.body.as_id)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_info(&mut out);
        out.push(self.entries.len() as u8);
        for e in &self.entries {
            e.body.write(&mut out);
            out.extend_from_slice(&e.signature.0);
            match &e.extension {
                None => out.extend_from_slice(&0u16.to_be_bytes()),
                Some(ext) => {
                    out.extend_from_slice(&FLAG_ATTACHED.to_be_bytes());
                    out.extend_from_slice(&(ext.len() as u32).to_be_bytes());
                    out.extend_from_slice(ext);
                }
            }
        }
        out
    }

    pub fn decode(b: &[u8]) -> Result<Pcb, PcbError> {
        let mut r = Cursor { b };
        let info = SegmentInfo { timestamp: r.u64()?, seg_id: r.u16()? };
        let n = r.take(1)?[0] as usize;
        let mut entries = Vec::with_capacity(n);
        for _ in 0..n {
            let body = EntryBody {
                as_id: AsId::from_bytes(r.array()?),
                ingress: r.u16()?,
                egress: r.u16()?,
                validity: Validity { from: r.u64()?, until: r.u64()? },
                sigma: r.array()?,
                digest: Digest16(r.array()?),
            };
            let signature = Signature(r.array()?);
            let extension = match r.u16()? {
                0 => None,
                FLAG_ATTACHED => {
                    let len = r.u32()? as usize;
                    Some(r.take(len)?.to_vec())
                }
                _ => return Err(PcbError::Malformed),
            };
            entries.push(AsEntry { body, signature, extension });
        }
        if !r.b.is_empty() {
            return Err(PcbError::Malformed);
        }
        Ok(Pcb { info, entries })
    }

    /// Checks signatures of hops `0..upto`.
    fn check_signatures(&self, trust: &TrustStore, upto: usize) -> Result<(), usize> {
        for i in 0..upto {
            let e = &self.entries[i];
            let ok = trust
                .get(Principal::As(e.body.as_id))
                .is_some_and(|pk| verify(pk, &self.signed_input(i), &e.signature));
            if !ok {
                return Err(i);
            }
        }
        Ok(())
    }
}

struct Cursor<'a> {
    b: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], PcbError> {
        if self.b.len() < n {
            return Err(PcbError::Malformed);
        }
        let (h, t) = self.b.split_at(n);
        self.b = t;
        Ok(h)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], PcbError> {
        Ok(self.take(N)?.try_into().expect("exact length"))
    }

    fn u16(&mut self) -> Result<u16, PcbError> {
        self.array().map(u16::from_be_bytes)
    }

    fn u32(&mut self) -> Result<u32, PcbError> {
        self.array().map(u32::from_be_bytes)
    }

    fn u64(&mut self) -> Result<u64, PcbError> {
        self.array().map(u64::from_be_bytes)
    }
}

/// Certified AS public keys.
#[derive(Debug, Clone, Default)]
pub struct TrustStore {
    keys: BTreeMap<Principal, PubKey>,
}

impl TrustStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, pk: PubKey) {
        self.keys.insert(pk.owner, pk);
    }

    pub fn get(&self, who: Principal) -> Option<&PubKey> {
        self.keys.get(&who)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

/// Remembers which policy each index announced during which window, so an
/// AS never assigns one index two meanings at the same time.
#[derive(Debug, Clone, Default)]
pub struct AnnouncementLedger {
    seen: BTreeMap<(AsId, PolicyIndex), Vec<(Validity, PolicyId)>>,
}

impl AnnouncementLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn check(&self, as_id: AsId, maps: &PolicyMaps, window: Validity) -> Result<(), PcbError> {
        for (idx, pid) in &maps.dmap {
            if let Some(prior) = self.seen.get(&(as_id, *idx)) {
                if let Some((_, existing)) =
                    prior.iter().find(|(w, p)| p != pid && w.overlaps(&window))
                {
                    return Err(PcbError::InconsistentAnnouncement { index: *idx, existing: *existing });
                }
            }
        }
        Ok(())
    }

    pub fn record(&mut self, as_id: AsId, maps: &PolicyMaps, window: Validity) {
        for (idx, pid) in &maps.dmap {
            let v = self.seen.entry((as_id, *idx)).or_default();
            if !v.contains(&(window, *pid)) {
                v.push((window, *pid));
            }
        }
    }

    /// Forgets windows that ended before `now`.
    pub fn prune(&mut self, now: u64) {
        self.seen.retain(|_, v| {
            v.retain(|(w, _)| w.until >= now);
            !v.is_empty()
        });
    }
}

/// What an AS contributes when it adds its entry.
#[derive(Debug, Clone)]
pub struct AsContext<'a> {
    pub as_id: AsId,
    pub key: &'a SigKeyPair,
    pub maps: &'a PolicyMaps,
    pub ingress: InterfaceId,
    pub egress: InterfaceId,
    pub validity: Validity,
    pub sigma: [u8; 16],
}

/// Decides whether an index is backed by a configured intra-AS route.
pub trait RouteCheck {
    fn supports(&self, index: PolicyIndex) -> bool;
}

impl<F: Fn(PolicyIndex) -> bool> RouteCheck for F {
    fn supports(&self, index: PolicyIndex) -> bool {
        self(index)
    }
}

fn make_entry(pcb: &mut Pcb, ctx: &AsContext<'_>) -> Result<(), PcbError> {
    ctx.maps.validate(ctx.as_id)?;
    let ext = encode_maps(ctx.maps)?;
    let body = EntryBody {
        as_id: ctx.as_id,
        ingress: ctx.ingress,
        egress: ctx.egress,
        validity: ctx.validity,
        sigma: ctx.sigma,
        digest: digest16(&ext),
    };
    if pcb.entries.len() >= u8::MAX as usize {
        return Err(PcbError::Malformed);
    }
    pcb.entries.push(AsEntry { body, signature: Signature([0; SIGNATURE_LEN]), extension: Some(ext) });
    let i = pcb.entries.len() - 1;
    let sig = ctx.key.sign(&pcb.signed_input(i));
    pcb.entries[i].signature = sig;
    Ok(())
}

fn check_announcement(
    ctx: &AsContext<'_>,
    routes: &dyn RouteCheck,
    ledger: &AnnouncementLedger,
) -> Result<(), PcbError> {
    if let Some(idx) = ctx.maps.dmap.keys().find(|i| !routes.supports(**i)) {
        return Err(PcbError::UnsupportedAnnouncement(*idx));
    }
    ledger.check(ctx.as_id, ctx.maps, ctx.validity)
}

/// Starts a beacon at a core AS (`ctx.ingress` should be 0).
pub fn originate_pcb(
    info: SegmentInfo,
    ctx: &AsContext<'_>,
    routes: &dyn RouteCheck,
    ledger: &mut AnnouncementLedger,
) -> Result<Pcb, PcbError> {
    check_announcement(ctx, routes, ledger)?;
    let mut pcb = Pcb { info, entries: Vec::new() };
    make_entry(&mut pcb, ctx)?;
    ledger.record(ctx.as_id, ctx.maps, ctx.validity);
    Ok(pcb)
}

pub fn extend_pcb(
    pcb: &Pcb,
    trust: &TrustStore,
    ctx: &AsContext<'_>,
    routes: &dyn RouteCheck,
    ledger: &mut AnnouncementLedger,
) -> Result<Pcb, PcbError> {
    pcb.check_signatures(trust, pcb.entries.len())
        .map_err(PcbError::UpstreamSignatureInvalid)?;
    check_announcement(ctx, routes, ledger)?;
    let mut out = pcb.clone();
    make_entry(&mut out, ctx)?;
    ledger.record(ctx.as_id, ctx.maps, ctx.validity);
    Ok(out)
}

pub fn verify_pcb(pcb: &Pcb, trust: &TrustStore, now: u64) -> Result<(), PcbError> {
    if pcb.is_empty() {
        return Err(PcbError::Malformed);
    }
    pcb.check_signatures(trust, pcb.entries.len())
        .map_err(PcbError::SignatureInvalid)?;
    for (i, e) in pcb.entries.iter().enumerate() {
        if !e.body.validity.contains(now) {
            return Err(PcbError::Expired(i));
        }
        if let Some(ext) = &e.extension {
            if digest16(ext) != e.body.digest {
                return Err(PcbError::DigestMismatch(i));
            }
            decode_maps(ext, e.body.as_id)?.validate(e.body.as_id)?;
        }
    }
    Ok(())
}

/// Strips every extension; the blobs come back in hop order.
pub fn detach_extension(pcb: &Pcb) -> (Pcb, Vec<Option<Vec<u8>>>) {
    let mut out = pcb.clone();
    let blobs = out.entries.iter_mut().map(|e| e.extension.take()).collect();
    (out, blobs)
}

/// Puts blobs back, checking each against its signed digest.
pub fn reattach_extension(pcb: &Pcb, blobs: &[Option<Vec<u8>>]) -> Result<Pcb, PcbError> {
    if blobs.len() != pcb.entries.len() {
        return Err(PcbError::BlobCount);
    }
    let mut out = pcb.clone();
    for (i, (e, blob)) in out.entries.iter_mut().zip(blobs).enumerate() {
        if let Some(b) = blob {
            if digest16(b) != e.body.digest {
                return Err(PcbError::DigestMismatch(i));
            }
            e.extension = Some(b.clone());
        }
    }
    Ok(out)
}
