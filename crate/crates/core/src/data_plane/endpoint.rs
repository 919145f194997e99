//! Destination validation and source-side path confirmation.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use subtle::ConstantTimeEq;
use thiserror::Error;

use super::packet::{build_packet, compute_dvf, BuildError, Expectation, Packet, PacketSpec, HVF_LEN};
use super::router::{control_mac, ControlMessage};
use crate::addr::{AsId, HostAddr};
use crate::crypto::{prf, SymKey};
use crate::drkey::{derive_as_level, derive_host_host, AsSecret};

/// Updated HVFs echoed back by the destination.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Confirmation {
    pub ts: u64,
    pub hvfs: Vec<[u8; HVF_LEN]>,
    pub mac: [u8; 4],
}

fn confirmation_mac(key: &SymKey, ts: u64, hvfs: &[[u8; HVF_LEN]]) -> [u8; 4] {
    let mut m = Vec::with_capacity(8 + hvfs.len() * HVF_LEN);
    m.extend_from_slice(&ts.to_be_bytes());
    hvfs.iter().for_each(|h| m.extend_from_slice(h));
    let mac = prf(key, &m).expect("at most 255 hops");
    [mac[0], mac[1], mac[2], mac[3]]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum DestDrop {
    #[error("packet is not addressed to this host")]
    NotForUs,
    #[error("packet has not traversed every hop")]
    Incomplete,
    #[error("destination validation field mismatch")]
    BadDvf,
}

/// Key the destination host shares with the source host, derived from
/// the destination AS secret.
pub fn dest_key(dst_secret: &AsSecret, dst_host: HostAddr, src_as: AsId, src_host: HostAddr) -> SymKey {
    let as_key = derive_as_level(dst_secret, src_as);
    derive_host_host(&as_key, dst_host, src_host).expect("AS-level key").key
}

pub fn dest_process(dst_secret: &AsSecret, dst_host: HostAddr, pkt: &Packet) -> Result<Confirmation, DestDrop> {
    if pkt.dst_as != dst_secret.owner || pkt.dst_host != dst_host {
        return Err(DestDrop::NotForUs);
    }
    if pkt.cur as usize != pkt.hops.len() {
        return Err(DestDrop::Incomplete);
    }
    let key = dest_key(dst_secret, dst_host, pkt.src_as, pkt.src_host);
    let dvf = compute_dvf(&key, pkt.ts, &pkt.payload);
    if !bool::from(dvf.ct_eq(&pkt.dvf)) {
        return Err(DestDrop::BadDvf);
    }
    let hvfs: Vec<_> = pkt.auth.iter().map(|a| a.hvf).collect();
    let mac = confirmation_mac(&key, pkt.ts, &hvfs);
    Ok(Confirmation { ts: pkt.ts, hvfs, mac })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PathCheck {
    PathValid,
    /// Hop positions whose confirmed HVF does not match.
    PathInvalid(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SourceError {
    #[error("no retained state for timestamp {0}")]
    UnknownTimestamp(u64),
    #[error("confirmation not authenticated by the destination")]
    BadConfirmation,
    #[error("control message invalid")]
    Invalid,
}

/// A sending host: issues timestamps, builds packets and keeps the state
/// needed to check confirmations and control messages.
#[derive(Debug, Clone)]
pub struct SourceHost {
    pub as_id: AsId,
    pub host: HostAddr,
    /// How long per-packet state is kept, in nanoseconds.
    pub retention: u64,
    last_ts: Option<u64>,
    pending: BTreeMap<u64, (u64, Expectation)>,
}

impl SourceHost {
    pub const DEFAULT_RETENTION: u64 = 10_000_000_000;

    pub fn new(as_id: AsId, host: HostAddr) -> Self {
        SourceHost { as_id, host, retention: Self::DEFAULT_RETENTION, last_ts: None, pending: BTreeMap::new() }
    }

    /// Next timestamp at or after `now`, strictly above the previous one.
    pub fn next_ts(&self, now: u64) -> u64 {
        match self.last_ts {
            Some(l) if l >= now => l + 1,
            _ => now,
        }
    }

    /// Builds a packet stamped with `ts` and retains its expectation.
    #[allow(clippy::too_many_arguments)]
    pub fn send(
        &mut self,
        ts: u64,
        dst: (AsId, HostAddr),
        hops: &[super::packet::HopField],
        indices: &[crate::control_plane::PolicyIndex],
        hop_keys: &[Option<SymKey>],
        dvf_key: &SymKey,
        payload: &[u8],
        now: u64,
    ) -> Result<Packet, BuildError> {
        if self.last_ts.is_some_and(|l| ts <= l) {
            return Err(BuildError::TimestampReused(ts));
        }
        let spec = PacketSpec {
            ts,
            src_as: self.as_id,
            src_host: self.host,
            dst_as: dst.0,
            dst_host: dst.1,
            hops,
            indices,
            payload,
        };
        let (pkt, exp) = build_packet(&spec, hop_keys, dvf_key)?;
        self.last_ts = Some(ts);
        self.prune(now);
        self.pending.insert(ts, (now, exp));
        Ok(pkt)
    }

    fn prune(&mut self, now: u64) {
        let r = self.retention;
        self.pending.retain(|_, (sent, _)| sent.saturating_add(r) >= now);
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    fn retained(&mut self, ts: u64, now: u64) -> Option<&Expectation> {
        self.prune(now);
        self.pending.get(&ts).map(|(_, e)| e)
    }

    pub fn validate(&mut self, conf: &Confirmation, now: u64) -> Result<PathCheck, SourceError> {
        let exp = self.retained(conf.ts, now).ok_or(SourceError::UnknownTimestamp(conf.ts))?;
        source_validate(exp, conf)
    }

    pub fn verify_control_message(&mut self, msg: &ControlMessage, now: u64) -> Result<(), SourceError> {
        if msg.src_as != self.as_id || msg.src_host != self.host {
            return Err(SourceError::Invalid);
        }
        let exp = self.retained(msg.ts, now).ok_or(SourceError::Invalid)?;
        verify_control_message(exp, msg)
    }
}

pub fn source_validate(exp: &Expectation, conf: &Confirmation) -> Result<PathCheck, SourceError> {
    if conf.ts != exp.ts {
        return Err(SourceError::UnknownTimestamp(conf.ts));
    }
    let mac = confirmation_mac(&exp.dvf_key, conf.ts, &conf.hvfs);
    if !bool::from(mac.ct_eq(&conf.mac)) || conf.hvfs.len() != exp.updated.len() {
        return Err(SourceError::BadConfirmation);
    }
    let bad: Vec<usize> = exp
        .updated
        .iter()
        .zip(&conf.hvfs)
        .enumerate()
        .filter(|(_, (want, got))| want != got)
        .map(|(i, _)| i)
        .collect();
    Ok(if bad.is_empty() { PathCheck::PathValid } else { PathCheck::PathInvalid(bad) })
}

/// Accepts a control message only from an on-path AS for a retained packet
/// and only with a MAC under that AS's key for this source.
pub fn verify_control_message(exp: &Expectation, msg: &ControlMessage) -> Result<(), SourceError> {
    if msg.ts != exp.ts {
        return Err(SourceError::Invalid);
    }
    let pos = exp.hops.iter().position(|a| *a == msg.as_id).ok_or(SourceError::Invalid)?;
    let want = control_mac(&exp.hop_keys[pos], msg.kind, msg.ts, msg.index, msg.as_id);
    if bool::from(want.ct_eq(&msg.mac)) {
        Ok(())
    } else {
        Err(SourceError::Invalid)
    }
}
