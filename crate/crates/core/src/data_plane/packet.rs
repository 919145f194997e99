//! Packet format and source-side construction.
//!
//! Wire layout, big-endian:
//!
//! ```text
//! common   : ts(8) src_as(8) src_host(4) dst_as(8) dst_host(4) n(1) cur(1)
//! hop i    : as(8) ingress(2) egress(2) sigma(16)          x n
//! auth i   : enc_index(2) hvf(4)                           x n
//! dvf      : 4
//! payload  : rest of the packet
//! ```
//!
//! Per hop, with `K_i` the key of hop AS `i` for the source host:
//!
//! ```text
//! enc_index_i = index_i ^ AES_{K_i}(ts)[0..2]
//! mac_i       = PRF_{K_i}(ts || src_as || src_host || sigma_i || enc_index_i)
//! hvf_i       = mac_i[0..4], replaced by mac_i[4..8] after the hop
//! dvf         = PRF_{K_hosthost}(ts || digest16(payload))[0..4]
//! ```

use alloc::vec::Vec;

use thiserror::Error;

use crate::addr::{AsId, HostAddr};
use crate::control_plane::{EndToEndPath, InterfaceId, PolicyIndex};
use crate::crypto::{digest16, keystream, prf, SymKey};

pub const COMMON_LEN: usize = 34;
pub const HOP_FIELD_LEN: usize = 28;
pub const HOP_AUTH_LEN: usize = 6;
pub const DVF_LEN: usize = 4;
pub const HVF_LEN: usize = 4;
const HVF_INPUT_LEN: usize = 38;

/// Header bytes for `n` hops. Independent of indices and payload.
pub const fn header_len(n: usize) -> usize {
    COMMON_LEN + n * (HOP_FIELD_LEN + HOP_AUTH_LEN) + DVF_LEN
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HopField {
    pub as_id: AsId,
    pub ingress: InterfaceId,
    pub egress: InterfaceId,
    pub sigma: [u8; 16],
}

impl HopField {
    pub fn from_path(path: &EndToEndPath) -> Vec<HopField> {
        path.hops
            .iter()
            .map(|h| HopField { as_id: h.as_id, ingress: h.ingress, egress: h.egress, sigma: h.sigma })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HopAuth {
    pub enc_index: [u8; 2],
    pub hvf: [u8; HVF_LEN],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    /// Nanoseconds; unique and increasing per source host.
    pub ts: u64,
    pub src_as: AsId,
    pub src_host: HostAddr,
    pub dst_as: AsId,
    pub dst_host: HostAddr,
    /// Position of the hop to be processed next.
    pub cur: u8,
    pub hops: Vec<HopField>,
    pub auth: Vec<HopAuth>,
    pub dvf: [u8; DVF_LEN],
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BuildError {
    #[error("no key for hop {0}")]
    MissingKey(usize),
    #[error("{indices} indices for {hops} hops")]
    IndexCountMismatch { hops: usize, indices: usize },
    #[error("path must have between 1 and 255 hops")]
    HopCount,
    #[error("timestamp {0} is not after the previous one")]
    TimestampReused(u64),
    #[error("payload too large")]
    PayloadTooLarge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("malformed packet")]
pub struct MalformedPacket;

impl Packet {
    pub fn header_len(&self) -> usize {
        header_len(self.hops.len())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.header_len() + self.payload.len());
        out.extend_from_slice(&self.ts.to_be_bytes());
        out.extend_from_slice(&self.src_as.to_bytes());
        out.extend_from_slice(&self.src_host.to_bytes());
        out.extend_from_slice(&self.dst_as.to_bytes());
        out.extend_from_slice(&self.dst_host.to_bytes());
        out.push(self.hops.len() as u8);
        out.push(self.cur);
        for h in &self.hops {
            out.extend_from_slice(&h.as_id.to_bytes());
            out.extend_from_slice(&h.ingress.to_be_bytes());
            out.extend_from_slice(&h.egress.to_be_bytes());
            out.extend_from_slice(&h.sigma);
        }
        for a in &self.auth {
            out.extend_from_slice(&a.enc_index);
            out.extend_from_slice(&a.hvf);
        }
        out.extend_from_slice(&self.dvf);
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn decode(b: &[u8]) -> Result<Packet, MalformedPacket> {
        if b.len() < COMMON_LEN {
            return Err(MalformedPacket);
        }
        let n = b[32] as usize;
        if n == 0 || b.len() < header_len(n) {
            return Err(MalformedPacket);
        }
        let arr8 = |at: usize| -> [u8; 8] { b[at..at + 8].try_into().expect("8 bytes") };
        let arr4 = |at: usize| -> [u8; 4] { b[at..at + 4].try_into().expect("4 bytes") };
        let u16_at = |at: usize| u16::from_be_bytes([b[at], b[at + 1]]);
        let hops = (0..n)
            .map(|i| {
                let at = COMMON_LEN + i * HOP_FIELD_LEN;
                HopField {
                    as_id: AsId::from_bytes(arr8(at)),
                    ingress: u16_at(at + 8),
                    egress: u16_at(at + 10),
                    sigma: b[at + 12..at + 28].try_into().expect("16 bytes"),
                }
            })
            .collect();
        let auth_at = COMMON_LEN + n * HOP_FIELD_LEN;
        let auth = (0..n)
            .map(|i| {
                let at = auth_at + i * HOP_AUTH_LEN;
                HopAuth { enc_index: [b[at], b[at + 1]], hvf: arr4(at + 2) }
            })
            .collect();
        let dvf_at = auth_at + n * HOP_AUTH_LEN;
        Ok(Packet {
            ts: u64::from_be_bytes(arr8(0)),
            src_as: AsId::from_bytes(arr8(8)),
            src_host: HostAddr(arr4(16)),
            dst_as: AsId::from_bytes(arr8(20)),
            dst_host: HostAddr(arr4(28)),
            cur: b[33],
            hops,
            auth,
            dvf: arr4(dvf_at),
            payload: b[dvf_at + DVF_LEN..].to_vec(),
        })
    }
}

/// The bytes MACed for one hop.
pub fn hvf_input(ts: u64, src_as: AsId, src_host: HostAddr, sigma: &[u8; 16], enc_index: [u8; 2]) -> [u8; HVF_INPUT_LEN] {
    let mut m = [0u8; HVF_INPUT_LEN];
    m[..8].copy_from_slice(&ts.to_be_bytes());
    m[8..16].copy_from_slice(&src_as.to_bytes());
    m[16..20].copy_from_slice(&src_host.to_bytes());
    m[20..36].copy_from_slice(sigma);
    m[36..].copy_from_slice(&enc_index);
    m
}

/// Full 16-byte MAC; bytes 0..4 are the initial HVF, 4..8 the updated one.
pub fn hop_mac(key: &SymKey, input: &[u8; HVF_INPUT_LEN]) -> [u8; 16] {
    prf(key, input).expect("fixed-size input")
}

pub fn encrypt_index(key: &SymKey, ts: u64, index: PolicyIndex) -> [u8; 2] {
    let ks = keystream(key, ts);
    let b = index.0.to_be_bytes();
    [b[0] ^ ks[0], b[1] ^ ks[1]]
}

pub fn decrypt_index(key: &SymKey, ts: u64, enc: [u8; 2]) -> PolicyIndex {
    let ks = keystream(key, ts);
    PolicyIndex(u16::from_be_bytes([enc[0] ^ ks[0], enc[1] ^ ks[1]]))
}

pub fn compute_dvf(key: &SymKey, ts: u64, payload: &[u8]) -> [u8; DVF_LEN] {
    let mut m = [0u8; 24];
    m[..8].copy_from_slice(&ts.to_be_bytes());
    m[8..].copy_from_slice(&digest16(payload).0);
    let mac = prf(key, &m).expect("fixed-size input");
    [mac[0], mac[1], mac[2], mac[3]]
}

/// What the source keeps to check the confirmation later.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expectation {
    pub ts: u64,
    pub hops: Vec<AsId>,
    /// Updated HVF each hop should leave behind.
    pub updated: Vec<[u8; HVF_LEN]>,
    pub hop_keys: Vec<SymKey>,
    pub dvf_key: SymKey,
}

pub struct PacketSpec<'a> {
    pub ts: u64,
    pub src_as: AsId,
    pub src_host: HostAddr,
    pub dst_as: AsId,
    pub dst_host: HostAddr,
    pub hops: &'a [HopField],
    /// One per hop; the first is always sent as 0.
    pub indices: &'a [PolicyIndex],
    pub payload: &'a [u8],
}

/// `hop_keys[i]` is the key of hop AS `i` for the source host; `dvf_key` is
/// the host-to-host key of the destination host for the source host.
pub fn build_packet(
    spec: &PacketSpec<'_>,
    hop_keys: &[Option<SymKey>],
    dvf_key: &SymKey,
) -> Result<(Packet, Expectation), BuildError> {
    let n = spec.hops.len();
    if n == 0 || n > u8::MAX as usize {
        return Err(BuildError::HopCount);
    }
    if spec.indices.len() != n {
        return Err(BuildError::IndexCountMismatch { hops: n, indices: spec.indices.len() });
    }
    if spec.payload.len() > u32::MAX as usize {
        return Err(BuildError::PayloadTooLarge);
    }
    let mut auth = Vec::with_capacity(n);
    let mut updated = Vec::with_capacity(n);
    let mut keys = Vec::with_capacity(n);
    for (i, hop) in spec.hops.iter().enumerate() {
        let key = hop_keys.get(i).cloned().flatten().ok_or(BuildError::MissingKey(i))?;
        let index = if i == 0 { PolicyIndex::NONE } else { spec.indices[i] };
        let enc_index = encrypt_index(&key, spec.ts, index);
        let mac = hop_mac(&key, &hvf_input(spec.ts, spec.src_as, spec.src_host, &hop.sigma, enc_index));
        auth.push(HopAuth { enc_index, hvf: [mac[0], mac[1], mac[2], mac[3]] });
        updated.push([mac[4], mac[5], mac[6], mac[7]]);
        keys.push(key);
    }
    let packet = Packet {
        ts: spec.ts,
        src_as: spec.src_as,
        src_host: spec.src_host,
        dst_as: spec.dst_as,
        dst_host: spec.dst_host,
        cur: 0,
        hops: spec.hops.to_vec(),
        auth,
        dvf: compute_dvf(dvf_key, spec.ts, spec.payload),
        payload: spec.payload.to_vec(),
    };
    let exp = Expectation {
        ts: spec.ts,
        hops: spec.hops.iter().map(|h| h.as_id).collect(),
        updated,
        hop_keys: keys,
        dvf_key: dvf_key.clone(),
    };
    Ok((packet, exp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn ia(n: u64) -> AsId {
        AsId::new(1, n).unwrap()
    }

    fn spec<'a>(hops: &'a [HopField], indices: &'a [PolicyIndex]) -> PacketSpec<'a> {
        PacketSpec {
            ts: 1_000,
            src_as: ia(1),
            src_host: HostAddr([10, 0, 0, 1]),
            dst_as: ia(3),
            dst_host: HostAddr([10, 0, 0, 2]),
            hops,
            indices,
            payload: b"hello",
        }
    }

    fn hops(n: usize) -> Vec<HopField> {
        (0..n)
            .map(|i| HopField { as_id: ia(i as u64 + 1), ingress: i as u16, egress: i as u16 + 1, sigma: [i as u8; 16] })
            .collect()
    }

    #[test]
    fn zero_index_is_keystream() {
        let k = SymKey::from_bytes([3; 16]);
        let ks = keystream(&k, 77);
        assert_eq!(encrypt_index(&k, 77, PolicyIndex(0)), [ks[0], ks[1]]);
    }

    #[test]
    fn index_round_trip_exhaustive() {
        let k = SymKey::from_bytes([4; 16]);
        for x in 0..=u16::MAX {
            assert_eq!(decrypt_index(&k, 5, encrypt_index(&k, 5, PolicyIndex(x))), PolicyIndex(x));
        }
    }

    #[test]
    fn codec_and_length() {
        let h = hops(3);
        let idx = [PolicyIndex(0), PolicyIndex(4), PolicyIndex(9)];
        let keys: Vec<_> = (0..3).map(|i| Some(SymKey::from_bytes([i; 16]))).collect();
        let (p, exp) = build_packet(&spec(&h, &idx), &keys, &SymKey::from_bytes([7; 16])).unwrap();
        let bytes = p.encode();
        assert_eq!(bytes.len(), header_len(3) + 5);
        assert_eq!(Packet::decode(&bytes).unwrap(), p);
        assert_eq!(exp.updated.len(), 3);
        assert!(Packet::decode(&bytes[..header_len(3) - 1]).is_err());
    }

    #[test]
    fn build_errors() {
        let h = hops(2);
        let keys = vec![Some(SymKey::from_bytes([1; 16])), None];
        let dk = SymKey::from_bytes([0; 16]);
        let idx = [PolicyIndex(0); 2];
        assert_eq!(build_packet(&spec(&h, &idx), &keys, &dk).unwrap_err(), BuildError::MissingKey(1));
        assert_eq!(
            build_packet(&spec(&h, &idx[..1]), &keys, &dk).unwrap_err(),
            BuildError::IndexCountMismatch { hops: 2, indices: 1 }
        );
    }
}
