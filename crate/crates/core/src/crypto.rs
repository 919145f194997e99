//! Symmetric and asymmetric primitives shared by the key hierarchy, the
//! beacon extensions and the packet pipeline.
//!
//! A single AES-128 CBC-MAC (0x80 padding) serves as both PRF and MAC.
//! The one-block keystream is AES applied to the padded packet timestamp.

use core::fmt;

use aes::cipher::{generic_array::GenericArray, BlockEncrypt, KeyInit};
use aes::Aes128;
use ed25519_dalek::{Signer, Verifier};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::addr::AsId;

pub const BLOCK_LEN: usize = 16;
/// Upper bound on PRF input length.
pub const MAX_PRF_INPUT: usize = 1 << 16;
pub const SIGNATURE_LEN: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("PRF input of {0} bytes exceeds the {MAX_PRF_INPUT}-byte limit")]
    InputTooLong(usize),
}

/// 16-byte symmetric key. `Debug` never prints the key material.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SymKey([u8; 16]);

impl SymKey {
    pub const fn from_bytes(bytes: [u8; 16]) -> Self {
        SymKey(bytes)
    }

    /// Raw key bytes, for feeding other primitives. Not for serialization.
    pub fn expose(&self) -> &[u8; 16] {
        &self.0
    }

    fn cipher(&self) -> Aes128 {
        Aes128::new(GenericArray::from_slice(&self.0))
    }
}

impl fmt::Debug for SymKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SymKey(..)")
    }
}

impl From<[u8; 16]> for SymKey {
    fn from(b: [u8; 16]) -> Self {
        SymKey(b)
    }
}

/// Keyed PRF / MAC: CBC-MAC over `data` padded with 0x80 then zeros.
pub fn prf(key: &SymKey, data: &[u8]) -> Result<[u8; 16], CryptoError> {
    if data.len() > MAX_PRF_INPUT {
        return Err(CryptoError::InputTooLong(data.len()));
    }
    let cipher = key.cipher();
    let mut state = GenericArray::from([0u8; BLOCK_LEN]);
    let mut chunks = data.chunks_exact(BLOCK_LEN);
    for block in &mut chunks {
        for (s, b) in state.iter_mut().zip(block) {
            *s ^= b;
        }
        cipher.encrypt_block(&mut state);
    }
    // Final block always carries the 0x80 marker, even for aligned input.
    let rest = chunks.remainder();
    let mut last = [0u8; BLOCK_LEN];
    last[..rest.len()].copy_from_slice(rest);
    last[rest.len()] = 0x80;
    for (s, b) in state.iter_mut().zip(last.iter()) {
        *s ^= b;
    }
    cipher.encrypt_block(&mut state);
    Ok(state.into())
}

/// Canonical keystream input: 8-byte big-endian timestamp, then 8 zero bytes.
pub fn timestamp_block(ts: u64) -> [u8; 16] {
    let mut block = [0u8; 16];
    block[..8].copy_from_slice(&ts.to_be_bytes());
    block
}

/// One AES block over the timestamp. The CTR counter is always zero.
pub fn keystream(key: &SymKey, ts: u64) -> [u8; 16] {
    let mut block = GenericArray::from(timestamp_block(ts));
    key.cipher().encrypt_block(&mut block);
    block.into()
}

/// First 16 bytes of SHA-256.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Digest16(pub [u8; 16]);

pub fn digest16(data: &[u8]) -> Digest16 {
    let full = Sha256::digest(data);
    let mut out = [0u8; 16];
    out.copy_from_slice(&full[..16]);
    Digest16(out)
}

/// Identity behind a signing key: an AS or the global registry authority.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Principal {
    As(AsId),
    GlobalAuthority,
}

impl fmt::Display for Principal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Principal::As(ia) => ia.fmt(f),
            Principal::GlobalAuthority => f.write_str("global"),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Signature(pub [u8; SIGNATURE_LEN]);

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({:02x}{:02x}..)", self.0[0], self.0[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PubKey {
    pub owner: Principal,
    pub bytes: [u8; 32],
}

/// Ed25519 signing key bound to its owner.
#[derive(Clone)]
pub struct SigKeyPair {
    owner: Principal,
    signing: ed25519_dalek::SigningKey,
}

impl fmt::Debug for SigKeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SigKeyPair")
            .field("owner", &self.owner)
            .finish_non_exhaustive()
    }
}

impl SigKeyPair {
    /// Deterministic key pair from a 32-byte seed.
    pub fn from_seed(owner: Principal, seed: [u8; 32]) -> Self {
        SigKeyPair {
            owner,
            signing: ed25519_dalek::SigningKey::from_bytes(&seed),
        }
    }

    pub fn owner(&self) -> Principal {
        self.owner
    }

    pub fn public(&self) -> PubKey {
        PubKey {
            owner: self.owner,
            bytes: self.signing.verifying_key().to_bytes(),
        }
    }

    pub fn sign(&self, msg: &[u8]) -> Signature {
        Signature(self.signing.sign(msg).to_bytes())
    }
}

/// Returns false for malformed keys or signatures instead of erroring.
pub fn verify(pk: &PubKey, msg: &[u8], sig: &Signature) -> bool {
    let Ok(vk) = ed25519_dalek::VerifyingKey::from_bytes(&pk.bytes) else {
        return false;
    };
    let sig = ed25519_dalek::Signature::from_bytes(&sig.0);
    vk.verify(msg, &sig).is_ok()
}
