//! Three-level symmetric key hierarchy.
//!
//! An AS holds one secret and derives everything else on demand:
//!
//! ```text
//! K_{A->B}           = PRF_{K_A}(B)
//! K_{A->B:H_B}       = PRF_{K_{A->B}}(H_B)
//! K_{A:H_A->B:H_B}   = PRF_{K_{A->B}}(H_A || H_B)
//! ```
//!
//! Border routers of A recompute `K_{A->B:H_B}` from the packet's source
//! fields, so no per-source state is stored on the fast path.

use thiserror::Error;

use crate::addr::{AsId, HostAddr};
use crate::crypto::{prf, SymKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum DrkeyError {
    #[error("expected an AS-level key, got {0:?}")]
    LevelMismatch(KeyLevel),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KeyLevel {
    AsLevel,
    HostAs,
    HostHost,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsSecret {
    pub key: SymKey,
    pub owner: AsId,
}

/// Parties a derived key is shared between. `issuer` is the AS whose
/// secret roots the derivation; `holder` is the requesting AS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Parties {
    pub issuer: AsId,
    pub holder: AsId,
    pub issuer_host: Option<HostAddr>,
    pub holder_host: Option<HostAddr>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DerivedKey {
    pub key: SymKey,
    pub level: KeyLevel,
    pub parties: Parties,
}

fn derive(key: &SymKey, input: &[u8]) -> SymKey {
    // Inputs here are at most 8 bytes, far under the PRF limit.
    SymKey::from_bytes(prf(key, input).expect("short PRF input"))
}

pub fn derive_as_level(secret: &AsSecret, holder: AsId) -> DerivedKey {
    DerivedKey {
        key: derive(&secret.key, &holder.to_bytes()),
        level: KeyLevel::AsLevel,
        parties: Parties {
            issuer: secret.owner,
            holder,
            issuer_host: None,
            holder_host: None,
        },
    }
}

pub fn derive_host_as(as_key: &DerivedKey, holder_host: HostAddr) -> Result<DerivedKey, DrkeyError> {
    if as_key.level != KeyLevel::AsLevel {
        return Err(DrkeyError::LevelMismatch(as_key.level));
    }
    Ok(DerivedKey {
        key: derive(&as_key.key, &holder_host.to_bytes()),
        level: KeyLevel::HostAs,
        parties: Parties {
            holder_host: Some(holder_host),
            ..as_key.parties
        },
    })
}

pub fn derive_host_host(
    as_key: &DerivedKey,
    issuer_host: HostAddr,
    holder_host: HostAddr,
) -> Result<DerivedKey, DrkeyError> {
    if as_key.level != KeyLevel::AsLevel {
        return Err(DrkeyError::LevelMismatch(as_key.level));
    }
    let mut input = [0u8; 8];
    input[..4].copy_from_slice(&issuer_host.to_bytes());
    input[4..].copy_from_slice(&holder_host.to_bytes());
    Ok(DerivedKey {
        key: derive(&as_key.key, &input),
        level: KeyLevel::HostHost,
        parties: Parties {
            issuer_host: Some(issuer_host),
            holder_host: Some(holder_host),
            ..as_key.parties
        },
    })
}

/// Border-router path: straight from the AS secret to `K_{A->src_as:src_host}`.
pub fn router_rederive(secret: &AsSecret, src_as: AsId, src_host: HostAddr) -> DerivedKey {
    let as_key = derive(&secret.key, &src_as.to_bytes());
    DerivedKey {
        key: derive(&as_key, &src_host.to_bytes()),
        level: KeyLevel::HostAs,
        parties: Parties {
            issuer: secret.owner,
            holder: src_as,
            issuer_host: None,
            holder_host: Some(src_host),
        },
    }
}
