//! Append-only policy registries.
//!
//! One global registry, owned by the global authority, and one local
//! registry per AS. Entries are never changed or removed. Lookups return
//! the entry encoded and signed by the registry owner.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::addr::AsId;
use crate::crypto::{verify, Principal, PubKey, SigKeyPair, Signature};
use crate::policy::{parse_policy, Policy, PolicyError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scope {
    Global,
    Local(AsId),
}

impl Scope {
    /// The principal allowed to register into (and sign for) this scope.
    pub fn owner(self) -> Principal {
        match self {
            Scope::Global => Principal::GlobalAuthority,
            Scope::Local(ia) => Principal::As(ia),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PolicyId {
    pub scope: Scope,
    pub pid: u32,
}

impl PolicyId {
    pub fn global(pid: u32) -> Self {
        PolicyId { scope: Scope::Global, pid }
    }

    pub fn local(owner: AsId, pid: u32) -> Self {
        PolicyId { scope: Scope::Local(owner), pid }
    }
}

impl fmt::Display for PolicyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.scope {
            Scope::Global => write!(f, "G/{}", self.pid),
            Scope::Local(ia) => write!(f, "{ia}/{}", self.pid),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistryEntry {
    pub id: PolicyId,
    /// Policy text in the concrete grammar.
    pub description: String,
    pub registered_at: u64,
}

impl RegistryEntry {
    pub fn policy(&self) -> Result<Policy, PolicyError> {
        parse_policy(&self.description)
    }

    /// `scope(1) as(8) pid(4) registered_at(8) len(4) description`
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(25 + self.description.len());
        match self.id.scope {
            Scope::Global => {
                out.push(0);
                out.extend_from_slice(&[0; 8]);
            }
            Scope::Local(ia) => {
                out.push(1);
                out.extend_from_slice(&ia.to_bytes());
            }
        }
        out.extend_from_slice(&self.id.pid.to_be_bytes());
        out.extend_from_slice(&self.registered_at.to_be_bytes());
        out.extend_from_slice(&(self.description.len() as u32).to_be_bytes());
        out.extend_from_slice(self.description.as_bytes());
        out
    }

    pub fn decode(b: &[u8]) -> Result<Self, RegistryError> {
        if b.len() < 25 {
            return Err(RegistryError::Malformed);
        }
        let ia = AsId::from_bytes(b[1..9].try_into().expect("8 bytes"));
        let scope = match b[0] {
            0 => Scope::Global,
            1 => Scope::Local(ia),
            _ => return Err(RegistryError::Malformed),
        };
        let pid = u32::from_be_bytes(b[9..13].try_into().expect("4 bytes"));
        let registered_at = u64::from_be_bytes(b[13..21].try_into().expect("8 bytes"));
        let len = u32::from_be_bytes(b[21..25].try_into().expect("4 bytes")) as usize;
        if b.len() != 25 + len {
            return Err(RegistryError::Malformed);
        }
        let description = core::str::from_utf8(&b[25..])
            .map_err(|_| RegistryError::Malformed)?
            .to_string();
        Ok(RegistryEntry { id: PolicyId { scope, pid }, description, registered_at })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedResponse {
    pub payload: Vec<u8>,
    pub signer: Principal,
    pub signature: Signature,
}

impl SignedResponse {
    /// Checks the signature under `pk` and decodes the entry.
    pub fn open(&self, pk: &PubKey) -> Result<RegistryEntry, RegistryError> {
        if pk.owner != self.signer || !verify(pk, &self.payload, &self.signature) {
            return Err(RegistryError::SignatureInvalid);
        }
        RegistryEntry::decode(&self.payload)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("policy {0} is already registered")]
    AlreadyExists(PolicyId),
    #[error("{caller} may not register into scope of {id}")]
    Unauthorized { caller: Principal, id: PolicyId },
    #[error("policy {0} not found")]
    NotFound(PolicyId),
    #[error("registry response signature invalid")]
    SignatureInvalid,
    #[error("malformed registry entry")]
    Malformed,
}

/// One registry, global or AS-local, holding the owner's signing key.
#[derive(Debug, Clone)]
pub struct Registry {
    key: SigKeyPair,
    entries: BTreeMap<PolicyId, RegistryEntry>,
}

impl Registry {
    pub fn new(key: SigKeyPair) -> Self {
        Registry { key, entries: BTreeMap::new() }
    }

    pub fn owner(&self) -> Principal {
        self.key.owner()
    }

    pub fn public_key(&self) -> PubKey {
        self.key.public()
    }

    pub fn register(
        &mut self,
        caller: Principal,
        id: PolicyId,
        policy: &Policy,
        now: u64,
    ) -> Result<(), RegistryError> {
        self.insert(
            caller,
            RegistryEntry { id, description: policy.to_string(), registered_at: now },
        )
    }

    /// Inserts a prepared entry, e.g. when restoring persisted state.
    pub fn insert(&mut self, caller: Principal, entry: RegistryEntry) -> Result<(), RegistryError> {
        let id = entry.id;
        if caller != id.scope.owner() || self.owner() != id.scope.owner() {
            return Err(RegistryError::Unauthorized { caller, id });
        }
        if self.entries.contains_key(&id) {
            return Err(RegistryError::AlreadyExists(id));
        }
        self.entries.insert(id, entry);
        Ok(())
    }

    pub fn lookup(&self, id: PolicyId) -> Result<SignedResponse, RegistryError> {
        let entry = self.entries.get(&id).ok_or(RegistryError::NotFound(id))?;
        let payload = entry.encode();
        let signature = self.key.sign(&payload);
        Ok(SignedResponse { payload, signer: self.owner(), signature })
    }

    pub fn get(&self, id: PolicyId) -> Option<&RegistryEntry> {
        self.entries.get(&id)
    }

    pub fn entries(&self) -> impl Iterator<Item = &RegistryEntry> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ia(n: u64) -> AsId {
        AsId::new(1, n).unwrap()
    }

    fn global() -> Registry {
        Registry::new(SigKeyPair::from_seed(Principal::GlobalAuthority, [1; 32]))
    }

    fn pol() -> Policy {
        parse_policy("const m: M = 7\nmanu(r) = m").unwrap()
    }

    #[test]
    fn register_then_lookup() {
        let mut g = global();
        let id = PolicyId::global(42);
        g.register(Principal::GlobalAuthority, id, &pol(), 5).unwrap();
        let resp = g.lookup(id).unwrap();
        let entry = resp.open(&g.public_key()).unwrap();
        assert_eq!(entry.id, id);
        assert_eq!(entry.policy().unwrap(), pol());
        assert_eq!(entry.registered_at, 5);
    }

    #[test]
    fn re_registration_rejected_even_if_identical() {
        let mut g = global();
        let id = PolicyId::global(1);
        g.register(Principal::GlobalAuthority, id, &pol(), 0).unwrap();
        assert_eq!(
            g.register(Principal::GlobalAuthority, id, &pol(), 0),
            Err(RegistryError::AlreadyExists(id))
        );
    }

    #[test]
    fn scope_checks() {
        let mut x = Registry::new(SigKeyPair::from_seed(Principal::As(ia(1)), [2; 32]));
        let foreign = PolicyId::local(ia(2), 3);
        assert!(matches!(
            x.register(Principal::As(ia(1)), foreign, &pol(), 0),
            Err(RegistryError::Unauthorized { .. })
        ));
        assert!(matches!(
            x.register(Principal::As(ia(2)), PolicyId::local(ia(1), 3), &pol(), 0),
            Err(RegistryError::Unauthorized { .. })
        ));
        x.register(Principal::As(ia(1)), PolicyId::local(ia(1), 3), &pol(), 0).unwrap();
    }

    #[test]
    fn tampered_payload_and_missing_ids() {
        let mut g = global();
        let id = PolicyId::global(9);
        g.register(Principal::GlobalAuthority, id, &pol(), 0).unwrap();
        let mut resp = g.lookup(id).unwrap();
        resp.payload[12] ^= 1;
        assert_eq!(resp.open(&g.public_key()), Err(RegistryError::SignatureInvalid));
        assert_eq!(g.lookup(PolicyId::global(10)), Err(RegistryError::NotFound(PolicyId::global(10))));
    }

    #[test]
    fn entry_codec_round_trip() {
        let e = RegistryEntry {
            id: PolicyId::local(ia(0xff00_0000_0110), 77),
            description: "manu(r) = m".into(),
            registered_at: u64::MAX,
        };
        assert_eq!(RegistryEntry::decode(&e.encode()).unwrap(), e);
        assert_eq!(RegistryEntry::decode(&e.encode()[..24]), Err(RegistryError::Malformed));
    }
}
