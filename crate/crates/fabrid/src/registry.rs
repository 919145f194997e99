//! Shared registries, the control-service cache and file persistence.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use fabrid_core::addr::AsId;
use fabrid_core::control_plane::{PolicyResolver, ResolveError, TrustStore};
use fabrid_core::crypto::Principal;
use fabrid_core::policy::Policy;
use fabrid_core::registry::{PolicyId, Registry, RegistryEntry, RegistryError, Scope, SignedResponse};
use serde::{Deserialize, Serialize};

/// All registries reachable in one simulated network. Lookups are
/// concurrent, insertions exclusive.
#[derive(Debug, Default)]
pub struct RegistryService {
    registries: RwLock<BTreeMap<Principal, Registry>>,
    fetches: AtomicU64,
}

impl RegistryService {
    pub fn new(registries: impl IntoIterator<Item = Registry>) -> Self {
        let map = registries.into_iter().map(|r| (r.owner(), r)).collect();
        RegistryService { registries: RwLock::new(map), fetches: AtomicU64::new(0) }
    }

    pub fn register(&self, caller: Principal, id: PolicyId, policy: &Policy, now: u64) -> Result<(), RegistryError> {
        let mut regs = self.registries.write().expect("registry lock");
        let reg = regs
            .get_mut(&id.scope.owner())
            .ok_or(RegistryError::Unauthorized { caller, id })?;
        reg.register(caller, id, policy, now)
    }

    /// A remote lookup; every call is counted.
    pub fn fetch(&self, id: PolicyId) -> Result<SignedResponse, RegistryError> {
        self.fetches.fetch_add(1, Ordering::SeqCst);
        let regs = self.registries.read().expect("registry lock");
        regs.get(&id.scope.owner()).ok_or(RegistryError::NotFound(id))?.lookup(id)
    }

    pub fn remote_fetches(&self) -> u64 {
        self.fetches.load(Ordering::SeqCst)
    }

    /// Replaces the key of one registry, keeping its entries.
    pub fn rekey(&self, key: fabrid_core::crypto::SigKeyPair) {
        let mut regs = self.registries.write().expect("registry lock");
        if let Some(old) = regs.remove(&key.owner()) {
            let mut fresh = Registry::new(key);
            for e in old.entries() {
                fresh.insert(fresh.owner(), e.clone()).expect("copying unique entries");
            }
            regs.insert(fresh.owner(), fresh);
        }
    }

    pub fn entries(&self) -> Vec<RegistryEntry> {
        let regs = self.registries.read().expect("registry lock");
        regs.values().flat_map(|r| r.entries().cloned()).collect()
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        save_entries(path, &self.entries())
    }
}

type Slot = Arc<Mutex<Option<RegistryEntry>>>;

/// Control-service cache: one verified remote fetch per id, even under
/// concurrent resolves. Failed fetches leave nothing behind.
pub struct CachedResolver<'a> {
    service: &'a RegistryService,
    trust: &'a TrustStore,
    slots: Mutex<HashMap<PolicyId, Slot>>,
}

impl<'a> CachedResolver<'a> {
    pub fn new(service: &'a RegistryService, trust: &'a TrustStore) -> Self {
        CachedResolver { service, trust, slots: Mutex::new(HashMap::new()) }
    }

    pub fn resolve_cached(&self, id: PolicyId) -> Result<RegistryEntry, RegistryError> {
        let slot = self.slots.lock().expect("cache lock").entry(id).or_default().clone();
        // Holding the slot lock during the fetch makes concurrent callers
        // for the same id wait instead of fetching again.
        let mut guard = slot.lock().expect("slot lock");
        if let Some(e) = guard.as_ref() {
            return Ok(e.clone());
        }
        let resp = self.service.fetch(id)?;
        let pk = self.trust.get(id.scope.owner()).ok_or(RegistryError::SignatureInvalid)?;
        let entry = resp.open(pk)?;
        if entry.id != id {
            return Err(RegistryError::Malformed);
        }
        *guard = Some(entry.clone());
        Ok(entry)
    }

    pub fn cached(&self) -> usize {
        let slots = self.slots.lock().expect("cache lock");
        slots.values().filter(|s| s.lock().expect("slot lock").is_some()).count()
    }
}

impl PolicyResolver for CachedResolver<'_> {
    fn resolve(&self, id: PolicyId) -> Result<Policy, ResolveError> {
        Ok(self.resolve_cached(id)?.policy()?)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct EntryLine {
    scope: String,
    pid: u32,
    registered_at: u64,
    description: String,
}

pub fn scope_label(scope: Scope) -> String {
    match scope {
        Scope::Global => "global".into(),
        Scope::Local(ia) => ia.to_string(),
    }
}

/// Parses `G/<pid>` or `<isd-as>/<pid>`.
pub fn parse_policy_id(s: &str) -> Option<PolicyId> {
    let (scope, pid) = s.rsplit_once('/')?;
    let pid = pid.parse().ok()?;
    if scope == "G" || scope == "global" {
        Some(PolicyId::global(pid))
    } else {
        Some(PolicyId::local(scope.parse::<AsId>().ok()?, pid))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PersistError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {reason}")]
    Line { line: usize, reason: String },
}

/// One JSON object per line.
pub fn save_entries(path: &Path, entries: &[RegistryEntry]) -> std::io::Result<()> {
    let mut f = fs::File::create(path)?;
    for e in entries {
        let line = EntryLine {
            scope: scope_label(e.id.scope),
            pid: e.id.pid,
            registered_at: e.registered_at,
            description: e.description.clone(),
        };
        writeln!(f, "{}", serde_json::to_string(&line).expect("plain struct"))?;
    }
    Ok(())
}

pub fn load_entries(path: &Path) -> Result<Vec<RegistryEntry>, PersistError> {
    let f = fs::File::open(path)?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| PersistError::Line { line: n + 1, reason };
        let l: EntryLine = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let scope = if l.scope == "global" {
            Scope::Global
        } else {
            Scope::Local(l.scope.parse().map_err(|_| bad(format!("bad scope {:?}", l.scope)))?)
        };
        out.push(RegistryEntry {
            id: PolicyId { scope, pid: l.pid },
            description: l.description,
            registered_at: l.registered_at,
        });
    }
    Ok(out)
}

/// Inserts persisted entries into their owning registries.
pub fn restore(service: &RegistryService, entries: Vec<RegistryEntry>) -> Result<(), RegistryError> {
    let mut regs = service.registries.write().expect("registry lock");
    for e in entries {
        let owner = e.id.scope.owner();
        let reg = regs.get_mut(&owner).ok_or(RegistryError::NotFound(e.id))?;
        reg.insert(owner, e)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use fabrid_core::crypto::SigKeyPair;
    use fabrid_core::policy::parse_policy;

    fn ga(seed: u8) -> SigKeyPair {
        SigKeyPair::from_seed(Principal::GlobalAuthority, [seed; 32])
    }

    fn setup() -> (RegistryService, TrustStore) {
        let svc = RegistryService::new([Registry::new(ga(1))]);
        let p = parse_policy("const m: M = 3\nmanu(r) = m").unwrap();
        for i in 0..100 {
            svc.register(Principal::GlobalAuthority, PolicyId::global(i), &p, 0).unwrap();
        }
        let mut t = TrustStore::new();
        t.insert(ga(1).public());
        (svc, t)
    }

    #[test]
    fn one_fetch_per_id() {
        let (svc, t) = setup();
        let c = CachedResolver::new(&svc, &t);
        for _ in 0..10 {
            for i in 0..100 {
                c.resolve_cached(PolicyId::global(i)).unwrap();
            }
        }
        assert_eq!(svc.remote_fetches(), 100);
    }

    #[test]
    fn concurrent_resolves_single_flight() {
        let (svc, t) = setup();
        let c = CachedResolver::new(&svc, &t);
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| c.resolve_cached(PolicyId::global(5)).unwrap());
            }
        });
        assert_eq!(svc.remote_fetches(), 1);
    }

    #[test]
    fn swapped_signer_is_not_cached() {
        let (svc, t) = setup();
        svc.rekey(ga(2));
        let c = CachedResolver::new(&svc, &t);
        assert_eq!(c.resolve_cached(PolicyId::global(1)), Err(RegistryError::SignatureInvalid));
        assert_eq!(c.cached(), 0);
        assert_eq!(c.resolve_cached(PolicyId::global(1)), Err(RegistryError::SignatureInvalid));
        assert_eq!(svc.remote_fetches(), 2);
    }

    #[test]
    fn cache_matches_direct_lookup() {
        let (svc, t) = setup();
        let c = CachedResolver::new(&svc, &t);
        let direct = svc.fetch(PolicyId::global(7)).unwrap().open(t.get(Principal::GlobalAuthority).unwrap()).unwrap();
        assert_eq!(c.resolve_cached(PolicyId::global(7)).unwrap().encode(), direct.encode());
    }

    #[test]
    fn persistence_round_trip() {
        let (svc, _) = setup();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("reg.jsonl");
        svc.save(&path).unwrap();
        let back = load_entries(&path).unwrap();
        assert_eq!(back, svc.entries());
        let fresh = RegistryService::new([Registry::new(ga(1))]);
        restore(&fresh, back).unwrap();
        assert_eq!(fresh.entries(), svc.entries());
    }

    #[test]
    fn policy_id_syntax() {
        assert_eq!(parse_policy_id("G/4"), Some(PolicyId::global(4)));
        let ia: AsId = "1-ff00:0:110".parse().unwrap();
        assert_eq!(parse_policy_id("1-ff00:0:110/9"), Some(PolicyId::local(ia, 9)));
        assert_eq!(parse_policy_id("x/1"), None);
    }
}
