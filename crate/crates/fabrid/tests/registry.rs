use std::path::PathBuf;

use fabrid::registry::CachedResolver;
use fabrid::topology::Topology;
use fabrid_core::control_plane::PolicyResolver;
use fabrid_core::crypto::Principal;
use fabrid_core::policy::parse_policy;
use fabrid_core::registry::{PolicyId, RegistryError};

fn fig1() -> Topology {
    Topology::load(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/fig1.toml")).unwrap()
}

#[test]
fn configured_policies_are_registered_once() {
    let t = fig1();
    let g = t.resolve("G").unwrap();
    let p = parse_policy("const m: M = 1\nmanu(r) = m").unwrap();
    for id in [PolicyId::global(1), PolicyId::local(g, 1)] {
        let err = t.registries.register(id.scope.owner(), id, &p, 1).unwrap_err();
        assert_eq!(err, RegistryError::AlreadyExists(id));
    }
    // A fresh local id is accepted from its owner only.
    let id = PolicyId::local(g, 2);
    let f = t.resolve("F").unwrap();
    assert!(matches!(t.registries.register(Principal::As(f), id, &p, 1), Err(RegistryError::Unauthorized { .. })));
    t.registries.register(Principal::As(g), id, &p, 1).unwrap();
    assert_eq!(t.registries.register(Principal::As(g), id, &p, 2), Err(RegistryError::AlreadyExists(id)));
}

#[test]
fn resolves_match_and_fetch_once() {
    let t = fig1();
    let g = t.resolve("G").unwrap();
    let ids = [PolicyId::global(1), PolicyId::local(g, 1)];
    let c = CachedResolver::new(&t.registries, &t.trust);
    let before = t.registries.remote_fetches();
    let first: Vec<_> = ids.iter().map(|id| c.resolve(*id).unwrap()).collect();
    for _ in 0..20 {
        for (id, want) in ids.iter().zip(&first) {
            assert_eq!(&c.resolve(*id).unwrap(), want);
        }
    }
    assert_eq!(t.registries.remote_fetches() - before, 2);
    assert_eq!(c.cached(), 2);
}

#[test]
fn concurrent_resolves_of_many_ids() {
    let t = fig1();
    let p = parse_policy("const m: M = 5\nmanu(r) = m").unwrap();
    for i in 100..140 {
        t.registries.register(Principal::GlobalAuthority, PolicyId::global(i), &p, 0).unwrap();
    }
    let c = CachedResolver::new(&t.registries, &t.trust);
    let before = t.registries.remote_fetches();
    std::thread::scope(|s| {
        for w in 0..8u32 {
            let c = &c;
            s.spawn(move || {
                for i in 0..40 {
                    c.resolve_cached(PolicyId::global(100 + (i + w * 5) % 40)).unwrap();
                }
            });
        }
    });
    assert_eq!(t.registries.remote_fetches() - before, 40);
}

#[test]
fn unknown_ids_are_not_cached() {
    let t = fig1();
    let c = CachedResolver::new(&t.registries, &t.trust);
    let id = PolicyId::global(9999);
    assert_eq!(c.resolve_cached(id), Err(RegistryError::NotFound(id)));
    assert_eq!(c.resolve_cached(id), Err(RegistryError::NotFound(id)));
    assert_eq!(c.cached(), 0);
}
