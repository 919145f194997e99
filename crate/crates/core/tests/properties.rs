use std::cell::RefCell;
use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashSet};

use fabrid_core::addr::{AsId, HostAddr};
use fabrid_core::control_plane::{
    decode_maps, encode_maps, filter_paths, EndToEndPath, Endpoint, FilterOptions, HopVerdict, IfIpPair, IpPrefix,
    PathHop, PolicyIndex, PolicyMaps, PolicyResolver, ResolveError, Validity,
};
use fabrid_core::crypto::{keystream, prf, SymKey};
use fabrid_core::data_plane::{
    build_packet, decrypt_index, encrypt_index, header_len, router_process, DropCounters, DuplicateWindow,
    ForwardingTable, Freshness, HopField, Packet, PacketSpec, RouteId, RouterAction, RouterCtx,
};
use fabrid_core::drkey::{derive_as_level, derive_host_as, derive_host_host, router_rederive, AsSecret};
use fabrid_core::policy::{
    check_by_enumeration, check_containment, compare_versions, eval_path_policy, eval_router_policy, parse_policy,
    ContainmentBounds, PathModel, Policy, RouterSetup, SoftwareComponent, Verdict, VersionScheme,
};
use fabrid_core::registry::PolicyId;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ia(n: u64) -> AsId {
    AsId::new(1, n).unwrap()
}

fn arb_key() -> impl Strategy<Value = SymKey> {
    any::<[u8; 16]>().prop_map(SymKey::from_bytes)
}

fn arb_host() -> impl Strategy<Value = HostAddr> {
    any::<[u8; 4]>().prop_map(HostAddr)
}

fn arb_as() -> impl Strategy<Value = AsId> {
    (1u16..100, 1u64..(1 << 48)).prop_map(|(i, a)| AsId::new(i, a).unwrap())
}

fn arb_prefix() -> impl Strategy<Value = IpPrefix> {
    (any::<u32>(), 0u8..=32).prop_map(|(a, l)| {
        let masked = if l == 0 { 0 } else { a & (u32::MAX << (32 - l as u32)) };
        IpPrefix::new(HostAddr(masked.to_be_bytes()), l).unwrap()
    })
}

fn arb_endpoint() -> impl Strategy<Value = Endpoint> {
    prop_oneof![any::<u16>().prop_map(Endpoint::If), arb_prefix().prop_map(Endpoint::Ip)]
}

fn arb_maps() -> impl Strategy<Value = PolicyMaps> {
    let pair = (arb_endpoint(), arb_endpoint()).prop_filter_map("ip to ip", |(a, b)| IfIpPair::new(a, b).ok());
    let set = prop::collection::btree_set((1u16..40).prop_map(PolicyIndex), 0..6);
    let pid = prop_oneof![
        any::<u32>().prop_map(PolicyId::global),
        any::<u32>().prop_map(|p| PolicyId::local(AsId::new(1, 0x110).unwrap(), p)),
    ];
    (
        prop::collection::btree_map(pair, set, 0..20),
        prop::collection::btree_map((1u16..40).prop_map(PolicyIndex), pid, 0..10),
    )
        .prop_map(|(imap, dmap)| PolicyMaps { imap, dmap })
}

proptest! {
    #[test]
    fn keystream_self_xor_is_zero(k in arb_key(), ts in any::<u64>()) {
        let a = keystream(&k, ts);
        let b = keystream(&k, ts);
        prop_assert_eq!(a.iter().zip(&b).map(|(x, y)| x ^ y).collect::<Vec<_>>(), vec![0u8; 16]);
    }

    #[test]
    fn rederive_commutes(k in arb_key(), src in arb_as(), host in arb_host()) {
        let s = AsSecret { key: k, owner: ia(1) };
        let direct = router_rederive(&s, src, host);
        let two_step = derive_host_as(&derive_as_level(&s, src), host).unwrap();
        prop_assert_eq!(direct.key.expose(), two_step.key.expose());
    }

    #[test]
    fn maps_codec_is_exact(m in arb_maps()) {
        let owner = AsId::new(1, 0x110).unwrap();
        let bytes = encode_maps(&m).unwrap();
        let back = decode_maps(&bytes, owner).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(encode_maps(&back).unwrap(), bytes);
    }

    #[test]
    fn index_round_trip(k in arb_key(), ts in any::<u64>(), idx in any::<u16>()) {
        let enc = encrypt_index(&k, ts, PolicyIndex(idx));
        prop_assert_eq!(decrypt_index(&k, ts, enc), PolicyIndex(idx));
    }

    #[test]
    fn header_length_ignores_indices(n in 1usize..10, seed in any::<u64>(), payload in prop::collection::vec(any::<u8>(), 0..64)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hops = hop_fields(n);
        let keys: Vec<_> = (0..n).map(|_| Some(SymKey::from_bytes(rng.gen()))).collect();
        let indices: Vec<_> = (0..n).map(|_| PolicyIndex(rng.gen())).collect();
        let spec = spec(&hops, &indices, &payload, 7);
        let (p, _) = build_packet(&spec, &keys, &SymKey::from_bytes([1; 16])).unwrap();
        let enc = p.encode();
        prop_assert_eq!(enc.len(), header_len(n) + payload.len());
        prop_assert_eq!(Packet::decode(&enc).unwrap(), p);
    }

    #[test]
    fn versions_form_a_total_order(a in version_text(), b in version_text(), c in version_text()) {
        let s = VersionScheme::MultipartNumeric;
        let ab = compare_versions(&a, &b, &s).unwrap();
        let ba = compare_versions(&b, &a, &s).unwrap();
        prop_assert_eq!(ab, ba.reverse());
        let bc = compare_versions(&b, &c, &s).unwrap();
        let ac = compare_versions(&a, &c, &s).unwrap();
        if ab != Ordering::Greater && bc != Ordering::Greater {
            prop_assert_ne!(ac, Ordering::Greater);
        }
        if ab == Ordering::Equal && bc == Ordering::Equal {
            prop_assert_eq!(ac, Ordering::Equal);
        }
    }

    #[test]
    fn printed_policies_reparse(seed in any::<u64>()) {
        let text = random_policy(&mut ChaCha8Rng::seed_from_u64(seed), false);
        let p = parse_policy(&text).unwrap();
        let again = parse_policy(&p.to_string()).unwrap();
        prop_assert_eq!(again, p);
    }

    #[test]
    fn path_policy_is_conjunction_over_routers(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pol = parse_policy(&random_policy(&mut rng, false)).unwrap();
        let routers: Vec<_> = (0..rng.gen_range(0..5)).map(|i| random_setup(&mut rng, i)).collect();
        let all = routers.iter().all(|r| eval_router_policy(&pol, r).unwrap());
        let path = PathModel { path_id: "p".into(), routers };
        prop_assert_eq!(eval_path_policy(&pol, &path).unwrap(), all);
    }

    #[test]
    fn containment_witnesses_are_sound(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let path = parse_policy(&random_policy(&mut rng, false)).unwrap();
        let pref = parse_policy(&random_policy(&mut rng, false)).unwrap();
        let bounds = ContainmentBounds { k: 2, node_budget: 200_000 };
        if let Verdict::NotContained(w) = check_containment(&path, &pref, &bounds).unwrap() {
            prop_assert!(eval_router_policy(&path, &w).unwrap());
            prop_assert!(!eval_router_policy(&pref, &w).unwrap());
            prop_assert!(w.software().len() <= 2);
        }
    }

    #[test]
    fn untrusted_never_outranks_trusted(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let paths: Vec<EndToEndPath> = (0..rng.gen_range(1..6))
            .map(|_| EndToEndPath {
                hops: (0..rng.gen_range(2..6))
                    .map(|_| path_hop(ia(rng.gen_range(1..8))))
                    .collect(),
            })
            .collect();
        let trusted: BTreeSet<AsId> = (1..8).filter(|_| rng.gen_bool(0.6)).map(ia).collect();
        let pref = parse_policy("const m: M = 1\nmanu(r) = m").unwrap();
        let ranked = filter_paths(&paths, &pref, &trusted, &NoResolver, &FilterOptions::default());
        let flags: Vec<bool> = ranked.iter().map(|r| r.verdicts.contains(&HopVerdict::Untrusted)).collect();
        prop_assert!(flags.windows(2).all(|w| w[0] <= w[1]), "{flags:?}");
    }
}

struct NoResolver;

impl PolicyResolver for NoResolver {
    fn resolve(&self, id: PolicyId) -> Result<Policy, ResolveError> {
        Err(ResolveError::Unavailable(id))
    }
}

fn path_hop(as_id: AsId) -> PathHop {
    PathHop { as_id, ingress: 1, egress: 2, validity: Validity { from: 0, until: u64::MAX }, sigma: [0; 16], maps: None }
}

fn version_text() -> impl Strategy<Value = String> {
    prop::collection::vec(0u32..12, 1..4).prop_map(|p| p.iter().map(u32::to_string).collect::<Vec<_>>().join("."))
}

fn hop_fields(n: usize) -> Vec<HopField> {
    (0..n)
        .map(|i| HopField { as_id: ia(i as u64 + 1), ingress: i as u16, egress: i as u16 + 1, sigma: [i as u8; 16] })
        .collect()
}

fn spec<'a>(hops: &'a [HopField], indices: &'a [PolicyIndex], payload: &'a [u8], ts: u64) -> PacketSpec<'a> {
    PacketSpec {
        ts,
        src_as: ia(100),
        src_host: HostAddr([10, 0, 0, 1]),
        dst_as: hops.last().unwrap().as_id,
        dst_host: HostAddr([10, 0, 0, 2]),
        hops,
        indices,
        payload,
    }
}

const NAMES: [&str; 3] = ["openssl", "bird", "frr"];
const ISSUERS: [&str; 2] = ["https://openssl.org", "https://example.net"];
const VERSIONS: [&str; 3] = ["1.0", "2.1", "3.0.2"];

/// A random policy over small constant pools. With `conjunctive` set the
/// result stays in the fragment decided by the fast path.
pub fn random_policy(rng: &mut impl Rng, conjunctive: bool) -> String {
    let mut consts = BTreeMap::new();
    let mut conj = Vec::new();
    if rng.gen_bool(0.6) {
        let m = rng.gen_range(1..4u32);
        consts.insert(format!("m{m}"), format!("M = {m}"));
        conj.push(format!("manu(r) = m{m}"));
    }
    let comps = rng.gen_range(0..3);
    for j in 0..comps {
        let c = format!("c{j}");
        let mut body = vec![format!("software(r, {c})")];
        if rng.gen_bool(0.7) {
            let n = rng.gen_range(0..NAMES.len());
            consts.insert(format!("n{n}"), format!("N = \"{}\"", NAMES[n]));
            body.push(format!("name({c}) = n{n}"));
        }
        if rng.gen_bool(0.4) {
            let i = rng.gen_range(0..ISSUERS.len());
            consts.insert(format!("i{i}"), format!("I = \"{}\"", ISSUERS[i]));
            body.push(format!("issuer(tag({c})) = i{i}"));
        }
        if rng.gen_bool(0.4) {
            let v = rng.gen_range(0..VERSIONS.len());
            consts.insert(format!("v{v}"), format!("V = \"{}\"", VERSIONS[v]));
            let op = if conjunctive { "=" } else { [">=", "=", "<"][rng.gen_range(0..3)] };
            body.push(format!("version({c}) {op} v{v}"));
        }
        if j > 0 && rng.gen_bool(0.3) {
            body.push(format!("name({c}) = name(c0)"));
        }
        conj.push(format!("exists {c}: C. {}", body.join(" & ")));
    }
    if !conjunctive && rng.gen_bool(0.3) {
        let n = rng.gen_range(0..NAMES.len());
        consts.insert(format!("n{n}"), format!("N = \"{}\"", NAMES[n]));
        conj.push(format!("forall x: C. software(r, x) -> !(name(x) = n{n})"));
    }
    if conj.is_empty() {
        consts.insert("m1".into(), "M = 1".into());
        conj.push("manu(r) = m1".into());
    }
    // Nested existentials so later components can refer to c0.
    let mut formula = String::new();
    let mut close = 0;
    for (i, c) in conj.iter().enumerate() {
        if i > 0 {
            formula.push_str(" & ");
        }
        if c.starts_with("exists") && i + 1 < conj.len() {
            formula.push('(');
            formula.push_str(c);
            close += 1;
        } else {
            formula.push_str(c);
        }
    }
    formula.push_str(&")".repeat(close));
    let decls: Vec<_> = consts.iter().map(|(k, v)| format!("const {k}: {v}")).collect();
    format!("{}\n{formula}\n", decls.join("\n"))
}

fn random_setup(rng: &mut impl Rng, id: usize) -> RouterSetup {
    let sw = (0..rng.gen_range(0..3))
        .map(|t| {
            SoftwareComponent::new(
                &format!("t{t}"),
                ISSUERS[rng.gen_range(0..ISSUERS.len())],
                NAMES[rng.gen_range(0..NAMES.len())],
                VERSIONS[rng.gen_range(0..VERSIONS.len())],
            )
            .unwrap()
        })
        .collect();
    RouterSetup::new(&format!("r{id}"), rng.gen_range(1..4), sw).unwrap()
}

#[test]
fn prf_has_no_collisions_over_many_inputs() {
    let k = SymKey::from_bytes([7; 16]);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut inputs = HashSet::new();
    let mut outputs = HashSet::new();
    while inputs.len() < 100_000 {
        let len = rng.gen_range(0..48);
        let m: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
        if inputs.insert(m.clone()) {
            assert!(outputs.insert(prf(&k, &m).unwrap()), "collision on {}", hex::encode(&m));
        }
    }
}

#[test]
fn derived_keys_differ_from_parents() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10_000 {
        let s = AsSecret { key: SymKey::from_bytes(rng.gen()), owner: ia(1) };
        let lvl = derive_as_level(&s, ia(rng.gen_range(1..1 << 40)));
        assert_ne!(lvl.key.expose(), s.key.expose());
        let h = derive_host_as(&lvl, HostAddr(rng.gen())).unwrap();
        assert_ne!(h.key.expose(), lvl.key.expose());
        let hh = derive_host_host(&lvl, HostAddr(rng.gen()), HostAddr(rng.gen())).unwrap();
        assert_ne!(hh.key.expose(), lvl.key.expose());
    }
}

#[test]
fn ciphertexts_vary_with_timestamp() {
    let k = SymKey::from_bytes([9; 16]);
    let base = encrypt_index(&k, 0, PolicyIndex(3));
    let same = (1..=10_000u64).filter(|&ts| encrypt_index(&k, ts, PolicyIndex(3)) == base).count();
    // About 10_000 / 65_536 collisions are expected by chance.
    assert!(same <= 10, "{same} repeats");
}

#[test]
fn hvf_halves_are_used_once_each() {
    let hops = hop_fields(3);
    let secrets: Vec<_> = (0..3u8).map(|i| AsSecret { key: SymKey::from_bytes([i + 1; 16]), owner: ia(i as u64 + 1) }).collect();
    let sp = spec(&hops, &[PolicyIndex(0); 3], b"x", 50);
    let keys: Vec<_> = secrets.iter().map(|s| Some(router_rederive(s, sp.src_as, sp.src_host).key)).collect();
    let (mut p, exp) = build_packet(&sp, &keys, &SymKey::from_bytes([0; 16])).unwrap();
    let sent = p.auth.clone();
    for (i, s) in secrets.iter().enumerate() {
        let ctx = RouterCtx { secret: s.clone(), freshness: Freshness::default() };
        let guard = RefCell::new(DuplicateWindow::new(1_000));
        let act = router_process(&ctx, &ForwardingTable::new(vec![RouteId(0)]), &guard, &DropCounters::default(), &mut p, 50);
        assert!(matches!(act, RouterAction::Forward(_)));
        // The first half authenticated the hop; the second half replaces it.
        assert_eq!(p.auth[i].hvf, exp.updated[i]);
        assert_ne!(sent[i].hvf, exp.updated[i]);
        assert_eq!(p.auth[i].enc_index, sent[i].enc_index);
    }
}

#[test]
fn conjunctive_generator_stays_in_fragment_and_agrees() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in 0..300 {
        let a = parse_policy(&random_policy(&mut rng, true)).unwrap();
        let b = parse_policy(&random_policy(&mut rng, true)).unwrap();
        let bounds = ContainmentBounds { k: 1 + n % 3, node_budget: 5_000_000 };
        let fast = fabrid_core::policy::check_by_homomorphism(&a, &b, &bounds).unwrap().expect("conjunctive");
        let slow = check_by_enumeration(&a, &b, &bounds).unwrap();
        assert_eq!(
            matches!(fast, Verdict::Contained),
            matches!(slow, Verdict::Contained),
            "k = {}\n{a}\n---\n{b}",
            bounds.k
        );
    }
}
