//! Wall-clock micro-benchmarks and the policy-map size report.
//!
//! Numbers are machine-specific; only their shape across parameters is
//! meant to be compared.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::hint::black_box;
use std::time::Instant;

use fabrid_core::addr::{AsId, HostAddr};
use fabrid_core::control_plane::{
    encode_maps_measured, Endpoint, IfIpPair, IpPrefix, PolicyIndex, PolicyMaps, SectionSizes,
    DETACHED_MARKER_LEN,
};
use fabrid_core::crypto::SymKey;
use fabrid_core::data_plane::{
    build_packet, router_process, DropCounters, DuplicateWindow, ForwardingTable, Freshness, HopField, Packet,
    PacketSpec, RouteId, RouterAction, RouterCtx,
};
use fabrid_core::drkey::{derive_as_level, derive_host_as, AsSecret};
use fabrid_core::policy::{check_containment, parse_policy, ContainmentBounds};
use fabrid_core::registry::PolicyId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub component: &'static str,
    pub param: u64,
    pub ns_per_op: f64,
}

impl BenchResult {
    pub fn ops_per_sec(&self) -> f64 {
        1e9 / self.ns_per_op
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BenchConfig {
    pub batch: usize,
    pub batches: usize,
    pub warmup: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { batch: 500, batches: 21, warmup: 3 }
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Runs `setup` untimed and `op` timed, per batch; reports the median.
fn measure<S>(cfg: &BenchConfig, mut setup: impl FnMut(usize) -> S, mut op: impl FnMut(&mut S, usize)) -> f64 {
    let mut per_op = Vec::with_capacity(cfg.batches);
    for round in 0..cfg.warmup + cfg.batches {
        let mut state = setup(round);
        let start = Instant::now();
        for i in 0..cfg.batch {
            op(&mut state, i);
        }
        let ns = start.elapsed().as_nanos() as f64 / cfg.batch as f64;
        if round >= cfg.warmup {
            per_op.push(ns);
        }
    }
    median(per_op)
}

fn ia(n: u64) -> AsId {
    AsId::new(1, n).expect("valid AS number")
}

fn secret(n: u64) -> AsSecret {
    let mut k = [0u8; 16];
    k[..8].copy_from_slice(&n.to_be_bytes());
    AsSecret { key: SymKey::from_bytes(k), owner: ia(n) }
}

fn hop_fields(h: usize) -> Vec<HopField> {
    (0..h)
        .map(|i| HopField {
            as_id: ia(i as u64 + 1),
            ingress: if i == 0 { 0 } else { 1 },
            egress: if i + 1 == h { 0 } else { 2 },
            sigma: [i as u8; 16],
        })
        .collect()
}

const SRC_HOST: HostAddr = HostAddr([10, 0, 0, 1]);
const DST_HOST: HostAddr = HostAddr([10, 0, 0, 2]);

fn keys_for(h: usize) -> Vec<Option<SymKey>> {
    (0..h)
        .map(|i| Some(derive_host_as(&derive_as_level(&secret(i as u64 + 1), ia(100)), SRC_HOST).expect("level").key))
        .collect()
}

/// `router_process` at the second hop of a two-hop path, with a table of
/// `table_size` indices and packets spread over them.
pub fn bench_router(table_size: u32, cfg: &BenchConfig) -> BenchResult {
    let hops = hop_fields(2);
    let keys = keys_for(2);
    let dvf = SymKey::from_bytes([9; 16]);
    let mut table = ForwardingTable::new(vec![RouteId(0)]);
    for i in 1..=table_size {
        table.insert(PolicyIndex(i as u16), vec![RouteId(i % 4), RouteId(i % 4 + 1)]);
    }
    let first = RouterCtx { secret: secret(1), freshness: Freshness::default() };
    let ctx = RouterCtx { secret: secret(2), freshness: Freshness::default() };
    let base = 1_000_000_000_000u64;
    let mut rng = ChaCha8Rng::seed_from_u64(table_size as u64);
    // Packets are prebuilt and already past hop 0; only hop 1 is timed.
    let mut prebuilt = |round: usize| -> Vec<Packet> {
        let guard = RefCell::new(DuplicateWindow::new(DuplicateWindow::DEFAULT_WINDOW));
        let counters = DropCounters::default();
        (0..cfg.batch)
            .map(|i| {
                let ts = base + (round * cfg.batch + i) as u64;
                let idx = PolicyIndex(rng.gen_range(1..=table_size) as u16);
                let spec = PacketSpec {
                    ts,
                    src_as: ia(100),
                    src_host: SRC_HOST,
                    dst_as: ia(2),
                    dst_host: DST_HOST,
                    hops: &hops,
                    indices: &[PolicyIndex::NONE, idx],
                    payload: b"",
                };
                let (mut p, _) = build_packet(&spec, &keys, &dvf).expect("valid spec");
                let act = router_process(&first, &table, &guard, &counters, &mut p, ts);
                assert!(matches!(act, RouterAction::Forward(_)), "{act:?}");
                p
            })
            .collect()
    };
    let ns = measure(
        cfg,
        |round| {
            let pkts = prebuilt(round);
            (pkts, RefCell::new(DuplicateWindow::new(DuplicateWindow::DEFAULT_WINDOW)), DropCounters::default())
        },
        |(pkts, guard, counters), i| {
            let now = pkts[i].ts;
            let act = router_process(&ctx, &table, &*guard, counters, &mut pkts[i], now);
            debug_assert!(matches!(act, RouterAction::Forward(_)));
            black_box(act);
        },
    );
    BenchResult { component: "router_process", param: table_size as u64, ns_per_op: ns }
}

/// `build_packet` for an `h`-hop path.
pub fn bench_build(h: usize, cfg: &BenchConfig) -> BenchResult {
    let hops = hop_fields(h);
    let keys = keys_for(h);
    let dvf = SymKey::from_bytes([9; 16]);
    let indices: Vec<_> = (0..h).map(|i| PolicyIndex(i as u16)).collect();
    let payload = [0u8; 64];
    let ns = measure(
        cfg,
        |_| (),
        |_, i| {
            let spec = PacketSpec {
                ts: 1 + i as u64,
                src_as: ia(100),
                src_host: SRC_HOST,
                dst_as: ia(h as u64),
                dst_host: DST_HOST,
                hops: &hops,
                indices: &indices,
                payload: &payload,
            };
            black_box(build_packet(&spec, &keys, &dvf).expect("valid spec"));
        },
    );
    BenchResult { component: "build_packet", param: h as u64, ns_per_op: ns }
}

pub const EXAMPLE_PATH_POLICY: &str = "const m1: M = 9\nconst s_crit: N = \"openssl\"\n\
const i: I = \"https://openssl.org\"\nconst v: V = \"3.0.2\"\n\
manu(r) = m1 & exists c: C. software(r, c) & name(c) = s_crit & issuer(tag(c)) = i & version(c) = v\n";

pub const EXAMPLE_PREF_POLICY: &str = "const m1: M = 9\nconst m2: M = 11\nconst s_crit: N = \"openssl\"\n\
const i: I = \"https://openssl.org\"\nconst v_min: V = \"3.0.0\"\n\
(manu(r) = m1 | manu(r) = m2) & forall c: C. (software(r, c) & name(c) = s_crit & issuer(tag(c)) = i) -> version(c) >= v_min\n";

/// Containment of the critical-software example pair at stack bound `k`.
pub fn bench_containment(k: usize, cfg: &BenchConfig) -> BenchResult {
    let path = parse_policy(EXAMPLE_PATH_POLICY).expect("example parses");
    let pref = parse_policy(EXAMPLE_PREF_POLICY).expect("example parses");
    let bounds = ContainmentBounds { k, ..Default::default() };
    let small = BenchConfig { batch: cfg.batch.div_ceil(50).max(1), ..*cfg };
    let ns = measure(&small, |_| (), |_, _| {
        black_box(check_containment(&path, &pref, &bounds).expect("bound constants"));
    });
    BenchResult { component: "containment", param: k as u64, ns_per_op: ns }
}

/// Least-squares fit of y on x; returns (slope, intercept, r²).
pub fn linear_fit(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let syy: f64 = points.iter().map(|(_, y)| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, my - slope * mx, r2)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MapCounts {
    pub if_if: usize,
    pub if_ip: usize,
    pub ip_if: usize,
    pub d: usize,
    /// Indices per map entry.
    pub indices: usize,
}

/// Maps with the requested number of distinct entries per section.
pub fn synthetic_maps(c: &MapCounts) -> PolicyMaps {
    let set: BTreeSet<_> = (1..=c.indices as u16).map(PolicyIndex).collect();
    let mut imap = BTreeMap::new();
    let mut pairs = (1u16..).flat_map(|a| (1u16..=a).map(move |b| (a, b))).filter(|(a, b)| a != b);
    for _ in 0..c.if_if {
        let (a, b) = pairs.next().expect("unbounded");
        imap.insert(IfIpPair::interfaces(a, b), set.clone());
    }
    let prefix = |i: usize| {
        let n = i as u32;
        IpPrefix::new(HostAddr((0x0a00_0000 | (n << 8)).to_be_bytes()), 24).expect("aligned")
    };
    for i in 0..c.if_ip {
        let k = IfIpPair::new(Endpoint::If(1), Endpoint::Ip(prefix(i))).expect("mixed pair");
        imap.insert(k, set.clone());
    }
    for i in 0..c.ip_if {
        let k = IfIpPair::new(Endpoint::Ip(prefix(i)), Endpoint::If(1)).expect("mixed pair");
        imap.insert(k, set.clone());
    }
    let dmap = (1..=c.d as u16).map(|i| (PolicyIndex(i), PolicyId::global(i as u32))).collect();
    PolicyMaps { imap, dmap }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SizeReport {
    pub sizes: SectionSizes,
    pub detached_marker: usize,
}

pub fn size_report(c: &MapCounts) -> SizeReport {
    let (_, sizes) = encode_maps_measured(&synthetic_maps(c)).expect("counts fit in u16");
    SizeReport { sizes, detached_marker: DETACHED_MARKER_LEN }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn headline_sizes() {
        let r = size_report(&MapCounts { if_if: 500, if_ip: 100, ip_if: 0, d: 100, indices: 5 });
        assert_eq!(r.sizes.if_if, 7500);
        assert_eq!(r.sizes.if_ip, 2200);
        assert_eq!(r.sizes.d, 800);
        assert_eq!(r.detached_marker, 18);
        let empty = size_report(&MapCounts::default());
        assert_eq!(empty.sizes.total(), empty.sizes.headers);
    }

    #[test]
    fn fit_of_a_line() {
        let (m, b, r2) = linear_fit(&[(1.0, 3.0), (2.0, 5.0), (4.0, 9.0)]);
        assert!((m - 2.0).abs() < 1e-9 && (b - 1.0).abs() < 1e-9 && (r2 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn benches_run() {
        let cfg = BenchConfig { batch: 20, batches: 3, warmup: 1 };
        assert!(bench_router(10, &cfg).ns_per_op > 0.0);
        assert!(bench_build(2, &cfg).ns_per_op > 0.0);
        assert!(bench_containment(1, &cfg).ns_per_op > 0.0);
    }
}
