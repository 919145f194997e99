//! The `fabrid` command line.
//!
//! Exit codes: 0 on success (including negative containment verdicts),
//! 1 on domain errors, 2 on usage or configuration errors.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use fabrid_core::addr::AsId;
use fabrid_core::control_plane::{filter_paths, FilterOptions, HopVerdict, PathHop, PolicyIndex, RankedPath};
use fabrid_core::data_plane::PathCheck;
use fabrid_core::policy::{check_containment, ContainmentBounds, RouterSetup, Verdict};

use crate::beacon::{run_beaconing, segment_names, verify_store, SegmentStore, EPOCH_NS};
use crate::bench::{bench_build, bench_containment, bench_router, linear_fit, size_report, BenchConfig, MapCounts};
use crate::files::{dump_segments, read_policy, read_segments, read_trust};
use crate::registry::CachedResolver;
use crate::sim::{Fault, FaultKind, Outcome, RttScenario, Simulator};
use crate::topology::Topology;

#[derive(Debug, Parser)]
#[command(name = "fabrid", version, about = "Policy-aware path selection: beaconing, paths, packets and policies")]
pub struct Cli {
    /// Overrides the topology seed.
    #[arg(long, env = "FABRID_SEED", global = true)]
    pub seed: Option<u64>,

    #[arg(long, value_enum, default_value_t = Format::Text, global = true)]
    pub format: Format,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Runs beaconing and lists the stored segments.
    Beacon(BeaconArgs),
    /// Lists candidate paths ranked against a preference policy.
    Paths(PathsArgs),
    /// Sends probes along a path and reports round-trip times.
    Send(SendArgs),
    /// Decides whether a path policy is contained in a preference policy.
    PolicyCheck(PolicyCheckArgs),
    /// Prints encoded policy-map sizes for the given entry counts.
    Sizes(SizesArgs),
    /// Runs micro-benchmarks.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct BeaconArgs {
    #[arg(long)]
    pub topology: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub rounds: u32,
    /// Writes the segment store here for later `paths --segments`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PathsArgs {
    #[arg(long)]
    pub topology: PathBuf,
    #[arg(long)]
    pub src: String,
    #[arg(long)]
    pub dst: String,
    /// Preference policy file; without one, paths are listed unranked.
    #[arg(long)]
    pub pref: Option<PathBuf>,
    /// Trusted ASes; falls back to the topology's `trust` list, then to every AS.
    #[arg(long)]
    pub trust: Option<PathBuf>,
    /// Segment dump from `beacon --out`; beaconing runs when omitted.
    #[arg(long)]
    pub segments: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub rounds: u32,
    /// Software stack bound for containment checks.
    #[arg(long, default_value_t = 2)]
    pub k: usize,
}

#[derive(Debug, Args)]
pub struct SendArgs {
    #[arg(long)]
    pub topology: PathBuf,
    #[arg(long)]
    pub src: String,
    #[arg(long)]
    pub dst: String,
    #[arg(long, default_value_t = 0)]
    pub index: u16,
    #[arg(long, default_value_t = 60)]
    pub count: u64,
    #[arg(long, default_value_t = 1000.0)]
    pub interval_ms: f64,
    /// Candidate path number, shortest first.
    #[arg(long, default_value_t = 0)]
    pub path: usize,
    #[arg(long, default_value_t = 3)]
    pub rounds: u32,
    /// `<as>:<skip-hvf-update|tamper-index|wrong-route>`; repeatable.
    #[arg(long, value_parser = parse_fault_arg)]
    pub fault: Vec<(String, FaultKind)>,
}

#[derive(Debug, Args)]
pub struct PolicyCheckArgs {
    /// Path policy file.
    #[arg(long)]
    pub policy: PathBuf,
    /// Preference policy file.
    #[arg(long)]
    pub pref: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    #[arg(long, default_value_t = ContainmentBounds::default().node_budget)]
    pub budget: u64,
}

#[derive(Debug, Args)]
pub struct SizesArgs {
    #[arg(long, default_value_t = 500)]
    pub if_if: usize,
    #[arg(long, default_value_t = 0)]
    pub if_ip: usize,
    #[arg(long, default_value_t = 0)]
    pub ip_if: usize,
    #[arg(long, default_value_t = 100)]
    pub d: usize,
    /// Indices per map entry.
    #[arg(long, default_value_t = 5)]
    pub indices: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Component {
    Router,
    Build,
    Containment,
    All,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum, default_value_t = Component::All)]
    pub component: Component,
    #[arg(long, default_value_t = BenchConfig::default().batch)]
    pub batch: usize,
    #[arg(long, default_value_t = BenchConfig::default().batches)]
    pub batches: usize,
}

fn parse_fault_arg(s: &str) -> Result<(String, FaultKind), String> {
    let (who, kind) = s.rsplit_once(':').ok_or("expected <as>:<kind>")?;
    let kind = match kind {
        "skip-hvf-update" => FaultKind::SkipHvfUpdate,
        "tamper-index" => FaultKind::TamperIndex,
        "wrong-route" => FaultKind::WrongRoute,
        other => return Err(format!("unknown fault kind {other}")),
    };
    Ok((who.to_string(), kind))
}

/// Errors sorted by exit code.
#[derive(Debug)]
enum Failure {
    Domain(anyhow::Error),
    Usage(anyhow::Error),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Domain(_) => 1,
            Failure::Usage(_) => 2,
        }
    }
}

fn usage<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Usage(e.into())
}

fn domain<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Domain(e.into())
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return e.exit_code();
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(f) => {
            let (Failure::Domain(e) | Failure::Usage(e)) = &f;
            let _ = writeln!(err, "error: {e:#}");
            f.code()
        }
    }
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), Failure> {
    match &cli.command {
        Command::Beacon(a) => cmd_beacon(cli, a, out),
        Command::Paths(a) => cmd_paths(cli, a, out),
        Command::Send(a) => cmd_send(cli, a, out),
        Command::PolicyCheck(a) => cmd_policy_check(cli, a, out),
        Command::Sizes(a) => cmd_sizes(cli, a, out),
        Command::Bench(a) => cmd_bench(cli, a, out),
    }
    .and_then(|()| out.flush().map_err(domain))
}

fn load_topology(path: &Path, seed: Option<u64>) -> Result<Topology, Failure> {
    Topology::load_with_seed(path, seed).with_context(|| path.display().to_string()).map_err(usage)
}

fn resolve_as(topo: &Topology, name: &str) -> Result<AsId, Failure> {
    topo.resolve(name).ok_or_else(|| usage(anyhow::anyhow!("unknown AS {name}")))
}

fn io(e: std::io::Error) -> Failure {
    domain(e)
}

fn cmd_beacon(cli: &Cli, a: &BeaconArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let topo = load_topology(&a.topology, cli.seed)?;
    let store = run_beaconing(&topo, a.rounds);
    verify_store(&store, &topo, EPOCH_NS + a.rounds as u64 * crate::beacon::ROUND_NS).map_err(domain)?;
    let mut rows: Vec<(&str, String, Vec<String>)> = Vec::new();
    for (kind, map) in [("up", &store.down), ("core", &store.core)] {
        for (at, pcbs) in map {
            for p in pcbs {
                rows.push((kind, topo.name(*at), segment_names(&topo, p)));
            }
        }
    }
    match cli.format {
        Format::Text => {
            for (kind, at, names) in &rows {
                writeln!(out, "{kind:<4} at {at:<8} {}", names.join("-")).map_err(io)?;
            }
            for d in &store.diagnostics {
                writeln!(out, "diagnostic: {}: {}", topo.name(d.as_id), d.error).map_err(io)?;
            }
        }
        Format::Csv => {
            writeln!(out, "kind,at,segment").map_err(io)?;
            for (kind, at, names) in &rows {
                writeln!(out, "{kind},{at},{}", names.join("-")).map_err(io)?;
            }
        }
    }
    if let Some(p) = &a.out {
        std::fs::write(p, dump_segments(&store)).with_context(|| p.display().to_string()).map_err(domain)?;
    }
    Ok(())
}

fn verdict_label(v: &HopVerdict) -> String {
    match v {
        HopVerdict::Compliant(i) => format!("compliant({})", i.0),
        HopVerdict::NonCompliant => "non-compliant".into(),
        HopVerdict::Untrusted => "untrusted".into(),
        HopVerdict::NoAnnouncement { warning: false } => "no-announcement".into(),
        HopVerdict::NoAnnouncement { warning: true } => "unresolved".into(),
    }
}

/// Packet index per hop after the first: the compliant index or 0.
pub fn index_vector(r: &RankedPath) -> Vec<PolicyIndex> {
    r.verdicts
        .iter()
        .skip(1)
        .map(|v| match v {
            HopVerdict::Compliant(i) => *i,
            _ => PolicyIndex::NONE,
        })
        .collect()
}

fn cmd_paths(cli: &Cli, a: &PathsArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let topo = load_topology(&a.topology, cli.seed)?;
    let (src, dst) = (resolve_as(&topo, &a.src)?, resolve_as(&topo, &a.dst)?);
    let pref = a.pref.as_deref().map(read_policy).transpose().map_err(usage)?;
    let trusted: BTreeSet<AsId> = match &a.trust {
        Some(p) => read_trust(p, &topo).map_err(usage)?,
        None => topo.trusted.clone(),
    };
    let store: SegmentStore = match &a.segments {
        Some(p) => read_segments(p).map_err(usage)?,
        None => run_beaconing(&topo, a.rounds),
    };
    let paths = store.paths(&topo, src, dst);
    if paths.is_empty() {
        writeln!(out, "no paths from {} to {}", a.src, a.dst).map_err(io)?;
        return Ok(());
    }
    let resolver = CachedResolver::new(&topo.registries, &topo.trust);
    let opts = FilterOptions {
        src_host: Some(topo.get(src).expect("resolved").host(1)),
        dst_host: Some(topo.get(dst).expect("resolved").host(2)),
        bounds: ContainmentBounds { k: a.k, ..Default::default() },
    };
    let ranked: Vec<RankedPath> = match &pref {
        Some(p) => filter_paths(&paths, p, &trusted, &resolver, &opts),
        None => paths
            .iter()
            .map(|p| RankedPath { path: p.clone(), verdicts: vec![HopVerdict::NoAnnouncement { warning: false }; p.hops.len()] })
            .collect(),
    };
    // Without a preference there is nothing to judge; show what each hop offers.
    let label = |h: &PathHop, v: &HopVerdict| -> String {
        if pref.is_some() {
            return verdict_label(v);
        }
        if !trusted.contains(&h.as_id) {
            return "untrusted".into();
        }
        match &h.maps {
            Some(m) if !m.dmap.is_empty() => {
                let ids: Vec<_> = m.dmap.iter().map(|(i, pid)| format!("{}={pid}", i.0)).collect();
                format!("announces {}", ids.join(" "))
            }
            Some(_) => "announces nothing".into(),
            None => "maps detached".into(),
        }
    };
    if cli.format == Format::Csv {
        writeln!(out, "rank,path,verdicts,indices").map_err(io)?;
    }
    for (n, r) in ranked.iter().enumerate() {
        let names: Vec<_> = r.path.hops.iter().map(|h| topo.name(h.as_id)).collect();
        let idx: Vec<_> = index_vector(r).iter().map(|i| i.0.to_string()).collect();
        match cli.format {
            Format::Text => {
                writeln!(out, "path {}: {}", n + 1, names.join(" > ")).map_err(io)?;
                for (h, v) in r.path.hops.iter().zip(&r.verdicts) {
                    writeln!(out, "  {:<8} {:<16} {}", topo.name(h.as_id), h.as_id.to_string(), label(h, v))
                        .map_err(io)?;
                }
                writeln!(out, "  indices: [{}]", idx.join(", ")).map_err(io)?;
            }
            Format::Csv => {
                let vs: Vec<_> = r.path.hops.iter().zip(&r.verdicts).map(|(h, v)| label(h, v)).collect();
                writeln!(out, "{},{},{},{}", n + 1, names.join(">"), vs.join("|"), idx.join(";")).map_err(io)?;
            }
        }
    }
    Ok(())
}

fn cmd_send(cli: &Cli, a: &SendArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let topo = load_topology(&a.topology, cli.seed)?;
    let (src, dst) = (resolve_as(&topo, &a.src)?, resolve_as(&topo, &a.dst)?);
    if !(a.interval_ms.is_finite() && a.interval_ms >= 0.0) {
        return Err(usage(anyhow::anyhow!("--interval-ms must be finite and non-negative")));
    }
    let store = run_beaconing(&topo, a.rounds);
    let mut sim = Simulator::new(&topo, &store);
    for (who, kind) in &a.fault {
        let as_id = resolve_as(&topo, who)?;
        sim.inject_fault(Fault { as_id, kind: *kind }).map_err(domain)?;
    }
    let sc = RttScenario {
        index: a.index,
        count: a.count,
        interval_ms: a.interval_ms,
        path: a.path,
        seed: cli.seed,
        ..RttScenario::new(src, dst, a.index)
    };
    let run = sim.run_rtt_experiment(&sc).map_err(domain)?;
    match cli.format {
        Format::Csv => write!(out, "{}", run.to_csv()).map_err(io)?,
        Format::Text => {
            let names: Vec<_> = run.path.iter().map(|x| topo.name(*x)).collect();
            let idx: Vec<_> = run.indices.iter().skip(1).map(|i| i.0.to_string()).collect();
            writeln!(out, "path: {}", names.join(" > ")).map_err(io)?;
            writeln!(out, "indices: [{}]", idx.join(", ")).map_err(io)?;
            let mean = run.mean_rtt_ms().map_or_else(|| "n/a".to_string(), |m| format!("{m:.2} ms"));
            writeln!(out, "sent {} delivered {} mean rtt {mean}", run.outcomes.len(), run.delivered()).map_err(io)?;
            for (seq, o) in run.outcomes.iter().enumerate() {
                let line = match o {
                    Outcome::Delivered(PathCheck::PathValid) => continue,
                    Outcome::Delivered(PathCheck::PathInvalid(h)) => format!("path invalid at hops {h:?}"),
                    Outcome::Dropped { at, reason } => format!("dropped at {}: {reason:?}", topo.name(*at)),
                    Outcome::ControlReply { msg, authentic } => {
                        format!("control reply from {} ({:?}, authentic: {authentic})", topo.name(msg.as_id), msg.kind)
                    }
                    Outcome::DestDropped(e) => format!("destination dropped: {e}"),
                };
                writeln!(out, "packet {seq}: {line}").map_err(io)?;
            }
        }
    }
    Ok(())
}

pub fn render_setup(r: &RouterSetup) -> String {
    let sw: Vec<_> = r
        .software()
        .iter()
        .map(|c| format!("{} {} (tag {:?}, issuer {:?})", c.name, c.version, c.tag, c.issuer))
        .collect();
    format!("manufacturer {} software [{}]", r.manufacturer(), sw.join("; "))
}

fn cmd_policy_check(cli: &Cli, a: &PolicyCheckArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let path = read_policy(&a.policy).map_err(usage)?;
    let pref = read_policy(&a.pref).map_err(usage)?;
    let bounds = ContainmentBounds { k: a.k, node_budget: a.budget };
    let verdict = check_containment(&path, &pref, &bounds).map_err(usage)?;
    let (label, witness) = match &verdict {
        Verdict::Contained => ("Contained".to_string(), None),
        Verdict::NotContained(w) => ("NotContained".to_string(), Some(render_setup(w))),
        Verdict::Unknown => (format!("Unknown(budget {})", a.budget), None),
    };
    match cli.format {
        Format::Text => {
            writeln!(out, "{label}").map_err(io)?;
            if let Some(w) = &witness {
                writeln!(out, "witness: {w}").map_err(io)?;
            }
        }
        Format::Csv => {
            writeln!(out, "verdict,k,witness").map_err(io)?;
            writeln!(out, "{label},{},\"{}\"", a.k, witness.unwrap_or_default().replace('"', "\"\"")).map_err(io)?;
        }
    }
    if a.k == 0 {
        writeln!(out, "note: k = 0 only considers routers with empty software stacks").map_err(io)?;
    }
    Ok(())
}

fn cmd_sizes(cli: &Cli, a: &SizesArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let counts = MapCounts { if_if: a.if_if, if_ip: a.if_ip, ip_if: a.ip_if, d: a.d, indices: a.indices };
    if [a.if_if, a.if_ip, a.ip_if, a.d].iter().any(|&n| n > u16::MAX as usize) || a.indices > u16::MAX as usize {
        return Err(usage(anyhow::anyhow!("counts must fit in 16 bits")));
    }
    let r = size_report(&counts);
    let s = r.sizes;
    let rows = [
        ("if-if", a.if_if.to_string(), s.if_if),
        ("if-ip", a.if_ip.to_string(), s.if_ip),
        ("ip-if", a.ip_if.to_string(), s.ip_if),
        ("d", a.d.to_string(), s.d),
        ("headers", String::new(), s.headers),
        ("total", String::new(), s.total()),
        ("detached-marker", String::new(), r.detached_marker),
    ];
    match cli.format {
        Format::Text => {
            writeln!(out, "{:<16} {:>8} {:>8}", "section", "entries", "bytes").map_err(io)?;
            for (name, n, b) in rows {
                writeln!(out, "{name:<16} {n:>8} {b:>8}").map_err(io)?;
            }
        }
        Format::Csv => {
            writeln!(out, "section,entries,bytes").map_err(io)?;
            for (name, n, b) in rows {
                writeln!(out, "{name},{n},{b}").map_err(io)?;
            }
        }
    }
    Ok(())
}

fn cmd_bench(cli: &Cli, a: &BenchArgs, out: &mut dyn Write) -> Result<(), Failure> {
    if a.batch == 0 || a.batches == 0 {
        return Err(usage(anyhow::anyhow!("--batch and --batches must be positive")));
    }
    let cfg = BenchConfig { batch: a.batch, batches: a.batches, ..Default::default() };
    let want = |c| a.component == c || a.component == Component::All;
    let mut results = Vec::new();
    if want(Component::Router) {
        results.extend([10, 1000].map(|n| bench_router(n, &cfg)));
    }
    if want(Component::Build) {
        results.extend([2, 4, 8, 16].map(|h| bench_build(h, &cfg)));
    }
    if want(Component::Containment) {
        results.extend([1, 2].map(|k| bench_containment(k, &cfg)));
    }
    match cli.format {
        Format::Text => {
            for r in &results {
                writeln!(out, "{:<16} param {:<6} {:>12.1} ns/op {:>14.0} ops/s", r.component, r.param, r.ns_per_op, r.ops_per_sec())
                    .map_err(io)?;
            }
        }
        Format::Csv => {
            writeln!(out, "component,param,ns_per_op,ops_per_sec").map_err(io)?;
            for r in &results {
                writeln!(out, "{},{},{:.1},{:.0}", r.component, r.param, r.ns_per_op, r.ops_per_sec()).map_err(io)?;
            }
            return Ok(());
        }
    }
    let of = |c: &str| results.iter().filter(|r| r.component == c).collect::<Vec<_>>();
    if let [small, large] = of("router_process")[..] {
        writeln!(out, "lookup ratio 1000/10: {:.2}", large.ns_per_op / small.ns_per_op).map_err(io)?;
    }
    let builds: Vec<_> = of("build_packet").iter().map(|r| (r.param as f64, r.ns_per_op)).collect();
    if builds.len() > 1 {
        let (slope, _, r2) = linear_fit(&builds);
        writeln!(out, "build_packet: {slope:.1} ns per hop, r2 {r2:.3}").map_err(io)?;
    }
    Ok(())
}
