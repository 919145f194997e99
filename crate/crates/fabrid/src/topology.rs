//! Topology files and the keyed network model built from them.
//!
//! ```toml
//! seed = 7
//! trust = ["C", "G"]  # ASes the path user trusts; every AS when omitted
//!
//! [[policies]]
//! id = "G/1"
//! text = "const m: M = 9\nmanu(r) = m"
//!
//! [[ases]]
//! id = "1-ff00:0:110"
//! name = "C"
//! core = true
//! hosts = "10.1.0.0/16"
//! announce = [{ index = 1, policy = "G/1" }]
//! routes = [
//!   { id = 0, base_ms = 1.0 },
//!   { id = 1, base_ms = 0.5, indices = [1] },
//! ]
//!
//! [[links]]
//! a = "C"
//! a_if = 1
//! b = "G"
//! b_if = 1
//! kind = "parent"     # a is the parent of b; "core" links two core ASes
//! base_ms = 10.0
//! ```
//!
//! Every AS gets an AS secret and a signing key drawn in file order from a
//! ChaCha8 stream seeded with `seed`; the global authority key comes first.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use fabrid_core::addr::{AsId, HostAddr};
use fabrid_core::control_plane::{
    Endpoint, IfIpPair, InterfaceId, IpPrefix, PolicyIndex, PolicyMaps, TrustStore,
};
use fabrid_core::crypto::{Principal, SigKeyPair, SymKey};
use fabrid_core::data_plane::{ForwardingTable, RouteId};
use fabrid_core::drkey::AsSecret;
use fabrid_core::policy::parse_policy;
use fabrid_core::registry::{PolicyId, Registry, Scope};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::Deserialize;
use thiserror::Error;

use crate::registry::{parse_policy_id, RegistryService};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("cannot read topology: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse topology: {0}")]
    Parse(#[from] toml::de::Error),
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.into(), reason: reason.into() }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyFile {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub policies: Vec<PolicyDecl>,
    pub ases: Vec<AsDecl>,
    #[serde(default)]
    pub links: Vec<LinkDecl>,
    pub trust: Option<Vec<String>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyDecl {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsDecl {
    pub id: String,
    pub name: Option<String>,
    #[serde(default)]
    pub core: bool,
    pub hosts: Option<String>,
    #[serde(default)]
    pub announce: Vec<AnnounceDecl>,
    #[serde(default)]
    pub routes: Vec<RouteDecl>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnounceDecl {
    pub index: u16,
    pub policy: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteDecl {
    pub id: u32,
    #[serde(default)]
    pub base_ms: f64,
    #[serde(default)]
    pub jitter_mean_ms: f64,
    #[serde(default = "default_sigma")]
    pub jitter_sigma: f64,
    /// Non-zero indices this route satisfies. Routes without indices serve
    /// index 0.
    #[serde(default)]
    pub indices: Vec<u16>,
}

fn default_sigma() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkKind {
    Core,
    Parent,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkDecl {
    pub a: String,
    pub a_if: u16,
    pub b: String,
    pub b_if: u16,
    pub kind: LinkKind,
    #[serde(default)]
    pub base_ms: f64,
    #[serde(default)]
    pub jitter_mean_ms: f64,
    #[serde(default = "default_sigma")]
    pub jitter_sigma: f64,
}

/// Fixed delay plus a log-normal jitter with the given mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Latency {
    pub base_ms: f64,
    pub jitter_mean_ms: f64,
    pub jitter_sigma: f64,
}

impl Latency {
    pub fn mean_ms(&self) -> f64 {
        self.base_ms + self.jitter_mean_ms
    }

    pub fn sample_ms(&self, rng: &mut impl Rng) -> f64 {
        if self.jitter_mean_ms <= 0.0 {
            return self.base_ms;
        }
        let s = self.jitter_sigma;
        let mu = self.jitter_mean_ms.ln() - s * s / 2.0;
        self.base_ms + LogNormal::new(mu, s).expect("finite parameters").sample(rng)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntraAsRoute {
    pub id: RouteId,
    pub latency: Latency,
    /// Always contains index 0 for default routes.
    pub indices: BTreeSet<PolicyIndex>,
    pub policies: Vec<PolicyId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub a: AsId,
    pub a_if: InterfaceId,
    pub b: AsId,
    pub b_if: InterfaceId,
    pub kind: LinkKind,
    pub latency: Latency,
}

impl Link {
    /// The far end as seen from `from`, if `from` is an endpoint.
    pub fn other(&self, from: AsId) -> Option<(InterfaceId, AsId, InterfaceId)> {
        if from == self.a {
            Some((self.a_if, self.b, self.b_if))
        } else if from == self.b {
            Some((self.b_if, self.a, self.a_if))
        } else {
            None
        }
    }
}

#[derive(Debug, Clone)]
pub struct AsNode {
    pub id: AsId,
    pub name: String,
    pub core: bool,
    pub secret: AsSecret,
    pub key: SigKeyPair,
    pub hosts: IpPrefix,
    pub announce: BTreeMap<PolicyIndex, PolicyId>,
    pub routes: Vec<IntraAsRoute>,
    pub interfaces: BTreeSet<InterfaceId>,
}

impl AsNode {
    /// Host `n` inside this AS's prefix.
    pub fn host(&self, n: u32) -> HostAddr {
        HostAddr((self.hosts.addr.to_u32() + n).to_be_bytes())
    }

    pub fn serves(&self, index: PolicyIndex) -> bool {
        self.routes.iter().any(|r| r.indices.contains(&index))
    }

    pub fn forwarding_table(&self) -> ForwardingTable {
        let routes_for = |i: PolicyIndex| -> Vec<RouteId> {
            self.routes.iter().filter(|r| r.indices.contains(&i)).map(|r| r.id).collect()
        };
        let mut t = ForwardingTable::new(routes_for(PolicyIndex::NONE));
        let all: BTreeSet<_> = self.routes.iter().flat_map(|r| r.indices.iter().copied()).collect();
        for i in all {
            t.insert(i, routes_for(i));
        }
        t
    }

    pub fn route(&self, id: RouteId) -> Option<&IntraAsRoute> {
        self.routes.iter().find(|r| r.id == id)
    }

    /// Maps as announced in beacons: every served, announced index on every
    /// ordered interface pair, plus pairs with the local host range.
    pub fn policy_maps(&self) -> PolicyMaps {
        let served: BTreeSet<_> = self.announce.keys().copied().filter(|i| self.serves(*i)).collect();
        let mut maps = PolicyMaps { imap: BTreeMap::new(), dmap: self.announce.clone() };
        if served.is_empty() {
            return maps;
        }
        for a in &self.interfaces {
            for b in &self.interfaces {
                if a != b {
                    maps.imap.insert(IfIpPair::interfaces(*a, *b), served.clone());
                }
            }
            let to_hosts = IfIpPair::new(Endpoint::If(*a), Endpoint::Ip(self.hosts)).expect("one side is an interface");
            let from_hosts = IfIpPair::new(Endpoint::Ip(self.hosts), Endpoint::If(*a)).expect("one side is an interface");
            maps.imap.insert(to_hosts, served.clone());
            maps.imap.insert(from_hosts, served.clone());
        }
        maps
    }
}

#[derive(Debug)]
pub struct Topology {
    pub seed: u64,
    pub ases: Vec<AsNode>,
    pub links: Vec<Link>,
    pub trust: TrustStore,
    /// ASes whose announcements the path user believes.
    pub trusted: BTreeSet<AsId>,
    pub global_key: SigKeyPair,
    pub registries: RegistryService,
    names: BTreeMap<String, AsId>,
}

impl Topology {
    pub fn load(path: &Path) -> Result<Topology, ConfigError> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    /// Loads a topology, replacing its seed when one is given.
    pub fn load_with_seed(path: &Path, seed: Option<u64>) -> Result<Topology, ConfigError> {
        let mut file: TopologyFile = toml::from_str(&fs::read_to_string(path)?)?;
        if let Some(s) = seed {
            file.seed = s;
        }
        Self::build(file)
    }

    pub fn from_toml(text: &str) -> Result<Topology, ConfigError> {
        Self::build(toml::from_str(text)?)
    }

    pub fn build(file: TopologyFile) -> Result<Topology, ConfigError> {
        let mut rng = ChaCha8Rng::seed_from_u64(file.seed);
        let global_key = SigKeyPair::from_seed(Principal::GlobalAuthority, rng.gen());
        let mut names = BTreeMap::new();
        let mut ases: Vec<AsNode> = Vec::new();
        for (i, d) in file.ases.iter().enumerate() {
            let field = |f: &str| format!("ases[{i}].{f}");
            let id: AsId = d.id.parse().map_err(|e| invalid(field("id"), format!("{e}")))?;
            if ases.iter().any(|a| a.id == id) {
                return Err(invalid(field("id"), format!("duplicate AS {id}")));
            }
            let name = d.name.clone().unwrap_or_else(|| id.to_string());
            if names.insert(name.clone(), id).is_some() || (name != d.id && names.insert(d.id.clone(), id).is_some()) {
                return Err(invalid(field("name"), format!("duplicate name {name}")));
            }
            let hosts = match &d.hosts {
                Some(h) => parse_prefix(h).ok_or_else(|| invalid(field("hosts"), format!("bad prefix {h}")))?,
                None => IpPrefix::new(HostAddr([10, (i / 256) as u8, (i % 256) as u8, 0]), 24).expect("valid"),
            };
            let mut announce = BTreeMap::new();
            for (j, a) in d.announce.iter().enumerate() {
                let f = field(&format!("announce[{j}]"));
                if a.index == 0 {
                    return Err(invalid(f, "index 0 cannot be announced"));
                }
                let pid = parse_policy_id(&a.policy).ok_or_else(|| invalid(&f, format!("bad policy id {}", a.policy)))?;
                if matches!(pid.scope, Scope::Local(o) if o != id) {
                    return Err(invalid(f, "local policy of another AS"));
                }
                if announce.insert(PolicyIndex(a.index), pid).is_some() {
                    return Err(invalid(f, format!("index {} announced twice", a.index)));
                }
            }
            let mut routes: Vec<IntraAsRoute> = Vec::new();
            for (j, r) in d.routes.iter().enumerate() {
                let f = field(&format!("routes[{j}]"));
                if routes.iter().any(|x| x.id == RouteId(r.id)) {
                    return Err(invalid(f, format!("duplicate route id {}", r.id)));
                }
                let latency = latency(r.base_ms, r.jitter_mean_ms, r.jitter_sigma).map_err(|e| invalid(&f, e))?;
                let indices: BTreeSet<_> = if r.indices.is_empty() {
                    BTreeSet::from([PolicyIndex::NONE])
                } else {
                    r.indices.iter().map(|i| PolicyIndex(*i)).collect()
                };
                let policies = indices.iter().filter_map(|i| announce.get(i).copied()).collect();
                routes.push(IntraAsRoute { id: RouteId(r.id), latency, indices, policies });
            }
            if routes.is_empty() {
                routes.push(IntraAsRoute {
                    id: RouteId(0),
                    latency: Latency { base_ms: 0.0, jitter_mean_ms: 0.0, jitter_sigma: 0.0 },
                    indices: BTreeSet::from([PolicyIndex::NONE]),
                    policies: Vec::new(),
                });
            }
            if !routes.iter().any(|r| r.indices.contains(&PolicyIndex::NONE)) {
                return Err(invalid(field("routes"), "no default route for index 0"));
            }
            let secret = AsSecret { key: SymKey::from_bytes(rng.gen()), owner: id };
            let key = SigKeyPair::from_seed(Principal::As(id), rng.gen());
            ases.push(AsNode {
                id,
                name,
                core: d.core,
                secret,
                key,
                hosts,
                announce,
                routes,
                interfaces: BTreeSet::new(),
            });
        }
        let lookup = |names: &BTreeMap<String, AsId>, s: &str, f: String| {
            names.get(s).copied().ok_or_else(|| invalid(f, format!("unknown AS {s}")))
        };
        let mut links = Vec::new();
        for (i, l) in file.links.iter().enumerate() {
            let f = |x: &str| format!("links[{i}].{x}");
            let a = lookup(&names, &l.a, f("a"))?;
            let b = lookup(&names, &l.b, f("b"))?;
            if a == b {
                return Err(invalid(f("b"), "self loop"));
            }
            if l.a_if == 0 || l.b_if == 0 {
                return Err(invalid(f("a_if"), "interface 0 is reserved"));
            }
            for (who, ifid, name) in [(a, l.a_if, "a_if"), (b, l.b_if, "b_if")] {
                let node = ases.iter_mut().find(|n| n.id == who).expect("looked up");
                if !node.interfaces.insert(ifid) {
                    return Err(invalid(f(name), format!("interface {ifid} of {who} used twice")));
                }
            }
            let core_ok = |x: AsId| ases.iter().any(|n| n.id == x && n.core);
            if l.kind == LinkKind::Core && !(core_ok(a) && core_ok(b)) {
                return Err(invalid(f("kind"), "core links must join two core ASes"));
            }
            let latency = latency(l.base_ms, l.jitter_mean_ms, l.jitter_sigma).map_err(|e| invalid(f("base_ms"), e))?;
            links.push(Link { a, a_if: l.a_if, b, b_if: l.b_if, kind: l.kind, latency });
        }
        check_connected(&ases, &links)?;

        let mut trust = TrustStore::new();
        trust.insert(global_key.public());
        let mut regs = vec![Registry::new(global_key.clone())];
        for n in &ases {
            trust.insert(n.key.public());
            regs.push(Registry::new(n.key.clone()));
        }
        let registries = RegistryService::new(regs);
        for (i, p) in file.policies.iter().enumerate() {
            let f = |x: &str| format!("policies[{i}].{x}");
            let id = parse_policy_id(&p.id).ok_or_else(|| invalid(f("id"), format!("bad policy id {}", p.id)))?;
            let policy = parse_policy(&p.text).map_err(|e| invalid(f("text"), e.to_string()))?;
            registries
                .register(id.scope.owner(), id, &policy, 0)
                .map_err(|e| invalid(f("id"), e.to_string()))?;
        }
        let trusted = match &file.trust {
            None => ases.iter().map(|n| n.id).collect(),
            Some(list) => list
                .iter()
                .enumerate()
                .map(|(i, s)| lookup(&names, s, format!("trust[{i}]")))
                .collect::<Result<BTreeSet<_>, _>>()?,
        };
        Ok(Topology { seed: file.seed, ases, links, trust, trusted, global_key, registries, names })
    }

    pub fn get(&self, id: AsId) -> Option<&AsNode> {
        self.ases.iter().find(|a| a.id == id)
    }

    pub fn get_mut(&mut self, id: AsId) -> Option<&mut AsNode> {
        self.ases.iter_mut().find(|a| a.id == id)
    }

    /// Resolves a name from the file or an ISD-AS string.
    pub fn resolve(&self, name: &str) -> Option<AsId> {
        self.names.get(name).copied().or_else(|| {
            let id: AsId = name.parse().ok()?;
            self.get(id).map(|a| a.id)
        })
    }

    pub fn name(&self, id: AsId) -> String {
        self.get(id).map_or_else(|| id.to_string(), |a| a.name.clone())
    }

    /// Links touching `id`.
    pub fn links_of(&self, id: AsId) -> impl Iterator<Item = &Link> {
        self.links.iter().filter(move |l| l.a == id || l.b == id)
    }

    /// The link leaving `id` on interface `ifid`.
    pub fn link_at(&self, id: AsId, ifid: InterfaceId) -> Option<&Link> {
        self.links
            .iter()
            .find(|l| (l.a == id && l.a_if == ifid) || (l.b == id && l.b_if == ifid))
    }
}

fn latency(base: f64, jitter: f64, sigma: f64) -> Result<Latency, String> {
    if !(base.is_finite() && base >= 0.0 && jitter.is_finite() && jitter >= 0.0 && sigma.is_finite() && sigma >= 0.0) {
        return Err("latencies must be finite and non-negative".into());
    }
    Ok(Latency { base_ms: base, jitter_mean_ms: jitter, jitter_sigma: sigma })
}

pub fn parse_prefix(s: &str) -> Option<IpPrefix> {
    let (a, l) = s.split_once('/').unwrap_or((s, "32"));
    IpPrefix::new(a.parse().ok()?, l.parse().ok()?)
}

fn check_connected(ases: &[AsNode], links: &[Link]) -> Result<(), ConfigError> {
    let Some(first) = ases.first() else {
        return Err(invalid("ases", "no ASes"));
    };
    let mut seen = BTreeSet::from([first.id]);
    let mut stack = vec![first.id];
    while let Some(x) = stack.pop() {
        for l in links {
            if let Some((_, y, _)) = l.other(x) {
                if seen.insert(y) {
                    stack.push(y);
                }
            }
        }
    }
    match ases.iter().find(|a| !seen.contains(&a.id)) {
        Some(a) => Err(invalid("links", format!("{} is not connected", a.name))),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
        seed = 3
        [[ases]]
        id = "1-1"
        name = "A"
        core = true
        [[ases]]
        id = "1-2"
        name = "B"
        [[links]]
        a = "A"
        a_if = 1
        b = "B"
        b_if = 1
        kind = "parent"
        base_ms = 10.0
    "#;

    #[test]
    fn loads_and_is_deterministic() {
        let a = Topology::from_toml(SMALL).unwrap();
        let b = Topology::from_toml(SMALL).unwrap();
        for (x, y) in a.ases.iter().zip(&b.ases) {
            assert_eq!(x.secret.key.expose(), y.secret.key.expose());
            assert_eq!(x.key.public(), y.key.public());
        }
        let c = Topology::from_toml(&SMALL.replace("seed = 3", "seed = 4")).unwrap();
        assert_ne!(a.ases[0].secret.key.expose(), c.ases[0].secret.key.expose());
        assert_eq!(a.resolve("B"), Some(AsId::new(1, 2).unwrap()));
        assert_eq!(a.get(a.resolve("A").unwrap()).unwrap().interfaces, BTreeSet::from([1]));
    }

    #[test]
    fn duplicate_as_rejected() {
        let dup = SMALL.replace("id = \"1-2\"", "id = \"1-1\"");
        let err = Topology::from_toml(&dup).unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { ref field, .. } if field == "ases[1].id"), "{err}");
    }

    #[test]
    fn disconnected_rejected() {
        let text = SMALL.split("[[links]]").next().unwrap();
        assert!(matches!(Topology::from_toml(text), Err(ConfigError::Invalid { .. })));
    }

    #[test]
    fn jitter_mean_matches_config() {
        let l = Latency { base_ms: 25.0, jitter_mean_ms: 10.0, jitter_sigma: 0.8 };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 20_000;
        let mean = (0..n).map(|_| l.sample_ms(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 35.0).abs() < 0.5, "{mean}");
    }
}
