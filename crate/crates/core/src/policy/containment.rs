//! Bounded containment of router policies.
//!
//! `path` is contained in `pref` when every router setup with at most `k`
//! software components that satisfies `path` also satisfies `pref`.
//!
//! Two procedures decide it. When both policies are conjunctive queries
//! (existentials over components, conjunctions, equalities, `software`
//! guards) the path query is chased into its canonical setup and `pref` is
//! evaluated there: a CQ holds on all models iff it holds on the canonical
//! one. Everything else is decided by enumerating setups over finite
//! universes: every constant plus enough fresh values to realise any
//! equality pattern among `k` components, and for ordered versions `k`
//! representatives inside every gap between constants.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::ast::{ConstValue, Formula, Func, Policy, Sort, Term};
use super::eval::{lit_of, CompRef, CompiledPolicy, Lit, SetupView};
use super::model::{RouterSetup, SoftwareComponent};
use super::version::{versions_after, Version, VersionScheme};
use super::PolicyError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContainmentBounds {
    /// Maximum software stack size.
    pub k: usize,
    /// Maximum number of candidate setups the enumeration may evaluate.
    pub node_budget: u64,
}

impl Default for ContainmentBounds {
    fn default() -> Self {
        ContainmentBounds { k: 2, node_budget: 2_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Contained,
    /// A setup satisfying the path policy but not the preference.
    NotContained(RouterSetup),
    /// The enumeration budget ran out before a decision.
    Unknown,
}

pub fn check_containment(
    path: &Policy,
    pref: &Policy,
    bounds: &ContainmentBounds,
) -> Result<Verdict, PolicyError> {
    match check_by_homomorphism(path, pref, bounds)? {
        Some(v) => Ok(v),
        None => check_by_enumeration(path, pref, bounds),
    }
}

/// Binds every constant without a value: to the other policy's value for
/// the same name if there is one, otherwise to a value distinct from all
/// others. Unbound versions have no canonical position and are rejected.
fn close_constants(path: &Policy, pref: &Policy) -> Result<(Policy, Policy), PolicyError> {
    let mut named: BTreeMap<(String, Sort), ConstValue> = BTreeMap::new();
    let mut used_pens = Vec::new();
    let mut used_text = Vec::new();
    for p in [path, pref] {
        for (name, c) in &p.constants {
            match &c.value {
                Some(v) => {
                    named.entry((name.clone(), c.sort)).or_insert_with(|| v.clone());
                    match v {
                        ConstValue::Pen(n) => used_pens.push(*n),
                        ConstValue::Text(s) => used_text.push(s.clone()),
                        ConstValue::Version(_) => {}
                    }
                }
                None if c.sort == Sort::V => return Err(PolicyError::UnboundConstant(name.clone())),
                None => {}
            }
        }
    }
    let mut close = |p: &Policy| {
        let mut p = p.clone();
        for (name, c) in p.constants.iter_mut() {
            if c.value.is_some() {
                continue;
            }
            let key = (name.clone(), c.sort);
            let value = match named.get(&key) {
                Some(v) => v.clone(),
                None => {
                    let v = if c.sort == Sort::M {
                        let n = fresh_pens(&used_pens, 1)[0];
                        used_pens.push(n);
                        ConstValue::Pen(n)
                    } else {
                        let s = fresh_texts(&format!("<{name}>"), &used_text, 1).remove(0);
                        used_text.push(s.clone());
                        ConstValue::Text(s)
                    };
                    named.insert(key, v.clone());
                    v
                }
            };
            c.value = Some(value);
        }
        p
    };
    Ok((close(path), close(pref)))
}

fn fresh_pens(used: &[u32], n: usize) -> Vec<u32> {
    (1..=u32::MAX).filter(|x| !used.contains(x)).take(n).collect()
}

fn fresh_texts(prefix: &str, used: &[String], n: usize) -> Vec<String> {
    (0..)
        .map(|i| format!("{prefix}{i}"))
        .filter(|s| !used.contains(s))
        .take(n)
        .collect()
}

fn fresh_versions(consts: &[Version], n: usize) -> Vec<Version> {
    let zero = Version::new("0").expect("valid");
    let top = consts.iter().max().unwrap_or(&zero);
    versions_after(top, None, n)
}

/// Constant values of every sort appearing in either policy, deduplicated.
#[derive(Debug, Default)]
struct Constants {
    pens: Vec<u32>,
    tags: Vec<String>,
    issuers: Vec<String>,
    names: Vec<String>,
    versions: Vec<Version>,
}

impl Constants {
    fn collect(policies: &[&Policy]) -> Self {
        let mut c = Constants::default();
        fn add<T: PartialEq>(v: &mut Vec<T>, x: T) {
            if !v.contains(&x) {
                v.push(x);
            }
        }
        for p in policies {
            for decl in p.constants.values() {
                match (decl.sort, &decl.value) {
                    (Sort::M, Some(ConstValue::Pen(n))) => add(&mut c.pens, *n),
                    (Sort::T, Some(ConstValue::Text(s))) => add(&mut c.tags, s.clone()),
                    (Sort::I, Some(ConstValue::Text(s))) => add(&mut c.issuers, s.clone()),
                    (Sort::N, Some(ConstValue::Text(s))) => add(&mut c.names, s.clone()),
                    (Sort::V, Some(ConstValue::Version(v))) => add(&mut c.versions, v.clone()),
                    _ => {}
                }
            }
        }
        c.versions.sort();
        c
    }
}

fn component(tag: String, issuer: String, name: String, version: Version) -> SoftwareComponent {
    let scheme = if Version::parse(version.as_str(), &VersionScheme::default()).is_ok() {
        VersionScheme::default()
    } else {
        VersionScheme::Unknown
    };
    SoftwareComponent { tag, issuer, name, version, scheme }
}

// ---------------------------------------------------------------------------
// Conjunctive fast path
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Attr {
    Comp = 0,
    Tag = 1,
    Issuer = 2,
    Name = 3,
    Version = 4,
}

#[derive(Debug, Clone)]
enum CqTerm {
    Lit(Sort, Lit),
    Manu,
    Of(Attr, usize),
}

#[derive(Debug, Default)]
struct Cq {
    vars: usize,
    eqs: Vec<(CqTerm, CqTerm)>,
}

struct CqBuilder<'p> {
    policy: &'p Policy,
    scope: Vec<(&'p str, usize)>,
    cq: Cq,
}

impl<'p> CqBuilder<'p> {
    fn var(&self, t: &Term) -> Option<usize> {
        match t {
            Term::Var { name, sort: Sort::C } => {
                self.scope.iter().rev().find(|(n, _)| n == name).map(|&(_, i)| i)
            }
            _ => None,
        }
    }

    fn is_router(&self, t: &Term) -> bool {
        matches!(t, Term::Var { name, .. } if *name == self.policy.router_var)
    }

    fn term(&self, t: &Term) -> Option<CqTerm> {
        match t {
            Term::Const { name, sort } => {
                let v = self.policy.constants.get(name)?.value.as_ref()?;
                Some(CqTerm::Lit(*sort, lit_of(v)))
            }
            Term::Var { .. } => self.var(t).map(|j| CqTerm::Of(Attr::Comp, j)),
            Term::App(Func::Manufacturer, a) if self.is_router(a) => Some(CqTerm::Manu),
            Term::App(Func::Issuer, a) => match &**a {
                Term::App(Func::Tag, c) => self.var(c).map(|j| CqTerm::Of(Attr::Issuer, j)),
                _ => None,
            },
            Term::App(f, c) => {
                let attr = match f {
                    Func::Tag => Attr::Tag,
                    Func::Name => Attr::Name,
                    Func::Version => Attr::Version,
                    _ => return None,
                };
                self.var(c).map(|j| CqTerm::Of(attr, j))
            }
        }
    }

    fn formula(&mut self, f: &'p Formula) -> bool {
        match f {
            Formula::And(a, b) => self.formula(a) && self.formula(b),
            Formula::Exists(v, body) if v.sort == Sort::C => {
                self.scope.push((&v.name, self.cq.vars));
                self.cq.vars += 1;
                let ok = self.formula(body);
                self.scope.pop();
                ok
            }
            Formula::Software(r, c) => self.is_router(r) && self.var(c).is_some(),
            Formula::Eq(a, b) => match (self.term(a), self.term(b)) {
                (Some(a), Some(b)) => {
                    self.cq.eqs.push((a, b));
                    true
                }
                _ => false,
            },
            _ => false,
        }
    }
}

fn as_cq(policy: &Policy) -> Option<Cq> {
    let mut b = CqBuilder { policy, scope: Vec::new(), cq: Cq::default() };
    b.formula(&policy.formula).then_some(b.cq)
}

/// True when the policy lies in the conjunctive fragment decided by
/// [`check_by_homomorphism`].
pub fn is_conjunctive(policy: &Policy) -> bool {
    as_cq(policy).is_some()
}

#[derive(Clone)]
struct Chase {
    parent: Vec<usize>,
    value: Vec<Option<(Sort, Lit)>>,
}

fn lit_eq(a: &Lit, b: &Lit) -> bool {
    match (a, b) {
        (Lit::Int(x), Lit::Int(y)) => x == y,
        (Lit::Text(x), Lit::Text(y)) => x == y,
        (Lit::Ver(x), Lit::Ver(y)) => x == y,
        _ => false,
    }
}

impl Chase {
    fn new(vars: usize) -> Self {
        let n = 1 + 5 * vars;
        Chase { parent: (0..n).collect(), value: vec![None; n] }
    }

    fn node(&mut self, t: &CqTerm) -> usize {
        match t {
            CqTerm::Manu => 0,
            CqTerm::Of(attr, j) => 1 + 5 * j + *attr as usize,
            CqTerm::Lit(sort, lit) => {
                let found = (0..self.parent.len()).find(|&i| {
                    self.parent[i] == i
                        && matches!(&self.value[i], Some((s, l)) if s == sort && lit_eq(l, lit))
                });
                found.unwrap_or_else(|| {
                    self.parent.push(self.parent.len());
                    self.value.push(Some((*sort, lit.clone())));
                    self.parent.len() - 1
                })
            }
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Merges two classes; `Err` when they carry different constants.
    fn union(&mut self, a: usize, b: usize) -> Result<bool, ()> {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return Ok(false);
        }
        let merged = match (self.value[ra].take(), self.value[rb].take()) {
            (Some(x), Some(y)) => {
                if !lit_eq(&x.1, &y.1) {
                    return Err(());
                }
                Some(x)
            }
            (x, y) => x.or(y),
        };
        self.parent[rb] = ra;
        self.value[ra] = merged;
        Ok(true)
    }
}

/// Decides containment when both policies are conjunctive queries;
/// `Ok(None)` otherwise.
pub fn check_by_homomorphism(
    path: &Policy,
    pref: &Policy,
    bounds: &ContainmentBounds,
) -> Result<Option<Verdict>, PolicyError> {
    let (path, pref) = close_constants(path, pref)?;
    let (Some(cq), true) = (as_cq(&path), is_conjunctive(&pref)) else {
        return Ok(None);
    };
    let mut chase = Chase::new(cq.vars);
    for (a, b) in &cq.eqs {
        let (x, y) = (chase.node(a), chase.node(b));
        if chase.union(x, y).is_err() {
            return Ok(Some(Verdict::Contained));
        }
    }
    if congruence(&mut chase, cq.vars).is_err() {
        return Ok(Some(Verdict::Contained));
    }
    let consts = Constants::collect(&[&path, &pref]);
    let pref_c = CompiledPolicy::new(&pref)?;
    let path_c = CompiledPolicy::new(&path)?;
    let reps = classes(&mut chase, cq.vars);
    // Every setup within the bound that satisfies the path query is an image
    // of the canonical setup of some merge of its component classes into at
    // most k. The preference is positive, so it survives images.
    let mut merges: Vec<Vec<Vec<usize>>> = Vec::new();
    if reps.len() <= bounds.k {
        merges.push(reps.iter().map(|&j| vec![j]).collect());
    } else {
        partitions(&reps, bounds.k, &mut Vec::new(), &mut merges);
    }
    for blocks in merges {
        let mut c = chase.clone();
        let merged = blocks.iter().all(|b| {
            b[1..].iter().all(|&l| c.union(comp_node(b[0], Attr::Comp), comp_node(l, Attr::Comp)).is_ok())
        });
        if !merged || congruence(&mut c, cq.vars).is_err() {
            continue;
        }
        let reps = classes(&mut c, cq.vars);
        let witness = canonical_setup(&mut c, &reps, &consts);
        debug_assert!(path_c.eval(&witness), "canonical setup must satisfy the path query");
        if !pref_c.eval(&witness) {
            return Ok(Some(Verdict::NotContained(witness)));
        }
    }
    Ok(Some(Verdict::Contained))
}

fn comp_node(j: usize, a: Attr) -> usize {
    1 + 5 * j + a as usize
}

/// Congruence: one component has one value per attribute, and a tag
/// identifies its component.
fn congruence(chase: &mut Chase, vars: usize) -> Result<(), ()> {
    loop {
        let mut changed = false;
        for j in 0..vars {
            for l in j + 1..vars {
                let same = chase.find(comp_node(j, Attr::Comp)) == chase.find(comp_node(l, Attr::Comp))
                    || chase.find(comp_node(j, Attr::Tag)) == chase.find(comp_node(l, Attr::Tag));
                if same {
                    for a in [Attr::Comp, Attr::Tag, Attr::Issuer, Attr::Name, Attr::Version] {
                        changed |= chase.union(comp_node(j, a), comp_node(l, a))?;
                    }
                }
            }
        }
        if !changed {
            return Ok(());
        }
    }
}

/// One variable per component class.
fn classes(chase: &mut Chase, vars: usize) -> Vec<usize> {
    let mut reps: Vec<usize> = Vec::new();
    for j in 0..vars {
        let root = chase.find(comp_node(j, Attr::Comp));
        if !reps.iter().any(|&r| chase.find(comp_node(r, Attr::Comp)) == root) {
            reps.push(j);
        }
    }
    reps
}

/// All partitions of `items` into at most `k` blocks.
fn partitions(items: &[usize], k: usize, blocks: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
    let Some((&first, rest)) = items.split_first() else {
        out.push(blocks.clone());
        return;
    };
    for i in 0..blocks.len() {
        blocks[i].push(first);
        partitions(rest, k, blocks, out);
        blocks[i].pop();
    }
    if blocks.len() < k {
        blocks.push(vec![first]);
        partitions(rest, k, blocks, out);
        blocks.pop();
    }
}

/// The setup with one component per class, using values distinct from
/// every constant wherever the chase leaves a choice.
fn canonical_setup(chase: &mut Chase, reps: &[usize], consts: &Constants) -> RouterSetup {
    let n = reps.len();
    let fresh_tags = fresh_texts("tag-", &consts.tags, n);
    let fresh_issuers = fresh_texts("issuer-", &consts.issuers, n);
    let fresh_names = fresh_texts("name-", &consts.names, n);
    let fresh_versions = fresh_versions(&consts.versions, n);
    let mut assigned: BTreeMap<usize, usize> = BTreeMap::new();
    let mut pick = |chase: &mut Chase, node: usize| -> Result<Lit, usize> {
        let root = chase.find(node);
        match &chase.value[root] {
            Some((_, lit)) => Ok(lit.clone()),
            None => {
                let next = assigned.len();
                Err(*assigned.entry(root).or_insert(next))
            }
        }
    };
    let manufacturer = match pick(chase, 0) {
        Ok(Lit::Int(m)) => m,
        _ => fresh_pens(&consts.pens, 1)[0],
    };
    let mut software = Vec::with_capacity(n);
    let mut counters = [0usize; 4];
    let mut fresh_index: BTreeMap<usize, usize> = BTreeMap::new();
    for &j in reps {
        let mut attr = |a: Attr, slot: usize| -> Result<Lit, usize> {
            pick(chase, comp_node(j, a)).map_err(|id| {
                *fresh_index.entry(id).or_insert_with(|| {
                    counters[slot] += 1;
                    counters[slot] - 1
                })
            })
        };
        let text = |r: Result<Lit, usize>, fresh: &[String]| match r {
            Ok(Lit::Text(s)) => s,
            Ok(_) => unreachable!("sort-checked"),
            Err(i) => fresh[i].clone(),
        };
        let tag = text(attr(Attr::Tag, 0), &fresh_tags);
        let issuer = text(attr(Attr::Issuer, 1), &fresh_issuers);
        let name = text(attr(Attr::Name, 2), &fresh_names);
        let version = match attr(Attr::Version, 3) {
            Ok(Lit::Ver(v)) => v,
            Ok(_) => unreachable!("sort-checked"),
            Err(i) => fresh_versions[i].clone(),
        };
        software.push(component(tag, issuer, name, version));
    }
    RouterSetup::new("witness", manufacturer, software).expect("chased classes have distinct tags")
}

// ---------------------------------------------------------------------------
// Bounded enumeration
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Clone, Copy)]
struct Observed {
    manufacturer: bool,
    tag: bool,
    issuer: bool,
    name: bool,
    version: bool,
    ordered: bool,
}

fn observe_term(t: &Term, o: &mut Observed) {
    if let Term::App(f, a) = t {
        match f {
            Func::Manufacturer => o.manufacturer = true,
            Func::Tag => o.tag = true,
            Func::Issuer => {
                o.issuer = true;
                o.tag = true;
            }
            Func::Name => o.name = true,
            Func::Version => o.version = true,
        }
        observe_term(a, o);
    }
}

fn observe_sort(s: Sort, o: &mut Observed) {
    match s {
        Sort::M => o.manufacturer = true,
        Sort::T => o.tag = true,
        Sort::I => o.issuer = true,
        Sort::N => o.name = true,
        Sort::V => o.version = true,
        _ => {}
    }
}

fn observe(f: &Formula, o: &mut Observed) {
    match f {
        Formula::Eq(a, b) | Formula::Software(a, b) | Formula::OnPath(a, b) => {
            observe_term(a, o);
            observe_term(b, o);
        }
        Formula::Cmp(_, a, b) => {
            o.ordered = true;
            observe_term(a, o);
            observe_term(b, o);
        }
        Formula::Not(x) => observe(x, o),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
            observe(a, o);
            observe(b, o);
        }
        Formula::Forall(v, body) | Formula::Exists(v, body) => {
            observe_sort(v.sort, o);
            observe(body, o);
        }
    }
}

/// Values of one attribute: constants first, then interchangeable fresh
/// values (only the first `fresh_from..` indices are subject to symmetry
/// breaking).
struct Universe<T> {
    values: Vec<T>,
    fresh_from: usize,
}

impl<T> Universe<T> {
    fn symmetric(consts: Vec<T>, fresh: Vec<T>) -> Self {
        let fresh_from = consts.len();
        let mut values = consts;
        values.extend(fresh);
        Universe { values, fresh_from }
    }

    /// No symmetric values: every index is distinguishable.
    fn rigid(values: Vec<T>) -> Self {
        let fresh_from = values.len();
        Universe { values, fresh_from }
    }

    fn fresh_rank(&self, idx: usize) -> Option<usize> {
        idx.checked_sub(self.fresh_from)
    }
}

fn version_universe(consts: &[Version], k: usize, observed: bool, ordered: bool) -> Universe<Version> {
    if !observed {
        return Universe::symmetric(Vec::new(), fresh_versions(consts, 1));
    }
    if !ordered {
        return Universe::symmetric(consts.to_vec(), fresh_versions(consts, k));
    }
    let zero = Version::new("0").expect("valid");
    let mut values = Vec::new();
    let mut lo: Option<&Version> = None;
    for c in consts {
        match lo {
            None if !c.is_minimum() => values.extend(versions_after(&zero, Some(c), k)),
            Some(l) => values.extend(versions_after(l, Some(c), k)),
            None => {}
        }
        values.push(c.clone());
        lo = Some(c);
    }
    values.extend(versions_after(lo.unwrap_or(&zero), None, k));
    debug_assert!(values.windows(2).all(|w| w[0] < w[1]));
    Universe::rigid(values)
}

/// Component type: indices into the tag choices and the three universes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct CompType {
    tag: usize,
    version: usize,
    issuer: usize,
    name: usize,
}

struct Search<'a> {
    path: &'a CompiledPolicy,
    pref: &'a CompiledPolicy,
    k: usize,
    budget: u64,
    nodes: u64,
    types: Vec<CompType>,
    /// Index of the fresh-tag choice; smaller indices are constant tags.
    fresh_tag: usize,
    tag_consts: &'a [String],
    fresh_tags: Vec<String>,
    issuers: Universe<String>,
    names: Universe<String>,
    versions: Universe<Version>,
}

enum Outcome {
    Continue,
    Found(Vec<CompType>),
    Exhausted,
}

impl Search<'_> {
    fn comps(&self, chosen: &[CompType]) -> Vec<(String, String, String, Version)> {
        let mut fresh = 0;
        chosen
            .iter()
            .map(|t| {
                let tag = if t.tag == self.fresh_tag {
                    fresh += 1;
                    self.fresh_tags[fresh - 1].clone()
                } else {
                    self.tag_consts[t.tag].clone()
                };
                (
                    tag,
                    self.issuers.values[t.issuer].clone(),
                    self.names.values[t.name].clone(),
                    self.versions.values[t.version].clone(),
                )
            })
            .collect()
    }

    fn test(&mut self, manufacturer: u32, chosen: &[CompType]) -> Outcome {
        self.nodes += 1;
        if self.nodes > self.budget {
            return Outcome::Exhausted;
        }
        let mut fresh = 0;
        let refs: Vec<CompRef<'_>> = chosen
            .iter()
            .map(|t| CompRef {
                tag: if t.tag == self.fresh_tag {
                    fresh += 1;
                    &self.fresh_tags[fresh - 1]
                } else {
                    &self.tag_consts[t.tag]
                },
                issuer: &self.issuers.values[t.issuer],
                name: &self.names.values[t.name],
                version: &self.versions.values[t.version],
            })
            .collect();
        let view = SetupView { manufacturer, comps: &refs };
        if self.path.eval_view(&view) && !self.pref.eval_view(&view) {
            Outcome::Found(chosen.to_vec())
        } else {
            Outcome::Continue
        }
    }

    /// Restricted growth: a fresh value may only be used once every fresh
    /// value of lower rank already appears.
    fn growth_ok(&self, chosen: &[CompType], t: &CompType) -> bool {
        fn ok<T>(u: &Universe<T>, seen: impl Iterator<Item = usize>, idx: usize) -> bool {
            let Some(rank) = u.fresh_rank(idx) else { return true };
            let used = seen.filter_map(|i| u.fresh_rank(i)).max().map_or(0, |m| m + 1);
            rank <= used
        }
        ok(&self.versions, chosen.iter().map(|c| c.version), t.version)
            && ok(&self.issuers, chosen.iter().map(|c| c.issuer), t.issuer)
            && ok(&self.names, chosen.iter().map(|c| c.name), t.name)
    }

    fn dfs(&mut self, manufacturer: u32, chosen: &mut Vec<CompType>, from: usize) -> Outcome {
        match self.test(manufacturer, chosen) {
            Outcome::Continue => {}
            done => return done,
        }
        if chosen.len() == self.k {
            return Outcome::Continue;
        }
        for i in from..self.types.len() {
            let t = self.types[i];
            if t.tag != self.fresh_tag && chosen.last().is_some_and(|l| l.tag == t.tag) {
                continue;
            }
            if !self.growth_ok(chosen, &t) {
                continue;
            }
            chosen.push(t);
            let r = self.dfs(manufacturer, chosen, i);
            chosen.pop();
            match r {
                Outcome::Continue => {}
                done => return done,
            }
        }
        Outcome::Continue
    }
}

/// Decides containment by exhaustive enumeration of setups up to symmetry.
pub fn check_by_enumeration(
    path: &Policy,
    pref: &Policy,
    bounds: &ContainmentBounds,
) -> Result<Verdict, PolicyError> {
    let (path, pref) = close_constants(path, pref)?;
    let path_c = CompiledPolicy::new(&path)?;
    let pref_c = CompiledPolicy::new(&pref)?;
    let consts = Constants::collect(&[&path, &pref]);
    let mut o = Observed::default();
    observe(&path.formula, &mut o);
    observe(&pref.formula, &mut o);
    let k = bounds.k;

    let mut pens = if o.manufacturer { consts.pens.clone() } else { Vec::new() };
    pens.extend(fresh_pens(&consts.pens, 1));
    let tag_consts: Vec<String> = if o.tag { consts.tags.clone() } else { Vec::new() };
    let text_universe = |observed: bool, c: &[String], prefix: &str| {
        if observed {
            Universe::symmetric(c.to_vec(), fresh_texts(prefix, c, k))
        } else {
            Universe::symmetric(Vec::new(), fresh_texts(prefix, c, 1))
        }
    };
    let issuers = text_universe(o.issuer, &consts.issuers, "issuer-");
    let names = text_universe(o.name, &consts.names, "name-");
    let versions = version_universe(&consts.versions, k, o.version, o.ordered);

    let fresh_tag = tag_consts.len();
    let mut types = Vec::new();
    for tag in 0..=fresh_tag {
        for version in 0..versions.values.len() {
            for issuer in 0..issuers.values.len() {
                for name in 0..names.values.len() {
                    types.push(CompType { tag, version, issuer, name });
                }
            }
        }
    }
    let mut search = Search {
        path: &path_c,
        pref: &pref_c,
        k,
        budget: bounds.node_budget,
        nodes: 0,
        types,
        fresh_tag,
        fresh_tags: fresh_texts("tag-", &tag_consts, k),
        tag_consts: &tag_consts,
        issuers,
        names,
        versions,
    };
    for &m in &pens {
        let mut chosen = Vec::with_capacity(k);
        match search.dfs(m, &mut chosen, 0) {
            Outcome::Continue => {}
            Outcome::Exhausted => return Ok(Verdict::Unknown),
            Outcome::Found(types) => {
                let software = search
                    .comps(&types)
                    .into_iter()
                    .map(|(t, i, n, v)| component(t, i, n, v))
                    .collect();
                let witness = RouterSetup::new("witness", m, software)
                    .expect("enumerated setups have distinct tags");
                return Ok(Verdict::NotContained(witness));
            }
        }
    }
    Ok(Verdict::Contained)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::eval::eval_router_policy;
    use crate::policy::parser::parse_policy;

    fn both(path: &str, pref: &str, k: usize) -> (Verdict, Verdict) {
        let a = parse_policy(path).unwrap();
        let b = parse_policy(pref).unwrap();
        let bounds = ContainmentBounds { k, ..Default::default() };
        let fast = check_by_homomorphism(&a, &b, &bounds).unwrap().expect("conjunctive");
        let slow = check_by_enumeration(&a, &b, &bounds).unwrap();
        (fast, slow)
    }

    fn kind(v: &Verdict) -> u8 {
        match v {
            Verdict::Contained => 0,
            Verdict::NotContained(_) => 1,
            Verdict::Unknown => 2,
        }
    }

    #[test]
    fn components_merge_to_fit_the_bound() {
        // Two existentials, one slot: both name the same component.
        let path = "const m2: M = 2\nconst n: N = \"bird\"\nconst v: V = \"1.0\"\n\
                    manu(r) = m2 & (exists c0: C. software(r, c0) & version(c0) = v & \
                    (exists c1: C. software(r, c1) & name(c1) = n & version(c1) = v))";
        let (f, s) = both(path, "const m1: M = 1\nmanu(r) = m1", 1);
        assert_eq!(kind(&f), 1, "{f:?}");
        assert_eq!(kind(&s), 1);
        let Verdict::NotContained(w) = f else { unreachable!() };
        assert_eq!(w.software().len(), 1);
        // Clashing constants cannot merge, so nothing fits in one slot.
        let clash = "const a: N = \"bird\"\nconst b: N = \"frr\"\n\
                     (exists c0: C. software(r, c0) & name(c0) = a) & exists c1: C. software(r, c1) & name(c1) = b";
        let (f, s) = both(clash, "const m1: M = 1\nmanu(r) = m1", 1);
        assert_eq!((f, s), (Verdict::Contained, Verdict::Contained));
    }

    #[test]
    fn conjunct_weakening_is_contained() {
        let (f, s) = both(
            "const m1: M = 1\nconst s: N = \"x\"\nmanu(r) = m1 & exists c: C. software(r, c) & name(c) = s",
            "const m1: M = 1\nmanu(r) = m1",
            2,
        );
        assert_eq!(f, Verdict::Contained);
        assert_eq!(s, Verdict::Contained);
    }

    #[test]
    fn strengthening_is_not_contained() {
        let path = "const m1: M = 1\nmanu(r) = m1";
        let pref = "const m1: M = 1\nconst s: N = \"x\"\nmanu(r) = m1 & exists c: C. software(r, c) & name(c) = s";
        let (f, s) = both(path, pref, 2);
        assert_eq!(kind(&f), 1);
        assert_eq!(kind(&s), 1);
        let (a, b) = (parse_policy(path).unwrap(), parse_policy(pref).unwrap());
        for v in [f, s] {
            let Verdict::NotContained(w) = v else { unreachable!() };
            assert!(eval_router_policy(&a, &w).unwrap());
            assert!(!eval_router_policy(&b, &w).unwrap());
        }
    }

    #[test]
    fn tag_identifies_component() {
        // Two components with the same tag are one component, so their
        // names agree.
        let path = "const t: T = \"t\"\nconst a: N = \"a\"\nexists c: C. software(r, c) & tag(c) = t & name(c) = a \
                    & exists d: C. software(r, d) & tag(d) = t";
        let pref = "const a: N = \"a\"\nconst t: T = \"t\"\nexists d: C. software(r, d) & tag(d) = t & name(d) = a";
        let (f, s) = both(path, pref, 2);
        assert_eq!(f, Verdict::Contained);
        assert_eq!(s, Verdict::Contained);
    }

    #[test]
    fn conflicting_constants_are_vacuously_contained() {
        let (f, s) = both(
            "const a: M = 1\nconst b: M = 2\nmanu(r) = a & manu(r) = b",
            "const c: M = 3\nmanu(r) = c",
            1,
        );
        assert_eq!(f, Verdict::Contained);
        assert_eq!(s, Verdict::Contained);
    }

    #[test]
    fn too_many_components_for_bound() {
        let path = "const a: N = \"a\"\nconst b: N = \"b\"\nexists c: C. software(r, c) & name(c) = a \
                    & exists d: C. software(r, d) & name(d) = b";
        let (f, s) = both(path, "const m: M = 5\nmanu(r) = m", 1);
        assert_eq!(f, Verdict::Contained);
        assert_eq!(s, Verdict::Contained);
        let (f, s) = both(path, "const m: M = 5\nmanu(r) = m", 2);
        assert_eq!((kind(&f), kind(&s)), (1, 1));
    }

    #[test]
    fn tautology_accepts_everything() {
        let path = parse_policy("const m1: M = 1\nmanu(r) = m1 & exists c: C. software(r, c)").unwrap();
        let taut = parse_policy("const m1: M = 1\nmanu(r) = m1 | !(manu(r) = m1)").unwrap();
        let v = check_containment(&path, &taut, &ContainmentBounds::default()).unwrap();
        assert_eq!(v, Verdict::Contained);
    }

    #[test]
    fn ordered_versions_and_gaps() {
        let path = parse_policy(
            "const v: V = \"2.0\"\nforall c: C. software(r, c) -> version(c) > v",
        )
        .unwrap();
        let pref = parse_policy(
            "const w: V = \"2.0.1\"\nforall c: C. software(r, c) -> version(c) >= w",
        )
        .unwrap();
        let Verdict::NotContained(w) =
            check_containment(&path, &pref, &ContainmentBounds { k: 1, ..Default::default() }).unwrap()
        else {
            panic!()
        };
        let version = &w.software()[0].version;
        assert!(*version > Version::new("2.0").unwrap() && *version < Version::new("2.0.1").unwrap());
        assert_eq!(
            check_containment(&pref, &path, &ContainmentBounds::default()).unwrap(),
            Verdict::Contained
        );
    }

    #[test]
    fn critical_software_example_pair() {
        let path = parse_policy(
            "const m1: M = 9\nconst s_crit: N = \"openssl\"\nconst i: I = \"https://openssl.org\"\n\
             const v: V = \"3.0.2\"\nmanu(r) = m1 & exists c: C. software(r, c) & name(c) = s_crit \
             & issuer(tag(c)) = i & version(c) = v",
        )
        .unwrap();
        let pref = parse_policy(
            "const m1: M = 9\nconst m2: M = 11\nconst s_crit: N = \"openssl\"\nconst i: I = \"https://openssl.org\"\n\
             const v_min: V = \"3.0.0\"\n(manu(r) = m1 | manu(r) = m2) & forall c: C. (software(r, c) \
             & name(c) = s_crit & issuer(tag(c)) = i) -> version(c) >= v_min",
        )
        .unwrap();
        let bounds = ContainmentBounds { k: 2, ..Default::default() };
        let Verdict::NotContained(w) = check_containment(&path, &pref, &bounds).unwrap() else {
            panic!("expected a witness")
        };
        assert!(eval_router_policy(&path, &w).unwrap());
        assert!(!eval_router_policy(&pref, &w).unwrap());
        assert_eq!(w.software().len(), 2);
        assert!(w.software().iter().all(|c| c.name == "openssl"));
        let v_min = Version::new("3.0.0").unwrap();
        assert!(w.software().iter().any(|c| c.version < v_min));
        let k1 = ContainmentBounds { k: 1, ..Default::default() };
        assert_eq!(check_containment(&path, &pref, &k1).unwrap(), Verdict::Contained);
    }

    #[test]
    fn budget_exhaustion_is_unknown() {
        let path = parse_policy("const m: M = 1\n!(manu(r) = m)").unwrap();
        let pref = parse_policy("const m: M = 1\n!(manu(r) = m) | manu(r) = m").unwrap();
        let tiny = ContainmentBounds { k: 3, node_budget: 2 };
        assert_eq!(check_by_enumeration(&path, &pref, &tiny).unwrap(), Verdict::Unknown);
    }

    #[test]
    fn unbound_constants_shared_by_name() {
        let (f, s) = both("manu(r) = m", "manu(r) = m", 1);
        assert_eq!((f, s), (Verdict::Contained, Verdict::Contained));
        let (f, s) = both("manu(r) = m", "manu(r) = n", 1);
        assert_eq!((kind(&f), kind(&s)), (1, 1));
    }
}
