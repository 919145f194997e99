//! Satisfaction of router policies on concrete router setups.
//!
//! Policies are compiled once: variables become stack slots and constants
//! are replaced by their values. Quantifiers over C range over the setup's
//! software; quantifiers over M, T, I, N and V range over the policy's
//! constants of that sort together with the values present in the setup.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use super::ast::{CmpOp, ConstValue, Formula, Func, Policy, Sort, Term};
use super::model::{PathModel, RouterSetup};
use super::version::Version;
use super::PolicyError;

#[derive(Debug, Clone)]
pub(crate) enum Lit {
    Int(u32),
    Text(String),
    Ver(Version),
}

#[derive(Debug, Clone)]
enum TermIr {
    Slot(usize),
    Router,
    Lit(Lit),
    App(Func, Box<TermIr>),
}

#[derive(Debug, Clone)]
enum Ir {
    Eq(TermIr, TermIr),
    Cmp(CmpOp, TermIr, TermIr),
    Software(TermIr, TermIr),
    Not(Box<Ir>),
    And(Box<Ir>, Box<Ir>),
    Or(Box<Ir>, Box<Ir>),
    Implies(Box<Ir>, Box<Ir>),
    Quant { universal: bool, sort: Sort, body: Box<Ir> },
}

/// One software component seen through borrowed attributes.
#[derive(Debug, Clone, Copy)]
pub(crate) struct CompRef<'a> {
    pub tag: &'a str,
    pub issuer: &'a str,
    pub name: &'a str,
    pub version: &'a Version,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct SetupView<'a> {
    pub manufacturer: u32,
    pub comps: &'a [CompRef<'a>],
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Val<'a> {
    Int(u32),
    Comp(usize),
    Text(&'a str),
    /// Issuer of a tag that no component in the setup carries.
    NoIssuer,
    Ver(&'a Version),
    Router,
}

/// A router policy ready for repeated evaluation.
#[derive(Debug, Clone)]
pub struct CompiledPolicy {
    ir: Ir,
    /// Constant values by sort, used as quantifier domains.
    domain_consts: [Vec<Lit>; 5],
    slots: usize,
}

fn sort_slot(sort: Sort) -> Option<usize> {
    Some(match sort {
        Sort::M => 0,
        Sort::T => 1,
        Sort::I => 2,
        Sort::N => 3,
        Sort::V => 4,
        _ => return None,
    })
}

pub(crate) fn lit_of(value: &ConstValue) -> Lit {
    match value {
        ConstValue::Pen(n) => Lit::Int(*n),
        ConstValue::Text(s) => Lit::Text(s.clone()),
        ConstValue::Version(v) => Lit::Ver(v.clone()),
    }
}

struct Compiler<'p> {
    policy: &'p Policy,
    scope: Vec<&'p str>,
    max_depth: usize,
}

impl<'p> Compiler<'p> {
    fn term(&self, t: &'p Term) -> Result<TermIr, PolicyError> {
        Ok(match t {
            Term::Var { name, .. } => match self.scope.iter().rposition(|v| v == name) {
                Some(slot) => TermIr::Slot(slot),
                None if *name == self.policy.router_var => TermIr::Router,
                None => return Err(PolicyError::UnboundConstant(name.clone())),
            },
            Term::Const { name, .. } => {
                let value = self
                    .policy
                    .constants
                    .get(name)
                    .and_then(|c| c.value.as_ref())
                    .ok_or_else(|| PolicyError::UnboundConstant(name.clone()))?;
                TermIr::Lit(lit_of(value))
            }
            Term::App(f, a) => TermIr::App(*f, Box::new(self.term(a)?)),
        })
    }

    fn formula(&mut self, f: &'p Formula) -> Result<Ir, PolicyError> {
        let pair = |c: &mut Self, a: &'p Formula, b: &'p Formula| -> Result<(Box<Ir>, Box<Ir>), PolicyError> {
            Ok((Box::new(c.formula(a)?), Box::new(c.formula(b)?)))
        };
        Ok(match f {
            Formula::Eq(a, b) => Ir::Eq(self.term(a)?, self.term(b)?),
            Formula::Cmp(op, a, b) => Ir::Cmp(*op, self.term(a)?, self.term(b)?),
            Formula::Software(a, b) => Ir::Software(self.term(a)?, self.term(b)?),
            Formula::OnPath(..) => {
                return Err(PolicyError::NotRouterPolicy("onPath in a router policy".into()))
            }
            Formula::Not(x) => Ir::Not(Box::new(self.formula(x)?)),
            Formula::And(a, b) => {
                let (a, b) = pair(self, a, b)?;
                Ir::And(a, b)
            }
            Formula::Or(a, b) => {
                let (a, b) = pair(self, a, b)?;
                Ir::Or(a, b)
            }
            Formula::Implies(a, b) => {
                let (a, b) = pair(self, a, b)?;
                Ir::Implies(a, b)
            }
            Formula::Forall(v, body) | Formula::Exists(v, body) => {
                if matches!(v.sort, Sort::R | Sort::P) {
                    return Err(PolicyError::NotRouterPolicy(alloc::format!(
                        "quantification over sort {}",
                        v.sort
                    )));
                }
                self.scope.push(&v.name);
                self.max_depth = self.max_depth.max(self.scope.len());
                let body = self.formula(body);
                self.scope.pop();
                Ir::Quant {
                    universal: matches!(f, Formula::Forall(..)),
                    sort: v.sort,
                    body: Box::new(body?),
                }
            }
        })
    }
}

impl CompiledPolicy {
    pub fn new(policy: &Policy) -> Result<Self, PolicyError> {
        let mut c = Compiler { policy, scope: Vec::new(), max_depth: 0 };
        let ir = c.formula(&policy.formula)?;
        let mut domain_consts: [Vec<Lit>; 5] = Default::default();
        for decl in policy.constants.values() {
            if let (Some(i), Some(v)) = (sort_slot(decl.sort), &decl.value) {
                domain_consts[i].push(lit_of(v));
            }
        }
        Ok(CompiledPolicy { ir, domain_consts, slots: c.max_depth })
    }

    pub fn eval(&self, setup: &RouterSetup) -> bool {
        let comps: Vec<CompRef<'_>> = setup
            .software()
            .iter()
            .map(|c| CompRef {
                tag: &c.tag,
                issuer: &c.issuer,
                name: &c.name,
                version: &c.version,
            })
            .collect();
        self.eval_view(&SetupView { manufacturer: setup.manufacturer(), comps: &comps })
    }

    pub(crate) fn eval_view(&self, view: &SetupView<'_>) -> bool {
        let mut env = Vec::with_capacity(self.slots);
        Evaluator { policy: self, view }.formula(&self.ir, &mut env)
    }
}

struct Evaluator<'a> {
    policy: &'a CompiledPolicy,
    view: &'a SetupView<'a>,
}

fn lit_val(l: &Lit) -> Val<'_> {
    match l {
        Lit::Int(n) => Val::Int(*n),
        Lit::Text(s) => Val::Text(s),
        Lit::Ver(v) => Val::Ver(v),
    }
}

impl<'a> Evaluator<'a> {
    fn term(&self, t: &'a TermIr, env: &[Val<'a>]) -> Val<'a> {
        match t {
            TermIr::Slot(i) => env[*i],
            TermIr::Router => Val::Router,
            TermIr::Lit(l) => lit_val(l),
            TermIr::App(f, arg) => {
                let a = self.term(arg, env);
                let comps = self.view.comps;
                match (f, a) {
                    (Func::Manufacturer, _) => Val::Int(self.view.manufacturer),
                    (Func::Tag, Val::Comp(i)) => Val::Text(comps[i].tag),
                    (Func::Name, Val::Comp(i)) => Val::Text(comps[i].name),
                    (Func::Version, Val::Comp(i)) => Val::Ver(comps[i].version),
                    (Func::Issuer, Val::Text(tag)) => comps
                        .iter()
                        .find(|c| c.tag == tag)
                        .map_or(Val::NoIssuer, |c| Val::Text(c.issuer)),
                    _ => Val::NoIssuer,
                }
            }
        }
    }

    fn domain(&self, sort: Sort) -> Vec<Val<'a>> {
        let comps = self.view.comps;
        let mut out: Vec<Val<'a>> = match sort_slot(sort) {
            Some(i) => self.policy.domain_consts[i].iter().map(lit_val).collect(),
            None => Vec::new(),
        };
        match sort {
            Sort::C => out.extend((0..comps.len()).map(Val::Comp)),
            Sort::M => out.push(Val::Int(self.view.manufacturer)),
            Sort::T => out.extend(comps.iter().map(|c| Val::Text(c.tag))),
            Sort::I => out.extend(comps.iter().map(|c| Val::Text(c.issuer))),
            Sort::N => out.extend(comps.iter().map(|c| Val::Text(c.name))),
            Sort::V => out.extend(comps.iter().map(|c| Val::Ver(c.version))),
            Sort::R | Sort::P => out.push(Val::Router),
        }
        out
    }

    fn formula(&self, f: &'a Ir, env: &mut Vec<Val<'a>>) -> bool {
        match f {
            Ir::Eq(a, b) => self.term(a, env) == self.term(b, env),
            Ir::Cmp(op, a, b) => match (self.term(a, env), self.term(b, env)) {
                (Val::Ver(x), Val::Ver(y)) => {
                    let o = x.cmp(y);
                    match op {
                        CmpOp::Lt => o == Ordering::Less,
                        CmpOp::Le => o != Ordering::Greater,
                        CmpOp::Ge => o != Ordering::Less,
                        CmpOp::Gt => o == Ordering::Greater,
                    }
                }
                _ => false,
            },
            Ir::Software(r, c) => {
                matches!(self.term(r, env), Val::Router) && matches!(self.term(c, env), Val::Comp(_))
            }
            Ir::Not(x) => !self.formula(x, env),
            Ir::And(a, b) => self.formula(a, env) && self.formula(b, env),
            Ir::Or(a, b) => self.formula(a, env) || self.formula(b, env),
            Ir::Implies(a, b) => !self.formula(a, env) || self.formula(b, env),
            Ir::Quant { universal, sort, body } => {
                let domain = self.domain(*sort);
                let mut result = *universal;
                for v in domain {
                    env.push(v);
                    let holds = self.formula(body, env);
                    env.pop();
                    if holds != *universal {
                        result = !*universal;
                        break;
                    }
                }
                result
            }
        }
    }
}

pub fn eval_router_policy(policy: &Policy, setup: &RouterSetup) -> Result<bool, PolicyError> {
    Ok(CompiledPolicy::new(policy)?.eval(setup))
}

/// True iff every router on the path satisfies the policy.
pub fn eval_path_policy(policy: &Policy, path: &PathModel) -> Result<bool, PolicyError> {
    Ok(path_violations(policy, path)?.is_empty())
}

/// Positions of routers in `path.routers` that violate the policy.
pub fn path_violations(policy: &Policy, path: &PathModel) -> Result<Vec<usize>, PolicyError> {
    let compiled = CompiledPolicy::new(policy)?;
    Ok(path
        .routers
        .iter()
        .enumerate()
        .filter(|(_, r)| !compiled.eval(r))
        .map(|(i, _)| i)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::model::SoftwareComponent;
    use crate::policy::parser::parse_policy;
    use alloc::vec;

    const PATH_POL: &str = "const m: M = 9\nconst s: N = \"openssl\"\nconst i: I = \"https://openssl.org\"\nconst v: V = \"3.0.2\"\n\
        manu(r) = m & exists c: C. software(r, c) & name(c) = s & issuer(tag(c)) = i & version(c) = v";

    const PREF_POL: &str = "const m1: M = 9\nconst m2: M = 11\nconst s_crit: N = \"openssl\"\n\
        const i: I = \"https://openssl.org\"\nconst v_min: V = \"3.0.0\"\n\
        (manu(r) = m1 | manu(r) = m2) & forall c: C. (software(r, c) & name(c) = s_crit & issuer(tag(c)) = i) -> version(c) >= v_min";

    fn comp(tag: &str, name: &str, version: &str) -> SoftwareComponent {
        SoftwareComponent::new(tag, "https://openssl.org", name, version).unwrap()
    }

    #[test]
    fn path_policy_example_accepts_its_setup() {
        let p = parse_policy(PATH_POL).unwrap();
        let r = RouterSetup::new("br", 9, vec![comp("t1", "openssl", "3.0.2")]).unwrap();
        assert!(eval_router_policy(&p, &r).unwrap());
        let empty = RouterSetup::new("br", 9, vec![]).unwrap();
        assert!(!eval_router_policy(&p, &empty).unwrap());
    }

    #[test]
    fn preference_rejects_outdated_critical_component() {
        let p = parse_policy(PREF_POL).unwrap();
        let old = RouterSetup::new("br", 11, vec![comp("t1", "openssl", "2.9.9")]).unwrap();
        assert!(!eval_router_policy(&p, &old).unwrap());
        let new = RouterSetup::new("br", 11, vec![comp("t1", "openssl", "3.0.0"), comp("t2", "zlib", "0.1")]).unwrap();
        assert!(eval_router_policy(&p, &new).unwrap());
        let other_vendor = RouterSetup::new("br", 12, vec![]).unwrap();
        assert!(!eval_router_policy(&p, &other_vendor).unwrap());
    }

    #[test]
    fn unbound_constant_reported() {
        let p = parse_policy("manu(r) = m").unwrap();
        let r = RouterSetup::new("br", 1, vec![]).unwrap();
        assert_eq!(eval_router_policy(&p, &r), Err(PolicyError::UnboundConstant("m".into())));
    }

    #[test]
    fn path_semantics() {
        let p = parse_policy("const m1: M = 1\nmanu(r) = m1").unwrap();
        let mk = |m| RouterSetup::new("x", m, vec![]).unwrap();
        assert!(eval_path_policy(&p, &PathModel::default()).unwrap());
        let path = PathModel { path_id: "p".into(), routers: vec![mk(1), mk(2), mk(1)] };
        assert!(!eval_path_policy(&p, &path).unwrap());
        assert_eq!(path_violations(&p, &path).unwrap(), vec![1]);
    }

    #[test]
    fn issuer_of_unknown_tag() {
        let p = parse_policy("const t: T = \"nope\"\nconst i: I = \"https://openssl.org\"\n!(issuer(t) = i)").unwrap();
        let r = RouterSetup::new("x", 1, vec![comp("t1", "a", "1")]).unwrap();
        assert!(eval_router_policy(&p, &r).unwrap());
    }

    #[test]
    fn non_component_quantifier_domains() {
        // Some name on the router differs from every constant.
        let p = parse_policy("const a: N = \"a\"\nexists n: N. !(n = a) & exists c: C. software(r, c) & name(c) = n").unwrap();
        let r1 = RouterSetup::new("x", 1, vec![comp("t1", "a", "1")]).unwrap();
        let r2 = RouterSetup::new("x", 1, vec![comp("t1", "a", "1"), comp("t2", "b", "1")]).unwrap();
        assert!(!eval_router_policy(&p, &r1).unwrap());
        assert!(eval_router_policy(&p, &r2).unwrap());
    }
}
