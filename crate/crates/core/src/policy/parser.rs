//! Concrete syntax for policy documents.
//!
//! ```text
//! # comment
//! const m1: M = 9
//! const s: N = "openssl"
//! var r: R
//! manu(r) = m1 & exists c: C. software(r, c) & name(c) = s
//! ```
//!
//! Precedence from tightest: `!`, `&`, `|`, `->` (right associative).
//! Quantifier bodies extend as far right as possible. Unicode forms
//! `¬ ∧ ∨ → ∀ ∃ ≤ ≥` are accepted as well.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::ast::{CmpOp, ConstDecl, ConstValue, Formula, Func, Policy, Sort, Term, VarDecl};
use super::version::Version;
use super::PolicyError;

pub const DEFAULT_ROUTER_VAR: &str = "r";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Pos {
    line: usize,
    col: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Int(u64),
    LParen,
    RParen,
    Comma,
    Colon,
    Dot,
    Eq,
    Cmp(CmpOp),
    Not,
    And,
    Or,
    Implies,
    Forall,
    Exists,
    Const,
    Var,
    Eof,
}

fn syntax(pos: Pos, msg: impl Into<String>) -> PolicyError {
    PolicyError::Syntax {
        line: pos.line,
        col: pos.col,
        msg: msg.into(),
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, Pos)>, PolicyError> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    let mut line = 1;
    let mut col = 1;
    macro_rules! bump {
        () => {{
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                col = 1;
            } else if c.is_some() {
                col += 1;
            }
            c
        }};
    }
    while let Some(&c) = chars.peek() {
        let pos = Pos { line, col };
        if c.is_whitespace() {
            bump!();
            continue;
        }
        if c == '#' {
            while chars.peek().is_some_and(|&c| c != '\n') {
                bump!();
            }
            continue;
        }
        let tok = match c {
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            ':' => Tok::Colon,
            '.' => Tok::Dot,
            '=' => Tok::Eq,
            '!' | '¬' => Tok::Not,
            '&' | '∧' => Tok::And,
            '|' | '∨' => Tok::Or,
            '→' => Tok::Implies,
            '∀' => Tok::Forall,
            '∃' => Tok::Exists,
            '≤' => Tok::Cmp(CmpOp::Le),
            '≥' => Tok::Cmp(CmpOp::Ge),
            '<' | '>' => {
                bump!();
                let op = if chars.peek() == Some(&'=') {
                    bump!();
                    if c == '<' { CmpOp::Le } else { CmpOp::Ge }
                } else if c == '<' {
                    CmpOp::Lt
                } else {
                    CmpOp::Gt
                };
                out.push((Tok::Cmp(op), pos));
                continue;
            }
            '-' => {
                bump!();
                if chars.peek() != Some(&'>') {
                    return Err(syntax(pos, "expected `->`"));
                }
                bump!();
                out.push((Tok::Implies, pos));
                continue;
            }
            '"' => {
                bump!();
                let mut s = String::new();
                loop {
                    match bump!() {
                        None => return Err(syntax(pos, "unterminated string")),
                        Some('"') => break,
                        Some('\\') => match bump!() {
                            Some('n') => s.push('\n'),
                            Some(e @ ('"' | '\\')) => s.push(e),
                            _ => return Err(syntax(pos, "bad escape in string")),
                        },
                        Some(ch) => s.push(ch),
                    }
                }
                out.push((Tok::Str(s), pos));
                continue;
            }
            d if d.is_ascii_digit() => {
                let mut n: u64 = 0;
                while let Some(&d) = chars.peek() {
                    let Some(v) = d.to_digit(10) else { break };
                    n = n
                        .checked_mul(10)
                        .and_then(|n| n.checked_add(v as u64))
                        .ok_or_else(|| syntax(pos, "integer literal too large"))?;
                    bump!();
                }
                out.push((Tok::Int(n), pos));
                continue;
            }
            a if a.is_alphabetic() || a == '_' => {
                let mut s = String::new();
                while let Some(&a) = chars.peek() {
                    if a.is_alphanumeric() || a == '_' {
                        s.push(a);
                        bump!();
                    } else {
                        break;
                    }
                }
                let tok = match s.as_str() {
                    "forall" => Tok::Forall,
                    "exists" => Tok::Exists,
                    "const" => Tok::Const,
                    "var" => Tok::Var,
                    _ => Tok::Ident(s),
                };
                out.push((tok, pos));
                continue;
            }
            other => return Err(syntax(pos, format!("unexpected character `{other}`"))),
        };
        bump!();
        out.push((tok, pos));
    }
    out.push((Tok::Eof, Pos { line, col }));
    Ok(out)
}

#[derive(Debug, Clone)]
enum RawTerm {
    Ident(String),
    App(Func, Box<RawTerm>),
}

impl core::fmt::Display for RawTerm {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            RawTerm::Ident(s) => f.write_str(s),
            RawTerm::App(func, a) => write!(f, "{}({a})", func.keyword()),
        }
    }
}

#[derive(Debug, Clone)]
enum Raw {
    Eq(RawTerm, RawTerm),
    Cmp(CmpOp, RawTerm, RawTerm),
    Software(RawTerm, RawTerm),
    OnPath(RawTerm, RawTerm),
    Not(Box<Raw>),
    And(Box<Raw>, Box<Raw>),
    Or(Box<Raw>, Box<Raw>),
    Implies(Box<Raw>, Box<Raw>),
    Forall(VarDecl, Box<Raw>),
    Exists(VarDecl, Box<Raw>),
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    fn next(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), PolicyError> {
        if *self.peek() == want {
            self.next();
            Ok(())
        } else {
            Err(syntax(self.pos(), format!("expected {what}")))
        }
    }

    fn ident(&mut self) -> Result<String, PolicyError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.next();
                Ok(s)
            }
            _ => Err(syntax(self.pos(), "expected identifier")),
        }
    }

    fn sort(&mut self) -> Result<Sort, PolicyError> {
        let pos = self.pos();
        let s = self.ident()?;
        Sort::from_letter(&s).ok_or_else(|| syntax(pos, format!("unknown sort `{s}`")))
    }

    fn formula(&mut self) -> Result<Raw, PolicyError> {
        let lhs = self.disjunction()?;
        if *self.peek() == Tok::Implies {
            self.next();
            let rhs = self.formula()?;
            return Ok(Raw::Implies(Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn disjunction(&mut self) -> Result<Raw, PolicyError> {
        let mut lhs = self.conjunction()?;
        while *self.peek() == Tok::Or {
            self.next();
            let rhs = self.conjunction()?;
            lhs = Raw::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn conjunction(&mut self) -> Result<Raw, PolicyError> {
        let mut lhs = self.unary()?;
        while *self.peek() == Tok::And {
            self.next();
            let rhs = self.unary()?;
            lhs = Raw::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Raw, PolicyError> {
        match self.peek() {
            Tok::Not => {
                self.next();
                Ok(Raw::Not(Box::new(self.unary()?)))
            }
            Tok::Forall | Tok::Exists => {
                let universal = self.next() == Tok::Forall;
                let name = self.ident()?;
                self.expect(Tok::Colon, "`:`")?;
                let sort = self.sort()?;
                self.expect(Tok::Dot, "`.`")?;
                let body = Box::new(self.formula()?);
                let decl = VarDecl { name, sort };
                Ok(if universal { Raw::Forall(decl, body) } else { Raw::Exists(decl, body) })
            }
            Tok::LParen => {
                self.next();
                let f = self.formula()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(f)
            }
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> Result<Raw, PolicyError> {
        if let Tok::Ident(name) = self.peek() {
            let pred = match name.as_str() {
                "software" => Some(true),
                "onPath" => Some(false),
                _ => None,
            };
            if let Some(is_software) = pred {
                self.next();
                self.expect(Tok::LParen, "`(`")?;
                let a = self.term()?;
                self.expect(Tok::Comma, "`,`")?;
                let b = self.term()?;
                self.expect(Tok::RParen, "`)`")?;
                return Ok(if is_software { Raw::Software(a, b) } else { Raw::OnPath(a, b) });
            }
        }
        let lhs = self.term()?;
        let pos = self.pos();
        match self.next() {
            Tok::Eq => Ok(Raw::Eq(lhs, self.term()?)),
            Tok::Cmp(op) => Ok(Raw::Cmp(op, lhs, self.term()?)),
            _ => Err(syntax(pos, "expected `=` or a comparison")),
        }
    }

    fn term(&mut self) -> Result<RawTerm, PolicyError> {
        let name = self.ident()?;
        if *self.peek() == Tok::LParen {
            let pos = self.pos();
            let func = Func::from_name(&name)
                .ok_or_else(|| syntax(pos, format!("unknown function `{name}`")))?;
            self.next();
            let arg = self.term()?;
            self.expect(Tok::RParen, "`)`")?;
            return Ok(RawTerm::App(func, Box::new(arg)));
        }
        Ok(RawTerm::Ident(name))
    }

    fn header(&mut self) -> Result<(BTreeMap<String, ConstDecl>, Option<String>), PolicyError> {
        let mut consts = BTreeMap::new();
        let mut router_var = None;
        loop {
            match self.peek() {
                Tok::Const => {
                    self.next();
                    let pos = self.pos();
                    let name = self.ident()?;
                    self.expect(Tok::Colon, "`:`")?;
                    let sort = self.sort()?;
                    let value = if *self.peek() == Tok::Eq {
                        self.next();
                        Some(self.literal(sort)?)
                    } else {
                        None
                    };
                    if consts.insert(name.clone(), ConstDecl { sort, value }).is_some() {
                        return Err(syntax(pos, format!("constant `{name}` declared twice")));
                    }
                }
                Tok::Var => {
                    self.next();
                    let pos = self.pos();
                    let name = self.ident()?;
                    self.expect(Tok::Colon, "`:`")?;
                    if self.sort()? != Sort::R {
                        return Err(syntax(pos, "the free variable must have sort R"));
                    }
                    if router_var.replace(name).is_some() {
                        return Err(syntax(pos, "more than one free variable declared"));
                    }
                }
                _ => return Ok((consts, router_var)),
            }
        }
    }

    fn literal(&mut self, sort: Sort) -> Result<ConstValue, PolicyError> {
        let pos = self.pos();
        match (sort, self.next()) {
            (Sort::M, Tok::Int(n)) => match u32::try_from(n) {
                Ok(n) if n > 0 => Ok(ConstValue::Pen(n)),
                _ => Err(syntax(pos, "manufacturer must be a positive 32-bit number")),
            },
            (Sort::M, _) => Err(syntax(pos, "expected integer enterprise number")),
            (Sort::V, Tok::Str(s)) => Version::new(&s)
                .map(ConstValue::Version)
                .map_err(|e| syntax(pos, e.to_string())),
            (_, Tok::Str(s)) => Ok(ConstValue::Text(s)),
            _ => Err(syntax(pos, "expected quoted string")),
        }
    }
}

struct Typer<'a> {
    consts: &'a mut BTreeMap<String, ConstDecl>,
    router_var: &'a str,
    scope: Vec<VarDecl>,
    strict: bool,
    changed: bool,
}

fn sort_error(term: &dyn core::fmt::Display, expected: Sort, found: Sort) -> PolicyError {
    PolicyError::Sort {
        term: term.to_string(),
        expected: expected.to_string(),
        found: found.to_string(),
    }
}

impl Typer<'_> {
    /// `Ok(None)` only in lenient mode, for constants whose sort is not yet known.
    fn term(&mut self, raw: &RawTerm, expected: Option<Sort>) -> Result<Option<Term>, PolicyError> {
        let check = |t: Term| match expected {
            Some(e) if t.sort() != e => Err(sort_error(&t, e, t.sort())),
            _ => Ok(Some(t)),
        };
        match raw {
            RawTerm::App(func, arg) => {
                let (arg_sort, _) = func.signature();
                let inner = self.term(arg, Some(arg_sort))?;
                match inner {
                    Some(a) => check(Term::App(*func, Box::new(a))),
                    None => Ok(None),
                }
            }
            RawTerm::Ident(name) => {
                if let Some(v) = self.scope.iter().rev().find(|v| v.name == *name) {
                    return check(Term::Var { name: name.clone(), sort: v.sort });
                }
                if name == self.router_var {
                    return check(Term::Var { name: name.clone(), sort: Sort::R });
                }
                if let Some(c) = self.consts.get(name) {
                    return check(Term::Const { name: name.clone(), sort: c.sort });
                }
                match expected {
                    Some(sort) => {
                        self.consts.insert(name.clone(), ConstDecl { sort, value: None });
                        self.changed = true;
                        Ok(Some(Term::Const { name: name.clone(), sort }))
                    }
                    None if self.strict => Err(PolicyError::Sort {
                        term: name.clone(),
                        expected: "an inferable sort".into(),
                        found: "unconstrained constant".into(),
                    }),
                    None => Ok(None),
                }
            }
        }
    }

    fn pair(
        &mut self,
        a: &RawTerm,
        b: &RawTerm,
        sa: Option<Sort>,
        sb: Option<Sort>,
    ) -> Result<Option<(Term, Term)>, PolicyError> {
        let ta = self.term(a, sa)?;
        let tb = self.term(b, sb)?;
        Ok(ta.zip(tb))
    }

    fn formula(&mut self, raw: &Raw) -> Result<Option<Formula>, PolicyError> {
        Ok(match raw {
            Raw::Eq(a, b) => {
                let mut ta = self.term(a, None)?;
                let tb = self.term(b, ta.as_ref().map(Term::sort))?;
                if ta.is_none() {
                    if let Some(tb) = &tb {
                        ta = self.term(a, Some(tb.sort()))?;
                    } else if self.strict {
                        return Err(PolicyError::Sort {
                            term: a.to_string(),
                            expected: "an inferable sort".into(),
                            found: "unconstrained constant".into(),
                        });
                    }
                }
                ta.zip(tb).map(|(a, b)| Formula::Eq(a, b))
            }
            Raw::Cmp(op, a, b) => self
                .pair(a, b, Some(Sort::V), Some(Sort::V))?
                .map(|(a, b)| Formula::Cmp(*op, a, b)),
            Raw::Software(a, b) => self
                .pair(a, b, Some(Sort::R), Some(Sort::C))?
                .map(|(a, b)| Formula::Software(a, b)),
            Raw::OnPath(a, b) => self
                .pair(a, b, Some(Sort::P), Some(Sort::R))?
                .map(|(a, b)| Formula::OnPath(a, b)),
            Raw::Not(x) => self.formula(x)?.map(Formula::negate),
            Raw::And(a, b) => {
                let (fa, fb) = (self.formula(a)?, self.formula(b)?);
                fa.zip(fb).map(|(a, b)| Formula::and(a, b))
            }
            Raw::Or(a, b) => {
                let (fa, fb) = (self.formula(a)?, self.formula(b)?);
                fa.zip(fb).map(|(a, b)| Formula::or(a, b))
            }
            Raw::Implies(a, b) => {
                let (fa, fb) = (self.formula(a)?, self.formula(b)?);
                fa.zip(fb).map(|(a, b)| Formula::implies(a, b))
            }
            Raw::Forall(v, body) | Raw::Exists(v, body) => {
                self.scope.push(v.clone());
                let inner = self.formula(body);
                self.scope.pop();
                inner?.map(|b| match raw {
                    Raw::Forall(..) => Formula::Forall(v.clone(), Box::new(b)),
                    _ => Formula::Exists(v.clone(), Box::new(b)),
                })
            }
        })
    }
}

/// Parses a document into a well-sorted formula. Path-level atoms are
/// allowed; use [`parse_policy`] for router policies.
pub fn parse_formula(text: &str) -> Result<Policy, PolicyError> {
    let mut p = Parser { toks: lex(text)?, at: 0 };
    let (mut constants, router_var) = p.header()?;
    let router_var = router_var.unwrap_or_else(|| DEFAULT_ROUTER_VAR.into());
    if constants.contains_key(&router_var) {
        return Err(PolicyError::Syntax {
            line: 1,
            col: 1,
            msg: format!("constant `{router_var}` clashes with the free variable"),
        });
    }
    let raw = p.formula()?;
    if *p.peek() != Tok::Eof {
        return Err(syntax(p.pos(), "unexpected trailing input"));
    }
    // Sorts of undeclared constants may only become known from a later
    // occurrence, so iterate leniently until nothing new is learned.
    loop {
        let mut t = Typer {
            consts: &mut constants,
            router_var: &router_var,
            scope: Vec::new(),
            strict: false,
            changed: false,
        };
        t.formula(&raw)?;
        if !t.changed {
            break;
        }
    }
    let mut t = Typer {
        consts: &mut constants,
        router_var: &router_var,
        scope: Vec::new(),
        strict: true,
        changed: false,
    };
    let formula = t.formula(&raw)?.expect("strict typing resolves every term");
    Ok(Policy { router_var, constants, formula })
}

/// Parses a router policy: one free router variable, no path atoms, no
/// router/component/path constants, and component quantifiers guarded by
/// `software(r, c)`.
pub fn parse_policy(text: &str) -> Result<Policy, PolicyError> {
    let policy = parse_formula(text)?;
    check_router_policy(&policy)?;
    Ok(policy)
}

pub fn check_router_policy(policy: &Policy) -> Result<(), PolicyError> {
    for (name, c) in &policy.constants {
        if matches!(c.sort, Sort::C | Sort::R | Sort::P) {
            return Err(PolicyError::NotRouterPolicy(format!(
                "constant `{name}` of sort {} is not allowed",
                c.sort
            )));
        }
    }
    restricted(&policy.formula, &policy.router_var)
}

fn conjuncts<'f>(f: &'f Formula, out: &mut Vec<&'f Formula>) {
    match f {
        Formula::And(a, b) => {
            conjuncts(a, out);
            conjuncts(b, out);
        }
        other => out.push(other),
    }
}

fn guarded(f: &Formula, router: &str, var: &str) -> bool {
    let mut cs = Vec::new();
    conjuncts(f, &mut cs);
    cs.iter().any(|c| {
        matches!(c, Formula::Software(Term::Var { name: r, .. }, Term::Var { name: v, .. })
            if r == router && v == var)
    })
}

fn restricted(f: &Formula, router: &str) -> Result<(), PolicyError> {
    let deny = |msg: String| Err(PolicyError::NotRouterPolicy(msg));
    match f {
        Formula::OnPath(..) => deny("onPath is not allowed in a router policy".into()),
        Formula::Eq(..) | Formula::Cmp(..) | Formula::Software(..) => Ok(()),
        Formula::Not(x) => restricted(x, router),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
            restricted(a, router)?;
            restricted(b, router)
        }
        Formula::Forall(v, body) | Formula::Exists(v, body) => {
            if v.name == router {
                return deny(format!("quantified variable `{}` shadows the router variable", v.name));
            }
            if matches!(v.sort, Sort::R | Sort::P) {
                return deny(format!("quantification over sort {} is not allowed", v.sort));
            }
            if v.sort == Sort::C {
                let ok = match (f, &**body) {
                    (Formula::Forall(..), Formula::Implies(ante, _)) => guarded(ante, router, &v.name),
                    (Formula::Exists(..), b) => guarded(b, router, &v.name),
                    _ => false,
                };
                if !ok {
                    return deny(format!(
                        "component variable `{}` must be guarded by software({router}, {})",
                        v.name, v.name
                    ));
                }
            }
            restricted(body, router)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_atom() {
        let p = parse_policy("const m1: M = 9\nmanu(r) = m1").unwrap();
        assert_eq!(
            p.formula,
            Formula::Eq(
                Term::App(Func::Manufacturer, Box::new(Term::Var { name: "r".into(), sort: Sort::R })),
                Term::Const { name: "m1".into(), sort: Sort::M },
            )
        );
        assert_eq!(p.constants["m1"].value, Some(ConstValue::Pen(9)));
    }

    #[test]
    fn preference_example_shape() {
        let p = parse_policy(
            "(manu(r) = m1 | manu(r) = m2) & forall c: C. (software(r, c) & name(c) = s_crit \
             & issuer(tag(c)) = i) -> version(c) >= v_min",
        )
        .unwrap();
        let Formula::And(lhs, rhs) = &p.formula else { panic!("{:?}", p.formula) };
        assert!(matches!(**lhs, Formula::Or(..)));
        let Formula::Forall(v, body) = &**rhs else { panic!() };
        assert_eq!(v.sort, Sort::C);
        assert!(matches!(**body, Formula::Implies(..)));
        assert_eq!(p.constants["v_min"].sort, Sort::V);
        assert_eq!(p.constants["i"].sort, Sort::I);
        assert_eq!(p.constants["s_crit"].sort, Sort::N);
    }

    #[test]
    fn version_against_name_is_a_sort_error() {
        let e = parse_policy("forall c: C. software(r, c) -> version(c) <= name(c)").unwrap_err();
        assert_eq!(
            e,
            PolicyError::Sort { term: "name(c)".into(), expected: "V".into(), found: "N".into() }
        );
    }

    #[test]
    fn unicode_operators() {
        let a = parse_policy("∀c: C. software(r, c) ∧ ¬(name(c) = n) → version(c) ≥ v").unwrap();
        let b = parse_policy("forall c: C. software(r, c) & !(name(c) = n) -> version(c) >= v").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sort_learned_from_later_occurrence() {
        let p = parse_formula("x = y & name(c0) = y & exists c0: C. software(r, c0)");
        // `c0` outside the quantifier is a constant of sort C.
        assert!(p.is_ok());
        assert!(parse_policy("x = y & y = name(c0)").is_err());
        let p = parse_policy("x = y & exists c: C. software(r, c) & name(c) = y").unwrap();
        assert_eq!(p.constants["x"].sort, Sort::N);
    }

    #[test]
    fn ambiguous_constant_equality() {
        assert!(matches!(parse_policy("a = b"), Err(PolicyError::Sort { .. })));
    }

    #[test]
    fn conflicting_inferred_sorts() {
        assert!(matches!(
            parse_policy("manu(r) = x & exists c: C. software(r, c) & name(c) = x"),
            Err(PolicyError::Sort { .. })
        ));
    }

    #[test]
    fn syntax_error_position() {
        let e = parse_policy("const m: M = 9\nmanu(r) = = m").unwrap_err();
        assert!(matches!(e, PolicyError::Syntax { line: 2, col: 11, .. }), "{e:?}");
        assert!(matches!(parse_policy("manu(r) = m &"), Err(PolicyError::Syntax { .. })));
        assert!(matches!(parse_policy("const m: M = 0\nmanu(r) = m"), Err(PolicyError::Syntax { .. })));
    }

    #[test]
    fn router_policy_restrictions() {
        let bad = [
            "exists c: C. name(c) = n",
            "forall c: C. name(c) = n",
            "forall c: C. name(c) = n -> software(r, c)",
            "exists p: P. onPath(p, r)",
            "forall q: R. manu(q) = m",
            "software(r, c0)",
        ];
        for text in bad {
            assert!(
                matches!(parse_policy(text), Err(PolicyError::NotRouterPolicy(_))),
                "{text}"
            );
        }
        assert!(parse_formula("exists p: P. onPath(p, r)").is_ok());
    }

    #[test]
    fn custom_router_variable() {
        let p = parse_policy("const m: M = 4\nvar x: R\nmanu(x) = m").unwrap();
        assert_eq!(p.router_var, "x");
        assert!(parse_policy("var x: R\nmanu(r) = m").is_err());
    }

    #[test]
    fn comments_and_strings() {
        let p = parse_policy("# header\nconst s: N = \"a \\\"q\\\" b\" # trailing\nexists c: C. software(r, c) & name(c) = s").unwrap();
        assert_eq!(p.constants["s"].value, Some(ConstValue::Text("a \"q\" b".into())));
    }

    #[test]
    fn printed_documents_reparse() {
        let texts = [
            "const m1: M = 9\nconst v: V = \"1.2\"\n(manu(r) = m1 | !(manu(r) = m1)) & (forall c: C. software(r, c) -> version(c) > v)",
            "a -> b = c -> (exists c: C. software(r, c)) & manu(r) = m",
            "!(exists n: N. n = s) | (forall t: T. issuer(t) = i) -> manu(r) = m",
        ];
        for text in texts {
            let Ok(p) = parse_policy(text) else { continue };
            let printed = p.to_string();
            assert_eq!(parse_policy(&printed).unwrap(), p, "{printed}");
        }
        let p = parse_policy(texts[0]).unwrap();
        assert_eq!(parse_policy(&p.to_string()).unwrap(), p);
    }
}
