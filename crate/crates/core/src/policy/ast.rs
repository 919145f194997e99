//! Sorted first-order formulas over router attributes.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::String;
use core::fmt;

use super::version::Version;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sort {
    /// Manufacturer.
    M,
    /// Software component.
    C,
    /// Tag.
    T,
    /// Tag issuer.
    I,
    /// Name.
    N,
    /// Version.
    V,
    /// Router.
    R,
    /// Path.
    P,
}

impl Sort {
    pub fn from_letter(s: &str) -> Option<Sort> {
        Some(match s {
            "M" => Sort::M,
            "C" => Sort::C,
            "T" => Sort::T,
            "I" => Sort::I,
            "N" => Sort::N,
            "V" => Sort::V,
            "R" => Sort::R,
            "P" => Sort::P,
            _ => return None,
        })
    }
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Sort::M => "M",
            Sort::C => "C",
            Sort::T => "T",
            Sort::I => "I",
            Sort::N => "N",
            Sort::V => "V",
            Sort::R => "R",
            Sort::P => "P",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Tag,
    Issuer,
    Name,
    Version,
    Manufacturer,
}

impl Func {
    pub fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "tag" => Func::Tag,
            "issuer" => Func::Issuer,
            "name" => Func::Name,
            "version" => Func::Version,
            "manu" | "manufacturer" => Func::Manufacturer,
            _ => return None,
        })
    }

    /// (argument sort, result sort)
    pub fn signature(self) -> (Sort, Sort) {
        match self {
            Func::Tag => (Sort::C, Sort::T),
            Func::Issuer => (Sort::T, Sort::I),
            Func::Name => (Sort::C, Sort::N),
            Func::Version => (Sort::C, Sort::V),
            Func::Manufacturer => (Sort::R, Sort::M),
        }
    }

    pub fn keyword(self) -> &'static str {
        match self {
            Func::Tag => "tag",
            Func::Issuer => "issuer",
            Func::Name => "name",
            Func::Version => "version",
            Func::Manufacturer => "manu",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Var { name: String, sort: Sort },
    Const { name: String, sort: Sort },
    App(Func, Box<Term>),
}

impl Term {
    pub fn sort(&self) -> Sort {
        match self {
            Term::Var { sort, .. } | Term::Const { sort, .. } => *sort,
            Term::App(f, _) => f.signature().1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Lt,
    Le,
    Ge,
    Gt,
}

impl CmpOp {
    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VarDecl {
    pub name: String,
    pub sort: Sort,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    Eq(Term, Term),
    /// Order comparison; both sides have sort V.
    Cmp(CmpOp, Term, Term),
    Software(Term, Term),
    OnPath(Term, Term),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Forall(VarDecl, Box<Formula>),
    Exists(VarDecl, Box<Formula>),
}

impl Formula {
    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn negate(a: Formula) -> Formula {
        Formula::Not(Box::new(a))
    }

    fn precedence(&self) -> u8 {
        match self {
            Formula::Implies(..) => 1,
            Formula::Or(..) => 2,
            Formula::And(..) => 3,
            Formula::Forall(..) | Formula::Exists(..) => 0,
            _ => 4,
        }
    }
}

/// A constant's bound value.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ConstValue {
    /// Private enterprise number.
    Pen(u32),
    Text(String),
    Version(Version),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstDecl {
    pub sort: Sort,
    pub value: Option<ConstValue>,
}

/// A router policy: one formula with a single free router variable, plus
/// the constant declarations it was parsed with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    pub router_var: String,
    pub constants: BTreeMap<String, ConstDecl>,
    pub formula: Formula,
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var { name, .. } | Term::Const { name, .. } => f.write_str(name),
            Term::App(func, arg) => write!(f, "{}({})", func.keyword(), arg),
        }
    }
}

struct Child<'a>(&'a Formula, bool);

impl fmt::Display for Child<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.1 {
            write!(f, "({})", self.0)
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Quantifier bodies extend as far right as possible, so a quantifier
        // nested under any connective is parenthesized.
        let wrap = |child: &Formula, min: u8| {
            let p = child.precedence();
            p == 0 || p < min
        };
        match self {
            Formula::Eq(a, b) => write!(f, "{a} = {b}"),
            Formula::Cmp(op, a, b) => write!(f, "{a} {} {b}", op.symbol()),
            Formula::Software(a, b) => write!(f, "software({a}, {b})"),
            Formula::OnPath(a, b) => write!(f, "onPath({a}, {b})"),
            Formula::Not(x) => write!(f, "!{}", Child(x, wrap(x, 4))),
            Formula::And(a, b) => {
                write!(f, "{} & {}", Child(a, wrap(a, 3)), Child(b, wrap(b, 4)))
            }
            Formula::Or(a, b) => {
                write!(f, "{} | {}", Child(a, wrap(a, 2)), Child(b, wrap(b, 3)))
            }
            Formula::Implies(a, b) => {
                write!(f, "{} -> {}", Child(a, wrap(a, 2)), Child(b, wrap(b, 1)))
            }
            Formula::Forall(v, body) => write!(f, "forall {}: {}. {}", v.name, v.sort, body),
            Formula::Exists(v, body) => write!(f, "exists {}: {}. {}", v.name, v.sort, body),
        }
    }
}

fn write_quoted(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_str("\"")?;
    for ch in s.chars() {
        match ch {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            c => write!(f, "{c}")?,
        }
    }
    f.write_str("\"")
}

/// Prints the full policy document: declarations, then the formula.
impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, decl) in &self.constants {
            write!(f, "const {name}: {}", decl.sort)?;
            match &decl.value {
                None => {}
                Some(ConstValue::Pen(n)) => write!(f, " = {n}")?,
                Some(ConstValue::Text(s)) => {
                    f.write_str(" = ")?;
                    write_quoted(f, s)?
                }
                Some(ConstValue::Version(v)) => {
                    f.write_str(" = ")?;
                    write_quoted(f, v.as_str())?
                }
            }
            writeln!(f)?;
        }
        if self.router_var != "r" {
            writeln!(f, "var {}: R", self.router_var)?;
        }
        write!(f, "{}", self.formula)
    }
}
