//! The Aspect of Assembly language: pointcuts built from name patterns and
//! metadata filters, advices built from instantiation, link and rewrite
//! rules whose right-hand sides are operator trees.

mod parser;
mod pattern;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use crate::assembly::{Direction, Value};

pub use parser::{
    parse_aa, parse_operator_expr, parse_pattern, ParseError, ParseErrorKind, KEYWORDS, PUNCTUATION,
};
pub use pattern::{Atom, Pattern};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterOp {
    Eq,
    Lt,
    Gt,
}

/// `key=value`, `key<number` or `key>number` over component metadata
/// (falling back to properties).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetadataFilter {
    pub key: String,
    pub op: FilterOp,
    pub value: Value,
}

impl MetadataFilter {
    pub fn accepts(&self, found: Option<&Value>) -> bool {
        let Some(found) = found else { return false };
        match self.op {
            FilterOp::Eq => match (found.as_f64(), self.value.as_f64()) {
                (Some(a), Some(b)) if matches!(self.value, Value::Num(_)) => a == b,
                _ => match (found, &self.value) {
                    (Value::Str(a), Value::Str(b)) => a.eq_ignore_ascii_case(b),
                    (a, b) => a == b,
                },
            },
            FilterOp::Lt => {
                matches!((found.as_f64(), self.value.as_f64()), (Some(a), Some(b)) if a < b)
            }
            FilterOp::Gt => {
                matches!((found.as_f64(), self.value.as_f64()), (Some(a), Some(b)) if a > b)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointcutRule {
    pub variable: String,
    pub pattern: Pattern,
    pub filters: Vec<MetadataFilter>,
}

/// A port reference inside an advice: `name`, `name.port` or `name.^port`.
/// `name` is either a pointcut variable or a locally instantiated
/// component. After grounding, `name` is a concrete component id and
/// `port` is always present.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PortExpr {
    pub name: String,
    pub port: Option<String>,
    pub required: bool,
}

impl PortExpr {
    pub fn var(name: impl Into<String>) -> Self {
        PortExpr {
            name: name.into(),
            port: None,
            required: false,
        }
    }

    pub fn provided(name: impl Into<String>, port: impl Into<String>) -> Self {
        PortExpr {
            name: name.into(),
            port: Some(port.into()),
            required: false,
        }
    }

    pub fn required(name: impl Into<String>, port: impl Into<String>) -> Self {
        PortExpr {
            name: name.into(),
            port: Some(port.into()),
            required: true,
        }
    }

    pub fn direction(&self) -> Direction {
        if self.required {
            Direction::Required
        } else {
            Direction::Provided
        }
    }
}

impl fmt::Display for PortExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.port {
            None => write!(f, "{}", self.name),
            Some(p) if self.required => write!(f, "{}.^{}", self.name, p),
            Some(p) => write!(f, "{}.{}", self.name, p),
        }
    }
}

/// Operator expression attached to a link or rewrite.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum OperatorTree {
    Leaf(PortExpr),
    If {
        cond: PortExpr,
        then: Box<OperatorTree>,
        els: Box<OperatorTree>,
    },
    Seq(Vec<OperatorTree>),
    Par(Vec<OperatorTree>),
    Nop,
    Call,
    Delegate(Box<OperatorTree>),
}

impl OperatorTree {
    pub fn leaf(p: PortExpr) -> Self {
        OperatorTree::Leaf(p)
    }

    pub fn if_(cond: PortExpr, then: OperatorTree, els: OperatorTree) -> Self {
        OperatorTree::If {
            cond,
            then: Box::new(then),
            els: Box::new(els),
        }
    }

    pub fn delegate(t: OperatorTree) -> Self {
        OperatorTree::Delegate(Box::new(t))
    }

    fn rank(&self) -> u8 {
        match self {
            OperatorTree::Leaf(_) => 0,
            OperatorTree::Nop => 1,
            OperatorTree::Call => 2,
            OperatorTree::Delegate(_) => 3,
            OperatorTree::If { .. } => 4,
            OperatorTree::Seq(_) => 5,
            OperatorTree::Par(_) => 6,
        }
    }

    /// Depth with leaves, `nop` and `call` at depth 1.
    pub fn depth(&self) -> usize {
        match self {
            OperatorTree::Leaf(_) | OperatorTree::Nop | OperatorTree::Call => 1,
            OperatorTree::Delegate(c) => 1 + c.depth(),
            OperatorTree::If { then, els, .. } => 1 + then.depth().max(els.depth()),
            OperatorTree::Seq(cs) | OperatorTree::Par(cs) => {
                1 + cs.iter().map(Self::depth).max().unwrap_or(0)
            }
        }
    }

    /// Applies `f` to every port expression (leaves and conditions).
    pub fn map_ports(&self, f: &mut impl FnMut(&PortExpr) -> PortExpr) -> OperatorTree {
        match self {
            OperatorTree::Leaf(p) => OperatorTree::Leaf(f(p)),
            OperatorTree::If { cond, then, els } => {
                let cond = f(cond);
                let then = then.map_ports(f);
                OperatorTree::if_(cond, then, els.map_ports(f))
            }
            OperatorTree::Seq(cs) => OperatorTree::Seq(cs.iter().map(|c| c.map_ports(f)).collect()),
            OperatorTree::Par(cs) => OperatorTree::Par(cs.iter().map(|c| c.map_ports(f)).collect()),
            OperatorTree::Nop => OperatorTree::Nop,
            OperatorTree::Call => OperatorTree::Call,
            OperatorTree::Delegate(c) => OperatorTree::delegate(c.map_ports(f)),
        }
    }

    pub fn ports(&self) -> Vec<&PortExpr> {
        let mut out = Vec::new();
        self.collect_ports(&mut out);
        out
    }

    fn collect_ports<'a>(&'a self, out: &mut Vec<&'a PortExpr>) {
        match self {
            OperatorTree::Leaf(p) => out.push(p),
            OperatorTree::If { cond, then, els } => {
                out.push(cond);
                then.collect_ports(out);
                els.collect_ports(out);
            }
            OperatorTree::Seq(cs) | OperatorTree::Par(cs) => {
                cs.iter().for_each(|c| c.collect_ports(out))
            }
            OperatorTree::Delegate(c) => c.collect_ports(out),
            OperatorTree::Nop | OperatorTree::Call => {}
        }
    }
}

impl PartialOrd for OperatorTree {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Canonical structural order: variant rank first
/// (leaf < nop < call < delegate < if < seq < par), then contents.
impl Ord for OperatorTree {
    fn cmp(&self, other: &Self) -> Ordering {
        use OperatorTree::*;
        self.rank()
            .cmp(&other.rank())
            .then_with(|| match (self, other) {
                (Leaf(a), Leaf(b)) => a.cmp(b),
                (Delegate(a), Delegate(b)) => a.cmp(b),
                (
                    If {
                        cond: c1,
                        then: t1,
                        els: e1,
                    },
                    If {
                        cond: c2,
                        then: t2,
                        els: e2,
                    },
                ) => c1.cmp(c2).then_with(|| t1.cmp(t2)).then_with(|| e1.cmp(e2)),
                (Seq(a), Seq(b)) | (Par(a), Par(b)) => a.cmp(b),
                _ => Ordering::Equal,
            })
    }
}

impl fmt::Display for OperatorTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperatorTree::Leaf(p) => write!(f, "{p}"),
            OperatorTree::Nop => write!(f, "nop"),
            OperatorTree::Call => write!(f, "call"),
            OperatorTree::Delegate(c) => write!(f, "delegate({c})"),
            OperatorTree::If { cond, then, els } => {
                write!(f, "if ({cond}) {{{then}}} else {{{els}}}")
            }
            OperatorTree::Seq(cs) => {
                for (i, c) in cs.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ; ")?;
                    }
                    match c {
                        OperatorTree::Seq(_) | OperatorTree::Par(_) => write!(f, "({c})")?,
                        _ => write!(f, "{c}")?,
                    }
                }
                Ok(())
            }
            OperatorTree::Par(cs) => {
                for (i, c) in cs.iter().enumerate() {
                    if i > 0 {
                        write!(f, " || ")?;
                    }
                    match c {
                        OperatorTree::Par(_) => write!(f, "({c})")?,
                        _ => write!(f, "{c}")?,
                    }
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AdviceRule {
    Instantiate {
        local_name: String,
        type_name: String,
        init_props: BTreeMap<String, Value>,
    },
    /// From a required port to an operator tree.
    Link { from: PortExpr, tree: OperatorTree },
    /// Rewrites the links arriving at a provided port. A bare variable on
    /// the left parses as a rewrite; grounding turns it into a link when
    /// the joinpoint turns out to be a required port.
    Rewrite {
        target: PortExpr,
        tree: OperatorTree,
    },
}

impl AdviceRule {
    pub fn tree(&self) -> Option<&OperatorTree> {
        match self {
            AdviceRule::Link { tree, .. } | AdviceRule::Rewrite { tree, .. } => Some(tree),
            AdviceRule::Instantiate { .. } => None,
        }
    }
}

fn fmt_value(v: &Value) -> String {
    match v {
        Value::Str(s) => format!("'{s}'"),
        other => other.to_string(),
    }
}

impl fmt::Display for AdviceRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdviceRule::Instantiate {
                local_name,
                type_name,
                init_props,
            } => {
                write!(f, "{local_name} : '{type_name}'")?;
                if !init_props.is_empty() {
                    let props: Vec<String> = init_props
                        .iter()
                        .map(|(k, v)| format!("{k} = {}", fmt_value(v)))
                        .collect();
                    write!(f, " ({})", props.join(", "))?;
                }
                write!(f, ";")
            }
            AdviceRule::Link { from, tree } => write!(f, "{from} -> ({tree})"),
            AdviceRule::Rewrite { target, tree } => write!(f, "{target} -> ({tree})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AspectOfAssembly {
    pub name: String,
    /// Set by the cascade that deploys the aspect; not part of the source.
    pub namespace: Option<String>,
    pub pointcut: Vec<PointcutRule>,
    pub advice_params: Vec<String>,
    pub rules: Vec<AdviceRule>,
}

impl AspectOfAssembly {
    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.pointcut.iter().map(|r| r.variable.as_str())
    }

    pub fn rule_count(&self) -> usize {
        self.rules.len()
    }

    pub fn local_names(&self) -> impl Iterator<Item = &str> {
        self.rules.iter().filter_map(|r| match r {
            AdviceRule::Instantiate { local_name, .. } => Some(local_name.as_str()),
            _ => None,
        })
    }
}

fn fmt_filter(flt: &MetadataFilter) -> String {
    let op = match flt.op {
        FilterOp::Eq => "=",
        FilterOp::Lt => "<",
        FilterOp::Gt => ">",
    };
    let value = match &flt.value {
        Value::Str(s)
            if !s
                .chars()
                .all(|c| c.is_alphanumeric() || c == '_' || c == '.') =>
        {
            format!("'{s}'")
        }
        Value::Str(s) => s.clone(),
        v => v.to_string(),
    };
    format!("@{}{op}{value}", flt.key)
}

impl fmt::Display for AspectOfAssembly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Pointcut:")?;
        for r in &self.pointcut {
            let (comp, port) = r.pattern.split_display();
            if r.filters.is_empty() {
                match port {
                    Some(p) => writeln!(f, "  {} := /{comp}.{p}/", r.variable)?,
                    None => writeln!(f, "  {} := /{comp}/", r.variable)?,
                }
            } else {
                let filters: Vec<String> = r.filters.iter().map(fmt_filter).collect();
                match port {
                    Some(p) => {
                        writeln!(f, "  {} := /{comp}({}).{p}/", r.variable, filters.join("&"))?
                    }
                    None => writeln!(f, "  {} := /{comp}({})/", r.variable, filters.join("&"))?,
                }
            }
        }
        writeln!(f, "Advice:")?;
        writeln!(
            f,
            "  schema {}({}):",
            self.name,
            self.advice_params.join(", ")
        )?;
        for r in &self.rules {
            writeln!(f, "  {r}")?;
        }
        Ok(())
    }
}
