//! The symmetric merge ⊗ over operator trees.
//!
//! Trees are brought into a canonical form: an ordered, reduced decision
//! diagram whose inner nodes are `if` tests (conditions strictly increasing
//! from the root, no node with equal branches) and whose terminals form a
//! join-semilattice:
//!
//! ```text
//! call  <  action sets (ordered by inclusion)  <  delegate(x)  <  clash  <  nop
//! ```
//!
//! ⊗ is the pointwise join lifted through the diagram, so commutativity,
//! associativity and idempotency follow from the lattice. `if ⊗ if` with
//! equal conditions merges branch-wise, with distinct conditions the
//! smaller condition ends up outermost, and `x ⊗ if(c, a, b)` distributes
//! into both branches.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::lang::{OperatorTree, PortExpr};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MergeError {
    #[error("delegate clash: {} distinct delegates claim the same interaction ({})", .delegates.len(), fmt_list(.delegates))]
    DelegateClash { delegates: Vec<OperatorTree> },
}

fn fmt_list(ts: &[OperatorTree]) -> String {
    ts.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Terminal {
    Call,
    /// Parallel actions. Never the lone `{nop}` or `{delegate(x)}` set:
    /// those are represented by `Nop` and `Delegate`.
    Actions(BTreeSet<OperatorTree>),
    Delegate(OperatorTree),
    Clash(BTreeSet<OperatorTree>),
    Nop,
}

impl Terminal {
    fn from_atoms(atoms: BTreeSet<OperatorTree>) -> Terminal {
        if atoms.is_empty() {
            return Terminal::Call;
        }
        if atoms.len() == 1 {
            match atoms.first().expect("one atom") {
                OperatorTree::Nop => return Terminal::Nop,
                OperatorTree::Delegate(inner) => return Terminal::Delegate((**inner).clone()),
                _ => {}
            }
        }
        Terminal::Actions(atoms)
    }

    /// View inside a parallel block, where `nop` and delegates are inert
    /// members rather than absorbing.
    fn into_atoms(self) -> BTreeSet<OperatorTree> {
        match self {
            Terminal::Call => BTreeSet::new(),
            Terminal::Nop => BTreeSet::from([OperatorTree::Nop]),
            Terminal::Delegate(x) => BTreeSet::from([OperatorTree::delegate(x)]),
            Terminal::Actions(s) => s,
            Terminal::Clash(s) => s.into_iter().map(OperatorTree::delegate).collect(),
        }
    }

    fn join(a: Terminal, b: Terminal) -> Terminal {
        use Terminal::*;
        match (a, b) {
            (Nop, _) | (_, Nop) => Nop,
            (Call, t) | (t, Call) => t,
            (Clash(mut x), Clash(y)) => {
                x.extend(y);
                Clash(x)
            }
            (Clash(mut x), Delegate(d)) | (Delegate(d), Clash(mut x)) => {
                x.insert(d);
                Clash(x)
            }
            (Clash(x), Actions(_)) | (Actions(_), Clash(x)) => Clash(x),
            (Delegate(x), Delegate(y)) => {
                if x == y {
                    Delegate(x)
                } else {
                    Clash(BTreeSet::from([x, y]))
                }
            }
            (Delegate(x), Actions(_)) | (Actions(_), Delegate(x)) => Delegate(x),
            (Actions(mut x), Actions(y)) => {
                x.extend(y);
                Actions(x)
            }
        }
    }

    fn par(a: Terminal, b: Terminal) -> Terminal {
        let mut atoms = a.into_atoms();
        atoms.extend(b.into_atoms());
        Terminal::from_atoms(atoms)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Node {
    Term(Terminal),
    If(PortExpr, Box<Node>, Box<Node>),
}

impl Node {
    fn top(&self) -> Option<&PortExpr> {
        match self {
            Node::If(c, _, _) => Some(c),
            Node::Term(_) => None,
        }
    }

    /// Branches of `self` under `cond = true` and `cond = false`, where
    /// `cond` is not larger than any condition in `self`.
    fn cofactor(&self, cond: &PortExpr) -> (&Node, &Node) {
        match self {
            Node::If(c, t, e) if c == cond => (t, e),
            _ => (self, self),
        }
    }

    fn mk(cond: PortExpr, then: Node, els: Node) -> Node {
        if then == els {
            then
        } else {
            Node::If(cond, Box::new(then), Box::new(els))
        }
    }

    fn apply(a: &Node, b: &Node, f: fn(Terminal, Terminal) -> Terminal) -> Node {
        match (a, b) {
            (Node::Term(x), Node::Term(y)) => Node::Term(f(x.clone(), y.clone())),
            _ => {
                let cond = match (a.top(), b.top()) {
                    (Some(x), Some(y)) => x.min(y),
                    (Some(x), None) | (None, Some(x)) => x,
                    (None, None) => unreachable!(),
                }
                .clone();
                let (at, ae) = a.cofactor(&cond);
                let (bt, be) = b.cofactor(&cond);
                let then = Node::apply(at, bt, f);
                let els = Node::apply(ae, be, f);
                Node::mk(cond, then, els)
            }
        }
    }

    /// `if (cond) {then} else {els}` for arbitrary canonical branches.
    fn ite(cond: &PortExpr, then: &Node, els: &Node) -> Node {
        let smallest = [then.top(), els.top()].into_iter().flatten().min();
        match smallest {
            Some(m) if m < cond => {
                let m = m.clone();
                let (tt, te) = then.cofactor(&m);
                let (et, ee) = els.cofactor(&m);
                let hi = Node::ite(cond, tt, et);
                let lo = Node::ite(cond, te, ee);
                Node::mk(m, hi, lo)
            }
            _ => {
                let (t, _) = then.cofactor(cond);
                let (_, e) = els.cofactor(cond);
                Node::mk(cond.clone(), t.clone(), e.clone())
            }
        }
    }

    fn from_tree(tree: &OperatorTree) -> Node {
        match tree {
            OperatorTree::Leaf(p) => {
                Node::Term(Terminal::Actions(BTreeSet::from([OperatorTree::Leaf(
                    p.clone(),
                )])))
            }
            OperatorTree::Nop => Node::Term(Terminal::Nop),
            OperatorTree::Call => Node::Term(Terminal::Call),
            OperatorTree::Delegate(inner) => Node::Term(Terminal::Delegate(normalize(inner))),
            OperatorTree::If { cond, then, els } => {
                Node::ite(cond, &Node::from_tree(then), &Node::from_tree(els))
            }
            OperatorTree::Par(children) => children
                .iter()
                .map(Node::from_tree)
                .reduce(|a, b| Node::apply(&a, &b, Terminal::par))
                .unwrap_or(Node::Term(Terminal::Call)),
            OperatorTree::Seq(children) => {
                let mut flat = Vec::with_capacity(children.len());
                for c in children {
                    match normalize(c) {
                        OperatorTree::Seq(inner) => flat.extend(inner),
                        other => flat.push(other),
                    }
                }
                match flat.len() {
                    0 => Node::Term(Terminal::Call),
                    1 => Node::from_tree(&flat[0]),
                    _ => Node::Term(Terminal::Actions(BTreeSet::from([OperatorTree::Seq(flat)]))),
                }
            }
        }
    }

    fn to_tree(&self) -> Result<OperatorTree, MergeError> {
        match self {
            Node::If(c, t, e) => Ok(OperatorTree::if_(c.clone(), t.to_tree()?, e.to_tree()?)),
            Node::Term(Terminal::Call) => Ok(OperatorTree::Call),
            Node::Term(Terminal::Nop) => Ok(OperatorTree::Nop),
            Node::Term(Terminal::Delegate(x)) => Ok(OperatorTree::delegate(x.clone())),
            Node::Term(Terminal::Clash(ds)) => Err(MergeError::DelegateClash {
                delegates: ds.iter().cloned().collect(),
            }),
            Node::Term(Terminal::Actions(atoms)) => {
                if atoms.len() == 1 {
                    Ok(atoms.first().expect("one atom").clone())
                } else {
                    Ok(OperatorTree::Par(atoms.iter().cloned().collect()))
                }
            }
        }
    }
}

/// A tree in canonical form, closed under ⊗. Clashing delegates are kept
/// as an internal value so that ⊗ stays total; they surface as an error
/// only when converting back with [`Merged::into_tree`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Merged(Node);

impl Merged {
    pub fn new(tree: &OperatorTree) -> Self {
        Merged(Node::from_tree(tree))
    }

    pub fn merge(&self, other: &Merged) -> Merged {
        Merged(Node::apply(&self.0, &other.0, Terminal::join))
    }

    pub fn is_clash(&self) -> bool {
        fn walk(n: &Node) -> bool {
            match n {
                Node::Term(Terminal::Clash(_)) => true,
                Node::Term(_) => false,
                Node::If(_, t, e) => walk(t) || walk(e),
            }
        }
        walk(&self.0)
    }

    pub fn to_tree(&self) -> Result<OperatorTree, MergeError> {
        self.0.to_tree()
    }

    pub fn into_tree(self) -> Result<OperatorTree, MergeError> {
        self.0.to_tree()
    }
}

/// Canonical form of `tree`: nested `||` and `;` flattened, parallel
/// branches sorted and deduplicated, `call` dropped from parallel blocks,
/// single-child blocks collapsed, `if` tests ordered by condition with
/// redundant tests removed. Idempotent.
pub fn normalize(tree: &OperatorTree) -> OperatorTree {
    Node::from_tree(tree)
        .to_tree()
        .expect("normalization never joins delegates")
}

/// `a ⊗ b`.
pub fn merge(a: &OperatorTree, b: &OperatorTree) -> Result<OperatorTree, MergeError> {
    Merged::new(a).merge(&Merged::new(b)).into_tree()
}

/// Left fold of ⊗ over the trees in canonical order; also returns the
/// number of pairwise ⊗ evaluations performed (distinct trees − 1).
pub fn merge_all<'a>(
    trees: impl IntoIterator<Item = &'a OperatorTree>,
) -> Result<(OperatorTree, usize), MergeError> {
    let mut canon: Vec<Merged> = trees.into_iter().map(Merged::new).collect();
    canon.sort();
    canon.dedup();
    let mut iter = canon.into_iter();
    let Some(first) = iter.next() else {
        return Ok((OperatorTree::Call, 0));
    };
    let mut ops = 0;
    let acc = iter.fold(first, |acc, t| {
        ops += 1;
        acc.merge(&t)
    });
    Ok((acc.into_tree()?, ops))
}
