use std::collections::BTreeSet;

use aa_weave::lang::{OperatorTree, PortExpr};
use aa_weave::merge::{merge, normalize, MergeError};
use proptest::prelude::*;

pub fn leaf(c: &str, p: &str) -> OperatorTree {
    OperatorTree::leaf(PortExpr::provided(c, p))
}

pub fn cond(c: &str) -> PortExpr {
    PortExpr::provided(c, "IsReached")
}

fn terminals() -> Vec<OperatorTree> {
    vec![
        leaf("a", "in"),
        leaf("b", "in"),
        leaf("c", "in"),
        OperatorTree::Nop,
        OperatorTree::Call,
    ]
}

/// Every tree of depth at most 2 over leaves `a`, `b`, `c` and conditions
/// `k1`, `k2`, normalized and deduplicated.
pub fn exhaustive_corpus() -> Vec<OperatorTree> {
    let ts = terminals();
    let leaves = &ts[..3];
    let mut out = ts.clone();
    for k in ["k1", "k2"] {
        for x in &ts {
            for y in &ts {
                out.push(OperatorTree::if_(cond(k), x.clone(), y.clone()));
            }
        }
    }
    for x in &ts {
        out.push(OperatorTree::delegate(x.clone()));
        for y in &ts {
            out.push(OperatorTree::Seq(vec![x.clone(), y.clone()]));
            out.push(OperatorTree::Par(vec![x.clone(), y.clone()]));
        }
    }
    out.push(OperatorTree::Par(leaves.to_vec()));
    out.push(OperatorTree::Seq(leaves.to_vec()));
    let set: BTreeSet<OperatorTree> = out.iter().map(normalize).collect();
    set.into_iter().collect()
}

pub fn arb_tree(depth: u32) -> BoxedStrategy<OperatorTree> {
    let base = prop_oneof![
        4 => (0..4usize).prop_map(|i| leaf(["a", "b", "c", "d"][i], "in")),
        1 => Just(OperatorTree::Nop),
        1 => Just(OperatorTree::Call),
    ];
    base.prop_recursive(depth.saturating_sub(1), 24, 3, |inner| {
        prop_oneof![
            3 => ((0..3usize), inner.clone(), inner.clone())
                .prop_map(|(k, t, e)| OperatorTree::if_(cond(["k1", "k2", "k3"][k]), t, e)),
            1 => prop::collection::vec(inner.clone(), 2..4).prop_map(OperatorTree::Par),
            1 => prop::collection::vec(inner.clone(), 2..3).prop_map(OperatorTree::Seq),
            1 => inner.prop_map(OperatorTree::delegate),
        ]
    })
    .boxed()
}

/// `Ok` results are compared as normalized trees; clashes compare equal
/// to each other.
pub type Outcome = Result<OperatorTree, MergeError>;

pub fn same(a: &Outcome, b: &Outcome) -> bool {
    match (a, b) {
        (Ok(x), Ok(y)) => x == y,
        (Err(_), Err(_)) => true,
        _ => false,
    }
}

pub fn commutes(a: &OperatorTree, b: &OperatorTree) -> bool {
    same(&merge(a, b), &merge(b, a))
}

pub fn idempotent(a: &OperatorTree) -> bool {
    let n = normalize(a);
    match merge(a, a) {
        Ok(t) => t == n,
        Err(_) => false,
    }
}

/// Associativity through the clash-preserving wrapper, since `merge`
/// surfaces a clash as an error before the third operand is seen.
pub fn associates(a: &OperatorTree, b: &OperatorTree, c: &OperatorTree) -> bool {
    use aa_weave::merge::Merged;
    let (ma, mb, mc) = (Merged::new(a), Merged::new(b), Merged::new(c));
    ma.merge(&mb).merge(&mc) == ma.merge(&mb.merge(&mc))
}
