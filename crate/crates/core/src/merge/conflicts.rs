use std::collections::{BTreeMap, BTreeSet};

use crate::assembly::{Assembly, Binding, Component, Direction, PortRef, Provenance};
use crate::lang::{AdviceRule, OperatorTree, PortExpr};
use crate::weaving::{port_ref, AdviceInstance};

use super::algebra::{merge_all, MergeError, Merged};

/// All rules anchored at one port. Trees coming from the base assembly's
/// bindings come first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewriteGroup {
    pub anchor: PortRef,
    pub trees: Vec<OperatorTree>,
    /// How many leading entries of `trees` are base bindings.
    pub base_len: usize,
    pub contributors: BTreeSet<String>,
    pub namespaces: BTreeSet<String>,
    pub cycle: u32,
}

impl RewriteGroup {
    pub fn advice_trees(&self) -> &[OperatorTree] {
        &self.trees[self.base_len..]
    }

    pub fn distinct_trees(&self) -> usize {
        self.trees
            .iter()
            .map(Merged::new)
            .collect::<BTreeSet<_>>()
            .len()
    }

    /// A shared joinpoint: several distinct behaviours claim the anchor.
    pub fn is_conflict(&self) -> bool {
        self.distinct_trees() > 1
    }

    /// A single link that needs no operator component.
    pub fn is_plain(&self) -> bool {
        self.anchor.direction == Direction::Required
            && !self.is_conflict()
            && matches!(self.trees.first(), Some(OperatorTree::Leaf(_)))
    }

    /// Provenance for the operator components lowering this group.
    pub fn provenance(&self) -> Provenance {
        let aa = self
            .contributors
            .iter()
            .cloned()
            .collect::<Vec<_>>()
            .join("+");
        let namespace = self
            .namespaces
            .iter()
            .cloned()
            .collect::<Vec<_>>()
            .join("+");
        Provenance::woven(aa, self.cycle, namespace)
    }
}

/// Rules grouped by anchor plus the components the instances create.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Detected {
    pub groups: Vec<RewriteGroup>,
    pub components: Vec<Component>,
}

impl Detected {
    pub fn conflict_count(&self) -> usize {
        self.groups.iter().filter(|g| g.is_conflict()).count()
    }

    /// Share of anchors touched by advice that are shared joinpoints.
    pub fn conflict_fraction(&self) -> f64 {
        if self.groups.is_empty() {
            0.0
        } else {
            self.conflict_count() as f64 / self.groups.len() as f64
        }
    }
}

fn anchor_of(rule: &AdviceRule) -> Option<(&PortExpr, &OperatorTree)> {
    match rule {
        AdviceRule::Link { from, tree } => Some((from, tree)),
        AdviceRule::Rewrite { target, tree } => Some((target, tree)),
        AdviceRule::Instantiate { .. } => None,
    }
}

/// Groups the instances' links and rewrites by anchor port. Existing
/// bindings leaving a required anchor join its group as leaves.
pub fn detect_conflicts(base: &Assembly, instances: &[AdviceInstance]) -> Detected {
    let mut groups: BTreeMap<PortRef, RewriteGroup> = BTreeMap::new();
    let mut components = Vec::new();
    for inst in instances {
        components.extend(inst.components.iter().cloned());
        for (lhs, tree) in inst.grounded_rules.iter().filter_map(anchor_of) {
            let anchor = port_ref(lhs);
            let g = groups
                .entry(anchor.clone())
                .or_insert_with(|| RewriteGroup {
                    anchor,
                    trees: Vec::new(),
                    base_len: 0,
                    contributors: BTreeSet::new(),
                    namespaces: BTreeSet::new(),
                    cycle: inst.cycle,
                });
            g.trees.push(tree.clone());
            g.contributors.insert(inst.aa_name.clone());
            g.namespaces.insert(inst.namespace.clone());
            g.cycle = g.cycle.max(inst.cycle);
        }
    }
    for g in groups.values_mut() {
        if g.anchor.direction != Direction::Required {
            continue;
        }
        let base_trees: Vec<OperatorTree> = base
            .bindings_from(&g.anchor)
            .map(|b| {
                OperatorTree::leaf(PortExpr::provided(
                    b.target.component.clone(),
                    b.target.port.clone(),
                ))
            })
            .collect();
        g.base_len = base_trees.len();
        g.trees.splice(0..0, base_trees);
    }
    Detected {
        groups: groups.into_values().collect(),
        components,
    }
}

/// Result of `merge_group`: the tree and how many ⊗ evaluations it took,
/// split between advice-only merges and merges folding in base bindings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupMerge {
    pub tree: OperatorTree,
    pub merge_ops: usize,
    pub base_merge_ops: usize,
}

pub fn merge_group(g: &RewriteGroup) -> Result<GroupMerge, MergeError> {
    let (advice, advice_ops) = merge_all(g.advice_trees())?;
    let advice_only = g.base_len == 0;
    let (tree, total_ops) = if advice_only {
        (advice, advice_ops)
    } else {
        merge_all(g.trees.iter())?
    };
    Ok(GroupMerge {
        tree,
        merge_ops: advice_ops,
        base_merge_ops: total_ops.saturating_sub(advice_ops),
    })
}

/// Merged behaviour per anchor, ready for lowering.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MergedPlan {
    pub groups: BTreeMap<PortRef, OperatorTree>,
    pub component_adds: Vec<Component>,
    pub plain_bindings: Vec<Binding>,
    /// Provenance of the operator components lowering each group.
    pub provenance: BTreeMap<PortRef, Provenance>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MergeStats {
    pub merge_ops: usize,
    pub base_merge_ops: usize,
}

/// Merges every group of `detected`.
pub fn build_plan(detected: &Detected) -> Result<(MergedPlan, MergeStats), MergeError> {
    let mut plan = MergedPlan {
        component_adds: detected.components.clone(),
        ..Default::default()
    };
    let mut stats = MergeStats::default();
    for g in &detected.groups {
        let merged = merge_group(g)?;
        stats.merge_ops += merged.merge_ops;
        stats.base_merge_ops += merged.base_merge_ops;
        if g.is_plain() {
            if let OperatorTree::Leaf(target) = &merged.tree {
                plan.plain_bindings.push(Binding::between(
                    g.anchor.clone(),
                    port_ref(target),
                    g.provenance(),
                ));
                continue;
            }
        }
        plan.provenance.insert(g.anchor.clone(), g.provenance());
        plan.groups.insert(g.anchor.clone(), merged.tree);
    }
    Ok((plan, stats))
}
