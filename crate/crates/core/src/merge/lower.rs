use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::assembly::{
    Assembly, Binding, Component, Direction, Instruction, PortRef, PortSpec, Provenance,
};
use crate::lang::OperatorTree;
use crate::weaving::{port_ref, FreshNames};

use super::conflicts::MergedPlan;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LowerError {
    #[error("`call` at {anchor} but the anchor has no original binding")]
    CallWithoutOriginal { anchor: PortRef },
}

/// Type names of the synthetic operator components.
pub const OP_TYPES: [&str; 5] = ["op.If", "op.Seq", "op.Par", "op.Nop", "op.Delegate"];

pub fn is_operator_type(type_name: &str) -> bool {
    OP_TYPES.contains(&type_name)
}

struct Lowering<'a> {
    fresh: &'a mut FreshNames,
    ops: Vec<Component>,
    /// New bindings with the anchor whose lowering produced them.
    adds: Vec<(Binding, Option<PortRef>)>,
}

impl Lowering<'_> {
    /// Emits the components for `tree`, returns the ports its entry binds to.
    fn emit(
        &mut self,
        tree: &OperatorTree,
        anchor: &PortRef,
        originals: &[PortRef],
        prov: &Provenance,
    ) -> Result<Vec<PortRef>, LowerError> {
        let (stem, children): (&str, Vec<(String, &OperatorTree)>) = match tree {
            OperatorTree::Leaf(p) => return Ok(vec![port_ref(p)]),
            OperatorTree::Call => {
                return if anchor.direction == Direction::Provided {
                    Ok(vec![anchor.clone()])
                } else if originals.is_empty() {
                    Err(LowerError::CallWithoutOriginal {
                        anchor: anchor.clone(),
                    })
                } else {
                    Ok(originals.to_vec())
                };
            }
            OperatorTree::Nop => ("Nop", Vec::new()),
            OperatorTree::If { then, els, .. } => (
                "If",
                vec![
                    ("out_then".to_string(), &**then),
                    ("out_else".to_string(), &**els),
                ],
            ),
            OperatorTree::Delegate(inner) => ("Delegate", vec![("out_0".to_string(), &**inner)]),
            OperatorTree::Seq(cs) => (
                "Seq",
                cs.iter()
                    .enumerate()
                    .map(|(k, c)| (format!("out_{k}"), c))
                    .collect(),
            ),
            OperatorTree::Par(cs) => (
                "Par",
                cs.iter()
                    .enumerate()
                    .map(|(k, c)| (format!("out_{k}"), c))
                    .collect(),
            ),
        };
        let id = self.fresh.next(stem);
        let type_name = format!("op.{stem}");
        let mut comp = Component::new(id.clone(), type_name.as_str())
            .with_metadata("type", type_name.as_str());
        comp.provenance = prov.clone();
        comp.add_port(PortSpec::provided("in"));
        if let OperatorTree::If { cond, .. } = tree {
            comp.add_port(PortSpec::required("cond"));
            self.push(PortRef::required(&id, "cond"), port_ref(cond), prov, anchor);
        }
        for (port, _) in &children {
            comp.add_port(PortSpec::required(port.as_str()));
        }
        self.ops.push(comp);
        for (port, child) in children {
            for target in self.emit(child, anchor, originals, prov)? {
                self.push(PortRef::required(&id, port.as_str()), target, prov, anchor);
            }
        }
        Ok(vec![PortRef::provided(id, "in")])
    }

    fn push(&mut self, source: PortRef, target: PortRef, prov: &Provenance, anchor: &PortRef) {
        self.adds.push((
            Binding::between(source, target, prov.clone()),
            Some(anchor.clone()),
        ));
    }
}

/// Follows rewrites of provided ports: a binding into a rewritten port goes
/// to the rewrite's entry instead, unless that rewrite produced it.
fn resolve(
    redirect: &BTreeMap<PortRef, PortRef>,
    mut target: PortRef,
    owner: Option<&PortRef>,
) -> PortRef {
    let mut seen = BTreeSet::new();
    while let Some(next) = redirect.get(&target) {
        if owner == Some(&target) || !seen.insert(target.clone()) {
            break;
        }
        target = next.clone();
    }
    target
}

/// Turns a merged plan into instructions against `base`: removals first,
/// then new components, then new bindings.
pub fn lower(
    plan: MergedPlan,
    base: &Assembly,
    fresh: &mut FreshNames,
) -> Result<Vec<Instruction>, LowerError> {
    let mut lw = Lowering {
        fresh,
        ops: Vec::new(),
        adds: Vec::new(),
    };
    let mut removes: BTreeSet<(PortRef, PortRef)> = BTreeSet::new();
    let mut redirect: BTreeMap<PortRef, PortRef> = BTreeMap::new();

    for b in &plan.plain_bindings {
        lw.adds.push((b.clone(), None));
    }

    let required = plan
        .groups
        .iter()
        .filter(|(a, _)| a.direction == Direction::Required);
    let provided = plan
        .groups
        .iter()
        .filter(|(a, _)| a.direction == Direction::Provided);
    for (anchor, tree) in required.chain(provided) {
        let prov = plan
            .provenance
            .get(anchor)
            .cloned()
            .unwrap_or_else(|| Provenance::woven("", 0, ""));
        let originals: Vec<PortRef> = base
            .bindings_from(anchor)
            .map(|b| b.target.clone())
            .collect();
        let entry = lw.emit(tree, anchor, &originals, &prov)?;
        if anchor.direction == Direction::Required {
            for o in originals.iter().filter(|o| !entry.contains(o)) {
                removes.insert((anchor.clone(), o.clone()));
            }
            for e in entry.into_iter().filter(|e| !originals.contains(e)) {
                lw.push(anchor.clone(), e, &prov, anchor);
            }
        } else if let [single] = entry.as_slice() {
            if single != anchor {
                redirect.insert(anchor.clone(), single.clone());
            }
        }
    }

    let Lowering { ops, adds, .. } = lw;
    let mut new_bindings: BTreeMap<(PortRef, PortRef), Binding> = BTreeMap::new();
    for (mut b, owner) in adds {
        b.target = resolve(&redirect, b.target, owner.as_ref());
        new_bindings.entry(b.key()).or_insert(b);
    }
    for b in base.bindings() {
        if removes.contains(&b.key()) || !redirect.contains_key(&b.target) {
            continue;
        }
        let target = resolve(&redirect, b.target.clone(), None);
        if target != b.target {
            removes.insert(b.key());
            let moved = Binding {
                target,
                ..b.clone()
            };
            new_bindings.entry(moved.key()).or_insert(moved);
        }
    }

    let mut out: Vec<Instruction> = removes
        .iter()
        .map(|(s, t)| Instruction::RemoveBinding {
            source: s.clone(),
            target: t.clone(),
        })
        .collect();
    out.extend(
        plan.component_adds
            .into_iter()
            .map(Instruction::AddComponent),
    );
    out.extend(ops.into_iter().map(Instruction::AddComponent));
    out.extend(
        new_bindings
            .into_values()
            .filter(|b| removes.contains(&b.key()) || !base.has_binding(&b.source, &b.target))
            .map(Instruction::AddBinding),
    );
    Ok(out)
}
