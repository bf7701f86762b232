//! Pointcut matching, joinpoint combinations and the advice factory.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::assembly::{Assembly, Component, Direction, PortRef, PortSpec, Provenance, Value};
use crate::lang::{AdviceRule, AspectOfAssembly, PortExpr};

/// Namespace of cascades that share their components with everybody.
pub const GLOBAL_NAMESPACE: &str = "";

/// A port of the assembly together with its owning component's metadata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Joinpoint {
    pub port: PortRef,
    pub type_name: String,
    pub metadata: BTreeMap<String, Value>,
    pub properties: BTreeMap<String, Value>,
    pub provenance: Provenance,
}

impl Joinpoint {
    fn lookup(&self, key: &str) -> Option<&Value> {
        if key == "type" && !self.metadata.contains_key("type") {
            return None;
        }
        self.metadata.get(key).or_else(|| self.properties.get(key))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Visibility {
    pub cycle_index: u32,
    pub requesting_namespace: String,
}

impl Visibility {
    pub fn new(cycle_index: u32, requesting_namespace: impl Into<String>) -> Self {
        Visibility {
            cycle_index,
            requesting_namespace: requesting_namespace.into(),
        }
    }

    /// Base components are always visible. Woven components are visible
    /// when produced in an earlier cycle, in the global namespace or in the
    /// requester's own.
    pub fn sees(&self, provenance: &Provenance, currently_weaving: &BTreeSet<String>) -> bool {
        match provenance {
            Provenance::Base => true,
            Provenance::Woven {
                aa,
                cycle,
                namespace,
            } => {
                *cycle < self.cycle_index
                    && !currently_weaving.contains(aa)
                    && (namespace == GLOBAL_NAMESPACE || *namespace == self.requesting_namespace)
            }
        }
    }
}

/// Every port of every visible component, sorted by component then port.
pub fn collect_joinpoints(
    asm: &Assembly,
    vis: &Visibility,
    currently_weaving: &BTreeSet<String>,
) -> Vec<Joinpoint> {
    let mut out = Vec::new();
    for c in asm.components() {
        if !vis.sees(&c.provenance, currently_weaving) {
            continue;
        }
        for p in &c.ports {
            out.push(Joinpoint {
                port: c.port_ref(&p.name, p.direction),
                type_name: c.type_name.clone(),
                metadata: c.metadata.clone(),
                properties: c.properties.clone(),
                provenance: c.provenance.clone(),
            });
        }
    }
    out.sort_by(|a, b| a.port.cmp(&b.port));
    out
}

/// Candidates per pointcut variable.
pub fn match_pointcut(
    joinpoints: &[Joinpoint],
    aa: &AspectOfAssembly,
) -> BTreeMap<String, Vec<Joinpoint>> {
    aa.pointcut
        .iter()
        .map(|rule| {
            let hits = joinpoints
                .iter()
                .filter(|jp| {
                    rule.pattern.matches_component(&jp.port.component)
                        && rule.pattern.matches_port(&jp.port.port, jp.port.direction)
                        && rule.filters.iter().all(|f| f.accepts(jp.lookup(&f.key)))
                })
                .cloned()
                .collect();
            (rule.variable.clone(), hits)
        })
        .collect()
}

/// One joinpoint per pointcut variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Combination {
    pub assignment: BTreeMap<String, Joinpoint>,
}

/// Cartesian product of the candidates, the first variable of `order`
/// varying slowest. Empty when any variable has no candidate; a single
/// empty combination when there are no variables.
pub fn combinations(
    candidates: &BTreeMap<String, Vec<Joinpoint>>,
    order: &[String],
) -> Vec<Combination> {
    let mut out = vec![Combination {
        assignment: BTreeMap::new(),
    }];
    for var in order {
        let Some(options) = candidates.get(var) else {
            return Vec::new();
        };
        if options.is_empty() {
            return Vec::new();
        }
        let mut next = Vec::with_capacity(out.len() * options.len());
        for partial in &out {
            for jp in options {
                let mut c = partial.clone();
                c.assignment.insert(var.clone(), jp.clone());
                next.push(c);
            }
        }
        out = next;
    }
    out
}

/// Number of combinations `combinations` would produce, without building
/// them.
pub fn combination_count(candidates: &BTreeMap<String, Vec<Joinpoint>>, order: &[String]) -> u128 {
    order
        .iter()
        .map(|v| candidates.get(v).map_or(0, |c| c.len() as u128))
        .product()
}

/// Ports of black-box component types, keyed by type name.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TypeCatalog(pub BTreeMap<String, Vec<PortSpec>>);

impl TypeCatalog {
    pub fn ports(&self, type_name: &str) -> &[PortSpec] {
        self.0.get(type_name).map_or(&[], Vec::as_slice)
    }

    pub fn merge(&mut self, other: &TypeCatalog) {
        for (k, v) in &other.0 {
            let entry = self.0.entry(k.clone()).or_default();
            for p in v {
                if !entry.contains(p) {
                    entry.push(p.clone());
                }
            }
        }
    }
}

/// Allocates `<stem><k>` ids: one counter per stem starting at 1, skipping
/// ids that are already taken.
#[derive(Debug, Clone, Default)]
pub struct FreshNames {
    counters: BTreeMap<String, u64>,
    taken: BTreeSet<String>,
}

impl FreshNames {
    pub fn new<S: Into<String>>(taken: impl IntoIterator<Item = S>) -> Self {
        FreshNames {
            counters: BTreeMap::new(),
            taken: taken.into_iter().map(Into::into).collect(),
        }
    }

    pub fn for_assembly(asm: &Assembly) -> Self {
        Self::new(asm.components().map(|c| c.id.clone()))
    }

    pub fn next(&mut self, stem: &str) -> String {
        let counter = self.counters.entry(stem.to_string()).or_insert(0);
        loop {
            *counter += 1;
            let id = format!("{stem}{counter}");
            if self.taken.insert(id.clone()) {
                return id;
            }
        }
    }
}

/// Where instances are produced: the deploying namespace and cycle, plus
/// the catalog used to declare ports on instantiated components.
#[derive(Debug, Clone, Copy)]
pub struct InstanceContext<'a> {
    pub namespace: &'a str,
    pub cycle: u32,
    pub catalog: &'a TypeCatalog,
}

/// An advice with its variables replaced by one combination's joinpoints
/// and its local components replaced by fresh ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdviceInstance {
    pub aa_name: String,
    pub namespace: String,
    pub cycle: u32,
    pub combination: Combination,
    /// Components created by the instantiation rules.
    pub components: Vec<Component>,
    /// Links and rewrites; every port expression names a concrete
    /// component and port.
    pub grounded_rules: Vec<AdviceRule>,
}

impl AdviceInstance {
    pub fn provenance(&self) -> Provenance {
        Provenance::woven(&self.aa_name, self.cycle, &self.namespace)
    }

    pub fn rule_count(&self) -> usize {
        self.components.len() + self.grounded_rules.len()
    }
}

fn ground(expr: &PortExpr, locals: &BTreeMap<&str, String>, combo: &Combination) -> PortExpr {
    if let Some(id) = locals.get(expr.name.as_str()) {
        return PortExpr {
            name: id.clone(),
            port: expr.port.clone(),
            required: expr.required,
        };
    }
    let jp = combo
        .assignment
        .get(&expr.name)
        .unwrap_or_else(|| panic!("variable `{}` missing from combination", expr.name));
    match &expr.port {
        None => PortExpr {
            name: jp.port.component.clone(),
            port: Some(jp.port.port.clone()),
            required: jp.port.direction == Direction::Required,
        },
        Some(port) => PortExpr {
            name: jp.port.component.clone(),
            port: Some(port.clone()),
            required: expr.required,
        },
    }
}

/// The advice factory: duplicates `aa`'s advice for one combination.
pub fn instantiate_advice(
    aa: &AspectOfAssembly,
    combination: &Combination,
    fresh: &mut FreshNames,
    ctx: InstanceContext<'_>,
) -> AdviceInstance {
    let provenance = Provenance::woven(&aa.name, ctx.cycle, ctx.namespace);
    let mut locals: BTreeMap<&str, String> = BTreeMap::new();
    let mut components = Vec::new();
    for rule in &aa.rules {
        if let AdviceRule::Instantiate {
            local_name,
            type_name,
            init_props,
        } = rule
        {
            let id = fresh.next(local_name);
            locals.insert(local_name.as_str(), id.clone());
            let mut c =
                Component::new(id, type_name.clone()).with_metadata("type", type_name.as_str());
            c.properties = init_props.clone();
            c.provenance = provenance.clone();
            for p in ctx.catalog.ports(type_name) {
                c.add_port(p.clone());
            }
            components.push(c);
        }
    }

    let mut grounded_rules = Vec::new();
    for rule in &aa.rules {
        let mut g = |p: &PortExpr| ground(p, &locals, combination);
        let grounded = match rule {
            AdviceRule::Instantiate { .. } => continue,
            AdviceRule::Link { from, tree } => AdviceRule::Link {
                from: g(from),
                tree: tree.map_ports(&mut g),
            },
            AdviceRule::Rewrite { target, tree } => {
                let lhs = g(target);
                let tree = tree.map_ports(&mut g);
                if lhs.required {
                    AdviceRule::Link { from: lhs, tree }
                } else {
                    AdviceRule::Rewrite { target: lhs, tree }
                }
            }
        };
        grounded_rules.push(grounded);
    }

    // black-box components expose whatever ports the advice uses on them
    let by_id: BTreeMap<String, usize> = components
        .iter()
        .enumerate()
        .map(|(i, c)| (c.id.clone(), i))
        .collect();
    for rule in &grounded_rules {
        let (lhs, tree) = match rule {
            AdviceRule::Link { from, tree } => (from, tree),
            AdviceRule::Rewrite { target, tree } => (target, tree),
            AdviceRule::Instantiate { .. } => unreachable!(),
        };
        for p in std::iter::once(lhs).chain(tree.ports()) {
            if let (Some(&i), Some(port)) = (by_id.get(&p.name), &p.port) {
                components[i].add_port(PortSpec {
                    name: port.clone(),
                    direction: p.direction(),
                });
            }
        }
    }

    AdviceInstance {
        aa_name: aa.name.clone(),
        namespace: ctx.namespace.to_string(),
        cycle: ctx.cycle,
        combination: combination.clone(),
        components,
        grounded_rules,
    }
}

/// Turns a grounded port expression into a port reference.
pub fn port_ref(expr: &PortExpr) -> PortRef {
    PortRef::new(
        expr.name.clone(),
        expr.port.clone().unwrap_or_default(),
        expr.direction(),
    )
}
