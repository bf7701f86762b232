//! Component assemblies: components with typed ports, bindings between
//! required and provided ports, and the elementary instructions that
//! reconfigure them.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Property or metadata value.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Num(f64),
    Str(String),
}

impl Value {
    fn rank(&self) -> u8 {
        match self {
            Value::Bool(_) => 0,
            Value::Num(_) => 1,
            Value::Str(_) => 2,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Num(n) => Some(*n),
            Value::Str(s) => s.trim().parse().ok(),
            Value::Bool(_) => None,
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Value {}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Value::Bool(a), Value::Bool(b)) => a.cmp(b),
            (Value::Num(a), Value::Num(b)) => a.total_cmp(b),
            (Value::Str(a), Value::Str(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Num(n) => write!(f, "{n}"),
            Value::Str(s) => write!(f, "{s:?}"),
        }
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Str(s.to_string())
    }
}

impl From<f64> for Value {
    fn from(n: f64) -> Self {
        Value::Num(n)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Provided,
    Required,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PortSpec {
    pub name: String,
    pub direction: Direction,
}

impl PortSpec {
    pub fn provided(name: impl Into<String>) -> Self {
        PortSpec {
            name: name.into(),
            direction: Direction::Provided,
        }
    }

    pub fn required(name: impl Into<String>) -> Self {
        PortSpec {
            name: name.into(),
            direction: Direction::Required,
        }
    }
}

/// Where an element of an assembly comes from.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    #[default]
    Base,
    Woven {
        aa: String,
        cycle: u32,
        namespace: String,
    },
}

impl Provenance {
    pub fn woven(aa: impl Into<String>, cycle: u32, namespace: impl Into<String>) -> Self {
        Provenance::Woven {
            aa: aa.into(),
            cycle,
            namespace: namespace.into(),
        }
    }

    pub fn is_base(&self) -> bool {
        matches!(self, Provenance::Base)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Component {
    pub id: String,
    #[serde(rename = "type")]
    pub type_name: String,
    #[serde(default)]
    pub properties: BTreeMap<String, Value>,
    #[serde(default)]
    pub metadata: BTreeMap<String, Value>,
    #[serde(default)]
    pub ports: Vec<PortSpec>,
    #[serde(default)]
    pub provenance: Provenance,
}

impl Component {
    pub fn new(id: impl Into<String>, type_name: impl Into<String>) -> Self {
        Component {
            id: id.into(),
            type_name: type_name.into(),
            properties: BTreeMap::new(),
            metadata: BTreeMap::new(),
            ports: Vec::new(),
            provenance: Provenance::Base,
        }
    }

    pub fn with_port(mut self, port: PortSpec) -> Self {
        self.add_port(port);
        self
    }

    pub fn with_metadata(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.metadata.insert(key.to_string(), value.into());
        self
    }

    pub fn with_property(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.properties.insert(key.to_string(), value.into());
        self
    }

    /// Adds a port unless the same (name, direction) is already declared.
    pub fn add_port(&mut self, port: PortSpec) {
        if !self.ports.contains(&port) {
            self.ports.push(port);
            self.ports.sort();
        }
    }

    pub fn has_port(&self, name: &str, direction: Direction) -> bool {
        self.ports
            .iter()
            .any(|p| p.name == name && p.direction == direction)
    }

    pub fn port_ref(&self, name: &str, direction: Direction) -> PortRef {
        PortRef::new(&self.id, name, direction)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PortRef {
    pub component: String,
    pub port: String,
    pub direction: Direction,
}

impl PortRef {
    pub fn new(
        component: impl Into<String>,
        port: impl Into<String>,
        direction: Direction,
    ) -> Self {
        PortRef {
            component: component.into(),
            port: port.into(),
            direction,
        }
    }

    pub fn provided(component: impl Into<String>, port: impl Into<String>) -> Self {
        Self::new(component, port, Direction::Provided)
    }

    pub fn required(component: impl Into<String>, port: impl Into<String>) -> Self {
        Self::new(component, port, Direction::Required)
    }
}

impl fmt::Display for PortRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.direction {
            Direction::Provided => write!(f, "{}.{}", self.component, self.port),
            Direction::Required => write!(f, "{}.^{}", self.component, self.port),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Binding {
    pub source: PortRef,
    pub target: PortRef,
    pub provenance: Provenance,
}

impl Binding {
    /// Binding from a required port of `from` to a provided port of `to`.
    pub fn new(from: (&str, &str), to: (&str, &str)) -> Self {
        Binding {
            source: PortRef::required(from.0, from.1),
            target: PortRef::provided(to.0, to.1),
            provenance: Provenance::Base,
        }
    }

    pub fn between(source: PortRef, target: PortRef, provenance: Provenance) -> Self {
        Binding {
            source,
            target,
            provenance,
        }
    }

    pub fn key(&self) -> (PortRef, PortRef) {
        (self.source.clone(), self.target.clone())
    }
}

impl fmt::Display for Binding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {}", self.source, self.target)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Instruction {
    AddComponent(Component),
    RemoveComponent(String),
    AddBinding(Binding),
    RemoveBinding { source: PortRef, target: PortRef },
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instruction::AddComponent(c) => write!(f, "+component {} : {}", c.id, c.type_name),
            Instruction::RemoveComponent(id) => write!(f, "-component {id}"),
            Instruction::AddBinding(b) => write!(f, "+binding {b}"),
            Instruction::RemoveBinding { source, target } => {
                write!(f, "-binding {source} -> {target}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AssemblyError {
    #[error("unknown component `{0}`")]
    UnknownComponent(String),
    #[error("component `{0}` already exists")]
    DuplicateComponent(String),
    #[error("binding {0} has an unresolvable endpoint or wrong direction")]
    DanglingBinding(String),
    #[error("binding {0} already exists")]
    DuplicateBinding(String),
    #[error("no binding {0}")]
    UnknownBinding(String),
    #[error("invalid component `{id}`: {reason}")]
    InvalidComponent { id: String, reason: String },
}

/// A component assembly. Components are keyed by id and bindings by their
/// (source, target) pair, so iteration order is canonical.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Assembly {
    components: BTreeMap<String, Component>,
    bindings: BTreeMap<(PortRef, PortRef), Binding>,
}

impl Assembly {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds and validates an assembly.
    pub fn from_parts(
        components: impl IntoIterator<Item = Component>,
        bindings: impl IntoIterator<Item = Binding>,
    ) -> Result<Self, AssemblyError> {
        let mut asm = Assembly::new();
        for c in components {
            asm.insert_component(c)?;
        }
        for b in bindings {
            asm.insert_binding(b)?;
        }
        Ok(asm)
    }

    pub fn components(&self) -> impl Iterator<Item = &Component> {
        self.components.values()
    }

    pub fn bindings(&self) -> impl Iterator<Item = &Binding> {
        self.bindings.values()
    }

    pub fn component(&self, id: &str) -> Option<&Component> {
        self.components.get(id)
    }

    pub fn contains_component(&self, id: &str) -> bool {
        self.components.contains_key(id)
    }

    pub fn has_binding(&self, source: &PortRef, target: &PortRef) -> bool {
        self.bindings
            .contains_key(&(source.clone(), target.clone()))
    }

    pub fn component_count(&self) -> usize {
        self.components.len()
    }

    pub fn binding_count(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty() && self.bindings.is_empty()
    }

    /// Bindings leaving a required port, in canonical order.
    pub fn bindings_from<'a>(
        &'a self,
        source: &'a PortRef,
    ) -> impl Iterator<Item = &'a Binding> + 'a {
        self.bindings
            .range((source.clone(), PortRef::new("", "", Direction::Provided))..)
            .take_while(move |((s, _), _)| s == source)
            .map(|(_, b)| b)
    }

    pub fn resolves(&self, port: &PortRef) -> bool {
        self.components
            .get(&port.component)
            .is_some_and(|c| c.has_port(&port.port, port.direction))
    }

    pub fn insert_component(&mut self, component: Component) -> Result<(), AssemblyError> {
        validate_component(&component)?;
        if self.components.contains_key(&component.id) {
            return Err(AssemblyError::DuplicateComponent(component.id));
        }
        self.components.insert(component.id.clone(), component);
        Ok(())
    }

    pub fn insert_binding(&mut self, binding: Binding) -> Result<(), AssemblyError> {
        if binding.source.direction != Direction::Required
            || binding.target.direction != Direction::Provided
            || !self.resolves(&binding.source)
            || !self.resolves(&binding.target)
        {
            return Err(AssemblyError::DanglingBinding(binding.to_string()));
        }
        let key = binding.key();
        if self.bindings.contains_key(&key) {
            return Err(AssemblyError::DuplicateBinding(binding.to_string()));
        }
        self.bindings.insert(key, binding);
        Ok(())
    }

    /// Removes a component together with every binding incident to it.
    pub fn remove_component(&mut self, id: &str) -> Result<Component, AssemblyError> {
        let removed = self
            .components
            .remove(id)
            .ok_or_else(|| AssemblyError::UnknownComponent(id.to_string()))?;
        self.bindings
            .retain(|(s, t), _| s.component != id && t.component != id);
        Ok(removed)
    }

    pub fn remove_binding(
        &mut self,
        source: &PortRef,
        target: &PortRef,
    ) -> Result<Binding, AssemblyError> {
        self.bindings
            .remove(&(source.clone(), target.clone()))
            .ok_or_else(|| AssemblyError::UnknownBinding(format!("{source} -> {target}")))
    }

    pub fn apply_one(&mut self, instr: &Instruction) -> Result<(), AssemblyError> {
        match instr {
            Instruction::AddComponent(c) => self.insert_component(c.clone()),
            Instruction::RemoveComponent(id) => self.remove_component(id).map(|_| ()),
            Instruction::AddBinding(b) => self.insert_binding(b.clone()),
            Instruction::RemoveBinding { source, target } => {
                self.remove_binding(source, target).map(|_| ())
            }
        }
    }

    /// Checks every structural invariant. Assemblies built through the
    /// public API always pass; this exists for tests and for data loaded
    /// from untrusted files.
    pub fn validate(&self) -> Result<(), AssemblyError> {
        for (id, c) in &self.components {
            if id != &c.id {
                return Err(AssemblyError::InvalidComponent {
                    id: id.clone(),
                    reason: "key mismatch".into(),
                });
            }
            validate_component(c)?;
        }
        for b in self.bindings.values() {
            if b.source.direction != Direction::Required
                || b.target.direction != Direction::Provided
                || !self.resolves(&b.source)
                || !self.resolves(&b.target)
            {
                return Err(AssemblyError::DanglingBinding(b.to_string()));
            }
        }
        Ok(())
    }
}

fn validate_component(c: &Component) -> Result<(), AssemblyError> {
    let bad = |reason: &str| AssemblyError::InvalidComponent {
        id: c.id.clone(),
        reason: reason.to_string(),
    };
    if c.id.is_empty() {
        return Err(bad("empty id"));
    }
    if c.properties
        .keys()
        .chain(c.metadata.keys())
        .any(|k| k.is_empty())
    {
        return Err(bad("empty property or metadata key"));
    }
    let mut seen = BTreeSet::new();
    for p in &c.ports {
        if p.name.is_empty() {
            return Err(bad("empty port name"));
        }
        if !seen.insert((&p.name, p.direction)) {
            return Err(bad("duplicate port"));
        }
    }
    Ok(())
}

impl Assembly {
    /// Applies `instrs` in order, consuming both.
    pub fn apply_all(
        mut self,
        instrs: impl IntoIterator<Item = Instruction>,
    ) -> Result<Assembly, AssemblyError> {
        for instr in instrs {
            match instr {
                Instruction::AddComponent(c) => self.insert_component(c)?,
                Instruction::AddBinding(b) => self.insert_binding(b)?,
                other => self.apply_one(&other)?,
            }
        }
        Ok(self)
    }
}

/// Applies `instrs` in order to a copy of `assembly`.
pub fn apply_instructions(
    assembly: &Assembly,
    instrs: &[Instruction],
) -> Result<Assembly, AssemblyError> {
    let mut out = assembly.clone();
    for instr in instrs {
        out.apply_one(instr)?;
    }
    Ok(out)
}

/// Instructions turning `current` into `target`: binding removals, then
/// component removals, then component additions, then binding additions.
/// A component whose definition changed is removed and re-added.
pub fn diff(current: &Assembly, target: &Assembly) -> Vec<Instruction> {
    let changed: BTreeSet<&str> = current
        .components
        .iter()
        .filter(|(id, c)| target.components.get(*id).is_some_and(|t| t != *c))
        .map(|(id, _)| id.as_str())
        .collect();
    let removed_components: Vec<&str> = current
        .components
        .keys()
        .filter(|id| !target.components.contains_key(*id) || changed.contains(id.as_str()))
        .map(String::as_str)
        .collect();
    let dropped = |p: &PortRef| {
        removed_components
            .binary_search(&p.component.as_str())
            .is_ok()
    };

    let mut out = Vec::new();
    for (key, b) in &current.bindings {
        if dropped(&key.0) || dropped(&key.1) {
            // removed along with its component
            continue;
        }
        if target.bindings.get(key) != Some(b) {
            out.push(Instruction::RemoveBinding {
                source: key.0.clone(),
                target: key.1.clone(),
            });
        }
    }
    for id in &removed_components {
        out.push(Instruction::RemoveComponent(id.to_string()));
    }
    for (id, c) in &target.components {
        if !current.components.contains_key(id) || changed.contains(id.as_str()) {
            out.push(Instruction::AddComponent(c.clone()));
        }
    }
    for (key, b) in &target.bindings {
        let kept = !dropped(&key.0) && !dropped(&key.1) && current.bindings.get(key) == Some(b);
        if !kept {
            out.push(Instruction::AddBinding(b.clone()));
        }
    }
    out
}

fn fresh_stem(id: &str) -> &str {
    id.trim_end_matches(|c: char| c.is_ascii_digit())
}

/// Order-insensitive structural equality. Woven components may differ in
/// their numeric fresh-name suffix as long as type, aspect, properties and
/// wiring agree.
pub fn canonical_equal(a: &Assembly, b: &Assembly) -> bool {
    if a.component_count() != b.component_count() || a.binding_count() != b.binding_count() {
        return false;
    }
    let rounds = a
        .components()
        .filter(|c| !c.provenance.is_base())
        .count()
        .min(16)
        + 1;
    canonical_form(a, rounds) == canonical_form(b, rounds)
}

/// Sorted component and binding descriptions with every woven id replaced
/// by a colour-refinement label (stem signature + labelled neighbourhood).
fn canonical_form(asm: &Assembly, rounds: usize) -> (Vec<String>, Vec<String>) {
    let mut labels: BTreeMap<&str, u64> = asm
        .components()
        .filter(|c| !c.provenance.is_base())
        .map(|c| {
            let sig = format!(
                "{}#{}#{:?}#{:?}#{:?}#{:?}",
                fresh_stem(&c.id),
                c.type_name,
                c.provenance,
                c.properties,
                c.metadata,
                c.ports
            );
            (c.id.as_str(), short_hash(&sig))
        })
        .collect();
    let name = |id: &str, labels: &BTreeMap<&str, u64>| match labels.get(id) {
        Some(l) => format!("~{l:016x}"),
        None => id.to_string(),
    };
    for _ in 0..rounds {
        let mut next = labels.clone();
        for (id, label) in next.iter_mut() {
            let mut edges: Vec<String> = asm
                .bindings()
                .filter_map(|b| {
                    if b.source.component == *id {
                        Some(format!(
                            ">{}:{}.{}",
                            b.source.port,
                            name(&b.target.component, &labels),
                            b.target.port
                        ))
                    } else if b.target.component == *id {
                        Some(format!(
                            "<{}:{}.{}",
                            b.target.port,
                            name(&b.source.component, &labels),
                            b.source.port
                        ))
                    } else {
                        None
                    }
                })
                .collect();
            edges.sort();
            *label = short_hash(&format!("{label}|{}", edges.join(",")));
        }
        labels = next;
    }
    let mut comps: Vec<String> = asm
        .components()
        .map(|c| {
            let mut c = c.clone();
            c.id = name(&c.id, &labels);
            format!("{c:?}")
        })
        .collect();
    comps.sort();
    let mut binds: Vec<String> = asm
        .bindings()
        .map(|b| {
            format!(
                "{}.{}->{}.{}|{:?}",
                name(&b.source.component, &labels),
                b.source.port,
                name(&b.target.component, &labels),
                b.target.port,
                b.provenance
            )
        })
        .collect();
    binds.sort();
    (comps, binds)
}

fn short_hash(s: &str) -> u64 {
    // FNV-1a; only needs to be stable within one process
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}
