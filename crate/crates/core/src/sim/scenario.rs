use std::collections::BTreeSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::{Assembly, AssemblyError, Component};
use crate::orchestrator::{reweave, Cascade, CascadeError, WeaveReport};
use crate::weaving::TypeCatalog;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EventKind {
    Appear { component: Component },
    Disappear { id: String },
    Select { aa: String },
    Unselect { aa: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvEvent {
    /// Logical time in milliseconds.
    pub at: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error("line {line}: timestamp {at} is before the previous event")]
    OutOfOrder { line: usize, at: u64 },
    #[error("event {index}: no component `{id}` to remove")]
    UnknownComponent { index: usize, id: String },
    #[error("event {index}: component `{id}` already present")]
    DuplicateComponent { index: usize, id: String },
    #[error("event {index}: no aspect named `{aa}`")]
    UnknownAspect { index: usize, aa: String },
    #[error("event {index}: {source}")]
    Invalid { index: usize, source: AssemblyError },
    #[error(transparent)]
    Cascade(#[from] CascadeError),
}

/// Parses a JSON-lines script. Blank lines and `#` comments are skipped.
pub fn parse_script(text: &str) -> Result<Vec<EnvEvent>, ScriptError> {
    let mut out: Vec<EnvEvent> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let ev: EnvEvent = serde_json::from_str(line).map_err(|source| ScriptError::Json {
            line: i + 1,
            source,
        })?;
        if out.last().is_some_and(|prev| prev.at > ev.at) {
            return Err(ScriptError::OutOfOrder {
                line: i + 1,
                at: ev.at,
            });
        }
        out.push(ev);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub event: EnvEvent,
    /// Whether this event closed a batch and started a weave.
    pub triggered: bool,
    /// Logical start of the weave that took this event into account.
    pub weave_at: u64,
    pub instructions: usize,
    pub reports: Vec<WeaveReport>,
    pub weave_us: u64,
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub weaves: usize,
    pub assembly: Assembly,
    /// Environment at the end: devices present and aspects selected.
    pub environment: Assembly,
    pub selection: BTreeSet<String>,
}

/// Simulation settings.
#[derive(Debug, Clone)]
pub struct SimConfig {
    /// Logical duration of one weave. Events arriving before it ends are
    /// buffered and woven together afterwards.
    pub weave_ms: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { weave_ms: 10 }
    }
}

fn apply_event(
    env: &mut Assembly,
    selection: &mut BTreeSet<String>,
    known: &BTreeSet<String>,
    index: usize,
    ev: &EnvEvent,
) -> Result<(), ScriptError> {
    match &ev.kind {
        EventKind::Appear { component } => {
            if env.contains_component(&component.id) {
                return Err(ScriptError::DuplicateComponent {
                    index,
                    id: component.id.clone(),
                });
            }
            env.insert_component(component.clone())
                .map_err(|source| ScriptError::Invalid { index, source })?;
        }
        EventKind::Disappear { id } => {
            env.remove_component(id)
                .map_err(|_| ScriptError::UnknownComponent {
                    index,
                    id: id.clone(),
                })?;
        }
        EventKind::Select { aa } | EventKind::Unselect { aa } => {
            if !known.contains(aa) {
                return Err(ScriptError::UnknownAspect {
                    index,
                    aa: aa.clone(),
                });
            }
            if matches!(ev.kind, EventKind::Select { .. }) {
                selection.insert(aa.clone());
            } else {
                selection.remove(aa);
            }
        }
    }
    Ok(())
}

/// Plays `script` against `base` with every aspect of `cascades` initially
/// selected. Each weave recomputes from the current environment.
pub fn run_scenario(
    base: &Assembly,
    cascades: &[Cascade],
    catalog: &TypeCatalog,
    script: &[EnvEvent],
    config: &SimConfig,
) -> Result<Trace, ScriptError> {
    let known: BTreeSet<String> = cascades.iter().flat_map(Cascade::aa_names).collect();
    let mut selection = known.clone();
    let mut env = base.clone();
    let initial = reweave(base, &env, cascades, &selection, catalog)?;
    let mut current = initial.assembly;
    let mut records = Vec::with_capacity(script.len());
    let mut weaves = 0;
    let mut busy_until = 0u64;
    let mut i = 0;
    while i < script.len() {
        let start = script[i].at.max(busy_until);
        let batch_end = i + script[i..].iter().take_while(|e| e.at <= start).count();
        for (k, ev) in script.iter().enumerate().take(batch_end).skip(i) {
            apply_event(&mut env, &mut selection, &known, k, ev)?;
        }
        let t0 = Instant::now();
        let out = reweave(&current, &env, cascades, &selection, catalog)?;
        let weave_us = t0.elapsed().as_micros().try_into().unwrap_or(u64::MAX);
        weaves += 1;
        for (k, ev) in script.iter().enumerate().take(batch_end).skip(i) {
            let last = k + 1 == batch_end;
            records.push(TraceRecord {
                event: ev.clone(),
                triggered: last,
                weave_at: start,
                instructions: if last { out.instructions.len() } else { 0 },
                reports: if last {
                    out.reports.clone()
                } else {
                    Vec::new()
                },
                weave_us: if last { weave_us } else { 0 },
            });
        }
        current = out.assembly;
        busy_until = start + config.weave_ms;
        i = batch_end;
    }
    Ok(Trace {
        records,
        weaves,
        assembly: current,
        environment: env,
        selection,
    })
}
