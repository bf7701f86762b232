//! Weaving cycles, cascades of cycles and re-weaving on change.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::assembly::{diff, Assembly, AssemblyError, Instruction, Provenance};
use crate::lang::AspectOfAssembly;
use crate::merge::{build_plan, detect_conflicts, lower, LowerError, MergeError};
use crate::weaving::{
    collect_joinpoints, combination_count, combinations, instantiate_advice, match_pointcut,
    FreshNames, InstanceContext, Joinpoint, TypeCatalog, Visibility, GLOBAL_NAMESPACE,
};

/// An ordered list of cycles, each an unordered set of aspects.
#[derive(Debug, Clone, PartialEq)]
pub struct Cascade {
    pub name: String,
    pub namespace: String,
    pub cycles: Vec<Vec<AspectOfAssembly>>,
}

impl Cascade {
    pub fn new(
        name: impl Into<String>,
        namespace: impl Into<String>,
        cycles: Vec<Vec<AspectOfAssembly>>,
    ) -> Self {
        Cascade {
            name: name.into(),
            namespace: namespace.into(),
            cycles,
        }
    }

    /// A single cycle in the global namespace.
    pub fn mono(aas: Vec<AspectOfAssembly>) -> Self {
        Cascade::new("mono", GLOBAL_NAMESPACE, vec![aas])
    }

    pub fn namespace_of<'a>(&'a self, aa: &'a AspectOfAssembly) -> &'a str {
        aa.namespace.as_deref().unwrap_or(&self.namespace)
    }

    pub fn aa_names(&self) -> BTreeSet<String> {
        self.cycles
            .iter()
            .flatten()
            .map(|a| a.name.clone())
            .collect()
    }

    /// Keeps only the aspects whose name is selected.
    pub fn select(&self, selection: &BTreeSet<String>) -> Cascade {
        let cycles = self
            .cycles
            .iter()
            .map(|c| {
                c.iter()
                    .filter(|a| selection.contains(&a.name))
                    .cloned()
                    .collect()
            })
            .collect();
        Cascade {
            cycles,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CascadeError {
    #[error("aspect `{name}` in namespace `{namespace}` is defined twice with different bodies")]
    NameCollision { namespace: String, name: String },
}

/// Rank-wise union. Every aspect keeps its effective namespace.
pub fn union(a: &Cascade, b: &Cascade) -> Result<Cascade, CascadeError> {
    let len = a.cycles.len().max(b.cycles.len());
    let mut cycles = Vec::with_capacity(len);
    for i in 0..len {
        let mut rank: BTreeMap<(String, String), AspectOfAssembly> = BTreeMap::new();
        for c in [a, b] {
            for aa in c.cycles.get(i).into_iter().flatten() {
                let ns = c.namespace_of(aa).to_string();
                let mut owned = aa.clone();
                owned.namespace = Some(ns.clone());
                let key = (ns, aa.name.clone());
                match rank.get(&key) {
                    Some(prev) if *prev != owned => {
                        return Err(CascadeError::NameCollision {
                            namespace: key.0,
                            name: key.1,
                        });
                    }
                    Some(_) => {}
                    None => {
                        rank.insert(key, owned);
                    }
                }
            }
        }
        cycles.push(rank.into_values().collect());
    }
    let namespace = if a.namespace == b.namespace {
        a.namespace.clone()
    } else {
        GLOBAL_NAMESPACE.to_string()
    };
    let names: BTreeSet<&str> = a.name.split('+').chain(b.name.split('+')).collect();
    Ok(Cascade {
        name: names.into_iter().collect::<Vec<_>>().join("+"),
        namespace,
        cycles,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StepDurations {
    pub match_us: u64,
    pub combine_us: u64,
    pub factory_us: u64,
    pub merge_us: u64,
    pub lower_us: u64,
}

impl StepDurations {
    pub fn total_us(&self) -> u64 {
        self.match_us + self.combine_us + self.factory_us + self.merge_us + self.lower_us
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Applied {
    pub aa_name: String,
    pub namespace: String,
    pub cycle: u32,
    pub combinations: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Skipped {
    pub aa_name: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct WeaveReport {
    pub cycle: u32,
    pub applied: Vec<Applied>,
    pub skipped: Vec<Skipped>,
    /// Anchors touched by advice.
    pub anchors: usize,
    pub conflict_groups: usize,
    pub conflict_fraction: f64,
    /// ⊗ evaluations between advice trees.
    pub merge_ops: usize,
    /// ⊗ evaluations folding existing bindings into a group.
    pub base_merge_ops: usize,
    /// Grounded advice rules over all instances.
    pub nb_rules: usize,
    pub instructions: usize,
    /// Aspects matching components woven by another namespace.
    pub cross_namespace: Vec<String>,
    pub durations: StepDurations,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WeaveError {
    #[error("merge failure: {0}")]
    Merge(#[from] MergeError),
    #[error("lowering failure: {0}")]
    Lower(#[from] LowerError),
    #[error("invalid result: {0}")]
    Apply(#[from] AssemblyError),
}

/// Output of a weave. On failure `assembly` is the input of the failed
/// cycle and `error` is set.
#[derive(Debug, Clone)]
pub struct WeaveOutcome {
    pub assembly: Assembly,
    pub instructions: Vec<Instruction>,
    pub reports: Vec<WeaveReport>,
    pub error: Option<WeaveError>,
}

impl WeaveOutcome {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

fn micros(d: Duration) -> u64 {
    d.as_micros().try_into().unwrap_or(u64::MAX)
}

/// An aspect scheduled in a cycle under a namespace.
#[derive(Debug, Clone, Copy)]
pub struct Scheduled<'a> {
    pub aa: &'a AspectOfAssembly,
    pub namespace: &'a str,
}

/// One weaving cycle `T(base, aas)`. Aspects are processed in
/// (namespace, name) order. A failure leaves `base` as the result.
pub fn weave_cycle(
    base: &Assembly,
    aas: &[Scheduled<'_>],
    cycle: u32,
    catalog: &TypeCatalog,
    fresh: &mut FreshNames,
) -> (Assembly, WeaveReport, Option<WeaveError>) {
    let mut report = WeaveReport {
        cycle,
        ..Default::default()
    };
    let mut order: Vec<&Scheduled<'_>> = aas.iter().collect();
    order.sort_by(|a, b| (a.namespace, &a.aa.name).cmp(&(b.namespace, &b.aa.name)));
    let weaving: BTreeSet<String> = order.iter().map(|s| s.aa.name.clone()).collect();

    let mut instances = Vec::new();
    let mut visible: BTreeMap<&str, Vec<Joinpoint>> = BTreeMap::new();
    for s in order {
        let t0 = Instant::now();
        let joinpoints = visible.entry(s.namespace).or_insert_with(|| {
            collect_joinpoints(base, &Visibility::new(cycle, s.namespace), &weaving)
        });
        let candidates = match_pointcut(joinpoints, s.aa);
        let t1 = Instant::now();
        report.durations.match_us += micros(t1 - t0);

        let vars: Vec<String> = s.aa.variables().map(str::to_string).collect();
        if let Some(v) = vars
            .iter()
            .find(|v| candidates.get(*v).is_none_or(Vec::is_empty))
        {
            report.skipped.push(Skipped {
                aa_name: s.aa.name.clone(),
                reason: format!("no candidate for `{v}`"),
            });
            continue;
        }
        let combos = combinations(&candidates, &vars);
        let t2 = Instant::now();
        report.durations.combine_us += micros(t2 - t1);

        let ctx = InstanceContext {
            namespace: s.namespace,
            cycle,
            catalog,
        };
        let mut foreign = BTreeSet::new();
        for combo in &combos {
            for jp in combo.assignment.values() {
                if let Provenance::Woven { aa, namespace, .. } = &jp.provenance {
                    if namespace != s.namespace {
                        foreign.insert(aa.clone());
                    }
                }
            }
            instances.push(instantiate_advice(s.aa, combo, fresh, ctx));
        }
        for src in foreign {
            report
                .cross_namespace
                .push(format!("{} <- {}", s.aa.name, src));
        }
        report.durations.factory_us += micros(Instant::now() - t2);
        report.applied.push(Applied {
            aa_name: s.aa.name.clone(),
            namespace: s.namespace.to_string(),
            cycle,
            combinations: combination_count(&candidates, &vars)
                .try_into()
                .unwrap_or(u64::MAX),
        });
    }
    report.nb_rules = instances.iter().map(|i| i.rule_count()).sum();

    let t3 = Instant::now();
    let detected = detect_conflicts(base, &instances);
    report.anchors = detected.groups.len();
    report.conflict_groups = detected.conflict_count();
    report.conflict_fraction = detected.conflict_fraction();
    let planned = build_plan(&detected);
    let t4 = Instant::now();
    report.durations.merge_us = micros(t4 - t3);

    let result = planned.map_err(WeaveError::from).and_then(|(plan, stats)| {
        report.merge_ops = stats.merge_ops;
        report.base_merge_ops = stats.base_merge_ops;
        let instrs = lower(plan, base, fresh)?;
        let count = instrs.len();
        let woven = base.clone().apply_all(instrs)?;
        Ok((woven, count))
    });
    report.durations.lower_us = micros(Instant::now() - t4);

    match result {
        Ok((woven, count)) => {
            report.instructions = count;
            (woven, report, None)
        }
        Err(e) => {
            report.failure = Some(e.to_string());
            (base.clone(), report, Some(e))
        }
    }
}

/// Weaves the union of `cascades` cycle by cycle, starting from `base`.
pub fn weave_cascade(
    base: &Assembly,
    cascades: &[Cascade],
    catalog: &TypeCatalog,
) -> Result<WeaveOutcome, CascadeError> {
    let mut fresh = FreshNames::for_assembly(base);
    weave_cascade_with(base, cascades, catalog, &mut fresh)
}

pub fn weave_cascade_with(
    base: &Assembly,
    cascades: &[Cascade],
    catalog: &TypeCatalog,
    fresh: &mut FreshNames,
) -> Result<WeaveOutcome, CascadeError> {
    let merged = merge_cascades(cascades)?;
    let mut current = base.clone();
    let mut reports = Vec::new();
    for (i, aas) in merged.cycles.iter().enumerate() {
        let scheduled: Vec<Scheduled<'_>> = aas
            .iter()
            .map(|aa| Scheduled {
                aa,
                namespace: merged.namespace_of(aa),
            })
            .collect();
        let (next, report, error) = weave_cycle(&current, &scheduled, i as u32, catalog, fresh);
        reports.push(report);
        if error.is_some() {
            let instructions = diff(base, &current);
            return Ok(WeaveOutcome {
                assembly: current,
                instructions,
                reports,
                error,
            });
        }
        current = next;
    }
    let instructions = diff(base, &current);
    Ok(WeaveOutcome {
        assembly: current,
        instructions,
        reports,
        error: None,
    })
}

fn merge_cascades(cascades: &[Cascade]) -> Result<Cascade, CascadeError> {
    let mut iter = cascades.iter();
    let Some(first) = iter.next() else {
        return Ok(Cascade::new("empty", GLOBAL_NAMESPACE, Vec::new()));
    };
    let mut acc = union(first, first)?;
    for c in iter {
        acc = union(&acc, c)?;
    }
    Ok(acc)
}

/// Recomputes the weave of the selected aspects from `base` and returns
/// the instructions taking `current` there.
pub fn reweave(
    current: &Assembly,
    base: &Assembly,
    cascades: &[Cascade],
    selection: &BTreeSet<String>,
    catalog: &TypeCatalog,
) -> Result<WeaveOutcome, CascadeError> {
    let selected: Vec<Cascade> = cascades.iter().map(|c| c.select(selection)).collect();
    let mut out = weave_cascade(base, &selected, catalog)?;
    if out.error.is_some() {
        out.assembly = current.clone();
        out.instructions.clear();
    } else {
        out.instructions = diff(current, &out.assembly);
    }
    Ok(out)
}
