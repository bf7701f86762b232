use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assembly::{Assembly, Binding, Component, PortSpec};
use crate::lang::parse_aa;
use crate::orchestrator::Cascade;
use crate::weaving::{TypeCatalog, GLOBAL_NAMESPACE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub seed: u64,
    /// Device joinpoints matched over all pointcuts, in `[0, 120]`.
    pub joinpoint_count: usize,
    pub aa_count: usize,
    /// At least 2; from 3 on, aspects may use the rewrite-with-if shape.
    pub rules_per_aa: usize,
    /// Target share of anchors that are shared joinpoints.
    pub conflict_probability: f64,
    pub cycles: usize,
    /// Components outside any pointcut, chained by base bindings.
    pub extra_components: usize,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            seed: 0,
            joinpoint_count: 20,
            aa_count: 6,
            rules_per_aa: 3,
            conflict_probability: 0.33,
            cycles: 1,
            extra_components: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Workload {
    pub base: Assembly,
    pub cascades: Vec<Cascade>,
    pub catalog: TypeCatalog,
    /// Aspect sources as `(name, text)`.
    pub sources: Vec<(String, String)>,
}

impl Workload {
    pub fn aspect_count(&self) -> usize {
        self.sources.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    /// Instantiates `sinks` components and links the device to the first.
    Link { sinks: usize },
    /// Instantiates a threshold, an actuator and `spares` more components;
    /// rewrites the device output through an `if` on the threshold.
    RewriteIf { spares: usize, threshold: i64 },
    /// Links the device to an existing extra component.
    ToExtra { extra: usize },
}

struct AspectPlan {
    cycle: usize,
    port: String,
    devices: Vec<usize>,
    shape: Shape,
}

fn spare_name(i: usize) -> String {
    let mut s = String::from("Spare");
    let mut k = i;
    loop {
        s.push((b'a' + (k % 26) as u8) as char);
        k /= 26;
        if k == 0 {
            return s;
        }
    }
}

fn render(a: usize, plan: &AspectPlan) -> String {
    let name = format!("Gen{a}");
    let mut vars = vec!["d".to_string()];
    let mut text = format!("Pointcut:\n  d := /dev*(@m{a}=1).^{}/\n", plan.port);
    if let Shape::ToExtra { extra } = plan.shape {
        text.push_str(&format!("  t := /aux{extra}.in/\n"));
        vars.push("t".into());
    }
    text.push_str(&format!("Advice:\n  schema {name}({}):\n", vars.join(", ")));
    match &plan.shape {
        Shape::Link { sinks } => {
            text.push_str("  Sink : 'dev.Sink';\n");
            for i in 1..*sinks {
                text.push_str(&format!("  {} : 'dev.Sink';\n", spare_name(i - 1)));
            }
            text.push_str("  d -> (Sink.in)\n");
        }
        Shape::RewriteIf { spares, threshold } => {
            text.push_str(&format!(
                "  Th : 'dev.Threshold' (threshold = {threshold});\n"
            ));
            text.push_str("  Act : 'dev.Actuator';\n");
            for i in 0..*spares {
                text.push_str(&format!("  {} : 'dev.Sink';\n", spare_name(i)));
            }
            text.push_str("  d -> (if (Th.IsReached) {Act.in} else {nop})\n");
        }
        Shape::ToExtra { .. } => text.push_str("  d -> (t)\n"),
    }
    text
}

fn catalog() -> TypeCatalog {
    let mut c = TypeCatalog::default();
    c.0.insert("dev.Sink".into(), vec![PortSpec::provided("in")]);
    c.0.insert("dev.Actuator".into(), vec![PortSpec::provided("in")]);
    c.0.insert(
        "dev.Threshold".into(),
        vec![
            PortSpec::provided("SetValue"),
            PortSpec::provided("IsReached"),
        ],
    );
    c
}

fn build(
    device_count: usize,
    ports: &[&str],
    extras: usize,
    plans: &[AspectPlan],
    rng: &mut ChaCha8Rng,
) -> Workload {
    let mut base = Assembly::new();
    for d in 0..device_count {
        let mut c = Component::new(
            format!("dev{}", d + 1),
            format!("dev.Type{}", rng.gen_range(0..4)),
        )
        .with_port(PortSpec::provided("in"));
        for p in ports {
            c.add_port(PortSpec::required(*p));
        }
        for (a, plan) in plans.iter().enumerate() {
            if plan.devices.contains(&d) {
                c = c.with_metadata(&format!("m{a}"), 1.0);
            }
        }
        base.insert_component(c).expect("fresh device id");
    }
    for k in 1..=extras {
        let c = Component::new(format!("aux{k}"), "dev.Aux")
            .with_port(PortSpec::provided("in"))
            .with_port(PortSpec::required("out"));
        base.insert_component(c).expect("fresh extra id");
    }
    for k in 1..extras {
        let (from, to) = (format!("aux{k}"), format!("aux{}", k + 1));
        base.insert_binding(Binding::new((&from, "out"), (&to, "in")))
            .expect("extra chain");
    }

    let cycle_count = plans.iter().map(|p| p.cycle + 1).max().unwrap_or(1);
    let mut cycles = vec![Vec::new(); cycle_count];
    let mut sources = Vec::with_capacity(plans.len());
    for (a, plan) in plans.iter().enumerate() {
        let text = render(a, plan);
        let aa = parse_aa(&text).expect("generated aspect parses");
        sources.push((aa.name.clone(), text));
        cycles[plan.cycle].push(aa);
    }
    Workload {
        base,
        cascades: vec![Cascade::new("generated", GLOBAL_NAMESPACE, cycles)],
        catalog: catalog(),
        sources,
    }
}

/// Spreads `devices` plus `shared` second holders over `aspects` so that
/// loads stay balanced, no aspect holds a device twice and the holders of
/// one device are pairwise `compatible` when possible.
fn assign(
    rng: &mut ChaCha8Rng,
    aspects: &[usize],
    devices: &[usize],
    shared: usize,
    compatible: &dyn Fn(usize, usize) -> bool,
) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = devices.to_vec();
    order.shuffle(rng);
    let mut slots: Vec<usize> = order.clone();
    slots.extend(order.iter().take(shared));
    let mut load = vec![0usize; aspects.len()];
    let mut holders: Vec<Vec<usize>> = vec![Vec::new(); devices.iter().max().map_or(0, |m| m + 1)];
    let mut out = Vec::with_capacity(slots.len());
    for d in slots {
        let allowed = |i: &usize, strict: bool| {
            let a = aspects[*i];
            !holders[d].contains(&a) && (!strict || holders[d].iter().all(|&h| compatible(h, a)))
        };
        let mut candidates: Vec<usize> = (0..aspects.len()).filter(|i| allowed(i, true)).collect();
        if candidates.is_empty() {
            candidates = (0..aspects.len()).filter(|i| allowed(i, false)).collect();
        }
        let Some(min) = candidates.iter().map(|&i| load[i]).min() else {
            continue;
        };
        let best: Vec<usize> = candidates.into_iter().filter(|&i| load[i] == min).collect();
        let i = *best.choose(rng).expect("non-empty");
        load[i] += 1;
        holders[d].push(aspects[i]);
        out.push((aspects[i], d));
    }
    out
}

/// Random workload: devices with one required port, each matched by one
/// aspect, and a share of them matched by a second aspect.
pub fn generate_workload(spec: &WorkloadSpec) -> Workload {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let j = spec.joinpoint_count.min(120);
    let p = spec.conflict_probability.clamp(0.0, 1.0);
    let aa_count = spec.aa_count.max(1);
    let rules = spec.rules_per_aa.max(2);
    let cycles = spec.cycles.max(1);

    let (devices, shared) = if aa_count < 2 || p == 0.0 {
        (j, 0)
    } else {
        let exact = j as f64 / (1.0 + p);
        let mut d = exact.floor() as usize;
        if rng.gen::<f64>() < exact - exact.floor() {
            d += 1;
        }
        let d = d.clamp(j.div_ceil(2), j);
        (d, j - d)
    };

    let mut plans: Vec<AspectPlan> = (0..aa_count)
        .map(|a| {
            let shape = if rules >= 3 && rng.gen_bool(0.5) {
                Shape::RewriteIf {
                    spares: rules - 3,
                    threshold: rng.gen_range(1..100),
                }
            } else {
                Shape::Link { sinks: rules - 1 }
            };
            AspectPlan {
                cycle: a % cycles,
                port: "out".into(),
                devices: Vec::new(),
                shape,
            }
        })
        .collect();
    let aspects: Vec<usize> = (0..aa_count).collect();
    let all_devices: Vec<usize> = (0..devices).collect();
    for (a, d) in assign(&mut rng, &aspects, &all_devices, shared, &|_, _| true) {
        plans[a].devices.push(d);
    }
    build(devices, &["out"], spec.extra_components, &plans, &mut rng)
}

/// A workload of the size of a small deployed system: 18 aspects totalling
/// 25 rules, 10 devices with two outputs each, 7 extra components and 25
/// advice instances, 6 of the 19 anchors being shared joinpoints.
pub fn continuum_workload(seed: u64) -> Workload {
    const ASPECTS: usize = 18;
    const TWO_RULE: usize = 7;
    const EXTRAS: usize = 7;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut ids: Vec<usize> = (0..ASPECTS).collect();
    ids.shuffle(&mut rng);
    let two_rule: BTreeSet<usize> = ids[..TWO_RULE].iter().copied().collect();
    let mut next_extra = 0;
    let mut plans: Vec<AspectPlan> = (0..ASPECTS)
        .map(|a| {
            let shape = if two_rule.contains(&a) {
                Shape::Link { sinks: 1 }
            } else {
                next_extra += 1;
                Shape::ToExtra {
                    extra: (next_extra - 1) % EXTRAS + 1,
                }
            };
            AspectPlan {
                cycle: 0,
                port: format!("out{}", a % 2),
                devices: Vec::new(),
                shape,
            }
        })
        .collect();

    let compatible = |a: usize, b: usize| match (&plans[a].shape, &plans[b].shape) {
        (Shape::ToExtra { extra: x }, Shape::ToExtra { extra: y }) => x != y,
        _ => true,
    };
    // (class, devices used, shared)
    let mut placed = Vec::new();
    for (class, used, shared) in [(0usize, 10usize, 3usize), (1, 9, 3)] {
        let aspects: Vec<usize> = (0..ASPECTS).filter(|a| a % 2 == class).collect();
        let mut pool: Vec<usize> = (0..10).collect();
        pool.shuffle(&mut rng);
        pool.truncate(used);
        pool.sort_unstable();
        placed.extend(assign(&mut rng, &aspects, &pool, shared, &compatible));
    }
    for (a, d) in placed {
        plans[a].devices.push(d);
    }
    build(10, &["out0", "out1"], EXTRAS, &plans, &mut rng)
}
