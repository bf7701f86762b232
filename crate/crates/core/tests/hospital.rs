mod common;

use std::collections::BTreeSet;

use aa_weave::assembly::{canonical_equal, diff, Instruction, PortRef, Provenance};
use aa_weave::lang::parse_aa;
use aa_weave::orchestrator::{
    reweave, union, weave_cascade, weave_cycle, Cascade, Scheduled, WeaveError,
};
use aa_weave::weaving::{FreshNames, TypeCatalog};

fn names(v: &[&str]) -> BTreeSet<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn has_binding(asm: &aa_weave::assembly::Assembly, s: (&str, &str), t: (&str, &str)) -> bool {
    asm.has_binding(&PortRef::required(s.0, s.1), &PortRef::provided(t.0, t.1))
}

#[test]
fn mono_weave_of_both_aspects() {
    let m = common::manifest("mono.json");
    let base = common::base();
    let out = weave_cascade(&base, &m.cascades, &m.catalog).unwrap();
    assert!(out.is_ok());
    let report = &out.reports[0];
    assert_eq!(report.applied.len(), 2);
    assert!(report.skipped.is_empty());
    let asm = &out.assembly;
    for id in ["Decision1", "Timer1", "threshold1", "Average1"] {
        assert!(asm.contains_component(id), "{id} missing");
    }
    let op_if = asm.component("If1").expect("op.If lowering");
    assert_eq!(op_if.type_name, "op.If");
    assert!(has_binding(
        asm,
        ("If1", "cond"),
        ("threshold1", "IsReached")
    ));
    assert!(has_binding(
        asm,
        ("If1", "out_then"),
        ("shutter1", "SetState")
    ));
    assert!(has_binding(
        asm,
        ("If1", "out_else"),
        ("light1", "SetState")
    ));
    // the switch keeps driving the light, now through the brightness test
    assert!(has_binding(
        asm,
        ("switch", "value_Evented_NewValue"),
        ("Par1", "in")
    ));
    assert!(has_binding(asm, ("Par1", "out_0"), ("Decision1", "Manage")));
    assert!(has_binding(asm, ("Par1", "out_1"), ("If1", "in")));
    asm.validate().unwrap();
}

#[test]
fn woven_elements_are_stamped() {
    let m = common::manifest("mono.json");
    let out = weave_cascade(&common::base(), &m.cascades, &m.catalog).unwrap();
    let t = out.assembly.component("threshold1").unwrap();
    assert_eq!(t.provenance, Provenance::woven("Brightness_Light", 0, ""));
    for c in out.assembly.components() {
        assert_eq!(
            c.provenance.is_base(),
            common::base().contains_component(&c.id),
            "{}",
            c.id
        );
    }
}

#[test]
fn empty_weave_leaves_base_unchanged() {
    let base = common::base();
    let out = weave_cascade(&base, &[Cascade::mono(Vec::new())], &TypeCatalog::default()).unwrap();
    assert_eq!(out.assembly, base);
    assert!(out.instructions.is_empty());
    let r = &out.reports[0];
    assert!(r.applied.is_empty() && r.skipped.is_empty() && r.instructions == 0);
}

#[test]
fn aspect_order_does_not_matter() {
    let m = common::manifest("mono.json");
    let base = common::base();
    let aas = &m.cascades[0].cycles[0];
    let run = |order: Vec<usize>| {
        let sched: Vec<Scheduled<'_>> = order
            .iter()
            .map(|&i| Scheduled {
                aa: &aas[i],
                namespace: "",
            })
            .collect();
        let mut fresh = FreshNames::for_assembly(&base);
        weave_cycle(&base, &sched, 0, &m.catalog, &mut fresh).0
    };
    assert!(canonical_equal(&run(vec![0, 1]), &run(vec![1, 0])));
}

#[test]
fn later_cycles_see_earlier_components() {
    let m = common::manifest("scenario.json");
    let out = weave_cascade(&common::base(), &m.cascades, &m.catalog).unwrap();
    assert!(out.is_ok());
    let applied: Vec<Vec<&str>> = out
        .reports
        .iter()
        .map(|r| r.applied.iter().map(|a| a.aa_name.as_str()).collect())
        .collect();
    assert_eq!(
        applied,
        [
            vec!["AADecision"],
            vec!["AARfid", "AASwitch"],
            vec!["AALight", "AALightLevel", "AAShutter"]
        ]
    );
    let asm = &out.assembly;
    assert!(has_binding(
        asm,
        ("rfid1", "value_Evented_NewValue"),
        ("Decision1", "Manage")
    ));
    assert!(has_binding(
        asm,
        ("Decision1", "LightManagementEvent"),
        ("light1", "SetState")
    ));
}

#[test]
fn without_decision_the_assistance_cascade_is_skipped() {
    let m = common::manifest("assistance.json");
    let all = m.cascades[0].aa_names();
    let selection: BTreeSet<String> = all.into_iter().filter(|n| n != "AADecision").collect();
    let cascade = m.cascades[0].select(&selection);
    let out = weave_cascade(&common::base(), &[cascade], &m.catalog).unwrap();
    for r in &out.reports[1..] {
        assert!(
            r.applied.is_empty(),
            "cycle {} applied {:?}",
            r.cycle,
            r.applied
        );
        assert!(!r.skipped.is_empty());
    }
    assert_eq!(out.assembly, common::base());
}

#[test]
fn cascade_union_is_symmetric() {
    let m = common::manifest("scenario.json");
    let (a, b) = (&m.cascades[0], &m.cascades[1]);
    let base = common::base();
    let ab = weave_cascade(&base, &[a.clone(), b.clone()], &m.catalog).unwrap();
    let ba = weave_cascade(&base, &[b.clone(), a.clone()], &m.catalog).unwrap();
    assert!(canonical_equal(&ab.assembly, &ba.assembly));
    assert_eq!(union(a, b).unwrap(), union(b, a).unwrap());
    assert_eq!(
        union(a, a).unwrap().cycles,
        union(a, &union(a, a).unwrap()).unwrap().cycles
    );
    assert_eq!(union(a, b).unwrap().cycles.len(), 3);
}

#[test]
fn union_rejects_conflicting_bodies() {
    let x = parse_aa("Advice:\n schema X():\n T : 'Timer';").unwrap();
    let y = parse_aa("Advice:\n schema X():\n D : 'Decision';").unwrap();
    let err = union(&Cascade::mono(vec![x]), &Cascade::mono(vec![y])).unwrap_err();
    assert!(err.to_string().contains("`X`"));
}

#[test]
fn reweave_with_same_selection_is_empty() {
    let m = common::manifest("scenario.json");
    let base = common::base();
    let first = weave_cascade(&base, &m.cascades, &m.catalog).unwrap();
    let all: BTreeSet<String> = m.cascades.iter().flat_map(Cascade::aa_names).collect();
    let again = reweave(&first.assembly, &base, &m.cascades, &all, &m.catalog).unwrap();
    assert!(again.instructions.is_empty(), "{:?}", again.instructions);
}

#[test]
fn withdrawing_brightness_light() {
    let m = common::manifest("mono.json");
    let base = common::base();
    let full = weave_cascade(&base, &m.cascades, &m.catalog).unwrap();
    let out = reweave(
        &full.assembly,
        &base,
        &m.cascades,
        &names(&["IdentityManagement"]),
        &m.catalog,
    )
    .unwrap();
    let removed: BTreeSet<&str> = out
        .instructions
        .iter()
        .filter_map(|i| match i {
            Instruction::RemoveComponent(id) => Some(id.as_str()),
            _ => None,
        })
        .collect();
    assert_eq!(removed, BTreeSet::from(["Average1", "If1", "threshold1"]));
    assert!(has_binding(
        &out.assembly,
        ("Par1", "out_1"),
        ("light1", "SetState")
    ));
    let reduced = weave_cascade(
        &base,
        &[m.cascades[0].select(&names(&["IdentityManagement"]))],
        &m.catalog,
    )
    .unwrap();
    assert!(canonical_equal(&out.assembly, &reduced.assembly));
    let applied =
        aa_weave::assembly::apply_instructions(&full.assembly, &out.instructions).unwrap();
    assert_eq!(applied, out.assembly);
}

#[test]
fn adding_a_disjoint_aspect_is_additive() {
    let m = common::manifest("mono.json");
    let base = common::base();
    let im = names(&["IdentityManagement"]);
    let before = reweave(&base, &base, &m.cascades, &im, &m.catalog)
        .unwrap()
        .assembly;
    let timer = parse_aa("Advice:\n schema Clock():\n Clock : 'WComp.BasicBeans.Timer';").unwrap();
    let mut cascades = m.cascades.clone();
    cascades.push(Cascade::mono(vec![timer]));
    let out = reweave(
        &before,
        &base,
        &cascades,
        &names(&["IdentityManagement", "Clock"]),
        &m.catalog,
    )
    .unwrap();
    assert!(!out.instructions.is_empty());
    assert!(out
        .instructions
        .iter()
        .all(|i| matches!(i, Instruction::AddComponent(_) | Instruction::AddBinding(_))));
}

#[test]
fn base_is_never_mutated() {
    let m = common::manifest("scenario.json");
    let base = common::base();
    let snapshot = base.clone();
    let _ = weave_cascade(&base, &m.cascades, &m.catalog).unwrap();
    assert_eq!(base, snapshot);
}

#[test]
fn weaving_twice_is_confluent() {
    let m = common::manifest("scenario.json");
    let base = common::base();
    let a = weave_cascade(&base, &m.cascades, &m.catalog)
        .unwrap()
        .assembly;
    let b = weave_cascade(&base, &m.cascades, &m.catalog)
        .unwrap()
        .assembly;
    assert!(diff(&a, &b).is_empty());
}

#[test]
fn delegate_clash_aborts_the_cycle() {
    let d1 = parse_aa("Pointcut:\n s := /switch.*/\n t := /light1.SetState/\nAdvice:\n schema D1(s, t):\n s -> (delegate(t))").unwrap();
    let d2 = parse_aa("Pointcut:\n s := /switch.*/\n t := /shutter1.SetState/\nAdvice:\n schema D2(s, t):\n s -> (delegate(t))").unwrap();
    let base = common::base();
    let out = weave_cascade(
        &base,
        &[Cascade::mono(vec![d1, d2])],
        &TypeCatalog::default(),
    )
    .unwrap();
    assert!(matches!(out.error, Some(WeaveError::Merge(_))));
    assert!(out.reports[0].failure.is_some());
    assert_eq!(out.assembly, base);
}

#[test]
fn components_of_the_current_cycle_are_not_matched() {
    let m = common::manifest("assistance.json");
    let decision = m.cascades[0].cycles[0].clone();
    let rfid = m.cascades[0].cycles[1][0].clone();
    let same_cycle = Cascade::mono(decision.into_iter().chain([rfid]).collect());
    let out = weave_cascade(&common::base(), &[same_cycle], &m.catalog).unwrap();
    let r = &out.reports[0];
    assert_eq!(r.skipped.len(), 1);
    assert_eq!(r.skipped[0].aa_name, "AARfid");
}

#[test]
fn private_namespaces_hide_woven_components() {
    let m = common::manifest("assistance.json");
    let mut decision = Cascade::new("decision", "private", vec![m.cascades[0].cycles[0].clone()]);
    decision.cycles.push(Vec::new());
    let rfid = Cascade::new(
        "rfid",
        "other",
        vec![Vec::new(), vec![m.cascades[0].cycles[1][0].clone()]],
    );
    let out = weave_cascade(&common::base(), &[decision.clone(), rfid], &m.catalog).unwrap();
    assert_eq!(out.reports[1].skipped.len(), 1);
    let rfid_same = Cascade::new(
        "rfid",
        "private",
        vec![Vec::new(), vec![m.cascades[0].cycles[1][0].clone()]],
    );
    let out = weave_cascade(&common::base(), &[decision, rfid_same], &m.catalog).unwrap();
    assert_eq!(out.reports[1].applied.len(), 1);
}
