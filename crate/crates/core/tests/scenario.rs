mod common;

use aa_weave::assembly::{canonical_equal, Assembly, Component, PortRef};
use aa_weave::orchestrator::{reweave, weave_cascade};
use aa_weave::sim::{parse_script, run_scenario, EnvEvent, EventKind, ScriptError, SimConfig};

fn script() -> Vec<EnvEvent> {
    parse_script(&std::fs::read_to_string(common::hospital("script.jsonl")).unwrap()).unwrap()
}

fn at(events: &[EnvEvent], until: u64) -> Vec<EnvEvent> {
    events.iter().filter(|e| e.at <= until).cloned().collect()
}

#[test]
fn empty_script_gives_the_initial_weave() {
    let m = common::manifest("scenario.json");
    let base = common::base();
    let trace = run_scenario(&base, &m.cascades, &m.catalog, &[], &SimConfig::default()).unwrap();
    assert!(trace.records.is_empty());
    assert_eq!(trace.weaves, 0);
    let direct = weave_cascade(&base, &m.cascades, &m.catalog).unwrap();
    assert_eq!(trace.assembly, direct.assembly);
}

#[test]
fn light_disappearance_keeps_the_shutter_path() {
    let m = common::manifest("scenario.json");
    let events = at(&script(), 200);
    let trace = run_scenario(
        &Assembly::new(),
        &m.cascades,
        &m.catalog,
        &events,
        &SimConfig::default(),
    )
    .unwrap();
    let asm = &trace.assembly;
    assert!(!asm.contains_component("light1"));
    assert!(asm.has_binding(
        &PortRef::required("Decision1", "ShutterManagementEvent"),
        &PortRef::provided("shutter1", "SetState")
    ));
    let last = trace.records.last().unwrap();
    let applied: Vec<&str> = last
        .reports
        .iter()
        .flat_map(|r| &r.applied)
        .map(|a| a.aa_name.as_str())
        .collect();
    assert!(applied.contains(&"AAShutter"));
    assert!(!applied.contains(&"AALight") && !applied.contains(&"AALightLevel"));
}

#[test]
fn unselect_then_select_round_trips() {
    let m = common::manifest("mono.json");
    let base = common::base();
    let select = |at, aa: &str| EnvEvent {
        at,
        kind: EventKind::Select { aa: aa.into() },
    };
    let unselect = |at, aa: &str| EnvEvent {
        at,
        kind: EventKind::Unselect { aa: aa.into() },
    };
    let before = run_scenario(&base, &m.cascades, &m.catalog, &[], &SimConfig::default())
        .unwrap()
        .assembly;
    let script = [
        unselect(0, "Brightness_Light"),
        select(100, "Brightness_Light"),
    ];
    let trace = run_scenario(
        &base,
        &m.cascades,
        &m.catalog,
        &script,
        &SimConfig::default(),
    )
    .unwrap();
    assert_eq!(trace.weaves, 2);
    assert!(canonical_equal(&trace.assembly, &before));
    assert!(trace.records[0].instructions > 0);
}

#[test]
fn events_at_one_timestamp_are_woven_once() {
    let m = common::manifest("scenario.json");
    let mut events = at(&script(), 80);
    for e in &mut events {
        e.at = 5;
    }
    let trace = run_scenario(
        &Assembly::new(),
        &m.cascades,
        &m.catalog,
        &events,
        &SimConfig::default(),
    )
    .unwrap();
    assert_eq!(trace.weaves, 1);
    assert_eq!(trace.records.len(), 5);
    assert_eq!(trace.records.iter().filter(|r| r.triggered).count(), 1);
    assert!(trace.records[4].triggered);
}

#[test]
fn events_during_a_weave_are_buffered() {
    let m = common::manifest("scenario.json");
    let events = at(&script(), 80);
    let slow = SimConfig { weave_ms: 30 };
    let trace = run_scenario(&Assembly::new(), &m.cascades, &m.catalog, &events, &slow).unwrap();
    // weaves start at 0, 30 (events 20), 60 (events 40, 60), 90 (event 80)
    assert_eq!(trace.weaves, 4);
    let starts: Vec<u64> = trace.records.iter().map(|r| r.weave_at).collect();
    assert_eq!(starts, [0, 30, 60, 60, 90]);
}

#[test]
fn final_state_is_history_independent() {
    let m = common::manifest("scenario.json");
    let trace = run_scenario(
        &Assembly::new(),
        &m.cascades,
        &m.catalog,
        &script(),
        &SimConfig::default(),
    )
    .unwrap();
    let scratch = reweave(
        &Assembly::new(),
        &trace.environment,
        &m.cascades,
        &trace.selection,
        &m.catalog,
    )
    .unwrap();
    assert_eq!(trace.assembly, scratch.assembly);
    let everything = weave_cascade(&common::base(), &m.cascades, &m.catalog).unwrap();
    assert_eq!(
        trace.environment.component_count(),
        common::base().component_count()
    );
    assert!(trace.assembly.component_count() <= everything.assembly.component_count());
}

#[test]
fn script_errors() {
    let m = common::manifest("mono.json");
    let bad = [EnvEvent {
        at: 0,
        kind: EventKind::Disappear { id: "ghost".into() },
    }];
    let err = run_scenario(
        &Assembly::new(),
        &m.cascades,
        &m.catalog,
        &bad,
        &SimConfig::default(),
    )
    .unwrap_err();
    assert!(matches!(err, ScriptError::UnknownComponent { .. }));
    let bad = [EnvEvent {
        at: 0,
        kind: EventKind::Select { aa: "Nope".into() },
    }];
    let err = run_scenario(
        &Assembly::new(),
        &m.cascades,
        &m.catalog,
        &bad,
        &SimConfig::default(),
    )
    .unwrap_err();
    assert!(matches!(err, ScriptError::UnknownAspect { .. }));
    let dup = Component::new("x", "t");
    let bad = [
        EnvEvent {
            at: 0,
            kind: EventKind::Appear {
                component: dup.clone(),
            },
        },
        EnvEvent {
            at: 1,
            kind: EventKind::Appear { component: dup },
        },
    ];
    let err = run_scenario(
        &Assembly::new(),
        &m.cascades,
        &m.catalog,
        &bad,
        &SimConfig::default(),
    )
    .unwrap_err();
    assert!(matches!(err, ScriptError::DuplicateComponent { .. }));
    assert!(matches!(parse_script("{\"at\":5,\"kind\":\"select\",\"aa\":\"A\"}\n{\"at\":1,\"kind\":\"select\",\"aa\":\"A\"}"), Err(ScriptError::OutOfOrder { line: 2, .. })));
    assert!(matches!(
        parse_script("{\"at\":0,\"kind\":\"jump\"}"),
        Err(ScriptError::Json { line: 1, .. })
    ));
}
