mod common;

use std::collections::BTreeMap;

use evdpor::bench_programs::{corpus, generate, source};
use evdpor::program::Status;
use evdpor::{parse_program, run, to_source, Access, InstanceId, Machine, ParseError, RunError};
use proptest::prelude::*;

use common::{random_execution, random_program, rng, Shape};

#[test]
fn parses_declarations_and_bodies() {
    let p = parse_program(
        "shared x y\nhandler h\nthread s { post m -> h  store x 1 }\nmessage m { load a x  if a == 1 { store y a + 1 } else { let b = 2 } }\n",
    )
    .unwrap();
    assert_eq!(p.shared, ["x", "y"]);
    assert_eq!(p.handlers, ["h"]);
    assert_eq!(p.threads.len(), 1);
    assert_eq!(p.messages[0].name, "m");
}

#[test]
fn parse_errors_carry_positions() {
    let e = parse_program("shared x\nthread s { store q 1 }\n").unwrap_err();
    assert!(matches!(e, ParseError::Undeclared { line: 2, ref name, .. } if name == "q"), "{e:?}");
    let e = parse_program("shared x\nthread s { repeat n { store x 1 } }\n").unwrap_err();
    assert!(matches!(e, ParseError::NonLiteralRepeat { line: 2, .. }), "{e:?}");
    let e = parse_program("shared x x\n").unwrap_err();
    assert!(matches!(e, ParseError::Duplicate { .. }), "{e:?}");
    let e = parse_program("handler h\nthread s { post m -> h }\n").unwrap_err();
    assert!(matches!(e, ParseError::Undeclared { .. }), "{e:?}");
    assert!(matches!(parse_program("thread s { store }").unwrap_err(), ParseError::Syntax { .. }));
}

#[test]
fn single_thread_run() {
    let p = parse_program("shared x\nthread s { store x 2  load a x  assert a == 2 }\n").unwrap();
    let s = InstanceId::thread(0);
    let rec = run(&p, &[s.clone(), s.clone(), s.clone()]).unwrap();
    let acc: Vec<Access> = rec.events.iter().map(|e| e.access.clone()).collect();
    assert_eq!(acc, [Access::Begin, Access::Write(0), Access::Read(0)]);
    assert!(run(&p, &[s.clone(), s.clone(), s.clone(), s.clone()]).is_err());
    assert!(rec.events.last().unwrap().last);
    assert!(rec.violations.is_empty());
    assert!(rec.is_completed(&s));
}

#[test]
fn assertion_violation_is_logged() {
    let p = parse_program("shared x\nthread s { load a x  assert a == 1 }\n").unwrap();
    let s = InstanceId::thread(0);
    let rec = run(&p, &[s.clone(), s]).unwrap();
    assert_eq!(rec.violations.len(), 1);
}

#[test]
fn not_enabled_is_an_error() {
    let p = generate("fig2_nc", &Default::default()).unwrap();
    let msg = InstanceId::thread(0).child(1);
    assert!(matches!(run(&p, &[msg]), Err(RunError::NotEnabled { position: 0, .. })));
}

#[test]
fn overflow_is_an_error() {
    let p = parse_program("thread s { let a = 9223372036854775807  let b = a + 1 }\n").unwrap();
    let s = InstanceId::thread(0);
    assert!(matches!(run(&p, &[s.clone(), s.clone(), s]), Err(RunError::Overflow { .. })));
}

#[test]
fn repeat_unrolls() {
    let p = parse_program("shared x\nthread s { repeat 3 { store x 1 } }\n").unwrap();
    let s = InstanceId::thread(0);
    let rec = run(&p, &vec![s; 4]).unwrap();
    assert_eq!(rec.events.iter().filter(|e| e.access == Access::Write(0)).count(), 3);
}

#[test]
fn handler_runs_one_message_at_a_time() {
    let p = generate("fig2_conf", &Default::default()).unwrap();
    let m = Machine::new(&p);
    let (s, t) = (InstanceId::thread(0), InstanceId::thread(1));
    let (p1, p2) = (s.child(1), t.child(1));
    let rec = m.run(&[s.clone(), s.clone(), t.clone(), t.clone(), p1.clone()]).unwrap();
    let mut st = m.init_state();
    for e in &rec.events {
        st = m.step(&st, &e.instance).unwrap().unwrap().0;
    }
    assert_eq!(st.status(&p1), Some(Status::Running));
    assert!(!m.is_enabled(&st, &p2));
    assert!(m.is_enabled(&st, &p1));
}

#[test]
fn corpus_sources_round_trip() {
    for (name, params) in corpus() {
        let p = generate(name, &params).unwrap();
        assert_eq!(parse_program(&to_source(&p)).unwrap(), p, "{name}");
        assert_eq!(parse_program(&source(name, &params).unwrap()).unwrap(), p);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn emit_parse_round_trip(seed in any::<u64>(), branching in any::<bool>()) {
        let src = random_program(&mut rng(seed), Shape { branching, ..Shape::default() });
        let p = parse_program(&src).unwrap();
        prop_assert_eq!(parse_program(&to_source(&p)).unwrap(), p);
    }

    #[test]
    fn replay_is_deterministic(seed in any::<u64>()) {
        let src = random_program(&mut rng(seed), Shape { branching: true, ..Shape::default() });
        let p = parse_program(&src).unwrap();
        let m = Machine::new(&p);
        let events = random_execution(&m, &mut rng(seed ^ 1));
        let sched = common::schedule(&events);
        let a = run(&p, &sched).unwrap();
        let b = run(&p, &sched).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(&a.events, &events);
    }

    #[test]
    fn execution_invariants(seed in any::<u64>()) {
        let src = random_program(&mut rng(seed), Shape { branching: true, ..Shape::default() });
        let p = parse_program(&src).unwrap();
        let m = Machine::new(&p);
        let mut st = m.init_state();
        let mut r = rng(seed ^ 7);
        let mut next_index: BTreeMap<InstanceId, u32> = BTreeMap::new();
        loop {
            let en = m.enabled(&st);
            if en.is_empty() {
                break;
            }
            let pick = &en[rand::Rng::gen_range(&mut r, 0..en.len())];
            let (next, ev) = m.step(&st, pick).unwrap().unwrap();
            let idx = next_index.entry(ev.instance.clone()).or_insert(1);
            prop_assert_eq!(ev.index, *idx);
            *idx += 1;
            prop_assert_eq!(ev.index == 1, ev.access == Access::Begin);
            if let Some(h) = ev.handler {
                let busy: Vec<&InstanceId> = next.instances().filter(|q| {
                    next.view(q).is_some_and(|v| v.handler == Some(h) && v.status == Status::Running)
                }).collect();
                prop_assert!(busy.len() <= 1);
            }
            st = next;
        }
        prop_assert!(st.is_maximal());
    }

    #[test]
    fn instance_ids_are_schedule_independent(seed in any::<u64>()) {
        let src = random_program(&mut rng(seed), Shape::default());
        let p = parse_program(&src).unwrap();
        let m = Machine::new(&p);
        let a = random_execution(&m, &mut rng(seed ^ 3));
        let b = random_execution(&m, &mut rng(seed ^ 5));
        let names = |evs: &[evdpor::Event]| -> BTreeMap<InstanceId, String> {
            let rec = run(&p, &common::schedule(evs)).unwrap();
            rec.instances.iter().map(|(k, v)| (k.clone(), v.name.clone())).collect()
        };
        prop_assert_eq!(names(&a), names(&b));
    }
}
