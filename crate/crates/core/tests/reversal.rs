mod common;

use evdpor::bench_programs::generate;
use evdpor::reversal::{not_after_record, reverse_race, reverse_race_record};
use evdpor::trace::races_of;
use evdpor::{parse_program, run, ConflictMode, Event, HbRelation, InstanceId, Machine, Program};
use proptest::prelude::*;

use common::{random_execution, random_program, rng, schedule, Shape};

const MODE: ConflictMode = ConflictMode::Event;

/// Replays `prefix.wakeup` and returns the wakeup part if every event matches.
fn replays(p: &Program, prefix: &[Event], wakeup: &[Event]) -> bool {
    let sched: Vec<InstanceId> = schedule(prefix).into_iter().chain(schedule(wakeup)).collect();
    match run(p, &sched) {
        Ok(rec) => rec.events[prefix.len()..] == *wakeup,
        Err(_) => false,
    }
}

#[test]
fn fig1_reversal_is_the_notdep_sequence() {
    let p = generate("fig1_wrr", &Default::default()).unwrap();
    let (s, t, u) = (InstanceId::thread(0), InstanceId::thread(1), InstanceId::thread(2));
    // s writes x first; t and u read it afterwards.
    let rec = run(&p, &[s.clone(), s, t.clone(), t.clone(), t, u.clone(), u.clone(), u]).unwrap();
    let hb = HbRelation::new(&rec.events, MODE);
    let races = races_of(&rec.events, &hb, MODE);
    assert_eq!(races, [(1, 4), (1, 7)]);
    let r = reverse_race_record(&rec, 1, 4);
    assert_eq!(r.candidates.len(), 1);
    let c = &r.candidates[0];
    assert_eq!(c.prefix_len, 1);
    let pick = |ks: &[usize]| -> Vec<Event> { ks.iter().map(|&k| rec.events[k].clone()).collect() };
    assert_eq!(c.wakeup, pick(&[2, 3, 5, 6, 4]));
    let r = reverse_race_record(&rec, 1, 7);
    assert_eq!(r.candidates[0].wakeup, pick(&[2, 3, 5, 6, 7]));
    assert_eq!(not_after_record(&rec, 1).len(), 5);
}

#[test]
fn fig2_conf_reversal_moves_p2_before_p1() {
    let p = generate("fig2_conf", &Default::default()).unwrap();
    let m = Machine::new(&p);
    let (s, t) = (InstanceId::thread(0), InstanceId::thread(1));
    let (p1, p2) = (s.child(1), t.child(1));
    let rec = m.run(&[s.clone(), s, t.clone(), t, p1.clone(), p1.clone(), p1, p2.clone(), p2.clone(), p2.clone()]).unwrap();
    let hb = HbRelation::new(&rec.events, MODE);
    let races = races_of(&rec.events, &hb, MODE);
    assert!(!races.is_empty());
    for (i, j) in races {
        let r = reverse_race(&rec.events, &hb, i, j, MODE);
        for c in &r.candidates {
            assert_eq!(c.wakeup[0].instance, p2);
            assert!(replays(&p, &rec.events[..c.prefix_len], &c.wakeup));
        }
    }
}

fn check_candidates(p: &Program, events: &[Event], exact: bool) -> Result<usize, TestCaseError> {
    let hb = HbRelation::new(events, MODE);
    let mut total = 0;
    for (i, j) in races_of(events, &hb, MODE) {
        let r = reverse_race(events, &hb, i, j, MODE);
        for c in &r.candidates {
            total += 1;
            let (ei, ej) = (&events[i], &events[j]);
            prop_assert!(c.prefix_len <= i);
            prop_assert!(!c.wakeup.iter().any(|e| e.instance == ei.instance && e.index == ei.index));
            let last = c.wakeup.last().unwrap();
            prop_assert_eq!((&last.instance, last.index), (&ej.instance, ej.index));
            if exact {
                prop_assert!(replays(p, &events[..c.prefix_len], &c.wakeup), "race {} {}: {:?}", i, j, c);
            }
        }
    }
    Ok(total)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn candidates_replay_and_exclude_the_first_event(seed in any::<u64>()) {
        let p = parse_program(&random_program(&mut rng(seed), Shape::default())).unwrap();
        let m = Machine::new(&p);
        let events = random_execution(&m, &mut rng(seed ^ 31));
        check_candidates(&p, &events, true)?;
    }

    #[test]
    fn branching_candidates_exclude_the_first_event(seed in any::<u64>()) {
        let p = parse_program(&random_program(&mut rng(seed), Shape { branching: true, ..Shape::default() })).unwrap();
        let m = Machine::new(&p);
        let events = random_execution(&m, &mut rng(seed ^ 37));
        check_candidates(&p, &events, false)?;
    }

    #[test]
    fn thread_only_races_reverse_as_notdep(seed in any::<u64>()) {
        let shape = Shape { messages: 0, threads: 3, stmts: 3, ..Shape::default() };
        let p = parse_program(&random_program(&mut rng(seed), shape)).unwrap();
        let m = Machine::new(&p);
        let events = random_execution(&m, &mut rng(seed ^ 41));
        let hb = HbRelation::new(&events, MODE);
        for (i, j) in races_of(&events, &hb, MODE) {
            let r = reverse_race(&events, &hb, i, j, MODE);
            let mut expected: Vec<Event> = (i + 1..events.len()).filter(|&k| k != j && !hb.hb(i, k)).map(|k| events[k].clone()).collect();
            expected.push(events[j].clone());
            prop_assert_eq!(r.candidates.len(), 1);
            prop_assert_eq!(r.candidates[0].prefix_len, i);
            prop_assert_eq!(&r.candidates[0].wakeup, &expected);
        }
    }
}
