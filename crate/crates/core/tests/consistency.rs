mod common;

use evdpor::bench_programs::generate;
use evdpor::consistency::{
    check_consistency, check_consistency_brute, wi_decide, wi_member, ConsistencyGraph, GraphEvent,
    NextInfo, Observed, Wi, WiQuery, WiStats,
};
use evdpor::wakeup::summary_in;
use evdpor::{parse_program, Access, ConflictMode, Event, GraphError, InstanceId, Machine, TraceKey};
use proptest::prelude::*;

use common::oracles::{chain_queries, full_observed, independent_linearization, oracle, random_graph, respects, ChainCounts};
use common::{random_execution, random_program, rng, state_after, Shape};

const MODE: ConflictMode = ConflictMode::Event;

fn id(path: &[u32]) -> InstanceId {
    InstanceId::from_path(path).unwrap()
}

/// Runs `prefix` then `rest` and splits the events.
fn split_run(m: &Machine, prefix: &[InstanceId], rest: &[InstanceId]) -> (Vec<Event>, Vec<Event>) {
    let all: Vec<InstanceId> = prefix.iter().chain(rest).cloned().collect();
    let rec = m.run(&all).unwrap();
    let (a, b) = rec.events.split_at(prefix.len());
    (a.to_vec(), b.to_vec())
}

#[test]
fn wi_fig5_p2_is_a_weak_initial() {
    let prog = generate("fig5_wi", &Default::default()).unwrap();
    let m = Machine::new(&prog);
    let (s, t) = (id(&[0]), id(&[1]));
    let (p1, p2) = (id(&[0, 1]), id(&[1, 1]));
    let (e, w) = split_run(&m, &[s.clone(), s, t.clone(), t], &[p1.clone(), p1]);
    let st = state_after(&m, &e);
    let obs = full_observed(&m, 0);
    let next = NextInfo::Starting(obs[&p2].iter().cloned().collect());
    let q = WiQuery { state: &st, w: &w, p: &p2, next: &next, observed: &obs, mode: MODE };
    let r = wi_member(&q, &mut WiStats::default());
    assert!(r.is_yes(), "{r:?}");
    assert!(wi_decide(&q).is_yes());
    assert_eq!(oracle(&m, &e, &st, &w, &p2), Some(true));
}

#[test]
fn wi_own_first_event_is_trivially_initial() {
    let prog = generate("fig2_conf", &Default::default()).unwrap();
    let m = Machine::new(&prog);
    let st = m.init_state();
    let s = id(&[0]);
    let (_, w) = split_run(&m, &[], &[s.clone(), s.clone()]);
    let next = NextInfo::Scheduled(w[0].clone());
    let obs = Observed::new();
    let q = WiQuery { state: &st, w: &w, p: &s, next: &next, observed: &obs, mode: MODE };
    let mut stats = WiStats::default();
    assert!(wi_member(&q, &mut stats).is_yes());
    assert_eq!(stats.inspection, 1);
}

#[test]
fn wi_fig2_conflicting_p2_is_not_initial() {
    let prog = generate("fig2_conf", &Default::default()).unwrap();
    let m = Machine::new(&prog);
    let (s, t) = (id(&[0]), id(&[1]));
    let (p1, p2) = (id(&[0, 1]), id(&[1, 1]));
    // p1 complete, then p2 up to its read of x.
    let (e, w) = split_run(
        &m,
        &[s.clone(), s, t.clone(), t],
        &[p1.clone(), p1.clone(), p1, p2.clone(), p2.clone()],
    );
    assert_eq!(w.last().unwrap().access, Access::Read(0));
    let st = state_after(&m, &e);
    let obs = full_observed(&m, 1);
    let next = NextInfo::Starting(obs[&p2].iter().cloned().collect());
    let q = WiQuery { state: &st, w: &w, p: &p2, next: &next, observed: &obs, mode: MODE };
    let mut stats = WiStats::default();
    assert_eq!(wi_member(&q, &mut stats), Wi::No);
    assert_eq!(stats.hb_negative, 1);
    assert_eq!(wi_decide(&q), Wi::No);
    assert_eq!(oracle(&m, &e, &st, &w, &p2), Some(false));
}

const CROSS: &str = "\
shared x y z
handler h k
thread s { post a -> h  post c -> k }
thread t { post b -> h  post d -> k }
message a { load r x  store z 1 }
message b { load q y }
message c { store x 1 }
message d { load s z  store y 1 }
";

#[test]
fn wi_decide_cross_handler_cycle() {
    let prog = parse_program(CROSS).unwrap();
    let m = Machine::new(&prog);
    let (s, t) = (id(&[0]), id(&[1]));
    let (a, b, c, d) = (id(&[0, 1]), id(&[1, 1]), id(&[0, 2]), id(&[1, 2]));
    let pre = [s.clone(), s.clone(), s, t.clone(), t.clone(), t];
    let (e, w) = split_run(&m, &pre, &[c.clone(), c, a.clone(), a.clone(), a, d.clone(), d.clone(), d]);
    let st = state_after(&m, &e);
    let obs = full_observed(&m, 2);
    let next = NextInfo::Starting(obs[&b].iter().cloned().collect());
    let q = WiQuery { state: &st, w: &w, p: &b, next: &next, observed: &obs, mode: MODE };
    assert_eq!(wi_decide(&q), Wi::No);
    assert_eq!(wi_member(&q, &mut WiStats::default()), Wi::No);
    assert_eq!(oracle(&m, &e, &st, &w, &b), Some(false));
}

#[test]
fn wi_decide_single_handler_conflict_free() {
    let prog = generate("fig2_nc", &Default::default()).unwrap();
    let m = Machine::new(&prog);
    let (s, t) = (id(&[0]), id(&[1]));
    let (p1, p2) = (id(&[0, 1]), id(&[1, 1]));
    let (e, w) = split_run(&m, &[s.clone(), s, t.clone(), t], &[p1.clone(), p1]);
    let st = state_after(&m, &e);
    let obs = full_observed(&m, 3);
    let next = NextInfo::Starting(obs[&p2].iter().cloned().collect());
    let q = WiQuery { state: &st, w: &w, p: &p2, next: &next, observed: &obs, mode: MODE };
    assert!(wi_decide(&q).is_yes());
    assert_eq!(oracle(&m, &e, &st, &w, &p2), Some(true));
}

fn gev(inst: &str, index: u32, access: Access, handler: Option<u32>, last: bool) -> GraphEvent {
    GraphEvent { instance: inst.parse().unwrap(), index, access, handler, last }
}

#[test]
fn chain_graph_is_its_own_witness() {
    let g = ConsistencyGraph {
        events: vec![
            gev("t0", 1, Access::Begin, None, false),
            gev("t0", 2, Access::Write(0), None, false),
            gev("t0", 3, Access::Read(0), None, true),
        ],
        po: vec![(0, 1), (1, 2)],
        ..Default::default()
    };
    let lin = check_consistency(&g).unwrap().unwrap();
    let expected: Vec<Event> = g.events.iter().map(Event::from).collect();
    assert_eq!(lin, expected);
}

#[test]
fn fig2_execution_graph_is_consistent() {
    let prog = generate("fig2_conf", &Default::default()).unwrap();
    let m = Machine::new(&prog);
    for seed in 0..10 {
        let ev = random_execution(&m, &mut rng(seed));
        let g = ConsistencyGraph::from_events(&ev, MODE);
        let lin = check_consistency(&g).unwrap().expect("consistent");
        assert_eq!(TraceKey::of(&lin, MODE), TraceKey::of(&ev, MODE));
    }
}

#[test]
fn crossing_messages_are_inconsistent() {
    let g = ConsistencyGraph {
        events: vec![
            gev("t0.1", 1, Access::Begin, Some(0), false),
            gev("t0.1", 2, Access::Write(0), Some(0), true),
            gev("t1.1", 1, Access::Begin, Some(0), false),
            gev("t1.1", 2, Access::Write(1), Some(0), true),
        ],
        po: vec![(0, 1), (2, 3)],
        cnf: vec![(1, 2), (3, 0)],
        pb: vec![],
    };
    assert_eq!(check_consistency(&g).unwrap(), None);
    assert_eq!(independent_linearization(&g), None);
}

#[test]
fn malformed_graphs_are_rejected() {
    let mut g = ConsistencyGraph {
        events: vec![gev("t0", 1, Access::Begin, None, false), gev("t0", 2, Access::Local, None, true)],
        po: vec![],
        ..Default::default()
    };
    assert!(matches!(check_consistency(&g), Err(GraphError::Malformed(_))));
    g.po = vec![(0, 5)];
    assert!(check_consistency(&g).is_err());
}

#[test]
fn check_consistency_matches_enumeration_on_random_graphs() {
    let mut stats = (0, 0);
    for seed in 0..1500 {
        let g = random_graph(seed);
        let fast = check_consistency(&g).unwrap();
        let brute = check_consistency_brute(&g).unwrap();
        let indep = independent_linearization(&g);
        assert_eq!(fast.is_some(), indep.is_some(), "seed {seed}: {g:?}");
        assert_eq!(brute.is_some(), indep.is_some(), "seed {seed}");
        if let Some(lin) = &fast {
            assert!(respects(&g, lin), "seed {seed}");
            stats.0 += 1;
        } else {
            stats.1 += 1;
        }
    }
    assert!(stats.0 > 100 && stats.1 > 100, "{stats:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn execution_graphs_are_consistent(seed in any::<u64>()) {
        let prog = parse_program(&random_program(&mut rng(seed), Shape { branching: true, ..Shape::default() })).unwrap();
        let m = Machine::new(&prog);
        let ev = random_execution(&m, &mut rng(seed ^ 29));
        let k = (seed as usize) % (ev.len() + 1);
        for g in [ConsistencyGraph::from_events(&ev, MODE), ConsistencyGraph::from_events(&ev[..k], MODE)] {
            let lin = check_consistency(&g).unwrap();
            prop_assert!(lin.as_ref().is_some_and(|l| respects(&g, l)));
        }
    }

    #[test]
    fn graph_json_round_trip(seed in any::<u64>()) {
        let g = random_graph(seed);
        let s = serde_json::to_string(&g).unwrap();
        prop_assert_eq!(serde_json::from_str::<ConsistencyGraph>(&s).unwrap(), g);
    }
}

#[test]
fn check_chain_is_sound_on_random_queries() {
    let mut c = ChainCounts::default();
    chain_queries(0..700, &mut c);
    assert!(c.violations.is_empty(), "{:#?}", c.violations);
    assert!(c.queries >= 1000, "{c:?}");
    assert!(c.simple > 0 && c.hb_negative > 0 && c.witness_positive > 0, "{c:?}");
}

#[test]
fn summary_excludes_begin_and_local() {
    let prog = generate("fig2_conf", &Default::default()).unwrap();
    let m = Machine::new(&prog);
    let ev = random_execution(&m, &mut rng(4));
    for p in [id(&[0, 1]), id(&[1, 1])] {
        let s = summary_in(&ev, &p);
        assert_eq!(s.len(), 2);
        assert!(s.iter().all(Access::is_global));
    }
}
