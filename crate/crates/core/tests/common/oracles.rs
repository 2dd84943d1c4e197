//! Independent oracles: definition-level WI membership, random graphs and
//! their linearizations, and the randomized chain-soundness sweep.

use evdpor::consistency::{stage_report, wi_decide, wi_member, ConsistencyGraph, GraphEvent, NextInfo, Observed, Wi, WiQuery, WiStats};
use evdpor::program::{MachineState, Status};
use evdpor::trace::is_hb_prefix_of;
use evdpor::{parse_program, Access, ConflictMode, Event, InstanceId, Machine};
use rand::Rng;

use super::{continuations, observed_from, random_execution, random_program, rng, schedule, state_after, Shape};

const MODE: ConflictMode = ConflictMode::Event;

/// Definition-level membership: some maximal `E.p.w'` has `E.w` as an hb-prefix.
pub fn oracle(m: &Machine, e: &[Event], st: &MachineState, w: &[Event], p: &InstanceId) -> Option<bool> {
    const LIMIT: usize = 20_000;
    let conts = continuations(m, st, Some(p), LIMIT);
    if conts.len() >= LIMIT {
        return None;
    }
    let sub: Vec<Event> = e.iter().chain(w).cloned().collect();
    Some(conts.iter().any(|c| {
        let full: Vec<Event> = e.iter().chain(c).cloned().collect();
        is_hb_prefix_of(&sub, &full, MODE)
    }))
}

pub fn full_observed(m: &Machine, seed: u64) -> Observed {
    let runs: Vec<Vec<Event>> = (0..24).map(|s| random_execution(m, &mut rng(seed ^ s))).collect();
    observed_from(&runs)
}

/// Linearization by plain depth-first search over events.
pub fn independent_linearization(g: &ConsistencyGraph) -> Option<Vec<usize>> {
    let n = g.events.len();
    let edges: Vec<(usize, usize)> = g.po.iter().chain(&g.cnf).chain(&g.pb).copied().collect();
    fn go(
        g: &ConsistencyGraph,
        edges: &[(usize, usize)],
        placed: &mut Vec<bool>,
        out: &mut Vec<usize>,
    ) -> bool {
        let n = g.events.len();
        if out.len() == n {
            return true;
        }
        for i in 0..n {
            if placed[i] || edges.iter().any(|&(a, b)| b == i && !placed[a]) {
                continue;
            }
            let e = &g.events[i];
            if let Some(h) = e.handler {
                // another message on h started and not finished
                let busy = out.iter().any(|&j| {
                    let f = &g.events[j];
                    f.handler == Some(h)
                        && f.instance != e.instance
                        && !out.iter().any(|&k| g.events[k].instance == f.instance && g.events[k].last)
                });
                if busy {
                    continue;
                }
            }
            placed[i] = true;
            out.push(i);
            if go(g, edges, placed, out) {
                return true;
            }
            out.pop();
            placed[i] = false;
        }
        false
    }
    let mut out = Vec::new();
    go(g, &edges, &mut vec![false; n], &mut out).then_some(out)
}

/// A well-formed random graph with at most 8 events.
pub fn random_graph(seed: u64) -> ConsistencyGraph {
    let mut r = rng(seed);
    let mut g = ConsistencyGraph::default();
    let ninst = r.gen_range(1..=4);
    let mut budget = 8usize;
    let mut firsts = Vec::new();
    let mut posts = Vec::new();
    for i in 0..ninst {
        if budget == 0 {
            break;
        }
        let len = r.gen_range(1..=budget.min(3));
        budget -= len;
        let handler = if r.gen_bool(0.75) { Some(r.gen_range(0..2)) } else { None };
        let name = if handler.is_some() { format!("t9.{}", i + 1) } else { format!("t{i}") };
        let complete = r.gen_bool(0.7);
        let start = g.events.len();
        for k in 0..len {
            let access = if k == 0 {
                Access::Begin
            } else if handler.is_none() && r.gen_bool(0.3) {
                Access::Post { target: "t9.1".parse().unwrap(), handler: 0 }
            } else {
                [Access::Read(0), Access::Write(0), Access::Local][r.gen_range(0..3)].clone()
            };
            if matches!(access, Access::Post { .. }) {
                posts.push(g.events.len());
            }
            g.events.push(GraphEvent { instance: name.parse().unwrap(), index: k as u32 + 1, access, handler, last: complete && k + 1 == len });
            if k > 0 {
                g.po.push((start + k - 1, start + k));
            }
        }
        if handler.is_some() {
            firsts.push(start);
        }
    }
    let n = g.events.len();
    for a in 0..n {
        for b in 0..n {
            if g.events[a].instance != g.events[b].instance && r.gen_bool(0.12) {
                g.cnf.push((a, b));
            }
        }
    }
    let mut free = firsts.clone();
    for p in posts {
        if !free.is_empty() && r.gen_bool(0.6) {
            let b = free.swap_remove(r.gen_range(0..free.len()));
            g.pb.push((p, b));
        }
    }
    g
}

pub fn respects(g: &ConsistencyGraph, lin: &[Event]) -> bool {
    let pos = |i: usize| {
        let e = &g.events[i];
        lin.iter().position(|f| f.instance == e.instance && f.index == e.index)
    };
    lin.len() == g.events.len() && g.edges().all(|(a, b)| matches!((pos(a), pos(b)), (Some(x), Some(y)) if x < y))
}

/// Counts over randomized queries drawn from random non-branching programs.
#[derive(Debug, Default)]
pub struct ChainCounts {
    pub queries: usize,
    pub simple: usize,
    pub hb_negative: usize,
    pub witness_positive: usize,
    pub violations: Vec<String>,
}

pub fn chain_queries(seeds: std::ops::Range<u64>, counts: &mut ChainCounts) {
    let shape = Shape { handlers: 3, threads: 2, messages: 5, stmts: 3, branching: false };
    for seed in seeds {
        let prog = parse_program(&random_program(&mut rng(seed), shape)).unwrap();
        let m = Machine::new(&prog);
        let obs = full_observed(&m, seed);
        let mut r = rng(seed ^ 0xabc);
        for _ in 0..8 {
            let f = random_execution(&m, &mut r);
            let k = r.gen_range(0..=f.len());
            let len = r.gen_range(0..=f.len() - k);
            let (e, w) = (&f[..k], &f[k..k + len]);
            let st = state_after(&m, e);
            let ps: Vec<InstanceId> = st.instances().filter(|p| st.view(p).is_some_and(|v| v.status != Status::Finished)).cloned().collect();
            for p in ps {
                let next = match st.view(&p).unwrap().status {
                    Status::NotStarted => match obs.get(&p) {
                        Some(s) => NextInfo::Starting(s.iter().cloned().collect()),
                        None => continue,
                    },
                    _ => match m.step(&st, &p).unwrap() {
                        Some((_, ev)) => NextInfo::Scheduled(ev),
                        None => continue,
                    },
                };
                let q = WiQuery { state: &st, w, p: &p, next: &next, observed: &obs, mode: MODE };
                let truth = oracle(&m, e, &st, w, &p);
                let decided = wi_decide(&q);
                let member = wi_member(&q, &mut WiStats::default());
                let tag = format!("seed {seed} k {k} p {p}");
                if let (Some(t), false) = (truth, matches!(decided, Wi::Unknown)) {
                    if t != decided.is_yes() {
                        counts.violations.push(format!("{tag}: decide {decided:?} oracle {t}"));
                    }
                }
                if let Wi::Yes(wit) = &member {
                    let sub: Vec<Event> = e.iter().chain(w).cloned().collect();
                    let full: Vec<Event> = e.iter().chain(wit).cloned().collect();
                    let replays = m.run(&schedule(&full)).map(|rec| rec.events == full).unwrap_or(false);
                    if !replays || !is_hb_prefix_of(&sub, &full, MODE) {
                        counts.violations.push(format!("{tag}: bad witness"));
                    }
                }
                let Some(rep) = stage_report(&q) else { continue };
                counts.queries += 1;
                let decide = rep.decide;
                if rep.simple {
                    counts.simple += 1;
                    if decide != Some(true) || truth == Some(false) {
                        counts.violations.push(format!("{tag}: simple but decide {decide:?} oracle {truth:?}"));
                    }
                }
                if rep.hb_negative == Some(true) {
                    counts.hb_negative += 1;
                    if decide != Some(false) || truth == Some(true) {
                        counts.violations.push(format!("{tag}: hb negative but decide {decide:?} oracle {truth:?}"));
                    }
                }
                if rep.witness == Some(true) {
                    counts.witness_positive += 1;
                    if decide != Some(true) || truth == Some(false) {
                        counts.violations.push(format!("{tag}: witness but decide {decide:?} oracle {truth:?}"));
                    }
                }
            }
        }
    }
}

