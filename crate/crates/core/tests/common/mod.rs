//! Helpers shared by the integration tests: random programs and small oracles.
#![allow(dead_code)]

pub mod oracles;

use std::collections::BTreeSet;

use evdpor::consistency::Observed;
use evdpor::program::MachineState;
use evdpor::wakeup::summary_in;
use evdpor::{Event, InstanceId, Machine};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Shape limits for [`random_program`].
#[derive(Clone, Copy, Debug)]
pub struct Shape {
    pub handlers: usize,
    pub threads: usize,
    pub messages: usize,
    pub stmts: usize,
    pub branching: bool,
}

impl Default for Shape {
    fn default() -> Self {
        Shape { handlers: 2, threads: 3, messages: 5, stmts: 3, branching: false }
    }
}

/// Source of a random program over `x y z`.
pub fn random_program(rng: &mut ChaCha8Rng, shape: Shape) -> String {
    let vars = ["x", "y", "z"];
    let nh = rng.gen_range(1..=shape.handlers);
    let handlers: Vec<String> = (0..nh).map(|i| format!("h{i}")).collect();
    let mut src = format!("shared x y z\nhandler {}\n", handlers.join(" "));
    let mut msgs: Vec<String> = Vec::new();
    let body = |rng: &mut ChaCha8Rng, allow_post: bool, msgs: &mut Vec<String>| -> String {
        let mut b = String::new();
        for j in 0..rng.gen_range(1..=shape.stmts) {
            let v = vars[rng.gen_range(0..3)];
            match rng.gen_range(0..12) {
                0..=3 => b.push_str(&format!(" store {v} {}", rng.gen_range(1..3))),
                4..=6 => b.push_str(&format!(" load r{j} {v}")),
                7 => b.push_str(&format!(" cas {v} 0 {} c{j}", rng.gen_range(1..3))),
                8 if shape.branching => {
                    let w = vars[rng.gen_range(0..3)];
                    b.push_str(&format!(" load r{j} {v} if r{j} == 0 {{ load s{j} {w} }} else {{ store {w} 3 }}"))
                }
                _ if allow_post => {
                    let name = format!("m{}", msgs.len() + 1);
                    b.push_str(&format!(" post {name} -> h{}", rng.gen_range(0..nh)));
                    msgs.push(name);
                }
                _ => b.push_str(&format!(" store {v} 1")),
            }
        }
        b
    };
    for t in 0..rng.gen_range(1..=shape.threads) {
        let b = body(rng, shape.messages > 0, &mut msgs);
        src.push_str(&format!("thread t{t} {{{b} }}\n"));
    }
    let mut i = 0;
    while i < msgs.len() {
        let allow = msgs.len() < shape.messages;
        let b = body(rng, allow, &mut msgs);
        src.push_str(&format!("message {} {{{b} }}\n", msgs[i]));
        i += 1;
    }
    src
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

/// State reached by replaying the instances of `events`.
pub fn state_after(m: &Machine, events: &[Event]) -> MachineState {
    let mut st = m.init_state();
    for e in events {
        st = m.step(&st, &e.instance).unwrap().expect("enabled").0;
    }
    st
}

/// Every maximal continuation from `st`, optionally forcing `first` to move
/// first. Stops after `limit` continuations.
pub fn continuations(m: &Machine, st: &MachineState, first: Option<&InstanceId>, limit: usize) -> Vec<Vec<Event>> {
    fn go(m: &Machine, st: &MachineState, cur: &mut Vec<Event>, out: &mut Vec<Vec<Event>>, limit: usize) {
        if out.len() >= limit {
            return;
        }
        let en = m.enabled(st);
        if en.is_empty() {
            out.push(cur.clone());
            return;
        }
        for p in en {
            let (next, ev) = m.step(st, &p).unwrap().unwrap();
            cur.push(ev);
            go(m, &next, cur, out, limit);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    match first {
        Some(p) => {
            if let Some((next, ev)) = m.step(st, p).unwrap() {
                go(m, &next, &mut vec![ev], &mut out, limit);
            }
        }
        None => go(m, st, &mut Vec::new(), &mut out, limit),
    }
    out
}

/// A random maximal execution.
pub fn random_execution(m: &Machine, rng: &mut ChaCha8Rng) -> Vec<Event> {
    let mut st = m.init_state();
    let mut out = Vec::new();
    loop {
        let en = m.enabled(&st);
        if en.is_empty() {
            return out;
        }
        let p = &en[rng.gen_range(0..en.len())];
        let (next, ev) = m.step(&st, p).unwrap().unwrap();
        st = next;
        out.push(ev);
    }
}

/// Complete access sequences of every instance across `runs`.
pub fn observed_from(runs: &[Vec<Event>]) -> Observed {
    let mut obs = Observed::new();
    for r in runs {
        let insts: BTreeSet<&InstanceId> = r.iter().filter(|e| e.last).map(|e| &e.instance).collect();
        for p in insts {
            obs.entry(p.clone()).or_default().insert(summary_in(r, p));
        }
    }
    obs
}

pub fn schedule(events: &[Event]) -> Vec<InstanceId> {
    events.iter().map(|e| e.instance.clone()).collect()
}
