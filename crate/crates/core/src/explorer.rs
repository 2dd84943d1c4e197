//! The exploration loop, the coarse handlers-as-locks baseline and the
//! brute-force oracle.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::consistency::{wi_member, NextInfo, Observed, Summary, Wi, WiQuery, WiStats};
use crate::error::ExploreError;
use crate::event::{ConflictMode, Event, InstanceId};
use crate::program::{Machine, MachineState, Program};
use crate::reversal::reverse_race;
use crate::trace::{races_of, HbRelation, TraceKey};
use crate::wakeup::{summary_in, InsertCtx, Insertion, Node, Parked, WakeupTree};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    #[default]
    EventDpor,
    /// Handlers treated as locks: same-handler events always conflict.
    Coarse,
    BruteForce,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::EventDpor, Algorithm::Coarse, Algorithm::BruteForce];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::EventDpor => "event-dpor",
            Algorithm::Coarse => "coarse",
            Algorithm::BruteForce => "brute-force",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown algorithm `{s}` (expected event-dpor, coarse or brute-force)"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExploreConfig {
    pub algorithm: Algorithm,
    /// Most maximal executions (or brute-force prefixes) to visit.
    pub cap: u64,
    /// Keep the trace key and schedule of every explored execution.
    pub record_keys: bool,
    /// Tie-break seed; exploration order is fixed, so only reported.
    pub seed: u64,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        ExploreConfig { algorithm: Algorithm::EventDpor, cap: 10_000_000, record_keys: false, seed: 0 }
    }
}

impl ExploreConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        ExploreConfig { algorithm, ..Default::default() }
    }

    pub fn with_keys(mut self) -> Self {
        self.record_keys = true;
        self
    }

    pub fn with_cap(mut self, cap: u64) -> Self {
        self.cap = cap;
        self
    }
}

/// An execution that violated an assertion.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ViolationReport {
    pub schedule: Vec<InstanceId>,
    pub instance: InstanceId,
    pub index: u32,
    pub assertion: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ExplorationStats {
    pub algorithm: Algorithm,
    /// Distinct traces among the explored maximal executions.
    pub traces: u64,
    /// Maximal executions visited (schedules, for brute force).
    pub executions: u64,
    /// Executions whose trace had already been explored.
    pub duplicates: u64,
    pub races: u64,
    pub candidates: u64,
    pub redundant_skipped: u64,
    pub insertions: u64,
    /// Insertions that found an existing branch covering the sequence.
    pub covered: u64,
    pub parked: u64,
    /// Parked sequences lost with a dropped branch or never resumed.
    pub parked_leaks: u64,
    /// Wakeup-tree nodes whose instance was not enabled on replay.
    pub dropped_nodes: u64,
    /// Replayed events that differed from the stored wakeup event.
    pub divergent_replays: u64,
    /// Reversal candidates that did not replay.
    pub invalid_wakeups: u64,
    pub reversal_repairs: u64,
    pub wi: WiStats,
    /// Executions with at least one assertion violation.
    pub violations: u64,
    pub violation_examples: Vec<ViolationReport>,
    pub wall_ms: f64,
    /// The cap was reached before exploration finished.
    pub incomplete: bool,
    #[serde(skip)]
    pub keys: Option<Vec<TraceKey>>,
    #[serde(skip)]
    pub schedules: Option<Vec<Vec<InstanceId>>>,
}

impl ExplorationStats {
    /// Distinct recorded keys, if recorded.
    pub fn key_set(&self) -> Option<BTreeSet<TraceKey>> {
        self.keys.as_ref().map(|k| k.iter().cloned().collect())
    }
}

const MAX_VIOLATION_EXAMPLES: usize = 10;

/// Explores `prog` with the configured algorithm.
pub fn explore(prog: &Program, cfg: &ExploreConfig) -> Result<ExplorationStats, ExploreError> {
    if cfg.cap == 0 {
        return Err(ExploreError::Config("cap must be positive".into()));
    }
    match cfg.algorithm {
        Algorithm::EventDpor => Explorer::new(prog, cfg, ConflictMode::Event).run(),
        Algorithm::Coarse => Explorer::new(prog, cfg, ConflictMode::Coarse).run(),
        Algorithm::BruteForce => {
            let start = Instant::now();
            let r = brute_force_mode(prog, ConflictMode::Event, cfg.cap)?;
            Ok(ExplorationStats {
                algorithm: Algorithm::BruteForce,
                traces: r.keys.len() as u64,
                executions: r.schedules,
                duplicates: r.schedules.saturating_sub(r.keys.len() as u64),
                violations: r.violations,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
                keys: cfg.record_keys.then(|| r.keys.into_iter().collect()),
                ..Default::default()
            })
        }
    }
}

/// Explores with handlers treated as locks.
pub fn explore_coarse(prog: &Program, cfg: &ExploreConfig) -> Result<ExplorationStats, ExploreError> {
    explore(prog, &ExploreConfig { algorithm: Algorithm::Coarse, ..cfg.clone() })
}

#[derive(Clone, Debug)]
enum DoneEntry {
    Scheduled(Event),
    Starting(BTreeSet<Summary>),
}

impl DoneEntry {
    fn next_info(&self) -> NextInfo {
        match self {
            DoneEntry::Scheduled(e) => NextInfo::Scheduled(e.clone()),
            DoneEntry::Starting(s) => NextInfo::Starting(s.iter().cloned().collect()),
        }
    }
}

/// State of one `Explore(E_k)` call.
struct Frame {
    state: MachineState,
    tree: WakeupTree,
    done: BTreeMap<InstanceId, DoneEntry>,
    parked: Vec<Parked>,
    formerly_leaf: bool,
    msg_accesses: BTreeMap<InstanceId, BTreeSet<Summary>>,
    started: bool,
}

impl Frame {
    fn new(state: MachineState, tree: WakeupTree, parked: Vec<Parked>, formerly_leaf: bool) -> Self {
        Frame {
            state,
            tree,
            done: BTreeMap::new(),
            parked,
            formerly_leaf,
            msg_accesses: BTreeMap::new(),
            started: false,
        }
    }
}

struct Explorer<'a> {
    machine: Machine,
    mode: ConflictMode,
    cfg: &'a ExploreConfig,
    frames: Vec<Frame>,
    events: Vec<Event>,
    observed: Observed,
    seen: HashSet<TraceKey>,
    stats: ExplorationStats,
    /// `EVDPOR_DEBUG` set: log executions, candidates and insertions to stderr.
    debug: bool,
}

impl<'a> Explorer<'a> {
    fn new(prog: &Program, cfg: &'a ExploreConfig, mode: ConflictMode) -> Self {
        let machine = Machine::new(prog);
        let init = machine.init_state();
        Explorer {
            machine,
            mode,
            cfg,
            frames: vec![Frame::new(init, WakeupTree::default(), Vec::new(), false)],
            events: Vec::new(),
            observed: Observed::new(),
            seen: HashSet::new(),
            debug: std::env::var_os("EVDPOR_DEBUG").is_some(),
            stats: ExplorationStats {
                algorithm: cfg.algorithm,
                keys: cfg.record_keys.then(Vec::new),
                schedules: cfg.record_keys.then(Vec::new),
                ..Default::default()
            },
        }
    }

    fn run(mut self) -> Result<ExplorationStats, ExploreError> {
        let start = Instant::now();
        loop {
            let k = self.events.len();
            let enabled = self.machine.enabled(&self.frames[k].state);
            if !self.frames[k].started {
                self.frames[k].started = true;
                if enabled.is_empty() {
                    self.at_maximal()?;
                    if self.stats.executions >= self.cfg.cap {
                        self.stats.incomplete = true;
                        break;
                    }
                } else if self.frames[k].tree.is_empty() {
                    let (_, ev) = self.machine.step(&self.frames[k].state, &enabled[0])?.expect("enabled");
                    self.frames[k].tree.children.push(Node { event: ev, children: Vec::new(), parked: Vec::new() });
                }
            }
            if let Some(node) = self.frames[k].tree.take_min() {
                match self.machine.step(&self.frames[k].state, &node.event.instance)? {
                    None => {
                        self.stats.dropped_nodes += 1;
                        self.stats.parked_leaks += (node.parked.len() + WakeupTree { children: node.children }.parked_total()) as u64;
                    }
                    Some((st, ev)) => {
                        if ev != node.event {
                            self.stats.divergent_replays += 1;
                        }
                        let leaf = node.children.is_empty();
                        self.frames.push(Frame::new(st, WakeupTree { children: node.children }, node.parked, leaf));
                        self.events.push(ev);
                    }
                }
                continue;
            }
            if k == 0 {
                break;
            }
            self.pop();
        }
        for f in &self.frames {
            self.stats.parked_leaks += (f.parked.len() + f.tree.parked_total()) as u64;
        }
        self.stats.traces = self.seen.len() as u64;
        self.stats.wall_ms = start.elapsed().as_secs_f64() * 1e3;
        Ok(self.stats)
    }

    /// Returns from `Explore(E.p)` to `Explore(E)`.
    fn pop(&mut self) {
        let child = self.frames.pop().expect("frame");
        let ev = self.events.pop().expect("event");
        let mut tmp = child.msg_accesses;
        let p = ev.instance.clone();
        if ev.last {
            tmp.insert(p.clone(), BTreeSet::from([Vec::new()]));
        }
        if ev.access.is_global() {
            if let Some(seqs) = tmp.remove(&p) {
                let seqs = seqs
                    .into_iter()
                    .map(|mut s| {
                        s.insert(0, ev.access.clone());
                        s
                    })
                    .collect();
                tmp.insert(p.clone(), seqs);
            }
        }
        let parent = self.frames.last_mut().expect("parent frame");
        for q in parent.state.active() {
            if let Some(s) = tmp.remove(&q) {
                parent.msg_accesses.entry(q).or_default().extend(s);
            }
        }
        let entry = if ev.index == 1 {
            DoneEntry::Starting(parent.msg_accesses.get(&p).cloned().unwrap_or_default())
        } else {
            DoneEntry::Scheduled(ev)
        };
        parent.done.insert(p, entry);
    }

    fn wi(&mut self, k: usize, w: &[Event], p: &InstanceId, next: &NextInfo) -> Wi {
        let q = WiQuery { state: &self.frames[k].state, w, p, next, observed: &self.observed, mode: self.mode };
        wi_member(&q, &mut self.stats.wi)
    }

    /// What the current execution says about `E[k]`'s instance after `E_k`.
    fn info_at(&self, k: usize) -> NextInfo {
        let e = &self.events[k];
        if e.index == 1 && e.handler.is_some() {
            NextInfo::Starting(vec![summary_in(&self.events[k..], &e.instance)])
        } else {
            NextInfo::Scheduled(e.clone())
        }
    }

    /// Some explored `q` after `E_k` is a weak initial of `w`.
    fn done_covers(&mut self, k: usize, w: &[Event]) -> bool {
        let done: Vec<(InstanceId, NextInfo)> =
            self.frames[k].done.iter().map(|(q, d)| (q.clone(), d.next_info())).collect();
        done.iter().any(|(q, next)| self.wi(k, w, q, next).is_yes())
    }

    fn redundant(&mut self, k: usize, v: &[Event]) -> bool {
        (0..=k).any(|k2| {
            if self.frames[k2].done.is_empty() {
                return false;
            }
            let mut w = self.events[k2..k].to_vec();
            w.extend_from_slice(v);
            self.done_covers(k2, &w)
        })
    }

    fn at_maximal(&mut self) -> Result<(), ExploreError> {
        let n = self.events.len();
        self.stats.executions += 1;
        let key = TraceKey::of(&self.events, self.mode);
        if !self.seen.insert(key.clone()) {
            self.stats.duplicates += 1;
        }
        let schedule: Vec<InstanceId> = self.events.iter().map(|e| e.instance.clone()).collect();
        if self.debug {
            let evs: Vec<String> = self.events.iter().map(|e| e.to_string()).collect();
            eprintln!("execution {}: {}", self.stats.executions, evs.join(" "));
        }
        let viols = self.frames[n].state.violations();
        if !viols.is_empty() {
            self.stats.violations += 1;
            for v in viols {
                if self.stats.violation_examples.len() < MAX_VIOLATION_EXAMPLES {
                    self.stats.violation_examples.push(ViolationReport {
                        schedule: schedule.clone(),
                        instance: v.instance.clone(),
                        index: v.index,
                        assertion: v.assertion.clone(),
                    });
                }
            }
        }
        if let Some(keys) = &mut self.stats.keys {
            keys.push(key);
        }
        if let Some(s) = &mut self.stats.schedules {
            s.push(schedule);
        }
        let insts: BTreeSet<&InstanceId> = self.events.iter().map(|e| &e.instance).collect();
        for p in insts {
            self.observed.entry(p.clone()).or_default().insert(summary_in(&self.events, p));
        }

        for k in 0..=n {
            let mut parked = std::mem::take(&mut self.frames[k].parked);
            parked.sort_by_key(|p| p.seq.len());
            for p in parked {
                self.insert_parked(p.seq, p.root, k);
            }
        }

        let hb = HbRelation::new(&self.events, self.mode);
        let races = races_of(&self.events, &hb, self.mode);
        self.stats.races += races.len() as u64;
        for (i, j) in races {
            let rev = reverse_race(&self.events, &hb, i, j, self.mode);
            self.stats.reversal_repairs += rev.repairs;
            for cand in rev.candidates {
                self.stats.candidates += 1;
                let Some(v) = self.replay(cand.prefix_len, &cand.wakeup)? else {
                    self.stats.invalid_wakeups += 1;
                    continue;
                };
                let redundant = self.redundant(cand.prefix_len, &v);
                if self.debug {
                    let evs: Vec<String> = v.iter().map(|e| e.to_string()).collect();
                    eprintln!(
                        "  race {} / {}: at {} [{}]{}",
                        self.events[i],
                        self.events[j],
                        cand.prefix_len,
                        evs.join(" "),
                        if redundant { " redundant" } else { "" }
                    );
                }
                if redundant {
                    self.stats.redundant_skipped += 1;
                    continue;
                }
                self.insert_wus(v, cand.prefix_len);
            }
        }
        Ok(())
    }

    /// Replays `v` after `E_k`, returning the events actually performed.
    fn replay(&self, k: usize, v: &[Event]) -> Result<Option<Vec<Event>>, ExploreError> {
        let mut st = self.frames[k].state.clone();
        let mut out = Vec::with_capacity(v.len());
        for e in v {
            let Some((next, ev)) = self.machine.step(&st, &e.instance)? else { return Ok(None) };
            if ev.index != e.index || std::mem::discriminant(&ev.access) != std::mem::discriminant(&e.access) {
                return Ok(None);
            }
            st = next;
            out.push(ev);
        }
        Ok(Some(out))
    }

    fn record_insertion(&mut self, r: Insertion) {
        if self.debug {
            eprintln!("    -> {r:?}");
        }
        match r {
            Insertion::Inserted => self.stats.insertions += 1,
            Insertion::Covered => self.stats.covered += 1,
            Insertion::Parked => self.stats.parked += 1,
        }
    }

    /// Inserts `v`, valid after `E_k`, into the wakeup tree at `E_k`. The
    /// child currently being explored is the next frame.
    fn insert_wus(&mut self, mut v: Vec<Event>, mut k: usize) {
        let n = self.events.len();
        loop {
            if self.debug {
                let evs: Vec<String> = v.iter().map(|e| e.to_string()).collect();
                eprintln!("    insert at {k}: [{}]", evs.join(" "));
            }
            if v.is_empty() || self.done_covers(k, &v) {
                if self.debug {
                    eprintln!("    (done covers at {k})");
                }
                self.record_insertion(Insertion::Covered);
                return;
            }
            if k < n {
                let e = self.events[k].clone();
                let p = &e.instance;
                let in_v = v.iter().any(|x| &x.instance == p);
                let descend = match e.handler {
                    Some(h) if e.index == 1 => {
                        if let Some(wit) = crate::consistency::first_on_handler(&v, &e, h) {
                            self.stats.wi.calls += 1;
                            self.stats.wi.simple += 1;
                            if !in_v {
                                self.record_insertion(Insertion::Covered);
                                return;
                            }
                            Some(wit)
                        } else {
                            let next = if v.iter().any(|x| &x.instance == p && x.last) {
                                NextInfo::Starting(vec![summary_in(&v, p)])
                            } else {
                                self.info_at(k)
                            };
                            match self.wi(k, &v, p, &next) {
                                Wi::Yes(wit) => Some(wit),
                                _ => None,
                            }
                        }
                    }
                    _ => match self.wi(k, &v, p, &NextInfo::Scheduled(e.clone())) {
                        Wi::Yes(_) if !in_v => {
                            self.record_insertion(Insertion::Covered);
                            return;
                        }
                        Wi::Yes(wit) => Some(wit),
                        _ => None,
                    },
                };
                if let Some(wit) = descend {
                    if self.debug {
                        let evs: Vec<String> = wit.iter().map(|e| e.to_string()).collect();
                        eprintln!("    descend {k} via [{}]", evs.join(" "));
                    }
                    // Witness does not replay: leaf rule.
                    if self.frames[k + 1].formerly_leaf && !matches!(self.replay(k, &wit), Ok(Some(_))) {
                        self.record_insertion(Insertion::Covered);
                        return;
                    }
                    v = wit[1..].to_vec();
                    k += 1;
                    continue;
                }
            }
            let ctx = InsertCtx { machine: &self.machine, observed: &self.observed, mode: self.mode };
            let frame = &mut self.frames[k];
            let r = frame.tree.insert(&ctx, &frame.state, k, v, &mut self.stats.wi);
            self.record_insertion(r);
            return;
        }
    }

    /// Resumes a sequence parked at `E_k` while being inserted at `E_root`,
    /// now that `E[k-1]`'s accesses are known.
    fn insert_parked(&mut self, mut v: Vec<Event>, root: usize, mut k: usize) {
        let n = self.events.len();
        loop {
            if self.debug {
                let evs: Vec<String> = v.iter().map(|e| e.to_string()).collect();
                eprintln!("    parked at {k}: [{}]{}", evs.join(" "), if k > root + 1 && k <= n && self.frames[k - 1].formerly_leaf { " (leaf)" } else { "" });
            }
            if v.is_empty() || k == 0 || k > n || (k > root + 1 && self.frames[k - 1].formerly_leaf) {
                self.record_insertion(Insertion::Covered);
                return;
            }
            let p = self.events[k - 1].instance.clone();
            let next = self.info_at(k - 1);
            match self.wi(k - 1, &v, &p, &next) {
                Wi::Yes(wit) => {
                    v = wit[1..].to_vec();
                    k += 1;
                }
                _ => {
                    self.insert_wus(v, k - 1);
                    return;
                }
            }
        }
    }
}

/// Distinct traces and schedule count of every maximal execution.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BruteResult {
    pub keys: BTreeSet<TraceKey>,
    /// Maximal schedules, saturating at `u64::MAX`.
    pub schedules: u64,
    /// Distinct prefixes visited.
    pub nodes: u64,
    /// Distinct maximal traces with an assertion violation.
    pub violations: u64,
}

/// All maximal traces of `prog` under event conflicts.
pub fn brute_force(prog: &Program, cap: u64) -> Result<BruteResult, ExploreError> {
    brute_force_mode(prog, ConflictMode::Event, cap)
}

/// Depth-first search over schedules, merging prefixes with equal trace keys.
/// `cap` bounds the number of distinct prefixes.
pub fn brute_force_mode(prog: &Program, mode: ConflictMode, cap: u64) -> Result<BruteResult, ExploreError> {
    struct Ctx<'a> {
        machine: &'a Machine,
        mode: ConflictMode,
        cap: u64,
        memo: HashMap<TraceKey, u64>,
        out: BruteResult,
    }
    fn go(c: &mut Ctx, st: &MachineState, events: &mut Vec<Event>) -> Result<u64, ExploreError> {
        let key = TraceKey::of(events, c.mode);
        if let Some(&n) = c.memo.get(&key) {
            return Ok(n);
        }
        c.out.nodes += 1;
        if c.out.nodes > c.cap {
            return Err(ExploreError::CapExceeded { cap: c.cap });
        }
        let enabled = c.machine.enabled(st);
        let count = if enabled.is_empty() {
            if !st.violations().is_empty() {
                c.out.violations += 1;
            }
            c.out.keys.insert(key.clone());
            1
        } else {
            let mut total = 0u64;
            for p in &enabled {
                let (next, ev) = c.machine.step(st, p)?.expect("enabled");
                events.push(ev);
                let r = go(c, &next, events);
                events.pop();
                total = total.saturating_add(r?);
            }
            total
        };
        c.memo.insert(key, count);
        Ok(count)
    }
    let machine = Machine::new(prog);
    let mut c = Ctx { machine: &machine, mode, cap, memo: HashMap::new(), out: BruteResult::default() };
    let init = machine.init_state();
    c.out.schedules = go(&mut c, &init, &mut Vec::new())?;
    Ok(c.out)
}

/// Unmemoized enumeration of every maximal schedule; `cap` bounds the schedules.
pub fn brute_force_naive(prog: &Program, mode: ConflictMode, cap: u64) -> Result<BruteResult, ExploreError> {
    let machine = Machine::new(prog);
    let mut out = BruteResult::default();
    let mut viol_keys = BTreeSet::new();
    let mut stack: Vec<(MachineState, Vec<Event>)> = vec![(machine.init_state(), Vec::new())];
    while let Some((st, events)) = stack.pop() {
        out.nodes += 1;
        let enabled = machine.enabled(&st);
        if enabled.is_empty() {
            out.schedules += 1;
            if out.schedules > cap {
                return Err(ExploreError::CapExceeded { cap });
            }
            let key = TraceKey::of(&events, mode);
            if !st.violations().is_empty() {
                viol_keys.insert(key.clone());
            }
            out.keys.insert(key);
            continue;
        }
        for p in enabled.iter().rev() {
            let (next, ev) = machine.step(&st, p)?.expect("enabled");
            let mut e2 = events.clone();
            e2.push(ev);
            stack.push((next, e2));
        }
    }
    out.violations = viol_keys.len() as u64;
    Ok(out)
}
