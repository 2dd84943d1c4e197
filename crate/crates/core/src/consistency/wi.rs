//! Membership `p ∈ WI_E(w)`: inspection, the cheap check chain and the exact fallback.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use crate::event::{Access, ConflictMode, Event, HandlerId, InstanceId};
use crate::program::{MachineState, Status};
use crate::relation::{saturate, Grouping, Relation};
use crate::trace::HbRelation;

/// Global accesses of one complete run of an instance.
pub type Summary = Vec<Access>;

/// Complete access sequences observed per instance.
pub type Observed = BTreeMap<InstanceId, BTreeSet<Summary>>;

/// Most summary combinations a single query will try.
const MAX_COMBOS: usize = 64;

/// What is known about `p` after the prefix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NextInfo {
    /// `p` has started; its next event.
    Scheduled(Event),
    /// `p` has not started; candidate complete access sequences.
    Starting(Vec<Summary>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Wi {
    /// Member, with a continuation `p.w'` valid after the prefix whose
    /// happens-before contains `w` as a prefix.
    Yes(Vec<Event>),
    No,
    /// Not decidable from the available summaries.
    Unknown,
}

impl Wi {
    pub fn is_yes(&self) -> bool {
        matches!(self, Wi::Yes(_))
    }
}

/// How often each stage settled a query.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct WiStats {
    pub calls: u64,
    pub inspection: u64,
    pub simple: u64,
    pub hb_negative: u64,
    pub witness_positive: u64,
    pub witness_negative: u64,
    /// Decision-procedure invocations.
    pub decide: u64,
    pub unknown: u64,
}

impl WiStats {
    pub fn add(&mut self, o: &WiStats) {
        self.calls += o.calls;
        self.inspection += o.inspection;
        self.simple += o.simple;
        self.hb_negative += o.hb_negative;
        self.witness_positive += o.witness_positive;
        self.witness_negative += o.witness_negative;
        self.decide += o.decide;
        self.unknown += o.unknown;
    }
}

/// A membership query: is `p` a weak initial of `w` after the prefix whose
/// final state is `state`?
#[derive(Clone, Copy)]
pub struct WiQuery<'a> {
    pub state: &'a MachineState,
    pub w: &'a [Event],
    pub p: &'a InstanceId,
    pub next: &'a NextInfo,
    /// Summaries used to complete other messages.
    pub observed: &'a Observed,
    pub mode: ConflictMode,
}

/// Runs the check chain.
pub fn wi_member(q: &WiQuery, stats: &mut WiStats) -> Wi {
    stats.calls += 1;
    let (begin, h, sums) = match prepare(q) {
        Prep::Done(r) => {
            stats.inspection += 1;
            return r;
        }
        Prep::Starting { begin, handler, sums } => (begin, handler, sums),
    };
    if let Some(wit) = first_on_handler(q.w, &begin, h) {
        stats.simple += 1;
        return Wi::Yes(wit);
    }
    let setup = Setup::new(q, sums);
    let Some(combos) = setup.combos().filter(|c| !c.is_empty()) else {
        stats.unknown += 1;
        return Wi::Unknown;
    };
    let mut out: Vec<Outcome> = Vec::with_capacity(combos.len());
    let mut stages = Vec::new();
    for combo in &combos {
        let (o, st) = setup.chain(combo);
        if st == Stage::Decide {
            stats.decide += 1;
        }
        out.push(o);
        stages.push(st);
    }
    let r = combine(out);
    match (&r, stages.iter().all(|s| *s == stages[0]).then_some(stages[0])) {
        (Wi::No, Some(Stage::Hb)) => stats.hb_negative += 1,
        (Wi::No, Some(Stage::Witness)) => stats.witness_negative += 1,
        (Wi::Yes(_), Some(Stage::Witness)) => stats.witness_positive += 1,
        (Wi::Unknown, _) => stats.unknown += 1,
        _ => {}
    }
    r
}

/// Exact answer by search over per-handler message orders, using the same
/// summaries as [`wi_member`].
pub fn wi_decide(q: &WiQuery) -> Wi {
    let (begin, h, sums) = match prepare(q) {
        Prep::Done(r) => return r,
        Prep::Starting { begin, handler, sums } => (begin, handler, sums),
    };
    if let Some(wit) = first_on_handler(q.w, &begin, h) {
        return Wi::Yes(wit);
    }
    let setup = Setup::new(q, sums);
    let Some(combos) = setup.combos() else { return Wi::Unknown };
    combine(combos.iter().map(|c| setup.decide(c)).collect())
}

/// Outcome of every stage run independently on a query with exactly one
/// summary combination; `None` when a stage is inconclusive.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageReport {
    pub simple: bool,
    /// `Some(true)` when the happens-before check is negative.
    pub hb_negative: Option<bool>,
    pub witness: Option<bool>,
    pub decide: Option<bool>,
}

/// Runs each stage for a starting `p`; `None` if `p` is not starting or the
/// summaries do not determine a single combination.
pub fn stage_report(q: &WiQuery) -> Option<StageReport> {
    let Prep::Starting { begin, handler, sums } = prepare(q) else { return None };
    let simple = first_on_handler(q.w, &begin, handler).is_some();
    let setup = Setup::new(q, sums);
    let combos = setup.combos()?;
    if combos.len() != 1 {
        return None;
    }
    let combo = &combos[0];
    let to_opt = |o: Outcome| match o {
        Outcome::Yes(_) => Some(true),
        Outcome::No => Some(false),
        Outcome::Unknown => None,
    };
    let (hb_negative, witness) = match setup.hb_stage(combo) {
        HbStage::Negative => (Some(true), None),
        HbStage::Inconclusive => (None, None),
        HbStage::Pass { graph, sc, ext } => (Some(false), to_opt(setup.witness_stage(&graph, sc, &ext))),
    };
    let decide = to_opt(setup.decide(combo));
    Some(StageReport { simple, hb_negative, witness, decide })
}

/// Events completing an instance whose next event has index `next_index`,
/// given its global accesses so far and a full summary.
pub fn extension_events(
    inst: &InstanceId,
    handler: Option<HandlerId>,
    next_index: u32,
    done: &[Access],
    summary: &[Access],
) -> Vec<Event> {
    let mut out = Vec::new();
    let mut index = next_index;
    let mk = |index, access, last| Event { instance: inst.clone(), index, access, handler, last };
    if index == 1 {
        out.push(mk(1, Access::Begin, false));
        index = 2;
    }
    let rest = &summary[done.len().min(summary.len())..];
    if rest.is_empty() {
        out.push(mk(index, Access::Local, true));
    } else {
        for (i, a) in rest.iter().enumerate() {
            out.push(mk(index + i as u32, a.clone(), i + 1 == rest.len()));
        }
    }
    out
}

enum Prep<'a> {
    Done(Wi),
    Starting { begin: Event, handler: HandlerId, sums: &'a [Summary] },
}

fn prepare<'a>(q: &WiQuery<'a>) -> Prep<'a> {
    let sums = match q.next {
        NextInfo::Scheduled(ev) => return Prep::Done(inspection(q.w, ev, q.mode)),
        NextInfo::Starting(s) => s,
    };
    let Some(view) = q.state.view(q.p) else { return Prep::Done(Wi::No) };
    if view.status != Status::NotStarted {
        return Prep::Done(Wi::No);
    }
    let begin = Event { instance: q.p.clone(), index: 1, access: Access::Begin, handler: view.handler, last: false };
    let Some(h) = view.handler else { return Prep::Done(inspection(q.w, &begin, q.mode)) };
    if q.state.running_on(h).is_some() {
        return Prep::Done(Wi::No);
    }
    Prep::Starting { begin, handler: h, sums }
}

fn move_first(w: &[Event], pos: Option<usize>, ev: &Event) -> Vec<Event> {
    let mut out = Vec::with_capacity(w.len() + 1);
    out.push(ev.clone());
    match pos {
        Some(i) => {
            out.extend_from_slice(&w[..i]);
            out.extend_from_slice(&w[i + 1..]);
        }
        None => out.extend_from_slice(w),
    }
    out
}

/// Membership of an instance whose next event `ev` is known.
fn inspection(w: &[Event], ev: &Event, mode: ConflictMode) -> Wi {
    match w.iter().position(|e| e.instance == ev.instance) {
        Some(i) => {
            let hb = HbRelation::new(w, mode);
            if (0..i).any(|j| hb.hb(j, i)) {
                Wi::No
            } else {
                Wi::Yes(move_first(w, Some(i), ev))
            }
        }
        None => {
            if w.iter().any(|e| e.conflicts(ev, mode)) {
                Wi::No
            } else {
                Wi::Yes(move_first(w, None, ev))
            }
        }
    }
}

/// Witness when `begin`'s message is the first message, if any, on its handler in `w`.
pub fn first_on_handler(w: &[Event], begin: &Event, h: HandlerId) -> Option<Vec<Event>> {
    let pos = w.iter().position(|e| e.instance == begin.instance);
    let end = pos.unwrap_or(w.len());
    if w[..end].iter().any(|e| e.handler == Some(h) && e.instance != begin.instance) {
        return None;
    }
    Some(move_first(w, pos, begin))
}

fn combine(out: Vec<Outcome>) -> Wi {
    if !out.is_empty() && out.iter().all(|o| matches!(o, Outcome::No)) {
        return Wi::No;
    }
    if !out.is_empty() && out.iter().all(|o| matches!(o, Outcome::Yes(_))) {
        if let Some(Outcome::Yes(w)) = out.into_iter().next() {
            return Wi::Yes(w);
        }
    }
    Wi::Unknown
}

#[derive(Clone, Debug)]
enum Outcome {
    Yes(Vec<Event>),
    No,
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Stage {
    Hb,
    Witness,
    Decide,
}

enum HbStage {
    Negative,
    Inconclusive,
    Pass { graph: Graph, sc: Relation, ext: Vec<bool> },
}

/// Choice of summary per group (index into `Group::cands`).
type Combo = Vec<Option<usize>>;

#[derive(Debug)]
struct Group {
    inst: InstanceId,
    handler: Option<HandlerId>,
    /// Positions in `w`.
    nodes: Vec<usize>,
    /// Started in the prefix and still running after it.
    started_before: bool,
    /// Finished within the prefix extended by `w`.
    complete: bool,
    next_index: u32,
    done: Vec<Access>,
    cands: Vec<Summary>,
}

struct Setup<'a> {
    w: &'a [Event],
    mode: ConflictMode,
    groups: Vec<Group>,
    group_of: Vec<usize>,
    p: usize,
    hb: Relation,
}

/// Nodes are the events of `w` followed by extension events.
#[derive(Clone)]
struct Graph {
    events: Vec<Event>,
    group: Vec<usize>,
    /// Closed.
    rel: Relation,
    first: Vec<Option<usize>>,
    last: Vec<Option<usize>>,
}

impl Graph {
    fn nodes(&self, g: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.events.len()).filter(move |&i| self.group[i] == g)
    }
}

impl<'a> Setup<'a> {
    fn new(q: &WiQuery<'a>, sums: &'a [Summary]) -> Self {
        let mut groups: Vec<Group> = Vec::new();
        let mut idx: HashMap<&InstanceId, usize> = HashMap::new();
        let mut group_of = Vec::with_capacity(q.w.len());
        let new_group = |inst: &'a InstanceId, handler: Option<HandlerId>, groups: &mut Vec<Group>| {
            let view = q.state.view(inst);
            groups.push(Group {
                inst: inst.clone(),
                handler: view.map_or(handler, |v| v.handler),
                nodes: Vec::new(),
                started_before: view.is_some_and(|v| v.status == Status::Running),
                complete: view.is_some_and(|v| v.status == Status::Finished),
                next_index: view.map_or(1, |v| v.steps + 1),
                done: view.map(|v| v.accesses.to_vec()).unwrap_or_default(),
                cands: Vec::new(),
            });
            groups.len() - 1
        };
        for (i, e) in q.w.iter().enumerate() {
            let g = match idx.get(&e.instance) {
                Some(&g) => g,
                None => {
                    let g = new_group(&e.instance, e.handler, &mut groups);
                    idx.insert(&e.instance, g);
                    g
                }
            };
            let gr = &mut groups[g];
            gr.nodes.push(i);
            gr.complete |= e.last;
            gr.next_index = e.index + 1;
            if e.access.is_global() {
                gr.done.push(e.access.clone());
            }
            group_of.push(g);
        }
        let p = match idx.get(q.p) {
            Some(&g) => g,
            None => new_group(q.p, None, &mut groups),
        };
        for (g, gr) in groups.iter_mut().enumerate() {
            if gr.complete {
                continue;
            }
            let source: Vec<&Summary> = if g == p {
                sums.iter().collect()
            } else {
                q.observed.get(&gr.inst).map(|s| s.iter().collect()).unwrap_or_default()
            };
            let done = &gr.done;
            gr.cands = source
                .into_iter()
                .filter(|s| s.starts_with(done) && (s.len() > done.len() || done.is_empty()))
                .cloned()
                .collect();
            gr.cands.dedup();
        }
        let hb = HbRelation::new(q.w, q.mode).relation();
        Setup { w: q.w, mode: q.mode, groups, group_of, p, hb }
    }

    fn handler_p(&self) -> Option<HandlerId> {
        self.groups[self.p].handler
    }

    /// All summary combinations; `None` when there are too many, empty when
    /// `p` itself has no usable summary.
    fn combos(&self) -> Option<Vec<Combo>> {
        let mut combos: Vec<Combo> = vec![vec![None; self.groups.len()]];
        for (g, gr) in self.groups.iter().enumerate() {
            if gr.complete {
                continue;
            }
            if gr.cands.is_empty() {
                if g == self.p {
                    return Some(Vec::new());
                }
                continue;
            }
            let mut next = Vec::new();
            for c in &combos {
                for k in 0..gr.cands.len() {
                    let mut c2 = c.clone();
                    c2[g] = Some(k);
                    next.push(c2);
                }
            }
            if next.len() > MAX_COMBOS {
                return None;
            }
            combos = next;
        }
        Some(combos)
    }

    fn grouping(&self, g: &Graph) -> Grouping {
        Grouping { group: g.group.clone(), handler: self.groups.iter().map(|x| x.handler).collect() }
    }

    /// Graph over `w` plus the completions of the groups in `ext`.
    fn graph(&self, ext: &[bool], combo: &Combo) -> Option<Graph> {
        let nw = self.w.len();
        let mut events = self.w.to_vec();
        let mut group = self.group_of.clone();
        for (g, gr) in self.groups.iter().enumerate() {
            if !ext[g] || gr.complete {
                continue;
            }
            let s = &gr.cands[combo[g]?];
            for e in extension_events(&gr.inst, gr.handler, gr.next_index, &gr.done, s) {
                events.push(e);
                group.push(g);
            }
        }
        let n = events.len();
        let mut rel = Relation::new(n);
        for (a, b) in self.hb.pairs() {
            rel.insert(a, b);
        }
        let mut prev: Vec<Option<usize>> = self.groups.iter().map(|gr| gr.nodes.last().copied()).collect();
        for x in nw..n {
            let g = group[x];
            if let Some(a) = prev[g] {
                rel.insert(a, x);
            }
            prev[g] = Some(x);
            for y in 0..nw {
                if events[y].conflicts(&events[x], self.mode) {
                    rel.insert(y, x);
                }
            }
        }
        rel.close();
        let ng = self.groups.len();
        let mut first = vec![None; ng];
        let mut last = vec![None; ng];
        for (i, &g) in group.iter().enumerate() {
            first[g].get_or_insert(i);
            last[g] = Some(i);
        }
        Some(Graph { events, group, rel, first, last })
    }

    /// Messages still running after the prefix precede everything else on their handler.
    fn add_started_first(&self, g: &Graph, r: &mut Relation) {
        for (s, gr) in self.groups.iter().enumerate() {
            let Some(h) = gr.handler else { continue };
            if !gr.started_before {
                continue;
            }
            for a in g.nodes(s) {
                for b in 0..g.events.len() {
                    let t = g.group[b];
                    if t != s && self.groups[t].handler == Some(h) {
                        r.insert(a, b);
                    }
                }
            }
        }
    }

    fn hb_stage(&self, combo: &Combo) -> HbStage {
        let mut ext = vec![false; self.groups.len()];
        ext[self.p] = true;
        let graph = loop {
            let Some(g) = self.graph(&ext, combo) else { return HbStage::Inconclusive };
            let mut grew = false;
            for q in 0..self.groups.len() {
                let gq = &self.groups[q];
                if ext[q] || gq.complete || gq.handler.is_none() || gq.handler == self.handler_p() {
                    continue;
                }
                let depends =
                    g.nodes(q).any(|a| (0..g.events.len()).any(|b| ext[g.group[b]] && g.rel.contains(a, b)));
                if depends {
                    ext[q] = true;
                    grew = true;
                }
            }
            if !grew {
                break g;
            }
        };
        let mut base = graph.rel.clone();
        self.add_started_first(&graph, &mut base);
        let Ok(sc) = saturate(&base, &self.grouping(&graph)) else { return HbStage::Negative };
        let pf = graph.first[self.p].expect("p has events");
        let h = self.handler_p();
        for (t, gt) in self.groups.iter().enumerate() {
            if t == self.p || gt.handler != h || graph.first[t].is_none_or(|f| f > pf) {
                continue;
            }
            if graph.nodes(t).any(|a| graph.nodes(self.p).any(|b| sc.contains(a, b))) {
                return HbStage::Negative;
            }
        }
        HbStage::Pass { graph, sc, ext }
    }

    fn witness_stage(&self, graph: &Graph, sc: Relation, ext: &[bool]) -> Outcome {
        let h = self.handler_p();
        let grouping = self.grouping(graph);
        let mut r = sc;
        let pn: Vec<usize> = graph.nodes(self.p).collect();
        for x in 0..graph.events.len() {
            let t = graph.group[x];
            if t != self.p && self.groups[t].handler == h {
                for &b in &pn {
                    r.insert(b, x);
                }
            }
        }
        let Ok(mut r) = saturate(&r, &grouping) else { return Outcome::No };
        let mut by_handler: BTreeMap<HandlerId, Vec<usize>> = BTreeMap::new();
        for (g, gr) in self.groups.iter().enumerate() {
            if let (Some(hh), Some(_)) = (gr.handler, graph.first[g]) {
                by_handler.entry(hh).or_default().push(g);
            }
        }
        for gs in by_handler.values_mut() {
            gs.sort_by_key(|&g| graph.first[g]);
            for i in 0..gs.len() {
                for j in i + 1..gs.len() {
                    let (a, b) = (gs[i], gs[j]);
                    let (fa, fb) = (graph.first[a].unwrap(), graph.first[b].unwrap());
                    if !r.contains(fa, fb) && !r.contains(fb, fa) {
                        r.insert(graph.last[a].unwrap(), fb);
                    }
                }
            }
        }
        let Ok(r) = saturate(&r, &grouping) else { return Outcome::Unknown };
        for gs in by_handler.values() {
            for &t in gs {
                if self.groups[t].complete || ext[t] {
                    continue;
                }
                let ft = graph.first[t].unwrap();
                if gs.iter().any(|&u| u != t && !r.contains(graph.first[u].unwrap(), ft)) {
                    return Outcome::Unknown;
                }
            }
        }
        Outcome::Yes(self.linearize(graph, &r))
    }

    fn linearize(&self, graph: &Graph, r: &Relation) -> Vec<Event> {
        let pf = graph.first[self.p].expect("p has events");
        let order = r
            .topo_sort_by(|i| if i == pf { 0 } else { i + 1 })
            .expect("acyclic witness relation");
        order.into_iter().map(|i| graph.events[i].clone()).collect()
    }

    fn chain(&self, combo: &Combo) -> (Outcome, Stage) {
        match self.hb_stage(combo) {
            HbStage::Negative => (Outcome::No, Stage::Hb),
            HbStage::Inconclusive => (self.decide(combo), Stage::Decide),
            HbStage::Pass { graph, sc, ext } => match self.witness_stage(&graph, sc, &ext) {
                Outcome::Unknown => (self.decide(combo), Stage::Decide),
                o => (o, Stage::Witness),
            },
        }
    }

    /// Exhaustive search over per-handler message orders with `p` first on its handler.
    fn decide(&self, combo: &Combo) -> Outcome {
        let mut by_handler: BTreeMap<HandlerId, Vec<usize>> = BTreeMap::new();
        for (g, gr) in self.groups.iter().enumerate() {
            if let Some(h) = gr.handler {
                by_handler.entry(h).or_default().push(g);
            }
        }
        let mut per_handler: Vec<Vec<Vec<usize>>> = Vec::new();
        for gs in by_handler.values_mut() {
            gs.sort_by(|&a, &b| self.groups[a].inst.cmp(&self.groups[b].inst));
            let lead = gs.iter().copied().find(|&g| g == self.p || self.groups[g].started_before);
            let rest: Vec<usize> = gs.iter().copied().filter(|&g| Some(g) != lead).collect();
            let mut orders = Vec::new();
            permutations(&rest, &mut |perm| {
                let mut o = Vec::with_capacity(gs.len());
                o.extend(lead);
                o.extend_from_slice(perm);
                orders.push(o);
            });
            per_handler.push(orders);
        }
        let mut cache: HashMap<Vec<bool>, Option<Graph>> = HashMap::new();
        let mut unknown = false;
        let mut choice = vec![0usize; per_handler.len()];
        loop {
            let orders: Vec<&Vec<usize>> = choice.iter().zip(&per_handler).map(|(&c, os)| &os[c]).collect();
            let mut ext = vec![false; self.groups.len()];
            ext[self.p] = true;
            for o in &orders {
                for &g in &o[..o.len().saturating_sub(1)] {
                    ext[g] = true;
                }
            }
            let graph = cache.entry(ext.clone()).or_insert_with(|| self.graph(&ext, combo));
            match graph {
                None => unknown = true,
                Some(graph) => {
                    let mut r = graph.rel.clone();
                    for o in &orders {
                        for pair in o.windows(2) {
                            if let (Some(a), Some(b)) = (graph.last[pair[0]], graph.first[pair[1]]) {
                                r.insert(a, b);
                            }
                        }
                    }
                    r.close();
                    if r.cyclic_elements().is_empty() {
                        return Outcome::Yes(self.linearize(graph, &r));
                    }
                }
            }
            // next combination of orders
            let mut k = 0;
            loop {
                if k == choice.len() {
                    return if unknown { Outcome::Unknown } else { Outcome::No };
                }
                choice[k] += 1;
                if choice[k] < per_handler[k].len() {
                    break;
                }
                choice[k] = 0;
                k += 1;
            }
        }
    }
}

/// Calls `f` on every permutation of `items` in lexicographic order of positions.
fn permutations(items: &[usize], f: &mut impl FnMut(&[usize])) {
    fn go(cur: &mut Vec<usize>, used: &mut [bool], items: &[usize], f: &mut impl FnMut(&[usize])) {
        if cur.len() == items.len() {
            f(cur);
            return;
        }
        for i in 0..items.len() {
            if !used[i] {
                used[i] = true;
                cur.push(items[i]);
                go(cur, used, items, f);
                cur.pop();
                used[i] = false;
            }
        }
    }
    go(&mut Vec::with_capacity(items.len()), &mut vec![false; items.len()], items, f);
}
