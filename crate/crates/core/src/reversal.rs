//! Race reversal: maximal executions that perform the second event of a race
//! without the first.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use crate::event::{ConflictMode, Event, ExecutionRecord, HandlerId, InstanceId};
use crate::relation::{saturate, Grouping, Relation};
use crate::trace::{HbRelation, TraceKey};

/// A wakeup sequence to be inserted after `events[..prefix_len]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReversalCandidate {
    /// Length of the common prefix `E'` with the reversed execution.
    pub prefix_len: usize,
    /// `u.e'`, ending with the second event of the race.
    pub wakeup: Vec<Event>,
    /// Instances dropped by the removal rules.
    pub removed: Vec<InstanceId>,
    /// The as-appearing message order was cyclic and had to be repaired.
    pub repaired: bool,
}

/// Result of one reversal with counters.
#[derive(Clone, Debug, Default)]
pub struct Reversal {
    pub candidates: Vec<ReversalCandidate>,
    /// Alternatives created at choice points.
    pub branches: u64,
    /// Alternatives dropped because a required event was removed.
    pub abandoned: u64,
    pub repairs: u64,
    /// Alternatives with no acyclic message order.
    pub unordered: u64,
}

/// Positions of the events of `events` not happening after position `i` (excluding `i`).
pub fn not_after(events: &[Event], hb: &HbRelation, i: usize) -> Vec<usize> {
    (0..events.len()).filter(|&k| k != i && !hb.hb(i, k)).collect()
}

/// [`not_after`] on an execution record, returning events.
pub fn not_after_record(rec: &ExecutionRecord, e: usize) -> Vec<Event> {
    let hb = HbRelation::new(&rec.events, ConflictMode::Event);
    not_after(&rec.events, &hb, e).into_iter().map(|k| rec.events[k].clone()).collect()
}

/// [`reverse_race`] on an execution record under event conflicts.
pub fn reverse_race_record(rec: &ExecutionRecord, i: usize, j: usize) -> Reversal {
    let hb = HbRelation::new(&rec.events, ConflictMode::Event);
    reverse_race(&rec.events, &hb, i, j, ConflictMode::Event)
}

struct Ctx<'a> {
    events: &'a [Event],
    hbm: Relation,
    group: Vec<usize>,
    handler: Vec<Option<HandlerId>>,
    insts: Vec<InstanceId>,
    required: Vec<bool>,
    /// Handler that must hold no incomplete message (`e'` starts its message).
    clear: Option<HandlerId>,
}

#[derive(Clone)]
struct Alt {
    alive: Vec<bool>,
    removed: Vec<usize>,
}

impl Ctx<'_> {
    /// Removes the groups and everything happening after them; false if a
    /// required event goes.
    fn remove(&self, alt: &mut Alt, gs: &[usize]) -> bool {
        let dead: Vec<usize> = (0..self.events.len()).filter(|&x| alt.alive[x] && gs.contains(&self.group[x])).collect();
        for &x in &dead {
            alt.alive[x] = false;
        }
        for y in 0..self.events.len() {
            if alt.alive[y] && dead.iter().any(|&x| self.hbm.contains(x, y)) {
                alt.alive[y] = false;
            }
        }
        alt.removed.extend_from_slice(gs);
        (0..self.events.len()).all(|x| alt.alive[x] || !self.required[x])
    }

    /// Incomplete messages per handler, in order of first appearance.
    fn incomplete(&self, alive: &[bool]) -> BTreeMap<HandlerId, Vec<usize>> {
        let mut present = vec![false; self.insts.len()];
        let mut complete = vec![false; self.insts.len()];
        let mut order = Vec::new();
        for (x, e) in self.events.iter().enumerate() {
            if !alive[x] {
                continue;
            }
            let g = self.group[x];
            if !present[g] {
                present[g] = true;
                order.push(g);
            }
            complete[g] |= e.last;
        }
        let mut out: BTreeMap<HandlerId, Vec<usize>> = BTreeMap::new();
        for g in order {
            if let (Some(h), false) = (self.handler[g], complete[g]) {
                out.entry(h).or_default().push(g);
            }
        }
        out
    }
}

/// Reverses the race between positions `i < j` of `events`.
pub fn reverse_race(events: &[Event], hb: &HbRelation, i: usize, j: usize, mode: ConflictMode) -> Reversal {
    let n = events.len();
    let mut ids: HashMap<&InstanceId, usize> = HashMap::new();
    let mut insts = Vec::new();
    let mut handler = Vec::new();
    let group: Vec<usize> = events
        .iter()
        .map(|e| {
            *ids.entry(&e.instance).or_insert_with(|| {
                insts.push(e.instance.clone());
                handler.push(e.handler);
                insts.len() - 1
            })
        })
        .collect();
    let hbm = hb.relation();
    let ej = &events[j];
    let pred = (0..j).rev().find(|&x| events[x].instance == ej.instance);
    let mut required = vec![false; n];
    let anchor = match pred {
        Some(x) => Some(x),
        None => hb.pb.iter().find(|&&(_, b)| b == j).map(|&(a, _)| a),
    };
    if let Some(x) = anchor {
        required[x] = true;
        for a in 0..n {
            if hbm.contains(a, x) {
                required[a] = true;
            }
        }
    }
    let clear = if pred.is_none() { ej.handler } else { None };
    let ctx = Ctx { events, hbm, group, handler, insts, required, clear };

    let mut out = Reversal::default();
    let mut alive = vec![false; n];
    for k in not_after(events, hb, i) {
        alive[k] = true;
    }
    alive[j] = false;
    let mut queue: VecDeque<Alt> = VecDeque::from([Alt { alive, removed: Vec::new() }]);
    let mut seen: HashSet<Vec<bool>> = HashSet::new();
    let mut settled: Vec<(Alt, Vec<usize>, Relation)> = Vec::new();
    'alts: while let Some(mut alt) = queue.pop_front() {
        if !seen.insert(alt.alive.clone()) {
            continue;
        }
        loop {
            let inc = ctx.incomplete(&alt.alive);
            let mut drop = Vec::new();
            for (&h, ms) in &inc {
                if ctx.clear == Some(h) {
                    drop.extend_from_slice(ms);
                    continue;
                }
                let holding: Vec<usize> = ms
                    .iter()
                    .copied()
                    .filter(|&g| (0..n).any(|x| alt.alive[x] && ctx.group[x] == g && ctx.required[x]))
                    .collect();
                match holding.len() {
                    0 => {}
                    1 => drop.extend(ms.iter().copied().filter(|&g| g != holding[0])),
                    _ => {
                        out.abandoned += 1;
                        continue 'alts;
                    }
                }
            }
            if !drop.is_empty() {
                if !ctx.remove(&mut alt, &drop) {
                    out.abandoned += 1;
                    continue 'alts;
                }
                continue;
            }
            if let Some(ms) = inc.values().find(|ms| ms.len() > 1) {
                for &keep in ms {
                    let others: Vec<usize> = ms.iter().copied().filter(|&g| g != keep).collect();
                    let mut b = alt.clone();
                    out.branches += 1;
                    if ctx.remove(&mut b, &others) {
                        queue.push_back(b);
                    } else {
                        out.abandoned += 1;
                    }
                }
                continue 'alts;
            }
            for (&h, ms) in &inc {
                let p = ms[0];
                let start = (0..n).find(|&x| alt.alive[x] && ctx.group[x] == p).expect("present");
                let mut later: Vec<usize> = (start..n)
                    .filter(|&x| alt.alive[x] && ctx.group[x] != p && ctx.handler[ctx.group[x]] == Some(h))
                    .map(|x| ctx.group[x])
                    .collect();
                later.dedup();
                later.retain(|&g| !(0..n).any(|x| alt.alive[x] && ctx.group[x] == g && ctx.required[x]));
                if !later.is_empty() {
                    let mut b = alt.clone();
                    out.branches += 1;
                    if ctx.remove(&mut b, &later) {
                        queue.push_back(b);
                    } else {
                        out.abandoned += 1;
                    }
                }
            }
            let keep: Vec<usize> = (0..n).filter(|&x| alt.alive[x]).collect();
            let mut base = ctx.hbm.restrict(&keep);
            let mut first: HashMap<usize, usize> = HashMap::new();
            let mut last: HashMap<usize, usize> = HashMap::new();
            for (c, &x) in keep.iter().enumerate() {
                first.entry(ctx.group[x]).or_insert(c);
                last.insert(ctx.group[x], c);
            }
            for (&h, ms) in &inc {
                let p = ms[0];
                for (&q, &lq) in &last {
                    if q != p && ctx.handler[q] == Some(h) {
                        base.insert(lq, first[&p]);
                    }
                }
            }
            let grouping = Grouping {
                group: keep.iter().map(|&x| ctx.group[x]).collect(),
                handler: ctx.handler.clone(),
            };
            match saturate(&base, &grouping) {
                Ok(sc) => {
                    settled.push((alt, keep, sc));
                    continue 'alts;
                }
                Err(cyc) => {
                    let msgs: Vec<usize> = cyc.groups.into_iter().filter(|&g| ctx.handler[g].is_some()).collect();
                    if msgs.is_empty() {
                        out.abandoned += 1;
                    }
                    for g in msgs {
                        let mut b = alt.clone();
                        out.branches += 1;
                        if ctx.remove(&mut b, &[g]) {
                            queue.push_back(b);
                        } else {
                            out.abandoned += 1;
                        }
                    }
                    continue 'alts;
                }
            }
        }
    }

    let mut keys: HashSet<TraceKey> = HashSet::new();
    for (alt, keep, sc) in settled {
        let Some((rel, repaired)) = order_messages(&ctx, &keep, sc) else {
            out.unordered += 1;
            continue;
        };
        out.repairs += repaired as u64;
        let lin: Vec<usize> = rel.topo_sort_by(|c| keep[c]).expect("acyclic").into_iter().map(|c| keep[c]).collect();
        let k = lin.iter().enumerate().take_while(|&(t, &x)| t == x).count();
        let mut wakeup: Vec<Event> = lin[k..].iter().map(|&x| events[x].clone()).collect();
        wakeup.push(ej.clone());
        let mut full = events[..k].to_vec();
        full.extend_from_slice(&wakeup);
        if !keys.insert(TraceKey::of(&full, mode)) {
            continue;
        }
        let mut removed: Vec<InstanceId> = alt.removed.iter().map(|&g| ctx.insts[g].clone()).collect();
        removed.sort();
        removed.dedup();
        out.candidates.push(ReversalCandidate { prefix_len: k, wakeup, removed, repaired });
    }
    out
}

/// Total order of the messages of each handler extending `sc`, preferring
/// the order in which they appear; the flag reports a deviation from it.
fn order_messages(ctx: &Ctx, keep: &[usize], sc: Relation) -> Option<(Relation, bool)> {
    let mut by_handler: BTreeMap<HandlerId, Vec<usize>> = BTreeMap::new();
    let mut first: BTreeMap<usize, usize> = BTreeMap::new();
    let mut last: BTreeMap<usize, usize> = BTreeMap::new();
    let mut complete: BTreeMap<usize, bool> = BTreeMap::new();
    for (c, &x) in keep.iter().enumerate() {
        let g = ctx.group[x];
        if !first.contains_key(&g) {
            first.insert(g, c);
            if let Some(h) = ctx.handler[g] {
                by_handler.entry(h).or_default().push(g);
            }
        }
        last.insert(g, c);
        *complete.entry(g).or_default() |= ctx.events[x].last;
    }
    let handlers: Vec<Vec<usize>> = by_handler.into_values().collect();
    let mut r = sc.clone();
    for ms in &handlers {
        for (x, &a) in ms.iter().enumerate() {
            for &b in &ms[x + 1..] {
                if !r.contains(first[&a], first[&b]) && !r.contains(first[&b], first[&a]) {
                    r.insert(last[&a], first[&b]);
                }
            }
        }
    }
    let grouping = Grouping {
        group: keep.iter().map(|&x| ctx.group[x]).collect(),
        handler: ctx.handler.clone(),
    };
    if let Ok(r) = saturate(&r, &grouping) {
        return Some((r, false));
    }
    search(&handlers, 0, &mut Vec::new(), &first, &last, &complete, sc).map(|r| (r, true))
}

fn search(
    handlers: &[Vec<usize>],
    hi: usize,
    cur: &mut Vec<usize>,
    first: &BTreeMap<usize, usize>,
    last: &BTreeMap<usize, usize>,
    complete: &BTreeMap<usize, bool>,
    rel: Relation,
) -> Option<Relation> {
    let Some(msgs) = handlers.get(hi) else { return Some(rel) };
    if cur.len() == msgs.len() {
        return search(handlers, hi + 1, &mut Vec::new(), first, last, complete, rel);
    }
    for &m in msgs {
        if cur.contains(&m) || (!complete[&m] && cur.len() + 1 != msgs.len()) {
            continue;
        }
        let mut r = rel.clone();
        if let Some(&prev) = cur.last() {
            let (a, b) = (last[&prev], first[&m]);
            if r.contains(b, a) {
                continue;
            }
            if r.insert(a, b) {
                r.close();
            }
        }
        cur.push(m);
        let out = search(handlers, hi, cur, first, last, complete, r);
        cur.pop();
        if out.is_some() {
            return out;
        }
    }
    None
}
