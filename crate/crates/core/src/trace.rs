//! Happens-before, trace keys, races and happens-before prefixes.

use std::collections::HashMap;

use crate::event::{Access, ConflictMode, Event, ExecutionRecord, InstanceId};
use crate::relation::Relation;

/// Happens-before over an event sequence, backed by one vector clock per event.
///
/// The three generators are kept as explicit edge lists (indices into the
/// sequence): program order, conflict order and posted-by order.
#[derive(Clone, Debug)]
pub struct HbRelation {
    /// Dense index of each event's instance.
    inst: Vec<usize>,
    index: Vec<u32>,
    clocks: Vec<Vec<u32>>,
    /// Per instance, (index, position) of its events in sequence order.
    by_inst: Vec<Vec<(u32, usize)>>,
    pub instances: Vec<InstanceId>,
    pub po: Vec<(usize, usize)>,
    pub cnf: Vec<(usize, usize)>,
    pub pb: Vec<(usize, usize)>,
}

impl HbRelation {
    pub fn new(events: &[Event], mode: ConflictMode) -> Self {
        let mut ids: HashMap<&InstanceId, usize> = HashMap::new();
        let mut instances = Vec::new();
        let inst: Vec<usize> = events
            .iter()
            .map(|e| {
                *ids.entry(&e.instance).or_insert_with(|| {
                    instances.push(e.instance.clone());
                    instances.len() - 1
                })
            })
            .collect();
        let ni = instances.len();
        let mut clocks: Vec<Vec<u32>> = Vec::with_capacity(events.len());
        let (mut po, mut cnf, mut pb) = (Vec::new(), Vec::new(), Vec::new());
        let mut last_of: Vec<Option<usize>> = vec![None; ni];
        let mut poster: HashMap<&InstanceId, usize> = HashMap::new();
        for (j, e) in events.iter().enumerate() {
            let mut clock = vec![0u32; ni];
            let join = |c: &mut Vec<u32>, other: &Vec<u32>| {
                for (x, y) in c.iter_mut().zip(other) {
                    *x = (*x).max(*y);
                }
            };
            if let Some(k) = last_of[inst[j]] {
                po.push((k, j));
                clock.clone_from(&clocks[k]);
            }
            if e.access == Access::Begin {
                if let Some(&k) = poster.get(&e.instance) {
                    pb.push((k, j));
                    join(&mut clock, &clocks[k]);
                }
            }
            for i in 0..j {
                if events[i].conflicts(e, mode) {
                    cnf.push((i, j));
                    join(&mut clock, &clocks[i]);
                }
            }
            clock[inst[j]] = e.index;
            if let Access::Post { target, .. } = &e.access {
                poster.insert(target, j);
            }
            last_of[inst[j]] = Some(j);
            clocks.push(clock);
        }
        let mut by_inst = vec![Vec::new(); ni];
        for (j, e) in events.iter().enumerate() {
            by_inst[inst[j]].push((e.index, j));
        }
        HbRelation { inst, index: events.iter().map(|e| e.index).collect(), clocks, by_inst, instances, po, cnf, pb }
    }

    pub fn len(&self) -> usize {
        self.inst.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inst.is_empty()
    }

    /// `a` happens before `b` (positions in the sequence).
    pub fn hb(&self, a: usize, b: usize) -> bool {
        a != b && self.clocks[b][self.inst[a]] >= self.index[a]
    }

    pub fn clock(&self, e: usize) -> &[u32] {
        &self.clocks[e]
    }

    /// Closed relation matrix.
    pub fn relation(&self) -> Relation {
        let n = self.len();
        let mut r = Relation::new(n);
        for b in 0..n {
            for a in 0..b {
                if self.hb(a, b) {
                    r.insert(a, b);
                }
            }
        }
        r
    }

    /// Immediate predecessors of `b` (covering edges of the partial order).
    pub fn covers(&self, b: usize) -> Vec<usize> {
        // per instance, the latest event below b is the only possible cover
        let mut cands: Vec<usize> = Vec::new();
        for (q, &c) in self.clocks[b].iter().enumerate() {
            let bound = if q == self.inst[b] { self.index[b].saturating_sub(1) } else { c };
            if bound == 0 {
                continue;
            }
            let evs = &self.by_inst[q];
            let k = evs.partition_point(|&(idx, _)| idx <= bound);
            if k > 0 {
                cands.push(evs[k - 1].1);
            }
        }
        let mut out: Vec<usize> =
            cands.iter().copied().filter(|&a| !cands.iter().any(|&c| c != a && self.hb(a, c))).collect();
        out.sort_unstable();
        out
    }
}

/// Happens-before of an execution record.
pub fn compute_hb(rec: &ExecutionRecord) -> HbRelation {
    HbRelation::new(&rec.events, ConflictMode::Event)
}

/// Canonical key of a trace: events sorted by (instance, index) and the
/// covering edges of happens-before between them.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TraceKey {
    events: Vec<(InstanceId, u32, Access, bool)>,
    edges: Vec<(u32, u32)>,
}

impl TraceKey {
    pub fn of(events: &[Event], mode: ConflictMode) -> Self {
        let hb = HbRelation::new(events, mode);
        let mut order: Vec<usize> = (0..events.len()).collect();
        order.sort_by(|&a, &b| (&events[a].instance, events[a].index).cmp(&(&events[b].instance, events[b].index)));
        let mut rank = vec![0u32; events.len()];
        for (r, &e) in order.iter().enumerate() {
            rank[e] = r as u32;
        }
        let mut edges = Vec::new();
        for b in 0..events.len() {
            for a in hb.covers(b) {
                edges.push((rank[a], rank[b]));
            }
        }
        edges.sort_unstable();
        TraceKey {
            events: order
                .iter()
                .map(|&e| (events[e].instance.clone(), events[e].index, events[e].access.clone(), events[e].last))
                .collect(),
            edges,
        }
    }

    pub fn event_count(&self) -> usize {
        self.events.len()
    }
}

pub fn trace_key(rec: &ExecutionRecord) -> TraceKey {
    TraceKey::of(&rec.events, ConflictMode::Event)
}

/// Races of a sequence: hb-adjacent conflicting events of different instances.
pub fn races_of(events: &[Event], hb: &HbRelation, mode: ConflictMode) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for j in 0..events.len() {
        for i in 0..j {
            if events[i].instance == events[j].instance || !events[i].conflicts(&events[j], mode) {
                continue;
            }
            if (i + 1..j).any(|k| hb.hb(i, k) && hb.hb(k, j)) {
                continue;
            }
            out.push((i, j));
        }
    }
    out.sort_unstable();
    out
}

pub fn detect_races(rec: &ExecutionRecord) -> Vec<(Event, Event)> {
    let hb = compute_hb(rec);
    races_of(&rec.events, &hb, ConflictMode::Event)
        .into_iter()
        .map(|(i, j)| (rec.events[i].clone(), rec.events[j].clone()))
        .collect()
}

/// `sub ⊑ full` over raw event sequences.
pub fn is_hb_prefix_of(sub: &[Event], full: &[Event], mode: ConflictMode) -> bool {
    let pos: HashMap<(&InstanceId, u32), usize> =
        full.iter().enumerate().map(|(i, e)| ((&e.instance, e.index), i)).collect();
    let mut map = Vec::with_capacity(sub.len());
    for e in sub {
        match pos.get(&(&e.instance, e.index)) {
            Some(&i) if full[i].access == e.access => map.push(i),
            _ => return false,
        }
    }
    let hs = HbRelation::new(sub, mode);
    let hf = HbRelation::new(full, mode);
    for a in 0..sub.len() {
        for b in 0..sub.len() {
            if a != b && hs.hb(a, b) != hf.hb(map[a], map[b]) {
                return false;
            }
        }
    }
    let mut inside = vec![false; full.len()];
    for &i in &map {
        inside[i] = true;
    }
    map.iter().all(|&b| (0..full.len()).all(|a| inside[a] || !hf.hb(a, b)))
}

pub fn is_hb_prefix(sub: &ExecutionRecord, full: &ExecutionRecord) -> bool {
    is_hb_prefix_of(&sub.events, &full.events, ConflictMode::Event)
}
