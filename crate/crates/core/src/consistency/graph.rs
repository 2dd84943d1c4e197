//! Event-driven consistency of a happens-before graph given by its generators.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::GraphError;
use crate::event::{Access, ConflictMode, Event, HandlerId, InstanceId};
use crate::relation::Relation;
use crate::trace::HbRelation;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphEvent {
    pub instance: InstanceId,
    pub index: u32,
    pub access: Access,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub handler: Option<HandlerId>,
    #[serde(default)]
    pub last: bool,
}

impl From<&Event> for GraphEvent {
    fn from(e: &Event) -> Self {
        GraphEvent { instance: e.instance.clone(), index: e.index, access: e.access.clone(), handler: e.handler, last: e.last }
    }
}

impl From<&GraphEvent> for Event {
    fn from(e: &GraphEvent) -> Self {
        Event { instance: e.instance.clone(), index: e.index, access: e.access.clone(), handler: e.handler, last: e.last }
    }
}

/// Events plus program-order, conflict and posted-by edges (pairs of event indices).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyGraph {
    pub events: Vec<GraphEvent>,
    #[serde(default)]
    pub po: Vec<(usize, usize)>,
    #[serde(default)]
    pub cnf: Vec<(usize, usize)>,
    #[serde(default)]
    pub pb: Vec<(usize, usize)>,
}

impl ConsistencyGraph {
    /// The generators of the happens-before of an event sequence.
    pub fn from_events(events: &[Event], mode: ConflictMode) -> Self {
        let hb = HbRelation::new(events, mode);
        ConsistencyGraph {
            events: events.iter().map(GraphEvent::from).collect(),
            po: hb.po.clone(),
            cnf: hb.cnf.clone(),
            pb: hb.pb.clone(),
        }
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.po.iter().chain(&self.cnf).chain(&self.pb).copied()
    }

    /// Closed happens-before of the graph.
    pub fn hb(&self) -> Relation {
        Relation::from_pairs(self.events.len(), self.edges()).closure()
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        let n = self.events.len();
        let bad = |m: String| Err(GraphError::Malformed(m));
        for &(a, b) in self.edges().collect::<Vec<_>>().iter() {
            if a >= n || b >= n {
                return bad(format!("edge ({a}, {b}) out of range for {n} events"));
            }
            if a == b {
                return bad(format!("self edge on event {a}"));
            }
        }
        let mut by_inst: BTreeMap<&InstanceId, Vec<usize>> = BTreeMap::new();
        for (i, e) in self.events.iter().enumerate() {
            if e.index == 0 {
                return bad(format!("event {i} has index 0"));
            }
            by_inst.entry(&e.instance).or_default().push(i);
        }
        for &(a, b) in &self.po {
            if self.events[a].instance != self.events[b].instance {
                return bad(format!("po edge ({a}, {b}) crosses instances"));
            }
        }
        let po = Relation::from_pairs(n, self.po.iter().copied()).closure();
        for (inst, evs) in &by_inst {
            let mut evs = evs.clone();
            evs.sort_by_key(|&i| self.events[i].index);
            let e0 = &self.events[evs[0]];
            for w in evs.windows(2) {
                let (a, b) = (&self.events[w[0]], &self.events[w[1]]);
                if a.index == b.index {
                    return bad(format!("{inst} has two events with index {}", a.index));
                }
                if !po.contains(w[0], w[1]) || po.contains(w[1], w[0]) {
                    return bad(format!("po is not a total chain on {inst}"));
                }
            }
            if evs.iter().any(|&i| self.events[i].handler != e0.handler) {
                return bad(format!("{inst} has events on different handlers"));
            }
            if evs[..evs.len() - 1].iter().any(|&i| self.events[i].last) {
                return bad(format!("{inst} has events after its last event"));
            }
        }
        let mut posted: HashMap<usize, usize> = HashMap::new();
        for &(a, b) in &self.pb {
            if !matches!(self.events[a].access, Access::Post { .. }) || self.events[b].access != Access::Begin {
                return bad(format!("pb edge ({a}, {b}) is not post -> begin"));
            }
            if posted.insert(b, a).is_some() {
                return bad(format!("event {b} is posted twice"));
            }
        }
        Ok(())
    }
}

/// Per-message view used by both checkers.
struct Messages {
    group: Vec<usize>,
    handler: Vec<Option<HandlerId>>,
    complete: Vec<bool>,
    first: Vec<usize>,
    last: Vec<usize>,
    /// Messages per handler, sorted by instance id.
    by_handler: BTreeMap<HandlerId, Vec<usize>>,
}

impl Messages {
    fn new(g: &ConsistencyGraph) -> Self {
        let mut ids: BTreeMap<&InstanceId, usize> = BTreeMap::new();
        for e in &g.events {
            let k = ids.len();
            ids.entry(&e.instance).or_insert(k);
        }
        // renumber in id order
        for (k, v) in ids.values_mut().enumerate() {
            *v = k;
        }
        let ng = ids.len();
        let group: Vec<usize> = g.events.iter().map(|e| ids[&e.instance]).collect();
        let mut handler = vec![None; ng];
        let mut complete = vec![false; ng];
        let mut first = vec![usize::MAX; ng];
        let mut last = vec![usize::MAX; ng];
        let mut lo = vec![u32::MAX; ng];
        let mut hi = vec![0u32; ng];
        for (i, e) in g.events.iter().enumerate() {
            let m = group[i];
            handler[m] = e.handler;
            complete[m] |= e.last;
            if e.index < lo[m] {
                lo[m] = e.index;
                first[m] = i;
            }
            if e.index >= hi[m] {
                hi[m] = e.index;
                last[m] = i;
            }
        }
        let mut by_handler: BTreeMap<HandlerId, Vec<usize>> = BTreeMap::new();
        for (m, h) in handler.iter().enumerate() {
            if let Some(h) = h {
                by_handler.entry(*h).or_default().push(m);
            }
        }
        Messages { group, handler, complete, first, last, by_handler }
    }
}

/// Finds an execution-shaped linearization of the graph by backtracking over
/// per-handler message orders; `None` if the graph is inconsistent.
pub fn check_consistency(g: &ConsistencyGraph) -> Result<Option<Vec<Event>>, GraphError> {
    g.validate()?;
    let ms = Messages::new(g);
    let base = g.hb();
    if !base.cyclic_elements().is_empty() {
        return Ok(None);
    }
    let handlers: Vec<&Vec<usize>> = ms.by_handler.values().collect();
    for msgs in &handlers {
        if msgs.iter().filter(|&&m| !ms.complete[m]).count() > 1 {
            return Ok(None);
        }
    }
    let found = search(&ms, &handlers, 0, &mut Vec::new(), &mut vec![false; ms.complete.len()], &base);
    Ok(found.map(|r| {
        let order = r.topo_sort().expect("acyclic");
        order.into_iter().map(|i| Event::from(&g.events[i])).collect()
    }))
}

/// Builds the order of `handlers[hi]` message by message, pruning on cycles.
fn search(
    ms: &Messages,
    handlers: &[&Vec<usize>],
    hi: usize,
    cur: &mut Vec<usize>,
    used: &mut Vec<bool>,
    rel: &Relation,
) -> Option<Relation> {
    let Some(msgs) = handlers.get(hi) else { return Some(rel.clone()) };
    if cur.len() == msgs.len() {
        return search(ms, handlers, hi + 1, &mut Vec::new(), used, rel);
    }
    for &m in msgs.iter() {
        if used[m] {
            continue;
        }
        // an incomplete message can only be last
        if !ms.complete[m] && cur.len() + 1 != msgs.len() {
            continue;
        }
        let mut r = rel.clone();
        if let Some(&prev) = cur.last() {
            let (a, b) = (ms.last[prev], ms.first[m]);
            if r.contains(b, a) {
                continue;
            }
            if !r.contains(a, b) {
                r.insert(a, b);
                r.close();
            }
        }
        used[m] = true;
        cur.push(m);
        let out = search(ms, handlers, hi, cur, used, &r);
        cur.pop();
        used[m] = false;
        if out.is_some() {
            return out;
        }
    }
    None
}

/// Reference checker: enumerates event linearizations that respect every
/// edge and never interleave two messages of one handler.
pub fn check_consistency_brute(g: &ConsistencyGraph) -> Result<Option<Vec<Event>>, GraphError> {
    g.validate()?;
    let ms = Messages::new(g);
    let n = g.events.len();
    let mut preds = vec![Vec::new(); n];
    for (a, b) in g.edges() {
        preds[b].push(a);
    }
    let mut placed = vec![false; n];
    let mut seen = vec![0u32; ms.complete.len()];
    let mut count = vec![0u32; ms.complete.len()];
    for &m in &ms.group {
        count[m] += 1;
    }
    let mut out = Vec::with_capacity(n);
    fn dfs(
        ms: &Messages,
        preds: &[Vec<usize>],
        placed: &mut [bool],
        seen: &mut [u32],
        count: &[u32],
        out: &mut Vec<usize>,
    ) -> bool {
        let n = placed.len();
        if out.len() == n {
            return true;
        }
        for e in 0..n {
            if placed[e] || preds[e].iter().any(|&a| !placed[a]) {
                continue;
            }
            let m = ms.group[e];
            if let Some(h) = ms.handler[m] {
                let open = ms.by_handler[&h]
                    .iter()
                    .any(|&o| o != m && seen[o] > 0 && !(seen[o] == count[o] && ms.complete[o]));
                if open {
                    continue;
                }
            }
            placed[e] = true;
            seen[m] += 1;
            out.push(e);
            if dfs(ms, preds, placed, seen, count, out) {
                return true;
            }
            out.pop();
            seen[m] -= 1;
            placed[e] = false;
        }
        false
    }
    let ok = dfs(&ms, &preds, &mut placed, &mut seen, &count, &mut out);
    Ok(ok.then(|| out.into_iter().map(|i| Event::from(&g.events[i])).collect()))
}
