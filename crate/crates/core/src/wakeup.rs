//! Ordered wakeup trees, insertion of wakeup sequences and parking.

use std::fmt::Write;

use crate::consistency::{first_on_handler, wi_member, NextInfo, Observed, Summary, Wi, WiQuery, WiStats};
use crate::event::{ConflictMode, Event, InstanceId};
use crate::program::{Machine, MachineState};

/// A node `u.p`; children are kept in insertion order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Node {
    pub event: Event,
    pub children: Vec<Node>,
    /// Sequences waiting for `p`'s accesses to become known.
    pub parked: Vec<Parked>,
}

/// A sequence parked during insertion into the tree at depth `root`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Parked {
    pub root: usize,
    pub seq: Vec<Event>,
}

impl Node {
    fn chain(seq: &[Event]) -> Option<Node> {
        let (first, rest) = seq.split_first()?;
        Some(Node { event: first.clone(), children: Node::chain(rest).into_iter().collect(), parked: Vec::new() })
    }

    fn parked_total(&self) -> usize {
        self.parked.len() + self.children.iter().map(Node::parked_total).sum::<usize>()
    }
}

/// The pending part of a wakeup tree: children of the root.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WakeupTree {
    pub children: Vec<Node>,
}

/// Where an insertion ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Insertion {
    /// Added as a new branch.
    Inserted,
    /// An existing branch already covers the sequence.
    Covered,
    /// Parked at a node whose message has not finished yet.
    Parked,
}

/// What insertion needs besides the tree.
pub struct InsertCtx<'a> {
    pub machine: &'a Machine,
    pub observed: &'a Observed,
    pub mode: ConflictMode,
}

impl WakeupTree {
    pub fn is_empty(&self) -> bool {
        self.children.is_empty()
    }

    /// The first child of the root.
    pub fn min_branch(&self) -> Option<&InstanceId> {
        self.children.first().map(|n| &n.event.instance)
    }

    /// Removes and returns the first child of the root.
    pub fn take_min(&mut self) -> Option<Node> {
        (!self.children.is_empty()).then(|| self.children.remove(0))
    }

    /// The subtree below child `p`, re-rooted.
    pub fn subtree_after(&self, p: &InstanceId) -> Option<WakeupTree> {
        self.children.iter().find(|n| &n.event.instance == p).map(|n| WakeupTree { children: n.children.clone() })
    }

    pub fn remove_branch(&mut self, p: &InstanceId) {
        self.children.retain(|n| &n.event.instance != p);
    }

    /// Root-to-leaf event sequences in order.
    pub fn leaves(&self) -> Vec<Vec<Event>> {
        fn go(n: &Node, cur: &mut Vec<Event>, out: &mut Vec<Vec<Event>>) {
            cur.push(n.event.clone());
            if n.children.is_empty() {
                out.push(cur.clone());
            }
            for c in &n.children {
                go(c, cur, out);
            }
            cur.pop();
        }
        let mut out = Vec::new();
        for c in &self.children {
            go(c, &mut Vec::new(), &mut out);
        }
        out
    }

    pub fn parked_total(&self) -> usize {
        self.children.iter().map(Node::parked_total).sum()
    }

    /// Indented rendering, one node per line.
    pub fn dump(&self) -> String {
        fn go(n: &Node, depth: usize, out: &mut String) {
            let _ = write!(out, "{:indent$}{}", "", n.event, indent = depth * 2);
            if !n.parked.is_empty() {
                let _ = write!(out, "  [parked {}]", n.parked.len());
            }
            out.push('\n');
            for c in &n.children {
                go(c, depth + 1, out);
            }
        }
        let mut out = String::new();
        for c in &self.children {
            go(c, 0, &mut out);
        }
        out
    }

    /// Inserts `v`, valid after `state`, below the root; `root` is the depth
    /// of this tree in the exploration.
    pub fn insert(&mut self, ctx: &InsertCtx, state: &MachineState, root: usize, v: Vec<Event>, stats: &mut WiStats) -> Insertion {
        insert_into(&mut self.children, ctx, state, root, v, stats)
    }
}

/// Global accesses of `p` in `w`.
pub fn summary_in(w: &[Event], p: &InstanceId) -> Summary {
    w.iter().filter(|e| &e.instance == p && e.access.is_global()).map(|e| e.access.clone()).collect()
}

fn insert_into(
    children: &mut Vec<Node>,
    ctx: &InsertCtx,
    state: &MachineState,
    root: usize,
    v: Vec<Event>,
    stats: &mut WiStats,
) -> Insertion {
    if v.is_empty() {
        return Insertion::Covered;
    }
    for idx in 0..children.len() {
        let ev = children[idx].event.clone();
        let p = &ev.instance;
        let in_v = v.iter().any(|e| &e.instance == p);
        let descend: Option<Vec<Event>> = match ev.handler {
            Some(h) if ev.index == 1 => {
                if let Some(wit) = first_on_handler(&v, &ev, h) {
                    stats.calls += 1;
                    stats.simple += 1;
                    if !in_v {
                        return Insertion::Covered;
                    }
                    Some(wit)
                } else if v.iter().any(|e| &e.instance == p && e.last) {
                    let next = NextInfo::Starting(vec![summary_in(&v, p)]);
                    let q = WiQuery { state, w: &v, p, next: &next, observed: ctx.observed, mode: ctx.mode };
                    match wi_member(&q, stats) {
                        Wi::Yes(wit) => Some(wit),
                        _ => None,
                    }
                } else {
                    children[idx].parked.push(Parked { root, seq: v });
                    return Insertion::Parked;
                }
            }
            _ => {
                let next = NextInfo::Scheduled(ev.clone());
                let q = WiQuery { state, w: &v, p, next: &next, observed: ctx.observed, mode: ctx.mode };
                match wi_member(&q, stats) {
                    Wi::Yes(_) if !in_v => return Insertion::Covered,
                    Wi::Yes(wit) => Some(wit),
                    _ => None,
                }
            }
        };
        let Some(wit) = descend else { continue };
        let node = &mut children[idx];
        if node.children.is_empty() {
            return Insertion::Covered;
        }
        let Ok(Some((next_state, _))) = ctx.machine.step(state, p) else { continue };
        return insert_into(&mut node.children, ctx, &next_state, root, wit[1..].to_vec(), stats);
    }
    children.extend(Node::chain(&v));
    Insertion::Inserted
}
