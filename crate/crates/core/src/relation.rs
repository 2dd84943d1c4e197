//! Dense binary relations over `0..n` and the saturation closure.

use std::fmt;

/// A binary relation stored as a bit matrix; `contains(a, b)` means `a -> b`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Relation {
    n: usize,
    words: usize,
    bits: Vec<u64>,
}

impl fmt::Debug for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.pairs()).finish()
    }
}

impl Relation {
    pub fn new(n: usize) -> Self {
        let words = n.div_ceil(64).max(1);
        Relation { n, words, bits: vec![0; n * words] }
    }

    pub fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut r = Relation::new(n);
        for (a, b) in pairs {
            r.insert(a, b);
        }
        r
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        self.bits[a * self.words + b / 64] >> (b % 64) & 1 == 1
    }

    /// Returns true if the pair was new.
    pub fn insert(&mut self, a: usize, b: usize) -> bool {
        let w = &mut self.bits[a * self.words + b / 64];
        let m = 1u64 << (b % 64);
        let fresh = *w & m == 0;
        *w |= m;
        fresh
    }

    pub fn remove(&mut self, a: usize, b: usize) {
        self.bits[a * self.words + b / 64] &= !(1u64 << (b % 64));
    }

    fn row(&self, a: usize) -> &[u64] {
        &self.bits[a * self.words..(a + 1) * self.words]
    }

    fn row_meets(&self, a: usize, mask: &[u64]) -> bool {
        self.row(a).iter().zip(mask).any(|(x, m)| x & m != 0)
    }

    /// `row(dst) |= row(src)`; returns true on change.
    fn or_row(&mut self, dst: usize, src: usize) -> bool {
        let mut changed = false;
        for w in 0..self.words {
            let s = self.bits[src * self.words + w];
            let d = &mut self.bits[dst * self.words + w];
            if s & !*d != 0 {
                *d |= s;
                changed = true;
            }
        }
        changed
    }

    pub fn successors(&self, a: usize) -> impl Iterator<Item = usize> + '_ {
        let n = self.n;
        self.row(a)
            .iter()
            .enumerate()
            .flat_map(move |(w, &bits)| {
                let mut rest = bits;
                std::iter::from_fn(move || {
                    (rest != 0).then(|| {
                        let i = rest.trailing_zeros() as usize;
                        rest &= rest - 1;
                        w * 64 + i
                    })
                })
            })
            .take_while(move |&b| b < n)
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |a| self.successors(a).map(move |b| (a, b)))
    }

    pub fn union_with(&mut self, other: &Relation) {
        assert_eq!(self.n, other.n);
        for (d, s) in self.bits.iter_mut().zip(&other.bits) {
            *d |= s;
        }
    }

    pub fn is_subset_of(&self, other: &Relation) -> bool {
        self.n == other.n && self.bits.iter().zip(&other.bits).all(|(a, b)| a & !b == 0)
    }

    /// Transitive closure in place (Warshall over bit rows).
    pub fn close(&mut self) {
        for k in 0..self.n {
            for i in 0..self.n {
                if i != k && self.contains(i, k) {
                    self.or_row(i, k);
                }
            }
        }
    }

    pub fn closure(&self) -> Relation {
        let mut r = self.clone();
        r.close();
        r
    }

    /// Elements lying on a cycle; meaningful only for a closed relation.
    pub fn cyclic_elements(&self) -> Vec<usize> {
        (0..self.n).filter(|&a| self.contains(a, a)).collect()
    }

    pub fn is_acyclic(&self) -> bool {
        self.closure().cyclic_elements().is_empty()
    }

    /// Restriction to `keep` (in that order), re-indexed to `0..keep.len()`.
    pub fn restrict(&self, keep: &[usize]) -> Relation {
        let mut r = Relation::new(keep.len());
        for (i, &a) in keep.iter().enumerate() {
            for (j, &b) in keep.iter().enumerate() {
                if self.contains(a, b) {
                    r.insert(i, j);
                }
            }
        }
        r
    }

    /// Topological order preferring the smallest available element; `None` if cyclic.
    pub fn topo_sort(&self) -> Option<Vec<usize>> {
        self.topo_sort_by(|a| a)
    }

    /// Topological order preferring the available element with the least `rank`.
    pub fn topo_sort_by<K: Ord>(&self, rank: impl Fn(usize) -> K) -> Option<Vec<usize>> {
        let mut indeg = vec![0usize; self.n];
        for (a, b) in self.pairs() {
            if a == b {
                return None;
            }
            indeg[b] += 1;
        }
        let mut placed = vec![false; self.n];
        let mut out = Vec::with_capacity(self.n);
        while out.len() < self.n {
            let next = (0..self.n).filter(|&a| !placed[a] && indeg[a] == 0).min_by_key(|&a| rank(a))?;
            placed[next] = true;
            out.push(next);
            for b in self.successors(next) {
                indeg[b] -= 1;
            }
        }
        Some(out)
    }
}

/// Grouping of elements into messages, each optionally bound to a handler.
#[derive(Clone, Debug)]
pub struct Grouping {
    /// Message index of each element.
    pub group: Vec<usize>,
    /// Handler of each message; `None` for plain threads.
    pub handler: Vec<Option<u32>>,
}

impl Grouping {
    pub fn members(&self, g: usize) -> Vec<usize> {
        (0..self.group.len()).filter(|&e| self.group[e] == g).collect()
    }

    pub fn groups(&self) -> usize {
        self.handler.len()
    }

    pub fn same_handler(&self, g1: usize, g2: usize) -> bool {
        g1 != g2 && self.handler[g1].is_some() && self.handler[g1] == self.handler[g2]
    }
}

/// Cycle found while saturating: the messages owning events on a cycle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SaturationCycle {
    pub events: Vec<usize>,
    pub groups: Vec<usize>,
}

/// Least transitive superset of `base` in which an edge from any event of
/// message `p` to any event of message `q` on the same handler orders every
/// event of `p` before every event of `q`.
pub fn saturate(base: &Relation, grouping: &Grouping) -> Result<Relation, SaturationCycle> {
    let n = base.len();
    let ng = grouping.groups();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); ng];
    for (e, &g) in grouping.group.iter().enumerate() {
        members[g].push(e);
    }
    let mut r = base.closure();
    let words = r.words;
    let masks: Vec<Vec<u64>> = members
        .iter()
        .map(|m| {
            let mut mask = vec![0u64; words];
            for &e in m {
                mask[e / 64] |= 1 << (e % 64);
            }
            mask
        })
        .collect();
    let mut pending: Vec<(usize, usize)> = (0..ng)
        .flat_map(|a| (0..ng).map(move |b| (a, b)))
        .filter(|&(a, b)| grouping.same_handler(a, b) && !members[a].is_empty() && !members[b].is_empty())
        .collect();
    loop {
        let cyc = r.cyclic_elements();
        if !cyc.is_empty() {
            let mut groups: Vec<usize> = cyc.iter().map(|&e| grouping.group[e]).collect();
            groups.sort_unstable();
            groups.dedup();
            return Err(SaturationCycle { events: cyc, groups });
        }
        let fired: Vec<(usize, usize)> = pending
            .iter()
            .copied()
            .filter(|&(ga, gb)| members[ga].iter().any(|&x| r.row_meets(x, &masks[gb])))
            .collect();
        if fired.is_empty() {
            return Ok(r);
        }
        pending.retain(|p| !fired.contains(p));
        for (ga, gb) in fired {
            // everything reaching `ga` now reaches `gb` and its successors
            let mut add = masks[gb].clone();
            for &y in &members[gb] {
                for (a, s) in add.iter_mut().zip(r.row(y)) {
                    *a |= s;
                }
            }
            for i in 0..n {
                if grouping.group[i] == ga || r.row_meets(i, &masks[ga]) {
                    for (d, s) in r.bits[i * words..(i + 1) * words].iter_mut().zip(&add) {
                        *d |= s;
                    }
                }
            }
        }
    }
}
