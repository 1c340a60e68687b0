//! Relative-comparison triplets and the set-level reasoning over them.
//!
//! A triplet `(a, b, c)` asserts that object `a` is closer to `b` than to `c`.
//! A set of triplets is viewed as a directed graph over unordered object
//! pairs: `(a, b, c)` is the edge `{a,b} -> {a,c}` from the closer pair to
//! the farther pair. Paths in that graph chain distance inequalities, which
//! gives the transitive closure, and a cycle is a contradiction.

use std::collections::{HashSet, VecDeque};
use std::fmt;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triplet {
    pub head: usize,
    pub near: usize,
    pub far: usize,
}

impl Triplet {
    pub fn new(head: usize, near: usize, far: usize) -> Result<Self> {
        if head == near || head == far || near == far {
            return Err(Error::InvalidInput(format!(
                "triplet ({head},{near},{far}) must name three distinct objects"
            )));
        }
        Ok(Self { head, near, far })
    }

    /// The opposite answer to the same question: `(a, c, b)`.
    pub fn reversed(self) -> Self {
        Self {
            head: self.head,
            near: self.far,
            far: self.near,
        }
    }

    pub fn max_index(self) -> usize {
        self.head.max(self.near).max(self.far)
    }

    fn closer_pair(self) -> Pair {
        Pair::new(self.head, self.near)
    }

    fn farther_pair(self) -> Pair {
        Pair::new(self.head, self.far)
    }
}

impl fmt::Display for Triplet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.head, self.near, self.far)
    }
}

/// Duplicate-free triplets over `n` objects, in insertion order.
#[derive(Clone, Debug, Default)]
pub struct TripletSet {
    n: usize,
    triplets: Vec<Triplet>,
    index: HashSet<Triplet>,
}

impl PartialEq for TripletSet {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.triplets == other.triplets
    }
}

impl TripletSet {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            triplets: Vec::new(),
            index: HashSet::new(),
        }
    }

    /// Builds a set, rejecting out-of-range indices and duplicates.
    pub fn from_triplets(n: usize, triplets: impl IntoIterator<Item = Triplet>) -> Result<Self> {
        let mut set = Self::new(n);
        for t in triplets {
            if !set.insert(t)? {
                return Err(Error::InvalidInput(format!("duplicate triplet {t}")));
            }
        }
        Ok(set)
    }

    /// Adds a triplet; returns `false` if it was already present.
    pub fn insert(&mut self, t: Triplet) -> Result<bool> {
        if t.head == t.near || t.head == t.far || t.near == t.far {
            return Err(Error::InvalidInput(format!(
                "triplet {t} repeats an object"
            )));
        }
        if t.max_index() >= self.n {
            return Err(Error::InvalidInput(format!(
                "triplet {t} references an object outside 0..{}",
                self.n
            )));
        }
        if !self.index.insert(t) {
            return Ok(false);
        }
        self.triplets.push(t);
        Ok(true)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    pub fn contains(&self, t: &Triplet) -> bool {
        self.index.contains(t)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Triplet> {
        self.triplets.iter()
    }

    pub fn as_slice(&self) -> &[Triplet] {
        &self.triplets
    }

    /// Triplets of `self` not contained in `other`, in `self`'s order.
    pub fn difference(&self, other: &TripletSet) -> TripletSet {
        let mut out = TripletSet::new(self.n);
        for &t in &self.triplets {
            if !other.contains(&t) {
                out.triplets.push(t);
                out.index.insert(t);
            }
        }
        out
    }

    /// Same triplets, viewed over a larger object count.
    pub fn with_n(mut self, n: usize) -> Result<Self> {
        if let Some(t) = self.triplets.iter().find(|t| t.max_index() >= n) {
            return Err(Error::InvalidInput(format!(
                "triplet {t} does not fit n = {n}"
            )));
        }
        self.n = n;
        Ok(self)
    }
}

impl<'a> IntoIterator for &'a TripletSet {
    type Item = &'a Triplet;
    type IntoIter = std::slice::Iter<'a, Triplet>;

    fn into_iter(self) -> Self::IntoIter {
        self.triplets.iter()
    }
}

/// Unordered object pair `{lo, hi}` with `lo < hi`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Pair {
    lo: usize,
    hi: usize,
}

impl Pair {
    fn new(x: usize, y: usize) -> Self {
        if x < y {
            Self { lo: x, hi: y }
        } else {
            Self { lo: y, hi: x }
        }
    }

    /// Position in the lexicographic enumeration of all pairs over `n`.
    fn index(self, n: usize) -> usize {
        self.lo * (2 * n - self.lo - 1) / 2 + (self.hi - self.lo - 1)
    }

    fn from_index(mut idx: usize, n: usize) -> Self {
        let mut lo = 0;
        while idx >= n - lo - 1 {
            idx -= n - lo - 1;
            lo += 1;
        }
        Self {
            lo,
            hi: lo + 1 + idx,
        }
    }

    fn shared(self, other: Pair) -> Option<(usize, usize, usize)> {
        // Returns (shared, self's other, other's other) when exactly one
        // object is shared.
        if self == other {
            return None;
        }
        if self.lo == other.lo {
            Some((self.lo, self.hi, other.hi))
        } else if self.lo == other.hi {
            Some((self.lo, self.hi, other.lo))
        } else if self.hi == other.lo {
            Some((self.hi, self.lo, other.hi))
        } else if self.hi == other.hi {
            Some((self.hi, self.lo, other.lo))
        } else {
            None
        }
    }
}

fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Triplet encoded by the edge `from -> to`, if the two pairs share exactly
/// one object.
fn edge_triplet(from: Pair, to: Pair) -> Option<Triplet> {
    from.shared(to)
        .map(|(head, near, far)| Triplet { head, near, far })
}

/// Directed graph over object pairs; the triplet `(a,b,c)` is the edge
/// `{a,b} -> {a,c}`.
#[derive(Clone, Debug)]
pub struct ComparisonGraph {
    n: usize,
    adjacency: Vec<Vec<usize>>,
    edges: usize,
}

impl ComparisonGraph {
    pub fn from_triplets(set: &TripletSet) -> Self {
        let n = set.n();
        let mut adjacency = vec![Vec::new(); pair_count(n)];
        for t in set {
            adjacency[t.closer_pair().index(n)].push(t.farther_pair().index(n));
        }
        Self {
            n,
            adjacency,
            edges: set.len(),
        }
    }

    pub fn object_count(&self) -> usize {
        self.n
    }

    pub fn vertex_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges
    }

    /// Kahn's algorithm: acyclic iff every vertex can be peeled off.
    pub fn is_acyclic(&self) -> bool {
        let mut indegree = vec![0usize; self.adjacency.len()];
        for targets in &self.adjacency {
            for &w in targets {
                indegree[w] += 1;
            }
        }
        let mut queue: Vec<usize> = (0..indegree.len()).filter(|&v| indegree[v] == 0).collect();
        let mut peeled = 0;
        while let Some(v) = queue.pop() {
            peeled += 1;
            for &w in &self.adjacency[v] {
                indegree[w] -= 1;
                if indegree[w] == 0 {
                    queue.push(w);
                }
            }
        }
        peeled == self.adjacency.len()
    }

    /// Vertices reachable from `start` by a path of length at least one,
    /// in ascending index order.
    fn reachable_from(&self, start: usize, seen: &mut [bool], out: &mut Vec<usize>) {
        out.clear();
        let mut queue = VecDeque::new();
        for &w in &self.adjacency[start] {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
        while let Some(v) = queue.pop_front() {
            out.push(v);
            for &w in &self.adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        for &v in out.iter() {
            seen[v] = false;
        }
        out.sort_unstable();
    }
}

/// All triplets implied by chaining the input's distance inequalities. The
/// input comes first, in its original order, followed by the inferred
/// triplets in ascending (closer pair, farther pair) order.
pub fn transitive_closure(set: &TripletSet) -> TripletSet {
    let n = set.n();
    let graph = ComparisonGraph::from_triplets(set);
    let mut out = set.clone();
    let mut seen = vec![false; graph.vertex_count()];
    let mut reach = Vec::new();
    for u in 0..graph.vertex_count() {
        if graph.adjacency[u].is_empty() {
            continue;
        }
        graph.reachable_from(u, &mut seen, &mut reach);
        let from = Pair::from_index(u, n);
        for &w in &reach {
            if let Some(t) = edge_triplet(from, Pair::from_index(w, n)) {
                if !out.index.contains(&t) {
                    out.index.insert(t);
                    out.triplets.push(t);
                }
            }
        }
    }
    out
}

/// Closure minus the input.
pub fn inferred_triplets(set: &TripletSet) -> TripletSet {
    transitive_closure(set).difference(set)
}

/// Pairs `(t, reversed(t))` that both hold in the closure.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConflictReport {
    pub pairs: Vec<(Triplet, Triplet)>,
}

impl ConflictReport {
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }
}

impl fmt::Display for ConflictReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} conflicting pair(s)", self.pairs.len())?;
        for (i, (t, r)) in self.pairs.iter().enumerate() {
            if i == 8 {
                return write!(f, "; ...");
            }
            write!(f, "; {t} vs {r}")?;
        }
        Ok(())
    }
}

/// Each conflicting question is reported once, as `(t, reversed(t))` with
/// `t.near < t.far`, sorted.
pub fn detect_conflicts(set: &TripletSet) -> ConflictReport {
    if ComparisonGraph::from_triplets(set).is_acyclic() {
        return ConflictReport::default();
    }
    let closure = transitive_closure(set);
    let mut pairs: Vec<(Triplet, Triplet)> = closure
        .iter()
        .filter(|t| t.near < t.far && closure.contains(&t.reversed()))
        .map(|&t| (t, t.reversed()))
        .collect();
    pairs.sort_unstable();
    ConflictReport { pairs }
}

/// Number of distinct non-conflicting triplets over `n` objects:
/// `(n^3 - 3n^2 + 2n) / 2`.
pub fn total_triplet_count(n: usize) -> Result<u64> {
    if n < 3 {
        return Err(Error::InvalidSize(format!(
            "need at least 3 objects, got {n}"
        )));
    }
    let n = n as u64;
    Ok((n * n * n - 3 * n * n + 2 * n) / 2)
}

/// Emits every triplet over `n` objects exactly once, ordered so that no
/// prefix lets anything be inferred by transitivity.
///
/// Built recursively on the pair graph. For three objects the order is
/// `{0,2}->{0,1}`, `{1,2}->{0,1}`, `{1,2}->{0,2}`. Going from `m - 1` to `m`
/// objects, the old pairs are visited in the order they first appear as edge
/// targets (never-targeted pairs last, ascending), and each receives the two
/// edges from the new pairs `{x,m-1}`, `{y,m-1}`. Then new pairs are drawn at
/// random and each receives edges from all new pairs still undrawn.
pub fn adversarial_order(n: usize, seed: u64) -> Result<Vec<Triplet>> {
    if n < 3 {
        return Err(Error::InvalidSize(format!(
            "need at least 3 objects, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: Vec<(Pair, Pair)> = vec![
        (Pair::new(0, 2), Pair::new(0, 1)),
        (Pair::new(1, 2), Pair::new(0, 1)),
        (Pair::new(1, 2), Pair::new(0, 2)),
    ];
    for m in 4..=n {
        let newest = m - 1;
        for old in old_vertex_order(&edges, newest) {
            // Sources in ascending pair order: {lo, m-1} < {hi, m-1}.
            edges.push((Pair::new(old.lo, newest), old));
            edges.push((Pair::new(old.hi, newest), old));
        }
        let mut remaining: Vec<Pair> = (0..newest).map(|i| Pair::new(i, newest)).collect();
        while !remaining.is_empty() {
            let sink = *remaining.choose(&mut rng).expect("non-empty");
            remaining.retain(|&p| p != sink);
            for &src in &remaining {
                edges.push((src, sink));
            }
        }
    }
    Ok(edges
        .into_iter()
        .map(|(from, to)| edge_triplet(from, to).expect("adversary only emits valid edges"))
        .collect())
}

/// Old pairs (over objects `0..m`) in order of first appearance as an edge
/// target, then the never-targeted ones in ascending order.
fn old_vertex_order(edges: &[(Pair, Pair)], m: usize) -> Vec<Pair> {
    let mut order = Vec::with_capacity(pair_count(m));
    let mut placed = HashSet::new();
    for &(_, to) in edges {
        if placed.insert(to) {
            order.push(to);
        }
    }
    for idx in 0..pair_count(m) {
        let p = Pair::from_index(idx, m);
        if placed.insert(p) {
            order.push(p);
        }
    }
    order
}

/// Whether `K` places `a` strictly closer to `b` than to `c`. Ties count as
/// unsatisfied.
pub fn satisfied(t: &Triplet, k: &KernelMatrix) -> bool {
    k.distance(t.head, t.near) < k.distance(t.head, t.far)
}

/// Fraction of triplets in `set` that `K` does not satisfy.
pub fn error_rate(set: &TripletSet, k: &KernelMatrix) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::InvalidInput(
            "error rate of an empty triplet set".into(),
        ));
    }
    if set.n() > k.n() {
        return Err(Error::DimensionMismatch {
            expected: set.n(),
            found: k.n(),
        });
    }
    let misses = set.iter().filter(|t| !satisfied(t, k)).count();
    Ok(misses as f64 / set.len() as f64)
}
