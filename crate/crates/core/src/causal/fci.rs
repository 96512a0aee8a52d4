//! Fast Causal Inference over the featurized rule matrix: PC-style
//! skeleton search, possible-d-separating-set retests, unshielded
//! collider orientation, and the four standard orientation rules
//! applied to a fixpoint. The output is a partial ancestral graph whose
//! last node is the performance column.
//!
//! Determinism: within a skeleton round all independence decisions are
//! computed against the round's frozen adjacency (in parallel when
//! worthwhile) and applied in canonical pair order, so thread count
//! never changes the result.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};

use rayon::prelude::*;

use crate::rules::FeaturizedSet;

use super::citest::{CiTestConfig, GaussianCiTester};

/// Conditioning subsets tried per pair, per side, per level. Bounds the
/// combinatorial blowup on dense skeletons; subsets are enumerated in
/// canonical lexicographic order so the cap is deterministic.
const MAX_SUBSETS_PER_PAIR: usize = 64;

/// Possible-d-separating sets are truncated to this many nodes (in
/// canonical order) before subsets are drawn from them.
const PDS_CAP: usize = 25;

/// Endpoint mark of a PAG edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mark {
    Circle,
    Arrow,
    Tail,
}

/// Partial ancestral graph over rule nodes `0..k` plus the performance
/// node `k` (always the last node).
#[derive(Debug, Clone, PartialEq)]
pub struct Pag {
    n: usize,
    // key (i, j) with i < j; marks are (at_i, at_j)
    edges: BTreeMap<(usize, usize), (Mark, Mark)>,
}

impl Pag {
    pub fn disconnected(n: usize) -> Self {
        Self { n, edges: BTreeMap::new() }
    }

    pub fn complete(n: usize) -> Self {
        let mut edges = BTreeMap::new();
        for i in 0..n {
            for j in (i + 1)..n {
                edges.insert((i, j), (Mark::Circle, Mark::Circle));
            }
        }
        Self { n, edges }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn performance_node(&self) -> usize {
        self.n - 1
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    fn key(i: usize, j: usize) -> (usize, usize) {
        if i < j {
            (i, j)
        } else {
            (j, i)
        }
    }

    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        i != j && self.edges.contains_key(&Self::key(i, j))
    }

    pub fn add_edge(&mut self, i: usize, j: usize) {
        self.edges.insert(Self::key(i, j), (Mark::Circle, Mark::Circle));
    }

    pub fn remove_edge(&mut self, i: usize, j: usize) {
        self.edges.remove(&Self::key(i, j));
    }

    /// Neighbors in ascending order.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges
            .keys()
            .filter_map(|&(a, b)| {
                if a == i {
                    Some(b)
                } else if b == i {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out
    }

    /// The mark drawn at `node`'s end of the edge between `node` and
    /// `other`; `None` if the edge is absent.
    pub fn mark_at(&self, node: usize, other: usize) -> Option<Mark> {
        let key = Self::key(node, other);
        self.edges.get(&key).map(
            |&(at_lo, at_hi)| {
                if node == key.0 {
                    at_lo
                } else {
                    at_hi
                }
            },
        )
    }

    pub fn set_mark(&mut self, node: usize, other: usize, mark: Mark) {
        let key = Self::key(node, other);
        if let Some(marks) = self.edges.get_mut(&key) {
            if node == key.0 {
                marks.0 = mark;
            } else {
                marks.1 = mark;
            }
        }
    }

    /// Overwrite only a circle mark; established arrows and tails are
    /// never flipped, which keeps rule application monotone.
    fn set_mark_if_circle(&mut self, node: usize, other: usize, mark: Mark) -> bool {
        if self.mark_at(node, other) == Some(Mark::Circle) && mark != Mark::Circle {
            self.set_mark(node, other, mark);
            true
        } else {
            false
        }
    }

    fn reset_marks(&mut self) {
        for marks in self.edges.values_mut() {
            *marks = (Mark::Circle, Mark::Circle);
        }
    }

    pub fn edge_keys(&self) -> Vec<(usize, usize)> {
        self.edges.keys().copied().collect()
    }
}

/// Lexicographic `d`-subsets of `items`.
struct Combinations<'a> {
    items: &'a [usize],
    indices: Vec<usize>,
    started: bool,
    done: bool,
}

impl<'a> Combinations<'a> {
    fn new(items: &'a [usize], d: usize) -> Self {
        let done = d > items.len();
        Self { items, indices: (0..d).collect(), started: false, done }
    }

    fn current(&self) -> Vec<usize> {
        self.indices.iter().map(|&i| self.items[i]).collect()
    }
}

impl Iterator for Combinations<'_> {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            return Some(self.current());
        }
        let d = self.indices.len();
        if d == 0 {
            self.done = true;
            return None;
        }
        let mut at = d;
        loop {
            if at == 0 {
                self.done = true;
                return None;
            }
            at -= 1;
            if self.indices[at] < self.items.len() - (d - at) {
                self.indices[at] += 1;
                for later in (at + 1)..d {
                    self.indices[later] = self.indices[later - 1] + 1;
                }
                return Some(self.current());
            }
        }
    }
}

type Sepsets = HashMap<(usize, usize), Vec<usize>>;

fn find_sepset_in(
    tester: &GaussianCiTester,
    candidates_per_side: [&[usize]; 2],
    i: usize,
    j: usize,
    d: usize,
) -> Option<Vec<usize>> {
    for side in candidates_per_side {
        let pool: Vec<usize> = side.iter().copied().filter(|&v| v != i && v != j).collect();
        if pool.len() < d {
            continue;
        }
        for subset in Combinations::new(&pool, d).take(MAX_SUBSETS_PER_PAIR) {
            if tester.test(i, j, &subset).is_independent() {
                return Some(subset);
            }
        }
    }
    None
}

/// Nodes reachable from `x` along paths whose every interior vertex is
/// a collider on the path or part of a triangle: the possible-d-sep set.
fn possible_d_sep(pag: &Pag, x: usize) -> Vec<usize> {
    let mut pds: BTreeSet<usize> = BTreeSet::new();
    let mut visited: HashSet<(usize, usize)> = HashSet::new();
    let mut queue: VecDeque<(usize, usize)> = VecDeque::new();
    for v in pag.neighbors(x) {
        pds.insert(v);
        visited.insert((x, v));
        queue.push_back((x, v));
    }
    while let Some((u, w)) = queue.pop_front() {
        for z in pag.neighbors(w) {
            if z == u || z == x {
                continue;
            }
            let collider = pag.mark_at(w, u) == Some(Mark::Arrow)
                && pag.mark_at(w, z) == Some(Mark::Arrow);
            let triangle = pag.adjacent(u, z);
            if (collider || triangle) && visited.insert((w, z)) {
                pds.insert(z);
                queue.push_back((w, z));
            }
        }
    }
    pds.into_iter().collect()
}

fn orient_colliders(pag: &mut Pag, sepsets: &Sepsets) {
    for k in 0..pag.node_count() {
        let neighbors = pag.neighbors(k);
        for (a_pos, &i) in neighbors.iter().enumerate() {
            for &j in &neighbors[(a_pos + 1)..] {
                if pag.adjacent(i, j) {
                    continue;
                }
                if let Some(sep) = sepsets.get(&Pag::key(i, j)) {
                    if !sep.contains(&k) {
                        pag.set_mark_if_circle(k, i, Mark::Arrow);
                        pag.set_mark_if_circle(k, j, Mark::Arrow);
                    }
                }
            }
        }
    }
}

/// R1: a*->b o-* c with a, c non-adjacent orients b -> c.
fn rule_r1(pag: &mut Pag) -> bool {
    let mut changed = false;
    for b in 0..pag.node_count() {
        let neighbors = pag.neighbors(b);
        for &a in &neighbors {
            if pag.mark_at(b, a) != Some(Mark::Arrow) {
                continue;
            }
            for &c in &neighbors {
                if c == a || pag.adjacent(a, c) {
                    continue;
                }
                if pag.mark_at(b, c) == Some(Mark::Circle) {
                    changed |= pag.set_mark_if_circle(b, c, Mark::Tail);
                    changed |= pag.set_mark_if_circle(c, b, Mark::Arrow);
                }
            }
        }
    }
    changed
}

/// R2: a -> b *-> c or a *-> b -> c, with a *-o c, orients a *-> c.
fn rule_r2(pag: &mut Pag) -> bool {
    let mut changed = false;
    for c in 0..pag.node_count() {
        for a in pag.neighbors(c) {
            if pag.mark_at(c, a) != Some(Mark::Circle) {
                continue;
            }
            let found = pag.neighbors(a).into_iter().any(|b| {
                if !pag.adjacent(b, c) {
                    return false;
                }
                let a_into_b = pag.mark_at(b, a) == Some(Mark::Arrow);
                let a_directed_b = a_into_b && pag.mark_at(a, b) == Some(Mark::Tail);
                let b_into_c = pag.mark_at(c, b) == Some(Mark::Arrow);
                let b_directed_c = b_into_c && pag.mark_at(b, c) == Some(Mark::Tail);
                (a_directed_b && b_into_c) || (a_into_b && b_directed_c)
            });
            if found {
                changed |= pag.set_mark_if_circle(c, a, Mark::Arrow);
            }
        }
    }
    changed
}

/// R3: a *-> b <-* c, a *-o d o-* c, a, c non-adjacent, d *-o b,
/// orients d *-> b.
fn rule_r3(pag: &mut Pag) -> bool {
    let mut changed = false;
    for b in 0..pag.node_count() {
        let b_neighbors = pag.neighbors(b);
        for &d in &b_neighbors {
            if pag.mark_at(b, d) != Some(Mark::Circle) {
                continue;
            }
            let shared: Vec<usize> = b_neighbors
                .iter()
                .copied()
                .filter(|&v| v != d && pag.adjacent(v, d))
                .collect();
            'pairs: for (a_pos, &a) in shared.iter().enumerate() {
                for &c in &shared[(a_pos + 1)..] {
                    if pag.adjacent(a, c) {
                        continue;
                    }
                    let arrows_at_b = pag.mark_at(b, a) == Some(Mark::Arrow)
                        && pag.mark_at(b, c) == Some(Mark::Arrow);
                    let circles_at_d = pag.mark_at(d, a) == Some(Mark::Circle)
                        && pag.mark_at(d, c) == Some(Mark::Circle);
                    if arrows_at_b && circles_at_d {
                        changed |= pag.set_mark_if_circle(b, d, Mark::Arrow);
                        break 'pairs;
                    }
                }
            }
        }
    }
    changed
}

/// Search for a discriminating path `<theta, ..., a, b, c>` for `b`:
/// every vertex strictly between theta and b is a collider on the path
/// and a parent of c, and theta is not adjacent to c. Returns
/// `(theta, a)` for the shortest such path found.
fn find_discriminating(pag: &Pag, b: usize, c: usize) -> Option<(usize, usize)> {
    for a in pag.neighbors(b) {
        if a == c || !pag.adjacent(a, c) {
            continue;
        }
        let a_parent_of_c = pag.mark_at(c, a) == Some(Mark::Arrow)
            && pag.mark_at(a, c) == Some(Mark::Tail);
        if !a_parent_of_c || pag.mark_at(a, b) != Some(Mark::Arrow) {
            continue;
        }
        let mut visited: HashSet<(usize, usize)> = HashSet::new();
        let mut queue: VecDeque<(usize, usize)> = VecDeque::new();
        visited.insert((a, b));
        queue.push_back((a, b));
        while let Some((u, v)) = queue.pop_front() {
            for w in pag.neighbors(u) {
                if w == v || w == b || w == c {
                    continue;
                }
                // the (w, u) edge must point into u to complete u's collider
                if pag.mark_at(u, w) != Some(Mark::Arrow) {
                    continue;
                }
                if !pag.adjacent(w, c) {
                    return Some((w, a));
                }
                let w_parent_of_c = pag.mark_at(c, w) == Some(Mark::Arrow)
                    && pag.mark_at(w, c) == Some(Mark::Tail);
                if w_parent_of_c
                    && pag.mark_at(w, u) == Some(Mark::Arrow)
                    && visited.insert((w, u))
                {
                    queue.push_back((w, u));
                }
            }
        }
    }
    None
}

/// R4: discriminating-path rule.
fn rule_r4(pag: &mut Pag, sepsets: &Sepsets) -> bool {
    let mut changed = false;
    for b in 0..pag.node_count() {
        for c in pag.neighbors(b) {
            if pag.mark_at(b, c) != Some(Mark::Circle) {
                continue;
            }
            let Some((theta, a)) = find_discriminating(pag, b, c) else {
                continue;
            };
            let b_in_sepset = sepsets
                .get(&Pag::key(theta, c))
                .map_or(false, |sep| sep.contains(&b));
            if b_in_sepset {
                changed |= pag.set_mark_if_circle(b, c, Mark::Tail);
                changed |= pag.set_mark_if_circle(c, b, Mark::Arrow);
            } else {
                changed |= pag.set_mark_if_circle(a, b, Mark::Arrow);
                changed |= pag.set_mark_if_circle(b, a, Mark::Arrow);
                changed |= pag.set_mark_if_circle(b, c, Mark::Arrow);
                changed |= pag.set_mark_if_circle(c, b, Mark::Arrow);
            }
        }
    }
    changed
}

fn apply_orientation_rules(pag: &mut Pag, sepsets: &Sepsets) {
    loop {
        let mut changed = false;
        changed |= rule_r1(pag);
        changed |= rule_r2(pag);
        changed |= rule_r3(pag);
        changed |= rule_r4(pag, sepsets);
        if !changed {
            break;
        }
    }
}

/// Run FCI over the featurized set. Total: a worst case of no removable
/// edges just yields a dense, circle-marked graph.
pub fn fci(data: &FeaturizedSet, cfg: &CiTestConfig) -> Pag {
    let tester = GaussianCiTester::new(data, cfg.alpha);
    let n = tester.node_count();
    if n < 2 {
        return Pag::disconnected(n);
    }
    let mut pag = Pag::complete(n);
    let mut sepsets: Sepsets = HashMap::new();

    // PC-style adjacency search, stable within each level.
    for d in 0..=cfg.max_conditioning_size {
        let snapshot: Vec<Vec<usize>> = (0..n).map(|i| pag.neighbors(i)).collect();
        let pairs: Vec<(usize, usize)> = pag
            .edge_keys()
            .into_iter()
            .filter(|&(i, j)| snapshot[i].len() - 1 >= d || snapshot[j].len() - 1 >= d)
            .collect();
        if pairs.is_empty() {
            break;
        }
        let decisions: Vec<Option<Vec<usize>>> = pairs
            .par_iter()
            .map(|&(i, j)| find_sepset_in(&tester, [&snapshot[i], &snapshot[j]], i, j, d))
            .collect();
        for (&(i, j), sepset) in pairs.iter().zip(decisions) {
            if let Some(sep) = sepset {
                pag.remove_edge(i, j);
                sepsets.insert((i, j), sep);
            }
        }
    }

    // Colliders guide the possible-d-sep computation.
    orient_colliders(&mut pag, &sepsets);

    // Retest remaining edges against possible-d-separating sets.
    let pds: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let mut set = possible_d_sep(&pag, i);
            set.truncate(PDS_CAP);
            set
        })
        .collect();
    let pairs = pag.edge_keys();
    let decisions: Vec<Option<Vec<usize>>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            for d in 1..=cfg.max_conditioning_size {
                if let Some(sep) = find_sepset_in(&tester, [&pds[i], &pds[j]], i, j, d) {
                    return Some(sep);
                }
            }
            None
        })
        .collect();
    for (&(i, j), sepset) in pairs.iter().zip(decisions) {
        if let Some(sep) = sepset {
            pag.remove_edge(i, j);
            sepsets.insert((i, j), sep);
        }
    }

    // Orient the final skeleton from scratch.
    pag.reset_marks();
    orient_colliders(&mut pag, &sepsets);
    apply_orientation_rules(&mut pag, &sepsets);
    pag
}

/// Per-node reachability of the performance node along possibly-directed
/// paths: an edge may be traversed away from a node only if its mark at
/// that node is not an arrowhead.
pub fn reachable_to_performance(pag: &Pag) -> Vec<bool> {
    let mut reach = vec![false; pag.node_count()];
    if pag.node_count() == 0 {
        return reach;
    }
    let p = pag.performance_node();
    reach[p] = true;
    let mut queue = VecDeque::from([p]);
    while let Some(v) = queue.pop_front() {
        for u in pag.neighbors(v) {
            if !reach[u] && pag.mark_at(u, v) != Some(Mark::Arrow) {
                reach[u] = true;
                queue.push_back(u);
            }
        }
    }
    reach
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    use crate::rng::rng_from_seed;

    fn featurized(cols: Vec<Vec<bool>>, perf: Vec<f64>) -> FeaturizedSet {
        let n = perf.len();
        let rows: Vec<Vec<bool>> =
            (0..n).map(|r| cols.iter().map(|c| c[r]).collect()).collect();
        FeaturizedSet::from_parts(rows, perf)
    }

    #[test]
    fn combinations_are_lexicographic() {
        let items = [2, 5, 7, 9];
        let combos: Vec<Vec<usize>> = Combinations::new(&items, 2).collect();
        assert_eq!(
            combos,
            vec![
                vec![2, 5],
                vec![2, 7],
                vec![2, 9],
                vec![5, 7],
                vec![5, 9],
                vec![7, 9]
            ]
        );
        let empties: Vec<Vec<usize>> = Combinations::new(&items, 0).collect();
        assert_eq!(empties, vec![Vec::<usize>::new()]);
        assert_eq!(Combinations::new(&items, 5).count(), 0);
    }

    #[test]
    fn independent_pair_loses_its_edge() {
        let mut rng = rng_from_seed(41);
        let col: Vec<bool> = (0..200).map(|_| rng.random::<bool>()).collect();
        let perf: Vec<f64> = (0..200).map(|_| rng.random::<f64>()).collect();
        let data = featurized(vec![col], perf);
        let pag = fci(&data, &CiTestConfig::default());
        assert_eq!(pag.edge_count(), 0);
    }

    #[test]
    fn signal_column_stays_adjacent_noise_is_isolated() {
        let mut rng = rng_from_seed(7);
        let n = 200;
        let signal: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
        let noise: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
        let perf: Vec<f64> = signal
            .iter()
            .map(|&s| if s { 0.0 } else { 3.0 } + rng.random::<f64>())
            .collect();
        let data = featurized(vec![signal, noise], perf);
        let pag = fci(&data, &CiTestConfig::default());
        // node 0 = signal, node 1 = noise, node 2 = performance
        assert!(pag.adjacent(0, 2), "signal should stay adjacent to p");
        assert!(pag.neighbors(1).is_empty(), "noise should be isolated");
    }

    #[test]
    fn chain_separates_endpoints_given_mediator() {
        // r1 -> r2 -> p: d-separation says r1 and p split given r2
        let mut rng = rng_from_seed(19);
        let n = 200;
        let r1: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
        let r2: Vec<bool> = r1
            .iter()
            .map(|&v| if rng.random::<f64>() < 0.85 { v } else { !v })
            .collect();
        let perf: Vec<f64> = r2
            .iter()
            .map(|&v| if v { 0.0 } else { 2.0 } + 0.5 * rng.random::<f64>())
            .collect();
        let data = featurized(vec![r1, r2], perf);
        let pag = fci(&data, &CiTestConfig::default());
        assert!(!pag.adjacent(0, 2), "r1 and p should be non-adjacent");
        assert!(pag.adjacent(1, 2), "mediator stays adjacent to p");
        assert!(pag.adjacent(0, 1), "r1 stays adjacent to the mediator");
    }

    #[test]
    fn fci_is_deterministic() {
        let mut rng = rng_from_seed(3);
        let n = 120;
        let cols: Vec<Vec<bool>> =
            (0..4).map(|_| (0..n).map(|_| rng.random::<bool>()).collect()).collect();
        let perf: Vec<f64> = (0..n)
            .map(|i| if cols[0][i] { 1.0 } else { 2.0 } + rng.random::<f64>())
            .collect();
        let data = featurized(cols, perf);
        let a = fci(&data, &CiTestConfig::default());
        let b = fci(&data, &CiTestConfig::default());
        assert_eq!(a, b);
    }

    #[test]
    fn reachability_follows_possibly_directed_paths() {
        // nodes: r0, r1, r2, r3, r4, p (performance = 5)
        let mut pag = Pag::disconnected(6);
        // r0 -> p (kept: directed into p)
        pag.add_edge(0, 5);
        pag.set_mark(0, 5, Mark::Tail);
        pag.set_mark(5, 0, Mark::Arrow);
        // r1 o-o r0 (kept: circle path through r0)
        pag.add_edge(1, 0);
        // p -> r2 (dropped: the edge leaves p, r2 cannot reach p)
        pag.add_edge(2, 5);
        pag.set_mark(5, 2, Mark::Tail);
        pag.set_mark(2, 5, Mark::Arrow);
        // r3 <-> r4 isolated pair (dropped)
        pag.add_edge(3, 4);
        pag.set_mark(3, 4, Mark::Arrow);
        pag.set_mark(4, 3, Mark::Arrow);

        let reach = reachable_to_performance(&pag);
        assert_eq!(reach, vec![true, true, false, false, false, true]);
    }

    #[test]
    fn fully_disconnected_graph_reaches_nothing() {
        let pag = Pag::disconnected(4);
        let reach = reachable_to_performance(&pag);
        assert_eq!(reach, vec![false, false, false, true]);
    }

    #[test]
    fn single_circle_edge_is_a_path() {
        let mut pag = Pag::disconnected(2);
        pag.add_edge(0, 1);
        assert_eq!(reachable_to_performance(&pag), vec![true, true]);
    }

    #[test]
    fn collider_orientation_marks_arrowheads() {
        // true structure a -> m <- b with all three observed plus p as a
        // child of m; the unshielded triple a - m - b becomes a collider
        let mut rng = rng_from_seed(13);
        let n = 400;
        let a: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
        let b: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
        let m: Vec<bool> = a.iter().zip(&b).map(|(&x, &y)| x ^ y).collect();
        let perf: Vec<f64> = m
            .iter()
            .map(|&v| if v { 1.0 } else { 3.0 } + 0.3 * rng.random::<f64>())
            .collect();
        let data = featurized(vec![a, b, m], perf);
        let pag = fci(&data, &CiTestConfig::default());
        if pag.adjacent(0, 2) && pag.adjacent(1, 2) && !pag.adjacent(0, 1) {
            assert_eq!(pag.mark_at(2, 0), Some(Mark::Arrow));
            assert_eq!(pag.mark_at(2, 1), Some(Mark::Arrow));
        }
    }
}
