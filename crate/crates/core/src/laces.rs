//! Graphs and laces on integer intervals, and the lace functions `Pi_m`.
//!
//! A graph on `[a,b]` is a set of edges `st` with `a <= s < t <= b`. It is
//! connected when `a` and `b` are edge endpoints and every `c` strictly
//! between them is straddled by some edge. A lace is a minimally connected
//! graph; every connected graph has a unique lace chosen by a greedy rule, and
//! the edges that can be added to a lace without changing that choice are its
//! compatible edges.
//!
//! For paths the only edges that matter are collisions `U_st = 1`, so most of
//! the heavy lifting works on `u128` edge masks over `[0, m]`, `m <= 15`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_traits::Zero;
use rayon::prelude::*;
use rustc_hash::{FxHashMap, FxHashSet};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{check_dim, convolve, gaussian_density, Parity, Point, SignedMeasure};
use crate::scalar::{Rational, Scalar};
use crate::walks::{
    add_coefficient, edge_index, evaluate, merge_coefficients, per_site, powers_of,
    step_distribution, walk_canonical, Coefficients, ConnectivityTable, ModelParams, Path,
    PathNode, PathVisitor, MAX_TRACKED_LEN,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    s: u32,
    t: u32,
}

impl Edge {
    pub fn new(s: u32, t: u32) -> Result<Self> {
        if s >= t {
            return Err(Error::InvalidGraph(format!("edge ({s},{t}) needs s < t")));
        }
        Ok(Edge { s, t })
    }

    pub fn s(&self) -> u32 {
        self.s
    }

    pub fn t(&self) -> u32 {
        self.t
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.s, self.t)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Graph {
    a: u32,
    b: u32,
    edges: BTreeSet<Edge>,
}

impl Graph {
    pub fn new(a: u32, b: u32, edges: impl IntoIterator<Item = Edge>) -> Result<Self> {
        if a > b {
            return Err(Error::InvalidGraph(format!("interval [{a},{b}] is empty")));
        }
        let edges: BTreeSet<Edge> = edges.into_iter().collect();
        if let Some(e) = edges.iter().find(|e| e.s < a || e.t > b) {
            return Err(Error::InvalidGraph(format!("edge {e} outside [{a},{b}]")));
        }
        Ok(Graph { a, b, edges })
    }

    /// Convenience constructor from `(s, t)` pairs.
    pub fn from_pairs(a: u32, b: u32, pairs: &[(u32, u32)]) -> Result<Self> {
        let edges = pairs
            .iter()
            .map(|&(s, t)| Edge::new(s, t))
            .collect::<Result<Vec<_>>>()?;
        Graph::new(a, b, edges)
    }

    /// Graph on `[0, b]` holding the edges of a mask.
    pub fn from_mask(b: u32, mask: u128) -> Result<Self> {
        Graph::new(0, b, mask_edges(mask).map(|(s, t)| Edge { s: s as u32, t: t as u32 }))
    }

    pub fn interval(&self) -> (u32, u32) {
        (self.a, self.b)
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter()
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn contains(&self, e: &Edge) -> bool {
        self.edges.contains(e)
    }

    pub fn with_edge(&self, e: Edge) -> Result<Self> {
        let mut edges = self.edges.clone();
        edges.insert(e);
        Graph::new(self.a, self.b, edges)
    }

    pub fn without_edge(&self, e: &Edge) -> Self {
        let mut g = self.clone();
        g.edges.remove(e);
        g
    }

    /// Edge mask, if every endpoint is at most [`MAX_TRACKED_LEN`].
    pub fn to_mask(&self) -> Option<u128> {
        if self.b as usize > MAX_TRACKED_LEN {
            return None;
        }
        Some(
            self.edges
                .iter()
                .fold(0, |m, e| m | 1u128 << edge_index(e.s as usize, e.t as usize)),
        )
    }
}

impl fmt::Display for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, e) in self.edges.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, "}}")
    }
}

/// A minimally connected graph, edges ordered by start point.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Lace {
    graph: Graph,
}

impl Lace {
    /// Validates that `graph` is minimally connected.
    pub fn new(graph: Graph) -> Result<Self> {
        if !is_lace(&graph) {
            return Err(Error::InvalidGraph(format!("{graph} is not a lace")));
        }
        Ok(Lace { graph })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    /// Number of edges `N`.
    pub fn order(&self) -> usize {
        self.graph.len()
    }

    /// Edges `s_1 t_1, ..., s_N t_N` with increasing `s_i` (and `t_i`).
    pub fn chain(&self) -> Vec<Edge> {
        self.graph.edges.iter().copied().collect()
    }
}

impl fmt::Display for Lace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.graph.fmt(f)
    }
}

pub fn is_connected(g: &Graph) -> bool {
    let (a, b) = (g.a, g.b);
    if a >= b {
        return false;
    }
    let starts_at_a = g.edges.iter().any(|e| e.s == a);
    let ends_at_b = g.edges.iter().any(|e| e.t == b);
    starts_at_a && ends_at_b && (a + 1..b).all(|c| g.edges.iter().any(|e| e.s < c && c < e.t))
}

/// Connected, and removing any single edge disconnects it.
pub fn is_lace(g: &Graph) -> bool {
    is_connected(g) && g.edges.iter().all(|e| !is_connected(&g.without_edge(e)))
}

/// The lace selected from a connected graph by the greedy rule: take the
/// longest edge out of `a`, then repeatedly the edge reaching furthest among
/// those starting before the current right end, with the smallest start.
pub fn lace_of_graph(g: &Graph) -> Result<Lace> {
    if !is_connected(g) {
        return Err(Error::Disconnected { a: g.a, b: g.b });
    }
    let mut chain = Vec::new();
    let mut t = g
        .edges
        .iter()
        .filter(|e| e.s == g.a)
        .map(|e| e.t)
        .max()
        .expect("connected graphs have an edge at a");
    chain.push(Edge { s: g.a, t });
    while t < g.b {
        let next = g
            .edges
            .iter()
            .filter(|e| e.s < t)
            .map(|e| e.t)
            .max()
            .expect("connected");
        if next <= t {
            return Err(Error::Disconnected { a: g.a, b: g.b });
        }
        let s = g
            .edges
            .iter()
            .filter(|e| e.t == next)
            .map(|e| e.s)
            .min()
            .expect("edge exists");
        chain.push(Edge { s, t: next });
        t = next;
    }
    Ok(Lace {
        graph: Graph::new(g.a, g.b, chain)?,
    })
}

/// All laces on `[a,b]` with exactly `order` edges, in lexicographic order
/// of their edge chains.
///
/// Chains are generated directly: `s_1 = a`, `t_N = b`, and consecutive
/// edges satisfy `s_i < s_{i+1} < t_i < t_{i+1}` and `t_{i-1} <= s_{i+1}`.
pub fn enumerate_laces(a: u32, b: u32, order: usize) -> Vec<Lace> {
    fn rec(b: u32, order: usize, chain: &mut Vec<Edge>, out: &mut Vec<Vec<Edge>>) {
        let last = *chain.last().unwrap();
        if chain.len() == order {
            if last.t == b {
                out.push(chain.clone());
            }
            return;
        }
        if last.t == b {
            return;
        }
        let floor = if chain.len() >= 2 {
            chain[chain.len() - 2].t
        } else {
            0
        };
        for s in (last.s + 1).max(floor)..last.t {
            for t in last.t + 1..=b {
                chain.push(Edge { s, t });
                rec(b, order, chain, out);
                chain.pop();
            }
        }
    }
    if order == 0 || a >= b {
        return Vec::new();
    }
    let mut out = Vec::new();
    for t in a + 1..=b {
        rec(b, order, &mut vec![Edge { s: a, t }], &mut out);
    }
    out.into_iter()
        .map(|chain| Lace {
            graph: Graph::new(a, b, chain).expect("chain inside [a,b]"),
        })
        .collect()
}

/// Edges `st` outside `lace` whose addition leaves the lace map unchanged.
pub fn compatible_edges(lace: &Lace) -> BTreeSet<Edge> {
    let (a, b) = lace.graph.interval();
    let mut out = BTreeSet::new();
    for t in a + 1..=b {
        for s in a..t {
            let e = Edge { s, t };
            if lace.graph.contains(&e) {
                continue;
            }
            let g = lace.graph.with_edge(e).expect("edge inside interval");
            if lace_of_graph(&g).map(|l| l == *lace).unwrap_or(false) {
                out.insert(e);
            }
        }
    }
    out
}

/// `J[a,b]` evaluated twice on one path: as a sum over connected graphs and
/// as a sum over laces with compatible-edge factors.
#[derive(Clone, Debug, Serialize)]
pub struct JComparison {
    pub a: u32,
    pub b: u32,
    pub collisions: usize,
    pub graph_sum: String,
    pub lace_sum: String,
    pub equal: bool,
}

/// Largest number of colliding pairs for which the graph sum is attempted.
const MAX_GRAPH_SUM_EDGES: usize = 22;

pub fn j_by_graphs_vs_laces<T: Scalar>(path: &Path, a: usize, b: usize, lambda: &T) -> Result<JComparison> {
    if a >= b || b > path.len() {
        return Err(Error::InvalidArgument(format!(
            "interval [{a},{b}] not a proper subinterval of [0,{}]",
            path.len()
        )));
    }
    let mut collisions = Vec::new();
    for t in a + 1..=b {
        for s in a..t {
            if path.collides(s, t) {
                collisions.push(Edge { s: s as u32, t: t as u32 });
            }
        }
    }
    if collisions.len() > MAX_GRAPH_SUM_EDGES {
        return Err(Error::InvalidArgument(format!(
            "{} colliding pairs is too many for the graph sum",
            collisions.len()
        )));
    }
    let (a32, b32) = (a as u32, b as u32);
    let neg = -lambda.clone();

    // Graphs with a non-colliding edge carry a factor U_st = 0.
    let mut graph_sum = T::zero();
    for subset in 1u32..(1u32 << collisions.len()) {
        let edges = collisions
            .iter()
            .enumerate()
            .filter(|(i, _)| subset >> i & 1 == 1)
            .map(|(_, e)| *e);
        let g = Graph::new(a32, b32, edges)?;
        if is_connected(&g) {
            graph_sum = graph_sum + neg.powi(g.len() as u32);
        }
    }

    let colliding: BTreeSet<Edge> = collisions.iter().copied().collect();
    let one_minus = T::one() - lambda.clone();
    let mut lace_sum = T::zero();
    for order in 1..=(b - a) {
        for lace in enumerate_laces(a32, b32, order) {
            if !lace.graph.edges.is_subset(&colliding) {
                continue;
            }
            let q = compatible_edges(&lace).intersection(&colliding).count();
            lace_sum = lace_sum + neg.powi(order as u32) * one_minus.powi(q as u32);
        }
    }
    Ok(JComparison {
        a: a32,
        b: b32,
        collisions: collisions.len(),
        equal: graph_sum.close_to(&lace_sum, 1e-12),
        graph_sum: graph_sum.to_string(),
        lace_sum: lace_sum.to_string(),
    })
}

// Mask machinery on [0, m].

fn edge_of_index(idx: usize) -> (usize, usize) {
    let mut t = 1;
    while edge_index(0, t + 1) <= idx {
        t += 1;
    }
    (idx - edge_index(0, t), t)
}

fn mask_edges(mask: u128) -> impl Iterator<Item = (usize, usize)> {
    let mut rest = mask;
    std::iter::from_fn(move || {
        if rest == 0 {
            return None;
        }
        let idx = rest.trailing_zeros() as usize;
        rest &= rest - 1;
        Some(edge_of_index(idx))
    })
}

/// Mask of all edges `st` with `a <= s < t <= b`.
pub fn interval_mask(a: usize, b: usize) -> u128 {
    let mut mask = 0u128;
    for t in a + 1..=b {
        for s in a..t {
            mask |= 1u128 << edge_index(s, t);
        }
    }
    mask
}

/// Calls `f(lace_mask, order)` for every lace on `[0, m]` contained in the
/// graph `gamma`. Edges of `gamma` beyond `m` are ignored.
pub fn for_each_sublace(gamma: u128, m: usize, mut f: impl FnMut(u128, usize)) {
    if m == 0 || m > MAX_TRACKED_LEN {
        return;
    }
    // reach[s]: bitmask of t with st in gamma, t <= m
    let mut reach = [0u16; MAX_TRACKED_LEN + 1];
    for (s, t) in mask_edges(gamma & interval_mask(0, m)) {
        reach[s] |= 1 << t;
    }
    if reach[0] == 0 || (0..m).all(|s| reach[s] >> m & 1 == 0) {
        return;
    }
    fn rec(
        reach: &[u16; MAX_TRACKED_LEN + 1],
        m: usize,
        floor: usize,
        s: usize,
        t: usize,
        mask: u128,
        order: usize,
        f: &mut impl FnMut(u128, usize),
    ) {
        if t == m {
            f(mask, order);
            return;
        }
        for s2 in (s + 1).max(floor)..t {
            let mut ts = reach[s2] >> (t + 1) << (t + 1);
            while ts != 0 {
                let t2 = ts.trailing_zeros() as usize;
                ts &= ts - 1;
                rec(
                    reach,
                    m,
                    t,
                    s2,
                    t2,
                    mask | 1u128 << edge_index(s2, t2),
                    order + 1,
                    f,
                );
            }
        }
    }
    let mut ts = reach[0];
    while ts != 0 {
        let t = ts.trailing_zeros() as usize;
        ts &= ts - 1;
        rec(&reach, m, 0, 0, t, 1u128 << edge_index(0, t), 1, &mut f);
    }
}

/// Greedy lace of a graph on `[0, m]` given as a mask, or `None` if the
/// graph is disconnected.
fn lace_mask_of(gamma: u128, m: usize) -> Option<u128> {
    let edges: Vec<(usize, usize)> = mask_edges(gamma).collect();
    let mut t = edges.iter().filter(|e| e.0 == 0).map(|e| e.1).max()?;
    let mut lace = 1u128 << edge_index(0, t);
    while t < m {
        let next = edges.iter().filter(|e| e.0 < t).map(|e| e.1).max()?;
        if next <= t {
            return None;
        }
        let s = edges.iter().filter(|e| e.1 == next).map(|e| e.0).min()?;
        lace |= 1u128 << edge_index(s, next);
        t = next;
    }
    Some(lace)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LaceInfo {
    pub order: usize,
    /// Mask of compatible edges on `[0, m]`.
    pub compatible: u128,
}

/// All laces on `[0, m]` for `m <= m_max`, keyed by edge mask, with their
/// compatible-edge masks.
#[derive(Clone, Debug)]
pub struct LaceCatalog {
    by_m: Vec<FxHashMap<u128, LaceInfo>>,
}

impl LaceCatalog {
    pub fn build(m_max: usize) -> Result<Self> {
        if m_max > MAX_TRACKED_LEN {
            return Err(Error::InvalidArgument(format!(
                "lace catalogs need m <= {MAX_TRACKED_LEN}"
            )));
        }
        let by_m = (0..=m_max)
            .map(|m| {
                let full = interval_mask(0, m);
                let mut laces = Vec::new();
                for_each_sublace(full, m, |mask, order| laces.push((mask, order)));
                laces
                    .into_par_iter()
                    .map(|(mask, order)| {
                        let mut compatible = 0u128;
                        for (s, t) in mask_edges(full & !mask) {
                            let e = 1u128 << edge_index(s, t);
                            if lace_mask_of(mask | e, m) == Some(mask) {
                                compatible |= e;
                            }
                        }
                        (mask, LaceInfo { order, compatible })
                    })
                    .collect()
            })
            .collect();
        Ok(LaceCatalog { by_m })
    }

    pub fn m_max(&self) -> usize {
        self.by_m.len() - 1
    }

    pub fn laces(&self, m: usize) -> &FxHashMap<u128, LaceInfo> {
        &self.by_m[m]
    }

    pub fn get(&self, m: usize, mask: u128) -> Option<&LaceInfo> {
        self.by_m.get(m)?.get(&mask)
    }

    /// Calls `f(order, q)` for every lace inside `gamma` on `[0, m]`, where
    /// `q` counts the compatible edges that are also in `gamma`.
    pub fn for_each_term(&self, gamma: u128, m: usize, mut f: impl FnMut(usize, usize)) {
        let gamma = gamma & interval_mask(0, m);
        for_each_sublace(gamma, m, |mask, order| {
            let info = &self.by_m[m][&mask];
            f(order, (info.compatible & gamma).count_ones() as usize);
        });
    }

    /// `J[0,m]` for a path whose collision graph is `gamma`.
    pub fn j_value<T: Scalar>(&self, gamma: u128, m: usize, lambda: &T) -> T {
        let neg = -lambda.clone();
        let one_minus = T::one() - lambda.clone();
        let mut acc = T::zero();
        self.for_each_term(gamma, m, |order, q| {
            acc = acc.clone() + neg.powi(order as u32) * one_minus.powi(q as u32);
        });
        acc
    }
}

/// `K[a,b]` for a path whose collision graph is `gamma`.
pub fn k_value<T: Scalar>(gamma: u128, a: usize, b: usize, lambda: &T) -> T {
    let q = (gamma & interval_mask(a, b)).count_ones();
    (T::one() - lambda.clone()).powi(q)
}

/// Per-site lace counts: `by_order[N-1][q]` paths (per site) carrying a lace
/// with `N` edges and `q` colliding compatible edges.
type LaceCounts = Vec<Coefficients>;

struct PiVisitor<'a> {
    catalog: &'a LaceCatalog,
    by_depth: Vec<FxHashMap<Point, LaceCounts>>,
}

impl PathVisitor for PiVisitor<'_> {
    fn fork(&self) -> Self {
        PiVisitor {
            catalog: self.catalog,
            by_depth: vec![FxHashMap::default(); self.by_depth.len()],
        }
    }

    fn visit(&mut self, node: &PathNode<'_>) {
        let m = node.depth;
        if m < 2 || m >= self.by_depth.len() {
            return;
        }
        let site = node.endpoint().canonical();
        let orbit = node.orbit;
        let slot = &mut self.by_depth[m];
        self.catalog.for_each_term(node.collisions, m, |order, q| {
            let counts = slot.entry(site).or_default();
            if counts.len() < order {
                counts.resize(order, Vec::new());
            }
            add_coefficient(&mut counts[order - 1], q, orbit);
        });
    }

    fn merge(&mut self, other: Self) {
        for (mine, theirs) in self.by_depth.iter_mut().zip(other.by_depth) {
            for (p, counts) in theirs {
                let entry = mine.entry(p).or_default();
                if entry.len() < counts.len() {
                    entry.resize(counts.len(), Vec::new());
                }
                for (e, c) in entry.iter_mut().zip(&counts) {
                    merge_coefficients(e, c);
                }
            }
        }
    }
}

/// Exact lace-count polynomials behind `Pi_m^(N)` for `m <= m_max`.
#[derive(Clone, Debug)]
pub struct PiTable {
    dim: usize,
    m_max: usize,
    /// `classes[m][N - 1]`: canonical site -> per-site coefficients in `1 - lambda`.
    classes: Vec<Vec<BTreeMap<Point, Coefficients>>>,
}

impl PiTable {
    pub fn enumerate(dim: usize, m_max: usize, budget: u128) -> Result<Self> {
        Self::with_catalog(dim, &LaceCatalog::build(m_max)?, budget)
    }

    pub fn with_catalog(dim: usize, catalog: &LaceCatalog, budget: u128) -> Result<Self> {
        check_dim(dim)?;
        let m_max = catalog.m_max();
        let visitor = PiVisitor {
            catalog,
            by_depth: vec![FxHashMap::default(); m_max + 1],
        };
        let visitor = walk_canonical(dim, m_max, budget, visitor)?;
        let mut classes = Vec::with_capacity(m_max + 1);
        for depth in visitor.by_depth {
            let orders = depth.values().map(Vec::len).max().unwrap_or(0);
            let mut per_order: Vec<FxHashMap<Point, Coefficients>> =
                vec![FxHashMap::default(); orders];
            for (p, counts) in depth {
                for (i, c) in counts.into_iter().enumerate() {
                    if c.iter().any(|&v| v != 0) {
                        per_order[i].insert(p, c);
                    }
                }
            }
            classes.push(per_order.into_iter().map(per_site).collect::<Result<_>>()?);
        }
        Ok(PiTable {
            dim,
            m_max,
            classes,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn m_max(&self) -> usize {
        self.m_max
    }

    /// Largest lace order with a nonzero contribution at length `m`.
    pub fn max_order(&self, m: usize) -> usize {
        self.classes[m].len()
    }

    fn check_m(&self, m: usize) -> Result<()> {
        if m > self.m_max {
            return Err(Error::InvalidArgument(format!(
                "m = {m} beyond enumerated m_max = {}",
                self.m_max
            )));
        }
        Ok(())
    }

    /// `Pi_m^(N)`, a nonnegative measure.
    pub fn term<T: Scalar>(&self, m: usize, order: usize, lambda: &T) -> Result<SignedMeasure<T>> {
        self.check_m(m)?;
        let mut out = SignedMeasure::zero(self.dim);
        if order >= 1 && order <= self.classes[m].len() {
            let powers = powers_of(&(T::one() - lambda.clone()), m * m);
            for (canon, coeffs) in &self.classes[m][order - 1] {
                let w = evaluate(coeffs, &powers);
                for p in canon.orbit() {
                    out.add_at(p, w.clone());
                }
            }
        }
        Ok(out.with_parity(Parity::of(m as i64)).expect("parity of m"))
    }

    /// `Pi_m = sum_{N <= max_order} (-lambda)^N Pi_m^(N)`.
    pub fn measure<T: Scalar>(&self, m: usize, lambda: &T, max_order: Option<usize>) -> Result<SignedMeasure<T>> {
        self.check_m(m)?;
        let top = max_order.unwrap_or(usize::MAX).min(self.max_order(m));
        let neg = -lambda.clone();
        let mut out = SignedMeasure::zero(self.dim);
        for order in 1..=top {
            out.add_scaled(&self.term(m, order, lambda)?, &neg.powi(order as u32))?;
        }
        Ok(out.with_parity(Parity::of(m as i64)).expect("parity of m"))
    }
}

/// `Pi_m` together with its breakdown `[Pi_m^(1), ..., Pi_m^(max_order)]`.
///
/// Laces on `[0, m]` whose edges are all collisions can have up to `m - 1`
/// edges, so the default order is `m - 1`; a smaller `max_order` truncates
/// `Pi_m` consistently with the breakdown.
pub fn pi_m<T: Scalar>(
    params: &ModelParams<T>,
    m: usize,
    max_order: Option<usize>,
    budget: u128,
) -> Result<(SignedMeasure<T>, Vec<SignedMeasure<T>>)> {
    if m == 0 {
        return Err(Error::InvalidArgument("m must be at least 1".into()));
    }
    let table = PiTable::enumerate(params.dim, m, budget)?;
    let top = max_order.unwrap_or(m.saturating_sub(1));
    let terms = (1..=top)
        .map(|order| table.term(m, order, &params.lambda))
        .collect::<Result<Vec<_>>>()?;
    let total = table.measure(m, &params.lambda, Some(top))?;
    Ok((total, terms))
}

struct GraphCollector {
    depth: usize,
    graphs: FxHashSet<u128>,
}

impl PathVisitor for GraphCollector {
    fn fork(&self) -> Self {
        GraphCollector {
            depth: self.depth,
            graphs: FxHashSet::default(),
        }
    }

    fn visit(&mut self, node: &PathNode<'_>) {
        if node.depth == self.depth {
            self.graphs.insert(node.collisions);
        }
    }

    fn merge(&mut self, other: Self) {
        self.graphs.extend(other.graphs);
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SiteMismatch {
    pub x: Vec<i64>,
    pub lhs: String,
    pub rhs: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct RecursionReport {
    pub dim: usize,
    pub n: usize,
    pub lambda: String,
    /// Distinct collision graphs among all n-step paths.
    pub graphs_checked: usize,
    /// Collision graphs violating `K[0,n] = K[1,n] + sum_m J[0,m] K[m,n]`,
    /// as edge lists.
    pub graph_failures: Vec<String>,
    pub sites_checked: usize,
    pub site_failures: Vec<SiteMismatch>,
    pub holds: bool,
}

/// Exact check of the lace recursion for `n`-step paths.
///
/// The per-path identity depends on a path only through its collision
/// graph, so it is checked once per distinct graph. The measure identity
/// `C_n = 2d D * C_{n-1} + sum_{m=2}^n Pi_m * C_{n-m}` is compared site by
/// site.
pub fn verify_lace_recursion(params: &ModelParams<Rational>, n: usize, budget: u128) -> Result<RecursionReport> {
    if n == 0 || n > MAX_TRACKED_LEN {
        return Err(Error::InvalidArgument(format!(
            "n must be in 1..={MAX_TRACKED_LEN}"
        )));
    }
    let (dim, lambda) = (params.dim, &params.lambda);
    let catalog = LaceCatalog::build(n)?;

    let collector = walk_canonical(
        dim,
        n,
        budget,
        GraphCollector {
            depth: n,
            graphs: FxHashSet::default(),
        },
    )?;
    let mut graphs: Vec<u128> = collector.graphs.into_iter().collect();
    graphs.sort_unstable();
    let mut graph_failures = Vec::new();
    for &gamma in &graphs {
        let lhs = k_value(gamma, 0, n, lambda);
        let mut rhs = k_value(gamma, 1, n, lambda);
        for m in 2..=n {
            rhs += catalog.j_value(gamma, m, lambda) * k_value(gamma, m, n, lambda);
        }
        if lhs != rhs {
            graph_failures.push(Graph::from_mask(n as u32, gamma)?.to_string());
        }
    }

    let walks = ConnectivityTable::enumerate(dim, n, budget)?;
    let pis = PiTable::with_catalog(dim, &catalog, budget)?;
    let c = walks.measures(lambda)?;
    let two_d = Rational::from_i64(2 * dim as i64);
    let mut rhs = convolve(&step_distribution(dim).scale(&two_d), &c[n - 1])?;
    for m in 2..=n {
        rhs = rhs.add(&convolve(&pis.measure(m, lambda, None)?, &c[n - m])?)?;
    }
    let lhs = &c[n];
    let sites: BTreeSet<Point> = lhs.support().chain(rhs.support()).copied().collect();
    let site_failures: Vec<SiteMismatch> = sites
        .iter()
        .filter_map(|x| {
            let (l, r) = (lhs.get(x), rhs.get(x));
            (l != r).then(|| SiteMismatch {
                x: x.to_vec(),
                lhs: l.to_string(),
                rhs: r.to_string(),
            })
        })
        .collect();

    Ok(RecursionReport {
        dim,
        n,
        lambda: lambda.to_string(),
        graphs_checked: graphs.len(),
        holds: graph_failures.is_empty() && site_failures.is_empty(),
        graph_failures,
        sites_checked: sites.len(),
        site_failures,
    })
}

/// Gaussian diagram envelope
/// `psi_m(x) = m^{-d/2} sum_{k=1}^{floor(m/2)} k^{1-d/2} phi_{k nu}(x)`.
pub fn psi(m: usize, x: &Point, nu: f64) -> f64 {
    let d = x.dim() as f64;
    let r2 = x.norm2_sq() as f64;
    let sum: f64 = (1..=m / 2)
        .map(|k| (k as f64).powf(1.0 - d / 2.0) * gaussian_density(k as f64 * nu, x.dim(), r2))
        .sum();
    (m as f64).powf(-d / 2.0) * sum
}

#[derive(Clone, Debug, Serialize)]
pub struct DiagramReport {
    pub dim: usize,
    pub m: usize,
    pub order: usize,
    pub lambda: String,
    pub sites_checked: usize,
    /// Bound with the leg constraints stated for the non-interacting
    /// diagram (the leg ending at the walk's start may be empty).
    pub holds: bool,
    pub violations: Vec<SiteMismatch>,
    /// Largest `Pi_m^(N)(x) / bound(x)` over the support.
    pub max_ratio: f64,
    /// Same check with every leg of length at least one.
    pub strict_holds: bool,
    pub strict_max_ratio: f64,
    pub nu: f64,
    /// `sup_x |Pi_m(x)| / (lambda c_m psi_m(x))`, reported only.
    pub psi_ratio: Option<f64>,
}

/// `H_p(y) = sum_{i+j=p, i,j>=1} C_i(y) C_j(y)`, for p = 0..=m.
fn paired_returns(c: &[SignedMeasure<Rational>], m: usize) -> Vec<SignedMeasure<Rational>> {
    let dim = c[0].dim();
    (0..=m)
        .map(|p| {
            let mut h = SignedMeasure::zero(dim);
            for i in 1..p {
                for (y, w) in c[i].iter() {
                    let v = c[p - i].get(y);
                    if !v.is_zero() {
                        h.add_at(*y, w.clone() * v);
                    }
                }
            }
            h
        })
        .collect()
}

/// Exact check of `Pi_m^(N) <= ` the non-interacting diagram of `N` loops,
/// for `N` in {2, 3}, plus the empirical `psi_m` ratio of `Pi_m`.
///
/// For `N = 2` the bound is `sum_{k+l+j=m} C_k(x) C_l(x) C_j(x)` with
/// `l, j >= 1`; for `N = 3` it is
/// `sum_y sum C_{m1}(y) C_{m2}(y) C_{m3}(x) C_{m4}(x-y) C_{m5}(x-y)` with
/// only `m3` allowed to vanish. The strict variants require every leg to be
/// nonempty.
pub fn diagram_bound_check(params: &ModelParams<Rational>, m: usize, order: usize, nu: f64, budget: u128) -> Result<DiagramReport> {
    if !(2..=3).contains(&order) {
        return Err(Error::InvalidArgument(format!(
            "diagram bounds are implemented for N in {{2, 3}}, got {order}"
        )));
    }
    if m < 2 {
        return Err(Error::InvalidArgument("m must be at least 2".into()));
    }
    let (dim, lambda) = (params.dim, &params.lambda);
    let pis = PiTable::enumerate(dim, m, budget)?;
    let walks = ConnectivityTable::enumerate(dim, m, budget)?;
    let c = walks.measures(lambda)?;
    let h = paired_returns(&c, m);
    let term = pis.term(m, order, lambda)?;

    // loose[x] and strict[x] differ only in whether the free leg may be empty
    let (loose, strict) = match order {
        2 => {
            let mut loose = SignedMeasure::zero(dim);
            for k in 0..=m {
                for (x, w) in c[k].iter() {
                    let v = h[m - k].get(x);
                    if !v.is_zero() {
                        loose.add_at(*x, w.clone() * v);
                    }
                }
            }
            let mut strict = loose.clone();
            strict.add_scaled(&h[m], &-Rational::from_i64(1))?;
            (loose, strict)
        }
        _ => {
            // sum over m3 of C_{m3}(x) (H_p * H_q)(x), p + q = m - m3
            let mut loose = SignedMeasure::zero(dim);
            let mut strict = SignedMeasure::zero(dim);
            for m3 in 0..=m {
                let mut inner = SignedMeasure::zero(dim);
                for p in 2..=(m - m3) {
                    let q = m - m3 - p;
                    if q < 2 {
                        continue;
                    }
                    inner = inner.add(&convolve(&h[p], &h[q])?)?;
                }
                for (x, w) in c[m3].iter() {
                    let v = inner.get(x);
                    if !v.is_zero() {
                        let prod = w.clone() * v;
                        if m3 > 0 {
                            strict.add_at(*x, prod.clone());
                        }
                        loose.add_at(*x, prod);
                    }
                }
            }
            (loose, strict)
        }
    };

    let mut violations = Vec::new();
    let (mut max_ratio, mut strict_max_ratio) = (0.0f64, 0.0f64);
    let mut strict_holds = true;
    for (x, w) in term.sorted_entries() {
        let bound = loose.get(&x);
        if w > bound {
            violations.push(SiteMismatch {
                x: x.to_vec(),
                lhs: w.to_string(),
                rhs: bound.to_string(),
            });
        }
        max_ratio = max_ratio.max(ratio(&w, &bound));
        let sb = strict.get(&x);
        strict_holds &= w <= sb;
        strict_max_ratio = strict_max_ratio.max(ratio(&w, &sb));
    }

    let total = pis.measure(m, lambda, None)?;
    let cm = walks.mass(m, lambda);
    let scale = lambda.clone() * cm;
    let psi_ratio = (!scale.is_zero()).then(|| {
        let s = scale.to_f64();
        total
            .iter()
            .map(|(x, w)| w.to_f64().abs() / (s * psi(m, x, nu)))
            .fold(0.0, f64::max)
    });

    Ok(DiagramReport {
        dim,
        m,
        order,
        lambda: lambda.to_string(),
        sites_checked: term.len(),
        holds: violations.is_empty(),
        violations,
        max_ratio,
        strict_holds,
        strict_max_ratio,
        nu,
        psi_ratio,
    })
}

fn ratio(w: &Rational, bound: &Rational) -> f64 {
    if bound.is_zero() {
        if w.is_zero() {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (w.clone() / bound.clone()).to_f64()
    }
}
