//! Exact enumeration of weakly self-avoiding walk connectivities.
//!
//! The weight of an n-step nearest-neighbour path is `(1 - lambda)^P`, where
//! `P` counts pairs `s < t` with `omega(s) = omega(t)`. The enumeration
//! therefore records integer path counts per endpoint and per collision
//! count; any `lambda` (exact or floating) is substituted afterwards.
//!
//! Paths are enumerated up to lattice symmetry: axes are numbered in order of
//! first use and every axis is first entered in the positive direction. A
//! canonical path using `k` axes stands for `2^k d!/(d-k)!` paths.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::ToPrimitive;
use rayon::prelude::*;
use rustc_hash::FxHashMap;

use crate::error::{Error, Result};
use crate::lattice::{check_dim, Parity, Point, SignedMeasure};
use crate::scalar::Scalar;

/// Default enumeration budget, in path-steps.
pub const DEFAULT_BUDGET: u128 = 1_000_000_000;

/// Longest prefix for which the collision pattern is tracked as a bitmask
/// over edges `st`, `0 <= s < t <= MAX_TRACKED_LEN`.
pub const MAX_TRACKED_LEN: usize = 15;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub dim: usize,
    pub lambda: T,
    pub n_max: usize,
}

impl<T: Scalar> ModelParams<T> {
    pub fn new(dim: usize, lambda: T, n_max: usize) -> Result<Self> {
        check_dim(dim)?;
        if lambda < T::zero() || lambda > T::one() {
            return Err(Error::InvalidArgument(format!(
                "lambda = {lambda} outside [0, 1]"
            )));
        }
        Ok(ModelParams {
            dim,
            lambda,
            n_max,
        })
    }
}

/// Law of one simple random walk step: `1/(2d)` on each unit vector.
pub fn step_distribution<T: Scalar>(dim: usize) -> SignedMeasure<T> {
    let w = T::from_ratio(1, 2 * dim as i64);
    let entries = (0..dim).flat_map(|axis| {
        [true, false]
            .into_iter()
            .map(move |s| Point::unit(dim, axis, s))
    });
    let mut m = SignedMeasure::zero(dim);
    for p in entries {
        m.add_at(p, w.clone());
    }
    m.with_parity(Parity::Odd).expect("unit vectors are odd")
}

/// Nearest-neighbour path starting at the origin.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Path {
    sites: Vec<Point>,
}

impl Path {
    pub fn new(sites: Vec<Point>) -> Result<Self> {
        let first = sites
            .first()
            .ok_or_else(|| Error::InvalidPath("empty path".into()))?;
        if *first != Point::origin(first.dim()) {
            return Err(Error::InvalidPath("path must start at the origin".into()));
        }
        for (t, w) in sites.windows(2).enumerate() {
            if w[1].dim() != w[0].dim() || (w[1] - w[0]).norm1() != 1 {
                return Err(Error::InvalidPath(format!(
                    "step {} from {} to {} is not a unit step",
                    t + 1,
                    w[0],
                    w[1]
                )));
            }
        }
        Ok(Path { sites })
    }

    /// Builds a path from `(axis, positive)` steps.
    pub fn from_steps(dim: usize, steps: &[(usize, bool)]) -> Result<Self> {
        check_dim(dim)?;
        let mut sites = vec![Point::origin(dim)];
        for &(axis, positive) in steps {
            if axis >= dim {
                return Err(Error::InvalidPath(format!("axis {axis} >= d = {dim}")));
            }
            let next = *sites.last().unwrap() + Point::unit(dim, axis, positive);
            sites.push(next);
        }
        Ok(Path { sites })
    }

    pub fn dim(&self) -> usize {
        self.sites[0].dim()
    }

    /// Number of steps.
    pub fn len(&self) -> usize {
        self.sites.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sites(&self) -> &[Point] {
        &self.sites
    }

    pub fn site(&self, t: usize) -> Point {
        self.sites[t]
    }

    pub fn endpoint(&self) -> Point {
        *self.sites.last().unwrap()
    }

    /// `U_st`: whether the path visits the same site at times s and t.
    pub fn collides(&self, s: usize, t: usize) -> bool {
        self.sites[s] == self.sites[t]
    }

    /// Number of pairs `a <= s < t <= b` with `U_st = 1`.
    pub fn collision_pairs(&self, a: usize, b: usize) -> u32 {
        let mut count = 0;
        for t in a..=b {
            for s in a..t {
                if self.sites[s] == self.sites[t] {
                    count += 1;
                }
            }
        }
        count
    }

    /// Bitmask of colliding pairs `(s, t)` inside `[0, len]`, indexed by
    /// [`edge_index`]. Only defined for paths of at most
    /// [`MAX_TRACKED_LEN`] steps.
    pub fn collision_mask(&self) -> Result<u128> {
        if self.len() > MAX_TRACKED_LEN {
            return Err(Error::InvalidArgument(format!(
                "collision masks need at most {MAX_TRACKED_LEN} steps"
            )));
        }
        let mut mask = 0u128;
        for t in 1..self.sites.len() {
            for s in 0..t {
                if self.sites[s] == self.sites[t] {
                    mask |= 1u128 << edge_index(s, t);
                }
            }
        }
        Ok(mask)
    }
}

/// Bit position of the edge `st` (`s < t`) in collision masks.
pub const fn edge_index(s: usize, t: usize) -> usize {
    t * (t - 1) / 2 + s
}

/// `K[a,b](omega) = prod_{a <= s < t <= b} (1 - lambda U_st(omega))`.
pub fn interaction_weight<T: Scalar>(path: &Path, a: usize, b: usize, lambda: &T) -> Result<T> {
    if a > b || b > path.len() {
        return Err(Error::InvalidArgument(format!(
            "interval [{a},{b}] not inside [0,{}]",
            path.len()
        )));
    }
    let factor = T::one() - lambda.clone();
    let mut w = T::one();
    for t in a..=b {
        for s in a..t {
            if path.collides(s, t) {
                w = w * factor.clone();
            }
        }
    }
    Ok(w)
}

fn binomial(n: usize, k: usize) -> BigInt {
    let mut acc = BigInt::from(1u8);
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

/// Number of canonical n-step paths in `Z^d`.
///
/// Walks that use exactly `k` given axes number
/// `sum_j (-1)^(k-j) C(k,j) (2j)^n`, and the symmetry group of those axes
/// (order `k! 2^k`) acts freely on them.
pub fn canonical_path_count(dim: usize, n: usize) -> u128 {
    if n == 0 {
        return 1;
    }
    let mut total = BigInt::from(0u8);
    for k in 1..=dim.min(n) {
        let mut walks = BigInt::from(0u8);
        for j in 0..=k {
            let term = binomial(k, j) * num_traits::pow(BigInt::from(2 * j), n);
            if (k - j) % 2 == 0 {
                walks += term;
            } else {
                walks -= term;
            }
        }
        let group: BigInt = (1..=k).fold(BigInt::from(1u8), |acc, i| acc * BigInt::from(2 * i));
        total += walks / group;
    }
    total.to_u128().unwrap_or(u128::MAX)
}

/// Path-steps needed to enumerate all canonical paths of length `<= n_max`.
pub fn enumeration_cost(dim: usize, n_max: usize) -> u128 {
    (1..=n_max)
        .map(|n| canonical_path_count(dim, n))
        .fold(0u128, |a, b| a.saturating_add(b))
}

/// Number of paths represented by a canonical path using `axes` axes.
fn orbit_weight(dim: usize, axes: usize) -> u128 {
    let perms: u128 = ((dim - axes + 1)..=dim).map(|v| v as u128).product();
    perms << axes
}

/// A node of the canonical path tree, handed to visitors.
pub(crate) struct PathNode<'a> {
    pub depth: usize,
    pub sites: &'a [Point],
    /// Colliding pairs along the whole prefix.
    pub pairs: u32,
    /// Colliding pairs as an edge bitmask (zero beyond `MAX_TRACKED_LEN`).
    pub collisions: u128,
    /// Number of paths this canonical prefix stands for.
    pub orbit: u128,
}

impl PathNode<'_> {
    pub fn endpoint(&self) -> Point {
        self.sites[self.depth]
    }
}

pub(crate) trait PathVisitor: Send + Sync + Sized {
    fn fork(&self) -> Self;
    fn visit(&mut self, node: &PathNode<'_>);
    fn merge(&mut self, other: Self);
}

struct Frame {
    sites: Vec<Point>,
    pairs: Vec<u32>,
    masks: Vec<u128>,
    axes: Vec<usize>,
}

impl Frame {
    fn root(dim: usize) -> Self {
        Frame {
            sites: vec![Point::origin(dim)],
            pairs: vec![0],
            masks: vec![0],
            axes: vec![0],
        }
    }

    fn push(&mut self, dim: usize, axis: usize, positive: bool) {
        let depth = self.sites.len() - 1;
        let next = self.sites[depth] + Point::unit(dim, axis, positive);
        let t = depth + 1;
        let mut pairs = self.pairs[depth];
        let mut mask = self.masks[depth];
        for (s, site) in self.sites.iter().enumerate() {
            if *site == next {
                pairs += 1;
                if t <= MAX_TRACKED_LEN {
                    mask |= 1u128 << edge_index(s, t);
                }
            }
        }
        self.sites.push(next);
        self.pairs.push(pairs);
        self.masks.push(mask);
        self.axes.push(self.axes[depth].max(axis + 1));
    }

    fn pop(&mut self) {
        self.sites.pop();
        self.pairs.pop();
        self.masks.pop();
        self.axes.pop();
    }

    fn node(&self, dim: usize) -> PathNode<'_> {
        let depth = self.sites.len() - 1;
        PathNode {
            depth,
            sites: &self.sites,
            pairs: self.pairs[depth],
            collisions: self.masks[depth],
            orbit: orbit_weight(dim, self.axes[depth]),
        }
    }

    /// Canonical moves from the current node.
    fn moves(&self, dim: usize) -> impl Iterator<Item = (usize, bool)> {
        let used = *self.axes.last().unwrap();
        (0..dim.min(used + 1)).flat_map(move |axis| {
            let signs: &'static [bool] = if axis < used { &[true, false] } else { &[true] };
            signs.iter().map(move |&s| (axis, s))
        })
    }
}

fn dfs<V: PathVisitor>(frame: &mut Frame, dim: usize, n_max: usize, visitor: &mut V) {
    visitor.visit(&frame.node(dim));
    if frame.sites.len() - 1 == n_max {
        return;
    }
    let moves: Vec<(usize, bool)> = frame.moves(dim).collect();
    for (axis, positive) in moves {
        frame.push(dim, axis, positive);
        dfs(frame, dim, n_max, visitor);
        frame.pop();
    }
}

/// Canonical prefixes of the given depth, visiting every shallower node.
fn prefixes<V: PathVisitor>(dim: usize, depth: usize, visitor: &mut V) -> Vec<Vec<(usize, bool)>> {
    fn rec<V: PathVisitor>(
        frame: &mut Frame,
        moves: &mut Vec<(usize, bool)>,
        dim: usize,
        depth: usize,
        visitor: &mut V,
        out: &mut Vec<Vec<(usize, bool)>>,
    ) {
        if moves.len() == depth {
            out.push(moves.clone());
            return;
        }
        visitor.visit(&frame.node(dim));
        let next: Vec<(usize, bool)> = frame.moves(dim).collect();
        for (axis, positive) in next {
            frame.push(dim, axis, positive);
            moves.push((axis, positive));
            rec(frame, moves, dim, depth, visitor, out);
            moves.pop();
            frame.pop();
        }
    }
    let mut out = Vec::new();
    rec(
        &mut Frame::root(dim),
        &mut Vec::new(),
        dim,
        depth,
        visitor,
        &mut out,
    );
    out
}

/// Runs `visitor` over every canonical path of length `<= n_max`.
///
/// Subtrees below a fixed prefix depth are processed in parallel with forked
/// visitors, which are merged back in prefix order.
pub(crate) fn walk_canonical<V: PathVisitor>(
    dim: usize,
    n_max: usize,
    budget: u128,
    mut visitor: V,
) -> Result<V> {
    check_dim(dim)?;
    let required = enumeration_cost(dim, n_max);
    if required > budget {
        return Err(Error::BudgetExceeded { required, budget });
    }
    let mut split = 0;
    while split < n_max && canonical_path_count(dim, split) < 64 {
        split += 1;
    }
    if split == 0 || n_max <= 3 {
        dfs(&mut Frame::root(dim), dim, n_max, &mut visitor);
        return Ok(visitor);
    }
    let roots = prefixes(dim, split, &mut visitor);
    let parts: Vec<V> = roots
        .par_iter()
        .map(|moves| {
            let mut local = visitor.fork();
            let mut frame = Frame::root(dim);
            for &(axis, positive) in moves {
                frame.push(dim, axis, positive);
            }
            dfs(&mut frame, dim, n_max, &mut local);
            local
        })
        .collect();
    for part in parts {
        visitor.merge(part);
    }
    Ok(visitor)
}

/// Per-site polynomial coefficients in `(1 - lambda)`: `coeffs[q]` paths
/// with exactly `q` colliding pairs.
pub(crate) type Coefficients = Vec<u128>;

pub(crate) fn add_coefficient(coeffs: &mut Coefficients, q: usize, count: u128) {
    if coeffs.len() <= q {
        coeffs.resize(q + 1, 0);
    }
    coeffs[q] += count;
}

pub(crate) fn merge_coefficients(into: &mut Coefficients, from: &[u128]) {
    if into.len() < from.len() {
        into.resize(from.len(), 0);
    }
    for (a, b) in into.iter_mut().zip(from) {
        *a += *b;
    }
}

/// `sum_q coeffs[q] * (1 - lambda)^q` given precomputed powers.
pub(crate) fn evaluate<T: Scalar>(coeffs: &[u128], powers: &[T]) -> T {
    coeffs
        .iter()
        .zip(powers)
        .filter(|(c, _)| **c != 0)
        .fold(T::zero(), |acc, (c, p)| acc + T::from_count(*c) * p.clone())
}

pub(crate) fn powers_of<T: Scalar>(base: &T, n: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = T::one();
    for _ in 0..=n {
        out.push(acc.clone());
        acc = acc * base.clone();
    }
    out
}

/// Divides orbit totals by the number of sites in each point orbit.
pub(crate) fn per_site(
    totals: FxHashMap<Point, Coefficients>,
) -> Result<BTreeMap<Point, Coefficients>> {
    let mut out = BTreeMap::new();
    for (canon, coeffs) in totals {
        let size = canon.orbit_size() as u128;
        let mut divided = Vec::with_capacity(coeffs.len());
        for c in coeffs {
            if c % size != 0 {
                return Err(Error::InvalidArgument(format!(
                    "orbit total {c} at {canon} not divisible by orbit size {size}"
                )));
            }
            divided.push(c / size);
        }
        out.insert(canon, divided);
    }
    Ok(out)
}

struct ConnectivityVisitor {
    by_depth: Vec<FxHashMap<Point, Coefficients>>,
}

impl PathVisitor for ConnectivityVisitor {
    fn fork(&self) -> Self {
        ConnectivityVisitor {
            by_depth: vec![FxHashMap::default(); self.by_depth.len()],
        }
    }

    fn visit(&mut self, node: &PathNode<'_>) {
        let entry = self.by_depth[node.depth]
            .entry(node.endpoint().canonical())
            .or_default();
        add_coefficient(entry, node.pairs as usize, node.orbit);
    }

    fn merge(&mut self, other: Self) {
        for (mine, theirs) in self.by_depth.iter_mut().zip(other.by_depth) {
            for (p, c) in theirs {
                merge_coefficients(mine.entry(p).or_default(), &c);
            }
        }
    }
}

/// Exact path counts behind `C_0, ..., C_{n_max}`, stored per orbit
/// representative as polynomials in `(1 - lambda)`.
#[derive(Clone, Debug)]
pub struct ConnectivityTable {
    dim: usize,
    n_max: usize,
    /// `classes[n]`: canonical site -> per-site coefficients.
    classes: Vec<BTreeMap<Point, Coefficients>>,
}

impl ConnectivityTable {
    pub fn enumerate(dim: usize, n_max: usize, budget: u128) -> Result<Self> {
        let visitor = ConnectivityVisitor {
            by_depth: vec![FxHashMap::default(); n_max + 1],
        };
        let visitor = walk_canonical(dim, n_max, budget, visitor)?;
        let classes = visitor
            .by_depth
            .into_iter()
            .map(per_site)
            .collect::<Result<_>>()?;
        Ok(ConnectivityTable {
            dim,
            n_max,
            classes,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Per-site count polynomial at `x` (empty if `x` is unreachable).
    pub fn coefficients(&self, n: usize, x: &Point) -> &[u128] {
        self.classes[n]
            .get(&x.canonical())
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// `C_n` at the given `lambda`.
    pub fn measure<T: Scalar>(&self, n: usize, lambda: &T) -> Result<SignedMeasure<T>> {
        let classes = self.classes.get(n).ok_or_else(|| {
            Error::InvalidArgument(format!("n = {n} beyond enumerated n_max = {}", self.n_max))
        })?;
        let powers = powers_of(&(T::one() - lambda.clone()), n * n);
        let mut out = SignedMeasure::zero(self.dim);
        for (canon, coeffs) in classes {
            let w = evaluate(coeffs, &powers);
            if w.is_zero() {
                continue;
            }
            for p in canon.orbit() {
                out.add_at(p, w.clone());
            }
        }
        Ok(out.with_parity(Parity::of(n as i64)).expect("n-step walks end at parity n"))
    }

    /// `c_n`, the total mass of `C_n`.
    pub fn mass<T: Scalar>(&self, n: usize, lambda: &T) -> T {
        let powers = powers_of(&(T::one() - lambda.clone()), n * n);
        self.classes[n].iter().fold(T::zero(), |acc, (canon, coeffs)| {
            acc + T::from_count(canon.orbit_size() as u128) * evaluate(coeffs, &powers)
        })
    }

    pub fn measures<T: Scalar>(&self, lambda: &T) -> Result<Vec<SignedMeasure<T>>> {
        (0..=self.n_max).map(|n| self.measure(n, lambda)).collect()
    }
}

/// `C_n` for the given model, by exhaustive enumeration.
pub fn enumerate_connectivity<T: Scalar>(
    params: &ModelParams<T>,
    n: usize,
    budget: u128,
) -> Result<SignedMeasure<T>> {
    if n > params.n_max {
        return Err(Error::InvalidArgument(format!(
            "n = {n} exceeds n_max = {}",
            params.n_max
        )));
    }
    ConnectivityTable::enumerate(params.dim, n, budget)?.measure(n, &params.lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::convolution_power;
    use crate::scalar::Rational;
    use proptest::prelude::*;

    fn r(p: i64, q: i64) -> Rational {
        Rational::from_ratio(p, q)
    }

    /// Brute force over all (2d)^n paths, no symmetry reduction.
    fn brute_connectivity(dim: usize, n: usize, lambda: &Rational) -> SignedMeasure<Rational> {
        let mut out = SignedMeasure::zero(dim);
        let total = (2 * dim).pow(n as u32);
        for code in 0..total {
            let mut c = code;
            let steps: Vec<(usize, bool)> = (0..n)
                .map(|_| {
                    let dir = c % (2 * dim);
                    c /= 2 * dim;
                    (dir / 2, dir.is_multiple_of(2))
                })
                .collect();
            let path = Path::from_steps(dim, &steps).unwrap();
            let w = interaction_weight(&path, 0, n, lambda).unwrap();
            out.add_at(path.endpoint(), w);
        }
        out
    }

    #[test]
    fn step_distribution_shape() {
        let d1 = step_distribution::<Rational>(1);
        assert_eq!(d1.len(), 2);
        assert_eq!(d1.get(&Point::new(&[1]).unwrap()), r(1, 2));
        assert_eq!(d1.get(&Point::new(&[-1]).unwrap()), r(1, 2));
        let d2 = step_distribution::<Rational>(2);
        assert_eq!(d2.len(), 4);
        assert!(d2.iter().all(|(_, w)| *w == r(1, 4)));
        for d in 1..=5 {
            let (g, gbar) = step_distribution::<Rational>(d).mass_and_moment();
            assert_eq!((g, gbar), (r(1, 1), r(1, 1)));
            assert_eq!(step_distribution::<f64>(d).parity(), Some(Parity::Odd));
        }
    }

    #[test]
    fn interaction_weight_cases() {
        let lambda = r(1, 3);
        let straight = Path::from_steps(2, &[(0, true), (0, true), (1, true)]).unwrap();
        assert_eq!(interaction_weight(&straight, 0, 3, &lambda).unwrap(), r(1, 1));
        let back = Path::from_steps(2, &[(0, true), (0, false)]).unwrap();
        assert_eq!(interaction_weight(&back, 0, 2, &lambda).unwrap(), r(2, 3));
        assert_eq!(interaction_weight(&back, 1, 1, &lambda).unwrap(), r(1, 1));
        assert_eq!(interaction_weight(&back, 0, 2, &r(1, 1)).unwrap(), r(0, 1));
        assert!(interaction_weight(&back, 2, 1, &lambda).is_err());
        assert!(interaction_weight(&back, 0, 3, &lambda).is_err());
    }

    #[test]
    fn path_validation() {
        let o = Point::origin(2);
        let far = Point::new(&[2, 0]).unwrap();
        assert!(Path::new(vec![o, far]).is_err());
        assert!(Path::new(vec![far]).is_err());
        assert!(Path::from_steps(2, &[(2, true)]).is_err());
    }

    #[test]
    fn canonical_counts_match_brute_force() {
        // counted directly from the canonical-move rule
        fn count(dim: usize, n: usize, used: usize) -> u128 {
            if n == 0 {
                return 1;
            }
            let mut total = 0;
            for axis in 0..dim.min(used + 1) {
                let signs = if axis < used { 2 } else { 1 };
                total += signs as u128 * count(dim, n - 1, used.max(axis + 1));
            }
            total
        }
        for dim in 1..=5 {
            for n in 0..=7 {
                assert_eq!(canonical_path_count(dim, n), count(dim, n, 0), "d={dim} n={n}");
            }
        }
    }

    #[test]
    fn symmetry_reduced_enumeration_matches_brute_force() {
        for (dim, n) in [(1, 6), (2, 5), (3, 4)] {
            let table = ConnectivityTable::enumerate(dim, n, DEFAULT_BUDGET).unwrap();
            for lambda in [r(0, 1), r(1, 2), r(1, 1)] {
                for k in 0..=n {
                    let fast = table.measure(k, &lambda).unwrap();
                    let brute = brute_connectivity(dim, k, &lambda);
                    assert_eq!(fast, brute, "d={dim} n={k} lambda={lambda}");
                    assert_eq!(table.mass(k, &lambda), brute.mass());
                }
            }
        }
    }

    #[test]
    fn first_and_second_connectivity() {
        for dim in [1usize, 2, 5] {
            let table = ConnectivityTable::enumerate(dim, 2, DEFAULT_BUDGET).unwrap();
            for lambda in [r(1, 10), r(1, 2), r(1, 1)] {
                let c1 = table.measure(1, &lambda).unwrap();
                assert_eq!(c1.len(), 2 * dim);
                assert!(c1.iter().all(|(p, w)| p.norm1() == 1 && *w == r(1, 1)));
                let two_d = Rational::from_i64(2 * dim as i64);
                assert_eq!(table.mass(2, &lambda), two_d.clone() * (two_d - lambda.clone()));
            }
            assert_eq!(table.measure(0, &r(1, 2)).unwrap(), SignedMeasure::delta(dim));
        }
    }

    #[test]
    fn simple_walk_limit() {
        let dim = 2;
        let table = ConnectivityTable::enumerate(dim, 6, DEFAULT_BUDGET).unwrap();
        let step = step_distribution::<Rational>(dim).scale(&Rational::from_i64(4));
        for n in 0..=6 {
            let srw = convolution_power(&step, n).unwrap();
            assert_eq!(table.measure(n, &r(0, 1)).unwrap(), srw);
        }
    }

    #[test]
    fn strict_saw_counts() {
        // square lattice self-avoiding walk counts
        let table = ConnectivityTable::enumerate(2, 8, DEFAULT_BUDGET).unwrap();
        let saw = [1u64, 4, 12, 36, 100, 284, 780, 2172, 5916];
        for (n, &c) in saw.iter().enumerate() {
            assert_eq!(table.mass(n, &r(1, 1)), Rational::from_i64(c as i64));
        }
        // cubic lattice
        let table = ConnectivityTable::enumerate(3, 6, DEFAULT_BUDGET).unwrap();
        let saw = [1u64, 6, 30, 150, 726, 3534, 16926];
        for (n, &c) in saw.iter().enumerate() {
            assert_eq!(table.mass(n, &r(1, 1)), Rational::from_i64(c as i64));
        }
    }

    #[test]
    fn budget_is_enforced() {
        let err = ConnectivityTable::enumerate(5, 12, 1_000).unwrap_err();
        match err {
            Error::BudgetExceeded { required, budget } => {
                assert_eq!(budget, 1_000);
                assert_eq!(required, enumeration_cost(5, 12));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn parallel_and_serial_paths_agree() {
        // n_max = 3 runs serially, larger n_max splits into prefixes
        let a = ConnectivityTable::enumerate(3, 3, DEFAULT_BUDGET).unwrap();
        let b = ConnectivityTable::enumerate(3, 6, DEFAULT_BUDGET).unwrap();
        for n in 0..=3 {
            assert_eq!(
                a.measure(n, &r(1, 3)).unwrap(),
                b.measure(n, &r(1, 3)).unwrap()
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn connectivity_invariants(dim in 1usize..=3, n in 0usize..=5, p in 0i64..=6, q in 0i64..=6) {
            let (l1, l2) = (r(p.min(q), 6), r(p.max(q), 6));
            let table = ConnectivityTable::enumerate(dim, n, DEFAULT_BUDGET).unwrap();
            let c1 = table.measure(n, &l1).unwrap();
            let c2 = table.measure(n, &l2).unwrap();
            prop_assert!(c1.is_symmetric(0.0));
            prop_assert_eq!(c1.support_parity(), Some(Parity::of(n as i64)));
            for (x, w1) in c1.iter() {
                let w2 = c2.get(x);
                prop_assert!(*w1 >= w2);
                prop_assert!(w2 >= r(0, 1));
            }
            let bound = Rational::from_i64((2 * dim as i64).pow(n as u32));
            prop_assert!(c1.mass() <= bound);
        }
    }
}
