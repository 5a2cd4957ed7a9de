//! Sparse signed measures on Z^d.
//!
//! A [`SignedMeasure`] is a finitely supported map from lattice points to
//! weights. Points are packed into fixed-width `i16` lanes so that hashing
//! and comparison stay cheap for the hollow supports produced by walk
//! enumeration.

mod gaussian;
mod symmetric;

pub use gaussian::{
    check_folding, check_gaussian_sums, gaussian, gaussian_density, FoldingReport, GaussianSpec,
    GaussianSumReport, GaussianSumRow,
};
pub use symmetric::{canonical_points_l1, convolve_symmetric, SymmetricMeasure};

use std::fmt;
use std::hash::{Hash, Hasher};
use std::ops::{Add, Neg, Sub};

use rustc_hash::FxHashMap;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAX_DIM: usize = 8;

/// A point of Z^d, 1 <= d <= [`MAX_DIM`].
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Point {
    dim: u8,
    lanes: [i16; MAX_DIM],
}

impl Hash for Point {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u128(self.pack());
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.coords())
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords().iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

pub(crate) fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 || dim > MAX_DIM {
        Err(Error::UnsupportedDimension(dim))
    } else {
        Ok(())
    }
}

impl Point {
    pub fn new(coords: &[i64]) -> Result<Self> {
        check_dim(coords.len())?;
        let mut lanes = [0i16; MAX_DIM];
        for (lane, &c) in lanes.iter_mut().zip(coords) {
            *lane = i16::try_from(c).map_err(|_| Error::CoordinateOverflow(c))?;
        }
        Ok(Point {
            dim: coords.len() as u8,
            lanes,
        })
    }

    pub fn origin(dim: usize) -> Self {
        debug_assert!((1..=MAX_DIM).contains(&dim));
        Point {
            dim: dim as u8,
            lanes: [0; MAX_DIM],
        }
    }

    /// `sign * e_axis`.
    pub fn unit(dim: usize, axis: usize, positive: bool) -> Self {
        let mut p = Point::origin(dim);
        p.lanes[axis] = if positive { 1 } else { -1 };
        p
    }

    pub(crate) fn from_lanes(dim: usize, lanes: [i16; MAX_DIM]) -> Self {
        Point {
            dim: dim as u8,
            lanes,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn coords(&self) -> &[i16] {
        &self.lanes[..self.dim as usize]
    }

    pub fn coord(&self, axis: usize) -> i64 {
        self.lanes[axis] as i64
    }

    pub fn to_vec(&self) -> Vec<i64> {
        self.coords().iter().map(|&c| c as i64).collect()
    }

    /// Packed key: one 16-bit lane per coordinate.
    pub fn pack(&self) -> u128 {
        self.lanes
            .iter()
            .enumerate()
            .fold(0u128, |acc, (i, &c)| acc | ((c as u16 as u128) << (16 * i)))
    }

    pub fn norm1(&self) -> i64 {
        self.coords().iter().map(|&c| (c as i64).abs()).sum()
    }

    pub fn norm_inf(&self) -> i64 {
        self.coords()
            .iter()
            .map(|&c| (c as i64).abs())
            .max()
            .unwrap_or(0)
    }

    /// Squared euclidean norm.
    pub fn norm2_sq(&self) -> i64 {
        self.coords().iter().map(|&c| (c as i64) * (c as i64)).sum()
    }

    pub fn parity(&self) -> Parity {
        Parity::of(self.norm1())
    }

    /// Orbit representative under the hyperoctahedral group: absolute
    /// values sorted in non-increasing order.
    pub fn canonical(&self) -> Point {
        let mut out = *self;
        let d = self.dim();
        for c in &mut out.lanes[..d] {
            *c = c.abs();
        }
        out.lanes[..d].sort_unstable_by(|a, b| b.cmp(a));
        out
    }

    pub fn is_canonical(&self) -> bool {
        let c = self.coords();
        c.iter().all(|&v| v >= 0) && c.windows(2).all(|w| w[0] >= w[1])
    }

    /// Size of the hyperoctahedral orbit: d!/prod(mult!) * 2^(nonzero).
    pub fn orbit_size(&self) -> u64 {
        let canon = self.canonical();
        let c = canon.coords();
        let mut size = factorial(c.len());
        let mut i = 0;
        while i < c.len() {
            let mut j = i;
            while j < c.len() && c[j] == c[i] {
                j += 1;
            }
            size /= factorial(j - i);
            i = j;
        }
        size << c.iter().filter(|&&v| v != 0).count()
    }

    /// All distinct images of this point under coordinate permutations and
    /// sign flips, in sorted order.
    pub fn orbit(&self) -> Vec<Point> {
        let d = self.dim();
        let canon = self.canonical();
        let mut perm: Vec<i16> = canon.coords().to_vec();
        perm.sort_unstable();
        let mut out = Vec::with_capacity(self.orbit_size() as usize);
        loop {
            let nonzero: Vec<usize> = (0..d).filter(|&i| perm[i] != 0).collect();
            for mask in 0u32..(1u32 << nonzero.len()) {
                let mut lanes = [0i16; MAX_DIM];
                lanes[..d].copy_from_slice(&perm);
                for (bit, &i) in nonzero.iter().enumerate() {
                    if mask & (1 << bit) != 0 {
                        lanes[i] = -lanes[i];
                    }
                }
                out.push(Point::from_lanes(d, lanes));
            }
            if !next_permutation(&mut perm) {
                break;
            }
        }
        out.sort_unstable();
        out
    }

    /// Images under the generators of the hyperoctahedral group: each sign
    /// flip and each adjacent transposition.
    pub(crate) fn generator_images(&self) -> impl Iterator<Item = Point> + '_ {
        let d = self.dim();
        let flips = (0..d).map(move |i| {
            let mut p = *self;
            p.lanes[i] = -p.lanes[i];
            p
        });
        let swaps = (0..d.saturating_sub(1)).map(move |i| {
            let mut p = *self;
            p.lanes.swap(i, i + 1);
            p
        });
        flips.chain(swaps)
    }
}

impl Add for Point {
    type Output = Point;

    fn add(mut self, rhs: Point) -> Point {
        debug_assert_eq!(self.dim, rhs.dim);
        for (a, b) in self.lanes.iter_mut().zip(rhs.lanes.iter()) {
            *a += *b;
        }
        self
    }
}

impl Sub for Point {
    type Output = Point;

    fn sub(mut self, rhs: Point) -> Point {
        debug_assert_eq!(self.dim, rhs.dim);
        for (a, b) in self.lanes.iter_mut().zip(rhs.lanes.iter()) {
            *a -= *b;
        }
        self
    }
}

impl Neg for Point {
    type Output = Point;

    fn neg(mut self) -> Point {
        for a in self.lanes.iter_mut() {
            *a = -*a;
        }
        self
    }
}

fn factorial(n: usize) -> u64 {
    (1..=n as u64).product()
}

fn next_permutation<T: Ord>(v: &mut [T]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Visits every point with `|x|_inf <= radius`.
pub fn for_each_in_box(dim: usize, radius: i64, mut f: impl FnMut(Point)) {
    let r = radius as i16;
    let mut lanes = [0i16; MAX_DIM];
    for l in &mut lanes[..dim] {
        *l = -r;
    }
    loop {
        f(Point::from_lanes(dim, lanes));
        let mut i = 0;
        loop {
            if i == dim {
                return;
            }
            if lanes[i] < r {
                lanes[i] += 1;
                break;
            }
            lanes[i] = -r;
            i += 1;
        }
    }
}

/// Visits the canonical representatives (non-negative, non-increasing
/// coordinates) of all points with `|x|_inf <= radius`.
pub fn for_each_canonical_in_box(dim: usize, radius: i64, mut f: impl FnMut(Point)) {
    fn rec(
        lanes: &mut [i16; MAX_DIM],
        dim: usize,
        pos: usize,
        upper: i16,
        f: &mut dyn FnMut(Point),
    ) {
        if pos == dim {
            f(Point::from_lanes(dim, *lanes));
            return;
        }
        for v in 0..=upper {
            lanes[pos] = v;
            rec(lanes, dim, pos + 1, v, f);
        }
        lanes[pos] = 0;
    }
    let mut lanes = [0i16; MAX_DIM];
    rec(&mut lanes, dim, 0, radius as i16, &mut f);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn of(n: i64) -> Parity {
        if n.rem_euclid(2) == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    pub fn compose(self, other: Parity) -> Parity {
        if self == other {
            Parity::Even
        } else {
            Parity::Odd
        }
    }
}

/// Finitely supported signed measure on Z^d.
#[derive(Clone, Debug)]
pub struct SignedMeasure<T> {
    dim: usize,
    entries: FxHashMap<Point, T>,
    parity: Option<Parity>,
}

impl<T: Scalar> PartialEq for SignedMeasure<T> {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.entries == other.entries
    }
}

impl<T: Scalar> SignedMeasure<T> {
    pub fn zero(dim: usize) -> Self {
        SignedMeasure {
            dim,
            entries: FxHashMap::default(),
            parity: None,
        }
    }

    /// Unit mass at the origin.
    pub fn delta(dim: usize) -> Self {
        let mut m = Self::zero(dim);
        m.entries.insert(Point::origin(dim), T::one());
        m.parity = Some(Parity::Even);
        m
    }

    /// Duplicate points are summed; zero weights are dropped.
    pub fn from_entries(dim: usize, entries: impl IntoIterator<Item = (Point, T)>) -> Result<Self> {
        check_dim(dim)?;
        let mut m = Self::zero(dim);
        for (p, w) in entries {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch {
                    left: dim,
                    right: p.dim(),
                });
            }
            m.add_at(p, w);
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn parity(&self) -> Option<Parity> {
        self.parity
    }

    /// Tags the measure with a parity after checking the support.
    pub fn with_parity(mut self, parity: Parity) -> Result<Self> {
        if let Some(p) = self.entries.keys().find(|p| p.parity() != parity) {
            return Err(Error::InvalidArgument(format!(
                "support point {p} contradicts parity {parity:?}"
            )));
        }
        self.parity = Some(parity);
        Ok(self)
    }

    /// Parity shared by the whole support, if any.
    pub fn support_parity(&self) -> Option<Parity> {
        let mut it = self.entries.keys().map(Point::parity);
        let first = it.next()?;
        it.all(|p| p == first).then_some(first)
    }

    /// Sets the parity tag from the support (cleared if mixed).
    pub fn infer_parity(mut self) -> Self {
        self.parity = self.support_parity();
        self
    }

    pub fn get(&self, p: &Point) -> T {
        self.entries.get(p).cloned().unwrap_or_else(T::zero)
    }

    pub fn get_ref(&self, p: &Point) -> Option<&T> {
        self.entries.get(p)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Point, &T)> {
        self.entries.iter()
    }

    pub fn support(&self) -> impl Iterator<Item = &Point> {
        self.entries.keys()
    }

    /// Entries in lexicographic point order.
    pub fn sorted_entries(&self) -> Vec<(Point, T)> {
        let mut v: Vec<(Point, T)> = self
            .entries
            .iter()
            .map(|(p, w)| (*p, w.clone()))
            .collect();
        v.sort_unstable_by_key(|a| a.0);
        v
    }

    /// Adds `w` at `p`, removing the entry if the result is exactly zero.
    pub fn add_at(&mut self, p: Point, w: T) {
        if w.is_zero() {
            return;
        }
        use std::collections::hash_map::Entry;
        match self.entries.entry(p) {
            Entry::Occupied(mut e) => {
                let v = e.get().clone() + w;
                if v.is_zero() {
                    e.remove();
                } else {
                    *e.get_mut() = v;
                }
            }
            Entry::Vacant(e) => {
                e.insert(w);
            }
        }
        self.parity = None;
    }

    pub fn mass(&self) -> T {
        self.entries.values().fold(T::zero(), |acc, w| acc + w.clone())
    }

    /// Second moment: sum of |x|^2 G(x).
    pub fn second_moment(&self) -> T {
        self.entries.iter().fold(T::zero(), |acc, (p, w)| {
            acc + T::from_i64(p.norm2_sq()) * w.clone()
        })
    }

    /// Total mass g and second moment g_bar.
    pub fn mass_and_moment(&self) -> (T, T) {
        (self.mass(), self.second_moment())
    }

    /// Sum of |x|^4 |G(x)|.
    pub fn abs_fourth_moment(&self) -> T {
        self.entries.iter().fold(T::zero(), |acc, (p, w)| {
            let r2 = T::from_i64(p.norm2_sq());
            acc + r2.clone() * r2 * w.abs()
        })
    }

    pub fn total_variation(&self) -> T {
        self.entries.values().fold(T::zero(), |acc, w| acc + w.abs())
    }

    /// Largest `|x|_inf` over the support.
    pub fn range(&self) -> i64 {
        self.entries.keys().map(Point::norm_inf).max().unwrap_or(0)
    }

    pub fn scale(&self, factor: &T) -> Self {
        if factor.is_zero() {
            return Self::zero(self.dim);
        }
        SignedMeasure {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .map(|(p, w)| (*p, w.clone() * factor.clone()))
                .filter(|(_, w)| !w.is_zero())
                .collect(),
            parity: self.parity,
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.combine(other, false)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.combine(other, true)
    }

    fn combine(&self, other: &Self, negate: bool) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                left: self.dim,
                right: other.dim,
            });
        }
        let mut out = self.clone();
        for (p, w) in other.entries.iter() {
            let w = if negate { -w.clone() } else { w.clone() };
            out.add_at(*p, w);
        }
        out.parity = match (self.parity, other.parity) {
            (Some(a), Some(b)) if a == b => Some(a),
            _ => None,
        };
        Ok(out)
    }

    /// Adds `factor * other` in place.
    pub fn add_scaled(&mut self, other: &Self, factor: &T) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                left: self.dim,
                right: other.dim,
            });
        }
        if factor.is_zero() {
            return Ok(());
        }
        let keep = match (self.parity, other.parity) {
            (Some(a), Some(b)) if a == b => Some(a),
            _ if self.is_empty() => other.parity,
            _ => None,
        };
        for (p, w) in other.entries.iter() {
            self.add_at(*p, w.clone() * factor.clone());
        }
        self.parity = keep;
        Ok(())
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U) -> SignedMeasure<U> {
        SignedMeasure {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .map(|(p, w)| (*p, f(w)))
                .filter(|(_, w)| !w.is_zero())
                .collect(),
            parity: self.parity,
        }
    }

    pub fn to_f64(&self) -> SignedMeasure<f64> {
        self.map(|w| w.to_f64())
    }

    /// Largest violation of invariance under sign flips and coordinate
    /// permutations (0 for members of the symmetric class).
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for (p, w) in self.entries.iter() {
            for q in p.generator_images() {
                let diff = (w.clone() - self.get(&q)).to_f64().abs();
                worst = worst.max(diff);
            }
        }
        worst
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if T::EXACT {
            self.entries
                .iter()
                .all(|(p, w)| p.generator_images().all(|q| self.get(&q) == *w))
        } else {
            self.symmetry_defect() <= tol
        }
    }

    /// Checks the parity tag against the support.
    pub fn parity_consistent(&self) -> bool {
        match self.parity {
            None => true,
            Some(par) => self.entries.keys().all(|p| p.parity() == par),
        }
    }

    /// Largest pointwise |self - other| over the union of supports.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut worst = 0.0f64;
        for (p, w) in self.entries.iter() {
            worst = worst.max((w.clone() - other.get(p)).to_f64().abs());
        }
        for (p, w) in other.entries.iter() {
            if !self.entries.contains_key(p) {
                worst = worst.max(w.to_f64().abs());
            }
        }
        worst
    }

    /// First point where the two measures differ exactly, if any.
    pub fn first_difference(&self, other: &Self) -> Option<(Point, T, T)> {
        let mut keys: Vec<Point> = self
            .entries
            .keys()
            .chain(other.entries.keys())
            .copied()
            .collect();
        keys.sort_unstable();
        keys.dedup();
        keys.into_iter().find_map(|p| {
            let (a, b) = (self.get(&p), other.get(&p));
            (a != b).then_some((p, a, b))
        })
    }

    /// `{"dim": d, "entries": [[x1, ..., xd, weight], ...]}` in point order.
    pub fn to_json(&self) -> Value {
        let entries: Vec<Value> = self
            .sorted_entries()
            .into_iter()
            .map(|(p, w)| {
                let mut row: Vec<Value> = p.coords().iter().map(|&c| json!(c)).collect();
                row.push(w.to_json());
                Value::Array(row)
            })
            .collect();
        json!({ "dim": self.dim, "entries": entries })
    }

    pub fn from_json(value: &Value) -> Result<Self> {
        let bad = |msg: &str| Error::InvalidArgument(format!("measure json: {msg}"));
        let dim = value
            .get("dim")
            .and_then(Value::as_u64)
            .ok_or_else(|| bad("missing dim"))? as usize;
        check_dim(dim)?;
        let rows = value
            .get("entries")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("missing entries"))?;
        let mut out = Self::zero(dim);
        for row in rows {
            let row = row.as_array().ok_or_else(|| bad("entry is not an array"))?;
            if row.len() != dim + 1 {
                return Err(bad("entry length does not match dim"));
            }
            let coords: Vec<i64> = row[..dim]
                .iter()
                .map(|v| v.as_i64().ok_or_else(|| bad("non-integer coordinate")))
                .collect::<Result<_>>()?;
            let w = match &row[dim] {
                Value::String(s) => T::parse_scalar(s)?,
                Value::Number(n) => T::parse_scalar(&n.to_string())?,
                _ => return Err(bad("weight must be a number or string")),
            };
            out.add_at(Point::new(&coords)?, w);
        }
        Ok(out.infer_parity())
    }
}

/// Discrete folding `(G * H)(x) = sum_y G(y) H(x - y)`.
pub fn convolve<T: Scalar>(g: &SignedMeasure<T>, h: &SignedMeasure<T>) -> Result<SignedMeasure<T>> {
    if g.dim != h.dim {
        return Err(Error::DimensionMismatch {
            left: g.dim,
            right: h.dim,
        });
    }
    let (small, large) = if g.len() <= h.len() { (g, h) } else { (h, g) };
    let mut acc: FxHashMap<Point, T> = FxHashMap::default();
    acc.reserve(large.len() + large.len() / 2);
    for (y, gy) in small.sorted_entries() {
        for (z, hz) in large.entries.iter() {
            let w = gy.clone() * hz.clone();
            match acc.get_mut(&(y + *z)) {
                Some(v) => *v = v.clone() + w,
                None => {
                    acc.insert(y + *z, w);
                }
            }
        }
    }
    acc.retain(|_, w| !w.is_zero());
    let parity = match (g.parity, h.parity) {
        (Some(a), Some(b)) => Some(a.compose(b)),
        _ => None,
    };
    Ok(SignedMeasure {
        dim: g.dim,
        entries: acc,
        parity,
    })
}

/// `G^{*n}` by repeated folding; `G^{*0} = delta_0`.
pub fn convolution_power<T: Scalar>(g: &SignedMeasure<T>, n: usize) -> Result<SignedMeasure<T>> {
    let mut acc = SignedMeasure::delta(g.dim);
    for _ in 0..n {
        acc = convolve(&acc, g)?;
    }
    Ok(acc)
}
