//! Fixed-point iteration for the mass constants `a_n`.
//!
//! Given a kernel `b_2, b_3, ...` and `lambda`, the sequence `a` with
//! `a_0 = 1` and
//!
//! ```text
//! a_n = (1 - lambda rho) a_{n-1} + lambda sum_{m=2}^n a_m b_m a_{n-m},
//! rho = sum_m a_m b_m
//! ```
//!
//! is the fixed point of the sequence map [`tilde_map`], which contracts in
//! the difference norm `sum_n |g_n - g_{n-1}|` for small `lambda beta`,
//! `beta = sum_m m |b_m|`. All infinite sums are cut at the kernel length.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default convergence tolerance on the difference norm.
pub const DEFAULT_TOL: f64 = 1e-12;
/// Default cap on the number of sweeps.
pub const MAX_SWEEPS: usize = 10_000;
/// Distances below this are treated as converged noise when measuring
/// contraction.
const NOISE_FLOOR: f64 = 1e-13;

/// A finite sequence `g_0, ..., g_{n_max}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RealSequence<T = f64> {
    values: Vec<T>,
}

impl<T: Scalar> RealSequence<T> {
    pub fn new(values: Vec<T>) -> Self {
        RealSequence { values }
    }

    pub fn constant(value: T, n_max: usize) -> Self {
        RealSequence {
            values: vec![value; n_max + 1],
        }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn get(&self, n: usize) -> &T {
        &self.values[n]
    }

    /// Largest index `n_max`.
    pub fn n_max(&self) -> usize {
        self.values.len() - 1
    }

    /// `(Delta g)_0 = g_0`, `(Delta g)_n = g_n - g_{n-1}`.
    pub fn differences(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.values.len());
        let mut prev = T::zero();
        for v in &self.values {
            out.push(v.clone() - prev);
            prev = v.clone();
        }
        out
    }

    /// `sum_n |(Delta g)_n|`.
    pub fn delta_norm(&self) -> T {
        self.differences()
            .into_iter()
            .fold(T::zero(), |acc, d| acc + d.abs())
    }

    pub fn sup_norm(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |acc, v| if v.abs() > acc { v.abs() } else { acc })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.values.len() != other.values.len() {
            return Err(Error::InvalidArgument(format!(
                "sequence lengths differ: {} vs {}",
                self.values.len(),
                other.values.len()
            )));
        }
        Ok(RealSequence {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a.clone() - b.clone())
                .collect(),
        })
    }

    pub fn to_f64(&self) -> RealSequence<f64> {
        RealSequence {
            values: self.values.iter().map(Scalar::to_f64).collect(),
        }
    }

    /// CSV rows `n,g_n,(Delta g)_n`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,a_n,delta_a_n\n");
        for (n, (v, d)) in self.values.iter().zip(self.differences()).enumerate() {
            out.push_str(&format!("{n},{v},{d}\n"));
        }
        out
    }
}

/// Kernel `b_1, ..., b_{m_max}`; index 0 is unused and kept at zero.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelSequence<T = f64> {
    b: Vec<T>,
}

impl<T: Scalar> KernelSequence<T> {
    /// Builds a kernel from `b_1, ..., b_{m_max}`.
    pub fn new(b: Vec<T>) -> Self {
        let mut full = Vec::with_capacity(b.len() + 1);
        full.push(T::zero());
        full.extend(b);
        KernelSequence { b: full }
    }

    /// The kernel with `b_m = 0` for `1 <= m <= m_max`.
    pub fn zero(m_max: usize) -> Self {
        KernelSequence {
            b: vec![T::zero(); m_max + 1],
        }
    }

    pub fn m_max(&self) -> usize {
        self.b.len() - 1
    }

    /// `b_m`, zero beyond the stored range.
    pub fn get(&self, m: usize) -> T {
        self.b.get(m).cloned().unwrap_or_else(T::zero)
    }

    /// `beta = sum_m m |b_m|`.
    pub fn beta(&self) -> T {
        self.b
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (m, v)| acc + T::from_i64(m as i64) * v.abs())
    }

    /// `sum_{m > k} m |b_m|` over the stored entries.
    pub fn tail(&self, k: usize) -> T {
        self.b
            .iter()
            .enumerate()
            .skip(k + 1)
            .fold(T::zero(), |acc, (m, v)| acc + T::from_i64(m as i64) * v.abs())
    }

    /// The kernel cut at `k`.
    pub fn truncated(&self, k: usize) -> Self {
        KernelSequence {
            b: self.b[..=k.min(self.m_max())].to_vec(),
        }
    }

    /// `sup_m m^p |b_m|`, the smallest constant in `|b_m| <= c m^{-p}`.
    pub fn decay_constant(&self, p: f64) -> f64 {
        self.b
            .iter()
            .enumerate()
            .skip(1)
            .map(|(m, v)| (m as f64).powf(p) * v.to_f64().abs())
            .fold(0.0, f64::max)
    }

    pub fn to_f64(&self) -> KernelSequence<f64> {
        KernelSequence {
            b: self.b.iter().map(Scalar::to_f64).collect(),
        }
    }
}

/// `sum_{m > k} m^{1-p}` for `p > 2`, by direct summation plus an integral
/// tail.
pub fn power_tail(k: usize, p: f64) -> f64 {
    const DIRECT: usize = 100_000;
    let direct: f64 = (k + 1..=k + DIRECT).map(|m| (m as f64).powf(1.0 - p)).sum();
    let x = (k + DIRECT) as f64 + 0.5;
    direct + x.powf(2.0 - p) / (p - 2.0)
}

/// One application of the sequence map.
///
/// `out_0 = g_0` and
/// `out_n = out_{n-1} - lambda [ sum_{m=2}^{n} g_m b_m (g_{n-1} - g_{n-m})
///                             + g_{n-1} sum_{j > n} g_j b_j ]`,
/// with kernel sums cut at `min(m_max, len(g) - 1)`.
pub fn tilde_map<T: Scalar>(g: &RealSequence<T>, b: &KernelSequence<T>, lambda: &T) -> RealSequence<T> {
    let n_max = g.n_max();
    let k = b.m_max().min(n_max);
    let gv = &g.values;
    let gb: Vec<T> = (0..=k).map(|m| gv[m].clone() * b.get(m)).collect();
    // suffix[n] = sum_{j >= n, j <= k} g_j b_j
    let mut suffix = vec![T::zero(); k + 2];
    for j in (0..=k).rev() {
        suffix[j] = suffix[j + 1].clone() + gb[j].clone();
    }
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(gv[0].clone());
    for n in 1..=n_max {
        let mut bracket = T::zero();
        for m in 2..=n.min(k) {
            bracket = bracket + gb[m].clone() * (gv[n - 1].clone() - gv[n - m].clone());
        }
        if n < k {
            bracket = bracket + gv[n - 1].clone() * suffix[n + 1].clone();
        }
        let prev = out[n - 1].clone();
        out.push(prev - lambda.clone() * bracket);
    }
    RealSequence { values: out }
}

/// Pointwise residual of the fixed-point equation, with sums cut at
/// `min(m_max, n_max)`.
pub fn fixed_point_residual<T: Scalar>(a: &RealSequence<T>, b: &KernelSequence<T>, lambda: &T) -> Vec<T> {
    let n_max = a.n_max();
    let k = b.m_max().min(n_max);
    let av = &a.values;
    let rho = (2..=k).fold(T::zero(), |acc, m| acc + av[m].clone() * b.get(m));
    let decay = T::one() - lambda.clone() * rho;
    let mut out = vec![av[0].clone() - T::one()];
    for n in 1..=n_max {
        let conv = (2..=n.min(k)).fold(T::zero(), |acc, m| {
            acc + av[m].clone() * b.get(m) * av[n - m].clone()
        });
        out.push(av[n].clone() - decay.clone() * av[n - 1].clone() - lambda.clone() * conv);
    }
    out
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_sweeps: usize,
    /// Run even when `lambda` exceeds the guaranteed contraction bound.
    pub force: bool,
    /// Starting sequence; defaults to all ones.
    pub start: Option<RealSequence<f64>>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: DEFAULT_TOL,
            max_sweeps: MAX_SWEEPS,
            force: false,
            start: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MassSolution {
    pub a: RealSequence<f64>,
    pub lambda: f64,
    pub beta: f64,
    /// `1 / (9 beta)`, the guaranteed contraction bound on `lambda`.
    pub lambda_bound: f64,
    /// False for forced runs outside the guaranteed regime.
    pub guaranteed: bool,
    pub sweeps: usize,
    /// Difference-norm distance between successive iterates, per sweep.
    pub distances: Vec<f64>,
    /// Largest ratio of successive distances above the noise floor.
    pub contraction_factor: f64,
    pub max_residual: f64,
    /// `1/2 <= a_n <= 3/2` for all n.
    pub within_bounds: bool,
    pub delta_norm: f64,
    /// `sum_{m > n_max} m |b_m|` for kernel entries beyond the sequence.
    pub tail: f64,
}

fn admissible_bound(beta: f64) -> f64 {
    if beta == 0.0 {
        f64::INFINITY
    } else {
        1.0 / (9.0 * beta)
    }
}

/// Iterates [`tilde_map`] to its fixed point.
pub fn solve_mass_sequence(
    b: &KernelSequence<f64>,
    lambda: f64,
    n_max: usize,
    opts: &SolveOptions,
) -> Result<MassSolution> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!("lambda = {lambda} outside [0, 1]")));
    }
    let beta = b.beta();
    let bound = admissible_bound(beta);
    if lambda > bound && !opts.force {
        return Err(Error::NotContractive { lambda, bound });
    }
    let mut g = match &opts.start {
        Some(s) if s.n_max() != n_max => {
            return Err(Error::InvalidArgument(format!(
                "start sequence has n_max {} but {n_max} was requested",
                s.n_max()
            )))
        }
        Some(s) => s.clone(),
        None => RealSequence::constant(1.0, n_max),
    };
    let mut distances = Vec::new();
    let mut contraction: f64 = 0.0;
    let mut converged = false;
    for sweep in 1..=opts.max_sweeps {
        let next = tilde_map(&g, b, &lambda);
        let dist = next.sub(&g)?.delta_norm();
        g = next;
        if let Some(&prev) = distances.last() {
            if prev > NOISE_FLOOR && dist > NOISE_FLOOR {
                if dist > prev {
                    return Err(Error::NonContraction {
                        sweep,
                        previous: prev,
                        current: dist,
                    });
                }
                contraction = contraction.max(dist / prev);
            }
        }
        distances.push(dist);
        if dist < opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            sweeps: opts.max_sweeps,
            distance: distances.last().copied().unwrap_or(f64::NAN),
        });
    }
    let max_residual = fixed_point_residual(&g, b, &lambda)
        .into_iter()
        .fold(0.0f64, |acc, r| acc.max(r.abs()));
    let within_bounds = g.values.iter().all(|v| (0.5..=1.5).contains(v));
    Ok(MassSolution {
        lambda,
        beta,
        lambda_bound: bound,
        guaranteed: lambda <= bound,
        sweeps: distances.len(),
        distances,
        contraction_factor: contraction,
        max_residual,
        within_bounds,
        delta_norm: g.delta_norm(),
        tail: b.tail(n_max),
        a: g,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Connective {
    pub mu: f64,
    pub alpha: f64,
    /// `sum_m a_m b_m`.
    pub rho: f64,
    /// `sum_m (m - 1) a_m b_m`.
    pub sigma: f64,
    /// Kernel mass beyond the sequence range, `sum_{m > n_max} m |b_m|`.
    pub tail: f64,
}

/// `mu = step_mass / (1 - lambda rho)` and `alpha = 1 / (1 + lambda sigma)`.
pub fn connective_alpha(
    a: &RealSequence<f64>,
    b: &KernelSequence<f64>,
    lambda: f64,
    step_mass: f64,
) -> Result<Connective> {
    let k = b.m_max().min(a.n_max());
    let (mut rho, mut sigma) = (0.0, 0.0);
    for m in 2..=k {
        let ab = a.values[m] * b.get(m);
        rho += ab;
        sigma += (m as f64 - 1.0) * ab;
    }
    let (den_mu, den_alpha) = (1.0 - lambda * rho, 1.0 + lambda * sigma);
    if den_mu <= 0.0 || den_alpha <= 0.0 {
        return Err(Error::Perturbative(format!(
            "1 - lambda rho = {den_mu}, 1 + lambda sigma = {den_alpha}"
        )));
    }
    Ok(Connective {
        mu: step_mass / den_mu,
        alpha: 1.0 / den_alpha,
        rho,
        sigma,
        tail: b.tail(a.n_max()),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct RateReport {
    pub eps: f64,
    pub beta_prime: f64,
    pub alpha: f64,
    /// `sup_{n >= 1} |(Delta a)_n| n^{1 + eps}`.
    pub difference_constant: f64,
    /// `sup_{n >= 1} |alpha - a_n| n^eps`.
    pub limit_constant: f64,
    pub finite: bool,
}

/// Empirical constants of the decay `|(Delta a)_n| = O(n^{-1-eps})` and
/// `|alpha - a_n| = O(n^{-eps})`, after checking
/// `|b_m| <= beta_prime m^{-2-eps}` on the kernel.
pub fn rate_check(
    a: &RealSequence<f64>,
    b: &KernelSequence<f64>,
    lambda: f64,
    eps: f64,
    beta_prime: f64,
) -> Result<RateReport> {
    for m in 2..=b.m_max() {
        let value = b.get(m).abs();
        let bound = beta_prime * (m as f64).powf(-2.0 - eps);
        if value > bound * (1.0 + 1e-12) {
            return Err(Error::KernelDecay { m, value, bound });
        }
    }
    let alpha = connective_alpha(a, b, lambda, 1.0)?.alpha;
    let diffs = a.differences();
    let (mut dc, mut lc) = (0.0f64, 0.0f64);
    for n in 1..=a.n_max() {
        let nf = n as f64;
        dc = dc.max(diffs[n].abs() * nf.powf(1.0 + eps));
        lc = lc.max((alpha - a.values[n]).abs() * nf.powf(eps));
    }
    Ok(RateReport {
        eps,
        beta_prime,
        alpha,
        difference_constant: dc,
        limit_constant: lc,
        finite: dc.is_finite() && lc.is_finite(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Direct evaluation of the fixed-point equation by forward recursion:
    /// a_n depends on a_m for m <= n only through rho, so iterate on rho.
    fn forward_solution(b: &KernelSequence<f64>, lambda: f64, n_max: usize) -> Vec<f64> {
        let k = b.m_max().min(n_max);
        let mut a = vec![1.0; n_max + 1];
        for _ in 0..200 {
            let rho: f64 = (2..=k).map(|m| a[m] * b.get(m)).sum();
            let mut next = vec![1.0; n_max + 1];
            for n in 1..=n_max {
                // a_n appears on the right through m = n: solve the linear equation
                let conv: f64 = (2..n.min(k + 1)).map(|m| a[m] * b.get(m) * next[n - m]).sum();
                let own = if n >= 2 && n <= k { lambda * b.get(n) } else { 0.0 };
                next[n] = ((1.0 - lambda * rho) * next[n - 1] + lambda * conv) / (1.0 - own);
            }
            a = next;
        }
        a
    }

    #[test]
    fn zero_kernel_is_constant() {
        let g = RealSequence::new(vec![1.0, 2.0, -1.0, 0.5]);
        let out = tilde_map(&g, &KernelSequence::zero(3), &0.3);
        assert_eq!(out.values(), &[1.0; 4]);
        let b = KernelSequence::new(vec![0.0, -0.1, 0.05]);
        let out = tilde_map(&g, &b, &0.0);
        assert_eq!(out.values(), &[1.0; 4]);
        let sol = solve_mass_sequence(&KernelSequence::zero(8), 0.5, 8, &SolveOptions::default()).unwrap();
        assert!(sol.a.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn tilde_first_step() {
        let g = RealSequence::constant(1.0, 4);
        let b = KernelSequence::new(vec![0.0, -0.1]);
        let out = tilde_map(&g, &b, &0.5);
        assert_abs_diff_eq!(out.values()[1], 1.05, epsilon = 1e-15);
    }

    #[test]
    fn tilde_exact_backend() {
        let g = RealSequence::constant(Rational::from_i64(1), 3);
        let b = KernelSequence::new(vec![Rational::from_i64(0), Rational::from_ratio(-1, 10)]);
        let out = tilde_map(&g, &b, &Rational::from_ratio(1, 2));
        assert_eq!(out.values()[1], Rational::from_ratio(21, 20));
    }

    #[test]
    fn solution_matches_forward_recursion() {
        let b = KernelSequence::new(vec![0.0, -0.1, 0.02, -0.01, 0.004]);
        let lambda = 0.3;
        let sol = solve_mass_sequence(&b, lambda, 12, &SolveOptions::default()).unwrap();
        let oracle = forward_solution(&b, lambda, 12);
        for (x, y) in sol.a.values().iter().zip(&oracle) {
            assert_abs_diff_eq!(*x, *y, epsilon = 1e-11);
        }
        assert!(sol.max_residual < 1e-11);
        assert!(sol.within_bounds);
        assert!(sol.contraction_factor <= 2.0 / 3.0);
    }

    #[test]
    fn rejects_outside_regime() {
        let b = KernelSequence::new(vec![0.0, -0.5]);
        match solve_mass_sequence(&b, 0.5, 8, &SolveOptions::default()) {
            Err(Error::NotContractive { bound, .. }) => assert_abs_diff_eq!(bound, 1.0 / 9.0),
            other => panic!("unexpected {other:?}"),
        }
        let forced = SolveOptions {
            force: true,
            ..SolveOptions::default()
        };
        let sol = solve_mass_sequence(&b, 0.5, 8, &forced).unwrap();
        assert!(!sol.guaranteed);
    }

    #[test]
    fn start_independence() {
        let b = KernelSequence::new(vec![0.0, -0.08, 0.01, -0.004]);
        let a = solve_mass_sequence(&b, 0.4, 16, &SolveOptions::default()).unwrap();
        let mut start = vec![1.0; 17];
        for (n, v) in start.iter_mut().enumerate().skip(1) {
            *v = 1.0 + 0.3 * (-1f64).powi(n as i32) / (n * n) as f64;
        }
        let opts = SolveOptions {
            start: Some(RealSequence::new(start)),
            ..SolveOptions::default()
        };
        let other = solve_mass_sequence(&b, 0.4, 16, &opts).unwrap();
        assert!(a.a.sub(&other.a).unwrap().delta_norm() < 1e-10);
    }

    #[test]
    fn connective_constants() {
        let zero = RealSequence::constant(1.0, 5);
        let c = connective_alpha(&zero, &KernelSequence::zero(5), 0.2, 10.0).unwrap();
        assert_eq!((c.mu, c.alpha), (10.0, 1.0));
        // negative leading kernel lowers mu below the step mass
        let b = KernelSequence::new(vec![0.0, -1.0 / (10.0 - 0.1)]);
        let sol = solve_mass_sequence(&b, 0.1, 10, &SolveOptions::default()).unwrap();
        let c = connective_alpha(&sol.a, &b, 0.1, 10.0).unwrap();
        assert!(c.mu < 10.0);
        let bad = KernelSequence::new(vec![0.0, 20.0]);
        assert!(connective_alpha(&zero, &bad, 1.0, 10.0).is_err());
    }

    #[test]
    fn rate_constants() {
        let z = rate_check(&RealSequence::constant(1.0, 6), &KernelSequence::zero(6), 0.2, 0.5, 1.0).unwrap();
        assert_eq!((z.difference_constant, z.limit_constant), (0.0, 0.0));
        let b = KernelSequence::new((1..=20).map(|m| if m < 2 { 0.0 } else { 0.05 * (m as f64).powi(-3) }).collect());
        let sol = solve_mass_sequence(&b, 0.5, 20, &SolveOptions::default()).unwrap();
        let rep = rate_check(&sol.a, &b, 0.5, 1.0, 0.05).unwrap();
        assert!(rep.finite);
        assert!(matches!(
            rate_check(&sol.a, &b, 0.5, 1.0, 0.01),
            Err(Error::KernelDecay { m: 2, .. })
        ));
    }

    #[test]
    fn power_tail_matches_closed_form() {
        // sum_{m > 0} m^{-2} = pi^2 / 6
        let s = power_tail(0, 3.0);
        assert_abs_diff_eq!(s, std::f64::consts::PI.powi(2) / 6.0, epsilon = 1e-9);
    }

    #[test]
    fn csv_layout() {
        let csv = RealSequence::new(vec![1.0, 1.5]).to_csv();
        assert_eq!(csv, "n,a_n,delta_a_n\n0,1,1\n1,1.5,0.5\n");
    }

    proptest! {
        #[test]
        fn delta_norm_dominates_sup(values in proptest::collection::vec(-10.0f64..10.0, 1..20)) {
            let g = RealSequence::new(values);
            prop_assert!(g.sup_norm() <= g.delta_norm() + 1e-12);
        }

        #[test]
        fn contraction_in_regime(b2 in -0.2f64..0.2, b3 in -0.05f64..0.05, b4 in -0.02f64..0.02) {
            let b = KernelSequence::new(vec![0.0, b2, b3, b4]);
            let beta = b.beta();
            prop_assume!(beta > 1e-6);
            let lambda = (1.0 / (9.0 * beta)).min(1.0);
            let sol = solve_mass_sequence(&b, lambda, 24, &SolveOptions::default()).unwrap();
            prop_assert!(sol.contraction_factor <= 2.0 / 3.0);
            prop_assert!(sol.within_bounds);
            prop_assert!(sol.max_residual < 1e-10);
        }
    }
}
