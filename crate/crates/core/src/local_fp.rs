//! The measure recursion behind the local limit theorem.
//!
//! With step law `S`, kernel measures `B_m` and the mass constants `a_n`,
//!
//! ```text
//! A_0 = delta_0,
//! A_n = 2d mu^{-1} S * A_{n-1} + lambda sum_{m=2}^n a_m B_m * A_{n-m},
//! ```
//!
//! has total mass `a_n` and is compared pointwise with `a_n phi_{n delta}`
//! (doubled on the right parity class for two-periodic walks), measured in
//! units of the envelope [`chi_weight`].
//!
//! For the weakly self-avoiding walk, `B_m = Pi_m / (lambda c_m)` and
//! `A_n = mu^{-n} C_n`; [`saw_pipeline`] runs the whole chain from exact
//! enumeration to error tables.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::laces::{psi, PiTable};
use crate::lattice::{
    check_dim, convolve_symmetric, for_each_canonical_in_box,
    gaussian_density, Parity, Point, SignedMeasure, SymmetricMeasure,
};
use crate::scalar::Scalar;
use crate::scalar_fp::{
    connective_alpha, power_tail, rate_check, solve_mass_sequence, KernelSequence, MassSolution,
    RateReport, RealSequence, SolveOptions,
};
use crate::walks::{step_distribution, ConnectivityTable, ModelParams};

/// Symmetry tolerance for float inputs.
const SYMMETRY_TOL: f64 = 1e-12;
/// Relative tolerance for the float mass check in [`evolve_a`].
const MASS_TOL: f64 = 1e-9;

/// A sequence `G_0, ..., G_{n_max}` of lattice-symmetric measures.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasureSequence<T> {
    dim: usize,
    measures: Vec<SymmetricMeasure<T>>,
}

impl<T: Scalar> MeasureSequence<T> {
    pub fn new(dim: usize, measures: Vec<SymmetricMeasure<T>>) -> Result<Self> {
        check_dim(dim)?;
        if let Some(m) = measures.iter().find(|m| m.dim() != dim) {
            return Err(Error::DimensionMismatch {
                left: dim,
                right: m.dim(),
            });
        }
        Ok(MeasureSequence { dim, measures })
    }

    /// Converts plain measures, which must be lattice-symmetric.
    pub fn from_measures(dim: usize, measures: &[SignedMeasure<T>]) -> Result<Self> {
        let sym = measures
            .iter()
            .map(|m| SymmetricMeasure::from_measure(m, SYMMETRY_TOL))
            .collect::<Result<Vec<_>>>()?;
        Self::new(dim, sym)
    }

    /// `n_max + 1` zero measures.
    pub fn zero(dim: usize, n_max: usize) -> Self {
        MeasureSequence {
            dim,
            measures: vec![SymmetricMeasure::zero(dim); n_max + 1],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_max(&self) -> usize {
        self.measures.len() - 1
    }

    pub fn get(&self, n: usize) -> &SymmetricMeasure<T> {
        &self.measures[n]
    }

    pub fn measures(&self) -> &[SymmetricMeasure<T>] {
        &self.measures
    }

    pub fn masses(&self) -> Vec<T> {
        self.measures.iter().map(SymmetricMeasure::mass).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DerivedConstants {
    pub mu: f64,
    pub alpha: f64,
    /// Per-coordinate variance per step of the limiting Gaussian.
    pub delta: f64,
    pub rho: f64,
    pub sigma: f64,
    pub tau: f64,
    /// `sum_m m |b_m|`.
    pub beta: f64,
    /// `sup_{m,x} |B_m(x)| / psi_m(x)`, when computed.
    pub beta_nu: Option<f64>,
    pub nu: f64,
    /// Second moment of the step law.
    pub s_bar: f64,
    /// Kernel mass beyond the truncation, `sum_{m > K} m |b_m|`.
    pub tail: f64,
    /// `s_bar / 2 <= d delta <= 2 s_bar`.
    pub delta_in_window: bool,
    pub warnings: Vec<String>,
}

/// `delta = (s_bar (1 - lambda rho) + lambda tau) / (d (1 + lambda sigma))`
/// with `rho = sum a_m b_m`, `sigma = sum (m-1) a_m b_m`,
/// `tau = sum a_m b_bar_m`, where `b_m` and `b_bar_m` are the mass and
/// second moment of `B_m`. `nu` defaults to `4 delta`.
pub fn diffusion_constant(
    s: &SignedMeasure<f64>,
    a: &RealSequence<f64>,
    b: &MeasureSequence<f64>,
    lambda: f64,
    step_mass: f64,
    nu: Option<f64>,
) -> Result<DerivedConstants> {
    let dim = s.dim();
    if b.dim() != dim {
        return Err(Error::DimensionMismatch {
            left: dim,
            right: b.dim(),
        });
    }
    let mut warnings = Vec::new();
    let (s_mass, s_bar) = s.mass_and_moment();
    if (s_mass - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!("step law has mass {s_mass}, expected 1")));
    }
    if s_bar < 1.0 - 1e-12 {
        warnings.push(format!("step law second moment {s_bar} is below 1"));
    }
    let k = b.n_max().min(a.n_max());
    let (mut rho, mut sigma, mut tau) = (0.0, 0.0, 0.0);
    for m in 2..=k {
        let (bm, bbar) = b.get(m).mass_and_moment();
        let am = *a.get(m);
        rho += am * bm;
        sigma += (m as f64 - 1.0) * am * bm;
        tau += am * bbar;
    }
    let den = 1.0 + lambda * sigma;
    let num = 1.0 - lambda * rho;
    if den <= 0.0 || num <= 0.0 {
        return Err(Error::Perturbative(format!(
            "1 - lambda rho = {num}, 1 + lambda sigma = {den}"
        )));
    }
    let delta = (s_bar * num + lambda * tau) / (dim as f64 * den);
    let kernel = kernel_of(b);
    let d_delta = dim as f64 * delta;
    let delta_in_window = s_bar / 2.0 <= d_delta && d_delta <= 2.0 * s_bar;
    if !delta_in_window {
        warnings.push(format!("d delta = {d_delta} outside [s_bar/2, 2 s_bar]"));
    }
    Ok(DerivedConstants {
        mu: step_mass / num,
        alpha: 1.0 / den,
        delta,
        rho,
        sigma,
        tau,
        beta: kernel.beta(),
        beta_nu: None,
        nu: nu.unwrap_or(4.0 * delta),
        s_bar,
        tail: kernel.tail(k),
        delta_in_window,
        warnings,
    })
}

fn kernel_of<T: Scalar>(b: &MeasureSequence<T>) -> KernelSequence<T> {
    KernelSequence::new(b.measures.iter().skip(1).map(SymmetricMeasure::mass).collect())
}

/// Diffusion constant from the lace-function series alone:
/// `(1 - sum (pi_m - pi_bar_m) mu^{-m}) / (d (1 + sum (m-1) pi_m mu^{-m}))`,
/// summed over `2 <= m <= k`.
pub fn delta_from_series(pi: &[f64], pi_bar: &[f64], mu: f64, dim: usize, k: usize) -> f64 {
    let (mut num, mut den) = (1.0, 1.0);
    for m in 2..=k.min(pi.len() - 1) {
        let w = mu.powi(-(m as i32));
        num -= (pi[m] - pi_bar[m]) * w;
        den += (m as f64 - 1.0) * pi[m] * w;
    }
    num / (dim as f64 * den)
}

/// Mass constants built from walk counts: `a_n = mu^{-n} c_n` for
/// `n <= len(c) - 1`, continued by
/// `a_n = (step_mass / mu) a_{n-1} + lambda sum_{m=2}^{K} a_m b_m a_{n-m}`.
///
/// With exact arithmetic this gives [`evolve_a`] (called with the same `mu`)
/// a sequence whose masses match exactly, for any `mu`.
pub fn mass_sequence_from_counts<T: Scalar>(
    counts: &[T],
    b: &KernelSequence<T>,
    lambda: &T,
    mu: &T,
    step_mass: &T,
    n_max: usize,
) -> Result<RealSequence<T>> {
    if counts.is_empty() || mu.is_zero() {
        return Err(Error::InvalidArgument("need c_0 and a nonzero mu".into()));
    }
    let k = b.m_max().min(counts.len() - 1);
    let inv = T::one() / mu.clone();
    let factor = step_mass.clone() * inv.clone();
    let mut a: Vec<T> = Vec::with_capacity(n_max + 1);
    let mut scale = T::one();
    for n in 0..=n_max {
        if n < counts.len() {
            a.push(counts[n].clone() * scale.clone());
            scale = scale * inv.clone();
        } else {
            let conv = (2..=k.min(n)).fold(T::zero(), |acc, m| acc + a[m].clone() * b.get(m) * a[n - m].clone());
            a.push(factor.clone() * a[n - 1].clone() + lambda.clone() * conv);
        }
    }
    Ok(RealSequence::new(a))
}

/// Uniform probability on the symmetry orbit of `coords`.
fn orbit_law<T: Scalar>(coords: &[i64]) -> Result<SignedMeasure<T>> {
    let p = Point::new(coords)?;
    let orbit = p.orbit();
    let w = T::from_ratio(1, orbit.len() as i64);
    let mut m = SignedMeasure::zero(p.dim());
    for q in orbit {
        m.add_at(q, w.clone());
    }
    Ok(m)
}

/// `(1 - p) S + p U`.
fn mix<T: Scalar>(s: &SignedMeasure<T>, u: &SignedMeasure<T>, p: &T) -> Result<SignedMeasure<T>> {
    let mut out = s.scale(&(T::one() - p.clone()));
    out.add_scaled(u, p)?;
    Ok(out.infer_parity())
}

/// A probability measure with second moment exactly `d delta`, obtained from
/// `S` by moving mass.
///
/// Aperiodic: the deficit goes to the origin, an excess to the axis points
/// at distance `range + 1`. Two-periodic (all support at odd `|x|_1`): a
/// deficit goes to the unit vectors, an excess to the orbit of
/// `(range + 1) e_1` when that is odd, otherwise of
/// `(range + 1) e_1 + e_2` (or `(range + 2) e_1` when `d = 1`).
pub fn build_e<T: Scalar>(s: &SignedMeasure<T>, delta: &T, periodic: bool) -> Result<SignedMeasure<T>> {
    let dim = s.dim();
    let (mass, s_bar) = s.mass_and_moment();
    if !mass.close_to(&T::one(), 1e-12) {
        return Err(Error::InvalidArgument(format!("step law has mass {mass}, expected 1")));
    }
    if !s.is_symmetric(SYMMETRY_TOL) {
        return Err(Error::InvalidArgument("step law is not lattice-symmetric".into()));
    }
    if periodic && s.support().any(|p| p.parity() != Parity::Odd) {
        return Err(Error::InvalidArgument(
            "two-periodic construction needs a step law supported on odd sites".into(),
        ));
    }
    let target = T::from_i64(dim as i64) * delta.clone();
    if target == s_bar {
        return Ok(s.clone());
    }
    let ell = s.range();
    let mut axis = vec![0i64; dim];
    let (low, high_shell) = if !periodic {
        axis[0] = ell + 1;
        (T::zero(), axis)
    } else {
        let mut shell = vec![0i64; dim];
        if (ell + 1) % 2 == 1 {
            shell[0] = ell + 1;
        } else if dim >= 2 {
            shell[0] = ell + 1;
            shell[1] = 1;
        } else {
            shell[0] = ell + 2;
        }
        (T::one(), shell)
    };
    let high = T::from_i64(high_shell.iter().map(|c| c * c).sum());
    let infeasible = || Error::InfeasibleVariance {
        target: target.to_f64(),
        low: low.to_f64(),
        high: high.to_f64(),
    };
    if target < low || target > high {
        return Err(infeasible());
    }
    if target < s_bar {
        let (u, u_bar) = if periodic {
            let mut unit = vec![0i64; dim];
            unit[0] = 1;
            (orbit_law::<T>(&unit)?, T::one())
        } else {
            (SignedMeasure::delta(dim), T::zero())
        };
        if s_bar.clone() - u_bar.clone() <= T::zero() {
            return Err(infeasible());
        }
        let p = (s_bar.clone() - target.clone()) / (s_bar - u_bar);
        mix(s, &u, &p)
    } else {
        let p = (target - s_bar.clone()) / (high.clone() - s_bar);
        mix(s, &orbit_law::<T>(&high_shell)?, &p)
    }
}

/// `chi_n(x) = n^{-1/2} phi_{n nu}(x) + n^{-d/2} sum_{j=1}^{floor(n/2)} j phi_{j nu}(x)`.
pub fn chi_weight(n: usize, x: &Point, nu: f64) -> f64 {
    let d = x.dim();
    let r2 = x.norm2_sq() as f64;
    let nf = n as f64;
    let head = nf.powf(-0.5) * gaussian_density(nf * nu, d, r2);
    let sum: f64 = (1..=n / 2)
        .map(|j| j as f64 * gaussian_density(j as f64 * nu, d, r2))
        .sum();
    head + nf.powf(-(d as f64) / 2.0) * sum
}

/// Runs the measure recursion up to `n_max` and checks `mass(A_n) = a_n`.
///
/// The step factor is `step_mass / mu` when `mu` is given and `1 - lambda rho`
/// otherwise; the two agree when `mu` comes from [`connective_alpha`].
/// Kernel sums run over `2 <= m <= min(len(B), len(a))`.
pub fn evolve_a<T: Scalar>(
    s: &SignedMeasure<T>,
    b: &MeasureSequence<T>,
    a: &RealSequence<T>,
    lambda: &T,
    step_mass: &T,
    n_max: usize,
    mu: Option<&T>,
) -> Result<MeasureSequence<T>> {
    let dim = s.dim();
    if b.dim() != dim {
        return Err(Error::DimensionMismatch {
            left: dim,
            right: b.dim(),
        });
    }
    if n_max > a.n_max() {
        return Err(Error::InvalidArgument(format!(
            "n_max = {n_max} exceeds the mass sequence length {}",
            a.n_max()
        )));
    }
    let step = SymmetricMeasure::from_measure(s, SYMMETRY_TOL)?;
    let k = b.n_max().min(a.n_max());
    let factor = match mu {
        Some(mu) => step_mass.clone() / mu.clone(),
        None => {
            let rho = (2..=k).fold(T::zero(), |acc, m| acc + a.get(m).clone() * b.get(m).mass());
            T::one() - lambda.clone() * rho
        }
    };
    let kernel: Vec<SymmetricMeasure<T>> = (0..=k)
        .map(|m| b.get(m).scale(&(lambda.clone() * a.get(m).clone())))
        .collect();
    let mut out: Vec<SymmetricMeasure<T>> = vec![SymmetricMeasure::delta(dim)];
    for n in 1..=n_max {
        let mut next = convolve_symmetric(&step, &out[n - 1])?.scale(&factor);
        for m in 2..=n.min(k) {
            if kernel[m].is_empty() {
                continue;
            }
            next.add_scaled(&convolve_symmetric(&kernel[m], &out[n - m])?, &T::one())?;
        }
        let (mass, expected) = (next.mass(), a.get(n).clone());
        let ok = if T::EXACT {
            mass == expected
        } else {
            (mass.clone() - expected.clone()).to_f64().abs()
                <= MASS_TOL * expected.to_f64().abs().max(1.0)
        };
        if !ok {
            return Err(Error::MassMismatch {
                n,
                mass: mass.to_string(),
                expected: expected.to_string(),
            });
        }
        out.push(next);
    }
    MeasureSequence::new(dim, out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorRow {
    pub n: usize,
    /// Orbit representative; every point of the orbit has the same row.
    pub x: Vec<i64>,
    pub lhs: f64,
    pub bound: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorSummary {
    pub n: usize,
    pub sup_ratio: f64,
    pub argmax: Vec<i64>,
    /// Orbit representatives evaluated.
    pub points: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ErrorTable {
    pub delta: f64,
    pub nu: f64,
    pub periodic: bool,
    pub rows: Vec<ErrorRow>,
    pub summary: Vec<ErrorSummary>,
}

impl ErrorTable {
    /// CSV with columns `n,x_1..x_d,lhs,bound,ratio`.
    pub fn to_csv(&self, dim: usize) -> String {
        let mut out = String::from("n,");
        for i in 1..=dim {
            out.push_str(&format!("x{i},"));
        }
        out.push_str("lhs,bound,ratio\n");
        for r in &self.rows {
            out.push_str(&format!("{},", r.n));
            for c in &r.x {
                out.push_str(&format!("{c},"));
            }
            out.push_str(&format!("{:e},{:e},{:e}\n", r.lhs, r.bound, r.ratio));
        }
        out
    }
}

/// Pointwise comparison of `A_n` with `a_n phi_{n delta}` (doubled and
/// restricted to `|x|_1 = n mod 2` when `periodic`), relative to `chi_n`.
///
/// Points: every orbit in the support of `A_n` plus the box
/// `|x|_inf <= ceil(4 sqrt(n delta))`. `n = 0` is skipped.
pub fn clt_error_table<T: Scalar>(
    seq: &MeasureSequence<T>,
    a: &RealSequence<T>,
    consts: &DerivedConstants,
    periodic: bool,
    n_list: &[usize],
) -> Result<ErrorTable> {
    let (delta, nu) = (consts.delta, consts.nu);
    let dim = seq.dim();
    if nu < 1.0 / (2.0 * dim as f64) {
        return Err(Error::InvalidArgument(format!("nu = {nu} below 1/(2d)")));
    }
    let factor = if periodic { 2.0 } else { 1.0 };
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for &n in n_list.iter().filter(|&&n| n >= 1) {
        if n > seq.n_max() || n > a.n_max() {
            return Err(Error::InvalidArgument(format!("n = {n} beyond the computed sequence")));
        }
        let an = a.get(n).to_f64();
        let measure = seq.get(n);
        let parity = Parity::of(n as i64);
        let mut points: Vec<Point> = measure
            .reps()
            .filter(|(_, w)| w.to_f64().abs() > 1e-15)
            .map(|(p, _)| *p)
            .collect();
        let radius = (4.0 * (n as f64 * delta).sqrt()).ceil() as i64;
        for_each_canonical_in_box(dim, radius, |p| points.push(p));
        points.sort_unstable();
        points.dedup();
        if periodic {
            points.retain(|p| p.parity() == parity);
        }
        let mut n_rows: Vec<ErrorRow> = points
            .par_iter()
            .map(|x| {
                let r2 = x.norm2_sq() as f64;
                let lhs = (measure.get(x).to_f64()
                    - factor * an * gaussian_density(n as f64 * delta, dim, r2))
                .abs();
                let bound = chi_weight(n, x, nu);
                ErrorRow {
                    n,
                    x: x.to_vec(),
                    lhs,
                    bound,
                    ratio: lhs / bound,
                }
            })
            .collect();
        n_rows.sort_by(|p, q| p.x.cmp(&q.x));
        let best = n_rows
            .iter()
            .filter(|r| r.ratio.is_finite())
            .max_by(|p, q| p.ratio.total_cmp(&q.ratio));
        summary.push(ErrorSummary {
            n,
            sup_ratio: best.map_or(0.0, |r| r.ratio),
            argmax: best.map_or_else(Vec::new, |r| r.x.clone()),
            points: n_rows.len(),
        });
        rows.extend(n_rows);
    }
    Ok(ErrorTable {
        delta,
        nu,
        periodic,
        rows,
        summary,
    })
}

/// Exact enumeration results shared by pipeline runs at different
/// `lambda`.
#[derive(Clone, Debug)]
pub struct SawTables {
    pub walks: ConnectivityTable,
    pub pis: PiTable,
}

impl SawTables {
    pub fn enumerate(dim: usize, m_max: usize, budget: u128) -> Result<Self> {
        Ok(SawTables {
            walks: ConnectivityTable::enumerate(dim, m_max, budget)
                .map_err(|e| e.in_stage("connectivity enumeration"))?,
            pis: PiTable::enumerate(dim, m_max, budget)
                .map_err(|e| e.in_stage("lace function enumeration"))?,
        })
    }

    pub fn dim(&self) -> usize {
        self.walks.dim()
    }

    pub fn m_max(&self) -> usize {
        self.walks.n_max().min(self.pis.m_max())
    }
}

#[derive(Clone, Debug)]
pub struct PipelineOptions {
    /// Length of the mass sequence.
    pub n_max: usize,
    /// Largest `n` of the measure recursion and error table; defaults to the
    /// enumeration depth.
    pub clt_n_max: Option<usize>,
    pub nu: Option<f64>,
    pub solve: SolveOptions,
    /// Keep every error-table row, not only the per-n summary.
    pub keep_rows: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            n_max: 32,
            clt_n_max: None,
            nu: None,
            solve: SolveOptions::default(),
            keep_rows: false,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowthRow {
    pub n: usize,
    pub c_n: f64,
    /// `c_n / (alpha mu^n)`.
    pub normalized: f64,
    /// `|c_n / (alpha mu^n) - 1| n^{1/2}`.
    pub scaled_error: f64,
    /// `c_n / c_{n-1}`.
    pub step_ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct KernelRow {
    pub m: usize,
    pub c_m: f64,
    pub pi_m: f64,
    pub pi_bar_m: f64,
    pub b_m: f64,
    pub b_bar_m: f64,
    /// `sup_x |B_m(x)| / psi_m(x)`.
    pub beta_nu: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SawReport {
    pub dim: usize,
    pub lambda: f64,
    pub m_max: usize,
    pub n_max: usize,
    pub kernel: Vec<KernelRow>,
    pub solution: MassSolution,
    pub constants: DerivedConstants,
    /// Diffusion constant from the lace-function series.
    pub delta_series: f64,
    /// Estimated effect of kernel terms beyond the enumeration on delta.
    pub delta_tail: f64,
    pub rate: Option<RateReport>,
    /// A two-periodic reference law with variance `d delta` exists.
    pub periodic_target_feasible: bool,
    pub clt: Vec<ErrorSummary>,
    /// Full error table, when requested.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub clt_rows: Vec<ErrorRow>,
    pub growth: Vec<GrowthRow>,
    pub warnings: Vec<String>,
}

/// End-to-end run: enumeration, kernel, mass constants, diffusion constant,
/// measure recursion, error table and growth check.
pub fn saw_pipeline(params: &ModelParams<f64>, opts: &PipelineOptions, budget: u128) -> Result<SawReport> {
    let tables = SawTables::enumerate(params.dim, params.n_max, budget)?;
    saw_pipeline_with(&tables, params.lambda, opts)
}

pub fn saw_pipeline_with(tables: &SawTables, lambda: f64, opts: &PipelineOptions) -> Result<SawReport> {
    let dim = tables.dim();
    let m_max = tables.m_max();
    let mut warnings = Vec::new();
    if dim < 5 {
        warnings.push(format!("d = {dim} < 5: the error bounds are not expected to hold"));
    }

    let c: Vec<f64> = (0..=m_max).map(|n| tables.walks.mass(n, &lambda)).collect();
    let mut pi_measures = vec![SignedMeasure::<f64>::zero(dim); m_max + 1];
    for (m, slot) in pi_measures.iter_mut().enumerate().skip(2) {
        *slot = tables
            .pis
            .measure(m, &lambda, None)
            .map_err(|e| e.in_stage("lace functions"))?;
    }
    let b_measures: Vec<SignedMeasure<f64>> = pi_measures
        .iter()
        .enumerate()
        .map(|(m, p)| {
            if lambda == 0.0 || m < 2 {
                SignedMeasure::zero(dim)
            } else {
                p.scale(&(1.0 / (lambda * c[m])))
            }
        })
        .collect();
    let b_seq = MeasureSequence::from_measures(dim, &b_measures).map_err(|e| e.in_stage("kernel"))?;
    let kernel = kernel_of(&b_seq);

    let solution = solve_mass_sequence(&kernel, lambda, opts.n_max, &opts.solve)
        .map_err(|e| e.in_stage("mass constants"))?;
    let a = &solution.a;
    let step_mass = 2.0 * dim as f64;
    let conn = connective_alpha(a, &kernel, lambda, step_mass).map_err(|e| e.in_stage("connective constant"))?;
    let step = step_distribution::<f64>(dim);
    let mut constants = diffusion_constant(&step, a, &b_seq, lambda, step_mass, opts.nu)
        .map_err(|e| e.in_stage("diffusion constant"))?;
    warnings.extend(constants.warnings.iter().cloned());

    let k = m_max.min(opts.n_max);
    let pi: Vec<f64> = pi_measures.iter().map(|p| p.mass()).collect();
    let pi_bar: Vec<f64> = pi_measures.iter().map(|p| p.second_moment()).collect();
    let delta_series = delta_from_series(&pi, &pi_bar, conn.mu, dim, k);
    let decay = dim as f64 / 2.0;
    // a_m <= 3/2 and |b_m| <= beta' m^{-d/2}
    let delta_tail = if decay > 2.0 {
        1.5 * lambda * kernel.decay_constant(decay) * power_tail(k, decay)
    } else {
        f64::INFINITY
    };

    let nu = constants.nu;
    let mut kernel_rows = Vec::new();
    let mut beta_nu: f64 = 0.0;
    for m in 2..=m_max {
        let bm = b_seq.get(m);
        let ratio = bm
            .reps()
            .map(|(x, w)| w.abs() / psi(m, x, nu))
            .fold(0.0, f64::max);
        beta_nu = beta_nu.max(ratio);
        let (b_mass, b_bar) = bm.mass_and_moment();
        kernel_rows.push(KernelRow {
            m,
            c_m: c[m],
            pi_m: pi[m],
            pi_bar_m: pi_bar[m],
            b_m: b_mass,
            b_bar_m: b_bar,
            beta_nu: ratio,
        });
    }
    constants.beta_nu = Some(beta_nu);

    let rate = if dim >= 5 {
        let eps = (dim as f64 - 4.0) / 2.0;
        let bp = kernel.decay_constant(2.0 + eps);
        Some(rate_check(a, &kernel, lambda, eps, bp).map_err(|e| e.in_stage("rate check"))?)
    } else {
        None
    };

    let periodic_target_feasible = constants.delta * dim as f64 >= 1.0;

    let clt_n_max = opts.clt_n_max.unwrap_or(m_max).min(opts.n_max);
    let seq = evolve_a(&step, &b_seq, a, &lambda, &step_mass, clt_n_max, None)
        .map_err(|e| e.in_stage("measure recursion"))?;
    let n_list: Vec<usize> = (1..=clt_n_max).collect();
    let table = clt_error_table(&seq, a, &constants, true, &n_list).map_err(|e| e.in_stage("error table"))?;

    let growth = (1..=m_max)
        .map(|n| {
            let normalized = c[n] / (conn.alpha * conn.mu.powi(n as i32));
            GrowthRow {
                n,
                c_n: c[n],
                normalized,
                scaled_error: (normalized - 1.0).abs() * (n as f64).sqrt(),
                step_ratio: c[n] / c[n - 1],
            }
        })
        .collect();

    Ok(SawReport {
        dim,
        lambda,
        m_max,
        n_max: opts.n_max,
        kernel: kernel_rows,
        solution,
        constants,
        delta_series,
        delta_tail,
        rate,
        periodic_target_feasible,
        clt: table.summary,
        clt_rows: if opts.keep_rows { table.rows } else { Vec::new() },
        growth,
        warnings,
    })
}
