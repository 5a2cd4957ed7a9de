//! Gaussian approximation of bounded-range walks.
//!
//! Three empirical checks:
//! - the local CLT rate of `G^{*n}` against `phi_{n eta}` ([`lclt_error_scan`]);
//! - the second-order Taylor expansion of `G * phi_{n eta}` and its
//!   remainder ([`taylor_fold_check`]);
//! - the expansion of `phi_{(n-k) eta}` around `phi_{n eta}` in the variance
//!   variable ([`variance_shift_check`]).
//!
//! Constants are reported, not assumed; scaling exponents come from
//! least-squares fits on log-log grids ([`fit_exponent`]).

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{
    convolve_symmetric, for_each_canonical_in_box, gaussian_density, Parity, Point, SignedMeasure,
    SymmetricMeasure,
};
use crate::scalar::Scalar;
use crate::walks::step_distribution;

/// A symmetric probability law with bounded range and isotropic covariance
/// `eta Id`.
#[derive(Clone, Debug)]
pub struct StepLaw<T> {
    law: SignedMeasure<T>,
    ell: i64,
    eta: T,
}

impl<T: Scalar> StepLaw<T> {
    pub fn new(law: SignedMeasure<T>) -> Result<Self> {
        let dim = law.dim();
        let (mass, moment) = law.mass_and_moment();
        if !mass.close_to(&T::one(), 1e-12) {
            return Err(Error::InvalidArgument(format!("step law has mass {mass}, expected 1")));
        }
        if !law.is_symmetric(1e-12) {
            return Err(Error::InvalidArgument("step law is not lattice-symmetric".into()));
        }
        let eta = moment / T::from_i64(dim as i64);
        // symmetric laws have diagonal covariance; check it anyway
        let mut cov = vec![T::zero(); dim * dim];
        for (p, w) in law.iter() {
            for i in 0..dim {
                for j in 0..dim {
                    cov[i * dim + j] =
                        cov[i * dim + j].clone() + T::from_i64(p.coord(i) * p.coord(j)) * w.clone();
                }
            }
        }
        for i in 0..dim {
            for j in 0..dim {
                let expected = if i == j { eta.clone() } else { T::zero() };
                if !cov[i * dim + j].close_to(&expected, 1e-12) {
                    return Err(Error::InvalidArgument(format!(
                        "covariance entry ({i},{j}) = {} is not isotropic",
                        cov[i * dim + j]
                    )));
                }
            }
        }
        Ok(StepLaw {
            ell: law.range(),
            law,
            eta,
        })
    }

    /// `(1 - p) delta_0 + p D`.
    pub fn lazy(dim: usize, p: T) -> Result<Self> {
        let mut law = step_distribution::<T>(dim).scale(&p);
        law.add_at(Point::origin(dim), T::one() - p);
        Self::new(law.infer_parity())
    }

    /// Nearest-neighbour walk, two-periodic.
    pub fn simple(dim: usize) -> Result<Self> {
        Self::new(step_distribution(dim))
    }

    pub fn law(&self) -> &SignedMeasure<T> {
        &self.law
    }

    pub fn dim(&self) -> usize {
        self.law.dim()
    }

    pub fn ell(&self) -> i64 {
        self.ell
    }

    pub fn eta(&self) -> &T {
        &self.eta
    }

    /// Every support point has odd `|x|_1`, so `G^{*n}` lives on one parity
    /// class.
    pub fn is_periodic(&self) -> bool {
        self.law.support().all(|p| p.parity() == Parity::Odd)
    }

    fn symmetric(&self) -> SymmetricMeasure<T> {
        SymmetricMeasure::from_measure(&self.law, 1e-12).expect("checked symmetric at construction")
    }

    fn check_budget(&self, n: usize, budget: u128) -> Result<()> {
        let side = 2 * n as u128 * self.ell as u128 + 1;
        let required = side
            .saturating_pow(self.dim() as u32)
            .saturating_mul(self.law.len() as u128);
        if required > budget {
            return Err(Error::BudgetExceeded { required, budget });
        }
        Ok(())
    }
}

/// `G^{*n}`, with `G^{*0} = delta_0`.
pub fn conv_power<T: Scalar>(law: &StepLaw<T>, n: usize, budget: u128) -> Result<SignedMeasure<T>> {
    law.check_budget(n, budget)?;
    let g = law.symmetric();
    let mut acc = SymmetricMeasure::delta(law.dim());
    for _ in 0..n {
        acc = convolve_symmetric(&g, &acc)?;
    }
    Ok(acc.to_measure())
}

/// Least-squares slope of `log y` against `log x`. Non-positive values are
/// rejected.
pub fn fit_exponent(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidArgument("need at least two points of equal length".into()));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument("log-log fit needs positive finite values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / k, ly.iter().sum::<f64>() / k);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}

/// Canonical points of the box `|x|_inf <= radius`, sorted.
fn canonical_box(dim: usize, radius: i64, parity: Option<Parity>) -> Vec<Point> {
    let mut pts = Vec::new();
    for_each_canonical_in_box(dim, radius, |p| {
        if parity.is_none_or(|par| p.parity() == par) {
            pts.push(p);
        }
    });
    pts.sort_unstable();
    pts
}

/// Maximum of `f` over `points`, with the maximizer.
fn sup_over(points: &[Point], f: impl Fn(&Point) -> f64 + Sync) -> (f64, Vec<i64>) {
    points
        .par_iter()
        .map(|p| (f(p), p))
        .filter(|(v, _)| v.is_finite())
        .reduce_with(|a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a })
        .map_or((0.0, Vec::new()), |(v, p)| (v, p.to_vec()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LcltRow {
    pub n: usize,
    /// `sup_x |G^{*n}(x) - phi_{n eta}(x)| / phi_{n nu'}(x)`.
    pub sup_ratio: f64,
    pub argmax: Vec<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LcltReport {
    pub dim: usize,
    pub eta: f64,
    pub nu_prime: f64,
    pub periodic: bool,
    pub rows: Vec<LcltRow>,
    pub fitted_exponent: f64,
    /// Fitted exponent is at most `-1/2 + 0.1`.
    pub leading_order: bool,
    /// Fitted exponent beats `-1/2` by more than the slack.
    pub faster_than_leading: bool,
    /// Each ratio is at most its predecessor, up to 5%.
    pub nonincreasing: bool,
}

impl LcltReport {
    /// CSV with columns `n,sup_ratio,fitted_exponent`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,sup_ratio,fitted_exponent\n");
        for r in &self.rows {
            out.push_str(&format!("{},{:e},{}\n", r.n, r.sup_ratio, self.fitted_exponent));
        }
        out
    }
}

/// Local CLT error of `G^{*n}` over the support. For two-periodic laws only
/// `|x|_1 = n mod 2` is scanned and the Gaussian is doubled.
pub fn lclt_error_scan(law: &StepLaw<f64>, n_list: &[usize], nu_prime: f64, budget: u128) -> Result<LcltReport> {
    let dim = law.dim();
    let eta = *law.eta();
    if nu_prime <= eta {
        return Err(Error::InvalidArgument(format!("nu' = {nu_prime} must exceed eta = {eta}")));
    }
    let mut ns: Vec<usize> = n_list.iter().copied().filter(|&n| n >= 1).collect();
    ns.sort_unstable();
    ns.dedup();
    let Some(&n_top) = ns.last() else {
        return Err(Error::InvalidArgument("empty n grid".into()));
    };
    law.check_budget(n_top, budget)?;
    let periodic = law.is_periodic();
    let factor = if periodic { 2.0 } else { 1.0 };
    let g = law.symmetric();
    let mut power = SymmetricMeasure::delta(dim);
    let mut rows = Vec::new();
    for n in 1..=n_top {
        power = convolve_symmetric(&g, &power)?;
        if ns.binary_search(&n).is_err() {
            continue;
        }
        let parity = periodic.then(|| Parity::of(n as i64));
        let points = canonical_box(dim, n as i64 * law.ell(), parity);
        let nf = n as f64;
        let (sup_ratio, argmax) = sup_over(&points, |x| {
            let r2 = x.norm2_sq() as f64;
            (power.get(x) - factor * gaussian_density(nf * eta, dim, r2)).abs()
                / gaussian_density(nf * nu_prime, dim, r2)
        });
        rows.push(LcltRow { n, sup_ratio, argmax });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.sup_ratio).collect();
    let fitted_exponent = if rows.len() >= 2 { fit_exponent(&xs, &ys)? } else { f64::NAN };
    Ok(LcltReport {
        dim,
        eta,
        nu_prime,
        periodic,
        nonincreasing: ys.windows(2).all(|w| w[1] <= 1.05 * w[0]),
        leading_order: fitted_exponent <= -0.4,
        faster_than_leading: fitted_exponent < -0.6,
        fitted_exponent,
        rows,
    })
}

/// Even polynomial in `z`, stored by coefficients of `(z^2)^k`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvenPolynomial {
    pub coeffs: Vec<f64>,
}

impl EvenPolynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        EvenPolynomial { coeffs }
    }

    /// `z^2 / eta - d`.
    pub fn quadratic(eta: f64, dim: usize) -> Self {
        EvenPolynomial::new(vec![-(dim as f64), 1.0 / eta])
    }

    pub fn eval_sq(&self, z2: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * z2 + c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TaylorReport {
    pub n: usize,
    pub eta: f64,
    /// `sum_z z^4 |G(z)|` for the fourth-order form, `sum_z z^2 |G(z)|` for
    /// the polynomial form.
    pub moment: f64,
    /// `sup_x |R(n,x)| / (moment * phi_{2 n eta}(x))`.
    pub normalized_remainder: f64,
    /// `normalized_remainder * n^2` (fourth-order) or `* n` (polynomial):
    /// the empirical constant.
    pub k_emp: f64,
    pub argmax: Vec<i64>,
}

fn taylor_window(law: &SignedMeasure<f64>, n: usize, eta: f64) -> Vec<Point> {
    let radius = (6.0 * (n as f64 * eta).sqrt()).ceil() as i64 + law.range();
    canonical_box(law.dim(), radius, None)
}

fn validate_taylor(g: &SignedMeasure<f64>, n: usize, eta: f64) -> Result<()> {
    let dim = g.dim();
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    if eta <= 1.0 / (2.0 * dim as f64) {
        return Err(Error::InvalidArgument(format!("eta = {eta} must exceed 1/(2d)")));
    }
    if !g.is_symmetric(1e-12) {
        return Err(Error::InvalidArgument("G must be lattice-symmetric".into()));
    }
    Ok(())
}

/// Remainder of
/// `G * phi_{n eta} = g phi_{n eta} + g_bar / (2 d n eta) [x^2/(n eta) - d] phi_{n eta} + R_4`.
pub fn taylor_fold_check(g: &SignedMeasure<f64>, n: usize, eta: f64) -> Result<TaylorReport> {
    validate_taylor(g, n, eta)?;
    let dim = g.dim();
    let (mass, moment2) = g.mass_and_moment();
    let moment4 = g.abs_fourth_moment();
    let ne = n as f64 * eta;
    let d = dim as f64;
    let entries = g.sorted_entries();
    let points = taylor_window(g, n, eta);
    let (norm, argmax) = sup_over(&points, |x| {
        let r2 = x.norm2_sq() as f64;
        let phi = gaussian_density(ne, dim, r2);
        let folded: f64 = entries
            .iter()
            .map(|(z, w)| w * gaussian_density(ne, dim, (*x - *z).norm2_sq() as f64))
            .sum();
        let r4 = folded - mass * phi - moment2 / (2.0 * d * ne) * (r2 / ne - d) * phi;
        if moment4 == 0.0 {
            r4.abs()
        } else {
            r4.abs() / (moment4 * gaussian_density(2.0 * ne, dim, r2))
        }
    });
    let nf = n as f64;
    Ok(TaylorReport {
        n,
        eta,
        moment: moment4,
        normalized_remainder: norm,
        k_emp: norm * nf * nf,
        argmax,
    })
}

/// Remainder of
/// `G * [P(x/sqrt n) phi_{n eta}] = g P(x/sqrt n) phi_{n eta} + R_2`.
pub fn taylor_poly_check(g: &SignedMeasure<f64>, n: usize, eta: f64, poly: &EvenPolynomial) -> Result<TaylorReport> {
    validate_taylor(g, n, eta)?;
    let dim = g.dim();
    let mass = g.mass();
    let moment2 = g.iter().map(|(z, w)| z.norm2_sq() as f64 * w.abs()).sum::<f64>();
    let nf = n as f64;
    let ne = nf * eta;
    let shape = |r2: f64| poly.eval_sq(r2 / nf) * gaussian_density(ne, dim, r2);
    let entries = g.sorted_entries();
    let points = taylor_window(g, n, eta);
    let (norm, argmax) = sup_over(&points, |x| {
        let r2 = x.norm2_sq() as f64;
        let folded: f64 = entries
            .iter()
            .map(|(z, w)| w * shape((*x - *z).norm2_sq() as f64))
            .sum();
        let r = (folded - mass * shape(r2)).abs();
        if moment2 == 0.0 {
            r
        } else {
            r / (moment2 * gaussian_density(2.0 * ne, dim, r2))
        }
    });
    Ok(TaylorReport {
        n,
        eta,
        moment: moment2,
        normalized_remainder: norm,
        k_emp: norm * nf,
        argmax,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShiftReport {
    pub n: usize,
    pub k: usize,
    pub eta: f64,
    pub dim: usize,
    /// `sup_x |S(n,x)| / ((n/(n-k))^{d/2} phi_{sqrt2 n eta}(x))`.
    pub normalized_remainder: f64,
    /// `normalized_remainder / (k/(n-k))^2` (second-order form) or
    /// `/ (k/(n-k)^2)` (polynomial form).
    pub k_emp: f64,
    pub argmax: Vec<i64>,
}

fn shift_points(n: usize, eta: f64, dim: usize) -> Vec<Point> {
    canonical_box(dim, (6.0 * (n as f64 * eta).sqrt()).ceil() as i64, None)
}

fn validate_shift(n: usize, k: usize, eta: f64, dim: usize) -> Result<()> {
    crate::lattice::check_dim(dim)?;
    if k >= n {
        return Err(Error::InvalidArgument(format!("k = {k} must be below n = {n}")));
    }
    if eta <= 0.0 {
        return Err(Error::InvalidArgument(format!("eta = {eta} must be positive")));
    }
    Ok(())
}

/// Remainder of
/// `phi_{(n-k) eta} = phi_{n eta} - k/(2n) [x^2/(n eta) - d] phi_{n eta} + S_2`.
pub fn variance_shift_check(n: usize, k: usize, eta: f64, dim: usize) -> Result<ShiftReport> {
    validate_shift(n, k, eta, dim)?;
    let (nf, kf, d) = (n as f64, k as f64, dim as f64);
    let ne = nf * eta;
    let scale = (nf / (nf - kf)).powf(d / 2.0);
    let points = shift_points(n, eta, dim);
    let (norm, argmax) = sup_over(&points, |x| {
        let r2 = x.norm2_sq() as f64;
        let phi = gaussian_density(ne, dim, r2);
        let s2 = gaussian_density((nf - kf) * eta, dim, r2) - phi + kf / (2.0 * nf) * (r2 / ne - d) * phi;
        s2.abs() / (scale * gaussian_density(std::f64::consts::SQRT_2 * ne, dim, r2))
    });
    let q = kf / (nf - kf);
    Ok(ShiftReport {
        n,
        k,
        eta,
        dim,
        normalized_remainder: norm,
        k_emp: if k == 0 { 0.0 } else { norm / (q * q) },
        argmax,
    })
}

/// Remainder of
/// `(n-k)^{-1} P(x/sqrt(n-k)) phi_{(n-k) eta} = n^{-1} P(x/sqrt n) phi_{n eta} + S_1`.
pub fn variance_shift_poly_check(
    n: usize,
    k: usize,
    eta: f64,
    dim: usize,
    poly: &EvenPolynomial,
) -> Result<ShiftReport> {
    validate_shift(n, k, eta, dim)?;
    let (nf, kf, d) = (n as f64, k as f64, dim as f64);
    let scale = (nf / (nf - kf)).powf(d / 2.0);
    let shape = |t: f64, r2: f64| poly.eval_sq(r2 / t) * gaussian_density(t * eta, dim, r2) / t;
    let points = shift_points(n, eta, dim);
    let (norm, argmax) = sup_over(&points, |x| {
        let r2 = x.norm2_sq() as f64;
        let s1 = shape(nf - kf, r2) - shape(nf, r2);
        s1.abs() / (scale * gaussian_density(std::f64::consts::SQRT_2 * nf * eta, dim, r2))
    });
    let q = kf / ((nf - kf) * (nf - kf));
    Ok(ShiftReport {
        n,
        k,
        eta,
        dim,
        normalized_remainder: norm,
        k_emp: if k == 0 { 0.0 } else { norm / q },
        argmax,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;
    use crate::walks::DEFAULT_BUDGET;
    use approx::assert_abs_diff_eq;

    #[test]
    fn powers_trivial() {
        let law = StepLaw::<Rational>::lazy(2, Rational::from_ratio(1, 2)).unwrap();
        assert_eq!(conv_power(&law, 0, DEFAULT_BUDGET).unwrap(), SignedMeasure::delta(2));
        assert_eq!(conv_power(&law, 1, DEFAULT_BUDGET).unwrap().sorted_entries(), law.law().sorted_entries());
        let p5 = conv_power(&law, 5, DEFAULT_BUDGET).unwrap();
        assert_eq!(p5.mass(), Rational::from_i64(1));
        assert!(p5.is_symmetric(0.0));
        assert!(matches!(conv_power(&law, 5, 10), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn step_law_validation() {
        let law = StepLaw::<f64>::simple(3).unwrap();
        assert!(law.is_periodic());
        assert_abs_diff_eq!(*law.eta(), 1.0 / 3.0, epsilon = 1e-15);
        let mut bad = SignedMeasure::<f64>::zero(1);
        bad.add_at(Point::new(&[1]).unwrap(), 1.0);
        assert!(StepLaw::new(bad).is_err());
    }

    #[test]
    fn fit_recovers_power() {
        let xs = [4.0, 8.0, 16.0, 32.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-1.25)).collect();
        assert_abs_diff_eq!(fit_exponent(&xs, &ys).unwrap(), -1.25, epsilon = 1e-12);
        assert!(fit_exponent(&xs, &[1.0, 0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn point_mass_has_no_remainder() {
        let rep = taylor_fold_check(&SignedMeasure::delta(2), 8, 1.0).unwrap();
        assert!(rep.normalized_remainder < 1e-15);
    }

    #[test]
    fn zero_shift_has_no_remainder() {
        let rep = variance_shift_check(16, 0, 1.0, 2).unwrap();
        assert!(rep.normalized_remainder < 1e-15);
    }

    #[test]
    fn even_polynomial_eval() {
        let p = EvenPolynomial::quadratic(0.5, 3);
        assert_eq!(p.eval_sq(2.0), 1.0);
    }

    #[test]
    fn lazy_walk_rate() {
        let law = StepLaw::<f64>::lazy(1, 0.5).unwrap();
        let rep = lclt_error_scan(&law, &[4, 8, 16, 32, 64], 2.0 * law.eta(), DEFAULT_BUDGET).unwrap();
        assert!(rep.leading_order, "exponent {}", rep.fitted_exponent);
    }
}
