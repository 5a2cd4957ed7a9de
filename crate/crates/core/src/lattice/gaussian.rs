//! Discretized normal densities and the two discretization estimates they
//! obey: bounded lattice sums, and discrete folding bounded by the continuous
//! folding up to a constant.

use serde::Serialize;

use super::{check_dim, for_each_in_box, SignedMeasure};
#[cfg(test)]
use super::Point;
use crate::error::{Error, Result};

const TAIL_TOL: f64 = 1e-12;
const RADIUS_CAP: i64 = 10_000_000;

/// `phi_eta(x) = (2 pi eta)^(-d/2) exp(-|x|^2 / (2 eta))` as a function of
/// the squared norm.
pub fn gaussian_density(eta: f64, dim: usize, r2: f64) -> f64 {
    (2.0 * std::f64::consts::PI * eta).powf(-(dim as f64) / 2.0) * (-r2 / (2.0 * eta)).exp()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GaussianSpec {
    pub eta: f64,
    pub dim: usize,
    pub radius: i64,
}

impl GaussianSpec {
    /// Truncation radius `ceil(6 sqrt(eta d))`.
    pub fn new(eta: f64, dim: usize) -> Self {
        let radius = ((6.0 * (eta * dim as f64).sqrt()).ceil() as i64).max(1);
        GaussianSpec { eta, dim, radius }
    }

    pub fn with_radius(mut self, radius: i64) -> Self {
        self.radius = radius;
        self
    }
}

/// Samples `phi_eta` on the box `|x|_inf <= radius`, without renormalizing.
pub fn gaussian(spec: &GaussianSpec) -> Result<SignedMeasure<f64>> {
    check_dim(spec.dim)?;
    if !(spec.eta > 0.0) || spec.radius < 1 {
        return Err(Error::InvalidArgument(format!(
            "gaussian needs eta > 0 and radius >= 1, got eta = {}, radius = {}",
            spec.eta, spec.radius
        )));
    }
    let mut out = SignedMeasure::zero(spec.dim);
    for_each_in_box(spec.dim, spec.radius, |p| {
        out.add_at(p, gaussian_density(spec.eta, spec.dim, p.norm2_sq() as f64));
    });
    Ok(out)
}

/// One-dimensional lattice sums `(sum phi, sum x^2 phi)` and the radius at
/// which the tail dropped below the tolerance.
fn lattice_sums_1d(eta: f64) -> Result<(f64, f64, i64)> {
    let mut mass = gaussian_density(eta, 1, 0.0);
    let mut moment = 0.0;
    let peak = (2.0 * eta.sqrt()).ceil() as i64;
    let mut r = 1i64;
    loop {
        let rf = r as f64;
        let phi = gaussian_density(eta, 1, rf * rf);
        mass += 2.0 * phi;
        moment += 2.0 * rf * rf * phi;
        if r > peak && 2.0 * (1.0 + rf * rf) * phi < TAIL_TOL {
            return Ok((mass, moment, r));
        }
        if r >= RADIUS_CAP {
            return Err(Error::TailNotConverged(RADIUS_CAP));
        }
        r += 1;
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GaussianSumRow {
    pub eta: f64,
    /// sum over Z^d of phi_eta
    pub mass: f64,
    /// sum over Z^d of |x|^2 phi_eta
    pub second_moment: f64,
    /// second_moment / eta
    pub moment_ratio: f64,
    /// (1 + (2 pi eta)^(-1/2))^d, the one-dimensional integral comparison raised to the d
    pub mass_bound: f64,
    pub radius: i64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GaussianSumReport {
    pub dim: usize,
    pub rows: Vec<GaussianSumRow>,
    /// Empirical constant for the mass sums over the grid.
    pub k_mass: f64,
    /// Empirical constant for the normalized second moments over the grid.
    pub k_moment: f64,
    pub bounded: bool,
}

/// Lattice sums of `phi_eta` and `|x|^2 phi_eta` over `Z^d` for each `eta`.
///
/// The d-dimensional sums factor into one-dimensional ones, which are summed
/// outward until the tail is below `1e-12`.
pub fn check_gaussian_sums(dim: usize, eta_grid: &[f64]) -> Result<GaussianSumReport> {
    check_dim(dim)?;
    let floor = 1.0 / (2.0 * dim as f64);
    let mut rows = Vec::with_capacity(eta_grid.len());
    for &eta in eta_grid {
        if !(eta >= floor * (1.0 - 1e-12)) {
            return Err(Error::InvalidArgument(format!(
                "eta = {eta} below 1/(2d) = {floor}"
            )));
        }
        let (s1, s2, radius) = lattice_sums_1d(eta)?;
        let d = dim as f64;
        let mass = s1.powi(dim as i32);
        let second_moment = d * s2 * s1.powi(dim as i32 - 1);
        rows.push(GaussianSumRow {
            eta,
            mass,
            second_moment,
            moment_ratio: second_moment / eta,
            mass_bound: (1.0 + (2.0 * std::f64::consts::PI * eta).powf(-0.5)).powi(dim as i32),
            radius,
        });
    }
    let k_mass = rows.iter().map(|r| r.mass).fold(0.0, f64::max);
    let k_moment = rows.iter().map(|r| r.moment_ratio).fold(0.0, f64::max);
    let bounded = k_mass.is_finite()
        && k_moment.is_finite()
        && rows.iter().all(|r| r.mass <= r.mass_bound * (1.0 + 1e-12));
    Ok(GaussianSumReport {
        dim,
        rows,
        k_mass,
        k_moment,
        bounded,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct FoldingReport {
    pub dim: usize,
    pub eta: f64,
    pub theta: f64,
    pub radius: i64,
    /// max over the box of (phi_eta (*) phi_theta)(x) / phi_{eta+theta}(x)
    pub max_ratio: f64,
    pub argmax: Vec<i64>,
    pub min_ratio: f64,
    /// exp(d/(8 eta) + d/(8 theta)), from Jensen's inequality on unit cells
    pub cell_bound: f64,
    pub finite: bool,
    pub within_cell_bound: bool,
}

fn folding_ratio_1d(eta: f64, theta: f64, u: i64, span: i64) -> f64 {
    let mut sum = 0.0;
    for y in (u - span)..=(u + span) {
        let a = (y * y) as f64;
        let b = ((u - y) * (u - y)) as f64;
        sum += gaussian_density(eta, 1, a) * gaussian_density(theta, 1, b);
    }
    sum / gaussian_density(eta + theta, 1, (u * u) as f64)
}

/// Compares the discrete folding of two lattice Gaussians with
/// `phi_{eta+theta}` on the box `|x|_inf <= radius`.
///
/// Both sides factor over coordinates, so the d-dimensional ratio is a
/// product of one-dimensional ratios and its extremes are attained on the
/// diagonal of per-coordinate extremes.
pub fn check_folding(dim: usize, eta: f64, theta: f64, radius: i64) -> Result<FoldingReport> {
    check_dim(dim)?;
    let floor = 1.0 / (2.0 * dim as f64);
    if eta < floor * (1.0 - 1e-12) || theta < floor * (1.0 - 1e-12) || radius < 0 {
        return Err(Error::InvalidArgument(format!(
            "folding check needs eta, theta >= 1/(2d) = {floor} and radius >= 0"
        )));
    }
    let span = radius + (12.0 * eta.max(theta).sqrt()).ceil() as i64 + 2;
    let mut best = (f64::MIN, 0i64);
    let mut worst = f64::MAX;
    for u in 0..=radius {
        let r = folding_ratio_1d(eta, theta, u, span);
        if r > best.0 {
            best = (r, u);
        }
        worst = worst.min(r);
    }
    let max_ratio = best.0.powi(dim as i32);
    let min_ratio = worst.powi(dim as i32);
    let d = dim as f64;
    let cell_bound = (d / (8.0 * eta) + d / (8.0 * theta)).exp();
    Ok(FoldingReport {
        dim,
        eta,
        theta,
        radius,
        max_ratio,
        argmax: vec![best.1; dim],
        min_ratio,
        cell_bound,
        finite: max_ratio.is_finite(),
        within_cell_bound: max_ratio <= cell_bound,
    })
}

/// Direct d-dimensional folding sum at one point (no factorization).
#[cfg(test)]
fn folding_ratio_direct(dim: usize, eta: f64, theta: f64, x: &Point, span: i64) -> f64 {
    let mut sum = 0.0;
    for_each_in_box(dim, span, |y| {
        let a = y.norm2_sq() as f64;
        let b = (*x - y).norm2_sq() as f64;
        sum += gaussian_density(eta, dim, a) * gaussian_density(theta, dim, b);
    });
    sum / gaussian_density(eta + theta, dim, x.norm2_sq() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn closed_form_values() {
        assert_relative_eq!(
            gaussian_density(1.0, 1, 0.0),
            0.398_942_280_401_432_7,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            gaussian_density(2.0, 2, 0.0),
            1.0 / (4.0 * std::f64::consts::PI),
            max_relative = 1e-14
        );
        let g = gaussian(&GaussianSpec::new(2.0, 2)).unwrap();
        assert_relative_eq!(g.get(&Point::origin(2)), 0.079_577_471_545_947_67, max_relative = 1e-12);
        assert_eq!(GaussianSpec::new(2.0, 2).radius, 12);
    }

    #[test]
    fn lattice_sums_match_direct_summation() {
        let report = check_gaussian_sums(2, &[0.25, 1.0, 3.0]).unwrap();
        for row in &report.rows {
            let r = 40;
            let mut mass = 0.0;
            let mut moment = 0.0;
            for_each_in_box(2, r, |p| {
                let phi = gaussian_density(row.eta, 2, p.norm2_sq() as f64);
                mass += phi;
                moment += p.norm2_sq() as f64 * phi;
            });
            assert_relative_eq!(row.mass, mass, max_relative = 1e-11);
            assert_relative_eq!(row.second_moment, moment, max_relative = 1e-11);
        }
        assert!(report.bounded);
    }

    #[test]
    fn one_dimensional_half_variance() {
        let report = check_gaussian_sums(1, &[0.5]).unwrap();
        let mut direct = gaussian_density(0.5, 1, 0.0);
        for n in 1..50i64 {
            direct += 2.0 * gaussian_density(0.5, 1, (n * n) as f64);
        }
        assert_relative_eq!(report.rows[0].mass, direct, max_relative = 1e-13);
        assert!(report.rows[0].mass.is_finite());
    }

    #[test]
    fn five_dimensions_at_the_floor() {
        let report = check_gaussian_sums(5, &[0.1]).unwrap();
        assert!(report.bounded);
        assert!(report.k_mass.is_finite() && report.k_moment.is_finite());
    }

    #[test]
    fn large_variance_approaches_unit_mass() {
        let report = check_gaussian_sums(3, &[50.0, 400.0]).unwrap();
        for row in &report.rows {
            assert_relative_eq!(row.mass, 1.0, max_relative = 1e-10);
            assert_relative_eq!(row.moment_ratio, 3.0, max_relative = 1e-8);
        }
    }

    #[test]
    fn below_floor_rejected() {
        assert!(check_gaussian_sums(2, &[0.2]).is_err());
        assert!(check_folding(2, 0.2, 1.0, 3).is_err());
    }

    #[test]
    fn folding_factorization_matches_direct_sum() {
        let (eta, theta) = (0.25, 1.0);
        let report = check_folding(2, eta, theta, 4).unwrap();
        let mut best = f64::MIN;
        for_each_in_box(2, 4, |x| {
            best = best.max(folding_ratio_direct(2, eta, theta, &x, 25));
        });
        assert_relative_eq!(report.max_ratio, best, max_relative = 1e-12);
        assert!(report.within_cell_bound);
    }

    #[test]
    fn folding_near_one_for_unit_variances() {
        let report = check_folding(1, 1.0, 1.0, 0).unwrap();
        assert_relative_eq!(report.max_ratio, 1.0, epsilon = 1e-3);
        let direct = folding_ratio_direct(1, 1.0, 1.0, &Point::origin(1), 40);
        assert_relative_eq!(report.max_ratio, direct, max_relative = 1e-13);
    }

    #[test]
    fn folding_at_the_floor_is_finite() {
        let report = check_folding(2, 0.25, 0.25, 6).unwrap();
        assert!(report.finite);
        assert!(report.max_ratio > 1.0);
        assert!(report.within_cell_bound);
    }
}
