use lacelab::local_fp::{
    evolve_a, mass_sequence_from_counts, saw_pipeline_with, MeasureSequence, PipelineOptions,
    SawTables,
};
use lacelab::scalar_fp::KernelSequence;
use lacelab::walks::{step_distribution, DEFAULT_BUDGET};
use lacelab::{Rational, Scalar, SignedMeasure};
use proptest::prelude::*;

fn exact_recursion_matches_counts(dim: usize, n_top: usize, lambda: Rational, mu: Rational) {
    let tables = SawTables::enumerate(dim, n_top, DEFAULT_BUDGET).unwrap();
    let counts: Vec<Rational> = (0..=n_top).map(|n| tables.walks.mass(n, &lambda)).collect();
    let mut measures = vec![SignedMeasure::zero(dim); 2];
    for m in 2..=n_top {
        let pi = tables.pis.measure(m, &lambda, None).unwrap();
        measures.push(pi.scale(&(Rational::from_i64(1) / (lambda.clone() * counts[m].clone()))));
    }
    let b = MeasureSequence::from_measures(dim, &measures).unwrap();
    let kernel = KernelSequence::new(measures.iter().skip(1).map(|m| m.mass()).collect());
    let step_mass = Rational::from_i64(2 * dim as i64);
    let a = mass_sequence_from_counts(&counts, &kernel, &lambda, &mu, &step_mass, n_top).unwrap();
    let seq = evolve_a(&step_distribution(dim), &b, &a, &lambda, &step_mass, n_top, Some(&mu)).unwrap();
    for n in 0..=n_top {
        let expected = tables
            .walks
            .measure(n, &lambda)
            .unwrap()
            .scale(&(Rational::from_i64(1) / mu.powi(n as u32)));
        assert_eq!(seq.get(n).to_measure().sorted_entries(), expected.sorted_entries(), "n = {n}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn normalized_connectivity_any_mu(
        dim in 1usize..=3,
        lam in 1i64..=10,
        mu_num in 5i64..=60,
    ) {
        let n_top = if dim == 3 { 4 } else { 6 };
        exact_recursion_matches_counts(dim, n_top, Rational::from_ratio(lam, 10), Rational::from_ratio(mu_num, 10));
    }
}

#[test]
fn constants_move_with_lambda() {
    let tables = SawTables::enumerate(5, 7, DEFAULT_BUDGET).unwrap();
    let opts = PipelineOptions::default();
    let reps: Vec<_> = [0.0, 0.01, 0.03, 0.06]
        .iter()
        .map(|&l| saw_pipeline_with(&tables, l, &opts).unwrap())
        .collect();
    assert_eq!(reps[0].constants.mu, 10.0);
    assert!((reps[0].constants.delta - 0.2).abs() < 1e-15);
    for w in reps.windows(2) {
        assert!(w[1].constants.mu < w[0].constants.mu);
        assert!(w[1].constants.delta > w[0].constants.delta);
        assert!(w[1].constants.alpha > w[0].constants.alpha);
    }
    for rep in &reps[1..] {
        assert!(rep.solution.guaranteed);
        assert!(rep.warnings.is_empty(), "{:?}", rep.warnings);
        assert!((rep.delta_series - rep.constants.delta).abs() < 1e-12);
        for g in &rep.growth {
            assert!((g.normalized - 1.0).abs() < 0.01, "n = {}: {}", g.n, g.normalized);
        }
    }
}
