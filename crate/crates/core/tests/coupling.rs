use approx::assert_abs_diff_eq;
use fitpa::coupling::{
    coupled_degree_run, coupled_triple_run, discretize, lambda0_convergence_scan, solve_discretization_lambda,
    truncate, truncation_spec, CouplingError, Side,
};
use fitpa::fitness::FitnessModel;
use fitpa::schedule::CheckpointSchedule;
use fitpa::theory::solve_lambda0;
use proptest::prelude::*;

type M = FitnessModel<f64>;

fn uniform_lambda0() -> f64 {
    let g = |l: f64| l * (l / (l - 1.0)).ln() - 2.0;
    let (mut a, mut b) = (1.0 + 1e-12, 10.0);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if g(m) > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

#[test]
fn zeta_lower_truncation() {
    let m = M::zeta_family(2.0);
    let s = truncation_spec(&m, 3, Side::Lower).unwrap();
    let f: Vec<f64> = (1..=4).map(|j| s.fitness_of(j)).collect();
    assert_eq!(f[0], 0.0);
    assert_abs_diff_eq!(f[1], 0.5, epsilon = 1e-15);
    assert_abs_diff_eq!(f[2], 2.0 / 3.0, epsilon = 1e-15);
    assert_eq!(f[3], 1.0);
    assert_eq!(s.tail_mass, m.mass_beyond(3).unwrap());
    for j in 1..=3 {
        assert_eq!(s.probs[j - 1], m.atom(j).unwrap().1);
    }
}

#[test]
fn finite_truncation_is_identity() {
    let m = M::two_point(1.0, 2.0, 0.5);
    for side in [Side::Upper, Side::Lower] {
        let t = truncate(&m, 2, side).unwrap();
        assert_eq!(t.atom_count(), Some(2));
        assert_eq!(t.atom(1).unwrap(), (1.0, 0.5));
        assert_eq!(t.atom(2).unwrap(), (2.0, 0.5));
    }
}

#[test]
fn upper_truncated_root_sits_below_h() {
    let m = M::zeta_family(2.0);
    for i in [5, 20, 100] {
        let r = solve_lambda0(&truncate(&m, i, Side::Upper).unwrap()).unwrap();
        let hi = 1.0 - 1.0 / i as f64;
        assert!(r.lambda0 > hi && r.lambda0 <= 1.0 + 1e-12, "I={i}: {}", r.lambda0);
    }
}

#[test]
fn truncate_rejects_densities() {
    assert!(matches!(
        truncate(&M::uniform(1.0), 3, Side::Upper),
        Err(CouplingError::Variant { .. })
    ));
    assert!(matches!(
        discretize(&M::zeta_family(2.0), 3),
        Err(CouplingError::Variant { .. })
    ));
}

#[test]
fn covering_truncation_chains_coincide() {
    let m = M::finite(vec![0.5, 1.0, 2.0], vec![0.2, 0.3, 0.5]);
    let r = coupled_degree_run(&m, 3, 5000, 17, &CheckpointSchedule::PowersOfTwo).unwrap();
    assert!(r.run.violations.is_empty());
    assert_eq!(r.run.branch_counts[1] + r.run.branch_counts[2], 0);
    for (a, b) in r.run.lower.snapshots.iter().zip(&r.run.upper.snapshots) {
        assert_eq!(a.m, b.m);
    }
    for t in &r.tails {
        assert_eq!((t.lower, t.middle), (t.middle, t.upper));
    }
}

#[test]
fn zeta_degree_coupling_has_no_violations() {
    let m = M::zeta_family(2.0);
    for seed in 0..20 {
        let r = coupled_degree_run(&m, 5, 10_000, seed, &CheckpointSchedule::Final).unwrap();
        assert!(
            r.run.violations.is_empty(),
            "seed {seed}: {:?}",
            r.run.violations.first()
        );
        assert_eq!(r.run.violation_counts, [0; 4]);
        for t in r.tails.iter().filter(|t| t.k == 1) {
            assert_eq!(t.middle, r.run.middle.last().m_of(t.atom - 1));
        }
    }
}

#[test]
fn triple_run_branch_mass() {
    for seed in 0..5 {
        let r = coupled_triple_run(&M::zeta_family(2.0), 5, 5000, seed, &CheckpointSchedule::Final).unwrap();
        assert!(r.branch_mass_error <= 1e-12);
        assert_eq!(r.branch_counts.iter().sum::<u64>() + r.fallback_steps, r.steps);
    }
}

#[test]
fn discretize_examples() {
    let (s, urn) = discretize(&M::uniform(1.0), 4).unwrap();
    for q in &s.cell_masses {
        assert_abs_diff_eq!(*q, 0.25, epsilon = 1e-12);
    }
    assert_eq!(urn.bins(), 5);

    let (s, _) = discretize(&M::beta(1.0, 3.0), 10).unwrap();
    // ∫₀^0.1 3(1 - x)² dx = 1 - 0.9³.
    assert_abs_diff_eq!(s.cell_masses[0], 1.0 - 0.9f64.powi(3), epsilon = 1e-10);
    assert_abs_diff_eq!(s.cell_masses[0], 0.271, epsilon = 1e-12);
    assert_abs_diff_eq!(s.cell_masses.iter().sum::<f64>(), s.total_mass, epsilon = 1e-10);
    assert_abs_diff_eq!(s.total_mass, 1.0, epsilon = 1e-10);
}

#[test]
fn discretized_root_for_uniform() {
    let target = uniform_lambda0();
    let (s, _) = discretize(&M::uniform(1.0), 50).unwrap();
    let r = solve_discretization_lambda(&s).unwrap();
    assert!(r.residual.abs() <= 1e-10);
    assert!(r.nu_sum_error.abs() <= 1e-9);
    assert!(
        r.lambda >= target - s.epsilon && r.lambda <= target + 0.05,
        "{}",
        r.lambda
    );
}

#[test]
fn scan_of_finite_model_is_constant_beyond_support() {
    let m = M::finite(vec![0.5, 1.0, 2.0], vec![0.2, 0.3, 0.5]);
    let t = lambda0_convergence_scan(&m, &[3, 5, 10, 100]).unwrap();
    for r in &t.rows {
        assert_abs_diff_eq!(r.lower_truncation.unwrap(), t.target, epsilon = 1e-10);
        assert_abs_diff_eq!(r.upper_truncation.unwrap(), t.target, epsilon = 1e-10);
    }
    assert!(t.monotone);
}

#[test]
fn zeta_scan_approaches_h() {
    let t = lambda0_convergence_scan(&M::zeta_family(2.0), &[10, 100, 1000]).unwrap();
    let last = t.rows.last().unwrap();
    assert!((last.upper_truncation.unwrap() - 1.0).abs() <= 0.01);
    assert!(t.rows.iter().all(|r| r.bracket_holds));
    assert!(t.monotone);
    let mut out = Vec::new();
    t.write_csv(&mut out).unwrap();
    assert_eq!(String::from_utf8(out).unwrap().lines().count(), 4);
}

/// Root of the discretized uniform equation by bisection on `(h - ε, 10]`.
fn uniform_discretized_oracle(cells: usize) -> f64 {
    let e = 1.0 / cells as f64;
    let g = |l: f64| {
        let s: f64 = (0..cells).map(|j| (j + 1) as f64 * e * e / (l - j as f64 * e)).sum();
        s + 2.0 * e / (l * (l - (1.0 - e))) - 1.0
    };
    let (mut a, mut b) = (1.0 - e, 10.0);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if g(m) > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

#[test]
fn uniform_scan_converges() {
    let target = uniform_lambda0();
    let t = lambda0_convergence_scan(&M::uniform(1.0), &[10, 50, 250]).unwrap();
    let mut gaps = Vec::new();
    for r in &t.rows {
        let (l, eps) = (r.discretized.unwrap(), r.epsilon.unwrap());
        assert_abs_diff_eq!(l, uniform_discretized_oracle(r.index), epsilon = 1e-9);
        assert!(l > target - eps);
        assert!(r.residual <= 1e-10);
        assert!(r.nu_sum_error.unwrap().abs() <= 1e-9);
        assert!(r.bracket_holds);
        gaps.push((l - target).abs());
        if r.index >= 50 {
            assert!((l - target).abs() <= eps + 0.05, "I={}: {l}", r.index);
        }
    }
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fit_get_richer_scan_brackets(extra in prop::collection::vec(0.05f64..0.5, 2..6), i in 1usize..4) {
        // Ascending atoms with a dominant top atom keep the model fit-get-richer.
        let mut fits = Vec::new();
        let mut acc = 0.2;
        for d in &extra {
            acc += d;
            fits.push(acc);
        }
        let j = fits.len();
        let mut probs = vec![0.4 / (j - 1) as f64; j - 1];
        probs.push(0.6);
        let m = M::finite(fits, probs);
        let t = lambda0_convergence_scan(&m, &[i, i + 1, j]).unwrap();
        for r in &t.rows {
            prop_assert!(r.bracket_holds, "{:?}", r);
        }
        prop_assert!(t.monotone);
    }

    #[test]
    fn truncation_keeps_head_probabilities(i in 1usize..40) {
        let m = M::zeta_family(2.0);
        for side in [Side::Upper, Side::Lower] {
            let s = truncation_spec(&m, i, side).unwrap();
            for j in 1..=i {
                prop_assert_eq!(s.probs[j - 1], m.atom(j).unwrap().1);
            }
            let total: f64 = s.probs.iter().sum::<f64>() + s.tail_mass;
            prop_assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn discretized_sums(cells in 2usize..60, a in 1.0f64..3.0, b in 1.5f64..4.0) {
        let (s, _) = discretize(&M::beta(a, b), cells).unwrap();
        let r = solve_discretization_lambda(&s).unwrap();
        prop_assert!(r.lambda > s.h - s.epsilon);
        prop_assert!(r.residual.abs() <= 1e-10);
        prop_assert!(r.nu_sum_error.abs() <= 1e-9);
    }
}
