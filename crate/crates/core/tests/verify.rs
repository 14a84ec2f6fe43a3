use fitpa::fitness::FitnessModel;
use fitpa::graph::{simulate, ClassLayout, EmpiricalSummary, GrowthOptions, TrackRule};
use fitpa::schedule::CheckpointSchedule;
use fitpa::theory::{LimitLaw, Phase};
use fitpa::verify::{
    compare_degree_law, compare_link_shares, condensation_scan, estimate_tail_exponent, median, vertex_exponent,
    VerifyError, DEFAULT_KMIN,
};
use proptest::prelude::*;

type M = FitnessModel<f64>;

fn run(m: &M, seed: u64, n: u64, opts: GrowthOptions) -> EmpiricalSummary {
    simulate(m, seed, n, &CheckpointSchedule::PowersOfTwo, opts).unwrap()
}

#[test]
fn dirac_share_within_two_over_n() {
    let m = M::dirac(1.0);
    for n in [10, 1000, 50_000] {
        let s = run(&m, 1, n, GrowthOptions::default());
        let r = compare_link_shares(&[s], &LimitLaw::new(m.clone()).unwrap(), 2.0 / n as f64 * (1.0 + 1e-12)).unwrap();
        let row = r.row("atom 1").unwrap();
        assert_eq!(row.theory, 2.0);
        assert!(row.pass, "{row:?}");
    }
}

#[test]
fn median_examples() {
    assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    assert!(median(&[]).is_nan());
}

#[test]
fn mismatched_runs_are_rejected() {
    let a = run(&M::dirac(1.0), 1, 100, GrowthOptions::default());
    let b = run(&M::dirac(1.0), 2, 200, GrowthOptions::default());
    let law = LimitLaw::new(M::dirac(1.0)).unwrap();
    assert!(matches!(
        compare_link_shares(&[a.clone(), b], &law, 0.1),
        Err(VerifyError::Mismatch(_))
    ));
    assert!(matches!(compare_link_shares(&[], &law, 0.1), Err(VerifyError::Empty)));
    let other = LimitLaw::new(M::dirac(2.0)).unwrap();
    assert!(compare_link_shares(&[a], &other, 0.1).is_err());
}

#[test]
fn dirac_estimators_agree() {
    let s = run(&M::dirac(1.0), 21, 1_000_000, GrowthOptions::default());
    let fit = estimate_tail_exponent(s.last(), None, DEFAULT_KMIN, None).unwrap();
    assert!(fit.disagreement() <= 2.0, "{fit:?}");
    assert!((fit.mle - 2.0).abs() <= 0.15, "{fit:?}");
    assert!(fit.kmax > fit.kmin);
}

#[test]
fn tail_fit_needs_vertices() {
    let s = run(&M::dirac(1.0), 3, 200, GrowthOptions::default());
    assert!(matches!(
        estimate_tail_exponent(s.last(), None, DEFAULT_KMIN, None),
        Err(VerifyError::Insufficient { .. })
    ));
}

#[test]
fn dirac_degree_law_matches_mu() {
    let s = run(&M::dirac(1.0), 5, 200_000, GrowthOptions::default());
    let r = compare_degree_law(&[s], 5, 0.01).unwrap();
    // 4 / (k (k+1) (k+2)).
    for k in 1..=5u64 {
        let row = r.row(&format!("degree {k}")).unwrap();
        let mu = 4.0 / (k * (k + 1) * (k + 2)) as f64;
        assert!((row.theory - mu).abs() < 1e-12);
    }
    assert!(r.passed(), "{:?}", r.failures());
}

#[test]
fn root_and_leaf_slopes() {
    let opts = GrowthOptions {
        track: vec![TrackRule::FirstK { count: 400 }],
        ..Default::default()
    };
    let s = run(&M::dirac(1.0), 8, 200_000, opts);
    let root = vertex_exponent(&s.trajectory(0).unwrap().points, 1000).unwrap();
    assert!((root.slope - 0.5).abs() <= 0.1, "{root:?}");

    let leaf = s
        .trajectories
        .iter()
        .find(|t| t.points.last().unwrap().1 == 1)
        .expect("some early vertex is never re-selected");
    let fit = vertex_exponent(&leaf.points, 0).unwrap();
    assert!(fit.slope.abs() <= fit.stderr.max(1e-12), "{fit:?}");

    assert!(matches!(
        vertex_exponent(&leaf.points[..3], 0),
        Err(VerifyError::Insufficient { .. })
    ));
}

#[test]
fn zeta_mass_escapes_upward() {
    let m = M::zeta_family(2.0);
    // Mass escapes to ever higher atoms, so the share beyond atom 3 grows.
    let s = simulate(
        &m,
        4,
        200_000,
        &CheckpointSchedule::Explicit {
            steps: vec![2_000, 20_000, 200_000],
        },
        GrowthOptions::default(),
    )
    .unwrap();
    let above: Vec<f64> = s
        .snapshots
        .iter()
        .map(|p| (3..p.m.len()).map(|c| p.m_of(c)).sum::<u64>() as f64 / p.n as f64)
        .collect();
    assert_eq!(above.len(), 3);
    assert!(above.windows(2).all(|w| w[1] > w[0]), "{above:?}");
}

#[test]
fn uniform_scan_is_stable_and_warns() {
    let scan = condensation_scan(&M::uniform(1.0), &[10_000, 100_000, 400_000], 0.05, 2, 0.03).unwrap();
    assert_eq!(scan.phase, Phase::FitGetRicher);
    assert!(scan.warning.is_some());
    let last = scan.rows.last().unwrap();
    assert!(
        (last.top_mass - scan.target).abs() <= 0.03,
        "{last:?} vs {}",
        scan.target
    );
    assert!(scan.cells.passed(), "{:?}", scan.cells.failures());
    for r in &scan.rows {
        assert!((r.top_mass + r.below_mass - 2.0).abs() <= 4.0 / r.n as f64);
    }
    let mut out = Vec::new();
    scan.write_csv(&mut out).unwrap();
    assert_eq!(String::from_utf8(out).unwrap().lines().count(), 4);
}

#[test]
fn beta_scan_reports_condensation_target() {
    let scan = condensation_scan(&M::beta(1.0, 3.0), &[1_000, 10_000], 0.05, 1, 0.05).unwrap();
    assert_eq!(scan.phase, Phase::InnovationPaysOff);
    assert!(scan.warning.is_none());
    // 2 - 3 (0.95 - 0.95²/2).
    assert!((scan.target - (2.0 - 3.0 * (0.95 - 0.95 * 0.95 / 2.0))).abs() < 1e-8);
    assert_eq!(scan.cells.rows.len(), 19);
}

#[test]
fn reports_are_deterministic_and_serialize() {
    let m = M::two_point(1.0, 2.0, 0.5);
    let law = LimitLaw::new(m.clone()).unwrap();
    let runs: Vec<_> = (0..3).map(|s| run(&m, s, 20_000, GrowthOptions::default())).collect();
    let a = compare_link_shares(&runs, &law, 0.05).unwrap();
    let b = compare_link_shares(&runs, &law, 0.05).unwrap();
    assert_eq!(a, b);
    let json = serde_json::to_string(&a).unwrap();
    assert_eq!(
        serde_json::from_str::<fitpa::verify::ComparisonReport>(&json).unwrap(),
        a
    );
    let mut csv = Vec::new();
    a.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("target,theory,empirical,mean,abs_error,rel_error,seeds,checkpoint,tolerance,pass\n"));
    assert_eq!(text.lines().count(), 1 + a.rows.len());
}

#[test]
fn unbounded_partition_keeps_escaping_mass_on_top() {
    let m = M::exponential(1.0);
    let n = 50_000;
    let s = run(&m, 9, n, GrowthOptions::default());
    let r = compare_link_shares(&[s], &LimitLaw::new(m).unwrap(), 1.0).unwrap();
    assert_eq!(r.rows.len(), 10);
    for row in &r.rows[..9] {
        assert!((row.theory - 0.1).abs() < 1e-12, "{row:?}");
    }
    // [q_0.9, ∞) holds 2 - 0.9.
    assert!((r.rows[9].theory - 1.1).abs() < 1e-12);
    let total: f64 = r.rows.iter().map(|row| row.empirical).sum();
    assert!((total - 2.0).abs() <= 4.0 / n as f64, "{total}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn partition_shares_sum_to_two(seed in any::<u64>(), n in 10u64..20_000, cells in 2usize..12) {
        let m = M::beta(2.0, 2.0);
        let s = run(&m, seed, n, GrowthOptions { layout: Some(ClassLayout::equal_cells(1.0, cells)), ..Default::default() });
        let r = compare_link_shares(&[s], &LimitLaw::new(m).unwrap(), 1.0).unwrap();
        let total: f64 = r.rows.iter().map(|row| row.empirical).sum();
        prop_assert!((total - 2.0).abs() <= 4.0 / n as f64, "{}", total);
        let theory: f64 = r.rows.iter().map(|row| row.theory).sum();
        prop_assert!((theory - 2.0).abs() <= 1e-8);
    }
}
