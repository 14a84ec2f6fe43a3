use fitpa::fitness::FitnessModel;
use fitpa::graph::{new_growth, simulate, ClassLayout, GrowthOptions, TrackRule};
use fitpa::schedule::CheckpointSchedule;
use proptest::prelude::*;

type M = FitnessModel<f64>;

fn csv_bytes(s: &fitpa::graph::EmpiricalSummary) -> Vec<u8> {
    let mut out = Vec::new();
    s.write_m_csv(&mut out).unwrap();
    s.write_n_csv(&mut out).unwrap();
    s.write_trajectories_csv(&mut out).unwrap();
    out
}

#[test]
fn root_weights() {
    let g = new_growth(&M::dirac(1.0), 1, GrowthOptions::default()).unwrap();
    assert_eq!(g.total_weight(), 2.0);
    assert_eq!(g.degree(0), 2);
    for seed in 0..20 {
        let w = new_growth(&M::two_point(1.0, 2.0, 0.5), seed, GrowthOptions::default())
            .unwrap()
            .total_weight();
        assert!(w == 2.0 || w == 4.0);
    }
}

#[test]
fn beta_root_fitness_mean() {
    let m = M::beta(1.0, 3.0);
    let n = 100_000;
    let mean = (0..n)
        .map(|s| new_growth(&m, s, GrowthOptions::default()).unwrap().fitness(0))
        .sum::<f64>()
        / n as f64;
    assert!((mean - 0.25).abs() <= 0.005, "{mean}");
}

#[test]
fn first_dirac_step_hits_root() {
    for seed in 0..10 {
        let mut g = new_growth(&M::dirac(1.0), seed, GrowthOptions::default()).unwrap();
        let a = g.step();
        assert_eq!(a.target, 0);
        assert_eq!(a.target_degree, 2);
        assert_eq!(g.degree(0), 3);
        assert_eq!(g.degree(1), 1);
    }
}

#[test]
fn attachment_follows_fitness_times_degree() {
    // After one step from a fitness-1 root the weights are 1·3 and 2·1 when
    // the child has fitness 2, so the child is chosen with probability 2/5.
    let m = M::two_point(1.0, 2.0, 0.5);
    let (mut hits, mut trials) = (0u32, 0u32);
    let mut seed = 0;
    while trials < 20_000 {
        seed += 1;
        let mut g = new_growth(&m, seed, GrowthOptions::default()).unwrap();
        g.step();
        if g.fitness(0) != 1.0 || g.fitness(1) != 2.0 {
            continue;
        }
        assert_eq!(g.total_weight(), 5.0);
        trials += 1;
        if g.step().target == 1 {
            hits += 1;
        }
    }
    assert!((hits as f64 / trials as f64 - 0.4).abs() < 0.015);
}

#[test]
fn dirac_degree_one_fraction() {
    let s = simulate(
        &M::dirac(1.0),
        3,
        100_000,
        &CheckpointSchedule::Final,
        GrowthOptions::default(),
    )
    .unwrap();
    let last = s.last();
    assert!((last.l_of(1) as f64 / last.n as f64 - 2.0 / 3.0).abs() <= 0.01);
}

#[test]
fn dirac_link_share_is_two() {
    let n = 1_000_000;
    let s = simulate(
        &M::dirac(1.0),
        4,
        n,
        &CheckpointSchedule::Final,
        GrowthOptions::default(),
    )
    .unwrap();
    assert_eq!(s.last().m_of(0), 2 * n + 2);
    assert!((s.last().m_of(0) as f64 / n as f64 - 2.0).abs() <= 0.005);
}

#[test]
fn summaries_are_byte_identical_per_seed() {
    let opts = || GrowthOptions {
        track: vec![TrackRule::FirstK { count: 5 }],
        ..Default::default()
    };
    let m = M::two_point(1.0, 2.0, 0.5);
    let a = simulate(&m, 9, 20_000, &CheckpointSchedule::PowersOfTwo, opts()).unwrap();
    let b = simulate(&m, 9, 20_000, &CheckpointSchedule::PowersOfTwo, opts()).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(csv_bytes(&a), csv_bytes(&b));
    let c = simulate(&m, 10, 20_000, &CheckpointSchedule::PowersOfTwo, opts()).unwrap();
    assert_ne!(csv_bytes(&a), csv_bytes(&c));
}

#[test]
fn untracked_vertex_has_no_trajectory() {
    let s = simulate(
        &M::dirac(1.0),
        1,
        1000,
        &CheckpointSchedule::Final,
        GrowthOptions::default(),
    )
    .unwrap();
    assert!(s.trajectory(0).is_none());
    let mut g = new_growth(&M::dirac(1.0), 1, GrowthOptions::default()).unwrap();
    g.step();
    assert!(g.trajectory(1).is_empty());
}

#[test]
fn csv_headers() {
    let s = simulate(
        &M::two_point(1.0, 2.0, 0.5),
        1,
        100,
        &CheckpointSchedule::Final,
        GrowthOptions::default(),
    )
    .unwrap();
    let text = String::from_utf8(csv_bytes(&s)).unwrap();
    assert!(text.starts_with("checkpoint,class,M,n,M_over_n\n"));
    assert!(text.contains("checkpoint,class,degree,N\n"));
    assert!(text.contains("vertex,t,degree\n"));
}

fn any_model() -> impl Strategy<Value = M> {
    prop_oneof![
        (0.1f64..3.0).prop_map(M::dirac),
        (0.1f64..1.0, 0.05f64..0.95).prop_map(|(f, q)| M::two_point(f, f + 1.0, q)),
        (0.5f64..3.0, 1.0f64..4.0).prop_map(|(a, b)| M::beta(a, b)),
        Just(M::zeta_family(2.0)),
        Just(M::uniform(1.0)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn conservation_at_every_checkpoint(m in any_model(), seed in any::<u64>(), n in 1u64..3000) {
        let s = simulate(&m, seed, n, &CheckpointSchedule::PowersOfTwo, GrowthOptions::default()).unwrap();
        for snap in &s.snapshots {
            prop_assert_eq!(snap.vertices, snap.n + 1);
            prop_assert_eq!(snap.degree_sum, 2 * snap.n + 2);
            prop_assert_eq!(snap.m.iter().sum::<u64>(), 2 * snap.n + 2);
            for c in 0..snap.m.len() {
                // T_{(c,1)} = M_c and N row sums are the class sizes.
                prop_assert_eq!(snap.t_of(c, 1), snap.m_of(c));
                let rows: u64 = snap.class_degrees(c).iter().map(|p| p.1).sum();
                prop_assert_eq!(rows, snap.vertices_in_class(c));
            }
        }
    }

    #[test]
    fn tree_root_tracks_weights(seed in any::<u64>(), n in 1u64..5000) {
        let mut g = new_growth(&M::beta(2.0, 2.0), seed, GrowthOptions::default()).unwrap();
        for _ in 0..n {
            g.step();
        }
        let direct: f64 = (0..g.vertex_count() as u64).map(|v| g.fitness(v) * g.degree(v) as f64).sum();
        prop_assert!((g.total_weight() - direct).abs() <= 1e-9 * direct);
    }

    #[test]
    fn interval_layout_tiles_support(x in 0.0f64..=1.0) {
        let layout = ClassLayout::equal_cells(1.0, 20);
        let c = layout.class_of(x, None).unwrap();
        prop_assert!(c < 20);
    }
}
