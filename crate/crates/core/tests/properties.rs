use proptest::prelude::*;

use consensus_lut::controller::{consensus_accel, ControllerInput, GainPair};
use consensus_lut::metrics::{
    check_safety, first_sustained, omega_score, ComfortExtrema, ComfortWeights, SafetyMode,
};
use consensus_lut::stability::{
    gamma_lower_bound, transfer_magnitude, TopologyMatrix, TransferParams,
};
use consensus_lut::table::{read_table, write_table};
use consensus_lut::vehicle::{step, StateHistory, VehicleState};
use consensus_lut::{
    build_table, AxisGrid, BuildConfig, CandidateSets, GainTable, Parallelism, TableAxes,
};

fn input(ri: f64, vi: f64, rj: f64, vj: f64) -> ControllerInput {
    ControllerInput {
        follower: VehicleState::new(ri, vi, 0.0),
        leader_delayed: VehicleState::new(rj, vj, 0.0),
        leader_length: 5.0,
        time_gap: 0.7,
        comm_delay: 0.06,
        adjacency: 1,
    }
}

fn gains() -> impl Strategy<Value = GainPair> {
    (0.01f64..2.0, 0.1f64..20.0).prop_map(|(k, g)| GainPair::new(k, g).unwrap())
}

/// Eigenvalues of a real 2x2 matrix from its characteristic polynomial.
fn bound_2x2(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let tr = a + d;
    let det = a * d - b * c;
    let disc = tr * tr - 4.0 * det;
    if disc >= 0.0 {
        return 0.0;
    }
    let re = tr / 2.0;
    let im = (-disc).sqrt() / 2.0;
    im / (re.abs() * det.sqrt()).sqrt()
}

proptest! {
    #[test]
    fn euler_step_is_exact(r in -1e3f64..1e3, v in -40.0f64..40.0, a in -5.0f64..5.0) {
        let dt = 0.01;
        let next = step(VehicleState::new(r, v, 0.0), a, dt).unwrap();
        prop_assert_eq!(next.position, r + v * dt);
        prop_assert_eq!(next.speed, v + a * dt);
        prop_assert_eq!(next.accel, a);
    }

    #[test]
    fn position_is_monotone_for_nonnegative_speed(v0 in 0.0f64..30.0, accels in prop::collection::vec(-3.0f64..3.0, 1..200)) {
        let mut s = VehicleState::new(0.0, v0, 0.0);
        for a in accels {
            // Braking never pushes the speed below zero in this check.
            let a = if s.speed + a * 0.01 < 0.0 { 0.0 } else { a };
            let next = step(s, a, 0.01).unwrap();
            prop_assert!(next.position >= s.position);
            s = next;
        }
    }

    #[test]
    fn delayed_lookup_returns_stored_sample(
        positions in prop::collection::vec(-1e3f64..1e3, 1..60),
        lag in 0usize..10,
    ) {
        let dt = 0.01;
        let mut h = StateHistory::new(0.0, dt, 64).unwrap();
        for &p in &positions {
            h.push(VehicleState::new(p, 1.0, 0.0));
        }
        let now = positions.len() - 1;
        let got = h.delayed(now as f64 * dt, lag as f64 * dt).unwrap();
        let want = positions[now.saturating_sub(lag)];
        prop_assert_eq!(got.position.to_bits(), want.to_bits());
    }

    #[test]
    fn equilibrium_is_fixed_point(g in gains(), v in 0.0f64..40.0, ri in -1e3f64..1e3) {
        let desired = 5.0 + v * 0.76;
        let a = consensus_accel(&input(ri, v, ri + desired, v), g).unwrap();
        prop_assert!(a.abs() <= 1e-12, "{}", a);
    }

    #[test]
    fn law_is_linear_in_the_errors(
        g in gains(),
        v in 0.0f64..30.0,
        e1 in -20.0f64..20.0, s1 in -10.0f64..10.0,
        e2 in -20.0f64..20.0, s2 in -10.0f64..10.0,
    ) {
        // Hold the follower fixed; perturb the leader's gap and speed.
        let desired = 5.0 + v * 0.76;
        let at = |e: f64, s: f64| consensus_accel(&input(0.0, v, desired - e, v - s), g).unwrap();
        let lhs = at(e1 + e2, s1 + s2);
        let rhs = at(e1, s1) + at(e2, s2);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn law_signs(g in gains(), v in 0.0f64..30.0, excess in 0.1f64..50.0) {
        let desired = 5.0 + v * 0.76;
        prop_assert!(consensus_accel(&input(0.0, v, desired + excess, v), g).unwrap() > 0.0);
        prop_assert!(consensus_accel(&input(0.0, v, desired - excess, v), g).unwrap() < 0.0);
    }

    #[test]
    fn larger_gamma_brakes_harder_when_closing(
        k in 0.01f64..2.0, g1 in 0.1f64..10.0, dg in 0.1f64..10.0,
        v in 1.0f64..30.0, closing in 0.1f64..10.0,
    ) {
        let desired = 5.0 + v * 0.76;
        let inp = input(0.0, v, desired, v - closing.min(v));
        let a1 = consensus_accel(&inp, GainPair::new(k, g1).unwrap()).unwrap();
        let a2 = consensus_accel(&inp, GainPair::new(k, g1 + dg).unwrap()).unwrap();
        prop_assert!(a2 <= a1);
    }

    #[test]
    fn omega_ignores_jerk_sign(
        acc in 0.0f64..5.0, dec in 0.0f64..5.0,
        hi in -10.0f64..10.0, lo in -10.0f64..10.0,
        w1 in 0.0f64..3.0, w2 in 0.0f64..3.0,
    ) {
        let e = ComfortExtrema { max_accel: acc, max_decel: dec, max_jerk: hi, min_jerk: lo };
        let f = ComfortExtrema { max_accel: dec, max_decel: acc, max_jerk: -lo, min_jerk: -hi };
        let w = ComfortWeights { omega_1: w1, omega_2: w2 };
        prop_assert_eq!(omega_score(&e, &w), omega_score(&f, &w));
    }

    #[test]
    fn projected_mode_ignores_pre_arming_overlap(
        prefix in prop::collection::vec(-50.0f64..5.0, 0..30),
        steps in prop::collection::vec(1e-6f64..2.0, 1..100),
    ) {
        let mut gaps = prefix;
        let mut g = 5.0;
        for s in steps {
            g += s;
            gaps.push(g);
        }
        prop_assert!(!check_safety(&gaps, 5.0, SafetyMode::Projected).violated);
    }

    #[test]
    fn longer_hold_never_starts_earlier(flags in prop::collection::vec(any::<bool>(), 0..300), h in 0usize..20, extra in 0usize..20) {
        let short = first_sustained(flags.iter().copied(), h);
        let long = first_sustained(flags.iter().copied(), h + extra);
        match (short, long) {
            (_, None) => {}
            (Some(a), Some(b)) => prop_assert!(a <= b),
            (None, Some(_)) => prop_assert!(false, "longer hold found a window the shorter missed"),
        }
    }

    #[test]
    fn gamma_bound_matches_characteristic_polynomial(
        a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0, d in -5.0f64..5.0,
        extra in -5.0f64..5.0,
    ) {
        let tr = a + d;
        prop_assume!(tr.abs() > 1e-3);
        let want = bound_2x2(a, b, c, d);
        let m2 = TopologyMatrix::from_rows(&[vec![a, b], vec![c, d]]).unwrap();
        let got = gamma_lower_bound(&m2).unwrap();
        prop_assert!((got - want).abs() <= 1e-6 * (1.0 + want), "{} vs {}", got, want);
        // A decoupled real eigenvalue leaves the bound unchanged.
        let m3 = TopologyMatrix::from_rows(&[
            vec![a, b, 0.0],
            vec![c, d, 0.0],
            vec![0.0, 0.0, extra],
        ]).unwrap();
        let got3 = gamma_lower_bound(&m3).unwrap();
        prop_assert!((got3 - want).abs() <= 1e-6 * (1.0 + want), "{} vs {}", got3, want);
    }

    #[test]
    fn gamma_bound_invariant_under_transpose_and_scale(
        entries in prop::collection::vec(-5.0f64..5.0, 9),
        scale in 0.1f64..10.0,
    ) {
        let rows: Vec<Vec<f64>> = entries.chunks(3).map(|r| r.to_vec()).collect();
        let transposed: Vec<Vec<f64>> = (0..3).map(|j| (0..3).map(|i| rows[i][j]).collect()).collect();
        let scaled: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|x| x * scale).collect()).collect();
        let b = gamma_lower_bound(&TopologyMatrix::from_rows(&rows).unwrap()).unwrap();
        prop_assume!(b.is_finite() && b < 1e3);
        let bt = gamma_lower_bound(&TopologyMatrix::from_rows(&transposed).unwrap()).unwrap();
        let bs = gamma_lower_bound(&TopologyMatrix::from_rows(&scaled).unwrap()).unwrap();
        prop_assert!((b - bt).abs() <= 1e-6 * (1.0 + b), "{} vs {}", b, bt);
        prop_assert!((b - bs).abs() <= 1e-6 * (1.0 + b), "{} vs {}", b, bs);
    }

    #[test]
    fn transfer_magnitude_scales_with_k(g in gains(), omega in 1e-3f64..1e2) {
        let p = TransferParams { gains: g, adjacency: 1.0, time_gap: 0.7, delay: 0.06 };
        let doubled = TransferParams { gains: GainPair::new(2.0 * g.k, g.gamma).unwrap(), ..p };
        let m1 = transfer_magnitude(&p, omega).unwrap();
        let m2 = transfer_magnitude(&doubled, omega).unwrap();
        prop_assert!((m2 - 2.0 * m1).abs() <= 1e-12 * (1.0 + m2));
    }
}

fn random_table(cells: Vec<Option<(f64, f64)>>) -> GainTable {
    let axes = TableAxes::new(
        AxisGrid::new(vec![-10.0, 0.0, 10.0]).unwrap(),
        AxisGrid::new(vec![0.0, 5.0]).unwrap(),
        AxisGrid::new(vec![0.0, 2.0, 4.0, 6.0]).unwrap(),
    );
    let cells = cells
        .into_iter()
        .map(|c| c.map_or(GainPair::SENTINEL, |(k, g)| GainPair::new(k, g).unwrap()))
        .collect();
    GainTable::from_cells(axes, CandidateSets::standard(), BuildConfig::default(), cells).unwrap()
}

fn cells_strategy() -> impl Strategy<Value = Vec<Option<(f64, f64)>>> {
    prop::collection::vec(prop::option::weighted(0.8, (0.001f64..1.0, 0.1f64..10.0)), 24)
}

proptest! {
    #[test]
    fn lookup_is_nearest_with_ties_low(cells in cells_strategy(), q in (-12.0f64..12.0, -1.0f64..6.0, -1.0f64..7.0)) {
        let t = random_table(cells);
        let axes = [t.axes.dr.values(), t.axes.vi.values(), t.axes.vj.values()];
        let qs = [q.0, q.1, q.2];
        let inside = (0..3).all(|a| qs[a] >= axes[a][0] && qs[a] <= *axes[a].last().unwrap());
        let got = t.lookup(q.0, q.1, q.2);
        if !inside {
            prop_assert!(got.is_none());
        } else {
            let idx: Vec<usize> = (0..3)
                .map(|a| {
                    (0..axes[a].len())
                        .min_by(|&i, &j| {
                            (qs[a] - axes[a][i]).abs().total_cmp(&(qs[a] - axes[a][j]).abs()).then(i.cmp(&j))
                        })
                        .unwrap()
                })
                .collect();
            prop_assert_eq!(got, t.cell([idx[0], idx[1], idx[2]]));
        }
    }

    #[test]
    fn persistence_round_trips(cells in cells_strategy()) {
        let t = random_table(cells);
        let mut first = Vec::new();
        write_table(&t, &mut first).unwrap();
        let back = read_table(first.as_slice()).unwrap();
        let mut second = Vec::new();
        write_table(&back, &mut second).unwrap();
        prop_assert_eq!(&back, &t);
        prop_assert_eq!(first, second);
    }
}

fn small_build_inputs() -> (TableAxes, CandidateSets, BuildConfig) {
    let axes = TableAxes::new(
        AxisGrid::new(vec![-30.0, 5.0, 40.0]).unwrap(),
        AxisGrid::new(vec![6.0, 22.0]).unwrap(),
        AxisGrid::new(vec![8.0, 20.0]).unwrap(),
    );
    let cands = CandidateSets::new(vec![1.0, 3.0, 5.0], vec![0.1]).unwrap();
    let cfg = BuildConfig {
        t_max: 60.0,
        ..BuildConfig::default()
    };
    (axes, cands, cfg)
}

#[test]
fn serial_and_parallel_builds_agree() {
    let (axes, cands, cfg) = small_build_inputs();
    let serial = build_table(&axes, &cands, &cfg, Parallelism::Serial).unwrap();
    let parallel = build_table(&axes, &cands, &cfg, Parallelism::Workers(3)).unwrap();
    assert_eq!(serial, parallel);
    for c in serial.cells().iter().filter(|c| c.is_valid()) {
        assert!(cands.contains(c));
    }
}

#[test]
fn overlapping_start_is_sentinel_in_same_lane_mode() {
    let (axes, cands, mut cfg) = small_build_inputs();
    cfg.safety_mode = SafetyMode::SameLane;
    let t = build_table(&axes, &cands, &cfg, Parallelism::Serial).unwrap();
    for (flat, c) in t.cells().iter().enumerate() {
        let key = t.axes.key(t.axes.unflatten(flat));
        if key.dr <= cfg.leader_length {
            assert!(!c.is_valid(), "{key:?} should be a sentinel");
        }
    }
}
