use info_core::{mutual_information, ConditionalPmf, JointPmf, Pmf};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rd_solver::*;

fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

#[test]
fn four_state_source_at_half_distortion() {
    let p = Pmf::uniform(4).unwrap();
    let d = DistortionMatrix::hamming(4);
    // For the uniform source the optimal channel keeps the symbol with
    // probability 1/(1 + 3e^{-s}); D = 0.5 exactly when s = ln 3.
    let pt = blahut_arimoto_rd(&p, &d, 3f64.ln(), DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    assert!((pt.distortion - 0.5).abs() < 1e-12);
    assert!((pt.rate - 0.2075).abs() < 1e-3, "rate {}", pt.rate);
    let want = 2.0 - 1.0 - 0.5 * 3f64.log2();
    assert!((pt.rate - want).abs() < 1e-9);

    let found = rd_point_at_distortion(&p, &d, 0.5, 1e-9).unwrap();
    assert!((found.rate - want).abs() < 1e-6);
    assert!((found.slope - 3f64.ln()).abs() < 1e-6);
}

#[test]
fn slope_limits() {
    let p = Pmf::uniform(4).unwrap();
    let d = DistortionMatrix::hamming(4);
    let lossless = blahut_arimoto_rd(&p, &d, 60.0, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    assert!((lossless.rate - 2.0).abs() < 1e-6);
    let closed = blahut_arimoto_rd(&p, &d, 1e-6, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    assert!(closed.rate < 1e-6);
    assert!((closed.distortion - 0.75).abs() < 1e-5);
}

#[test]
fn uniform_hamming_curves_match_closed_form() {
    for m in [2usize, 3, 4, 8] {
        let p = Pmf::uniform(m).unwrap();
        let d = DistortionMatrix::hamming(m);
        let curve = rd_curve(&p, &d, &log_spaced(0.05, 20.0, 20)).unwrap();
        assert_eq!(curve.points.len(), 20);
        for pt in &curve.points {
            let want = analytic_uniform_hamming(m, pt.distortion).unwrap();
            assert!(
                (pt.rate - want).abs() < 1e-3,
                "m={m} s={} D={} rate={} oracle={want}",
                pt.slope,
                pt.distortion,
                pt.rate
            );
        }
    }
}

#[test]
fn binary_curve_is_one_minus_binary_entropy() {
    let p = Pmf::uniform(2).unwrap();
    let curve = rd_curve(&p, &DistortionMatrix::hamming(2), &log_spaced(0.1, 15.0, 12)).unwrap();
    for pt in &curve.points {
        let h = -pt.distortion * pt.distortion.log2()
            - (1.0 - pt.distortion) * (1.0 - pt.distortion).log2();
        assert!((pt.rate - (1.0 - h)).abs() < 1e-9);
    }
}

#[test]
fn single_slope_curve() {
    let p = Pmf::uniform(3).unwrap();
    let c = rd_curve(&p, &DistortionMatrix::hamming(3), &[2.0]).unwrap();
    assert_eq!(c.points.len(), 1);
}

#[test]
fn slopes_below_the_critical_value_share_a_point() {
    // Skewed binary source: every slope below the critical one lands on
    // (D_max, 0), so equal distortions give equal rates.
    let p = Pmf::new(vec![0.8, 0.2]).unwrap();
    let d = DistortionMatrix::hamming(2);
    let c = rd_curve(&p, &d, &[0.05, 0.1]).unwrap();
    let (a, b) = (&c.points[0], &c.points[1]);
    assert!((a.distortion - b.distortion).abs() < 1e-6);
    assert!((a.rate - b.rate).abs() < 1e-6);
    assert!(a.rate < 1e-6);
}

#[test]
fn capacity_examples() {
    let bsc = |e: f64| ConditionalPmf::new(vec![vec![1.0 - e, e], vec![e, 1.0 - e]]).unwrap();
    let c = channel_capacity(&bsc(0.5), DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    assert!(c.capacity.abs() < 1e-12);

    let id = ConditionalPmf::identity(4).unwrap();
    let c = channel_capacity(&id, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    assert!((c.capacity - 2.0).abs() < 1e-10);
    for &p in c.optimal_input.probs() {
        assert!((p - 0.25).abs() < 1e-12);
    }

    let c = channel_capacity(&bsc(0.1), DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    let hb = -(0.1f64 * 0.1f64.log2() + 0.9 * 0.9f64.log2());
    assert!((c.capacity - (1.0 - hb)).abs() < 1e-9);
    assert!((c.capacity - 0.5310).abs() < 1e-4);
}

#[test]
fn capacity_dominates_random_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let (n, m) = (4, 5);
    let data: Vec<f64> = (0..n)
        .flat_map(|_| {
            let w: Vec<f64> = (0..m).map(|_| rng.random::<f64>() + 0.01).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(move |v| v / s)
        })
        .collect();
    let ch = ConditionalPmf::from_flat(n, m, data).unwrap();
    let tol = DEFAULT_TOL;
    let cap = channel_capacity(&ch, tol, DEFAULT_MAX_ITER).unwrap();
    for _ in 0..50 {
        let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let p = Pmf::from_weights(&w).unwrap();
        let i = mutual_information(&JointPmf::from_source_and_channel(&p, &ch).unwrap()).unwrap();
        assert!(i <= cap.capacity + tol, "{i} > {}", cap.capacity);
    }
}

fn source_and_matrix() -> impl Strategy<Value = (Vec<f64>, Vec<Vec<f64>>)> {
    (2usize..=5).prop_flat_map(|n| {
        (
            prop::collection::vec(0.05f64..1.0, n),
            prop::collection::vec(prop::collection::vec(0.0f64..3.0, n), n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn curve_is_monotone_and_achievable((w, mut dm) in source_and_matrix()) {
        for (i, row) in dm.iter_mut().enumerate() {
            row[i] = 0.0;
        }
        let p = Pmf::from_weights(&w).unwrap();
        let d = DistortionMatrix::new(dm).unwrap();
        let tol = DEFAULT_TOL;
        // Generic matrices can leave a reproduction symbol whose mass decays
        // only geometrically, so allow more iterations than the default.
        let curve = rd_curve_with(&p, &d, &log_spaced(0.3, 30.0, 10), tol, 100_000).unwrap();
        for w in curve.points.windows(2) {
            prop_assert!(w[1].rate <= w[0].rate + 1e-6);
            prop_assert!(w[1].slope <= w[0].slope + 1e-6);
        }
        for pt in &curve.points {
            let joint = JointPmf::from_source_and_channel(&p, &pt.channel).unwrap();
            let i = mutual_information(&joint).unwrap();
            prop_assert!((pt.rate - i).abs() < 10.0 * tol);
            prop_assert!(pt.distortion >= d.min() - 1e-12 && pt.distortion <= d.max() + 1e-12);
        }
    }
}
