use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rlvr_core::diagnostics::{self, phase_classify, Phase, PhaseThresholds};
use rlvr_core::linalg::spectral_norm;
use rlvr_core::oracle;
use rlvr_core::policy::{self, grpo_gradient};
use rlvr_core::rng::{stream_rng, STREAM_SCENARIO};
use rlvr_core::scenarios;
use rlvr_core::trainers::run_trajectory;
use rlvr_core::{Algorithm, FeatureSet, PolicyParams, TrainerConfig};

/// Random instance plus θ, both seeded from proptest.
fn instance() -> impl Strategy<Value = (FeatureSet, PolicyParams)> {
    (1usize..=4, 2usize..=6, 1usize..=12, 0.0f64..1.0, any::<u64>()).prop_flat_map(|(n, k, d, overlap, seed)| {
        let fs = scenarios::random_features(n, k, d, overlap, &mut stream_rng(seed, STREAM_SCENARIO, 0)).unwrap();
        let theta = proptest::collection::vec(-3.0f64..3.0, d)
            .prop_map(|v| PolicyParams::new(DVector::from_vec(v)).unwrap());
        (Just(fs), theta)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn probabilities_normalized((fs, theta) in instance()) {
        for i in 0..fs.n() {
            let s = policy::prompt_stats(&fs, &theta, i).unwrap();
            prop_assert!(s.probs.iter().all(|&q| (0.0..=1.0).contains(&q)));
            prop_assert!((s.probs.sum() - 1.0).abs() < 1e-12);
            prop_assert!((s.success + s.failure - 1.0).abs() < 1e-12);
            prop_assert!(s.variance >= 0.0 && s.variance <= 0.25);
        }
    }

    #[test]
    fn gradient_forms_agree_with_fd((fs, theta) in instance()) {
        for i in 0..fs.n() {
            let g = policy::policy_gradient(&fs, &theta, i).unwrap();
            let m = policy::policy_gradient_matrix_form(&fs, &theta, i).unwrap();
            prop_assert!((&g - &m).amax() <= 1e-12);
            let fd = oracle::fd_gradient(oracle::success_evaluator(&fs, i, &theta), theta.theta(), oracle::FD_GRADIENT_STEP).unwrap();
            prop_assert!((&g - &fd).norm() <= 1e-6 * g.norm().max(1e-8), "{} vs {}", g, fd);
        }
    }

    #[test]
    fn common_feature_shift_leaves_policy_unchanged((fs, theta) in instance(), shift in -2.0f64..2.0) {
        let blocks: Vec<DMatrix<f64>> = fs
            .all_features()
            .iter()
            .map(|x| {
                let mut y = x.clone();
                for mut row in y.row_iter_mut() {
                    row.add_scalar_mut(shift);
                }
                y
            })
            .collect();
        let shifted = FeatureSet::new(blocks, fs.all_correct().to_vec()).unwrap();
        for i in 0..fs.n() {
            let a = policy::prompt_stats(&fs, &theta, i).unwrap();
            let b = policy::prompt_stats(&shifted, &theta, i).unwrap();
            prop_assert!((&a.probs - &b.probs).amax() < 1e-9);
        }
    }

    #[test]
    fn grpo_direction_is_rescaled_gradient((fs, theta) in instance()) {
        for i in 0..fs.n() {
            let g = policy::policy_gradient(&fs, &theta, i).unwrap();
            let s = policy::prompt_stats(&fs, &theta, i).unwrap();
            let r = grpo_gradient(&fs, &theta, i, 1e-8).unwrap();
            prop_assert_eq!(r.floor_active, s.std_dev() < 1e-8);
            let expected = &g / s.std_dev().max(1e-8);
            prop_assert!((&r.gradient - &expected).amax() <= 1e-12 * expected.amax().max(1.0));
        }
    }

    #[test]
    fn curvature_and_gradient_bounds((fs, theta) in instance()) {
        let x2 = fs.x_max().powi(2);
        for i in 0..fs.n() {
            let s = policy::prompt_stats(&fs, &theta, i).unwrap();
            let h = spectral_norm(&policy::hessian_matrix(&fs, &theta, i).unwrap()).unwrap();
            prop_assert!(h <= 4.0 * x2 * s.variance * (1.0 + 1e-12) + 1e-300);
            let g = policy::policy_gradient(&fs, &theta, i).unwrap().norm();
            prop_assert!(g <= 0.5 * fs.x_max() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn fisher_proxy_nonnegative((fs, theta) in instance(), seed in any::<u64>(), batch in 1usize..16) {
        let h = diagnostics::fisher_diag_proxy(&fs, &theta, batch, &mut stream_rng(seed, 3, 0)).unwrap();
        prop_assert!(h.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn phase_is_monotone_in_spread(a in 0.0f64..0.5, b in 0.0f64..0.5) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let rank = |p: Phase| match p { Phase::I => 0, Phase::II => 1, Phase::III => 2 };
        let t = PhaseThresholds::default();
        prop_assert!(rank(phase_classify(lo, t)) <= rank(phase_classify(hi, t)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn c_constant_at_most_four_thirds((fs, theta) in instance(), seed in any::<u64>(), horizon in 1usize..60) {
        let cfg = TrainerConfig::new(Algorithm::Grpo, horizon, seed);
        let log = run_trajectory(&cfg, &fs, &theta).unwrap();
        let c = diagnostics::c_constant(&log).unwrap();
        prop_assert!(c.aggregate <= 4.0 / 3.0 + 1e-12);
        prop_assert!(c.per_prompt.iter().all(|&v| (0.0..=4.0 / 3.0 + 1e-12).contains(&v)));
    }

    #[test]
    fn trajectories_replay((fs, theta) in instance(), seed in any::<u64>()) {
        for algorithm in [Algorithm::Reinforce, Algorithm::Grpo] {
            let cfg = TrainerConfig::new(algorithm, 40, seed);
            let a = run_trajectory(&cfg, &fs, &theta).unwrap();
            let b = run_trajectory(&cfg, &fs, &theta).unwrap();
            prop_assert_eq!(a.final_params.theta(), b.final_params.theta());
            prop_assert_eq!(
                a.records.iter().map(|r| r.selected).collect::<Vec<_>>(),
                b.records.iter().map(|r| r.selected).collect::<Vec<_>>()
            );
        }
    }
}

#[test]
fn local_smoothness_peak() {
    let (a, f) = oracle::grid_max_f(10_000);
    assert_relative_eq!(f, 2.5, epsilon = 1e-3);
    assert_relative_eq!(a, 0.1, epsilon = 1e-3);
}
