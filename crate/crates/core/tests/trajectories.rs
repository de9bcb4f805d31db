use rlvr_core::policy;
use rlvr_core::rng::{stream_rng, STREAM_SCENARIO};
use rlvr_core::scenarios::{self, DifficultyPreset};
use rlvr_core::trainers::{cumulative_bound_check, run_trajectory};
use rlvr_core::{Algorithm, PolicyParams, TrainerConfig};

#[test]
fn orthogonal_blocks_decouple_and_improve() {
    let fs = scenarios::orthogonal_blocks(5, 3, 3, 1.0, &mut stream_rng(4, STREAM_SCENARIO, 0)).unwrap();
    for algorithm in [Algorithm::Reinforce, Algorithm::Grpo] {
        let log = run_trajectory(&TrainerConfig::new(algorithm, 2_000, 4), &fs, &PolicyParams::zeros(fs.d())).unwrap();
        assert!(log.records.iter().all(|r| r.max_offtarget_change <= 1e-12));
        assert!(log.records.iter().all(|r| r.improvement >= 0.0));
        assert!(log.records.iter().all(|r| r.bound_slack.is_some_and(|s| s >= 0.0)));
        let last = log.records.last().unwrap();
        assert!(last.mean_objective > log.records[0].mean_objective);
    }
}

#[test]
fn grpo_steps_stay_in_the_local_ball() {
    let sc = DifficultyPreset::default().build(2).unwrap();
    let log = run_trajectory(&TrainerConfig::new(Algorithm::Grpo, 1_000, 2), &sc.features, &sc.theta0).unwrap();
    for r in &log.records {
        if !r.variance_flag {
            assert!(r.displacement <= r.ball_radius * (1.0 + 1e-12), "t={} {} > {}", r.t, r.displacement, r.ball_radius);
        }
    }
}

#[test]
fn reinforce_cumulative_bound_on_preset() {
    let sc = DifficultyPreset::default().build(1).unwrap();
    let log = run_trajectory(&TrainerConfig::new(Algorithm::Reinforce, 3_000, 1), &sc.features, &sc.theta0).unwrap();
    let bounds = cumulative_bound_check(&log, &sc.features).unwrap();
    assert!(bounds.iter().all(|b| b.passed && b.min_form_passed && b.telescoped_passed));
}

#[test]
fn preset_profile_reaches_targets() {
    let sc = DifficultyPreset::default().build(5).unwrap();
    for (i, &t) in scenarios::DIFFICULTY_TARGETS.iter().enumerate() {
        let s = policy::prompt_stats(&sc.features, &sc.theta0, i).unwrap().success;
        assert!((s - t).abs() < 1e-9);
    }
}
