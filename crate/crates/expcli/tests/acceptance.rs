//! One test per acceptance criterion; each prints a single PASS/FAIL line.

use rlvr_expcli::criteria::{self, CriterionResult};

fn check(r: CriterionResult) {
    println!("{}", r.line());
    assert!(r.passed, "{}", r.line());
}

#[test]
fn criterion_01_gradient_fd() {
    check(criteria::criterion_1());
}

#[test]
fn criterion_02_hessian_consistency() {
    check(criteria::criterion_2());
}

#[test]
fn criterion_03_hessian_norm_bound() {
    check(criteria::criterion_3());
}

#[test]
fn criterion_04_gradient_norm_bound() {
    check(criteria::criterion_4());
}

#[test]
fn criterion_05_local_smoothness() {
    check(criteria::criterion_5());
}

#[test]
fn criterion_06_orthogonal_decoupling() {
    check(criteria::criterion_6());
}

#[test]
fn criterion_07_per_step_bounds() {
    check(criteria::criterion_7());
}

#[test]
fn criterion_08_cumulative_bounds() {
    check(criteria::criterion_8());
}

#[test]
fn criterion_09_rate_separation() {
    check(criteria::criterion_9());
}

#[test]
fn criterion_10_fisher_unbiased() {
    check(criteria::criterion_10());
}

#[test]
fn criterion_11_curvature_variance() {
    check(criteria::criterion_11());
}

#[test]
fn criterion_12_near_orthogonal_gradients() {
    check(criteria::criterion_12());
}

#[test]
fn criterion_13_reproducibility() {
    check(criteria::criterion_13());
}

#[test]
fn mutated_hessian_is_caught() {
    for r in [
        criteria::criterion_2_with(criteria::mutated_hessian),
        criteria::criterion_3_with(criteria::mutated_hessian),
    ] {
        assert!(!r.passed, "mutation survived: {}", r.line());
    }
}
