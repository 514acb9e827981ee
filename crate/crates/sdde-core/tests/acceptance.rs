//! Acceptance gate: one test per advertised guarantee, each printing its
//! verdict line (visible with `--nocapture`, or on failure). The test
//! names double as the pass/fail report in the default harness output.
//!
//! The checks themselves live in `sdde_core::validate` so the CLI
//! `validate` subcommand runs exactly the same code.

use sdde_core::validate;
use sdde_core::validate::CheckReport;

fn assert_check(report: CheckReport) {
    println!("{}", report.line());
    assert!(report.passed, "{}", report.line());
}

#[test]
fn check_01_spectral_identities() {
    assert_check(validate::spectral_identities());
}

#[test]
fn check_02_linear_flow_exactness() {
    assert_check(validate::linear_flow_exactness());
}

#[test]
fn check_03_delay_ode_convergence_orders() {
    assert_check(validate::delay_ode_convergence_orders());
}

#[test]
fn check_04_reaction_potential_consistency() {
    assert_check(validate::reaction_potential_consistency());
}

#[test]
fn check_05_lag_lipschitz_bounds() {
    assert_check(validate::lag_lipschitz_bounds());
}

#[test]
fn check_06_dissipative_absorption() {
    assert_check(validate::dissipative_absorption());
}

#[test]
fn check_07_continuous_dependence_scaling() {
    assert_check(validate::continuous_dependence_scaling());
}

#[test]
fn check_08_holder_smoothing_exponent() {
    assert_check(validate::holder_smoothing_exponent());
}

#[test]
fn check_09_galerkin_truncation_convergence() {
    assert_check(validate::galerkin_truncation_convergence());
}

#[test]
fn check_10_dimension_estimator_calibration() {
    assert_check(validate::dimension_estimator_calibration());
}

#[test]
fn check_11_embedding_dimension_stability() {
    assert_check(validate::embedding_dimension_stability());
}

#[test]
fn check_12_checkpoint_resume_equivalence() {
    assert_check(validate::checkpoint_resume_equivalence());
}
