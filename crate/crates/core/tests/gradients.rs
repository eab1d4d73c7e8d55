//! Analytic gradients of every loss head against central finite differences.

mod common;

use common::gradcheck;

fn assert_clean(failures: Vec<String>) {
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

#[test]
fn mse_gradients_match_finite_differences() {
    assert_clean(gradcheck::mse_cases());
}

#[test]
fn pinball_gradients_match_finite_differences() {
    assert_clean(gradcheck::pinball_cases());
}

#[test]
fn gaussian_nll_gradients_match_finite_differences() {
    assert_clean(gradcheck::gaussian_nll_cases());
}

#[test]
fn critic_chain_gradients_match_finite_differences() {
    assert_clean(gradcheck::critic_chain_cases());
}
