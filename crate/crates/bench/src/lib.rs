//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use llgas_core::cadlag::CadlagPath;
use llgas_core::engine::{correlated_environment, standard_environment};
use llgas_core::Environment;

pub fn iid_environment(half_width: i64) -> Arc<Environment> {
    Arc::new(Environment::generate(&standard_environment(), -half_width, half_width, 1).expect("valid law"))
}

pub fn markov_environment(half_width: i64) -> Arc<Environment> {
    Arc::new(Environment::generate(&correlated_environment(), -half_width, half_width, 1).expect("valid law"))
}

/// A step path on `[-window, window]` with `jumps` evenly spaced unit jumps.
pub fn staircase(window: f64, jumps: usize, offset: f64) -> CadlagPath {
    let h = 2.0 * window / (jumps + 1) as f64;
    let steps: Vec<(f64, f64)> = (1..=jumps)
        .map(|k| (-window + k as f64 * h + offset, k as f64 * 0.1))
        .collect();
    CadlagPath::step(-window, window, 0.0, &steps).expect("increasing jump times")
}
