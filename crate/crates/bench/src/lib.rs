//! Shared fixtures for the criterion benchmarks.

use qrepeater::memories::{self, TwoPassParams};
use qrepeater::{Detector, RepeaterParams};

/// A noisy chain: loss, dark counts and a two-pass memory.
pub fn noisy_params(cutoff: usize, n: u32) -> RepeaterParams {
    RepeaterParams {
        r: 0.05,
        p_gen: 0.5,
        p_con: 0.1,
        n_dc_gen: 1e-5,
        n_dc_con: 1e-5,
        detector: Detector::NonCounting,
        n,
        memory: memories::two_pass(&TwoPassParams { kappa: 2.0, xi: 0.02 }).expect("valid memory"),
        cutoff,
        ..Default::default()
    }
}
