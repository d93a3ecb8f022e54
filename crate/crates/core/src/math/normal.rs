//! Standard normal distribution helpers.

use core::f64::consts::{FRAC_1_SQRT_2, PI};
use num_traits::Float;

/// Standard normal CDF, accurate in both tails (via `erfc`).
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}
