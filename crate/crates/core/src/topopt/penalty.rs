//! Penalty that pulls latent design points toward the trained class points.
//!
//! `f(z) = (1/λ) ln Σ_t exp(λ exp(−‖z − z_t‖² / α))`, a smooth upper bound on
//! the largest Gaussian bump, evaluated with a shifted log-sum-exp.

use crate::lvgp::LatentPoint;

pub const SHARPNESS: f64 = 500.0;
pub const DECAY: f64 = 0.95;
pub const MIN_WIDTH: f64 = 0.01;

/// Value and gradient of the penalty at `z`.
pub fn penalty(z: LatentPoint, points: &[LatentPoint], lambda: f64, alpha: f64) -> (f64, [f64; 2]) {
    let bumps: Vec<f64> = points
        .iter()
        .map(|p| (-((z[0] - p[0]).powi(2) + (z[1] - p[1]).powi(2)) / alpha).exp())
        .collect();
    let top = bumps.iter().fold(0.0f64, |a, &b| a.max(b));
    let weights: Vec<f64> = bumps.iter().map(|&b| (lambda * (b - top)).exp()).collect();
    let sum: f64 = weights.iter().sum();
    let value = top + sum.ln() / lambda;
    let mut grad = [0.0; 2];
    for (k, p) in points.iter().enumerate() {
        let w = weights[k] * bumps[k] / sum;
        grad[0] -= 2.0 / alpha * w * (z[0] - p[0]);
        grad[1] -= 2.0 / alpha * w * (z[1] - p[1]);
    }
    (value, grad)
}

/// Width after `iterations` decay steps from `initial`.
pub fn decayed_width(initial: f64, iterations: usize) -> f64 {
    (initial * DECAY.powi(iterations as i32)).max(MIN_WIDTH)
}
