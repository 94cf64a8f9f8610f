//! Box-constrained limited-memory quasi-Newton minimizer.
//!
//! Variables sitting on a bound with the gradient pushing outward are frozen
//! for the step; the two-loop recursion runs on the rest, and a backtracking
//! Armijo search follows the projected path.

use std::collections::VecDeque;

#[derive(Clone, Copy, Debug)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop when the objective changes by less than this (relative to max(1, |f|)).
    pub f_tolerance: f64,
    /// Stop when the projected gradient infinity norm falls below this.
    pub pg_tolerance: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 8,
            max_iterations: 500,
            f_tolerance: 1e-8,
            pg_tolerance: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

fn projected_gradient_norm(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..x.len() {
        let step = (x[i] - g[i]).clamp(lo[i], hi[i]) - x[i];
        m = m.max(step.abs());
    }
    m
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimize `f` over the box `[lo, hi]`. `f` returns `None` where the
/// objective is undefined; the line search treats such points as rejected.
pub fn minimize<F>(mut f: F, x0: &[f64], lo: &[f64], hi: &[f64], opts: &LbfgsOptions) -> Option<Minimum>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lo, hi);
    let (mut fx, mut g) = f(&x)?;
    let mut evaluations = 1;
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        if projected_gradient_norm(&x, &g, lo, hi) < opts.pg_tolerance {
            break;
        }
        iterations += 1;
        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0)))
            .collect();
        // two-loop recursion restricted to free variables
        let mut d: Vec<f64> = (0..n).map(|i| if free[i] { -g[i] } else { 0.0 }).collect();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * (0..n).filter(|&i| free[i]).map(|i| s[i] * d[i]).sum::<f64>();
            for i in 0..n {
                if free[i] {
                    d[i] -= a * y[i];
                }
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = hist.back() {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * (0..n).filter(|&i| free[i]).map(|i| y[i] * d[i]).sum::<f64>();
            for i in 0..n {
                if free[i] {
                    d[i] += (a - b) * s[i];
                }
            }
        }
        if dot(&d, &g) >= 0.0 {
            hist.clear();
            d = (0..n).map(|i| if free[i] { -g[i] } else { 0.0 }).collect();
        }
        let mut step = if hist.is_empty() {
            let norm = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if norm > 0.0 {
                (1.0 / norm).min(1.0)
            } else {
                1.0
            }
        } else {
            1.0
        };

        let mut accepted = None;
        for _ in 0..40 {
            let mut xn: Vec<f64> = (0..n).map(|i| x[i] + step * d[i]).collect();
            project(&mut xn, lo, hi);
            let dx: Vec<f64> = (0..n).map(|i| xn[i] - x[i]).collect();
            let decrease = dot(&g, &dx);
            if decrease >= 0.0 {
                step *= 0.5;
                continue;
            }
            evaluations += 1;
            if let Some((fn_, gn)) = f(&xn) {
                if fn_.is_finite() && fn_ <= fx + 1e-4 * decrease {
                    accepted = Some((xn, fn_, gn, dx));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn, s)) = accepted else {
            if hist.is_empty() {
                break;
            }
            hist.clear();
            continue;
        };
        let y: Vec<f64> = (0..n).map(|i| gn[i] - g[i]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if hist.len() == opts.memory {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
        }
        let change = (fx - fn_).abs();
        x = xn;
        g = gn;
        let prev = fx;
        fx = fn_;
        if change < opts.f_tolerance * prev.abs().max(1.0) {
            break;
        }
    }
    Some(Minimum {
        x,
        f: fx,
        iterations,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock_unconstrained() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
            Some((v, g))
        };
        let opts = LbfgsOptions {
            f_tolerance: 0.0,
            pg_tolerance: 1e-10,
            ..Default::default()
        };
        let m = minimize(f, &[-1.2, 1.0], &[-5.0, -5.0], &[5.0, 5.0], &opts).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6, "{:?}", m.x);
    }

    #[test]
    fn active_bounds_are_respected() {
        // minimum of (x-2)² + (y+3)² on [0,1]×[-1,1] is (1, -1)
        let f = |x: &[f64]| Some(((x[0] - 2.0).powi(2) + (x[1] + 3.0).powi(2), vec![2.0 * (x[0] - 2.0), 2.0 * (x[1] + 3.0)]));
        let m = minimize(f, &[0.5, 0.5], &[0.0, -1.0], &[1.0, 1.0], &LbfgsOptions::default()).unwrap();
        assert_eq!(m.x, vec![1.0, -1.0]);
    }

    #[test]
    fn undefined_region_is_avoided() {
        // log barrier defined only for x > 0.1
        let f = |x: &[f64]| {
            if x[0] <= 0.1 {
                None
            } else {
                Some((x[0] - (x[0] - 0.1).ln(), vec![1.0 - 1.0 / (x[0] - 0.1)]))
            }
        };
        let m = minimize(f, &[3.0], &[0.0], &[10.0], &LbfgsOptions::default()).unwrap();
        assert!((m.x[0] - 1.1).abs() < 1e-4, "{:?}", m.x);
    }
}
