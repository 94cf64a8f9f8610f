//! Smoothed Heaviside threshold on the volume fraction and its continuation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Threshold `η` and sharpness `β`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub eta: f64,
    pub beta: f64,
}

impl Projection {
    pub fn new(eta: f64, beta: f64) -> Result<Self> {
        if !(0.0..=0.5).contains(&eta) || !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Invalid(format!("projection needs η in [0, 0.5] and β > 0, got η={eta}, β={beta}")));
        }
        Ok(Self { eta, beta })
    }

    fn denominator(&self) -> f64 {
        (self.beta * self.eta).tanh() + (self.beta * (1.0 - self.eta)).tanh()
    }

    /// Smoothed step `H(ρ)`, equal to 1 at `ρ = 1`.
    pub fn step(&self, rho: f64) -> f64 {
        ((self.beta * self.eta).tanh() + (self.beta * (rho - self.eta)).tanh()) / self.denominator()
    }

    /// `(ρ̃, dρ̃/dρ)` with `ρ̃ = ρ · H(ρ)`.
    pub fn apply(&self, rho: f64) -> (f64, f64) {
        let h = self.step(rho);
        let t = (self.beta * (rho - self.eta)).tanh();
        let dh = self.beta * (1.0 - t * t) / self.denominator();
        (rho * h, h + rho * dh)
    }
}

/// One continuation phase: projection parameters held for `iterations` steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub eta: f64,
    pub beta: f64,
    pub iterations: usize,
}

/// Piecewise-constant continuation; the last phase is held indefinitely.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub phases: Vec<Phase>,
}

impl Default for Schedule {
    fn default() -> Self {
        let p = |eta, beta| Phase {
            eta,
            beta,
            iterations: 40,
        };
        Self {
            phases: vec![p(0.0, 8.0), p(0.03, 8.0), p(0.06, 8.0), p(0.06, 50.0), p(0.06, 200.0), p(0.06, 400.0)],
        }
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if self.phases.is_empty() {
            return Err(Error::Invalid("continuation schedule is empty".into()));
        }
        for w in self.phases.windows(2) {
            if w[1].eta < w[0].eta || w[1].beta < w[0].beta {
                return Err(Error::Invalid("continuation schedule must be non-decreasing in η and β".into()));
            }
        }
        for p in &self.phases {
            Projection::new(p.eta, p.beta)?;
            if p.iterations == 0 {
                return Err(Error::Invalid("continuation phases need at least one iteration".into()));
            }
        }
        Ok(())
    }

    /// Projection in force at zero-based iteration `iter`.
    pub fn at(&self, iter: usize) -> Projection {
        let mut start = 0;
        for p in &self.phases {
            if iter < start + p.iterations {
                return Projection {
                    eta: p.eta,
                    beta: p.beta,
                };
            }
            start += p.iterations;
        }
        let last = self.phases[self.phases.len() - 1];
        Projection {
            eta: last.eta,
            beta: last.beta,
        }
    }

    /// First iteration of the final phase.
    pub fn final_phase_start(&self) -> usize {
        self.phases[..self.phases.len() - 1].iter().map(|p| p.iterations).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn endpoint_values() {
        let p = Projection::new(0.06, 400.0).unwrap();
        assert_eq!(p.apply(0.0).0, 0.0);
        assert!((p.apply(1.0).0 - 1.0).abs() < 1e-15);
        assert!((p.apply(0.5).0 - 0.5).abs() < 1e-9);
        // far below the threshold the element vanishes
        assert!(p.apply(0.03).0 < 1e-9);
        assert!(Projection::new(0.6, 1.0).is_err());
        assert!(Projection::new(0.1, 0.0).is_err());
    }

    #[test]
    fn derivative_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let h = 1e-6;
        for _ in 0..100 {
            let p = Projection::new(rng.random_range(0.0..0.5), rng.random_range(1.0..60.0)).unwrap();
            let rho = rng.random_range(h..1.0 - h);
            let fd = (p.apply(rho + h).0 - p.apply(rho - h).0) / (2.0 * h);
            let d = p.apply(rho).1;
            assert!((fd - d).abs() <= 1e-6 * d.abs().max(1.0), "{p:?} at {rho}: {d} vs {fd}");
        }
    }

    #[test]
    fn monotone_and_bounded() {
        let p = Projection::new(0.06, 50.0).unwrap();
        let mut prev = 0.0;
        for k in 0..=1000 {
            let (v, d) = p.apply(k as f64 / 1000.0);
            assert!((0.0..=1.0 + 1e-15).contains(&v) && v >= prev && d >= 0.0);
            prev = v;
        }
    }

    #[test]
    fn schedule_lookup() {
        let s = Schedule::default();
        s.validate().unwrap();
        assert_eq!(s.at(0), Projection { eta: 0.0, beta: 8.0 });
        assert_eq!(s.at(39), Projection { eta: 0.0, beta: 8.0 });
        assert_eq!(s.at(40), Projection { eta: 0.03, beta: 8.0 });
        assert_eq!(s.at(130), Projection { eta: 0.06, beta: 50.0 });
        assert_eq!(s.at(10_000), Projection { eta: 0.06, beta: 400.0 });
        assert_eq!(s.final_phase_start(), 200);
        let bad = Schedule {
            phases: vec![Phase { eta: 0.06, beta: 8.0, iterations: 5 }, Phase { eta: 0.03, beta: 8.0, iterations: 5 }],
        };
        assert!(bad.validate().is_err());
    }
}
