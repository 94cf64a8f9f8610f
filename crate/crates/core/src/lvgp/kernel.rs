//! Gaussian correlation over transformed inputs (volume fraction, latent point).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::ClassLabel;

pub const LATENT_DIM: usize = 2;
pub type LatentPoint = [f64; LATENT_DIM];

/// `exp(-φ (ρ - ρ')² - ‖z - z'‖²)`
#[inline]
pub fn correlation(rho: f64, z: LatentPoint, rho2: f64, z2: LatentPoint, phi: f64) -> f64 {
    let dr = rho - rho2;
    let dz0 = z[0] - z2[0];
    let dz1 = z[1] - z2[1];
    (-phi * dr * dr - dz0 * dz0 - dz1 * dz1).exp()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelMode {
    /// One correlation function per response sharing the latent map.
    Sos,
    /// One correlation function shared by every response.
    Separable,
}

impl KernelMode {
    /// Number of independent volume-fraction scales.
    pub fn scale_count(self) -> usize {
        match self {
            KernelMode::Sos => crate::stiffness::ENTRY_COUNT,
            KernelMode::Separable => 1,
        }
    }
}

impl std::str::FromStr for KernelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sos" => Ok(KernelMode::Sos),
            "separable" => Ok(KernelMode::Separable),
            other => Err(Error::Invalid(format!("unknown kernel `{other}` (expected sos or separable)"))),
        }
    }
}

impl std::fmt::Display for KernelMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            KernelMode::Sos => "sos",
            KernelMode::Separable => "separable",
        })
    }
}

/// Latent coordinates of the ten classes. The first class sits at the
/// origin and the second on the non-negative first axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentMap {
    points: [LatentPoint; ClassLabel::COUNT],
}

pub const LATENT_FREE_PARAMS: usize = 1 + 2 * (ClassLabel::COUNT - 2);

impl LatentMap {
    pub fn from_points(points: [LatentPoint; ClassLabel::COUNT]) -> Result<Self> {
        if points[0] != [0.0, 0.0] || points[1][1] != 0.0 || points[1][0] < 0.0 {
            return Err(Error::Invalid("latent map violates the pinning of classes A and B".into()));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("latent map has non-finite entries".into()));
        }
        Ok(Self { points })
    }

    /// Build from the free parameters `[z_B1, z_C1, z_C2, …, z_J1, z_J2]`.
    pub fn from_free(free: &[f64]) -> Self {
        debug_assert_eq!(free.len(), LATENT_FREE_PARAMS);
        let mut points = [[0.0; 2]; ClassLabel::COUNT];
        points[1] = [free[0], 0.0];
        for t in 2..ClassLabel::COUNT {
            points[t] = [free[1 + 2 * (t - 2)], free[2 + 2 * (t - 2)]];
        }
        Self { points }
    }

    pub fn to_free(&self) -> Vec<f64> {
        let mut out = vec![self.points[1][0]];
        for p in &self.points[2..] {
            out.extend_from_slice(p);
        }
        out
    }

    pub fn point(&self, class: ClassLabel) -> LatentPoint {
        self.points[class.index()]
    }

    pub fn points(&self) -> &[LatentPoint; ClassLabel::COUNT] {
        &self.points
    }

    pub fn distance(&self, a: ClassLabel, b: ClassLabel) -> f64 {
        let (p, q) = (self.point(a), self.point(b));
        ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
    }

    /// Closest class to `z`; ties go to the lower class index.
    pub fn nearest(&self, z: LatentPoint) -> ClassLabel {
        let mut best = (f64::INFINITY, ClassLabel::A);
        for label in ClassLabel::ALL {
            let p = self.point(label);
            let d = (z[0] - p[0]).powi(2) + (z[1] - p[1]).powi(2);
            if d < best.0 {
                best = (d, label);
            }
        }
        best.1
    }

    /// Axis-aligned bounding box `(lower, upper)` of the class points.
    pub fn bounding_box(&self) -> (LatentPoint, LatentPoint) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &self.points {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn correlation_values() {
        assert_eq!(correlation(0.3, [0.1, 0.2], 0.3, [0.1, 0.2], 5.0), 1.0);
        let a = correlation(0.2, [0.0, 1.0], 0.9, [0.5, -0.3], 2.0);
        let b = correlation(0.9, [0.5, -0.3], 0.2, [0.0, 1.0], 2.0);
        assert_eq!(a, b);
        assert!((correlation(0.0, [0.0; 2], 0.5, [0.0; 2], 1.0) - 0.778801).abs() < 1e-6);
    }

    #[test]
    fn free_parameters_round_trip_with_pinning() {
        let free: Vec<f64> = (0..LATENT_FREE_PARAMS).map(|i| 0.1 * i as f64).collect();
        let map = LatentMap::from_free(&free);
        assert_eq!(map.point(ClassLabel::A), [0.0, 0.0]);
        assert_eq!(map.point(ClassLabel::B), [0.0, 0.0]);
        assert_eq!(map.point(ClassLabel::C), [0.1, 0.2]);
        assert_eq!(map.to_free(), free);
        assert!(LatentMap::from_points(*map.points()).is_ok());
    }

    #[test]
    fn nearest_breaks_ties_low() {
        let mut pts = [[10.0, 10.0]; 10];
        pts[0] = [0.0, 0.0];
        pts[1] = [2.0, 0.0];
        for (i, p) in pts.iter_mut().enumerate().skip(2) {
            *p = [10.0 + i as f64, 10.0];
        }
        let map = LatentMap::from_points(pts).unwrap();
        assert_eq!(map.nearest([1.0, 0.0]), ClassLabel::A);
        assert_eq!(map.nearest([1.0001, 0.0]), ClassLabel::B);
        assert_eq!(map.nearest([12.0, 10.0]), ClassLabel::C);
    }
}
