//! Plane-stress constitutive data: base material and Voigt stiffness tensors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ENTRY_COUNT: usize = 6;
pub const ENTRY_NAMES: [&str; ENTRY_COUNT] = ["C11", "C12", "C13", "C22", "C23", "C33"];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseMaterial {
    /// Young's modulus (Pa).
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    /// Mass density (kg/m³).
    pub density: f64,
}

impl BaseMaterial {
    pub fn new(youngs_modulus: f64, poisson_ratio: f64, density: f64) -> Result<Self> {
        let m = Self {
            youngs_modulus,
            poisson_ratio,
            density,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.youngs_modulus > 0.0 && self.youngs_modulus.is_finite()) {
            return Err(Error::Invalid(format!("Young's modulus {} must be positive", self.youngs_modulus)));
        }
        if !(0.0..0.5).contains(&self.poisson_ratio) {
            return Err(Error::Invalid(format!("Poisson ratio {} outside [0, 0.5)", self.poisson_ratio)));
        }
        if !(self.density > 0.0 && self.density.is_finite()) {
            return Err(Error::Invalid(format!("density {} must be positive", self.density)));
        }
        Ok(())
    }

    /// Isotropic plane-stress stiffness of the solid.
    pub fn solid_stiffness(&self) -> StiffnessTensor {
        StiffnessTensor::isotropic_plane_stress(self.youngs_modulus, self.poisson_ratio)
    }
}

impl Default for BaseMaterial {
    /// Structural steel-like base: 201 GPa, ν = 0.3, 2700 kg/m³.
    fn default() -> Self {
        Self {
            youngs_modulus: 201e9,
            poisson_ratio: 0.3,
            density: 2700.0,
        }
    }
}

/// Symmetric 3×3 plane-stress stiffness in Voigt order (xx, yy, xy) with
/// engineering shear strain.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StiffnessTensor {
    pub c11: f64,
    pub c12: f64,
    pub c13: f64,
    pub c22: f64,
    pub c23: f64,
    pub c33: f64,
}

impl StiffnessTensor {
    pub fn from_entries(e: [f64; ENTRY_COUNT]) -> Self {
        Self {
            c11: e[0],
            c12: e[1],
            c13: e[2],
            c22: e[3],
            c23: e[4],
            c33: e[5],
        }
    }

    pub fn entries(&self) -> [f64; ENTRY_COUNT] {
        [self.c11, self.c12, self.c13, self.c22, self.c23, self.c33]
    }

    pub fn isotropic_plane_stress(e: f64, nu: f64) -> Self {
        let s = e / (1.0 - nu * nu);
        Self {
            c11: s,
            c12: nu * s,
            c13: 0.0,
            c22: s,
            c23: 0.0,
            c33: e / (2.0 * (1.0 + nu)),
        }
    }

    pub fn from_matrix(m: &[[f64; 3]; 3]) -> Self {
        Self {
            c11: m[0][0],
            c12: 0.5 * (m[0][1] + m[1][0]),
            c13: 0.5 * (m[0][2] + m[2][0]),
            c22: m[1][1],
            c23: 0.5 * (m[1][2] + m[2][1]),
            c33: m[2][2],
        }
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        [
            [self.c11, self.c12, self.c13],
            [self.c12, self.c22, self.c23],
            [self.c13, self.c23, self.c33],
        ]
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::from_entries(self.entries().map(|v| v * s))
    }

    /// Entrywise division by the base Young's modulus.
    pub fn normalize(&self, youngs_modulus: f64) -> Result<Self> {
        if !(youngs_modulus > 0.0) {
            return Err(Error::Invalid(format!("cannot normalize by E = {youngs_modulus}")));
        }
        Ok(self.scaled(1.0 / youngs_modulus))
    }

    pub fn max_abs(&self) -> f64 {
        self.entries().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Eigenvalues of the 3×3 matrix in ascending order (Jacobi rotations).
    pub fn eigenvalues(&self) -> [f64; 3] {
        self.eigen_decomposition().0
    }

    /// Ascending eigenvalues and the matching orthonormal eigenvectors as columns.
    pub fn eigen_decomposition(&self) -> ([f64; 3], [[f64; 3]; 3]) {
        let mut a = self.matrix();
        let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        for _ in 0..50 {
            let off = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
            if off <= 1e-30 * (a[0][0].powi(2) + a[1][1].powi(2) + a[2][2].powi(2)).max(1e-300) {
                break;
            }
            for (p, q) in [(0, 1), (0, 2), (1, 2)] {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..3 {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                    let (vkp, vkq) = (v[k][p], v[k][q]);
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
                for k in 0..3 {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
        let mut idx = [0, 1, 2];
        idx.sort_by(|&i, &j| a[i][i].total_cmp(&a[j][j]));
        let values = idx.map(|i| a[i][i]);
        let vectors = std::array::from_fn(|r| idx.map(|i| v[r][i]));
        (values, vectors)
    }

    /// The (1,1) entry of the tensor rotated by `theta`.
    pub fn rotated_c11(&self, theta: f64) -> f64 {
        let (s, c) = theta.sin_cos();
        c.powi(4) * self.c11
            + s.powi(4) * self.c22
            + 2.0 * c * c * s * s * (self.c12 + 2.0 * self.c33)
            + 4.0 * c.powi(3) * s * self.c13
            + 4.0 * c * s.powi(3) * self.c23
    }

    /// Directional stiffness on a uniform angle grid over `[0, 2π)`.
    pub fn elasticity_surface(&self, n_angles: usize) -> Result<Vec<(f64, f64)>> {
        if n_angles < 4 {
            return Err(Error::Invalid(format!("need at least 4 angles, got {n_angles}")));
        }
        Ok((0..n_angles)
            .map(|k| {
                let theta = 2.0 * std::f64::consts::PI * k as f64 / n_angles as f64;
                (theta, self.rotated_c11(theta))
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Rotate the fourth-order tensor explicitly and read back C'_xxxx.
    fn tensor_rotation_oracle(c: &StiffnessTensor, theta: f64) -> f64 {
        let m = c.matrix();
        let voigt = |i: usize, j: usize| -> usize {
            match (i, j) {
                (0, 0) => 0,
                (1, 1) => 1,
                _ => 2,
            }
        };
        let full = |i, j, k, l| m[voigt(i, j)][voigt(k, l)];
        let (s, co) = theta.sin_cos();
        let r = [[co, -s], [s, co]];
        // direction vector n = R e_x = (cos, sin); C'_1111 = n_i n_j n_k n_l C_ijkl
        let n = [r[0][0], r[1][0]];
        let mut acc = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        acc += n[i] * n[j] * n[k] * n[l] * full(i, j, k, l);
                    }
                }
            }
        }
        acc
    }

    #[test]
    fn rotation_matches_tensor_oracle() {
        let c = StiffnessTensor::from_entries([1.3, 0.4, 0.11, 0.9, -0.07, 0.3]);
        for k in 0..24 {
            let th = 0.27 * k as f64;
            assert!((c.rotated_c11(th) - tensor_rotation_oracle(&c, th)).abs() < 1e-12);
        }
    }

    #[test]
    fn isotropic_surface_is_constant() {
        let c = StiffnessTensor::isotropic_plane_stress(1.0, 0.3);
        let s = c.elasticity_surface(36).unwrap();
        assert!(s.iter().all(|(_, v)| (v - c.c11).abs() < 1e-12));
        assert_eq!(s[0].1, c.c11);
        assert!(c.elasticity_surface(3).is_err());
    }

    #[test]
    fn orthotropic_surface_is_mirror_symmetric() {
        let c = StiffnessTensor::from_entries([1.0, 0.2, 0.0, 0.5, 0.0, 0.1]);
        for th in [0.1, 0.7, 1.3] {
            let a = c.rotated_c11(th);
            let b = c.rotated_c11(std::f64::consts::PI - th);
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn normalization_and_eigenvalues() {
        let e = 201e9;
        let c = StiffnessTensor::isotropic_plane_stress(e, 0.3).normalize(e).unwrap();
        assert!((c.c11 - 1.0 / 0.91).abs() < 1e-12);
        assert!((c.c12 - 0.3 / 0.91).abs() < 1e-12);
        assert!((c.c33 - 1.0 / 2.6).abs() < 1e-12);
        let ev = c.eigenvalues();
        assert!((ev[0] - 1.0 / 2.6).abs() < 1e-12);
        assert!((ev[1] - 0.7 / 0.91).abs() < 1e-12);
        assert!((ev[2] - 1.3 / 0.91).abs() < 1e-12);
        assert_eq!(StiffnessTensor::default().normalize(2.0).unwrap(), StiffnessTensor::default());
        assert!(c.normalize(0.0).is_err());
    }

    #[test]
    fn material_validation() {
        assert!(BaseMaterial::new(1.0, 0.5, 1.0).is_err());
        assert!(BaseMaterial::new(-1.0, 0.3, 1.0).is_err());
        assert!(BaseMaterial::default().validate().is_ok());
    }
}
