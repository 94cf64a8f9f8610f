//! Bilinear four-node rectangle, plane stress, unit thickness.
//!
//! Local node order is counter-clockwise from the lower-left corner; local DOF
//! `2a` is the x displacement of node `a`, `2a + 1` the y displacement.

use serde::{Deserialize, Serialize};

use crate::stiffness::{StiffnessTensor, ENTRY_COUNT};

pub type Mat8 = [[f64; 8]; 8];
pub type Mat3 = [[f64; 3]; 3];

const CORNERS: [[f64; 2]; 4] = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];

fn gauss_points() -> [[f64; 2]; 4] {
    let g = 1.0 / 3f64.sqrt();
    [[-g, -g], [g, -g], [g, g], [-g, g]]
}

pub fn shape_functions(xi: f64, eta: f64) -> [f64; 4] {
    let mut n = [0.0; 4];
    for (a, c) in CORNERS.iter().enumerate() {
        n[a] = 0.25 * (1.0 + c[0] * xi) * (1.0 + c[1] * eta);
    }
    n
}

/// Strain-displacement matrix (rows xx, yy, engineering xy) at a natural point.
pub fn strain_displacement(xi: f64, eta: f64, dx: f64, dy: f64) -> [[f64; 8]; 3] {
    let mut b = [[0.0; 8]; 3];
    for (a, c) in CORNERS.iter().enumerate() {
        let dndx = 0.25 * c[0] * (1.0 + c[1] * eta) * 2.0 / dx;
        let dndy = 0.25 * c[1] * (1.0 + c[0] * xi) * 2.0 / dy;
        b[0][2 * a] = dndx;
        b[1][2 * a + 1] = dndy;
        b[2][2 * a] = dndy;
        b[2][2 * a + 1] = dndx;
    }
    b
}

/// `∫ Bᵀ D B dA` by 2×2 Gauss quadrature.
pub fn stiffness(d: &Mat3, dx: f64, dy: f64) -> Mat8 {
    let det = 0.25 * dx * dy;
    let mut k = [[0.0; 8]; 8];
    for gp in gauss_points() {
        let b = strain_displacement(gp[0], gp[1], dx, dy);
        let mut db = [[0.0; 8]; 3];
        for i in 0..3 {
            for c in 0..8 {
                db[i][c] = (0..3).map(|j| d[i][j] * b[j][c]).sum();
            }
        }
        for r in 0..8 {
            for c in 0..8 {
                k[r][c] += det * (0..3).map(|i| b[i][r] * db[i][c]).sum::<f64>();
            }
        }
    }
    k
}

/// Consistent mass `∫ ρ0 Nᵀ N dA`.
pub fn consistent_mass(density: f64, dx: f64, dy: f64) -> Mat8 {
    let det = 0.25 * dx * dy;
    let mut m = [[0.0; 8]; 8];
    for gp in gauss_points() {
        let n = shape_functions(gp[0], gp[1]);
        for a in 0..4 {
            for b in 0..4 {
                let v = density * det * n[a] * n[b];
                m[2 * a][2 * b] += v;
                m[2 * a + 1][2 * b + 1] += v;
            }
        }
    }
    m
}

/// Constitutive matrix with a single unit entry (symmetrized off the diagonal).
pub fn indicator(entry: usize) -> Mat3 {
    let pos = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)][entry];
    let mut d = [[0.0; 3]; 3];
    d[pos.0][pos.1] = 1.0;
    d[pos.1][pos.0] = 1.0;
    d
}

/// Element matrices that are linear in the stiffness entries and the density.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ElementBasis {
    /// `∂k_e/∂C_i` for the six entries in Voigt order C11, C12, C13, C22, C23, C33.
    pub stiffness: [Mat8; ENTRY_COUNT],
    /// Consistent mass of a fully solid element.
    pub mass_solid: Mat8,
}

impl ElementBasis {
    pub fn new(dx: f64, dy: f64, density: f64) -> Self {
        let stiffness = std::array::from_fn(|i| stiffness(&indicator(i), dx, dy));
        Self {
            stiffness,
            mass_solid: consistent_mass(density, dx, dy),
        }
    }

    /// `f · Σ_i C_i B_i`
    pub fn element_stiffness(&self, c: &StiffnessTensor, f: f64) -> Mat8 {
        let y = c.entries();
        let mut k = [[0.0; 8]; 8];
        for (i, bi) in self.stiffness.iter().enumerate() {
            let s = f * y[i];
            if s == 0.0 {
                continue;
            }
            for r in 0..8 {
                for col in 0..8 {
                    k[r][col] += s * bi[r][col];
                }
            }
        }
        k
    }

    pub fn element_mass(&self, rho_tilde: f64) -> Mat8 {
        scale(&self.mass_solid, rho_tilde)
    }
}

pub fn scale(m: &Mat8, s: f64) -> Mat8 {
    let mut out = *m;
    out.iter_mut().flatten().for_each(|v| *v *= s);
    out
}

/// `uᵀ m v` for element-local vectors.
pub fn bilinear(m: &Mat8, u: &[f64; 8], v: &[f64; 8]) -> f64 {
    let mut acc = 0.0;
    for r in 0..8 {
        if u[r] == 0.0 {
            continue;
        }
        acc += u[r] * (0..8).map(|c| m[r][c] * v[c]).sum::<f64>();
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane_stress(e: f64, nu: f64) -> Mat3 {
        let s = e / (1.0 - nu * nu);
        [
            [s, s * nu, 0.0],
            [s * nu, s, 0.0],
            [0.0, 0.0, s * (1.0 - nu) / 2.0],
        ]
    }

    #[test]
    fn unit_square_matches_closed_form() {
        // Closed-form plane-stress Q4 stiffness on a unit square, E = 1.
        let nu: f64 = 0.3;
        let k = [
            0.5 - nu / 6.0,
            0.125 + nu / 8.0,
            -0.25 - nu / 12.0,
            -0.125 + 3.0 * nu / 8.0,
            -0.25 + nu / 12.0,
            -0.125 - nu / 8.0,
            nu / 6.0,
            0.125 - 3.0 * nu / 8.0,
        ];
        let idx = [
            [0, 1, 2, 3, 4, 5, 6, 7],
            [1, 0, 7, 6, 5, 4, 3, 2],
            [2, 7, 0, 5, 6, 3, 4, 1],
            [3, 6, 5, 0, 7, 2, 1, 4],
            [4, 5, 6, 7, 0, 1, 2, 3],
            [5, 4, 3, 2, 1, 0, 7, 6],
            [6, 3, 4, 1, 2, 7, 0, 5],
            [7, 2, 1, 4, 3, 6, 5, 0],
        ];
        let ke = stiffness(&plane_stress(1.0, nu), 1.0, 1.0);
        let f = 1.0 / (1.0 - nu * nu);
        for r in 0..8 {
            for c in 0..8 {
                assert!((ke[r][c] - f * k[idx[r][c]]).abs() < 1e-12, "({r},{c})");
            }
        }
    }

    #[test]
    fn basis_reproduces_full_constitutive_quadrature() {
        let basis = ElementBasis::new(0.5, 0.25, 1.0);
        let c = StiffnessTensor::from_entries([2.0, 0.7, 0.1, 1.5, -0.2, 0.6]);
        let direct = stiffness(&c.matrix(), 0.5, 0.25);
        let combined = basis.element_stiffness(&c, 1.0);
        for r in 0..8 {
            for col in 0..8 {
                assert!((direct[r][col] - combined[r][col]).abs() < 1e-12);
                assert_eq!(combined[r][col], combined[col][r]);
            }
        }
    }

    #[test]
    fn mass_is_conserved_per_direction() {
        let m = consistent_mass(2700.0, 0.02, 0.01);
        let total_x: f64 = (0..4).flat_map(|a| (0..4).map(move |b| (a, b))).map(|(a, b)| m[2 * a][2 * b]).sum();
        assert!((total_x - 2700.0 * 0.02 * 0.01).abs() < 1e-12);
        let cross: f64 = (0..4).flat_map(|a| (0..4).map(move |b| (a, b))).map(|(a, b)| m[2 * a][2 * b + 1]).sum();
        assert_eq!(cross, 0.0);
    }

    #[test]
    fn rigid_modes_carry_no_energy() {
        let ke = stiffness(&plane_stress(1.0, 0.3), 1.0, 2.0);
        let tx = [1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        // rotation about the center: u = -y, v = x
        let rot = [1.0, -0.5, 1.0, 0.5, -1.0, 0.5, -1.0, -0.5];
        assert!(bilinear(&ke, &tx, &tx).abs() < 1e-14);
        assert!(bilinear(&ke, &rot, &rot).abs() < 1e-13);
    }
}
