//! Element material models, the global frequency analysis and its
//! sensitivities.

use rayon::prelude::*;

use super::penalty::{self, SHARPNESS};
use crate::error::{Error, Result};
use crate::fem::eigen::{solve_eigs_with, EigenOptions};
use crate::fem::{multiplicity_check, Assembler, EigenSolution, ElementState, Multiplicity, MULTIPLICITY_TOLERANCE};
use crate::fem::element::bilinear;
use crate::lvgp::{LatentPoint, TrainedSurrogate};
use crate::stiffness::{BaseMaterial, StiffnessTensor, ENTRY_COUNT};

/// Stiffness kept in every element as a fraction of the solid, so that the
/// global stiffness stays positive definite when elements vanish.
pub const STIFFNESS_FLOOR: f64 = 1e-9;
/// SIMP penalty exponent.
pub const SIMP_EXPONENT: i32 = 3;
/// Below this projected density the SIMP mass follows a sixth-power law.
pub const SIMP_MASS_KNEE: f64 = 0.1;
/// Predicted tensor eigenvalues below this (normalized units) are lifted
/// smoothly toward zero from above.
pub const EIGENVALUE_KNEE: f64 = 1e-6;

fn lift(x: f64) -> (f64, f64) {
    if x >= EIGENVALUE_KNEE {
        (x, 1.0)
    } else {
        let d = 2.0 * EIGENVALUE_KNEE - x;
        (EIGENVALUE_KNEE * EIGENVALUE_KNEE / d, (EIGENVALUE_KNEE / d).powi(2))
    }
}

/// Positive-definite version of a predicted tensor: each eigenvalue passes
/// through `lift`, which is the identity above the knee. Returns the repaired
/// entries and a map taking entry perturbations to repaired-entry perturbations.
#[allow(clippy::type_complexity)]
pub fn repair_tensor(c: [f64; ENTRY_COUNT]) -> ([f64; ENTRY_COUNT], Option<impl Fn(&[f64; ENTRY_COUNT]) -> [f64; ENTRY_COUNT]>) {
    let t = StiffnessTensor::from_entries(c);
    let (lam, v) = t.eigen_decomposition();
    if lam[0] >= EIGENVALUE_KNEE {
        return (c, None);
    }
    let g = lam.map(lift);
    // divided differences of the lifted eigenvalues
    let mut dd = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let gap = lam[i] - lam[j];
            dd[i][j] = if gap.abs() > 1e-12 * lam[2].abs().max(1e-300) {
                (g[i].0 - g[j].0) / gap
            } else {
                lift(0.5 * (lam[i] + lam[j])).1
            };
        }
    }
    let rebuild = move |w: &[[f64; 3]; 3]| -> [f64; ENTRY_COUNT] {
        let mut m = [[0.0; 3]; 3];
        for r in 0..3 {
            for col in 0..3 {
                m[r][col] = (0..3).map(|i| (0..3).map(|j| v[r][i] * w[i][j] * v[col][j]).sum::<f64>()).sum();
            }
        }
        StiffnessTensor::from_matrix(&m).entries()
    };
    let diag = [[g[0].0, 0.0, 0.0], [0.0, g[1].0, 0.0], [0.0, 0.0, g[2].0]];
    let repaired = rebuild(&diag);
    let derivative = move |dc: &[f64; ENTRY_COUNT]| {
        let d = StiffnessTensor::from_entries(*dc).matrix();
        let mut w = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let proj: f64 = (0..3).map(|r| (0..3).map(|col| v[r][i] * d[r][col] * v[col][j]).sum::<f64>()).sum();
                w[i][j] = dd[i][j] * proj;
            }
        }
        rebuild(&w)
    };
    (repaired, Some(derivative))
}

/// Element state with its derivatives by the projected density and the latent coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElementResponse {
    pub state: ElementState,
    pub d_stiffness_d_rho: [f64; ENTRY_COUNT],
    pub d_mass_d_rho: f64,
    pub d_stiffness_d_z: [[f64; ENTRY_COUNT]; 2],
}

/// Penalty settings for latent coordinates; absent once classes are fixed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatentPenalty<'a> {
    pub points: &'a [LatentPoint],
    pub alpha: f64,
}

/// How an element's `(ρ̃, z)` maps to stiffness and mass.
#[derive(Clone, Copy, Debug)]
pub enum MaterialModel<'a> {
    /// Surrogate-predicted lattice stiffness, optionally weighted by the latent penalty.
    Lattice {
        surrogate: &'a TrainedSurrogate,
        material: BaseMaterial,
        penalty: Option<LatentPenalty<'a>>,
    },
    /// Isotropic solid with cubic stiffness interpolation.
    Simp { material: BaseMaterial },
}

fn unit_solid(material: &BaseMaterial) -> [f64; ENTRY_COUNT] {
    StiffnessTensor::isotropic_plane_stress(1.0, material.poisson_ratio).entries()
}

impl MaterialModel<'_> {
    pub fn material(&self) -> BaseMaterial {
        match self {
            MaterialModel::Lattice { material, .. } | MaterialModel::Simp { material } => *material,
        }
    }

    pub fn element(&self, rho_tilde: f64, z: LatentPoint) -> ElementResponse {
        let material = self.material();
        let e = material.youngs_modulus;
        let solid = unit_solid(&material);
        match self {
            MaterialModel::Lattice { surrogate, penalty, .. } => {
                let mut pg = surrogate.predict_grad(rho_tilde, z);
                if let (value, Some(map)) = repair_tensor(pg.value) {
                    pg.value = value;
                    pg.d_rho = map(&pg.d_rho);
                    let dz: [[f64; ENTRY_COUNT]; 2] = std::array::from_fn(|j| map(&std::array::from_fn(|i| pg.d_z[i][j])));
                    pg.d_z = std::array::from_fn(|i| [dz[0][i], dz[1][i]]);
                }
                let (f, df) = match penalty {
                    Some(p) => penalty::penalty(z, p.points, SHARPNESS, p.alpha),
                    None => (1.0, [0.0; 2]),
                };
                let mut out = ElementResponse {
                    state: ElementState {
                        stiffness: [0.0; ENTRY_COUNT],
                        mass_scale: rho_tilde,
                    },
                    d_stiffness_d_rho: [0.0; ENTRY_COUNT],
                    d_mass_d_rho: 1.0,
                    d_stiffness_d_z: [[0.0; ENTRY_COUNT]; 2],
                };
                for i in 0..ENTRY_COUNT {
                    out.state.stiffness[i] = e * (f * pg.value[i] + STIFFNESS_FLOOR * solid[i]);
                    out.d_stiffness_d_rho[i] = e * f * pg.d_rho[i];
                    for j in 0..2 {
                        out.d_stiffness_d_z[j][i] = e * (df[j] * pg.value[i] + f * pg.d_z[i][j]);
                    }
                }
                out
            }
            MaterialModel::Simp { .. } => {
                let p = SIMP_EXPONENT;
                let scale = STIFFNESS_FLOOR + (1.0 - STIFFNESS_FLOOR) * rho_tilde.powi(p);
                let d_scale = (1.0 - STIFFNESS_FLOOR) * p as f64 * rho_tilde.powi(p - 1);
                let (mass, d_mass) = if rho_tilde > SIMP_MASS_KNEE {
                    (rho_tilde, 1.0)
                } else {
                    (1e5 * rho_tilde.powi(6), 6e5 * rho_tilde.powi(5))
                };
                ElementResponse {
                    state: ElementState {
                        stiffness: solid.map(|c| e * scale * c),
                        mass_scale: mass,
                    },
                    d_stiffness_d_rho: solid.map(|c| e * d_scale * c),
                    d_mass_d_rho: d_mass,
                    d_stiffness_d_z: [[0.0; ENTRY_COUNT]; 2],
                }
            }
        }
    }

    pub fn elements(&self, rho_tilde: &[f64], z: &[LatentPoint]) -> Vec<ElementResponse> {
        rho_tilde.par_iter().zip(z.par_iter()).map(|(&r, &zz)| self.element(r, zz)).collect()
    }
}

/// Lowest two frequencies of one design.
#[derive(Clone, Debug)]
pub struct FrequencyAnalysis {
    pub eigen: EigenSolution,
    pub multiplicity: Multiplicity,
}

impl FrequencyAnalysis {
    pub fn omega1(&self) -> f64 {
        self.eigen.omega[0]
    }

    pub fn omega2(&self) -> f64 {
        self.eigen.omega[1]
    }

    pub fn repeated(&self) -> bool {
        self.multiplicity == Multiplicity::Repeated
    }
}

pub fn analyze(assembler: &Assembler, responses: &[ElementResponse]) -> Result<FrequencyAnalysis> {
    analyze_with(assembler, responses, &EigenOptions::default())
}

pub fn analyze_with(assembler: &Assembler, responses: &[ElementResponse], opts: &EigenOptions) -> Result<FrequencyAnalysis> {
    let states: Vec<ElementState> = responses.iter().map(|r| r.state).collect();
    let (k, m) = assembler.assemble(&states)?;
    let eigen = solve_eigs_with(&k, &m, 2, Some(assembler.analysis()), opts)?;
    if !(eigen.eigenvalues[0] > 0.0) {
        return Err(Error::Invalid(format!(
            "lowest eigenvalue {} is not positive; the structure is under-constrained",
            eigen.eigenvalues[0]
        )));
    }
    let multiplicity = multiplicity_check(&eigen, MULTIPLICITY_TOLERANCE)?;
    Ok(FrequencyAnalysis { eigen, multiplicity })
}

/// Per-element `∂ω₁/∂ρ̃` and `∂ω₁/∂z` for the M-normalized first mode.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Sensitivities {
    pub d_rho: Vec<f64>,
    pub d_z: [Vec<f64>; 2],
}

pub fn sensitivities(assembler: &Assembler, analysis: &FrequencyAnalysis, responses: &[ElementResponse]) -> Sensitivities {
    let lambda = analysis.eigen.eigenvalues[0];
    let omega = analysis.omega1();
    let u = assembler.dofs().expand(&analysis.eigen.modes[0]);
    let basis = assembler.basis();
    let per: Vec<(f64, f64, f64)> = responses
        .par_iter()
        .enumerate()
        .map(|(e, r)| {
            let ue = assembler.gather(&u, e);
            let q: [f64; ENTRY_COUNT] = std::array::from_fn(|i| bilinear(&basis.stiffness[i], &ue, &ue));
            let qm = bilinear(&basis.mass_solid, &ue, &ue);
            let dot = |d: &[f64; ENTRY_COUNT]| d.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>();
            let d_rho = dot(&r.d_stiffness_d_rho) - lambda * r.d_mass_d_rho * qm;
            (d_rho / (2.0 * omega), dot(&r.d_stiffness_d_z[0]) / (2.0 * omega), dot(&r.d_stiffness_d_z[1]) / (2.0 * omega))
        })
        .collect();
    Sensitivities {
        d_rho: per.iter().map(|p| p.0).collect(),
        d_z: [per.iter().map(|p| p.1).collect(), per.iter().map(|p| p.2).collect()],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{BoundaryPreset, BoundarySpec, Mesh};
    use crate::lvgp::fixture_surrogate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn clamped(nx: usize, ny: usize, mass: f64) -> Assembler {
        let mesh = Mesh::new(nx, ny, 0.1 * nx as f64, 0.1 * ny as f64).unwrap();
        let mut bcs = BoundarySpec::from_preset(&mesh, BoundaryPreset::ClampedBothEnds);
        if mass > 0.0 {
            bcs.add_point_mass(&mesh, mesh.node(nx / 2, ny / 2), mass).unwrap();
        }
        Assembler::new(mesh, bcs, 2700.0).unwrap()
    }

    fn omega1(asm: &Assembler, model: &MaterialModel, rho: &[f64], z: &[LatentPoint]) -> f64 {
        analyze(asm, &model.elements(rho, z)).unwrap().omega1()
    }

    fn fd_check(asm: &Assembler, model: &MaterialModel, rho: &[f64], z: &[LatentPoint], check_z: bool) {
        let res = model.elements(rho, z);
        let a = analyze(asm, &res).unwrap();
        let s = sensitivities(asm, &a, &res);
        let h = 1e-5;
        for e in 0..rho.len() {
            let (mut rp, mut rm) = (rho.to_vec(), rho.to_vec());
            rp[e] += h;
            rm[e] -= h;
            let fd = (omega1(asm, model, &rp, z) - omega1(asm, model, &rm, z)) / (2.0 * h);
            assert!((fd - s.d_rho[e]).abs() <= 1e-4 * s.d_rho[e].abs(), "ρ element {e}: {} vs {fd}", s.d_rho[e]);
            if check_z {
                for j in 0..2 {
                    let (mut zp, mut zm) = (z.to_vec(), z.to_vec());
                    zp[e][j] += h;
                    zm[e][j] -= h;
                    let fd = (omega1(asm, model, rho, &zp) - omega1(asm, model, rho, &zm)) / (2.0 * h);
                    let an = s.d_z[j][e];
                    assert!((fd - an).abs() <= 1e-4 * an.abs(), "z{j} element {e}: {an} vs {fd}");
                }
            }
        }
    }

    #[test]
    fn lattice_sensitivities_match_central_differences() {
        let asm = clamped(8, 4, 5.0);
        let sur = fixture_surrogate();
        let points = sur.latent().points().to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let rho: Vec<f64> = (0..32).map(|_| rng.random_range(0.2..0.9)).collect();
        let z: Vec<LatentPoint> = (0..32).map(|_| [rng.random_range(-0.3..0.4), rng.random_range(-0.3..0.3)]).collect();
        let model = MaterialModel::Lattice {
            surrogate: &sur,
            material: BaseMaterial::default(),
            penalty: Some(LatentPenalty { points: &points, alpha: 0.3 }),
        };
        fd_check(&asm, &model, &rho, &z, true);
    }

    #[test]
    fn simp_sensitivities_match_central_differences() {
        let asm = clamped(8, 4, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        // both sides of the mass knee
        let rho: Vec<f64> = (0..32).map(|e| if e % 3 == 0 { rng.random_range(0.05..0.09) } else { rng.random_range(0.2..1.0) }).collect();
        let model = MaterialModel::Simp {
            material: BaseMaterial::default(),
        };
        fd_check(&asm, &model, &rho, &vec![[0.0; 2]; 32], false);
    }

    #[test]
    fn mode_scaling_does_not_change_sensitivities() {
        let asm = clamped(6, 3, 1.0);
        let model = MaterialModel::Simp {
            material: BaseMaterial::default(),
        };
        let rho: Vec<f64> = (0..18).map(|e| 0.3 + 0.04 * e as f64).collect();
        let res = model.elements(&rho, &vec![[0.0; 2]; 18]);
        let a = analyze(&asm, &res).unwrap();
        let base = sensitivities(&asm, &a, &res);
        let states: Vec<ElementState> = res.iter().map(|r| r.state).collect();
        let (_, m) = asm.assemble(&states).unwrap();
        for c in [-3.0, 0.01, 250.0] {
            let mut b = a.clone();
            let u: Vec<f64> = a.eigen.modes[0].iter().map(|v| c * v).collect();
            let norm = m.quad_form(&u).sqrt();
            b.eigen.modes[0] = u.iter().map(|v| v / norm).collect();
            let s = sensitivities(&asm, &b, &res);
            for e in 0..18 {
                assert!((s.d_rho[e] - base.d_rho[e]).abs() <= 1e-12 * base.d_rho[e].abs().max(1e-300));
            }
        }
    }

    #[test]
    fn symmetric_design_has_mirror_symmetric_sensitivities() {
        let asm = clamped(8, 4, 3.0);
        let mesh = *asm.mesh();
        assert!(asm.boundary().is_mirror_symmetric(&mesh));
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let mut rho = vec![0.0; 32];
        for e in 0..32 {
            let m = mesh.mirror_element(e);
            if m >= e {
                rho[e] = rng.random_range(0.2..0.9);
                rho[m] = rho[e];
            }
        }
        let z = vec![[0.0; 2]; 32];
        let model = MaterialModel::Simp {
            material: BaseMaterial::default(),
        };
        let res = model.elements(&rho, &z);
        let a = analyze(&asm, &res).unwrap();
        let s = sensitivities(&asm, &a, &res);
        let scale = s.d_rho.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for e in 0..32 {
            let m = mesh.mirror_element(e);
            assert!((s.d_rho[e] - s.d_rho[m]).abs() <= 1e-7 * scale, "{e}↔{m}: {} vs {}", s.d_rho[e], s.d_rho[m]);
        }
    }

    #[test]
    fn repair_leaves_definite_tensors_alone() {
        let c = StiffnessTensor::isotropic_plane_stress(0.3, 0.3).entries();
        let (r, map) = repair_tensor(c);
        assert_eq!(r, c);
        assert!(map.is_none());
    }

    #[test]
    fn repaired_tensor_is_definite_with_exact_derivative() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        for _ in 0..100 {
            let c: [f64; 6] = std::array::from_fn(|_| rng.random_range(-1e-3..1e-3));
            let (r, map) = repair_tensor(c);
            let ev = StiffnessTensor::from_entries(r).eigenvalues();
            assert!(ev[0] > 0.0, "{ev:?}");
            let Some(map) = map else { continue };
            let dir: [f64; 6] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let an = map(&dir);
            let h = 1e-10;
            let plus = repair_tensor(std::array::from_fn(|i| c[i] + h * dir[i])).0;
            let minus = repair_tensor(std::array::from_fn(|i| c[i] - h * dir[i])).0;
            for i in 0..6 {
                let fd = (plus[i] - minus[i]) / (2.0 * h);
                assert!((fd - an[i]).abs() <= 1e-5 * an.iter().fold(0.0f64, |m, v| m.max(v.abs())), "{i}: {} vs {fd}", an[i]);
            }
        }
    }

    #[test]
    fn simp_solid_limit() {
        let model = MaterialModel::Simp {
            material: BaseMaterial::default(),
        };
        let r = model.element(1.0, [0.0; 2]);
        let solid = BaseMaterial::default().solid_stiffness().entries();
        for i in 0..ENTRY_COUNT {
            assert!((r.state.stiffness[i] - solid[i]).abs() <= 1e-12 * solid[0]);
        }
        assert_eq!(r.state.mass_scale, 1.0);
        let low = model.element(0.1, [0.0; 2]).state.mass_scale;
        assert!((low - 0.1).abs() < 1e-15);
    }
}
