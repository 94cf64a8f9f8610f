//! Lowest eigenpairs of `K u = λ M u` by shift-invert subspace iteration.
//!
//! Each sweep multiplies the block by `M`, solves with the factored
//! `K + s M`, M-orthonormalizes the result and performs a Rayleigh–Ritz
//! projection. The shift `s` is zero when `K` factors and a small positive
//! multiple of the spectral scale otherwise.

use faer::{Mat, Side};
use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sparse::{Cholesky, CholeskyAnalysis, SymmetricCsc};

/// Number of pairs tracked by the optimizer.
pub const DEFAULT_MODE_COUNT: usize = 4;
pub const MAX_MODE_COUNT: usize = 6;
/// Default relative gap below which two frequencies count as repeated.
pub const MULTIPLICITY_TOLERANCE: f64 = 1e-3;
/// Residual bound every returned pair must satisfy.
pub const RESIDUAL_BOUND: f64 = 1e-8;
/// Eigenvalues below this fraction of `‖K‖/‖M‖` are rigid-body modes and reported as zero.
const RIGID_FRACTION: f64 = 1e-10;

#[derive(Clone, Copy, Debug)]
pub struct EigenOptions {
    /// Iteration stops once every tracked residual is below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
    /// Largest residual accepted when iteration stalls above `tolerance`.
    pub accept_residual: f64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-11,
            max_iterations: 400,
            seed: 0x5eed,
            accept_residual: RESIDUAL_BOUND,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EigenSolution {
    /// `ω²` ascending.
    pub eigenvalues: Vec<f64>,
    /// Angular frequencies (rad/s).
    pub omega: Vec<f64>,
    /// M-normalized modes on the unconstrained DOFs.
    pub modes: Vec<Vec<f64>>,
    /// `‖(K − ω² M) u‖ / ‖K u‖` per pair.
    pub residuals: Vec<f64>,
    pub shift: f64,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Multiplicity {
    Simple,
    Repeated,
}

/// Compare the two lowest frequencies.
pub fn multiplicity_check(sol: &EigenSolution, rel_tol: f64) -> Result<Multiplicity> {
    if sol.omega.len() < 2 {
        return Err(Error::Invalid("multiplicity check needs two frequencies".into()));
    }
    let (w1, w2) = (sol.omega[0], sol.omega[1]);
    Ok(if w2 - w1 <= rel_tol * w1 {
        Multiplicity::Repeated
    } else {
        Multiplicity::Simple
    })
}

pub fn rayleigh_quotient(k: &SymmetricCsc, m: &SymmetricCsc, u: &[f64]) -> f64 {
    k.quad_form(u) / m.quad_form(u)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Relative residual; rigid modes are measured against `‖K‖_F ‖u‖` since `K u` vanishes.
fn residual(k: &SymmetricCsc, m: &SymmetricCsc, lambda: f64, u: &[f64], k_norm: f64) -> f64 {
    let n = u.len();
    let (mut ku, mut mu) = (vec![0.0; n], vec![0.0; n]);
    k.mul_vec(u, &mut ku);
    m.mul_vec(u, &mut mu);
    let r: Vec<f64> = ku.iter().zip(&mu).map(|(a, b)| a - lambda * b).collect();
    let denom = if lambda == 0.0 { k_norm * norm(u) } else { norm(&ku).max(lambda.abs() * norm(&mu)) };
    if denom == 0.0 {
        0.0
    } else {
        norm(&r) / denom
    }
}

/// M-orthonormalize the columns in place by two passes of modified Gram–Schmidt.
/// Columns that collapse are replaced by fresh random vectors.
fn m_orthonormalize(m: &SymmetricCsc, z: &mut Mat<f64>, rng: &mut ChaCha8Rng) {
    let (n, p) = (z.nrows(), z.ncols());
    let mut mz = vec![0.0; n];
    for j in 0..p {
        for attempt in 0..4 {
            let before = {
                let c = z.col_as_slice(j);
                m.mul_vec(c, &mut mz);
                dot(c, &mz).max(0.0).sqrt()
            };
            for _ in 0..2 {
                for i in 0..j {
                    let (ci, cj) = (z.col_as_slice(i).to_vec(), z.col_as_slice(j));
                    m.mul_vec(&ci, &mut mz);
                    let proj = dot(cj, &mz);
                    let cj = z.col_as_slice_mut(j);
                    cj.iter_mut().zip(&ci).for_each(|(a, b)| *a -= proj * b);
                }
            }
            let c = z.col_as_slice(j);
            m.mul_vec(c, &mut mz);
            let len = dot(c, &mz).max(0.0).sqrt();
            if len > 1e-10 * before && len > 0.0 {
                z.col_as_slice_mut(j).iter_mut().for_each(|v| *v /= len);
                break;
            }
            if attempt == 3 {
                break;
            }
            z.col_as_slice_mut(j).iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        }
    }
}

fn factor_shifted(
    k: &SymmetricCsc,
    m: &SymmetricCsc,
    analysis: Option<&CholeskyAnalysis>,
    shift: f64,
) -> Result<Cholesky> {
    let a = if shift == 0.0 { k.clone() } else { k.add_scaled(shift, m)? };
    let chol = match analysis {
        Some(an) => an.factorize(&a)?,
        None => Cholesky::new(&a, None)?,
    };
    // a singular K can slip through with a tiny pivot; probe the solve
    let mut probe = vec![1.0; a.dim()];
    chol.solve_vec(&mut probe);
    if probe.iter().any(|v| !v.is_finite()) {
        return Err(Error::Factorization("solve produced non-finite values".into()));
    }
    Ok(chol)
}

/// `count` lowest eigenpairs. `analysis`, if given, must share the pattern of `K`
/// and `K + s M` (true for matrices from one assembler).
pub fn solve_eigs(
    k: &SymmetricCsc,
    m: &SymmetricCsc,
    count: usize,
    analysis: Option<&CholeskyAnalysis>,
) -> Result<EigenSolution> {
    solve_eigs_with(k, m, count, analysis, &EigenOptions::default())
}

pub fn solve_eigs_with(
    k: &SymmetricCsc,
    m: &SymmetricCsc,
    count: usize,
    analysis: Option<&CholeskyAnalysis>,
    opts: &EigenOptions,
) -> Result<EigenSolution> {
    let n = k.dim();
    if m.dim() != n {
        return Err(Error::Dimension(format!("K is {n}×{n}, M is {}×{}", m.dim(), m.dim())));
    }
    if count == 0 || count > MAX_MODE_COUNT || count > n {
        return Err(Error::Invalid(format!("cannot compute {count} eigenpairs of a {n}-DOF system")));
    }
    let (k_norm, m_norm) = (k.frobenius_norm(), m.frobenius_norm());
    let scale = k_norm / m_norm;
    let mut shift = 0.0;
    let chol = match factor_shifted(k, m, analysis, 0.0) {
        Ok(c) => c,
        Err(_) => {
            shift = 1e-8 * scale;
            factor_shifted(k, m, analysis, shift)?
        }
    };

    let p = n.min((2 * count).max(count + 4));
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x = Mat::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
    let mut lambdas = vec![0.0; p];
    let mut residuals = vec![f64::INFINITY; count];
    let mut iterations = 0;
    let mut best = f64::INFINITY;
    let mut stalled = 0;

    let mut z = Mat::<f64>::zeros(n, p);
    let mut kz = Mat::<f64>::zeros(n, p);
    while iterations < opts.max_iterations {
        iterations += 1;
        for j in 0..p {
            let (src, dst) = (x.col_as_slice(j).to_vec(), z.col_as_slice_mut(j));
            m.mul_vec(&src, dst);
        }
        chol.solve_in_place(z.as_mut());
        m_orthonormalize(m, &mut z, &mut rng);

        for j in 0..p {
            let src = z.col_as_slice(j).to_vec();
            k.mul_vec(&src, kz.col_as_slice_mut(j));
        }
        let kr = z.transpose() * &kz;
        let kr = Mat::from_fn(p, p, |i, j| 0.5 * (kr[(i, j)] + kr[(j, i)]));
        let evd = kr
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Factorization(format!("reduced eigenproblem: {e:?}")))?;
        x = &z * evd.U();
        for j in 0..p {
            lambdas[j] = evd.S()[j];
        }

        for j in 0..count {
            let lam = if lambdas[j].abs() <= RIGID_FRACTION * scale { 0.0 } else { lambdas[j] };
            residuals[j] = residual(k, m, lam, x.col_as_slice(j), k_norm);
        }
        let worst = residuals.iter().fold(0.0f64, |a, &b| a.max(b));
        if worst <= opts.tolerance {
            break;
        }
        // stop once progress stalls at round-off
        if worst < 0.5 * best {
            best = worst;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= 8 && best <= opts.accept_residual {
                break;
            }
        }
    }
    let worst = residuals.iter().fold(0.0f64, |a, &b| a.max(b));
    if !(worst <= opts.accept_residual) {
        return Err(Error::EigenNotConverged {
            iterations,
            residual: worst,
        });
    }
    if worst > RESIDUAL_BOUND {
        warn!("eigenpairs accepted at residual {worst:.3e} after {iterations} iterations");
    }

    let mut eigenvalues = Vec::with_capacity(count);
    let mut modes = Vec::with_capacity(count);
    for j in 0..count {
        let mut u = x.col_as_slice(j).to_vec();
        // sign convention: the largest-magnitude component is positive
        let pivot = u.iter().fold(0.0f64, |a, &v| if v.abs() > a.abs() { v } else { a });
        if pivot < 0.0 {
            u.iter_mut().for_each(|v| *v = -*v);
        }
        let lam = if lambdas[j].abs() <= RIGID_FRACTION * scale { 0.0 } else { lambdas[j] };
        eigenvalues.push(lam);
        modes.push(u);
    }
    Ok(EigenSolution {
        omega: eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).collect(),
        eigenvalues,
        modes,
        residuals,
        shift,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::assembly::{Assembler, ElementState};
    use crate::fem::boundary::{BoundaryPreset, BoundarySpec};
    use crate::fem::mesh::Mesh;
    use crate::stiffness::BaseMaterial;

    fn solid_states(n: usize) -> Vec<ElementState> {
        let c = BaseMaterial::default().solid_stiffness();
        vec![
            ElementState {
                stiffness: c.entries(),
                mass_scale: 1.0,
            };
            n
        ]
    }

    /// Dense generalized eigenvalues via Cholesky reduction.
    fn dense_oracle(k: &SymmetricCsc, m: &SymmetricCsc) -> Vec<f64> {
        let n = k.dim();
        let kd = nalgebra::DMatrix::from_fn(n, n, |i, j| k.to_dense()[i][j]);
        let md = nalgebra::DMatrix::from_fn(n, n, |i, j| m.to_dense()[i][j]);
        let l = md.cholesky().unwrap().l();
        let li = l.clone().try_inverse().unwrap();
        let c = &li * kd * li.transpose();
        let c = (&c + c.transpose()) * 0.5;
        let mut ev: Vec<f64> = c.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    #[test]
    fn two_dof_hand_example() {
        let k = SymmetricCsc::from_triplets(2, &[(0, 0, 2.0), (1, 0, -1.0), (1, 1, 2.0)]).unwrap();
        let m = SymmetricCsc::from_triplets(2, &[(0, 0, 1.0), (1, 1, 1.0)]).unwrap();
        let s = solve_eigs(&k, &m, 2, None).unwrap();
        assert!((s.eigenvalues[0] - 1.0).abs() < 1e-12 && (s.eigenvalues[1] - 3.0).abs() < 1e-12);
        assert!((s.omega[1] - 3f64.sqrt()).abs() < 1e-12);
    }

    fn check_contracts(k: &SymmetricCsc, m: &SymmetricCsc, s: &EigenSolution) {
        for (j, u) in s.modes.iter().enumerate() {
            assert!((m.quad_form(u) - 1.0).abs() <= 1e-8);
            assert!(s.residuals[j] <= 1e-8);
            let rq = rayleigh_quotient(k, m, u);
            assert!((rq - s.eigenvalues[j]).abs() <= 1e-10 * s.eigenvalues[j]);
            for v in &s.modes[..j] {
                let mut mv = vec![0.0; v.len()];
                m.mul_vec(v, &mut mv);
                assert!(dot(u, &mv).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn clamped_beam_matches_dense_oracle() {
        let mesh = Mesh::new(6, 3, 0.6, 0.2).unwrap();
        let mut bcs = BoundarySpec::from_preset(&mesh, BoundaryPreset::ClampedBothEnds);
        bcs.add_point_mass(&mesh, mesh.node(3, 1), 50.0).unwrap();
        let asm = Assembler::new(mesh, bcs, BaseMaterial::default().density).unwrap();
        let (k, m) = asm.assemble(&solid_states(18)).unwrap();
        let s = solve_eigs(&k, &m, 4, Some(asm.analysis())).unwrap();
        assert_eq!(s.shift, 0.0);
        let oracle = dense_oracle(&k, &m);
        for j in 0..4 {
            assert!((s.eigenvalues[j] - oracle[j]).abs() <= 1e-8 * oracle[j], "{j}: {} vs {}", s.eigenvalues[j], oracle[j]);
        }
        check_contracts(&k, &m, &s);
    }

    #[test]
    fn single_free_element_has_three_rigid_modes() {
        let mesh = Mesh::new(1, 1, 1.0, 1.0).unwrap();
        let asm = Assembler::new(mesh, BoundarySpec::default(), 1.0).unwrap();
        let (k, m) = asm.assemble(&solid_states(1)).unwrap();
        let s = solve_eigs(&k, &m, 4, None).unwrap();
        assert!(s.shift > 0.0);
        assert_eq!(&s.eigenvalues[..3], &[0.0; 3]);
        assert!(s.eigenvalues[3] > 0.0);
        let oracle = dense_oracle(&k, &m);
        assert!((s.eigenvalues[3] - oracle[3]).abs() <= 1e-8 * oracle[3]);
    }

    #[test]
    fn free_square_plate_is_flagged_repeated() {
        let mesh = Mesh::new(4, 4, 1.0, 1.0).unwrap();
        let asm = Assembler::new(mesh, BoundarySpec::default(), 1.0).unwrap();
        let (k, m) = asm.assemble(&solid_states(16)).unwrap();
        let s = solve_eigs(&k, &m, 4, None).unwrap();
        let oracle = dense_oracle(&k, &m);
        // the oracle agrees that the lowest pair coincides
        assert!(oracle[1] - oracle[0] <= 1e-6 * oracle[5]);
        assert_eq!(multiplicity_check(&s, MULTIPLICITY_TOLERANCE).unwrap(), Multiplicity::Repeated);
    }

    #[test]
    fn multiplicity_flags() {
        let mk = |w: [f64; 2]| EigenSolution {
            eigenvalues: w.iter().map(|v| v * v).collect(),
            omega: w.to_vec(),
            modes: vec![],
            residuals: vec![],
            shift: 0.0,
            iterations: 0,
        };
        assert_eq!(multiplicity_check(&mk([10.0, 20.0]), 1e-3).unwrap(), Multiplicity::Simple);
        assert_eq!(multiplicity_check(&mk([10.0, 10.001]), 1e-3).unwrap(), Multiplicity::Repeated);
    }

    #[test]
    fn heavier_point_mass_lowers_frequency() {
        let mesh = Mesh::new(8, 4, 0.8, 0.2).unwrap();
        let base = BoundarySpec::from_preset(&mesh, BoundaryPreset::ClampedBothEnds);
        let omega = |mass: f64, rho: f64| {
            let mut bcs = base.clone();
            bcs.add_point_mass(&mesh, mesh.node(4, 2), mass).unwrap();
            let asm = Assembler::new(mesh, bcs, 2700.0).unwrap();
            let c = BaseMaterial::default().solid_stiffness().scaled(rho);
            let states = vec![
                ElementState {
                    stiffness: c.entries(),
                    mass_scale: rho,
                };
                32
            ];
            let (k, m) = asm.assemble(&states).unwrap();
            solve_eigs(&k, &m, 4, Some(asm.analysis())).unwrap().omega[0]
        };
        assert!(omega(2000.0, 0.5) < omega(100.0, 0.5));
        // mass-dominated: a stiffer, heavier structure still rises
        assert!(omega(2000.0, 0.6) >= omega(2000.0, 0.5));
    }

    #[test]
    fn rejects_bad_requests() {
        let k = SymmetricCsc::from_triplets(2, &[(0, 0, 2.0), (1, 1, 2.0)]).unwrap();
        let m = SymmetricCsc::from_triplets(3, &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0)]).unwrap();
        assert!(solve_eigs(&k, &m, 1, None).is_err());
        assert!(solve_eigs(&k, &k, 3, None).is_err());
    }
}
