//! Global stiffness and mass assembly on the unconstrained DOFs.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use super::boundary::{BoundarySpec, DofMap};
use super::element::{ElementBasis, Mat8};
use super::mesh::Mesh;
use crate::error::{Error, Result};
use crate::sparse::{AssemblyPattern, CholeskyAnalysis, SymmetricCsc};
use crate::stiffness::{StiffnessTensor, ENTRY_COUNT};

/// Per-element data that determines the global matrices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElementState {
    /// Stiffness entries already multiplied by the penalty factor.
    pub stiffness: [f64; ENTRY_COUNT],
    /// Mass scale, the projected volume fraction.
    pub mass_scale: f64,
}

/// Precomputed scatter pattern for one mesh and boundary specification.
#[derive(Clone, Debug)]
pub struct Assembler {
    mesh: Mesh,
    bcs: BoundarySpec,
    basis: ElementBasis,
    dofs: DofMap,
    /// Local `(row, col)` pairs kept per element, in contribution order.
    local_pairs: Vec<Vec<(u8, u8)>>,
    /// Free DOFs that carry a concentrated mass.
    lumped: Vec<(usize, f64)>,
    pattern: AssemblyPattern,
    analysis: CholeskyAnalysis,
}

impl Assembler {
    pub fn new(mesh: Mesh, bcs: BoundarySpec, density: f64) -> Result<Self> {
        let basis = ElementBasis::new(mesh.dx(), mesh.dy(), density);
        let dofs = DofMap::new(&mesh, &bcs);
        if dofs.free_count() == 0 {
            return Err(Error::Invalid("every DOF is fixed".into()));
        }
        let mut pairs = Vec::new();
        let mut local_pairs = Vec::with_capacity(mesh.element_count());
        for e in 0..mesh.element_count() {
            let ed = mesh.element_dofs(e);
            let mut kept = Vec::new();
            for r in 0..8 {
                for c in 0..8 {
                    if let (Some(gr), Some(gc)) = (dofs.free_index(ed[r]), dofs.free_index(ed[c])) {
                        if gr >= gc {
                            kept.push((r as u8, c as u8));
                            pairs.push((gr, gc));
                        }
                    }
                }
            }
            local_pairs.push(kept);
        }
        let mut lumped = Vec::new();
        for pm in bcs.point_masses() {
            for d in [2 * pm.node, 2 * pm.node + 1] {
                if let Some(g) = dofs.free_index(d) {
                    lumped.push((g, pm.mass));
                    pairs.push((g, g));
                }
            }
        }
        let pattern = AssemblyPattern::new(dofs.free_count(), &pairs)?;
        let analysis = CholeskyAnalysis::new(&pattern.fill(&vec![0.0; pairs.len()])?, None)?;
        Ok(Self {
            mesh,
            bcs,
            basis,
            dofs,
            local_pairs,
            lumped,
            pattern,
            analysis,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn boundary(&self) -> &BoundarySpec {
        &self.bcs
    }

    pub fn basis(&self) -> &ElementBasis {
        &self.basis
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    /// Symbolic factorization shared by every matrix this assembler produces.
    pub fn analysis(&self) -> &CholeskyAnalysis {
        &self.analysis
    }

    pub fn element_stiffness(&self, state: &ElementState) -> Mat8 {
        self.basis.element_stiffness(&StiffnessTensor::from_entries(state.stiffness), 1.0)
    }

    /// Reduced `(K, M)` for one design.
    pub fn assemble(&self, states: &[ElementState]) -> Result<(SymmetricCsc, SymmetricCsc)> {
        if states.len() != self.mesh.element_count() {
            return Err(Error::Dimension(format!(
                "design has {} elements, mesh has {}",
                states.len(),
                self.mesh.element_count()
            )));
        }
        let (mut kv, mut mv): (Vec<f64>, Vec<f64>) = (0..states.len())
            .into_par_iter()
            .flat_map_iter(|e| {
                let ke = self.element_stiffness(&states[e]);
                let ms = states[e].mass_scale;
                let m0 = &self.basis.mass_solid;
                self.local_pairs[e]
                    .iter()
                    .map(move |&(r, c)| (ke[r as usize][c as usize], ms * m0[r as usize][c as usize]))
            })
            .unzip();
        for &(_, mass) in &self.lumped {
            kv.push(0.0);
            mv.push(mass);
        }
        Ok((self.pattern.fill(&kv)?, self.pattern.fill(&mv)?))
    }

    /// Element-local slice of a full-length DOF vector.
    pub fn gather(&self, full: &[f64], e: usize) -> [f64; 8] {
        let d = self.mesh.element_dofs(e);
        std::array::from_fn(|k| full[d[k]])
    }
}

/// Write a symmetric matrix in Matrix Market coordinate format (lower triangle, 1-based).
pub fn write_matrix_market(path: impl AsRef<Path>, matrix: &SymmetricCsc) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(w, "%%MatrixMarket matrix coordinate real symmetric").map_err(io)?;
    writeln!(w, "{} {} {}", matrix.dim(), matrix.dim(), matrix.nnz()).map_err(io)?;
    for (r, c, v) in matrix.lower_entries() {
        writeln!(w, "{} {} {:e}", r + 1, c + 1, v).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::boundary::BoundaryPreset;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_states(n: usize, seed: u64) -> Vec<ElementState> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let a: f64 = rng.random_range(0.1..1.0);
                let b: f64 = rng.random_range(0.0..0.3);
                ElementState {
                    stiffness: [a, 0.3 * a, 0.1 * b, 0.8 * a, -0.05 * b, 0.35 * a],
                    mass_scale: rng.random_range(0.0..1.0),
                }
            })
            .collect()
    }

    /// Dense brute-force assembly over all DOFs followed by row/column removal.
    fn dense_oracle(asm: &Assembler, states: &[ElementState]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mesh = asm.mesh();
        let n = mesh.dof_count();
        let mut k = vec![vec![0.0; n]; n];
        let mut m = vec![vec![0.0; n]; n];
        for (e, s) in states.iter().enumerate() {
            let d = mesh.element_dofs(e);
            let ke = asm.element_stiffness(s);
            for r in 0..8 {
                for c in 0..8 {
                    k[d[r]][d[c]] += ke[r][c];
                    m[d[r]][d[c]] += s.mass_scale * asm.basis().mass_solid[r][c];
                }
            }
        }
        for pm in asm.boundary().point_masses() {
            m[2 * pm.node][2 * pm.node] += pm.mass;
            m[2 * pm.node + 1][2 * pm.node + 1] += pm.mass;
        }
        let keep: Vec<usize> = (0..n).filter(|&d| asm.dofs().free_index(d).is_some()).collect();
        let reduce = |a: &Vec<Vec<f64>>| keep.iter().map(|&r| keep.iter().map(|&c| a[r][c]).collect()).collect();
        (reduce(&k), reduce(&m))
    }

    #[test]
    fn matches_dense_oracle() {
        let mesh = Mesh::new(4, 2, 2.0, 0.6).unwrap();
        let mut bcs = BoundarySpec::from_preset(&mesh, BoundaryPreset::CantileverLeft);
        bcs.add_point_mass(&mesh, mesh.node(4, 1), 3.5).unwrap();
        let asm = Assembler::new(mesh, bcs, 7.0).unwrap();
        let states = random_states(8, 3);
        let (k, m) = asm.assemble(&states).unwrap();
        let (kd, md) = dense_oracle(&asm, &states);
        let (ks, ms) = (k.to_dense(), m.to_dense());
        for r in 0..kd.len() {
            for c in 0..kd.len() {
                assert!((ks[r][c] - kd[r][c]).abs() <= 1e-12 * (1.0 + kd[r][c].abs()), "K[{r}][{c}]");
                assert!((ms[r][c] - md[r][c]).abs() <= 1e-12 * (1.0 + md[r][c].abs()), "M[{r}][{c}]");
            }
        }
    }

    #[test]
    fn point_mass_adds_to_both_translations() {
        let mesh = Mesh::new(2, 2, 1.0, 1.0).unwrap();
        let node = mesh.node(1, 1);
        let states = random_states(4, 9);
        let free = Assembler::new(mesh, BoundarySpec::default(), 1.0).unwrap();
        let mut bcs = BoundarySpec::default();
        bcs.add_point_mass(&mesh, node, 2000.0).unwrap();
        let loaded = Assembler::new(mesh, bcs, 1.0).unwrap();
        let (m0, m1) = (free.assemble(&states).unwrap().1, loaded.assemble(&states).unwrap().1);
        for d in 0..mesh.dof_count() {
            let extra = if d / 2 == node { 2000.0 } else { 0.0 };
            assert!((m1.get(d, d) - m0.get(d, d) - extra).abs() < 1e-9);
        }
        assert!((m1.get(2 * node + 1, 2 * node) - m0.get(2 * node + 1, 2 * node)).abs() < 1e-15);
    }

    #[test]
    fn assembly_is_linear_in_stiffness() {
        let mesh = Mesh::new(3, 2, 3.0, 1.0).unwrap();
        let asm = Assembler::new(mesh, BoundarySpec::from_preset(&mesh, BoundaryPreset::ClampedBothEnds), 1.0).unwrap();
        let states = random_states(6, 1);
        let halved: Vec<ElementState> = states
            .iter()
            .map(|s| ElementState {
                stiffness: s.stiffness.map(|v| 0.5 * v),
                ..*s
            })
            .collect();
        let (k, _) = asm.assemble(&states).unwrap();
        let (kh, _) = asm.assemble(&halved).unwrap();
        for ((_, _, a), (_, _, b)) in k.lower_entries().zip(kh.lower_entries()) {
            assert_eq!(0.5 * a, b);
        }
        assert!(asm.assemble(&states[..5]).is_err());
    }

    #[test]
    fn matrix_market_dump() {
        let k = SymmetricCsc::from_triplets(2, &[(0, 0, 2.0), (1, 0, -1.0), (1, 1, 2.0)]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("k.mtx");
        write_matrix_market(&p, &k).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "2 2 3");
        assert_eq!(lines[3], "2 1 -1e0");
    }
}
