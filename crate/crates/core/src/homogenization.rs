//! Energy-based homogenization of periodic pixel cells.
//!
//! Each pixel is one bilinear plane-stress element. For the three unit
//! macroscopic strains the periodic fluctuation field is solved on the torus
//! (one node pinned against rigid translation), and the effective entries are
//! the mutual strain energies of the superposed fields per unit cell area.

use faer::Mat;

use crate::bitmap::Bitmap;
use crate::error::{Error, Result};
use crate::fem::element::{self, Mat8};
use crate::sparse::{AssemblyPattern, Cholesky, CholeskyAnalysis, SymmetricCsc};
use crate::stiffness::{BaseMaterial, StiffnessTensor};

pub const DEFAULT_VOID_RATIO: f64 = 1e-9;
const REFINEMENT_TOLERANCE: f64 = 1e-10;
const MAX_REFINEMENTS: usize = 6;

/// Nodal displacements of a unit-square element under the three unit strains
/// (xx, yy, engineering xy), with the lower-left node at the origin.
fn unit_strain_fields() -> [[f64; 8]; 3] {
    let corners = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    let mut w = [[0.0; 8]; 3];
    for (a, p) in corners.iter().enumerate() {
        w[0][2 * a] = p[0];
        w[1][2 * a + 1] = p[1];
        w[2][2 * a] = 0.5 * p[1];
        w[2][2 * a + 1] = 0.5 * p[0];
    }
    w
}

/// Nested-dissection ordering of the periodic grid nodes: the interior block
/// `1..n × 1..n` is split recursively along its longer side, separators last,
/// followed by the wrap-around row and column and finally the pinned node.
fn torus_node_ordering(n: usize) -> Vec<usize> {
    fn dissect(xs: (usize, usize), ys: (usize, usize), n: usize, out: &mut Vec<usize>) {
        let (w, h) = (xs.1 - xs.0, ys.1 - ys.0);
        if w == 0 || h == 0 {
            return;
        }
        if w * h <= 16 {
            for y in ys.0..ys.1 {
                for x in xs.0..xs.1 {
                    out.push(y * n + x);
                }
            }
        } else if w >= h {
            let m = xs.0 + w / 2;
            dissect((xs.0, m), ys, n, out);
            dissect((m + 1, xs.1), ys, n, out);
            out.extend((ys.0..ys.1).map(|y| y * n + m));
        } else {
            let m = ys.0 + h / 2;
            dissect(xs, (ys.0, m), n, out);
            dissect(xs, (m + 1, ys.1), n, out);
            out.extend((xs.0..xs.1).map(|x| m * n + x));
        }
    }
    let mut out = Vec::with_capacity(n * n);
    dissect((1, n), (1, n), n, &mut out);
    out.extend(1..n);
    out.extend((1..n).map(|y| y * n));
    out.push(0);
    out
}

/// Reusable homogenization operator for square cells of a fixed resolution.
///
/// The sparsity pattern and symbolic factorization depend only on the
/// resolution, so one instance serves every bitmap of that size and may be
/// shared across threads.
pub struct Homogenizer {
    n: usize,
    nu: f64,
    void_ratio: f64,
    k0: Mat8,
    /// Per-element local index pairs `(a, b)` that land in the stored triangle.
    local: Vec<(u8, u8)>,
    /// Start offset of each element's block in `local`.
    offsets: Vec<usize>,
    /// Equation number of each local DOF of each element (`usize::MAX` for pinned).
    dofs: Vec<[usize; 8]>,
    pattern: AssemblyPattern,
    analysis: CholeskyAnalysis,
}

impl Homogenizer {
    pub fn new(resolution: usize, poisson_ratio: f64, void_ratio: f64) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::DegenerateCell(format!("resolution {resolution} below 2")));
        }
        if !(void_ratio > 0.0 && void_ratio <= 1e-6) {
            return Err(Error::Invalid(format!("void stiffness ratio {void_ratio} outside (0, 1e-6]")));
        }
        if !(0.0..0.5).contains(&poisson_ratio) {
            return Err(Error::Invalid(format!("Poisson ratio {poisson_ratio} outside [0, 0.5)")));
        }
        let n = resolution;
        let d = StiffnessTensor::isotropic_plane_stress(1.0, poisson_ratio).matrix();
        let k0 = element::stiffness(&d, 1.0, 1.0);
        let node = |x: usize, y: usize| (y % n) * n + (x % n);
        let eq = |nd: usize, comp: usize| {
            if nd == 0 {
                usize::MAX
            } else {
                2 * nd - 2 + comp
            }
        };
        let mut dofs = Vec::with_capacity(n * n);
        let mut local = Vec::new();
        let mut offsets = Vec::with_capacity(n * n + 1);
        let mut pairs = Vec::new();
        for ey in 0..n {
            for ex in 0..n {
                let nodes = [node(ex, ey), node(ex + 1, ey), node(ex + 1, ey + 1), node(ex, ey + 1)];
                let el: [usize; 8] = std::array::from_fn(|a| eq(nodes[a / 2], a % 2));
                offsets.push(local.len());
                for a in 0..8 {
                    for b in 0..8 {
                        let (r, c) = (el[a], el[b]);
                        if r != usize::MAX && c != usize::MAX && r >= c {
                            local.push((a as u8, b as u8));
                            pairs.push((r, c));
                        }
                    }
                }
                dofs.push(el);
            }
        }
        offsets.push(local.len());
        let dim = 2 * n * n - 2;
        let pattern = AssemblyPattern::new(dim, &pairs)?;
        let ordering: Vec<usize> = torus_node_ordering(n)
            .into_iter()
            .filter(|&nd| nd != 0)
            .flat_map(|nd| [2 * nd - 2, 2 * nd - 1])
            .collect();
        let probe = pattern.fill(&vec![1.0; pairs.len()])?;
        let analysis = CholeskyAnalysis::new(&probe, Some(&ordering))?;
        Ok(Self {
            n,
            nu: poisson_ratio,
            void_ratio,
            k0,
            local,
            offsets,
            dofs,
            pattern,
            analysis,
        })
    }

    pub fn for_material(resolution: usize, material: &BaseMaterial) -> Result<Self> {
        Self::new(resolution, material.poisson_ratio, DEFAULT_VOID_RATIO)
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn poisson_ratio(&self) -> f64 {
        self.nu
    }

    fn element_moduli(&self, bitmap: &Bitmap) -> Vec<f64> {
        bitmap
            .as_slice()
            .iter()
            .map(|&s| if s != 0 { 1.0 } else { self.void_ratio })
            .collect()
    }

    fn assemble(&self, moduli: &[f64]) -> Result<SymmetricCsc> {
        let mut values = Vec::with_capacity(self.local.len());
        for (e, &m) in moduli.iter().enumerate() {
            for &(a, b) in &self.local[self.offsets[e]..self.offsets[e + 1]] {
                values.push(m * self.k0[a as usize][b as usize]);
            }
        }
        self.pattern.fill(&values)
    }

    /// Effective stiffness normalized by the solid Young's modulus.
    pub fn homogenize_normalized(&self, bitmap: &Bitmap) -> Result<StiffnessTensor> {
        if bitmap.width() != self.n || bitmap.height() != self.n {
            return Err(Error::Dimension(format!(
                "bitmap {}x{} does not match homogenizer resolution {}",
                bitmap.width(),
                bitmap.height(),
                self.n
            )));
        }
        let moduli = self.element_moduli(bitmap);
        let k = self.assemble(&moduli)?;
        let chol: Cholesky = self
            .analysis
            .factorize(&k)
            .map_err(|e| Error::DegenerateCell(format!("periodic system not positive definite: {e}")))?;

        let w = unit_strain_fields();
        let dim = k.dim();
        let mut f = Mat::<f64>::zeros(dim, 3);
        for (e, el) in self.dofs.iter().enumerate() {
            for (case, we) in w.iter().enumerate() {
                for a in 0..8 {
                    if el[a] == usize::MAX {
                        continue;
                    }
                    let s: f64 = (0..8).map(|b| self.k0[a][b] * we[b]).sum();
                    f[(el[a], case)] -= moduli[e] * s;
                }
            }
        }
        let chi = solve_refined(&k, &chol, &f)?;

        let mut c = [[0.0; 3]; 3];
        for (e, el) in self.dofs.iter().enumerate() {
            let fields: [[f64; 8]; 3] = std::array::from_fn(|case| {
                std::array::from_fn(|a| {
                    let x = if el[a] == usize::MAX { 0.0 } else { chi[(el[a], case)] };
                    w[case][a] + x
                })
            });
            let kf: [[f64; 8]; 3] = std::array::from_fn(|j| {
                std::array::from_fn(|a| (0..8).map(|b| self.k0[a][b] * fields[j][b]).sum())
            });
            for i in 0..3 {
                for j in i..3 {
                    let v: f64 = (0..8).map(|a| fields[i][a] * kf[j][a]).sum();
                    c[i][j] += moduli[e] * v;
                }
            }
        }
        let area = (self.n * self.n) as f64;
        for i in 0..3 {
            for j in i..3 {
                c[i][j] /= area;
                c[j][i] = c[i][j];
            }
        }
        Ok(StiffnessTensor::from_matrix(&c))
    }

    /// Effective stiffness in the units of `youngs_modulus`.
    pub fn homogenize(&self, bitmap: &Bitmap, youngs_modulus: f64) -> Result<StiffnessTensor> {
        Ok(self.homogenize_normalized(bitmap)?.scaled(youngs_modulus))
    }
}

/// Direct solve followed by iterative refinement on the relative residual.
fn solve_refined(k: &SymmetricCsc, chol: &Cholesky, f: &Mat<f64>) -> Result<Mat<f64>> {
    let dim = k.dim();
    let mut x = f.clone();
    chol.solve_in_place(x.as_mut());
    for col in 0..f.ncols() {
        let b: Vec<f64> = (0..dim).map(|i| f[(i, col)]).collect();
        let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if bnorm == 0.0 {
            continue;
        }
        let mut r = vec![0.0; dim];
        for _ in 0..MAX_REFINEMENTS {
            let xc: Vec<f64> = (0..dim).map(|i| x[(i, col)]).collect();
            k.mul_vec(&xc, &mut r);
            r.iter_mut().zip(&b).for_each(|(ri, bi)| *ri = bi - *ri);
            let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if rnorm <= REFINEMENT_TOLERANCE * bnorm {
                break;
            }
            chol.solve_vec(&mut r);
            for i in 0..dim {
                x[(i, col)] += r[i];
            }
        }
    }
    Ok(x)
}

/// Convenience wrapper building a one-off [`Homogenizer`].
pub fn homogenize(bitmap: &Bitmap, material: &BaseMaterial, void_ratio: f64) -> Result<StiffnessTensor> {
    if bitmap.width() != bitmap.height() {
        return Err(Error::Dimension("homogenization needs a square cell".into()));
    }
    let h = Homogenizer::new(bitmap.width(), material.poisson_ratio, void_ratio)?;
    h.homogenize(bitmap, material.youngs_modulus)
}
