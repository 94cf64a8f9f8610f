//! Symmetric sparse matrices stored by their lower triangle, and a reusable
//! supernodal Cholesky factorization (backed by `faer`).

use std::sync::Arc;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::perm::PermRef;
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, LltRef, SymbolicCholesky, SymmetricOrdering,
};
use faer::sparse::{Argsort, Pair, SparseColMat, SymbolicSparseColMat, Triplet};
use faer::{Conj, MatMut, Par, Side};

use crate::error::{Error, Result};

/// Symmetric matrix holding only entries with `row >= col`.
#[derive(Clone, Debug)]
pub struct SymmetricCsc {
    mat: SparseColMat<usize, f64>,
}

impl SymmetricCsc {
    /// Entries may be given in either triangle; duplicates are summed.
    pub fn from_triplets(dim: usize, entries: &[(usize, usize, f64)]) -> Result<Self> {
        let trip: Vec<Triplet<usize, usize, f64>> = entries
            .iter()
            .map(|&(r, c, v)| {
                let (r, c) = if r >= c { (r, c) } else { (c, r) };
                Triplet::new(r, c, v)
            })
            .collect();
        let mat = SparseColMat::try_new_from_triplets(dim, dim, &trip)
            .map_err(|e| Error::Dimension(format!("{e:?}")))?;
        Ok(Self { mat })
    }

    pub(crate) fn from_faer(mat: SparseColMat<usize, f64>) -> Self {
        debug_assert!(mat.symbolic().col_nnz().is_none());
        Self { mat }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn nnz(&self) -> usize {
        self.mat.val().len()
    }

    pub(crate) fn faer(&self) -> &SparseColMat<usize, f64> {
        &self.mat
    }

    /// Iterate `(row, col, value)` over the stored lower triangle.
    pub fn lower_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let cp = self.mat.symbolic().col_ptr();
        let ri = self.mat.symbolic().row_idx();
        let val = self.mat.val();
        (0..self.dim()).flat_map(move |j| (cp[j]..cp[j + 1]).map(move |k| (ri[k], j, val[k])))
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let (r, c) = if row >= col { (row, col) } else { (col, row) };
        self.mat.as_ref().get(r, c).copied().unwrap_or(0.0)
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        self.mul_vec_add(x, y);
    }

    /// `y += A x`
    pub fn mul_vec_add(&self, x: &[f64], y: &mut [f64]) {
        let cp = self.mat.symbolic().col_ptr();
        let ri = self.mat.symbolic().row_idx();
        let val = self.mat.val();
        for j in 0..self.dim() {
            let xj = x[j];
            let mut acc = 0.0;
            for k in cp[j]..cp[j + 1] {
                let i = ri[k];
                let a = val[k];
                y[i] += a * xj;
                if i != j {
                    acc += a * x[i];
                }
            }
            y[j] += acc;
        }
    }

    /// `x^T A x`
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let mut y = vec![0.0; self.dim()];
        self.mul_vec(x, &mut y);
        x.iter().zip(&y).map(|(a, b)| a * b).sum()
    }

    /// `self + alpha * other`, pattern union.
    pub fn add_scaled(&self, alpha: f64, other: &SymmetricCsc) -> Result<Self> {
        let entries: Vec<_> = self
            .lower_entries()
            .chain(other.lower_entries().map(|(r, c, v)| (r, c, alpha * v)))
            .collect();
        Self::from_triplets(self.dim(), &entries)
    }

    /// Frobenius norm of the full symmetric matrix.
    pub fn frobenius_norm(&self) -> f64 {
        self.lower_entries()
            .map(|(r, c, v)| if r == c { v * v } else { 2.0 * v * v })
            .sum::<f64>()
            .sqrt()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut d = vec![vec![0.0; n]; n];
        for (r, c, v) in self.lower_entries() {
            d[r][c] += v;
            if r != c {
                d[c][r] += v;
            }
        }
        d
    }
}

/// A fixed lower-triangular sparsity pattern that can be refilled cheaply from
/// a list of contributions given in a fixed order.
#[derive(Clone, Debug)]
pub struct AssemblyPattern {
    symbolic: SymbolicSparseColMat<usize>,
    argsort: Argsort<usize>,
    contributions: usize,
}

impl AssemblyPattern {
    /// `pairs` are `(row, col)` with `row >= col`, in the order values will be supplied.
    pub fn new(dim: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let idx: Vec<Pair<usize, usize>> = pairs.iter().map(|&(r, c)| Pair::new(r, c)).collect();
        let (symbolic, argsort) = SymbolicSparseColMat::try_new_from_indices(dim, dim, &idx)
            .map_err(|e| Error::Dimension(format!("{e:?}")))?;
        Ok(Self {
            symbolic,
            argsort,
            contributions: pairs.len(),
        })
    }

    pub fn fill(&self, values: &[f64]) -> Result<SymmetricCsc> {
        if values.len() != self.contributions {
            return Err(Error::Dimension(format!(
                "expected {} contributions, got {}",
                self.contributions,
                values.len()
            )));
        }
        let mat = SparseColMat::new_from_argsort(self.symbolic.clone(), &self.argsort, values)
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        Ok(SymmetricCsc::from_faer(mat))
    }
}

/// Symbolic analysis shared by every matrix with the same pattern.
#[derive(Clone, Debug)]
pub struct CholeskyAnalysis {
    symbolic: Arc<SymbolicCholesky<usize>>,
}

impl CholeskyAnalysis {
    /// `ordering` is a fill-reducing permutation (new position -> old index);
    /// `None` selects approximate minimum degree.
    pub fn new(matrix: &SymmetricCsc, ordering: Option<&[usize]>) -> Result<Self> {
        let n = matrix.dim();
        let symbolic = match ordering {
            Some(perm) => {
                if perm.len() != n {
                    return Err(Error::Dimension("ordering length".into()));
                }
                let mut inv = vec![usize::MAX; n];
                for (i, &p) in perm.iter().enumerate() {
                    if p >= n || inv[p] != usize::MAX {
                        return Err(Error::Invalid("ordering is not a permutation".into()));
                    }
                    inv[p] = i;
                }
                let perm_ref = PermRef::new_checked(perm, &inv, n);
                factorize_symbolic_cholesky(
                    matrix.faer().symbolic(),
                    Side::Lower,
                    SymmetricOrdering::Custom(perm_ref),
                    Default::default(),
                )
            }
            None => factorize_symbolic_cholesky(
                matrix.faer().symbolic(),
                Side::Lower,
                SymmetricOrdering::Amd,
                Default::default(),
            ),
        }
        .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        Ok(Self {
            symbolic: Arc::new(symbolic),
        })
    }

    pub fn factor_nnz(&self) -> usize {
        self.symbolic.len_val()
    }

    pub fn factorize(&self, matrix: &SymmetricCsc) -> Result<Cholesky> {
        let sym = &self.symbolic;
        let mut values = vec![0.0f64; sym.len_val()];
        let req = sym.factorize_numeric_llt_scratch::<f64>(Par::Seq, Default::default());
        let mut mem = MemBuffer::new(req);
        sym.factorize_numeric_llt(
            &mut values,
            matrix.faer().as_ref(),
            Side::Lower,
            Default::default(),
            Par::Seq,
            MemStack::new(&mut mem),
            Default::default(),
        )
        .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        Ok(Cholesky {
            symbolic: Arc::clone(&self.symbolic),
            values,
        })
    }
}

/// Numeric Cholesky factor `A = L L^T`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    symbolic: Arc<SymbolicCholesky<usize>>,
    values: Vec<f64>,
}

impl Cholesky {
    /// One-shot analysis and factorization.
    pub fn new(matrix: &SymmetricCsc, ordering: Option<&[usize]>) -> Result<Self> {
        CholeskyAnalysis::new(matrix, ordering)?.factorize(matrix)
    }

    pub fn dim(&self) -> usize {
        self.symbolic.nrows()
    }

    /// Overwrite each column of `rhs` with `A^{-1}` times it.
    pub fn solve_in_place(&self, rhs: MatMut<'_, f64>) {
        let req = self.symbolic.solve_in_place_scratch::<f64>(rhs.ncols(), Par::Seq);
        let mut mem = MemBuffer::new(req);
        LltRef::new(&self.symbolic, &self.values).solve_in_place_with_conj(
            Conj::No,
            rhs,
            Par::Seq,
            MemStack::new(&mut mem),
        );
    }

    pub fn solve_vec(&self, b: &mut [f64]) {
        let n = b.len();
        self.solve_in_place(MatMut::from_column_major_slice_mut(b, n, 1));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian(n: usize) -> SymmetricCsc {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i + 1, i, -1.0));
            }
        }
        SymmetricCsc::from_triplets(n, &t).unwrap()
    }

    #[test]
    fn matvec_uses_both_triangles() {
        let a = laplacian(4);
        let mut y = vec![0.0; 4];
        a.mul_vec(&[1.0, 2.0, 3.0, 4.0], &mut y);
        assert_eq!(y, vec![0.0, 0.0, 0.0, 5.0]);
        assert_eq!(a.get(0, 1), -1.0);
    }

    #[test]
    fn cholesky_solves_with_custom_ordering() {
        let a = laplacian(6);
        let x: Vec<f64> = (0..6).map(|i| i as f64 - 1.5).collect();
        let mut b = vec![0.0; 6];
        a.mul_vec(&x, &mut b);
        for ordering in [None, Some(vec![5, 0, 4, 1, 3, 2])] {
            let chol = Cholesky::new(&a, ordering.as_deref()).unwrap();
            let mut sol = b.clone();
            chol.solve_vec(&mut sol);
            for (s, e) in sol.iter().zip(&x) {
                assert!((s - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn indefinite_matrix_fails_to_factor() {
        let a = SymmetricCsc::from_triplets(2, &[(0, 0, 1.0), (1, 0, 2.0), (1, 1, 1.0)]).unwrap();
        assert!(Cholesky::new(&a, None).is_err());
    }

    #[test]
    fn pattern_refill_sums_duplicates() {
        let pat = AssemblyPattern::new(2, &[(0, 0), (1, 0), (0, 0), (1, 1)]).unwrap();
        let m = pat.fill(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m.get(0, 0), 4.0);
        assert_eq!(m.get(0, 1), 2.0);
        assert!(pat.fill(&[1.0]).is_err());
    }
}
