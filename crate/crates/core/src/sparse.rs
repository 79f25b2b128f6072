//! Compressed symmetric matrices and a sparse Cholesky wrapper.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMat, SymbolicSparseColMat};
use faer::{Mat, Side};
use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Symmetric matrix in compressed-row form with both triangles stored and
/// sorted column indices. Since it is symmetric the same arrays also describe
/// the compressed-column form.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricSparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SymmetricSparseMatrix {
    /// Sums duplicate entries. Both `(i, j)` and `(j, i)` must be supplied.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0; n + 1];
        let mut cols = Vec::with_capacity(triplets.len() / 2);
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len() / 2);
        let mut last = None;
        for (i, j, v) in triplets {
            assert!(i < n && j < n, "triplet ({i}, {j}) outside {n}x{n}");
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(j);
                vals.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        SymmetricSparseMatrix { n, row_ptr, cols, vals }
    }

    pub fn zeros_like(&self) -> Self {
        SymmetricSparseMatrix { vals: vec![0.0; self.vals.len()], ..self.clone() }
    }

    pub fn identity(n: usize) -> Self {
        SymmetricSparseMatrix { n, row_ptr: (0..=n).collect(), cols: (0..n).collect(), vals: vec![1.0; n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.vals
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => 0.0,
        }
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.dim()).map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn same_pattern(&self, other: &Self) -> bool {
        self.n == other.n && self.row_ptr == other.row_ptr && self.cols == other.cols
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        (0..self.n).map(|i| x[i] * self.row(i).map(|(j, v)| v * y[j]).sum::<f64>()).sum()
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.bilinear(x, x)
    }

    pub fn scaled(&self, a: f64) -> Self {
        SymmetricSparseMatrix { vals: self.vals.iter().map(|v| a * v).collect(), ..self.clone() }
    }

    /// `Σ c_k A_k`; matrices sharing a pattern are combined value-wise.
    pub fn linear_combination(terms: &[(f64, &SymmetricSparseMatrix)]) -> Self {
        let (_, first) = terms[0];
        if terms.iter().all(|(_, m)| m.same_pattern(first)) {
            let mut vals = vec![0.0; first.vals.len()];
            for (c, m) in terms {
                for (v, w) in vals.iter_mut().zip(&m.vals) {
                    *v += c * w;
                }
            }
            return SymmetricSparseMatrix { vals, ..first.clone() };
        }
        let mut triplets = Vec::new();
        for (c, m) in terms {
            assert_eq!(m.n, first.n, "dimension mismatch in linear combination");
            for i in 0..m.n {
                triplets.extend(m.row(i).map(|(j, v)| (i, j, c * v)));
            }
        }
        Self::from_triplets(first.n, triplets)
    }

    /// Adds `d[i]` to each diagonal entry; the pattern must contain the diagonal.
    pub fn add_diagonal(&mut self, d: &[f64]) {
        for (i, di) in d.iter().enumerate() {
            let r = self.row_ptr[i]..self.row_ptr[i + 1];
            let k = self.cols[r.clone()].binary_search(&i).expect("diagonal entry missing from pattern");
            self.vals[r.start + k] += di;
        }
    }

    /// Principal submatrix on `dofs` (sorted ascending).
    pub fn restrict(&self, dofs: &[usize]) -> Self {
        let mut local = vec![usize::MAX; self.n];
        for (k, &d) in dofs.iter().enumerate() {
            local[d] = k;
        }
        let mut row_ptr = Vec::with_capacity(dofs.len() + 1);
        row_ptr.push(0);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for &d in dofs {
            for (j, v) in self.row(d) {
                if local[j] != usize::MAX {
                    cols.push(local[j]);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        SymmetricSparseMatrix { n: dofs.len(), row_ptr, cols, vals }
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, v)| self.get(j, i) == v))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                d[(i, j)] = v;
            }
        }
        d
    }

    fn to_faer(&self) -> SparseColMat<usize, f64> {
        let symbolic = SymbolicSparseColMat::new_checked(self.n, self.n, self.row_ptr.clone(), None, self.cols.clone());
        SparseColMat::new(symbolic, self.vals.clone())
    }
}

/// Sparse `LLᵀ` factorization. Factoring doubles as the positive-definiteness
/// test: a non-positive pivot is reported as [`Error::NotPositiveDefinite`].
#[derive(Debug, Clone)]
pub struct Cholesky {
    symbolic: SymbolicLlt<usize>,
    llt: Llt<usize, f64>,
    n: usize,
}

impl Cholesky {
    pub fn factor(a: &SymmetricSparseMatrix) -> Result<Self> {
        let m = a.to_faer();
        let symbolic = SymbolicLlt::try_new(m.symbolic(), Side::Lower)
            .map_err(|e| Error::NotPositiveDefinite(format!("symbolic analysis failed: {e:?}")))?;
        Self::numeric(symbolic, &m, a.n)
    }

    /// Factors a matrix with the same pattern as the one this factorization
    /// was built from, reusing the symbolic analysis.
    pub fn refactor(&self, a: &SymmetricSparseMatrix) -> Result<Self> {
        Self::numeric(self.symbolic.clone(), &a.to_faer(), a.n)
    }

    fn numeric(symbolic: SymbolicLlt<usize>, m: &SparseColMat<usize, f64>, n: usize) -> Result<Self> {
        let llt = Llt::try_new_with_symbolic(symbolic.clone(), m.as_ref(), Side::Lower)
            .map_err(|e| Error::NotPositiveDefinite(format!("{e:?}")))?;
        Ok(Cholesky { symbolic, llt, n })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let mut rhs = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        self.llt.solve_in_place(rhs.as_mut());
        for (i, bi) in b.iter_mut().enumerate() {
            *bi = rhs[(i, 0)];
        }
    }

    /// Solves for every column of the `n × k` column-major block in place.
    pub fn solve_block(&self, block: &mut [f64], k: usize) {
        assert_eq!(block.len(), self.n * k);
        let mut rhs = Mat::<f64>::from_fn(self.n, k, |i, j| block[j * self.n + i]);
        self.llt.solve_in_place(rhs.as_mut());
        for j in 0..k {
            for i in 0..self.n {
                block[j * self.n + i] = rhs[(i, j)];
            }
        }
    }
}
