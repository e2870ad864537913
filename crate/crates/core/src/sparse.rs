//! Compressed sparse column storage for the affine term matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// General CSC matrix with sorted, duplicate-free row indices per column.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    nrows: usize,
    ncols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CscMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut counts = vec![0usize; ncols + 1];
        for &(r, c, _) in triplets {
            if r >= nrows || c >= ncols {
                return Err(Error::Dimension(format!("entry ({r}, {c}) outside {nrows}x{ncols}")));
            }
            counts[c + 1] += 1;
        }
        for c in 0..ncols {
            counts[c + 1] += counts[c];
        }
        let mut fill = counts.clone();
        let mut rows = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            rows[fill[c]] = r;
            vals[fill[c]] = v;
            fill[c] += 1;
        }
        let mut col_ptr = Vec::with_capacity(ncols + 1);
        let mut row_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        col_ptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for c in 0..ncols {
            scratch.clear();
            scratch.extend((counts[c]..counts[c + 1]).map(|p| (rows[p], vals[p])));
            scratch.sort_by_key(|&(r, _)| r);
            for &(r, v) in &scratch {
                if row_idx.len() > col_ptr[c] && *row_idx.last().unwrap() == r {
                    *values.last_mut().unwrap() += v;
                } else {
                    row_idx.push(r);
                    values.push(v);
                }
            }
            col_ptr.push(row_idx.len());
        }
        Ok(Self { nrows, ncols, col_ptr, row_idx, values })
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut t = Vec::new();
        for c in 0..m.ncols() {
            for r in 0..m.nrows() {
                if m[(r, c)] != 0.0 {
                    t.push((r, c, m[(r, c)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), &t).expect("in-range triplets")
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            col_ptr: (0..=n).collect(),
            row_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(row, value)` pairs of column `c`.
    pub fn col(&self, c: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.col_ptr[c]..self.col_ptr[c + 1];
        self.row_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.ncols).flat_map(move |c| self.col(c).map(move |(r, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let range = self.col_ptr[c]..self.col_ptr[c + 1];
        match self.row_idx[range.clone()].binary_search(&r) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<_> = self.triplets().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, &t).expect("in-range triplets")
    }

    /// `y += alpha * self * x`
    pub fn mul_vec_acc(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        for c in 0..self.ncols {
            let xc = alpha * x[c];
            if xc != 0.0 {
                for (r, v) in self.col(c) {
                    y[r] += v * xc;
                }
            }
        }
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.nrows);
        self.mul_vec_acc(1.0, x.as_slice(), y.as_mut_slice());
        y
    }

    pub fn mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = DMatrix::zeros(self.nrows, x.ncols());
        for j in 0..x.ncols() {
            let xc: Vec<f64> = x.column(j).iter().copied().collect();
            let mut yc = vec![0.0; self.nrows];
            self.mul_vec_acc(1.0, &xc, &mut yc);
            y.column_mut(j).copy_from_slice(&yc);
        }
        y
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> f64 {
        (0..self.ncols).map(|c| self.col(c).map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    /// `Σ coeffs[i] * mats[i]` over the union sparsity pattern.
    pub fn linear_combination(coeffs: &[f64], mats: &[&CscMatrix]) -> Result<CscMatrix> {
        let (nrows, ncols) = match mats.first() {
            Some(m) => (m.nrows, m.ncols),
            None => return Err(Error::Dimension("empty linear combination".into())),
        };
        if mats.iter().any(|m| m.nrows != nrows || m.ncols != ncols) {
            return Err(Error::Dimension("terms of different shapes".into()));
        }
        let mut t = Vec::with_capacity(mats.iter().map(|m| m.nnz()).sum());
        for (&a, m) in coeffs.iter().zip(mats) {
            t.extend(m.triplets().map(|(r, c, v)| (r, c, a * v)));
        }
        CscMatrix::from_triplets(nrows, ncols, &t)
    }
}

/// Square CSC matrix that is exactly symmetric (both triangles stored).
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricSparseMatrix(CscMatrix);

impl SymmetricSparseMatrix {
    /// Relative tolerance for accepting a nearly symmetric input.
    pub const SYMMETRY_TOL: f64 = 1e-12;

    /// Checks `|M - M^T|_max <= 1e-12 |M|_max` and stores `(M + M^T) / 2`.
    pub fn new(m: CscMatrix) -> Result<Self> {
        if m.nrows != m.ncols {
            return Err(Error::Dimension(format!("matrix is {}x{}, expected square", m.nrows, m.ncols)));
        }
        let mt = m.transpose();
        let diff = CscMatrix::linear_combination(&[1.0, -1.0], &[&m, &mt])?;
        let scale = m.max_abs();
        if diff.max_abs() > Self::SYMMETRY_TOL * scale {
            return Err(Error::Config(format!(
                "matrix is not symmetric: |M - M^T|_max = {:e}, |M|_max = {:e}",
                diff.max_abs(),
                scale
            )));
        }
        let sym = CscMatrix::linear_combination(&[0.5, 0.5], &[&m, &mt])?;
        Ok(Self(sym))
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Result<Self> {
        Self::new(CscMatrix::from_dense(m))
    }

    pub fn identity(n: usize) -> Self {
        Self(CscMatrix::identity(n))
    }

    pub fn n(&self) -> usize {
        self.0.nrows
    }

    pub fn csc(&self) -> &CscMatrix {
        &self.0
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.0.to_dense()
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        self.0.mul_vec(x)
    }

    pub fn mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.0.mul_dense(x)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.max_abs()
    }

    pub fn norm1(&self) -> f64 {
        self.0.norm1()
    }

    /// Linear combinations of symmetric matrices stay symmetric.
    pub fn linear_combination(coeffs: &[f64], mats: &[&SymmetricSparseMatrix]) -> Result<Self> {
        let inner: Vec<&CscMatrix> = mats.iter().map(|m| &m.0).collect();
        CscMatrix::linear_combination(coeffs, &inner).map(Self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates_and_sort() {
        let m = CscMatrix::from_triplets(3, 2, &[(2, 0, 1.0), (0, 0, 2.0), (2, 0, 3.0), (1, 1, -1.0)]).unwrap();
        assert_eq!(m.col_ptr(), &[0, 2, 3]);
        assert_eq!(m.row_idx(), &[0, 2, 1]);
        assert_eq!(m.values(), &[2.0, 4.0, -1.0]);
        assert_eq!(m.get(2, 0), 4.0);
        assert_eq!(m.get(1, 0), 0.0);
    }

    #[test]
    fn out_of_range_triplet_is_rejected() {
        assert!(CscMatrix::from_triplets(2, 2, &[(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn symmetric_check_and_symmetrization() {
        let slight = CscMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (1, 0, 1.0 + 1e-14)]).unwrap();
        let s = SymmetricSparseMatrix::new(slight).unwrap();
        assert_eq!(s.csc().get(0, 1), s.csc().get(1, 0));

        let skew = CscMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (1, 0, 1.1)]).unwrap();
        assert!(SymmetricSparseMatrix::new(skew).is_err());
    }

    #[test]
    fn matvec_matches_dense() {
        let d = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, -2.0, 0.0, -2.0, 5.0]);
        let s = SymmetricSparseMatrix::from_dense(&d).unwrap();
        let x = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        assert_eq!(s.mul_vec(&x), &d * &x);
        let xs = DMatrix::from_fn(3, 2, |i, j| (i + 2 * j) as f64);
        assert_eq!(s.mul_dense(&xs), &d * &xs);
        assert_eq!(s.norm1(), 7.0);
    }
}
