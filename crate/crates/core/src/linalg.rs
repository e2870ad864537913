//! Assembled operators (dense below a size threshold, sparse above) and the
//! factorizations used by the eigensolver and the derivative systems.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};

use crate::error::{Error, Result};
use crate::lu::{PivotPolicy, SparseLu};
use crate::sparse::SymmetricSparseMatrix;

/// Problems with `n` at or below this size use dense algebra throughout.
pub const DEFAULT_DENSE_THRESHOLD: usize = 256;

/// A symmetric matrix in whichever storage the problem size calls for.
#[derive(Debug, Clone, PartialEq)]
pub enum Operator {
    Dense(DMatrix<f64>),
    Sparse(SymmetricSparseMatrix),
}

impl Operator {
    pub fn n(&self) -> usize {
        match self {
            Operator::Dense(m) => m.nrows(),
            Operator::Sparse(m) => m.n(),
        }
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Operator::Dense(m) => m * x,
            Operator::Sparse(m) => m.mul_vec(x),
        }
    }

    pub fn mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Operator::Dense(m) => m * x,
            Operator::Sparse(m) => m.mul_dense(x),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Operator::Dense(m) => m.clone(),
            Operator::Sparse(m) => m.to_dense(),
        }
    }

    /// `x^T M y`
    pub fn bilinear(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        x.dot(&self.mul_vec(y))
    }

    pub fn norm1(&self) -> f64 {
        match self {
            Operator::Dense(m) => m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max),
            Operator::Sparse(m) => m.norm1(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        match self {
            Operator::Dense(m) => m.amax(),
            Operator::Sparse(m) => m.max_abs(),
        }
    }

    /// `alpha * self + beta * other`, keeping the storage kind of `self`.
    pub fn combine(&self, alpha: f64, other: &Operator, beta: f64) -> Result<Operator> {
        if self.n() != other.n() {
            return Err(Error::Dimension(format!("combining {}x{} with {}x{}", self.n(), self.n(), other.n(), other.n())));
        }
        Ok(match (self, other) {
            (Operator::Sparse(a), Operator::Sparse(b)) => {
                Operator::Sparse(SymmetricSparseMatrix::linear_combination(&[alpha, beta], &[a, b])?)
            }
            _ => Operator::Dense(self.to_dense() * alpha + other.to_dense() * beta),
        })
    }
}

#[derive(Debug, Clone)]
pub enum Factorization {
    Cholesky(Cholesky<f64, Dyn>),
    Lu { lu: LU<f64, Dyn, Dyn>, pivot_ratio: f64 },
    Sparse(SparseLu),
}

impl Factorization {
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        match self {
            Factorization::Cholesky(c) => c.solve(b),
            Factorization::Lu { lu, .. } => lu.solve(b).expect("factorization checked nonsingular"),
            Factorization::Sparse(lu) => DVector::from_vec(lu.solve(b.as_slice())),
        }
    }

    /// Largest over smallest pivot magnitude (a lower bound on the
    /// condition number).
    pub fn pivot_ratio(&self) -> f64 {
        match self {
            Factorization::Cholesky(c) => {
                let d = c.l_dirty().diagonal();
                let (lo, hi) = d.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v.abs()), hi.max(v.abs())));
                (hi / lo).powi(2)
            }
            Factorization::Lu { pivot_ratio, .. } => *pivot_ratio,
            Factorization::Sparse(lu) => lu.pivot_ratio(),
        }
    }
}

/// Factor a symmetric matrix that must be positive definite; fails with
/// `NotPositiveDefinite` otherwise.
pub fn factor_spd(m: &Operator, context: &str) -> Result<Factorization> {
    let not_pd = || Error::NotPositiveDefinite { context: context.to_string() };
    match m {
        Operator::Dense(d) => Cholesky::new(d.clone()).map(Factorization::Cholesky).ok_or_else(not_pd),
        Operator::Sparse(s) => match SparseLu::factor(s.csc(), PivotPolicy::Diagonal) {
            Ok(lu) if lu.all_pivots_positive() => Ok(Factorization::Sparse(lu)),
            _ => Err(not_pd()),
        },
    }
}

/// Dense LU with partial pivoting; rejects matrices singular to working
/// precision.
pub fn factor_dense_lu(m: DMatrix<f64>, context: &str) -> Result<Factorization> {
    let n = m.nrows();
    let scale = m.amax();
    let lu = LU::new(m);
    let u = lu.u();
    let (lo, hi) = u.diagonal().iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v.abs()), hi.max(v.abs())));
    if n > 0 && (lo <= (n as f64) * f64::EPSILON * scale || !lo.is_finite()) {
        return Err(Error::Singular { context: format!("{context}: smallest pivot {lo:e}") });
    }
    Ok(Factorization::Lu { lu, pivot_ratio: if n == 0 { 1.0 } else { hi / lo } })
}

/// Smallest eigenvalues and `B`-orthonormal eigenvectors of a dense
/// symmetric-definite pair via `B = L L^T` and a symmetric eigensolve of
/// `L^-1 A L^-T`. Values ascending; each vector's largest-magnitude entry
/// is made positive.
pub fn dense_generalized_eigen(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    if a.shape() != b.shape() || a.ncols() != n {
        return Err(Error::Dimension(format!("pencil of shapes {:?} and {:?}", a.shape(), b.shape())));
    }
    let chol = Cholesky::new(b.clone()).ok_or_else(|| Error::NotPositiveDefinite { context: "B in dense eigensolve".into() })?;
    let l = chol.l();
    let y = l.solve_lower_triangular(a).ok_or_else(|| Error::Singular { context: "Cholesky factor".into() })?;
    let c = l
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| Error::Singular { context: "Cholesky factor".into() })?;
    let c = (&c + c.transpose()) * 0.5;
    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let q = DMatrix::from_fn(n, n, |r, k| eig.eigenvectors[(r, order[k])]);
    let mut x = l.tr_solve_lower_triangular(&q).ok_or_else(|| Error::Singular { context: "Cholesky factor".into() })?;
    for mut col in x.column_iter_mut() {
        fix_sign(col.as_mut_slice());
    }
    Ok((values, x))
}

/// Flip sign so the largest-magnitude entry (first one on ties) is positive.
pub fn fix_sign(v: &mut [f64]) {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for &e in v.iter() {
        if e.abs() > best {
            best = e.abs();
            sign = e.signum();
        }
    }
    if sign < 0.0 {
        v.iter_mut().for_each(|e| *e = -*e);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generalized_eigen_diagonal() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 2.0]));
        let b = DMatrix::identity(3, 3);
        let (vals, x) = dense_generalized_eigen(&a, &b).unwrap();
        assert_eq!(vals.len(), 3);
        for (v, e) in vals.iter().zip([1.0, 2.0, 3.0]) {
            assert!((v - e).abs() < 1e-14);
        }
        assert!((x[(1, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn spd_factor_rejects_indefinite() {
        let m = Operator::Dense(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]));
        assert!(matches!(factor_spd(&m, "test"), Err(Error::NotPositiveDefinite { .. })));
        let s = Operator::Sparse(SymmetricSparseMatrix::from_dense(&m.to_dense()).unwrap());
        assert!(matches!(factor_spd(&s, "test"), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn dense_lu_rejects_singular() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(factor_dense_lu(m, "test"), Err(Error::Singular { .. })));
    }

    #[test]
    fn combine_keeps_symmetry() {
        let a = SymmetricSparseMatrix::from_dense(&DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0])).unwrap();
        let b = SymmetricSparseMatrix::identity(2);
        let c = Operator::Sparse(a).combine(1.0, &Operator::Sparse(b), -0.5).unwrap();
        assert_eq!(c.to_dense(), DMatrix::from_row_slice(2, 2, &[1.5, 1.0, 1.0, 2.5]));
    }
}
