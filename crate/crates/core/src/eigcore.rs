//! Smallest eigenpairs of a symmetric-definite pencil at one parameter point.
//!
//! Two paths: a dense one (Cholesky reduction to a standard symmetric
//! eigenproblem) and shift-invert Lanczos on `(A - σB)^-1 B` in the
//! `B`-inner product with full reorthogonalization and explicit restarts.
//! The Lanczos path extracts Ritz pairs by Rayleigh-Ritz on `(A, B)`, so Ritz
//! values never undercut the true eigenvalues.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dense_generalized_eigen, factor_spd, fix_sign, Factorization, Operator};

/// Largest `n` accepted by [`full_spectrum`].
pub const ORACLE_CAP: usize = 500;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverMode {
    Dense,
    ShiftInvert,
    /// Dense for dense operators, shift-invert for sparse ones.
    #[default]
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EigOptions {
    pub mode: SolverMode,
    /// Relative residual target `‖Ax - λBx‖ <= tol (‖A‖₁ + |λ| ‖B‖₁)`.
    pub tol: f64,
    pub max_restarts: usize,
    /// Krylov dimension; `max(20, m + 15)` when unset.
    pub krylov_dim: Option<usize>,
    /// Initial shift. Retried at `-‖A‖₁` and then doubled while
    /// `A - σB` is not positive definite.
    pub shift: f64,
    pub seed: u64,
}

impl Default for EigOptions {
    fn default() -> Self {
        Self { mode: SolverMode::Auto, tol: 1e-10, max_restarts: 300, krylov_dim: None, shift: 0.0, seed: 0x5eed }
    }
}

#[derive(Debug, Clone)]
pub struct RitzSet {
    /// Ascending.
    pub values: Vec<f64>,
    /// `n × m`, `B`-normalized, largest entry of each column positive.
    pub vectors: DMatrix<f64>,
    pub converged: Vec<bool>,
    pub residual_norms: Vec<f64>,
    /// Euclidean-orthonormal Krylov basis of the final Lanczos cycle.
    pub krylov_basis: Option<DMatrix<f64>>,
    /// Shift actually used (0 on the dense path).
    pub shift: f64,
    pub restarts: usize,
}

impl RitzSet {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn vector(&self, i: usize) -> DVector<f64> {
        self.vectors.column(i).into_owned()
    }
}

pub fn smallest_eigpairs(a: &Operator, b: &Operator, m: usize, opts: &EigOptions) -> Result<RitzSet> {
    let n = a.n();
    if b.n() != n {
        return Err(Error::Dimension(format!("A is {n}x{n}, B is {}x{}", b.n(), b.n())));
    }
    if m == 0 || m > n {
        return Err(Error::Config(format!("requested {m} eigenpairs of an n = {n} pencil")));
    }
    let dense = match opts.mode {
        SolverMode::Dense => true,
        SolverMode::ShiftInvert => false,
        SolverMode::Auto => matches!(a, Operator::Dense(_)),
    };
    if dense {
        dense_pairs(a, b, m)
    } else {
        shift_invert(a, b, m, opts)
    }
}

fn dense_pairs(a: &Operator, b: &Operator, m: usize) -> Result<RitzSet> {
    let (values, x) = dense_generalized_eigen(&a.to_dense(), &b.to_dense())?;
    let vectors = x.columns(0, m).into_owned();
    let residual_norms = (0..m).map(|i| residual(a, b, values[i], &vectors.column(i).into_owned()).1).collect();
    Ok(RitzSet {
        values: values[..m].to_vec(),
        vectors,
        converged: vec![true; m],
        residual_norms,
        krylov_basis: None,
        shift: 0.0,
        restarts: 0,
    })
}

/// Factor `A - σB`, moving σ down until the shifted matrix is positive
/// definite (which places σ below λ₁).
fn shifted_factor(a: &Operator, b: &Operator, sigma0: f64) -> Result<(f64, Factorization)> {
    let mut sigma = sigma0;
    let anorm = a.norm1().max(f64::MIN_POSITIVE);
    for attempt in 0..16 {
        let shifted = if sigma == 0.0 { a.clone() } else { a.combine(1.0, b, -sigma)? };
        match factor_spd(&shifted, "A - sigma B") {
            Ok(f) => return Ok((sigma, f)),
            Err(Error::NotPositiveDefinite { .. }) => {}
            Err(e) => return Err(e),
        }
        let next = if attempt == 0 { -anorm } else { 2.0 * sigma };
        sigma = if next < sigma { next } else { 2.0 * sigma.min(-anorm) };
        log::debug!("A - sigma B not positive definite; retrying with sigma = {sigma:e}");
    }
    Err(Error::NotPositiveDefinite { context: format!("A - sigma B for every tried shift down to {sigma:e}") })
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5)
}

/// B-orthogonalize `w` against `q` (two passes) and normalize. Returns
/// `None` when nothing of `w` survives.
fn b_orthonormalize(w: &mut DVector<f64>, q: &[DVector<f64>], bq: &[DVector<f64>], b: &Operator) -> Option<DVector<f64>> {
    let before = w.dot(&b.mul_vec(w)).max(0.0).sqrt();
    for _ in 0..2 {
        for (qi, bqi) in q.iter().zip(bq) {
            let c = bqi.dot(w);
            w.axpy(-c, qi, 1.0);
        }
    }
    let bw = b.mul_vec(w);
    let beta = w.dot(&bw).max(0.0).sqrt();
    if !(beta > 1e-10 * before) || !beta.is_finite() {
        return None;
    }
    *w /= beta;
    Some(bw / beta)
}

fn shift_invert(a: &Operator, b: &Operator, m: usize, opts: &EigOptions) -> Result<RitzSet> {
    let n = a.n();
    let k = opts.krylov_dim.unwrap_or((m + 15).max(20)).clamp(m, n);
    let (sigma, fact) = shifted_factor(a, b, opts.shift)?;
    let (anorm, bnorm) = (a.norm1(), b.norm1());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut start = random_vector(&mut rng, n);
    let mut last_residual = f64::INFINITY;

    for restart in 0..opts.max_restarts.max(1) {
        let mut q: Vec<DVector<f64>> = Vec::with_capacity(k);
        let mut bq: Vec<DVector<f64>> = Vec::with_capacity(k);
        let mut w = start.clone();
        while q.len() < k {
            let next = match b_orthonormalize(&mut w, &q, &bq, b) {
                Some(bw) => bw,
                None => {
                    // Invariant subspace reached: continue with a fresh direction.
                    let mut fresh = None;
                    for _ in 0..3 {
                        w = random_vector(&mut rng, n);
                        if let Some(bw) = b_orthonormalize(&mut w, &q, &bq, b) {
                            fresh = Some(bw);
                            break;
                        }
                    }
                    match fresh {
                        Some(bw) => bw,
                        None => break,
                    }
                }
            };
            q.push(w.clone());
            bq.push(next);
            if q.len() < k {
                w = fact.solve(bq.last().expect("nonempty"));
            }
        }
        if q.len() < m {
            return Err(Error::NoConvergence { iterations: restart, residual: last_residual });
        }

        let qm = DMatrix::from_columns(&q);
        let bqm = DMatrix::from_columns(&bq);
        let aqm = a.mul_dense(&qm);
        let h = qm.transpose() * &aqm;
        let g = qm.transpose() * &bqm;
        let h = (&h + h.transpose()) * 0.5;
        let g = (&g + g.transpose()) * 0.5;
        let (theta, yfull) = dense_generalized_eigen(&h, &g)?;
        let y = yfull.columns(0, m).into_owned();
        let mut x = &qm * &y;
        let ax = &aqm * &y;
        let bx = &bqm * &y;
        let mut residual_norms = Vec::with_capacity(m);
        let mut converged = Vec::with_capacity(m);
        for i in 0..m {
            let r = ax.column(i) - bx.column(i) * theta[i];
            let nr = r.norm();
            residual_norms.push(nr);
            converged.push(nr <= opts.tol * (anorm + theta[i].abs() * bnorm));
        }
        last_residual = residual_norms[0] / (anorm + theta[0].abs() * bnorm);
        let exhausted = q.len() == n;
        if converged[0] || exhausted {
            for mut col in x.column_iter_mut() {
                fix_sign(col.as_mut_slice());
            }
            let krylov = qm.qr().q();
            return Ok(RitzSet {
                values: theta[..m].to_vec(),
                vectors: x,
                converged,
                residual_norms,
                krylov_basis: Some(krylov),
                shift: sigma,
                restarts: restart,
            });
        }
        // Restart from the sum of the wanted Ritz vectors.
        let keep = (m.max(2)).min(theta.len());
        start = (&qm * yfull.columns(0, keep)).column_sum();
    }
    Err(Error::NoConvergence { iterations: opts.max_restarts, residual: last_residual })
}

/// All eigenpairs, values ascending, `XᵀBX = I`. Limited to
/// `n <= ORACLE_CAP`.
pub fn full_spectrum(a: &Operator, b: &Operator) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if a.n() > ORACLE_CAP {
        return Err(Error::OracleCap { n: a.n(), cap: ORACLE_CAP });
    }
    dense_generalized_eigen(&a.to_dense(), &b.to_dense())
}

/// Scale to `x̂ᵀBx̂ = 1` and make the largest-magnitude entry positive.
pub fn b_normalize(x: &DVector<f64>, b: &Operator) -> Result<DVector<f64>> {
    let s = b.bilinear(x, x);
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::NotPositiveDefinite { context: format!("x^T B x = {s:e}") });
    }
    let mut y = x / s.sqrt();
    fix_sign(y.as_mut_slice());
    Ok(y)
}

/// `r = Ax - λBx` and `‖r‖₂`.
pub fn residual(a: &Operator, b: &Operator, lambda: f64, x: &DVector<f64>) -> (DVector<f64>, f64) {
    let r = a.mul_vec(x) - b.mul_vec(x) * lambda;
    let norm = r.norm();
    (r, norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::SymmetricSparseMatrix;

    fn random_pair(n: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        let a = &g + g.transpose();
        let h = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        let b = &h * h.transpose() + DMatrix::identity(n, n) * (n as f64);
        (a, b)
    }

    fn sparse(m: &DMatrix<f64>) -> Operator {
        Operator::Sparse(SymmetricSparseMatrix::from_dense(m).unwrap())
    }

    #[test]
    fn identity_pencil() {
        let i = Operator::Dense(DMatrix::identity(4, 4));
        let r = smallest_eigpairs(&i, &i, 1, &EigOptions::default()).unwrap();
        assert!((r.values[0] - 1.0).abs() < 1e-14);
        let x = r.vector(0);
        assert!((x.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_spectrum_diag_and_reconstruction() {
        let a = Operator::Dense(DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 2.0])));
        let i = Operator::Dense(DMatrix::identity(3, 3));
        let (v, _) = full_spectrum(&a, &i).unwrap();
        assert_eq!(v.len(), 3);
        for (x, e) in v.iter().zip([1.0, 2.0, 3.0]) {
            assert!((x - e).abs() < 1e-14);
        }

        let (a, b) = random_pair(25, 3);
        let (lam, x) = full_spectrum(&Operator::Dense(a.clone()), &Operator::Dense(b.clone())).unwrap();
        let xtbx = x.transpose() * &b * &x;
        assert!((xtbx - DMatrix::identity(25, 25)).amax() < 1e-10);
        let rec = &b * &x * DMatrix::from_diagonal(&DVector::from_vec(lam)) * x.transpose() * &b;
        assert!((rec - &a).amax() < 1e-8 * a.amax());
    }

    #[test]
    fn oracle_cap_enforced() {
        let big = Operator::Sparse(SymmetricSparseMatrix::identity(ORACLE_CAP + 1));
        assert!(matches!(full_spectrum(&big, &big), Err(Error::OracleCap { .. })));
    }

    #[test]
    fn shift_invert_matches_dense() {
        for seed in 0..5 {
            let (a, b) = random_pair(30, seed);
            let (lam, _) = full_spectrum(&Operator::Dense(a.clone()), &Operator::Dense(b.clone())).unwrap();
            let opts = EigOptions { mode: SolverMode::ShiftInvert, ..Default::default() };
            let r = smallest_eigpairs(&sparse(&a), &sparse(&b), 3, &opts).unwrap();
            assert!(r.converged[0]);
            assert!((r.values[0] - lam[0]).abs() <= 1e-9 * lam[0].abs());
            for i in 0..3 {
                assert!(r.values[i] >= lam[i] - 1e-10 * (1.0 + lam[i].abs()));
            }
            let x = r.vector(0);
            assert!((x.dot(&(&b * &x)) - 1.0).abs() < 1e-10);
            let k = r.krylov_basis.as_ref().unwrap();
            assert!((k.transpose() * k - DMatrix::identity(k.ncols(), k.ncols())).amax() < 1e-12);
        }
    }

    #[test]
    fn indefinite_a_triggers_shift_retry() {
        let (a, b) = random_pair(40, 11);
        let (lam, _) = full_spectrum(&Operator::Dense(a.clone()), &Operator::Dense(b.clone())).unwrap();
        assert!(lam[0] < 0.0);
        let opts = EigOptions { mode: SolverMode::ShiftInvert, ..Default::default() };
        let r = smallest_eigpairs(&Operator::Dense(a), &Operator::Dense(b), 1, &opts).unwrap();
        assert!(r.shift < lam[0]);
        assert!((r.values[0] - lam[0]).abs() <= 1e-9 * lam[0].abs());
    }

    #[test]
    fn b_normalize_examples() {
        let i = Operator::Dense(DMatrix::identity(2, 2));
        assert_eq!(b_normalize(&DVector::from_vec(vec![2.0, 0.0]), &i).unwrap(), DVector::from_vec(vec![1.0, 0.0]));
        let b = Operator::Dense(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0])));
        let y = b_normalize(&DVector::from_vec(vec![0.0, -3.0]), &b).unwrap();
        assert_eq!(y, DVector::from_vec(vec![0.0, 0.5]));
        assert!(b_normalize(&DVector::zeros(2), &i).is_err());
    }

    #[test]
    fn residual_examples() {
        let i = Operator::Dense(DMatrix::identity(3, 3));
        let e1 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert_eq!(residual(&i, &i, 0.0, &e1).1, 1.0);
        assert!(residual(&i, &i, 1.0, &e1).1 == 0.0);
    }
}
