//! First and second parameter derivatives of a simple eigenvalue and
//! derivatives of its eigenvector.
//!
//! The eigenvector derivative `dx` together with `dλ` solves the bordered
//! system
//!
//! ```text
//! [ λB - A   Bx ] [ dx ]   [ (dA - λ dB) x  ]
//! [ xᵀB      0  ] [ dλ ] = [ -½ xᵀ dB x     ]
//! ```
//!
//! which is nonsingular exactly when λ is simple. The spectral expansion over
//! a full eigendecomposition is provided as an independent cross-check.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{factor_dense_lu, Factorization, Operator};
use crate::lu::{rcm_order, PivotPolicy, SparseLu};
use crate::par::{self, Parallelism};
use crate::pencil::AffinePencil;
use crate::sparse::CscMatrix;

/// Gap below which an eigenvalue is treated as multiple.
pub const SIMPLICITY_THRESHOLD: f64 = 1e-8;

/// Hessian asymmetry tolerated before symmetrization, relative to
/// `max(1, |H|_max)`.
pub const HESSIAN_ASYMMETRY_LIMIT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeMethod {
    Bordered,
    Spectral,
    ProjectedGuess,
}

#[derive(Debug, Clone)]
pub struct DerivativeResult {
    pub dx: DVector<f64>,
    pub dlambda: f64,
    /// Distance to the nearest other eigenvalue estimate, when known.
    pub gap: Option<f64>,
    pub method: DerivativeMethod,
    /// Pivot-ratio estimate of the bordered matrix condition number.
    pub condition_estimate: f64,
}

fn ensure_simple(gap: f64, threshold: f64) -> Result<()> {
    if gap > threshold {
        Ok(())
    } else {
        Err(Error::NotSimple { gap, threshold })
    }
}

/// `∂λ/∂w_j = xᵀ(∂A/∂w_j - λ ∂B/∂w_j)x` for every `j`.
pub fn eigenvalue_gradient(p: &AffinePencil, omega: &[f64], lambda: f64, x: &DVector<f64>, gap: f64) -> Result<DVector<f64>> {
    ensure_simple(gap, SIMPLICITY_THRESHOLD)?;
    let mut g = DVector::zeros(p.d());
    for j in 0..p.d() {
        let (da, db) = p.assemble_derivative(omega, j)?;
        g[j] = da.bilinear(x, x) - lambda * db.bilinear(x, x);
    }
    Ok(g)
}

/// One factorization of the bordered matrix, reused for every parameter
/// direction.
#[derive(Debug, Clone)]
pub struct BorderedSystem {
    n: usize,
    lambda: f64,
    x: DVector<f64>,
    factor: Factorization,
    gap: Option<f64>,
}

impl BorderedSystem {
    pub fn new(a: &Operator, b: &Operator, lambda: f64, x: &DVector<f64>) -> Result<Self> {
        let n = a.n();
        let bx = b.mul_vec(x);
        let factor = match (a, b) {
            (Operator::Sparse(sa), Operator::Sparse(sb)) => {
                let mut t: Vec<(usize, usize, f64)> = Vec::with_capacity(sa.csc().nnz() + sb.csc().nnz() + 2 * n);
                t.extend(sb.csc().triplets().map(|(r, c, v)| (r, c, lambda * v)));
                t.extend(sa.csc().triplets().map(|(r, c, v)| (r, c, -v)));
                for (i, &v) in bx.iter().enumerate() {
                    if v != 0.0 {
                        t.push((i, n, v));
                        t.push((n, i, v));
                    }
                }
                let k = CscMatrix::from_triplets(n + 1, n + 1, &t)?;
                let q = rcm_order(&k, Some(n));
                let lu = SparseLu::factor_ordered(&k, q, PivotPolicy::default())
                    .map_err(|_| Error::Singular { context: "bordered eigenvector-derivative matrix".into() })?;
                Factorization::Sparse(lu)
            }
            _ => {
                let mut k = DMatrix::zeros(n + 1, n + 1);
                k.view_mut((0, 0), (n, n)).copy_from(&(b.to_dense() * lambda - a.to_dense()));
                k.view_mut((0, n), (n, 1)).copy_from(&bx);
                k.view_mut((n, 0), (1, n)).copy_from(&bx.transpose());
                factor_dense_lu(k, "bordered eigenvector-derivative matrix")?
            }
        };
        Ok(Self { n, lambda, x: x.clone(), factor, gap: None })
    }

    pub fn with_gap(mut self, gap: f64) -> Self {
        self.gap = Some(gap);
        self
    }

    pub fn condition_estimate(&self) -> f64 {
        self.factor.pivot_ratio()
    }

    fn rhs(&self, da: &Operator, db: &Operator) -> DVector<f64> {
        let dbx = db.mul_vec(&self.x);
        let top = da.mul_vec(&self.x) - &dbx * self.lambda;
        let mut rhs = DVector::zeros(self.n + 1);
        rhs.rows_mut(0, self.n).copy_from(&top);
        rhs[self.n] = -0.5 * self.x.dot(&dbx);
        rhs
    }

    pub fn solve(&self, da: &Operator, db: &Operator) -> DerivativeResult {
        let sol = self.factor.solve(&self.rhs(da, db));
        DerivativeResult {
            dx: sol.rows(0, self.n).into_owned(),
            dlambda: sol[self.n],
            gap: self.gap,
            method: DerivativeMethod::Bordered,
            condition_estimate: self.condition_estimate(),
        }
    }

    /// Solves for every `(dA_j, dB_j)`; results in input order.
    pub fn solve_all(&self, derivs: &[(Operator, Operator)], par: Parallelism) -> Vec<DerivativeResult> {
        par::map(par, derivs, |(da, db)| self.solve(da, db))
    }
}

/// Euclidean norm of the bordered-system residual for a candidate
/// `(dx, dλ)`.
#[allow(clippy::too_many_arguments)]
pub fn bordered_residual(
    a: &Operator,
    b: &Operator,
    da: &Operator,
    db: &Operator,
    lambda: f64,
    x: &DVector<f64>,
    dx: &DVector<f64>,
    dlambda: f64,
) -> f64 {
    let bx = b.mul_vec(x);
    let dbx = db.mul_vec(x);
    let top = b.mul_vec(dx) * lambda - a.mul_vec(dx) + &bx * dlambda - (da.mul_vec(x) - &dbx * lambda);
    let last = bx.dot(dx) + 0.5 * x.dot(&dbx);
    (top.norm_squared() + last * last).sqrt()
}

pub fn eigenvector_derivative_bordered(
    a: &Operator,
    b: &Operator,
    da: &Operator,
    db: &Operator,
    lambda: f64,
    x: &DVector<f64>,
) -> Result<DerivativeResult> {
    Ok(BorderedSystem::new(a, b, lambda, x)?.solve(da, db))
}

/// Eigenvector derivative from a full `B`-orthonormal eigendecomposition
/// `(values, X)` for eigenpair `i`.
pub fn eigenvector_derivative_spectral(
    values: &[f64],
    x: &DMatrix<f64>,
    da: &Operator,
    db: &Operator,
    i: usize,
) -> Result<DerivativeResult> {
    let li = values[i];
    let gap = values
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != i)
        .map(|(_, v)| (v - li).abs())
        .fold(f64::INFINITY, f64::min);
    ensure_simple(gap, 1e-12)?;
    let xi = x.column(i).into_owned();
    let dbxi = db.mul_vec(&xi);
    let c = da.mul_vec(&xi) - &dbxi * li;
    let mut dx = &xi * (-0.5 * xi.dot(&dbxi));
    for (k, lk) in values.iter().enumerate() {
        if k != i {
            let xk = x.column(k);
            dx.axpy(xk.dot(&c) / (li - lk), &xk, 1.0);
        }
    }
    Ok(DerivativeResult {
        dx,
        dlambda: xi.dot(&c),
        gap: Some(gap),
        method: DerivativeMethod::Spectral,
        condition_estimate: f64::NAN,
    })
}

/// Hessian of a simple eigenvalue, given `dx_all[k] = ∂x/∂w_k` from the
/// bordered solves. Rejects inputs whose unsymmetrized Hessian is too
/// asymmetric, then returns `(H + Hᵀ)/2`.
pub fn eigenvalue_hessian(
    p: &AffinePencil,
    omega: &[f64],
    lambda: f64,
    x: &DVector<f64>,
    dx_all: &[DVector<f64>],
) -> Result<DMatrix<f64>> {
    let d = p.d();
    if dx_all.len() != d {
        return Err(Error::Dimension(format!("{} eigenvector derivatives for d = {d}", dx_all.len())));
    }
    let first: Vec<(Operator, Operator)> = (0..d).map(|j| p.assemble_derivative(omega, j)).collect::<Result<_>>()?;
    let grad: Vec<f64> = first.iter().map(|(da, db)| da.bilinear(x, x) - lambda * db.bilinear(x, x)).collect();
    let mut h = DMatrix::zeros(d, d);
    for j in 0..d {
        let (da, db) = &first[j];
        let cj_dx: Vec<DVector<f64>> = dx_all.iter().map(|dxk| da.mul_vec(dxk) - db.mul_vec(dxk) * lambda).collect();
        let dbj_xx = db.bilinear(x, x);
        for k in 0..d {
            let (dda, ddb) = p.assemble_second_derivative(omega, j, k)?;
            h[(j, k)] = 2.0 * x.dot(&cj_dx[k]) + dda.bilinear(x, x) - grad[k] * dbj_xx - lambda * ddb.bilinear(x, x);
        }
    }
    let asym = (&h - h.transpose()).amax();
    let limit = HESSIAN_ASYMMETRY_LIMIT * h.amax().max(1.0);
    if asym > limit {
        return Err(Error::HessianAsymmetry { asymmetry: asym, limit });
    }
    Ok((&h + h.transpose()) * 0.5)
}

#[derive(Debug, Clone)]
pub struct ProjectedGuess {
    pub dx: DVector<f64>,
    pub dlambda: f64,
    /// Bordered-system residual of the lifted guess.
    pub residual: f64,
    /// Bordered-system residual of the zero vector (the right-hand side norm).
    pub zero_residual: f64,
}

/// Initial guess for the bordered system from its Galerkin projection onto
/// the columns of `vk` (orthonormal, containing `x`).
#[allow(clippy::too_many_arguments)]
pub fn projected_derivative_guess(
    vk: &DMatrix<f64>,
    a: &Operator,
    b: &Operator,
    da: &Operator,
    db: &Operator,
    lambda: f64,
    x: &DVector<f64>,
) -> Result<ProjectedGuess> {
    let kdim = vk.ncols();
    let off = x - vk * (vk.transpose() * x);
    if off.norm() > 1e-8 * x.norm() {
        return Err(Error::Dimension(format!(
            "x is not in the range of the projection basis (distance {:e})",
            off.norm()
        )));
    }
    let av = a.mul_dense(vk);
    let bv = b.mul_dense(vk);
    let bx = b.mul_vec(x);
    let dbx = db.mul_vec(x);
    let rhs_top = da.mul_vec(x) - &dbx * lambda;
    let mut k = DMatrix::zeros(kdim + 1, kdim + 1);
    let core = vk.transpose() * (bv * lambda - av);
    k.view_mut((0, 0), (kdim, kdim)).copy_from(&((&core + core.transpose()) * 0.5));
    let vbx = vk.transpose() * &bx;
    k.view_mut((0, kdim), (kdim, 1)).copy_from(&vbx);
    k.view_mut((kdim, 0), (1, kdim)).copy_from(&vbx.transpose());
    let mut rhs = DVector::zeros(kdim + 1);
    rhs.rows_mut(0, kdim).copy_from(&(vk.transpose() * &rhs_top));
    rhs[kdim] = -0.5 * x.dot(&dbx);
    let sol = factor_dense_lu(k, "projected bordered matrix")?.solve(&rhs);
    let dx = vk * sol.rows(0, kdim);
    let dlambda = sol[kdim];
    let residual = bordered_residual(a, b, da, db, lambda, x, &dx, dlambda);
    let zero_residual = bordered_residual(a, b, da, db, lambda, x, &DVector::zeros(x.len()), 0.0);
    Ok(ProjectedGuess { dx, dlambda, residual, zero_residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigcore::full_spectrum;
    use crate::sparse::SymmetricSparseMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sym(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let g = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        &g + g.transpose()
    }

    #[test]
    fn bordered_matches_spectral_dense_and_sparse() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 15;
        let a = sym(&mut rng, n);
        let h = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        let b = &h * h.transpose() + DMatrix::identity(n, n) * 2.0;
        let da = sym(&mut rng, n);
        let db = sym(&mut rng, n) * 0.1;
        let (ad, bd, dad, dbd) =
            (Operator::Dense(a.clone()), Operator::Dense(b.clone()), Operator::Dense(da.clone()), Operator::Dense(db.clone()));
        let (vals, x) = full_spectrum(&ad, &bd).unwrap();
        let spec = eigenvector_derivative_spectral(&vals, &x, &dad, &dbd, 0).unwrap();
        let x0 = x.column(0).into_owned();
        let bord = eigenvector_derivative_bordered(&ad, &bd, &dad, &dbd, vals[0], &x0).unwrap();
        assert!((&bord.dx - &spec.dx).norm() <= 1e-8 * spec.dx.norm());
        assert!((bord.dlambda - spec.dlambda).abs() <= 1e-8 * (1.0 + spec.dlambda.abs()));
        // Normalization derivative.
        let lhs = x0.dot(&(&b * &bord.dx));
        assert!((lhs + 0.5 * x0.dot(&(&db * &x0))).abs() < 1e-8);

        let s = |m: &DMatrix<f64>| Operator::Sparse(SymmetricSparseMatrix::from_dense(m).unwrap());
        let sp = eigenvector_derivative_bordered(&s(&a), &s(&b), &s(&da), &s(&db), vals[0], &x0).unwrap();
        assert!((&sp.dx - &spec.dx).norm() <= 1e-8 * spec.dx.norm());
    }

    #[test]
    fn zero_perturbation_gives_zero_derivative() {
        let a = Operator::Dense(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0])));
        let b = Operator::Dense(DMatrix::identity(3, 3));
        let z = Operator::Dense(DMatrix::zeros(3, 3));
        let x = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let r = eigenvector_derivative_bordered(&a, &b, &z, &z, 1.0, &x).unwrap();
        assert_eq!(r.dx.norm(), 0.0);
        assert_eq!(r.dlambda, 0.0);
    }

    #[test]
    fn multiple_eigenvalue_is_singular() {
        let a = Operator::Dense(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 3.0])));
        let b = Operator::Dense(DMatrix::identity(3, 3));
        let x = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert!(matches!(BorderedSystem::new(&a, &b, 1.0, &x), Err(Error::Singular { .. })));
        let (vals, xs) = full_spectrum(&a, &b).unwrap();
        assert!(eigenvector_derivative_spectral(&vals, &xs, &a, &b, 0).is_err());
    }

    #[test]
    fn projected_guess_with_full_basis_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 10;
        let a = Operator::Dense(sym(&mut rng, n));
        let b = Operator::Dense(DMatrix::identity(n, n));
        let da = Operator::Dense(sym(&mut rng, n));
        let db = Operator::Dense(DMatrix::zeros(n, n));
        let (vals, x) = full_spectrum(&a, &b).unwrap();
        let x0 = x.column(0).into_owned();
        let exact = eigenvector_derivative_bordered(&a, &b, &da, &db, vals[0], &x0).unwrap();
        let g = projected_derivative_guess(&DMatrix::identity(n, n), &a, &b, &da, &db, vals[0], &x0).unwrap();
        assert!((&g.dx - &exact.dx).norm() < 1e-10 * (1.0 + exact.dx.norm()));
        assert!(g.residual < g.zero_residual);
    }
}
