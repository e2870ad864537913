//! The reduced space `V`, the projected pencil and fast residual norms.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::linalg::dense_generalized_eigen;
use crate::pencil::AffinePencil;

pub const DEFAULT_DEFLATION_TOL: f64 = 1e-10;

/// What a basis column was derived from. Indices are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VectorKind {
    Eigenvector(usize),
    Derivative(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSource {
    pub omega: Vec<f64>,
    pub kind: VectorKind,
}

#[derive(Debug, Clone, Default)]
pub struct ExtendOutcome {
    pub added: Vec<ColumnSource>,
    pub deflated: Vec<ColumnSource>,
    /// Every offered vector in order, with its deflation flag.
    pub offered: Vec<(ColumnSource, bool)>,
}

/// Euclidean-orthonormal basis with per-column provenance.
#[derive(Debug, Clone)]
pub struct Subspace {
    n: usize,
    columns: Vec<DVector<f64>>,
    provenance: Vec<ColumnSource>,
    deflation_tol: f64,
}

impl Subspace {
    pub fn new(n: usize, deflation_tol: f64) -> Self {
        Self { n, columns: Vec::new(), provenance: Vec::new(), deflation_tol }
    }

    /// Wraps given columns, which must already be orthonormal.
    pub fn from_orthonormal(basis: &DMatrix<f64>, provenance: Vec<ColumnSource>, deflation_tol: f64) -> Result<Self> {
        if provenance.len() != basis.ncols() {
            return Err(Error::Dimension(format!("{} columns but {} provenance records", basis.ncols(), provenance.len())));
        }
        let s = Self {
            n: basis.nrows(),
            columns: basis.column_iter().map(|c| c.into_owned()).collect(),
            provenance,
            deflation_tol,
        };
        Ok(s)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn deflation_tol(&self) -> f64 {
        self.deflation_tol
    }

    pub fn columns(&self) -> &[DVector<f64>] {
        &self.columns
    }

    pub fn provenance(&self) -> &[ColumnSource] {
        &self.provenance
    }

    pub fn basis(&self) -> DMatrix<f64> {
        if self.columns.is_empty() {
            DMatrix::zeros(self.n, 0)
        } else {
            DMatrix::from_columns(&self.columns)
        }
    }

    /// `‖VᵀV - I‖_max`
    pub fn orthonormality_error(&self) -> f64 {
        let v = self.basis();
        (v.transpose() * &v - DMatrix::identity(self.dim(), self.dim())).amax()
    }

    /// Modified Gram-Schmidt with one reorthogonalization pass. Vectors whose
    /// orthogonal remainder is at most `deflation_tol` times their original
    /// norm are dropped and reported.
    pub fn extend(&mut self, vectors: Vec<(DVector<f64>, ColumnSource)>) -> Result<ExtendOutcome> {
        let mut out = ExtendOutcome::default();
        for (mut v, src) in vectors {
            if v.len() != self.n {
                return Err(Error::Dimension(format!("vector of length {} for a basis in R^{}", v.len(), self.n)));
            }
            let orig = v.norm();
            if orig > 0.0 && orig.is_finite() {
                for _ in 0..2 {
                    for q in &self.columns {
                        let c = q.dot(&v);
                        v.axpy(-c, q, 1.0);
                    }
                }
            }
            let rest = v.norm();
            if orig == 0.0 || !orig.is_finite() || rest <= self.deflation_tol * orig {
                out.offered.push((src.clone(), true));
                out.deflated.push(src);
                continue;
            }
            v /= rest;
            self.columns.push(v);
            self.provenance.push(src.clone());
            out.offered.push((src.clone(), false));
            out.added.push(src);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct ReducedEig {
    /// Ascending.
    pub values: Vec<f64>,
    /// `M × m` reduced eigenvectors, normalized in the reduced `B`.
    pub coefs: DMatrix<f64>,
}

/// Projected pencil `(Σθ VᵀA_iV, Σθ VᵀB_iV)` with the tall products `A_iV`,
/// `B_iV` kept for residual norms.
#[derive(Debug, Clone)]
pub struct ReducedModel {
    subspace: Subspace,
    coeffs_a: Vec<Expr>,
    coeffs_b: Vec<Expr>,
    domain: Vec<[f64; 2]>,
    pub(crate) reduced_a: Vec<DMatrix<f64>>,
    pub(crate) reduced_b: Vec<DMatrix<f64>>,
    pub(crate) tall_a: Vec<DMatrix<f64>>,
    pub(crate) tall_b: Vec<DMatrix<f64>>,
}

impl ReducedModel {
    /// Projects from scratch.
    pub fn project(p: &AffinePencil, s: Subspace) -> Result<Self> {
        if s.n() != p.n() {
            return Err(Error::Dimension(format!("basis in R^{} for a pencil of size {}", s.n(), p.n())));
        }
        let empty = |k: usize| vec![DMatrix::zeros(p.n(), 0); k];
        let mut rm = Self {
            coeffs_a: p.terms_a().iter().map(|t| t.coeff.clone()).collect(),
            coeffs_b: p.terms_b().iter().map(|t| t.coeff.clone()).collect(),
            domain: p.domain().to_vec(),
            reduced_a: vec![DMatrix::zeros(0, 0); p.terms_a().len()],
            reduced_b: vec![DMatrix::zeros(0, 0); p.terms_b().len()],
            tall_a: empty(p.terms_a().len()),
            tall_b: empty(p.terms_b().len()),
            subspace: Subspace::new(s.n(), s.deflation_tol()),
        };
        rm.append_columns(p, &s, 0);
        rm.subspace = s;
        Ok(rm)
    }

    /// Rebuilds a model from stored parts.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        subspace: Subspace,
        coeffs_a: Vec<Expr>,
        coeffs_b: Vec<Expr>,
        domain: Vec<[f64; 2]>,
        reduced_a: Vec<DMatrix<f64>>,
        reduced_b: Vec<DMatrix<f64>>,
        tall_a: Vec<DMatrix<f64>>,
        tall_b: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let (n, m) = (subspace.n(), subspace.dim());
        let ok = coeffs_a.len() == reduced_a.len()
            && coeffs_a.len() == tall_a.len()
            && coeffs_b.len() == reduced_b.len()
            && coeffs_b.len() == tall_b.len()
            && reduced_a.iter().chain(&reduced_b).all(|r| r.shape() == (m, m))
            && tall_a.iter().chain(&tall_b).all(|t| t.shape() == (n, m));
        if !ok {
            return Err(Error::Dimension("reduced model parts have inconsistent shapes".into()));
        }
        Ok(Self { subspace, coeffs_a, coeffs_b, domain, reduced_a, reduced_b, tall_a, tall_b })
    }

    fn append_columns(&mut self, p: &AffinePencil, s: &Subspace, from: usize) {
        let new = s.dim() - from;
        if new == 0 {
            return;
        }
        let v = s.basis();
        let vnew = v.columns(from, new).into_owned();
        let grow = |tall: &mut DMatrix<f64>, red: &mut DMatrix<f64>, t: DMatrix<f64>| {
            let mut tall_next = DMatrix::zeros(v.nrows(), s.dim());
            tall_next.columns_mut(0, from).copy_from(tall);
            tall_next.columns_mut(from, new).copy_from(&t);
            // New rows and columns of Vᵀ(M V); the old block is kept.
            let cross = v.transpose() * &t;
            let mut red_next = DMatrix::zeros(s.dim(), s.dim());
            red_next.view_mut((0, 0), (from, from)).copy_from(red);
            red_next.view_mut((0, from), (s.dim(), new)).copy_from(&cross);
            red_next.view_mut((from, 0), (new, from)).copy_from(&cross.rows(0, from).transpose());
            let corner = red_next.view((from, from), (new, new)).into_owned();
            red_next.view_mut((from, from), (new, new)).copy_from(&((&corner + corner.transpose()) * 0.5));
            *tall = tall_next;
            *red = red_next;
        };
        for (i, t) in p.terms_a().iter().enumerate() {
            let prod = t.matrix.mul_dense(&vnew);
            grow(&mut self.tall_a[i], &mut self.reduced_a[i], prod);
        }
        for (i, t) in p.terms_b().iter().enumerate() {
            let prod = t.matrix.mul_dense(&vnew);
            grow(&mut self.tall_b[i], &mut self.reduced_b[i], prod);
        }
    }

    /// Extends the basis and projects only the new columns.
    pub fn extend(&mut self, p: &AffinePencil, vectors: Vec<(DVector<f64>, ColumnSource)>) -> Result<ExtendOutcome> {
        let from = self.subspace.dim();
        let mut s = self.subspace.clone();
        let outcome = s.extend(vectors)?;
        self.append_columns(p, &s, from);
        self.subspace = s;
        Ok(outcome)
    }

    pub fn subspace(&self) -> &Subspace {
        &self.subspace
    }

    pub fn dim(&self) -> usize {
        self.subspace.dim()
    }

    pub fn n(&self) -> usize {
        self.subspace.n()
    }

    pub fn d(&self) -> usize {
        self.domain.len()
    }

    pub fn domain(&self) -> &[[f64; 2]] {
        &self.domain
    }

    pub fn coeffs_a(&self) -> &[Expr] {
        &self.coeffs_a
    }

    pub fn coeffs_b(&self) -> &[Expr] {
        &self.coeffs_b
    }

    pub fn reduced_a(&self) -> &[DMatrix<f64>] {
        &self.reduced_a
    }

    pub fn reduced_b(&self) -> &[DMatrix<f64>] {
        &self.reduced_b
    }

    pub fn tall_a(&self) -> &[DMatrix<f64>] {
        &self.tall_a
    }

    pub fn tall_b(&self) -> &[DMatrix<f64>] {
        &self.tall_b
    }

    fn thetas(&self, omega: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if omega.len() != self.d() {
            return Err(Error::Dimension(format!("omega has {} entries, model has d = {}", omega.len(), self.d())));
        }
        let eval = |es: &[Expr]| -> Result<Vec<f64>> {
            es.iter().map(|e| e.eval(omega).map_err(|err| Error::from(err).at(omega))).collect()
        };
        Ok((eval(&self.coeffs_a)?, eval(&self.coeffs_b)?))
    }

    fn combine(coeffs: &[f64], mats: &[DMatrix<f64>]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(mats[0].nrows(), mats[0].ncols());
        for (c, m) in coeffs.iter().zip(mats) {
            if *c != 0.0 {
                out += m * *c;
            }
        }
        out
    }

    /// Reduced pencil `(A_V(w), B_V(w))`.
    pub fn reduced_pencil(&self, omega: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let (ta, tb) = self.thetas(omega)?;
        Ok((Self::combine(&ta, &self.reduced_a), Self::combine(&tb, &self.reduced_b)))
    }

    /// The `min(m, M)` smallest reduced eigenpairs.
    pub fn reduced_min_eigpairs(&self, omega: &[f64], m: usize) -> Result<ReducedEig> {
        if self.dim() == 0 {
            return Err(Error::Config("reduced model has an empty basis".into()));
        }
        let (ar, br) = self.reduced_pencil(omega)?;
        let (values, y) = dense_generalized_eigen(&ar, &br).map_err(|e| match e {
            Error::NotPositiveDefinite { .. } => {
                Error::NotPositiveDefinite { context: "reduced B(omega); B(omega) may have lost definiteness".into() }.at(omega)
            }
            other => other.at(omega),
        })?;
        let m = m.min(self.dim());
        Ok(ReducedEig { values: values[..m].to_vec(), coefs: y.columns(0, m).into_owned() })
    }

    /// `V y`
    pub fn lift(&self, coef: &DVector<f64>) -> DVector<f64> {
        let mut x = DVector::zeros(self.n());
        for (c, q) in coef.iter().zip(self.subspace.columns()) {
            x.axpy(*c, q, 1.0);
        }
        x
    }

    /// `‖Σθ_A,i (A_iV) y - λ Σθ_B,i (B_iV) y‖₂` from the tall products.
    pub fn fast_residual_norm(&self, omega: &[f64], lambda: f64, coef: &DVector<f64>) -> Result<f64> {
        let (ta, tb) = self.thetas(omega)?;
        let mut r = DVector::zeros(self.n());
        for (c, t) in ta.iter().zip(&self.tall_a) {
            if *c != 0.0 {
                r.gemv(*c, t, coef, 1.0);
            }
        }
        for (c, t) in tb.iter().zip(&self.tall_b) {
            if *c != 0.0 {
                r.gemv(-lambda * c, t, coef, 1.0);
            }
        }
        Ok(r.norm())
    }
}
