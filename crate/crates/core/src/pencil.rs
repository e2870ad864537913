//! Affine parametric pencils `A(w) = Σ θ_A,i(w) A_i`, `B(w) = Σ θ_B,i(w) B_i`
//! and their parameter derivatives.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Expr, ExprError};
use crate::linalg::{factor_spd, Operator, DEFAULT_DENSE_THRESHOLD};
use crate::mtx;
use crate::sparse::SymmetricSparseMatrix;

#[derive(Debug, Clone)]
pub struct AffineTerm {
    pub coeff: Expr,
    pub matrix: Arc<SymmetricSparseMatrix>,
}

impl AffineTerm {
    pub fn new(coeff: Expr, matrix: SymmetricSparseMatrix) -> Self {
        Self { coeff, matrix: Arc::new(matrix) }
    }
}

/// What to do when asked to assemble outside the domain box.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainPolicy {
    #[default]
    Error,
    Warn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    A,
    B,
}

#[derive(Debug, Clone)]
struct TermCache {
    dense: Option<DMatrix<f64>>,
    first: Vec<Result<Expr, ExprError>>,
    /// `d * d` entries; `(j, k)` and `(k, j)` hold the same expression,
    /// derived once as `diff(diff(θ, min), max)`.
    second: Vec<Result<Expr, ExprError>>,
}

impl TermCache {
    fn build(term: &AffineTerm, d: usize, dense: bool) -> Self {
        let first: Vec<_> = (0..d).map(|j| term.coeff.diff(j)).collect();
        let mut second = vec![Ok(Expr::Num(0.0)); d * d];
        for j in 0..d {
            for k in j..d {
                let e = first[j].as_ref().map_err(Clone::clone).and_then(|f| f.diff(k));
                second[j * d + k] = e.clone();
                second[k * d + j] = e;
            }
        }
        Self { dense: dense.then(|| term.matrix.to_dense()), first, second }
    }
}

#[derive(Debug, Clone)]
pub struct AffinePencil {
    domain: Vec<[f64; 2]>,
    terms_a: Vec<AffineTerm>,
    terms_b: Vec<AffineTerm>,
    n: usize,
    dense_threshold: usize,
    domain_policy: DomainPolicy,
    cache_a: Vec<TermCache>,
    cache_b: Vec<TermCache>,
}

impl AffinePencil {
    /// Structural checks only; see [`AffinePencil::validate`] for the probes.
    pub fn new(domain: Vec<[f64; 2]>, terms_a: Vec<AffineTerm>, terms_b: Vec<AffineTerm>) -> Result<Self> {
        let d = domain.len();
        if d == 0 {
            return Err(Error::Config("pencil needs at least one parameter".into()));
        }
        for (i, [a, b]) in domain.iter().enumerate() {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::Config(format!("domain interval {} is [{a}, {b}]", i + 1)));
            }
        }
        if terms_a.is_empty() || terms_b.is_empty() {
            return Err(Error::Config("termsA and termsB must be nonempty".into()));
        }
        let n = terms_a[0].matrix.n();
        for t in terms_a.iter().chain(&terms_b) {
            if t.matrix.n() != n {
                return Err(Error::Dimension(format!("term matrices of size {} and {}", n, t.matrix.n())));
            }
            if let Some(p) = t.coeff.max_param() {
                if p >= d {
                    return Err(Error::Config(format!("coefficient `{}` uses w{} but d = {d}", t.coeff, p + 1)));
                }
            }
        }
        let mut p = Self {
            domain,
            terms_a,
            terms_b,
            n,
            dense_threshold: DEFAULT_DENSE_THRESHOLD,
            domain_policy: DomainPolicy::default(),
            cache_a: Vec::new(),
            cache_b: Vec::new(),
        };
        p.rebuild_cache();
        Ok(p)
    }

    fn rebuild_cache(&mut self) {
        let (d, dense) = (self.d(), self.is_dense());
        self.cache_a = self.terms_a.iter().map(|t| TermCache::build(t, d, dense)).collect();
        self.cache_b = self.terms_b.iter().map(|t| TermCache::build(t, d, dense)).collect();
    }

    pub fn with_dense_threshold(mut self, threshold: usize) -> Self {
        self.dense_threshold = threshold;
        self.rebuild_cache();
        self
    }

    pub fn with_domain_policy(mut self, policy: DomainPolicy) -> Self {
        self.domain_policy = policy;
        self
    }

    pub fn d(&self) -> usize {
        self.domain.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn domain(&self) -> &[[f64; 2]] {
        &self.domain
    }

    pub fn terms_a(&self) -> &[AffineTerm] {
        &self.terms_a
    }

    pub fn terms_b(&self) -> &[AffineTerm] {
        &self.terms_b
    }

    pub fn dense_threshold(&self) -> usize {
        self.dense_threshold
    }

    pub fn domain_policy(&self) -> DomainPolicy {
        self.domain_policy
    }

    /// Whether assembled operators use dense storage.
    pub fn is_dense(&self) -> bool {
        self.n <= self.dense_threshold
    }

    pub fn center(&self) -> Vec<f64> {
        self.domain.iter().map(|[a, b]| 0.5 * (a + b)).collect()
    }

    /// The `2^d` corners of the domain box.
    pub fn corners(&self) -> Vec<Vec<f64>> {
        let d = self.d();
        (0..1usize << d)
            .map(|mask| (0..d).map(|i| self.domain[i][(mask >> i) & 1]).collect())
            .collect()
    }

    pub fn contains(&self, omega: &[f64]) -> bool {
        omega.len() == self.d()
            && omega.iter().zip(&self.domain).all(|(w, [a, b])| {
                let slack = 1e-12 * (b - a);
                *w >= a - slack && *w <= b + slack
            })
    }

    /// Dimension check, then the domain policy.
    pub fn check_omega(&self, omega: &[f64]) -> Result<()> {
        if omega.len() != self.d() {
            return Err(Error::Dimension(format!("omega has {} entries, pencil has d = {}", omega.len(), self.d())));
        }
        if !self.contains(omega) {
            match self.domain_policy {
                DomainPolicy::Error => return Err(Error::OutOfDomain { omega: omega.to_vec() }),
                DomainPolicy::Warn => log::warn!("omega = {omega:?} lies outside the domain box; extrapolating"),
            }
        }
        Ok(())
    }

    fn terms(&self, side: Side) -> (&[AffineTerm], &[TermCache]) {
        match side {
            Side::A => (&self.terms_a, &self.cache_a),
            Side::B => (&self.terms_b, &self.cache_b),
        }
    }

    fn eval_all<'a>(exprs: impl Iterator<Item = &'a Result<Expr, ExprError>>, omega: &[f64]) -> Result<Vec<f64>> {
        exprs
            .map(|e| {
                let e = e.as_ref().map_err(|err| Error::Expr(err.clone()))?;
                Ok(e.eval(omega)?)
            })
            .collect::<Result<Vec<f64>>>()
            .map_err(|e| e.at(omega))
    }

    pub fn theta_a(&self, omega: &[f64]) -> Result<Vec<f64>> {
        self.check_omega(omega)?;
        self.terms_a.iter().map(|t| t.coeff.eval(omega).map_err(|e| Error::from(e).at(omega))).collect()
    }

    pub fn theta_b(&self, omega: &[f64]) -> Result<Vec<f64>> {
        self.check_omega(omega)?;
        self.terms_b.iter().map(|t| t.coeff.eval(omega).map_err(|e| Error::from(e).at(omega))).collect()
    }

    /// `∂θ/∂w_j` for every term of one side.
    fn dtheta(&self, side: Side, omega: &[f64], j: usize) -> Result<Vec<f64>> {
        self.check_param(j)?;
        self.check_omega(omega)?;
        Self::eval_all(self.terms(side).1.iter().map(|c| &c.first[j]), omega)
    }

    fn ddtheta(&self, side: Side, omega: &[f64], j: usize, k: usize) -> Result<Vec<f64>> {
        self.check_param(j)?;
        self.check_param(k)?;
        self.check_omega(omega)?;
        let d = self.d();
        Self::eval_all(self.terms(side).1.iter().map(|c| &c.second[j * d + k]), omega)
    }

    pub fn dtheta_a(&self, omega: &[f64], j: usize) -> Result<Vec<f64>> {
        self.dtheta(Side::A, omega, j)
    }

    pub fn dtheta_b(&self, omega: &[f64], j: usize) -> Result<Vec<f64>> {
        self.dtheta(Side::B, omega, j)
    }

    fn check_param(&self, j: usize) -> Result<()> {
        if j >= self.d() {
            return Err(Error::Dimension(format!("parameter index {} exceeds d = {}", j + 1, self.d())));
        }
        Ok(())
    }

    /// `Σ coeffs[i] M_i` over one side's terms.
    fn combine(&self, side: Side, coeffs: &[f64]) -> Result<Operator> {
        let (terms, cache) = self.terms(side);
        if self.is_dense() {
            let mut m = DMatrix::<f64>::zeros(self.n, self.n);
            for (c, tc) in coeffs.iter().zip(cache) {
                if *c != 0.0 {
                    m += tc.dense.as_ref().expect("dense cache") * *c;
                }
            }
            Ok(Operator::Dense(m))
        } else {
            let mats: Vec<&SymmetricSparseMatrix> = terms.iter().map(|t| t.matrix.as_ref()).collect();
            Ok(Operator::Sparse(SymmetricSparseMatrix::linear_combination(coeffs, &mats)?))
        }
    }

    pub fn assemble_a(&self, omega: &[f64]) -> Result<Operator> {
        self.combine(Side::A, &self.theta_a(omega)?)
    }

    pub fn assemble_b(&self, omega: &[f64]) -> Result<Operator> {
        self.combine(Side::B, &self.theta_b(omega)?)
    }

    pub fn assemble(&self, omega: &[f64]) -> Result<(Operator, Operator)> {
        Ok((self.assemble_a(omega)?, self.assemble_b(omega)?))
    }

    /// `(∂A/∂w_j, ∂B/∂w_j)` with zero-based `j`.
    pub fn assemble_derivative(&self, omega: &[f64], j: usize) -> Result<(Operator, Operator)> {
        Ok((
            self.combine(Side::A, &self.dtheta(Side::A, omega, j)?)?,
            self.combine(Side::B, &self.dtheta(Side::B, omega, j)?)?,
        ))
    }

    pub fn assemble_second_derivative(&self, omega: &[f64], j: usize, k: usize) -> Result<(Operator, Operator)> {
        Ok((
            self.combine(Side::A, &self.ddtheta(Side::A, omega, j, k)?)?,
            self.combine(Side::B, &self.ddtheta(Side::B, omega, j, k)?)?,
        ))
    }

    /// Whether `B` has no parameter dependence.
    pub fn b_is_constant(&self) -> bool {
        self.cache_b.iter().all(|c| c.first.iter().all(|e| matches!(e, Ok(e) if e.is_zero())))
    }

    pub fn contains_abs(&self) -> bool {
        self.terms_a.iter().chain(&self.terms_b).any(|t| t.coeff.contains_abs())
    }

    /// Probes coefficient finiteness and `B` definiteness at the corners and
    /// the center of the domain. Returns warnings for non-analytic
    /// coefficients.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut points = self.corners();
        points.push(self.center());
        for w in &points {
            self.theta_a(w)?;
            let b = self.assemble_b(w).map_err(|e| e.at(w))?;
            factor_spd(&b, "B(omega) at a validation point").map_err(|e| e.at(w))?;
        }
        let warnings: Vec<String> = self
            .terms_a
            .iter()
            .chain(&self.terms_b)
            .filter(|t| t.coeff.contains_abs())
            .map(|t| format!("coefficient `{}` uses abs and is not analytic; derivatives through it are unavailable", t.coeff))
            .collect();
        for w in &warnings {
            log::warn!("{w}");
        }
        Ok(warnings)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TermFile {
    coeff: String,
    matrix: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PencilFile {
    d: usize,
    domain: Vec<[f64; 2]>,
    #[serde(rename = "termsA")]
    terms_a: Vec<TermFile>,
    #[serde(rename = "termsB")]
    terms_b: Vec<TermFile>,
}

/// Loads a pencil definition (`.toml`, otherwise JSON). Matrix paths are
/// resolved against the definition file's directory. The loaded pencil is
/// validated.
pub fn load(path: &Path) -> Result<AffinePencil> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let spec: PencilFile = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml")) {
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
    } else {
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
    };
    if spec.domain.len() != spec.d {
        return Err(Error::Config(format!("{}: d = {} but domain has {} intervals", path.display(), spec.d, spec.domain.len())));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let read_terms = |terms: &[TermFile]| -> Result<Vec<AffineTerm>> {
        terms
            .iter()
            .map(|t| {
                let coeff = Expr::parse(&t.coeff, spec.d)
                    .map_err(|e| Error::Config(format!("{}: coefficient `{}`: {e}", path.display(), t.coeff)))?;
                let mpath = base.join(&t.matrix);
                Ok(AffineTerm::new(coeff, mtx::read_symmetric(&mpath)?))
            })
            .collect()
    };
    let p = AffinePencil::new(spec.domain.clone(), read_terms(&spec.terms_a)?, read_terms(&spec.terms_b)?)?;
    p.validate()?;
    Ok(p)
}

/// Writes `pencil.json` plus one Matrix Market file per term into `dir`.
pub fn save(p: &AffinePencil, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write_terms = |prefix: &str, terms: &[AffineTerm]| -> Result<Vec<TermFile>> {
        terms
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let name = format!("{prefix}{}.mtx", i + 1);
                mtx::write_symmetric(&dir.join(&name), &t.matrix)?;
                Ok(TermFile { coeff: t.coeff.to_string(), matrix: name })
            })
            .collect()
    };
    let spec = PencilFile {
        d: p.d(),
        domain: p.domain.clone(),
        terms_a: write_terms("A", &p.terms_a)?,
        terms_b: write_terms("B", &p.terms_b)?,
    };
    let path = dir.join("pencil.json");
    let json = serde_json::to_string_pretty(&spec).expect("pencil file serializes");
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn diag(v: &[f64]) -> SymmetricSparseMatrix {
        SymmetricSparseMatrix::from_dense(&DMatrix::from_diagonal(&DVector::from_row_slice(v))).unwrap()
    }

    fn term(e: &str, d: usize, m: SymmetricSparseMatrix) -> AffineTerm {
        AffineTerm::new(Expr::parse(e, d).unwrap(), m)
    }

    fn small() -> AffinePencil {
        AffinePencil::new(
            vec![[0.0, 1.0], [-1.0, 1.0]],
            vec![term("1", 2, diag(&[1.0, 2.0])), term("w1^2*sin(w2)", 2, diag(&[3.0, -1.0]))],
            vec![term("1", 2, diag(&[1.0, 1.0])), term("w2", 2, diag(&[0.25, 0.0]))],
        )
        .unwrap()
    }

    #[test]
    fn assemble_evaluates_coefficients() {
        let p = small();
        let (a, b) = p.assemble(&[0.5, 0.3]).unwrap();
        let t = 0.25 * 0.3f64.sin();
        assert!((a.to_dense()[(0, 0)] - (1.0 + 3.0 * t)).abs() < 1e-15);
        assert!((b.to_dense()[(0, 0)] - 1.075).abs() < 1e-15);
    }

    #[test]
    fn sparse_and_dense_assembly_agree() {
        let p = small();
        let q = small().with_dense_threshold(0);
        let w = [0.7, -0.2];
        assert!(matches!(q.assemble_a(&w).unwrap(), Operator::Sparse(_)));
        assert!((p.assemble_a(&w).unwrap().to_dense() - q.assemble_a(&w).unwrap().to_dense()).amax() < 1e-15);
        let (da, _) = p.assemble_second_derivative(&w, 0, 1).unwrap();
        let (ds, _) = q.assemble_second_derivative(&w, 1, 0).unwrap();
        assert_eq!(da.to_dense(), ds.to_dense());
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let p = small();
        let w = [0.4, 0.1];
        let h = 1e-6;
        for j in 0..2 {
            let (mut wp, mut wm) = (w, w);
            wp[j] += h;
            wm[j] -= h;
            let fd = (p.assemble_a(&wp).unwrap().to_dense() - p.assemble_a(&wm).unwrap().to_dense()) / (2.0 * h);
            let (da, db) = p.assemble_derivative(&w, j).unwrap();
            assert!((da.to_dense() - fd).amax() < 1e-6 * 3.0);
            let fdb = (p.assemble_b(&wp).unwrap().to_dense() - p.assemble_b(&wm).unwrap().to_dense()) / (2.0 * h);
            assert!((db.to_dense() - fdb).amax() < 1e-6);
        }
    }

    #[test]
    fn out_of_domain_policy() {
        let p = small();
        assert!(matches!(p.assemble_a(&[2.0, 0.0]), Err(Error::OutOfDomain { .. })));
        let p = p.with_domain_policy(DomainPolicy::Warn);
        assert!(p.assemble_a(&[2.0, 0.0]).is_ok());
    }

    #[test]
    fn validation_catches_indefinite_b() {
        let p = AffinePencil::new(
            vec![[-1.0, 1.0]],
            vec![term("1", 1, diag(&[1.0]))],
            vec![term("w1", 1, diag(&[1.0]))],
        )
        .unwrap();
        assert!(p.validate().is_err());
    }

    #[test]
    fn abs_is_flagged_and_not_differentiated() {
        let p = AffinePencil::new(
            vec![[-1.0, 1.0]],
            vec![term("abs(w1)", 1, diag(&[1.0]))],
            vec![term("1", 1, diag(&[1.0]))],
        )
        .unwrap();
        assert_eq!(p.validate().unwrap().len(), 1);
        assert!(p.assemble_derivative(&[0.5], 0).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = small();
        let path = save(&p, dir.path()).unwrap();
        let q = load(&path).unwrap();
        let w = [0.3, 0.9];
        assert_eq!(p.assemble_a(&w).unwrap(), q.assemble_a(&w).unwrap());
        assert_eq!(p.assemble_b(&w).unwrap(), q.assemble_b(&w).unwrap());
    }

    #[test]
    fn toml_definition_loads() {
        let dir = tempfile::tempdir().unwrap();
        mtx::write_symmetric(&dir.path().join("k.mtx"), &diag(&[2.0, 3.0])).unwrap();
        mtx::write_symmetric(&dir.path().join("m.mtx"), &diag(&[1.0, 1.0])).unwrap();
        let text = "d = 1\ndomain = [[0.0, 1.0]]\n[[termsA]]\ncoeff = \"1 + w1\"\nmatrix = \"k.mtx\"\n[[termsB]]\ncoeff = \"1\"\nmatrix = \"m.mtx\"\n";
        let path = dir.path().join("p.toml");
        std::fs::write(&path, text).unwrap();
        let p = load(&path).unwrap();
        assert_eq!(p.assemble_a(&[1.0]).unwrap().to_dense()[(1, 1)], 6.0);
    }

    #[test]
    fn missing_matrix_reports_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        std::fs::write(&path, r#"{"d":1,"domain":[[0,1]],"termsA":[{"coeff":"1","matrix":"nope.mtx"}],"termsB":[{"coeff":"1","matrix":"nope.mtx"}]}"#).unwrap();
        let msg = load(&path).unwrap_err().to_string();
        assert!(msg.contains("nope.mtx"), "{msg}");
    }
}
