//! A finished reduced model with its bound context, persisted as a directory
//! of `manifest.json` plus Matrix Market files.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bounds::{bauer_fike, BoundContext, BoundKind};
use crate::eigcore::{smallest_eigpairs, EigOptions};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::greedy::{evaluate_surrogate, GreedyConfig, GreedyState, SurrogateEval};
use crate::mtx;
use crate::par::{self, Parallelism};
use crate::pencil::{self, AffinePencil, DomainPolicy};
use crate::problems::Fixture;
use crate::reduction::{ColumnSource, ReducedModel, Subspace};

pub const FORMAT_VERSION: u32 = 1;

/// Where the full pencil comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PencilSource {
    File { path: PathBuf },
    Fixture { fixture: Fixture },
}

impl PencilSource {
    pub fn load(&self) -> Result<AffinePencil> {
        match self {
            PencilSource::File { path } => pencil::load(path),
            PencilSource::Fixture { fixture } => Ok(fixture.build()?.pencil),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Manifest {
    format_version: u32,
    pencil: Option<PencilSource>,
    n: usize,
    d: usize,
    dim: usize,
    domain: Vec<[f64; 2]>,
    coeffs_a: Vec<String>,
    coeffs_b: Vec<String>,
    m: usize,
    tol: f64,
    converged: bool,
    bound: BoundContext,
    domain_policy: DomainPolicy,
    deflation_tol: f64,
    provenance: Vec<ColumnSource>,
    config: GreedyConfig,
}

#[derive(Debug, Clone)]
pub struct Surrogate {
    pub model: ReducedModel,
    pub ctx: BoundContext,
    pub m: usize,
    pub tol: f64,
    pub converged: bool,
    pub source: Option<PencilSource>,
    pub domain_policy: DomainPolicy,
    pub config: GreedyConfig,
}

impl Surrogate {
    pub fn from_state(state: &GreedyState, source: Option<PencilSource>, converged: bool) -> Self {
        Self {
            model: state.model.clone(),
            ctx: state.ctx.clone(),
            m: state.cfg.m,
            tol: state.cfg.tol,
            converged,
            source,
            domain_policy: DomainPolicy::Error,
            config: state.cfg.clone(),
        }
    }

    pub fn with_domain_policy(mut self, policy: DomainPolicy) -> Self {
        self.domain_policy = policy;
        self
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn d(&self) -> usize {
        self.model.d()
    }

    fn check_omega(&self, omega: &[f64]) -> Result<()> {
        if omega.len() != self.d() {
            return Err(Error::Dimension(format!("omega has {} entries, surrogate has d = {}", omega.len(), self.d())));
        }
        let inside = omega.iter().zip(self.model.domain()).all(|(w, [a, b])| {
            let slack = 1e-12 * (b - a);
            *w >= a - slack && *w <= b + slack
        });
        if !inside {
            match self.domain_policy {
                DomainPolicy::Error => return Err(Error::OutOfDomain { omega: omega.to_vec() }),
                DomainPolicy::Warn => log::warn!("omega = {omega:?} lies outside the domain box; extrapolating"),
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, omega: &[f64]) -> Result<SurrogateEval> {
        self.check_omega(omega)?;
        evaluate_surrogate(&self.model, &self.ctx, self.m, omega)
    }

    pub fn evaluate_many(&self, points: &[Vec<f64>], par: Parallelism) -> Result<Vec<SurrogateEval>> {
        par::map(par, points, |w| self.evaluate(w)).into_iter().collect()
    }

    /// The full pencil named in the manifest.
    pub fn pencil(&self) -> Result<AffinePencil> {
        self.source
            .as_ref()
            .ok_or_else(|| Error::Manifest("no pencil source recorded".into()))?
            .load()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let rm = &self.model;
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            pencil: self.source.clone(),
            n: rm.n(),
            d: rm.d(),
            dim: rm.dim(),
            domain: rm.domain().to_vec(),
            coeffs_a: rm.coeffs_a().iter().map(Expr::to_string).collect(),
            coeffs_b: rm.coeffs_b().iter().map(Expr::to_string).collect(),
            m: self.m,
            tol: self.tol,
            converged: self.converged,
            bound: self.ctx.clone(),
            domain_policy: self.domain_policy,
            deflation_tol: rm.subspace().deflation_tol(),
            provenance: rm.subspace().provenance().to_vec(),
            config: self.config.clone(),
        };
        mtx::write_dense(&dir.join("basis.mtx"), &rm.subspace().basis())?;
        let write_all = |prefix: &str, mats: &[DMatrix<f64>]| -> Result<()> {
            for (i, m) in mats.iter().enumerate() {
                mtx::write_dense(&dir.join(format!("{prefix}_{}.mtx", i + 1)), m)?;
            }
            Ok(())
        };
        write_all("reduced_a", rm.reduced_a())?;
        write_all("reduced_b", rm.reduced_b())?;
        write_all("tall_a", rm.tall_a())?;
        write_all("tall_b", rm.tall_b())?;
        let path = dir.join("manifest.json");
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let man: Manifest = serde_json::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        if man.format_version != FORMAT_VERSION {
            return Err(Error::Manifest(format!("unsupported format version {}", man.format_version)));
        }
        if man.domain.len() != man.d {
            return Err(Error::Manifest(format!("d = {} but domain has {} intervals", man.d, man.domain.len())));
        }
        let parse = |es: &[String]| -> Result<Vec<Expr>> {
            es.iter()
                .map(|e| Expr::parse(e, man.d).map_err(|err| Error::Manifest(format!("coefficient `{e}`: {err}"))))
                .collect()
        };
        let (coeffs_a, coeffs_b) = (parse(&man.coeffs_a)?, parse(&man.coeffs_b)?);
        let read_all = |prefix: &str, k: usize| -> Result<Vec<DMatrix<f64>>> {
            (1..=k).map(|i| mtx::read_dense(&dir.join(format!("{prefix}_{i}.mtx")))).collect()
        };
        let basis = mtx::read_dense(&dir.join("basis.mtx"))?;
        if basis.shape() != (man.n, man.dim) {
            return Err(Error::Manifest(format!(
                "basis is {}x{}, manifest says {}x{}",
                basis.nrows(),
                basis.ncols(),
                man.n,
                man.dim
            )));
        }
        let subspace = Subspace::from_orthonormal(&basis, man.provenance, man.deflation_tol)?;
        let model = ReducedModel::from_parts(
            subspace,
            coeffs_a,
            coeffs_b,
            man.domain,
            read_all("reduced_a", man.coeffs_a.len())?,
            read_all("reduced_b", man.coeffs_b.len())?,
            read_all("tall_a", man.coeffs_a.len())?,
            read_all("tall_b", man.coeffs_b.len())?,
        )
        .map_err(|e| Error::Manifest(e.to_string()))?;
        Ok(Self {
            model,
            ctx: man.bound,
            m: man.m,
            tol: man.tol,
            converged: man.converged,
            source: man.pencil,
            domain_policy: man.domain_policy,
            config: man.config,
        })
    }
}

/// Surrogate against full solves at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AuditRow {
    pub omega: Vec<f64>,
    pub lambda_true: f64,
    pub lambda: f64,
    pub error: f64,
    pub bound: f64,
    pub kind: BoundKind,
    pub bauer_fike: f64,
    pub gap_estimate: Option<f64>,
    pub lambda2_true: f64,
    /// `λ₂ - λ̃₁`, the distance the Kato-Temple theorem needs.
    pub true_gap: f64,
}

impl AuditRow {
    /// Compares with a roundoff slack of `1e-12 (1 + |λ₁|)`.
    pub fn bound_holds(&self) -> bool {
        self.bound + 1e-12 * (1.0 + self.lambda_true.abs()) >= self.error
    }

    pub fn bauer_fike_holds(&self) -> bool {
        self.bauer_fike + 1e-12 * (1.0 + self.lambda_true.abs()) >= self.error
    }

    /// The reduced gap does not overestimate the true one.
    pub fn gap_conservative(&self) -> bool {
        self.gap_estimate.is_some_and(|g| g <= self.true_gap)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AuditReport {
    pub tol: f64,
    pub points: usize,
    pub max_error: f64,
    pub max_bound: f64,
    /// Fraction of points where the selected bound is at least the error.
    pub bound_coverage: f64,
    pub bauer_fike_coverage: f64,
    pub failures: usize,
    pub rows: Vec<AuditRow>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Full solves at every point for the true `λ₁`, `λ₂` and the surrogate's
/// error.
pub fn audit(s: &Surrogate, p: &AffinePencil, points: &[Vec<f64>], par: Parallelism) -> Result<AuditReport> {
    if p.n() != s.model.n() || p.d() != s.d() {
        return Err(Error::Dimension(format!(
            "pencil (n = {}, d = {}) does not match surrogate (n = {}, d = {})",
            p.n(),
            p.d(),
            s.model.n(),
            s.d()
        )));
    }
    let opts = EigOptions::default();
    let rows = par::map(par, points, |w| -> Result<AuditRow> {
        let ev = s.evaluate(w)?;
        let (a, b) = p.assemble(w)?;
        let r = smallest_eigpairs(&a, &b, 2.min(p.n()), &opts).map_err(|e| e.at(w))?;
        let lambda2_true = r.values.get(1).copied().unwrap_or(f64::INFINITY);
        Ok(AuditRow {
            omega: w.clone(),
            lambda_true: r.values[0],
            lambda: ev.lambda,
            error: (ev.lambda - r.values[0]).abs(),
            bound: ev.bound,
            kind: ev.kind,
            bauer_fike: bauer_fike(ev.residual, &s.ctx),
            gap_estimate: ev.gap,
            lambda2_true,
            true_gap: lambda2_true - ev.lambda,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let count = |f: fn(&AuditRow) -> bool| rows.iter().filter(|r| f(r)).count();
    let npts = rows.len().max(1) as f64;
    Ok(AuditReport {
        tol: s.tol,
        points: rows.len(),
        max_error: rows.iter().map(|r| r.error).fold(0.0, f64::max),
        max_bound: rows.iter().map(|r| r.bound).fold(0.0, f64::max),
        bound_coverage: count(AuditRow::bound_holds) as f64 / npts,
        bauer_fike_coverage: count(AuditRow::bauer_fike_holds) as f64 / npts,
        failures: rows.iter().filter(|r| r.error >= s.tol).count(),
        rows,
    })
}
