//! Greedy construction of the reduced space.
//!
//! After initialization on a coarse grid, each iteration sweeps the active
//! training points for their error bounds, removes points whose bound is
//! below `tol`, and enriches the space at the point with the largest bound.
//! Stored bounds only decrease (`u = min(u_old, u_new)`), so a sweep visiting
//! points in descending stored-bound order can stop as soon as the stored
//! bound of the next point cannot beat the running maximum.

mod grid;

use std::time::{Duration, Instant};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub use grid::Grid;

use crate::bounds::{select_bound, BoundContext, BoundKind, BoundPolicy};
use crate::eigcore::{smallest_eigpairs, EigOptions};
use crate::error::{Error, Result};
use crate::par::{self, Parallelism};
use crate::pencil::AffinePencil;
use crate::reduction::{ColumnSource, ExtendOutcome, ReducedModel, Subspace, VectorKind, DEFAULT_DEFLATION_TOL};
use crate::sensitivity::{BorderedSystem, SIMPLICITY_THRESHOLD};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepMode {
    /// Stop at the first point whose stored bound cannot exceed the running
    /// maximum.
    #[default]
    Skip,
    /// Recompute every active point.
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct GreedyConfig {
    /// Eigenvectors added per sample.
    pub m: usize,
    pub use_derivatives: bool,
    pub tol: f64,
    pub n_max: usize,
    /// Points per dimension; `[3; d]` when empty.
    pub init_grid: Vec<usize>,
    /// Points per dimension; `[25; d]` when empty.
    pub train_grid: Vec<usize>,
    pub simplicity_threshold: f64,
    pub eig: EigOptions,
    pub deflation_tol: f64,
    pub bound_policy: BoundPolicy,
    pub safety_factor: f64,
    /// Reference point for `λ_min(B)`; the domain center when unset.
    pub omega_ref: Option<Vec<f64>>,
    pub sweep: SweepMode,
    pub parallelism: Parallelism,
    /// Points evaluated per parallel batch during a sweep; 0 picks a size
    /// from the thread count.
    pub batch_size: usize,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        Self {
            m: 1,
            use_derivatives: false,
            tol: 1e-5,
            n_max: 200,
            init_grid: Vec::new(),
            train_grid: Vec::new(),
            simplicity_threshold: SIMPLICITY_THRESHOLD,
            eig: EigOptions::default(),
            deflation_tol: DEFAULT_DEFLATION_TOL,
            bound_policy: BoundPolicy::Auto,
            safety_factor: 1.0,
            omega_ref: None,
            sweep: SweepMode::Skip,
            parallelism: Parallelism::Parallel,
            batch_size: 0,
        }
    }
}

impl GreedyConfig {
    pub fn init_counts(&self, d: usize) -> Vec<usize> {
        if self.init_grid.is_empty() {
            vec![3; d]
        } else {
            self.init_grid.clone()
        }
    }

    pub fn train_counts(&self, d: usize) -> Vec<usize> {
        if self.train_grid.is_empty() {
            vec![25; d]
        } else {
            self.train_grid.clone()
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.m == 0 {
            return Err(Error::Config("m must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        let (init, train) = (self.init_counts(d), self.train_counts(d));
        if init.len() != d || train.len() != d {
            return Err(Error::Config(format!("grids need {d} counts, got {} and {}", init.len(), train.len())));
        }
        if init.iter().zip(&train).any(|(i, t)| t <= i) {
            return Err(Error::Config(format!("training grid {train:?} must be finer than the initial grid {init:?}")));
        }
        Ok(())
    }

    fn batch(&self) -> usize {
        if !self.parallelism.is_parallel() {
            1
        } else if self.batch_size > 0 {
            self.batch_size
        } else {
            4 * available_threads()
        }
    }
}

fn available_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Surrogate value and bound at one parameter point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SurrogateEval {
    pub lambda: f64,
    pub bound: f64,
    /// `λ̃₂ - λ̃₁` of the reduced problem, when it has two eigenvalues.
    pub gap: Option<f64>,
    pub residual: f64,
    pub kind: BoundKind,
}

/// Reduced solve, fast residual and the bound chosen by `ctx` for `m`
/// eigenvectors per sample.
pub fn evaluate_surrogate(model: &ReducedModel, ctx: &BoundContext, m: usize, omega: &[f64]) -> Result<SurrogateEval> {
    let eig = model.reduced_min_eigpairs(omega, 2)?;
    let coef = eig.coefs.column(0).into_owned();
    let residual = model.fast_residual_norm(omega, eig.values[0], &coef)?;
    let gap = (eig.values.len() > 1).then(|| eig.values[1] - eig.values[0]);
    let (bound, kind) = select_bound(m, residual, gap, ctx);
    Ok(SurrogateEval { lambda: eig.values[0], bound, gap, residual, kind })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VectorRecord {
    pub omega: Vec<f64>,
    pub kind: VectorKind,
    pub deflated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SamplePoint {
    pub omega: Vec<f64>,
    /// Training-grid index for greedy samples, `None` for initial points.
    pub train_index: Option<usize>,
    pub lambda1: f64,
    /// `λ̃₂ - λ₁` from the eigensolver, infinite for `n = 1`.
    pub gap: f64,
    pub derivatives_skipped: bool,
    pub ritz_residuals: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Timings {
    pub total_s: f64,
    pub init_s: f64,
    pub sweep_s: f64,
    pub enrich_s: f64,
    /// Summed over all eigensolves (across threads during initialization).
    pub eigensolve_s: f64,
    pub eigenvectors: usize,
    pub derivative_s: f64,
    pub derivatives: usize,
}

impl Timings {
    pub fn eigensolve_per_vector(&self) -> f64 {
        if self.eigenvectors == 0 {
            0.0
        } else {
            self.eigensolve_s / self.eigenvectors as f64
        }
    }

    pub fn derivative_per_vector(&self) -> f64 {
        if self.derivatives == 0 {
            0.0
        } else {
            self.derivative_s / self.derivatives as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GreedyReport {
    pub converged: bool,
    pub iterations: usize,
    pub basis_dim: usize,
    /// Initial plus greedy sample points.
    pub sample_count: usize,
    pub sample_points: Vec<SamplePoint>,
    pub samples: Vec<VectorRecord>,
    pub selected: Vec<usize>,
    pub max_bound_trace: Vec<f64>,
    pub bound_evaluations: usize,
    pub timings: Timings,
}

struct Enrichment {
    sample: SamplePoint,
    vectors: Vec<(DVector<f64>, ColumnSource)>,
    eigen_time: Duration,
    derivative_time: Duration,
    derivatives: usize,
}

/// Eigenvectors (and, if the eigenvalue is simple, eigenvector derivatives)
/// of the full problem at `omega`.
fn enrich_at(p: &AffinePencil, cfg: &GreedyConfig, omega: &[f64], inner: Parallelism) -> Result<Enrichment> {
    let t0 = Instant::now();
    let (a, b) = p.assemble(omega)?;
    let want = cfg.m.max(2).min(p.n());
    let ritz = smallest_eigpairs(&a, &b, want, &cfg.eig).map_err(|e| e.at(omega))?;
    let eigen_time = t0.elapsed();
    let gap = if ritz.len() > 1 { ritz.values[1] - ritz.values[0] } else { f64::INFINITY };
    let mut vectors: Vec<(DVector<f64>, ColumnSource)> = (0..cfg.m.min(ritz.len()))
        .map(|k| (ritz.vector(k), ColumnSource { omega: omega.to_vec(), kind: VectorKind::Eigenvector(k + 1) }))
        .collect();

    let t1 = Instant::now();
    let mut derivatives_skipped = false;
    let mut derivatives = 0;
    if cfg.use_derivatives {
        if gap > cfg.simplicity_threshold {
            let x = ritz.vector(0);
            let system = BorderedSystem::new(&a, &b, ritz.values[0], &x).map_err(|e| e.at(omega))?.with_gap(gap);
            let derivs = (0..p.d()).map(|j| p.assemble_derivative(omega, j)).collect::<Result<Vec<_>>>()?;
            for (j, r) in system.solve_all(&derivs, inner).into_iter().enumerate() {
                vectors.push((r.dx, ColumnSource { omega: omega.to_vec(), kind: VectorKind::Derivative(j + 1) }));
                derivatives += 1;
            }
        } else {
            log::info!("omega = {omega:?}: gap {gap:e} below the simplicity threshold; derivatives skipped");
            derivatives_skipped = true;
        }
    }
    Ok(Enrichment {
        sample: SamplePoint {
            omega: omega.to_vec(),
            train_index: None,
            lambda1: ritz.values[0],
            gap,
            derivatives_skipped,
            ritz_residuals: ritz.residual_norms.clone(),
        },
        vectors,
        eigen_time,
        derivative_time: t1.elapsed(),
        derivatives,
    })
}

/// Outcome of one bound sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    /// Training index with the largest bound, when that bound is at least
    /// `tol`.
    pub max_point: Option<usize>,
    pub max_bound: f64,
    pub evaluated: usize,
    pub pruned: usize,
}

#[derive(Debug, Clone)]
pub struct GreedyState {
    pub cfg: GreedyConfig,
    pub model: ReducedModel,
    pub ctx: BoundContext,
    pub train: Grid,
    /// Current bound `u(w)` per training point.
    pub bounds: Vec<f64>,
    pub active: Vec<bool>,
    /// Training points removed because their bound fell below `tol`.
    pub valid: Vec<usize>,
    pub sample_points: Vec<SamplePoint>,
    pub vector_log: Vec<VectorRecord>,
    pub selected: Vec<usize>,
    pub iteration: usize,
    pub max_bound_trace: Vec<f64>,
    pub evaluations: usize,
    pub timings: Timings,
}

impl GreedyState {
    pub fn initialize(p: &AffinePencil, cfg: &GreedyConfig) -> Result<Self> {
        let start = Instant::now();
        cfg.validate(p.d())?;
        let init = Grid::new(p.domain(), &cfg.init_counts(p.d()))?;
        let train = Grid::new(p.domain(), &cfg.train_counts(p.d()))?;
        let omega_ref = cfg.omega_ref.clone().unwrap_or_else(|| p.center());
        let bmin = crate::bounds::reference_bmin(p, &omega_ref)?;
        let ctx = BoundContext::new(bmin, omega_ref, cfg.bound_policy)?.with_safety_factor(cfg.safety_factor);

        let points = init.points();
        let results = par::map(cfg.parallelism, &points, |w| enrich_at(p, cfg, w, Parallelism::Sequential));
        let mut model = ReducedModel::project(p, Subspace::new(p.n(), cfg.deflation_tol))?;
        let mut state = Self {
            cfg: cfg.clone(),
            model: model.clone(),
            ctx,
            bounds: vec![1.0; train.len()],
            active: vec![true; train.len()],
            train,
            valid: Vec::new(),
            sample_points: Vec::new(),
            vector_log: Vec::new(),
            selected: Vec::new(),
            iteration: 0,
            max_bound_trace: Vec::new(),
            evaluations: 0,
            timings: Timings::default(),
        };
        let mut vectors = Vec::new();
        for r in results {
            let r = r?;
            state.account(&r);
            state.sample_points.push(r.sample);
            vectors.extend(r.vectors);
        }
        let outcome = model.extend(p, vectors)?;
        state.log_vectors(&outcome);
        state.model = model;
        state.timings.init_s = start.elapsed().as_secs_f64();
        Ok(state)
    }

    fn account(&mut self, r: &Enrichment) {
        self.timings.eigensolve_s += r.eigen_time.as_secs_f64();
        self.timings.eigenvectors += self.cfg.m.min(self.model.n());
        self.timings.derivative_s += r.derivative_time.as_secs_f64();
        self.timings.derivatives += r.derivatives;
    }

    fn log_vectors(&mut self, outcome: &ExtendOutcome) {
        self.vector_log.extend(
            outcome.offered.iter().map(|(s, deflated)| VectorRecord { omega: s.omega.clone(), kind: s.kind, deflated: *deflated }),
        );
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    pub fn evaluate(&self, omega: &[f64]) -> Result<SurrogateEval> {
        evaluate_surrogate(&self.model, &self.ctx, self.cfg.m, omega)
    }

    /// One bound sweep over the active training points.
    pub fn sweep(&mut self) -> Result<SweepOutcome> {
        let t0 = Instant::now();
        let skip = self.cfg.sweep == SweepMode::Skip;
        let mut order: Vec<usize> = (0..self.bounds.len()).filter(|&i| self.active[i]).collect();
        order.sort_by(|&i, &j| self.bounds[j].total_cmp(&self.bounds[i]).then(i.cmp(&j)));

        let mut best: Option<(usize, f64)> = None;
        // A point cannot beat the running maximum when its stored bound is
        // below it, or equal to it with a larger enumeration index.
        let beaten = |best: Option<(usize, f64)>, i: usize, stored: f64| match best {
            Some((bi, bu)) => stored < bu || (stored == bu && i > bi),
            None => false,
        };
        let batch = self.cfg.batch();
        let mut to_prune = Vec::new();
        let mut evaluated = 0;
        let mut pos = 0;
        'outer: while pos < order.len() {
            let mut chunk = Vec::with_capacity(batch);
            while pos + chunk.len() < order.len() && chunk.len() < batch {
                let i = order[pos + chunk.len()];
                if skip && beaten(best, i, self.bounds[i]) {
                    break;
                }
                chunk.push(i);
            }
            if chunk.is_empty() {
                break;
            }
            let points: Vec<Vec<f64>> = chunk.iter().map(|&i| self.train.point(i)).collect();
            let results = par::map(self.cfg.parallelism, &points, |w| self.evaluate(w));
            for (&i, r) in chunk.iter().zip(results) {
                if skip && beaten(best, i, self.bounds[i]) {
                    break 'outer;
                }
                let u = self.bounds[i].min(r?.bound);
                self.bounds[i] = u;
                evaluated += 1;
                if best.is_none_or(|(bi, bu)| u > bu || (u == bu && i < bi)) {
                    best = Some((i, u));
                }
                if u < self.cfg.tol {
                    to_prune.push(i);
                }
            }
            pos += chunk.len();
        }
        let max_bound = best.map_or(0.0, |(_, u)| u);
        if max_bound < self.cfg.tol {
            // Every remaining stored bound is at most the maximum.
            to_prune = (0..self.active.len()).filter(|&i| self.active[i]).collect();
        }
        to_prune.sort_unstable();
        for &i in &to_prune {
            self.active[i] = false;
            self.valid.push(i);
        }
        self.evaluations += evaluated;
        self.timings.sweep_s += t0.elapsed().as_secs_f64();
        Ok(SweepOutcome {
            max_point: best.filter(|&(_, u)| u >= self.cfg.tol).map(|(i, _)| i),
            max_bound,
            evaluated,
            pruned: to_prune.len(),
        })
    }

    /// Enriches at training point `idx` and removes it from the training set.
    pub fn step(&mut self, p: &AffinePencil, idx: usize) -> Result<()> {
        let t0 = Instant::now();
        let omega = self.train.point(idx);
        let r = enrich_at(p, &self.cfg, &omega, self.cfg.parallelism)?;
        self.account(&r);
        let mut sample = r.sample;
        sample.train_index = Some(idx);
        self.sample_points.push(sample);
        let outcome = self.model.extend(p, r.vectors)?;
        if outcome.added.is_empty() {
            log::warn!("omega = {omega:?}: every new vector deflated");
        }
        self.log_vectors(&outcome);
        self.active[idx] = false;
        self.selected.push(idx);
        self.iteration += 1;
        self.timings.enrich_s += t0.elapsed().as_secs_f64();
        Ok(())
    }

    pub fn report(&self, converged: bool) -> GreedyReport {
        GreedyReport {
            converged,
            iterations: self.iteration,
            basis_dim: self.model.dim(),
            sample_count: self.sample_points.len(),
            sample_points: self.sample_points.clone(),
            samples: self.vector_log.clone(),
            selected: self.selected.clone(),
            max_bound_trace: self.max_bound_trace.clone(),
            bound_evaluations: self.evaluations,
            timings: self.timings.clone(),
        }
    }
}

/// Sweeps and enriches until every training point is certified or `n_max`
/// iterations have run.
pub fn run(p: &AffinePencil, cfg: &GreedyConfig) -> Result<(GreedyState, GreedyReport)> {
    let start = Instant::now();
    let mut state = GreedyState::initialize(p, cfg)?;
    let converged = loop {
        if state.active_count() == 0 {
            break true;
        }
        let sweep = state.sweep()?;
        state.max_bound_trace.push(sweep.max_bound);
        log::debug!(
            "iteration {}: max bound {:e}, {} evaluated, {} pruned, dim {}",
            state.iteration,
            sweep.max_bound,
            sweep.evaluated,
            sweep.pruned,
            state.model.dim()
        );
        let Some(idx) = sweep.max_point else { break true };
        if state.iteration >= cfg.n_max {
            break false;
        }
        state.step(p, idx)?;
    };
    state.timings.total_s = start.elapsed().as_secs_f64();
    let report = state.report(converged);
    Ok((state, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{example1, synthetic_affine, Rotation};

    fn cfg(m: usize, deriv: bool) -> GreedyConfig {
        GreedyConfig { m, use_derivatives: deriv, train_grid: vec![11, 11], ..Default::default() }
    }

    #[test]
    fn converges_and_certifies_training_grid() {
        let p = example1(10, Rotation::Givens { seed: 1 }).unwrap().pencil;
        let (state, report) = run(&p, &cfg(2, true)).unwrap();
        assert!(report.converged);
        assert_eq!(state.active_count(), 0);
        for w in state.train.points() {
            assert!(state.evaluate(&w).unwrap().bound < 1e-5 || state.selected.iter().any(|&i| state.train.point(i) == w));
        }
        assert!(report.max_bound_trace.windows(1).all(|u| u[0].is_finite()));
        assert_eq!(report.sample_count, 9 + report.iterations);
    }

    #[test]
    fn sample_bound_is_tiny() {
        let p = example1(10, Rotation::Givens { seed: 2 }).unwrap().pencil;
        let state = GreedyState::initialize(&p, &cfg(1, false)).unwrap();
        for s in &state.sample_points {
            assert!(state.evaluate(&s.omega).unwrap().bound <= 1e-8);
        }
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let p = synthetic_affine(40, 3, 2, 5).unwrap().pencil;
        let mut c = cfg(1, true);
        c.tol = 1e-7;
        c.parallelism = Parallelism::Sequential;
        let (_, seq) = run(&p, &c).unwrap();
        c.parallelism = Parallelism::Parallel;
        c.batch_size = 3;
        let (_, parl) = run(&p, &c).unwrap();
        assert_eq!(seq.selected, parl.selected);
        assert_eq!(seq.max_bound_trace, parl.max_bound_trace);
        assert_eq!(seq.basis_dim, parl.basis_dim);
    }

    #[test]
    fn n_max_stops_the_loop() {
        let p = synthetic_affine(60, 3, 2, 1).unwrap().pencil;
        let mut c = cfg(1, false);
        c.tol = 1e-12;
        c.n_max = 2;
        let (_, report) = run(&p, &c).unwrap();
        assert!(!report.converged);
        assert_eq!(report.iterations, 2);
    }

    #[test]
    fn rejects_coarse_training_grid() {
        let mut c = cfg(1, false);
        c.train_grid = vec![3, 3];
        assert!(c.validate(2).is_err());
    }
}
