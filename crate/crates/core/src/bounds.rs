//! Residual-based error bounds for an approximate smallest eigenvalue.
//!
//! Both bounds use a single reference value `λ_min(B(w_ref))` for the whole
//! domain. When the gap is itself estimated from the reduced problem, the
//! Kato-Temple value is an estimate rather than a guaranteed bound.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::eigcore::{smallest_eigpairs, EigOptions, SolverMode};
use crate::error::{Error, Result};
use crate::linalg::Operator;
use crate::pencil::AffinePencil;
use crate::sparse::SymmetricSparseMatrix;

pub const DEFAULT_DELTA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundPolicy {
    /// Kato-Temple when more than one eigenvector per sample is used,
    /// Bauer-Fike otherwise.
    #[default]
    Auto,
    BauerFike,
    KatoTemple,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    BauerFike,
    KatoTemple,
    /// Kato-Temple requested but the gap was unavailable or below the floor.
    BauerFikeFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundContext {
    pub bmin_ref: f64,
    pub omega_ref: Vec<f64>,
    pub policy: BoundPolicy,
    /// Multiplies `bmin_ref`; values below 1 make the bounds more conservative.
    pub safety_factor: f64,
    pub delta_floor: f64,
}

impl BoundContext {
    pub fn new(bmin_ref: f64, omega_ref: Vec<f64>, policy: BoundPolicy) -> Result<Self> {
        if !(bmin_ref > 0.0) {
            return Err(Error::NotPositiveDefinite { context: format!("reference lambda_min(B) = {bmin_ref:e}") });
        }
        Ok(Self { bmin_ref, omega_ref, policy, safety_factor: 1.0, delta_floor: DEFAULT_DELTA_FLOOR })
    }

    /// Context at the domain center.
    pub fn for_pencil(p: &AffinePencil, policy: BoundPolicy) -> Result<Self> {
        let w = p.center();
        Self::new(reference_bmin(p, &w)?, w, policy)
    }

    pub fn with_safety_factor(mut self, factor: f64) -> Self {
        self.safety_factor = factor;
        self
    }

    fn bmin(&self) -> f64 {
        self.bmin_ref * self.safety_factor
    }
}

/// `λ_min(B(w_ref))`
pub fn reference_bmin(p: &AffinePencil, omega_ref: &[f64]) -> Result<f64> {
    let b = p.assemble_b(omega_ref)?;
    let i = match &b {
        Operator::Dense(_) => Operator::Dense(DMatrix::identity(b.n(), b.n())),
        Operator::Sparse(_) => Operator::Sparse(SymmetricSparseMatrix::identity(b.n())),
    };
    let opts = EigOptions { mode: SolverMode::Auto, ..Default::default() };
    let r = smallest_eigpairs(&b, &i, 1, &opts).map_err(|e| e.at(omega_ref))?;
    if r.values[0] <= 0.0 {
        return Err(Error::NotPositiveDefinite { context: "B at the reference point".into() }.at(omega_ref));
    }
    Ok(r.values[0])
}

/// `‖r‖ / sqrt(λ_min(B))`
pub fn bauer_fike(res_norm: f64, ctx: &BoundContext) -> f64 {
    res_norm / ctx.bmin().sqrt()
}

/// `‖r‖² / (λ_min(B) δ)`, or the Bauer-Fike value when `δ <= delta_floor`.
pub fn kato_temple(res_norm: f64, delta: f64, ctx: &BoundContext) -> (f64, BoundKind) {
    if delta > ctx.delta_floor && delta.is_finite() {
        (res_norm * res_norm / (ctx.bmin() * delta), BoundKind::KatoTemple)
    } else {
        (bauer_fike(res_norm, ctx), BoundKind::BauerFikeFallback)
    }
}

/// Applies the context policy. `gap` is `λ̃₂ - λ̃₁` of the reduced problem,
/// `None` when the reduced problem has only one eigenvalue.
pub fn select_bound(m: usize, res_norm: f64, gap: Option<f64>, ctx: &BoundContext) -> (f64, BoundKind) {
    let use_kt = match ctx.policy {
        BoundPolicy::Auto => m > 1,
        BoundPolicy::BauerFike => false,
        BoundPolicy::KatoTemple => true,
    };
    if !use_kt {
        return (bauer_fike(res_norm, ctx), BoundKind::BauerFike);
    }
    match gap {
        Some(g) => kato_temple(res_norm, g, ctx),
        None => (bauer_fike(res_norm, ctx), BoundKind::BauerFikeFallback),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ctx(bmin: f64) -> BoundContext {
        BoundContext::new(bmin, vec![0.0], BoundPolicy::Auto).unwrap()
    }

    #[test]
    fn formulas() {
        assert_eq!(bauer_fike(0.0, &ctx(1.0)), 0.0);
        assert_eq!(bauer_fike(1e-3, &ctx(1.0)), 1e-3);
        assert_eq!(bauer_fike(2e-3, &ctx(4.0)), 1e-3);
        let (kt, kind) = kato_temple(1e-3, 0.5, &ctx(1.0));
        assert!((kt - 2e-6).abs() < 1e-20);
        assert_eq!(kind, BoundKind::KatoTemple);
        assert_eq!(kato_temple(0.0, 0.5, &ctx(1.0)).0, 0.0);
    }

    #[test]
    fn selection_and_fallback() {
        let c = ctx(1.0);
        assert_eq!(select_bound(1, 1e-3, Some(1.0), &c), (1e-3, BoundKind::BauerFike));
        let (b, k) = select_bound(2, 1e-3, Some(1.0), &c);
        assert!(b < 1e-3);
        assert_eq!(k, BoundKind::KatoTemple);
        assert_eq!(select_bound(2, 1e-3, Some(1e-13), &c).1, BoundKind::BauerFikeFallback);
        assert_eq!(select_bound(2, 1e-3, None, &c).1, BoundKind::BauerFikeFallback);
    }

    #[test]
    fn rejects_nonpositive_bmin() {
        assert!(BoundContext::new(0.0, vec![], BoundPolicy::Auto).is_err());
    }

    proptest! {
        #[test]
        fn bounds_nonnegative_and_monotone(r1 in 0.0f64..10.0, dr in 0.0f64..10.0, gap in 1e-6f64..10.0, bmin in 1e-3f64..10.0) {
            let c = ctx(bmin);
            let r2 = r1 + dr;
            prop_assert!(bauer_fike(r1, &c) >= 0.0);
            prop_assert!(bauer_fike(r1, &c) <= bauer_fike(r2, &c));
            prop_assert!(kato_temple(r1, gap, &c).0 >= 0.0);
            prop_assert!(kato_temple(r1, gap, &c).0 <= kato_temple(r2, gap, &c).0);
        }

        #[test]
        fn kato_temple_beats_bauer_fike_below_threshold(gap in 1e-3f64..10.0, bmin in 1e-2f64..10.0, frac in 0.0f64..0.999) {
            let c = ctx(bmin);
            let r = frac * gap * bmin.sqrt();
            prop_assume!(r > 0.0);
            prop_assert!(kato_temple(r, gap, &c).0 < bauer_fike(r, &c));
        }
    }
}
