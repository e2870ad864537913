//! Built-in test pencils: small analytic examples with closed-form
//! eigenvalues, random sparse affine pencils and a clamped-chain beam analogue.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::pencil::{AffinePencil, AffineTerm};
use crate::sparse::{CscMatrix, SymmetricSparseMatrix};

/// Closed forms of the two smallest eigenvalues.
#[derive(Clone, Copy)]
pub struct ClosedForm {
    pub lambda1: fn(&[f64]) -> f64,
    pub lambda2: fn(&[f64]) -> f64,
}

impl fmt::Debug for ClosedForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ClosedForm")
    }
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub fixture: Fixture,
    pub pencil: AffinePencil,
    pub closed_form: Option<ClosedForm>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Rotation {
    #[default]
    Identity,
    Givens {
        seed: u64,
    },
}

/// A reproducible fixture description, stored in surrogate manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum Fixture {
    Example1 { n: usize, rotation: Rotation },
    Example3,
    Synthetic { n: usize, m0: usize, m1: usize, seed: u64 },
    Beam { n: usize },
    Random { n: usize, seed: u64 },
}

impl Fixture {
    pub const NAMES: [&'static str; 5] = ["example1", "example3", "synthetic", "beam", "random"];

    /// Fixture by name with the given size and seed (`None` picks each
    /// fixture's default).
    pub fn from_name(name: &str, n: Option<usize>, seed: u64) -> Result<Self> {
        Ok(match name {
            "example1" => Fixture::Example1 { n: n.unwrap_or(50), rotation: Rotation::Givens { seed } },
            "example1-identity" => Fixture::Example1 { n: n.unwrap_or(50), rotation: Rotation::Identity },
            "example3" => Fixture::Example3,
            "synthetic" => Fixture::Synthetic { n: n.unwrap_or(120), m0: 3, m1: 2, seed },
            "beam" => Fixture::Beam { n: n.unwrap_or(120) },
            "random" => Fixture::Random { n: n.unwrap_or(30), seed },
            other => {
                return Err(Error::Config(format!(
                    "unknown fixture `{other}` (expected one of {}, example1-identity)",
                    Self::NAMES.join(", ")
                )))
            }
        })
    }

    pub fn build(&self) -> Result<ProblemSpec> {
        match *self {
            Fixture::Example1 { n, rotation } => example1(n, rotation),
            Fixture::Example3 => example3(),
            Fixture::Synthetic { n, m0, m1, seed } => synthetic_affine(n, m0, m1, seed),
            Fixture::Beam { n } => beam_like(n),
            Fixture::Random { n, seed } => random_dense(n, seed),
        }
    }
}

fn term(coeff: &str, d: usize, m: SymmetricSparseMatrix) -> AffineTerm {
    AffineTerm::new(Expr::parse(coeff, d).expect("built-in coefficient parses"), m)
}

fn sym_dense(m: &DMatrix<f64>) -> SymmetricSparseMatrix {
    SymmetricSparseMatrix::from_dense(m).expect("symmetric by construction")
}

fn example1_lambda1(w: &[f64]) -> f64 {
    1.0 - w[0].hypot(w[1])
}

fn example1_lambda2(w: &[f64]) -> f64 {
    1.0 + w[0].hypot(w[1])
}

/// Random orthogonal matrix as a product of `2n` Givens rotations.
fn givens_product(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = DMatrix::identity(n, n);
    for _ in 0..2 * n {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let (s, c) = t.sin_cos();
        for k in 0..n {
            let (a, b) = (w[(i, k)], w[(j, k)]);
            w[(i, k)] = c * a - s * b;
            w[(j, k)] = s * a + c * b;
        }
    }
    w
}

/// `A(w) = W D(w) Wᵀ` with `D = [[1 + w1, w2], [w2, 1 - w1]] ⊕ diag(3..=n)`
/// and `B = I` on `[-0.5, 0.5]²`. The two smallest eigenvalues are
/// `1 ∓ sqrt(w1² + w2²)`.
pub fn example1(n: usize, rotation: Rotation) -> Result<ProblemSpec> {
    if n < 2 {
        return Err(Error::Config(format!("example1 needs n >= 2, got {n}")));
    }
    let mut d0 = DMatrix::zeros(n, n);
    d0[(0, 0)] = 1.0;
    d0[(1, 1)] = 1.0;
    for k in 2..n {
        d0[(k, k)] = (k + 1) as f64;
    }
    let mut d1 = DMatrix::zeros(n, n);
    d1[(0, 0)] = 1.0;
    d1[(1, 1)] = -1.0;
    let mut d2 = DMatrix::zeros(n, n);
    d2[(0, 1)] = 1.0;
    d2[(1, 0)] = 1.0;
    let w = match rotation {
        Rotation::Identity => DMatrix::identity(n, n),
        Rotation::Givens { seed } => givens_product(n, seed),
    };
    let rot = |d: &DMatrix<f64>| sym_dense(&(&w * d * w.transpose()));
    let pencil = AffinePencil::new(
        vec![[-0.5, 0.5], [-0.5, 0.5]],
        vec![term("1", 2, rot(&d0)), term("w1", 2, rot(&d1)), term("w2", 2, rot(&d2))],
        vec![term("1", 2, SymmetricSparseMatrix::identity(n))],
    )?;
    Ok(ProblemSpec {
        fixture: Fixture::Example1 { n, rotation },
        pencil,
        closed_form: Some(ClosedForm { lambda1: example1_lambda1, lambda2: example1_lambda2 }),
    })
}

/// The `n = 2`, `W = I` instance of [`example1`].
pub fn example3() -> Result<ProblemSpec> {
    let mut spec = example1(2, Rotation::Identity)?;
    spec.fixture = Fixture::Example3;
    Ok(spec)
}

/// `‖∂x₁/∂w2‖` of [`example3`] at `(w1, 0)`.
pub fn example3_derivative_norm(w1: f64) -> f64 {
    1.0 / (2.0 * w1.abs())
}

fn random_banded(rng: &mut ChaCha8Rng, n: usize, bandwidth: usize, scale: f64) -> CscMatrix {
    let mut t = Vec::new();
    for i in 0..n {
        for j in i..(i + bandwidth + 1).min(n) {
            let v = scale * (rng.random::<f64>() - 0.5);
            t.push((i, j, v));
            if i != j {
                t.push((j, i, v));
            }
        }
    }
    CscMatrix::from_triplets(n, n, &t).expect("in range")
}

fn row_sum_max(m: &CscMatrix) -> f64 {
    let mut sums = vec![0.0f64; m.nrows()];
    for (r, _, v) in m.triplets() {
        sums[r] += v.abs();
    }
    sums.into_iter().fold(0.0, f64::max)
}

/// Random banded sparse pencil on `[0, 1]²` with smooth coefficients.
/// `B(w)` is diagonally dominant (hence SPD) for every `w` in the domain.
pub fn synthetic_affine(n: usize, m0: usize, m1: usize, seed: u64) -> Result<ProblemSpec> {
    if n < 2 || m0 == 0 || m1 == 0 {
        return Err(Error::Config("synthetic pencil needs n >= 2 and at least one term per side".into()));
    }
    const A_COEFFS: [&str; 6] = ["w1", "w2", "w1*w2", "sin(3*w1)", "cos(2*w2)", "exp(-w1)*w2"];
    // Each bounded by 1 in absolute value on the unit square.
    const B_COEFFS: [&str; 4] = ["w1", "w2", "sin(w1+w2)/2", "w1*w2"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lap = {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 + rng.random::<f64>()));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        CscMatrix::from_triplets(n, n, &t)?
    };
    let mut terms_a = vec![term("1", 2, SymmetricSparseMatrix::new(lap)?)];
    for i in 1..m0 {
        let m = random_banded(&mut rng, n, 2, 0.8);
        terms_a.push(term(A_COEFFS[(i - 1) % A_COEFFS.len()], 2, SymmetricSparseMatrix::new(m)?));
    }
    let b0 = {
        let t: Vec<_> = (0..n).map(|i| (i, i, 2.0 + 0.5 * rng.random::<f64>())).collect();
        CscMatrix::from_triplets(n, n, &t)?
    };
    let mut terms_b = vec![term("1", 2, SymmetricSparseMatrix::new(b0)?)];
    for i in 1..m1 {
        let m = random_banded(&mut rng, n, 1, 1.0);
        let scale = 0.9 / ((m1 - 1) as f64 * row_sum_max(&m));
        let m = CscMatrix::linear_combination(&[scale], &[&m])?;
        terms_b.push(term(B_COEFFS[(i - 1) % B_COEFFS.len()], 2, SymmetricSparseMatrix::new(m)?));
    }
    let pencil = AffinePencil::new(vec![[0.0, 1.0], [0.0, 1.0]], terms_a, terms_b)?;
    Ok(ProblemSpec { fixture: Fixture::Synthetic { n, m0, m1, seed }, pencil, closed_form: None })
}

/// Assembles `[[a, b], [b, a]]` element blocks for elements `lo..hi` of a
/// chain of `n` interior nodes with fixed ends; element `e` joins nodes
/// `e - 1` and `e`.
fn chain_elements(n: usize, lo: usize, hi: usize, a: f64, b: f64) -> SymmetricSparseMatrix {
    let mut t = Vec::new();
    for e in lo..hi {
        let nodes = [e.checked_sub(1), (e < n).then_some(e)];
        for (i, ni) in nodes.iter().enumerate() {
            for (j, nj) in nodes.iter().enumerate() {
                if let (Some(r), Some(c)) = (ni, nj) {
                    t.push((*r, *c, if i == j { a } else { b }));
                }
            }
        }
    }
    SymmetricSparseMatrix::new(CscMatrix::from_triplets(n, n, &t).expect("in range")).expect("symmetric")
}

/// A clamped chain of `n` interior nodes whose right half has its own
/// stiffness and extra mass:
/// `A(w) = w2 (K0 + w1³ K1)`, `B(w) = M0 + w1 M1` on `[0.1, 1] × [100, 1000]`.
/// `K0` and `K1` are linear-element stiffness matrices (scaled by `1e-3`) of
/// the left and right halves, `M0` the consistent mass of the whole chain
/// and `M1` that of the right half.
pub fn beam_like(n: usize) -> Result<ProblemSpec> {
    if n < 4 {
        return Err(Error::Config(format!("beam needs n >= 4, got {n}")));
    }
    let half = n.div_ceil(2);
    let h = 1.0 / (n + 1) as f64;
    let s = 1e-3 / h;
    let k0 = chain_elements(n, 0, half, s, -s);
    let k1 = chain_elements(n, half, n + 1, 8.0 * s, -8.0 * s);
    let m0 = chain_elements(n, 0, n + 1, h / 3.0, h / 6.0);
    let m1 = chain_elements(n, half, n + 1, 2.0 * h / 3.0, h / 3.0);
    let pencil = AffinePencil::new(
        vec![[0.1, 1.0], [100.0, 1000.0]],
        vec![term("w2", 2, k0), term("w2*w1^3", 2, k1)],
        vec![term("1", 2, m0), term("w1", 2, m1)],
    )?;
    Ok(ProblemSpec { fixture: Fixture::Beam { n }, pencil, closed_form: None })
}

/// Dense random pencil on `[0, 1]²`: `A = A0 + w1 A1 + w2² A2`,
/// `B = B0 + sin(w1) B1 + w1 w2 B2` with `B0` well conditioned and the `B`
/// perturbations small enough to keep `B(w)` SPD.
pub fn random_dense(n: usize, seed: u64) -> Result<ProblemSpec> {
    if n < 2 {
        return Err(Error::Config(format!("random pencil needs n >= 2, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sym = |scale: f64| {
        let g = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        (&g + g.transpose()) * (0.5 * scale)
    };
    let (a0, a1, a2) = (sym(2.0), sym(1.0), sym(1.0));
    let (p1, p2) = (sym(1.0), sym(1.0));
    let g = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
    let b0 = &g * g.transpose() / (n as f64) + DMatrix::identity(n, n);
    let shrink = |m: DMatrix<f64>| {
        let norm = m.symmetric_eigenvalues().amax();
        m * (0.2 / norm)
    };
    let (b1, b2) = (shrink(p1), shrink(p2));
    let pencil = AffinePencil::new(
        vec![[0.0, 1.0], [0.0, 1.0]],
        vec![term("1", 2, sym_dense(&a0)), term("w1", 2, sym_dense(&a1)), term("w2^2", 2, sym_dense(&a2))],
        vec![term("1", 2, sym_dense(&b0)), term("sin(w1)", 2, sym_dense(&b1)), term("w1*w2", 2, sym_dense(&b2))],
    )?;
    Ok(ProblemSpec { fixture: Fixture::Random { n, seed }, pencil, closed_form: None })
}

/// Unit vector along coordinate `i`.
pub fn unit(n: usize, i: usize) -> DVector<f64> {
    let mut v = DVector::zeros(n);
    v[i] = 1.0;
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigcore::{full_spectrum, smallest_eigpairs, EigOptions};

    #[test]
    fn example1_assembly_with_identity() {
        let p = example1(4, Rotation::Identity).unwrap().pencil;
        let (a, b) = p.assemble(&[0.3, 0.4]).unwrap();
        let expect = DMatrix::from_row_slice(4, 4, &[1.3, 0.4, 0.0, 0.0, 0.4, 0.7, 0.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 0.0, 4.0]);
        assert!((a.to_dense() - expect).amax() < 1e-15);
        assert_eq!(b.to_dense(), DMatrix::identity(4, 4));
        let (da, db) = p.assemble_derivative(&[0.3, 0.4], 0).unwrap();
        let mut e = DMatrix::zeros(4, 4);
        e[(0, 0)] = 1.0;
        e[(1, 1)] = -1.0;
        assert_eq!(da.to_dense(), e);
        assert_eq!(db.to_dense(), DMatrix::zeros(4, 4));
        let (dda, _) = p.assemble_second_derivative(&[0.3, 0.4], 0, 1).unwrap();
        assert_eq!(dda.to_dense(), DMatrix::zeros(4, 4));
    }

    #[test]
    fn example1_spectrum() {
        let p = example1(5, Rotation::Identity).unwrap().pencil;
        let (a, b) = p.assemble(&[0.3, 0.4]).unwrap();
        let (v, _) = full_spectrum(&a, &b).unwrap();
        for (x, e) in v.iter().zip([0.5, 1.5, 3.0, 4.0, 5.0]) {
            assert!((x - e).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_forms_match_solver() {
        let spec = example1(50, Rotation::Givens { seed: 1 }).unwrap();
        let cf = spec.closed_form.unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let w = [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
            let (a, b) = spec.pencil.assemble(&w).unwrap();
            let r = smallest_eigpairs(&a, &b, 2, &EigOptions::default()).unwrap();
            assert!((r.values[0] - (cf.lambda1)(&w)).abs() < 1e-10);
            assert!((r.values[1] - (cf.lambda2)(&w)).abs() < 1e-10);
        }
    }

    #[test]
    fn fixtures_validate_and_are_deterministic() {
        for name in Fixture::NAMES {
            let f = Fixture::from_name(name, None, 3).unwrap();
            let s = f.build().unwrap();
            s.pencil.validate().unwrap();
            let again = f.build().unwrap();
            let w = s.pencil.center();
            assert_eq!(s.pencil.assemble_a(&w).unwrap(), again.pencil.assemble_a(&w).unwrap());
        }
    }

    #[test]
    fn beam_depends_on_both_parameters() {
        let p = beam_like(40).unwrap().pencil;
        assert!(!p.b_is_constant());
        let (_, db) = p.assemble_derivative(&[0.5, 500.0], 0).unwrap();
        assert!(db.max_abs() > 0.0);
    }

    #[test]
    fn unknown_fixture() {
        assert!(Fixture::from_name("nope", None, 0).is_err());
    }
}
