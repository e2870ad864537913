use eigsur::eigcore::{full_spectrum, smallest_eigpairs, EigOptions};
use eigsur::pencil;
use eigsur::problems::{example1, random_dense, synthetic_affine, Fixture, Rotation};
use eigsur::reduction::{ColumnSource, ReducedModel, Subspace, VectorKind, DEFAULT_DEFLATION_TOL};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn src(i: usize) -> ColumnSource {
    ColumnSource { omega: vec![0.0, 0.0], kind: VectorKind::Eigenvector(i + 1) }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn basis_stays_orthonormal(seed in any::<u64>(), n in 3usize..40, k in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = Subspace::new(n, DEFAULT_DEFLATION_TOL);
        let mut vs: Vec<(DVector<f64>, ColumnSource)> = (0..k)
            .map(|i| (DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5), src(i)))
            .collect();
        // A combination of earlier vectors must deflate.
        let dup = &vs[0].0 * 2.0 - &vs[k - 1].0 * 0.5;
        vs.push((dup, src(k)));
        let out = s.extend(vs).unwrap();
        prop_assert!(s.dim() <= n.min(k));
        prop_assert!(!out.deflated.is_empty());
        prop_assert!(s.orthonormality_error() < 1e-12);
    }

    #[test]
    fn reduced_eigenvalue_bounds_full_from_above(seed in 0u64..1000, w1 in 0.0f64..1.0, w2 in 0.0f64..1.0, k in 1usize..8) {
        let p = random_dense(20, seed).unwrap().pencil;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = Subspace::new(20, DEFAULT_DEFLATION_TOL);
        s.extend((0..k).map(|i| (DVector::from_fn(20, |_, _| rng.random::<f64>() - 0.5), src(i))).collect()).unwrap();
        let model = ReducedModel::project(&p, s).unwrap();
        let w = [w1, w2];
        let (a, b) = p.assemble(&w).unwrap();
        let (full, _) = full_spectrum(&a, &b).unwrap();
        let red = model.reduced_min_eigpairs(&w, k).unwrap();
        for (i, v) in red.values.iter().enumerate() {
            prop_assert!(*v >= full[i] - 1e-10 * (1.0 + full[i].abs()));
        }
    }

    #[test]
    fn fast_residual_matches_explicit(seed in 0u64..1000, w1 in 0.0f64..1.0, w2 in 0.0f64..1.0) {
        let p = synthetic_affine(30, 3, 2, seed).unwrap().pencil;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = Subspace::new(30, DEFAULT_DEFLATION_TOL);
        s.extend((0..5).map(|i| (DVector::from_fn(30, |_, _| rng.random::<f64>() - 0.5), src(i))).collect()).unwrap();
        let model = ReducedModel::project(&p, s).unwrap();
        let w = [w1, w2];
        let e = model.reduced_min_eigpairs(&w, 1).unwrap();
        let y = e.coefs.column(0).into_owned();
        let x = model.lift(&y);
        let (a, b) = p.assemble(&w).unwrap();
        let r = (a.to_dense() * &x - b.to_dense() * &x * e.values[0]).norm();
        let fast = model.fast_residual_norm(&w, e.values[0], &y).unwrap();
        prop_assert!((fast - r).abs() <= 1e-10 * (1.0 + r));
    }
}

#[test]
fn exported_fixture_reloads_identically() {
    let dir = tempfile::tempdir().unwrap();
    for name in Fixture::NAMES {
        let spec = Fixture::from_name(name, Some(12), 2).unwrap().build().unwrap();
        let sub = dir.path().join(name);
        let file = pencil::save(&spec.pencil, &sub).unwrap();
        let q = pencil::load(&file).unwrap();
        let w = spec.pencil.center();
        let (a0, b0) = spec.pencil.assemble(&w).unwrap();
        let (a1, b1) = q.assemble(&w).unwrap();
        assert!((a0.to_dense() - a1.to_dense()).amax() <= 1e-14 * a0.max_abs().max(1.0), "{name}");
        assert!((b0.to_dense() - b1.to_dense()).amax() <= 1e-14 * b0.max_abs().max(1.0), "{name}");
    }
}

#[test]
fn example1_closed_form_on_grid() {
    let spec = example1(50, Rotation::Givens { seed: 9 }).unwrap();
    let cf = spec.closed_form.unwrap();
    for i in 0..5 {
        for j in 0..5 {
            let w = [-0.5 + 0.25 * i as f64, -0.5 + 0.25 * j as f64];
            let (a, b) = spec.pencil.assemble(&w).unwrap();
            let r = smallest_eigpairs(&a, &b, 2, &EigOptions::default()).unwrap();
            assert!((r.values[0] - (cf.lambda1)(&w)).abs() < 1e-12);
            assert!((r.values[1] - (cf.lambda2)(&w)).abs() < 1e-12);
            let x = r.vector(0);
            assert!((x.dot(&(b.to_dense() * &x)) - 1.0).abs() < 1e-12);
        }
    }
}
