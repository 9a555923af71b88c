mod common;

use common::*;
use evans_parity::dichotomy::{analyze_whole_line, DichotomyConfig};
use evans_parity::evans::finite_dim_parity;
use evans_parity::ode::{LinearSystem, OdeError, VariationEquation};
use evans_parity::spectrum::spectrum_linear;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// ẋ = (A(t) + cI)x.
struct Shifted<S>(S, f64);

impl<S: LinearSystem> LinearSystem for Shifted<S> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn breakpoints(&self) -> &[f64] {
        self.0.breakpoints()
    }
    fn coefficients(&self, t: f64) -> Result<DMatrix<f64>, OdeError> {
        let a = self.0.coefficients(t)?;
        let n = a.nrows();
        Ok(a + DMatrix::identity(n, n) * self.1)
    }
}

fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, k) = (a.nrows(), b.nrows());
    let mut m = DMatrix::zeros(n + k, n + k);
    m.view_mut((0, 0), (n, n)).copy_from(a);
    m.view_mut((n, n), (k, k)).copy_from(b);
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn transition_matrices_form_a_cocycle(
        which in 0usize..4,
        lambda in -0.5f64..0.5,
        s in -3.0f64..3.0,
        r in -3.0f64..3.0,
        t in -3.0f64..3.0,
    ) {
        let m = &builtins()[which];
        prop_assert!(cocycle_error(m, lambda, s, r, t) <= 1e-7);
    }

    #[test]
    fn projectors_are_idempotent_and_invariant(
        which in 0usize..4,
        mag in 0.05f64..0.5,
        neg in any::<bool>(),
        s in -2.0f64..2.0,
        dt in 0.1f64..2.0,
    ) {
        let m = &builtins()[which];
        let lambda = if neg { -mag } else { mag };
        prop_assert!(idempotence_defect(m, lambda) <= 1e-8);
        let e = invariance_error(m, lambda, s, s + dt);
        prop_assert!(e <= 1e-6, "invariance error {e}");
    }

    #[test]
    fn spectrum_shifts_with_the_equation(c in -0.8f64..0.8, lambda in 0.1f64..0.5) {
        let cfg = DichotomyConfig::default();
        let m = evans_parity::ModelSpec::example10();
        let base = spectrum_linear(&VariationEquation::new(&m, lambda).unwrap(), None, 1e-3, HORIZON, &cfg).unwrap();
        let shifted = spectrum_linear(&Shifted(VariationEquation::new(&m, lambda).unwrap(), c), None, 1e-3, HORIZON, &cfg).unwrap();
        prop_assert_eq!(base.intervals.len(), shifted.intervals.len());
        for (a, b) in base.intervals.iter().zip(&shifted.intervals) {
            prop_assert!((a.lo + c - b.lo).abs() < 5e-3 && (a.hi + c - b.hi).abs() < 5e-3);
            prop_assert_eq!(a.multiplicity, b.multiplicity);
        }
    }

    #[test]
    fn spectrum_has_at_most_dim_intervals(which in 0usize..4, lambda in -0.5f64..0.5) {
        let m = &builtins()[which];
        let cfg = DichotomyConfig::default();
        let s = evans_parity::spectrum::dichotomy_spectrum(m, lambda, None, 1e-3, HORIZON, &cfg).unwrap();
        prop_assert!(s.intervals.len() <= m.dimension());
        prop_assert_eq!(s.total_multiplicity(), m.dimension());
        prop_assert!(s.intervals.windows(2).all(|w| w[0].hi < w[1].lo));
    }

    #[test]
    fn finite_parity_laws(seed in any::<u64>(), n in 1usize..4, c in -0.9f64..0.9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_path(&mut rng, n);
        let q = random_path(&mut rng, n);
        let Ok(pp) = finite_dim_parity(&p, -1.0, 1.0, &[c]) else { return Ok(()) };
        let Ok(qq) = finite_dim_parity(&q, -1.0, 1.0, &[]) else { return Ok(()) };
        let crossings = parity_by_crossings(&p, -1.0, 1.0, 4000);
        prop_assert_eq!(pp.result.value, crossings);
        if pp.invalid_points.is_empty() {
            prop_assert_eq!(pp.partition_consistent, Some(true));
        }
        let comp = finite_dim_parity(|l| p(l) * q(l), -1.0, 1.0, &[]).unwrap();
        prop_assert_eq!(comp.result.value, pp.result.value * qq.result.value);
        let sum = finite_dim_parity(|l| block_diag(&p(l), &q(l)), -1.0, 1.0, &[]).unwrap();
        prop_assert_eq!(sum.result.value, pp.result.value * qq.result.value);
    }
}

#[test]
fn dual_projectors_match_the_adjoint_equation() {
    for m in builtins() {
        for lambda in sample_lambdas(7, 3) {
            let d = dual_check(&m, lambda);
            assert!(
                d.subspace_error < 1e-6,
                "{}: {}",
                m.name(),
                d.subspace_error
            );
            assert!(
                d.exponent_error < 1e-2,
                "{}: {}",
                m.name(),
                d.exponent_error
            );
            assert!(d.signs_flip);
        }
    }
}

#[test]
fn evans_vanishes_exactly_without_dichotomy() {
    for m in builtins() {
        let bad = evans_hyperbolicity_mismatches(&m, [-0.5, 0.5], 21);
        assert!(bad.is_empty(), "{}: {bad:?}", m.name());
    }
}

#[test]
fn zero_set_does_not_depend_on_the_anchor_frame() {
    for m in builtins() {
        let (spread, same) = zero_location_spread(&m, [-0.5, 0.5], 41, &[1, 2, 3]);
        assert!(same && spread <= 1e-6, "{}: {spread}", m.name());
    }
}

#[test]
fn invertible_paths_have_trivial_parity() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in 1..5 {
        let p = random_path(&mut rng, n);
        // AAᵀ + I is positive definite along the whole path
        let q = move |l: f64| {
            let a = p(l);
            &a * a.transpose() + DMatrix::identity(n, n)
        };
        assert_eq!(
            finite_dim_parity(q, -1.0, 1.0, &[0.3])
                .unwrap()
                .result
                .value,
            1
        );
    }
}

#[test]
fn fredholm_index_is_zero_for_builtins() {
    let cfg = DichotomyConfig::default();
    for m in builtins() {
        let w = analyze_whole_line(
            &VariationEquation::new(&m, 0.2).unwrap(),
            0.0,
            HORIZON,
            &cfg,
        )
        .unwrap();
        assert_eq!(w.fredholm_index(0.0), 0, "{}", m.name());
    }
}
