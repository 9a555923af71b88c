//! Checks shared by the property tests and the acceptance run. Each returns
//! the measured quantity so callers decide on the tolerance.
#![allow(dead_code)]

use evans_parity::dichotomy::{
    analyze_half_axis, estimate_projector_at, has_dichotomy, DichotomyConfig, HalfAxis,
};
use evans_parity::evans::{evans_curve, EvansConfig};
use evans_parity::linalg::subspace_distance;
use evans_parity::ode::{transition_matrix, AdjointEquation, IntegratorConfig, VariationEquation};
use evans_parity::ModelSpec;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const HORIZON: f64 = 10.0;

pub fn builtins() -> Vec<ModelSpec> {
    vec![
        ModelSpec::example10(),
        ModelSpec::example9(1, 1.0, &["lambda"]).unwrap(),
        ModelSpec::example9(2, 1.0, &["lambda", "0", "0", "lambda"]).unwrap(),
        ModelSpec::proto(1.0, -0.09).unwrap(),
    ]
}

/// λ values in ±[0.05, 0.5], away from the critical value 0 of the builtins.
pub fn sample_lambdas(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let l: f64 = rng.random_range(0.05..0.5);
            if rng.random_bool(0.5) {
                l
            } else {
                -l
            }
        })
        .collect()
}

fn frob(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

/// max ‖P² − P‖ over the half-line and whole-line projectors at τ = 0.
pub fn idempotence_defect(m: &ModelSpec, lambda: f64) -> f64 {
    let cfg = DichotomyConfig::default();
    let sys = VariationEquation::new(m, lambda).unwrap();
    [HalfAxis::Plus, HalfAxis::Minus, HalfAxis::Whole]
        .into_iter()
        .map(|axis| {
            let p = estimate_projector_at(&sys, 0.0, axis, HORIZON, &cfg)
                .unwrap()
                .matrix();
            frob(&(&p * &p - &p)) / frob(&p).max(1.0)
        })
        .fold(0.0, f64::max)
}

/// Relative defect of Φ(t,s)P(s) = P(t)Φ(t,s) for the whole-line projector.
pub fn invariance_error(m: &ModelSpec, lambda: f64, s: f64, t: f64) -> f64 {
    let cfg = DichotomyConfig::default();
    let sys = VariationEquation::new(m, lambda).unwrap();
    let ps = estimate_projector_at(&sys, s, HalfAxis::Whole, HORIZON, &cfg)
        .unwrap()
        .matrix();
    let pt = estimate_projector_at(&sys, t, HalfAxis::Whole, HORIZON, &cfg)
        .unwrap()
        .matrix();
    let phi = transition_matrix(m, lambda, s, t, &cfg.integrator)
        .unwrap()
        .value;
    let lhs = &phi * &ps;
    let rhs = &pt * &phi;
    frob(&(&lhs - &rhs)) / (frob(&lhs) + frob(&rhs)).max(f64::MIN_POSITIVE)
}

/// Relative defect of Φ(t,r)Φ(r,s) = Φ(t,s).
pub fn cocycle_error(m: &ModelSpec, lambda: f64, s: f64, r: f64, t: f64) -> f64 {
    let cfg = IntegratorConfig::default();
    let f = |a, b| transition_matrix(m, lambda, a, b, &cfg).unwrap().value;
    let direct = f(s, t);
    let composed = f(r, t) * f(s, r);
    frob(&(&composed - &direct)) / frob(&direct)
}

pub struct DualCheck {
    /// Distance between the dual projector's range/kernel and those computed
    /// directly from the adjoint equation.
    pub subspace_error: f64,
    /// Exponents of the adjoint equation are the negated forward exponents.
    pub exponent_error: f64,
    /// Every nonzero exponent changes sign.
    pub signs_flip: bool,
}

pub fn dual_check(m: &ModelSpec, lambda: f64) -> DualCheck {
    let cfg = DichotomyConfig::default();
    let sys = VariationEquation::new(m, lambda).unwrap();
    let adj = AdjointEquation(VariationEquation::new(m, lambda).unwrap());
    let p = estimate_projector_at(&sys, 0.0, HalfAxis::Whole, HORIZON, &cfg).unwrap();
    let q = estimate_projector_at(&adj, 0.0, HalfAxis::Whole, HORIZON, &cfg).unwrap();
    let dual = p.dual();
    let subspace_error = if dual.range_frame.rank() == q.range_frame.rank() {
        subspace_distance(&dual.range_frame, &q.range_frame)
            .max(subspace_distance(&dual.kernel_frame, &q.kernel_frame))
    } else {
        f64::INFINITY
    };
    let orig = analyze_half_axis(&sys, 0.0, HalfAxis::Plus, HORIZON, &cfg)
        .unwrap()
        .exponents;
    let adj_exp = analyze_half_axis(&adj, 0.0, HalfAxis::Plus, HORIZON, &cfg)
        .unwrap()
        .exponents;
    let flipped: Vec<f64> = orig.iter().rev().map(|e| -e).collect();
    let exponent_error = flipped
        .iter()
        .zip(&adj_exp)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let signs_flip = orig
        .iter()
        .rev()
        .zip(&adj_exp)
        .all(|(a, b)| a.abs() < 1e-3 || a.signum() == -b.signum());
    DualCheck {
        subspace_error,
        exponent_error,
        signs_flip,
    }
}

/// Grid points where "E = 0" and "no dichotomy on ℝ" disagree.
pub fn evans_hyperbolicity_mismatches(m: &ModelSpec, interval: [f64; 2], n: usize) -> Vec<f64> {
    let cfg = EvansConfig::default();
    let curve = evans_curve(m, interval, n, &cfg).unwrap();
    curve
        .grid
        .iter()
        .zip(&curve.values)
        .filter(|(l, e)| {
            let v =
                has_dichotomy(m, **l, 0.0, HalfAxis::Whole, cfg.horizon, &cfg.dichotomy).unwrap();
            curve.is_zero(**e) == v.dichotomic
        })
        .map(|(l, _)| *l)
        .collect()
}

/// Largest shift of the critical values when the anchor frame is randomized,
/// and whether the count agrees for every seed.
pub fn zero_location_spread(
    m: &ModelSpec,
    interval: [f64; 2],
    n: usize,
    seeds: &[u64],
) -> (f64, bool) {
    let base_cfg = EvansConfig::default();
    let base = evans_curve(m, interval, n, &base_cfg)
        .unwrap()
        .find_critical_values()
        .unwrap();
    let mut spread: f64 = 0.0;
    let mut same_count = true;
    for &seed in seeds {
        let cfg = EvansConfig {
            anchor_seed: Some(seed),
            ..base_cfg
        };
        let other = evans_curve(m, interval, n, &cfg)
            .unwrap()
            .find_critical_values()
            .unwrap();
        if other.len() != base.len() {
            same_count = false;
            continue;
        }
        for (a, b) in base.iter().zip(&other) {
            spread = spread.max((a.lambda - b.lambda).abs());
        }
    }
    (spread, same_count)
}

/// Random matrix path A0 + λA1 + λ²A2 of size n.
pub fn random_path(rng: &mut ChaCha8Rng, n: usize) -> impl Fn(f64) -> DMatrix<f64> + Clone {
    let mut mat = || DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let (a0, a1, a2) = (mat(), mat(), mat());
    move |l: f64| &a0 + &a1 * l + &a2 * (l * l)
}

/// Parity from counting sign changes of det along a fine grid; independent
/// of the endpoint formula.
pub fn parity_by_crossings(
    path: &dyn Fn(f64) -> DMatrix<f64>,
    a: f64,
    b: f64,
    samples: usize,
) -> i8 {
    let mut sign = path(a).determinant().signum();
    let mut parity = 1i8;
    for k in 1..=samples {
        let l = a + (b - a) * k as f64 / samples as f64;
        let s = path(l).determinant().signum();
        if s != sign {
            parity = -parity;
            sign = s;
        }
    }
    parity
}
