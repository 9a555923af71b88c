//! Evans function E(λ) = det[ξ⁺(λ) | ξ⁻(λ)] from continued stable/unstable
//! frames, parity of the operator path, bifurcation detection and
//! finite-dimensional parity utilities.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dichotomy::{analyze_whole_line, DichotomyConfig, DichotomyError, DEFAULT_HORIZON};
use crate::linalg::{
    generic_orthogonal, joint_determinant, principal_angles, procrustes_align, Frame,
};
use crate::model::ModelSpec;
use crate::ode::VariationEquation;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvansConfig {
    pub dichotomy: DichotomyConfig,
    pub horizon: f64,
    /// |E| ≤ zero_rel_tol · max|E| counts as zero.
    pub zero_rel_tol: f64,
    pub zero_loc_tol: f64,
    pub angle_zero_tol: f64,
    /// Frame rotation between grid neighbours above which a warning is raised.
    pub angle_step_tol: f64,
    pub lip_factor: f64,
    /// Continuation fails when consecutive frames are further apart than this
    /// (smallest cosine of the principal angles).
    pub min_alignment: f64,
    /// Local minima of |E| below this fraction of max|E| are refined.
    pub refine_ratio: f64,
    /// Replace the leading-minor gauge at λ = a by a random rotation.
    pub anchor_seed: Option<u64>,
}

impl Default for EvansConfig {
    fn default() -> Self {
        EvansConfig {
            dichotomy: DichotomyConfig::default(),
            horizon: DEFAULT_HORIZON,
            zero_rel_tol: 1e-8,
            zero_loc_tol: 1e-6,
            angle_zero_tol: 1e-4,
            angle_step_tol: 0.25,
            lip_factor: 50.0,
            min_alignment: 0.5,
            refine_ratio: 0.05,
            anchor_seed: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum EvansError {
    #[error("Morse indices differ at lambda = {lambda} (m+ = {plus}, m- = {minus})")]
    MorseMismatch {
        lambda: f64,
        plus: usize,
        minus: usize,
    },
    #[error(
        "frame continuation jump at lambda = {lambda} (alignment {alignment:.3}); refine the grid"
    )]
    FrameJump { lambda: f64, alignment: f64 },
    #[error("E vanishes at the endpoint lambda = {lambda} (|E| = {value:.3e})")]
    EndpointNotInvertible { lambda: f64, value: f64 },
    #[error("lambda = {lambda} is not a zero of E (|E| = {value:.3e})")]
    NotAZero { lambda: f64, value: f64 },
    #[error("undefined (non-isolated): E vanishes on a neighbourhood of lambda = {lambda}")]
    NonIsolatedZero { lambda: f64 },
    #[error("singular matrix at the endpoint lambda = {lambda}")]
    SingularEndpoint { lambda: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("projector estimation failed at lambda = {lambda}: {source}")]
    Dichotomy {
        lambda: f64,
        #[source]
        source: DichotomyError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParityKind {
    Interval,
    IndexAtPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParityResult {
    pub value: i8,
    pub interval: [f64; 2],
    pub endpoint_evans: [f64; 2],
    pub kind: ParityKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalKind {
    SignChange,
    InconclusiveZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalValue {
    pub lambda: f64,
    /// `None` when E vanishes on a whole grid neighbourhood.
    pub parity_index: Option<i8>,
    pub kind: CriticalKind,
}

/// Frames and Evans value at one parameter.
#[derive(Debug, Clone, Serialize)]
pub struct EvansPoint {
    pub lambda: f64,
    pub value: f64,
    pub plus_frame: Frame,
    pub minus_frame: Frame,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvansCurve {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub plus_frames: Vec<Frame>,
    pub minus_frames: Vec<Frame>,
    pub morse_plus: usize,
    pub morse_minus: usize,
    pub zero_tol: f64,
    /// Grid-resolution diagnostics (large frame rotations, steep E).
    pub warnings: Vec<String>,
    #[serde(skip)]
    model: ModelSpec,
    #[serde(skip)]
    config: EvansConfig,
}

struct RawFrames {
    plus: Frame,
    minus: Frame,
    morse_plus: usize,
    morse_minus: usize,
}

fn raw_frames(m: &ModelSpec, lambda: f64, cfg: &EvansConfig) -> Result<RawFrames, EvansError> {
    let wrap = |source| EvansError::Dichotomy { lambda, source };
    let sys = VariationEquation::new(m, lambda).map_err(|e| wrap(e.into()))?;
    let w = analyze_whole_line(&sys, 0.0, cfg.horizon, &cfg.dichotomy).map_err(wrap)?;
    Ok(RawFrames {
        plus: w.plus.stable_frame(0.0),
        minus: w.minus.unstable_frame(0.0),
        morse_plus: w.plus.morse_index(0.0),
        morse_minus: w.minus.morse_index(0.0),
    })
}

fn check_morse(lambda: f64, r: &RawFrames) -> Result<(), EvansError> {
    if r.morse_plus != r.morse_minus {
        return Err(EvansError::MorseMismatch {
            lambda,
            plus: r.morse_plus,
            minus: r.morse_minus,
        });
    }
    Ok(())
}

fn random_rotation(f: &Frame, seed: u64) -> Frame {
    let k = f.rank();
    if k == 0 {
        return f.clone();
    }
    Frame::from_orthonormal(f.columns() * generic_orthogonal(k, seed))
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Evans curve of the variation equation on `grid_n` equally spaced
/// parameters of [a, b].
pub fn evans_curve(
    m: &ModelSpec,
    interval: [f64; 2],
    grid_n: usize,
    cfg: &EvansConfig,
) -> Result<EvansCurve, EvansError> {
    let [a, b] = interval;
    if !(a <= b) || grid_n == 0 || (grid_n == 1 && a != b) {
        return Err(EvansError::InvalidArgument(format!(
            "need a <= b and at least two grid points, got [{a}, {b}] with {grid_n}"
        )));
    }
    for l in [a, b] {
        m.check_lambda(l).map_err(|e| EvansError::Dichotomy {
            lambda: l,
            source: e.into(),
        })?;
    }
    let grid: Vec<f64> = if grid_n == 1 {
        vec![a]
    } else {
        (0..grid_n)
            .map(|k| a + (b - a) * k as f64 / (grid_n - 1) as f64)
            .collect()
    };
    let raw: Vec<RawFrames> = grid
        .par_iter()
        .map(|&l| raw_frames(m, l, cfg))
        .collect::<Result<_, _>>()?;
    check_morse(a, &raw[0])?;
    let (mp, mm) = (raw[0].morse_plus, raw[0].morse_minus);

    let mut warnings = Vec::new();
    let mut plus_frames: Vec<Frame> = Vec::with_capacity(grid_n);
    let mut minus_frames: Vec<Frame> = Vec::with_capacity(grid_n);
    for (k, r) in raw.into_iter().enumerate() {
        let l = grid[k];
        check_morse(l, &r)?;
        if r.morse_plus != mp {
            return Err(EvansError::FrameJump {
                lambda: l,
                alignment: 0.0,
            });
        }
        if k == 0 {
            let (mut p, mut q) = (r.plus, r.minus);
            match cfg.anchor_seed {
                Some(seed) => {
                    p = random_rotation(&p, seed);
                    q = random_rotation(&q, seed.wrapping_add(1));
                }
                None => {
                    p.orient_leading_minor();
                    q.orient_leading_minor();
                }
            }
            plus_frames.push(p);
            minus_frames.push(q);
            continue;
        }
        let (p, sp) = procrustes_align(&r.plus, &plus_frames[k - 1]);
        let (q, sq) = procrustes_align(&r.minus, &minus_frames[k - 1]);
        let alignment = sp.min(sq);
        if alignment < cfg.min_alignment {
            return Err(EvansError::FrameJump {
                lambda: l,
                alignment,
            });
        }
        if alignment.clamp(-1.0, 1.0).acos() > cfg.angle_step_tol {
            warnings.push(format!(
                "frames rotate by {:.3} rad between lambda = {} and {}; grid may be too coarse",
                alignment.clamp(-1.0, 1.0).acos(),
                grid[k - 1],
                l
            ));
        }
        plus_frames.push(p);
        minus_frames.push(q);
    }
    let values: Vec<f64> = plus_frames
        .iter()
        .zip(&minus_frames)
        .map(|(p, q)| joint_determinant(p, q))
        .collect();
    let max_abs = values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    for k in 1..values.len() {
        let dl = grid[k] - grid[k - 1];
        if (values[k] - values[k - 1]).abs() > cfg.lip_factor * dl {
            warnings.push(format!(
                "E changes by {:.3e} between lambda = {} and {}; grid may be too coarse",
                values[k] - values[k - 1],
                grid[k - 1],
                grid[k]
            ));
        }
    }
    Ok(EvansCurve {
        grid,
        values,
        plus_frames,
        minus_frames,
        morse_plus: mp,
        morse_minus: mm,
        zero_tol: cfg.zero_rel_tol * max_abs,
        warnings,
        model: m.clone(),
        config: *cfg,
    })
}

impl EvansCurve {
    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn config(&self) -> &EvansConfig {
        &self.config
    }

    pub fn interval(&self) -> [f64; 2] {
        [self.grid[0], *self.grid.last().expect("non-empty grid")]
    }

    fn grid_index(&self, lambda: f64) -> Option<usize> {
        let scale = self.interval()[1]
            .abs()
            .max(self.interval()[0].abs())
            .max(1.0);
        self.grid
            .iter()
            .position(|g| (g - lambda).abs() <= 1e-12 * scale)
    }

    /// E at an arbitrary parameter, with frames aligned to the nearest grid point.
    pub fn evaluate_at(&self, lambda: f64) -> Result<EvansPoint, EvansError> {
        if let Some(k) = self.grid_index(lambda) {
            return Ok(EvansPoint {
                lambda,
                value: self.values[k],
                plus_frame: self.plus_frames[k].clone(),
                minus_frame: self.minus_frames[k].clone(),
            });
        }
        let r = raw_frames(&self.model, lambda, &self.config)?;
        check_morse(lambda, &r)?;
        if r.morse_plus != self.morse_plus {
            return Err(EvansError::FrameJump {
                lambda,
                alignment: 0.0,
            });
        }
        let k = self
            .grid
            .iter()
            .enumerate()
            .min_by(|x, y| (x.1 - lambda).abs().total_cmp(&(y.1 - lambda).abs()))
            .map(|(i, _)| i)
            .expect("non-empty grid");
        let (p, sp) = procrustes_align(&r.plus, &self.plus_frames[k]);
        let (q, sq) = procrustes_align(&r.minus, &self.minus_frames[k]);
        let alignment = sp.min(sq);
        if alignment < self.config.min_alignment {
            return Err(EvansError::FrameJump { lambda, alignment });
        }
        Ok(EvansPoint {
            lambda,
            value: joint_determinant(&p, &q),
            plus_frame: p,
            minus_frame: q,
        })
    }

    pub fn is_zero(&self, value: f64) -> bool {
        value.abs() <= self.zero_tol
    }

    /// σ = sgn E(lo) · sgn E(hi) for a subinterval of the curve's range.
    pub fn parity_between(&self, lo: f64, hi: f64) -> Result<ParityResult, EvansError> {
        let el = self.evaluate_at(lo)?.value;
        let eh = self.evaluate_at(hi)?.value;
        for (l, e) in [(lo, el), (hi, eh)] {
            if self.is_zero(e) {
                return Err(EvansError::EndpointNotInvertible {
                    lambda: l,
                    value: e,
                });
            }
        }
        Ok(ParityResult {
            value: sign(el) * sign(eh),
            interval: [lo, hi],
            endpoint_evans: [el, eh],
            kind: ParityKind::Interval,
        })
    }

    /// Sign-change zero in (lo, hi) refined by bisection on sgn E.
    fn bisect_sign_change(&self, mut lo: f64, mut hi: f64, mut slo: i8) -> Result<f64, EvansError> {
        while hi - lo > self.config.zero_loc_tol {
            let mid = 0.5 * (lo + hi);
            let e = self.evaluate_at(mid)?.value;
            let s = sign(e);
            if s == 0 {
                return Ok(mid);
            }
            if s == slo {
                lo = mid;
                slo = s;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Minimizer of |E| on [lo, hi] by golden-section search.
    fn golden_min(&self, mut lo: f64, mut hi: f64) -> Result<(f64, f64), EvansError> {
        let r = 0.5 * (5f64.sqrt() - 1.0);
        let f = |l: f64| self.evaluate_at(l).map(|p| p.value.abs());
        let mut x1 = hi - r * (hi - lo);
        let mut x2 = lo + r * (hi - lo);
        let mut f1 = f(x1)?;
        let mut f2 = f(x2)?;
        while hi - lo > self.config.zero_loc_tol {
            if f1 <= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - r * (hi - lo);
                f1 = f(x1)?;
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + r * (hi - lo);
                f2 = f(x2)?;
            }
        }
        Ok(if f1 <= f2 { (x1, f1) } else { (x2, f2) })
    }

    /// All zeros of E found on the grid: sign changes (parity index −1) and
    /// zeros without sign change ("critical, inconclusive").
    pub fn find_critical_values(&self) -> Result<Vec<CriticalValue>, EvansError> {
        let n = self.grid.len();
        let z: Vec<bool> = self.values.iter().map(|v| self.is_zero(*v)).collect();
        let max_abs = self.values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let mut out = Vec::new();
        let mut k = 0;
        while k < n {
            if z[k] {
                let start = k;
                while k + 1 < n && z[k + 1] {
                    k += 1;
                }
                let end = k;
                if start > 0 && end + 1 < n {
                    let s = sign(self.values[start - 1]) * sign(self.values[end + 1]);
                    if start == end {
                        out.push(CriticalValue {
                            lambda: self.grid[start],
                            parity_index: Some(s),
                            kind: if s < 0 {
                                CriticalKind::SignChange
                            } else {
                                CriticalKind::InconclusiveZero
                            },
                        });
                    } else {
                        out.push(CriticalValue {
                            lambda: 0.5 * (self.grid[start] + self.grid[end]),
                            parity_index: None,
                            kind: CriticalKind::InconclusiveZero,
                        });
                    }
                }
                k += 1;
                continue;
            }
            if k + 1 < n && !z[k + 1] && sign(self.values[k]) * sign(self.values[k + 1]) < 0 {
                let l =
                    self.bisect_sign_change(self.grid[k], self.grid[k + 1], sign(self.values[k]))?;
                out.push(CriticalValue {
                    lambda: l,
                    parity_index: Some(-1),
                    kind: CriticalKind::SignChange,
                });
            } else if k > 0
                && k + 1 < n
                && !z[k - 1]
                && !z[k + 1]
                && self.values[k].abs() < self.values[k - 1].abs()
                && self.values[k].abs() <= self.values[k + 1].abs()
                && self.values[k].abs() <= self.config.refine_ratio * max_abs
                && sign(self.values[k - 1]) == sign(self.values[k + 1])
            {
                let (l, v) = self.golden_min(self.grid[k - 1], self.grid[k + 1])?;
                if self.is_zero(v) {
                    out.push(CriticalValue {
                        lambda: l,
                        parity_index: Some(1),
                        kind: CriticalKind::InconclusiveZero,
                    });
                }
            }
            k += 1;
        }
        Ok(out)
    }

    /// Grid-bracketed sign changes of E with their parity index (−1).
    pub fn detect_bifurcation_values(&self) -> Result<Vec<(f64, i8)>, EvansError> {
        Ok(self
            .find_critical_values()?
            .into_iter()
            .filter(|c| c.kind == CriticalKind::SignChange)
            .map(|c| (c.lambda, c.parity_index.unwrap_or(-1)))
            .collect())
    }
}

/// σ(T, [a, b]) = sgn E(a) · sgn E(b).
pub fn parity(curve: &EvansCurve) -> Result<ParityResult, EvansError> {
    let [a, b] = curve.interval();
    curve.parity_between(a, b)
}

/// Parity index at an isolated zero λ* of E, from the nearest grid
/// neighbours on either side.
pub fn parity_index(curve: &EvansCurve, lambda_star: f64) -> Result<ParityResult, EvansError> {
    let [a, b] = curve.interval();
    if !(lambda_star > a && lambda_star < b) {
        return Err(EvansError::InvalidArgument(format!(
            "lambda* = {lambda_star} must lie inside ({a}, {b})"
        )));
    }
    let at = curve.evaluate_at(lambda_star)?.value;
    if !curve.is_zero(at) {
        return Err(EvansError::NotAZero {
            lambda: lambda_star,
            value: at,
        });
    }
    let on_grid = curve.grid_index(lambda_star);
    let left = match on_grid {
        Some(k) => k - 1,
        None => curve
            .grid
            .iter()
            .rposition(|g| *g < lambda_star)
            .expect("interior"),
    };
    let right = match on_grid {
        Some(k) => k + 1,
        None => curve
            .grid
            .iter()
            .position(|g| *g > lambda_star)
            .expect("interior"),
    };
    let (el, er) = (curve.values[left], curve.values[right]);
    if curve.is_zero(el) || curve.is_zero(er) {
        return Err(EvansError::NonIsolatedZero {
            lambda: lambda_star,
        });
    }
    Ok(ParityResult {
        value: sign(el) * sign(er),
        interval: [curve.grid[left], curve.grid[right]],
        endpoint_evans: [el, er],
        kind: ParityKind::IndexAtPoint,
    })
}

pub fn detect_bifurcation_values(curve: &EvansCurve) -> Result<Vec<(f64, i8)>, EvansError> {
    curve.detect_bifurcation_values()
}

pub fn find_critical_values(curve: &EvansCurve) -> Result<Vec<CriticalValue>, EvansError> {
    curve.find_critical_values()
}

/// dim(R(P⁺_λ(0)) ∩ N(P⁻_λ(0))): principal angles below `angle_zero_tol`.
pub fn geometric_multiplicity(
    m: &ModelSpec,
    lambda: f64,
    horizon: f64,
    cfg: &EvansConfig,
) -> Result<usize, EvansError> {
    let cfg = EvansConfig { horizon, ..*cfg };
    let r = raw_frames(m, lambda, &cfg)?;
    Ok(principal_angles(&r.plus, &r.minus)
        .into_iter()
        .filter(|a| *a < cfg.angle_zero_tol)
        .count())
}

/// Parity of a finite-dimensional matrix path with an optional partition check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteParity {
    pub result: ParityResult,
    /// Partition points with singular values (skipped).
    pub invalid_points: Vec<f64>,
    /// Product of the subinterval parities over the valid partition points.
    pub partition_product: Option<i8>,
    pub partition_consistent: Option<bool>,
}

fn det_sign(m: &DMatrix<f64>) -> i8 {
    let n = m.nrows();
    let d = m.clone().determinant();
    let scale = m.amax().max(f64::MIN_POSITIVE).powi(n as i32);
    if d.abs() <= 1e-12 * scale {
        0
    } else {
        sign(d)
    }
}

/// σ([a,b]) = sgn det M(a) · sgn det M(b), with the multiplicativity check
/// σ([a,b]) = Π σ(subintervals) over the invertible partition points.
pub fn finite_dim_parity(
    path: impl Fn(f64) -> DMatrix<f64>,
    a: f64,
    b: f64,
    partition: &[f64],
) -> Result<FiniteParity, EvansError> {
    let ma = path(a);
    let mb = path(b);
    let (sa, sb) = (det_sign(&ma), det_sign(&mb));
    if sa == 0 {
        return Err(EvansError::SingularEndpoint { lambda: a });
    }
    if sb == 0 {
        return Err(EvansError::SingularEndpoint { lambda: b });
    }
    let result = ParityResult {
        value: sa * sb,
        interval: [a, b],
        endpoint_evans: [ma.determinant(), mb.determinant()],
        kind: ParityKind::Interval,
    };
    if partition.is_empty() {
        return Ok(FiniteParity {
            result,
            invalid_points: Vec::new(),
            partition_product: None,
            partition_consistent: None,
        });
    }
    let mut points: Vec<f64> = partition
        .iter()
        .copied()
        .filter(|c| *c > a && *c < b)
        .collect();
    points.sort_by(f64::total_cmp);
    let mut invalid = Vec::new();
    let mut signs = vec![sa];
    for c in points {
        match det_sign(&path(c)) {
            0 => invalid.push(c),
            s => signs.push(s),
        }
    }
    signs.push(sb);
    let product: i8 = signs.windows(2).map(|w| w[0] * w[1]).product();
    Ok(FiniteParity {
        result,
        invalid_points: invalid,
        partition_product: Some(product),
        partition_consistent: Some(product == result.value),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finite_parity_examples() {
        let p = finite_dim_parity(|l| DMatrix::from_element(1, 1, l), -1.0, 1.0, &[]).unwrap();
        assert_eq!(p.result.value, -1);
        let p = finite_dim_parity(|l| DMatrix::identity(2, 2) * l, -1.0, 1.0, &[]).unwrap();
        assert_eq!(p.result.value, 1);
        let diag = |l: f64| DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![l, 1.0]));
        let p = finite_dim_parity(diag, -1.0, 1.0, &[0.0]).unwrap();
        assert_eq!(p.invalid_points, vec![0.0]);
        let p = finite_dim_parity(diag, -1.0, 1.0, &[0.5]).unwrap();
        assert_eq!(p.result.value, -1);
        assert_eq!(p.partition_product, Some(-1));
        assert_eq!(p.partition_consistent, Some(true));
        assert!(finite_dim_parity(diag, 0.0, 1.0, &[]).is_err());
    }

    #[test]
    fn example10_sign_change_at_zero() {
        let m = ModelSpec::example10();
        let curve = evans_curve(&m, [-0.5, 0.5], 21, &EvansConfig::default()).unwrap();
        // E ∝ √2πλ with a positive factor
        for (l, e) in curve.grid.iter().zip(&curve.values) {
            if l.abs() > 1e-3 {
                assert_eq!(sign(*e), sign(*l), "lambda {l}: {e}");
            }
        }
        assert_eq!(parity(&curve).unwrap().value, -1);
        let b = curve.detect_bifurcation_values().unwrap();
        assert_eq!(b.len(), 1);
        assert!(b[0].0.abs() < 1e-6 && b[0].1 == -1);
        assert_eq!(parity_index(&curve, 0.0).unwrap().value, -1);
    }

    #[test]
    fn example9_even_zero() {
        let m = ModelSpec::example9(1, 1.0, &["lambda^2"]).unwrap();
        let curve = evans_curve(&m, [-0.5, 0.5], 20, &EvansConfig::default()).unwrap();
        assert!(curve.values.iter().all(|v| *v > 0.0), "{:?}", curve.values);
        assert_eq!(parity(&curve).unwrap().value, 1);
        assert!(curve.detect_bifurcation_values().unwrap().is_empty());
        let c = curve.find_critical_values().unwrap();
        assert_eq!(c.len(), 1, "{c:?}");
        assert_eq!(c[0].kind, CriticalKind::InconclusiveZero);
        assert!(c[0].lambda.abs() < 1e-3);
        assert_eq!(parity_index(&curve, c[0].lambda).unwrap().value, 1);
    }

    #[test]
    fn example9_geometric_multiplicity() {
        let cfg = EvansConfig::default();
        let m = ModelSpec::example9(2, 1.0, &["lambda", "0", "0", "lambda"]).unwrap();
        assert_eq!(geometric_multiplicity(&m, 0.0, 10.0, &cfg).unwrap(), 2);
        assert_eq!(geometric_multiplicity(&m, 0.3, 10.0, &cfg).unwrap(), 0);
        let m = ModelSpec::example10();
        assert_eq!(geometric_multiplicity(&m, 0.0, 10.0, &cfg).unwrap(), 1);
    }
}
