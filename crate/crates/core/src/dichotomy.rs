//! Exponential dichotomies of linear systems on half-lines and on ℝ:
//! projector frames, Morse indices, hyperbolicity tests, the bounded solution
//! of the inhomogeneous equation and the dual projector.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{
    generic_orthogonal, oblique_projector, principal_angles, subspace_distance, Frame,
};
use crate::model::{ModelError, ModelSpec};
use crate::ode::{
    frame_sweep_at, solve, sweep_stops, ForcedFlow, IntegratorConfig, LinearSystem, OdeError,
    SweepRecord, VariationEquation,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HalfAxis {
    Plus,
    Minus,
    Whole,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DichotomyConfig {
    pub integrator: IntegratorConfig,
    /// Smallest exponent separation from the shift that counts as a gap.
    pub gap_threshold: f64,
    /// Allowed subspace change when the horizon is doubled.
    pub frame_tol: f64,
    pub max_horizon: f64,
    /// Smallest principal angle between R(P⁺) and N(P⁻) for a whole-line dichotomy.
    pub transversality_tol: f64,
    /// Seed of the generic initial frames used by the sweeps.
    pub frame_seed: u64,
}

impl Default for DichotomyConfig {
    fn default() -> Self {
        DichotomyConfig {
            integrator: IntegratorConfig::default(),
            gap_threshold: 0.02,
            frame_tol: 1e-6,
            max_horizon: 160.0,
            transversality_tol: 1e-6,
            frame_seed: 0x5eed_f4a3,
        }
    }
}

pub const DEFAULT_HORIZON: f64 = 10.0;

#[derive(Debug, Error)]
pub enum DichotomyError {
    #[error("no spectral gap at gamma = {gamma}: nearest exponent is {gap:.3e} away (threshold {threshold})")]
    NoGap {
        gamma: f64,
        gap: f64,
        threshold: f64,
    },
    #[error("horizon too small: frames still change by {change:.3e} at T = {horizon}")]
    HorizonTooSmall { horizon: f64, change: f64 },
    #[error("Morse indices differ on the half-lines (m+ = {plus}, m- = {minus})")]
    MorseMismatch { plus: usize, minus: usize },
    #[error("stable and unstable subspaces are not transversal (smallest angle {angle:.3e})")]
    NotTransversal { angle: f64 },
    #[error("equation is not hyperbolic on the whole line")]
    Nonhyperbolic,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Ode(#[from] OdeError),
}

impl From<ModelError> for DichotomyError {
    fn from(e: ModelError) -> Self {
        DichotomyError::Ode(OdeError::Model(e))
    }
}

/// Converged sweep data for one half-line starting at `base_time`.
#[derive(Debug, Clone, Serialize)]
pub struct HalfAxisAnalysis {
    pub axis: HalfAxis,
    pub base_time: f64,
    pub horizon: f64,
    /// Forward-time growth exponents, descending.
    pub exponents: Vec<f64>,
    /// Ordered frame at the base time. On ℝ₊ the leading j columns span the
    /// j most forward-decaying directions; on ℝ₋ the j most backward-decaying.
    pub frame: Frame,
    pub constant_estimate: f64,
}

impl HalfAxisAnalysis {
    pub fn dim(&self) -> usize {
        self.exponents.len()
    }

    /// Number of exponents above γ.
    pub fn morse_index(&self, gamma: f64) -> usize {
        self.exponents.iter().filter(|e| **e > gamma).count()
    }

    /// Distance from γ to the nearest exponent.
    pub fn gap(&self, gamma: f64) -> f64 {
        self.exponents
            .iter()
            .map(|e| (e - gamma).abs())
            .fold(f64::INFINITY, f64::min)
    }

    fn leading(&self, k: usize) -> Frame {
        Frame::from_orthonormal(self.frame.columns().columns(0, k).into_owned())
    }

    /// On ℝ₊: R(P⁺_γ(τ)), the directions decaying faster than e^{γt}.
    pub fn stable_frame(&self, gamma: f64) -> Frame {
        debug_assert_eq!(self.axis, HalfAxis::Plus);
        self.leading(self.dim() - self.morse_index(gamma))
    }

    /// On ℝ₋: N(P⁻_γ(τ)), the directions decaying backward faster than e^{γt}.
    pub fn unstable_frame(&self, gamma: f64) -> Frame {
        debug_assert_eq!(self.axis, HalfAxis::Minus);
        self.leading(self.morse_index(gamma))
    }

    /// Sizes of leading blocks separated from the rest by at least `gap`.
    fn split_positions(&self, gap: f64) -> Vec<usize> {
        let d = self.dim();
        let ordered: Vec<f64> = match self.axis {
            HalfAxis::Minus => self.exponents.clone(),
            _ => self.exponents.iter().rev().copied().collect(),
        };
        (1..d)
            .filter(|&j| (ordered[j] - ordered[j - 1]).abs() >= gap)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DichotomyVerdict {
    pub dichotomic: bool,
    /// Exponent separation from the shift (smaller of the two half-lines for `Whole`).
    pub gap: f64,
    /// Valid when dichotomic.
    pub morse_index: usize,
    pub morse_plus: Option<usize>,
    pub morse_minus: Option<usize>,
    /// Smallest principal angle between R(P⁺) and N(P⁻) (whole line only).
    pub min_angle: Option<f64>,
}

/// Both half-line analyses at a common base time.
#[derive(Debug, Clone, Serialize)]
pub struct WholeLineAnalysis {
    pub plus: HalfAxisAnalysis,
    pub minus: HalfAxisAnalysis,
}

impl WholeLineAnalysis {
    pub fn dim(&self) -> usize {
        self.plus.dim()
    }

    /// Whole-line dichotomy test of the γ-shifted equation.
    pub fn verdict(&self, gamma: f64, cfg: &DichotomyConfig) -> DichotomyVerdict {
        let gap = self.plus.gap(gamma).min(self.minus.gap(gamma));
        let mp = self.plus.morse_index(gamma);
        let mm = self.minus.morse_index(gamma);
        let r = self.plus.stable_frame(gamma);
        let n = self.minus.unstable_frame(gamma);
        let angle = if mp == mm {
            principal_angles(&r, &n)
                .first()
                .copied()
                .unwrap_or(std::f64::consts::FRAC_PI_2)
        } else {
            0.0
        };
        let dichotomic = gap >= cfg.gap_threshold && mp == mm && angle > cfg.transversality_tol;
        DichotomyVerdict {
            dichotomic,
            gap,
            morse_index: mp,
            morse_plus: Some(mp),
            morse_minus: Some(mm),
            min_angle: Some(angle),
        }
    }

    /// Fredholm index m⁻ − m⁺ of the linearized operator at γ.
    pub fn fredholm_index(&self, gamma: f64) -> i64 {
        self.minus.morse_index(gamma) as i64 - self.plus.morse_index(gamma) as i64
    }

    /// R(P⁺(τ)) and N(P⁻(τ)) at γ, with the Morse-index check.
    pub fn frames(&self, gamma: f64) -> Result<(Frame, Frame), DichotomyError> {
        let mp = self.plus.morse_index(gamma);
        let mm = self.minus.morse_index(gamma);
        if mp != mm {
            return Err(DichotomyError::MorseMismatch {
                plus: mp,
                minus: mm,
            });
        }
        Ok((
            self.plus.stable_frame(gamma),
            self.minus.unstable_frame(gamma),
        ))
    }
}

/// Sum of per-chunk log R diagonals over records whose chunk starts at or
/// after `from` (measured as distance from the sweep start), divided by the
/// covered time.
fn tail_exponents(records: &[SweepRecord], start: f64, from: f64) -> Vec<f64> {
    let k = records[0].r.ncols();
    let mut sums = vec![0.0; k];
    let mut span = 0.0;
    for w in records.windows(2) {
        if (w[0].time - start).abs() + 1e-12 < from {
            continue;
        }
        let dt = (w[1].time - w[0].time).abs();
        span += dt;
        for (s, v) in sums.iter_mut().zip(w[1].log_diag().iter()) {
            *s += v;
        }
    }
    if span == 0.0 {
        return sums;
    }
    sums.iter().map(|s| s / span).collect()
}

/// Largest excess of cumulative column growth over the asymptotic rate, as a
/// crude stand-in for the dichotomy constant.
fn constant_estimate(records: &[SweepRecord], start: f64, rates: &[f64]) -> f64 {
    let k = rates.len();
    let mut cum = vec![0.0; k];
    let mut worst: f64 = 0.0;
    for r in &records[1..] {
        let elapsed = (r.time - start).abs();
        for (i, v) in r.log_diag().iter().enumerate() {
            cum[i] += v;
            worst = worst.max(cum[i] - rates[i] * elapsed);
        }
    }
    worst.exp().max(1.0)
}

fn half_axis_at_horizon<S: LinearSystem + ?Sized>(
    sys: &S,
    tau: f64,
    axis: HalfAxis,
    horizon: f64,
    cfg: &DichotomyConfig,
) -> Result<HalfAxisAnalysis, DichotomyError> {
    let d = sys.dim();
    let g = generic_orthogonal(d, cfg.frame_seed);
    let dir = match axis {
        HalfAxis::Plus => 1.0,
        HalfAxis::Minus => -1.0,
        HalfAxis::Whole => unreachable!("half-line only"),
    };
    let far = tau + dir * horizon;
    let ri = cfg.integrator.reorth_interval;
    let (exp_sweep, frame_sweep) = rayon::join(
        || frame_sweep_at(sys, &g, &sweep_stops(tau, far, ri), &cfg.integrator),
        || frame_sweep_at(sys, &g, &sweep_stops(far, tau, ri), &cfg.integrator),
    );
    let exp_sweep = exp_sweep?;
    let frame_sweep = frame_sweep?;
    // Column i of the exponent sweep grows at rate ρᵢ in the sweep direction,
    // i.e. at forward rate dir·ρᵢ.
    let rates = tail_exponents(&exp_sweep, tau, 0.5 * horizon);
    let k_hat = constant_estimate(&exp_sweep, tau, &rates);
    let mut exponents: Vec<f64> = rates.iter().map(|r| dir * r).collect();
    exponents.sort_by(|a, b| b.total_cmp(a));
    let frame = Frame::from_orthonormal(frame_sweep.last().expect("non-empty").frame.clone());
    Ok(HalfAxisAnalysis {
        axis,
        base_time: tau,
        horizon,
        exponents,
        frame,
        constant_estimate: k_hat,
    })
}

/// Half-line analysis with horizon doubling from `horizon` until every
/// gapped leading block of the frame moves by at most `frame_tol`.
pub fn analyze_half_axis<S: LinearSystem + ?Sized>(
    sys: &S,
    tau: f64,
    axis: HalfAxis,
    horizon: f64,
    cfg: &DichotomyConfig,
) -> Result<HalfAxisAnalysis, DichotomyError> {
    if !(horizon > 0.0) {
        return Err(DichotomyError::InvalidArgument(
            "horizon must be positive".into(),
        ));
    }
    if axis == HalfAxis::Whole {
        return Err(DichotomyError::InvalidArgument(
            "analyze_half_axis needs plus or minus".into(),
        ));
    }
    let mut t = horizon;
    let mut prev = half_axis_at_horizon(sys, tau, axis, t, cfg)?;
    loop {
        if 2.0 * t > cfg.max_horizon * (1.0 + 1e-12) {
            let change = frame_change(&prev, &prev, cfg);
            return Err(DichotomyError::HorizonTooSmall { horizon: t, change });
        }
        t *= 2.0;
        let cur = half_axis_at_horizon(sys, tau, axis, t, cfg)?;
        let change = frame_change(&prev, &cur, cfg);
        if change <= cfg.frame_tol {
            return Ok(cur);
        }
        if 2.0 * t > cfg.max_horizon * (1.0 + 1e-12) {
            return Err(DichotomyError::HorizonTooSmall { horizon: t, change });
        }
        prev = cur;
    }
}

fn frame_change(a: &HalfAxisAnalysis, b: &HalfAxisAnalysis, cfg: &DichotomyConfig) -> f64 {
    b.split_positions(cfg.gap_threshold)
        .into_iter()
        .map(|j| subspace_distance(&a.leading(j), &b.leading(j)))
        .fold(0.0, f64::max)
}

pub fn analyze_whole_line<S: LinearSystem + ?Sized>(
    sys: &S,
    tau: f64,
    horizon: f64,
    cfg: &DichotomyConfig,
) -> Result<WholeLineAnalysis, DichotomyError> {
    let (plus, minus) = rayon::join(
        || analyze_half_axis(sys, tau, HalfAxis::Plus, horizon, cfg),
        || analyze_half_axis(sys, tau, HalfAxis::Minus, horizon, cfg),
    );
    Ok(WholeLineAnalysis {
        plus: plus?,
        minus: minus?,
    })
}

/// Projector of an exponential dichotomy at a base time, stored as frames.
#[derive(Debug, Clone, Serialize)]
pub struct DichotomyProjector {
    pub half_axis: HalfAxis,
    pub base_time: f64,
    pub horizon: f64,
    pub range_frame: Frame,
    pub kernel_frame: Frame,
    pub morse_index: usize,
    pub rate_estimate: f64,
    pub constant_estimate: f64,
    /// Forward exponents of the half-lines that entered the estimate.
    pub exponents_plus: Option<Vec<f64>>,
    pub exponents_minus: Option<Vec<f64>>,
}

impl DichotomyProjector {
    pub fn dim(&self) -> usize {
        self.range_frame.ambient_dim()
    }

    /// The projector matrix with the stored range and kernel.
    pub fn matrix(&self) -> DMatrix<f64> {
        oblique_projector(&self.range_frame, &self.kernel_frame)
            .expect("range and kernel are complementary by construction")
    }

    /// Projector Q = I − Pᵀ of the dual equation ẋ = −A(t)ᵀx:
    /// R(Q) = R(P)^⊥ and N(Q) = N(P)^⊥.
    pub fn dual(&self) -> DichotomyProjector {
        let flip = |e: &Option<Vec<f64>>| {
            e.as_ref()
                .map(|v| v.iter().rev().map(|x| -x).collect::<Vec<_>>())
        };
        let kernel = self.kernel_frame.complement();
        DichotomyProjector {
            half_axis: self.half_axis,
            base_time: self.base_time,
            horizon: self.horizon,
            range_frame: self.range_frame.complement(),
            morse_index: kernel.rank(),
            kernel_frame: kernel,
            rate_estimate: self.rate_estimate,
            constant_estimate: self.constant_estimate,
            exponents_plus: flip(&self.exponents_plus),
            exponents_minus: flip(&self.exponents_minus),
        }
    }
}

pub fn dual_projector(p: &DichotomyProjector) -> DichotomyProjector {
    p.dual()
}

fn require_gap(a: &HalfAxisAnalysis, cfg: &DichotomyConfig) -> Result<(), DichotomyError> {
    let gap = a.gap(0.0);
    if gap < cfg.gap_threshold {
        return Err(DichotomyError::NoGap {
            gamma: 0.0,
            gap,
            threshold: cfg.gap_threshold,
        });
    }
    Ok(())
}

/// Dichotomy projector of a linear system at base time τ.
pub fn estimate_projector_at<S: LinearSystem + ?Sized>(
    sys: &S,
    tau: f64,
    axis: HalfAxis,
    horizon: f64,
    cfg: &DichotomyConfig,
) -> Result<DichotomyProjector, DichotomyError> {
    match axis {
        HalfAxis::Plus => {
            let a = analyze_half_axis(sys, tau, axis, horizon, cfg)?;
            require_gap(&a, cfg)?;
            let range = a.stable_frame(0.0);
            let kernel = range.complement();
            Ok(DichotomyProjector {
                half_axis: axis,
                base_time: tau,
                horizon: a.horizon,
                morse_index: kernel.rank(),
                range_frame: range,
                kernel_frame: kernel,
                rate_estimate: a.gap(0.0),
                constant_estimate: a.constant_estimate,
                exponents_plus: Some(a.exponents),
                exponents_minus: None,
            })
        }
        HalfAxis::Minus => {
            let a = analyze_half_axis(sys, tau, axis, horizon, cfg)?;
            require_gap(&a, cfg)?;
            let kernel = a.unstable_frame(0.0);
            let range = kernel.complement();
            Ok(DichotomyProjector {
                half_axis: axis,
                base_time: tau,
                horizon: a.horizon,
                morse_index: kernel.rank(),
                range_frame: range,
                kernel_frame: kernel,
                rate_estimate: a.gap(0.0),
                constant_estimate: a.constant_estimate,
                exponents_plus: None,
                exponents_minus: Some(a.exponents),
            })
        }
        HalfAxis::Whole => {
            let w = analyze_whole_line(sys, tau, horizon, cfg)?;
            whole_line_projector(&w, cfg)
        }
    }
}

/// Whole-line projector (range R(P⁺(τ)), kernel N(P⁻(τ))) from an analysis.
pub fn whole_line_projector(
    w: &WholeLineAnalysis,
    cfg: &DichotomyConfig,
) -> Result<DichotomyProjector, DichotomyError> {
    require_gap(&w.plus, cfg)?;
    require_gap(&w.minus, cfg)?;
    let (range, kernel) = w.frames(0.0)?;
    let angle = principal_angles(&range, &kernel)
        .first()
        .copied()
        .unwrap_or(std::f64::consts::FRAC_PI_2);
    if angle <= cfg.transversality_tol {
        return Err(DichotomyError::NotTransversal { angle });
    }
    Ok(DichotomyProjector {
        half_axis: HalfAxis::Whole,
        base_time: w.plus.base_time,
        horizon: w.plus.horizon.max(w.minus.horizon),
        morse_index: kernel.rank(),
        range_frame: range,
        kernel_frame: kernel,
        rate_estimate: w.plus.gap(0.0).min(w.minus.gap(0.0)),
        constant_estimate: w.plus.constant_estimate.max(w.minus.constant_estimate),
        exponents_plus: Some(w.plus.exponents.clone()),
        exponents_minus: Some(w.minus.exponents.clone()),
    })
}

/// Projector of the variation equation at base time 0.
pub fn estimate_projector(
    m: &ModelSpec,
    lambda: f64,
    axis: HalfAxis,
    horizon: f64,
    cfg: &DichotomyConfig,
) -> Result<DichotomyProjector, DichotomyError> {
    let sys = VariationEquation::new(m, lambda)?;
    estimate_projector_at(&sys, 0.0, axis, horizon, cfg)
}

/// Dichotomy test of the γ-shifted variation equation on a half-line or ℝ.
pub fn has_dichotomy(
    m: &ModelSpec,
    lambda: f64,
    gamma: f64,
    interval: HalfAxis,
    horizon: f64,
    cfg: &DichotomyConfig,
) -> Result<DichotomyVerdict, DichotomyError> {
    let sys = VariationEquation::new(m, lambda)?;
    has_dichotomy_linear(&sys, gamma, interval, horizon, cfg)
}

pub fn has_dichotomy_linear<S: LinearSystem + ?Sized>(
    sys: &S,
    gamma: f64,
    interval: HalfAxis,
    horizon: f64,
    cfg: &DichotomyConfig,
) -> Result<DichotomyVerdict, DichotomyError> {
    match interval {
        HalfAxis::Whole => Ok(analyze_whole_line(sys, 0.0, horizon, cfg)?.verdict(gamma, cfg)),
        axis => {
            let a = analyze_half_axis(sys, 0.0, axis, horizon, cfg)?;
            let gap = a.gap(gamma);
            let mi = a.morse_index(gamma);
            Ok(DichotomyVerdict {
                dichotomic: gap >= cfg.gap_threshold,
                gap,
                morse_index: mi,
                morse_plus: (axis == HalfAxis::Plus).then_some(mi),
                morse_minus: (axis == HalfAxis::Minus).then_some(mi),
                min_angle: None,
            })
        }
    }
}

/// Bounded solution of ẋ = A(t)x + g(t) sampled on [−T, T].
#[derive(Debug, Clone, Serialize)]
pub struct InhomogeneousSolution {
    pub times: Vec<f64>,
    pub values: Vec<DVector<f64>>,
    /// ‖ψ̇ − Aψ − g‖_∞ on [−T/2, T/2], derivative by sixth-order differences.
    pub residual: f64,
}

/// Whole-line projectors P(t) at the given increasing times.
pub fn whole_line_projector_path<S: LinearSystem + ?Sized>(
    sys: &S,
    times: &[f64],
    morse_index: usize,
    lead: f64,
    cfg: &DichotomyConfig,
) -> Result<Vec<DMatrix<f64>>, DichotomyError> {
    let d = sys.dim();
    let g = generic_orthogonal(d, cfg.frame_seed);
    let first = times[0];
    let last = *times.last().expect("non-empty");
    let ri = cfg.integrator.reorth_interval;
    let mut back_stops = sweep_stops(last + lead, last, ri);
    back_stops.extend(times.iter().rev().skip(1));
    let mut fwd_stops = sweep_stops(first - lead, first, ri);
    fwd_stops.extend(times.iter().skip(1));
    let (back, fwd) = rayon::join(
        || frame_sweep_at(sys, &g, &back_stops, &cfg.integrator),
        || frame_sweep_at(sys, &g, &fwd_stops, &cfg.integrator),
    );
    let back = back?;
    let fwd = fwd?;
    let n = times.len();
    let k = d - morse_index;
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        let r = &back[back.len() - 1 - j].frame;
        let u = &fwd[fwd.len() - n + j].frame;
        let range = Frame::from_orthonormal(r.columns(0, k).into_owned());
        let kernel = Frame::from_orthonormal(u.columns(0, morse_index).into_owned());
        let p = oblique_projector(&range, &kernel).ok_or(DichotomyError::Nonhyperbolic)?;
        out.push(p);
    }
    Ok(out)
}

/// Bounded solution ψ = ∫ Γ(t,s) g(s) ds of the forced variation equation,
/// truncated to [−T, T].
pub fn solve_inhomogeneous<G>(
    m: &ModelSpec,
    lambda: f64,
    g: G,
    horizon: f64,
    cfg: &DichotomyConfig,
) -> Result<InhomogeneousSolution, DichotomyError>
where
    G: Fn(f64) -> DVector<f64> + Sync,
{
    let sys = VariationEquation::new(m, lambda)?;
    solve_inhomogeneous_linear(&sys, g, horizon, cfg)
}

/// The Green's-function convolution is evaluated step by step: with
/// u(t) = ∫_{−∞}^t Φ(t,s)P(s)g(s)ds and v(t) = −∫_t^∞ Φ(t,s)(I−P(s))g(s)ds,
/// u(tⱼ₊₁) = P(tⱼ₊₁)z(tⱼ₊₁) where ż = Az + g, z(tⱼ) = u(tⱼ), and symmetrically
/// for v backward in time. The recursions start from the frozen-coefficient
/// equilibrium at ±T; the remaining truncation error decays exponentially
/// into the interval.
pub fn solve_inhomogeneous_linear<S, G>(
    sys: &S,
    g: G,
    horizon: f64,
    cfg: &DichotomyConfig,
) -> Result<InhomogeneousSolution, DichotomyError>
where
    S: LinearSystem + ?Sized,
    G: Fn(f64) -> DVector<f64> + Sync,
{
    let d = sys.dim();
    let w = analyze_whole_line(sys, 0.0, DEFAULT_HORIZON.min(horizon.max(1.0)), cfg)?;
    let verdict = w.verdict(0.0, cfg);
    if !verdict.dichotomic {
        return Err(DichotomyError::Nonhyperbolic);
    }
    let n = (2.0 * horizon / 0.05).round().max(12.0) as usize;
    let times: Vec<f64> = (0..=n)
        .map(|j| -horizon + 2.0 * horizon * j as f64 / n as f64)
        .collect();
    let lead = w.plus.horizon.max(w.minus.horizon);
    let proj = whole_line_projector_path(sys, &times, verdict.morse_index, lead, cfg)?;
    let flow = ForcedFlow {
        system: sys,
        forcing: &g,
    };
    let icfg = &cfg.integrator;
    let id = DMatrix::<f64>::identity(d, d);
    // Frozen-coefficient equilibria at the ends as truncation correction;
    // exact for asymptotically autonomous data.
    let frozen = |t: f64| -> Result<DVector<f64>, DichotomyError> {
        let a = sys.coefficients(t)?;
        Ok(a.lu()
            .solve(&g(t))
            .map(|x| -x)
            .unwrap_or_else(|| DVector::zeros(d)))
    };
    let mut u = vec![DVector::zeros(d); n + 1];
    u[0] = &proj[0] * frozen(times[0])?;
    for j in 0..n {
        let z = solve(&flow, times[j], u[j].as_slice(), times[j + 1], icfg, false)?.final_state();
        u[j + 1] = &proj[j + 1] * z;
    }
    let mut v = vec![DVector::zeros(d); n + 1];
    v[n] = (&id - &proj[n]) * frozen(times[n])?;
    for j in (0..n).rev() {
        let z = solve(
            &flow,
            times[j + 1],
            v[j + 1].as_slice(),
            times[j],
            icfg,
            false,
        )?
        .final_state();
        v[j] = (&id - &proj[j]) * z;
    }
    let values: Vec<DVector<f64>> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
    let h = times[1] - times[0];
    let mut residual: f64 = 0.0;
    for j in 3..(n - 2) {
        let t = times[j];
        if t.abs() > 0.5 * horizon + 1e-12 {
            continue;
        }
        let dpsi = (-&values[j - 3] + 9.0 * &values[j - 2] - 45.0 * &values[j - 1]
            + 45.0 * &values[j + 1]
            - 9.0 * &values[j + 2]
            + &values[j + 3])
            / (60.0 * h);
        let r = dpsi - sys.coefficients(t)? * &values[j] - g(t);
        residual = residual.max(r.amax());
    }
    Ok(InhomogeneousSolution {
        times,
        values,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::subspace_distance;
    use crate::ode::{AdjointEquation, ConstantSystem};

    fn cfg() -> DichotomyConfig {
        DichotomyConfig::default()
    }

    #[test]
    fn example10_half_line_projectors() {
        let m = ModelSpec::example10();
        let p = estimate_projector(&m, 0.0, HalfAxis::Plus, 15.0, &cfg()).unwrap();
        assert_eq!(p.morse_index, 1);
        assert!(subspace_distance(&p.range_frame, &Frame::coordinate(2, &[0])) < 1e-8);
        let q = estimate_projector(&m, 0.0, HalfAxis::Minus, 15.0, &cfg()).unwrap();
        assert_eq!(q.morse_index, 1);
        assert!(subspace_distance(&q.kernel_frame, &Frame::coordinate(2, &[0])) < 1e-8);
    }

    #[test]
    fn example9_stable_subspace() {
        let m = ModelSpec::example9(1, 1.0, &["lambda"]).unwrap();
        let p = estimate_projector(&m, 2.0, HalfAxis::Plus, 15.0, &cfg()).unwrap();
        let expected = Frame::orthonormalize(&DMatrix::from_row_slice(2, 1, &[1.0, -1.0]));
        assert!(subspace_distance(&p.range_frame, &expected) < 1e-8);
    }

    #[test]
    fn example10_whole_line_verdicts() {
        let m = ModelSpec::example10();
        let v = has_dichotomy(&m, 0.0, 0.0, HalfAxis::Whole, 10.0, &cfg()).unwrap();
        assert!(!v.dichotomic);
        let v = has_dichotomy(&m, 0.0, 2.0, HalfAxis::Whole, 10.0, &cfg()).unwrap();
        assert!(v.dichotomic);
        assert_eq!(v.morse_index, 0);
        let v = has_dichotomy(&m, 0.0, -2.0, HalfAxis::Whole, 10.0, &cfg()).unwrap();
        assert!(v.dichotomic);
        assert_eq!(v.morse_index, 2);
        let v = has_dichotomy(&m, 0.3, 0.0, HalfAxis::Whole, 10.0, &cfg()).unwrap();
        assert!(v.dichotomic);
        assert_eq!(v.morse_index, 1);
    }

    #[test]
    fn dual_projector_examples() {
        let d = |range: &[f64], kernel: &[f64]| DichotomyProjector {
            half_axis: HalfAxis::Whole,
            base_time: 0.0,
            horizon: 10.0,
            range_frame: Frame::orthonormalize(&DMatrix::from_column_slice(
                2,
                range.len() / 2,
                range,
            )),
            kernel_frame: Frame::orthonormalize(&DMatrix::from_column_slice(
                2,
                kernel.len() / 2,
                kernel,
            )),
            morse_index: kernel.len() / 2,
            rate_estimate: 1.0,
            constant_estimate: 1.0,
            exponents_plus: None,
            exponents_minus: None,
        };
        let p = d(&[1.0, 0.0], &[0.0, 1.0]);
        let q = p.dual().matrix();
        assert!((q - DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0])).amax() < 1e-14);

        // P = [[1,0],[c,0]]: range (1,c), kernel e₂
        let c = -0.5;
        let p = d(&[1.0, c], &[0.0, 1.0]);
        let pm = p.matrix();
        assert!((pm.clone() - DMatrix::from_row_slice(2, 2, &[1.0, 0.0, c, 0.0])).amax() < 1e-14);
        let q = p.dual().matrix();
        let expected = DMatrix::from_row_slice(2, 2, &[0.0, -c, 0.0, 1.0]);
        assert!((q.clone() - expected).amax() < 1e-14);
        assert!((q - (DMatrix::identity(2, 2) - pm.transpose())).amax() < 1e-14);

        let p = d(&[], &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(p.matrix(), DMatrix::zeros(2, 2));
        let q = p.dual();
        assert!((q.matrix() - DMatrix::<f64>::identity(2, 2)).amax() < 1e-14);
    }

    #[test]
    fn adjoint_exponents_flip() {
        let m = ModelSpec::example9(1, 1.3, &["lambda"]).unwrap();
        let sys = VariationEquation::new(&m, 0.4).unwrap();
        let a = analyze_half_axis(&sys, 0.0, HalfAxis::Plus, 10.0, &cfg()).unwrap();
        let b =
            analyze_half_axis(&AdjointEquation(&sys), 0.0, HalfAxis::Plus, 10.0, &cfg()).unwrap();
        for (x, y) in a.exponents.iter().zip(b.exponents.iter().rev()) {
            assert!((x + y).abs() < 1e-6, "{:?} {:?}", a.exponents, b.exponents);
        }
    }

    #[test]
    fn inhomogeneous_constant_system() {
        let sys = ConstantSystem(DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]));
        let sol =
            solve_inhomogeneous_linear(&sys, |_| DVector::from_vec(vec![1.0, 1.0]), 20.0, &cfg())
                .unwrap();
        for (t, v) in sol.times.iter().zip(&sol.values) {
            if t.abs() <= 10.0 {
                assert!(
                    (v[0] - 1.0).abs() < 1e-6 && (v[1] + 1.0).abs() < 1e-6,
                    "t={t} {v}"
                );
            }
        }
        let zero = solve_inhomogeneous_linear(&sys, |_| DVector::zeros(2), 10.0, &cfg()).unwrap();
        assert!(zero.values.iter().all(|v| v.amax() == 0.0));
    }

    #[test]
    fn inhomogeneous_example10_residual() {
        let m = ModelSpec::example10();
        let sol = solve_inhomogeneous(
            &m,
            0.5,
            |t: f64| DVector::from_vec(vec![1.0 / t.cosh(), 0.0]),
            20.0,
            &cfg(),
        )
        .unwrap();
        assert!(sol.residual < 1e-6, "residual {}", sol.residual);
    }

    #[test]
    fn nonhyperbolic_forcing_is_rejected() {
        let m = ModelSpec::example10();
        let r = solve_inhomogeneous(&m, 0.0, |_: f64| DVector::zeros(2), 10.0, &cfg());
        assert!(matches!(r, Err(DichotomyError::Nonhyperbolic)));
    }
}
