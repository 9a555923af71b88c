//! Adaptive Dormand–Prince 5(4) integration with dense output, transition
//! matrices and QR-stabilized frame propagation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{qr_positive, Frame};
use crate::model::{ModelError, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    /// Time between QR reorthonormalizations in frame sweeps.
    pub reorth_interval: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_step: 1.0,
            reorth_interval: 1.0,
            max_steps: 2_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), OdeError> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(OdeError::InvalidConfig(
                "tolerances must be positive".into(),
            ));
        }
        if !(self.reorth_interval > 0.0) || !(self.max_step > 0.0) {
            return Err(OdeError::InvalidConfig(
                "reorth_interval and max_step must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum OdeError {
    #[error("step size underflow at t = {t} (h = {h:e}); stiff or blowing up")]
    StepUnderflow { t: f64, h: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("step limit exceeded at t = {t}")]
    TooManySteps { t: f64 },
    #[error("frame rank collapse at t = {t} (R diagonal {value:e})")]
    RankCollapse { t: f64, value: f64 },
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// ẏ = F(t, y) with F smooth between declared breakpoints.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn breakpoints(&self) -> &[f64] {
        &[]
    }
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), OdeError>;
}

/// ẋ = A(t)x.
pub trait LinearSystem: Sync {
    fn dim(&self) -> usize;
    fn breakpoints(&self) -> &[f64] {
        &[]
    }
    fn coefficients(&self, t: f64) -> Result<DMatrix<f64>, OdeError>;
}

/// The variation equation ẋ = D₂f(t, φ_λ(t), λ)x of a model.
#[derive(Debug, Clone)]
pub struct VariationEquation {
    pub model: ModelSpec,
    pub lambda: f64,
}

impl VariationEquation {
    pub fn new(model: &ModelSpec, lambda: f64) -> Result<Self, ModelError> {
        model.check_lambda(lambda)?;
        Ok(VariationEquation {
            model: model.clone(),
            lambda,
        })
    }
}

impl LinearSystem for VariationEquation {
    fn dim(&self) -> usize {
        self.model.dimension()
    }
    fn breakpoints(&self) -> &[f64] {
        self.model.breakpoints()
    }
    fn coefficients(&self, t: f64) -> Result<DMatrix<f64>, OdeError> {
        Ok(self.model.variation_coefficients(self.lambda, t)?)
    }
}

/// The dual equation ẋ = −A(t)ᵀx.
#[derive(Debug, Clone)]
pub struct AdjointEquation<S>(pub S);

impl<S: LinearSystem> LinearSystem for AdjointEquation<S> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn breakpoints(&self) -> &[f64] {
        self.0.breakpoints()
    }
    fn coefficients(&self, t: f64) -> Result<DMatrix<f64>, OdeError> {
        Ok(-self.0.coefficients(t)?.transpose())
    }
}

/// Autonomous ẋ = Ax.
#[derive(Debug, Clone)]
pub struct ConstantSystem(pub DMatrix<f64>);

impl LinearSystem for ConstantSystem {
    fn dim(&self) -> usize {
        self.0.nrows()
    }
    fn coefficients(&self, _t: f64) -> Result<DMatrix<f64>, OdeError> {
        Ok(self.0.clone())
    }
}

impl<S: LinearSystem + ?Sized> LinearSystem for &S {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn breakpoints(&self) -> &[f64] {
        (**self).breakpoints()
    }
    fn coefficients(&self, t: f64) -> Result<DMatrix<f64>, OdeError> {
        (**self).coefficients(t)
    }
}

/// Ẏ = A(t)Y for a d×k matrix Y stored column-major.
pub struct MatrixFlow<'a, S: ?Sized> {
    pub system: &'a S,
    pub columns: usize,
}

impl<S: LinearSystem + ?Sized> OdeSystem for MatrixFlow<'_, S> {
    fn dim(&self) -> usize {
        self.system.dim() * self.columns
    }
    fn breakpoints(&self) -> &[f64] {
        self.system.breakpoints()
    }
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), OdeError> {
        let d = self.system.dim();
        let a = self.system.coefficients(t)?;
        for c in 0..self.columns {
            let col = &y[c * d..(c + 1) * d];
            let out = &mut dy[c * d..(c + 1) * d];
            for (i, o) in out.iter_mut().enumerate() {
                let mut s = 0.0;
                for (j, v) in col.iter().enumerate() {
                    s += a[(i, j)] * v;
                }
                *o = s;
            }
        }
        Ok(())
    }
}

/// ẋ = A(t)x + g(t).
pub struct ForcedFlow<'a, S: ?Sized, G> {
    pub system: &'a S,
    pub forcing: &'a G,
}

impl<S, G> OdeSystem for ForcedFlow<'_, S, G>
where
    S: LinearSystem + ?Sized,
    G: Fn(f64) -> DVector<f64>,
{
    fn dim(&self) -> usize {
        self.system.dim()
    }
    fn breakpoints(&self) -> &[f64] {
        self.system.breakpoints()
    }
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), OdeError> {
        let a = self.system.coefficients(t)?;
        let g = (self.forcing)(t);
        let x = DVector::from_column_slice(y);
        let v = a * x + g;
        dy.copy_from_slice(v.as_slice());
        Ok(())
    }
}

/// ẋ = f(t, x, λ) of a model at fixed λ.
pub struct ModelFlow<'a> {
    pub model: &'a ModelSpec,
    pub lambda: f64,
}

impl OdeSystem for ModelFlow<'_> {
    fn dim(&self) -> usize {
        self.model.dimension()
    }
    fn breakpoints(&self) -> &[f64] {
        self.model.breakpoints()
    }
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), OdeError> {
        Ok(self.model.rhs(t, y, self.lambda, dy)?)
    }
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// One accepted step with its quartic interpolant.
#[derive(Debug, Clone)]
struct DenseStep {
    t0: f64,
    h: f64,
    /// Five coefficient vectors of length `dim`, concatenated.
    coeffs: Vec<f64>,
}

/// Solution of an initial value problem. Dense output is available when the
/// integration was run with `dense = true`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    dim: usize,
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
    dense: Vec<DenseStep>,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Accepted step times, starting with the initial time.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("non-empty trajectory")
    }

    pub fn final_state(&self) -> DVector<f64> {
        DVector::from_column_slice(self.states.last().expect("non-empty trajectory"))
    }

    pub fn has_dense_output(&self) -> bool {
        !self.dense.is_empty() || self.times.len() == 1
    }

    /// State at time t (between t_start and t_end) from the dense interpolant.
    pub fn eval(&self, t: f64) -> DVector<f64> {
        assert!(
            self.has_dense_output(),
            "trajectory was computed without dense output"
        );
        if self.dense.is_empty() {
            return DVector::from_column_slice(&self.states[0]);
        }
        let forward = self.t_end() >= self.t_start();
        // index of the step containing t
        let idx = self
            .dense
            .partition_point(|s| {
                if forward {
                    s.t0 + s.h < t
                } else {
                    s.t0 + s.h > t
                }
            })
            .min(self.dense.len() - 1);
        let s = &self.dense[idx];
        let theta = (t - s.t0) / s.h;
        let theta1 = 1.0 - theta;
        let d = self.dim;
        let r = |k: usize, i: usize| s.coeffs[k * d + i];
        DVector::from_fn(d, |i, _| {
            r(0, i) + theta * (r(1, i) + theta1 * (r(2, i) + theta * (r(3, i) + theta1 * r(4, i))))
        })
    }
}

fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], cfg: &IntegratorConfig) -> f64 {
    let n = err.len().max(1) as f64;
    let s: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = cfg.abs_tol + cfg.rel_tol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (s / n).sqrt()
}

/// Integrates `sys` from (t0, y0) to t1, splitting exactly at breakpoints.
/// Inside each segment the right-hand side is evaluated strictly inside the
/// open segment, so one-sided limits are used at breakpoints.
pub fn solve<S: OdeSystem + ?Sized>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    t1: f64,
    cfg: &IntegratorConfig,
    dense: bool,
) -> Result<Trajectory, OdeError> {
    cfg.validate()?;
    let dim = sys.dim();
    assert_eq!(y0.len(), dim, "initial state has wrong dimension");
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(OdeError::NonFinite { t: t0 });
    }
    let mut traj = Trajectory {
        dim,
        times: vec![t0],
        states: vec![y0.to_vec()],
        dense: Vec::new(),
    };
    if t1 == t0 {
        return Ok(traj);
    }
    let forward = t1 > t0;
    let (lo, hi) = if forward { (t0, t1) } else { (t1, t0) };
    let bps = sys.breakpoints();
    let mut cuts: Vec<f64> = bps.iter().copied().filter(|b| *b > lo && *b < hi).collect();
    if !forward {
        cuts.reverse();
    }
    cuts.push(t1);
    let mut y = y0.to_vec();
    let mut a = t0;
    let mut steps = 0usize;
    for b in cuts {
        let (slo, shi) = if forward { (a, b) } else { (b, a) };
        let is_bp = |x: f64| bps.contains(&x);
        let clamp_lo = if is_bp(slo) { slo.next_up() } else { slo };
        let clamp_hi = if is_bp(shi) { shi.next_down() } else { shi };
        integrate_segment(
            sys,
            a,
            b,
            &mut y,
            (clamp_lo, clamp_hi),
            cfg,
            dense,
            &mut traj,
            &mut steps,
        )?;
        a = b;
    }
    Ok(traj)
}

#[allow(clippy::too_many_arguments)]
fn integrate_segment<S: OdeSystem + ?Sized>(
    sys: &S,
    a: f64,
    b: f64,
    y: &mut [f64],
    clamp: (f64, f64),
    cfg: &IntegratorConfig,
    dense: bool,
    traj: &mut Trajectory,
    steps: &mut usize,
) -> Result<(), OdeError> {
    let n = y.len();
    let dir = if b > a { 1.0 } else { -1.0 };
    let eval = |t: f64, x: &[f64], out: &mut [f64]| -> Result<(), OdeError> {
        sys.rhs(t.clamp(clamp.0, clamp.1), x, out)?;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(OdeError::NonFinite { t });
        }
        Ok(())
    };
    let mut k1 = vec![0.0; n];
    eval(a, y, &mut k1)?;
    let mut h = dir * initial_step(&eval, a, y, &k1, (b - a).abs(), cfg)?;
    let mut t = a;
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut rejected = false;
    loop {
        let remaining = b - t;
        if remaining * dir <= 0.0 {
            break;
        }
        let last = (h.abs() >= remaining.abs()) || (t + h - b) * dir >= 0.0;
        if last {
            h = remaining;
        }
        if h.abs() < 1e-14 * t.abs().max(1.0) && !last {
            return Err(OdeError::StepUnderflow { t, h });
        }
        *steps += 1;
        if *steps > cfg.max_steps {
            return Err(OdeError::TooManySteps { t });
        }
        for i in 0..n {
            tmp[i] = y[i] + h * A21 * k1[i];
        }
        eval(t + C2 * h, &tmp, &mut k2)?;
        for i in 0..n {
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        eval(t + C3 * h, &tmp, &mut k3)?;
        for i in 0..n {
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        eval(t + C4 * h, &tmp, &mut k4)?;
        for i in 0..n {
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        eval(t + C5 * h, &tmp, &mut k5)?;
        for i in 0..n {
            tmp[i] =
                y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        let t_new = if last { b } else { t + h };
        eval(t_new, &tmp, &mut k6)?;
        for i in 0..n {
            ynew[i] =
                y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        eval(t_new, &ynew, &mut k7)?;
        for i in 0..n {
            err[i] =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let e = error_norm(&err, y, &ynew, cfg);
        if !e.is_finite() {
            h *= 0.2;
            rejected = true;
            if h.abs() < 1e-14 * t.abs().max(1.0) {
                return Err(OdeError::NonFinite { t });
            }
            continue;
        }
        if e <= 1.0 {
            if dense {
                let mut coeffs = vec![0.0; 5 * n];
                for i in 0..n {
                    let ydiff = ynew[i] - y[i];
                    let bspl = h * k1[i] - ydiff;
                    coeffs[i] = y[i];
                    coeffs[n + i] = ydiff;
                    coeffs[2 * n + i] = bspl;
                    coeffs[3 * n + i] = ydiff - h * k7[i] - bspl;
                    coeffs[4 * n + i] = h
                        * (D1 * k1[i]
                            + D3 * k3[i]
                            + D4 * k4[i]
                            + D5 * k5[i]
                            + D6 * k6[i]
                            + D7 * k7[i]);
                }
                traj.dense.push(DenseStep { t0: t, h, coeffs });
            }
            y.copy_from_slice(&ynew);
            std::mem::swap(&mut k1, &mut k7);
            t = t_new;
            traj.times.push(t);
            traj.states.push(y.to_vec());
            let mut fac = 0.9 * e.max(1e-10).powf(-0.2);
            fac = fac.clamp(0.2, 10.0);
            if rejected {
                fac = fac.min(1.0);
            }
            rejected = false;
            h = (h * fac).abs().min(cfg.max_step) * dir;
            if last {
                break;
            }
        } else {
            let fac = (0.9 * e.powf(-0.2)).clamp(0.2, 1.0);
            h *= fac;
            rejected = true;
            if h.abs() < 1e-14 * t.abs().max(1.0) {
                return Err(OdeError::StepUnderflow { t, h });
            }
        }
    }
    Ok(())
}

fn initial_step(
    eval: &impl Fn(f64, &[f64], &mut [f64]) -> Result<(), OdeError>,
    t: f64,
    y: &[f64],
    f0: &[f64],
    span: f64,
    cfg: &IntegratorConfig,
) -> Result<f64, OdeError> {
    let n = y.len().max(1) as f64;
    let sc = |v: f64| cfg.abs_tol + cfg.rel_tol * v.abs();
    let d0 = (y.iter().map(|v| (v / sc(*v)).powi(2)).sum::<f64>() / n).sqrt();
    let d1 = (f0
        .iter()
        .zip(y)
        .map(|(f, v)| (f / sc(*v)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h0 = h0.min(span).min(cfg.max_step);
    let y1: Vec<f64> = y.iter().zip(f0).map(|(v, f)| v + h0 * f).collect();
    let mut f1 = vec![0.0; y.len()];
    let dir = if span >= 0.0 { 1.0 } else { -1.0 };
    eval(t + dir * h0, &y1, &mut f1)?;
    let d2 = (f1
        .iter()
        .zip(f0)
        .zip(y)
        .map(|((a, b), v)| ((a - b) / sc(*v)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt()
        / h0;
    let m = d1.max(d2);
    let h1 = if m <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / m).powf(0.2)
    };
    Ok((100.0 * h0).min(h1).min(span).min(cfg.max_step))
}

/// Solution of the model through (τ, ξ), sampled at the accepted steps with dense output.
pub fn integrate(
    m: &ModelSpec,
    lambda: f64,
    tau: f64,
    xi: &[f64],
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, OdeError> {
    m.check_lambda(lambda)?;
    solve(&ModelFlow { model: m, lambda }, tau, xi, t_end, cfg, true)
}

#[derive(Debug, Clone, Serialize)]
pub struct TransitionMatrix {
    pub value: DMatrix<f64>,
    pub from_time: f64,
    pub to_time: f64,
    pub lambda: f64,
}

/// Φ(t, s) of a linear system, integrated columnwise from the identity
/// (in reversed time when t < s).
pub fn linear_transition_matrix<S: LinearSystem + ?Sized>(
    sys: &S,
    s: f64,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<DMatrix<f64>, OdeError> {
    let d = sys.dim();
    let id = DMatrix::<f64>::identity(d, d);
    if s == t {
        return Ok(id);
    }
    let flow = MatrixFlow {
        system: sys,
        columns: d,
    };
    let traj = solve(&flow, s, id.as_slice(), t, cfg, false)?;
    Ok(DMatrix::from_column_slice(
        d,
        d,
        traj.states.last().expect("non-empty"),
    ))
}

pub fn transition_matrix(
    m: &ModelSpec,
    lambda: f64,
    s: f64,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<TransitionMatrix, OdeError> {
    let sys = VariationEquation::new(m, lambda)?;
    Ok(TransitionMatrix {
        value: linear_transition_matrix(&sys, s, t, cfg)?,
        from_time: s,
        to_time: t,
        lambda,
    })
}

/// State of a QR frame sweep at one reorthonormalization time.
#[derive(Debug, Clone)]
pub struct SweepRecord {
    pub time: f64,
    /// Orthonormal frame at `time`.
    pub frame: DMatrix<f64>,
    /// R factor of the chunk ending at `time` (identity for the first record).
    pub r: DMatrix<f64>,
}

impl SweepRecord {
    pub fn log_diag(&self) -> DVector<f64> {
        DVector::from_fn(self.r.ncols(), |i, _| self.r[(i, i)].ln())
    }
}

/// Propagates an orthonormal frame through the times in `stops`
/// (monotone, first entry is the start) with a QR factorization at each stop.
pub fn frame_sweep_at<S: LinearSystem + ?Sized>(
    sys: &S,
    initial: &DMatrix<f64>,
    stops: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<SweepRecord>, OdeError> {
    let k = initial.ncols();
    let d = sys.dim();
    let mut records = Vec::with_capacity(stops.len());
    records.push(SweepRecord {
        time: stops[0],
        frame: initial.clone(),
        r: DMatrix::identity(k, k),
    });
    if k == 0 {
        for &t in &stops[1..] {
            records.push(SweepRecord {
                time: t,
                frame: DMatrix::zeros(d, 0),
                r: DMatrix::zeros(0, 0),
            });
        }
        return Ok(records);
    }
    let flow = MatrixFlow {
        system: sys,
        columns: k,
    };
    let mut q = initial.clone();
    for w in stops.windows(2) {
        let traj = solve(&flow, w[0], q.as_slice(), w[1], cfg, false)?;
        let y = DMatrix::from_column_slice(d, k, traj.states.last().expect("non-empty"));
        let (qn, r) = qr_positive(&y);
        for i in 0..k {
            let v = r[(i, i)];
            if !(v > 1e-300) {
                return Err(OdeError::RankCollapse { t: w[1], value: v });
            }
        }
        q = qn;
        records.push(SweepRecord {
            time: w[1],
            frame: q.clone(),
            r,
        });
    }
    Ok(records)
}

/// Reorthonormalization stops from s to t spaced by `interval`.
pub fn sweep_stops(s: f64, t: f64, interval: f64) -> Vec<f64> {
    let span = (t - s).abs();
    let n = (span / interval).ceil().max(1.0) as usize;
    let mut stops: Vec<f64> = (0..n).map(|j| s + (t - s) * j as f64 / n as f64).collect();
    stops.push(t);
    stops
}

/// QR-stabilized image of a frame under Φ(t, s) and its finite-time growth
/// exponents (descending, frame columns permuted to match).
pub fn propagate_frame_linear<S: LinearSystem + ?Sized>(
    sys: &S,
    frame: &Frame,
    s: f64,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<(Frame, Vec<f64>), OdeError> {
    cfg.validate()?;
    let k = frame.rank();
    if s == t {
        return Ok((frame.clone(), vec![0.0; k]));
    }
    let records = frame_sweep_at(
        sys,
        frame.columns(),
        &sweep_stops(s, t, cfg.reorth_interval),
        cfg,
    )?;
    let mut sums = vec![0.0; k];
    for r in &records[1..] {
        for (acc, v) in sums.iter_mut().zip(r.log_diag().iter()) {
            *acc += v;
        }
    }
    let span = (t - s).abs();
    let exps: Vec<f64> = sums.iter().map(|v| v / span).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| exps[b].total_cmp(&exps[a]));
    let last = &records.last().expect("non-empty").frame;
    let cols = DMatrix::from_fn(sys.dim(), k, |r, c| last[(r, order[c])]);
    Ok((
        Frame::from_orthonormal(cols),
        order.iter().map(|&i| exps[i]).collect(),
    ))
}

pub fn propagate_frame(
    m: &ModelSpec,
    lambda: f64,
    frame: &Frame,
    s: f64,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<(Frame, Vec<f64>), OdeError> {
    let sys = VariationEquation::new(m, lambda)?;
    propagate_frame_linear(&sys, frame, s, t, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::subspace_distance;

    #[test]
    fn proto_linear_closed_form() {
        let m = ModelSpec::proto(0.0, 0.0).unwrap();
        let cfg = IntegratorConfig::default();
        let traj = integrate(&m, 0.0, 0.0, &[1.0, 1.0], 3.0, &cfg).unwrap();
        for k in 0..=60 {
            let t = 3.0 * k as f64 / 60.0;
            let y = traj.eval(t);
            assert!((y[0] - 1.0 / t.cosh()).abs() < 1e-8);
            assert!((y[1] - t.cosh()).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_length_integration_is_identity() {
        let m = ModelSpec::example10();
        let cfg = IntegratorConfig::default();
        let traj = integrate(&m, 0.3, 1.0, &[0.5, -2.0], 1.0, &cfg).unwrap();
        assert_eq!(traj.final_state().as_slice(), &[0.5, -2.0]);
        let phi = transition_matrix(&m, 0.3, 2.0, 2.0, &cfg).unwrap();
        assert_eq!(phi.value, DMatrix::identity(2, 2));
    }

    #[test]
    fn example10_transition_matrix() {
        let m = ModelSpec::example10();
        let cfg = IntegratorConfig::default();
        let phi = transition_matrix(&m, 0.0, 0.0, 1.0, &cfg).unwrap().value;
        let c = 1f64.cosh();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0 / c, 0.0, 0.0, c]);
        assert!((phi - expected).amax() < 1e-8);
    }

    #[test]
    fn example9_transition_matrix() {
        let m = ModelSpec::example9(1, 1.0, &["lambda"]).unwrap();
        let cfg = IntegratorConfig::default();
        let phi = transition_matrix(&m, 0.0, 0.0, 1.0, &cfg).unwrap().value;
        let e = 1f64.exp();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0 / e, 0.0, 0.0, e]);
        assert!((phi - expected).amax() < 1e-8);
        // the left half-line uses a = α, even at the breakpoint itself
        let back = transition_matrix(&m, 0.0, 0.0, -1.0, &cfg).unwrap().value;
        let expected = DMatrix::from_row_slice(2, 2, &[1.0 / e, 0.0, 0.0, e]);
        assert!((back - expected).amax() < 1e-8);
    }

    #[test]
    fn split_at_breakpoint_is_exact() {
        let m = ModelSpec::example9(1, 1.5, &["lambda"]).unwrap();
        let cfg = IntegratorConfig::default();
        let xi = [0.3, -1.2];
        let whole = integrate(&m, 0.7, -2.0, &xi, 1.5, &cfg)
            .unwrap()
            .final_state();
        let left = integrate(&m, 0.7, -2.0, &xi, 0.0, &cfg)
            .unwrap()
            .final_state();
        let right = integrate(&m, 0.7, 0.0, left.as_slice(), 1.5, &cfg)
            .unwrap()
            .final_state();
        assert!((whole - right).amax() <= 1e-12);
        let phi = transition_matrix(&m, 0.7, -2.0, 1.5, &cfg).unwrap().value;
        let l = transition_matrix(&m, 0.7, -2.0, 0.0, &cfg).unwrap().value;
        let r = transition_matrix(&m, 0.7, 0.0, 1.5, &cfg).unwrap().value;
        assert!((&phi - r * l).amax() < 1e-8 * phi.amax());
    }

    #[test]
    fn frame_exponents() {
        let cfg = IntegratorConfig::default();
        let m = ModelSpec::example10();
        let (f, e) =
            propagate_frame(&m, 0.0, &Frame::coordinate(2, &[0]), 0.0, 20.0, &cfg).unwrap();
        assert!((f.columns()[(0, 0)].abs() - 1.0).abs() < 1e-10);
        assert!((e[0] + 1.0).abs() < 0.05);

        let m = ModelSpec::example9(1, 1.0, &["0"]).unwrap();
        let (_, e) = propagate_frame(&m, 0.0, &Frame::identity(2), 0.0, 10.0, &cfg).unwrap();
        assert!(
            (e[0] - 1.0).abs() < 0.05 && (e[1] + 1.0).abs() < 0.05,
            "{e:?}"
        );

        let (f, e) = propagate_frame(&m, 0.0, &Frame::identity(2), 3.0, 3.0, &cfg).unwrap();
        assert_eq!(f.columns(), &DMatrix::identity(2, 2));
        assert_eq!(e, vec![0.0, 0.0]);
    }

    #[test]
    fn stabilized_frame_matches_direct_propagation() {
        let cfg = IntegratorConfig::default();
        let m = ModelSpec::example10();
        let f0 = Frame::orthonormalize(&DMatrix::from_row_slice(2, 1, &[0.6, 0.8]));
        for lambda in [-0.4, 0.0, 0.3] {
            let (f, _) = propagate_frame(&m, lambda, &f0, -1.0, 4.0, &cfg).unwrap();
            let phi = transition_matrix(&m, lambda, -1.0, 4.0, &cfg)
                .unwrap()
                .value;
            let direct = Frame::orthonormalize(&(phi * f0.columns()));
            assert!(subspace_distance(&f, &direct) < 1e-6);
        }
    }
}
