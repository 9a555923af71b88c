//! Homoclinic solutions x = φ_λ + y with y → 0 at ±∞, computed on [−T, T]
//! by multiple shooting with projection boundary conditions, and natural
//! parameter continuation of branches.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dichotomy::{
    analyze_half_axis, DichotomyConfig, DichotomyError, HalfAxis, DEFAULT_HORIZON,
};
use crate::linalg::{principal_angles, Frame};
use crate::model::ModelSpec;
use crate::ode::{solve, OdeError, OdeSystem, VariationEquation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomoclinicConfig {
    pub dichotomy: DichotomyConfig,
    /// Horizon for the boundary projectors.
    pub projector_horizon: f64,
    pub intervals: usize,
    pub bvp_tol: f64,
    pub max_newton_iters: usize,
    pub nontrivial_floor: f64,
    /// Spacing of the returned samples.
    pub sample_spacing: f64,
    pub step_min: f64,
}

impl Default for HomoclinicConfig {
    fn default() -> Self {
        HomoclinicConfig {
            dichotomy: DichotomyConfig::default(),
            projector_horizon: DEFAULT_HORIZON,
            intervals: 8,
            bvp_tol: 1e-9,
            max_newton_iters: 25,
            nontrivial_floor: 1e-6,
            sample_spacing: 0.1,
            step_min: 1e-4,
        }
    }
}

#[derive(Debug, Error)]
pub enum HomoclinicError {
    #[error("Newton iteration diverged at lambda = {lambda} after {iterations} iterations (residual {residual:.3e})")]
    Divergence {
        lambda: f64,
        iterations: usize,
        residual: f64,
    },
    #[error("converged to the trivial solution at lambda = {lambda} (amplitude {amplitude:.3e})")]
    Trivial { lambda: f64, amplitude: f64 },
    #[error("Morse indices differ at the boundary (m+ = {plus}, m- = {minus})")]
    MorseMismatch { plus: usize, minus: usize },
    #[error("continuation stalled at lambda = {lambda} (step {step:.3e})")]
    ContinuationStall {
        lambda: f64,
        step: f64,
        /// Solutions computed before the stall.
        completed: Vec<HomoclinicSolution>,
    },
    #[error("no nontrivial solution found from the kernel seed at lambda = {lambda}")]
    SeedingFailed { lambda: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Dichotomy(#[from] DichotomyError),
    #[error(transparent)]
    Ode(#[from] OdeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomoclinicSolution {
    pub lambda: f64,
    pub horizon: f64,
    pub grid: Vec<f64>,
    /// y(t) = x(t) − φ_λ(t) at the grid times.
    pub y: Vec<Vec<f64>>,
    pub residual: f64,
    pub amplitude: f64,
    pub newton_iterations: usize,
    /// Angle of y(−T) to N(P⁻(−T)) and of y(T) to R(P⁺(T)), radians.
    pub boundary_angles: [f64; 2],
}

impl HomoclinicSolution {
    /// Piecewise-linear interpolation of y, zero outside [−T, T].
    pub fn interpolate(&self, t: f64) -> DVector<f64> {
        let d = self.y.first().map_or(0, |v| v.len());
        let n = self.grid.len();
        if n == 0 || t < self.grid[0] || t > self.grid[n - 1] {
            return DVector::zeros(d);
        }
        let k = self.grid.partition_point(|g| *g <= t).clamp(1, n - 1);
        let (t0, t1) = (self.grid[k - 1], self.grid[k]);
        let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
        DVector::from_fn(d, |i, _| (1.0 - w) * self.y[k - 1][i] + w * self.y[k][i])
    }
}

/// ẏ = f(t, y + φ_λ(t), λ) − f(t, φ_λ(t), λ) together with its variational
/// matrix Ṁ = D₂f(t, y + φ_λ(t), λ)M; state = [y, vec(M)].
struct PerturbationFlow<'a> {
    model: &'a ModelSpec,
    lambda: f64,
    with_matrix: bool,
}

impl OdeSystem for PerturbationFlow<'_> {
    fn dim(&self) -> usize {
        let d = self.model.dimension();
        if self.with_matrix {
            d + d * d
        } else {
            d
        }
    }
    fn breakpoints(&self) -> &[f64] {
        self.model.breakpoints()
    }
    fn rhs(&self, t: f64, s: &[f64], ds: &mut [f64]) -> Result<(), OdeError> {
        let d = self.model.dimension();
        let phi = self.model.branch(self.lambda, t)?;
        let x: Vec<f64> = (0..d).map(|i| s[i] + phi[i]).collect();
        let mut f1 = vec![0.0; d];
        let mut f0 = vec![0.0; d];
        self.model.rhs(t, &x, self.lambda, &mut f1)?;
        self.model.rhs(t, phi.as_slice(), self.lambda, &mut f0)?;
        for i in 0..d {
            ds[i] = f1[i] - f0[i];
        }
        if self.with_matrix {
            let j = self.model.jacobian(t, &x, self.lambda)?;
            let m = DMatrix::from_column_slice(d, d, &s[d..]);
            let dm = j * m;
            ds[d..].copy_from_slice(dm.as_slice());
        }
        Ok(())
    }
}

/// Boundary data: rows of the projection conditions at −T and T.
struct BoundaryFrames {
    unstable: Frame,
    stable: Frame,
    left_rows: DMatrix<f64>,
    right_rows: DMatrix<f64>,
}

fn boundary_frames(
    m: &ModelSpec,
    lambda: f64,
    horizon: f64,
    cfg: &HomoclinicConfig,
) -> Result<BoundaryFrames, HomoclinicError> {
    let sys = VariationEquation::new(m, lambda).map_err(DichotomyError::from)?;
    let dc = &cfg.dichotomy;
    let (minus, plus) = rayon::join(
        || analyze_half_axis(&sys, -horizon, HalfAxis::Minus, cfg.projector_horizon, dc),
        || analyze_half_axis(&sys, horizon, HalfAxis::Plus, cfg.projector_horizon, dc),
    );
    let (minus, plus) = (minus?, plus?);
    for a in [&minus, &plus] {
        let gap = a.gap(0.0);
        if gap < dc.gap_threshold {
            return Err(DichotomyError::NoGap {
                gamma: 0.0,
                gap,
                threshold: dc.gap_threshold,
            }
            .into());
        }
    }
    let (mp, mm) = (plus.morse_index(0.0), minus.morse_index(0.0));
    if mp != mm {
        return Err(HomoclinicError::MorseMismatch {
            plus: mp,
            minus: mm,
        });
    }
    let unstable = minus.unstable_frame(0.0);
    let stable = plus.stable_frame(0.0);
    let left_rows = unstable.complement().columns().transpose();
    let right_rows = stable.complement().columns().transpose();
    Ok(BoundaryFrames {
        unstable,
        stable,
        left_rows,
        right_rows,
    })
}

/// End state and monodromy matrix of one shooting interval.
type Segment = (DVector<f64>, DMatrix<f64>);

struct Shooting<'a> {
    model: &'a ModelSpec,
    lambda: f64,
    nodes: Vec<f64>,
    bc: BoundaryFrames,
    cfg: &'a HomoclinicConfig,
}

impl Shooting<'_> {
    fn dim(&self) -> usize {
        self.model.dimension()
    }

    fn shoot(&self, s: &[DVector<f64>], with_matrix: bool) -> Result<Vec<Segment>, OdeError> {
        let d = self.dim();
        let flow = PerturbationFlow {
            model: self.model,
            lambda: self.lambda,
            with_matrix,
        };
        let n = self.nodes.len() - 1;
        let run = |i: usize| -> Result<Segment, OdeError> {
            let mut y0 = s[i].as_slice().to_vec();
            if with_matrix {
                y0.extend(DMatrix::<f64>::identity(d, d).as_slice());
            }
            let traj = solve(
                &flow,
                self.nodes[i],
                &y0,
                self.nodes[i + 1],
                &self.cfg.dichotomy.integrator,
                false,
            )?;
            let end = traj.final_state();
            let y = end.rows(0, d).into_owned();
            let mm = if with_matrix {
                DMatrix::from_column_slice(d, d, &end.as_slice()[d..])
            } else {
                DMatrix::zeros(0, 0)
            };
            Ok((y, mm))
        };
        use rayon::prelude::*;
        (0..n).into_par_iter().map(run).collect()
    }

    fn residual(&self, s: &[DVector<f64>], ends: &[Segment]) -> DVector<f64> {
        let d = self.dim();
        let n = s.len();
        let mut f = DVector::zeros(n * d);
        let kl = self.bc.left_rows.nrows();
        f.rows_mut(0, kl).copy_from(&(&self.bc.left_rows * &s[0]));
        for i in 0..n - 1 {
            f.rows_mut(kl + i * d, d)
                .copy_from(&(&ends[i].0 - &s[i + 1]));
        }
        let kr = self.bc.right_rows.nrows();
        f.rows_mut(kl + (n - 1) * d, kr)
            .copy_from(&(&self.bc.right_rows * &ends[n - 1].0));
        f
    }

    fn jacobian(&self, ends: &[Segment]) -> DMatrix<f64> {
        let d = self.dim();
        let n = ends.len();
        let mut j = DMatrix::zeros(n * d, n * d);
        let kl = self.bc.left_rows.nrows();
        j.view_mut((0, 0), (kl, d)).copy_from(&self.bc.left_rows);
        for (i, (_, monodromy)) in ends.iter().enumerate().take(n - 1) {
            let r = kl + i * d;
            j.view_mut((r, i * d), (d, d)).copy_from(monodromy);
            j.view_mut((r, (i + 1) * d), (d, d))
                .copy_from(&(-DMatrix::<f64>::identity(d, d)));
        }
        let kr = self.bc.right_rows.nrows();
        j.view_mut((kl + (n - 1) * d, (n - 1) * d), (kr, d))
            .copy_from(&(&self.bc.right_rows * &ends[n - 1].1));
        j
    }
}

/// Solves the truncated homoclinic boundary-value problem at λ from an
/// initial guess y(t).
pub fn solve_homoclinic(
    m: &ModelSpec,
    lambda: f64,
    horizon: f64,
    guess: &dyn Fn(f64) -> DVector<f64>,
    cfg: &HomoclinicConfig,
) -> Result<HomoclinicSolution, HomoclinicError> {
    if !(horizon > 0.0) || cfg.intervals == 0 {
        return Err(HomoclinicError::InvalidArgument(
            "horizon and interval count must be positive".into(),
        ));
    }
    m.check_lambda(lambda).map_err(DichotomyError::from)?;
    let n = cfg.intervals;
    let nodes: Vec<f64> = (0..=n)
        .map(|i| -horizon + 2.0 * horizon * i as f64 / n as f64)
        .collect();
    let bc = boundary_frames(m, lambda, horizon, cfg)?;
    let sh = Shooting {
        model: m,
        lambda,
        nodes,
        bc,
        cfg,
    };
    let d = m.dimension();
    let mut s: Vec<DVector<f64>> = sh.nodes[..n].iter().map(|&t| guess(t)).collect();
    if s.iter().any(|v| v.len() != d) {
        return Err(HomoclinicError::InvalidArgument(format!(
            "guess must return vectors of length {d}"
        )));
    }
    let unpack = |x: &DVector<f64>| -> Vec<DVector<f64>> {
        (0..n).map(|i| x.rows(i * d, d).into_owned()).collect()
    };
    let pack = |v: &[DVector<f64>]| -> DVector<f64> {
        DVector::from_iterator(n * d, v.iter().flat_map(|x| x.iter().copied()))
    };

    let mut ends = sh.shoot(&s, true)?;
    let mut f = sh.residual(&s, &ends);
    let mut norm = f.amax();
    let mut iterations = 0;
    // one polishing step after reaching the tolerance
    let mut polished = norm == 0.0;
    while norm > cfg.bvp_tol || !polished {
        if norm <= cfg.bvp_tol {
            polished = true;
        }
        if iterations >= cfg.max_newton_iters {
            if norm <= cfg.bvp_tol {
                break;
            }
            return Err(HomoclinicError::Divergence {
                lambda,
                iterations,
                residual: norm,
            });
        }
        iterations += 1;
        let j = sh.jacobian(&ends);
        let delta = match j.lu().solve(&(-&f)) {
            Some(dx) => dx,
            None => {
                return Err(HomoclinicError::Divergence {
                    lambda,
                    iterations,
                    residual: norm,
                })
            }
        };
        let x = pack(&s);
        let mut alpha = 1.0;
        let mut accepted = false;
        while alpha >= 1.0 / 64.0 {
            let trial = unpack(&(&x + alpha * &delta));
            let trial_ends = match sh.shoot(&trial, true) {
                Ok(e) => e,
                Err(_) => {
                    alpha *= 0.5;
                    continue;
                }
            };
            let tf = sh.residual(&trial, &trial_ends);
            let tn = tf.amax();
            if tn.is_finite() && (tn < (1.0 - 0.25 * alpha) * norm || tn <= cfg.bvp_tol) {
                s = trial;
                ends = trial_ends;
                f = tf;
                norm = tn;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            if norm <= cfg.bvp_tol {
                break;
            }
            return Err(HomoclinicError::Divergence {
                lambda,
                iterations,
                residual: norm,
            });
        }
    }

    // samples from dense output of each sub-interval
    let flow = PerturbationFlow {
        model: m,
        lambda,
        with_matrix: false,
    };
    let per = (2.0 * horizon / n as f64 / cfg.sample_spacing)
        .round()
        .max(1.0) as usize;
    let mut grid = Vec::with_capacity(n * per + 1);
    let mut y = Vec::with_capacity(n * per + 1);
    let mut y_end = DVector::zeros(d);
    for (i, (start, span)) in s.iter().zip(sh.nodes.windows(2)).enumerate() {
        let traj = solve(
            &flow,
            span[0],
            start.as_slice(),
            span[1],
            &cfg.dichotomy.integrator,
            true,
        )?;
        for k in 0..per {
            let t = span[0] + (span[1] - span[0]) * k as f64 / per as f64;
            grid.push(t);
            y.push(if k == 0 {
                start.as_slice().to_vec()
            } else {
                traj.eval(t).as_slice().to_vec()
            });
        }
        if i == n - 1 {
            y_end = traj.final_state();
        }
    }
    grid.push(horizon);
    y.push(y_end.as_slice().to_vec());
    let amplitude = y
        .iter()
        .flat_map(|v| v.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    if amplitude <= cfg.nontrivial_floor {
        return Err(HomoclinicError::Trivial { lambda, amplitude });
    }
    let boundary_angles = [
        sh.bc.unstable.angle_to(&s[0]),
        sh.bc.stable.angle_to(&y_end),
    ];
    Ok(HomoclinicSolution {
        lambda,
        horizon,
        grid,
        y,
        residual: norm,
        amplitude,
        newton_iterations: iterations,
        boundary_angles,
    })
}

/// Parameter continuation from a converged seed towards `lambda_end`, with
/// step halving on failure. The seed itself is not part of the returned list.
pub fn trace_branch(
    m: &ModelSpec,
    lambda_end: f64,
    step: f64,
    seed: &HomoclinicSolution,
    cfg: &HomoclinicConfig,
) -> Result<Vec<HomoclinicSolution>, HomoclinicError> {
    if !(step > 0.0) {
        return Err(HomoclinicError::InvalidArgument(
            "step must be positive".into(),
        ));
    }
    let start = seed.lambda;
    let dir = if lambda_end >= start { 1.0 } else { -1.0 };
    let mut out: Vec<HomoclinicSolution> = Vec::new();
    let mut h = step;
    let mut current = seed.clone();
    let mut previous: Option<HomoclinicSolution> = None;
    while (lambda_end - current.lambda) * dir > 0.0 {
        let remaining = (lambda_end - current.lambda).abs();
        // absorb rounding so that the endpoint is not split off as a sliver
        let target = if h >= remaining - 1e-9 * h {
            lambda_end
        } else {
            current.lambda + dir * h
        };
        // secant predictor once two points are known
        let cur = current.clone();
        let older = previous.clone();
        let guess = move |t: f64| {
            let y = cur.interpolate(t);
            match &older {
                Some(p) if p.lambda != cur.lambda => {
                    let w = (target - cur.lambda) / (cur.lambda - p.lambda);
                    &y + (&y - p.interpolate(t)) * w
                }
                _ => y,
            }
        };
        match solve_homoclinic(m, target, seed.horizon, &guess, cfg) {
            Ok(sol) => {
                previous = Some(std::mem::replace(&mut current, sol.clone()));
                out.push(sol);
                h = (2.0 * h).min(step);
            }
            Err(HomoclinicError::Divergence { .. } | HomoclinicError::Trivial { .. }) => {
                h *= 0.5;
                if h < cfg.step_min {
                    return Err(HomoclinicError::ContinuationStall {
                        lambda: current.lambda,
                        step: h,
                        completed: out,
                    });
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Unit vector spanning R(P⁺_λ(0)) ∩ N(P⁻_λ(0)) (the direction of smallest
/// principal angle), used to seed branches at a bifurcation value.
pub fn kernel_direction(
    m: &ModelSpec,
    lambda: f64,
    cfg: &HomoclinicConfig,
) -> Result<(DVector<f64>, f64), HomoclinicError> {
    let sys = VariationEquation::new(m, lambda).map_err(DichotomyError::from)?;
    let w = crate::dichotomy::analyze_whole_line(&sys, 0.0, cfg.projector_horizon, &cfg.dichotomy)?;
    let (r, n) = (w.plus.stable_frame(0.0), w.minus.unstable_frame(0.0));
    if r.rank() == 0 || n.rank() == 0 {
        return Err(HomoclinicError::SeedingFailed { lambda });
    }
    let c = r.columns().transpose() * n.columns();
    let svd = c.svd(true, false);
    let u = svd.u.expect("u requested");
    let (best, _) =
        svd.singular_values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, v)| {
                if *v > acc.1 {
                    (i, *v)
                } else {
                    acc
                }
            });
    let v = r.columns() * u.column(best);
    let angle = principal_angles(&r, &n).first().copied().unwrap_or(0.0);
    Ok((v.normalize(), angle))
}

/// Amplitude ladder tried when seeding from the kernel direction.
pub const SEED_AMPLITUDES: [f64; 6] = [0.05, 0.1, 0.2, 0.02, 0.5, 1.0];

/// First nontrivial solution at λ* + direction·step from guesses
/// δ·v/cosh t with v the kernel direction at λ*.
pub fn seed_from_kernel(
    m: &ModelSpec,
    lambda_star: f64,
    direction: f64,
    step: f64,
    horizon: f64,
    cfg: &HomoclinicConfig,
) -> Result<HomoclinicSolution, HomoclinicError> {
    let (v, _) = kernel_direction(m, lambda_star, cfg)?;
    let lambda = lambda_star + direction.signum() * step;
    for delta in SEED_AMPLITUDES {
        for sgn in [1.0, -1.0] {
            let vv = v.clone() * (sgn * delta);
            let guess = move |t: f64| &vv / t.cosh();
            match solve_homoclinic(m, lambda, horizon, &guess, cfg) {
                Ok(sol) => return Ok(sol),
                Err(HomoclinicError::Divergence { .. } | HomoclinicError::Trivial { .. }) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Err(HomoclinicError::SeedingFailed { lambda })
}
