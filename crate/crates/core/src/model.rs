//! Parametrized nonautonomous systems ẋ = f(t, x, λ) together with a known
//! family of bounded solutions φ_λ.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::expr::{self, EvalError, Expr, ParseError, Point, Var};
use crate::quadrature::gauss_legendre;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("malformed config: {0}")]
    Config(String),
    #[error("{field}: {source}")]
    Expression {
        field: String,
        #[source]
        source: ParseError,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("evaluating {what} at t={t}, lambda={lambda}: {source}")]
    Eval {
        what: &'static str,
        t: f64,
        lambda: f64,
        #[source]
        source: EvalError,
    },
    #[error("parameter {lambda} outside the domain [{lo}, {hi}]")]
    OutOfDomain { lambda: f64, lo: f64, hi: f64 },
    #[error("invalid model: {0}")]
    Invalid(String),
}

/// Where the Jacobian D₂f comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianSource {
    Analytic,
    Expression,
    /// Analytic linear part plus finite differences of a user nonlinearity.
    AnalyticPlusFiniteDifference,
    FiniteDifference,
}

#[derive(Debug, Clone)]
pub enum BuiltinModel {
    /// Block system in ℝ²ⁿ with the switching coefficient a(t) = −α (t ≥ 0), α (t < 0).
    Example9 {
        n: usize,
        alpha: f64,
        /// n×n coupling C(λ), row-major, expressions in `lambda`.
        coupling: Vec<Expr>,
        /// Optional nonlinearity F(t, x, λ) with F(t,0,λ) = 0 and D₂F(t,0,λ) = 0.
        nonlinearity: Option<Vec<Expr>>,
    },
    /// tanh-diagonal system with quadratic coupling and −λ² forcing.
    Example10,
    /// ẋ = diag(−tanh t, tanh t)x + (0, νx₁²) + (0, μ); λ does not enter.
    Proto { nu: f64, mu: f64, xi1: f64 },
}

#[derive(Debug, Clone)]
pub struct CustomModel {
    pub rhs: Vec<Expr>,
    /// d×d row-major.
    pub jacobian: Option<Vec<Expr>>,
    pub branch: Option<Vec<Expr>>,
}

#[derive(Debug, Clone)]
pub enum ModelKind {
    Builtin(BuiltinModel),
    Custom(CustomModel),
}

/// Immutable model description. Cloning is cheap.
#[derive(Clone)]
pub struct ModelSpec {
    name: String,
    dim: usize,
    kind: Arc<ModelKind>,
    breakpoints: Vec<f64>,
    param_domain: [f64; 2],
    jacobian_source: JacobianSource,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("breakpoints", &self.breakpoints)
            .field("param_domain", &self.param_domain)
            .field("jacobian_source", &self.jacobian_source)
            .finish()
    }
}

/// Serializable summary of a model, used in run manifests.
#[derive(Debug, Clone, Serialize)]
pub struct ModelSummary {
    pub name: String,
    pub dimension: usize,
    pub breakpoints: Vec<f64>,
    pub param_domain: [f64; 2],
    pub jacobian_source: JacobianSource,
}

const DEFAULT_DOMAIN: [f64; 2] = [-10.0, 10.0];

fn parse_field(src: &str, field: impl Into<String>) -> Result<Expr, ModelError> {
    expr::parse(src).map_err(|source| ModelError::Expression {
        field: field.into(),
        source,
    })
}

impl ModelSpec {
    pub fn example10() -> ModelSpec {
        ModelSpec {
            name: "example10".into(),
            dim: 2,
            kind: Arc::new(ModelKind::Builtin(BuiltinModel::Example10)),
            breakpoints: Vec::new(),
            param_domain: DEFAULT_DOMAIN,
            jacobian_source: JacobianSource::Analytic,
        }
    }

    /// Prototype equation with fixed ν, μ. Fails when no bounded entire
    /// solution exists (ν = 0 ≠ μ, or −2μ/ν < 0).
    pub fn proto(nu: f64, mu: f64) -> Result<ModelSpec, ModelError> {
        let xi1 = if nu == 0.0 {
            if mu != 0.0 {
                return Err(ModelError::Invalid(
                    "proto with nu = 0 and mu != 0 has no bounded solution".into(),
                ));
            }
            0.0
        } else {
            let s = -2.0 * mu / nu;
            if s < 0.0 {
                return Err(ModelError::Invalid(format!(
                    "proto needs -2*mu/nu >= 0 for a bounded solution, got {s}"
                )));
            }
            s.sqrt()
        };
        Ok(ModelSpec {
            name: "proto".into(),
            dim: 2,
            kind: Arc::new(ModelKind::Builtin(BuiltinModel::Proto { nu, mu, xi1 })),
            breakpoints: Vec::new(),
            param_domain: DEFAULT_DOMAIN,
            jacobian_source: JacobianSource::Analytic,
        })
    }

    /// Example 9 block system; `coupling` holds the n×n entries of C(λ)
    /// (row-major) as expressions in `lambda`.
    pub fn example9(n: usize, alpha: f64, coupling: &[&str]) -> Result<ModelSpec, ModelError> {
        let coupling: Vec<String> = coupling.iter().map(|s| s.to_string()).collect();
        Self::example9_with(n, alpha, &coupling, None)
    }

    pub fn example9_with(
        n: usize,
        alpha: f64,
        coupling: &[String],
        nonlinearity: Option<&[String]>,
    ) -> Result<ModelSpec, ModelError> {
        if n == 0 {
            return Err(ModelError::Invalid("example9 needs n >= 1".into()));
        }
        if !(alpha > 0.0) {
            return Err(ModelError::Invalid("example9 needs alpha > 0".into()));
        }
        if coupling.len() != n * n {
            return Err(ModelError::Dimension(format!(
                "coupling matrix needs {} entries, got {}",
                n * n,
                coupling.len()
            )));
        }
        let coupling = coupling
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let e = parse_field(s, format!("model.c[{}][{}]", k / n, k % n))?;
                if e.free_variables().iter().any(|v| *v != Var::Lambda) {
                    return Err(ModelError::Invalid(format!(
                        "coupling entry `{s}` may only depend on lambda"
                    )));
                }
                Ok(e)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let d = 2 * n;
        let nonlinearity = match nonlinearity {
            None => None,
            Some(srcs) => {
                if srcs.len() != d {
                    return Err(ModelError::Dimension(format!(
                        "nonlinearity needs {d} components, got {}",
                        srcs.len()
                    )));
                }
                let exprs = srcs
                    .iter()
                    .enumerate()
                    .map(|(i, s)| parse_field(s, format!("model.nonlinearity[{i}]")))
                    .collect::<Result<Vec<_>, _>>()?;
                check_state_indices(&exprs, d, "model.nonlinearity")?;
                if exprs.iter().all(Expr::is_zero_constant) {
                    None
                } else {
                    Some(exprs)
                }
            }
        };
        let jacobian_source = if nonlinearity.is_some() {
            JacobianSource::AnalyticPlusFiniteDifference
        } else {
            JacobianSource::Analytic
        };
        let spec = ModelSpec {
            name: "example9".into(),
            dim: d,
            kind: Arc::new(ModelKind::Builtin(BuiltinModel::Example9 {
                n,
                alpha,
                coupling,
                nonlinearity,
            })),
            breakpoints: vec![0.0],
            param_domain: DEFAULT_DOMAIN,
            jacobian_source,
        };
        spec.check_vanishing_nonlinearity()?;
        Ok(spec)
    }

    /// User model from expression strings. Omitting `branch` means φ_λ ≡ 0,
    /// which is then validated as a solution.
    pub fn custom(def: &CustomDefinition) -> Result<ModelSpec, ModelError> {
        let d = def.dimension;
        if d == 0 {
            return Err(ModelError::Invalid("dimension must be positive".into()));
        }
        if def.rhs.len() != d {
            return Err(ModelError::Dimension(format!(
                "dimension is {d} but {} rhs expressions were given",
                def.rhs.len()
            )));
        }
        let rhs = def
            .rhs
            .iter()
            .enumerate()
            .map(|(i, s)| parse_field(s, format!("model.rhs[{i}]")))
            .collect::<Result<Vec<_>, _>>()?;
        check_state_indices(&rhs, d, "model.rhs")?;
        let jacobian = match &def.jacobian {
            None => None,
            Some(rows) => {
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return Err(ModelError::Dimension(format!("jacobian must be {d}x{d}")));
                }
                let mut out = Vec::with_capacity(d * d);
                for (i, row) in rows.iter().enumerate() {
                    for (j, s) in row.iter().enumerate() {
                        out.push(parse_field(s, format!("model.jacobian[{i}][{j}]"))?);
                    }
                }
                check_state_indices(&out, d, "model.jacobian")?;
                Some(out)
            }
        };
        let branch = match &def.branch {
            None => None,
            Some(srcs) => {
                if srcs.len() != d {
                    return Err(ModelError::Dimension(format!(
                        "dimension is {d} but {} branch expressions were given",
                        srcs.len()
                    )));
                }
                let exprs = srcs
                    .iter()
                    .enumerate()
                    .map(|(i, s)| parse_field(s, format!("model.branch[{i}]")))
                    .collect::<Result<Vec<_>, _>>()?;
                if exprs.iter().any(Expr::depends_on_state) {
                    return Err(ModelError::Invalid(
                        "branch expressions may only depend on t and lambda".into(),
                    ));
                }
                Some(exprs)
            }
        };
        if def.breakpoints.windows(2).any(|w| w[0] >= w[1])
            || def.breakpoints.iter().any(|b| !b.is_finite())
        {
            return Err(ModelError::Invalid(
                "breakpoints must be finite and strictly increasing".into(),
            ));
        }
        let domain = def.param_domain.unwrap_or(DEFAULT_DOMAIN);
        if !(domain[0] <= domain[1]) || !domain[0].is_finite() || !domain[1].is_finite() {
            return Err(ModelError::Invalid(format!(
                "param_domain must be a finite interval [a, b] with a <= b, got {domain:?}"
            )));
        }
        let jacobian_source = if jacobian.is_some() {
            JacobianSource::Expression
        } else {
            JacobianSource::FiniteDifference
        };
        let spec = ModelSpec {
            name: def.name.clone().unwrap_or_else(|| "custom".into()),
            dim: d,
            kind: Arc::new(ModelKind::Custom(CustomModel {
                rhs,
                jacobian,
                branch,
            })),
            breakpoints: def.breakpoints.clone(),
            param_domain: domain,
            jacobian_source,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_param_domain(mut self, lo: f64, hi: f64) -> Result<ModelSpec, ModelError> {
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(ModelError::Invalid(format!(
                "param_domain must be finite with lo <= hi, got [{lo}, {hi}]"
            )));
        }
        self.param_domain = [lo, hi];
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn param_domain(&self) -> [f64; 2] {
        self.param_domain
    }

    pub fn jacobian_source(&self) -> JacobianSource {
        self.jacobian_source
    }

    pub fn summary(&self) -> ModelSummary {
        ModelSummary {
            name: self.name.clone(),
            dimension: self.dim,
            breakpoints: self.breakpoints.clone(),
            param_domain: self.param_domain,
            jacobian_source: self.jacobian_source,
        }
    }

    pub fn check_lambda(&self, lambda: f64) -> Result<(), ModelError> {
        let [lo, hi] = self.param_domain;
        if lambda.is_finite() && lambda >= lo && lambda <= hi {
            Ok(())
        } else {
            Err(ModelError::OutOfDomain { lambda, lo, hi })
        }
    }

    /// f(t, x, λ) written into `out`.
    pub fn rhs(&self, t: f64, x: &[f64], lambda: f64, out: &mut [f64]) -> Result<(), ModelError> {
        debug_assert_eq!(x.len(), self.dim);
        match &*self.kind {
            ModelKind::Builtin(BuiltinModel::Example10) => {
                let th = t.tanh();
                out[0] = -th * x[0];
                out[1] = th * x[1] + x[0] * x[0] - lambda * lambda;
            }
            ModelKind::Builtin(BuiltinModel::Proto { nu, mu, .. }) => {
                let th = t.tanh();
                out[0] = -th * x[0];
                out[1] = th * x[1] + nu * x[0] * x[0] + mu;
            }
            ModelKind::Builtin(BuiltinModel::Example9 {
                n,
                alpha,
                coupling,
                nonlinearity,
            }) => {
                let n = *n;
                let a = switching_rate(t, *alpha);
                let c = eval_coupling(coupling, n, lambda)?;
                for i in 0..n {
                    out[i] = a * x[i];
                    let mut s = -a * x[n + i];
                    for j in 0..n {
                        s += c[(i, j)] * x[j];
                    }
                    out[n + i] = s;
                }
                if let Some(f) = nonlinearity {
                    let p = Point { t, lambda, x };
                    for (o, e) in out.iter_mut().zip(f) {
                        *o += eval_expr(e, p, "nonlinearity")?;
                    }
                }
            }
            ModelKind::Custom(c) => {
                let p = Point { t, lambda, x };
                for (o, e) in out.iter_mut().zip(&c.rhs) {
                    *o = eval_expr(e, p, "rhs")?;
                }
            }
        }
        Ok(())
    }

    pub fn rhs_vec(&self, t: f64, x: &[f64], lambda: f64) -> Result<DVector<f64>, ModelError> {
        let mut out = DVector::zeros(self.dim);
        self.rhs(t, x, lambda, out.as_mut_slice())?;
        Ok(out)
    }

    /// D₂f(t, x, λ), analytic where available and by central differences otherwise.
    pub fn jacobian(&self, t: f64, x: &[f64], lambda: f64) -> Result<DMatrix<f64>, ModelError> {
        let d = self.dim;
        match &*self.kind {
            ModelKind::Builtin(BuiltinModel::Example10) => {
                let th = t.tanh();
                Ok(DMatrix::from_row_slice(2, 2, &[-th, 0.0, 2.0 * x[0], th]))
            }
            ModelKind::Builtin(BuiltinModel::Proto { nu, .. }) => {
                let th = t.tanh();
                Ok(DMatrix::from_row_slice(
                    2,
                    2,
                    &[-th, 0.0, 2.0 * nu * x[0], th],
                ))
            }
            ModelKind::Builtin(BuiltinModel::Example9 {
                n,
                alpha,
                coupling,
                nonlinearity,
            }) => {
                let n = *n;
                let a = switching_rate(t, *alpha);
                let c = eval_coupling(coupling, n, lambda)?;
                let mut j = DMatrix::zeros(d, d);
                for i in 0..n {
                    j[(i, i)] = a;
                    j[(n + i, n + i)] = -a;
                }
                j.view_mut((n, 0), (n, n)).copy_from(&c);
                if let Some(f) = nonlinearity {
                    j += finite_difference_jacobian(d, x, |y, out| {
                        let p = Point { t, lambda, x: y };
                        for (o, e) in out.iter_mut().zip(f) {
                            *o = eval_expr(e, p, "nonlinearity")?;
                        }
                        Ok(())
                    })?;
                }
                Ok(j)
            }
            ModelKind::Custom(c) => match &c.jacobian {
                Some(jac) => {
                    let p = Point { t, lambda, x };
                    let mut j = DMatrix::zeros(d, d);
                    for (k, e) in jac.iter().enumerate() {
                        j[(k / d, k % d)] = eval_expr(e, p, "jacobian")?;
                    }
                    Ok(j)
                }
                None => self.finite_difference_jacobian(t, x, lambda),
            },
        }
    }

    /// Central-difference approximation of D₂f, regardless of the model's Jacobian source.
    pub fn finite_difference_jacobian(
        &self,
        t: f64,
        x: &[f64],
        lambda: f64,
    ) -> Result<DMatrix<f64>, ModelError> {
        finite_difference_jacobian(self.dim, x, |y, out| self.rhs(t, y, lambda, out))
    }

    /// The bounded solution φ_λ(t).
    pub fn branch(&self, lambda: f64, t: f64) -> Result<DVector<f64>, ModelError> {
        let d = self.dim;
        Ok(match &*self.kind {
            ModelKind::Builtin(BuiltinModel::Example10) => DVector::from_vec(vec![
                lambda * 2f64.sqrt() / t.cosh(),
                lambda * lambda * t.tanh(),
            ]),
            ModelKind::Builtin(BuiltinModel::Proto { nu, xi1, .. }) => {
                DVector::from_vec(vec![xi1 / t.cosh(), nu * xi1 * xi1 / 2.0 * t.tanh()])
            }
            ModelKind::Builtin(BuiltinModel::Example9 { .. }) => DVector::zeros(d),
            ModelKind::Custom(c) => match &c.branch {
                None => DVector::zeros(d),
                Some(b) => {
                    let p = Point { t, lambda, x: &[] };
                    let mut v = DVector::zeros(d);
                    for (o, e) in v.iter_mut().zip(b) {
                        *o = eval_expr(e, p, "branch")?;
                    }
                    v
                }
            },
        })
    }

    /// A(t, λ) = D₂f(t, φ_λ(t), λ), the coefficient matrix of the variation equation.
    pub fn variation_coefficients(&self, lambda: f64, t: f64) -> Result<DMatrix<f64>, ModelError> {
        self.check_lambda(lambda)?;
        let phi = self.branch(lambda, t)?;
        self.jacobian(t, phi.as_slice(), lambda)
    }

    /// Largest value of ‖φ(b) − φ(a) − ∫ₐᵇ f(s, φ(s), λ) ds‖ / (b − a) over
    /// `pieces` equal subintervals of `window` (each further split at breakpoints).
    pub fn branch_residual(
        &self,
        lambda: f64,
        window: (f64, f64),
        pieces: usize,
    ) -> Result<f64, ModelError> {
        let (lo, hi) = window;
        let mut cuts: Vec<f64> = (0..=pieces)
            .map(|k| lo + (hi - lo) * k as f64 / pieces as f64)
            .collect();
        cuts.extend(
            self.breakpoints
                .iter()
                .copied()
                .filter(|b| *b > lo && *b < hi),
        );
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let (nodes, weights) = gauss_legendre(10);
        let mut worst: f64 = 0.0;
        let mut f = vec![0.0; self.dim];
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b - a <= 0.0 {
                continue;
            }
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            let mut integral = DVector::zeros(self.dim);
            for (x, wt) in nodes.iter().zip(&weights) {
                let s = mid + half * x;
                let phi = self.branch(lambda, s)?;
                self.rhs(s, phi.as_slice(), lambda, &mut f)?;
                for i in 0..self.dim {
                    integral[i] += half * wt * f[i];
                }
            }
            let defect = self.branch(lambda, b)? - self.branch(lambda, a)? - integral;
            worst = worst.max(defect.amax() / (b - a));
        }
        Ok(worst)
    }

    /// Load-time checks for user input: branch solves the equation, Jacobian
    /// expressions match finite differences.
    fn validate(&self) -> Result<(), ModelError> {
        let [lo, hi] = self.param_domain;
        let lambdas = [lo, 0.5 * (lo + hi), hi];
        for &lambda in &lambdas {
            let r = self.branch_residual(lambda, (-10.0, 10.0), 40)?;
            if r > 1e-8 {
                return Err(ModelError::Invalid(format!(
                    "branch is not a solution at lambda = {lambda}: integral residual {r:.3e} per unit time"
                )));
            }
        }
        if self.jacobian_source == JacobianSource::Expression {
            let worst = self.jacobian_mismatch(32, 0x5eed)?;
            if worst > 1e-5 {
                return Err(ModelError::Invalid(format!(
                    "jacobian expressions disagree with finite differences of rhs (relative error {worst:.3e})"
                )));
            }
        }
        Ok(())
    }

    /// Largest relative deviation between the model Jacobian and central
    /// differences of the rhs on deterministic pseudo-random samples.
    pub fn jacobian_mismatch(&self, samples: usize, seed: u64) -> Result<f64, ModelError> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let [lo, hi] = self.param_domain;
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let t = rng.random_range(-5.0..5.0);
            if self.breakpoints.iter().any(|b| (b - t).abs() < 1e-3) {
                continue;
            }
            let lambda = if hi > lo {
                rng.random_range(lo..hi)
            } else {
                lo
            };
            let mut x = self.branch(lambda, t)?;
            for v in x.iter_mut() {
                *v += rng.random_range(-1.0..1.0);
            }
            let ja = self.jacobian(t, x.as_slice(), lambda)?;
            let jf = self.finite_difference_jacobian(t, x.as_slice(), lambda)?;
            let scale = ja.amax().max(1.0);
            worst = worst.max((ja - jf).amax() / scale);
        }
        Ok(worst)
    }

    fn check_vanishing_nonlinearity(&self) -> Result<(), ModelError> {
        let ModelKind::Builtin(BuiltinModel::Example9 {
            nonlinearity: Some(f),
            ..
        }) = &*self.kind
        else {
            return Ok(());
        };
        let d = self.dim;
        let zero = vec![0.0; d];
        for &t in &[-3.0, -0.5, 0.5, 3.0] {
            for &lambda in &[-1.0, 0.0, 0.7] {
                let p = Point {
                    t,
                    lambda,
                    x: &zero,
                };
                for e in f {
                    let v = eval_expr(e, p, "nonlinearity")?;
                    if v.abs() > 1e-12 {
                        return Err(ModelError::Invalid(format!(
                            "nonlinearity must vanish at x = 0 (got {v} at t={t}, lambda={lambda})"
                        )));
                    }
                }
                let j = finite_difference_jacobian(d, &zero, |y, out| {
                    let p = Point { t, lambda, x: y };
                    for (o, e) in out.iter_mut().zip(f) {
                        *o = eval_expr(e, p, "nonlinearity")?;
                    }
                    Ok(())
                })?;
                if j.amax() > 1e-6 {
                    return Err(ModelError::Invalid(format!(
                        "nonlinearity must have zero derivative at x = 0 (|D2F| = {:.3e})",
                        j.amax()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// a(t) of the Example 9 block system.
fn switching_rate(t: f64, alpha: f64) -> f64 {
    if t >= 0.0 {
        -alpha
    } else {
        alpha
    }
}

fn eval_coupling(coupling: &[Expr], n: usize, lambda: f64) -> Result<DMatrix<f64>, ModelError> {
    let p = Point {
        t: 0.0,
        lambda,
        x: &[],
    };
    let mut c = DMatrix::zeros(n, n);
    for (k, e) in coupling.iter().enumerate() {
        c[(k / n, k % n)] = eval_expr(e, p, "coupling")?;
    }
    Ok(c)
}

fn eval_expr(e: &Expr, p: Point<'_>, what: &'static str) -> Result<f64, ModelError> {
    e.eval(p).map_err(|source| ModelError::Eval {
        what,
        t: p.t,
        lambda: p.lambda,
        source,
    })
}

fn check_state_indices(exprs: &[Expr], d: usize, field: &str) -> Result<(), ModelError> {
    for (i, e) in exprs.iter().enumerate() {
        if e.max_state_index() > d {
            return Err(ModelError::Dimension(format!(
                "{field}[{i}] references x{} but the dimension is {d}",
                e.max_state_index()
            )));
        }
    }
    Ok(())
}

fn finite_difference_jacobian(
    d: usize,
    x: &[f64],
    mut f: impl FnMut(&[f64], &mut [f64]) -> Result<(), ModelError>,
) -> Result<DMatrix<f64>, ModelError> {
    let mut j = DMatrix::zeros(d, d);
    let mut y = x.to_vec();
    let mut fp = vec![0.0; d];
    let mut fm = vec![0.0; d];
    for k in 0..d {
        let h = 1e-6 * x[k].abs().max(1.0);
        y[k] = x[k] + h;
        f(&y, &mut fp)?;
        y[k] = x[k] - h;
        f(&y, &mut fm)?;
        y[k] = x[k];
        for i in 0..d {
            j[(i, k)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    Ok(j)
}

/// Expression-level description of a custom model.
#[derive(Debug, Clone, Default)]
pub struct CustomDefinition {
    pub name: Option<String>,
    pub dimension: usize,
    pub rhs: Vec<String>,
    pub jacobian: Option<Vec<Vec<String>>>,
    pub branch: Option<Vec<String>>,
    pub breakpoints: Vec<f64>,
    pub param_domain: Option<[f64; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    model: ModelSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    kind: String,
    name: Option<String>,
    dimension: Option<usize>,
    rhs: Option<Vec<String>>,
    jacobian: Option<Vec<Vec<String>>>,
    branch: Option<Vec<String>>,
    #[serde(default, deserialize_with = "de_f64_vec")]
    breakpoints: Vec<f64>,
    #[serde(default, deserialize_with = "de_opt_pair")]
    param_domain: Option<[f64; 2]>,
    n: Option<usize>,
    #[serde(default, deserialize_with = "de_opt_f64")]
    alpha: Option<f64>,
    c: Option<Vec<Vec<String>>>,
    nonlinearity: Option<Vec<String>>,
    #[serde(default, deserialize_with = "de_opt_f64")]
    nu: Option<f64>,
    #[serde(default, deserialize_with = "de_opt_f64")]
    mu: Option<f64>,
}

/// TOML numbers may be written as integers (`alpha = 1`).
#[derive(Debug, Clone, Copy)]
struct Num(f64);

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl serde::de::Visitor<'_> for V {
            type Value = Num;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number")
            }
            fn visit_f64<E>(self, v: f64) -> Result<Num, E> {
                Ok(Num(v))
            }
            fn visit_i64<E>(self, v: i64) -> Result<Num, E> {
                Ok(Num(v as f64))
            }
            fn visit_u64<E>(self, v: u64) -> Result<Num, E> {
                Ok(Num(v as f64))
            }
        }
        d.deserialize_any(V)
    }
}

fn de_opt_f64<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
    Ok(Option::<Num>::deserialize(d)?.map(|n| n.0))
}

fn de_f64_vec<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
    Ok(Vec::<Num>::deserialize(d)?
        .into_iter()
        .map(|n| n.0)
        .collect())
}

fn de_opt_pair<'de, D: Deserializer<'de>>(d: D) -> Result<Option<[f64; 2]>, D::Error> {
    Ok(Option::<[Num; 2]>::deserialize(d)?.map(|[a, b]| [a.0, b.0]))
}

/// Builds a model from TOML configuration text (see `docs/config.md`).
pub fn load_model(config_text: &str) -> Result<ModelSpec, ModelError> {
    let file: ConfigFile =
        toml::from_str(config_text).map_err(|e| ModelError::Config(e.to_string()))?;
    let m = file.model;
    let domain = m.param_domain;
    let reject_custom_fields = |kind: &str| -> Result<(), ModelError> {
        if m.rhs.is_some() || m.jacobian.is_some() || m.branch.is_some() {
            return Err(ModelError::Config(format!(
                "builtin `{kind}` does not take rhs/jacobian/branch"
            )));
        }
        Ok(())
    };
    let spec = match m.kind.as_str() {
        "example10" => {
            reject_custom_fields("example10")?;
            ModelSpec::example10()
        }
        "proto" => {
            reject_custom_fields("proto")?;
            ModelSpec::proto(m.nu.unwrap_or(0.0), m.mu.unwrap_or(0.0))?
        }
        "example9" => {
            reject_custom_fields("example9")?;
            let n = m.n.unwrap_or(1);
            let alpha = m.alpha.unwrap_or(1.0);
            let coupling: Vec<String> = match &m.c {
                Some(rows) => {
                    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                        return Err(ModelError::Dimension(format!(
                            "model.c must be a {n}x{n} matrix"
                        )));
                    }
                    rows.iter().flatten().cloned().collect()
                }
                None => {
                    // C(λ) = λ·Iₙ
                    (0..n * n)
                        .map(|k| {
                            if k / n == k % n {
                                "lambda".into()
                            } else {
                                "0".into()
                            }
                        })
                        .collect()
                }
            };
            ModelSpec::example9_with(n, alpha, &coupling, m.nonlinearity.as_deref())?
        }
        "custom" => {
            let rhs = m
                .rhs
                .ok_or_else(|| ModelError::Config("custom model needs model.rhs".into()))?;
            let dimension = m.dimension.unwrap_or(rhs.len());
            return ModelSpec::custom(&CustomDefinition {
                name: m.name,
                dimension,
                rhs,
                jacobian: m.jacobian,
                branch: m.branch,
                breakpoints: m.breakpoints,
                param_domain: domain,
            });
        }
        other => {
            return Err(ModelError::Config(format!(
                "unknown model.kind `{other}` (expected example9, example10, proto or custom)"
            )))
        }
    };
    if let Some(d) = m.dimension {
        if d != spec.dimension() {
            return Err(ModelError::Dimension(format!(
                "model.dimension = {d} but `{}` has dimension {}",
                m.kind,
                spec.dimension()
            )));
        }
    }
    match domain {
        Some([lo, hi]) => spec.with_param_domain(lo, hi),
        None => Ok(spec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example10_from_config() {
        let m = load_model("[model]\nkind = \"example10\"\n").unwrap();
        assert_eq!(m.dimension(), 2);
        let l = 0.7;
        let t = 0.4;
        let phi = m.branch(l, t).unwrap();
        assert!((phi[0] - l * 2f64.sqrt() / t.cosh()).abs() < 1e-15);
        assert!((phi[1] - l * l * t.tanh()).abs() < 1e-15);
    }

    #[test]
    fn proto_zero_parameters_is_linear_with_zero_branch() {
        let m = load_model("[model]\nkind = \"proto\"\nnu = 0\nmu = 0\n").unwrap();
        for t in [-2.0, 0.0, 3.0] {
            assert_eq!(m.branch(0.0, t).unwrap().amax(), 0.0);
            let j = m.jacobian(t, &[5.0, -1.0], 0.0).unwrap();
            assert_eq!(
                j,
                DMatrix::from_row_slice(2, 2, &[-t.tanh(), 0.0, 0.0, t.tanh()])
            );
        }
    }

    #[test]
    fn custom_linear_model_has_constant_jacobian() {
        let m = load_model(
            "[model]\nkind = \"custom\"\ndimension = 1\nrhs = [\"\u{2212}x1 + lambda\"]\nbranch = [\"lambda\"]\n",
        )
        .unwrap();
        assert_eq!(m.jacobian_source(), JacobianSource::FiniteDifference);
        for (t, x, l) in [(0.0, 0.0, 0.0), (3.0, 2.0, -1.0), (-7.0, 1e3, 4.0)] {
            let j = m.jacobian(t, &[x], l).unwrap();
            assert!((j[(0, 0)] + 1.0).abs() < 1e-8, "{j}");
        }
    }

    #[test]
    fn example10_variation_coefficients() {
        let m = ModelSpec::example10();
        for t in [-2.0, 0.0, 1.5] {
            let a = m.variation_coefficients(0.0, t).unwrap();
            assert_eq!(
                a,
                DMatrix::from_row_slice(2, 2, &[-t.tanh(), 0.0, 0.0, t.tanh()])
            );
        }
        // φ_1(0) = (√2, 0), so the lower-left entry is 2√2.
        let a = m.variation_coefficients(1.0, 0.0).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 2.0 * 2f64.sqrt(), 0.0]);
        assert!((a - expected).amax() < 1e-15);
    }

    #[test]
    fn example9_variation_coefficients() {
        let m = ModelSpec::example9(1, 1.0, &["lambda"]).unwrap();
        let a = m.variation_coefficients(2.0, 1.0).unwrap();
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 2.0, 1.0]));
        let a = m.variation_coefficients(2.0, -1.0).unwrap();
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 2.0, -1.0]));
    }

    #[test]
    fn example9_rejects_nonvanishing_nonlinearity() {
        let bad = ["x1^2 + 1".to_string(), "0".to_string()];
        assert!(ModelSpec::example9_with(1, 1.0, &["lambda".into()], Some(&bad)).is_err());
        let linear = ["0.5*x2".to_string(), "0".to_string()];
        assert!(ModelSpec::example9_with(1, 1.0, &["lambda".into()], Some(&linear)).is_err());
        let ok = ["x1^2*x2".to_string(), "x1^3".to_string()];
        let m = ModelSpec::example9_with(1, 1.0, &["lambda".into()], Some(&ok)).unwrap();
        assert_eq!(
            m.jacobian_source(),
            JacobianSource::AnalyticPlusFiniteDifference
        );
    }

    #[test]
    fn config_errors() {
        assert!(matches!(
            load_model("model = 3"),
            Err(ModelError::Config(_))
        ));
        assert!(matches!(
            load_model("[model]\nkind = \"nope\"\n"),
            Err(ModelError::Config(_))
        ));
        let e = load_model("[model]\nkind = \"custom\"\ndimension = 2\nrhs = [\"-x1\"]\n");
        assert!(matches!(e, Err(ModelError::Dimension(_))), "{e:?}");
        match load_model("[model]\nkind = \"custom\"\nrhs = [\"-x1 +* 2\"]\n") {
            Err(ModelError::Expression { field, source }) => {
                assert_eq!(field, "model.rhs[0]");
                assert_eq!(source.offset(), 5);
            }
            other => panic!("{other:?}"),
        }
        let e = load_model("[model]\nkind = \"custom\"\nrhs = [\"-x2\"]\n");
        assert!(matches!(e, Err(ModelError::Dimension(_))), "{e:?}");
        // φ ≡ 0 is not a solution of ẋ = 1
        let e = load_model("[model]\nkind = \"custom\"\nrhs = [\"1 - x1*0\"]\n");
        assert!(matches!(e, Err(ModelError::Invalid(_))), "{e:?}");
        // wrong analytic jacobian
        let e =
            load_model("[model]\nkind = \"custom\"\nrhs = [\"-x1^3\"]\njacobian = [[\"-x1^2\"]]\n");
        assert!(matches!(e, Err(ModelError::Invalid(_))), "{e:?}");
        let e = load_model("[model]\nkind = \"custom\"\nrhs = [\"-x1\"]\nbreakpoints = [1, 0]\n");
        assert!(matches!(e, Err(ModelError::Invalid(_))), "{e:?}");
        let e = load_model("[model]\nkind = \"example10\"\ndimension = 3\n");
        assert!(matches!(e, Err(ModelError::Dimension(_))), "{e:?}");
    }

    #[test]
    fn out_of_domain_lambda() {
        let m = ModelSpec::example10().with_param_domain(-1.0, 1.0).unwrap();
        assert!(matches!(
            m.variation_coefficients(2.0, 0.0),
            Err(ModelError::OutOfDomain { .. })
        ));
    }

    #[test]
    fn proto_without_bounded_solution_is_rejected() {
        assert!(ModelSpec::proto(1.0, 0.5).is_err());
        assert!(ModelSpec::proto(0.0, 0.5).is_err());
        let m = ModelSpec::proto(1.0, -0.09).unwrap();
        let phi0 = m.branch(0.0, 0.0).unwrap();
        assert!((phi0[0] - 2f64.sqrt() * 0.3).abs() < 1e-15);
    }
}
