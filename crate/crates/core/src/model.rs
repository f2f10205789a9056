//! Problem instances: coefficient fields, numerical settings and problem files.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::expr::{parse_expression, Bindings, Expr, ParseError, Var};

type Eval3 = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;
type Eval2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot parse `{field}` expression: {source}")]
    Expression {
        field: &'static str,
        #[source]
        source: ParseError,
    },
    #[error("invalid numerics: {0}")]
    Numerics(String),
    #[error("cannot read problem file {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed problem file: {0}")]
    Config(String),
}

/// How a partial derivative of a coefficient is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeSource {
    Symbolic,
    FiniteDifference,
}

#[derive(Clone)]
enum Partial {
    Zero,
    Exact(Eval3),
    FiniteDifference,
}

impl Partial {
    fn source(&self) -> DerivativeSource {
        match self {
            Partial::FiniteDifference => DerivativeSource::FiniteDifference,
            _ => DerivativeSource::Symbolic,
        }
    }
}

/// Derivative flags of a [`CoefficientField`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DerivativeSources {
    pub a_u: DerivativeSource,
    pub a_p: DerivativeSource,
    pub f_u: DerivativeSource,
    pub f_p: DerivativeSource,
}

/// Values of `h = f/a` and its partials at one point, together with `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioJet {
    pub a: f64,
    pub h: f64,
    pub h_u: f64,
    pub h_p: f64,
}

/// Diffusion coefficient `a(θ,u,p)` and reaction `f(θ,u,p)` with partials.
///
/// `p` here is the θ-derivative `u_θ`. Evaluators are immutable and
/// shareable across threads.
#[derive(Clone)]
pub struct CoefficientField {
    a: Eval3,
    f: Eval3,
    a_u: Partial,
    a_p: Partial,
    f_u: Partial,
    f_p: Partial,
    antiderivative: Option<Eval2>,
    f_depends_on_p: bool,
    constant_a: Option<f64>,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientField")
            .field("derivatives", &self.derivative_sources())
            .field("f_depends_on_p", &self.f_depends_on_p)
            .field("constant_a", &self.constant_a)
            .finish_non_exhaustive()
    }
}

fn fd_step(x: f64) -> f64 {
    1e-6 * x.abs().max(1.0)
}

fn bind_expr(expr: Expr, lambda: f64) -> Eval3 {
    Arc::new(move |theta, u, p| expr.eval(&Bindings::new(theta, u, p, lambda)))
}

fn partial_of(expr: &Expr, var: Var, lambda: f64) -> Partial {
    match expr.derivative(var) {
        Some(d) if d.is_zero() => Partial::Zero,
        Some(d) => Partial::Exact(bind_expr(d, lambda)),
        None => Partial::FiniteDifference,
    }
}

impl CoefficientField {
    /// Builds a field from parsed expressions, binding `lambda`.
    pub fn from_exprs(a: &Expr, f: &Expr, lambda: f64) -> Self {
        let constant_a = if a.depends_on(Var::Theta) || a.depends_on(Var::U) || a.depends_on(Var::P)
        {
            None
        } else {
            Some(a.eval(&Bindings::new(0.0, 0.0, 0.0, lambda)))
        };
        Self {
            a: bind_expr(a.clone(), lambda),
            f: bind_expr(f.clone(), lambda),
            a_u: partial_of(a, Var::U, lambda),
            a_p: partial_of(a, Var::P, lambda),
            f_u: partial_of(f, Var::U, lambda),
            f_p: partial_of(f, Var::P, lambda),
            antiderivative: None,
            f_depends_on_p: f.depends_on(Var::P),
            constant_a,
        }
    }

    pub fn from_expressions(a: &str, f: &str, lambda: f64) -> Result<Self, ModelError> {
        let a = parse_expression(a).map_err(|source| ModelError::Expression { field: "a", source })?;
        let f = parse_expression(f).map_err(|source| ModelError::Expression { field: "f", source })?;
        Ok(Self::from_exprs(&a, &f, lambda))
    }

    /// Arbitrary closures; all partials by central finite differences.
    pub fn from_closures<A, F>(a: A, f: F) -> Self
    where
        A: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        F: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            a: Arc::new(a),
            f: Arc::new(f),
            a_u: Partial::FiniteDifference,
            a_p: Partial::FiniteDifference,
            f_u: Partial::FiniteDifference,
            f_p: Partial::FiniteDifference,
            antiderivative: None,
            f_depends_on_p: true,
            constant_a: None,
        }
    }

    /// Hand-coded Chafee–Infante field: `a ≡ 1`, `f = λu(1−u²)`.
    pub fn chafee_infante(lambda: f64) -> Self {
        Self {
            a: Arc::new(|_, _, _| 1.0),
            f: Arc::new(move |_, u, _| lambda * u * (1.0 - u * u)),
            a_u: Partial::Zero,
            a_p: Partial::Zero,
            f_u: Partial::Exact(Arc::new(move |_, u, _| lambda * (1.0 - 3.0 * u * u))),
            f_p: Partial::Zero,
            antiderivative: Some(Arc::new(move |_, u| {
                let u2 = u * u;
                lambda * (0.5 * u2 - 0.25 * u2 * u2)
            })),
            f_depends_on_p: false,
            constant_a: Some(1.0),
        }
    }

    pub fn a(&self, theta: f64, u: f64, p: f64) -> f64 {
        match self.constant_a {
            Some(c) => c,
            None => (self.a)(theta, u, p),
        }
    }

    pub fn f(&self, theta: f64, u: f64, p: f64) -> f64 {
        (self.f)(theta, u, p)
    }

    fn partial(&self, which: &Partial, base: &Eval3, wrt_u: bool, theta: f64, u: f64, p: f64) -> f64 {
        match which {
            Partial::Zero => 0.0,
            Partial::Exact(d) => d(theta, u, p),
            Partial::FiniteDifference => {
                if wrt_u {
                    let h = fd_step(u);
                    (base(theta, u + h, p) - base(theta, u - h, p)) / (2.0 * h)
                } else {
                    let h = fd_step(p);
                    (base(theta, u, p + h) - base(theta, u, p - h)) / (2.0 * h)
                }
            }
        }
    }

    pub fn a_u(&self, theta: f64, u: f64, p: f64) -> f64 {
        self.partial(&self.a_u, &self.a, true, theta, u, p)
    }

    pub fn a_p(&self, theta: f64, u: f64, p: f64) -> f64 {
        self.partial(&self.a_p, &self.a, false, theta, u, p)
    }

    pub fn f_u(&self, theta: f64, u: f64, p: f64) -> f64 {
        self.partial(&self.f_u, &self.f, true, theta, u, p)
    }

    pub fn f_p(&self, theta: f64, u: f64, p: f64) -> f64 {
        self.partial(&self.f_p, &self.f, false, theta, u, p)
    }

    pub fn derivative_sources(&self) -> DerivativeSources {
        DerivativeSources {
            a_u: self.a_u.source(),
            a_p: self.a_p.source(),
            f_u: self.f_u.source(),
            f_p: self.f_p.source(),
        }
    }

    /// Whether `f` may depend on `p`. Conservative for closure-built fields.
    pub fn f_depends_on_p(&self) -> bool {
        self.f_depends_on_p
    }

    /// `h = f/a` and its partials in `u` and `p`.
    pub fn ratio_jet(&self, theta: f64, u: f64, p: f64) -> RatioJet {
        let a = self.a(theta, u, p);
        let f = self.f(theta, u, p);
        let f_u = self.f_u(theta, u, p);
        let f_p = self.f_p(theta, u, p);
        let (a_u, a_p) = if self.constant_a.is_some() {
            (0.0, 0.0)
        } else {
            (self.a_u(theta, u, p), self.a_p(theta, u, p))
        };
        let inv = 1.0 / a;
        let h = f * inv;
        RatioJet {
            a,
            h,
            h_u: (f_u - h * a_u) * inv,
            h_p: (f_p - h * a_p) * inv,
        }
    }

    /// `F(θ,u) = ∫₀ᵘ f(θ,s,0) ds`; closed form when known, else Gauss–Legendre.
    pub fn antiderivative(&self, theta: f64, u: f64) -> f64 {
        if let Some(big_f) = &self.antiderivative {
            return big_f(theta, u);
        }
        // 5-point Gauss–Legendre on panels of width ≤ 0.25: exact for polynomials of degree ≤ 9
        const NODES: [f64; 5] = [
            0.0,
            -0.538_469_310_105_683_1,
            0.538_469_310_105_683_1,
            -0.906_179_845_938_664,
            0.906_179_845_938_664,
        ];
        const WEIGHTS: [f64; 5] = [
            0.568_888_888_888_888_9,
            0.478_628_670_499_366_5,
            0.478_628_670_499_366_5,
            0.236_926_885_056_189_1,
            0.236_926_885_056_189_1,
        ];
        let panels = ((u.abs() / 0.25).ceil() as usize).max(1);
        let width = u / panels as f64;
        let mut total = 0.0;
        for k in 0..panels {
            let mid = (k as f64 + 0.5) * width;
            let half = 0.5 * width;
            for (x, w) in NODES.iter().zip(WEIGHTS.iter()) {
                total += w * half * self.f(theta, mid + half * x, 0.0);
            }
        }
        total
    }
}

/// Source of the coefficients of a problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoefficientModel {
    Expressions { a: String, f: String },
    /// Hand-coded Chafee–Infante field, equivalent to `a = "1"`, `f = "lambda*u*(1-u^2)"`.
    ChafeeInfante,
}

impl CoefficientModel {
    pub fn build(&self, lambda: f64) -> Result<CoefficientField, ModelError> {
        match self {
            CoefficientModel::Expressions { a, f } => CoefficientField::from_expressions(a, f, lambda),
            CoefficientModel::ChafeeInfante => Ok(CoefficientField::chafee_infante(lambda)),
        }
    }
}

/// Numerical settings shared by the shooting, equilibrium and simulation stages.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Numerics {
    /// Distance of the integration interval from the poles.
    pub eps_theta: f64,
    pub ode_tol: f64,
    pub grid_n: usize,
    pub d_range: (f64, f64),
    pub e_range: (f64, f64),
    pub samples: usize,
    pub theta_cut: f64,
    pub root_tol: f64,
    pub merge_tol: f64,
    pub angle_tol: f64,
    /// Shots with `|u|+|p|` above this are marked diverged.
    pub overflow_guard: f64,
    pub seed: u64,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            eps_theta: 1e-3,
            ode_tol: 1e-10,
            grid_n: 512,
            d_range: (-1.5, 1.5),
            e_range: (-1.5, 1.5),
            samples: 2000,
            theta_cut: PI / 2.0,
            root_tol: 1e-9,
            merge_tol: 1e-6,
            angle_tol: 1e-3,
            overflow_guard: 1e6,
            seed: 0,
        }
    }
}

impl Numerics {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::Numerics(msg));
        if !(self.eps_theta > 0.0 && self.eps_theta < PI / 4.0) {
            return bad(format!("eps_theta must lie in (0, pi/4), got {}", self.eps_theta));
        }
        if !(self.ode_tol > 0.0) {
            return bad(format!("ode_tol must be positive, got {}", self.ode_tol));
        }
        if self.grid_n < 16 {
            return bad(format!("grid_n must be at least 16, got {}", self.grid_n));
        }
        for (name, (lo, hi)) in [("d", self.d_range), ("e", self.e_range)] {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return bad(format!("{name} range must satisfy min < max, got [{lo}, {hi}]"));
            }
        }
        if self.samples < 64 {
            return bad(format!("samples must be at least 64, got {}", self.samples));
        }
        if !(self.theta_cut >= self.eps_theta && self.theta_cut <= PI - self.eps_theta) {
            return bad(format!("theta_cut {} outside [eps_theta, pi - eps_theta]", self.theta_cut));
        }
        Ok(())
    }
}

/// A fully specified problem instance.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub model: CoefficientModel,
    pub lambda: f64,
    pub numerics: Numerics,
    field: CoefficientField,
}

impl ProblemSpec {
    pub fn new(model: CoefficientModel, lambda: f64, numerics: Numerics) -> Result<Self, ModelError> {
        numerics.validate()?;
        let field = model.build(lambda)?;
        Ok(Self {
            model,
            lambda,
            numerics,
            field,
        })
    }

    /// Chafee–Infante with default numerics, using the hand-coded field.
    pub fn chafee_infante(lambda: f64) -> Self {
        Self::new(CoefficientModel::ChafeeInfante, lambda, Numerics::default())
            .expect("default numerics are valid")
    }

    pub fn field(&self) -> &CoefficientField {
        &self.field
    }

    /// SHA-256 over the canonical JSON of model, λ and numerics.
    pub fn hash(&self) -> String {
        let canonical = serde_json::json!({
            "model": self.model,
            "lambda": self.lambda,
            "numerics": self.numerics,
        })
        .to_string();
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self, ModelError> {
        Self::new(self.model.clone(), lambda, self.numerics.clone())
    }

    pub fn with_numerics(&self, numerics: Numerics) -> Result<Self, ModelError> {
        Self::new(self.model.clone(), self.lambda, numerics)
    }
}

/// `[problem]` section of a problem file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    #[serde(default = "default_a")]
    pub a: String,
    pub f: String,
    #[serde(default)]
    pub lambda: f64,
}

fn default_a() -> String {
    "1".to_string()
}

/// `[numerics]` section of a problem file. Every key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsSection {
    pub eps_theta: f64,
    pub ode_tol: f64,
    pub grid_n: usize,
    pub d_min: f64,
    pub d_max: f64,
    pub e_min: Option<f64>,
    pub e_max: Option<f64>,
    pub samples: usize,
    pub theta_cut: Option<f64>,
    pub root_tol: f64,
    pub merge_tol: f64,
    pub angle_tol: f64,
    pub seed: u64,
}

impl Default for NumericsSection {
    fn default() -> Self {
        let n = Numerics::default();
        Self {
            eps_theta: n.eps_theta,
            ode_tol: n.ode_tol,
            grid_n: n.grid_n,
            d_min: n.d_range.0,
            d_max: n.d_range.1,
            e_min: None,
            e_max: None,
            samples: n.samples,
            theta_cut: None,
            root_tol: n.root_tol,
            merge_tol: n.merge_tol,
            angle_tol: n.angle_tol,
            seed: n.seed,
        }
    }
}

/// Parsed problem file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub problem: ProblemSection,
    #[serde(default)]
    pub numerics: NumericsSection,
}

impl ProblemConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ModelError> {
        toml::from_str(text).map_err(|e| ModelError::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml_str(&text)
    }

    pub fn numerics(&self) -> Numerics {
        let s = &self.numerics;
        Numerics {
            eps_theta: s.eps_theta,
            ode_tol: s.ode_tol,
            grid_n: s.grid_n,
            d_range: (s.d_min, s.d_max),
            e_range: (s.e_min.unwrap_or(s.d_min), s.e_max.unwrap_or(s.d_max)),
            samples: s.samples,
            theta_cut: s.theta_cut.unwrap_or(PI / 2.0),
            root_tol: s.root_tol,
            merge_tol: s.merge_tol,
            angle_tol: s.angle_tol,
            seed: s.seed,
            ..Numerics::default()
        }
    }

    pub fn to_spec(&self) -> Result<ProblemSpec, ModelError> {
        let model = CoefficientModel::Expressions {
            a: self.problem.a.clone(),
            f: self.problem.f.clone(),
        };
        ProblemSpec::new(model, self.problem.lambda, self.numerics())
    }

    /// SHA-256 over the canonical JSON form of the configuration.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

/// Sampling box for [`check_dissipativity`].
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBox {
    pub theta: (f64, f64),
    pub u: (f64, f64),
    pub p: (f64, f64),
    pub n_theta: usize,
    pub n_u: usize,
    pub n_p: usize,
    /// The sign condition is only tested where `|u|` is at least this.
    pub sign_threshold: f64,
    /// Lower bound required of `a`.
    pub parabolicity_eps: f64,
}

impl Default for SampleBox {
    fn default() -> Self {
        Self {
            theta: (0.0, PI),
            u: (-4.0, 4.0),
            p: (-4.0, 4.0),
            n_theta: 17,
            n_u: 33,
            n_p: 17,
            sign_threshold: 2.0,
            parabolicity_eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SamplePoint {
    pub theta: f64,
    pub u: f64,
    pub p: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum ConditionOutcome {
    Holds { samples: usize },
    Fails { counterexample: SamplePoint },
    /// Cannot be falsified by pointwise sampling.
    NotCheckable { note: String },
}

impl ConditionOutcome {
    pub fn holds(&self) -> bool {
        matches!(self, ConditionOutcome::Holds { .. })
    }
}

/// Per-condition outcome of the sampled dissipativity check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DissipativityReport {
    /// `f(θ,u,0)·u < 0` for large `|u|`.
    pub sign: ConditionOutcome,
    /// Subquadratic growth of `f` in `p`.
    pub growth: ConditionOutcome,
    /// Finite bounds on the partials of `a`.
    pub coefficient_bounds: ConditionOutcome,
    /// `0 < ε ≤ a ≤ δ`.
    pub parabolicity: ConditionOutcome,
}

impl DissipativityReport {
    pub fn all_checkable_hold(&self) -> bool {
        [&self.sign, &self.coefficient_bounds, &self.parabolicity]
            .iter()
            .all(|c| c.holds())
    }
}

fn linspace(range: (f64, f64), n: usize) -> impl Iterator<Item = f64> {
    let (lo, hi) = range;
    (0..n).map(move |k| {
        if n == 1 {
            lo
        } else {
            lo + (hi - lo) * k as f64 / (n - 1) as f64
        }
    })
}

/// Samples the dissipativity conditions on a box; can only falsify them.
pub fn check_dissipativity(field: &CoefficientField, sample_box: &SampleBox) -> DissipativityReport {
    let mut sign_count = 0;
    let mut sign_fail = None;
    let mut par_count = 0;
    let mut par_fail = None;
    let mut bound_count = 0;
    let mut bound_fail = None;

    for theta in linspace(sample_box.theta, sample_box.n_theta) {
        for u in linspace(sample_box.u, sample_box.n_u) {
            if u.abs() >= sample_box.sign_threshold && sign_fail.is_none() {
                let value = field.f(theta, u, 0.0) * u;
                if value < 0.0 {
                    sign_count += 1;
                } else {
                    sign_fail = Some(SamplePoint { theta, u, p: 0.0, value });
                }
            }
            for p in linspace(sample_box.p, sample_box.n_p) {
                if par_fail.is_none() {
                    let a = field.a(theta, u, p);
                    if a.is_finite() && a >= sample_box.parabolicity_eps {
                        par_count += 1;
                    } else {
                        par_fail = Some(SamplePoint { theta, u, p, value: a });
                    }
                }
                if bound_fail.is_none() {
                    let value = field.a_u(theta, u, p).abs() + field.a_p(theta, u, p).abs() * (1.0 + p.abs());
                    if value.is_finite() {
                        bound_count += 1;
                    } else {
                        bound_fail = Some(SamplePoint { theta, u, p, value });
                    }
                }
            }
        }
    }

    let outcome = |fail: Option<SamplePoint>, count| match fail {
        Some(counterexample) => ConditionOutcome::Fails { counterexample },
        None => ConditionOutcome::Holds { samples: count },
    };
    DissipativityReport {
        sign: outcome(sign_fail, sign_count),
        growth: ConditionOutcome::NotCheckable {
            note: "growth exponent bound on |f| in p cannot be decided from samples".into(),
        },
        coefficient_bounds: outcome(bound_fail, bound_count),
        parabolicity: outcome(par_fail, par_count),
    }
}
