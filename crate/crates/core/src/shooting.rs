//! Shooting manifolds of the equilibrium ODE.
//!
//! Equilibria solve `a(θ,u,u_θ)(u_θθ + u_θ cotθ) + f(θ,u,u_θ) = 0` with
//! regularity at both poles. In the chart `τ = ln tan(θ/2)` with `p = u_τ`
//! the poles become hyperbolic equilibria and regular solutions leave the
//! left pole along a strong unstable manifold parametrized by `d = u(0)`,
//! and arrive at the right pole along a stable manifold parametrized by
//! `e = u(π)`. All integration here is done in θ on `[ε_θ, π − ε_θ]`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CoefficientField, Numerics};
use crate::ode::{Dopri5, Dopri5Options, OdeError};

const PARABOLICITY_EPS: f64 = 1e-12;

/// Curve points with `|u| + |p|` above this bound are ignored when searching
/// for intersections.
pub const CURVE_WINDOW: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootState {
    pub theta: f64,
    pub u: f64,
    /// `u_τ = sinθ · u_θ`
    pub p: f64,
}

impl ShootState {
    pub fn new(theta: f64, u: f64, p: f64) -> Self {
        Self { theta, u, p }
    }

    /// `u_θ`
    pub fn u_theta(&self) -> f64 {
        self.p / self.theta.sin()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ShootingError {
    #[error("theta = {theta} is outside (0, pi)")]
    Domain { theta: f64 },
    #[error("diffusion coefficient a = {a} is not positive at theta = {theta}, u = {u}")]
    Parabolicity { theta: f64, u: f64, a: f64 },
    #[error("non-finite coefficient evaluation at {state:?}")]
    NonFinite { state: ShootState },
    #[error("shot diverged near {state:?}")]
    Diverged { state: ShootState },
    #[error("tangent vector collapsed at theta = {theta}")]
    TangentCollapse { theta: f64 },
    #[error("polar radius vanished at theta = {theta}")]
    RadiusCollapse { theta: f64 },
    #[error("every sample of the cross-section diverged")]
    EmptyCurve,
}

impl ShootingError {
    pub fn is_divergence(&self) -> bool {
        matches!(self, ShootingError::Diverged { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Unstable,
    Stable,
}

impl Side {
    /// Pole the shot starts from.
    pub fn pole(self) -> f64 {
        match self {
            Side::Unstable => 0.0,
            Side::Stable => PI,
        }
    }

    pub fn start_theta(self, eps_theta: f64) -> f64 {
        match self {
            Side::Unstable => eps_theta,
            Side::Stable => PI - eps_theta,
        }
    }

    /// `+1` on the unstable side, `-1` on the stable side (mirror in θ).
    fn orientation(self) -> f64 {
        match self {
            Side::Unstable => 1.0,
            Side::Stable => -1.0,
        }
    }
}

pub fn tau_of_theta(theta: f64) -> Result<f64, ShootingError> {
    if !(theta > 0.0 && theta < PI) {
        return Err(ShootingError::Domain { theta });
    }
    Ok((theta / 2.0).tan().ln())
}

pub fn theta_of_tau(tau: f64) -> f64 {
    2.0 * tau.exp().atan()
}

/// Right-hand side `(u_τ, p_τ, θ_τ)` of the shooting system.
pub fn rhs(field: &CoefficientField, state: &ShootState) -> Result<(f64, f64, f64), ShootingError> {
    let s = state.theta.sin();
    let q = state.p / s;
    let a = field.a(state.theta, state.u, q);
    let f = field.f(state.theta, state.u, q);
    let p_tau = -(f / a) * s * s;
    if !p_tau.is_finite() || !q.is_finite() {
        return Err(ShootingError::NonFinite { state: *state });
    }
    Ok((state.p, p_tau, s))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShotOptions {
    pub eps_theta: f64,
    pub tol: f64,
    pub overflow_guard: f64,
    pub h_max: f64,
}

impl ShotOptions {
    pub fn from_numerics(n: &Numerics) -> Self {
        Self {
            eps_theta: n.eps_theta,
            tol: n.ode_tol,
            overflow_guard: n.overflow_guard,
            h_max: 0.1,
        }
    }

    fn solver(&self) -> Dopri5 {
        Dopri5::new(Dopri5Options::with_tol(self.tol).h_max(self.h_max))
    }
}

impl Default for ShotOptions {
    fn default() -> Self {
        Self::from_numerics(&Numerics::default())
    }
}

fn pole_coefficients(field: &CoefficientField, side: Side, param: f64) -> Result<(f64, f64), ShootingError> {
    let theta = side.pole();
    let a0 = field.a(theta, param, 0.0);
    let f0 = field.f(theta, param, 0.0);
    if !(a0 >= PARABOLICITY_EPS) {
        return Err(ShootingError::Parabolicity { theta, u: param, a: a0 });
    }
    if !f0.is_finite() {
        return Err(ShootingError::NonFinite {
            state: ShootState::new(theta, param, 0.0),
        });
    }
    Ok((a0, f0))
}

fn series_start(
    field: &CoefficientField,
    side: Side,
    param: f64,
    eps_theta: f64,
) -> Result<ShootState, ShootingError> {
    let (a0, f0) = pole_coefficients(field, side, param)?;
    let c = -f0 / (4.0 * a0);
    let u = param + c * eps_theta * eps_theta;
    // u_θ with respect to the distance from the pole
    let u_r = 2.0 * c * eps_theta;
    let u_theta = side.orientation() * u_r;
    Ok(ShootState::new(
        side.start_theta(eps_theta),
        u,
        u_theta * eps_theta.sin(),
    ))
}

/// Series start on the strong unstable manifold of the left pole, `u(0) = d`.
pub fn init_unstable(field: &CoefficientField, d: f64, eps_theta: f64) -> Result<ShootState, ShootingError> {
    series_start(field, Side::Unstable, d, eps_theta)
}

/// Series start on the stable manifold of the right pole, `u(π) = e`.
pub fn init_stable(field: &CoefficientField, e: f64, eps_theta: f64) -> Result<ShootState, ShootingError> {
    series_start(field, Side::Stable, e, eps_theta)
}

pub fn init(field: &CoefficientField, side: Side, param: f64, eps_theta: f64) -> Result<ShootState, ShootingError> {
    series_start(field, side, param, eps_theta)
}

fn state_from(theta: f64, y: &[f64]) -> ShootState {
    ShootState::new(theta, y[0], y[1])
}

fn map_ode(err: OdeError<ShootingError>) -> ShootingError {
    match err {
        OdeError::Rhs(e) => e,
        OdeError::StepUnderflow { t, y } | OdeError::TooManySteps { t, y } | OdeError::NonFinite { t, y } => {
            ShootingError::Diverged { state: state_from(t, &y) }
        }
    }
}

#[inline]
fn base_rhs(
    field: &CoefficientField,
    guard: f64,
    theta: f64,
    y: &[f64; 2],
) -> Result<[f64; 2], ShootingError> {
    if y[0].abs() + y[1].abs() > guard {
        return Err(ShootingError::Diverged {
            state: state_from(theta, y),
        });
    }
    let s = theta.sin();
    let q = y[1] / s;
    let a = field.a(theta, y[0], q);
    let f = field.f(theta, y[0], q);
    let dp = -(f / a) * s;
    if !dp.is_finite() {
        return Err(ShootingError::NonFinite {
            state: state_from(theta, y),
        });
    }
    Ok([q, dp])
}

fn check_target(theta: f64, eps_theta: f64) -> Result<(), ShootingError> {
    let slack = 1e-12;
    if !(theta >= eps_theta - slack && theta <= PI - eps_theta + slack) {
        return Err(ShootingError::Domain { theta });
    }
    Ok(())
}

/// Integrates the shooting system from `state` to `theta_target`.
pub fn integrate_to(
    field: &CoefficientField,
    state: ShootState,
    theta_target: f64,
    opts: &ShotOptions,
) -> Result<ShootState, ShootingError> {
    check_target(theta_target, opts.eps_theta)?;
    let mut solver = opts.solver();
    let mut t = state.theta;
    let mut y = [state.u, state.p];
    solver
        .advance(&mut t, &mut y, theta_target, |th, y| base_rhs(field, opts.overflow_guard, th, y), |_, _| {})
        .map_err(map_ode)?;
    Ok(state_from(theta_target, &y))
}

/// Shoots from the pole of `side` with parameter `param` and records the
/// state at each of `thetas`, which must be ordered away from that pole.
pub fn shoot_through(
    field: &CoefficientField,
    side: Side,
    param: f64,
    thetas: &[f64],
    opts: &ShotOptions,
) -> Result<Vec<ShootState>, ShootingError> {
    let start = init(field, side, param, opts.eps_theta)?;
    let mut solver = opts.solver();
    let mut t = start.theta;
    let mut y = [start.u, start.p];
    let mut out = Vec::with_capacity(thetas.len());
    for &target in thetas {
        check_target(target, opts.eps_theta)?;
        solver
            .advance(&mut t, &mut y, target, |th, y| base_rhs(field, opts.overflow_guard, th, y), |_, _| {})
            .map_err(map_ode)?;
        out.push(state_from(target, &y));
    }
    Ok(out)
}

/// State at `theta_target` of the shot with parameter `param`.
pub fn shoot(
    field: &CoefficientField,
    side: Side,
    param: f64,
    theta_target: f64,
    opts: &ShotOptions,
) -> Result<ShootState, ShootingError> {
    Ok(shoot_through(field, side, param, &[theta_target], opts)?[0])
}

/// Derivative of a shot with respect to its parameter, together with the
/// unwrapped clockwise polar angle `ν` of that tangent vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TangentState {
    pub ud: f64,
    pub pd: f64,
    pub nu: f64,
}

/// Shot plus variational data at one θ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentShot {
    pub state: ShootState,
    pub tangent: TangentState,
}

#[inline]
fn augmented_rhs(
    field: &CoefficientField,
    guard: f64,
    shift: f64,
    theta: f64,
    y: &[f64; 5],
) -> Result<[f64; 5], ShootingError> {
    if y[0].abs() + y[1].abs() > guard {
        return Err(ShootingError::Diverged {
            state: state_from(theta, y),
        });
    }
    let s = theta.sin();
    let q = y[1] / s;
    let jet = field.ratio_jet(theta, y[0], q);
    let k = jet.h_u - shift / jet.a;
    let (sn, cs) = y[4].sin_cos();
    let out = [
        q,
        -jet.h * s,
        y[3] / s,
        -s * k * y[2] - jet.h_p * y[3],
        (sn * sn + s * s * k * cs * cs - s * jet.h_p * sn * cs) / s,
    ];
    if out.iter().any(|v| !v.is_finite()) {
        return Err(ShootingError::NonFinite {
            state: state_from(theta, y),
        });
    }
    Ok(out)
}

fn augmented_start(
    field: &CoefficientField,
    side: Side,
    param: f64,
    shift: f64,
    eps_theta: f64,
) -> Result<(f64, [f64; 5]), ShootingError> {
    let st = init(field, side, param, eps_theta)?;
    let jet = field.ratio_jet(side.pole(), param, 0.0);
    let k = jet.h_u - shift / jet.a;
    let ud = 1.0 - 0.25 * k * eps_theta * eps_theta;
    let ud_theta = side.orientation() * (-0.5 * k * eps_theta);
    let pd = ud_theta * eps_theta.sin();
    let nu = (-pd).atan2(ud);
    Ok((st.theta, [st.u, st.p, ud, pd, nu]))
}

fn tangent_from(theta: f64, y: &[f64; 5]) -> Result<TangentShot, ShootingError> {
    if y[2].hypot(y[3]) < 1e-300 {
        return Err(ShootingError::TangentCollapse { theta });
    }
    Ok(TangentShot {
        state: state_from(theta, y),
        tangent: TangentState {
            ud: y[2],
            pd: y[3],
            nu: y[4],
        },
    })
}

/// Shot with variational equation. `shift` is the spectral parameter `Λ` of
/// the linearized eigenproblem; `0` gives the plain tangent of the shooting
/// curve.
pub fn shoot_tangent_through(
    field: &CoefficientField,
    side: Side,
    param: f64,
    shift: f64,
    thetas: &[f64],
    opts: &ShotOptions,
) -> Result<Vec<TangentShot>, ShootingError> {
    let (theta0, mut y) = augmented_start(field, side, param, shift, opts.eps_theta)?;
    let mut solver = opts.solver();
    let mut t = theta0;
    let mut out = Vec::with_capacity(thetas.len());
    for &target in thetas {
        check_target(target, opts.eps_theta)?;
        solver
            .advance(
                &mut t,
                &mut y,
                target,
                |th, y| augmented_rhs(field, opts.overflow_guard, shift, th, y),
                |_, _| {},
            )
            .map_err(map_ode)?;
        out.push(tangent_from(target, &y)?);
    }
    Ok(out)
}

pub fn shoot_tangent(
    field: &CoefficientField,
    side: Side,
    param: f64,
    shift: f64,
    theta_target: f64,
    opts: &ShotOptions,
) -> Result<TangentShot, ShootingError> {
    Ok(shoot_tangent_through(field, side, param, shift, &[theta_target], opts)?[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSample {
    pub param: f64,
    pub u: f64,
    pub p: f64,
    pub diverged: bool,
}

/// Cross-section of a shooting manifold at `cut_theta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledCurve {
    pub cut_theta: f64,
    pub side: Side,
    /// All attempted samples in increasing parameter order.
    pub samples: Vec<CurveSample>,
}

impl SampledCurve {
    fn valid(&self) -> impl Iterator<Item = &CurveSample> {
        self.samples.iter().filter(|s| !s.diverged)
    }

    pub fn params(&self) -> Vec<f64> {
        self.valid().map(|s| s.param).collect()
    }

    pub fn points(&self) -> Vec<(f64, f64)> {
        self.valid().map(|s| (s.u, s.p)).collect()
    }

    pub fn len(&self) -> usize {
        self.valid().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Maximal runs of diverged samples as `(first, last)` parameter pairs.
    pub fn gaps(&self) -> Vec<(f64, f64)> {
        let mut gaps = Vec::new();
        let mut open: Option<(f64, f64)> = None;
        for s in &self.samples {
            if s.diverged {
                open = Some(match open {
                    Some((a, _)) => (a, s.param),
                    None => (s.param, s.param),
                });
            } else if let Some(g) = open.take() {
                gaps.push(g);
            }
        }
        gaps.extend(open);
        gaps
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("param,u,p,diverged\n");
        for s in &self.samples {
            if s.diverged {
                let _ = writeln!(out, "{:.17e},,,true", s.param);
            } else {
                let _ = writeln!(out, "{:.17e},{:.17e},{:.17e},false", s.param, s.u, s.p);
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> io::Result<()> {
        std::fs::write(path, self.to_csv())
    }
}

fn sample_one(
    field: &CoefficientField,
    side: Side,
    cut_theta: f64,
    param: f64,
    opts: &ShotOptions,
) -> Result<CurveSample, ShootingError> {
    match shoot(field, side, param, cut_theta, opts) {
        Ok(st) => Ok(CurveSample {
            param,
            u: st.u,
            p: st.p,
            diverged: false,
        }),
        Err(ShootingError::Diverged { .. }) | Err(ShootingError::NonFinite { .. }) => Ok(CurveSample {
            param,
            u: f64::NAN,
            p: f64::NAN,
            diverged: true,
        }),
        Err(e) => Err(e),
    }
}

fn sample_params(
    field: &CoefficientField,
    side: Side,
    cut_theta: f64,
    params: &[f64],
    opts: &ShotOptions,
) -> Result<Vec<CurveSample>, ShootingError> {
    params
        .par_iter()
        .map(|&d| sample_one(field, side, cut_theta, d, opts))
        .collect()
}

/// Cell-centred parameter grid: `n` midpoints of a uniform partition.
pub fn cell_centers(range: (f64, f64), n: usize) -> Vec<f64> {
    let w = (range.1 - range.0) / n as f64;
    (0..n).map(|i| range.0 + (i as f64 + 0.5) * w).collect()
}

/// Samples the cross-section at `n` cell-centred parameters in `range`.
pub fn cross_section(
    field: &CoefficientField,
    side: Side,
    cut_theta: f64,
    range: (f64, f64),
    n: usize,
    opts: &ShotOptions,
) -> Result<SampledCurve, ShootingError> {
    let params = cell_centers(range, n);
    let samples = sample_params(field, side, cut_theta, &params, opts)?;
    let curve = SampledCurve {
        cut_theta,
        side,
        samples,
    };
    if curve.is_empty() {
        return Err(ShootingError::EmptyCurve);
    }
    Ok(curve)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineOptions {
    /// Largest allowed chord between consecutive valid samples.
    pub max_chord: f64,
    /// Smallest parameter spacing that refinement may produce.
    pub min_spacing: f64,
    pub max_rounds: usize,
    /// Samples with `|u| + |p|` above this are treated like diverged ones.
    pub window: f64,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            max_chord: 0.05,
            min_spacing: 1e-12,
            max_rounds: 48,
            window: CURVE_WINDOW,
        }
    }
}

/// Inserts midpoints until consecutive samples are at most `max_chord` apart
/// or the parameter spacing reaches `min_spacing`. Intervals next to a
/// diverged or out-of-window sample are bisected as well so that the edge
/// of that region is resolved.
pub fn refine_curve(
    field: &CoefficientField,
    curve: &mut SampledCurve,
    refine: &RefineOptions,
    opts: &ShotOptions,
) -> Result<(), ShootingError> {
    for _ in 0..refine.max_rounds {
        let mut mids = Vec::new();
        for w in curve.samples.windows(2) {
            let (l, r) = (&w[0], &w[1]);
            if r.param - l.param <= 2.0 * refine.min_spacing {
                continue;
            }
            let outside = |s: &CurveSample| s.diverged || s.u.abs() + s.p.abs() > refine.window;
            let split = match (outside(l), outside(r)) {
                (false, false) => (r.u - l.u).hypot(r.p - l.p) > refine.max_chord,
                (true, true) => false,
                _ => true,
            };
            if split {
                mids.push(0.5 * (l.param + r.param));
            }
        }
        if mids.is_empty() {
            break;
        }
        let new = sample_params(field, curve.side, curve.cut_theta, &mids, opts)?;
        curve.samples.extend(new);
        curve
            .samples
            .sort_by(|a, b| a.param.partial_cmp(&b.param).expect("finite parameters"));
    }
    Ok(())
}

/// Polar coordinates `(u, p) = (ρ cos μ, −ρ sin μ)` along a shot, with `μ`
/// unwrapped continuously from its value at the series start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarSample {
    pub tau: f64,
    pub u: f64,
    pub p: f64,
    pub mu: f64,
    pub rho: f64,
}

/// Tracks the unstable-side shot with parameter `d` through the increasing
/// sequence `taus`.
pub fn polar_track(
    field: &CoefficientField,
    d: f64,
    taus: &[f64],
    opts: &ShotOptions,
) -> Result<Vec<PolarSample>, ShootingError> {
    let start = init_unstable(field, d, opts.eps_theta)?;
    let mut y = [start.u, start.p, (-start.p).atan2(start.u)];
    let mut t = start.theta;
    let mut solver = opts.solver();
    let guard = opts.overflow_guard;
    let f = |theta: f64, y: &[f64; 3]| -> Result<[f64; 3], ShootingError> {
        let [du, dp] = base_rhs(field, guard, theta, &[y[0], y[1]])?;
        let rho2 = y[0] * y[0] + y[1] * y[1];
        if rho2 < 1e-300 {
            return Err(ShootingError::RadiusCollapse { theta });
        }
        let dmu = (-y[0] * dp + y[1] * du) / rho2;
        Ok([du, dp, dmu])
    };
    let mut out = Vec::with_capacity(taus.len());
    for &tau in taus {
        let target = theta_of_tau(tau);
        check_target(target, opts.eps_theta)?;
        solver.advance(&mut t, &mut y, target, f, |_, _| {}).map_err(map_ode)?;
        out.push(PolarSample {
            tau,
            u: y[0],
            p: y[1],
            mu: y[2],
            rho: y[0].hypot(y[1]),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ci(lambda: f64) -> CoefficientField {
        CoefficientField::chafee_infante(lambda)
    }

    #[test]
    fn tau_chart() {
        assert_abs_diff_eq!(tau_of_theta(PI / 2.0).unwrap(), 0.0, epsilon = 1e-15);
        let th = 0.3;
        assert_abs_diff_eq!(theta_of_tau(tau_of_theta(th).unwrap()), th, epsilon = 1e-12);
        let eps = 1e-3;
        assert_abs_diff_eq!(tau_of_theta(eps).unwrap(), (eps / 2.0).ln(), epsilon = 1e-6);
        assert!(tau_of_theta(0.0).is_err());
        assert!(tau_of_theta(PI).is_err());
        assert!(tau_of_theta(-1.0).is_err());
    }

    #[test]
    fn rhs_examples() {
        let (a, b, c) = rhs(&ci(3.0), &ShootState::new(PI / 2.0, 0.0, 0.0)).unwrap();
        assert_eq!((a, b), (0.0, 0.0));
        assert_abs_diff_eq!(c, 1.0, epsilon = 1e-15);
        let (a, b, _) = rhs(&ci(5.0), &ShootState::new(PI / 2.0, 1.0, 0.0)).unwrap();
        assert_eq!((a, b), (0.0, 0.0));
        let (_, b, _) = rhs(&ci(2.0), &ShootState::new(PI / 2.0, 0.5, 0.0)).unwrap();
        assert_abs_diff_eq!(b, -0.75, epsilon = 1e-15);
    }

    #[test]
    fn series_starts() {
        let eps = 1e-3;
        assert_eq!(init_unstable(&ci(3.0), 1.0, eps).unwrap(), ShootState::new(eps, 1.0, 0.0));
        assert_eq!(init_unstable(&ci(3.0), 0.0, eps).unwrap(), ShootState::new(eps, 0.0, 0.0));
        let st = init_unstable(&ci(2.0), 0.5, eps).unwrap();
        assert_abs_diff_eq!(st.u, 0.5 - 0.1875 * eps * eps, epsilon = 1e-18);
        assert_abs_diff_eq!(st.p, -0.375 * eps * eps, epsilon = 1e-12);
        let sb = init_stable(&ci(2.0), 0.5, eps).unwrap();
        assert_abs_diff_eq!(sb.theta, PI - eps, epsilon = 1e-15);
        assert_abs_diff_eq!(sb.p, -st.p, epsilon = 1e-15);
    }

    #[test]
    fn series_residual_is_second_order() {
        // plug u = d + cθ² into a(u'' + u' cotθ) + f and compare at two ε
        let field = ci(2.0);
        let d = 0.5;
        let resid = |eps: f64| {
            let st = init_unstable(&field, d, eps).unwrap();
            let c = (st.u - d) / (eps * eps);
            let u2 = 2.0 * c;
            let u1 = 2.0 * c * eps;
            (u2 + u1 / eps.tan()) + field.f(eps, st.u, u1)
        };
        let r1 = resid(1e-2).abs();
        let r2 = resid(5e-3).abs();
        assert!(r1 < 1e-3 && r2 < r1 / 3.0, "{r1} {r2}");
    }

    #[test]
    fn parabolicity_checked_at_start() {
        let field = CoefficientField::from_expressions("0", "u", 0.0).unwrap();
        assert!(matches!(
            init_unstable(&field, 0.2, 1e-3),
            Err(ShootingError::Parabolicity { .. })
        ));
    }

    #[test]
    fn constant_equilibrium_shot() {
        let opts = ShotOptions::default();
        let field = ci(3.0);
        let st = integrate_to(&field, init_unstable(&field, 1.0, 1e-3).unwrap(), PI / 2.0, &opts).unwrap();
        assert_eq!(st.theta, PI / 2.0);
        assert_abs_diff_eq!(st.u, 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(st.p, 0.0, epsilon = 1e-8);
    }

    #[test]
    fn zero_lambda_keeps_p_zero() {
        let opts = ShotOptions::default();
        let field = ci(0.0);
        for d in [-1.3, -0.2, 0.7, 1.4] {
            let st = shoot(&field, Side::Unstable, d, PI / 2.0, &opts).unwrap();
            assert_abs_diff_eq!(st.p, 0.0, epsilon = 1e-10);
            assert_abs_diff_eq!(st.u, d, epsilon = 1e-10);
        }
    }

    #[test]
    fn time_reversal() {
        let opts = ShotOptions::default();
        let field = ci(3.0);
        for d in [-0.8, 0.3, 0.95] {
            let fwd = shoot(&field, Side::Unstable, d, 1.1, &opts).unwrap();
            let bwd = shoot(&field, Side::Stable, d, PI - 1.1, &opts).unwrap();
            assert_abs_diff_eq!(fwd.u, bwd.u, epsilon = 1e-6);
            assert_abs_diff_eq!(fwd.p, -bwd.p, epsilon = 1e-6);
        }
    }

    #[test]
    fn backward_integration_out_of_domain_rejected() {
        let field = ci(1.0);
        let st = init_unstable(&field, 0.1, 1e-3).unwrap();
        assert!(matches!(
            integrate_to(&field, st, PI, &ShotOptions::default()),
            Err(ShootingError::Domain { .. })
        ));
    }

    #[test]
    fn divergent_shot_flagged() {
        let field = ci(20.0);
        let err = shoot(&field, Side::Unstable, 1.5, PI / 2.0, &ShotOptions::default()).unwrap_err();
        assert!(err.is_divergence(), "{err:?}");
    }

    #[test]
    fn tolerance_convergence() {
        let field = ci(7.0);
        for d in [-0.9, -0.4, 0.25, 0.8] {
            let tol = 1e-9;
            let coarse = ShotOptions { tol, ..ShotOptions::default() };
            let fine = ShotOptions { tol: tol / 2.0, ..ShotOptions::default() };
            let a = shoot(&field, Side::Unstable, d, PI / 2.0, &coarse).unwrap();
            let b = shoot(&field, Side::Unstable, d, PI / 2.0, &fine).unwrap();
            assert!((a.u - b.u).hypot(a.p - b.p) < 10.0 * tol);
        }
    }

    #[test]
    fn tangent_matches_finite_difference() {
        let field = ci(3.0);
        let opts = ShotOptions::default();
        for (side, param) in [(Side::Unstable, 0.4), (Side::Stable, -0.7)] {
            let th = PI / 2.0;
            let ts = shoot_tangent(&field, side, param, 0.0, th, &opts).unwrap();
            let h = 1e-5;
            let a = shoot(&field, side, param + h, th, &opts).unwrap();
            let b = shoot(&field, side, param - h, th, &opts).unwrap();
            assert_abs_diff_eq!(ts.tangent.ud, (a.u - b.u) / (2.0 * h), epsilon = 1e-5);
            assert_abs_diff_eq!(ts.tangent.pd, (a.p - b.p) / (2.0 * h), epsilon = 1e-5);
            let wrapped = (-ts.tangent.pd).atan2(ts.tangent.ud);
            let diff = (ts.tangent.nu - wrapped) / (2.0 * PI);
            assert_abs_diff_eq!(diff, diff.round(), epsilon = 1e-8);
        }
    }

    #[test]
    fn cross_section_through_constants() {
        let field = ci(1.0);
        let opts = ShotOptions::default();
        let curve = cross_section(&field, Side::Unstable, PI / 2.0, (-1.5, 1.5), 64, &opts).unwrap();
        assert!(curve.params().windows(2).all(|w| w[0] < w[1]));
        for target in [-1.0, 0.0, 1.0] {
            let st = shoot(&field, Side::Unstable, target, PI / 2.0, &opts).unwrap();
            assert_abs_diff_eq!(st.u, target, epsilon = 1e-9);
            assert_abs_diff_eq!(st.p, 0.0, epsilon = 1e-9);
        }
        // odd symmetry of the sampled curve (cell centres are symmetric)
        let pts = curve.samples.clone();
        let n = pts.len();
        for i in 0..n {
            let (a, b) = (&pts[i], &pts[n - 1 - i]);
            assert_eq!(a.diverged, b.diverged);
            if !a.diverged {
                assert_abs_diff_eq!(a.u, -b.u, epsilon = 1e-8);
                assert_abs_diff_eq!(a.p, -b.p, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn stable_curve_is_p_reflection() {
        let field = ci(3.0);
        let opts = ShotOptions::default();
        let u = cross_section(&field, Side::Unstable, PI / 2.0, (-1.2, 1.2), 64, &opts).unwrap();
        let s = cross_section(&field, Side::Stable, PI / 2.0, (-1.2, 1.2), 64, &opts).unwrap();
        for (a, b) in u.samples.iter().zip(&s.samples) {
            if !a.diverged {
                assert_abs_diff_eq!(a.u, b.u, epsilon = 1e-8);
                assert_abs_diff_eq!(a.p, -b.p, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn csv_and_gaps() {
        let field = ci(20.0);
        let opts = ShotOptions::default();
        let curve = cross_section(&field, Side::Unstable, PI / 2.0, (-1.5, 1.5), 64, &opts).unwrap();
        let gaps = curve.gaps();
        assert!(!gaps.is_empty());
        let csv = curve.to_csv();
        assert!(csv.starts_with("param,u,p,diverged\n"));
        assert_eq!(csv.lines().count(), 65);
        assert!(csv.contains(",true"));
    }

    #[test]
    fn refinement_bounds_chords() {
        let field = ci(7.0);
        let opts = ShotOptions::default();
        let mut curve = cross_section(&field, Side::Unstable, PI / 2.0, (-1.5, 1.5), 64, &opts).unwrap();
        let refine = RefineOptions {
            max_chord: 0.1,
            min_spacing: 1e-9,
            max_rounds: 40,
            window: 20.0,
        };
        refine_curve(&field, &mut curve, &refine, &opts).unwrap();
        for w in curve.samples.windows(2) {
            let (l, r) = (&w[0], &w[1]);
            let inside = |s: &CurveSample| !s.diverged && s.u.abs() + s.p.abs() <= refine.window;
            if inside(l) && inside(r) && r.param - l.param > 2.0 * refine.min_spacing {
                assert!((r.u - l.u).hypot(r.p - l.p) <= 0.1);
            }
        }
    }

    #[test]
    fn polar_angle_is_continuous_unwrap() {
        let field = ci(13.0);
        let opts = ShotOptions::default();
        let taus: Vec<f64> = (0..200)
            .map(|i| tau_of_theta(0.01 + (PI - 0.02) * i as f64 / 199.0).unwrap())
            .collect();
        let track = polar_track(&field, 0.6, &taus, &opts).unwrap();
        for s in &track {
            let wrapped = (-s.p).atan2(s.u);
            let k = (s.mu - wrapped) / (2.0 * PI);
            assert_abs_diff_eq!(k, k.round(), epsilon = 1e-8);
        }
        // consecutive samples are close enough that the unwrap is unambiguous
        for w in track.windows(2) {
            assert!((w[1].mu - w[0].mu).abs() < PI / 2.0);
        }
    }
}
