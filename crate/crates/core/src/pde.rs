//! Method-of-lines simulation of `u_t = a(θ,u,u_θ)(u_θθ + cotθ·u_θ) + f(θ,u,u_θ)`
//! on the grid `θ_j = jπ/n`, together with the quantities the theory says
//! must behave monotonically along trajectories.

use std::f64::consts::PI;
use std::fs;
use std::io;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equilibria::{self, EquilibriumError, EquilibriumRecord};
use crate::grid;
pub use crate::grid::{legendre_mode, weights, GridFunction};
use crate::model::{CoefficientField, ProblemSpec};
use crate::ode::{Dopri5, Dopri5Options};
use crate::permutation::zero_number;

/// Sup norm beyond which a trajectory counts as blown up.
pub const BLOW_UP: f64 = 1e12;

#[derive(Debug, Error)]
pub enum PdeError {
    #[error("solution blew up at t = {t}")]
    BlowUp { t: f64 },
    #[error("grid needs at least 16 cells, got {0}")]
    GridTooCoarse(usize),
    #[error("grids differ: {0} vs {1} cells")]
    GridMismatch(usize, usize),
    #[error("snapshot times differ at index {index}")]
    TimeMismatch { index: usize },
    #[error("time step {dt:e} exceeds the explicit stability bound {bound:e}")]
    Unstable { dt: f64, bound: f64 },
    #[error("reaction depends on u_theta; the energy needs the tabulated g")]
    NeedsLagrangianG,
    #[error("discrete equilibrium solve stalled at residual {residual:e}")]
    NoConvergence { residual: f64 },
    #[error("equilibrium {0} is out of range")]
    NoSuchEquilibrium(usize),
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Explicit,
    /// Diffusion implicit with frozen `a`, reaction explicit.
    #[default]
    Imex,
}

/// Conservative (finite-volume) axisymmetric Laplacian.
///
/// Row `j` is `upper_j (u_{j+1} − u_j) − lower_j (u_j − u_{j−1})` with
/// `upper_j = sinθ_{j+½}/(h W_j)`, `lower_j = sinθ_{j−½}/(h W_j)` and `W_j`
/// the control-volume weights. At the poles this is `2u_θθ + O(h²)`. All
/// tables are exactly symmetric under `θ ↦ π − θ`.
#[derive(Debug, Clone)]
pub struct Stencil {
    n: usize,
    h: f64,
    theta: Vec<f64>,
    half: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    weights: Vec<f64>,
}

impl Stencil {
    pub fn new(n: usize) -> Self {
        let h = PI / n as f64;
        let w = grid::weights(n);
        let mut half: Vec<f64> = (0..n).map(|j| ((j as f64 + 0.5) * h).sin()).collect();
        grid::mirror(&mut half, 1.0);
        let mut lower = vec![0.0; n + 1];
        let mut upper = vec![0.0; n + 1];
        for j in 0..=n {
            if j > 0 {
                lower[j] = half[j - 1] / (h * w[j]);
            }
            if j < n {
                upper[j] = half[j] / (h * w[j]);
            }
        }
        Self {
            n,
            h,
            theta: grid::nodes(n),
            half,
            lower,
            upper,
            weights: w,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        (0..=self.n).map(|j| self.row(u, j)).collect()
    }

    fn row(&self, u: &[f64], j: usize) -> f64 {
        let mut acc = 0.0;
        if j < self.n {
            acc += self.upper[j] * (u[j + 1] - u[j]);
        }
        if j > 0 {
            acc -= self.lower[j] * (u[j] - u[j - 1]);
        }
        acc
    }

    /// Central differences for `u_θ`, zero at the poles.
    pub fn slopes(&self, u: &[f64]) -> Vec<f64> {
        (0..=self.n)
            .map(|j| {
                if j == 0 || j == self.n {
                    0.0
                } else {
                    (u[j + 1] - u[j - 1]) / (2.0 * self.h)
                }
            })
            .collect()
    }

    /// Semi-discrete right-hand side `a·Δu + f`.
    pub fn rhs(&self, field: &CoefficientField, u: &[f64]) -> Vec<f64> {
        let p = self.slopes(u);
        (0..=self.n)
            .map(|j| {
                let (th, uj, pj) = (self.theta[j], u[j], p[j]);
                field.a(th, uj, pj) * self.row(u, j) + field.f(th, uj, pj)
            })
            .collect()
    }

    /// Largest eigenvalue magnitude of the discrete Laplacian, by power
    /// iteration on the symmetrized operator.
    pub fn spectral_radius(&self) -> f64 {
        let mut v: Vec<f64> = (0..=self.n).map(|j| if j % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let mut rho = 0.0;
        for _ in 0..2000 {
            let w = self.apply(&v);
            let num: f64 = (0..=self.n).map(|j| self.weights[j] * w[j] * v[j]).sum();
            let den: f64 = (0..=self.n).map(|j| self.weights[j] * v[j] * v[j]).sum();
            rho = (num / den).abs();
            let nrm = w.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            v = w.iter().map(|x| x / nrm).collect();
        }
        rho
    }

    fn weighted_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(a.iter().zip(b))
            .map(|(w, (x, y))| w * (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }
}

pub fn laplacian_axisym(u: &GridFunction) -> GridFunction {
    GridFunction::new(Stencil::new(u.n()).apply(&u.values))
}

/// Solves a tridiagonal system by eliminating from both ends towards the
/// middle. A mirror-symmetric system with (anti)symmetric right-hand side
/// gets an exactly (anti)symmetric solution.
pub fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let len = diag.len();
    assert!(len >= 2 && sub.len() == len && sup.len() == len && rhs.len() == len);
    let last = len - 1;
    // rows [0, top_end) and [bottom_start, len) are eliminated; the one or
    // two rows in between are solved directly
    let top_end = last / 2;
    let bottom_start = if len % 2 == 1 { top_end + 1 } else { top_end + 2 };
    let mut cp = vec![0.0; len];
    let mut dp = vec![0.0; len];
    for i in 0..top_end {
        let (denom, r) = if i == 0 {
            (diag[i], rhs[i])
        } else {
            (diag[i] - sub[i] * cp[i - 1], rhs[i] - sub[i] * dp[i - 1])
        };
        cp[i] = sup[i] / denom;
        dp[i] = r / denom;
    }
    let mut aq = vec![0.0; len];
    let mut dq = vec![0.0; len];
    for i in (bottom_start..len).rev() {
        let (denom, r) = if i == last {
            (diag[i], rhs[i])
        } else {
            (diag[i] - sup[i] * aq[i + 1], rhs[i] - sup[i] * dq[i + 1])
        };
        aq[i] = sub[i] / denom;
        dq[i] = r / denom;
    }
    let mut x = vec![0.0; len];
    if len % 2 == 1 {
        let m = top_end;
        let (mut denom, mut r) = (diag[m], rhs[m]);
        if m > 0 {
            denom = denom - sub[m] * cp[m - 1] - sup[m] * aq[m + 1];
            r = r - sub[m] * dp[m - 1] - sup[m] * dq[m + 1];
        }
        x[m] = r / denom;
    } else {
        let (lo, hi) = (top_end, top_end + 1);
        let (mut b1, mut d1) = (diag[lo], rhs[lo]);
        if lo > 0 {
            b1 -= sub[lo] * cp[lo - 1];
            d1 -= sub[lo] * dp[lo - 1];
        }
        let (mut b2, mut d2) = (diag[hi], rhs[hi]);
        if hi < last {
            b2 -= sup[hi] * aq[hi + 1];
            d2 -= sup[hi] * dq[hi + 1];
        }
        let (c, a) = (sup[lo], sub[hi]);
        let det = b1 * b2 - c * a;
        x[lo] = (d1 * b2 - c * d2) / det;
        x[hi] = (b1 * d2 - a * d1) / det;
    }
    for i in (0..top_end).rev() {
        x[i] = dp[i] - cp[i] * x[i + 1];
    }
    for i in bottom_start..len {
        x[i] = dq[i] - aq[i] * x[i - 1];
    }
    x
}

/// One-step map of the semi-discrete equation.
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    field: &'a CoefficientField,
    stencil: Stencil,
    dt: f64,
    scheme: Scheme,
}

impl<'a> Stepper<'a> {
    pub fn new(field: &'a CoefficientField, n: usize, dt: f64, scheme: Scheme) -> Result<Self, PdeError> {
        if n < 16 {
            return Err(PdeError::GridTooCoarse(n));
        }
        assert!(dt > 0.0, "time step must be positive");
        Ok(Self {
            field,
            stencil: Stencil::new(n),
            dt,
            scheme,
        })
    }

    pub fn stencil(&self) -> &Stencil {
        &self.stencil
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `0.4·h²/max a` over the current state.
    pub fn explicit_bound(&self, u: &[f64], p: &[f64]) -> f64 {
        let max_a = (0..=self.stencil.n)
            .map(|j| self.field.a(self.stencil.theta[j], u[j], p[j]))
            .fold(0.0_f64, f64::max);
        0.4 * self.stencil.h * self.stencil.h / max_a
    }

    /// Advances `u` from `t` to `t + dt`.
    pub fn step(&self, u: &[f64], t: f64) -> Result<Vec<f64>, PdeError> {
        let st = &self.stencil;
        let dt = self.dt;
        let p = st.slopes(u);
        let next = match self.scheme {
            Scheme::Explicit => {
                let bound = self.explicit_bound(u, &p);
                if dt > bound {
                    return Err(PdeError::Unstable { dt, bound });
                }
                (0..=st.n)
                    .map(|j| {
                        let (th, uj, pj) = (st.theta[j], u[j], p[j]);
                        let a = self.field.a(th, uj, pj);
                        uj + dt * (a * st.row(u, j) + self.field.f(th, uj, pj))
                    })
                    .collect()
            }
            Scheme::Imex => {
                let len = st.n + 1;
                let mut sub = vec![0.0; len];
                let mut diag = vec![0.0; len];
                let mut sup = vec![0.0; len];
                let mut rhs = vec![0.0; len];
                for j in 0..len {
                    let (th, uj, pj) = (st.theta[j], u[j], p[j]);
                    let ca = dt * self.field.a(th, uj, pj);
                    sub[j] = -ca * st.lower[j];
                    sup[j] = -ca * st.upper[j];
                    diag[j] = 1.0 + ca * (st.lower[j] + st.upper[j]);
                    rhs[j] = uj + dt * self.field.f(th, uj, pj);
                }
                solve_tridiagonal(&sub, &diag, &sup, &rhs)
            }
        };
        if next.iter().any(|v: &f64| !v.is_finite() || v.abs() > BLOW_UP) {
            return Err(PdeError::BlowUp { t: t + dt });
        }
        Ok(next)
    }
}

/// One time step of size `dt`.
pub fn step(u: &GridFunction, field: &CoefficientField, dt: f64, scheme: Scheme) -> Result<GridFunction, PdeError> {
    Stepper::new(field, u.n(), dt, scheme)?
        .step(&u.values, 0.0)
        .map(GridFunction::new)
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub snapshots: Vec<(f64, GridFunction)>,
    pub dt: f64,
    pub scheme: Scheme,
}

/// Metadata written next to trajectory dumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub spec_hash: String,
    pub dt: f64,
    pub grid_n: usize,
    pub seed: u64,
    pub scheme: Scheme,
    pub t_final: f64,
    pub snapshots: usize,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|(t, _)| *t).collect()
    }

    pub fn last(&self) -> &GridFunction {
        &self.snapshots.last().expect("trajectory is never empty").1
    }

    pub fn manifest(&self, spec_hash: &str, seed: u64) -> RunManifest {
        RunManifest {
            spec_hash: spec_hash.to_string(),
            dt: self.dt,
            grid_n: self.last().n(),
            seed,
            scheme: self.scheme,
            t_final: self.snapshots.last().map(|s| s.0).unwrap_or(0.0),
            snapshots: self.snapshots.len(),
        }
    }

    /// Writes `snapshot_00000.csv`, … and `manifest.json` into `dir`.
    pub fn write_dir(&self, dir: &Path, manifest: &RunManifest) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        for (k, (_, g)) in self.snapshots.iter().enumerate() {
            fs::write(dir.join(format!("snapshot_{k:05}.csv")), g.to_csv())?;
        }
        let mut text = serde_json::to_string_pretty(manifest).map_err(io::Error::other)?;
        text.push('\n');
        fs::write(dir.join("manifest.json"), text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub dt: f64,
    pub t_final: f64,
    pub scheme: Scheme,
    /// Keep every `save_every`-th state; the first and last are always kept.
    pub save_every: usize,
}

impl SimOptions {
    /// IMEX with `dt = h`.
    pub fn for_grid(n: usize, t_final: f64) -> Self {
        Self {
            dt: PI / n as f64,
            t_final,
            scheme: Scheme::Imex,
            save_every: 1,
        }
    }
}

pub fn simulate(u0: &GridFunction, field: &CoefficientField, opts: &SimOptions) -> Result<Trajectory, PdeError> {
    let stepper = Stepper::new(field, u0.n(), opts.dt, opts.scheme)?;
    let steps = (opts.t_final / opts.dt - 1e-9).ceil().max(0.0) as usize;
    let every = opts.save_every.max(1);
    let mut snapshots = vec![(0.0, u0.clone())];
    let mut u = u0.values.clone();
    for k in 0..steps {
        let t = k as f64 * opts.dt;
        u = stepper.step(&u, t)?;
        if (k + 1) % every == 0 || k + 1 == steps {
            snapshots.push(((k + 1) as f64 * opts.dt, GridFunction::new(u.clone())));
        }
    }
    Ok(Trajectory {
        snapshots,
        dt: opts.dt,
        scheme: opts.scheme,
    })
}

/// Independent trajectories, run in parallel.
pub fn simulate_ensemble(
    inits: &[GridFunction],
    field: &CoefficientField,
    opts: &SimOptions,
) -> Vec<Result<Trajectory, PdeError>> {
    inits.par_iter().map(|u0| simulate(u0, field, opts)).collect()
}

/// Largest IMEX step keeping `1 + dt·f_u > 1/2` for `|u| ≤ bound`, the
/// condition under which the explicit reaction cannot flip the sign of a
/// difference of solutions. Sampled at `p = 0` on the grid nodes.
pub fn sign_preserving_dt(field: &CoefficientField, n: usize, bound: f64) -> f64 {
    let worst = grid::nodes(n)
        .into_iter()
        .flat_map(|th| (0..=64).map(move |k| (th, bound * (2.0 * k as f64 / 64.0 - 1.0))))
        .map(|(th, u)| field.f_u(th, u, 0.0))
        .fold(0.0_f64, |m, fu| m.max(-fu));
    if worst > 0.0 {
        0.5 / worst
    } else {
        f64::INFINITY
    }
}

/// `Σ_{k<modes} c_k P_k(cosθ)` with `c_k` uniform in `±amplitude/(1+k)`.
pub fn random_smooth(n: usize, seed: u64, modes: usize, amplitude: f64) -> GridFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![0.0; n + 1];
    for k in 0..modes {
        let c = amplitude * rng.gen_range(-1.0..1.0) / (1 + k) as f64;
        for (v, p) in values.iter_mut().zip(legendre_mode(n, k).values) {
            *v += c * p;
        }
    }
    GridFunction::new(values)
}

fn reaction_depends_on_p(field: &CoefficientField) -> bool {
    if !field.f_depends_on_p() {
        return false;
    }
    [0.3, 1.2, 2.5].iter().any(|&th| {
        [-1.3, -0.2, 0.7, 1.9].iter().any(|&u| {
            let f0 = field.f(th, u, 0.0);
            (f0 - field.f(th, u, 1.0)).abs() > 1e-12 * (1.0 + f0.abs())
        })
    })
}

/// Discrete energy `Σ ½ sinθ_{j+½} (u_{j+1}−u_j)²/h − Σ W_j F(θ_j, u_j)`.
///
/// This is the quadrature of `∫ (½u_θ² − F(θ,u)) sinθ dθ` that the
/// conservative stencil is the exact gradient of.
pub fn lyapunov_energy(u: &GridFunction, field: &CoefficientField) -> Result<f64, PdeError> {
    if reaction_depends_on_p(field) {
        return Err(PdeError::NeedsLagrangianG);
    }
    let st = Stencil::new(u.n());
    Ok(energy_with(&st, field, &u.values))
}

fn energy_with(st: &Stencil, field: &CoefficientField, u: &[f64]) -> f64 {
    let grad: f64 = (0..st.n)
        .map(|j| 0.5 * st.half[j] * (u[j + 1] - u[j]).powi(2) / st.h)
        .sum();
    let pot: f64 = (0..=st.n)
        .map(|j| st.weights[j] * field.antiderivative(st.theta[j], u[j]))
        .sum();
    grad - pot
}

/// `∫ |u_t|² sinθ dθ` for the semi-discrete flow at `u`. For `a ≡ 1` this
/// is exactly `−dE/dt`.
pub fn dissipation(u: &GridFunction, field: &CoefficientField) -> f64 {
    let st = Stencil::new(u.n());
    let r = st.rhs(field, &u.values);
    (0..=st.n).map(|j| st.weights[j] * r[j] * r[j]).sum()
}

/// One characteristic of the `g`-equation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GCharacteristic {
    /// `(u, p)` at `θ = ε_θ`.
    pub start: (f64, f64),
    pub flagged: bool,
    /// `[u, p, g]` at each table angle reached.
    pub samples: Vec<[f64; 3]>,
}

/// Tabulated `g(θ,u,p)` with `L_pp = exp(g)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GTable {
    pub thetas: Vec<f64>,
    pub characteristics: Vec<GCharacteristic>,
}

impl GTable {
    pub fn flagged(&self) -> usize {
        self.characteristics.iter().filter(|c| c.flagged).count()
    }

    /// Nearest-neighbour lookup among unflagged characteristics.
    pub fn query(&self, theta: f64, u: f64, p: f64) -> Option<f64> {
        let m = self.thetas.len();
        if m == 0 {
            return None;
        }
        let k = if m == 1 {
            0
        } else {
            let step = (self.thetas[m - 1] - self.thetas[0]) / (m - 1) as f64;
            (((theta - self.thetas[0]) / step).round().max(0.0) as usize).min(m - 1)
        };
        self.characteristics
            .iter()
            .filter(|c| !c.flagged)
            .map(|c| c.samples[k])
            .min_by(|a, b| {
                let da = (a[0] - u).powi(2) + (a[1] - p).powi(2);
                let db = (b[0] - u).powi(2) + (b[1] - p).powi(2);
                da.total_cmp(&db)
            })
            .map(|s| s[2])
    }

    pub fn l_pp(&self, theta: f64, u: f64, p: f64) -> Option<f64> {
        self.query(theta, u, p).map(f64::exp)
    }
}

/// Integrates `u_θ = p`, `p_θ = −f/a − p·cotθ`, `g_θ = (f/a)_p` from
/// `θ = ε_θ` with `g = 0` for every lattice point, sampling at
/// `n_theta` equally spaced angles in `[ε_θ, π − ε_θ]`.
pub fn lagrangian_g(
    field: &CoefficientField,
    lattice: &[(f64, f64)],
    eps_theta: f64,
    n_theta: usize,
    tol: f64,
) -> GTable {
    let n_theta = n_theta.max(2);
    let (lo, hi) = (eps_theta, PI - eps_theta);
    let thetas: Vec<f64> = (0..n_theta)
        .map(|k| lo + (hi - lo) * k as f64 / (n_theta - 1) as f64)
        .collect();
    let characteristics = lattice
        .par_iter()
        .map(|&(u0, p0)| {
            let mut solver = Dopri5::new(Dopri5Options::with_tol(tol).h_max(0.05));
            let mut t = lo;
            let mut y = [u0, p0, 0.0];
            let mut samples = vec![y];
            let mut flagged = false;
            for &target in &thetas[1..] {
                let res = solver.advance(
                    &mut t,
                    &mut y,
                    target,
                    |th, y: &[f64; 3]| {
                        if y[0].abs() + y[1].abs() > 1e6 {
                            return Err(());
                        }
                        let jet = field.ratio_jet(th, y[0], y[1]);
                        Ok([y[1], -jet.h - y[1] * th.cos() / th.sin(), jet.h_p])
                    },
                    |_, _| {},
                );
                if res.is_err() || y.iter().any(|v| !v.is_finite()) {
                    flagged = true;
                    break;
                }
                samples.push(y);
            }
            GCharacteristic {
                start: (u0, p0),
                flagged,
                samples,
            }
        })
        .collect();
    GTable {
        thetas,
        characteristics,
    }
}

/// `z(u1 − u2)` at each common snapshot.
pub fn zero_number_track(a: &Trajectory, b: &Trajectory) -> Result<Vec<(f64, i64)>, PdeError> {
    if a.last().n() != b.last().n() {
        return Err(PdeError::GridMismatch(a.last().n(), b.last().n()));
    }
    if a.snapshots.len() != b.snapshots.len() {
        return Err(PdeError::TimeMismatch {
            index: a.snapshots.len().min(b.snapshots.len()),
        });
    }
    a.snapshots
        .iter()
        .zip(&b.snapshots)
        .enumerate()
        .map(|(k, ((ta, ua), (tb, ub)))| {
            if (ta - tb).abs() > 1e-12 * ta.abs().max(1.0) {
                return Err(PdeError::TimeMismatch { index: k });
            }
            Ok((*ta, zero_number(&ua.sub(ub))))
        })
        .collect()
}

/// `z(u(t_{k+1}) − u(t_k))`, a difference quotient of `u_t`, stamped `t_k`.
pub fn time_derivative_zero_numbers(traj: &Trajectory) -> Vec<(f64, i64)> {
    traj.snapshots
        .windows(2)
        .map(|w| (w[0].0, zero_number(&w[1].1.sub(&w[0].1))))
        .collect()
}

/// Newton's method for `a·Δu + f = 0` on the grid, started at `guess`.
pub fn discrete_equilibrium(field: &CoefficientField, guess: &GridFunction) -> Result<GridFunction, PdeError> {
    let st = Stencil::new(guess.n());
    let len = st.n + 1;
    let mut u = guess.values.clone();
    let mut residual = f64::INFINITY;
    for _ in 0..50 {
        let p = st.slopes(&u);
        let mut sub = vec![0.0; len];
        let mut diag = vec![0.0; len];
        let mut sup = vec![0.0; len];
        let mut r = vec![0.0; len];
        for j in 0..len {
            let (th, uj, pj) = (st.theta[j], u[j], p[j]);
            let lap = st.row(&u, j);
            let a = field.a(th, uj, pj);
            r[j] = -(a * lap + field.f(th, uj, pj));
            let g = if j == 0 || j == st.n {
                0.0
            } else {
                (field.a_p(th, uj, pj) * lap + field.f_p(th, uj, pj)) / (2.0 * st.h)
            };
            diag[j] = field.a_u(th, uj, pj) * lap + field.f_u(th, uj, pj) - a * (st.lower[j] + st.upper[j]);
            sub[j] = a * st.lower[j] - g;
            sup[j] = a * st.upper[j] + g;
        }
        residual = r.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let delta = solve_tridiagonal(&sub, &diag, &sup, &r);
        let size = delta.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if !size.is_finite() {
            break;
        }
        for (x, d) in u.iter_mut().zip(&delta) {
            *x += d;
        }
        let scale = 1.0 + u.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if size <= 1e-13 * scale {
            return Ok(GridFunction::new(u));
        }
    }
    if residual <= 1e-6 {
        Ok(GridFunction::new(u))
    } else {
        Err(PdeError::NoConvergence { residual })
    }
}

/// Discrete counterparts of the equilibrium profiles, in record order.
pub fn discrete_equilibria(
    field: &CoefficientField,
    records: &[EquilibriumRecord],
) -> Result<Vec<GridFunction>, PdeError> {
    records
        .par_iter()
        .map(|r| discrete_equilibrium(field, &r.profile))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeteroclinicOptions {
    pub amplitude: f64,
    pub t_max: f64,
    /// Defaults to the grid spacing.
    pub dt: Option<f64>,
    /// Weighted L² radius around a target that counts as reaching it.
    pub conv_tol: f64,
}

impl Default for HeteroclinicOptions {
    fn default() -> Self {
        Self {
            amplitude: 1e-3,
            t_max: 50.0,
            dt: None,
            conv_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum Outcome {
    Reached { label: usize, time: f64, distance: f64 },
    Timeout { nearest: usize, distance: f64 },
    Diverged { time: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionVerdict {
    pub mode: usize,
    pub sign: i8,
    #[serde(flatten)]
    pub outcome: Outcome,
}

impl DirectionVerdict {
    pub fn reached(&self) -> Option<usize> {
        match self.outcome {
            Outcome::Reached { label, .. } => Some(label),
            _ => None,
        }
    }
}

fn legendre_basis_applies(field: &CoefficientField, c: f64) -> bool {
    let probes = [0.2, 0.9, 1.7, 2.8];
    let a0 = field.a(probes[0], c, 0.0);
    let k0 = field.f_u(probes[0], c, 0.0);
    probes.iter().all(|&th| {
        (field.a(th, c, 0.0) - a0).abs() <= 1e-12 * a0.abs().max(1.0)
            && (field.f_u(th, c, 0.0) - k0).abs() <= 1e-12 * k0.abs().max(1.0)
            && field.f_p(th, c, 0.0) == 0.0
    })
}

/// The `i(record)` unstable eigenfunctions, normalized in L²_w and positive
/// at θ = 0. Spatially homogeneous equilibria of θ-independent equations
/// use Legendre modes.
pub fn unstable_directions(spec: &ProblemSpec, record: &EquilibriumRecord) -> Result<Vec<GridFunction>, PdeError> {
    let i = record.morse_index;
    let profile = &record.profile;
    let n = profile.n();
    let c = profile.values[0];
    let constant = profile.values.iter().all(|v| (v - c).abs() <= 1e-12 * c.abs().max(1.0));
    if constant && legendre_basis_applies(spec.field(), c) {
        return Ok((0..i)
            .map(|k| {
                let g = legendre_mode(n, k);
                let nrm = g.norm_w();
                g.scale(1.0 / nrm)
            })
            .collect());
    }
    let values = match &record.eigenvalues {
        Some(v) if v.len() >= i => v.clone(),
        _ => {
            equilibria::eigen_spectrum(
                spec.field(),
                record.d,
                record.e,
                i.saturating_sub(1),
                equilibria::eigen_bracket(spec.lambda),
                &spec.numerics,
            )?
            .values
        }
    };
    if values.len() < i {
        return Err(EquilibriumError::NegativeIndex { zeta: record.zeta }.into());
    }
    (0..i)
        .map(|k| {
            equilibria::eigenfunction(spec.field(), record.d, record.e, values[k], n, &spec.numerics)
                .map_err(PdeError::from)
        })
        .collect()
}

/// Perturbs equilibrium `from` (0-based position in `records`) by
/// `±amplitude·φ_k` for each unstable direction and follows the flow until
/// it comes within `conv_tol` of another discrete equilibrium.
pub fn verify_heteroclinic(
    spec: &ProblemSpec,
    records: &[EquilibriumRecord],
    from: usize,
    opts: &HeteroclinicOptions,
) -> Result<Vec<DirectionVerdict>, PdeError> {
    let targets = discrete_equilibria(spec.field(), records)?;
    verify_heteroclinic_with(spec, records, &targets, from, opts)
}

/// As [`verify_heteroclinic`], reusing precomputed discrete equilibria.
pub fn verify_heteroclinic_with(
    spec: &ProblemSpec,
    records: &[EquilibriumRecord],
    targets: &[GridFunction],
    from: usize,
    opts: &HeteroclinicOptions,
) -> Result<Vec<DirectionVerdict>, PdeError> {
    let record = records.get(from).ok_or(PdeError::NoSuchEquilibrium(from))?;
    let base = &targets[from];
    let n = base.n();
    let directions = unstable_directions(spec, record)?;
    let dt = opts.dt.unwrap_or(PI / n as f64);
    let stepper = Stepper::new(spec.field(), n, dt, Scheme::Imex)?;
    let steps = (opts.t_max / dt).ceil() as usize;
    let jobs: Vec<(usize, i8)> = (0..directions.len()).flat_map(|k| [(k, 1), (k, -1)]).collect();
    Ok(jobs
        .par_iter()
        .map(|&(k, sign)| {
            let mut u = base.axpy(sign as f64 * opts.amplitude, &directions[k]).values;
            let nearest = |u: &[f64]| {
                targets
                    .iter()
                    .enumerate()
                    .filter(|(m, _)| *m != from)
                    .map(|(m, g)| (m, stepper.stencil.weighted_distance(u, &g.values)))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
            };
            let mut outcome = None;
            for s in 0..steps {
                match stepper.step(&u, s as f64 * dt) {
                    Ok(next) => u = next,
                    Err(_) => {
                        outcome = Some(Outcome::Diverged {
                            time: (s + 1) as f64 * dt,
                        });
                        break;
                    }
                }
                if let Some((m, dist)) = nearest(&u) {
                    if dist < opts.conv_tol {
                        outcome = Some(Outcome::Reached {
                            label: m + 1,
                            time: (s + 1) as f64 * dt,
                            distance: dist,
                        });
                        break;
                    }
                }
            }
            let outcome = outcome.unwrap_or_else(|| match nearest(&u) {
                Some((m, distance)) => Outcome::Timeout {
                    nearest: m + 1,
                    distance,
                },
                None => Outcome::Timeout {
                    nearest: from + 1,
                    distance: f64::INFINITY,
                },
            });
            DirectionVerdict {
                mode: k,
                sign,
                outcome,
            }
        })
        .collect())
}
