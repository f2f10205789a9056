//! Property suites: each returns a [`CheckResult`] with counts of what was
//! compared and what went wrong.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::connections::{self, ConnectionGraph};
use crate::equilibria::EquilibriumRecord;
use crate::grid::GridFunction;
use crate::model::{CoefficientField, ModelError, Numerics, ProblemSpec};
use crate::pde::{self, HeteroclinicOptions, PdeError, SimOptions, Stepper};
use crate::permutation::ZeroNumberTable;
use crate::shooting::{self, PolarSample, ShootingError, ShotOptions, Side};

/// Inequalities closer than this count as violated.
pub const MONOTONICITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub summary: String,
    pub metrics: BTreeMap<String, f64>,
}

impl CheckResult {
    pub fn new(name: &str, passed: bool, summary: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            passed,
            summary: summary.into(),
            metrics: BTreeMap::new(),
        }
    }

    pub fn metric(mut self, key: &str, value: f64) -> Self {
        self.metrics.insert(key.to_string(), value);
        self
    }

    pub fn skipped(name: &str, reason: &str) -> Self {
        Self::new(name, true, format!("skipped: {reason}")).metric("skipped", 1.0)
    }

    pub fn failed(name: &str, err: impl std::fmt::Display) -> Self {
        Self::new(name, false, format!("error: {err}"))
    }
}

fn probes() -> impl Iterator<Item = (f64, f64, f64)> {
    [0.3, 1.1, 2.6]
        .into_iter()
        .flat_map(|th| [-1.4, -0.3, 0.6, 1.7].into_iter().flat_map(move |u| [0.0, 0.8].map(|p| (th, u, p))))
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()))
}

/// Whether the field coincides with `a ≡ 1`, `f = λu(1−u²)` on probe points.
pub fn is_chafee_infante(field: &CoefficientField, lambda: f64) -> bool {
    probes().all(|(th, u, p)| close(field.a(th, u, p), 1.0) && close(field.f(th, u, p), lambda * u * (1.0 - u * u)))
}

/// Whether `u ↦ −u` is a symmetry: `a` even and `f` odd in `(u, p)`.
pub fn is_odd_field(field: &CoefficientField) -> bool {
    probes().all(|(th, u, p)| close(field.a(th, -u, -p), field.a(th, u, p)) && close(field.f(th, -u, -p), -field.f(th, u, p)))
}

/// Sample grids for the polar monotonicity suites.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityGrid {
    pub ds: Vec<f64>,
    pub taus: Vec<f64>,
    pub lambdas: Vec<f64>,
}

impl MonotonicityGrid {
    /// 20 values each: `d = k/21`, `τ` equally spaced up to the end of the
    /// shooting interval, `λ = 0.5, 1.5, …, 19.5`.
    pub fn standard(numerics: &Numerics) -> Self {
        let t0 = shooting::tau_of_theta(numerics.eps_theta).expect("eps_theta is valid");
        let t1 = shooting::tau_of_theta(PI - numerics.eps_theta).expect("eps_theta is valid");
        Self {
            ds: (1..=20).map(|k| k as f64 / 21.0).collect(),
            taus: (1..=20).map(|k| t0 + (t1 - t0) * k as f64 / 20.0).collect(),
            lambdas: (0..20).map(|k| 0.5 + k as f64).collect(),
        }
    }
}

/// Outcome of comparing neighbouring tracks of a monotone family.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub comparisons: usize,
    pub violations: usize,
    pub min_gap: f64,
    /// Family parameters and τ of the smallest gap.
    pub worst: (f64, f64, f64),
    /// The same, restricted to samples where both tracks have stayed in
    /// the unit disk `ρ < 1` so far.
    pub comparisons_in_disk: usize,
    pub violations_in_disk: usize,
}

impl MonotonicityReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    pub fn to_check(&self, name: &str) -> CheckResult {
        let (a, b, tau) = self.worst;
        CheckResult::new(
            name,
            self.passed(),
            format!(
                "{} of {} comparisons violated (in unit disk: {} of {}); smallest gap {:.3e} between {a} and {b} at tau {tau:.3}",
                self.violations, self.comparisons, self.violations_in_disk, self.comparisons_in_disk, self.min_gap
            ),
        )
        .metric("comparisons", self.comparisons as f64)
        .metric("violations", self.violations as f64)
        .metric("comparisons_in_disk", self.comparisons_in_disk as f64)
        .metric("violations_in_disk", self.violations_in_disk as f64)
        .metric("min_gap", self.min_gap)
    }
}

fn compare_tracks(
    params: &[f64],
    taus: &[f64],
    tracks: &[Vec<PolarSample>],
    gap: impl Fn(&PolarSample, &PolarSample) -> f64,
) -> MonotonicityReport {
    let in_disk: Vec<Vec<bool>> = tracks
        .iter()
        .map(|t| {
            t.iter()
                .scan(true, |ok, s| {
                    *ok = *ok && s.rho < 1.0;
                    Some(*ok)
                })
                .collect()
        })
        .collect();
    let mut report = MonotonicityReport {
        comparisons: 0,
        violations: 0,
        min_gap: f64::INFINITY,
        worst: (f64::NAN, f64::NAN, f64::NAN),
        comparisons_in_disk: 0,
        violations_in_disk: 0,
    };
    for i in 0..tracks.len().saturating_sub(1) {
        for k in 0..taus.len() {
            let g = gap(&tracks[i][k], &tracks[i + 1][k]);
            let bad = g.is_nan() || g <= MONOTONICITY_TOL;
            report.comparisons += 1;
            report.violations += bad as usize;
            if in_disk[i][k] && in_disk[i + 1][k] {
                report.comparisons_in_disk += 1;
                report.violations_in_disk += bad as usize;
            }
            if g < report.min_gap {
                report.min_gap = g;
                report.worst = (params[i], params[i + 1], taus[k]);
            }
        }
    }
    report
}

fn tracks_in_d(
    field: &CoefficientField,
    grid: &MonotonicityGrid,
    numerics: &Numerics,
) -> Result<Vec<Vec<PolarSample>>, ShootingError> {
    let opts = ShotOptions::from_numerics(numerics);
    grid.ds
        .par_iter()
        .map(|&d| shooting::polar_track(field, d, &grid.taus, &opts))
        .collect()
}

/// `μ(τ; d) > μ(τ; d̃)` for `d < d̃` on neighbouring grid values.
pub fn angle_in_d(
    field: &CoefficientField,
    grid: &MonotonicityGrid,
    numerics: &Numerics,
) -> Result<MonotonicityReport, ShootingError> {
    let tracks = tracks_in_d(field, grid, numerics)?;
    Ok(compare_tracks(&grid.ds, &grid.taus, &tracks, |a, b| a.mu - b.mu))
}

/// `ρ(τ; d) < ρ(τ; d̃)` for `d < d̃`.
pub fn radius_in_d(
    field: &CoefficientField,
    grid: &MonotonicityGrid,
    numerics: &Numerics,
) -> Result<MonotonicityReport, ShootingError> {
    let tracks = tracks_in_d(field, grid, numerics)?;
    Ok(compare_tracks(&grid.ds, &grid.taus, &tracks, |a, b| b.rho - a.rho))
}

/// `μ(λ, τ) > μ(λ̃, τ)` for `λ > λ̃` at fixed `d`.
pub fn angle_in_lambda(spec: &ProblemSpec, d: f64, grid: &MonotonicityGrid) -> Result<MonotonicityReport, MonotonicityError> {
    let opts = ShotOptions::from_numerics(&spec.numerics);
    let tracks = grid
        .lambdas
        .par_iter()
        .map(|&lam| {
            let s = spec.with_lambda(lam)?;
            Ok(shooting::polar_track(s.field(), d, &grid.taus, &opts)?)
        })
        .collect::<Result<Vec<_>, MonotonicityError>>()?;
    Ok(compare_tracks(&grid.lambdas, &grid.taus, &tracks, |a, b| b.mu - a.mu))
}

#[derive(Debug, thiserror::Error)]
pub enum MonotonicityError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Shooting(#[from] ShootingError),
}

/// The three polar monotonicity checks. `lambdas` are the λ at which the
/// d-families are compared; `ds` those at which the λ-family is.
pub fn monotonicity_suite(spec: &ProblemSpec, lambdas: &[f64], ds: &[f64]) -> Vec<CheckResult> {
    if !is_chafee_infante(spec.field(), spec.lambda) {
        return vec![CheckResult::skipped("monotonicity", "the polar checks only apply to a = 1, f = lambda*u*(1-u^2)")];
    }
    let grid = MonotonicityGrid::standard(&spec.numerics);
    let mut angle = Vec::new();
    let mut radius = Vec::new();
    for &lam in lambdas {
        match spec.with_lambda(lam) {
            Ok(s) => {
                angle.push(angle_in_d(s.field(), &grid, &s.numerics).map_err(|e| e.to_string()));
                radius.push(radius_in_d(s.field(), &grid, &s.numerics).map_err(|e| e.to_string()));
            }
            Err(e) => {
                angle.push(Err(e.to_string()));
                radius.push(Err(e.to_string()));
            }
        }
    }
    let by_lambda: Vec<_> = ds
        .iter()
        .map(|&d| angle_in_lambda(spec, d, &grid).map_err(|e| e.to_string()))
        .collect();
    vec![
        merge("angle-in-d", &angle),
        merge("radius-in-d", &radius),
        merge("angle-in-lambda", &by_lambda),
    ]
}

fn merge(name: &str, parts: &[Result<MonotonicityReport, String>]) -> CheckResult {
    let mut total: Option<MonotonicityReport> = None;
    for p in parts {
        match p {
            Err(e) => return CheckResult::failed(name, e),
            Ok(r) => {
                total = Some(match total {
                    None => r.clone(),
                    Some(mut t) => {
                        t.comparisons += r.comparisons;
                        t.violations += r.violations;
                        t.comparisons_in_disk += r.comparisons_in_disk;
                        t.violations_in_disk += r.violations_in_disk;
                        if r.min_gap < t.min_gap {
                            t.min_gap = r.min_gap;
                            t.worst = r.worst;
                        }
                        t
                    }
                });
            }
        }
    }
    match total {
        Some(t) => t.to_check(name),
        None => CheckResult::skipped(name, "empty sample grid"),
    }
}

/// Reflection symmetry `u ↦ −u`: shooting curves, equilibrium set and
/// spectra of mirror pairs.
pub fn symmetry_check(spec: &ProblemSpec, records: &[EquilibriumRecord]) -> CheckResult {
    let name = "symmetry";
    let field = spec.field();
    if !is_odd_field(field) {
        return CheckResult::skipped(name, "equation is not odd in u");
    }
    let numerics = &spec.numerics;
    let opts = ShotOptions::from_numerics(numerics);
    let (lo, hi) = numerics.d_range;
    let span = lo.abs().min(hi.abs());
    let mut curve_err: f64 = 0.0;
    let mut curve_pairs = 0;
    for side in [Side::Unstable, Side::Stable] {
        for k in 1..=20 {
            let d = span * k as f64 / 21.0;
            let a = shooting::shoot(field, side, d, numerics.theta_cut, &opts);
            let b = shooting::shoot(field, side, -d, numerics.theta_cut, &opts);
            if let (Ok(a), Ok(b)) = (a, b) {
                curve_pairs += 1;
                curve_err = curve_err.max((a.u + b.u).abs()).max((a.p + b.p).abs());
            }
        }
    }
    let n = records.len();
    let mut set_err: f64 = 0.0;
    let mut spec_err: f64 = 0.0;
    for i in 0..n {
        let j = n - 1 - i;
        set_err = set_err.max((records[i].d + records[j].d).abs());
        if let (Some(a), Some(b)) = (&records[i].eigenvalues, &records[j].eigenvalues) {
            for (x, y) in a.iter().zip(b) {
                spec_err = spec_err.max((x - y).abs());
            }
        }
    }
    let passed = curve_err <= 1e-8 && set_err <= 1e-6 && spec_err <= 1e-6;
    CheckResult::new(
        name,
        passed,
        format!(
            "curve asymmetry {curve_err:.2e} over {curve_pairs} pairs, equilibrium asymmetry {set_err:.2e}, spectrum asymmetry {spec_err:.2e}"
        ),
    )
    .metric("curve_asymmetry", curve_err)
    .metric("equilibrium_asymmetry", set_err)
    .metric("spectrum_asymmetry", spec_err)
}

fn subseed(seed: u64, k: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k)
}

/// Zero numbers of differences of random trajectory pairs, and of the
/// discrete time derivative, never increase.
///
/// `dt = min(h, sign_preserving_dt)` with the bound taken from the initial
/// data, per pair.
pub fn dropping_check(field: &CoefficientField, n: usize, pairs: usize, steps: usize, seed: u64) -> CheckResult {
    let name = "dropping";
    let h = PI / n as f64;
    let results: Vec<Result<(usize, usize, usize, usize, f64), PdeError>> = (0..pairs as u64)
        .into_par_iter()
        .map(|k| {
            let u1 = pde::random_smooth(n, subseed(seed, 2 * k), 8, 1.5);
            let u2 = pde::random_smooth(n, subseed(seed, 2 * k + 1), 8, 1.5);
            let bound = u1.sup_norm().max(u2.sup_norm()).max(1.0);
            let dt = h.min(pde::sign_preserving_dt(field, n, bound));
            let opts = SimOptions {
                dt,
                t_final: steps as f64 * dt,
                scheme: pde::Scheme::Imex,
                save_every: 1,
            };
            let a = pde::simulate(&u1, field, &opts)?;
            let b = pde::simulate(&u2, field, &opts)?;
            let track = pde::zero_number_track(&a, &b)?;
            let ups = track.windows(2).filter(|w| w[1].1 > w[0].1).count();
            let drops = track.windows(2).filter(|w| w[1].1 < w[0].1).count();
            let dz = pde::time_derivative_zero_numbers(&a);
            let dz_ups = dz.windows(2).filter(|w| w[1].1 > w[0].1).count();
            Ok((track.len() - 1, ups, drops, dz_ups, dt))
        })
        .collect();
    let (mut comparisons, mut violations, mut drops, mut dt_violations) = (0, 0, 0, 0);
    let mut dt_min = h;
    for r in results {
        match r {
            Ok((c, v, d, w, dt)) => {
                comparisons += c;
                violations += v;
                drops += d;
                dt_violations += w;
                dt_min = dt_min.min(dt);
            }
            Err(e) => return CheckResult::failed(name, e),
        }
    }
    CheckResult::new(
        name,
        violations == 0 && dt_violations == 0,
        format!(
            "{pairs} pairs over {steps} steps: {violations} increases of z(u1-u2), {dt_violations} increases of z(u_t), {drops} drops (smallest dt {dt_min:.2e})"
        ),
    )
    .metric("dt_min", dt_min)
    .metric("pairs", pairs as f64)
    .metric("comparisons", comparisons as f64)
    .metric("violations", violations as f64)
    .metric("time_derivative_violations", dt_violations as f64)
    .metric("drops", drops as f64)
}

/// Energy along random trajectories: per-step monotonicity and agreement
/// of the discrete rate with `−∫|u_t|² sinθ dθ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovReport {
    pub trajectories: usize,
    pub steps: usize,
    pub increases: usize,
    /// Largest `(E_{n+1} − E_n)/(1 + |E_n|)`.
    pub worst_increase: f64,
    /// `‖dE/dt + D‖ / ‖D‖` over all steps, `D` the trapezoidal dissipation.
    pub rate_rms: f64,
}

pub fn lyapunov_report(
    field: &CoefficientField,
    n: usize,
    count: usize,
    t_final: f64,
    dt: f64,
    seed: u64,
) -> Result<LyapunovReport, PdeError> {
    let stats = (0..count as u64)
        .into_par_iter()
        .map(|k| {
            let u0 = pde::random_smooth(n, subseed(seed, k), 6, 1.5);
            let stepper = Stepper::new(field, n, dt, pde::Scheme::Imex)?;
            let steps = (t_final / dt).ceil() as usize;
            let mut u = u0;
            let mut e = pde::lyapunov_energy(&u, field)?;
            let mut diss = pde::dissipation(&u, field);
            let (mut inc, mut worst, mut num, mut den) = (0usize, f64::NEG_INFINITY, 0.0, 0.0);
            for s in 0..steps {
                let next = GridFunction::new(stepper.step(&u.values, s as f64 * dt)?);
                let e_next = pde::lyapunov_energy(&next, field)?;
                let diss_next = pde::dissipation(&next, field);
                let rel = (e_next - e) / (1.0 + e.abs());
                worst = worst.max(rel);
                if e_next > e + 1e-8 * (1.0 + e.abs()) {
                    inc += 1;
                }
                let rate = (e_next - e) / dt;
                let target = -0.5 * (diss + diss_next);
                num += (rate - target).powi(2);
                den += target * target;
                u = next;
                e = e_next;
                diss = diss_next;
            }
            Ok((steps, inc, worst, num, den))
        })
        .collect::<Result<Vec<_>, PdeError>>()?;
    let mut report = LyapunovReport {
        trajectories: count,
        steps: 0,
        increases: 0,
        worst_increase: f64::NEG_INFINITY,
        rate_rms: 0.0,
    };
    let (mut num, mut den) = (0.0, 0.0);
    for (s, i, w, a, b) in stats {
        report.steps += s;
        report.increases += i;
        report.worst_increase = report.worst_increase.max(w);
        num += a;
        den += b;
    }
    report.rate_rms = if den > 0.0 { (num / den).sqrt() } else { 0.0 };
    Ok(report)
}

/// Runs at `dt = h/4`: the scheme is first order in time and the rate
/// comparison is only as good as the time step.
pub fn lyapunov_check(field: &CoefficientField, n: usize, count: usize, seed: u64) -> CheckResult {
    let name = "lyapunov";
    let dt = PI / n as f64 / 4.0;
    match lyapunov_report(field, n, count, 5.0, dt, seed) {
        Err(PdeError::NeedsLagrangianG) => CheckResult::skipped(name, "reaction depends on u_theta"),
        Err(e) => CheckResult::failed(name, e),
        Ok(r) => CheckResult::new(
            name,
            r.increases == 0 && r.rate_rms <= 0.05,
            format!(
                "{} trajectories, {} steps: {} energy increases (worst {:.2e}), rate mismatch {:.2}% RMS",
                r.trajectories,
                r.steps,
                r.increases,
                r.worst_increase,
                100.0 * r.rate_rms
            ),
        )
        .metric("trajectories", r.trajectories as f64)
        .metric("increases", r.increases as f64)
        .metric("worst_increase", r.worst_increase)
        .metric("rate_rms", r.rate_rms),
    }
}

pub fn wolfrum_equivalence_check(records: &[EquilibriumRecord], table: &ZeroNumberTable) -> CheckResult {
    let name = "wolfrum-equivalence";
    match connections::wolfrum_check(records, table) {
        Err(e) => CheckResult::failed(name, e),
        Ok(r) => CheckResult::new(
            name,
            r.passed(),
            format!("{} ordered pairs checked, {} mismatches", r.pairs_checked, r.mismatches.len()),
        )
        .metric("pairs_checked", r.pairs_checked as f64)
        .metric("mismatches", r.mismatches.len() as f64),
    }
}

/// Every edge satisfies `i(to) ≤ z(u_from − u_to) < i(from)`.
pub fn zero_number_range_check(graph: &ConnectionGraph, table: &ZeroNumberTable) -> CheckResult {
    let bad = connections::zero_number_range_violations(graph, table);
    CheckResult::new(
        "zero-number-range",
        bad.is_empty(),
        format!("{} edges, {} violations", graph.edges.len(), bad.len()),
    )
    .metric("edges", graph.edges.len() as f64)
    .metric("violations", bad.len() as f64)
}

/// Follows every unstable direction of every equilibrium; each reached
/// target must be a predicted edge.
pub fn heteroclinic_check(
    spec: &ProblemSpec,
    records: &[EquilibriumRecord],
    graph: &ConnectionGraph,
    opts: &HeteroclinicOptions,
) -> CheckResult {
    let name = "heteroclinics";
    let targets = match pde::discrete_equilibria(spec.field(), records) {
        Ok(t) => t,
        Err(e) => return CheckResult::failed(name, e),
    };
    let (mut directions, mut reached, mut unpredicted) = (0, 0, 0);
    let mut realized = Vec::new();
    for from in 0..records.len() {
        let verdicts = match pde::verify_heteroclinic_with(spec, records, &targets, from, opts) {
            Ok(v) => v,
            Err(e) => return CheckResult::failed(name, e),
        };
        for v in verdicts {
            directions += 1;
            if let Some(to) = v.reached() {
                reached += 1;
                if graph.has_edge(from + 1, to) {
                    realized.push((from + 1, to));
                } else {
                    unpredicted += 1;
                }
            }
        }
    }
    realized.sort_unstable();
    realized.dedup();
    let drop_one = graph.edges_with_drop(1);
    let covered = drop_one.iter().filter(|e| realized.contains(e)).count();
    CheckResult::new(
        name,
        reached == directions && unpredicted == 0,
        format!(
            "{reached} of {directions} perturbations reached an equilibrium, {unpredicted} outside the graph; {covered} of {} index-drop-one edges realized",
            drop_one.len()
        ),
    )
    .metric("directions", directions as f64)
    .metric("reached", reached as f64)
    .metric("unpredicted", unpredicted as f64)
    .metric("drop_one_realized", covered as f64)
}

/// Random trajectories end within `conv_tol` of a discrete equilibrium.
pub fn convergence_check(
    spec: &ProblemSpec,
    records: &[EquilibriumRecord],
    count: usize,
    t_final: f64,
    conv_tol: f64,
    seed: u64,
) -> CheckResult {
    let name = "convergence";
    let field = spec.field();
    let targets = match pde::discrete_equilibria(field, records) {
        Ok(t) => t,
        Err(e) => return CheckResult::failed(name, e),
    };
    let Some(n) = targets.first().map(GridFunction::n) else {
        return CheckResult::skipped(name, "no equilibria");
    };
    let opts = SimOptions {
        save_every: usize::MAX,
        ..SimOptions::for_grid(n, t_final)
    };
    let finals: Vec<Result<f64, PdeError>> = (0..count as u64)
        .into_par_iter()
        .map(|k| {
            let u0 = pde::random_smooth(n, subseed(seed, k), 6, 1.5);
            let traj = pde::simulate(&u0, field, &opts)?;
            let last = traj.last();
            Ok(targets.iter().map(|t| last.distance_w(t)).fold(f64::INFINITY, f64::min))
        })
        .collect();
    let mut worst: f64 = 0.0;
    let mut misses = 0;
    for f in finals {
        match f {
            Ok(d) => {
                worst = worst.max(d);
                misses += (d >= conv_tol) as usize;
            }
            Err(e) => return CheckResult::failed(name, e),
        }
    }
    CheckResult::new(
        name,
        misses == 0,
        format!("{count} trajectories to t = {t_final}: {misses} not within {conv_tol:e}, worst distance {worst:.2e}"),
    )
    .metric("misses", misses as f64)
    .metric("worst_distance", worst)
}

/// z-table diagnostics: symmetric, `−1` on the diagonal.
pub fn zero_table_check(table: &ZeroNumberTable) -> CheckResult {
    let n = table.n();
    let diag = (0..n).all(|i| table.get(i, i) == -1);
    let off = (0..n).all(|i| (0..n).all(|j| i == j || table.get(i, j) >= 0));
    CheckResult::new(
        "zero-table",
        table.is_symmetric() && diag && off,
        format!("{n}x{n} table, {} flagged entries", table.flagged.len()),
    )
    .metric("flagged", table.flagged.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recognizes_chafee_infante() {
        let s = ProblemSpec::chafee_infante(3.0);
        assert!(is_chafee_infante(s.field(), 3.0));
        assert!(!is_chafee_infante(s.field(), 2.0));
        let dsl = CoefficientField::from_expressions("1", "lambda*u*(1-u^2)", 3.0).unwrap();
        assert!(is_chafee_infante(&dsl, 3.0));
        assert!(is_odd_field(&dsl));
        let shifted = CoefficientField::from_expressions("1", "u*(1-u^2) + 0.1", 0.0).unwrap();
        assert!(!is_odd_field(&shifted));
    }

    #[test]
    fn angle_decreases_in_d() {
        let spec = ProblemSpec::chafee_infante(3.0);
        let grid = MonotonicityGrid::standard(&spec.numerics);
        let r = angle_in_d(spec.field(), &grid, &spec.numerics).unwrap();
        assert_eq!(r.comparisons, 19 * 20);
        assert_eq!(r.violations, 0, "{r:?}");
    }

    #[test]
    fn angle_increases_in_lambda_inside_unit_disk() {
        let spec = ProblemSpec::chafee_infante(3.0);
        let grid = MonotonicityGrid::standard(&spec.numerics);
        for d in [0.1, 0.5, 0.9] {
            let r = angle_in_lambda(&spec, d, &grid).unwrap();
            assert_eq!(r.violations_in_disk, 0, "d = {d}: {r:?}");
        }
    }

    #[test]
    fn dropping_on_a_few_pairs() {
        let r = dropping_check(&CoefficientField::chafee_infante(3.0), 64, 4, 200, 0);
        assert!(r.passed, "{}", r.summary);
        assert!(r.metrics["drops"] > 0.0);
    }
}
