//! Equilibria as intersections of the shooting curves, with profiles,
//! intersection angles, Morse indices and linearized spectra.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{self, GridFunction};
use crate::model::{CoefficientField, Numerics, ProblemSpec};
use crate::shooting::{
    self, cross_section, refine_curve, RefineOptions, CURVE_WINDOW, SampledCurve, ShootingError, ShotOptions, Side,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EquilibriumError {
    #[error(transparent)]
    Shooting(#[from] ShootingError),
    #[error("profile halves disagree by {mismatch:e} at the cut")]
    JointMismatch { mismatch: f64 },
    #[error("equilibrium with d = {d} is not hyperbolic (zeta = {zeta})")]
    NonHyperbolic { d: f64, zeta: f64 },
    #[error("negative Morse index from zeta = {zeta}")]
    NegativeIndex { zeta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Root {
    pub d: f64,
    pub e: f64,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demoted {
    pub d0: f64,
    pub e0: f64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Intersections {
    pub roots: Vec<Root>,
    pub demoted: Vec<Demoted>,
    pub seeds: usize,
}

#[derive(Debug, Clone, Copy)]
struct Seed {
    d: f64,
    e: f64,
}

type Pt = (f64, f64);

fn sub(a: Pt, b: Pt) -> Pt {
    (a.0 - b.0, a.1 - b.1)
}

fn cross(a: Pt, b: Pt) -> f64 {
    a.0 * b.1 - a.1 * b.0
}

fn dot(a: Pt, b: Pt) -> f64 {
    a.0 * b.0 + a.1 * b.1
}

fn norm(a: Pt) -> f64 {
    a.0.hypot(a.1)
}

/// Closest point on segment `a→b` to `x`, as parameter in `[0,1]`.
fn project(x: Pt, a: Pt, b: Pt) -> f64 {
    let ab = sub(b, a);
    let l2 = dot(ab, ab);
    if l2 == 0.0 {
        0.0
    } else {
        (dot(sub(x, a), ab) / l2).clamp(0.0, 1.0)
    }
}

fn lerp(a: Pt, b: Pt, t: f64) -> Pt {
    (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1))
}

/// `(t, s, distance)` of the closest pair of points on two segments.
fn segment_closest(p0: Pt, p1: Pt, q0: Pt, q1: Pt) -> (f64, f64, f64) {
    let r = sub(p1, p0);
    let s = sub(q1, q0);
    let den = cross(r, s);
    if den != 0.0 {
        let qp = sub(q0, p0);
        let t = cross(qp, s) / den;
        let u = cross(qp, r) / den;
        if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
            return (t, u, 0.0);
        }
    }
    let mut best = (0.0, 0.0, f64::INFINITY);
    for (t, pt) in [(0.0, p0), (1.0, p1)] {
        let u = project(pt, q0, q1);
        let d = norm(sub(pt, lerp(q0, q1, u)));
        if d < best.2 {
            best = (t, u, d);
        }
    }
    for (u, qt) in [(0.0, q0), (1.0, q1)] {
        let t = project(qt, p0, p1);
        let d = norm(sub(qt, lerp(p0, p1, t)));
        if d < best.2 {
            best = (t, u, d);
        }
    }
    best
}

struct Segment {
    a: Pt,
    b: Pt,
    pa: f64,
    pb: f64,
    lo: Pt,
    hi: Pt,
}

fn segments(curve: &SampledCurve) -> Vec<Segment> {
    curve
        .samples
        .windows(2)
        .filter(|w| w.iter().all(|s| !s.diverged && s.u.abs() + s.p.abs() <= CURVE_WINDOW))
        .map(|w| {
            let a = (w[0].u, w[0].p);
            let b = (w[1].u, w[1].p);
            Segment {
                a,
                b,
                pa: w[0].param,
                pb: w[1].param,
                lo: (a.0.min(b.0), a.1.min(b.1)),
                hi: (a.0.max(b.0), a.1.max(b.1)),
            }
        })
        .collect()
}

/// Near-miss pairs are seeded when the segments come within this multiple
/// of the longer segment.
const NEAR_FACTOR: f64 = 0.5;

fn collect_seeds(cu: &SampledCurve, cs: &SampledCurve, cell: (f64, f64)) -> Vec<Seed> {
    let su = segments(cu);
    let mut ss = segments(cs);
    ss.sort_by(|x, y| x.lo.0.total_cmp(&y.lo.0));
    let width_s = ss.iter().fold(0.0f64, |m, b| m.max(b.hi.0 - b.lo.0));
    let len_s = ss.iter().fold(0.0f64, |m, b| m.max(norm(sub(b.b, b.a))));
    let bucket = |s: &Seed| ((s.d / cell.0).floor() as i64, (s.e / cell.1).floor() as i64);
    let mut crossings = Vec::new();
    // closest near miss per parameter cell
    let mut near: BTreeMap<(i64, i64), (f64, Seed)> = BTreeMap::new();
    for a in &su {
        let la = norm(sub(a.b, a.a));
        let reach = NEAR_FACTOR * la.max(len_s);
        let first = ss.partition_point(|b| b.lo.0 < a.lo.0 - reach - width_s);
        for b in &ss[first..] {
            if b.lo.0 > a.hi.0 + reach {
                break;
            }
            let lb = norm(sub(b.b, b.a));
            let slack = NEAR_FACTOR * la.max(lb);
            if a.lo.0 > b.hi.0 + slack
                || b.lo.0 > a.hi.0 + slack
                || a.lo.1 > b.hi.1 + slack
                || b.lo.1 > a.hi.1 + slack
            {
                continue;
            }
            let (t, s, dist) = segment_closest(a.a, a.b, b.a, b.b);
            let seed = Seed {
                d: a.pa + t * (a.pb - a.pa),
                e: b.pa + s * (b.pb - b.pa),
            };
            if dist == 0.0 {
                crossings.push(seed);
            } else if dist <= slack {
                let slot = near.entry(bucket(&seed)).or_insert((dist, seed));
                if dist < slot.0 {
                    *slot = (dist, seed);
                }
            }
        }
    }
    let taken: Vec<(i64, i64)> = crossings.iter().map(bucket).collect();
    let mut seeds = crossings;
    for (key, (_, seed)) in near {
        let shadowed = taken
            .iter()
            .any(|c| c.0.abs_diff(key.0) <= 1 && c.1.abs_diff(key.1) <= 1);
        if !shadowed {
            seeds.push(seed);
        }
    }
    seeds
}

const NEWTON_MAX_ITER: usize = 80;

/// Shots through a computed root integrate more tightly than curve
/// sampling: near the saddles at the constant states the shot map amplifies
/// integration error.
pub fn precise_options(numerics: &Numerics) -> ShotOptions {
    let mut opts = ShotOptions::from_numerics(numerics);
    opts.tol = (numerics.ode_tol * 1e-3).max(1e-14);
    opts
}

fn residual_at(field: &CoefficientField, d: f64, e: f64, cut: f64, opts: &ShotOptions) -> Option<f64> {
    let l = shooting::shoot(field, Side::Unstable, d, cut, opts).ok()?;
    let r = shooting::shoot(field, Side::Stable, e, cut, opts).ok()?;
    Some((l.u - r.u).abs().max((l.p - r.p).abs()))
}

/// Damped Newton on `F(d,e) = M^u(d) − M^s(e)` at the cut. After the
/// residual tolerance is met the iteration continues until the step stalls,
/// so that slowly converging degenerate roots are polished before merging.
fn newton(
    field: &CoefficientField,
    seed: Seed,
    numerics: &Numerics,
    opts: &ShotOptions,
) -> Result<Root, String> {
    let cut = numerics.theta_cut;
    let (mut d, mut e) = (seed.d, seed.e);
    let mut last_norm = f64::INFINITY;
    let mut stall = 0;
    for it in 0..NEWTON_MAX_ITER {
        let l = shooting::shoot_tangent(field, Side::Unstable, d, 0.0, cut, opts).map_err(|x| x.to_string())?;
        let r = shooting::shoot_tangent(field, Side::Stable, e, 0.0, cut, opts).map_err(|x| x.to_string())?;
        let fx = (l.state.u - r.state.u, l.state.p - r.state.p);
        let fnorm = fx.0.abs().max(fx.1.abs());
        // J = [[ud, -ũd], [pd, -p̃d]]
        let (j11, j12, j21, j22) = (l.tangent.ud, -r.tangent.ud, l.tangent.pd, -r.tangent.pd);
        let det = j11 * j22 - j12 * j21;
        let scale = (j11.abs() + j12.abs()) * (j21.abs() + j22.abs());
        if fnorm == 0.0 {
            return Ok(Root { d, e, residual: 0.0, iterations: it });
        }
        if det.abs() <= 1e-14 * scale || !det.is_finite() {
            if fnorm <= numerics.root_tol {
                return Ok(Root { d, e, residual: fnorm, iterations: it });
            }
            return Err(format!("singular Jacobian at d = {d}, e = {e}"));
        }
        let dd = -(j22 * fx.0 - j12 * fx.1) / det;
        let de = -(-j21 * fx.0 + j11 * fx.1) / det;
        let step = dd.abs().max(de.abs());
        if fnorm <= numerics.root_tol {
            if step <= 1e-12 * (1.0 + d.abs().max(e.abs())) || fnorm >= 0.5 * last_norm {
                stall += 1;
            }
            if stall >= 2 {
                return Ok(Root { d, e, residual: fnorm, iterations: it });
            }
        }
        last_norm = fnorm;
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let (nd, ne) = (d + alpha * dd, e + alpha * de);
            match residual_at(field, nd, ne, cut, opts) {
                Some(rn) if rn < fnorm || (fnorm <= numerics.root_tol && rn <= numerics.root_tol) => {
                    d = nd;
                    e = ne;
                    accepted = true;
                    break;
                }
                _ => alpha *= 0.5,
            }
        }
        if !accepted {
            if fnorm <= numerics.root_tol {
                return Ok(Root { d, e, residual: fnorm, iterations: it });
            }
            return Err(format!("line search failed at d = {d}, e = {e}, |F| = {fnorm:e}"));
        }
    }
    let rn = residual_at(field, d, e, cut, opts).unwrap_or(f64::INFINITY);
    if rn <= numerics.root_tol {
        Ok(Root { d, e, residual: rn, iterations: NEWTON_MAX_ITER })
    } else {
        Err(format!("no convergence from d = {}, e = {}", seed.d, seed.e))
    }
}

/// Equilibria from two cross-sections sampled at `numerics.theta_cut`.
pub fn find_intersections(
    field: &CoefficientField,
    curve_u: &SampledCurve,
    curve_s: &SampledCurve,
    numerics: &Numerics,
) -> Intersections {
    let opts = precise_options(numerics);
    let cell = (
        (numerics.d_range.1 - numerics.d_range.0) / numerics.samples as f64,
        (numerics.e_range.1 - numerics.e_range.0) / numerics.samples as f64,
    );
    let seeds = collect_seeds(curve_u, curve_s, cell);
    let results: Vec<(Seed, Result<Root, String>)> = seeds
        .par_iter()
        .map(|&s| (s, newton(field, s, numerics, &opts)))
        .collect();
    let pad = numerics.merge_tol;
    let in_range = |r: &Root| {
        r.d >= numerics.d_range.0 - pad
            && r.d <= numerics.d_range.1 + pad
            && r.e >= numerics.e_range.0 - pad
            && r.e <= numerics.e_range.1 + pad
    };
    let mut roots: Vec<Root> = Vec::new();
    let mut demoted = Vec::new();
    for (seed, res) in results {
        match res {
            Ok(r) if in_range(&r) => roots.push(r),
            Ok(_) => {}
            Err(reason) => demoted.push(Demoted {
                d0: seed.d,
                e0: seed.e,
                reason,
            }),
        }
    }
    roots.sort_by(|a, b| a.d.total_cmp(&b.d).then(a.e.total_cmp(&b.e)));
    let mut merged: Vec<Root> = Vec::new();
    for r in roots {
        match merged
            .iter_mut()
            .find(|m| (m.d - r.d).abs() <= numerics.merge_tol && (m.e - r.e).abs() <= numerics.merge_tol)
        {
            Some(m) => {
                if r.residual < m.residual {
                    *m = r;
                }
            }
            None => merged.push(r),
        }
    }
    Intersections {
        roots: merged,
        demoted,
        seeds: seeds.len(),
    }
}

/// Samples both cross-sections, refines them, and solves for intersections.
pub fn intersect_manifolds(
    spec: &ProblemSpec,
    refine: Option<&RefineOptions>,
) -> Result<(SampledCurve, SampledCurve, Intersections), EquilibriumError> {
    let n = &spec.numerics;
    let field = spec.field();
    let opts = ShotOptions::from_numerics(n);
    let mut cu = cross_section(field, Side::Unstable, n.theta_cut, n.d_range, n.samples, &opts)?;
    let mut cs = cross_section(field, Side::Stable, n.theta_cut, n.e_range, n.samples, &opts)?;
    if let Some(r) = refine {
        refine_curve(field, &mut cu, r, &opts)?;
        refine_curve(field, &mut cs, r, &opts)?;
    }
    let found = find_intersections(field, &cu, &cs, n);
    Ok((cu, cs, found))
}

fn pole_series(field: &CoefficientField, pole: f64, value: f64, dist: f64) -> f64 {
    let a0 = field.a(pole, value, 0.0);
    let f0 = field.f(pole, value, 0.0);
    value - f0 / (4.0 * a0) * dist * dist
}

/// Profile of the equilibrium with parameters `(d, e)` on a grid with
/// `n` cells. The left shot covers `θ ≤ θ_cut`, the right shot the rest.
pub fn reconstruct_profile(
    field: &CoefficientField,
    d: f64,
    e: f64,
    n: usize,
    numerics: &Numerics,
) -> Result<GridFunction, EquilibriumError> {
    let opts = precise_options(numerics);
    let eps = numerics.eps_theta;
    let cut = numerics.theta_cut;
    let nodes = grid::nodes(n);
    let mut values = vec![0.0; n + 1];
    let mut left_idx = Vec::new();
    let mut right_idx = Vec::new();
    for (j, &th) in nodes.iter().enumerate() {
        if th <= eps {
            values[j] = pole_series(field, 0.0, d, th);
        } else if th >= PI - eps {
            values[j] = pole_series(field, PI, e, PI - th);
        } else if th <= cut {
            left_idx.push(j);
        } else {
            right_idx.push(j);
        }
    }
    let mut left_t: Vec<f64> = left_idx.iter().map(|&j| nodes[j]).collect();
    left_t.push(cut);
    let mut right_t: Vec<f64> = right_idx.iter().rev().map(|&j| nodes[j]).collect();
    right_t.push(cut);
    let l = shooting::shoot_through(field, Side::Unstable, d, &left_t, &opts)?;
    let r = shooting::shoot_through(field, Side::Stable, e, &right_t, &opts)?;
    for (k, &j) in left_idx.iter().enumerate() {
        values[j] = l[k].u;
    }
    for (k, &j) in right_idx.iter().rev().enumerate() {
        values[j] = r[k].u;
    }
    let (lc, rc) = (l[l.len() - 1], r[r.len() - 1]);
    let mismatch = (lc.u - rc.u).abs().max((lc.p - rc.p).abs());
    if mismatch > 10.0 * numerics.root_tol {
        return Err(EquilibriumError::JointMismatch { mismatch });
    }
    Ok(GridFunction::new(values))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TangentAngles {
    pub nu: f64,
    pub nu_tilde: f64,
    pub zeta: f64,
}

/// Angle `ζ = ν − ν̃` at the cut between the tangents of the two shooting
/// curves at an intersection, with `shift = Λ` the spectral parameter.
pub fn matching_angle(
    field: &CoefficientField,
    d: f64,
    e: f64,
    shift: f64,
    numerics: &Numerics,
) -> Result<TangentAngles, EquilibriumError> {
    let opts = precise_options(numerics);
    let cut = numerics.theta_cut;
    let l = shooting::shoot_tangent(field, Side::Unstable, d, shift, cut, &opts)?;
    let r = shooting::shoot_tangent(field, Side::Stable, e, shift, cut, &opts)?;
    for t in [&l, &r] {
        if t.tangent.ud.hypot(t.tangent.pd) < 1e-12 {
            return Err(ShootingError::TangentCollapse { theta: cut }.into());
        }
    }
    Ok(TangentAngles {
        nu: l.tangent.nu,
        nu_tilde: r.tangent.nu,
        zeta: l.tangent.nu - r.tangent.nu,
    })
}

pub fn tangent_angles(
    field: &CoefficientField,
    d: f64,
    e: f64,
    numerics: &Numerics,
) -> Result<TangentAngles, EquilibriumError> {
    matching_angle(field, d, e, 0.0, numerics)
}

/// Distance from `zeta` to the nearest multiple of π.
pub fn distance_to_pi_multiple(zeta: f64) -> f64 {
    let r = zeta.rem_euclid(PI);
    r.min(PI - r)
}

/// `1 + ⌊ζ/π⌋`
pub fn index_from_zeta(zeta: f64) -> Result<usize, EquilibriumError> {
    let i = 1.0 + (zeta / PI).floor();
    if i < 0.0 {
        return Err(EquilibriumError::NegativeIndex { zeta });
    }
    Ok(i as usize)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumRecord {
    pub d: f64,
    pub e: f64,
    pub u_at_0: f64,
    pub residual: f64,
    pub zeta: f64,
    pub morse_index: usize,
    pub hyperbolic: bool,
    /// Position along the unstable curve, 1-based.
    pub label_u: usize,
    /// Position along the stable curve, 1-based.
    pub label_s: usize,
    #[serde(skip)]
    pub profile: GridFunction,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eigenvalues: Option<Vec<f64>>,
}

pub fn morse_index(record: &EquilibriumRecord) -> Result<usize, EquilibriumError> {
    if !record.hyperbolic {
        return Err(EquilibriumError::NonHyperbolic {
            d: record.d,
            zeta: record.zeta,
        });
    }
    index_from_zeta(record.zeta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Leading eigenvalues in decreasing order.
    pub values: Vec<f64>,
    pub warnings: Vec<String>,
}

impl Spectrum {
    pub fn positive_count(&self) -> usize {
        self.values.iter().filter(|&&v| v > 0.0).count()
    }
}

/// Default search bracket for the spectral parameter.
pub fn eigen_bracket(lambda: f64) -> (f64, f64) {
    (-50.0 - 10.0 * lambda.abs(), 10.0 + 5.0 * lambda.abs())
}

/// The eigenvalues `Λ_0 > Λ_1 > …` of the linearization at `(d, e)` are
/// the solutions of `ψ(Λ) = kπ`, where `ψ` is the matching angle.
pub fn eigen_spectrum(
    field: &CoefficientField,
    d: f64,
    e: f64,
    n_max: usize,
    bracket: (f64, f64),
    numerics: &Numerics,
) -> Result<Spectrum, EquilibriumError> {
    let psi = |lam: f64| matching_angle(field, d, e, lam, numerics).map(|a| a.zeta);
    let (lo, hi) = bracket;
    let psi_lo = psi(lo)?;
    let psi_hi = psi(hi)?;
    let mut values = Vec::new();
    let mut warnings = Vec::new();
    for k in 0..=n_max {
        let target = k as f64 * PI;
        if !(psi_lo > target && psi_hi < target) {
            warnings.push(format!(
                "eigenvalue {k} not bracketed in [{lo}, {hi}] (psi = {psi_lo:.4}, {psi_hi:.4})"
            ));
            break;
        }
        let (mut a, mut b) = (lo, hi);
        if let Some(&prev) = values.last() {
            b = prev;
        }
        while b - a > 1e-11 * (1.0 + a.abs().max(b.abs())) {
            let m = 0.5 * (a + b);
            if psi(m)? > target {
                a = m;
            } else {
                b = m;
            }
        }
        values.push(0.5 * (a + b));
    }
    Ok(Spectrum { values, warnings })
}

/// Eigenfunction for the eigenvalue `shift`, normalized in the weighted
/// norm and positive at θ = 0.
pub fn eigenfunction(
    field: &CoefficientField,
    d: f64,
    e: f64,
    shift: f64,
    n: usize,
    numerics: &Numerics,
) -> Result<GridFunction, EquilibriumError> {
    let opts = precise_options(numerics);
    let eps = numerics.eps_theta;
    let cut = numerics.theta_cut;
    let nodes = grid::nodes(n);
    let mut left_idx = Vec::new();
    let mut right_idx = Vec::new();
    let mut values = vec![0.0; n + 1];
    for (j, &th) in nodes.iter().enumerate() {
        if th > eps && th <= cut {
            left_idx.push(j);
        } else if th > cut && th < PI - eps {
            right_idx.push(j);
        }
    }
    let mut lt: Vec<f64> = left_idx.iter().map(|&j| nodes[j]).collect();
    lt.push(cut);
    let mut rt: Vec<f64> = right_idx.iter().rev().map(|&j| nodes[j]).collect();
    rt.push(cut);
    let l = shooting::shoot_tangent_through(field, Side::Unstable, d, shift, &lt, &opts)?;
    let r = shooting::shoot_tangent_through(field, Side::Stable, e, shift, &rt, &opts)?;
    let lc = l[l.len() - 1].tangent;
    let rc = r[r.len() - 1].tangent;
    let c = if lc.ud.abs() >= lc.pd.abs() { lc.ud / rc.ud } else { lc.pd / rc.pd };
    let k_left = field.ratio_jet(0.0, d, 0.0);
    let k_right = field.ratio_jet(PI, e, 0.0);
    let kl = k_left.h_u - shift / k_left.a;
    let kr = k_right.h_u - shift / k_right.a;
    for (j, &th) in nodes.iter().enumerate() {
        if th <= eps {
            values[j] = 1.0 - 0.25 * kl * th * th;
        } else if th >= PI - eps {
            values[j] = c * (1.0 - 0.25 * kr * (PI - th) * (PI - th));
        }
    }
    for (k, &j) in left_idx.iter().enumerate() {
        values[j] = l[k].tangent.ud;
    }
    for (k, &j) in right_idx.iter().rev().enumerate() {
        values[j] = c * r[k].tangent.ud;
    }
    let g = GridFunction::new(values);
    let nrm = g.norm_w();
    Ok(g.scale(1.0 / nrm))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumOptions {
    /// Number of eigenvalues beyond the leading one to compute, if any.
    pub spectrum: Option<usize>,
    pub refine: Option<RefineOptions>,
    /// Skip profiles and angles, only count roots.
    pub count_only: bool,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        Self {
            spectrum: Some(6),
            refine: Some(RefineOptions::default()),
            count_only: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumSet {
    /// Sorted by `d`.
    pub records: Vec<EquilibriumRecord>,
    pub curve_u: SampledCurve,
    pub curve_s: SampledCurve,
    pub demoted: Vec<Demoted>,
    pub warnings: Vec<String>,
    pub roots: Vec<Root>,
}

impl EquilibriumSet {
    pub fn len(&self) -> usize {
        self.roots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }

    pub fn all_hyperbolic(&self) -> bool {
        self.records.iter().all(|r| r.hyperbolic)
    }

    pub fn morse_indices(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.morse_index).collect()
    }
}

fn ranks(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0; values.len()];
    for (rank, i) in idx.into_iter().enumerate() {
        out[i] = rank + 1;
    }
    out
}

fn build_record(
    field: &CoefficientField,
    root: &Root,
    spec: &ProblemSpec,
    spectrum: Option<usize>,
) -> Result<(EquilibriumRecord, Vec<String>), EquilibriumError> {
    let n = &spec.numerics;
    let profile = reconstruct_profile(field, root.d, root.e, n.grid_n, n)?;
    let angles = tangent_angles(field, root.d, root.e, n)?;
    let hyperbolic = distance_to_pi_multiple(angles.zeta) > n.angle_tol;
    let morse = index_from_zeta(angles.zeta).unwrap_or(0);
    let mut warnings = Vec::new();
    let eigenvalues = match spectrum {
        Some(n_max) => {
            let sp = eigen_spectrum(field, root.d, root.e, n_max, eigen_bracket(spec.lambda), n)?;
            warnings.extend(sp.warnings.iter().map(|w| format!("d = {:.6}: {w}", root.d)));
            Some(sp.values)
        }
        None => None,
    };
    Ok((
        EquilibriumRecord {
            d: root.d,
            e: root.e,
            u_at_0: root.d,
            residual: root.residual,
            zeta: angles.zeta,
            morse_index: morse,
            hyperbolic,
            label_u: 0,
            label_s: 0,
            profile,
            eigenvalues,
        },
        warnings,
    ))
}

/// Full equilibrium search: curves, intersections, profiles, angles and
/// (optionally) spectra. Records are ordered by `d` and labelled.
pub fn find_equilibria(spec: &ProblemSpec, options: &EquilibriumOptions) -> Result<EquilibriumSet, EquilibriumError> {
    let field = spec.field();
    let (curve_u, curve_s, found) = intersect_manifolds(spec, options.refine.as_ref())?;
    let mut warnings: Vec<String> = found
        .demoted
        .iter()
        .map(|d| format!("candidate near (d, e) = ({:.6}, {:.6}) demoted: {}", d.d0, d.e0, d.reason))
        .collect();
    let mut records = Vec::new();
    if !options.count_only {
        let built: Vec<_> = found
            .roots
            .par_iter()
            .map(|r| build_record(field, r, spec, options.spectrum))
            .collect();
        for b in built {
            let (rec, w) = b?;
            warnings.extend(w);
            records.push(rec);
        }
        let lu = ranks(&records.iter().map(|r| r.d).collect::<Vec<_>>());
        let ls = ranks(&records.iter().map(|r| r.e).collect::<Vec<_>>());
        for (k, r) in records.iter_mut().enumerate() {
            r.label_u = lu[k];
            r.label_s = ls[k];
        }
    }
    Ok(EquilibriumSet {
        records,
        curve_u,
        curve_s,
        demoted: found.demoted,
        warnings,
        roots: found.roots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn spec(lambda: f64) -> ProblemSpec {
        ProblemSpec::chafee_infante(lambda)
    }

    fn quick() -> EquilibriumOptions {
        EquilibriumOptions {
            spectrum: None,
            ..EquilibriumOptions::default()
        }
    }

    #[test]
    fn segment_geometry() {
        let (t, s, d) = segment_closest((0.0, 0.0), (2.0, 0.0), (1.0, -1.0), (1.0, 1.0));
        assert_eq!((t, s, d), (0.5, 0.5, 0.0));
        let (_, _, d) = segment_closest((0.0, 0.0), (1.0, 0.0), (0.5, 0.1), (0.5, 1.0));
        assert_abs_diff_eq!(d, 0.1, epsilon = 1e-15);
    }

    #[test]
    fn zeta_index_and_distance() {
        assert_eq!(index_from_zeta(-0.5).unwrap(), 0);
        assert_eq!(index_from_zeta(0.5).unwrap(), 1);
        assert_eq!(index_from_zeta(PI + 0.1).unwrap(), 2);
        assert!(index_from_zeta(-PI - 0.1).is_err());
        assert_abs_diff_eq!(distance_to_pi_multiple(PI - 0.01), 0.01, epsilon = 1e-12);
        assert_abs_diff_eq!(distance_to_pi_multiple(-0.02), 0.02, epsilon = 1e-12);
    }

    #[test]
    fn counts_at_interval_midpoints() {
        for (lambda, n) in [(1.0, 3), (3.0, 5), (7.0, 7)] {
            let set = find_equilibria(&spec(lambda), &quick()).unwrap();
            assert_eq!(set.len(), n, "lambda = {lambda}: {:?}", set.roots);
        }
    }

    #[test]
    fn lambda_one_roots_are_constants() {
        let set = find_equilibria(&spec(1.0), &quick()).unwrap();
        let want = [-1.0, 0.0, 1.0];
        for (r, w) in set.records.iter().zip(want) {
            assert_abs_diff_eq!(r.d, w, epsilon = 1e-8);
            assert_abs_diff_eq!(r.e, w, epsilon = 1e-8);
        }
        assert_eq!(set.morse_indices(), vec![0, 1, 0]);
    }

    #[test]
    fn constant_profile() {
        let s = spec(3.0);
        let g = reconstruct_profile(s.field(), 1.0, 1.0, 64, &s.numerics).unwrap();
        assert!(g.values.iter().all(|v| (v - 1.0).abs() < 1e-8));
    }

    #[test]
    fn mode_one_profiles() {
        let s = spec(3.0);
        let set = find_equilibria(&s, &quick()).unwrap();
        assert_eq!(set.morse_indices(), vec![0, 1, 2, 1, 0]);
        let lo = &set.records[1];
        let hi = &set.records[3];
        assert!(hi.d > 0.0 && hi.d < 1.0);
        let changes = |g: &GridFunction| g.values.windows(2).filter(|w| w[0] * w[1] < 0.0).count();
        assert_eq!(changes(&hi.profile), 1);
        for (a, b) in lo.profile.values.iter().zip(&hi.profile.values) {
            assert_abs_diff_eq!(*a, -*b, epsilon = 1e-7);
        }
        // mode-1 antisymmetry under θ ↦ π − θ
        assert_abs_diff_eq!(hi.e, -hi.d, epsilon = 1e-7);
    }

    #[test]
    fn trivial_equilibrium_spectrum() {
        let s = spec(3.0);
        let sp = eigen_spectrum(s.field(), 0.0, 0.0, 4, eigen_bracket(3.0), &s.numerics).unwrap();
        let want = [3.0, 1.0, -3.0, -9.0, -17.0];
        assert_eq!(sp.values.len(), 5);
        for (v, w) in sp.values.iter().zip(want) {
            assert_abs_diff_eq!(*v, w, epsilon = 1e-4);
        }
        assert_eq!(sp.positive_count(), 2);
    }

    #[test]
    fn constant_one_spectrum() {
        let s = spec(3.0);
        let sp = eigen_spectrum(s.field(), 1.0, 1.0, 3, eigen_bracket(3.0), &s.numerics).unwrap();
        for (v, w) in sp.values.iter().zip([-6.0, -8.0, -12.0, -18.0]) {
            assert_abs_diff_eq!(*v, w, epsilon = 1e-4);
        }
    }

    #[test]
    fn eigenfunction_of_trivial_state_is_legendre() {
        let s = spec(3.0);
        let n = 128;
        for k in 0..3 {
            let lam = 3.0 - (k * (k + 1)) as f64;
            let phi = eigenfunction(s.field(), 0.0, 0.0, lam, n, &s.numerics).unwrap();
            let p = grid::legendre_mode(n, k);
            let p = p.scale(1.0 / p.norm_w());
            assert!(phi.distance_w(&p) < 1e-3, "k = {k}: {}", phi.distance_w(&p));
        }
    }

    #[test]
    fn tangent_angles_trivial_and_constants() {
        for (lambda, i0) in [(1.0, 1), (3.0, 2)] {
            let s = spec(lambda);
            let a = tangent_angles(s.field(), 0.0, 0.0, &s.numerics).unwrap();
            assert_eq!(index_from_zeta(a.zeta).unwrap(), i0);
            for c in [-1.0, 1.0] {
                let a = tangent_angles(s.field(), c, c, &s.numerics).unwrap();
                assert!(a.zeta > -PI && a.zeta < 0.0, "{a:?}");
            }
        }
    }

    #[test]
    fn near_bifurcation_angle_crosses_pi() {
        let below = spec(1.95);
        let above = spec(2.05);
        let zb = tangent_angles(below.field(), 0.0, 0.0, &below.numerics).unwrap().zeta;
        let za = tangent_angles(above.field(), 0.0, 0.0, &above.numerics).unwrap().zeta;
        assert!(zb < PI && za > PI);
        assert!(distance_to_pi_multiple(zb) < 0.2 && distance_to_pi_multiple(za) < 0.2);
    }
}
