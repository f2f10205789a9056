//! End-to-end runs: the analysis report, λ scans and verification suites.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::checks::{self, CheckResult};
use crate::connections::{self, ConnectionGraph, GraphJson};
use crate::equilibria::{self, EquilibriumError, EquilibriumOptions, EquilibriumSet};
use crate::model::{CoefficientModel, ModelError, Numerics, ProblemSpec};
use crate::pde::HeteroclinicOptions;
use crate::permutation::{self, zero_number, ZeroNumberTable};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
    #[error("unknown suite `{0}` (expected one of: {list})", list = Suite::NAMES.join(", "))]
    UnknownSuite(String),
    #[error("invalid scan: {0}")]
    InvalidScan(String),
}

/// Overall verdict of an analysis, mapped to process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    NonHyperbolic,
    Inconsistent,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::NonHyperbolic => 2,
            Status::Inconsistent => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpecEcho {
    pub model: CoefficientModel,
    pub lambda: f64,
    pub numerics: Numerics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumSummary {
    pub label: usize,
    pub d: f64,
    pub e: f64,
    pub u_at_0: f64,
    pub residual: f64,
    pub zeta: f64,
    pub morse_index: usize,
    pub hyperbolic: bool,
    pub sign_changes: i64,
    pub eigenvalues: Option<Vec<f64>>,
}

/// Morse indices by the three independent routes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MorseIndices {
    pub angle: Vec<usize>,
    pub spectrum: Option<Vec<usize>>,
    pub permutation: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphSummary {
    pub nodes: usize,
    pub edges: usize,
    pub index_drop_one: usize,
    pub edge_list: Vec<(usize, usize)>,
    pub graph: GraphJson,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub spec: SpecEcho,
    pub spec_hash: String,
    pub status: Status,
    pub count: usize,
    pub equilibria: Vec<EquilibriumSummary>,
    pub sigma: Option<Vec<usize>>,
    pub sigma_cycles: Option<String>,
    pub morse: MorseIndices,
    pub zero_numbers: Option<Vec<Vec<i64>>>,
    pub zero_number_flags: Vec<(usize, usize)>,
    pub graph: Option<GraphSummary>,
    pub checks: Vec<CheckResult>,
    pub warnings: Vec<String>,
    /// Wall-clock seconds per stage; the only non-deterministic field.
    pub timings: BTreeMap<String, f64>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

pub struct Analysis {
    pub report: RunReport,
    pub set: EquilibriumSet,
    pub table: Option<ZeroNumberTable>,
    pub graph: Option<ConnectionGraph>,
}

impl Analysis {
    /// `report.json`, `attractor.dot`, `equilibria/eq_NN.csv` and the two
    /// shooting curves under `curves/`.
    pub fn write_artifacts(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir.join("equilibria"))?;
        fs::create_dir_all(dir.join("curves"))?;
        fs::write(dir.join("report.json"), self.report.to_json())?;
        let dot = match &self.graph {
            Some(g) => g.to_dot(),
            None => ConnectionGraph {
                nodes: Vec::new(),
                edges: Vec::new(),
            }
            .to_dot(),
        };
        fs::write(dir.join("attractor.dot"), dot)?;
        for (k, r) in self.set.records.iter().enumerate() {
            fs::write(dir.join("equilibria").join(format!("eq_{:02}.csv", k + 1)), r.profile.to_csv())?;
        }
        self.set.curve_u.write_csv(&dir.join("curves").join("unstable.csv"))?;
        self.set.curve_s.write_csv(&dir.join("curves").join("stable.csv"))
    }
}

fn timed<T>(timings: &mut BTreeMap<String, f64>, key: &str, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    timings.insert(key.to_string(), start.elapsed().as_secs_f64());
    out
}

/// Shooting, equilibria, permutation, zero numbers and connections, with
/// the internal consistency checks.
pub fn analyze(spec: &ProblemSpec) -> Result<Analysis, PipelineError> {
    let mut timings = BTreeMap::new();
    let set = timed(&mut timings, "equilibria", || {
        equilibria::find_equilibria(spec, &EquilibriumOptions::default())
    })?;
    let records = &set.records;
    let mut warnings = set.warnings.clone();
    let mut checks_out = Vec::new();

    let equilibria: Vec<EquilibriumSummary> = records
        .iter()
        .enumerate()
        .map(|(k, r)| EquilibriumSummary {
            label: k + 1,
            d: r.d,
            e: r.e,
            u_at_0: r.u_at_0,
            residual: r.residual,
            zeta: r.zeta,
            morse_index: r.morse_index,
            hyperbolic: r.hyperbolic,
            sign_changes: zero_number(&r.profile),
            eigenvalues: r.eigenvalues.clone(),
        })
        .collect();
    let angle = set.morse_indices();
    let spectrum: Option<Vec<usize>> = records
        .iter()
        .map(|r| r.eigenvalues.as_ref().map(|v| v.iter().filter(|&&x| x > 0.0).count()))
        .collect();
    let hyperbolic = set.all_hyperbolic();
    for r in records.iter().filter(|r| !r.hyperbolic) {
        warnings.push(format!("equilibrium with u(0) = {:.6} is not hyperbolic (zeta = {:.6})", r.u_at_0, r.zeta));
    }

    checks_out.push(CheckResult::new(
        "odd-count",
        records.len() % 2 == 1,
        format!("{} equilibria", records.len()),
    ));

    let sigma = match permutation::build_permutation(records, spec.numerics.merge_tol) {
        Ok(s) => Some(s),
        Err(e) => {
            checks_out.push(CheckResult::failed("permutation", &e));
            None
        }
    };
    let from_sigma = sigma.as_ref().and_then(|s| match permutation::morse_from_permutation(s) {
        Ok(v) => Some(v),
        Err(e) => {
            checks_out.push(CheckResult::failed("permutation-indices", &e));
            None
        }
    });
    if let Some(s) = &sigma {
        checks_out.push(CheckResult::new(
            "dissipative",
            s.is_dissipative(),
            format!("sigma = {}", s.cycle_notation()),
        ));
    }
    if hyperbolic {
        let mut agree = from_sigma.as_ref() == Some(&angle);
        if let Some(sp) = &spectrum {
            agree &= sp == &angle;
        }
        checks_out.push(CheckResult::new(
            "morse-agreement",
            agree,
            format!("angle {angle:?}, spectrum {spectrum:?}, permutation {from_sigma:?}"),
        ));
    }

    let table = if records.is_empty() {
        None
    } else {
        match timed(&mut timings, "zero_numbers", || {
            permutation::zero_number_table(spec.field(), records, &spec.numerics)
        }) {
            Ok(t) => {
                checks_out.push(checks::zero_table_check(&t));
                Some(t)
            }
            Err(e) => {
                checks_out.push(CheckResult::failed("zero-table", &e));
                None
            }
        }
    };

    let mut graph = None;
    if let (true, Some(t)) = (hyperbolic, &table) {
        match timed(&mut timings, "connections", || connections::heteroclinic_edges(records, t)) {
            Ok(g) => {
                checks_out.push(CheckResult::new(
                    "graded",
                    g.is_graded(),
                    format!("{} edges", g.edges.len()),
                ));
                checks_out.push(checks::zero_number_range_check(&g, t));
                checks_out.push(timed(&mut timings, "wolfrum", || checks::wolfrum_equivalence_check(records, t)));
                graph = Some(g);
            }
            Err(e) => checks_out.push(CheckResult::failed("connections", &e)),
        }
    }

    let status = if !hyperbolic {
        Status::NonHyperbolic
    } else if checks_out.iter().any(|c| !c.passed) {
        Status::Inconsistent
    } else {
        Status::Ok
    };
    let report = RunReport {
        spec: SpecEcho {
            model: spec.model.clone(),
            lambda: spec.lambda,
            numerics: spec.numerics.clone(),
        },
        spec_hash: spec.hash(),
        status,
        count: records.len(),
        equilibria,
        sigma: sigma.as_ref().map(|s| s.as_slice().to_vec()),
        sigma_cycles: sigma.as_ref().map(|s| s.cycle_notation()),
        morse: MorseIndices {
            angle,
            spectrum,
            permutation: from_sigma,
        },
        zero_numbers: table.as_ref().map(|t| t.z.clone()),
        zero_number_flags: table
            .as_ref()
            .map(|t| t.flagged.iter().map(|&(i, j)| (i + 1, j + 1)).collect())
            .unwrap_or_default(),
        graph: graph.as_ref().map(|g| GraphSummary {
            nodes: g.nodes.len(),
            edges: g.edges.len(),
            index_drop_one: g.edges_with_drop(1).len(),
            edge_list: g.edges.clone(),
            graph: g.to_json(),
        }),
        checks: checks_out,
        warnings,
        timings,
    };
    Ok(Analysis {
        report,
        set,
        table,
        graph,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Number of equally spaced samples, endpoints included.
    pub steps: usize,
    /// Width to which count changes are bisected.
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanEntry {
    pub lambda: f64,
    pub count: Option<usize>,
    pub sigma: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bifurcation {
    /// Midpoint of the final bracket.
    pub lambda: f64,
    pub bracket: (f64, f64),
    pub count_below: usize,
    pub count_above: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanReport {
    pub entries: Vec<ScanEntry>,
    pub bifurcations: Vec<Bifurcation>,
    /// Bisections abandoned because a count failed inside the bracket.
    pub unresolved: Vec<(f64, f64)>,
}

fn count_at(spec: &ProblemSpec, lambda: f64) -> Result<(usize, Option<String>), PipelineError> {
    let s = spec.with_lambda(lambda)?;
    let opts = EquilibriumOptions {
        spectrum: None,
        count_only: true,
        ..EquilibriumOptions::default()
    };
    let set = equilibria::find_equilibria(&s, &opts)?;
    let pairs: Vec<(f64, f64)> = set.roots.iter().map(|r| (r.d, r.e)).collect();
    let sigma = permutation::permutation_from_pairs(&pairs, s.numerics.merge_tol)
        .ok()
        .map(|p| p.cycle_notation());
    Ok((set.len(), sigma))
}

/// Equilibrium counts across `[λ_min, λ_max]`, with every change of the
/// count bisected down to `tol`.
pub fn scan(spec: &ProblemSpec, opts: &ScanOptions) -> Result<ScanReport, PipelineError> {
    if !(opts.lambda_min < opts.lambda_max) || opts.steps < 2 || !(opts.tol > 0.0) {
        return Err(PipelineError::InvalidScan(format!(
            "need lambda_min < lambda_max, steps >= 2 and tol > 0 (got {}, {}, {}, {})",
            opts.lambda_min, opts.lambda_max, opts.steps, opts.tol
        )));
    }
    let lambdas: Vec<f64> = (0..opts.steps)
        .map(|k| opts.lambda_min + (opts.lambda_max - opts.lambda_min) * k as f64 / (opts.steps - 1) as f64)
        .collect();
    let entries: Vec<ScanEntry> = lambdas
        .par_iter()
        .map(|&lambda| match count_at(spec, lambda) {
            Ok((count, sigma)) => ScanEntry {
                lambda,
                count: Some(count),
                sigma,
                error: None,
            },
            Err(e) => ScanEntry {
                lambda,
                count: None,
                sigma: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let brackets: Vec<(f64, f64, usize, usize)> = entries
        .windows(2)
        .filter_map(|w| match (w[0].count, w[1].count) {
            (Some(a), Some(b)) if a != b => Some((w[0].lambda, w[1].lambda, a, b)),
            _ => None,
        })
        .collect();
    let results: Vec<Result<Bifurcation, (f64, f64)>> = brackets
        .par_iter()
        .map(|&(mut lo, mut hi, below, above)| {
            while hi - lo > opts.tol {
                let mid = 0.5 * (lo + hi);
                match count_at(spec, mid) {
                    Ok((c, _)) if c == below => lo = mid,
                    Ok(_) => hi = mid,
                    Err(_) => return Err((lo, hi)),
                }
            }
            Ok(Bifurcation {
                lambda: 0.5 * (lo + hi),
                bracket: (lo, hi),
                count_below: below,
                count_above: above,
            })
        })
        .collect();
    let mut bifurcations = Vec::new();
    let mut unresolved = Vec::new();
    for r in results {
        match r {
            Ok(b) => bifurcations.push(b),
            Err(b) => unresolved.push(b),
        }
    }
    Ok(ScanReport {
        entries,
        bifurcations,
        unresolved,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Monotonicity,
    Symmetry,
    Dropping,
    Lyapunov,
    WolfrumEquivalence,
    Heteroclinics,
    Convergence,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Monotonicity,
        Suite::Symmetry,
        Suite::Dropping,
        Suite::Lyapunov,
        Suite::WolfrumEquivalence,
        Suite::Heteroclinics,
        Suite::Convergence,
    ];
    pub const NAMES: [&'static str; 7] = [
        "monotonicity",
        "symmetry",
        "dropping",
        "lyapunov",
        "wolfrum-equivalence",
        "heteroclinics",
        "convergence",
    ];

    fn needs_equilibria(self) -> bool {
        matches!(
            self,
            Suite::Symmetry | Suite::WolfrumEquivalence | Suite::Heteroclinics | Suite::Convergence
        )
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(Suite::NAMES[*self as usize])
    }
}

impl FromStr for Suite {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "wolfrum" {
            return Ok(Suite::WolfrumEquivalence);
        }
        Suite::NAMES
            .iter()
            .position(|n| *n == s)
            .map(|k| Suite::ALL[k])
            .ok_or_else(|| PipelineError::UnknownSuite(s.to_string()))
    }
}

/// Sizes of the randomized suites.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub dropping_pairs: usize,
    pub dropping_steps: usize,
    pub lyapunov_trajectories: usize,
    pub convergence_trajectories: usize,
    pub convergence_time: f64,
    pub heteroclinic: HeteroclinicOptions,
    /// Values of `d` at which angle monotonicity in λ is checked.
    pub lambda_family_ds: [f64; 3],
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            dropping_pairs: 100,
            dropping_steps: 1000,
            lyapunov_trajectories: 50,
            convergence_trajectories: 20,
            convergence_time: 50.0,
            heteroclinic: HeteroclinicOptions::default(),
            lambda_family_ds: [0.1, 0.5, 0.9],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub spec_hash: String,
    pub lambda: f64,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Runs the selected suites (all of them when `suites` is empty).
pub fn verify(spec: &ProblemSpec, suites: &[Suite], opts: &VerifyOptions) -> Result<VerifyReport, PipelineError> {
    let mut suites: Vec<Suite> = if suites.is_empty() { Suite::ALL.to_vec() } else { suites.to_vec() };
    suites.sort_unstable();
    suites.dedup();
    let field = spec.field();
    let n = spec.numerics.grid_n;
    let seed = spec.numerics.seed;
    let analysis = if suites.iter().any(|s| s.needs_equilibria()) {
        Some(analyze(spec)?)
    } else {
        None
    };
    let mut out = Vec::new();
    for suite in suites {
        match suite {
            Suite::Monotonicity => out.extend(checks::monotonicity_suite(spec, &[spec.lambda], &opts.lambda_family_ds)),
            Suite::Dropping => out.push(checks::dropping_check(field, n, opts.dropping_pairs, opts.dropping_steps, seed)),
            Suite::Lyapunov => out.push(checks::lyapunov_check(field, n, opts.lyapunov_trajectories, seed)),
            _ => {
                let a = analysis.as_ref().expect("analysis computed for equilibrium suites");
                let records = &a.set.records;
                out.push(match suite {
                    Suite::Symmetry => checks::symmetry_check(spec, records),
                    Suite::WolfrumEquivalence => match &a.table {
                        Some(t) => checks::wolfrum_equivalence_check(records, t),
                        None => CheckResult::failed("wolfrum-equivalence", "no zero-number table"),
                    },
                    Suite::Heteroclinics => match &a.graph {
                        Some(g) => checks::heteroclinic_check(spec, records, g, &opts.heteroclinic),
                        None => CheckResult::failed("heteroclinics", "no connection graph"),
                    },
                    Suite::Convergence => checks::convergence_check(
                        spec,
                        records,
                        opts.convergence_trajectories,
                        opts.convergence_time,
                        opts.heteroclinic.conv_tol,
                        seed,
                    ),
                    _ => unreachable!(),
                });
            }
        }
    }
    Ok(VerifyReport {
        spec_hash: spec.hash(),
        lambda: spec.lambda,
        seed,
        passed: out.iter().all(|c| c.passed),
        checks: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.to_string().parse::<Suite>().unwrap(), s);
        }
        assert_eq!("wolfrum".parse::<Suite>().unwrap(), Suite::WolfrumEquivalence);
        assert!(matches!("bogus".parse::<Suite>(), Err(PipelineError::UnknownSuite(_))));
    }

    #[test]
    fn analysis_at_lambda_three() {
        let a = analyze(&ProblemSpec::chafee_infante(3.0)).unwrap();
        let r = &a.report;
        assert_eq!(r.status, Status::Ok, "{:?}", r.checks);
        assert_eq!(r.count, 5);
        assert_eq!(r.sigma.as_deref(), Some(&[1, 4, 3, 2, 5][..]));
        assert_eq!(r.sigma_cycles.as_deref(), Some("(2,4)"));
        assert_eq!(r.graph.as_ref().unwrap().edges, 8);
    }

    #[test]
    fn bifurcation_value_is_not_hyperbolic() {
        let a = analyze(&ProblemSpec::chafee_infante(2.0)).unwrap();
        assert_eq!(a.report.status, Status::NonHyperbolic);
        assert_eq!(a.report.status.exit_code(), 2);
        assert!(a.graph.is_none());
    }

    #[test]
    fn scan_without_bifurcation() {
        let opts = ScanOptions {
            lambda_min: 0.5,
            lambda_max: 1.5,
            steps: 3,
            tol: 1e-3,
        };
        let r = scan(&ProblemSpec::chafee_infante(1.0), &opts).unwrap();
        assert!(r.entries.iter().all(|e| e.count == Some(3)));
        assert!(r.bifurcations.is_empty());
    }

    #[test]
    fn scan_rejects_empty_interval() {
        let opts = ScanOptions {
            lambda_min: 2.0,
            lambda_max: 1.0,
            steps: 10,
            tol: 1e-3,
        };
        assert!(scan(&ProblemSpec::chafee_infante(1.0), &opts).is_err());
    }
}
