//! Acceptance suite. One PASS/FAIL line per criterion; exits nonzero if
//! any criterion fails.

use std::collections::BTreeSet;
use std::time::Instant;

use sturm_core::checks;
use sturm_core::equilibria::EquilibriumOptions;
use sturm_core::grid::legendre_mode;
use sturm_core::pde::{self, HeteroclinicOptions, Outcome};
use sturm_core::pipeline::{self, Analysis, ScanOptions};
use sturm_core::{find_equilibria, CheckResult, ProblemSpec};

const LAMBDAS: [f64; 4] = [1.0, 3.0, 7.0, 13.0];
const SEED: u64 = 0;

struct Outcomes {
    failed: usize,
}

impl Outcomes {
    fn report(&mut self, id: usize, title: &str, passed: bool, detail: String) {
        if !passed {
            self.failed += 1;
        }
        println!(
            "criterion {id:>2}  {:<4}  {title}: {detail}",
            if passed { "PASS" } else { "FAIL" }
        );
    }
}

fn analyses() -> Vec<Analysis> {
    LAMBDAS
        .iter()
        .map(|&l| pipeline::analyze(&ProblemSpec::chafee_infante(l)).expect("analysis runs"))
        .collect()
}

fn check<'a>(a: &'a Analysis, name: &str) -> Option<&'a CheckResult> {
    a.report.checks.iter().find(|c| c.name == name)
}

fn bifurcations(out: &mut Outcomes) {
    let opts = ScanOptions {
        lambda_min: 0.5,
        lambda_max: 21.0,
        steps: 50,
        tol: 1e-3,
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let r = pool.install(|| pipeline::scan(&ProblemSpec::chafee_infante(1.0), &opts)).expect("scan runs");
    let secs = start.elapsed().as_secs_f64();
    let found: Vec<f64> = r.bifurcations.iter().map(|b| b.lambda).collect();
    let expected = [2.0, 6.0, 12.0, 20.0];
    let located = found.len() == expected.len()
        && found.iter().zip(&expected).all(|(f, e)| (f - e).abs() <= 1e-3);
    let flagged = r.entries.iter().filter(|e| e.error.is_some()).count();
    out.report(
        1,
        "bifurcation values",
        located && secs < 120.0 && flagged == 0,
        format!("{found:.4?} (expected {expected:?}), {flagged} flagged entries, {secs:.1} s single-threaded"),
    );
}

fn counts(out: &mut Outcomes, all: &[Analysis]) {
    let mut got: Vec<usize> = all.iter().map(|a| a.report.count).collect();
    let opts = EquilibriumOptions {
        spectrum: None,
        count_only: true,
        ..EquilibriumOptions::default()
    };
    got.push(find_equilibria(&ProblemSpec::chafee_infante(20.5), &opts).unwrap().len());
    let expected = vec![3, 5, 7, 9, 11];
    out.report(
        2,
        "equilibrium counts at 1, 3, 7, 13, 20.5",
        got == expected,
        format!("{got:?}"),
    );
}

fn permutations(out: &mut Outcomes, all: &[Analysis]) {
    let got: Vec<String> = all
        .iter()
        .map(|a| a.report.sigma_cycles.clone().unwrap_or_else(|| "none".into()))
        .collect();
    let expected = ["id", "(2,4)", "(2,6)", "(2,8)(4,6)"];
    out.report(3, "Sturm permutations", got == expected, format!("{got:?}"));
}

fn morse(out: &mut Outcomes, all: &[Analysis]) {
    let mut ok = true;
    let mut detail = Vec::new();
    for (k, a) in all.iter().enumerate() {
        let m = &a.report.morse;
        let n = a.report.count;
        let agree = m.spectrum.as_ref() == Some(&m.angle) && m.permutation.as_ref() == Some(&m.angle);
        let trivial = m.angle.get(n / 2) == Some(&(k + 1));
        let ends = m.angle.first() == Some(&0) && m.angle.last() == Some(&0);
        ok &= agree && trivial && ends;
        detail.push(format!("{:?}", m.angle));
    }
    out.report(4, "Morse indices by angle, spectrum and permutation", ok, detail.join(" "));
}

fn graphs(out: &mut Outcomes, all: &[Analysis]) {
    let edges = |a: &Analysis| -> (BTreeSet<(usize, usize)>, BTreeSet<(usize, usize)>) {
        let g = a.graph.as_ref().expect("graph built");
        (g.edges.iter().copied().collect(), g.edges_with_drop(1).into_iter().collect())
    };
    let (all1, drop1) = edges(&all[0]);
    let (all3, drop3) = edges(&all[1]);
    let fig1: BTreeSet<_> = [(2, 1), (2, 3)].into();
    let fig3: BTreeSet<_> = [(3, 1), (3, 5), (3, 2), (3, 4), (2, 1), (2, 5), (4, 1), (4, 5)].into();
    let fig3_drop: BTreeSet<_> = [(3, 2), (3, 4), (2, 1), (2, 5), (4, 1), (4, 5)].into();
    out.report(
        5,
        "connection graphs at 1 and 3",
        all1 == fig1 && drop1 == fig1 && all3 == fig3 && drop3 == fig3_drop,
        format!(
            "{} arrows at 1 ({} with drop one), {} arrows at 3 ({} with drop one)",
            all1.len(),
            drop1.len(),
            all3.len(),
            drop3.len()
        ),
    );
}

fn wolfrum(out: &mut Outcomes, all: &[Analysis]) {
    let mut ok = true;
    let mut detail = Vec::new();
    for a in &all[1..] {
        let c = check(a, "wolfrum-equivalence");
        ok &= c.is_some_and(|c| c.passed && c.metrics.get("mismatches") == Some(&0.0));
        detail.push(format!(
            "{}: {}",
            a.report.spec.lambda,
            c.map_or("missing".to_string(), |c| c.summary.clone())
        ));
    }
    out.report(6, "Wolfrum equivalence at 3, 7, 13", ok, detail.join("; "));
}

fn laplacian(out: &mut Outcomes) {
    let grids = [64, 128, 256];
    let mut ok = true;
    let mut detail = Vec::new();
    for k in 0..=4usize {
        let c = (k * (k + 1)) as f64;
        let err: Vec<f64> = grids
            .iter()
            .map(|&n| {
                let pk = legendre_mode(n, k);
                let lap = pde::laplacian_axisym(&pk);
                lap.values.iter().zip(&pk.values).fold(0.0_f64, |m, (l, p)| m.max((l + c * p).abs()))
            })
            .collect();
        if k == 0 {
            ok &= err.iter().all(|e| *e < 1e-9);
            detail.push(format!("k=0 err {:.1e}", err[2]));
            continue;
        }
        let o1 = (err[0] / err[1]).log2();
        let o2 = (err[1] / err[2]).log2();
        ok &= o1 >= 1.9 && o2 >= 1.9;
        let h = std::f64::consts::PI / grids[2] as f64;
        detail.push(format!("k={k} order {o1:.2},{o2:.2} C={:.2}", err[2] / (h * h)));
    }
    out.report(7, "Laplacian on Legendre modes", ok, detail.join("; "));
}

fn lyapunov(out: &mut Outcomes) {
    let mut ok = true;
    let mut detail = Vec::new();
    for lam in [1.0, 3.0, 7.0] {
        let spec = ProblemSpec::chafee_infante(lam);
        let c = checks::lyapunov_check(spec.field(), 512, 50, SEED);
        ok &= c.passed;
        detail.push(format!("{lam}: {}", c.summary));
    }
    out.report(8, "Lyapunov decrease", ok, detail.join("; "));
}

fn dropping(out: &mut Outcomes) {
    let spec = ProblemSpec::chafee_infante(3.0);
    let c = checks::dropping_check(spec.field(), spec.numerics.grid_n, 100, 1000, SEED);
    out.report(9, "dropping lemma at 3", c.passed, c.summary);
}

fn zero_range(out: &mut Outcomes, all: &[Analysis]) {
    let mut ok = true;
    let mut detail = Vec::new();
    for a in all {
        let c = check(a, "zero-number-range");
        ok &= c.is_some_and(|c| c.passed);
        detail.push(format!(
            "{}: {}",
            a.report.spec.lambda,
            c.map_or("missing".to_string(), |c| c.summary.clone())
        ));
    }
    out.report(10, "zero-number range of edges", ok, detail.join("; "));
}

fn heteroclinics(out: &mut Outcomes, lambda3: &Analysis) {
    let spec = ProblemSpec::chafee_infante(3.0);
    let opts = HeteroclinicOptions {
        t_max: 50.0,
        conv_tol: 1e-5,
        ..HeteroclinicOptions::default()
    };
    let records = &lambda3.set.records;
    let verdicts = pde::verify_heteroclinic(&spec, records, 2, &opts).expect("simulation runs");
    let mut reached = BTreeSet::new();
    let mut ok = verdicts.len() == 4;
    let mut detail = Vec::new();
    for v in &verdicts {
        match v.outcome {
            Outcome::Reached { label, time, distance } => {
                let expected: &[usize] = if v.mode == 0 { &[1, 5] } else { &[2, 4] };
                ok &= expected.contains(&label) && time <= 50.0 && distance < 1e-5;
                reached.insert(label);
                detail.push(format!("phi{}{} -> {label} at t={time:.1}", v.mode, if v.sign > 0 { "+" } else { "-" }));
            }
            ref other => {
                ok = false;
                detail.push(format!("phi{} {:?}", v.mode, other));
            }
        }
    }
    ok &= reached == [1, 2, 4, 5].into();
    out.report(11, "heteroclinics from the trivial state at 3", ok, detail.join(", "));
}

fn monotonicity(out: &mut Outcomes) {
    let spec = ProblemSpec::chafee_infante(3.0);
    let results = checks::monotonicity_suite(&spec, &[1.0, 3.0, 7.0, 13.0, 20.0], &[0.1, 0.5, 0.9]);
    let ok = results.len() == 3 && results.iter().all(|c| c.passed);
    let detail: Vec<String> = results
        .iter()
        .map(|c| format!("{} {}: {}", c.name, if c.passed { "ok" } else { "violated" }, c.summary))
        .collect();
    out.report(12, "polar monotonicity", ok, detail.join("; "));
}

fn main() {
    let mut out = Outcomes { failed: 0 };
    let all = analyses();
    bifurcations(&mut out);
    counts(&mut out, &all);
    permutations(&mut out, &all);
    morse(&mut out, &all);
    graphs(&mut out, &all);
    wolfrum(&mut out, &all);
    laplacian(&mut out);
    lyapunov(&mut out);
    dropping(&mut out);
    zero_range(&mut out, &all);
    heteroclinics(&mut out, &all[1]);
    monotonicity(&mut out);
    println!("{} of 12 criteria passed", 12 - out.failed);
    if out.failed > 0 {
        std::process::exit(1);
    }
}
