use std::f64::consts::PI;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use sturm_core::equilibria::{precise_options, EquilibriumOptions};
use sturm_core::grid::legendre_mode;
use sturm_core::pde::{self, Scheme, Stepper};
use sturm_core::permutation::zero_number_table;
use sturm_core::shooting::{self, Side};
use sturm_core::{find_equilibria, ProblemSpec};

fn shooting(c: &mut Criterion) {
    let spec = ProblemSpec::chafee_infante(3.0);
    let opts = precise_options(&spec.numerics);
    c.bench_function("shoot to the cut", |b| {
        b.iter(|| shooting::shoot(spec.field(), Side::Unstable, black_box(0.5), PI / 2.0, &opts).unwrap())
    });
    c.bench_function("cross section, 64 samples", |b| {
        b.iter(|| shooting::cross_section(spec.field(), Side::Unstable, PI / 2.0, (-1.5, 1.5), 64, &opts).unwrap())
    });
}

fn equilibria(c: &mut Criterion) {
    let mut g = c.benchmark_group("equilibria");
    g.sample_size(10);
    for lambda in [3.0, 13.0] {
        let spec = ProblemSpec::chafee_infante(lambda);
        g.bench_function(format!("count at {lambda}"), |b| {
            let opts = EquilibriumOptions {
                spectrum: None,
                count_only: true,
                ..EquilibriumOptions::default()
            };
            b.iter(|| find_equilibria(&spec, &opts).unwrap().len())
        });
    }
    let spec = ProblemSpec::chafee_infante(7.0);
    let set = find_equilibria(&spec, &EquilibriumOptions::default()).unwrap();
    g.bench_function("zero-number table at 7", |b| {
        b.iter(|| zero_number_table(spec.field(), &set.records, &spec.numerics).unwrap())
    });
    g.finish();
}

fn parabolic(c: &mut Criterion) {
    let spec = ProblemSpec::chafee_infante(3.0);
    let n = 512;
    let u = legendre_mode(n, 3);
    c.bench_function("laplacian, n = 512", |b| b.iter(|| pde::laplacian_axisym(black_box(&u))));
    for scheme in [Scheme::Imex, Scheme::Explicit] {
        let dt = match scheme {
            Scheme::Imex => PI / n as f64,
            Scheme::Explicit => 0.4 * (PI / n as f64).powi(2),
        };
        let stepper = Stepper::new(spec.field(), n, dt, scheme).unwrap();
        c.bench_function(&format!("{scheme:?} step, n = 512"), |b| {
            b.iter(|| stepper.step(black_box(&u.values), 0.0).unwrap())
        });
    }
}

criterion_group!(benches, shooting, equilibria, parabolic);
criterion_main!(benches);
