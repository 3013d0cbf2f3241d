//! Benchmarks for the symbolic pipeline: assembling the variational 4-form,
//! extracting the field equations, and building conserved currents.

use cartanfield_core::derivation::{
    builtin_generators, field_equation, galilean_reduce, onshell_divergence, System,
};
use cartanfield_core::model::{potential_fn, Model, RepKind};
use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

/// A model minimally coupled to four opaque potential functions — the
/// hardest symbolic case, since nothing about `A_mu` simplifies away.
fn coupled(kind: RepKind) -> Model {
    Model::with_potentials(
        kind,
        [potential_fn(0), potential_fn(1), potential_fn(2), potential_fn(3)],
    )
}

fn bench_variational_form(c: &mut Criterion) {
    c.bench_function("omega/free-relativistic", |b| {
        b.iter(|| black_box(Model::free(RepKind::Lorentz)).omega())
    });

    let omega = coupled(RepKind::Lorentz).omega();
    c.bench_function("omega/exterior-derivative", |b| {
        b.iter(|| black_box(&omega).exterior_derivative())
    });
}

fn bench_field_equations(c: &mut Criterion) {
    let lorentz = coupled(RepKind::Lorentz);
    c.bench_function("field-equation/relativistic-coupled", |b| {
        b.iter(|| field_equation(black_box(&lorentz)).unwrap())
    });

    let pde = field_equation(&coupled(RepKind::Galilean)).unwrap();
    c.bench_function("field-equation/two-component-reduction", |b| {
        b.iter(|| galilean_reduce(black_box(&pde)).unwrap())
    });
}

fn bench_conserved_currents(c: &mut Criterion) {
    let system = System::new(coupled(RepKind::Lorentz)).unwrap();
    let rewriter = system.rewriter();
    let generators = builtin_generators();
    let gauge = generators.iter().find(|g| g.label == "gauge").unwrap();

    c.bench_function("current/gauge-from-contraction", |b| {
        b.iter(|| system.current(black_box(gauge)).unwrap())
    });

    let current = system.current(gauge).unwrap();
    c.bench_function("current/onshell-divergence", |b| {
        b.iter(|| onshell_divergence(black_box(&current), &rewriter).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = bench_variational_form, bench_field_equations, bench_conserved_currents
}
criterion_main!(benches);
