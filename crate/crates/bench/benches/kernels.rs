use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use tptkit::pde::solve_committor;
use tptkit::tpp::{tpp_ensemble, TppField};
use tptkit::{build_model, invariant_density, simulate, Grid, ModelDescriptor, Region, TptAnalytics};

fn doublewell2d() -> (tptkit::DiffusionModel, Region, Region) {
    let model = build_model(&ModelDescriptor::new("doublewell2d").beta(2.0)).unwrap();
    let a = Region::disk("A", [-1.0, 0.0], 0.3, 128).unwrap();
    let b = Region::disk("B", [1.0, 0.0], 0.3, 128).unwrap();
    (model, a, b)
}

fn euler_maruyama(c: &mut Criterion) {
    let (model, _, _) = doublewell2d();
    c.bench_function("simulate_2d_100k_steps", |bch| {
        bch.iter(|| simulate(&model, &[-1.0, 0.0], 1e-3, black_box(100_000), 7, 0).unwrap())
    });
}

fn committor(c: &mut Criterion) {
    let (model, a, b) = doublewell2d();
    let mut group = c.benchmark_group("committor_2d");
    group.sample_size(10);
    for nodes in [161, 256] {
        let grid = Arc::new(Grid::with_regions(model.domain(), [nodes, nodes], &a, &b).unwrap());
        group.bench_function(format!("{nodes}x{nodes}"), |bch| {
            bch.iter(|| solve_committor(&model, black_box(&grid)).unwrap())
        });
    }
    group.finish();
}

fn transition_paths(c: &mut Criterion) {
    let (model, a, b) = doublewell2d();
    let grid = Arc::new(Grid::with_regions(model.domain(), [161, 161], &a, &b).unwrap());
    let rho = invariant_density(&model, &grid).unwrap();
    let tpt = TptAnalytics::compute(&model, &rho, &grid).unwrap();
    let field = TppField::new(&model, &tpt.q).unwrap();
    let occ = Arc::new(Grid::with_regions(model.domain(), [41, 41], &a, &b).unwrap());
    let mut group = c.benchmark_group("tpp_2d");
    group.sample_size(10);
    group.bench_function("200_paths", |bch| {
        bch.iter(|| {
            tpp_ensemble(&field, &tpt.measures.eta_a_minus, 200, &occ, 1e-3, 3, 50_000_000).unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, euler_maruyama, committor, transition_paths);
criterion_main!(benches);
