use criterion::{black_box, criterion_group, criterion_main, Criterion};
use radbif_core::continuation::continue_branch_from;
use radbif_core::solver::newton_solve;
use radbif_core::steklov::steklov_eigenpair;
use radbif_core::{ContinuationConfig, NewtonConfig, NonlinearityModel, RadialGrid, SystemState};

fn steklov(c: &mut Criterion) {
    for m in [512, 2048] {
        let grid = RadialGrid::new(3, 1.0, m).unwrap();
        c.bench_function(&format!("steklov_m{m}"), |b| {
            b.iter(|| steklov_eigenpair(black_box(&grid), 1e-12).unwrap())
        });
    }
}

fn newton(c: &mut Criterion) {
    let grid = RadialGrid::new(3, 1.0, 512).unwrap();
    let pair = steklov_eigenpair(&grid, 1e-12).unwrap();
    let model = NonlinearityModel::reference();
    let init = SystemState::from_profile(&pair.phi1, 1.0, 1.0);
    let cfg = NewtonConfig::default();
    c.bench_function("newton_m512", |b| {
        b.iter(|| newton_solve(&grid, &model, black_box(0.2), &init, &cfg).unwrap())
    });
}

fn branch(c: &mut Criterion) {
    let grid = RadialGrid::new(3, 1.0, 256).unwrap();
    let pair = steklov_eigenpair(&grid, 1e-12).unwrap();
    let model = NonlinearityModel::reference();
    let cfg = ContinuationConfig {
        lambda_stop_low: 1e-2,
        ..ContinuationConfig::default()
    };
    let mut group = c.benchmark_group("branch");
    group.sample_size(10);
    group.bench_function("reference_m256", |b| {
        b.iter(|| continue_branch_from(&grid, &model, &pair, &cfg).unwrap())
    });
    group.finish();
}

criterion_group!(benches, steklov, newton, branch);
criterion_main!(benches);
