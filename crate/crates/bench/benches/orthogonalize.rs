use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use muon_vr::linalg::{compact_svd, newton_schulz, polar_factor_exact, Matrix, NsCoefficients, DEFAULT_RANK_TOL};

const SHAPES: [(usize, usize); 3] = [(16, 8), (64, 32), (128, 128)];

fn input(m: usize, n: usize) -> Matrix {
    Matrix::random_normal(m, n, &mut ChaCha8Rng::seed_from_u64(7))
}

fn bench_svd(c: &mut Criterion) {
    let mut group = c.benchmark_group("compact_svd");
    for (m, n) in SHAPES {
        let a = input(m, n);
        group.bench_with_input(BenchmarkId::from_parameter(format!("{m}x{n}")), &a, |b, a| {
            b.iter(|| compact_svd(a, DEFAULT_RANK_TOL).unwrap())
        });
    }
    group.finish();
}

fn bench_polar(c: &mut Criterion) {
    let mut group = c.benchmark_group("polar");
    for (m, n) in SHAPES {
        let a = input(m, n);
        let id = format!("{m}x{n}");
        group.bench_with_input(BenchmarkId::new("exact", &id), &a, |b, a| {
            b.iter(|| polar_factor_exact(a, DEFAULT_RANK_TOL).unwrap())
        });
        for steps in [5, 30] {
            group.bench_with_input(BenchmarkId::new(format!("ns{steps}"), &id), &a, |b, a| {
                b.iter(|| newton_schulz(a, steps, NsCoefficients::default()).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, bench_svd, bench_polar);
criterion_main!(benches);
