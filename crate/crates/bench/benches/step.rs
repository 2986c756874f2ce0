use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use muon_vr::optimizer::{Muon, MuonConfig, MuonOption, Orthogonalizer, Schedule};
use muon_vr::problems::{make_stochastic_quadratic, Problem};

/// One optimizer step on a 32×32 quadratic, per option and orthogonalizer.
fn bench_step(c: &mut Criterion) {
    let problem = make_stochastic_quadratic(0, 32, 32, 1.0, 0.1, 1.0).unwrap();
    let x0 = problem.initial_point(&mut ChaCha8Rng::seed_from_u64(1));
    let mut group = c.benchmark_group("muon_step");
    for option in [MuonOption::Mvr1Gamma0, MuonOption::Mvr1, MuonOption::Mvr2, MuonOption::Practical] {
        for (name, orth) in [("exact", Orthogonalizer::Exact), ("ns5", Orthogonalizer::newton_schulz(5))] {
            let config = MuonConfig {
                orthogonalizer: orth,
                ..MuonConfig::new(option, Schedule::Thm2Mvr2)
            };
            let mut muon = Muon::new(config, x0.clone()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            group.bench_function(BenchmarkId::new(option.label(), name), |b| {
                b.iter(|| muon.advance(&problem, &mut rng).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, bench_step);
criterion_main!(benches);
