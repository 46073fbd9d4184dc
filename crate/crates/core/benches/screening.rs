use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use codasep::bootstrap::{bootstrap_s, BootstrapConfig};
use codasep::datamodel::Dataset;
use codasep::preprocess::{filter_rare, impute_zeros};
use codasep::screening::{compute_auc_matrix, ScreeningConfig};
use codasep::simdata::{simulate, SimSpec};

fn dataset(m: usize) -> Dataset {
    let sim = simulate(&SimSpec {
        n_per_class: vec![100, 100],
        m,
        seed: 1,
        ..SimSpec::default()
    })
    .unwrap();
    let (kept, _) = filter_rare(&sim.counts, 3).unwrap();
    let comp = impute_zeros(&kept, 0.5, 0).unwrap().composition;
    Dataset::new(comp, sim.labels, sim.covariates).unwrap()
}

// workers = 1 takes the sequential path; 0 spreads pairs over all cores.
const MODES: [(&str, usize); 2] = [("sequential", 1), ("rayon", 0)];

fn auc_matrix(c: &mut Criterion) {
    let mut group = c.benchmark_group("auc_matrix");
    group.sample_size(10);
    for m in [30, 80] {
        let ds = dataset(m);
        for (name, workers) in MODES {
            let cfg = ScreeningConfig {
                workers,
                covariates_included: false,
                ..ScreeningConfig::default()
            };
            group.bench_with_input(BenchmarkId::new(name, m), &ds, |b, ds| {
                b.iter(|| compute_auc_matrix(black_box(ds), &cfg).unwrap())
            });
        }
    }
    group.finish();
}

fn bootstrap(c: &mut Criterion) {
    let mut group = c.benchmark_group("bootstrap");
    group.sample_size(10);
    let ds = dataset(20);
    let scfg = ScreeningConfig {
        covariates_included: false,
        ..ScreeningConfig::default()
    };
    for (name, workers) in MODES {
        let bcfg = BootstrapConfig {
            replicates: 20,
            workers,
            ..BootstrapConfig::default()
        };
        group.bench_function(name, |b| b.iter(|| bootstrap_s(black_box(&ds), &scfg, &bcfg).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, auc_matrix, bootstrap);
criterion_main!(benches);
