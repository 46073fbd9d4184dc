#![allow(dead_code)]

use codasep::datamodel::{CountTable, CovariateMatrix, Dataset, Labels};
use codasep::preprocess::{impute_zeros, pairwise_logratio, PairIndex};
use codasep::simdata::{simulate, SimSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Simulated counts, imputed with the default prior, as a dataset.
pub fn sim_dataset(spec: &SimSpec) -> Dataset {
    let sim = simulate(spec).expect("valid spec");
    to_dataset(&sim.counts, sim.labels, sim.covariates)
}

pub fn to_dataset(counts: &CountTable, labels: Labels, covariates: CovariateMatrix) -> Dataset {
    let comp = impute_zeros(counts, 0.5, 0).expect("rows have counts").composition;
    Dataset::new(comp, labels, covariates).expect("consistent sizes")
}

/// O(n²) pair counting with half credit for ties.
pub fn brute_auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &p in pos {
        for &q in neg {
            if p > q {
                wins += 1.0;
            } else if p == q {
                wins += 0.5;
            }
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

/// Null compositions (no class structure) whose labels are then drawn from
/// `P(first class) = σ(slope·ln(x_0/x_1))`, so only that one log-ratio
/// predicts the label.
pub fn single_ratio_dataset(seed: u64, n: usize, m: usize, slope: f64) -> Dataset {
    let sim = simulate(&SimSpec {
        n_per_class: vec![n / 2, n - n / 2],
        m,
        signal_features: Vec::new(),
        effect_size: 0.0,
        zero_rate: 0.0,
        seed,
        ..SimSpec::default()
    })
    .expect("valid spec");
    let comp = impute_zeros(&sim.counts, 0.5, 0).expect("rows have counts").composition;
    let z = pairwise_logratio(&comp, PairIndex::new(0, 1).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    loop {
        let y: Vec<usize> = z
            .iter()
            .map(|&v| usize::from(rng.random::<f64>() >= 1.0 / (1.0 + (-slope * v).exp())))
            .collect();
        if let Ok(labels) = Labels::new(y, vec!["a".into(), "b".into()]) {
            return Dataset::new(comp, labels, CovariateMatrix::empty(n)).unwrap();
        }
    }
}
