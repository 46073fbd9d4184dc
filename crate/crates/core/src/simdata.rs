//! Seeded logistic-normal-multinomial count data with planted discriminant
//! features.
//!
//! Each sample draws Gaussian log-abundances around `ln(base_concentration)`.
//! Signal features are shifted by `±effect_size` in every non-baseline class,
//! alternating sign along `signal_features` (`+, −, +, ...`) so that ratios
//! between signal features also carry signal. The abundances are closed by a
//! softmax, sampled to `depth` reads, and then cells are zeroed at `zero_rate`.
//!
//! With confounding strength `g`, a covariate `u ~ N(g·[non-baseline], 1)` is
//! emitted and added, times `g`, to the log-abundance of the first signal
//! feature.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::datamodel::{CountTable, CovariateMatrix, Labels};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub n_per_class: Vec<usize>,
    pub m: usize,
    pub signal_features: Vec<usize>,
    pub effect_size: f64,
    pub covariate_confounding: Option<f64>,
    /// Expected relative abundance per feature (empty = uniform).
    pub base_concentration: Vec<f64>,
    /// Standard deviation of the per-sample log-abundance noise.
    pub noise_sd: f64,
    /// Reads per sample.
    pub depth: u64,
    pub zero_rate: f64,
    pub seed: u64,
}

impl Default for SimSpec {
    fn default() -> Self {
        SimSpec {
            n_per_class: vec![100, 100],
            m: 30,
            signal_features: vec![0, 1, 2],
            effect_size: 1.5,
            covariate_confounding: None,
            base_concentration: Vec::new(),
            noise_sd: 1.0,
            depth: 5_000,
            zero_rate: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Simulated {
    pub counts: CountTable,
    pub labels: Labels,
    pub covariates: CovariateMatrix,
    /// Planted feature indices.
    pub truth: Vec<usize>,
}

impl SimSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_per_class.len() < 2 || self.n_per_class.contains(&0) {
            return Err(Error::Config("need at least 2 classes, each with samples".into()));
        }
        if self.m < 2 {
            return Err(Error::Config("need at least 2 features".into()));
        }
        if let Some(&j) = self.signal_features.iter().find(|&&j| j >= self.m) {
            return Err(Error::Config(format!("signal feature {j} ≥ m = {}", self.m)));
        }
        if !self.effect_size.is_finite() || !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return Err(Error::Config("effect size and noise sd must be finite".into()));
        }
        if !(0.0..1.0).contains(&self.zero_rate) {
            return Err(Error::Config(format!(
                "zero rate must lie in [0, 1), got {}",
                self.zero_rate
            )));
        }
        if !self.base_concentration.is_empty()
            && (self.base_concentration.len() != self.m
                || self.base_concentration.iter().any(|&b| b.is_nan() || b <= 0.0))
        {
            return Err(Error::Config("base concentration needs m positive entries".into()));
        }
        if self.depth == 0 {
            return Err(Error::Config("depth must be positive".into()));
        }
        if self.covariate_confounding.is_some_and(|g| !g.is_finite()) {
            return Err(Error::Config("confounding strength must be finite".into()));
        }
        Ok(())
    }
}

fn multinomial(rng: &mut ChaCha8Rng, depth: u64, probs: &[f64]) -> Vec<u64> {
    let mut out = vec![0; probs.len()];
    let mut left = depth;
    let mut mass = 1.0;
    for (j, &p) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        if j + 1 == probs.len() {
            out[j] = left;
            break;
        }
        let q = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 1.0 };
        let draw = Binomial::new(left, q).map(|b| b.sample(rng)).unwrap_or(0);
        out[j] = draw;
        left -= draw;
        mass -= p;
    }
    out
}

pub fn simulate(spec: &SimSpec) -> Result<Simulated> {
    spec.validate()?;
    let c = spec.n_per_class.len();
    let n: usize = spec.n_per_class.iter().sum();
    let m = spec.m;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let base_log: Vec<f64> = if spec.base_concentration.is_empty() {
        vec![0.0; m]
    } else {
        spec.base_concentration.iter().map(|b| b.ln()).collect()
    };
    let mut shift = vec![0.0; m];
    for (r, &j) in spec.signal_features.iter().enumerate() {
        shift[j] = if r % 2 == 0 {
            spec.effect_size
        } else {
            -spec.effect_size
        };
    }

    let width = (m.max(2) - 1).to_string().len().max(3);
    let feature_ids: Vec<String> = (0..m).map(|j| format!("F{:0width$}", j + 1)).collect();
    let sample_ids: Vec<String> = (0..n).map(|i| format!("S{:04}", i + 1)).collect();
    let class_names: Vec<String> = (0..c).map(|k| format!("g{:02}", k + 1)).collect();

    let mut counts = Array2::zeros((n, m));
    let mut y = Vec::with_capacity(n);
    let mut confounder = Vec::new();
    let mut logits = vec![0.0; m];
    let mut i = 0;
    for (class, &size) in spec.n_per_class.iter().enumerate() {
        let active = class + 1 != c;
        for _ in 0..size {
            for j in 0..m {
                let noise: f64 = StandardNormal.sample(&mut rng);
                logits[j] = base_log[j] + spec.noise_sd * noise + if active { shift[j] } else { 0.0 };
            }
            if let Some(g) = spec.covariate_confounding {
                let e: f64 = StandardNormal.sample(&mut rng);
                let u = g * f64::from(u8::from(active)) + e;
                if let Some(&j) = spec.signal_features.first() {
                    logits[j] += g * u;
                }
                confounder.push(u);
            }
            let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = logits.iter().map(|l| (l - mx).exp()).collect();
            let tot: f64 = w.iter().sum();
            let probs: Vec<f64> = w.iter().map(|v| v / tot).collect();
            let mut row = multinomial(&mut rng, spec.depth, &probs);
            for cell in row.iter_mut() {
                if rng.random::<f64>() < spec.zero_rate {
                    *cell = 0;
                }
            }
            if row.iter().all(|&v| v == 0) {
                let top = probs
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map_or(0, |(j, _)| j);
                row[top] = 1;
            }
            for (j, v) in row.into_iter().enumerate() {
                counts[[i, j]] = v;
            }
            y.push(class);
            i += 1;
        }
    }

    let covariates = if spec.covariate_confounding.is_some() {
        CovariateMatrix::new(
            Array2::from_shape_vec((n, 1), confounder).expect("one value per sample"),
            vec!["confounder".into()],
        )?
    } else {
        CovariateMatrix::empty(n)
    };
    Ok(Simulated {
        counts: CountTable::new(counts, sample_ids, feature_ids)?,
        labels: Labels::new(y, class_names)?,
        covariates,
        truth: spec.signal_features.clone(),
    })
}
