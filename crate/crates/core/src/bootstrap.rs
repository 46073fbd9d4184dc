//! Non-parametric bootstrap of the whole screen: resample samples, recompute
//! the AUC matrix, re-rank, and recompute `S_k`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::{CountTable, CovariateMatrix, Dataset, Labels};
use crate::par;
use crate::preprocess::impute_zeros;
use crate::screening::{self, compute_auc_matrix, top_pairs, ScreeningConfig};
use crate::{Error, Result};

/// Which `k` each replicate's `S_k` is read at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KPolicy {
    /// The `k*` selected on the original data.
    Original,
    Fixed(usize),
    /// Re-maximize `S_k` in every replicate.
    Reselect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub stratified: bool,
    pub seed: u64,
    pub workers: usize,
    pub k_policy: KPolicy,
    /// Estimate `rho_otu` from replicate AUCs of pairs sharing a feature.
    pub estimate_rho: bool,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replicates: 200,
            stratified: true,
            seed: 0,
            workers: 0,
            k_policy: KPolicy::Original,
            estimate_rho: false,
        }
    }
}

const MAX_REDRAWS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapResult {
    pub s_replicates: Vec<f64>,
    pub k_replicates: Vec<usize>,
    /// Unbiased sample variance of `s_replicates`.
    pub var_s: f64,
    pub percentile_ci_95: (f64, f64),
    pub k_star_distribution: BTreeMap<usize, usize>,
    pub original_k_star: usize,
    pub original_s: f64,
    /// Analytic `Var(S_k*)` on the original data with the configured rho.
    pub analytic_var_s: f64,
    pub rho_estimate: Option<f64>,
    /// Analytic `Var(S_k*)` with the estimated rho.
    pub analytic_var_s_estimated_rho: Option<f64>,
    pub seed: u64,
    pub replicates: usize,
    pub stratified: bool,
    pub k_policy: KPolicy,
    /// Unstratified draws rejected because a class vanished.
    pub redraws: usize,
}

/// Rows for replicate `b`; the random stream depends only on `(seed, b)`.
pub fn draw_rows(labels: &Labels, stratified: bool, seed: u64, b: usize) -> Result<(Vec<usize>, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(b as u64);
    let n = labels.len();
    if stratified {
        let mut rows = Vec::with_capacity(n);
        for members in labels.members() {
            for _ in 0..members.len() {
                rows.push(members[rng.random_range(0..members.len())]);
            }
        }
        return Ok((rows, 0));
    }
    let c = labels.n_classes();
    for attempt in 0..MAX_REDRAWS {
        let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let mut seen = vec![false; c];
        for &i in &rows {
            seen[labels.y()[i]] = true;
        }
        if seen.iter().all(|&s| s) {
            return Ok((rows, attempt));
        }
    }
    Err(Error::Numerical(format!(
        "replicate {b}: a class vanished in {MAX_REDRAWS} consecutive draws"
    )))
}

/// Unbiased sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
}

/// Quantile with linear interpolation between order statistics
/// (`h = (n − 1)·q`).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}

struct Replicate {
    s: f64,
    k: usize,
    tracked: Vec<f64>,
    redraws: usize,
}

fn run<F>(original: &Dataset, scfg: &ScreeningConfig, bcfg: &BootstrapConfig, build: F) -> Result<BootstrapResult>
where
    F: Fn(&[usize]) -> Result<Dataset> + Sync,
{
    if bcfg.replicates < 2 {
        return Err(Error::Config(format!(
            "need at least 2 replicates, got {}",
            bcfg.replicates
        )));
    }
    let labels = original.labels();
    if bcfg.stratified && labels.class_counts().iter().any(|&k| k < 2) {
        log::warn!("a class has fewer than 2 samples; stratified replicates of it are constant");
    }
    let inner = ScreeningConfig {
        workers: 1,
        ..scfg.clone()
    };
    let a0 = compute_auc_matrix(original, scfg)?;
    let ranking0 = screening::rank_features(&a0);
    let curve0 = screening::separability_curve(&a0, &ranking0.order);
    let k0 = screening::select_k(&curve0)?;
    let m = a0.n_features();
    let k_fixed = match bcfg.k_policy {
        KPolicy::Original => Some(k0),
        KPolicy::Fixed(k) => {
            if k < 2 || k > m {
                return Err(Error::Config(format!("fixed k = {k} outside 2..={m}")));
            }
            Some(k)
        }
        KPolicy::Reselect => None,
    };
    let tracked_pairs = if bcfg.estimate_rho {
        top_pairs(&ranking0.order, k0.max(3).min(m))
    } else {
        Vec::new()
    };

    let outcomes = par::map_indexed(bcfg.replicates, bcfg.workers, |b| -> Result<Replicate> {
        let (rows, redraws) = draw_rows(labels, bcfg.stratified, bcfg.seed, b)?;
        let ds = build(&rows)?;
        let a = compute_auc_matrix(&ds, &inner)?;
        let ranking = screening::rank_features(&a);
        let curve = screening::separability_curve(&a, &ranking.order);
        let k = match k_fixed {
            Some(k) => k,
            None => screening::select_k(&curve)?,
        };
        Ok(Replicate {
            s: curve[k - 2],
            k,
            tracked: tracked_pairs.iter().map(|p| a.values[[p.j, p.j_prime]]).collect(),
            redraws,
        })
    });
    let reps = outcomes.into_iter().collect::<Result<Vec<_>>>()?;

    let s_replicates: Vec<f64> = reps.iter().map(|r| r.s).collect();
    let k_replicates: Vec<usize> = reps.iter().map(|r| r.k).collect();
    let mut sorted = s_replicates.clone();
    sorted.sort_by(f64::total_cmp);
    let mut k_star_distribution = BTreeMap::new();
    for &k in &k_replicates {
        *k_star_distribution.entry(k).or_insert(0) += 1;
    }

    let rho_estimate = if bcfg.estimate_rho {
        let mut corrs = Vec::new();
        for (x, p) in tracked_pairs.iter().enumerate() {
            for (y, q) in tracked_pairs.iter().enumerate().skip(x + 1) {
                if p.shares_feature(q) {
                    let a: Vec<f64> = reps.iter().map(|r| r.tracked[x]).collect();
                    let b: Vec<f64> = reps.iter().map(|r| r.tracked[y]).collect();
                    corrs.extend(pearson(&a, &b));
                }
            }
        }
        (!corrs.is_empty()).then(|| (corrs.iter().sum::<f64>() / corrs.len() as f64).clamp(0.0, 1.0))
    } else {
        None
    };
    let k_eval = k_fixed.unwrap_or(k0);
    let analytic_var_s = screening::var_s_k(&a0, &ranking0.order, k_eval, scfg.rho_otu)?;
    let analytic_var_s_estimated_rho = rho_estimate
        .map(|rho| screening::var_s_k(&a0, &ranking0.order, k_eval, rho))
        .transpose()?;

    Ok(BootstrapResult {
        var_s: sample_variance(&s_replicates),
        percentile_ci_95: (quantile(&sorted, 0.025), quantile(&sorted, 0.975)),
        s_replicates,
        k_replicates,
        k_star_distribution,
        original_k_star: k0,
        original_s: curve0[k0 - 2],
        analytic_var_s,
        rho_estimate,
        analytic_var_s_estimated_rho,
        seed: bcfg.seed,
        replicates: bcfg.replicates,
        stratified: bcfg.stratified,
        k_policy: bcfg.k_policy,
        redraws: reps.iter().map(|r| r.redraws).sum(),
    })
}

/// Bootstrap on the imputed composition: replicates resample rows of `ds`.
pub fn bootstrap_s(ds: &Dataset, scfg: &ScreeningConfig, bcfg: &BootstrapConfig) -> Result<BootstrapResult> {
    run(ds, scfg, bcfg, |rows| ds.select(rows))
}

/// Bootstrap that resamples raw counts and re-imputes zeros in every
/// replicate. `counts` must already be filtered to the screened features.
pub fn bootstrap_s_reimputed(
    counts: &CountTable,
    labels: &Labels,
    covariates: &CovariateMatrix,
    prior_strength: f64,
    scfg: &ScreeningConfig,
    bcfg: &BootstrapConfig,
) -> Result<BootstrapResult> {
    let comp = impute_zeros(counts, prior_strength, bcfg.seed)?.composition;
    let original = Dataset::new(comp, labels.clone(), covariates.clone())?;
    run(&original, scfg, bcfg, |rows| {
        let resampled = counts.select_samples(rows)?;
        let comp = impute_zeros(&resampled, prior_strength, bcfg.seed)?.composition;
        Dataset::new(comp, labels.select(rows)?, covariates.select(rows))
    })
}
