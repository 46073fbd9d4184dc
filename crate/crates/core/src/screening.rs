//! Pairwise log-ratio screening: the AUC matrix over all feature pairs,
//! feature ranking by column sums, the separability curve `S_k`, and the
//! analytic variance of `S_k`.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::auc::{self, VarianceMethod};
use crate::datamodel::Dataset;
use crate::glm::{fit_multinomial, GlmOptions, GlmSpec};
use crate::par;
use crate::preprocess::{all_pairs, PairIndex};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningConfig {
    /// Correlation assumed between AUCs of pairs that share a feature (and
    /// between Hand–Till components that share a class).
    pub rho_otu: f64,
    /// `Hanley` or `Delong`; multiclass screens propagate it through the
    /// Hand–Till average.
    pub variance_method: VarianceMethod,
    /// 0 = all cores.
    pub workers: usize,
    pub seed: u64,
    pub covariates_included: bool,
    pub glm: GlmOptions,
}

impl Default for ScreeningConfig {
    fn default() -> Self {
        ScreeningConfig {
            rho_otu: 0.2,
            variance_method: VarianceMethod::Hanley,
            workers: 0,
            seed: 0,
            covariates_included: true,
            glm: GlmOptions::default(),
        }
    }
}

impl ScreeningConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rho_otu) {
            return Err(Error::Config(format!("rho must lie in [0, 1], got {}", self.rho_otu)));
        }
        if !matches!(self.variance_method, VarianceMethod::Hanley | VarianceMethod::Delong) {
            return Err(Error::Config("screening variance must be hanley or delong".into()));
        }
        Ok(())
    }
}

/// A pair whose fit or AUC could not be computed; it enters the matrix as
/// AUC 0.5.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairFailure {
    pub j: String,
    pub j_prime: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AucMatrix {
    /// Symmetric, NaN on the diagonal.
    pub values: Array2<f64>,
    pub variances: Array2<f64>,
    pub method: VarianceMethod,
    pub feature_ids: Vec<String>,
    pub failures: Vec<PairFailure>,
    pub separated_pairs: usize,
    pub nonconverged_pairs: usize,
}

impl AucMatrix {
    /// Builds a matrix from upper-triangle values in [`all_pairs`] order.
    pub fn from_pairs(
        feature_ids: Vec<String>,
        values: &[f64],
        variances: &[f64],
        method: VarianceMethod,
    ) -> Result<Self> {
        let m = feature_ids.len();
        let pairs = all_pairs(m);
        if values.len() != pairs.len() || variances.len() != pairs.len() {
            return Err(Error::Dimension(format!(
                "{m} features need {} pair values",
                pairs.len()
            )));
        }
        let mut a = Array2::from_elem((m, m), f64::NAN);
        let mut v = Array2::from_elem((m, m), f64::NAN);
        for (k, p) in pairs.iter().enumerate() {
            a[[p.j, p.j_prime]] = values[k];
            a[[p.j_prime, p.j]] = values[k];
            v[[p.j, p.j_prime]] = variances[k];
            v[[p.j_prime, p.j]] = variances[k];
        }
        Ok(AucMatrix {
            values: a,
            variances: v,
            method,
            feature_ids,
            failures: Vec::new(),
            separated_pairs: 0,
            nonconverged_pairs: 0,
        })
    }

    pub fn n_features(&self) -> usize {
        self.feature_ids.len()
    }

    pub fn get(&self, j: usize, j_prime: usize) -> f64 {
        self.values[[j, j_prime]]
    }
}

struct PairOutcome {
    auc: f64,
    variance: f64,
    separated: bool,
    converged: bool,
    failure: Option<String>,
}

struct PairContext<'a> {
    covariates: ArrayView2<'a, f64>,
    labels: &'a [usize],
    n_classes: usize,
    positive: Vec<bool>,
    cfg: &'a ScreeningConfig,
    glm: GlmOptions,
}

impl PairContext<'_> {
    fn score(&self, z: &[f64]) -> Result<PairOutcome> {
        let fit = fit_multinomial(&GlmSpec {
            predictor: z,
            covariates: self.covariates,
            labels: self.labels,
            n_classes: self.n_classes,
            options: self.glm,
        })?;
        if fit.log_probs.iter().any(|v| v.is_nan()) {
            return Err(Error::Numerical("NaN fitted probability".into()));
        }
        let est = if self.n_classes == 2 {
            let (pos, neg) = auc::split_by_label(&fit.log_probs.column(0).to_vec(), &self.positive)?;
            auc::binary_estimate(&pos, &neg, self.cfg.variance_method)?
        } else {
            auc::handtill_estimate(
                fit.log_probs.view(),
                self.labels,
                self.n_classes,
                self.cfg.variance_method,
                self.cfg.rho_otu,
            )?
        };
        Ok(PairOutcome {
            auc: est.value,
            variance: est.variance,
            separated: fit.separation_flag,
            converged: fit.converged,
            failure: None,
        })
    }

    /// Variance assigned to a neutralized pair: the chance-level AUC under
    /// the Hanley approximation.
    fn neutral_variance(&self, counts: &[usize]) -> f64 {
        if self.n_classes == 2 {
            return auc::var_hanley(0.5, counts[0], counts[1]);
        }
        let mut vars = std::collections::BTreeMap::new();
        for c in 0..self.n_classes {
            for cp in c + 1..self.n_classes {
                vars.insert((c, cp), auc::var_hanley(0.5, counts[c], counts[cp]));
            }
        }
        let covs = auc::shared_class_covariances(&vars, self.cfg.rho_otu);
        auc::var_handtill(&vars, &covs, self.n_classes).unwrap_or(f64::NAN)
    }
}

/// Fits one model per feature pair and fills the AUC matrix.
///
/// Pairs are scored in parallel; each writes only its own cell and results
/// are gathered in pair order, so the matrix does not depend on `workers`.
/// A pair whose fit fails is recorded in `failures` with AUC 0.5.
pub fn compute_auc_matrix(ds: &Dataset, cfg: &ScreeningConfig) -> Result<AucMatrix> {
    cfg.validate()?;
    let m = ds.n_features();
    let n = ds.n_samples();
    if m < 2 {
        return Err(Error::Invalid("screening needs at least 2 features".into()));
    }
    let labels = ds.labels();
    let counts = labels.class_counts();
    if cfg.variance_method == VarianceMethod::Delong && counts.iter().any(|&c| c < 2) {
        return Err(Error::Config(
            "DeLong variance needs at least 2 samples per class".into(),
        ));
    }
    let empty = Array2::<f64>::zeros((n, 0));
    let covariates = if cfg.covariates_included {
        ds.covariates().values().view()
    } else {
        empty.view()
    };
    let ctx = PairContext {
        covariates,
        labels: labels.y(),
        n_classes: labels.n_classes(),
        positive: labels.y().iter().map(|&y| y == 0).collect(),
        cfg,
        glm: cfg.glm,
    };
    let neutral_var = ctx.neutral_variance(&counts);
    let logs = ds.composition().log_columns();
    let pairs = all_pairs(m);

    let outcomes = par::map_indexed(pairs.len(), cfg.workers, |k| {
        let z = logs.logratio(pairs[k]);
        ctx.score(&z).unwrap_or_else(|e| PairOutcome {
            auc: 0.5,
            variance: neutral_var,
            separated: false,
            converged: false,
            failure: Some(e.to_string()),
        })
    });

    let ids = ds.composition().feature_ids().to_vec();
    let values: Vec<f64> = outcomes.iter().map(|o| o.auc).collect();
    let variances: Vec<f64> = outcomes.iter().map(|o| o.variance).collect();
    let mut a = AucMatrix::from_pairs(ids.clone(), &values, &variances, cfg.variance_method)?;
    if labels.n_classes() > 2 {
        a.method = VarianceMethod::HandtillPropagated;
    }
    for (p, o) in pairs.iter().zip(&outcomes) {
        if let Some(reason) = &o.failure {
            a.failures.push(PairFailure {
                j: ids[p.j].clone(),
                j_prime: ids[p.j_prime].clone(),
                reason: reason.clone(),
            });
        }
    }
    a.separated_pairs = outcomes.iter().filter(|o| o.separated).count();
    a.nonconverged_pairs = outcomes.iter().filter(|o| !o.converged && !o.separated).count();
    if !a.failures.is_empty() {
        log::warn!("{} pair fit(s) failed and were set to AUC 0.5", a.failures.len());
    }
    Ok(a)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    /// Feature indices, best first.
    pub order: Vec<usize>,
    /// Column sum of every feature, indexed by feature.
    pub column_scores: Vec<f64>,
}

/// Ranks features by the sum of their AUC column, highest first; ties go to
/// the smaller feature id (string order).
pub fn rank_features(a: &AucMatrix) -> Ranking {
    let m = a.n_features();
    let column_scores: Vec<f64> = (0..m)
        .map(|j| (0..m).filter(|&jp| jp != j).map(|jp| a.values[[jp, j]]).sum())
        .collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&x, &y| {
        column_scores[y]
            .partial_cmp(&column_scores[x])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.feature_ids[x].cmp(&a.feature_ids[y]))
    });
    Ranking { order, column_scores }
}

/// `S_k` for `k = 2..=m`: the mean AUC over all pairs among the top `k`
/// features. Element 0 is `S_2`.
pub fn separability_curve(a: &AucMatrix, order: &[usize]) -> Vec<f64> {
    let mut curve = Vec::with_capacity(order.len().saturating_sub(1));
    let mut sum = 0.0;
    for k in 1..order.len() {
        let new = order[k];
        for &prev in &order[..k] {
            sum += a.values[[new, prev]];
        }
        let kk = (k + 1) as f64;
        curve.push(2.0 * sum / (kk * (kk - 1.0)));
    }
    curve
}

/// Smallest `k` at which the curve attains its maximum.
pub fn select_k(curve: &[f64]) -> Result<usize> {
    if curve.is_empty() {
        return Err(Error::Invalid("empty separability curve".into()));
    }
    let mut best = 0;
    for (i, &s) in curve.iter().enumerate() {
        if s > curve[best] {
            best = i;
        }
    }
    Ok(best + 2)
}

/// Analytic `Var(S_k)` over the pairs among the top `k` features.
///
/// Pairs sharing a feature get covariance `rho·√(Var·Var′)`; disjoint pairs
/// are uncorrelated. Two distinct pairs share at most one feature, so the
/// covariance sum is assembled per shared feature in O(k²).
pub fn var_s_k(a: &AucMatrix, order: &[usize], k: usize, rho: f64) -> Result<f64> {
    if k < 2 || k > order.len() {
        return Err(Error::Invalid(format!("k = {k} outside 2..={}", order.len())));
    }
    let top = &order[..k];
    let mut sum_var = 0.0;
    let mut sum_cov = 0.0;
    for (x, &f) in top.iter().enumerate() {
        let mut s = 0.0;
        let mut s2 = 0.0;
        for (y, &g) in top.iter().enumerate() {
            if x == y {
                continue;
            }
            let v = a.variances[[f, g]];
            s += v.sqrt();
            s2 += v;
            if y > x {
                sum_var += v;
            }
        }
        // Unordered pairs {(f,g), (f,h)}, g ≠ h.
        sum_cov += 0.5 * (s * s - s2);
    }
    let kk = (k * (k - 1)) as f64;
    Ok(4.0 / (kk * kk) * (sum_var + 2.0 * rho * sum_cov))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparabilityReport {
    /// Feature ids, best first.
    pub ranking: Vec<String>,
    /// Column sums, aligned with `ranking`.
    pub column_scores: Vec<f64>,
    /// `S_k` for `k = 2..=m`.
    pub s_curve: Vec<f64>,
    pub k_star: usize,
    pub selected: Vec<String>,
    pub s: f64,
    pub var_s: f64,
    pub ci_95: (f64, f64),
    pub config: ScreeningConfig,
    pub failures: Vec<PairFailure>,
    pub separated_pairs: usize,
    pub nonconverged_pairs: usize,
}

/// Normal-approximation 95% interval, clipped to `[0, 1]`.
pub fn normal_ci(s: f64, var: f64) -> (f64, f64) {
    let half = 1.96 * var.max(0.0).sqrt();
    ((s - half).clamp(0.0, 1.0), (s + half).clamp(0.0, 1.0))
}

pub fn build_report(a: &AucMatrix, cfg: &ScreeningConfig) -> Result<SeparabilityReport> {
    let ranking = rank_features(a);
    let curve = separability_curve(a, &ranking.order);
    let k_star = select_k(&curve)?;
    let s = curve[k_star - 2];
    let var_s = var_s_k(a, &ranking.order, k_star, cfg.rho_otu)?;
    Ok(SeparabilityReport {
        ranking: ranking.order.iter().map(|&j| a.feature_ids[j].clone()).collect(),
        column_scores: ranking.order.iter().map(|&j| ranking.column_scores[j]).collect(),
        s_curve: curve,
        k_star,
        selected: ranking.order[..k_star]
            .iter()
            .map(|&j| a.feature_ids[j].clone())
            .collect(),
        s,
        var_s,
        ci_95: normal_ci(s, var_s),
        config: cfg.clone(),
        failures: a.failures.clone(),
        separated_pairs: a.separated_pairs,
        nonconverged_pairs: a.nonconverged_pairs,
    })
}

/// Convenience: matrix and report in one call.
pub fn screen(ds: &Dataset, cfg: &ScreeningConfig) -> Result<(AucMatrix, SeparabilityReport)> {
    let a = compute_auc_matrix(ds, cfg)?;
    let r = build_report(&a, cfg)?;
    Ok((a, r))
}

/// Pairs among the first `k` entries of `order`, as sorted feature pairs.
pub fn top_pairs(order: &[usize], k: usize) -> Vec<PairIndex> {
    let top = &order[..k.min(order.len())];
    let mut out = Vec::new();
    for (x, &f) in top.iter().enumerate() {
        for &g in &top[x + 1..] {
            out.push(PairIndex {
                j: f.min(g),
                j_prime: f.max(g),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(m: usize, upper: &[f64], var: f64) -> AucMatrix {
        let ids = (0..m).map(|j| format!("F{j}")).collect();
        AucMatrix::from_pairs(ids, upper, &vec![var; upper.len()], VarianceMethod::Hanley).unwrap()
    }

    /// O(k⁴) enumeration over all pairs of pairs.
    fn brute_var_s_k(a: &AucMatrix, order: &[usize], k: usize, rho: f64) -> f64 {
        let pairs = top_pairs(order, k);
        let mut total = 0.0;
        for (x, p) in pairs.iter().enumerate() {
            total += a.variances[[p.j, p.j_prime]];
            for q in &pairs[x + 1..] {
                if p.shares_feature(q) {
                    total += 2.0 * rho * (a.variances[[p.j, p.j_prime]] * a.variances[[q.j, q.j_prime]]).sqrt();
                }
            }
        }
        let kk = (k * (k - 1)) as f64;
        4.0 / (kk * kk) * total
    }

    #[test]
    fn ranking_hand_values() {
        let a = matrix(3, &[0.9, 0.8, 0.6], 0.01);
        let r = rank_features(&a);
        assert!((r.column_scores[0] - 1.7).abs() < 1e-12);
        assert!((r.column_scores[1] - 1.5).abs() < 1e-12);
        assert!((r.column_scores[2] - 1.4).abs() < 1e-12);
        assert_eq!(r.order, vec![0, 1, 2]);
    }

    #[test]
    fn ranking_ties_by_id() {
        let ids = vec!["b".to_string(), "c".to_string(), "a".to_string()];
        let a = AucMatrix::from_pairs(ids, &[0.7; 3], &[0.0; 3], VarianceMethod::Hanley).unwrap();
        assert_eq!(rank_features(&a).order, vec![2, 0, 1]);
    }

    #[test]
    fn curve_and_k() {
        let a = matrix(3, &[0.9, 0.8, 0.7], 0.01);
        let curve = separability_curve(&a, &[0, 1, 2]);
        assert_eq!(curve[0], 0.9);
        assert!((curve[1] - 0.8).abs() < 1e-12);
        assert_eq!(select_k(&[0.9, 0.8, 0.7]).unwrap(), 2);
        assert_eq!(select_k(&[0.6, 0.8, 0.8, 0.7]).unwrap(), 3);
        assert!(select_k(&[]).is_err());
    }

    #[test]
    fn var_s_k_hand_values() {
        let v = 0.004;
        let a = matrix(3, &[0.9, 0.8, 0.7], v);
        let order = [0, 1, 2];
        assert!((var_s_k(&a, &order, 2, 0.2).unwrap() - v).abs() < 1e-15);
        assert!((var_s_k(&a, &order, 3, 0.0).unwrap() - v / 3.0).abs() < 1e-15);
        assert!((var_s_k(&a, &order, 3, 0.2).unwrap() - v * 1.4 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn var_s_k_matches_enumeration() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for m in [4, 7, 12] {
            let np = m * (m - 1) / 2;
            let vals: Vec<f64> = (0..np).map(|_| rng.random_range(0.4..1.0)).collect();
            let vars: Vec<f64> = (0..np).map(|_| rng.random_range(0.0..0.02)).collect();
            let ids = (0..m).map(|j| format!("F{j:02}")).collect();
            let a = AucMatrix::from_pairs(ids, &vals, &vars, VarianceMethod::Hanley).unwrap();
            let order = rank_features(&a).order;
            for k in 2..=m {
                for rho in [0.0, 0.2, 0.9] {
                    let fast = var_s_k(&a, &order, k, rho).unwrap();
                    let slow = brute_var_s_k(&a, &order, k, rho);
                    assert!((fast - slow).abs() <= 1e-14 * slow.max(1e-3), "m={m} k={k}");
                }
            }
        }
    }

    #[test]
    fn report_ci_collapses_with_zero_variance() {
        let a = matrix(3, &[0.9, 0.8, 0.7], 0.0);
        let r = build_report(&a, &ScreeningConfig::default()).unwrap();
        assert_eq!(r.k_star, 2);
        assert_eq!(r.s, 0.9);
        assert_eq!(r.ci_95, (0.9, 0.9));
        assert_eq!(r.selected, vec!["F0".to_string(), "F1".to_string()]);
    }

    #[test]
    fn ci_is_clipped() {
        assert_eq!(normal_ci(0.99, 0.01).1, 1.0);
        assert_eq!(normal_ci(0.01, 0.01).0, 0.0);
    }

    #[test]
    fn config_validation() {
        let bad_rho = ScreeningConfig {
            rho_otu: 1.5,
            ..ScreeningConfig::default()
        };
        assert!(bad_rho.validate().is_err());
        let bad_method = ScreeningConfig {
            variance_method: VarianceMethod::Bootstrap,
            ..ScreeningConfig::default()
        };
        assert!(bad_method.validate().is_err());
    }
}
