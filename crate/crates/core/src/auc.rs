//! Rank-based AUC, the Hand–Till multiclass average, and the Hanley, DeLong
//! and propagated multiclass variance estimators.
//!
//! Ties between a positive and a negative score count one half, in the AUC
//! itself and in the DeLong placement values.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMethod {
    Hanley,
    Delong,
    HandtillPropagated,
    Bootstrap,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AucEstimate {
    pub value: f64,
    pub variance: f64,
    pub method: VarianceMethod,
    /// Samples per class; `[n_pos, n_neg]` for a binary contrast.
    pub class_counts: Vec<usize>,
}

/// Splits scores into (positives, negatives).
pub fn split_by_label(scores: &[f64], positive: &[bool]) -> Result<(Vec<f64>, Vec<f64>)> {
    if scores.len() != positive.len() {
        return Err(Error::Dimension(format!(
            "{} scores, {} labels",
            scores.len(),
            positive.len()
        )));
    }
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (&s, &is_pos) in scores.iter().zip(positive) {
        if is_pos {
            pos.push(s);
        } else {
            neg.push(s);
        }
    }
    Ok((pos, neg))
}

fn total_cmp(a: &f64, b: &f64) -> Ordering {
    a.partial_cmp(b).unwrap_or(Ordering::Equal)
}

/// Mann–Whitney AUC of positives against negatives, O(n log n) by midranks.
///
/// Rank sums are half-integers, so the result is exact for any realistic `n`.
pub fn auc_from_split(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Invalid(
            "AUC needs at least one positive and one negative".into(),
        ));
    }
    if pos.iter().chain(neg).any(|v| v.is_nan()) {
        return Err(Error::Numerical("NaN score".into()));
    }
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| total_cmp(&a.0, &b.0));
    // Twice the positive rank sum, kept integral.
    let mut rank_sum2: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        // midrank of positions i+1..=j, doubled: (i + 1 + j)
        let mid2 = (i + 1 + j) as u128;
        let npos = all[i..j].iter().filter(|e| e.1).count() as u128;
        rank_sum2 += mid2 * npos;
        i = j;
    }
    let n1 = pos.len() as u128;
    let n0 = neg.len() as u128;
    // 2U = 2R − n1(n1 + 1)
    let u2 = rank_sum2 - n1 * (n1 + 1);
    Ok(u2 as f64 / (2 * n1 * n0) as f64)
}

/// Binary AUC; `positive[i]` marks the positive class.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    let (pos, neg) = split_by_label(scores, positive)?;
    auc_from_split(&pos, &neg)
}

/// DeLong placement values: `V_i` for each positive, `W_j` for each negative.
pub fn placements(pos: &[f64], neg: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut sneg = neg.to_vec();
    sneg.sort_by(total_cmp);
    let mut spos = pos.to_vec();
    spos.sort_by(total_cmp);
    let n0 = neg.len() as f64;
    let n1 = pos.len() as f64;
    let v = pos
        .iter()
        .map(|&s| {
            let below = sneg.partition_point(|&x| x < s);
            let upto = sneg.partition_point(|&x| x <= s);
            (below as f64 + 0.5 * (upto - below) as f64) / n0
        })
        .collect();
    let w = neg
        .iter()
        .map(|&s| {
            let below = spos.partition_point(|&x| x <= s);
            let above_eq = spos.partition_point(|&x| x < s);
            let greater = pos.len() - below;
            let ties = below - above_eq;
            (greater as f64 + 0.5 * ties as f64) / n1
        })
        .collect();
    (v, w)
}

/// Two-term DeLong variance from placement values and the AUC they average to.
pub fn delong_from_placements(v: &[f64], w: &[f64], auc: f64) -> Result<f64> {
    let n1 = v.len();
    let n0 = w.len();
    if n1 < 2 || n0 < 2 {
        return Err(Error::Invalid(format!(
            "DeLong variance needs at least 2 positives and 2 negatives, got {n1} and {n0}"
        )));
    }
    let sv: f64 = v.iter().map(|x| (x - auc) * (x - auc)).sum();
    let sw: f64 = w.iter().map(|x| (x - auc) * (x - auc)).sum();
    Ok(sv / (n1 * (n1 - 1)) as f64 + sw / (n0 * (n0 - 1)) as f64)
}

pub fn var_delong_split(pos: &[f64], neg: &[f64]) -> Result<f64> {
    let auc = auc_from_split(pos, neg)?;
    let (v, w) = placements(pos, neg);
    delong_from_placements(&v, &w, auc)
}

/// DeLong U-statistic variance of the binary AUC.
pub fn var_delong(scores: &[f64], positive: &[bool]) -> Result<f64> {
    let (pos, neg) = split_by_label(scores, positive)?;
    var_delong_split(&pos, &neg)
}

/// Hanley–McNeil variance from the AUC and the two class sizes.
pub fn var_hanley(auc: f64, n_pos: usize, n_neg: usize) -> f64 {
    let q1 = auc / (2.0 - auc);
    let q2 = 2.0 * auc * auc / (1.0 + auc);
    let a2 = auc * auc;
    let n1 = n_pos as f64;
    let n0 = n_neg as f64;
    let v = (auc * (1.0 - auc) + (n1 - 1.0) * (q1 - a2) + (n0 - 1.0) * (q2 - a2)) / (n1 * n0);
    if v < 0.0 && v > -1e-15 {
        0.0
    } else {
        v
    }
}

/// One unordered class pair's component of the Hand–Till average.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassPairAuc {
    pub c: usize,
    pub c_prime: usize,
    /// `½[Â(c|c′) + Â(c′|c)]`.
    pub value: f64,
    pub n_c: usize,
    pub n_c_prime: usize,
    /// Averaged DeLong placements of the two orderings, for variance.
    #[serde(skip)]
    pub placements: (Vec<f64>, Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HandTill {
    pub value: f64,
    pub components: Vec<ClassPairAuc>,
}

/// Hand–Till generalized AUC from per-class scores (`n × C`).
///
/// Any per-column monotone transform of the probabilities (log-probabilities
/// in particular) gives the same result.
pub fn hand_till_auc(scores: ArrayView2<'_, f64>, labels: &[usize], n_classes: usize) -> Result<HandTill> {
    if scores.nrows() != labels.len() || scores.ncols() != n_classes {
        return Err(Error::Dimension(format!(
            "scores {}×{}, {} labels, {n_classes} classes",
            scores.nrows(),
            scores.ncols(),
            labels.len()
        )));
    }
    if n_classes < 2 {
        return Err(Error::Invalid("Hand–Till AUC needs at least 2 classes".into()));
    }
    let mut members = vec![Vec::new(); n_classes];
    for (i, &y) in labels.iter().enumerate() {
        if y >= n_classes {
            return Err(Error::Invalid(format!("label {y} out of range")));
        }
        members[y].push(i);
    }
    if let Some(c) = members.iter().position(Vec::is_empty) {
        return Err(Error::EmptyClass(format!("class index {c}")));
    }
    let mut components = Vec::with_capacity(n_classes * (n_classes - 1) / 2);
    for c in 0..n_classes {
        for cp in c + 1..n_classes {
            let gather = |col: usize, rows: &[usize]| -> Vec<f64> { rows.iter().map(|&i| scores[[i, col]]).collect() };
            // Â(c|c′): column c, class c positive.
            let pos_a = gather(c, &members[c]);
            let neg_a = gather(c, &members[cp]);
            // Â(c′|c): column c′, class c′ positive.
            let pos_b = gather(cp, &members[cp]);
            let neg_b = gather(cp, &members[c]);
            let a = auc_from_split(&pos_a, &neg_a)?;
            let b = auc_from_split(&pos_b, &neg_b)?;
            let (va, wa) = placements(&pos_a, &neg_a);
            let (vb, wb) = placements(&pos_b, &neg_b);
            // Per-sample placements of class c and of class c′, averaged over
            // both orderings (vb indexes class c′, wb class c).
            let pc: Vec<f64> = va.iter().zip(&wb).map(|(x, y)| 0.5 * (x + y)).collect();
            let pcp: Vec<f64> = wa.iter().zip(&vb).map(|(x, y)| 0.5 * (x + y)).collect();
            components.push(ClassPairAuc {
                c,
                c_prime: cp,
                value: 0.5 * (a + b),
                n_c: members[c].len(),
                n_c_prime: members[cp].len(),
                placements: (pc, pcp),
            });
        }
    }
    let value = components.iter().map(|p| p.value).sum::<f64>() / components.len() as f64;
    Ok(HandTill { value, components })
}

pub type ClassPair = (usize, usize);

/// Propagated variance of the Hand–Till average:
/// `4/[C(C−1)]² · [Σ Var + 2 Σ Cov]`.
///
/// `variances` must hold every class pair `(c, c′)`, `c < c′`. Covariances are
/// keyed by an ordered pair of class pairs (first < second); missing entries
/// count as zero.
pub fn var_handtill(
    variances: &BTreeMap<ClassPair, f64>,
    covariances: &BTreeMap<(ClassPair, ClassPair), f64>,
    n_classes: usize,
) -> Result<f64> {
    let mut sum_var = 0.0;
    for c in 0..n_classes {
        for cp in c + 1..n_classes {
            sum_var += variances
                .get(&(c, cp))
                .ok_or_else(|| Error::Invalid(format!("missing variance for class pair ({c}, {cp})")))?;
        }
    }
    let sum_cov: f64 = covariances.iter().filter(|((a, b), _)| a < b).map(|(_, v)| v).sum();
    let cc = (n_classes * (n_classes - 1)) as f64;
    Ok(4.0 / (cc * cc) * (sum_var + 2.0 * sum_cov))
}

/// `ρ·√(Var·Var′)` for every two class pairs that share a class.
pub fn shared_class_covariances(
    variances: &BTreeMap<ClassPair, f64>,
    rho: f64,
) -> BTreeMap<(ClassPair, ClassPair), f64> {
    let keys: Vec<ClassPair> = variances.keys().copied().collect();
    let mut out = BTreeMap::new();
    for (i, &a) in keys.iter().enumerate() {
        for &b in &keys[i + 1..] {
            if a.0 == b.0 || a.0 == b.1 || a.1 == b.0 || a.1 == b.1 {
                out.insert((a, b), rho * (variances[&a] * variances[&b]).sqrt());
            }
        }
    }
    out
}

/// Binary AUC with its variance.
pub fn binary_estimate(pos: &[f64], neg: &[f64], method: VarianceMethod) -> Result<AucEstimate> {
    let value = auc_from_split(pos, neg)?;
    let variance = match method {
        VarianceMethod::Hanley => var_hanley(value, pos.len(), neg.len()),
        VarianceMethod::Delong => {
            let (v, w) = placements(pos, neg);
            delong_from_placements(&v, &w, value)?
        }
        other => {
            return Err(Error::Config(format!("{other:?} is not a binary variance estimator")));
        }
    };
    Ok(AucEstimate {
        value,
        variance,
        method,
        class_counts: vec![pos.len(), neg.len()],
    })
}

/// Hand–Till AUC with the propagated variance. Each class-pair component gets
/// a Hanley or DeLong variance; components sharing a class are correlated
/// with coefficient `rho`.
pub fn handtill_estimate(
    scores: ArrayView2<'_, f64>,
    labels: &[usize],
    n_classes: usize,
    component_method: VarianceMethod,
    rho: f64,
) -> Result<AucEstimate> {
    let ht = hand_till_auc(scores, labels, n_classes)?;
    let mut variances = BTreeMap::new();
    for comp in &ht.components {
        let v = match component_method {
            VarianceMethod::Hanley => var_hanley(comp.value, comp.n_c, comp.n_c_prime),
            VarianceMethod::Delong => delong_from_placements(&comp.placements.0, &comp.placements.1, comp.value)?,
            other => {
                return Err(Error::Config(format!(
                    "{other:?} is not a component variance estimator"
                )))
            }
        };
        variances.insert((comp.c, comp.c_prime), v);
    }
    let covs = shared_class_covariances(&variances, rho);
    let variance = var_handtill(&variances, &covs, n_classes)?;
    let mut counts = vec![0; n_classes];
    for &y in labels {
        counts[y] += 1;
    }
    Ok(AucEstimate {
        value: ht.value,
        variance,
        method: VarianceMethod::HandtillPropagated,
        class_counts: counts,
    })
}
