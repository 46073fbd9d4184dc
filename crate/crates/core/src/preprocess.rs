//! Rare-feature filtering, multiplicative zero replacement, clr coordinates
//! and pairwise log-ratios.

use ndarray::{Array2, Axis};
use serde::Serialize;

use crate::datamodel::{resampled_ids, CountTable};
use crate::{Error, Result};

/// Strictly positive composition, samples × features.
#[derive(Debug, Clone, PartialEq)]
pub struct Composition {
    values: Array2<f64>,
    sample_ids: Vec<String>,
    feature_ids: Vec<String>,
    row_totals: Vec<f64>,
}

impl Composition {
    /// Wraps a positive matrix. `row_totals` defaults to the row sums.
    pub fn new(
        values: Array2<f64>,
        sample_ids: Vec<String>,
        feature_ids: Vec<String>,
        row_totals: Option<Vec<f64>>,
    ) -> Result<Self> {
        let (n, m) = values.dim();
        if sample_ids.len() != n || feature_ids.len() != m {
            return Err(Error::Dimension(format!(
                "{n}×{m} composition with {} sample ids and {} feature ids",
                sample_ids.len(),
                feature_ids.len()
            )));
        }
        if m < 2 {
            return Err(Error::Invalid("composition needs at least 2 features".into()));
        }
        if let Some(((i, j), v)) = values.indexed_iter().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Invalid(format!(
                "composition entry ({}, {}) = {v} is not strictly positive",
                sample_ids[i], feature_ids[j]
            )));
        }
        let row_totals = row_totals.unwrap_or_else(|| values.sum_axis(Axis(1)).to_vec());
        if row_totals.len() != n {
            return Err(Error::Dimension("row_totals length differs from sample count".into()));
        }
        Ok(Composition {
            values,
            sample_ids,
            feature_ids,
            row_totals,
        })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn feature_ids(&self) -> &[String] {
        &self.feature_ids
    }

    pub fn row_totals(&self) -> &[f64] {
        &self.row_totals
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    pub fn select_samples(&self, rows: &[usize]) -> Self {
        Composition {
            values: self.values.select(Axis(0), rows),
            sample_ids: resampled_ids(&self.sample_ids, rows),
            feature_ids: self.feature_ids.clone(),
            row_totals: rows.iter().map(|&i| self.row_totals[i]).collect(),
        }
    }

    pub fn select_features(&self, cols: &[usize]) -> Result<Self> {
        let values = self.values.select(Axis(1), cols);
        let ids = cols.iter().map(|&j| self.feature_ids[j].clone()).collect();
        Composition::new(values, self.sample_ids.clone(), ids, None)
    }

    /// Natural logs stored feature-major, the access pattern of pair scans.
    pub fn log_columns(&self) -> LogColumns {
        LogColumns {
            columns: self
                .values
                .columns()
                .into_iter()
                .map(|c| c.iter().map(|v| v.ln()).collect())
                .collect(),
        }
    }
}

/// Per-feature columns of `ln x`.
#[derive(Debug, Clone)]
pub struct LogColumns {
    columns: Vec<Vec<f64>>,
}

impl LogColumns {
    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn n_samples(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    /// Writes `ln x_j − ln x_j'` for every sample into `out`.
    pub fn logratio_into(&self, pair: PairIndex, out: &mut [f64]) {
        let a = &self.columns[pair.j];
        let b = &self.columns[pair.j_prime];
        for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
            *o = x - y;
        }
    }

    pub fn logratio(&self, pair: PairIndex) -> Vec<f64> {
        let mut out = vec![0.0; self.n_samples()];
        self.logratio_into(pair, &mut out);
        out
    }
}

/// Centered log-ratio coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ClrMatrix {
    pub values: Array2<f64>,
}

/// An ordered feature pair with `j < j_prime` (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct PairIndex {
    pub j: usize,
    pub j_prime: usize,
}

impl PairIndex {
    pub fn new(j: usize, j_prime: usize) -> Result<Self> {
        if j >= j_prime {
            return Err(Error::Invalid(format!("pair ({j}, {j_prime}) must satisfy j < j'")));
        }
        Ok(PairIndex { j, j_prime })
    }

    pub fn shares_feature(&self, other: &PairIndex) -> bool {
        self.j == other.j || self.j == other.j_prime || self.j_prime == other.j || self.j_prime == other.j_prime
    }
}

/// Number of unordered pairs among `m` features.
pub fn pair_count(m: usize) -> usize {
    m * m.saturating_sub(1) / 2
}

/// All pairs in lexicographic `(j, j')` order.
pub fn all_pairs(m: usize) -> Vec<PairIndex> {
    let mut pairs = Vec::with_capacity(pair_count(m));
    for j in 0..m {
        for jp in j + 1..m {
            pairs.push(PairIndex { j, j_prime: jp });
        }
    }
    pairs
}

/// Position of `pair` in the order of [`all_pairs`].
pub fn pair_position(pair: PairIndex, m: usize) -> usize {
    let j = pair.j;
    j * (2 * m - j - 1) / 2 + (pair.j_prime - j - 1)
}

/// Drops features with fewer than `min_nonzero` non-zero entries.
///
/// Returns the filtered table and the ids of the removed features. Column
/// order among survivors is preserved.
pub fn filter_rare(table: &CountTable, min_nonzero: usize) -> Result<(CountTable, Vec<String>)> {
    let mut keep = Vec::new();
    let mut removed = Vec::new();
    for (j, col) in table.counts().columns().into_iter().enumerate() {
        let nonzero = col.iter().filter(|&&c| c > 0).count();
        if nonzero >= min_nonzero {
            keep.push(j);
        } else {
            removed.push(table.feature_ids()[j].clone());
        }
    }
    if keep.len() < 2 {
        return Err(Error::Invalid(format!(
            "only {} feature(s) have at least {min_nonzero} non-zero counts",
            keep.len()
        )));
    }
    Ok((table.select_features(&keep)?, removed))
}

/// A zero replacement that is not smaller than the smallest observed count in
/// its sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImputationWarning {
    pub sample_id: String,
    pub feature_id: String,
    pub replacement: f64,
    pub smallest_nonzero: u64,
}

#[derive(Debug, Clone)]
pub struct Imputation {
    pub composition: Composition,
    pub warnings: Vec<ImputationWarning>,
}

/// Bayesian-multiplicative zero replacement with a uniform Dirichlet prior.
///
/// For a sample with total `N` and prior strengths `a_j` summing to `A`, a
/// zero cell becomes the posterior-mean share `N·a_j/(N + A)` and every
/// non-zero cell is scaled by `1 − Σ_{zeros} a_l/(N + A)`, so the row total
/// and the ratios among observed parts are unchanged.
///
/// The replacement is deterministic; `seed` is accepted so that callers can
/// pin a seed for sampled variants without changing their signature.
pub fn impute_zeros(table: &CountTable, prior_strength: f64, _seed: u64) -> Result<Imputation> {
    if !(prior_strength.is_finite() && prior_strength > 0.0) {
        return Err(Error::Config(format!(
            "prior strength must be positive, got {prior_strength}"
        )));
    }
    let (n, m) = table.counts().dim();
    let prior_total = prior_strength * m as f64;
    let mut values = Array2::zeros((n, m));
    let mut totals = Vec::with_capacity(n);
    let mut warnings = Vec::new();

    for (i, row) in table.counts().rows().into_iter().enumerate() {
        let total: u64 = row.iter().sum();
        if total == 0 {
            return Err(Error::Invalid(format!(
                "sample {:?} has no counts after filtering",
                table.sample_ids()[i]
            )));
        }
        let total = total as f64;
        let share = prior_strength / (total + prior_total);
        let zeros = row.iter().filter(|&&c| c == 0).count();
        let scale = 1.0 - zeros as f64 * share;
        let replacement = total * share;
        let smallest = row.iter().copied().filter(|&c| c > 0).min().unwrap_or(0);
        for (j, &c) in row.iter().enumerate() {
            values[[i, j]] = if c == 0 {
                if replacement >= smallest as f64 {
                    warnings.push(ImputationWarning {
                        sample_id: table.sample_ids()[i].clone(),
                        feature_id: table.feature_ids()[j].clone(),
                        replacement,
                        smallest_nonzero: smallest,
                    });
                }
                replacement
            } else {
                c as f64 * scale
            };
        }
        totals.push(total);
    }
    if !warnings.is_empty() {
        log::warn!(
            "{} zero replacement(s) are not below the smallest observed count of their sample",
            warnings.len()
        );
    }
    let composition = Composition::new(
        values,
        table.sample_ids().to_vec(),
        table.feature_ids().to_vec(),
        Some(totals),
    )?;
    Ok(Imputation { composition, warnings })
}

/// Row-wise `ln x_ij − mean_l ln x_il`.
pub fn clr_transform(comp: &Composition) -> ClrMatrix {
    let mut values = comp.values().mapv(f64::ln);
    for mut row in values.rows_mut() {
        let mean = row.sum() / row.len() as f64;
        row.mapv_inplace(|v| v - mean);
    }
    ClrMatrix { values }
}

/// `ln(x_j / x_j')` for every sample.
pub fn pairwise_logratio(comp: &Composition, pair: PairIndex) -> Result<Vec<f64>> {
    let m = comp.n_features();
    if pair.j_prime >= m || pair.j >= pair.j_prime {
        return Err(Error::Invalid(format!(
            "pair ({}, {}) invalid for {m} features",
            pair.j, pair.j_prime
        )));
    }
    let a = comp.values().column(pair.j);
    let b = comp.values().column(pair.j_prime);
    Ok(a.iter().zip(b.iter()).map(|(x, y)| x.ln() - y.ln()).collect())
}

/// When to materialize the full log-ratio design.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignMode {
    /// Lazy above [`LAZY_COLUMN_THRESHOLD`] columns.
    Auto,
    Materialized,
    Lazy,
}

pub const LAZY_COLUMN_THRESHOLD: usize = 10_000;

/// Default cap on materialized cells (8 bytes each).
pub const DEFAULT_MAX_CELLS: usize = 50_000_000;

/// The `n × m(m−1)/2` matrix of all pairwise log-ratios, with columns in
/// lexicographic pair order. Columns are generated from per-feature logs on
/// demand unless the matrix was materialized.
#[derive(Debug, Clone)]
pub struct LogRatioDesign {
    logs: LogColumns,
    pairs: Vec<PairIndex>,
    dense: Option<Array2<f64>>,
}

impl LogRatioDesign {
    pub fn n_rows(&self) -> usize {
        self.logs.n_samples()
    }

    pub fn n_columns(&self) -> usize {
        self.pairs.len()
    }

    pub fn n_features(&self) -> usize {
        self.logs.n_features()
    }

    pub fn pairs(&self) -> &[PairIndex] {
        &self.pairs
    }

    pub fn is_materialized(&self) -> bool {
        self.dense.is_some()
    }

    pub fn dense(&self) -> Option<&Array2<f64>> {
        self.dense.as_ref()
    }

    pub fn column_into(&self, k: usize, out: &mut [f64]) {
        match &self.dense {
            Some(d) => {
                for (o, v) in out.iter_mut().zip(d.column(k)) {
                    *o = *v;
                }
            }
            None => self.logs.logratio_into(self.pairs[k], out),
        }
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows()];
        self.column_into(k, &mut out);
        out
    }

    /// Restricts to a subset of samples, keeping the materialization choice.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let logs = LogColumns {
            columns: self
                .logs
                .columns
                .iter()
                .map(|c| rows.iter().map(|&i| c[i]).collect())
                .collect(),
        };
        LogRatioDesign {
            logs,
            pairs: self.pairs.clone(),
            dense: self.dense.as_ref().map(|d| d.select(Axis(0), rows)),
        }
    }
}

/// Builds the pairwise log-ratio design. `max_cells` bounds materialization.
pub fn logratio_design(comp: &Composition, mode: DesignMode, max_cells: usize) -> Result<LogRatioDesign> {
    let logs = comp.log_columns();
    let pairs = all_pairs(comp.n_features());
    let n = comp.n_samples();
    let cells = n.saturating_mul(pairs.len());
    let materialize = match mode {
        DesignMode::Lazy => false,
        DesignMode::Auto => pairs.len() <= LAZY_COLUMN_THRESHOLD && cells <= max_cells,
        DesignMode::Materialized => {
            if cells > max_cells {
                return Err(Error::DesignTooLarge { cells, cap: max_cells });
            }
            true
        }
    };
    let dense = materialize.then(|| {
        let mut d = Array2::zeros((n, pairs.len()));
        let mut buf = vec![0.0; n];
        for (k, &p) in pairs.iter().enumerate() {
            logs.logratio_into(p, &mut buf);
            d.column_mut(k).iter_mut().zip(&buf).for_each(|(o, v)| *o = *v);
        }
        d
    });
    Ok(LogRatioDesign { logs, pairs, dense })
}
