//! Count tables, class labels, covariates and their delimited-text readers.
//!
//! Count tables have a header `sample_id,<feature_1>,...,<feature_m>` and one
//! row per sample. Metadata files have a header `sample_id,<col>,...` and are
//! joined to the count table by sample id. Comma and tab delimiters are
//! detected from the header line unless given explicitly.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::{Array2, Axis};

use crate::preprocess::Composition;
use crate::{Error, Result};

/// Raw read counts, samples × features.
#[derive(Debug, Clone, PartialEq)]
pub struct CountTable {
    counts: Array2<u64>,
    sample_ids: Vec<String>,
    feature_ids: Vec<String>,
}

impl CountTable {
    pub fn new(counts: Array2<u64>, sample_ids: Vec<String>, feature_ids: Vec<String>) -> Result<Self> {
        let (n, m) = counts.dim();
        if sample_ids.len() != n || feature_ids.len() != m {
            return Err(Error::Dimension(format!(
                "{n}×{m} counts with {} sample ids and {} feature ids",
                sample_ids.len(),
                feature_ids.len()
            )));
        }
        if n < 2 || m < 2 {
            return Err(Error::Invalid(format!(
                "count table must have at least 2 samples and 2 features, got {n}×{m}"
            )));
        }
        check_unique("sample", &sample_ids)?;
        check_unique("feature", &feature_ids)?;
        Ok(CountTable {
            counts,
            sample_ids,
            feature_ids,
        })
    }

    pub fn counts(&self) -> &Array2<u64> {
        &self.counts
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn feature_ids(&self) -> &[String] {
        &self.feature_ids
    }

    pub fn n_samples(&self) -> usize {
        self.counts.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.counts.ncols()
    }

    /// Keeps the listed feature columns, in the order given.
    pub fn select_features(&self, keep: &[usize]) -> Result<Self> {
        let counts = self.counts.select(Axis(1), keep);
        let ids = keep.iter().map(|&j| self.feature_ids[j].clone()).collect();
        CountTable::new(counts, self.sample_ids.clone(), ids)
    }

    /// Rows in the order given; repeated indices are allowed and get a `#r`
    /// suffix on their id so that ids stay unique.
    pub fn select_samples(&self, rows: &[usize]) -> Result<Self> {
        let counts = self.counts.select(Axis(0), rows);
        let ids = resampled_ids(&self.sample_ids, rows);
        CountTable::new(counts, ids, self.feature_ids.clone())
    }
}

pub(crate) fn resampled_ids(ids: &[String], rows: &[usize]) -> Vec<String> {
    let mut seen: HashMap<usize, usize> = HashMap::new();
    rows.iter()
        .map(|&i| {
            let k = seen.entry(i).or_insert(0);
            *k += 1;
            if *k == 1 {
                ids[i].clone()
            } else {
                format!("{}#{}", ids[i], k)
            }
        })
        .collect()
}

fn check_unique(kind: &'static str, ids: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateId { kind, id: id.clone() });
        }
    }
    Ok(())
}

/// Class membership. Classes are indexed `0..C` internally, in lexicographic
/// order of the raw label strings; the last class is the multinomial baseline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labels {
    y: Vec<usize>,
    class_names: Vec<String>,
}

impl Labels {
    pub fn new(y: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        let c = class_names.len();
        if c < 2 {
            return Err(Error::Invalid(format!("need at least 2 classes, got {c}")));
        }
        if let Some(&bad) = y.iter().find(|&&k| k >= c) {
            return Err(Error::Invalid(format!(
                "class index {bad} out of range for {c} classes"
            )));
        }
        let counts = count_classes(&y, c);
        if let Some(k) = counts.iter().position(|&n| n == 0) {
            return Err(Error::EmptyClass(class_names[k].clone()));
        }
        Ok(Labels { y, class_names })
    }

    /// Indexes raw label strings lexicographically.
    pub fn from_raw<S: AsRef<str>>(raw: &[S]) -> Result<Self> {
        let levels: BTreeSet<&str> = raw.iter().map(AsRef::as_ref).collect();
        if levels.len() < 2 {
            return Err(Error::Invalid(format!(
                "need at least 2 distinct labels, got {}",
                levels.len()
            )));
        }
        let index: HashMap<&str, usize> = levels.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let y = raw.iter().map(|s| index[s.as_ref()]).collect();
        Labels::new(y, levels.into_iter().map(String::from).collect())
    }

    pub fn y(&self) -> &[usize] {
        &self.y
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        count_classes(&self.y, self.n_classes())
    }

    /// Sample indices of each class, in sample order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_classes()];
        for (i, &k) in self.y.iter().enumerate() {
            out[k].push(i);
        }
        out
    }

    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        Labels::new(rows.iter().map(|&i| self.y[i]).collect(), self.class_names.clone())
    }
}

fn count_classes(y: &[usize], c: usize) -> Vec<usize> {
    let mut counts = vec![0; c];
    for &k in y {
        counts[k] += 1;
    }
    counts
}

/// Real-valued sample covariates; may have zero columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateMatrix {
    values: Array2<f64>,
    names: Vec<String>,
}

impl CovariateMatrix {
    pub fn new(values: Array2<f64>, names: Vec<String>) -> Result<Self> {
        if values.ncols() != names.len() {
            return Err(Error::Dimension(format!(
                "{} covariate columns with {} names",
                values.ncols(),
                names.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("covariates must be finite".into()));
        }
        Ok(CovariateMatrix { values, names })
    }

    pub fn empty(n: usize) -> Self {
        CovariateMatrix {
            values: Array2::zeros((n, 0)),
            names: Vec::new(),
        }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_covariates(&self) -> usize {
        self.values.ncols()
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        CovariateMatrix {
            values: self.values.select(Axis(0), rows),
            names: self.names.clone(),
        }
    }
}

/// Imputed composition, labels and covariates for the same samples.
#[derive(Debug, Clone)]
pub struct Dataset {
    composition: Composition,
    labels: Labels,
    covariates: CovariateMatrix,
}

impl Dataset {
    pub fn new(composition: Composition, labels: Labels, covariates: CovariateMatrix) -> Result<Self> {
        let n = composition.n_samples();
        if labels.len() != n || covariates.n_rows() != n {
            return Err(Error::Dimension(format!(
                "composition has {n} samples, labels {}, covariates {}",
                labels.len(),
                covariates.n_rows()
            )));
        }
        Ok(Dataset {
            composition,
            labels,
            covariates,
        })
    }

    pub fn composition(&self) -> &Composition {
        &self.composition
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn covariates(&self) -> &CovariateMatrix {
        &self.covariates
    }

    pub fn n_samples(&self) -> usize {
        self.composition.n_samples()
    }

    pub fn n_features(&self) -> usize {
        self.composition.n_features()
    }

    pub fn without_covariates(&self) -> Self {
        Dataset {
            composition: self.composition.clone(),
            labels: self.labels.clone(),
            covariates: CovariateMatrix::empty(self.n_samples()),
        }
    }

    /// Row resample (indices may repeat).
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        Dataset::new(
            self.composition.select_samples(rows),
            self.labels.select(rows)?,
            self.covariates.select(rows),
        )
    }
}

/// Picks tab when the header line contains one, comma otherwise.
pub fn detect_delimiter(path: &Path) -> Result<u8> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut first = String::new();
    BufReader::new(file).read_line(&mut first).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(if first.contains('\t') { b'\t' } else { b',' })
}

fn open_reader(path: &Path, delimiter: Option<u8>) -> Result<csv::Reader<File>> {
    let delimiter = match delimiter {
        Some(d) => d,
        None => detect_delimiter(path)?,
    };
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads a samples × features count table.
pub fn read_count_table(path: &Path, delimiter: Option<u8>) -> Result<CountTable> {
    let mut reader = open_reader(path, delimiter)?;
    let header = reader.headers().map_err(csv_err(path))?.clone();
    if header.len() < 3 {
        return Err(Error::Invalid(format!(
            "{}: header needs a sample id column and at least 2 features",
            path.display()
        )));
    }
    let feature_ids: Vec<String> = header.iter().skip(1).map(String::from).collect();
    let m = feature_ids.len();

    let mut sample_ids = Vec::new();
    let mut cells: Vec<u64> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err(path))?;
        let line = r + 2;
        if record.len() != m + 1 {
            return Err(Error::RaggedRow {
                path: path.to_path_buf(),
                row: line,
                expected: m + 1,
                found: record.len(),
            });
        }
        sample_ids.push(record[0].to_string());
        for (j, raw) in record.iter().skip(1).enumerate() {
            let value = raw.parse::<u64>().map_err(|_| Error::BadCell {
                path: path.to_path_buf(),
                row: line,
                column: feature_ids[j].clone(),
                value: raw.to_string(),
                reason: match raw.parse::<f64>() {
                    Ok(v) if v < 0.0 => "negative count",
                    Ok(_) => "not an integer",
                    Err(_) => "not a number",
                },
            })?;
            cells.push(value);
        }
    }
    let n = sample_ids.len();
    let counts = Array2::from_shape_vec((n, m), cells).expect("row lengths checked above");
    CountTable::new(counts, sample_ids, feature_ids)
}

/// Writes a count table in the layout [`read_count_table`] accepts.
pub fn write_count_table(table: &CountTable, path: &Path, delimiter: u8) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .delimiter(delimiter)
        .from_path(path)
        .map_err(csv_err(path))?;
    let mut header = vec!["sample_id".to_string()];
    header.extend(table.feature_ids.iter().cloned());
    writer.write_record(&header).map_err(csv_err(path))?;
    for (id, row) in table.sample_ids.iter().zip(table.counts.rows()) {
        let mut rec = vec![id.clone()];
        rec.extend(row.iter().map(u64::to_string));
        writer.write_record(&rec).map_err(csv_err(path))?;
    }
    writer.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads labels and covariates for `sample_ids` from a metadata file keyed by
/// sample id.
///
/// A covariate column whose every value parses as a finite number is used
/// as-is. Any other column is treated as categorical and one-hot encoded with
/// the lexicographically first level dropped; the indicator columns are named
/// `<column>=<level>`.
pub fn read_metadata(
    path: &Path,
    sample_ids: &[String],
    label_column: &str,
    covariate_columns: &[String],
    delimiter: Option<u8>,
) -> Result<(Labels, CovariateMatrix)> {
    let mut reader = open_reader(path, delimiter)?;
    let header = reader.headers().map_err(csv_err(path))?.clone();
    let col = |name: &str| -> Result<usize> {
        header
            .iter()
            .skip(1)
            .position(|h| h == name)
            .map(|p| p + 1)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let label_idx = col(label_column)?;
    let cov_idx = covariate_columns.iter().map(|c| col(c)).collect::<Result<Vec<_>>>()?;

    let mut rows: HashMap<String, csv::StringRecord> = HashMap::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err(path))?;
        if record.len() != header.len() {
            return Err(Error::RaggedRow {
                path: path.to_path_buf(),
                row: r + 2,
                expected: header.len(),
                found: record.len(),
            });
        }
        let id = record[0].to_string();
        if rows.insert(id.clone(), record).is_some() {
            return Err(Error::DuplicateId {
                kind: "metadata sample",
                id,
            });
        }
    }

    let aligned = sample_ids
        .iter()
        .map(|id| rows.get(id).ok_or_else(|| Error::MissingSample(id.clone())))
        .collect::<Result<Vec<_>>>()?;

    let raw_labels: Vec<&str> = aligned.iter().map(|r| &r[label_idx]).collect();
    if raw_labels.iter().any(|s| s.is_empty()) {
        return Err(Error::Invalid(format!("empty value in label column {label_column:?}")));
    }
    let distinct: BTreeSet<&str> = raw_labels.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(Error::SingleClass(label_column.to_string()));
    }
    let labels = Labels::from_raw(&raw_labels)?;

    let n = sample_ids.len();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut names = Vec::new();
    for (name, &c) in covariate_columns.iter().zip(&cov_idx) {
        let raw: Vec<&str> = aligned.iter().map(|r| &r[c]).collect();
        if let Some(i) = raw.iter().position(|s| s.is_empty()) {
            return Err(Error::BadCell {
                path: path.to_path_buf(),
                row: i + 2,
                column: name.clone(),
                value: String::new(),
                reason: "missing covariate value",
            });
        }
        let numeric: Option<Vec<f64>> = raw
            .iter()
            .map(|s| s.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect();
        match numeric {
            Some(values) => {
                columns.push(values);
                names.push(name.clone());
            }
            None => {
                let levels: BTreeSet<&str> = raw.iter().copied().collect();
                for level in levels.iter().skip(1) {
                    columns.push(raw.iter().map(|s| f64::from(u8::from(s == level))).collect());
                    names.push(format!("{name}={level}"));
                }
            }
        }
    }
    let mut values = Array2::zeros((n, columns.len()));
    for (k, col) in columns.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            values[[i, k]] = v;
        }
    }
    Ok((labels, CovariateMatrix::new(values, names)?))
}

/// Writes a labelled real matrix; `corner` heads the row-id column.
pub fn write_matrix(
    path: &Path,
    corner: &str,
    row_ids: &[String],
    col_ids: &[String],
    values: &Array2<f64>,
    delimiter: u8,
) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .delimiter(delimiter)
        .from_path(path)
        .map_err(csv_err(path))?;
    let mut header = vec![corner.to_string()];
    header.extend(col_ids.iter().cloned());
    writer.write_record(&header).map_err(csv_err(path))?;
    for (id, row) in row_ids.iter().zip(values.rows()) {
        let mut rec = vec![id.clone()];
        rec.extend(row.iter().map(|v| format_f64(*v)));
        writer.write_record(&rec).map_err(csv_err(path))?;
    }
    writer.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Shortest representation that parses back to the same `f64`; `NA` for NaN.
pub fn format_f64(v: f64) -> String {
    if v.is_nan() {
        "NA".to_string()
    } else {
        format!("{v:?}")
    }
}

/// Writes a metadata file with one categorical label column and optional
/// numeric columns.
pub fn write_metadata(
    path: &Path,
    sample_ids: &[String],
    label_column: &str,
    labels: &Labels,
    covariates: &CovariateMatrix,
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let mut header = vec!["sample_id".to_string(), label_column.to_string()];
    header.extend(covariates.names().iter().cloned());
    writer.write_record(&header).map_err(csv_err(path))?;
    for (i, id) in sample_ids.iter().enumerate() {
        let mut rec = vec![id.clone(), labels.class_names()[labels.y()[i]].clone()];
        rec.extend(covariates.values().row(i).iter().map(|v| format_f64(*v)));
        writer.write_record(&rec).map_err(csv_err(path))?;
    }
    writer.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Per-class sample counts keyed by class name, for reports.
pub fn class_count_map(labels: &Labels) -> BTreeMap<String, usize> {
    labels
        .class_names()
        .iter()
        .cloned()
        .zip(labels.class_counts())
        .collect()
}
