//! Dataset loading and preprocessing: bundled CSV fixtures, generic CSV
//! ingestion, stratified train/test split, PCA reduction to the qubit count,
//! and min-max scaling into `[0, 1]`.

use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{derive_seed, stream};

const IRIS_CSV: &str = include_str!("../data/iris.csv");
const DIGITS_CSV: &str = include_str!("../data/digits.csv");
const BREAST_CANCER_CSV: &str = include_str!("../data/breast_cancer.csv");

pub const IRIS_SPECIES: [&str; 3] = ["setosa", "versicolor", "virginica"];

/// Features the circuit consumes (one per qubit).
pub const REDUCED_FEATURES: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    /// Seed of the split that produced this dataset; 0 for unsplit data.
    pub split_seed: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> Result<usize> {
        self.features
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::Usage(format!("dataset {} is empty", self.name)))
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    fn subset(&self, rows: &[usize], split_seed: u64) -> Self {
        Self {
            name: self.name.clone(),
            features: rows.iter().map(|&i| self.features[i].clone()).collect(),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
            split_seed,
        }
    }

    fn with_features(&self, features: Vec<Vec<f64>>) -> Self {
        Self {
            features,
            ..self.clone()
        }
    }
}

/// How label cells are turned into class indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelEncoding {
    /// Cells are integers in `[0, n_classes)`.
    Integer,
    /// Cells are names; class index is the position in this list.
    Categories(Vec<String>),
}

/// Fisher's Iris, 150 rows, 4 features, 3 balanced classes.
pub fn load_builtin_iris() -> Dataset {
    let categories = IRIS_SPECIES.iter().map(|s| s.to_string()).collect();
    parse_csv(IRIS_CSV.as_bytes(), "iris", "species", 3, &LabelEncoding::Categories(categories))
        .expect("bundled iris.csv is well formed")
}

/// 8x8 handwritten digits, 1797 rows, 64 features, 10 classes.
pub fn load_builtin_digits() -> Dataset {
    parse_csv(DIGITS_CSV.as_bytes(), "digits", "target", 10, &LabelEncoding::Integer)
        .expect("bundled digits.csv is well formed")
}

/// Wisconsin diagnostic breast cancer, 569 rows, 30 features, 2 classes.
pub fn load_builtin_breast_cancer() -> Dataset {
    parse_csv(
        BREAST_CANCER_CSV.as_bytes(),
        "breast_cancer",
        "target",
        2,
        &LabelEncoding::Integer,
    )
    .expect("bundled breast_cancer.csv is well formed")
}

/// Reads a headed CSV file. Integer label cells are used directly; otherwise
/// label strings are numbered in order of first appearance.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str, n_classes: usize) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Ingestion(format!("{}: {e}", path.display())))?;
    let name = path
        .file_stem()
        .map_or_else(|| "csv".to_string(), |s| s.to_string_lossy().into_owned());
    parse_csv_auto(file, &name, label_column, n_classes)
}

fn parse_csv_auto(
    reader: impl Read,
    name: &str,
    label_column: &str,
    n_classes: usize,
) -> Result<Dataset> {
    let mut text = String::new();
    let mut reader = reader;
    reader
        .read_to_string(&mut text)
        .map_err(|e| Error::Ingestion(format!("{name}: {e}")))?;
    match parse_csv(text.as_bytes(), name, label_column, n_classes, &LabelEncoding::Integer) {
        Err(Error::Ingestion(msg)) if msg.contains("not an integer label") => {
            let categories = first_seen_labels(text.as_bytes(), label_column)?;
            parse_csv(
                text.as_bytes(),
                name,
                label_column,
                n_classes,
                &LabelEncoding::Categories(categories),
            )
        }
        other => other,
    }
}

fn first_seen_labels(bytes: &[u8], label_column: &str) -> Result<Vec<String>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(bytes);
    let col = label_index(&mut rdr, label_column)?;
    let mut seen: Vec<String> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Ingestion(e.to_string()))?;
        if let Some(cell) = record.get(col) {
            let cell = cell.trim();
            if !seen.iter().any(|s| s == cell) {
                seen.push(cell.to_string());
            }
        }
    }
    Ok(seen)
}

fn label_index<R: Read>(rdr: &mut csv::Reader<R>, label_column: &str) -> Result<usize> {
    let headers = rdr
        .headers()
        .map_err(|e| Error::Ingestion(format!("header row: {e}")))?;
    headers
        .iter()
        .position(|h| h.trim() == label_column)
        .ok_or_else(|| Error::Ingestion(format!("no column named {label_column:?} in header")))
}

/// Parses headed CSV text. Row order is preserved; errors carry 1-based line
/// numbers and 1-based column numbers.
pub fn parse_csv(
    reader: impl Read,
    name: &str,
    label_column: &str,
    n_classes: usize,
    encoding: &LabelEncoding,
) -> Result<Dataset> {
    if n_classes == 0 {
        return Err(Error::Config("n_classes must be positive".into()));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(reader);
    let label_col = label_index(&mut rdr, label_column)?;
    let width = rdr.headers().map_err(|e| Error::Ingestion(e.to_string()))?.len();

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Ingestion(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(Error::Ingestion(format!(
                "line {line}: expected {width} fields, found {}",
                record.len()
            )));
        }
        let mut row = Vec::with_capacity(width - 1);
        for (col, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if col == label_col {
                labels.push(parse_label(cell, encoding, n_classes, line, col + 1)?);
            } else {
                let v: f64 = cell.parse().map_err(|_| {
                    Error::Ingestion(format!(
                        "line {line}, column {}: {cell:?} is not a number",
                        col + 1
                    ))
                })?;
                row.push(v);
            }
        }
        features.push(row);
    }
    if labels.is_empty() {
        return Err(Error::Ingestion(format!("{name}: no data rows")));
    }
    Ok(Dataset {
        name: name.to_string(),
        features,
        labels,
        n_classes,
        split_seed: 0,
    })
}

fn parse_label(
    cell: &str,
    encoding: &LabelEncoding,
    n_classes: usize,
    line: u64,
    column: usize,
) -> Result<usize> {
    let class = match encoding {
        LabelEncoding::Integer => cell.parse::<usize>().map_err(|_| {
            Error::Ingestion(format!(
                "line {line}, column {column}: {cell:?} is not an integer label"
            ))
        })?,
        LabelEncoding::Categories(names) => {
            names.iter().position(|n| n == cell).ok_or_else(|| {
                Error::Ingestion(format!(
                    "line {line}, column {column}: unknown label {cell:?}"
                ))
            })?
        }
    };
    if class >= n_classes {
        return Err(Error::Ingestion(format!(
            "line {line}, column {column}: unknown label {cell:?} (expected {n_classes} classes)"
        )));
    }
    Ok(class)
}

/// Stratified split: each class contributes `round(test_fraction·size)` rows
/// to the test side (at least one row on each side). Both halves keep the
/// original row order.
pub fn train_test_split(data: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Split(format!(
            "test fraction {test_fraction} must lie strictly between 0 and 1"
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); data.n_classes];
    for (i, &y) in data.labels.iter().enumerate() {
        by_class[y].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, stream::SPLIT, 0, 0));
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, mut rows) in by_class.into_iter().enumerate() {
        if rows.is_empty() {
            continue;
        }
        if rows.len() < 2 {
            return Err(Error::Split(format!(
                "class {class} has {} sample(s); stratification needs at least 2",
                rows.len()
            )));
        }
        rows.shuffle(&mut rng);
        let n_test = ((test_fraction * rows.len() as f64).round() as usize).clamp(1, rows.len() - 1);
        test.extend_from_slice(&rows[..n_test]);
        train.extend_from_slice(&rows[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((data.subset(&train, seed), data.subset(&test, seed)))
}

/// Min-max statistics fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

pub fn fit_scale(train: &[Vec<f64>]) -> Result<Scaler> {
    let first = train
        .first()
        .ok_or_else(|| Error::Usage("cannot fit a scaler on zero rows".into()))?;
    let mut min = first.clone();
    let mut max = first.clone();
    for row in train {
        if row.len() != min.len() {
            return Err(Error::Usage("ragged feature matrix".into()));
        }
        for (j, &v) in row.iter().enumerate() {
            min[j] = min[j].min(v);
            max[j] = max[j].max(v);
        }
    }
    Ok(Scaler { min, max })
}

impl Scaler {
    /// `(x − min)/(max − min)` clamped to `[0, 1]`; constant features map to 0.5.
    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&v, (&lo, &hi))| {
                if hi > lo {
                    ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
                } else {
                    0.5
                }
            })
            .collect()
    }
}

pub fn apply_scale(scaler: &Scaler, features: &[Vec<f64>]) -> Vec<Vec<f64>> {
    features.iter().map(|r| scaler.transform_row(r)).collect()
}

/// Top-`k` principal directions of the training covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaReducer {
    pub mean: Vec<f64>,
    /// `components[j][c]`: raw feature `j`, component `c`. Columns are orthonormal.
    pub components: Vec<Vec<f64>>,
    /// Covariance eigenvalues of the kept components, descending.
    pub explained_variance: Vec<f64>,
}

/// Relative eigenvalue floor below which a direction counts as rank-deficient.
const RANK_TOL: f64 = 1e-10;

pub fn fit_pca_reduce(train: &[Vec<f64>], k: usize) -> Result<PcaReducer> {
    let n = train.len();
    let d = train.first().map_or(0, Vec::len);
    if k == 0 || d < k {
        return Err(Error::Reduction(format!("cannot keep {k} of {d} features")));
    }
    if n < k + 1 {
        return Err(Error::Reduction(format!("{n} rows are too few for {k} components")));
    }
    let mut mean = vec![0.0; d];
    for row in train {
        if row.len() != d {
            return Err(Error::Usage("ragged feature matrix".into()));
        }
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut cov = DMatrix::<f64>::zeros(d, d);
    for row in train {
        for i in 0..d {
            let a = row[i] - mean[i];
            for j in i..d {
                cov[(i, j)] += a * (row[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / (n - 1) as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let kth = eig.eigenvalues[order[k - 1]];
    if top <= 0.0 || kth <= RANK_TOL * top {
        return Err(Error::Reduction(format!(
            "training data has rank below {k} (eigenvalue {kth:e} vs largest {top:e})"
        )));
    }

    let mut components = vec![vec![0.0; k]; d];
    let mut explained_variance = Vec::with_capacity(k);
    for (c, &idx) in order.iter().take(k).enumerate() {
        let col = eig.eigenvectors.column(idx);
        let pivot = (0..d)
            .max_by(|&a, &b| col[a].abs().total_cmp(&col[b].abs()).then(b.cmp(&a)))
            .expect("d > 0");
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            components[j][c] = sign * col[j];
        }
        explained_variance.push(eig.eigenvalues[idx]);
    }
    Ok(PcaReducer {
        mean,
        components,
        explained_variance,
    })
}

impl PcaReducer {
    pub fn n_components(&self) -> usize {
        self.explained_variance.len()
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_components()];
        for (j, (&v, m)) in row.iter().zip(&self.mean).enumerate() {
            let centered = v - m;
            for (o, w) in out.iter_mut().zip(&self.components[j]) {
                *o += centered * w;
            }
        }
        out
    }

    pub fn transform(&self, features: &[Vec<f64>]) -> Vec<Vec<f64>> {
        features.iter().map(|r| self.transform_row(r)).collect()
    }

    pub fn inverse_transform_row(&self, projected: &[f64]) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.components)
            .map(|(m, w)| m + w.iter().zip(projected).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }
}

/// Training/test data ready for the circuit, plus the fitted transforms.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: Dataset,
    pub test: Dataset,
    pub reducer: Option<PcaReducer>,
    pub scaler: Scaler,
}

/// Split → PCA down to `n_features` (only when wider) → min-max scale. All
/// statistics come from the training rows.
pub fn prepare(data: &Dataset, test_fraction: f64, seed: u64, n_features: usize) -> Result<Prepared> {
    let (train, test) = train_test_split(data, test_fraction, seed)?;
    let width = train.n_features()?;
    let (train, test, reducer) = if width > n_features {
        let pca = fit_pca_reduce(&train.features, n_features)?;
        let tr = train.with_features(pca.transform(&train.features));
        let te = test.with_features(pca.transform(&test.features));
        (tr, te, Some(pca))
    } else if width == n_features {
        (train, test, None)
    } else {
        return Err(Error::Config(format!(
            "dataset {} has {width} features; the circuit needs {n_features}",
            data.name
        )));
    };
    let scaler = fit_scale(&train.features)?;
    let train = train.with_features(apply_scale(&scaler, &train.features));
    let test = test.with_features(apply_scale(&scaler, &test.features));
    Ok(Prepared {
        train,
        test,
        reducer,
        scaler,
    })
}
