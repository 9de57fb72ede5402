//! Dataset ingestion, encoding, splitting and fold generation.
//!
//! Features are stored row-major as `f64`. Categorical columns are
//! ordinal-encoded by first appearance, so every split the tree learner
//! produces is a numeric threshold. The [`FeatureSchema`] records the
//! encodings, class names and per-column summaries; it travels inside saved
//! models so prediction-time encoding matches training-time encoding.

use std::collections::HashMap;
use std::fs::File;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    /// Category strings indexed by code. Empty for numeric columns.
    pub categories: Vec<String>,
    /// Substitute for missing cells: median (numeric) or modal code (categorical).
    pub fill: f64,
    pub min: f64,
    pub max: f64,
    pub median: f64,
}

impl ColumnSpec {
    fn numeric(name: impl Into<String>) -> Self {
        ColumnSpec {
            name: name.into(),
            kind: ColumnKind::Numeric,
            categories: Vec::new(),
            fill: 0.0,
            min: 0.0,
            max: 0.0,
            median: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub columns: Vec<ColumnSpec>,
    pub label_column: String,
    /// Label strings indexed by class.
    pub class_names: Vec<String>,
}

impl FeatureSchema {
    /// All-numeric schema with generated column and class names. Summaries are
    /// zero until filled by [`Dataset::new`].
    pub fn numeric(n_features: usize, n_classes: usize) -> Self {
        FeatureSchema {
            columns: (0..n_features)
                .map(|j| ColumnSpec::numeric(format!("x{j}")))
                .collect(),
            label_column: "label".to_string(),
            class_names: (0..n_classes).map(|c| c.to_string()).collect(),
        }
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_index(&self, label: &str) -> Option<u32> {
        self.class_names
            .iter()
            .position(|c| c == label)
            .map(|i| i as u32)
    }

    pub fn class_name(&self, class: u32) -> &str {
        &self.class_names[class as usize]
    }

    /// Encode a raw cell of feature column `col`.
    pub fn encode(&self, col: usize, raw: &str) -> Result<f64> {
        let spec = &self.columns[col];
        match spec.kind {
            ColumnKind::Numeric => parse_number(raw).ok_or_else(|| {
                Error::data(format!("column '{}': '{raw}' is not numeric", spec.name))
            }),
            ColumnKind::Categorical => spec
                .categories
                .iter()
                .position(|c| c == raw)
                .map(|code| code as f64)
                .ok_or_else(|| {
                    Error::data(format!("column '{}': unknown category '{raw}'", spec.name))
                }),
        }
    }

    /// Inverse of [`encode`](Self::encode) for categorical columns.
    pub fn decode(&self, col: usize, code: f64) -> Option<&str> {
        let spec = self.columns.get(col)?;
        if spec.kind != ColumnKind::Categorical || code < 0.0 || code.fract() != 0.0 {
            return None;
        }
        spec.categories.get(code as usize).map(String::as_str)
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_names.len() < 2 {
            return Err(Error::invariant("schema needs at least 2 classes"));
        }
        if self.columns.is_empty() {
            return Err(Error::invariant("schema has no feature columns"));
        }
        for col in &self.columns {
            if col.kind == ColumnKind::Categorical && col.categories.is_empty() {
                return Err(Error::invariant(format!(
                    "categorical column '{}' has no categories",
                    col.name
                )));
            }
            let mut seen = std::collections::HashSet::new();
            if !col.categories.iter().all(|c| seen.insert(c)) {
                return Err(Error::invariant(format!(
                    "column '{}' has duplicate categories",
                    col.name
                )));
            }
        }
        let mut seen = std::collections::HashSet::new();
        if !self.class_names.iter().all(|c| seen.insert(c)) {
            return Err(Error::invariant("duplicate class names"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MissingPolicy {
    /// Drop every row with an empty (or `?`) cell.
    #[default]
    Drop,
    /// Fill numeric cells with the column median and categorical cells with
    /// the column mode. Rows with a missing label are still dropped.
    Impute,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    n_features: usize,
    labels: Vec<u32>,
    row_ids: Vec<u64>,
    schema: Arc<FeatureSchema>,
}

impl Dataset {
    /// Assemble a dataset, checking the row invariants and refreshing the
    /// schema's per-column min/max/median from `features`. Fill values are
    /// left as given.
    pub fn new(
        features: Vec<f64>,
        labels: Vec<u32>,
        row_ids: Vec<u64>,
        mut schema: FeatureSchema,
    ) -> Result<Self> {
        let n_features = schema.n_features();
        let ds = Self::from_parts(features, labels, row_ids, Arc::new(schema.clone()))?;
        if ds.n_rows() > 0 {
            for j in 0..n_features {
                let mut col: Vec<f64> = ds.column(j).collect();
                col.sort_by(f64::total_cmp);
                let spec = &mut schema.columns[j];
                spec.min = col[0];
                spec.max = col[col.len() - 1];
                spec.median = median_sorted(&col);
            }
        }
        Ok(Dataset {
            schema: Arc::new(schema),
            ..ds
        })
    }

    /// Numeric dataset from rows; row ids are `0..n`.
    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<u32>, n_classes: usize) -> Result<Self> {
        let n_features = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_features) {
            return Err(Error::data("ragged rows"));
        }
        let features = rows.iter().flatten().copied().collect();
        let row_ids = (0..rows.len() as u64).collect();
        let mut ds = Self::new(
            features,
            labels,
            row_ids,
            FeatureSchema::numeric(n_features, n_classes),
        )?;
        let schema = Arc::make_mut(&mut ds.schema);
        for col in &mut schema.columns {
            col.fill = col.median;
        }
        Ok(ds)
    }

    fn from_parts(
        features: Vec<f64>,
        labels: Vec<u32>,
        row_ids: Vec<u64>,
        schema: Arc<FeatureSchema>,
    ) -> Result<Self> {
        let n_features = schema.n_features();
        if n_features == 0 {
            return Err(Error::data("dataset has no feature columns"));
        }
        if features.len() != labels.len() * n_features {
            return Err(Error::data(format!(
                "feature matrix has {} cells, expected {} rows x {} columns",
                features.len(),
                labels.len(),
                n_features
            )));
        }
        if row_ids.len() != labels.len() {
            return Err(Error::data("row_ids length differs from labels"));
        }
        let n_classes = schema.n_classes() as u32;
        if let Some(bad) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(Error::data(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        let mut seen = std::collections::HashSet::with_capacity(row_ids.len());
        if !row_ids.iter().all(|id| seen.insert(*id)) {
            return Err(Error::data("row ids are not unique"));
        }
        Ok(Dataset {
            features,
            n_features,
            labels,
            row_ids,
            schema,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.schema.n_classes()
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn row_ids(&self) -> &[u64] {
        &self.row_ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.features.chunks_exact(self.n_features)
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows().map(move |r| r[j])
    }

    pub fn class_counts(&self) -> Vec<usize> {
        class_counts(&self.labels, self.n_classes())
    }

    /// Rows at `idx`, in the given order. Indices must be distinct.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(idx.len() * self.n_features);
        for &i in idx {
            features.extend_from_slice(self.row(i));
        }
        Dataset {
            features,
            n_features: self.n_features,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            row_ids: idx.iter().map(|&i| self.row_ids[i]).collect(),
            schema: Arc::clone(&self.schema),
        }
    }

    /// Keep only the feature columns in `cols` (in that order).
    pub fn select_columns(&self, cols: &[usize]) -> Result<Dataset> {
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.n_features) {
            return Err(Error::config(format!(
                "feature index {bad} out of range (dataset has {} features)",
                self.n_features
            )));
        }
        let mut schema = (*self.schema).clone();
        schema.columns = cols.iter().map(|&c| self.schema.columns[c].clone()).collect();
        let features = self
            .rows()
            .flat_map(|r| cols.iter().map(move |&c| r[c]))
            .collect();
        Self::from_parts(
            features,
            self.labels.clone(),
            self.row_ids.clone(),
            Arc::new(schema),
        )
    }
}

pub fn class_counts(labels: &[u32], n_classes: usize) -> Vec<usize> {
    let mut counts = vec![0; n_classes];
    for &y in labels {
        counts[y as usize] += 1;
    }
    counts
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell == "?"
}

fn parse_number(cell: &str) -> Option<f64> {
    cell.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

fn open_csv(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn read_header(reader: &mut csv::Reader<File>, path: &Path) -> Result<Vec<String>> {
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::data(format!("{}: empty header row", path.display())));
    }
    Ok(header)
}

/// Load a training CSV (header row required).
///
/// `label_column` defaults to the last column. Columns whose non-missing
/// cells all parse as finite numbers are numeric; all others are
/// categorical with codes assigned in order of first appearance. Row ids are
/// the 0-based data-row positions in the file.
pub fn load_csv(
    path: impl AsRef<Path>,
    label_column: Option<&str>,
    missing: MissingPolicy,
) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = open_csv(path)?;
    let header = read_header(&mut reader, path)?;
    let label_idx = match label_column {
        Some(name) => header.iter().position(|h| h == name).ok_or_else(|| {
            Error::data(format!("label column '{name}' not found in header"))
        })?,
        None => header.len() - 1,
    };
    if header.len() < 2 {
        return Err(Error::data("need at least one feature column besides the label"));
    }
    let feature_cols: Vec<usize> = (0..header.len()).filter(|&c| c != label_idx).collect();

    let mut cells: Vec<Vec<String>> = Vec::new();
    let mut row_ids = Vec::new();
    let mut n_read = 0usize;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        n_read += 1;
        let row: Vec<String> = record.iter().map(str::to_string).collect();
        let keep = match missing {
            MissingPolicy::Drop => !row.iter().any(|c| is_missing(c)),
            MissingPolicy::Impute => !is_missing(&row[label_idx]),
        };
        if keep {
            cells.push(row);
            row_ids.push(i as u64);
        }
    }
    if cells.is_empty() {
        return Err(Error::data(if n_read == 0 {
            format!("{}: no data rows", path.display())
        } else {
            format!("{}: all {n_read} rows removed by missing-value policy", path.display())
        }));
    }

    let mut class_names: Vec<String> = Vec::new();
    let mut class_lookup: HashMap<String, u32> = HashMap::new();
    let labels: Vec<u32> = cells
        .iter()
        .map(|row| {
            let raw = &row[label_idx];
            *class_lookup.entry(raw.clone()).or_insert_with(|| {
                class_names.push(raw.clone());
                (class_names.len() - 1) as u32
            })
        })
        .collect();
    if class_names.len() < 2 {
        return Err(Error::data(format!(
            "label column '{}' has fewer than 2 distinct classes",
            header[label_idx]
        )));
    }

    let n_rows = cells.len();
    let n_features = feature_cols.len();
    let mut features = vec![0.0; n_rows * n_features];
    let mut columns = Vec::with_capacity(n_features);
    for (j, &c) in feature_cols.iter().enumerate() {
        let name = header[c].clone();
        let present = || cells.iter().map(|r| r[c].as_str()).filter(|s| !is_missing(s));
        if present().next().is_none() {
            return Err(Error::data(format!("column '{name}' has no values")));
        }
        let numeric = present().all(|s| parse_number(s).is_some());
        let mut spec = ColumnSpec::numeric(name);
        if numeric {
            let mut vals: Vec<f64> = present().filter_map(parse_number).collect();
            vals.sort_by(f64::total_cmp);
            spec.fill = median_sorted(&vals);
            for (i, row) in cells.iter().enumerate() {
                features[i * n_features + j] = parse_number(&row[c]).unwrap_or(spec.fill);
            }
        } else {
            spec.kind = ColumnKind::Categorical;
            let mut lookup: HashMap<&str, usize> = HashMap::new();
            let mut freq: Vec<usize> = Vec::new();
            for s in present() {
                let code = *lookup.entry(s).or_insert_with(|| {
                    spec.categories.push(s.to_string());
                    freq.push(0);
                    freq.len() - 1
                });
                freq[code] += 1;
            }
            // mode; ties go to the smallest code
            let mode = freq
                .iter()
                .enumerate()
                .fold((0, 0), |best, (code, &n)| if n > best.1 { (code, n) } else { best })
                .0;
            spec.fill = mode as f64;
            for (i, row) in cells.iter().enumerate() {
                let v = &row[c];
                features[i * n_features + j] = if is_missing(v) {
                    spec.fill
                } else {
                    lookup[v.as_str()] as f64
                };
            }
        }
        columns.push(spec);
    }

    let schema = FeatureSchema {
        columns,
        label_column: header[label_idx].clone(),
        class_names,
    };
    Dataset::new(features, labels, row_ids, schema)
}

/// Rows encoded against an existing schema. Labels are present only when
/// the file has the schema's label column.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedRows {
    pub features: Vec<f64>,
    pub n_features: usize,
    pub row_ids: Vec<u64>,
    pub labels: Option<Vec<u32>>,
}

impl EncodedRows {
    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn into_dataset(self, schema: &FeatureSchema) -> Result<Dataset> {
        let labels = self.labels.ok_or_else(|| {
            Error::data(format!("label column '{}' missing", schema.label_column))
        })?;
        Dataset::from_parts(self.features, labels, self.row_ids, Arc::new(schema.clone()))
    }
}

/// Load a CSV using a training schema's column names and encodings.
///
/// Columns are matched by name; extra columns are ignored. Under
/// [`MissingPolicy::Impute`] missing cells take the schema's fill values, so
/// every data row is kept.
pub fn load_csv_with_schema(
    path: impl AsRef<Path>,
    schema: &FeatureSchema,
    missing: MissingPolicy,
) -> Result<EncodedRows> {
    let path = path.as_ref();
    let mut reader = open_csv(path)?;
    let header = read_header(&mut reader, path)?;
    let positions: Vec<usize> = schema
        .columns
        .iter()
        .map(|col| {
            header.iter().position(|h| *h == col.name).ok_or_else(|| {
                Error::data(format!("column '{}' missing from {}", col.name, path.display()))
            })
        })
        .collect::<Result<_>>()?;
    let label_pos = header.iter().position(|h| *h == schema.label_column);
    let lookups: Vec<HashMap<&str, f64>> = schema
        .columns
        .iter()
        .map(|col| {
            col.categories
                .iter()
                .enumerate()
                .map(|(code, s)| (s.as_str(), code as f64))
                .collect()
        })
        .collect();

    let n_features = schema.n_features();
    let mut features = Vec::new();
    let mut row_ids = Vec::new();
    let mut labels = label_pos.map(|_| Vec::new());
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let any_missing = positions
            .iter()
            .chain(label_pos.iter())
            .any(|&p| record.get(p).is_none_or(is_missing));
        if any_missing && missing == MissingPolicy::Drop {
            continue;
        }
        if let (Some(p), Some(labels)) = (label_pos, labels.as_mut()) {
            let raw = record.get(p).unwrap_or("");
            if is_missing(raw) {
                return Err(Error::data(format!("row {i}: missing label")));
            }
            let class = schema.class_index(raw).ok_or_else(|| {
                Error::data(format!(
                    "column '{}': unknown class '{raw}'",
                    schema.label_column
                ))
            })?;
            labels.push(class);
        }
        for (j, &p) in positions.iter().enumerate() {
            let spec = &schema.columns[j];
            let raw = record.get(p).unwrap_or("");
            let v = if is_missing(raw) {
                spec.fill
            } else {
                match spec.kind {
                    ColumnKind::Numeric => schema.encode(j, raw)?,
                    ColumnKind::Categorical => *lookups[j].get(raw).ok_or_else(|| {
                        Error::data(format!(
                            "column '{}': unknown category '{raw}'",
                            spec.name
                        ))
                    })?,
                }
            };
            features.push(v);
        }
        row_ids.push(i as u64);
    }
    Ok(EncodedRows {
        features,
        n_features,
        row_ids,
        labels,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub stratified: bool,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, seed: u64) -> Self {
        SplitSpec {
            train_fraction,
            stratified: true,
            seed,
        }
    }
}

/// Random train/test split. Both sides keep the input row order.
///
/// The train side has `round(fraction * n)` rows. When stratified, each
/// class contributes `floor(fraction * n_c)` rows plus one extra for the
/// classes with the largest remainders until the total is reached, so every
/// class is within one row of the requested proportion.
pub fn train_test_split(d: &Dataset, spec: SplitSpec) -> Result<(Dataset, Dataset)> {
    let n = d.n_rows();
    if n < 2 {
        return Err(Error::data("need at least 2 rows to split"));
    }
    let f = spec.train_fraction;
    if !(f > 0.0 && f < 1.0) {
        return Err(Error::config(format!("train fraction {f} not in (0, 1)")));
    }
    let n_train = (f * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::config(format!(
            "train fraction {f} leaves an empty side for {n} rows"
        )));
    }
    let mut rng = seed::rng(spec.seed);
    let mut in_train = vec![false; n];
    if spec.stratified {
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); d.n_classes()];
        for (i, &y) in d.labels().iter().enumerate() {
            by_class[y as usize].push(i);
        }
        let mut quota: Vec<usize> = by_class
            .iter()
            .map(|rows| (f * rows.len() as f64).floor() as usize)
            .collect();
        let mut order: Vec<usize> = (0..by_class.len()).collect();
        let remainder = |c: usize| f * by_class[c].len() as f64 - quota[c] as f64;
        order.sort_by(|&a, &b| remainder(b).total_cmp(&remainder(a)));
        let mut missing = n_train.saturating_sub(quota.iter().sum());
        for &c in order.iter().cycle().take(order.len() * 2) {
            if missing == 0 {
                break;
            }
            if quota[c] < by_class[c].len() {
                quota[c] += 1;
                missing -= 1;
            }
        }
        for (rows, &q) in by_class.iter_mut().zip(&quota) {
            rows.shuffle(&mut rng);
            for &i in &rows[..q] {
                in_train[i] = true;
            }
        }
    } else {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        for &i in &idx[..n_train] {
            in_train[i] = true;
        }
    }
    let (train, test): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| in_train[i]);
    Ok((d.subset(&train), d.subset(&test)))
}

/// `k` (train, validation) index pairs. Validation folds partition `0..n_rows`
/// and their sizes differ by at most one.
///
/// With `stratify_labels`, rows are shuffled within each class and then dealt
/// round-robin across folds class by class, so per-class fold counts also
/// differ by at most one.
pub fn kfold_indices(
    n_rows: usize,
    k: usize,
    stratify_labels: Option<&[u32]>,
    seed: u64,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 || k > n_rows {
        return Err(Error::config(format!(
            "k = {k} folds out of range for {n_rows} rows"
        )));
    }
    let mut rng = seed::rng(seed);
    let order: Vec<usize> = match stratify_labels {
        Some(labels) => {
            if labels.len() != n_rows {
                return Err(Error::data("stratify labels length differs from n_rows"));
            }
            let n_classes = labels.iter().map(|&y| y as usize + 1).max().unwrap_or(0);
            let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
            for (i, &y) in labels.iter().enumerate() {
                by_class[y as usize].push(i);
            }
            by_class
                .into_iter()
                .flat_map(|mut rows| {
                    rows.shuffle(&mut rng);
                    rows
                })
                .collect()
        }
        None => {
            let mut idx: Vec<usize> = (0..n_rows).collect();
            idx.shuffle(&mut rng);
            idx
        }
    };
    let mut fold_of = vec![0usize; n_rows];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % k;
    }
    Ok((0..k)
        .map(|fold| (0..n_rows).partition(|&i| fold_of[i] != fold))
        .collect())
}
