//! Multi-task datasets: CSV ingestion, standardization, synthetic generation
//! and per-task fold splitting.
//!
//! Instances are addressed by a flat index in task-major, row-minor order:
//! row `r` of task `t` lives at `t * h + r`. Every rank computation in the
//! crate uses this ordering.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StatNormal};

use crate::error::{Error, Result};

/// Partition label induced by the binary protected attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    A,
    B,
}

impl Group {
    /// Value of the 0/1 indicator column: A is 1.
    pub fn indicator(self) -> f64 {
        match self {
            Group::A => 1.0,
            Group::B => 0.0,
        }
    }

    pub fn other(self) -> Group {
        match self {
            Group::A => Group::B,
            Group::B => Group::A,
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Group::A => "A",
            Group::B => "B",
        })
    }
}

pub fn count_groups(protected: &[Group]) -> (usize, usize) {
    let n_a = protected.iter().filter(|&&g| g == Group::A).count();
    (n_a, protected.len() - n_a)
}

/// `k` tasks of `h` observations each, with `n` features per observation.
///
/// One of the feature columns may be the 0/1 protected indicator
/// (`protected_column`); it is kept out of standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskDataset {
    k: usize,
    h: usize,
    features: Vec<DMatrix<f64>>,
    targets: Vec<DVector<f64>>,
    protected: Vec<Group>,
    protected_column: Option<usize>,
    feature_names: Vec<String>,
    task_ids: Vec<String>,
    group_labels: [String; 2],
}

impl TaskDataset {
    /// Build a dataset from per-task matrices. `protected` is flat, task-major.
    pub fn new(
        features: Vec<DMatrix<f64>>,
        targets: Vec<DVector<f64>>,
        protected: Vec<Group>,
    ) -> Result<Self> {
        let k = features.len();
        if k == 0 {
            return Err(Error::InvalidParameter {
                name: "features",
                reason: "at least one task is required".into(),
            });
        }
        let (h, n) = features[0].shape();
        if h == 0 || n == 0 {
            return Err(Error::InvalidParameter {
                name: "features",
                reason: format!("task matrices must be non-empty, got {h}x{n}"),
            });
        }
        if targets.len() != k {
            return Err(Error::LengthMismatch {
                expected: k,
                actual: targets.len(),
            });
        }
        for (t, (x, y)) in features.iter().zip(&targets).enumerate() {
            if x.nrows() != h {
                return Err(Error::RaggedTasks {
                    task: t.to_string(),
                    rows: x.nrows(),
                    expected: h,
                });
            }
            if x.ncols() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    actual: x.ncols(),
                });
            }
            if y.len() != h {
                return Err(Error::LengthMismatch {
                    expected: h,
                    actual: y.len(),
                });
            }
            if let Some(pos) = x.iter().chain(y.iter()).position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    index: t * h + pos % h,
                    value: f64::NAN,
                });
            }
        }
        if protected.len() != k * h {
            return Err(Error::LengthMismatch {
                expected: k * h,
                actual: protected.len(),
            });
        }
        Ok(Self {
            k,
            h,
            features,
            targets,
            protected,
            protected_column: None,
            feature_names: (0..n).map(|i| format!("x{i}")).collect(),
            task_ids: (0..k).map(|t| t.to_string()).collect(),
            group_labels: ["A".into(), "B".into()],
        })
    }

    pub fn with_protected_column(mut self, column: usize) -> Self {
        assert!(column < self.n(), "protected column out of range");
        self.protected_column = Some(column);
        self
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Self {
        assert_eq!(names.len(), self.n());
        self.feature_names = names;
        self
    }

    pub fn with_task_ids(mut self, ids: Vec<String>) -> Self {
        assert_eq!(ids.len(), self.k);
        self.task_ids = ids;
        self
    }

    pub fn with_group_labels(mut self, a: impl Into<String>, b: impl Into<String>) -> Self {
        self.group_labels = [a.into(), b.into()];
        self
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn n(&self) -> usize {
        self.features[0].ncols()
    }

    pub fn len(&self) -> usize {
        self.k * self.h
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flat_index(&self, task: usize, row: usize) -> usize {
        task * self.h + row
    }

    pub fn features(&self) -> &[DMatrix<f64>] {
        &self.features
    }

    pub fn targets(&self) -> &[DVector<f64>] {
        &self.targets
    }

    pub fn protected(&self) -> &[Group] {
        &self.protected
    }

    pub fn protected_column(&self) -> Option<usize> {
        self.protected_column
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn task_ids(&self) -> &[String] {
        &self.task_ids
    }

    pub fn group_label(&self, g: Group) -> &str {
        match g {
            Group::A => &self.group_labels[0],
            Group::B => &self.group_labels[1],
        }
    }

    pub fn group_counts(&self) -> (usize, usize) {
        count_groups(&self.protected)
    }

    /// All targets, flat.
    pub fn targets_flat(&self) -> Vec<f64> {
        self.targets
            .iter()
            .flat_map(|y| y.iter().copied())
            .collect()
    }

    /// Flat predictions `X^j w^j` for a `k x n` weight matrix.
    pub fn predict(&self, w: &DMatrix<f64>) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for (j, x) in self.features.iter().enumerate() {
            let wj = w.row(j).transpose();
            out.extend((x * wj).iter().copied());
        }
        out
    }

    /// Keep the given flat indices. Each task must retain the same number of rows.
    pub fn subset(&self, indices: &[usize]) -> Result<TaskDataset> {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); self.k];
        for &i in indices {
            rows[i / self.h].push(i % self.h);
        }
        let h = rows[0].len();
        for (t, r) in rows.iter().enumerate() {
            if r.len() != h {
                return Err(Error::RaggedTasks {
                    task: self.task_ids[t].clone(),
                    rows: r.len(),
                    expected: h,
                });
            }
        }
        let features = rows
            .iter()
            .zip(&self.features)
            .map(|(r, x)| x.select_rows(r.iter()))
            .collect();
        let targets = rows
            .iter()
            .zip(&self.targets)
            .map(|(r, y)| DVector::from_iterator(r.len(), r.iter().map(|&i| y[i])))
            .collect();
        let protected = rows
            .iter()
            .enumerate()
            .flat_map(|(t, r)| r.iter().map(move |&i| self.protected[t * self.h + i]))
            .collect();
        let mut out = TaskDataset::new(features, targets, protected)?;
        out.protected_column = self.protected_column;
        out.feature_names = self.feature_names.clone();
        out.task_ids = self.task_ids.clone();
        out.group_labels = self.group_labels.clone();
        Ok(out)
    }

    /// Copy with the targets replaced (flat, task-major).
    pub fn with_targets(&self, flat: &[f64]) -> Result<TaskDataset> {
        if flat.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                actual: flat.len(),
            });
        }
        let mut out = self.clone();
        for (j, y) in out.targets.iter_mut().enumerate() {
            y.copy_from_slice(&flat[j * self.h..(j + 1) * self.h]);
        }
        Ok(out)
    }

    /// Write in the CSV layout read by [`load_csv`]. The protected indicator
    /// column, if any, is emitted as the `protected` label column.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let feature_cols: Vec<usize> = (0..self.n())
            .filter(|&c| Some(c) != self.protected_column)
            .collect();
        let mut header = vec!["task_id".to_string(), "protected".into(), "target".into()];
        header.extend(feature_cols.iter().map(|&c| self.feature_names[c].clone()));
        w.write_record(&header).map_err(csv_io)?;
        for j in 0..self.k {
            for r in 0..self.h {
                let mut rec = Vec::with_capacity(header.len());
                rec.push(self.task_ids[j].clone());
                rec.push(self.group_label(self.protected[j * self.h + r]).to_string());
                rec.push(self.targets[j][r].to_string());
                rec.extend(
                    feature_cols
                        .iter()
                        .map(|&c| self.features[j][(r, c)].to_string()),
                );
                w.write_record(&rec).map_err(csv_io)?;
            }
        }
        w.flush().map_err(|e| Error::Io {
            path: "<csv writer>".into(),
            source: e,
        })
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io {
        path: "<csv writer>".into(),
        source: std::io::Error::other(e),
    }
}

/// Column mapping for [`load_csv`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub task_column: String,
    pub protected_column: String,
    pub target_column: String,
    /// Raw value mapped to partition A. Defaults to the lexicographically
    /// smaller of the two values.
    pub a_label: Option<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            task_column: "task_id".into(),
            protected_column: "protected".into(),
            target_column: "target".into(),
            a_label: None,
        }
    }
}

/// Read a dataset CSV. Tasks are ordered by first appearance and rows keep
/// file order within a task. The protected attribute becomes feature column
/// 0 (1 for A, 0 for B), followed by the remaining columns in file order.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<TaskDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let parse_err = |row: usize, column: &str, reason: String| Error::Parse {
        path: path.to_owned(),
        row,
        column: column.to_string(),
        reason,
    };
    let header = reader
        .headers()
        .map_err(|e| parse_err(0, "<header>", e.to_string()))?
        .clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| parse_err(0, name, "column not found in header".into()))
    };
    let task_col = find(&schema.task_column)?;
    let prot_col = find(&schema.protected_column)?;
    let target_col = find(&schema.target_column)?;
    let feature_cols: Vec<usize> = (0..header.len())
        .filter(|c| ![task_col, prot_col, target_col].contains(c))
        .collect();

    let mut task_order: Vec<String> = Vec::new();
    let mut task_pos: HashMap<String, usize> = HashMap::new();
    // Per task: (protected raw value, target, features).
    let mut rows: Vec<Vec<(String, f64, Vec<f64>)>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| parse_err(row, "<record>", e.to_string()))?;
        let cell = |c: usize| rec.get(c).unwrap_or("").trim();
        let number = |c: usize| -> Result<f64> {
            let s = cell(c);
            let v: f64 = s.parse().map_err(|_| {
                parse_err(row, &header[c], format!("cannot parse `{s}` as a number"))
            })?;
            if !v.is_finite() {
                return Err(parse_err(
                    row,
                    &header[c],
                    format!("non-finite value `{s}`"),
                ));
            }
            Ok(v)
        };
        let task = cell(task_col).to_string();
        let t = *task_pos.entry(task.clone()).or_insert_with(|| {
            task_order.push(task);
            rows.push(Vec::new());
            rows.len() - 1
        });
        let target = number(target_col)?;
        let feats = feature_cols
            .iter()
            .map(|&c| number(c))
            .collect::<Result<Vec<_>>>()?;
        rows[t].push((cell(prot_col).to_string(), target, feats));
    }
    if rows.is_empty() {
        return Err(parse_err(0, "<file>", "no data rows".into()));
    }

    let mut distinct: Vec<&str> = rows.iter().flatten().map(|r| r.0.as_str()).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() > 2 {
        return Err(Error::ProtectedNotBinary {
            count: distinct.len(),
            values: distinct.join(", "),
        });
    }
    let a_label = match &schema.a_label {
        Some(a) => {
            if !distinct.contains(&a.as_str()) {
                return Err(parse_err(
                    0,
                    &schema.protected_column,
                    format!("partition-A label `{a}` does not occur"),
                ));
            }
            a.clone()
        }
        None => distinct[0].to_string(),
    };
    let b_label = distinct
        .iter()
        .find(|&&v| v != a_label)
        .map(|v| v.to_string())
        .unwrap_or_default();

    let h = rows[0].len();
    for (t, r) in rows.iter().enumerate() {
        if r.len() != h {
            return Err(Error::RaggedTasks {
                task: task_order[t].clone(),
                rows: r.len(),
                expected: h,
            });
        }
    }
    let n = feature_cols.len() + 1;
    let mut features = Vec::with_capacity(rows.len());
    let mut targets = Vec::with_capacity(rows.len());
    let mut protected = Vec::with_capacity(rows.len() * h);
    for task_rows in &rows {
        let mut x = DMatrix::zeros(h, n);
        let mut y = DVector::zeros(h);
        for (r, (z, target, feats)) in task_rows.iter().enumerate() {
            let g = if *z == a_label { Group::A } else { Group::B };
            protected.push(g);
            x[(r, 0)] = g.indicator();
            for (c, v) in feats.iter().enumerate() {
                x[(r, c + 1)] = *v;
            }
            y[r] = *target;
        }
        features.push(x);
        targets.push(y);
    }
    let mut names = vec![schema.protected_column.clone()];
    names.extend(feature_cols.iter().map(|&c| header[c].trim().to_string()));
    Ok(TaskDataset::new(features, targets, protected)?
        .with_protected_column(0)
        .with_feature_names(names)
        .with_task_ids(task_order)
        .with_group_labels(a_label, b_label))
}

/// Per-column affine maps to zero mean and unit (population) variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub feature_mean: Vec<f64>,
    pub feature_sd: Vec<f64>,
    /// Columns with zero spread; they are mapped to 0.
    pub feature_constant: Vec<bool>,
    /// Columns left untouched (the protected indicator).
    pub feature_skipped: Vec<bool>,
    pub target_mean: f64,
    pub target_sd: f64,
    pub target_constant: bool,
}

impl StandardizationParams {
    pub fn standardize_target(&self, y: f64) -> f64 {
        if self.target_constant {
            0.0
        } else {
            (y - self.target_mean) / self.target_sd
        }
    }

    pub fn invert_target(&self, z: f64) -> f64 {
        if self.target_constant {
            self.target_mean
        } else {
            z * self.target_sd + self.target_mean
        }
    }

    pub fn invert_targets(&self, z: &[f64]) -> Vec<f64> {
        z.iter().map(|&v| self.invert_target(v)).collect()
    }

    /// Apply these parameters to another dataset with the same columns, e.g.
    /// a validation fold standardized with training statistics.
    pub fn apply(&self, data: &TaskDataset) -> TaskDataset {
        let mut out = data.clone();
        for x in out.features.iter_mut() {
            for c in 0..x.ncols() {
                if self.feature_skipped[c] {
                    continue;
                }
                let (m, s, constant) = (
                    self.feature_mean[c],
                    self.feature_sd[c],
                    self.feature_constant[c],
                );
                x.column_mut(c)
                    .apply(|v| *v = if constant { 0.0 } else { (*v - m) / s });
            }
        }
        for y in out.targets.iter_mut() {
            y.apply(|v| *v = self.standardize_target(*v));
        }
        out
    }

    /// Undo [`apply`](Self::apply). Constant columns come back as their mean.
    pub fn invert(&self, data: &TaskDataset) -> TaskDataset {
        let mut out = data.clone();
        for x in out.features.iter_mut() {
            for c in 0..x.ncols() {
                if self.feature_skipped[c] {
                    continue;
                }
                let (m, s, constant) = (
                    self.feature_mean[c],
                    self.feature_sd[c],
                    self.feature_constant[c],
                );
                x.column_mut(c)
                    .apply(|v| *v = if constant { m } else { *v * s + m });
            }
        }
        for y in out.targets.iter_mut() {
            y.apply(|v| *v = self.invert_target(*v));
        }
        out
    }
}

fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64, bool) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    let constant = sd <= 1e-12 * mean.abs().max(1.0);
    (mean, sd, constant)
}

/// Standardize every feature column (pooled over tasks) and the targets.
/// The protected indicator column is left as 0/1.
pub fn standardize(data: &TaskDataset) -> (TaskDataset, StandardizationParams) {
    let n = data.n();
    let mut params = StandardizationParams {
        feature_mean: vec![0.0; n],
        feature_sd: vec![1.0; n],
        feature_constant: vec![false; n],
        feature_skipped: vec![false; n],
        target_mean: 0.0,
        target_sd: 1.0,
        target_constant: false,
    };
    for c in 0..n {
        if Some(c) == data.protected_column {
            params.feature_skipped[c] = true;
            continue;
        }
        let col = data
            .features
            .iter()
            .flat_map(move |x| x.column(c).iter().copied().collect::<Vec<_>>());
        let (m, s, constant) = mean_sd(col);
        params.feature_mean[c] = m;
        params.feature_sd[c] = s;
        params.feature_constant[c] = constant;
    }
    let (m, s, constant) = mean_sd(data.targets.iter().flat_map(|y| y.iter().copied()));
    params.target_mean = m;
    params.target_sd = s;
    params.target_constant = constant;
    (params.apply(data), params)
}

/// Parameters of the synthetic biased-target generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Target AUC of partition A over partition B, in (0.5, 1).
    pub alpha: f64,
    pub k: usize,
    pub h: usize,
    /// Feature count including the protected indicator.
    pub n: usize,
    /// Difference of the two Gaussian means. `None` calibrates it from `alpha`.
    pub mean_gap: Option<f64>,
    pub sd: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(alpha: f64, seed: u64) -> Self {
        Self {
            alpha,
            k: 40,
            h: 25,
            n: 5,
            mean_gap: None,
            sd: 1.0,
            seed,
        }
    }

    /// Mean gap giving `P(y_A > y_B) = alpha` for two normals with common
    /// standard deviation: `alpha = Phi(gap / (sd * sqrt 2))`.
    pub fn calibrated_gap(&self) -> f64 {
        let std_normal = StatNormal::standard();
        self.sd * std::f64::consts::SQRT_2 * std_normal.inverse_cdf(self.alpha)
    }
}

/// Draw a dataset whose targets depend on the protected label.
///
/// Labels are A or B with probability 1/2 each. Targets come from
/// `N(+gap/2, sd)` for A and `N(-gap/2, sd)` for B. Each explanatory feature
/// is a per-task loading times the within-group standardized target plus unit
/// noise, so the features carry signal about the target but not about the
/// label.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<TaskDataset> {
    if !(spec.alpha > 0.5 && spec.alpha < 1.0) {
        return Err(Error::InvalidParameter {
            name: "alpha",
            reason: format!("must lie in (0.5, 1), got {}", spec.alpha),
        });
    }
    if spec.k == 0 || spec.h == 0 || spec.n == 0 {
        return Err(Error::InvalidParameter {
            name: "shape",
            reason: "k, h and n must be positive".into(),
        });
    }
    if !(spec.sd > 0.0 && spec.sd.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "sd",
            reason: format!("must be positive, got {}", spec.sd),
        });
    }
    let gap = spec.mean_gap.unwrap_or_else(|| spec.calibrated_gap());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let explanatory = spec.n - 1;

    let mut features = Vec::with_capacity(spec.k);
    let mut targets = Vec::with_capacity(spec.k);
    let mut protected = Vec::with_capacity(spec.k * spec.h);
    for _ in 0..spec.k {
        let loadings: Vec<f64> = (0..explanatory)
            .map(|_| {
                let magnitude = rng.random_range(0.5..1.5);
                if rng.random_bool(0.5) {
                    magnitude
                } else {
                    -magnitude
                }
            })
            .collect();
        let mut x = DMatrix::zeros(spec.h, spec.n);
        let mut y = DVector::zeros(spec.h);
        for r in 0..spec.h {
            let g = if rng.random_bool(0.5) {
                Group::A
            } else {
                Group::B
            };
            let mean = match g {
                Group::A => gap / 2.0,
                Group::B => -gap / 2.0,
            };
            let noise = unit.sample(&mut rng);
            y[r] = mean + spec.sd * noise;
            x[(r, 0)] = g.indicator();
            for (f, l) in loadings.iter().enumerate() {
                x[(r, f + 1)] = l * noise + unit.sample(&mut rng);
            }
            protected.push(g);
        }
        features.push(x);
        targets.push(y);
    }
    let mut names = vec!["protected".to_string()];
    names.extend((1..spec.n).map(|f| format!("x{f}")));
    Ok(TaskDataset::new(features, targets, protected)?
        .with_protected_column(0)
        .with_feature_names(names)
        .with_group_labels("A", "B"))
}

/// One cross-validation split, as flat instance indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Split each task's rows into `folds` parts (sizes differ by at most one,
/// larger parts first) so every fold keeps all tasks.
pub fn split_folds(data: &TaskDataset, folds: usize, seed: u64) -> Result<Vec<Fold>> {
    if folds < 2 || folds > data.h() {
        return Err(Error::InvalidParameter {
            name: "folds",
            reason: format!("must lie in [2, h = {}], got {folds}", data.h()),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; data.len()];
    for t in 0..data.k() {
        let mut perm: Vec<usize> = (0..data.h()).collect();
        perm.shuffle(&mut rng);
        for (pos, &row) in perm.iter().enumerate() {
            assignment[data.flat_index(t, row)] = pos % folds;
        }
    }
    (0..folds)
        .map(|f| {
            let (validation, train): (Vec<usize>, Vec<usize>) =
                (0..data.len()).partition(|&i| assignment[i] == f);
            let (n_a, n_b) = count_groups(
                &train
                    .iter()
                    .map(|&i| data.protected()[i])
                    .collect::<Vec<_>>(),
            );
            if n_a == 0 {
                return Err(Error::FoldMissingPartition {
                    fold: f,
                    partition: "A",
                });
            }
            if n_b == 0 {
                return Err(Error::FoldMissingPartition {
                    fold: f,
                    partition: "B",
                });
            }
            Ok(Fold { train, validation })
        })
        .collect()
}
