//! Datasets: typed feature columns plus a real-valued response.
//!
//! Columns are stored column-major; categorical columns hold level indices
//! `0..L` as `f64` together with the level labels they were decoded from.
//! Everything that turns a training set `D` into its muted copy `D^π` lives
//! here as well.

use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{argument, Error, Result};
use crate::rng::Seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    Categorical { levels: usize },
}

impl FeatureKind {
    pub fn level_count(&self) -> Option<usize> {
        match *self {
            FeatureKind::Numeric => None,
            FeatureKind::Categorical { levels } => Some(levels),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    name: String,
    kind: FeatureKind,
    levels: Vec<String>,
    values: Vec<f64>,
}

impl Column {
    pub fn numeric(name: impl Into<String>, values: Vec<f64>) -> Self {
        Column {
            name: name.into(),
            kind: FeatureKind::Numeric,
            levels: Vec::new(),
            values,
        }
    }

    /// A categorical column whose `values` are indices into `levels`.
    pub fn categorical(name: impl Into<String>, levels: Vec<String>, values: Vec<f64>) -> Self {
        Column {
            name: name.into(),
            kind: FeatureKind::Categorical {
                levels: levels.len(),
            },
            levels,
            values,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn levels(&self) -> &[String] {
        &self.levels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.values.len() != n {
            return Err(Error::Schema(format!(
                "column `{}` has {} values, expected {}",
                self.name,
                self.values.len(),
                n
            )));
        }
        if let FeatureKind::Categorical { levels } = self.kind {
            if levels < 2 {
                return Err(Error::Schema(format!(
                    "categorical column `{}` needs at least 2 levels, has {}",
                    self.name, levels
                )));
            }
        }
        for (row, &v) in self.values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Validation {
                    row: row + 1,
                    column: self.name.clone(),
                    message: format!("non-finite value {v}"),
                });
            }
            if let FeatureKind::Categorical { levels } = self.kind {
                if v.fract() != 0.0 || v < 0.0 || v >= levels as f64 {
                    return Err(Error::Validation {
                        row: row + 1,
                        column: self.name.clone(),
                        message: format!("level {v} outside 0..{levels}"),
                    });
                }
            }
        }
        Ok(())
    }
}

/// An immutable, validated design matrix with its response.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<Column>,
    response_name: String,
    y: Vec<f64>,
}

impl Dataset {
    pub fn new(columns: Vec<Column>, response_name: impl Into<String>, y: Vec<f64>) -> Result<Self> {
        let response_name = response_name.into();
        let n = y.len();
        if n < 2 {
            return Err(argument(format!("dataset needs at least 2 rows, got {n}")));
        }
        if columns.is_empty() {
            return Err(argument("dataset needs at least one feature column"));
        }
        let mut seen = BTreeSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column name `{}`", c.name)));
            }
            c.validate(n)?;
        }
        for (row, &v) in y.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Validation {
                    row: row + 1,
                    column: response_name.clone(),
                    message: format!("non-finite response {v}"),
                });
            }
        }
        Ok(Dataset {
            columns,
            response_name,
            y,
        })
    }

    /// All-numeric dataset with features named `x1..xp` and response `y`.
    pub fn from_numeric_columns(columns: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        let cols = columns
            .into_iter()
            .enumerate()
            .map(|(j, v)| Column::numeric(format!("x{}", j + 1), v))
            .collect();
        Dataset::new(cols, "y", y)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.columns.len()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn response_name(&self) -> &str {
        &self.response_name
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j].values
    }

    pub fn kind(&self, j: usize) -> FeatureKind {
        self.columns[j].kind
    }

    pub fn kinds(&self) -> Vec<FeatureKind> {
        self.columns.iter().map(|c| c.kind).collect()
    }

    pub fn names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn value(&self, row: usize, j: usize) -> f64 {
        self.columns[j].values[row]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c.values[i]).collect()
    }

    /// Row-major copy of the design matrix.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n()).map(|i| self.row(i)).collect()
    }

    /// Sub-dataset holding `rows` in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Dataset> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.n()) {
            return Err(argument(format!("row index {bad} out of range for n={}", self.n())));
        }
        let columns = self
            .columns
            .iter()
            .map(|c| Column {
                values: rows.iter().map(|&r| c.values[r]).collect(),
                ..c.clone()
            })
            .collect();
        Dataset::new(
            columns,
            self.response_name.clone(),
            rows.iter().map(|&r| self.y[r]).collect(),
        )
    }

    /// True when `other` has the same feature layout (count and kinds).
    pub fn same_layout(&self, other: &Dataset) -> bool {
        self.p() == other.p() && self.kinds() == other.kinds()
    }

    fn without_columns(&self, drop: &FeatureSubset) -> Result<Dataset> {
        let columns: Vec<Column> = self
            .columns
            .iter()
            .enumerate()
            .filter(|(j, _)| !drop.contains(*j))
            .map(|(_, c)| c.clone())
            .collect();
        Dataset::new(columns, self.response_name.clone(), self.y.clone())
    }
}

/// A non-empty set of feature indices, kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureSubset(Vec<usize>);

impl FeatureSubset {
    pub fn new(mut indices: Vec<usize>, p: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(argument("feature subset must not be empty"));
        }
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(argument("feature subset contains duplicate indices"));
        }
        if let Some(&bad) = indices.iter().find(|&&j| j >= p) {
            return Err(argument(format!("feature index {bad} out of range for p={p}")));
        }
        Ok(FeatureSubset(indices))
    }

    pub fn single(j: usize, p: usize) -> Result<Self> {
        Self::new(vec![j], p)
    }

    pub fn all(p: usize) -> Result<Self> {
        Self::new((0..p).collect(), p)
    }

    /// Resolve feature names against `d`.
    pub fn from_names<S: AsRef<str>>(d: &Dataset, names: &[S]) -> Result<Self> {
        let idx = names
            .iter()
            .map(|n| {
                d.feature_index(n.as_ref())
                    .ok_or_else(|| Error::Schema(format!("unknown feature `{}`", n.as_ref())))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(idx, d.p())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.0.binary_search(&j).is_ok()
    }

    pub fn check(&self, p: usize) -> Result<()> {
        match self.0.last() {
            Some(&m) if m < p => Ok(()),
            _ => Err(argument(format!("feature subset {:?} invalid for p={p}", self.0))),
        }
    }

    /// `name1+name2` label used in reports.
    pub fn label(&self, d: &Dataset) -> String {
        self.0
            .iter()
            .map(|&j| d.columns[j].name.as_str())
            .collect::<Vec<_>>()
            .join("+")
    }
}

/// Pre-generated knockoff copies. Either one column per muted feature, or a
/// full `n × p` knockoff matrix from which the muted columns are taken.
#[derive(Debug, Clone, PartialEq)]
pub struct KnockoffColumns {
    columns: Vec<Vec<f64>>,
}

impl KnockoffColumns {
    pub fn new(columns: Vec<Vec<f64>>) -> Self {
        KnockoffColumns { columns }
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }
}

/// How the features under test are made independent of the response.
#[derive(Debug, Clone, PartialEq)]
pub enum MutingStrategy {
    /// Drop the columns.
    Exclude,
    /// Apply one shared row permutation to all muted columns.
    PermuteRows { seed: u64 },
    /// Substitute externally generated knockoffs.
    Knockoff(KnockoffColumns),
}

impl MutingStrategy {
    pub fn label(&self) -> &'static str {
        match self {
            MutingStrategy::Exclude => "exclude",
            MutingStrategy::PermuteRows { .. } => "permute",
            MutingStrategy::Knockoff(_) => "knockoff",
        }
    }
}

/// Build `D^π` from `d` by muting the columns in `s`. The response is never touched.
pub fn mute_features(d: &Dataset, s: &FeatureSubset, strategy: &MutingStrategy) -> Result<Dataset> {
    s.check(d.p())?;
    match strategy {
        MutingStrategy::Exclude => {
            if s.len() == d.p() {
                return Err(argument("cannot exclude every feature column"));
            }
            d.without_columns(s)
        }
        MutingStrategy::PermuteRows { seed } => {
            let mut perm: Vec<usize> = (0..d.n()).collect();
            perm.shuffle(&mut Seed(*seed).rng());
            permute_columns(d, s, &perm)
        }
        MutingStrategy::Knockoff(k) => substitute_knockoffs(d, s, k),
    }
}

/// Replace every column `j ∈ s` by `x_j[perm[i]]` at row `i`.
pub fn permute_columns(d: &Dataset, s: &FeatureSubset, perm: &[usize]) -> Result<Dataset> {
    s.check(d.p())?;
    let n = d.n();
    if perm.len() != n {
        return Err(argument(format!("permutation has length {}, expected {n}", perm.len())));
    }
    let mut hit = vec![false; n];
    for &i in perm {
        if i >= n || std::mem::replace(&mut hit[i], true) {
            return Err(argument("not a permutation of the rows"));
        }
    }
    let mut out = d.clone();
    for &j in s.indices() {
        let src = &d.columns[j].values;
        out.columns[j].values = perm.iter().map(|&i| src[i]).collect();
    }
    Ok(out)
}

fn substitute_knockoffs(d: &Dataset, s: &FeatureSubset, k: &KnockoffColumns) -> Result<Dataset> {
    let chosen: Vec<&Vec<f64>> = if k.columns.len() == s.len() {
        k.columns.iter().collect()
    } else if k.columns.len() == d.p() {
        s.indices().iter().map(|&j| &k.columns[j]).collect()
    } else {
        return Err(argument(format!(
            "knockoff matrix has {} columns, expected {} or {}",
            k.columns.len(),
            s.len(),
            d.p()
        )));
    };
    let mut out = d.clone();
    for (&j, col) in s.indices().iter().zip(chosen) {
        if col.len() != d.n() {
            return Err(argument(format!(
                "knockoff column for `{}` has {} rows, expected {}",
                d.columns[j].name,
                col.len(),
                d.n()
            )));
        }
        out.columns[j].values = col.clone();
        out.columns[j].validate(d.n()).map_err(|e| argument(format!("knockoff column mismatch: {e}")))?;
    }
    Ok(out)
}

/// Uniformly random disjoint split into `(train, test)` row indices, both sorted.
pub fn split_indices(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(argument(format!("test fraction {test_fraction} not in (0,1)")));
    }
    let n_test = (test_fraction * n as f64).floor() as usize;
    if n_test < 1 || n.saturating_sub(n_test) < 2 {
        return Err(argument(format!(
            "test fraction {test_fraction} with n={n} leaves {n_test} test rows and {} training rows",
            n.saturating_sub(n_test)
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut Seed(seed).rng());
    let mut test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

pub fn split_train_test(d: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(d.n(), test_fraction, seed)?;
    Ok((d.select_rows(&train)?, d.select_rows(&test)?))
}

/// Read a CSV with a header row. Columns that parse as numbers are numeric,
/// anything else is categorical with levels numbered by first appearance.
/// `overrides` forces a kind per column name.
pub fn load_csv(
    path: impl AsRef<Path>,
    overrides: &HashMap<String, FeatureKind>,
    response: &str,
) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_csv(file, overrides, response)
}

pub fn read_csv<R: Read>(
    reader: R,
    overrides: &HashMap<String, FeatureKind>,
    response: &str,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let resp_idx = header
        .iter()
        .position(|h| h == response)
        .ok_or_else(|| Error::Schema(format!("response column `{response}` not found")))?;
    for name in overrides.keys() {
        if !header.contains(name) {
            return Err(Error::Schema(format!("override for unknown column `{name}`")));
        }
    }

    let mut cells: Vec<Vec<String>> = vec![Vec::new(); header.len()];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::Schema(format!(
                "row {} has {} fields, header has {}",
                row + 1,
                rec.len(),
                header.len()
            )));
        }
        for (j, cell) in rec.iter().enumerate() {
            cells[j].push(cell.trim().to_string());
        }
    }

    let y = parse_numeric(&header[resp_idx], &cells[resp_idx])?;
    let mut columns = Vec::with_capacity(header.len() - 1);
    for (j, name) in header.iter().enumerate() {
        if j == resp_idx {
            continue;
        }
        let col = &cells[j];
        let column = match overrides.get(name) {
            Some(FeatureKind::Numeric) => Column::numeric(name, parse_numeric(name, col)?),
            Some(FeatureKind::Categorical { levels }) => encode_levels(name, col, Some(*levels))?,
            None => match parse_numeric(name, col) {
                Ok(v) => Column::numeric(name, v),
                Err(Error::Parse { .. }) => encode_levels(name, col, None)?,
                Err(e) => return Err(e),
            },
        };
        columns.push(column);
    }
    Dataset::new(columns, header[resp_idx].clone(), y)
}

fn parse_numeric(name: &str, cells: &[String]) -> Result<Vec<f64>> {
    cells
        .iter()
        .enumerate()
        .map(|(row, cell)| {
            if cell.is_empty() {
                return Err(Error::Validation {
                    row: row + 1,
                    column: name.to_string(),
                    message: "missing value".into(),
                });
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row: row + 1,
                column: name.to_string(),
                message: format!("`{cell}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Validation {
                    row: row + 1,
                    column: name.to_string(),
                    message: format!("non-finite value `{cell}`"),
                });
            }
            Ok(v)
        })
        .collect()
}

fn encode_levels(name: &str, cells: &[String], declared: Option<usize>) -> Result<Column> {
    let mut levels: Vec<String> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut values = Vec::with_capacity(cells.len());
    for (row, cell) in cells.iter().enumerate() {
        if cell.is_empty() {
            return Err(Error::Validation {
                row: row + 1,
                column: name.to_string(),
                message: "missing value".into(),
            });
        }
        let next = levels.len();
        let code = *index.entry(cell.as_str()).or_insert_with(|| {
            levels.push(cell.clone());
            next
        });
        values.push(code as f64);
    }
    if let Some(declared) = declared {
        if levels.len() > declared {
            return Err(Error::Validation {
                row: 0,
                column: name.to_string(),
                message: format!("{} distinct levels, declared {declared}", levels.len()),
            });
        }
        // Declared-but-unseen levels get placeholder labels.
        while levels.len() < declared {
            levels.push(format!("__unseen_{}", levels.len()));
        }
    }
    if levels.len() < 2 {
        return Err(Error::Schema(format!(
            "categorical column `{name}` has a single level"
        )));
    }
    Ok(Column::categorical(name, levels, values))
}

/// Write `d` as CSV (features first, response last). Categorical cells are
/// written as their level labels.
pub fn write_csv<W: Write>(d: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = d.names();
    header.push(d.response_name());
    w.write_record(&header)?;
    let mut record: Vec<String> = Vec::with_capacity(header.len());
    for i in 0..d.n() {
        record.clear();
        for c in &d.columns {
            let v = c.values[i];
            record.push(match c.kind {
                FeatureKind::Numeric => format!("{v}"),
                FeatureKind::Categorical { .. } => c.levels[v as usize].clone(),
            });
        }
        record.push(format!("{}", d.y[i]));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(d, std::io::BufWriter::new(file))
}
