//! Subsampled forests, per-tree prediction matrices and forest MSE.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{argument, Result};
use crate::rng::Seed;
use crate::tree::{draw_subsample, fit_tree, RegressionTree, TreeConfig};

/// Threshold below which the pairwise-disjointness log term is flagged.
pub const LEMMA1_WARN_BELOW: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsampleSize {
    /// `k = round(n^exponent)`.
    Exponent(f64),
    Fixed(usize),
}

impl SubsampleSize {
    pub fn resolve(&self, n: usize) -> Result<usize> {
        let k = match *self {
            SubsampleSize::Exponent(e) => {
                if !(e > 0.0 && e < 1.0) {
                    return Err(argument(format!("subsample exponent {e} not in (0,1)")));
                }
                // f64::round is half-away-from-zero
                (n as f64).powf(e).round() as usize
            }
            SubsampleSize::Fixed(k) => k,
        };
        if k < 1 || k >= n {
            return Err(argument(format!("subsample size {k} outside [1, {}]", n.saturating_sub(1))));
        }
        Ok(k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub subsample: SubsampleSize,
    pub tree: TreeConfig,
    pub master_seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 125,
            subsample: SubsampleSize::Exponent(0.6),
            tree: TreeConfig::default(),
            master_seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        ForestConfig {
            master_seed: seed,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    trees: Vec<RegressionTree>,
    config: ForestConfig,
    subsample_size: usize,
}

impl Forest {
    /// Assemble a forest from already fitted trees.
    pub fn from_trees(trees: Vec<RegressionTree>, config: ForestConfig) -> Result<Self> {
        if trees.is_empty() {
            return Err(argument("a forest needs at least one tree"));
        }
        let p = trees[0].n_features();
        if trees.iter().any(|t| t.n_features() != p) {
            return Err(argument("trees disagree on the number of features"));
        }
        let subsample_size = trees[0].trained_on_rows().len();
        Ok(Forest {
            trees,
            config,
            subsample_size,
        })
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn subsample_size(&self) -> usize {
        self.subsample_size
    }

    pub fn n_features(&self) -> usize {
        self.trees[0].n_features()
    }

    /// Average of the tree predictions at `x`.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let mut s = 0.0;
        for t in &self.trees {
            s += t.predict(x)?;
        }
        Ok(s / self.trees.len() as f64)
    }
}

/// Fit `n_trees` trees, tree `i` on its own subsample drawn from the stream
/// `Seed(master_seed).child(i)`. Output does not depend on thread count.
pub fn fit_forest(d: &Dataset, cfg: &ForestConfig) -> Result<Forest> {
    if cfg.n_trees == 0 {
        return Err(argument("n_trees must be positive"));
    }
    let k = cfg.subsample.resolve(d.n())?;
    cfg.tree.validate(d.p())?;
    let root = Seed(cfg.master_seed);
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = root.child(i as u64).rng();
            let rows = draw_subsample(d.n(), k, &mut rng)?;
            fit_tree(d, &rows, &cfg.tree, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Forest {
        trees,
        config: cfg.clone(),
        subsample_size: k,
    })
}

/// `B × N_t` matrix of tree predictions at a fixed test set, with the test responses.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix {
    n_rows: usize,
    n_test: usize,
    values: Vec<f64>,
    test_y: Vec<f64>,
}

impl PredictionMatrix {
    pub fn new(rows: Vec<Vec<f64>>, test_y: Vec<f64>) -> Result<Self> {
        let n_test = test_y.len();
        if rows.is_empty() || n_test == 0 {
            return Err(argument("prediction matrix needs at least one row and one test point"));
        }
        if rows.iter().any(|r| r.len() != n_test) {
            return Err(argument("prediction rows must have one entry per test point"));
        }
        let n_rows = rows.len();
        let values: Vec<f64> = rows.into_iter().flatten().collect();
        if values.iter().chain(test_y.iter()).any(|v| !v.is_finite()) {
            return Err(argument("prediction matrix entries must be finite"));
        }
        Ok(PredictionMatrix {
            n_rows,
            n_test,
            values,
            test_y,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_test(&self) -> usize {
        self.n_test
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_test..(i + 1) * self.n_test]
    }

    pub fn test_y(&self) -> &[f64] {
        &self.test_y
    }

    /// Column means, i.e. the forest prediction at each test point.
    pub fn forest_predictions(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.n_test];
        for i in 0..self.n_rows {
            for (a, v) in acc.iter_mut().zip(self.row(i)) {
                *a += v;
            }
        }
        let b = self.n_rows as f64;
        acc.iter_mut().for_each(|a| *a /= b);
        acc
    }

    /// Stack the rows of `self` on top of the rows of `other`.
    pub fn stack(&self, other: &PredictionMatrix) -> Result<PredictionMatrix> {
        if self.n_test != other.n_test || self.test_y != other.test_y {
            return Err(argument("stacked matrices must share the test set"));
        }
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        Ok(PredictionMatrix {
            n_rows: self.n_rows + other.n_rows,
            n_test: self.n_test,
            values,
            test_y: self.test_y.clone(),
        })
    }

    /// Matrix with rows reordered as `order`.
    pub fn reorder_rows(&self, order: &[usize]) -> Result<PredictionMatrix> {
        let rows = order
            .iter()
            .map(|&i| {
                if i >= self.n_rows {
                    Err(argument(format!("row {i} out of range")))
                } else {
                    Ok(self.row(i).to_vec())
                }
            })
            .collect::<Result<Vec<_>>>()?;
        PredictionMatrix::new(rows, self.test_y.clone())
    }

    /// CSV with header `row,t0..t{N-1}`: one line per tree (`tree_i`), then a
    /// final `y` line holding the test responses.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["row".to_string()];
        header.extend((0..self.n_test).map(|j| format!("t{j}")));
        w.write_record(&header)?;
        for i in 0..self.n_rows {
            let mut rec = vec![format!("tree_{i}")];
            rec.extend(self.row(i).iter().map(|v| format!("{v}")));
            w.write_record(&rec)?;
        }
        let mut rec = vec!["y".to_string()];
        rec.extend(self.test_y.iter().map(|v| format!("{v}")));
        w.write_record(&rec)?;
        w.flush()?;
        Ok(())
    }
}

/// Predictions of every tree of `f` at every row of `test`.
pub fn predict_matrix(f: &Forest, test: &Dataset) -> Result<PredictionMatrix> {
    if test.p() != f.n_features() {
        return Err(argument(format!(
            "test set has {} features, forest expects {}",
            test.p(),
            f.n_features()
        )));
    }
    let points = test.rows();
    let rows: Vec<Vec<f64>> = f
        .trees
        .par_iter()
        .map(|t| points.iter().map(|x| t.predict_unchecked(x)).collect())
        .collect();
    PredictionMatrix::new(rows, test.y().to_vec())
}

/// Test-set MSE of the forest formed by the selected rows (all rows when `rows` is `None`).
pub fn forest_mse(pm: &PredictionMatrix, rows: Option<&[usize]>) -> Result<f64> {
    let mut acc = vec![0.0; pm.n_test];
    let count = match rows {
        None => {
            for i in 0..pm.n_rows {
                add_row(&mut acc, pm.row(i));
            }
            pm.n_rows
        }
        Some(sel) => {
            if sel.is_empty() {
                return Err(argument("row subset must not be empty"));
            }
            for &i in sel {
                if i >= pm.n_rows {
                    return Err(argument(format!("row {i} out of range for {} rows", pm.n_rows)));
                }
                add_row(&mut acc, pm.row(i));
            }
            sel.len()
        }
    };
    Ok(mse_from_sums(&acc, count, &pm.test_y))
}

#[inline]
fn add_row(acc: &mut [f64], row: &[f64]) {
    for (a, v) in acc.iter_mut().zip(row) {
        *a += v;
    }
}

#[inline]
pub(crate) fn mse_from_sums(sums: &[f64], count: usize, y: &[f64]) -> f64 {
    let b = count as f64;
    sums.iter()
        .zip(y)
        .map(|(s, yy)| {
            let e = s / b - yy;
            e * e
        })
        .sum::<f64>()
        / y.len() as f64
}

/// How far a collection of subsampled trees is from pairwise disjointness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsampleDiagnostics {
    pub n: usize,
    pub k: usize,
    pub n_trees: usize,
    /// Probability two independent size-`k` subsamples of `n` rows are disjoint.
    pub pair_disjoint_prob: f64,
    /// `C(B,2) · ln(pair_disjoint_prob)`; `-inf` (JSON `null`) when disjointness is impossible.
    #[serde(with = "neg_inf_as_null")]
    pub lemma1_log_term: f64,
    pub warning: bool,
}

mod neg_inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *x == f64::NEG_INFINITY {
            s.serialize_none()
        } else {
            s.serialize_some(x)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

/// Exact `C(n−k,k)/C(n,k)` via log-gamma, and the pairwise log term for `b` trees.
pub fn subsample_diagnostics(n: usize, k: usize, b: usize) -> SubsampleDiagnostics {
    let log_p = if 2 * k > n {
        f64::NEG_INFINITY
    } else {
        let lg = |x: usize| libm::lgamma(x as f64 + 1.0);
        // ln C(n-k,k) - ln C(n,k)
        2.0 * lg(n - k) - lg(n - 2 * k) - lg(n)
    };
    let pairs = (b as f64) * (b.saturating_sub(1) as f64) / 2.0;
    let term = if pairs == 0.0 { 0.0 } else { pairs * log_p };
    SubsampleDiagnostics {
        n,
        k,
        n_trees: b,
        pair_disjoint_prob: log_p.exp(),
        lemma1_log_term: term,
        warning: term < LEMMA1_WARN_BELOW,
    }
}
