//! The tree-permutation test.
//!
//! Two forests of `B` trees are grown, one on the training data and one on a
//! copy whose features under test have been muted. Their prediction matrices
//! at a fixed test set are pooled, and the null distribution of the MSE
//! difference is built by repeatedly reassigning `B` of the `2B` pooled trees
//! to a pseudo-original forest and the rest to a pseudo-muted forest. No tree
//! is refit inside the permutation loop and no variance is ever estimated.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{mute_features, Dataset, FeatureSubset, MutingStrategy};
use crate::error::{argument, Result};
use crate::forest::{
    fit_forest, forest_mse, predict_matrix, subsample_diagnostics, ForestConfig, PredictionMatrix,
    SubsampleDiagnostics,
};
use crate::rng::Seed;

/// One-sided alternative: the muted forest predicts worse.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    #[default]
    MutedMseGreater,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermTestConfig {
    pub n_perm: usize,
    pub seed: u64,
    #[serde(default)]
    pub alternative: Alternative,
}

impl Default for PermTestConfig {
    fn default() -> Self {
        PermTestConfig {
            n_perm: 500,
            seed: 0,
            alternative: Alternative::MutedMseGreater,
        }
    }
}

/// Result of the permutation loop on a pair of prediction matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationOutcome {
    pub mse_original: f64,
    pub mse_muted: f64,
    pub delta_observed: f64,
    pub deltas_permuted: Vec<f64>,
    pub p_value: f64,
    pub z_score: f64,
    /// The permuted deltas have zero spread; `z_score` is reported as 0.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSnapshot {
    pub features: Vec<usize>,
    pub feature_label: String,
    pub strategy: String,
    pub forest: ForestConfig,
    pub perm: PermTestConfig,
    pub n_train: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermTestResult {
    pub delta_observed: f64,
    pub deltas_permuted: Vec<f64>,
    pub p_value: f64,
    pub z_score: f64,
    pub degenerate: bool,
    pub mse_original: f64,
    pub mse_muted: f64,
    pub diagnostics: SubsampleDiagnostics,
    pub config: TestSnapshot,
}

impl PermTestResult {
    pub fn n_perm(&self) -> usize {
        self.deltas_permuted.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub features: Vec<usize>,
    pub label: String,
    pub result: PermTestResult,
}

/// Per-feature results ordered by decreasing z-score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub entries: Vec<ImportanceEntry>,
    pub warnings: Vec<String>,
}

/// `(1 + #{j : observed <= deltas[j]}) / (N_0 + 1)`.
pub fn p_value(observed: f64, deltas: &[f64]) -> f64 {
    let hits = deltas.iter().filter(|&&d| observed <= d).count();
    (1 + hits) as f64 / (deltas.len() + 1) as f64
}

/// Standardized distance of `observed` from the permutation mean, using the
/// `n−1` standard deviation. Returns `(0, true)` when the spread is zero.
pub fn z_score(observed: f64, deltas: &[f64]) -> (f64, bool) {
    let n = deltas.len();
    if n < 2 {
        return (0.0, true);
    }
    let mean = deltas.iter().sum::<f64>() / n as f64;
    let var = deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    if !(sd > 0.0) {
        return (0.0, true);
    }
    ((observed - mean) / sd, false)
}

/// MSE difference (pseudo-muted minus pseudo-original) when `chosen` rows of
/// the pooled matrix form the pseudo-original forest and the rest the
/// pseudo-muted one. `chosen` must be sorted.
pub fn split_delta(pooled: &PredictionMatrix, chosen: &[usize]) -> Result<f64> {
    let mut rest = Vec::with_capacity(pooled.n_rows().saturating_sub(chosen.len()));
    let mut c = chosen.iter().peekable();
    for i in 0..pooled.n_rows() {
        if c.peek() == Some(&&i) {
            c.next();
        } else {
            rest.push(i);
        }
    }
    Ok(forest_mse(pooled, Some(&rest))? - forest_mse(pooled, Some(chosen))?)
}

/// Run the permutation loop on the two forests' prediction matrices.
///
/// Iteration `j` draws its tree assignment from `Seed(cfg.seed).child(j)`, so
/// the deltas are identical however the iterations are scheduled.
pub fn permutation_test(
    original: &PredictionMatrix,
    muted: &PredictionMatrix,
    cfg: &PermTestConfig,
) -> Result<PermutationOutcome> {
    if cfg.n_perm == 0 {
        return Err(argument("n_perm must be at least 1"));
    }
    if original.n_rows() != muted.n_rows() {
        return Err(argument("both forests must have the same number of trees"));
    }
    let b = original.n_rows();
    let pooled = original.stack(muted)?;
    let own: Vec<usize> = (0..b).collect();
    let mse_original = forest_mse(&pooled, Some(&own))?;
    let mse_muted = forest_mse(&pooled, Some(&(b..2 * b).collect::<Vec<_>>()))?;
    let delta_observed = split_delta(&pooled, &own)?;

    let root = Seed(cfg.seed);
    let deltas_permuted = (0..cfg.n_perm)
        .into_par_iter()
        .map(|j| {
            let mut rng = root.child(j as u64).rng();
            let mut chosen = rand::seq::index::sample(&mut rng, 2 * b, b).into_vec();
            chosen.sort_unstable();
            split_delta(&pooled, &chosen)
        })
        .collect::<Result<Vec<_>>>()?;

    let (z, degenerate) = z_score(delta_observed, &deltas_permuted);
    Ok(PermutationOutcome {
        mse_original,
        mse_muted,
        delta_observed,
        p_value: p_value(delta_observed, &deltas_permuted),
        z_score: z,
        degenerate,
        deltas_permuted,
    })
}

fn check_layout(train: &Dataset, test: &Dataset) -> Result<()> {
    if !train.same_layout(test) {
        return Err(argument(format!(
            "test set layout ({} features) does not match training set ({} features)",
            test.p(),
            train.p()
        )));
    }
    Ok(())
}

fn original_forest_seed(fcfg: &ForestConfig) -> u64 {
    Seed(fcfg.master_seed).child(0).0
}

fn muted_forest_seed(fcfg: &ForestConfig) -> u64 {
    Seed(fcfg.master_seed).child(1).0
}

fn original_matrix(train: &Dataset, test: &Dataset, fcfg: &ForestConfig) -> Result<PredictionMatrix> {
    let forest = fit_forest(train, &fcfg.with_seed(original_forest_seed(fcfg)))?;
    predict_matrix(&forest, test)
}

fn muted_matrix(
    train: &Dataset,
    test: &Dataset,
    s: &FeatureSubset,
    strategy: &MutingStrategy,
    fcfg: &ForestConfig,
) -> Result<PredictionMatrix> {
    let muted_train = mute_features(train, s, strategy)?;
    let mut cfg = fcfg.with_seed(muted_forest_seed(fcfg));
    let muted_test = match strategy {
        MutingStrategy::Exclude => {
            // fewer columns remain; keep an explicit mtry within range
            cfg.tree.mtry = cfg.tree.mtry.map(|m| m.min(muted_train.p()));
            mute_features(test, s, strategy)?
        }
        _ => test.clone(),
    };
    let forest = fit_forest(&muted_train, &cfg)?;
    predict_matrix(&forest, &muted_test)
}

fn assemble(
    train: &Dataset,
    test: &Dataset,
    s: &FeatureSubset,
    strategy: &MutingStrategy,
    fcfg: &ForestConfig,
    pcfg: &PermTestConfig,
    outcome: PermutationOutcome,
) -> Result<PermTestResult> {
    let k = fcfg.subsample.resolve(train.n())?;
    Ok(PermTestResult {
        delta_observed: outcome.delta_observed,
        deltas_permuted: outcome.deltas_permuted,
        p_value: outcome.p_value,
        z_score: outcome.z_score,
        degenerate: outcome.degenerate,
        mse_original: outcome.mse_original,
        mse_muted: outcome.mse_muted,
        diagnostics: subsample_diagnostics(train.n(), k, fcfg.n_trees),
        config: TestSnapshot {
            features: s.indices().to_vec(),
            feature_label: s.label(train),
            strategy: strategy.label().to_string(),
            forest: fcfg.clone(),
            perm: pcfg.clone(),
            n_train: train.n(),
            n_test: test.n(),
        },
    })
}

/// Test whether the features in `s` improve test-set MSE.
pub fn run_test(
    train: &Dataset,
    test: &Dataset,
    s: &FeatureSubset,
    strategy: &MutingStrategy,
    fcfg: &ForestConfig,
    pcfg: &PermTestConfig,
) -> Result<PermTestResult> {
    check_layout(train, test)?;
    s.check(train.p())?;
    let original = original_matrix(train, test, fcfg)?;
    let muted = muted_matrix(train, test, s, strategy, fcfg)?;
    let outcome = permutation_test(&original, &muted, pcfg)?;
    assemble(train, test, s, strategy, fcfg, pcfg, outcome)
}

/// One test per subset in `features`, reusing a single original forest.
pub fn importance_all(
    train: &Dataset,
    test: &Dataset,
    features: &[FeatureSubset],
    strategy: &MutingStrategy,
    fcfg: &ForestConfig,
    pcfg: &PermTestConfig,
) -> Result<ImportanceReport> {
    let mut warnings = Vec::new();
    for (i, s) in features.iter().enumerate() {
        if features[..i].contains(s) && s.check(train.p()).is_ok() {
            warnings.push(format!("feature subset `{}` is listed more than once", s.label(train)));
        }
    }
    let mut entries = importance_in_order(train, test, features, strategy, fcfg, pcfg)?;
    entries.sort_by(|a, b| b.result.z_score.total_cmp(&a.result.z_score));
    Ok(ImportanceReport { entries, warnings })
}

/// As [`importance_all`], with entries left in input order.
pub fn importance_in_order(
    train: &Dataset,
    test: &Dataset,
    features: &[FeatureSubset],
    strategy: &MutingStrategy,
    fcfg: &ForestConfig,
    pcfg: &PermTestConfig,
) -> Result<Vec<ImportanceEntry>> {
    check_layout(train, test)?;
    if features.is_empty() {
        return Err(argument("no features to test"));
    }
    for s in features {
        s.check(train.p())?;
    }
    let original = original_matrix(train, test, fcfg)?;
    features
        .iter()
        .map(|s| {
            let muted = muted_matrix(train, test, s, strategy, fcfg)?;
            let outcome = permutation_test(&original, &muted, pcfg)?;
            Ok(ImportanceEntry {
                features: s.indices().to_vec(),
                label: s.label(train),
                result: assemble(train, test, s, strategy, fcfg, pcfg, outcome)?,
            })
        })
        .collect()
}

/// Test all features jointly, muting the whole design matrix with one shared row permutation.
pub fn overall_test(
    train: &Dataset,
    test: &Dataset,
    strategy: &MutingStrategy,
    fcfg: &ForestConfig,
    pcfg: &PermTestConfig,
) -> Result<PermTestResult> {
    if matches!(strategy, MutingStrategy::Exclude) {
        return Err(argument("the overall test cannot exclude every feature; use permutation or knockoffs"));
    }
    run_test(train, test, &FeatureSubset::all(train.p())?, strategy, fcfg, pcfg)
}

/// Shape of the permutation distribution compared with a matched normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalityReport {
    pub mean: f64,
    pub sd: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// Kolmogorov–Smirnov distance to `N(mean, sd²)`.
    pub ks_distance: f64,
    pub degenerate: bool,
}

pub const MIN_NORMALITY_SAMPLES: usize = 30;

pub fn permutation_normality(result: &PermTestResult) -> Result<NormalityReport> {
    normality_of(&result.deltas_permuted)
}

pub fn normality_of(deltas: &[f64]) -> Result<NormalityReport> {
    let n = deltas.len();
    if n < MIN_NORMALITY_SAMPLES {
        return Err(argument(format!(
            "normality diagnostics need at least {MIN_NORMALITY_SAMPLES} permutations, got {n}"
        )));
    }
    let nf = n as f64;
    let mean = deltas.iter().sum::<f64>() / nf;
    let m2 = deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / nf;
    if !(m2 > 0.0) {
        return Ok(NormalityReport {
            mean: 0.0,
            sd: 0.0,
            skewness: 0.0,
            excess_kurtosis: 0.0,
            ks_distance: 0.0,
            degenerate: true,
        });
    }
    let m3 = deltas.iter().map(|d| (d - mean).powi(3)).sum::<f64>() / nf;
    let m4 = deltas.iter().map(|d| (d - mean).powi(4)).sum::<f64>() / nf;
    let sd = (m2 * nf / (nf - 1.0)).sqrt();

    let mut sorted = deltas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut ks: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = normal_cdf((x - mean) / sd);
        ks = ks.max((i + 1) as f64 / nf - f).max(f - i as f64 / nf);
    }
    Ok(NormalityReport {
        mean,
        sd,
        skewness: m3 / m2.powf(1.5),
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
        ks_distance: ks,
        degenerate: false,
    })
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::SubsampleSize;

    #[test]
    fn formula_examples() {
        assert_eq!(p_value(5.0, &[1.0, 2.0, 3.0]), 0.25);
        assert_eq!(p_value(0.0, &[0.0, 0.0, 0.0]), 1.0);
        assert_eq!(p_value(2.0, &[1.0, 2.0, 3.0]), 0.75);
        let (z, flag) = z_score(1.0, &[1.0, 1.0]);
        assert_eq!((z, flag), (0.0, true));
        let (z, flag) = z_score(3.0, &[0.0, 2.0]);
        assert!(!flag);
        assert!((z - 2.0 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn identical_constant_matrices_give_p_one() {
        let rows = vec![vec![1.5, -0.5, 2.0]; 6];
        let m = PredictionMatrix::new(rows, vec![0.0, 1.0, 2.0]).unwrap();
        let out = permutation_test(&m, &m, &PermTestConfig { n_perm: 50, seed: 3, ..Default::default() }).unwrap();
        assert_eq!(out.delta_observed, 0.0);
        assert!(out.deltas_permuted.iter().all(|&d| d == 0.0));
        assert_eq!(out.p_value, 1.0);
        assert!(out.degenerate);
        assert_eq!(out.z_score, 0.0);
    }

    #[test]
    fn single_permutation_support() {
        let a = PredictionMatrix::new(vec![vec![0.0], vec![1.0]], vec![0.0]).unwrap();
        let b = PredictionMatrix::new(vec![vec![3.0], vec![5.0]], vec![0.0]).unwrap();
        for seed in 0..20 {
            let out = permutation_test(&a, &b, &PermTestConfig { n_perm: 1, seed, ..Default::default() }).unwrap();
            assert!(out.p_value == 0.5 || out.p_value == 1.0);
        }
    }

    #[test]
    fn mismatched_tree_counts_are_rejected() {
        let a = PredictionMatrix::new(vec![vec![0.0]], vec![0.0]).unwrap();
        let b = PredictionMatrix::new(vec![vec![3.0], vec![5.0]], vec![0.0]).unwrap();
        assert!(permutation_test(&a, &b, &PermTestConfig::default()).is_err());
        assert!(permutation_test(&a, &a, &PermTestConfig { n_perm: 0, ..Default::default() }).is_err());
    }

    #[test]
    fn normality_edge_cases() {
        let flat = vec![2.0; 40];
        let r = normality_of(&flat).unwrap();
        assert!(r.degenerate && r.sd == 0.0);
        let sym: Vec<f64> = [-1.0, 0.0, 1.0, 0.0].iter().cycle().take(40).copied().collect();
        let r = normality_of(&sym).unwrap();
        assert!(!r.degenerate);
        assert!(r.skewness.abs() < 1e-12);
        assert!(normality_of(&sym[..10]).is_err());
    }

    #[test]
    fn normal_cdf_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-12);
    }

    fn toy() -> (Dataset, Dataset) {
        let n = 80;
        let x1: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let x2: Vec<f64> = (0..n).map(|i| (i as f64 * 1.3).cos()).collect();
        let y: Vec<f64> = x1.iter().map(|v| 5.0 * v).collect();
        let d = Dataset::from_numeric_columns(vec![x1, x2], y).unwrap();
        let train = d.select_rows(&(0..60).collect::<Vec<_>>()).unwrap();
        let test = d.select_rows(&(60..80).collect::<Vec<_>>()).unwrap();
        (train, test)
    }

    fn cfgs() -> (ForestConfig, PermTestConfig) {
        (
            ForestConfig { n_trees: 20, subsample: SubsampleSize::Fixed(20), master_seed: 4, ..Default::default() },
            PermTestConfig { n_perm: 99, seed: 8, ..Default::default() },
        )
    }

    #[test]
    fn importance_reuses_original_forest() {
        let (train, test) = toy();
        let (f, p) = cfgs();
        let strat = MutingStrategy::PermuteRows { seed: 2 };
        let subsets = vec![FeatureSubset::single(1, 2).unwrap(), FeatureSubset::single(0, 2).unwrap()];
        let rep = importance_all(&train, &test, &subsets, &strat, &f, &p).unwrap();
        assert_eq!(rep.entries.len(), 2);
        assert!(rep.entries[0].result.z_score >= rep.entries[1].result.z_score);
        assert_eq!(rep.entries[0].label, "x1");
        for e in &rep.entries {
            let s = FeatureSubset::new(e.features.clone(), 2).unwrap();
            let solo = run_test(&train, &test, &s, &strat, &f, &p).unwrap();
            assert_eq!(solo, e.result);
        }
    }

    #[test]
    fn duplicate_subsets_are_flagged() {
        let (train, test) = toy();
        let (f, p) = cfgs();
        let s = FeatureSubset::single(0, 2).unwrap();
        let rep = importance_all(&train, &test, &[s.clone(), s], &MutingStrategy::PermuteRows { seed: 1 }, &f, &p).unwrap();
        assert_eq!(rep.entries.len(), 2);
        assert_eq!(rep.warnings.len(), 1);
    }

    #[test]
    fn exclusion_and_overall() {
        let (train, test) = toy();
        let (f, p) = cfgs();
        let s = FeatureSubset::single(0, 2).unwrap();
        let r = run_test(&train, &test, &s, &MutingStrategy::Exclude, &f, &p).unwrap();
        assert!(r.delta_observed > 0.0);
        assert!(overall_test(&train, &test, &MutingStrategy::Exclude, &f, &p).is_err());
        let o = overall_test(&train, &test, &MutingStrategy::PermuteRows { seed: 5 }, &f, &p).unwrap();
        assert_eq!(o.config.features, vec![0, 1]);
        assert!((o.p_value * 100.0).fract().abs() < 1e-9);
    }

    #[test]
    fn mismatched_test_layout_is_rejected() {
        let (train, _) = toy();
        let (f, p) = cfgs();
        let other = Dataset::from_numeric_columns(vec![vec![0.0, 1.0]], vec![0.0, 1.0]).unwrap();
        let s = FeatureSubset::single(0, 2).unwrap();
        assert!(run_test(&train, &other, &s, &MutingStrategy::Exclude, &f, &p).is_err());
    }
}
