//! Synthetic models and level/power experiments.
//!
//! Models 1 and 2 share the mixed covariate block: five `Unif(0,1)` features
//! `x1..x5` and five three-level factors `x6..x10` with levels labelled
//! `"1","2","3"` (stored as indices 0, 1, 2, so category `2` is index 1).
//! Model 3 uses 500 standard-normal features with AR(1) correlation 0.15 and
//! a binary response stored as 0/1.

use std::io::Write;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Column, Dataset, FeatureSubset, MutingStrategy};
use crate::error::{argument, Result};
use crate::forest::{ForestConfig, SubsampleSize};
use crate::permtest::{importance_in_order, PermTestConfig};
use crate::rng::{Rng, Seed};
use crate::tree::TreeConfig;

pub const AR1_COEFFICIENT: f64 = 0.15;
pub const MODEL3_FEATURES: usize = 500;
/// Level index of category "2" in the factor columns.
pub const CATEGORY_TWO: f64 = 1.0;
/// Noise sd used by the robustness sweeps (error variance 16).
pub const ROBUSTNESS_SIGMA: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum SimModel {
    Model1 { beta: f64, sigma: f64 },
    Model2 { beta: f64, sigma: f64 },
    Model3 { beta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Sigma,
    Beta,
}

impl SimModel {
    pub fn name(&self) -> &'static str {
        match self {
            SimModel::Model1 { .. } => "model1",
            SimModel::Model2 { .. } => "model2",
            SimModel::Model3 { .. } => "model3",
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            SimModel::Model3 { .. } => MODEL3_FEATURES,
            _ => 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SimModel::Model1 { beta, sigma } | SimModel::Model2 { beta, sigma } => {
                if !beta.is_finite() || !(sigma > 0.0 && sigma.is_finite()) {
                    return Err(argument(format!("need finite beta and sigma > 0, got beta={beta}, sigma={sigma}")));
                }
            }
            SimModel::Model3 { beta } => {
                if !beta.is_finite() {
                    return Err(argument("beta must be finite"));
                }
            }
        }
        Ok(())
    }

    /// Copy of the model with the swept parameter set to `value`.
    pub fn with_param(&self, param: SweepParam, value: f64) -> Result<SimModel> {
        let m = match (*self, param) {
            (SimModel::Model1 { beta, .. }, SweepParam::Sigma) => SimModel::Model1 { beta, sigma: value },
            (SimModel::Model1 { sigma, .. }, SweepParam::Beta) => SimModel::Model1 { beta: value, sigma },
            (SimModel::Model2 { beta, .. }, SweepParam::Sigma) => SimModel::Model2 { beta, sigma: value },
            (SimModel::Model2 { sigma, .. }, SweepParam::Beta) => SimModel::Model2 { beta: value, sigma },
            (SimModel::Model3 { .. }, SweepParam::Beta) => SimModel::Model3 { beta: value },
            (SimModel::Model3 { .. }, SweepParam::Sigma) => {
                return Err(argument("model3 has no noise parameter to sweep"))
            }
        };
        m.validate()?;
        Ok(m)
    }

    pub fn generate(&self, n: usize, rng: &mut Rng) -> Result<Dataset> {
        match *self {
            SimModel::Model1 { beta, sigma } => gen_model1(n, beta, sigma, rng),
            SimModel::Model2 { beta, sigma } => gen_model2(n, beta, sigma, rng),
            SimModel::Model3 { beta } => gen_model3(n, beta, rng),
        }
    }

    /// Features tested by default: signal and null features of each kind.
    pub fn default_targets(&self) -> Vec<usize> {
        match self {
            SimModel::Model1 { .. } => vec![0, 5, 1, 6],
            SimModel::Model2 { .. } => vec![0, 1, 2, 4, 6],
            SimModel::Model3 { .. } => vec![0, 1, MODEL3_FEATURES - 1],
        }
    }
}

/// `1 / (1 + e^z)`. Note the sign: this is decreasing in `z`.
pub fn expit(z: f64) -> f64 {
    1.0 / (1.0 + z.exp())
}

/// `E[Y | x]` under model 1: `β·x1 + β·I(x6 = 2)`.
pub fn model1_mean(beta: f64, x: &[f64]) -> f64 {
    beta * x[0] + beta * indicator(x[5] == CATEGORY_TWO)
}

/// `E[Y | x]` under model 2: `β·sin(π·I(x7 = 2)·x1) + 2β(x3 − 0.05)² + β·x4 + β·x2`.
pub fn model2_mean(beta: f64, x: &[f64]) -> f64 {
    let gate = indicator(x[6] == CATEGORY_TWO);
    beta * (std::f64::consts::PI * gate * x[0]).sin()
        + 2.0 * beta * (x[2] - 0.05).powi(2)
        + beta * x[3]
        + beta * x[1]
}

/// `P(Y = 1 | x)` under model 3: `expit(β · (x2 + x3 + x4 + x5))`.
pub fn model3_prob(beta: f64, x: &[f64]) -> f64 {
    expit(beta * x[1..5].iter().sum::<f64>())
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(argument(format!("need n >= 2, got {n}")));
    }
    Ok(())
}

fn mixed_covariates(n: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let mut x = Vec::with_capacity(10);
        for _ in 0..5 {
            x.push(rng.random::<f64>());
        }
        for _ in 0..5 {
            x.push(rng.random_range(0..3u32) as f64);
        }
        rows.push(x);
    }
    rows
}

fn mixed_dataset(rows: &[Vec<f64>], y: Vec<f64>) -> Result<Dataset> {
    let levels: Vec<String> = ["1", "2", "3"].iter().map(|s| s.to_string()).collect();
    let columns = (0..10)
        .map(|j| {
            let values = rows.iter().map(|r| r[j]).collect();
            if j < 5 {
                Column::numeric(format!("x{}", j + 1), values)
            } else {
                Column::categorical(format!("x{}", j + 1), levels.clone(), values)
            }
        })
        .collect();
    Dataset::new(columns, "y", y)
}

fn gen_additive(n: usize, sigma: f64, rng: &mut Rng, mean: impl Fn(&[f64]) -> f64) -> Result<Dataset> {
    check_n(n)?;
    if !(sigma > 0.0) {
        return Err(argument(format!("sigma must be positive, got {sigma}")));
    }
    let rows = mixed_covariates(n, rng);
    let y = rows
        .iter()
        .map(|x| {
            let eps: f64 = StandardNormal.sample(rng);
            mean(x) + sigma * eps
        })
        .collect();
    mixed_dataset(&rows, y)
}

pub fn gen_model1(n: usize, beta: f64, sigma: f64, rng: &mut Rng) -> Result<Dataset> {
    gen_additive(n, sigma, rng, |x| model1_mean(beta, x))
}

pub fn gen_model2(n: usize, beta: f64, sigma: f64, rng: &mut Rng) -> Result<Dataset> {
    gen_additive(n, sigma, rng, |x| model2_mean(beta, x))
}

pub fn gen_model3(n: usize, beta: f64, rng: &mut Rng) -> Result<Dataset> {
    check_n(n)?;
    let phi = AR1_COEFFICIENT;
    let innov = (1.0 - phi * phi).sqrt();
    let mut cols = vec![Vec::with_capacity(n); MODEL3_FEATURES];
    let mut y = Vec::with_capacity(n);
    let mut x = vec![0.0; MODEL3_FEATURES];
    for _ in 0..n {
        x[0] = StandardNormal.sample(rng);
        for j in 1..MODEL3_FEATURES {
            let e: f64 = StandardNormal.sample(rng);
            x[j] = phi * x[j - 1] + innov * e;
        }
        let u: f64 = rng.random();
        y.push(indicator(u < model3_prob(beta, &x)));
        for (c, v) in cols.iter_mut().zip(&x) {
            c.push(*v);
        }
    }
    Dataset::from_numeric_columns(cols, y)
}

/// `n` equally spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// `σ = 10 / j` for `points` values of `j` equally spaced on `[0.005, 2.25]`.
pub fn sigma_grid(points: usize) -> Vec<f64> {
    linspace(0.005, 2.25, points).into_iter().map(|j| 10.0 / j).collect()
}

pub fn model3_beta_grid_full() -> Vec<f64> {
    let mut g = linspace(0.01, 2.5, 8);
    g.extend(linspace(5.0, 20.0, 7));
    g
}

pub const TREE_COUNT_GRID: [usize; 9] = [20, 50, 75, 125, 250, 375, 500, 750, 1000];

pub fn exponent_grid() -> Vec<f64> {
    linspace(0.1, 0.99, 10)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMuting {
    Permute,
    Exclude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub model: SimModel,
    pub n_train: usize,
    pub n_test: usize,
    pub forest: ForestConfig,
    pub perm: PermTestConfig,
    pub replicates: usize,
    pub targets: Vec<FeatureSubset>,
    pub sweep: SweepParam,
    pub grid: Vec<f64>,
    pub muting: SimMuting,
    pub alpha: f64,
    pub master_seed: u64,
}

impl SimConfig {
    /// Laptop-sized preset: n=500, B=100, N_t=50, N_0=300, 200 replicates, 5 grid points.
    pub fn desk(model: SimModel) -> Self {
        let (sweep, grid) = match model {
            SimModel::Model3 { .. } => (SweepParam::Beta, linspace(0.01, 2.5, 5)),
            _ => (SweepParam::Sigma, sigma_grid(5)),
        };
        SimConfig {
            model,
            n_train: 500,
            n_test: 50,
            forest: ForestConfig {
                n_trees: 100,
                subsample: SubsampleSize::Exponent(0.6),
                tree: TreeConfig::default(),
                master_seed: 0,
            },
            perm: PermTestConfig { n_perm: 300, ..Default::default() },
            replicates: 200,
            targets: default_subsets(&model),
            sweep,
            grid,
            muting: SimMuting::Permute,
            alpha: 0.05,
            master_seed: 0,
        }
    }

    /// Paper-sized preset: n=2000 (600 for model 3), B=125, N_t=100, N_0=500, 500 replicates.
    pub fn full(model: SimModel) -> Self {
        let (n_train, sweep, grid) = match model {
            SimModel::Model3 { .. } => (600, SweepParam::Beta, model3_beta_grid_full()),
            _ => (2000, SweepParam::Sigma, sigma_grid(9)),
        };
        SimConfig {
            n_train,
            n_test: 100,
            forest: ForestConfig { n_trees: 125, ..ForestConfig::default() },
            perm: PermTestConfig { n_perm: 500, ..Default::default() },
            replicates: 500,
            sweep,
            grid,
            ..SimConfig::desk(model)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.replicates == 0 {
            return Err(argument("replicates must be at least 1"));
        }
        if self.grid.is_empty() {
            return Err(argument("grid must not be empty"));
        }
        if self.targets.is_empty() {
            return Err(argument("no target features"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(argument(format!("alpha {} not in (0,1)", self.alpha)));
        }
        if self.n_test < 2 {
            return Err(argument("need at least 2 test points"));
        }
        for t in &self.targets {
            t.check(self.model.n_features())?;
        }
        for &v in &self.grid {
            self.model.with_param(self.sweep, v)?;
        }
        self.forest.subsample.resolve(self.n_train)?;
        self.forest.tree.validate(self.model.n_features())?;
        Ok(())
    }
}

fn default_subsets(model: &SimModel) -> Vec<FeatureSubset> {
    let p = model.n_features();
    model
        .default_targets()
        .into_iter()
        .map(|j| FeatureSubset::single(j, p).expect("default targets are in range"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetStats {
    pub label: String,
    pub features: Vec<usize>,
    pub rejections: usize,
    pub replicates: usize,
    pub rejection_rate: f64,
    pub mean_p: f64,
    pub mean_z: f64,
    pub p_values: Vec<f64>,
    pub z_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub value: f64,
    pub targets: Vec<TargetStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCurve {
    pub model: String,
    pub sweep: SweepParam,
    pub alpha: f64,
    pub points: Vec<PowerPoint>,
}

impl PowerCurve {
    /// Rejection rates of target `t` along the grid.
    pub fn rates(&self, t: usize) -> Vec<f64> {
        self.points.iter().map(|p| p.targets[t].rejection_rate).collect()
    }

    /// CSV with columns `grid_value,target,rejections,replicates,mean_p,mean_z`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["grid_value", "target", "rejections", "replicates", "mean_p", "mean_z"])?;
        for pt in &self.points {
            for t in &pt.targets {
                w.write_record([
                    format!("{}", pt.value),
                    t.label.clone(),
                    t.rejections.to_string(),
                    t.replicates.to_string(),
                    format!("{}", t.mean_p),
                    format!("{}", t.mean_z),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Seeds of replicate `r` at grid point `g`: data, forests, permutation loop, muting.
pub fn replicate_seeds(master: u64, g: usize, r: usize) -> [u64; 4] {
    let s = Seed(master).child(g as u64).child(r as u64);
    [s.child(0).0, s.child(1).0, s.child(2).0, s.child(3).0]
}

fn run_replicate(cfg: &SimConfig, model: &SimModel, g: usize, r: usize) -> Result<Vec<(f64, f64)>> {
    let [data_seed, forest_seed, perm_seed, mute_seed] = replicate_seeds(cfg.master_seed, g, r);
    let all = model.generate(cfg.n_train + cfg.n_test, &mut Seed(data_seed).rng())?;
    let train = all.select_rows(&(0..cfg.n_train).collect::<Vec<_>>())?;
    let test = all.select_rows(&(cfg.n_train..cfg.n_train + cfg.n_test).collect::<Vec<_>>())?;
    let strategy = match cfg.muting {
        SimMuting::Permute => MutingStrategy::PermuteRows { seed: mute_seed },
        SimMuting::Exclude => MutingStrategy::Exclude,
    };
    let fcfg = cfg.forest.with_seed(forest_seed);
    let pcfg = PermTestConfig { seed: perm_seed, ..cfg.perm.clone() };
    let entries = importance_in_order(&train, &test, &cfg.targets, &strategy, &fcfg, &pcfg)?;
    Ok(entries.into_iter().map(|e| (e.result.p_value, e.result.z_score)).collect())
}

/// Regenerate data for every grid value and replicate, test each target, and
/// tabulate rejections at `cfg.alpha` (reject when `p ≤ α`).
pub fn run_power_experiment(cfg: &SimConfig) -> Result<PowerCurve> {
    cfg.validate()?;
    let names: Vec<String> = {
        let probe = cfg.model.generate(2, &mut Seed(0).rng())?;
        cfg.targets.iter().map(|t| t.label(&probe)).collect()
    };
    let mut points = Vec::with_capacity(cfg.grid.len());
    for (g, &value) in cfg.grid.iter().enumerate() {
        let model = cfg.model.with_param(cfg.sweep, value)?;
        let reps = (0..cfg.replicates)
            .into_par_iter()
            .map(|r| run_replicate(cfg, &model, g, r))
            .collect::<Result<Vec<_>>>()?;
        let targets = cfg
            .targets
            .iter()
            .enumerate()
            .map(|(t, subset)| {
                let p_values: Vec<f64> = reps.iter().map(|rep| rep[t].0).collect();
                let z_scores: Vec<f64> = reps.iter().map(|rep| rep[t].1).collect();
                let rejections = p_values.iter().filter(|&&p| p <= cfg.alpha).count();
                let k = cfg.replicates as f64;
                TargetStats {
                    label: names[t].clone(),
                    features: subset.indices().to_vec(),
                    rejections,
                    replicates: cfg.replicates,
                    rejection_rate: rejections as f64 / k,
                    mean_p: p_values.iter().sum::<f64>() / k,
                    mean_z: z_scores.iter().sum::<f64>() / k,
                    p_values,
                    z_scores,
                }
            })
            .collect();
        points.push(PowerPoint { value, targets });
    }
    Ok(PowerCurve {
        model: cfg.model.name().to_string(),
        sweep: cfg.sweep,
        alpha: cfg.alpha,
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", content = "values", rename_all = "snake_case")]
pub enum RobustnessAxis {
    TreeCount(Vec<usize>),
    SubsampleExponent(Vec<f64>),
}

impl RobustnessAxis {
    pub fn len(&self) -> usize {
        match self {
            RobustnessAxis::TreeCount(v) => v.len(),
            RobustnessAxis::SubsampleExponent(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessCurve {
    pub axis_value: f64,
    pub curve: PowerCurve,
}

/// Configuration actually run for one robustness axis value: noise sd fixed
/// at 4 for the additive models, every axis value sharing `base.master_seed`.
pub fn robustness_config(base: &SimConfig, axis: &RobustnessAxis, i: usize) -> Result<SimConfig> {
    let mut cfg = base.clone();
    match axis {
        RobustnessAxis::TreeCount(v) => cfg.forest.n_trees = *v.get(i).ok_or_else(|| argument("axis index"))?,
        RobustnessAxis::SubsampleExponent(v) => {
            cfg.forest.subsample = SubsampleSize::Exponent(*v.get(i).ok_or_else(|| argument("axis index"))?)
        }
    }
    if !matches!(cfg.model, SimModel::Model3 { .. }) {
        cfg.model = cfg.model.with_param(SweepParam::Sigma, ROBUSTNESS_SIGMA)?;
        cfg.sweep = SweepParam::Sigma;
        cfg.grid = vec![ROBUSTNESS_SIGMA];
    }
    Ok(cfg)
}

pub fn robustness_sweep(base: &SimConfig, axis: &RobustnessAxis) -> Result<Vec<RobustnessCurve>> {
    if axis.is_empty() {
        return Err(argument("robustness axis has no values"));
    }
    (0..axis.len())
        .map(|i| {
            let cfg = robustness_config(base, axis, i)?;
            let axis_value = match axis {
                RobustnessAxis::TreeCount(v) => v[i] as f64,
                RobustnessAxis::SubsampleExponent(v) => v[i],
            };
            Ok(RobustnessCurve {
                axis_value,
                curve: run_power_experiment(&cfg)?,
            })
        })
        .collect()
}
