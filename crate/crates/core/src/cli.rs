//! Command-line front end.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::data::{read_csv, split_indices, Dataset, FeatureKind, FeatureSubset, KnockoffColumns, MutingStrategy};
use crate::error::{argument, Error, Result};
use crate::forest::{subsample_diagnostics, ForestConfig, SubsampleSize};
use crate::permtest::{importance_all, overall_test, run_test, PermTestConfig, PermTestResult};
use crate::plot::render_histogram;
use crate::report::{
    json_number, write_deltas_csv, write_json, DiagnoseReport, ImportanceJson, SimManifest,
    TestReport, SCHEMA_VERSION,
};
use crate::rng::Seed;
use crate::simbench::{
    exponent_grid, linspace, robustness_config, run_power_experiment, sigma_grid, PowerCurve, RobustnessAxis,
    SimConfig, SimModel, SimMuting, SweepParam, TREE_COUNT_GRID,
};
use crate::tree::TreeConfig;

/// Environment variable overriding the worker thread count.
pub const THREADS_ENV: &str = "RFPERM_THREADS";

#[derive(Debug, Parser)]
#[command(name = "rfperm", version, about = "Permutation tests for random forest variable importance")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test whether a feature subset improves test-set MSE.
    Test(TestArgs),
    /// Test every feature (or listed subsets) separately, sorted by z-score.
    Importance(ImportanceArgs),
    /// Test all features jointly.
    Overall(OverallArgs),
    /// Power and type I error simulations on the synthetic models.
    Simulate(SimulateArgs),
    /// Subsample disjointness diagnostics for n rows, subsample size k and B trees.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Permute,
    Exclude,
    Knockoff,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub response: String,
    /// Held-out CSV with the same columns; without it a random split is made.
    #[arg(long)]
    pub test_data: Option<PathBuf>,
    #[arg(long, default_value_t = 0.15, value_parser = open_unit)]
    pub test_fraction: f64,
    /// Force a column to be categorical, as `NAME` or `NAME:LEVELS`.
    #[arg(long, value_name = "NAME[:LEVELS]")]
    pub categorical: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ForestArgs {
    #[arg(long, default_value_t = 125, value_parser = clap::value_parser!(u64).range(1..))]
    pub b_trees: u64,
    /// Subsample size is round(n^exponent).
    #[arg(long, default_value_t = 0.6, value_parser = open_unit)]
    pub subsample_exponent: f64,
    /// Fixed subsample size; overrides the exponent.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub mtry: Option<u64>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub min_node: u64,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    pub min_split_fraction: f64,
}

#[derive(Debug, Args)]
pub struct PermArgs {
    #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u64).range(1..))]
    pub n_perm: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Directory for report files.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write an SVG histogram of the permuted deltas.
    #[arg(long, requires = "out")]
    pub svg: bool,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated feature names tested jointly.
    #[arg(long, required = true, value_delimiter = ',')]
    pub features: Vec<String>,
    #[arg(long, value_enum, default_value_t = StrategyArg::Permute)]
    pub strategy: StrategyArg,
    /// Knockoff copies, one column per tested feature or one per feature.
    #[arg(long, required_if_eq("strategy", "knockoff"))]
    pub knockoff_csv: Option<PathBuf>,
    #[command(flatten)]
    pub forest: ForestArgs,
    #[command(flatten)]
    pub perm: PermArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct ImportanceArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// A comma-separated group tested jointly; repeat for more groups. Default: every feature alone.
    #[arg(long)]
    pub features: Vec<String>,
    #[arg(long, value_enum, default_value_t = StrategyArg::Permute)]
    pub strategy: StrategyArg,
    #[arg(long, required_if_eq("strategy", "knockoff"))]
    pub knockoff_csv: Option<PathBuf>,
    #[command(flatten)]
    pub forest: ForestArgs,
    #[command(flatten)]
    pub perm: PermArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct OverallArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = StrategyArg::Permute)]
    pub strategy: StrategyArg,
    #[arg(long, required_if_eq("strategy", "knockoff"))]
    pub knockoff_csv: Option<PathBuf>,
    #[command(flatten)]
    pub forest: ForestArgs,
    #[command(flatten)]
    pub perm: PermArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Model1,
    Model2,
    Model3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RobustnessArg {
    Trees,
    Exponent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MutingArg {
    Permute,
    Exclude,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub model: ModelArg,
    /// n=500, B=100, 50 test points, 300 permutations, 200 replicates (default).
    #[arg(long, conflicts_with = "full_scale")]
    pub desk_scale: bool,
    /// n=2000 (600 for model3), B=125, 100 test points, 500 permutations, 500 replicates.
    #[arg(long)]
    pub full_scale: bool,
    /// Target feature name, or comma-separated names tested jointly. Repeatable.
    #[arg(long)]
    pub target: Vec<String>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Explicit grid of the swept parameter (sigma for model1/2, beta for model3).
    /// Giving `--sigma` (model1/2) or `--beta` (model3) alone runs that single value.
    #[arg(long, value_delimiter = ',')]
    pub grid: Vec<f64>,
    /// Number of grid points on the default grid.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub grid_points: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub replicates: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    pub n_train: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    pub n_test: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub b_trees: Option<u64>,
    #[arg(long, value_parser = open_unit)]
    pub subsample_exponent: Option<f64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub mtry: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub min_node: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n_perm: Option<u64>,
    #[arg(long, value_enum, default_value_t = MutingArg::Permute)]
    pub muting: MutingArg,
    #[arg(long, default_value_t = 0.05, value_parser = open_unit)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sweep tree count or subsample exponent at fixed noise instead of the power grid.
    #[arg(long, value_enum)]
    pub robustness: Option<RobustnessArg>,
    /// Values of the robustness axis; defaults to the standard axis grid.
    #[arg(long, value_delimiter = ',', requires = "robustness")]
    pub axis_values: Vec<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub k: usize,
    /// Number of trees.
    #[arg(long = "B", id = "b_trees")]
    pub b: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn open_unit(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is not in (0,1)"))
    }
}

/// Parse `args` (including the program name), run, and return the exit code:
/// 0 on success, 2 for usage errors, 1 for runtime errors.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    configure_threads();
    let stdout = std::io::stdout();
    match run(cli, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        // build_global fails only if a pool already exists; keep that pool then
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

pub fn run<W: Write>(cli: Cli, out: &mut W) -> Result<()> {
    match cli.command {
        Command::Test(a) => cmd_test(a, out),
        Command::Importance(a) => cmd_importance(a, out),
        Command::Overall(a) => cmd_overall(a, out),
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Diagnose(a) => cmd_diagnose(a, out),
    }
}

/// Seeds used by the dataset commands: split, forests, permutation loop, muting.
fn derived_seeds(seed: u64) -> [u64; 4] {
    let s = Seed(seed);
    [s.child(0).0, s.child(1).0, s.child(2).0, s.child(3).0]
}

fn parse_overrides(specs: &[String]) -> Result<Vec<(String, Option<usize>)>> {
    specs
        .iter()
        .map(|s| match s.rsplit_once(':') {
            Some((name, l)) => {
                let levels = l.parse::<usize>().map_err(|_| argument(format!("bad level count in `{s}`")))?;
                Ok((name.to_string(), Some(levels)))
            }
            None => Ok((s.clone(), None)),
        })
        .collect()
}

/// Read a CSV; `--categorical` columns without a level count get the number
/// of distinct values seen.
fn read_with_overrides(bytes: &[u8], response: &str, specs: &[String]) -> Result<Dataset> {
    let parsed = parse_overrides(specs)?;
    let mut overrides = HashMap::new();
    if parsed.iter().any(|(_, l)| l.is_none()) {
        let plain = read_csv(bytes, &HashMap::new(), response)?;
        for (name, levels) in &parsed {
            let levels = match levels {
                Some(l) => *l,
                None => {
                    let j = plain
                        .feature_index(name)
                        .ok_or_else(|| Error::Schema(format!("no feature column `{name}`")))?;
                    match plain.kind(j) {
                        FeatureKind::Categorical { levels } => levels,
                        FeatureKind::Numeric => {
                            let mut v = plain.column(j).to_vec();
                            v.sort_by(f64::total_cmp);
                            v.dedup();
                            v.len()
                        }
                    }
                }
            };
            overrides.insert(name.clone(), FeatureKind::Categorical { levels });
        }
    } else {
        for (name, levels) in parsed {
            overrides.insert(name, FeatureKind::Categorical { levels: levels.unwrap() });
        }
    }
    read_csv(bytes, &overrides, response)
}

/// Concatenate two CSV files with identical headers so both share one level encoding.
fn concat_csv(a: &Path, b: &Path) -> Result<(Vec<u8>, usize)> {
    let mut ra = csv::Reader::from_path(a)?;
    let mut rb = csv::Reader::from_path(b)?;
    let ha = ra.headers()?.clone();
    let hb = rb.headers()?.clone();
    if ha != hb {
        return Err(Error::Schema("training and test files have different headers".into()));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&ha)?;
    let mut n_a = 0;
    for rec in ra.records() {
        w.write_record(&rec?)?;
        n_a += 1;
    }
    for rec in rb.records() {
        w.write_record(&rec?)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok((bytes, n_a))
}

/// Training and test sets plus the training rows' positions in the input file.
struct LoadedData {
    train: Dataset,
    test: Dataset,
    train_rows: Vec<usize>,
}

fn load_data(a: &DataArgs, split_seed: u64) -> Result<LoadedData> {
    let (all, n_train_file) = match &a.test_data {
        Some(t) => {
            let (bytes, n_a) = concat_csv(&a.data, t)?;
            (read_with_overrides(&bytes, &a.response, &a.categorical)?, Some(n_a))
        }
        None => {
            let bytes = fs::read(&a.data)?;
            (read_with_overrides(&bytes, &a.response, &a.categorical)?, None)
        }
    };
    let (train_rows, test_rows) = match n_train_file {
        Some(n_a) => ((0..n_a).collect::<Vec<_>>(), (n_a..all.n()).collect::<Vec<_>>()),
        None => split_indices(all.n(), a.test_fraction, split_seed)?,
    };
    if train_rows.len() < 2 || test_rows.len() < 2 {
        return Err(argument("training and test sets each need at least 2 rows"));
    }
    Ok(LoadedData {
        train: all.select_rows(&train_rows)?,
        test: all.select_rows(&test_rows)?,
        train_rows,
    })
}

fn forest_config(a: &ForestArgs, d: &Dataset, master_seed: u64) -> Result<ForestConfig> {
    let cfg = ForestConfig {
        n_trees: a.b_trees as usize,
        subsample: match a.k {
            Some(k) => SubsampleSize::Fixed(k as usize),
            None => SubsampleSize::Exponent(a.subsample_exponent),
        },
        tree: TreeConfig {
            mtry: a.mtry.map(|m| m as usize),
            min_node_size: a.min_node as usize,
            max_depth: a.max_depth,
            min_split_fraction: a.min_split_fraction,
        },
        master_seed,
    };
    cfg.subsample.resolve(d.n())?;
    cfg.tree.validate(d.p())?;
    Ok(cfg)
}

/// Knockoff columns for the training rows. Columns named like features are
/// taken by name; otherwise all columns are used in file order.
fn load_knockoffs(path: &Path, data: &LoadedData, s: &FeatureSubset) -> Result<KnockoffColumns> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut cells: Vec<Vec<String>> = vec![Vec::new(); header.len()];
    for rec in rdr.records() {
        let rec = rec?;
        for (j, c) in rec.iter().enumerate().take(header.len()) {
            cells[j].push(c.trim().to_string());
        }
    }
    let total = data.train.n() + data.test.n();
    let n_rows = cells.first().map_or(0, |c| c.len());
    if n_rows != total && n_rows != data.train.n() {
        return Err(Error::Schema(format!(
            "knockoff file has {n_rows} rows, expected {total} (whole file) or {} (training rows)",
            data.train.n()
        )));
    }
    let d = &data.train;
    let by_name: Vec<Option<usize>> = s.indices().iter().map(|&j| header.iter().position(|h| h == d.names()[j])).collect();
    let picks: Vec<(usize, Option<usize>)> = if by_name.iter().all(Option::is_some) {
        s.indices().iter().zip(by_name).map(|(&j, c)| (c.unwrap(), Some(j))).collect()
    } else if header.len() == d.p() {
        (0..d.p()).map(|c| (c, Some(c))).collect()
    } else {
        s.indices().iter().enumerate().map(|(c, &j)| (c, Some(j))).collect()
    };
    let mut columns = Vec::with_capacity(picks.len());
    for (c, feature) in picks {
        let col = cells
            .get(c)
            .ok_or_else(|| Error::Schema(format!("knockoff file has no column {c}")))?;
        let levels = feature.map(|j| d.columns()[j].levels()).unwrap_or(&[]);
        let values = col
            .iter()
            .enumerate()
            .map(|(row, cell)| {
                if let Some(l) = levels.iter().position(|l| l == cell) {
                    return Ok(l as f64);
                }
                cell.parse::<f64>().map_err(|_| Error::Parse {
                    row: row + 1,
                    column: header[c].clone(),
                    message: format!("`{cell}` is not a number or known level"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        let values = if n_rows == total {
            data.train_rows.iter().map(|&i| values[i]).collect()
        } else {
            values
        };
        columns.push(values);
    }
    Ok(KnockoffColumns::new(columns))
}

fn strategy_for(
    arg: StrategyArg,
    knockoff: Option<&Path>,
    data: &LoadedData,
    s: &FeatureSubset,
    mute_seed: u64,
) -> Result<MutingStrategy> {
    Ok(match arg {
        StrategyArg::Permute => MutingStrategy::PermuteRows { seed: mute_seed },
        StrategyArg::Exclude => MutingStrategy::Exclude,
        StrategyArg::Knockoff => {
            let path = knockoff.ok_or_else(|| argument("--strategy knockoff needs --knockoff-csv"))?;
            MutingStrategy::Knockoff(load_knockoffs(path, data, s)?)
        }
    })
}

fn prepare_out(out: &Option<PathBuf>) -> Result<Option<&Path>> {
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
    }
    Ok(out.as_deref())
}

fn write_json_file<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    write_json(value, std::io::BufWriter::new(fs::File::create(path)?))
}

fn file_safe(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '+' || c == '.' { c } else { '_' })
        .collect()
}

fn write_side_files(dir: &Path, r: &PermTestResult, suffix: &str, svg: bool) -> Result<()> {
    write_deltas_csv(&r.deltas_permuted, fs::File::create(dir.join(format!("deltas{suffix}.csv")))?)?;
    if svg {
        render_histogram(&r.deltas_permuted, r.delta_observed, &dir.join(format!("histogram{suffix}.svg")))?;
    }
    Ok(())
}

fn cmd_test<W: Write>(a: TestArgs, out: &mut W) -> Result<()> {
    let [split_seed, forest_seed, perm_seed, mute_seed] = derived_seeds(a.perm.seed);
    let data = load_data(&a.data, split_seed)?;
    let s = FeatureSubset::from_names(&data.train, &a.features)?;
    let fcfg = forest_config(&a.forest, &data.train, forest_seed)?;
    let pcfg = PermTestConfig { n_perm: a.perm.n_perm as usize, seed: perm_seed, ..Default::default() };
    let strategy = strategy_for(a.strategy, a.knockoff_csv.as_deref(), &data, &s, mute_seed)?;
    let dir = prepare_out(&a.out.out)?;
    let result = run_test(&data.train, &data.test, &s, &strategy, &fcfg, &pcfg)?;
    let report = TestReport::from_result(&result);
    if let Some(dir) = dir {
        write_json_file(&dir.join("report.json"), &report)?;
        write_side_files(dir, &result, "", a.out.svg)?;
    }
    writeln!(out, "{}", report.summary_line())?;
    Ok(())
}

fn cmd_importance<W: Write>(a: ImportanceArgs, out: &mut W) -> Result<()> {
    let [split_seed, forest_seed, perm_seed, mute_seed] = derived_seeds(a.perm.seed);
    let data = load_data(&a.data, split_seed)?;
    let d = &data.train;
    let subsets: Vec<FeatureSubset> = if a.features.is_empty() {
        (0..d.p()).map(|j| FeatureSubset::single(j, d.p())).collect::<Result<_>>()?
    } else {
        a.features
            .iter()
            .map(|g| FeatureSubset::from_names(d, &g.split(',').map(str::trim).collect::<Vec<_>>()))
            .collect::<Result<_>>()?
    };
    let fcfg = forest_config(&a.forest, d, forest_seed)?;
    let pcfg = PermTestConfig { n_perm: a.perm.n_perm as usize, seed: perm_seed, ..Default::default() };
    let strategy = match a.strategy {
        StrategyArg::Knockoff => {
            // knockoff columns are read for the full feature set and indexed per subset
            let all = FeatureSubset::all(d.p())?;
            let path = a.knockoff_csv.as_deref().ok_or_else(|| argument("--strategy knockoff needs --knockoff-csv"))?;
            MutingStrategy::Knockoff(load_knockoffs(path, &data, &all)?)
        }
        other => strategy_for(other, None, &data, &subsets[0], mute_seed)?,
    };
    let dir = prepare_out(&a.out.out)?;
    let report = importance_all(&data.train, &data.test, &subsets, &strategy, &fcfg, &pcfg)?;
    let json = ImportanceJson::from_report(&report);
    if let Some(dir) = dir {
        write_json_file(&dir.join("importance.json"), &json)?;
        for e in &report.entries {
            write_side_files(dir, &e.result, &format!("_{}", file_safe(&e.label)), a.out.svg)?;
        }
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for e in &json.entries {
        writeln!(out, "{}", e.summary_line())?;
    }
    Ok(())
}

fn cmd_overall<W: Write>(a: OverallArgs, out: &mut W) -> Result<()> {
    let [split_seed, forest_seed, perm_seed, mute_seed] = derived_seeds(a.perm.seed);
    let data = load_data(&a.data, split_seed)?;
    let all = FeatureSubset::all(data.train.p())?;
    let fcfg = forest_config(&a.forest, &data.train, forest_seed)?;
    let pcfg = PermTestConfig { n_perm: a.perm.n_perm as usize, seed: perm_seed, ..Default::default() };
    let strategy = strategy_for(a.strategy, a.knockoff_csv.as_deref(), &data, &all, mute_seed)?;
    let dir = prepare_out(&a.out.out)?;
    let result = overall_test(&data.train, &data.test, &strategy, &fcfg, &pcfg)?;
    let report = TestReport::from_result(&result);
    if let Some(dir) = dir {
        write_json_file(&dir.join("overall.json"), &report)?;
        write_side_files(dir, &result, "", a.out.svg)?;
    }
    writeln!(out, "{}", report.summary_line())?;
    Ok(())
}

fn sim_config(a: &SimulateArgs) -> Result<SimConfig> {
    let model = match a.model {
        ModelArg::Model1 => SimModel::Model1 { beta: a.beta.unwrap_or(10.0), sigma: a.sigma.unwrap_or(10.0) },
        ModelArg::Model2 => SimModel::Model2 { beta: a.beta.unwrap_or(10.0), sigma: a.sigma.unwrap_or(10.0) },
        ModelArg::Model3 => {
            if a.sigma.is_some() {
                return Err(argument("model3 has no noise sd"));
            }
            SimModel::Model3 { beta: a.beta.unwrap_or(1.0) }
        }
    };
    let mut cfg = if a.full_scale { SimConfig::full(model) } else { SimConfig::desk(model) };
    let pinned = match cfg.sweep {
        SweepParam::Sigma => a.sigma,
        SweepParam::Beta => a.beta,
    };
    if !a.grid.is_empty() {
        cfg.grid = a.grid.clone();
    } else if let Some(v) = pinned {
        // the swept parameter given alone means a one-point grid
        cfg.grid = vec![v];
    } else if let Some(points) = a.grid_points {
        let points = points as usize;
        cfg.grid = match cfg.sweep {
            SweepParam::Sigma => sigma_grid(points),
            SweepParam::Beta => {
                let (lo, hi) = (cfg.grid[0], cfg.grid[cfg.grid.len() - 1]);
                linspace(lo, hi, points)
            }
        };
    }
    if let Some(r) = a.replicates {
        cfg.replicates = r as usize;
    }
    if let Some(n) = a.n_train {
        cfg.n_train = n as usize;
    }
    if let Some(n) = a.n_test {
        cfg.n_test = n as usize;
    }
    if let Some(b) = a.b_trees {
        cfg.forest.n_trees = b as usize;
    }
    if let Some(e) = a.subsample_exponent {
        cfg.forest.subsample = SubsampleSize::Exponent(e);
    }
    if let Some(m) = a.mtry {
        cfg.forest.tree.mtry = Some(m as usize);
    }
    if let Some(m) = a.min_node {
        cfg.forest.tree.min_node_size = m as usize;
    }
    if let Some(n) = a.n_perm {
        cfg.perm.n_perm = n as usize;
    }
    cfg.muting = match a.muting {
        MutingArg::Permute => SimMuting::Permute,
        MutingArg::Exclude => SimMuting::Exclude,
    };
    cfg.alpha = a.alpha;
    cfg.master_seed = a.seed;
    if !a.target.is_empty() {
        let probe = cfg.model.generate(2, &mut Seed(0).rng())?;
        cfg.targets = a
            .target
            .iter()
            .map(|t| FeatureSubset::from_names(&probe, &t.split(',').map(str::trim).collect::<Vec<_>>()))
            .collect::<Result<_>>()?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_curve<W: Write>(out: &mut W, curve: &PowerCurve, prefix: &str) -> Result<()> {
    for point in &curve.points {
        for t in &point.targets {
            writeln!(
                out,
                "{prefix}grid={} target={} rejections={} replicates={} rejection_rate={} mean_p={} mean_z={}",
                json_number(point.value),
                t.label,
                t.rejections,
                t.replicates,
                json_number(t.rejection_rate),
                json_number(t.mean_p),
                json_number(t.mean_z)
            )?;
        }
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct SimResults<'a> {
    schema_version: u32,
    curves: Vec<LabelledCurve<'a>>,
}

#[derive(serde::Serialize)]
struct LabelledCurve<'a> {
    file: String,
    axis_value: Option<f64>,
    curve: &'a PowerCurve,
}

fn cmd_simulate<W: Write>(a: SimulateArgs, out: &mut W) -> Result<()> {
    let base = sim_config(&a)?;
    let dir = prepare_out(&a.out)?;
    let model = base.model.name();
    let mut runs: Vec<(String, Option<f64>, SimConfig)> = Vec::new();
    match a.robustness {
        None => runs.push((format!("curve_{model}.csv"), None, base.clone())),
        Some(kind) => {
            let axis = match kind {
                RobustnessArg::Trees => {
                    let v = if a.axis_values.is_empty() {
                        TREE_COUNT_GRID.to_vec()
                    } else {
                        a.axis_values
                            .iter()
                            .map(|&x| {
                                if x >= 1.0 && x.fract() == 0.0 {
                                    Ok(x as usize)
                                } else {
                                    Err(argument(format!("tree count {x} is not a positive integer")))
                                }
                            })
                            .collect::<Result<_>>()?
                    };
                    RobustnessAxis::TreeCount(v)
                }
                RobustnessArg::Exponent => RobustnessAxis::SubsampleExponent(if a.axis_values.is_empty() {
                    exponent_grid()
                } else {
                    a.axis_values.clone()
                }),
            };
            let tag = match kind {
                RobustnessArg::Trees => "trees",
                RobustnessArg::Exponent => "exponent",
            };
            for i in 0..axis.len() {
                let cfg = robustness_config(&base, &axis, i)?;
                cfg.validate()?;
                let v = match &axis {
                    RobustnessAxis::TreeCount(v) => v[i] as f64,
                    RobustnessAxis::SubsampleExponent(v) => v[i],
                };
                runs.push((format!("curve_{model}_{tag}_{}.csv", json_number(v)), Some(v), cfg));
            }
        }
    }
    let mut curves = Vec::with_capacity(runs.len());
    for (file, axis_value, cfg) in &runs {
        let curve = run_power_experiment(cfg)?;
        let prefix = match axis_value {
            Some(v) => format!("axis={} ", json_number(*v)),
            None => String::new(),
        };
        print_curve(out, &curve, &prefix)?;
        if let Some(dir) = dir {
            curve.write_csv(fs::File::create(dir.join(file))?)?;
        }
        curves.push(curve);
    }
    if let Some(dir) = dir {
        let files: Vec<String> = runs.iter().map(|r| r.0.clone()).collect();
        let mut manifest = SimManifest::new(&base, files.clone());
        if a.robustness.is_some() {
            // each axis value reruns with the same seeds; record the per-run configs
            manifest.config = runs[0].2.clone();
        }
        write_json_file(&dir.join("manifest.json"), &manifest)?;
        let results = SimResults {
            schema_version: SCHEMA_VERSION,
            curves: runs
                .iter()
                .zip(&curves)
                .map(|(r, c)| LabelledCurve { file: r.0.clone(), axis_value: r.1, curve: c })
                .collect(),
        };
        write_json_file(&dir.join("results.json"), &results)?;
    }
    Ok(())
}

fn cmd_diagnose<W: Write>(a: DiagnoseArgs, out: &mut W) -> Result<()> {
    if a.k < 1 || a.k >= a.n {
        return Err(argument(format!("need 1 <= k < n, got n={}, k={}", a.n, a.k)));
    }
    let d = subsample_diagnostics(a.n, a.k, a.b);
    if let Some(dir) = prepare_out(&a.out)? {
        write_json_file(&dir.join("diagnose.json"), &DiagnoseReport { schema_version: SCHEMA_VERSION, diagnostics: d })?;
    }
    writeln!(
        out,
        "n={} k={} B={} pair_disjoint_prob={} lemma1_log_term={} warning={}",
        d.n,
        d.k,
        d.n_trees,
        json_number(d.pair_disjoint_prob),
        json_number(d.lemma1_log_term),
        d.warning
    )?;
    if d.warning {
        eprintln!("warning: subsamples overlap too often for the trees to behave as nearly independent");
    }
    Ok(())
}
