//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use proptest::prelude::*;
use rfperm::data::{Column, Dataset};
use rfperm::tree::{Node, RegressionTree, SplitRule};

/// Two-pass SSE of `y[rows]` around its mean, rows visited in index order.
pub fn sse(y: &[f64], rows: &[usize]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let m = rows.iter().map(|&i| y[i]).sum::<f64>() / rows.len() as f64;
    rows.iter().map(|&i| (y[i] - m).powi(2)).sum()
}

/// Split `rows` (ascending) by membership.
pub fn partition(rows: &[usize], left: impl Fn(usize) -> bool) -> (Vec<usize>, Vec<usize>) {
    rows.iter().partition(|&&i| left(i))
}

/// Every admissible binary partition of `rows` at the root: midpoints between
/// distinct values of numeric features, and every nonempty proper subset of
/// the observed levels of categorical features.
pub fn all_root_partitions(d: &Dataset, rows: &[usize]) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut out = Vec::new();
    for j in 0..d.p() {
        let col = d.column(j);
        match d.kind(j).level_count() {
            None => {
                let mut vals: Vec<f64> = rows.iter().map(|&i| col[i]).collect();
                vals.sort_by(f64::total_cmp);
                vals.dedup();
                for w in vals.windows(2) {
                    let t = (w[0] + w[1]) / 2.0;
                    out.push(partition(rows, |i| col[i] <= t));
                }
            }
            Some(_) => {
                let mut levels: Vec<u32> = rows.iter().map(|&i| col[i] as u32).collect();
                levels.sort_unstable();
                levels.dedup();
                let l = levels.len();
                for mask in 1..(1u32 << l) - 1 {
                    let set: Vec<u32> = (0..l).filter(|b| mask >> b & 1 == 1).map(|b| levels[b]).collect();
                    out.push(partition(rows, |i| set.contains(&(col[i] as u32))));
                }
            }
        }
    }
    out
}

/// Minimum total child SSE over all root partitions, or `None` when no split exists.
pub fn oracle_min_root_sse(d: &Dataset, rows: &[usize]) -> Option<f64> {
    all_root_partitions(d, rows)
        .iter()
        .map(|(l, r)| sse(d.y(), l) + sse(d.y(), r))
        .min_by(f64::total_cmp)
}

/// Total child SSE of the tree's root split, recomputed by the oracle.
pub fn root_split_sse(tree: &RegressionTree, d: &Dataset, rows: &[usize]) -> Option<f64> {
    match tree.root() {
        Node::Leaf { .. } => None,
        Node::Split { rule, .. } => {
            let (l, r) = partition_by_rule(d, rows, rule);
            Some(sse(d.y(), &l) + sse(d.y(), &r))
        }
    }
}

pub fn partition_by_rule(d: &Dataset, rows: &[usize], rule: &SplitRule) -> (Vec<usize>, Vec<usize>) {
    let col = d.column(rule.feature);
    partition(rows, |i| rule.goes_left_value(col[i]))
}

/// Small mixed-type dataset: up to 3 features, numeric or categorical with 2..=4 levels.
pub fn small_dataset(max_n: usize, max_p: usize) -> impl Strategy<Value = Dataset> {
    (2..=max_n, 1..=max_p).prop_flat_map(|(n, p)| {
        let col = (any::<bool>(), 2u32..=4).prop_flat_map(move |(cat, levels)| {
            if cat {
                proptest::collection::vec(0..levels, n)
                    .prop_map(move |v| (Some(levels), v.into_iter().map(f64::from).collect::<Vec<_>>()))
                    .boxed()
            } else {
                // coarse grid so ties and duplicate values occur
                proptest::collection::vec(-6i32..6, n)
                    .prop_map(|v| (None, v.into_iter().map(|x| x as f64 / 2.0).collect()))
                    .boxed()
            }
        });
        (
            proptest::collection::vec(col, p),
            proptest::collection::vec(-100.0f64..100.0, n),
        )
            .prop_map(|(cols, y)| {
                let columns = cols
                    .into_iter()
                    .enumerate()
                    .map(|(j, (levels, v))| match levels {
                        Some(l) => Column::categorical(
                            format!("x{}", j + 1),
                            (0..l).map(|i| format!("l{i}")).collect(),
                            v,
                        ),
                        None => Column::numeric(format!("x{}", j + 1), v),
                    })
                    .collect();
                Dataset::new(columns, "y", y).unwrap()
            })
    })
}

/// Numeric dataset with distinct continuous features.
pub fn numeric_dataset(n: usize, p: usize, rng: &mut rfperm::rng::Rng) -> Dataset {
    use rand::Rng;
    let cols = (0..p).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect();
    let y = (0..n).map(|_| rng.random::<f64>() * 10.0).collect();
    Dataset::from_numeric_columns(cols, y).unwrap()
}

/// Seeded instance with `2..=max_n` rows and `1..=max_p` mixed-type features.
pub fn random_small_dataset(max_n: usize, max_p: usize, rng: &mut rfperm::rng::Rng) -> Dataset {
    use rand::Rng;
    let n = rng.random_range(2..=max_n);
    let p = rng.random_range(1..=max_p);
    let columns = (0..p)
        .map(|j| {
            let name = format!("x{}", j + 1);
            if rng.random_bool(0.3) {
                let l = rng.random_range(2..=4u32);
                let v = (0..n).map(|_| rng.random_range(0..l) as f64).collect();
                Column::categorical(name, (0..l).map(|i| format!("l{i}")).collect(), v)
            } else {
                let v = (0..n).map(|_| rng.random_range(-6..6) as f64 / 2.0).collect();
                Column::numeric(name, v)
            }
        })
        .collect();
    let y = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
    Dataset::new(columns, "y", y).unwrap()
}
