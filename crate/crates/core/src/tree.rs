//! Greedy CART regression trees grown on a row subsample.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureKind};
use crate::error::{argument, Result};
use crate::rng::Rng;

/// Above this many levels a categorical feature is split one-vs-rest
/// instead of by exhaustive subset search.
pub const EXHAUSTIVE_LEVEL_LIMIT: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    /// Features drawn per split; `None` means `ceil(p / 3)`.
    pub mtry: Option<usize>,
    /// Minimum number of rows in each child of a split.
    pub min_node_size: usize,
    pub max_depth: Option<usize>,
    /// Each child must hold at least this fraction of the subsample.
    pub min_split_fraction: f64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            mtry: None,
            min_node_size: 1,
            max_depth: None,
            min_split_fraction: 0.0,
        }
    }
}

impl TreeConfig {
    pub fn resolve_mtry(&self, p: usize) -> Result<usize> {
        match self.mtry {
            None => Ok(p.div_ceil(3).max(1)),
            Some(0) => Err(argument("mtry must be positive")),
            Some(m) if m > p => Err(argument(format!("mtry={m} exceeds p={p}"))),
            Some(m) => Ok(m),
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        self.resolve_mtry(p)?;
        if self.min_node_size == 0 {
            return Err(argument("min_node_size must be positive"));
        }
        if self.max_depth == Some(0) {
            return Err(argument("max_depth must be positive"));
        }
        if !(0.0..0.5).contains(&self.min_split_fraction) {
            return Err(argument(format!(
                "min_split_fraction {} not in [0, 0.5)",
                self.min_split_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    /// Numeric: go left when `x <= threshold`.
    Threshold(f64),
    /// Categorical: go left when the level is listed (sorted). Any other
    /// level, including one never seen in training, goes right.
    LeftLevels(Vec<u32>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRule {
    pub feature: usize,
    pub predicate: Predicate,
}

impl SplitRule {
    #[inline]
    pub fn goes_left_value(&self, v: f64) -> bool {
        match &self.predicate {
            Predicate::Threshold(t) => v <= *t,
            Predicate::LeftLevels(levels) => {
                v >= 0.0 && v.fract() == 0.0 && levels.binary_search(&(v as u32)).is_ok()
            }
        }
    }

    #[inline]
    pub fn goes_left(&self, x: &[f64]) -> bool {
        self.goes_left_value(x[self.feature])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Leaf { value: f64, count: usize },
    Split { rule: SplitRule, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
    n_features: usize,
    trained_on_rows: Vec<usize>,
}

impl RegressionTree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn trained_on_rows(&self) -> &[usize] {
        &self.trained_on_rows
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Index of the leaf whose region contains `x`.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { .. } => return at,
                Node::Split { rule, left, right } => {
                    at = if rule.goes_left(x) { *left } else { *right };
                }
            }
        }
    }

    #[inline]
    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(x)] {
            Node::Leaf { value, .. } => value,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(argument(format!(
                "feature vector has {} entries, tree expects {}",
                x.len(),
                self.n_features
            )));
        }
        Ok(self.predict_unchecked(x))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `k` distinct row indices drawn uniformly without replacement from `0..n`.
pub fn draw_subsample(n: usize, k: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    if k == 0 || k >= n {
        return Err(argument(format!("subsample size {k} must satisfy 1 <= k < n={n}")));
    }
    Ok(rand::seq::index::sample(rng, n, k).into_vec())
}

/// Fit a CART tree on `rows` of `d`.
pub fn fit_tree(d: &Dataset, rows: &[usize], cfg: &TreeConfig, rng: &mut Rng) -> Result<RegressionTree> {
    if rows.is_empty() {
        return Err(argument("cannot fit a tree on zero rows"));
    }
    if let Some(&bad) = rows.iter().find(|&&r| r >= d.n()) {
        return Err(argument(format!("row {bad} out of range for n={}", d.n())));
    }
    cfg.validate(d.p())?;
    let gamma_min = (cfg.min_split_fraction * rows.len() as f64).ceil() as usize;
    let mut b = Builder {
        d,
        y: d.y(),
        mtry: cfg.resolve_mtry(d.p())?,
        min_child: cfg.min_node_size.max(gamma_min).max(1),
        max_depth: cfg.max_depth,
        nodes: Vec::new(),
        pairs: Vec::with_capacity(rows.len()),
        order: (0..d.p()).collect(),
        scratch: Vec::with_capacity(rows.len()),
    };
    let mut work = rows.to_vec();
    b.grow(&mut work, 0, rng);
    Ok(RegressionTree {
        nodes: b.nodes,
        n_features: d.p(),
        trained_on_rows: rows.to_vec(),
    })
}

#[derive(Debug)]
struct Candidate {
    feature: usize,
    sse: f64,
    predicate: Predicate,
}

impl Candidate {
    fn beats(&self, other: &Candidate) -> bool {
        self.sse < other.sse || (self.sse == other.sse && self.feature < other.feature)
    }
}

struct Builder<'a> {
    d: &'a Dataset,
    y: &'a [f64],
    mtry: usize,
    min_child: usize,
    max_depth: Option<usize>,
    nodes: Vec<Node>,
    pairs: Vec<(f64, f64)>,
    order: Vec<usize>,
    scratch: Vec<usize>,
}

impl Builder<'_> {
    fn grow(&mut self, rows: &mut [usize], depth: usize, rng: &mut Rng) -> usize {
        let at = self.nodes.len();
        // leaf means are summed in row-index order so they can be replayed exactly
        rows.sort_unstable();
        let m = rows.len();
        let mean = rows.iter().map(|&r| self.y[r]).sum::<f64>() / m as f64;
        self.nodes.push(Node::Leaf { value: mean, count: m });

        let first = self.y[rows[0]];
        let pure = rows.iter().all(|&r| self.y[r] == first);
        let depth_capped = self.max_depth.is_some_and(|md| depth >= md);
        if pure || depth_capped || m < 2 * self.min_child {
            return at;
        }
        let Some(best) = self.best_split(rows, mean, rng) else {
            return at;
        };
        let rule = SplitRule {
            feature: best.feature,
            predicate: best.predicate,
        };

        let col = self.d.column(rule.feature);
        self.scratch.clear();
        let mut n_left = 0;
        for i in 0..m {
            let r = rows[i];
            if rule.goes_left_value(col[r]) {
                rows[n_left] = r;
                n_left += 1;
            } else {
                self.scratch.push(r);
            }
        }
        rows[n_left..].copy_from_slice(&self.scratch);
        debug_assert!(n_left >= self.min_child && m - n_left >= self.min_child);

        let (l, r) = rows.split_at_mut(n_left);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[at] = Node::Split { rule, left, right };
        at
    }

    /// Visit features in a random order; stop after `mtry` of them once some
    /// valid split has been found, otherwise keep drawing until features run out.
    fn best_split(&mut self, rows: &[usize], mean: f64, rng: &mut Rng) -> Option<Candidate> {
        let p = self.order.len();
        for (i, o) in self.order.iter_mut().enumerate() {
            *o = i;
        }
        let mut best: Option<Candidate> = None;
        for t in 0..p {
            if t >= self.mtry && best.is_some() {
                break;
            }
            let pick = rng.random_range(t..p);
            self.order.swap(t, pick);
            let j = self.order[t];
            let cand = match self.d.kind(j) {
                FeatureKind::Numeric => self.numeric_split(j, rows, mean),
                FeatureKind::Categorical { levels } => self.categorical_split(j, levels, rows, mean),
            };
            if let Some(c) = cand {
                if best.as_ref().is_none_or(|b| c.beats(b)) {
                    best = Some(c);
                }
            }
        }
        best
    }

    fn numeric_split(&mut self, j: usize, rows: &[usize], mean: f64) -> Option<Candidate> {
        let col = self.d.column(j);
        self.pairs.clear();
        self.pairs
            .extend(rows.iter().map(|&r| (col[r], self.y[r] - mean)));
        self.pairs
            .sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let m = self.pairs.len();
        if self.pairs[0].0 == self.pairs[m - 1].0 {
            return None;
        }
        let (tot_s, tot_q) = self
            .pairs
            .iter()
            .fold((0.0, 0.0), |(s, q), &(_, v)| (s + v, q + v * v));

        let mut best: Option<(f64, usize)> = None;
        let (mut s, mut q) = (0.0, 0.0);
        for i in 0..m - 1 {
            let v = self.pairs[i].1;
            s += v;
            q += v * v;
            if self.pairs[i].0 == self.pairs[i + 1].0 {
                continue;
            }
            let nl = i + 1;
            let nr = m - nl;
            if nl < self.min_child || nr < self.min_child {
                continue;
            }
            let sr = tot_s - s;
            let sse = (q - s * s / nl as f64) + ((tot_q - q) - sr * sr / nr as f64);
            if best.is_none_or(|(b, _)| sse < b) {
                best = Some((sse, i));
            }
        }
        best.map(|(sse, i)| {
            let (lo, hi) = (self.pairs[i].0, self.pairs[i + 1].0);
            let mut threshold = lo + (hi - lo) / 2.0;
            if threshold >= hi || threshold < lo {
                threshold = lo;
            }
            Candidate {
                feature: j,
                sse,
                predicate: Predicate::Threshold(threshold),
            }
        })
    }

    fn categorical_split(&self, j: usize, levels: usize, rows: &[usize], mean: f64) -> Option<Candidate> {
        let col = self.d.column(j);
        let mut count = vec![0usize; levels];
        let mut sum = vec![0.0; levels];
        let mut sq = vec![0.0; levels];
        for &r in rows {
            let l = col[r] as usize;
            let v = self.y[r] - mean;
            count[l] += 1;
            sum[l] += v;
            sq[l] += v * v;
        }
        let present: Vec<usize> = (0..levels).filter(|&l| count[l] > 0).collect();
        if present.len() < 2 {
            return None;
        }
        let m = rows.len();
        let (tot_s, tot_q) = present
            .iter()
            .fold((0.0, 0.0), |(s, q), &l| (s + sum[l], q + sq[l]));

        let score = |left: &[usize]| -> Option<f64> {
            let (mut nl, mut s, mut q) = (0usize, 0.0, 0.0);
            for &l in left {
                nl += count[l];
                s += sum[l];
                q += sq[l];
            }
            let nr = m - nl;
            if nl < self.min_child || nr < self.min_child {
                return None;
            }
            let sr = tot_s - s;
            Some((q - s * s / nl as f64) + ((tot_q - q) - sr * sr / nr as f64))
        };

        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut consider = |left: Vec<usize>| {
            if let Some(sse) = score(&left) {
                let better = match &best {
                    None => true,
                    Some((b, bl)) => sse < *b || (sse == *b && left < *bl),
                };
                if better {
                    best = Some((sse, left));
                }
            }
        };
        if levels <= EXHAUSTIVE_LEVEL_LIMIT {
            let k = present.len();
            for mask in 1u32..(1u32 << k) - 1 {
                let left: Vec<usize> = (0..k).filter(|b| mask >> b & 1 == 1).map(|b| present[b]).collect();
                consider(left);
            }
        } else {
            for &l in &present {
                consider(vec![l]);
            }
        }
        best.map(|(sse, left)| Candidate {
            feature: j,
            sse,
            predicate: Predicate::LeftLevels(left.into_iter().map(|l| l as u32).collect()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Column;
    use crate::rng::Seed;

    fn line_data() -> Dataset {
        Dataset::from_numeric_columns(vec![vec![0.0, 1.0, 2.0, 3.0]], vec![0.0, 0.0, 1.0, 1.0]).unwrap()
    }

    #[test]
    fn single_row_gives_constant_tree() {
        let d = Dataset::from_numeric_columns(vec![vec![1.0, 2.0]], vec![3.7, 9.0]).unwrap();
        let t = fit_tree(&d, &[0], &TreeConfig::default(), &mut Seed(1).rng()).unwrap();
        assert_eq!(t.nodes().len(), 1);
        assert_eq!(t.predict(&[-100.0]).unwrap(), 3.7);
        assert_eq!(t.predict(&[100.0]).unwrap(), 3.7);
    }

    #[test]
    fn step_function_is_split_between_one_and_two() {
        let d = line_data();
        let cfg = TreeConfig { mtry: Some(1), ..Default::default() };
        let t = fit_tree(&d, &[0, 1, 2, 3], &cfg, &mut Seed(5).rng()).unwrap();
        match t.root() {
            Node::Split { rule, .. } => match rule.predicate {
                Predicate::Threshold(th) => assert!(th > 1.0 && th <= 2.0, "threshold {th}"),
                _ => panic!("expected numeric split"),
            },
            _ => panic!("expected a split"),
        }
        assert_eq!(t.n_leaves(), 2);
        assert_eq!(t.predict(&[0.5]).unwrap(), 0.0);
        assert_eq!(t.predict(&[2.5]).unwrap(), 1.0);
    }

    #[test]
    fn constant_response_is_one_leaf() {
        let d = Dataset::from_numeric_columns(
            vec![vec![0.0, 5.0, 2.0, 9.0], vec![1.0, 1.0, 3.0, 0.0]],
            vec![2.0; 4],
        )
        .unwrap();
        let t = fit_tree(&d, &[0, 1, 2, 3], &TreeConfig::default(), &mut Seed(2).rng()).unwrap();
        assert_eq!(t.nodes().len(), 1);
    }

    #[test]
    fn unseen_level_routes_right() {
        let rule = SplitRule {
            feature: 0,
            predicate: Predicate::LeftLevels(vec![0]),
        };
        assert!(rule.goes_left(&[0.0]));
        assert!(!rule.goes_left(&[2.0]));
        assert!(!rule.goes_left(&[7.0]));
    }

    #[test]
    fn categorical_split_separates_levels() {
        let levels: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let d = Dataset::new(
            vec![Column::categorical("g", levels, vec![0.0, 1.0, 2.0, 0.0, 1.0, 2.0])],
            "y",
            vec![1.0, 5.0, 1.0, 1.0, 5.0, 1.0],
        )
        .unwrap();
        let t = fit_tree(&d, &[0, 1, 2, 3, 4, 5], &TreeConfig::default(), &mut Seed(3).rng()).unwrap();
        match t.root() {
            // {0,2} and {1} give the same partition; the smaller subset wins
            Node::Split { rule, .. } => assert_eq!(rule.predicate, Predicate::LeftLevels(vec![0, 2])),
            _ => panic!("expected split"),
        }
        assert_eq!(t.predict(&[1.0]).unwrap(), 5.0);
        assert_eq!(t.predict(&[2.0]).unwrap(), 1.0);
    }

    #[test]
    fn wrong_arity_and_empty_rows_are_errors() {
        let d = line_data();
        assert!(fit_tree(&d, &[], &TreeConfig::default(), &mut Seed(0).rng()).is_err());
        let t = fit_tree(&d, &[0, 3], &TreeConfig::default(), &mut Seed(0).rng()).unwrap();
        assert!(t.predict(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn strict_subsampling() {
        let mut rng = Seed(9).rng();
        assert!(draw_subsample(5, 5, &mut rng).is_err());
        assert!(draw_subsample(5, 0, &mut rng).is_err());
        let mut s = draw_subsample(1000, 31, &mut rng).unwrap();
        s.sort_unstable();
        s.dedup();
        assert_eq!(s.len(), 31);
    }

    #[test]
    fn min_split_fraction_bounds_children() {
        let x: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let y: Vec<f64> = (0..40).map(|i| ((i * 7) % 11) as f64).collect();
        let d = Dataset::from_numeric_columns(vec![x], y).unwrap();
        let rows: Vec<usize> = (0..40).collect();
        let cfg = TreeConfig { min_split_fraction: 0.2, ..Default::default() };
        let t = fit_tree(&d, &rows, &cfg, &mut Seed(4).rng()).unwrap();
        for n in t.nodes() {
            if let Node::Leaf { count, .. } = n {
                assert!(*count >= 8, "leaf with {count} rows");
            }
        }
    }

    #[test]
    fn max_depth_caps_tree() {
        let x: Vec<f64> = (0..64).map(|i| i as f64).collect();
        let y = x.clone();
        let d = Dataset::from_numeric_columns(vec![x], y).unwrap();
        let rows: Vec<usize> = (0..64).collect();
        let cfg = TreeConfig { max_depth: Some(2), ..Default::default() };
        let t = fit_tree(&d, &rows, &cfg, &mut Seed(4).rng()).unwrap();
        assert_eq!(t.n_leaves(), 4);
    }

    #[test]
    fn default_mtry_is_ceil_third() {
        let c = TreeConfig::default();
        assert_eq!(c.resolve_mtry(10).unwrap(), 4);
        assert_eq!(c.resolve_mtry(1).unwrap(), 1);
        assert_eq!(c.resolve_mtry(3).unwrap(), 1);
        assert!(TreeConfig { mtry: Some(4), ..Default::default() }.resolve_mtry(3).is_err());
    }

    #[test]
    fn json_dump_parses() {
        let d = line_data();
        let t = fit_tree(&d, &[0, 1, 2, 3], &TreeConfig::default(), &mut Seed(5).rng()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&t.to_json().unwrap()).unwrap();
        assert!(v["nodes"].is_array());
    }
}
