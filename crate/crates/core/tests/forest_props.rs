mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rfperm::forest::{fit_forest, forest_mse, predict_matrix, subsample_diagnostics, ForestConfig, PredictionMatrix, SubsampleSize};
use rfperm::rng::Seed;
use rfperm::tree::{draw_subsample, fit_tree, TreeConfig};

use common::numeric_dataset;

fn binom(n: u64, k: u64) -> u128 {
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn config(n_trees: usize, seed: u64) -> ForestConfig {
    ForestConfig {
        n_trees,
        subsample: SubsampleSize::Exponent(0.6),
        tree: TreeConfig::default(),
        master_seed: seed,
    }
}

#[test]
fn tree_i_replays_from_its_own_stream() {
    let d = numeric_dataset(80, 4, &mut Seed(5).rng());
    let cfg = config(7, 11);
    let f = fit_forest(&d, &cfg).unwrap();
    let k = cfg.subsample.resolve(80).unwrap();
    for (i, t) in f.trees().iter().enumerate() {
        let mut rng = Seed(11).child(i as u64).rng();
        let rows = draw_subsample(80, k, &mut rng).unwrap();
        assert_eq!(t, &fit_tree(&d, &rows, &cfg.tree, &mut rng).unwrap());
    }
}

#[test]
fn forest_is_identical_across_thread_counts() {
    let d = numeric_dataset(120, 5, &mut Seed(9).rng());
    let test = numeric_dataset(20, 5, &mut Seed(10).rng());
    let cfg = config(40, 3);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| predict_matrix(&fit_forest(&d, &cfg).unwrap(), &test).unwrap())
    };
    let one = run(1);
    for t in [2, 4] {
        let other = run(t);
        for i in 0..one.n_rows() {
            let a: Vec<u64> = one.row(i).iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = other.row(i).iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b);
        }
    }
}

#[test]
fn exact_disjoint_probability_matches_integer_binomials() {
    for (n, k) in [(10u64, 2u64), (10, 5), (30, 7), (100, 5), (60, 30)] {
        let exact = binom(n - k, k) as f64 / binom(n, k) as f64;
        let d = subsample_diagnostics(n as usize, k as usize, 2);
        assert!((d.pair_disjoint_prob - exact).abs() <= 1e-10 * exact, "{n} {k}");
    }
    assert!((subsample_diagnostics(10, 5, 2).pair_disjoint_prob - 1.0 / 252.0).abs() < 1e-14);
    assert_eq!(subsample_diagnostics(10, 6, 2).pair_disjoint_prob, 0.0);
}

#[test]
fn monte_carlo_disjointness_small() {
    let (n, k) = (10, 2);
    let mut rng = Seed(77).rng();
    let pairs = 20_000;
    let hits = (0..pairs)
        .filter(|_| {
            let a = draw_subsample(n, k, &mut rng).unwrap();
            let b = draw_subsample(n, k, &mut rng).unwrap();
            a.iter().all(|i| !b.contains(i))
        })
        .count();
    let freq = hits as f64 / pairs as f64;
    assert!((freq - subsample_diagnostics(n, k, 2).pair_disjoint_prob).abs() < 0.015, "{freq}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn forest_mse_ignores_tree_order(
        b in 1usize..12,
        nt in 1usize..8,
        vals in proptest::collection::vec(-50.0f64..50.0, 12 * 8),
        ys in proptest::collection::vec(-50.0f64..50.0, 8),
        seed in any::<u64>(),
    ) {
        let rows: Vec<Vec<f64>> = (0..b).map(|i| vals[i * 8..i * 8 + nt].to_vec()).collect();
        let m = PredictionMatrix::new(rows, ys[..nt].to_vec()).unwrap();
        let mut order: Vec<usize> = (0..b).collect();
        order.shuffle(&mut Seed(seed).rng());
        let shuffled = m.reorder_rows(&order).unwrap();
        let a = forest_mse(&m, None).unwrap();
        let c = forest_mse(&shuffled, None).unwrap();
        // summation order changes; allow rounding only
        prop_assert!((a - c).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn subsample_size_is_in_range(n in 2usize..5000, e in 0.01f64..0.99) {
        if let Ok(k) = SubsampleSize::Exponent(e).resolve(n) {
            prop_assert!(k >= 1 && k < n);
            prop_assert_eq!(k, (n as f64).powf(e).round() as usize);
        }
    }
}
