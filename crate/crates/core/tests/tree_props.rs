mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use rfperm::rng::Seed;
use rfperm::tree::{fit_tree, Node, TreeConfig};

use common::{numeric_dataset, oracle_min_root_sse, root_split_sse, small_dataset};

fn full_mtry(p: usize) -> TreeConfig {
    TreeConfig { mtry: Some(p), ..TreeConfig::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn root_split_attains_exhaustive_minimum(d in small_dataset(12, 3), seed in any::<u64>()) {
        let rows: Vec<usize> = (0..d.n()).collect();
        let tree = fit_tree(&d, &rows, &full_mtry(d.p()), &mut Seed(seed).rng()).unwrap();
        let best = oracle_min_root_sse(&d, &rows);
        match root_split_sse(&tree, &d, &rows) {
            Some(got) => prop_assert_eq!(got, best.unwrap()),
            None => {
                let y0 = d.y()[0];
                prop_assert!(best.is_none() || d.y().iter().all(|&v| v == y0));
            }
        }
    }

    #[test]
    fn leaf_values_are_means_of_their_rows(d in small_dataset(12, 3), seed in any::<u64>(), mtry in 1usize..=3) {
        let rows: Vec<usize> = (0..d.n()).collect();
        let cfg = TreeConfig { mtry: Some(mtry.min(d.p())), ..TreeConfig::default() };
        let tree = fit_tree(&d, &rows, &cfg, &mut Seed(seed).rng()).unwrap();
        let mut by_leaf: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &i in &rows {
            by_leaf.entry(tree.leaf_index(&d.row(i))).or_default().push(i);
        }
        for (leaf, members) in by_leaf {
            let Node::Leaf { value, count } = &tree.nodes()[leaf] else { panic!("not a leaf") };
            prop_assert_eq!(*count, members.len());
            let mean = members.iter().map(|&i| d.y()[i]).sum::<f64>() / members.len() as f64;
            prop_assert_eq!(*value, mean);
        }
    }

    #[test]
    fn same_seed_same_tree(d in small_dataset(12, 3), seed in any::<u64>()) {
        let rows: Vec<usize> = (0..d.n()).collect();
        let cfg = TreeConfig { mtry: Some(1), ..TreeConfig::default() };
        let a = fit_tree(&d, &rows, &cfg, &mut Seed(seed).rng()).unwrap();
        let b = fit_tree(&d, &rows, &cfg, &mut Seed(seed).rng()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn fully_grown_tree_interpolates(n in 2usize..60, p in 1usize..5, mtry in 1usize..5, seed in any::<u64>()) {
        let d = numeric_dataset(n, p, &mut Seed(seed).rng());
        let rows: Vec<usize> = (0..n).collect();
        let cfg = TreeConfig { mtry: Some(mtry.min(p)), ..TreeConfig::default() };
        let tree = fit_tree(&d, &rows, &cfg, &mut Seed(seed).child(1).rng()).unwrap();
        for i in 0..n {
            prop_assert_eq!(tree.predict(&d.row(i)).unwrap(), d.y()[i]);
        }
    }

    #[test]
    fn children_respect_min_node_size(n in 4usize..60, min_node in 1usize..6, seed in any::<u64>()) {
        let d = numeric_dataset(n, 3, &mut Seed(seed).rng());
        let rows: Vec<usize> = (0..n).collect();
        let cfg = TreeConfig { min_node_size: min_node, ..TreeConfig::default() };
        let tree = fit_tree(&d, &rows, &cfg, &mut Seed(seed).child(1).rng()).unwrap();
        for node in tree.nodes() {
            if let Node::Leaf { count, .. } = node {
                prop_assert!(*count >= min_node.min(n));
            }
        }
    }
}
