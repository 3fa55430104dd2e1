use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};
use rfperm::forest::PredictionMatrix;
use rfperm::permtest::{normality_of, p_value, permutation_test, split_delta, PermTestConfig};
use rfperm::rng::{Rng, Seed};

fn gaussian_matrix(b: usize, nt: usize, y: &[f64], rng: &mut Rng) -> PredictionMatrix {
    let rows = (0..b)
        .map(|_| (0..nt).map(|_| StandardNormal.sample(rng)).collect())
        .collect();
    PredictionMatrix::new(rows, y.to_vec()).unwrap()
}

fn cfg(n_perm: usize, seed: u64) -> PermTestConfig {
    PermTestConfig { n_perm, seed, ..Default::default() }
}

#[test]
fn exchangeable_rows_give_valid_level() {
    let reps = 2000;
    let (b, nt) = (10, 5);
    let mut rng = Seed(2024).rng();
    let y: Vec<f64> = (0..nt).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut p = Vec::with_capacity(reps);
    for r in 0..reps {
        let a = gaussian_matrix(b, nt, &y, &mut rng);
        let m = gaussian_matrix(b, nt, &y, &mut rng);
        p.push(permutation_test(&a, &m, &cfg(99, r as u64)).unwrap().p_value);
    }
    for alpha in [0.01, 0.05, 0.1, 0.5] {
        let rate = p.iter().filter(|&&v| v <= alpha).count() as f64 / reps as f64;
        let bound = alpha + 3.0 * (alpha * (1.0 - alpha) / reps as f64).sqrt();
        assert!(rate <= bound, "alpha {alpha}: rate {rate} > {bound}");
    }
}

#[test]
fn shifted_muted_forest_is_detected() {
    let mut rng = Seed(8).rng();
    let y = vec![0.0; 6];
    let a = gaussian_matrix(20, 6, &y, &mut rng);
    let rows: Vec<Vec<f64>> = (0..20)
        .map(|_| (0..6).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); 3.0 + z }).collect())
        .collect();
    let m = PredictionMatrix::new(rows, y).unwrap();
    let out = permutation_test(&a, &m, &cfg(199, 1)).unwrap();
    assert_eq!(out.p_value, 1.0 / 200.0);
    assert!(out.z_score > 3.0);
}

#[test]
fn permuted_deltas_are_thread_count_invariant() {
    let mut rng = Seed(4).rng();
    let y = vec![0.5; 7];
    let a = gaussian_matrix(15, 7, &y, &mut rng);
    let m = gaussian_matrix(15, 7, &y, &mut rng);
    let run = |t: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(t).build().unwrap();
        pool.install(|| permutation_test(&a, &m, &cfg(300, 12)).unwrap())
    };
    let one = run(1);
    let many = run(3);
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&one.deltas_permuted), bits(&many.deltas_permuted));
    assert_eq!(one.p_value.to_bits(), many.p_value.to_bits());
}

#[test]
fn gaussian_deltas_look_normal() {
    let mut rng = Seed(31).rng();
    let d: Vec<f64> = (0..2000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let r = normality_of(&d).unwrap();
    assert!(r.ks_distance < 0.04, "{}", r.ks_distance);
    assert!(r.skewness.abs() < 0.2 && r.excess_kurtosis.abs() < 0.4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn swapping_forests_negates_observed_delta(seed in any::<u64>(), b in 1usize..8, nt in 1usize..6) {
        let mut rng = Seed(seed).rng();
        let y: Vec<f64> = (0..nt).map(|_| StandardNormal.sample(&mut rng)).collect();
        let a = gaussian_matrix(b, nt, &y, &mut rng);
        let m = gaussian_matrix(b, nt, &y, &mut rng);
        let ab = permutation_test(&a, &m, &cfg(5, seed)).unwrap();
        let ba = permutation_test(&m, &a, &cfg(5, seed)).unwrap();
        prop_assert_eq!(ab.delta_observed, -ba.delta_observed);
        prop_assert_eq!(ab.mse_original, ba.mse_muted);
    }

    #[test]
    fn complement_split_negates_delta(seed in any::<u64>(), b in 1usize..8, nt in 1usize..6) {
        let mut rng = Seed(seed).rng();
        let y = vec![0.0; nt];
        let pooled = gaussian_matrix(2 * b, nt, &y, &mut rng);
        let mut chosen = rand::seq::index::sample(&mut rng, 2 * b, b).into_vec();
        chosen.sort_unstable();
        let rest: Vec<usize> = (0..2 * b).filter(|i| !chosen.contains(i)).collect();
        prop_assert_eq!(split_delta(&pooled, &chosen).unwrap(), -split_delta(&pooled, &rest).unwrap());
    }

    #[test]
    fn p_value_is_on_the_permutation_lattice(
        obs in -3.0f64..3.0,
        deltas in proptest::collection::vec(-3.0f64..3.0, 1..400),
    ) {
        let p = p_value(obs, &deltas);
        let scaled = p * (deltas.len() + 1) as f64;
        prop_assert!((scaled - scaled.round()).abs() < 1e-9);
        let hits = deltas.iter().filter(|&&d| d >= obs).count();
        prop_assert_eq!(scaled.round() as usize, 1 + hits);
        prop_assert!(p >= 1.0 / (deltas.len() + 1) as f64 && p <= 1.0);
    }
}
