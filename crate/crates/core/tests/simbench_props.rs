use rfperm::data::FeatureSubset;
use rfperm::rng::Seed;
use rfperm::simbench::{
    gen_model1, gen_model2, gen_model3, model1_mean, model3_prob, run_power_experiment, SimConfig, SimModel,
    CATEGORY_TWO,
};

fn corr(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn model1_marginals() {
    let d = gen_model1(60_000, 10.0, 2.0, &mut Seed(1).rng()).unwrap();
    for j in 5..10 {
        let share = d.column(j).iter().filter(|&&v| v == CATEGORY_TWO).count() as f64 / d.n() as f64;
        assert!((share - 1.0 / 3.0).abs() < 0.01, "x{} share {share}", j + 1);
    }
    for j in 0..5 {
        let m = d.column(j).iter().sum::<f64>() / d.n() as f64;
        assert!((m - 0.5).abs() < 0.01);
    }
    let resid: Vec<f64> = (0..d.n()).map(|i| d.y()[i] - model1_mean(10.0, &d.row(i))).collect();
    let mean = resid.iter().sum::<f64>() / d.n() as f64;
    let sd = (resid.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (d.n() - 1) as f64).sqrt();
    assert!(mean.abs() < 0.05 && (sd - 2.0).abs() < 0.05, "{mean} {sd}");
    assert_eq!(d.columns()[5].levels(), &["1", "2", "3"]);
}

#[test]
fn model2_has_ten_features() {
    let d = gen_model2(50, 10.0, 10.0, &mut Seed(2).rng()).unwrap();
    assert_eq!(d.p(), 10);
    assert!(d.kind(6).level_count() == Some(3));
}

#[test]
fn model3_ar1_structure() {
    let d = gen_model3(4000, 1.0, &mut Seed(3).rng()).unwrap();
    assert_eq!(d.p(), 500);
    let cols: Vec<&[f64]> = (0..d.p()).map(|j| d.column(j)).collect();
    let avg = |lag: usize| {
        let pairs = d.p() - lag;
        (0..pairs).map(|j| corr(cols[j], cols[j + lag])).sum::<f64>() / pairs as f64
    };
    assert!((avg(1) - 0.15).abs() < 0.01, "lag1 {}", avg(1));
    assert!((avg(2) - 0.0225).abs() < 0.01, "lag2 {}", avg(2));
    let var = cols
        .iter()
        .map(|c| {
            let m = c.iter().sum::<f64>() / c.len() as f64;
            c.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (c.len() - 1) as f64
        })
        .sum::<f64>()
        / d.p() as f64;
    assert!((var - 1.0).abs() < 0.02, "var {var}");
    assert!(d.y().iter().all(|&y| y == 0.0 || y == 1.0));
    let expected = (0..d.n()).map(|i| model3_prob(1.0, &d.row(i))).sum::<f64>() / d.n() as f64;
    let observed = d.y().iter().sum::<f64>() / d.n() as f64;
    assert!((expected - observed).abs() < 0.03);
}

fn tiny(model: SimModel) -> SimConfig {
    let mut cfg = SimConfig::desk(model);
    cfg.n_train = 60;
    cfg.n_test = 8;
    cfg.forest.n_trees = 6;
    cfg.perm.n_perm = 19;
    cfg.replicates = 4;
    cfg.grid = vec![5.0, 2.0];
    cfg.targets = vec![FeatureSubset::single(0, 10).unwrap(), FeatureSubset::new(vec![1, 6], 10).unwrap()];
    cfg
}

#[test]
fn power_experiment_is_reproducible_and_thread_invariant() {
    let cfg = tiny(SimModel::Model1 { beta: 10.0, sigma: 10.0 });
    let one = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| run_power_experiment(&cfg).unwrap());
    let many = rayon::ThreadPoolBuilder::new()
        .num_threads(3)
        .build()
        .unwrap()
        .install(|| run_power_experiment(&cfg).unwrap());
    assert_eq!(one, many);
    assert_eq!(one.points.len(), 2);
    assert_eq!(one.points[0].targets[1].label, "x2+x7");
    for pt in &one.points {
        for t in &pt.targets {
            assert_eq!(t.p_values.len(), 4);
            assert!(t.rejections <= t.replicates);
        }
    }
    let mut buf = Vec::new();
    one.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("grid_value,target,rejections,replicates,mean_p,mean_z\n"));
    assert_eq!(text.lines().count(), 1 + 2 * 2);
}

#[test]
fn different_master_seeds_differ() {
    let a = tiny(SimModel::Model2 { beta: 10.0, sigma: 10.0 });
    let mut b = a.clone();
    b.master_seed = 1;
    assert_ne!(run_power_experiment(&a).unwrap(), run_power_experiment(&b).unwrap());
}
