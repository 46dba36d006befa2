use proptest::prelude::*;
use settle_core::mlcore::{
    bootstrap_odds_ratios, fit, group_kfold, loss_and_gradient, nested_cv, stratified_kfold, Dataset, ModelConfig,
};
use settle_core::rng::SplitMix64;

fn dataset(x: Vec<f64>, y: Vec<u8>, d: usize, n_standardized: usize, groups: Vec<u16>) -> Dataset {
    let n_groups = groups.iter().copied().max().map_or(0, |g| g as usize + 1);
    Dataset {
        x,
        y,
        d,
        n_standardized,
        groups,
        group_names: (0..n_groups).map(|g| format!("C{g}")).collect(),
        feature_names: (0..d).map(|j| format!("x{j}")).collect(),
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Rows drawn from a known logistic model over standard normal features.
fn generative(n: usize, w: &[f64], b: f64, seed: u64, n_groups: u16) -> Dataset {
    let mut rng = SplitMix64::new(seed);
    let d = w.len();
    let mut x = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    let mut groups = Vec::with_capacity(n);
    for i in 0..n {
        let row: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let m = b + row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
        y.push(rng.bernoulli(sigmoid(m)) as u8);
        x.extend(row);
        groups.push((i % n_groups as usize) as u16);
    }
    dataset(x, y, d, 0, groups)
}

fn objective(x: &[f64], y: &[u8], d: usize, p: &[f64], lambda: f64) -> f64 {
    loss_and_gradient(x, y, d, &p[..d], p[d], lambda).0
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = SplitMix64::new(11);
    for _ in 0..50 {
        let n = 1 + rng.below(200) as usize;
        let d = 1 + rng.below(10) as usize;
        let x: Vec<f64> = (0..n * d).map(|_| rng.uniform(-3.0, 3.0)).collect();
        let y: Vec<u8> = (0..n).map(|_| rng.bernoulli(0.4) as u8).collect();
        let p: Vec<f64> = (0..=d).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let lambda = rng.uniform(0.0, 0.5);
        let (_, gw, gb) = loss_and_gradient(&x, &y, d, &p[..d], p[d], lambda);
        let analytic: Vec<f64> = gw.into_iter().chain([gb]).collect();
        let h = 1e-5;
        for j in 0..=d {
            let mut hi = p.clone();
            let mut lo = p.clone();
            hi[j] += h;
            lo[j] -= h;
            let numeric = (objective(&x, &y, d, &hi, lambda) - objective(&x, &y, d, &lo, lambda)) / (2.0 * h);
            let err = (numeric - analytic[j]).abs() / analytic[j].abs().max(1.0);
            assert!(err < 1e-5, "component {j}: analytic {} numeric {numeric}", analytic[j]);
        }
    }
}

#[test]
fn recovers_generating_weights() {
    let data = generative(50_000, &[1.5, -0.5], 0.0, 7, 1);
    let config = ModelConfig::default();
    let m = fit(&data, 1e-4, &config).unwrap();
    assert!(m.converged);
    assert!((m.coefficients[0] - 1.5).abs() < 0.1, "{:?}", m.coefficients);
    assert!((m.coefficients[1] + 0.5).abs() < 0.1, "{:?}", m.coefficients);
}

#[test]
fn huge_penalty_shrinks_to_intercept() {
    let data = generative(2_000, &[1.5, -0.5], 0.3, 3, 1);
    let m = fit(&data, 1e6, &ModelConfig::default()).unwrap();
    let norm = m.coefficients.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(norm < 1e-3, "{norm}");
}

#[test]
fn symmetric_data_has_zero_intercept() {
    let mut rng = SplitMix64::new(5);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for _ in 0..500 {
        let v = rng.uniform(-2.0, 2.0);
        let l = rng.bernoulli(sigmoid(2.0 * v)) as u8;
        x.extend([v, -v]);
        y.extend([l, 1 - l]);
    }
    let data = dataset(x, y, 1, 1, vec![0; 1000]);
    let m = fit(&data, 1e-3, &ModelConfig::default()).unwrap();
    assert!(m.intercept.abs() < 1e-6, "{}", m.intercept);
}

#[test]
fn fit_rejects_bad_input() {
    let cfg = ModelConfig::default();
    assert!(fit(&dataset(vec![1.0, 2.0], vec![1, 1], 1, 1, vec![0, 0]), 1.0, &cfg).is_err());
    assert!(fit(&dataset(vec![1.0, f64::NAN], vec![1, 0], 1, 1, vec![0, 0]), 1.0, &cfg).is_err());
}

#[test]
fn optimum_beats_random_perturbations() {
    let data = generative(1_000, &[0.8, -1.2, 0.4], -0.5, 21, 1);
    let m = fit(&data, 1e-2, &ModelConfig::default()).unwrap();
    let best = m.objective_at(&data, &m.coefficients, m.intercept);
    let mut rng = SplitMix64::new(99);
    for _ in 0..100 {
        let w: Vec<f64> = m.coefficients.iter().map(|c| c + rng.uniform(-0.1, 0.1)).collect();
        let b = m.intercept + rng.uniform(-0.1, 0.1);
        assert!(best <= m.objective_at(&data, &w, b) + 1e-12);
    }
}

#[test]
fn standardization_uses_training_rows_only() {
    let mut data = generative(400, &[1.0, 0.0], 0.0, 2, 1);
    data.n_standardized = 2;
    let train: Vec<usize> = (0..300).collect();
    let m = fit(&data.subset(&train), 0.1, &ModelConfig::default()).unwrap();
    for j in 0..2 {
        let col: Vec<f64> = train.iter().map(|&i| data.row(i)[j]).collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let std = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
        assert!((m.means[j] - mean).abs() < 1e-12 && (m.stds[j] - std).abs() < 1e-12);
        let all_mean = (0..400).map(|i| data.row(i)[j]).sum::<f64>() / 400.0;
        assert_ne!(m.means[j], all_mean);
    }
}

#[test]
fn odds_ratios_are_positive_and_monotone() {
    let data = generative(3_000, &[1.0, -0.7, 0.2], 0.0, 8, 1);
    let m = fit(&data, 1e-3, &ModelConfig::default()).unwrap();
    let or = m.odds_ratios();
    assert!(or.iter().all(|&v| v > 0.0));
    for i in 0..3 {
        for j in 0..3 {
            if m.coefficients[i] > m.coefficients[j] {
                assert!(or[i] > or[j]);
            }
        }
    }
}

#[test]
fn strong_feature_interval_excludes_one() {
    let data = generative(2_000, &[1.2, 0.0], -0.3, 4, 1);
    let config = ModelConfig { bootstrap_samples: 40, ..ModelConfig::default() };
    let m = fit(&data, 1e-3, &config).unwrap();
    let ors = bootstrap_odds_ratios(&data, 1e-3, &config, &m).unwrap();
    assert!(ors[0].lo > 1.0 && ors[0].lo <= ors[0].point && ors[0].point <= ors[0].hi);
    assert!(ors[1].lo < 1.0 && ors[1].hi > 1.0);
}

fn six_countries(seed: u64, shuffle: bool) -> Dataset {
    let mut data = generative(1_800, &[1.5, -1.0], -0.8, seed, 6);
    if shuffle {
        SplitMix64::derive(seed, 77).shuffle(&mut data.y);
    }
    data
}

fn quick_config(seed: u64) -> ModelConfig {
    ModelConfig { lambda_grid: vec![1e-3, 1e-1, 10.0], bootstrap_samples: 5, seed, ..ModelConfig::default() }
}

#[test]
fn nested_cv_keeps_countries_apart() {
    let data = six_countries(1, false);
    let r = nested_cv(&data, &quick_config(1)).unwrap();
    let mut seen = std::collections::BTreeSet::new();
    for f in &r.folds {
        for c in &f.test_groups {
            assert!(seen.insert(c.clone()), "{c} tested twice");
        }
    }
    assert_eq!(seen.len(), 6);
    let f1s: Vec<f64> = r.folds.iter().map(|f| f.f1).collect();
    let spread = f1s.iter().cloned().fold(f64::MIN, f64::max) - f1s.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread < 0.1, "{f1s:?}");
    assert!(r.f1_range.0 <= r.f1_mean && r.f1_mean <= r.f1_range.1);
}

#[test]
fn shuffled_labels_sit_at_chance() {
    let mut total = 0.0;
    for seed in 0..10 {
        total += nested_cv(&six_countries(100 + seed, true), &quick_config(seed)).unwrap().balanced_accuracy_mean;
    }
    let mean = total / 10.0;
    assert!((mean - 0.5).abs() <= 0.05, "{mean}");
}

#[test]
fn nested_cv_is_deterministic() {
    let data = six_countries(3, false);
    let a = nested_cv(&data, &quick_config(9)).unwrap();
    let b = nested_cv(&data, &quick_config(9)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn stratified_share_within_one_row() {
    // 242 positives out of 1000.
    let labels: Vec<u8> = (0..1000).map(|i| (i < 242) as u8).collect();
    let folds = stratified_kfold(&labels, 5, 12).unwrap();
    for f in 0..5 {
        let rows: Vec<usize> = (0..1000).filter(|&i| folds[i] == f).collect();
        let pos = rows.iter().filter(|&&i| labels[i] == 1).count() as f64;
        assert!((pos - 0.242 * rows.len() as f64).abs() <= 1.0);
    }
}

proptest! {
    #[test]
    fn group_folds_never_split_a_country(
        groups in prop::collection::vec(0u16..12, 20..300),
        k in 2usize..6,
        seed in any::<u64>(),
    ) {
        let distinct: std::collections::BTreeSet<u16> = groups.iter().copied().collect();
        let folds = group_kfold(&groups, k, seed);
        if distinct.len() < k {
            prop_assert!(folds.is_err());
        } else {
            let folds = folds.unwrap();
            for g in distinct {
                let fs: std::collections::BTreeSet<usize> =
                    groups.iter().zip(&folds).filter(|(x, _)| **x == g).map(|(_, f)| *f).collect();
                prop_assert_eq!(fs.len(), 1);
            }
            prop_assert_eq!(&folds, &group_kfold(&groups, k, seed).unwrap());
        }
    }
}
