//! Fold assignment and nested cross-validation.

use std::collections::BTreeSet;
use std::io::Write;

use rayon::prelude::*;
use serde_json::Value;

use super::bootstrap::{bootstrap_odds_ratios, OddsRatio};
use super::logistic::{fit, FittedModel};
use super::metrics::Confusion;
use super::{Dataset, ModelConfig};
use crate::error::{Error, Result};
use crate::geio::report::{csv_row, fmt_g6, num, object, Report};
use crate::rng::SplitMix64;

const STREAM_GROUPS: u64 = 1;
const STREAM_STRATIFY: u64 = 2;
const STREAM_INNER: u64 = 0x100;

/// Assigns whole groups to `k` folds: largest group first, each into the
/// currently smallest fold (lowest index on ties). Equal-sized groups are
/// ordered by a seeded shuffle.
pub fn group_kfold<G: Ord + Copy>(groups: &[G], k: usize, seed: u64) -> Result<Vec<usize>> {
    let mut sizes: Vec<(G, usize)> = Vec::new();
    let distinct: BTreeSet<G> = groups.iter().copied().collect();
    if distinct.len() < k || k < 2 {
        return Err(Error::invalid(format!(
            "group k-fold needs at least k = {k} >= 2 groups, found {}",
            distinct.len()
        )));
    }
    for g in &distinct {
        sizes.push((*g, 0));
    }
    for g in groups {
        let i = sizes.binary_search_by(|(x, _)| x.cmp(g)).unwrap();
        sizes[i].1 += 1;
    }
    SplitMix64::derive(seed, STREAM_GROUPS).shuffle(&mut sizes);
    sizes.sort_by_key(|s| std::cmp::Reverse(s.1));
    let mut load = vec![0usize; k];
    let mut fold_of: Vec<(G, usize)> = Vec::with_capacity(sizes.len());
    for (g, n) in sizes {
        let f = (0..k).min_by_key(|&f| (load[f], f)).unwrap();
        load[f] += n;
        fold_of.push((g, f));
    }
    fold_of.sort_by_key(|f| f.0);
    Ok(groups
        .iter()
        .map(|g| fold_of[fold_of.binary_search_by(|(x, _)| x.cmp(g)).unwrap()].1)
        .collect())
}

/// Per-class seeded shuffle, then round-robin across folds, continuing the
/// rotation from one class to the next.
pub fn stratified_kfold(labels: &[u8], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::invalid("stratified k-fold needs k >= 2"));
    }
    let mut folds = vec![0; labels.len()];
    let mut offset = 0;
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < k {
            return Err(Error::invalid(format!(
                "class {class} has {} rows, fewer than k = {k}",
                idx.len()
            )));
        }
        SplitMix64::derive(seed, STREAM_STRATIFY + class as u64).shuffle(&mut idx);
        for (j, &i) in idx.iter().enumerate() {
            folds[i] = (offset + j) % k;
        }
        offset = (offset + idx.len()) % k;
    }
    Ok(folds)
}

fn split(folds: &[usize], f: usize) -> (Vec<usize>, Vec<usize>) {
    (0..folds.len()).partition(|&i| folds[i] != f)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    pub test_groups: Vec<String>,
    pub lambda: f64,
    /// Mean inner F1 per grid value.
    pub inner_f1: Vec<f64>,
    pub f1: f64,
    pub balanced_accuracy: f64,
    pub model: FittedModel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelResult {
    pub feature_names: Vec<String>,
    pub folds: Vec<FoldResult>,
    pub f1_mean: f64,
    pub f1_range: (f64, f64),
    pub balanced_accuracy_mean: f64,
    pub balanced_accuracy_range: (f64, f64),
    /// Most frequently chosen λ (smallest on ties), used for the final fit.
    pub final_lambda: f64,
    pub final_model: FittedModel,
    pub odds_ratios: Vec<OddsRatio>,
    pub n_rows: usize,
    pub positive_share: f64,
    pub config: ModelConfig,
}

fn mean_range(v: &[f64]) -> (f64, (f64, f64)) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (mean, (lo, hi))
}

/// Outer group k-fold over countries; inner stratified k-fold picks λ by
/// mean F1 (first maximum in grid order); the refit model is scored on the
/// held-out countries.
pub fn nested_cv(data: &Dataset, config: &ModelConfig) -> Result<ModelResult> {
    config.validate()?;
    let outer = group_kfold(&data.groups, config.outer_folds, config.seed)?;
    let folds = (0..config.outer_folds)
        .into_par_iter()
        .map(|f| outer_fold(data, config, &outer, f))
        .collect::<Result<Vec<_>>>()?;

    let (f1_mean, f1_range) = mean_range(&folds.iter().map(|f| f.f1).collect::<Vec<_>>());
    let (ba_mean, ba_range) = mean_range(&folds.iter().map(|f| f.balanced_accuracy).collect::<Vec<_>>());
    let final_lambda = modal_lambda(&config.lambda_grid, folds.iter().map(|f| f.lambda));
    let final_model = fit(data, final_lambda, config)?;
    let odds_ratios = bootstrap_odds_ratios(data, final_lambda, config, &final_model)?;
    Ok(ModelResult {
        feature_names: data.feature_names.clone(),
        folds,
        f1_mean,
        f1_range,
        balanced_accuracy_mean: ba_mean,
        balanced_accuracy_range: ba_range,
        final_lambda,
        final_model,
        odds_ratios,
        n_rows: data.n(),
        positive_share: data.y.iter().map(|&l| l as f64).sum::<f64>() / data.n() as f64,
        config: config.clone(),
    })
}

fn modal_lambda(grid: &[f64], chosen: impl Iterator<Item = f64>) -> f64 {
    let mut counts = vec![0usize; grid.len()];
    for l in chosen {
        if let Some(i) = grid.iter().position(|&g| g == l) {
            counts[i] += 1;
        }
    }
    let best = counts.iter().copied().max().unwrap_or(0);
    grid[counts.iter().position(|&c| c == best).unwrap_or(0)]
}

fn outer_fold(data: &Dataset, config: &ModelConfig, outer: &[usize], f: usize) -> Result<FoldResult> {
    let (train_idx, test_idx) = split(outer, f);
    let train_groups: BTreeSet<u16> = train_idx.iter().map(|&i| data.groups[i]).collect();
    let test_groups: BTreeSet<u16> = test_idx.iter().map(|&i| data.groups[i]).collect();
    if train_groups.intersection(&test_groups).next().is_some() {
        return Err(Error::invalid(format!("outer fold {f}: a country is in both train and test")));
    }
    let train = data.subset(&train_idx);
    let test = data.subset(&test_idx);

    let inner = stratified_kfold(&train.y, config.inner_folds, config.seed ^ (STREAM_INNER + f as u64))?;
    let inner_sets: Vec<(Dataset, Dataset)> = (0..config.inner_folds)
        .map(|g| {
            let (a, b) = split(&inner, g);
            (train.subset(&a), train.subset(&b))
        })
        .collect();
    let inner_f1 = config
        .lambda_grid
        .par_iter()
        .map(|&lambda| -> Result<f64> {
            let scores = inner_sets
                .iter()
                .map(|(tr, va)| {
                    let m = fit(tr, lambda, config)?;
                    Ok(Confusion::new(&m.predict(va), &va.y).f1())
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(scores.iter().sum::<f64>() / scores.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let best = inner_f1.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lambda = config.lambda_grid[inner_f1.iter().position(|&v| v == best).unwrap()];

    let model = fit(&train, lambda, config)?;
    let c = Confusion::new(&model.predict(&test), &test.y);
    Ok(FoldResult {
        fold: f,
        test_groups: test_groups.iter().map(|&g| data.group_names[g as usize].clone()).collect(),
        lambda,
        inner_f1,
        f1: c.f1(),
        balanced_accuracy: c.balanced_accuracy()?,
        model,
    })
}

fn model_json(m: &FittedModel, names: &[String]) -> Value {
    object([
        (
            "coefficients",
            object(names.iter().cloned().zip(m.coefficients.iter().map(|&c| num(c)))),
        ),
        ("intercept", num(m.intercept)),
        (
            "standardization",
            object(names.iter().take(m.means.len()).enumerate().map(|(j, n)| {
                (n.clone(), object([("mean", num(m.means[j])), ("std", num(m.stds[j]))]))
            })),
        ),
        ("lambda", num(m.lambda)),
        ("iterations", Value::from(m.iterations)),
        ("converged", Value::from(m.converged)),
        ("loss", num(m.loss)),
    ])
}

impl Report for ModelResult {
    fn to_json(&self) -> Value {
        let folds = self
            .folds
            .iter()
            .map(|f| {
                object([
                    ("fold", Value::from(f.fold)),
                    ("test_countries", Value::from(f.test_groups.clone())),
                    ("lambda", num(f.lambda)),
                    ("inner_mean_f1", Value::Array(f.inner_f1.iter().map(|&v| num(v)).collect())),
                    ("f1", num(f.f1)),
                    ("balanced_accuracy", num(f.balanced_accuracy)),
                    ("model", model_json(&f.model, &self.feature_names)),
                ])
            })
            .collect();
        let odds = self
            .odds_ratios
            .iter()
            .map(|o| {
                object([
                    ("feature", Value::from(o.feature.clone())),
                    ("coefficient", num(o.coefficient)),
                    ("odds_ratio", num(o.point)),
                    ("ci_low", num(o.lo)),
                    ("ci_high", num(o.hi)),
                ])
            })
            .collect();
        let c = &self.config;
        object([
            ("schema_version", Value::from(1)),
            ("n_rows", Value::from(self.n_rows)),
            ("positive_share", num(self.positive_share)),
            ("folds", Value::Array(folds)),
            (
                "aggregate",
                object([
                    ("f1_mean", num(self.f1_mean)),
                    ("f1_min", num(self.f1_range.0)),
                    ("f1_max", num(self.f1_range.1)),
                    ("balanced_accuracy_mean", num(self.balanced_accuracy_mean)),
                    ("balanced_accuracy_min", num(self.balanced_accuracy_range.0)),
                    ("balanced_accuracy_max", num(self.balanced_accuracy_range.1)),
                ]),
            ),
            ("final_lambda", num(self.final_lambda)),
            ("final_model", model_json(&self.final_model, &self.feature_names)),
            ("odds_ratios", Value::Array(odds)),
            (
                "config",
                object([
                    ("lambda_grid", Value::Array(c.lambda_grid.iter().map(|&l| num(l)).collect())),
                    ("outer_folds", Value::from(c.outer_folds)),
                    ("inner_folds", Value::from(c.inner_folds)),
                    ("max_iterations", Value::from(c.max_iterations)),
                    ("tolerance", num(c.tolerance)),
                    ("seed", Value::from(c.seed)),
                    ("bootstrap_samples", Value::from(c.bootstrap_samples)),
                ]),
            ),
        ])
    }

    /// The odds-ratio table.
    fn write_csv(&self, w: &mut dyn Write) -> Result<()> {
        csv_row(w, &["feature", "coefficient", "odds_ratio", "ci_low", "ci_high"].map(String::from))?;
        for o in &self.odds_ratios {
            csv_row(
                w,
                &[o.feature.clone(), fmt_g6(o.coefficient), fmt_g6(o.point), fmt_g6(o.lo), fmt_g6(o.hi)],
            )?;
        }
        Ok(())
    }
}
