//! Agreement model: regularised logistic regression, nested cross-validation,
//! metrics and bootstrap odds ratios.

pub mod bootstrap;
pub mod cv;
pub mod logistic;
pub mod metrics;

pub use bootstrap::{bootstrap_odds_ratios, percentile, OddsRatio};
pub use cv::{group_kfold, nested_cv, stratified_kfold, FoldResult, ModelResult};
pub use logistic::{fit, loss_and_gradient, FittedModel};
pub use metrics::{balanced_accuracy, f1_score, Confusion};

use crate::error::{Error, Result};
use crate::featurize::{FeatureTable, INDICATOR_CLASSES, NUMERIC_FEATURES};

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub lambda_grid: Vec<f64>,
    pub outer_folds: usize,
    pub inner_folds: usize,
    pub max_iterations: usize,
    /// Relative loss change that ends the optimisation.
    pub tolerance: f64,
    pub seed: u64,
    pub bootstrap_samples: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            lambda_grid: vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0],
            outer_folds: 5,
            inner_folds: 5,
            max_iterations: 1000,
            tolerance: 1e-6,
            seed: 0,
            bootstrap_samples: 100,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.outer_folds < 2 || self.inner_folds < 2 {
            return Err(Error::invalid("fold counts must be at least 2"));
        }
        if self.lambda_grid.is_empty() || self.lambda_grid.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::invalid("lambda grid must be non-empty and positive"));
        }
        if self.max_iterations == 0 || !(self.tolerance > 0.0) {
            return Err(Error::invalid("max_iterations and tolerance must be positive"));
        }
        if self.bootstrap_samples == 0 {
            return Err(Error::invalid("bootstrap_samples must be positive"));
        }
        Ok(())
    }
}

/// Dense design matrix, row-major, with 0/1 labels and a group per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Vec<f64>,
    pub y: Vec<u8>,
    pub d: usize,
    /// Leading columns standardized during fitting.
    pub n_standardized: usize,
    pub groups: Vec<u16>,
    pub group_names: Vec<String>,
    pub feature_names: Vec<String>,
}

impl Dataset {
    /// Three numeric covariates followed by six class indicators.
    pub fn from_table(t: &FeatureTable) -> Self {
        let d = 9;
        let mut x = Vec::with_capacity(t.len() * d);
        for i in 0..t.len() {
            x.extend(t.numeric(i));
            x.extend(t.class[i].one_hot());
        }
        let mut feature_names: Vec<String> = NUMERIC_FEATURES.iter().map(|s| s.to_string()).collect();
        feature_names.extend(INDICATOR_CLASSES.iter().map(|c| c.name().to_string()));
        Self {
            x,
            y: t.label.clone(),
            d,
            n_standardized: 3,
            groups: t.country.clone(),
            group_names: t.countries.clone(),
            feature_names,
        }
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let mut x = Vec::with_capacity(idx.len() * self.d);
        for &i in idx {
            x.extend_from_slice(self.row(i));
        }
        Dataset {
            x,
            y: idx.iter().map(|&i| self.y[i]).collect(),
            d: self.d,
            n_standardized: self.n_standardized,
            groups: idx.iter().map(|&i| self.groups[i]).collect(),
            group_names: self.group_names.clone(),
            feature_names: self.feature_names.clone(),
        }
    }
}
