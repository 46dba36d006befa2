//! Percentile bootstrap for odds ratios.

use rayon::prelude::*;

use super::logistic::{fit, FittedModel};
use super::{Dataset, ModelConfig};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

const STREAM_BOOTSTRAP: u64 = 0x10_0000;
const MAX_REDRAWS: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct OddsRatio {
    pub feature: String,
    pub coefficient: f64,
    /// `exp(coefficient)` of the full-data fit.
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// Row bootstrap: each replicate resamples `n` rows with replacement,
/// redrawing single-class samples up to 10 times, and refits at `lambda`.
pub fn bootstrap_odds_ratios(
    data: &Dataset,
    lambda: f64,
    config: &ModelConfig,
    full: &FittedModel,
) -> Result<Vec<OddsRatio>> {
    let n = data.n();
    let replicates = (0..config.bootstrap_samples)
        .into_par_iter()
        .map(|b| -> Result<Vec<f64>> {
            let mut rng = SplitMix64::derive(config.seed, STREAM_BOOTSTRAP + b as u64);
            for _ in 0..=MAX_REDRAWS {
                let idx: Vec<usize> = (0..n).map(|_| rng.below(n as u64) as usize).collect();
                let pos = idx.iter().filter(|&&i| data.y[i] == 1).count();
                if pos == 0 || pos == n {
                    continue;
                }
                return Ok(fit(&data.subset(&idx), lambda, config)?.odds_ratios());
            }
            Err(Error::invalid(format!("bootstrap replicate {b} stayed single-class after {MAX_REDRAWS} redraws")))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok((0..data.d)
        .map(|j| {
            let mut v: Vec<f64> = replicates.iter().map(|r| r[j]).collect();
            v.sort_by(f64::total_cmp);
            OddsRatio {
                feature: data.feature_names.get(j).cloned().unwrap_or_else(|| format!("x{j}")),
                coefficient: full.coefficients[j],
                point: full.coefficients[j].exp(),
                lo: percentile(&v, 0.025),
                hi: percentile(&v, 0.975),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_interpolates() {
        let v: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert!((percentile(&v, 0.025) - 2.475).abs() < 1e-12);
        assert!((percentile(&v, 0.975) - 96.525).abs() < 1e-12);
        assert_eq!(percentile(&[3.0], 0.5), 3.0);
    }
}
