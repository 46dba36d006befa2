//! Pipeline configuration: a TOML file whose relative paths resolve against
//! the file's own directory.
//!
//! ```toml
//! out = "out"
//! pyramid_factors = [1, 2, 4, 8, 16, 30]
//!
//! [[datasets]]
//! name = "footprints"
//! kind = "footprints"          # footprints | extents | population_raster
//! min_confidence = 0.7
//!
//! [[countries]]
//! code = "AAA"
//! regions = "AAA/regions.geojson"
//! hdi = "AAA/hdi.csv"
//! datasets = { footprints = "AAA/footprints.csv" }
//! features = { rwi = "AAA/rwi.tif", rwi_error = "AAA/rwi_error.tif", nightlight = "AAA/nightlight.tif", ghsl = "AAA/ghsl.tif" }
//!
//! [model]
//! seed = 0
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use settle_core::harmonize::{DatasetKind, IngestOptions, DEFAULT_PYRAMID_FACTORS};
use settle_core::mlcore::ModelConfig;
use settle_core::rasterize::RasterizePolicy;

use crate::UsageError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    out: Option<String>,
    resolution_arcsec: Option<f64>,
    pyramid_factors: Option<Vec<usize>>,
    datasets: Vec<RawDataset>,
    countries: Vec<RawCountry>,
    #[serde(default)]
    model: RawModel,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDataset {
    name: String,
    kind: String,
    min_confidence: Option<f64>,
    max_false_positive: Option<f64>,
    threshold: Option<f64>,
    policy: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCountry {
    code: String,
    regions: String,
    hdi: Option<String>,
    datasets: BTreeMap<String, String>,
    features: Option<RawFeatures>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFeatures {
    rwi: String,
    rwi_error: String,
    nightlight: String,
    ghsl: String,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    lambda_grid: Option<Vec<f64>>,
    outer_folds: Option<usize>,
    inner_folds: Option<usize>,
    max_iterations: Option<usize>,
    tolerance: Option<f64>,
    seed: Option<u64>,
    bootstrap_samples: Option<usize>,
    subsample: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct DatasetSpec {
    pub name: String,
    pub kind: DatasetKind,
    pub options: IngestOptions,
}

#[derive(Clone, Debug)]
pub struct FeaturePaths {
    pub rwi: PathBuf,
    pub rwi_error: PathBuf,
    pub nightlight: PathBuf,
    pub ghsl: PathBuf,
}

#[derive(Clone, Debug)]
pub struct CountrySpec {
    pub code: String,
    pub regions: PathBuf,
    pub hdi: Option<PathBuf>,
    /// One path per dataset, in dataset order.
    pub datasets: Vec<PathBuf>,
    pub features: Option<FeaturePaths>,
}

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub out: PathBuf,
    pub resolution_arcsec: f64,
    pub pyramid_factors: Vec<usize>,
    pub datasets: Vec<DatasetSpec>,
    pub countries: Vec<CountrySpec>,
    pub model: ModelConfig,
    pub subsample: f64,
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl PipelineConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base).map_err(|e| usage(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str, base: &Path) -> anyhow::Result<Self> {
        let raw: RawConfig = toml::from_str(text)?;
        let resolve = |p: &str| base.join(p);

        let mut datasets = Vec::new();
        for d in &raw.datasets {
            if !valid_name(&d.name) {
                anyhow::bail!("dataset name {:?} must be non-empty ASCII letters, digits, '_' or '-'", d.name);
            }
            if datasets.iter().any(|x: &DatasetSpec| x.name == d.name) {
                anyhow::bail!("dataset {:?} listed twice", d.name);
            }
            let kind: DatasetKind = d.kind.parse()?;
            let mut options = IngestOptions::default();
            if let Some(v) = d.min_confidence {
                options.min_confidence = v;
            }
            if let Some(v) = d.max_false_positive {
                options.max_false_positive = v;
            }
            if let Some(v) = d.threshold {
                options.population_threshold = v;
            }
            options.policy = match d.policy.as_deref() {
                None | Some("centroid") => RasterizePolicy::Centroid,
                Some("any_intersection") => RasterizePolicy::AnyIntersection,
                Some(p) => anyhow::bail!("unknown policy {p:?} (expected centroid or any_intersection)"),
            };
            datasets.push(DatasetSpec { name: d.name.clone(), kind, options });
        }
        if datasets.len() < 2 {
            anyhow::bail!("at least two datasets are required");
        }

        let mut countries: Vec<CountrySpec> = Vec::new();
        for c in &raw.countries {
            if !valid_name(&c.code) {
                anyhow::bail!("country code {:?} is not a plain identifier", c.code);
            }
            if countries.iter().any(|x| x.code == c.code) {
                anyhow::bail!("country {} listed twice", c.code);
            }
            let mut paths = Vec::new();
            for d in &datasets {
                let p = c
                    .datasets
                    .get(&d.name)
                    .ok_or_else(|| anyhow::anyhow!("country {} has no path for dataset {}", c.code, d.name))?;
                paths.push(resolve(p));
            }
            if let Some(extra) = c.datasets.keys().find(|k| !datasets.iter().any(|d| &&d.name == k)) {
                anyhow::bail!("country {} names unknown dataset {extra}", c.code);
            }
            countries.push(CountrySpec {
                code: c.code.clone(),
                regions: resolve(&c.regions),
                hdi: c.hdi.as_deref().map(resolve),
                datasets: paths,
                features: c.features.as_ref().map(|f| FeaturePaths {
                    rwi: resolve(&f.rwi),
                    rwi_error: resolve(&f.rwi_error),
                    nightlight: resolve(&f.nightlight),
                    ghsl: resolve(&f.ghsl),
                }),
            });
        }
        if countries.is_empty() {
            anyhow::bail!("no countries configured");
        }

        let defaults = ModelConfig::default();
        let m = &raw.model;
        let model = ModelConfig {
            lambda_grid: m.lambda_grid.clone().unwrap_or(defaults.lambda_grid),
            outer_folds: m.outer_folds.unwrap_or(defaults.outer_folds),
            inner_folds: m.inner_folds.unwrap_or(defaults.inner_folds),
            max_iterations: m.max_iterations.unwrap_or(defaults.max_iterations),
            tolerance: m.tolerance.unwrap_or(defaults.tolerance),
            seed: m.seed.unwrap_or(defaults.seed),
            bootstrap_samples: m.bootstrap_samples.unwrap_or(defaults.bootstrap_samples),
        };
        model.validate()?;
        let subsample = m.subsample.unwrap_or(1.0);
        if !(subsample > 0.0 && subsample <= 1.0) {
            anyhow::bail!("model.subsample must lie in (0, 1]");
        }
        let pyramid_factors = raw.pyramid_factors.clone().unwrap_or(DEFAULT_PYRAMID_FACTORS.to_vec());
        check_factors(&pyramid_factors)?;
        Ok(Self {
            out: resolve(raw.out.as_deref().unwrap_or("out")),
            resolution_arcsec: raw.resolution_arcsec.unwrap_or(3.0),
            pyramid_factors,
            datasets,
            countries,
            model,
            subsample,
        })
    }

    pub fn dataset_names(&self) -> Vec<String> {
        self.datasets.iter().map(|d| d.name.clone()).collect()
    }

    /// Model commands use the first three datasets.
    pub fn require_three(&self) -> anyhow::Result<()> {
        if self.datasets.len() < 3 {
            return Err(usage("feature and model commands need three datasets"));
        }
        Ok(())
    }

    pub fn cache_dir(&self, country: &str) -> PathBuf {
        self.out.join("cache").join(country)
    }
}

pub fn check_factors(f: &[usize]) -> anyhow::Result<()> {
    if f.first() != Some(&1) || f.windows(2).any(|w| w[1] <= w[0]) {
        return Err(usage("factors must start at 1 and increase"));
    }
    Ok(())
}

/// Fails with a usage error naming the first missing path.
pub fn require_files<'a>(paths: impl IntoIterator<Item = &'a Path>) -> anyhow::Result<()> {
    for p in paths {
        if !p.is_file() {
            return Err(usage(format!("input file not found: {}", p.display())));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [[datasets]]
        name = "a"
        kind = "footprints"
        [[datasets]]
        name = "b"
        kind = "extents"
        max_false_positive = 0.3
        [[countries]]
        code = "XX"
        regions = "x/regions.geojson"
        datasets = { a = "x/a.csv", b = "x/b.geojson" }
    "#;

    #[test]
    fn paths_resolve_against_the_config() {
        let c = PipelineConfig::parse(MINIMAL, Path::new("/data")).unwrap();
        assert_eq!(c.out, Path::new("/data/out"));
        assert_eq!(c.countries[0].datasets[1], Path::new("/data/x/b.geojson"));
        assert_eq!(c.datasets[1].options.max_false_positive, 0.3);
        assert_eq!(c.pyramid_factors, DEFAULT_PYRAMID_FACTORS.to_vec());
        assert!(c.require_three().is_err());
    }

    #[test]
    fn rejects_bad_configs() {
        let base = Path::new(".");
        assert!(PipelineConfig::parse(&MINIMAL.replace("extents", "lidar"), base).is_err());
        assert!(PipelineConfig::parse(&MINIMAL.replace(", b = \"x/b.geojson\"", ""), base).is_err());
        assert!(PipelineConfig::parse(&format!("{MINIMAL}\n[model]\nouter_folds = 1"), base).is_err());
        assert!(PipelineConfig::parse(&format!("bogus = 1\n{MINIMAL}"), base).is_err());
    }
}
