//! Deterministic synthetic countries for tests and demos.
//!
//! A country is a ground-truth settlement raster (random discs plus scattered
//! cells) on a 3″ grid, three perturbed copies of it emitted through the three
//! ingest formats (footprint CSV, extent GeoJSON, 1″ population GeoTIFF),
//! 30″ covariate layers, a grid of admin regions and an HDI table. Every draw
//! comes from [`SplitMix64`] streams derived from the config seed, so output
//! bytes depend only on the config.

pub mod oracle;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurize::{FeatureLayers, GHSL_CODES};
use crate::geio::{
    write_extents_geojson, write_footprints_csv, write_geotiff, write_hdi_csv, write_regions_geojson, Compression,
    ExtentRecord, FootprintRecord, GeoTiff, HdiTable, SampleType, WriteOptions,
};
use crate::geio::AdminRegion;
use crate::geom::{MultiPolygon, Polygon};
use crate::grid::{BinaryRaster, CategoricalRaster, GridSpec, NumericRaster};
use crate::rng::SplitMix64;

/// Covariate cells are this many 3″ cells wide.
const FEATURE_BLOCK: usize = 10;
/// Blocks below this settled fraction count as rural for `rural_dropout`.
const RURAL_DENSITY: f64 = 0.15;

const STREAM_TRUTH: u64 = 1;
const STREAM_DATASET: u64 = 10;
const STREAM_FEATURES: u64 = 20;
const STREAM_HDI: u64 = 30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub country_code: String,
    /// Grid size in 3″ cells.
    pub width: usize,
    pub height: usize,
    /// North-west corner; must sit on the 30″ lattice.
    pub origin_lon: f64,
    pub origin_lat: f64,
    pub blobs: BlobConfig,
    pub regions: RegionGrid,
    pub features: FeatureConfig,
    pub footprints: DatasetNoise,
    pub extents: DatasetNoise,
    pub population: DatasetNoise,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlobConfig {
    pub count: usize,
    /// Disc radii in cells, drawn uniformly.
    pub radius_min: f64,
    pub radius_max: f64,
    /// Probability that a cell inside a disc is settled.
    pub fill: f64,
    /// Probability that any other cell is settled.
    pub scatter: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionGrid {
    pub columns: usize,
    pub rows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    /// West-to-east RWI slope across the country.
    pub rwi_gradient: f64,
    pub rwi_missing: f64,
    pub nightlight_hotspots: usize,
    /// Hotspot spread in covariate cells.
    pub hotspot_sigma: f64,
    /// Share of empty covariate cells classed as water.
    pub water_fraction: f64,
}

/// How one dataset departs from the ground truth: dilate, shift, then drop.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetNoise {
    pub dilation: usize,
    pub dropout: f64,
    /// Extra dropout in sparsely settled covariate cells.
    pub rural_dropout: f64,
    /// Shift in cells, `[east, south]`.
    pub offset: [i32; 2],
    /// Range of the per-record score: footprint confidence or extent
    /// false-positive probability. Defaults to the range that passes the
    /// ingest threshold.
    pub score_range: Option<[f64; 2]>,
    /// Records that the ingest threshold must reject.
    pub decoys: usize,
}

impl Default for BlobConfig {
    fn default() -> Self {
        Self { count: 14, radius_min: 2.0, radius_max: 11.0, fill: 0.85, scatter: 0.01 }
    }
}

impl Default for RegionGrid {
    fn default() -> Self {
        Self { columns: 2, rows: 2 }
    }
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { rwi_gradient: 1.0, rwi_missing: 0.01, nightlight_hotspots: 3, hotspot_sigma: 2.0, water_fraction: 0.3 }
    }
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            country_code: "SYN".into(),
            width: 128,
            height: 128,
            origin_lon: 10.0,
            origin_lat: 0.0,
            blobs: BlobConfig::default(),
            regions: RegionGrid::default(),
            features: FeatureConfig::default(),
            footprints: DatasetNoise::default(),
            extents: DatasetNoise::default(),
            population: DatasetNoise::default(),
        }
    }
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} = {p} is not a probability")))
    }
}

impl SynthConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: SynthConfig = toml::from_str(text).map_err(|e| Error::format("synth-config", e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Fails for seeds above `i64::MAX`, which TOML integers cannot hold.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::format("synth-config", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.width > 4096 || self.height > 4096 {
            return Err(Error::invalid("grid size must be within 1..=4096 cells"));
        }
        if self.country_code.is_empty() {
            return Err(Error::invalid("country_code is empty"));
        }
        let b = &self.blobs;
        if !(b.radius_min > 0.0 && b.radius_max >= b.radius_min) {
            return Err(Error::invalid("blob radii must satisfy 0 < radius_min <= radius_max"));
        }
        check_probability("blobs.fill", b.fill)?;
        check_probability("blobs.scatter", b.scatter)?;
        if self.regions.columns == 0 || self.regions.rows == 0 {
            return Err(Error::invalid("region grid must be at least 1 x 1"));
        }
        if self.regions.columns > self.width || self.regions.rows > self.height {
            return Err(Error::invalid("more region columns or rows than cells"));
        }
        let f = &self.features;
        check_probability("features.rwi_missing", f.rwi_missing)?;
        check_probability("features.water_fraction", f.water_fraction)?;
        if !(f.hotspot_sigma > 0.0) {
            return Err(Error::invalid("features.hotspot_sigma must be positive"));
        }
        for (name, n) in [("footprints", &self.footprints), ("extents", &self.extents), ("population", &self.population)] {
            check_probability(&format!("{name}.dropout"), n.dropout)?;
            check_probability(&format!("{name}.rural_dropout"), n.rural_dropout)?;
            if let Some([lo, hi]) = n.score_range {
                check_probability(&format!("{name}.score_range"), lo)?;
                check_probability(&format!("{name}.score_range"), hi)?;
                if lo > hi {
                    return Err(Error::invalid(format!("{name}.score_range is reversed")));
                }
            }
        }
        self.spec()?;
        self.feature_spec()?;
        Ok(())
    }

    /// The 3″ analysis grid.
    pub fn spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.origin_lon, self.origin_lat, 3.0, self.width, self.height)
    }

    /// The 30″ covariate grid covering the analysis grid.
    pub fn feature_spec(&self) -> Result<GridSpec> {
        GridSpec::new(
            self.origin_lon,
            self.origin_lat,
            3.0 * FEATURE_BLOCK as f64,
            self.width.div_ceil(FEATURE_BLOCK),
            self.height.div_ceil(FEATURE_BLOCK),
        )
    }
}

/// Everything generated for one country.
#[derive(Clone, Debug)]
pub struct SynthCountry {
    pub config: SynthConfig,
    pub truth: BinaryRaster,
    /// The perturbed rasters that ingesting the three emitted files yields,
    /// in the order footprints, extents, population.
    pub expected: [BinaryRaster; 3],
    pub footprints: Vec<FootprintRecord>,
    pub extents: Vec<ExtentRecord>,
    /// 1″ population counts; zero where unsettled.
    pub population: NumericRaster,
    pub features: FeatureLayers,
    pub regions: Vec<AdminRegion>,
    pub hdi: HdiTable,
}

/// Cell grid in row-major order.
struct Cells {
    w: usize,
    h: usize,
    v: Vec<bool>,
}

impl Cells {
    fn get(&self, r: isize, c: isize) -> bool {
        r >= 0 && c >= 0 && (r as usize) < self.h && (c as usize) < self.w && self.v[r as usize * self.w + c as usize]
    }

    fn to_raster(&self, spec: GridSpec) -> BinaryRaster {
        BinaryRaster::from_fn(spec, |r, c| self.v[r * self.w + c])
    }
}

pub fn generate_country(config: &SynthConfig) -> Result<SynthCountry> {
    config.validate()?;
    let spec = config.spec()?;
    let (w, h) = (config.width, config.height);
    let truth = ground_truth(config);
    let density = block_density(&truth);

    let noises = [&config.footprints, &config.extents, &config.population];
    let perturbed: Vec<Cells> = noises
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let mut rng = SplitMix64::derive(config.seed, STREAM_DATASET + i as u64);
            perturb(&truth, n, &density, &mut rng)
        })
        .collect();

    let res = spec.resolution_deg();
    let (west, north) = (spec.origin_lon(), spec.origin_lat());
    let lon = |x: f64| west + x * res;
    let lat = |y: f64| north - y * res;

    // Footprints: small squares strictly inside each settled cell.
    let mut rng = SplitMix64::derive(config.seed, STREAM_DATASET + 100);
    let [clo, chi] = config.footprints.score_range.unwrap_or([0.7, 1.0]);
    let mut footprints = Vec::new();
    let fp = &perturbed[0];
    for r in 0..h {
        for c in 0..w {
            if !fp.v[r * w + c] {
                continue;
            }
            for k in 0..1 + rng.below(2) {
                let half = rng.uniform(0.05, 0.2);
                let cx = c as f64 + 0.5 + rng.uniform(-0.25, 0.25);
                let cy = r as f64 + 0.5 + rng.uniform(-0.25, 0.25);
                let confidence = if footprints.is_empty() { clo } else { rng.uniform(clo, chi) };
                footprints.push(FootprintRecord {
                    polygon: Polygon::rect(lon(cx - half), lat(cy + half), lon(cx + half), lat(cy - half)).into(),
                    confidence,
                    id: format!("{}-{r}-{c}-{k}", config.country_code),
                });
            }
        }
    }
    for (k, (r, c)) in empty_cells(fp, config.footprints.decoys, &mut rng).into_iter().enumerate() {
        let confidence = rng.uniform(0.3, 0.7).min(0.69);
        let (cx, cy) = (c as f64 + 0.5, r as f64 + 0.5);
        footprints.push(FootprintRecord {
            polygon: Polygon::rect(lon(cx - 0.1), lat(cy + 0.1), lon(cx + 0.1), lat(cy - 0.1)).into(),
            confidence,
            id: format!("{}-decoy-{k}", config.country_code),
        });
    }

    // Extents: one rectangle per run of settled cells in a row, on grid lines.
    let [flo, fhi] = config.extents.score_range.unwrap_or([0.0, 0.4]);
    let ex = &perturbed[1];
    let mut extents = Vec::new();
    for r in 0..h {
        let mut c = 0;
        while c < w {
            if !ex.v[r * w + c] {
                c += 1;
                continue;
            }
            let start = c;
            while c < w && ex.v[r * w + c] {
                c += 1;
            }
            let p = rng.uniform(flo, fhi);
            extents.push(ExtentRecord {
                polygon: rect_cells(&lon, &lat, start, r, c, r + 1),
                false_positive_probability: if fhi <= 0.4 { p.min(0.399) } else { p },
            });
        }
    }
    for (k, (r, c)) in empty_cells(ex, config.extents.decoys, &mut rng).into_iter().enumerate() {
        extents.push(ExtentRecord {
            polygon: rect_cells(&lon, &lat, c, r, c + 1, r + 1),
            false_positive_probability: if k == 0 { 0.4 } else { rng.uniform(0.4, 1.0) },
        });
    }

    // Population: settled 3″ cells get people in their centre 1″ subcell and
    // at random in the others.
    let pop_spec = GridSpec::new(config.origin_lon, config.origin_lat, 1.0, 3 * w, 3 * h)?;
    let mut pop = vec![0f32; pop_spec.len()];
    let pp = &perturbed[2];
    for r in 0..h {
        for c in 0..w {
            if !pp.v[r * w + c] {
                continue;
            }
            for sr in 0..3 {
                for sc in 0..3 {
                    let centre = sr == 1 && sc == 1;
                    if centre || rng.bernoulli(0.4) {
                        pop[(3 * r + sr) * 3 * w + 3 * c + sc] = rng.uniform(0.1, 8.0) as f32;
                    }
                }
            }
        }
    }
    let population = NumericRaster::new(pop_spec, pop)?;

    let features = feature_layers(config, &density)?;
    let (regions, hdi) = regions_and_hdi(config, &truth, &lon, &lat)?;
    let expected = [
        perturbed[0].to_raster(spec),
        perturbed[1].to_raster(spec),
        perturbed[2].to_raster(spec),
    ];
    Ok(SynthCountry {
        config: config.clone(),
        truth: truth.to_raster(spec),
        expected,
        footprints,
        extents,
        population,
        features,
        regions,
        hdi,
    })
}

fn rect_cells(lon: &impl Fn(f64) -> f64, lat: &impl Fn(f64) -> f64, c0: usize, r0: usize, c1: usize, r1: usize) -> MultiPolygon {
    Polygon::rect(lon(c0 as f64), lat(r1 as f64), lon(c1 as f64), lat(r0 as f64)).into()
}

/// Up to `n` distinct unsettled cells, chosen at random.
fn empty_cells(cells: &Cells, n: usize, rng: &mut SplitMix64) -> Vec<(usize, usize)> {
    let mut free: Vec<usize> = (0..cells.v.len()).filter(|&i| !cells.v[i]).collect();
    rng.shuffle(&mut free);
    free.truncate(n);
    free.into_iter().map(|i| (i / cells.w, i % cells.w)).collect()
}

fn ground_truth(config: &SynthConfig) -> Cells {
    let (w, h) = (config.width, config.height);
    let b = &config.blobs;
    let mut rng = SplitMix64::derive(config.seed, STREAM_TRUTH);
    let mut v = vec![false; w * h];
    for _ in 0..b.count {
        let cx = rng.uniform(0.0, w as f64);
        let cy = rng.uniform(0.0, h as f64);
        let rad = rng.uniform(b.radius_min, b.radius_max);
        let r0 = (cy - rad).floor().max(0.0) as usize;
        let r1 = ((cy + rad).ceil() as usize).min(h);
        let c0 = (cx - rad).floor().max(0.0) as usize;
        let c1 = ((cx + rad).ceil() as usize).min(w);
        for r in r0..r1 {
            for c in c0..c1 {
                let (dx, dy) = (c as f64 + 0.5 - cx, r as f64 + 0.5 - cy);
                if dx * dx + dy * dy <= rad * rad && rng.bernoulli(b.fill) {
                    v[r * w + c] = true;
                }
            }
        }
    }
    for cell in v.iter_mut() {
        if !*cell && rng.bernoulli(b.scatter) {
            *cell = true;
        }
    }
    Cells { w, h, v }
}

/// Settled share of each covariate block, row-major over blocks.
fn block_density(truth: &Cells) -> Vec<f64> {
    let bw = truth.w.div_ceil(FEATURE_BLOCK);
    let bh = truth.h.div_ceil(FEATURE_BLOCK);
    let mut set = vec![0usize; bw * bh];
    let mut all = vec![0usize; bw * bh];
    for r in 0..truth.h {
        for c in 0..truth.w {
            let b = (r / FEATURE_BLOCK) * bw + c / FEATURE_BLOCK;
            all[b] += 1;
            set[b] += truth.v[r * truth.w + c] as usize;
        }
    }
    set.iter().zip(&all).map(|(&s, &a)| s as f64 / a as f64).collect()
}

fn perturb(truth: &Cells, noise: &DatasetNoise, density: &[f64], rng: &mut SplitMix64) -> Cells {
    let (w, h) = (truth.w, truth.h);
    let rad = noise.dilation as isize;
    let mut v = vec![false; w * h];
    for r in 0..h as isize {
        for c in 0..w as isize {
            let (sr, sc) = (r - noise.offset[1] as isize, c - noise.offset[0] as isize);
            let mut hit = false;
            'search: for dr in -rad..=rad {
                for dc in -rad..=rad {
                    if dr * dr + dc * dc <= rad * rad && truth.get(sr + dr, sc + dc) {
                        hit = true;
                        break 'search;
                    }
                }
            }
            v[r as usize * w + c as usize] = hit;
        }
    }
    let bw = w.div_ceil(FEATURE_BLOCK);
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if !v[i] {
                continue;
            }
            let mut p = noise.dropout;
            if density[(r / FEATURE_BLOCK) * bw + c / FEATURE_BLOCK] < RURAL_DENSITY {
                p += noise.rural_dropout;
            }
            if rng.bernoulli(p.min(1.0)) {
                v[i] = false;
            }
        }
    }
    Cells { w, h, v }
}

fn class_for_density(d: f64) -> u8 {
    match d {
        d if d > 0.5 => 30,
        d if d > 0.35 => 23,
        d if d > 0.25 => 22,
        d if d > 0.15 => 21,
        d if d > 0.08 => 13,
        d if d > 0.03 => 12,
        _ => 11,
    }
}

fn feature_layers(config: &SynthConfig, density: &[f64]) -> Result<FeatureLayers> {
    let fspec = config.feature_spec()?;
    let (bw, bh) = (fspec.width(), fspec.height());
    let f = &config.features;
    let mut rng = SplitMix64::derive(config.seed, STREAM_FEATURES);
    let hotspots: Vec<(f64, f64, f64)> = (0..f.nightlight_hotspots)
        .map(|_| (rng.uniform(0.0, bw as f64), rng.uniform(0.0, bh as f64), rng.uniform(5.0, 40.0)))
        .collect();
    let mut rwi = Vec::with_capacity(fspec.len());
    let mut err = Vec::with_capacity(fspec.len());
    let mut nl = Vec::with_capacity(fspec.len());
    let mut ghsl = Vec::with_capacity(fspec.len());
    for r in 0..bh {
        for c in 0..bw {
            let d = density[r * bw + c];
            let x = (c as f64 + 0.5) / bw as f64;
            let value = f.rwi_gradient * (2.0 * x - 1.0) + 0.8 * d + 0.1 * rng.normal();
            rwi.push(if rng.bernoulli(f.rwi_missing) { f32::NAN } else { value as f32 });
            err.push((0.15 + 0.1 * rng.next_f64() + 0.1 * (1.0 - d)) as f32);
            let glow: f64 = hotspots
                .iter()
                .map(|&(hx, hy, amp)| {
                    let (dx, dy) = (c as f64 + 0.5 - hx, r as f64 + 0.5 - hy);
                    amp * (-(dx * dx + dy * dy) / (2.0 * f.hotspot_sigma * f.hotspot_sigma)).exp()
                })
                .sum();
            nl.push((glow + 5.0 * d) as f32);
            let water = d == 0.0 && rng.bernoulli(f.water_fraction);
            ghsl.push(if water { 10 } else { class_for_density(d) });
        }
    }
    Ok(FeatureLayers {
        rwi: NumericRaster::new(fspec, rwi)?,
        rwi_error: NumericRaster::new(fspec, err)?,
        nightlight: NumericRaster::new(fspec, nl)?,
        ghsl: CategoricalRaster::new(fspec, ghsl, &GHSL_CODES)?,
    })
}

fn regions_and_hdi(
    config: &SynthConfig,
    truth: &Cells,
    lon: &impl Fn(f64) -> f64,
    lat: &impl Fn(f64) -> f64,
) -> Result<(Vec<AdminRegion>, HdiTable)> {
    let RegionGrid { columns, rows } = config.regions;
    let xs: Vec<usize> = (0..=columns).map(|k| k * config.width / columns).collect();
    let ys: Vec<usize> = (0..=rows).map(|k| k * config.height / rows).collect();
    let mut rng = SplitMix64::derive(config.seed, STREAM_HDI);
    let mut regions = Vec::new();
    let mut hdi = Vec::new();
    for j in 0..rows {
        for i in 0..columns {
            let n = j * columns + i + 1;
            let id = format!("{}.{n}", config.country_code);
            let mut settled = 0usize;
            for r in ys[j]..ys[j + 1] {
                for c in xs[i]..xs[i + 1] {
                    settled += truth.v[r * truth.w + c] as usize;
                }
            }
            let share = settled as f64 / ((ys[j + 1] - ys[j]) * (xs[i + 1] - xs[i])) as f64;
            let value = (0.35 + 1.5 * share + 0.03 * rng.normal()).clamp(0.0, 1.0);
            hdi.push((id.clone(), (value * 1000.0).round() / 1000.0));
            regions.push(AdminRegion {
                country_code: config.country_code.clone(),
                region_id: id,
                name: format!("{} region {n}", config.country_code),
                polygon: rect_cells(lon, lat, xs[i], ys[j], xs[i + 1], ys[j + 1]),
            });
        }
    }
    Ok((regions, HdiTable::new(hdi)?))
}

/// Paths of the files written for one country.
#[derive(Clone, Debug)]
pub struct CountryFiles {
    pub footprints: PathBuf,
    pub extents: PathBuf,
    pub population: PathBuf,
    pub rwi: PathBuf,
    pub rwi_error: PathBuf,
    pub nightlight: PathBuf,
    pub ghsl: PathBuf,
    pub regions: PathBuf,
    pub hdi: PathBuf,
}

impl CountryFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            footprints: dir.join("footprints.csv"),
            extents: dir.join("extents.geojson"),
            population: dir.join("population_1s.tif"),
            rwi: dir.join("rwi.tif"),
            rwi_error: dir.join("rwi_error.tif"),
            nightlight: dir.join("nightlight.tif"),
            ghsl: dir.join("ghsl.tif"),
            regions: dir.join("regions.geojson"),
            hdi: dir.join("hdi.csv"),
        }
    }
}

impl SynthCountry {
    pub fn write(&self, dir: &Path) -> Result<CountryFiles> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = CountryFiles::in_dir(dir);
        write_footprints_csv(&files.footprints, &self.footprints)?;
        write_extents_geojson(&files.extents, &self.extents, "prob_false_positive")?;
        let deflate = WriteOptions { compression: Compression::Deflate, tile: None };
        let tiled = WriteOptions { compression: Compression::Deflate, tile: Some((64, 64)) };
        write_geotiff(&files.population, &GeoTiff::from_numeric(&self.population, SampleType::F32, None)?, &tiled)?;
        for (path, r) in [
            (&files.rwi, &self.features.rwi),
            (&files.rwi_error, &self.features.rwi_error),
            (&files.nightlight, &self.features.nightlight),
        ] {
            write_geotiff(path, &GeoTiff::from_numeric(r, SampleType::F32, Some(-9999.0))?, &deflate)?;
        }
        write_geotiff(&files.ghsl, &GeoTiff::from_categorical(&self.features.ghsl), &deflate)?;
        write_regions_geojson(&files.regions, &self.regions)?;
        write_hdi_csv(&files.hdi, &self.hdi)?;
        Ok(files)
    }
}

/// Six countries at distinct locations with varied noise, enough for a
/// five-fold grouped outer loop.
pub fn bundle_configs(seed: u64) -> Vec<SynthConfig> {
    let mut rng = SplitMix64::new(seed);
    (0..6)
        .map(|i| {
            let s = rng.next_u64() >> 1;
            let noisy = |dilation: usize, dropout: f64, rural: f64, offset: [i32; 2]| DatasetNoise {
                dilation,
                dropout,
                rural_dropout: rural,
                offset,
                score_range: None,
                decoys: 25,
            };
            SynthConfig {
                seed: s,
                country_code: format!("SY{}", (b'A' + i as u8) as char),
                origin_lon: 10.0 + i as f64,
                origin_lat: -6.0 + 2.5 * i as f64,
                footprints: noisy(0, 0.05 + 0.02 * i as f64, 0.35, [0, 0]),
                extents: noisy((i % 2 == 1) as usize, 0.03, 0.15, [0, 0]),
                population: noisy(0, 0.1, 0.25, [(i % 3 == 2) as i32, 0]),
                ..SynthConfig::default()
            }
        })
        .collect()
}

/// Generates several countries in parallel; output order follows `configs`.
pub fn generate_bundle(configs: &[SynthConfig]) -> Result<Vec<SynthCountry>> {
    configs.par_iter().map(generate_country).collect()
}
