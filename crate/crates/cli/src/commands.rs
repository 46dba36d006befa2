use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rayon::prelude::*;
use serde_json::Value;

use settle_core::agreement::{overlap_pyramid, OverlapReport, OverlapReports};
use settle_core::featurize::{build_table, FeatureLayers, FeatureSummary, FeatureTable, GHSL_CODES};
use settle_core::geio::report::{csv_row, num, object, opt_cell};
use settle_core::geio::{
    fmt_g6, read_binary_raster, read_geotiff, read_hdi_csv, read_regions_geojson, write_binary_raster, write_report,
    AdminRegion, Georef, HdiTable, Report, ReportFormat,
};
use settle_core::geio::tiff::reproject_mollweide;
use settle_core::harmonize::{apply_mask, ingest_dataset, CountryMask};
use settle_core::mlcore::{nested_cv, Dataset};
use settle_core::synth::{bundle_configs, generate_bundle, SynthConfig};
use settle_core::zonal::{hdi_association, join_hdi, zonal_overlap, AssociationReport, ZonalTable};
use settle_core::{BinaryRaster, GridSpec};

use crate::cache::{Cache, Stats};
use crate::config::{check_factors, require_files, CountrySpec, PipelineConfig};
use crate::svg;
use crate::{Cli, Command, UsageError};

/// Progress line on stdout; a closed pipe is not an error.
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    if cli.command == Command::Synth {
        return synth(cli);
    }
    let cfg = load_config(cli)?;
    match cli.command {
        Command::Synth => unreachable!(),
        Command::Harmonize => harmonize(&cfg),
        Command::Overlap => overlap(&cfg, cli.factors.as_deref()),
        Command::Zonal => zonal(&cfg),
        Command::Features => features(&cfg),
        Command::Train => train(&cfg),
        Command::Report => report(&cfg),
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<PipelineConfig> {
    let path = cli.config.as_ref().ok_or_else(|| usage("--config is required"))?;
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.model.seed = seed;
    }
    if let Some(s) = cli.subsample {
        if !(s > 0.0 && s <= 1.0) {
            return Err(usage("--subsample must lie in (0, 1]"));
        }
        cfg.subsample = s;
    }
    Ok(cfg)
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

/// Writes `{stem}.csv` and `{stem}.json` under `dir`.
fn write_both(report: &dyn Report, dir: &Path, stem: &str) -> anyhow::Result<()> {
    create_dir(dir)?;
    write_report(report, dir.join(format!("{stem}.csv")), ReportFormat::Csv)?;
    write_report(report, dir.join(format!("{stem}.json")), ReportFormat::Json)?;
    Ok(())
}

// ---------------------------------------------------------------- synth

fn synth(cli: &Cli) -> anyhow::Result<()> {
    let out = cli.out.as_ref().ok_or_else(|| usage("synth needs --out"))?;
    let configs = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
            let mut c = SynthConfig::from_toml(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            if let Some(seed) = cli.seed {
                c.seed = seed;
            }
            vec![c]
        }
        None => bundle_configs(cli.seed.unwrap_or(0)),
    };
    let countries = generate_bundle(&configs)?;
    create_dir(out)?;
    for c in &countries {
        let cc = &c.config.country_code;
        c.write(&out.join(cc))?;
        say!(
            "{cc}: {}x{} cells, {} settled in truth, {} regions",
            c.config.width,
            c.config.height,
            c.truth.count_settled(),
            c.regions.len()
        );
    }
    let path = out.join("pipeline.toml");
    std::fs::write(&path, pipeline_toml(&configs, cli.seed.unwrap_or(0)))
        .with_context(|| format!("cannot write {}", path.display()))?;
    say!("wrote {}", path.display());
    Ok(())
}

fn pipeline_toml(configs: &[SynthConfig], seed: u64) -> String {
    let mut s = String::from(
        "# Written by `settle synth`. Paths are relative to this file.\n\
         out = \"results\"\n\
         resolution_arcsec = 3\n\
         pyramid_factors = [1, 2, 4, 8, 16, 30]\n\n\
         [[datasets]]\nname = \"footprints\"\nkind = \"footprints\"\nmin_confidence = 0.7\n\n\
         [[datasets]]\nname = \"extents\"\nkind = \"extents\"\nmax_false_positive = 0.4\n\n\
         [[datasets]]\nname = \"population\"\nkind = \"population_raster\"\nthreshold = 0.0\n",
    );
    for c in configs {
        let cc = &c.country_code;
        s.push_str(&format!(
            "\n[[countries]]\ncode = \"{cc}\"\nregions = \"{cc}/regions.geojson\"\nhdi = \"{cc}/hdi.csv\"\n\
             datasets = {{ footprints = \"{cc}/footprints.csv\", extents = \"{cc}/extents.geojson\", \
             population = \"{cc}/population_1s.tif\" }}\n\
             features = {{ rwi = \"{cc}/rwi.tif\", rwi_error = \"{cc}/rwi_error.tif\", \
             nightlight = \"{cc}/nightlight.tif\", ghsl = \"{cc}/ghsl.tif\" }}\n"
        ));
    }
    s.push_str(&format!("\n[model]\nseed = {seed}\n"));
    s
}

// ------------------------------------------------------------ harmonize

/// The target grid of a country: its region bounding box snapped outward.
fn country_grid(regions: &[AdminRegion], resolution_arcsec: f64) -> anyhow::Result<GridSpec> {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for r in regions {
        if let Some((a, b)) = r.polygon.bbox() {
            lo = [lo[0].min(a[0]), lo[1].min(a[1])];
            hi = [hi[0].max(b[0]), hi[1].max(b[1])];
        }
    }
    if !lo[0].is_finite() {
        anyhow::bail!("region file has no polygons");
    }
    Ok(GridSpec::covering(lo[0], lo[1], hi[0], hi[1], resolution_arcsec)?)
}

fn read_regions(c: &CountrySpec) -> anyhow::Result<Vec<AdminRegion>> {
    let regions = read_regions_geojson(&c.regions).with_context(|| format!("country {}", c.code))?;
    if regions.is_empty() {
        anyhow::bail!("country {}: {} holds no regions", c.code, c.regions.display());
    }
    Ok(regions)
}

struct HarmonizeRow {
    country: String,
    dataset: String,
    stats: Stats,
}

struct HarmonizeSummary(Vec<HarmonizeRow>);

fn density(s: &Stats) -> Option<f64> {
    (s.mask_area_km2 > 0.0).then(|| s.settled_cells as f64 / s.mask_area_km2)
}

impl Report for HarmonizeSummary {
    fn to_json(&self) -> Value {
        object([
            ("schema_version", Value::from(1)),
            (
                "rows",
                Value::Array(
                    self.0
                        .iter()
                        .map(|r| {
                            object([
                                ("country_code", Value::from(r.country.clone())),
                                ("dataset", Value::from(r.dataset.clone())),
                                ("settled_cells", Value::from(r.stats.settled_cells)),
                                ("area_km2", num(r.stats.mask_area_km2)),
                                ("density_per_km2", density(&r.stats).map_or(Value::Null, num)),
                                ("records", Value::from(r.stats.records)),
                                ("filtered", Value::from(r.stats.filtered)),
                                ("skipped", Value::from(r.stats.skipped)),
                            ])
                        })
                        .collect(),
                ),
            ),
        ])
    }

    fn write_csv(&self, w: &mut dyn std::io::Write) -> settle_core::Result<()> {
        let header = [
            "country_code",
            "dataset",
            "settled_cells",
            "area_km2",
            "density_per_km2",
            "records",
            "filtered",
            "skipped",
        ];
        csv_row(w, &header.map(String::from))?;
        for r in &self.0 {
            csv_row(
                w,
                &[
                    r.country.clone(),
                    r.dataset.clone(),
                    r.stats.settled_cells.to_string(),
                    fmt_g6(r.stats.mask_area_km2),
                    opt_cell(density(&r.stats)),
                    r.stats.records.to_string(),
                    r.stats.filtered.to_string(),
                    r.stats.skipped.to_string(),
                ],
            )?;
        }
        Ok(())
    }
}

fn harmonize(cfg: &PipelineConfig) -> anyhow::Result<()> {
    for c in &cfg.countries {
        require_files(std::iter::once(c.regions.as_path()).chain(c.datasets.iter().map(PathBuf::as_path)))?;
    }
    let mut rows = Vec::new();
    for c in &cfg.countries {
        let regions = read_regions(c)?;
        let spec = country_grid(&regions, cfg.resolution_arcsec)?;
        let mask = CountryMask::from_regions(&spec, &regions)?;
        let mut cache = Cache::open(&cfg.cache_dir(&c.code))?;
        let regions_hash = cache.file_hash(&c.regions)?;

        let mut keys = Vec::new();
        for (d, path) in cfg.datasets.iter().zip(&c.datasets) {
            let input_hash = cache.file_hash(path)?;
            let key = Cache::key(&[
                &format!("{:?}", d.kind),
                &format!("{:?}", d.options),
                &format!("{spec:?}"),
                &input_hash,
                &regions_hash,
            ]);
            keys.push(key);
        }
        let built: Vec<Option<Stats>> = cfg
            .datasets
            .par_iter()
            .zip(&c.datasets)
            .zip(&keys)
            .map(|((d, path), key)| -> anyhow::Result<Option<Stats>> {
                if cache.lookup(&d.name, key).is_some() {
                    return Ok(None);
                }
                let ctx = || format!("dataset {} ({})", d.name, path.display());
                let ing = ingest_dataset(d.kind, path, &spec, &d.options).with_context(ctx)?;
                let masked = apply_mask(&ing.raster, &mask).with_context(ctx)?;
                write_binary_raster(cache.raster_path(&d.name), &masked).with_context(ctx)?;
                Ok(Some(Stats {
                    settled_cells: masked.count_settled(),
                    mask_area_km2: mask.area_km2,
                    records: ing.records,
                    filtered: ing.filtered,
                    skipped: ing.skipped,
                }))
            })
            .collect::<anyhow::Result<_>>()?;
        for ((d, key), fresh) in cfg.datasets.iter().zip(keys).zip(built) {
            let status = if fresh.is_some() { "built" } else { "cached" };
            if let Some(stats) = fresh {
                cache.insert(&d.name, key, stats);
            }
            let stats = cache.stats(&d.name).cloned().unwrap_or_default();
            say!(
                "{} {}: {} settled cells, {} per km2 ({status})",
                c.code,
                d.name,
                stats.settled_cells,
                density(&stats).map_or_else(|| "n/a".to_string(), fmt_g6)
            );
            rows.push(HarmonizeRow { country: c.code.clone(), dataset: d.name.clone(), stats });
        }
        cache.save()?;
    }
    write_both(&HarmonizeSummary(rows), &cfg.out, "harmonize")
}

/// Cached rasters of one country, in dataset order.
fn load_rasters(cfg: &PipelineConfig, c: &CountrySpec, n: usize) -> anyhow::Result<Vec<BinaryRaster>> {
    let dir = cfg.cache_dir(&c.code);
    let rasters = cfg.datasets[..n]
        .iter()
        .map(|d| {
            let p = dir.join(format!("{}.sbrs", d.name));
            if !p.is_file() {
                return Err(usage(format!(
                    "no harmonized raster at {}; run `settle harmonize` first",
                    p.display()
                )));
            }
            Ok(read_binary_raster(&p)?)
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    for r in &rasters[1..] {
        rasters[0].spec().check_same(r.spec())?;
    }
    Ok(rasters)
}

// -------------------------------------------------------------- overlap

struct OverlapSummary(Vec<(String, Vec<OverlapReport>)>);

impl Report for OverlapSummary {
    fn to_json(&self) -> Value {
        object([
            ("schema_version", Value::from(1)),
            (
                "countries",
                Value::Array(
                    self.0
                        .iter()
                        .map(|(cc, reports)| {
                            object([
                                ("country_code", Value::from(cc.clone())),
                                ("reports", Value::Array(reports.iter().map(Report::to_json).collect())),
                            ])
                        })
                        .collect(),
                ),
            ),
        ])
    }

    fn write_csv(&self, w: &mut dyn std::io::Write) -> settle_core::Result<()> {
        let names = self.0.first().and_then(|(_, r)| r.first()).map(|r| r.dataset_names.clone()).unwrap_or_default();
        let mut header: Vec<String> = ["country_code", "scale_factor", "average_theta", "average_theta_upper"]
            .map(String::from)
            .to_vec();
        header.extend(names.iter().map(|n| format!("count_{n}")));
        header.extend(names.iter().map(|n| format!("density_{n}")));
        csv_row(w, &header)?;
        for (cc, reports) in &self.0 {
            for r in reports {
                let mut rec = vec![
                    cc.clone(),
                    r.scale_factor.to_string(),
                    fmt_g6(r.average_theta),
                    opt_cell(r.average_theta_upper),
                ];
                rec.extend(r.counts.iter().map(u64::to_string));
                match &r.density_per_km2 {
                    Some(d) => rec.extend(d.iter().map(|&v| fmt_g6(v))),
                    None => rec.extend(names.iter().map(|_| String::new())),
                }
                csv_row(w, &rec)?;
            }
        }
        Ok(())
    }
}

fn overlap(cfg: &PipelineConfig, factors: Option<&[usize]>) -> anyhow::Result<()> {
    let factors = match factors {
        Some(f) => {
            check_factors(f)?;
            f.to_vec()
        }
        None => cfg.pyramid_factors.clone(),
    };
    let names = cfg.dataset_names();
    let dir = cfg.out.join("overlap");
    let mut summary = Vec::new();
    for c in &cfg.countries {
        let rasters = load_rasters(cfg, c, names.len())?;
        let regions = read_regions(c)?;
        let mask = CountryMask::from_regions(rasters[0].spec(), &regions)?;
        let reports = overlap_pyramid(&names, &rasters, &factors, Some(&mask))
            .with_context(|| format!("country {}", c.code))?;
        write_both(&OverlapReports(reports.clone()), &dir, &c.code)?;
        let r = &reports[0];
        say!(
            "{}: theta = {}, theta_upper = {}",
            c.code,
            fmt_g6(r.average_theta),
            r.average_theta_upper.map_or_else(|| "n/a".to_string(), fmt_g6)
        );
        summary.push((c.code.clone(), reports));
    }
    write_both(&OverlapSummary(summary), &cfg.out, "overlap_summary")
}

// ---------------------------------------------------------------- zonal

fn zonal(cfg: &PipelineConfig) -> anyhow::Result<()> {
    for c in &cfg.countries {
        require_files(std::iter::once(c.regions.as_path()).chain(c.hdi.as_deref()))?;
    }
    let names = cfg.dataset_names();
    let mut table = ZonalTable::default();
    let mut hdi_rows = Vec::new();
    for c in &cfg.countries {
        let rasters = load_rasters(cfg, c, names.len())?;
        let regions = read_regions(c)?;
        table.merge(zonal_overlap(&names, &rasters, &regions).with_context(|| format!("country {}", c.code))?)?;
        if let Some(p) = &c.hdi {
            hdi_rows.extend(read_hdi_csv(p)?.rows().iter().cloned());
        }
    }
    let (table, unmatched) = if cfg.countries.iter().any(|c| c.hdi.is_some()) {
        join_hdi(&table, &HdiTable::new(hdi_rows)?)?
    } else {
        let n = table.rows.len();
        (table, n)
    };
    let complete_rows = table.rows.iter().filter(|r| r.hdi.is_some() && r.theta_avg.is_some()).count();
    let correlation = match hdi_association(&table) {
        Ok(c) => Some(c),
        Err(e) => {
            log::warn!("no HDI association: {e}");
            None
        }
    };
    write_both(&table, &cfg.out, "zonal")?;
    write_both(&AssociationReport { correlation, complete_rows, unmatched_hdi: unmatched }, &cfg.out, "association")?;
    match correlation {
        Some(c) => say!(
            "{} regions; HDI vs theta: r = {}, p = {} (n = {})",
            table.rows.len(),
            fmt_g6(c.r),
            fmt_g6(c.p),
            c.n
        ),
        None => say!("{} regions; HDI association not available", table.rows.len()),
    }
    Ok(())
}

// ------------------------------------------------------------- features

fn load_layers(c: &CountrySpec, spec: &GridSpec) -> anyhow::Result<FeatureLayers> {
    let f = c
        .features
        .as_ref()
        .ok_or_else(|| usage(format!("country {} has no [features] paths", c.code)))?;
    let numeric = |p: &Path| -> anyhow::Result<_> { Ok(read_geotiff(p)?.to_numeric()?) };
    let ghsl_tiff = read_geotiff(&f.ghsl)?;
    let ghsl = match ghsl_tiff.georef {
        Georef::Geographic(_) => ghsl_tiff.to_categorical(&GHSL_CODES)?,
        Georef::Mollweide(_) => {
            let target = GridSpec::covering(spec.origin_lon(), spec.south_lat(), spec.east_lon(), spec.origin_lat(), 30.0)?;
            reproject_mollweide(&ghsl_tiff, &target, &GHSL_CODES)?
        }
    };
    Ok(FeatureLayers {
        rwi: numeric(&f.rwi)?,
        rwi_error: numeric(&f.rwi_error)?,
        nightlight: numeric(&f.nightlight)?,
        ghsl,
    })
}

fn features(cfg: &PipelineConfig) -> anyhow::Result<()> {
    cfg.require_three()?;
    for c in &cfg.countries {
        let f = c
            .features
            .as_ref()
            .ok_or_else(|| usage(format!("country {} has no [features] paths", c.code)))?;
        require_files([f.rwi.as_path(), &f.rwi_error, &f.nightlight, &f.ghsl])?;
    }
    let mut tables = Vec::new();
    for c in &cfg.countries {
        let rasters = load_rasters(cfg, c, 3)?;
        let layers = load_layers(c, rasters[0].spec()).with_context(|| format!("country {}", c.code))?;
        let t = build_table(&c.code, [&rasters[0], &rasters[1], &rasters[2]], &layers)?;
        say!(
            "{}: {} rows, {} dropped, positive share {}",
            c.code,
            t.len(),
            t.stats.dropped,
            if t.is_empty() { "n/a".to_string() } else { fmt_g6(t.positive_share()) }
        );
        tables.push(t);
    }
    write_both(&FeatureSummary::from_tables(&tables), &cfg.out, "features_summary")?;
    let mut all = FeatureTable::default();
    for t in &tables {
        all.append(t);
    }
    all.write(cfg.out.join("features.sftb"))?;
    Ok(())
}

// ---------------------------------------------------------------- train

fn train(cfg: &PipelineConfig) -> anyhow::Result<()> {
    let path = cfg.out.join("features.sftb");
    if !path.is_file() {
        return Err(usage(format!("{} not found; run `settle features` first", path.display())));
    }
    let table = FeatureTable::read(&path)?.subsample(cfg.subsample, cfg.model.seed)?;
    let data = Dataset::from_table(&table);
    let result = nested_cv(&data, &cfg.model)?;
    create_dir(&cfg.out)?;
    write_report(&result, cfg.out.join("model.json"), ReportFormat::Json)?;
    write_report(&result, cfg.out.join("odds_ratios.csv"), ReportFormat::Csv)?;
    say!(
        "{} rows; F1 {} [{}, {}], balanced accuracy {} [{}, {}]; lambda {}",
        result.n_rows,
        fmt_g6(result.f1_mean),
        fmt_g6(result.f1_range.0),
        fmt_g6(result.f1_range.1),
        fmt_g6(result.balanced_accuracy_mean),
        fmt_g6(result.balanced_accuracy_range.0),
        fmt_g6(result.balanced_accuracy_range.1),
        fmt_g6(result.final_lambda)
    );
    Ok(())
}

// --------------------------------------------------------------- report

fn read_json(path: &Path) -> anyhow::Result<Value> {
    if !path.is_file() {
        return Err(usage(format!("report input not found: {}", path.display())));
    }
    let bytes = std::fs::read(path).with_context(|| path.display().to_string())?;
    serde_json::from_slice(&bytes).with_context(|| format!("{} is not valid JSON", path.display()))
}

fn f64_of(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn write_svg(dir: &Path, name: &str, body: &str) -> anyhow::Result<()> {
    let path = dir.join(name);
    let mut f = std::fs::File::create(&path).with_context(|| path.display().to_string())?;
    f.write_all(body.as_bytes()).with_context(|| path.display().to_string())?;
    say!("wrote {}", path.display());
    Ok(())
}

fn report(cfg: &PipelineConfig) -> anyhow::Result<()> {
    let harmonized = read_json(&cfg.out.join("harmonize.json"))?;
    let zonal = read_json(&cfg.out.join("zonal.json"))?;
    let model = read_json(&cfg.out.join("model.json"))?;
    let dir = cfg.out.join("figures");
    create_dir(&dir)?;

    let names = cfg.dataset_names();
    let rows = harmonized["rows"].as_array().cloned().unwrap_or_default();
    let count = |cc: &str, d: &str| {
        rows.iter()
            .find(|r| r["country_code"] == cc && r["dataset"] == d)
            .map_or(f64::NAN, |r| f64_of(&r["settled_cells"]))
    };
    for i in 0..names.len() {
        for j in i + 1..names.len() {
            let points: Vec<(String, f64, f64)> = cfg
                .countries
                .iter()
                .map(|c| (c.code.clone(), count(&c.code, &names[i]), count(&c.code, &names[j])))
                .collect();
            let body = svg::scatter(
                &format!("Settled cells: {} vs {}", names[i], names[j]),
                &format!("{} settled cells", names[i]),
                &format!("{} settled cells", names[j]),
                &points,
            );
            write_svg(&dir, &format!("scatter_{}_{}.svg", names[i], names[j]), &body)?;
        }
    }

    let zrows = zonal["rows"].as_array().cloned().unwrap_or_default();
    let mut regions = Vec::new();
    for c in &cfg.countries {
        require_files([c.regions.as_path()])?;
        for r in read_regions(c)? {
            let theta = zrows
                .iter()
                .find(|z| z["country_code"] == r.country_code.as_str() && z["region_id"] == r.region_id.as_str())
                .and_then(|z| z["theta_avg"].as_f64());
            regions.push(svg::ChoroRegion {
                label: format!("{} {}", r.region_id, r.name),
                rings: r.polygon.rings().map(<[[f64; 2]]>::to_vec).collect(),
                theta,
            });
        }
    }
    write_svg(&dir, "choropleth.svg", &svg::choropleth("Average overlap by region", &regions))?;

    let odds: Vec<svg::OddsRow> = model["odds_ratios"]
        .as_array()
        .cloned()
        .unwrap_or_default()
        .iter()
        .map(|o| svg::OddsRow {
            feature: o["feature"].as_str().unwrap_or_default().to_string(),
            odds_ratio: f64_of(&o["odds_ratio"]),
            lo: f64_of(&o["ci_low"]),
            hi: f64_of(&o["ci_high"]),
        })
        .collect();
    write_svg(&dir, "odds_ratios.svg", &svg::odds_ratio_chart("Odds ratios of agreement", &odds))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synth_pipeline_config_parses() {
        let text = pipeline_toml(&bundle_configs(3), 3);
        let cfg = PipelineConfig::parse(&text, Path::new("/d")).unwrap();
        assert_eq!(cfg.countries.len(), 6);
        assert_eq!(cfg.dataset_names(), ["footprints", "extents", "population"]);
        assert_eq!(cfg.model.seed, 3);
        assert_eq!(cfg.out, Path::new("/d/results"));
    }
}
