//! Command behaviour: exit codes, caching and small constructed inputs.

mod common;

use std::path::Path;

use common::*;
use serde_json::Value;
use settle_core::geio::{write_geotiff, write_regions_geojson, AdminRegion, GeoTiff, SampleType, WriteOptions};
use settle_core::geom::Polygon;
use settle_core::{GridSpec, NumericRaster};

fn code(args: &[&str]) -> (i32, String) {
    let out = settle(args);
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap()
}

/// A single zero-noise country.
fn zero_noise(dir: &Path) -> std::path::PathBuf {
    let cfg = dir.join("synth.toml");
    std::fs::write(&cfg, "country_code = \"ZRO\"\nwidth = 60\nheight = 50\nseed = 11\n").unwrap();
    let out = dir.join("zero");
    settle_ok(&["synth", "--config", path_str(&cfg), "--out", path_str(&out)]);
    out.join("pipeline.toml")
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&["harmonize"]).0, 2);
    assert_eq!(code(&["harmonize", "--bogus"]).0, 2);
    assert_eq!(code(&["frobnicate"]).0, 2);
    assert_eq!(code(&["harmonize", "--config", "/nonexistent/pipeline.toml"]).0, 2);
}

#[test]
fn missing_input_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = zero_noise(dir.path());
    let victim = cfg.parent().unwrap().join("ZRO").join("extents.geojson");
    std::fs::remove_file(&victim).unwrap();
    let (c, err) = code(&["harmonize", "--config", path_str(&cfg)]);
    assert_eq!(c, 2);
    assert!(err.contains(path_str(&victim)), "{err}");
}

#[test]
fn later_stages_need_earlier_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = zero_noise(dir.path());
    for stage in ["overlap", "zonal", "features", "train", "report"] {
        assert_eq!(code(&[stage, "--config", path_str(&cfg)]).0, 2, "{stage}");
    }
}

#[test]
fn malformed_input_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = zero_noise(dir.path());
    std::fs::write(cfg.parent().unwrap().join("ZRO").join("population_1s.tif"), b"not a tiff").unwrap();
    let (c, err) = code(&["harmonize", "--config", path_str(&cfg)]);
    assert_eq!(c, 3, "{err}");
    assert!(err.contains("population"), "{err}");
}

#[test]
fn computation_errors_exit_1() {
    // One country cannot fill five grouped outer folds.
    let dir = tempfile::tempdir().unwrap();
    let cfg = zero_noise(dir.path());
    for stage in ["harmonize", "features"] {
        settle_ok(&[stage, "--config", path_str(&cfg)]);
    }
    assert_eq!(code(&["train", "--config", path_str(&cfg)]).0, 1);
}

#[test]
fn zero_noise_gives_identical_caches_and_full_overlap() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = zero_noise(dir.path());
    settle_ok(&["harmonize", "--config", path_str(&cfg)]);
    let cache = cfg.parent().unwrap().join("results").join("cache").join("ZRO");
    let bytes: Vec<Vec<u8>> = ["footprints", "extents", "population"]
        .iter()
        .map(|d| std::fs::read(cache.join(format!("{d}.sbrs"))).unwrap())
        .collect();
    assert_eq!(bytes[0], bytes[1]);
    assert_eq!(bytes[0], bytes[2]);

    settle_ok(&["overlap", "--config", path_str(&cfg), "--factors", "1,2,4,8"]);
    let report = read_json(&cfg.parent().unwrap().join("results").join("overlap").join("ZRO.json"));
    let reports = report["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 4);
    for r in reports {
        assert_eq!(r["average_theta"].as_f64(), Some(1.0));
    }
}

#[test]
fn unchanged_inputs_hit_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = zero_noise(dir.path());
    let first = settle_ok(&["harmonize", "--config", path_str(&cfg)]);
    assert_eq!(first.matches("(built)").count(), 3);
    let raster = cfg.parent().unwrap().join("results").join("cache").join("ZRO").join("extents.sbrs");
    let stamp = std::fs::metadata(&raster).unwrap().modified().unwrap();
    let summary = std::fs::read(cfg.parent().unwrap().join("results").join("harmonize.csv")).unwrap();

    let second = settle_ok(&["harmonize", "--config", path_str(&cfg)]);
    assert_eq!(second.matches("(cached)").count(), 3);
    assert_eq!(std::fs::metadata(&raster).unwrap().modified().unwrap(), stamp);
    assert_eq!(std::fs::read(cfg.parent().unwrap().join("results").join("harmonize.csv")).unwrap(), summary);

    // Touching content invalidates only that dataset.
    let input = cfg.parent().unwrap().join("ZRO").join("footprints.csv");
    let mut text = std::fs::read_to_string(&input).unwrap();
    text.push('\n');
    std::fs::write(&input, text).unwrap();
    let third = settle_ok(&["harmonize", "--config", path_str(&cfg)]);
    assert_eq!(third.matches("(built)").count(), 1);
}

#[test]
fn overlap_needs_two_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("one.toml");
    std::fs::write(
        &cfg,
        "[[datasets]]\nname = \"a\"\nkind = \"footprints\"\n[[countries]]\ncode = \"X\"\nregions = \"r.geojson\"\ndatasets = { a = \"a.csv\" }\n",
    )
    .unwrap();
    let (c, err) = code(&["overlap", "--config", path_str(&cfg)]);
    assert_eq!(c, 2);
    assert!(err.contains("two datasets"), "{err}");
}

/// Two population rasters with 100 and 1000 settled cells.
fn hundred_vs_thousand(dir: &Path) -> std::path::PathBuf {
    let spec = GridSpec::new(20.0, 1.0, 3.0, 50, 40).unwrap();
    let raster = |n: usize| {
        let vals = (0..spec.len()).map(|i| if i < n { 5.0 } else { 0.0 }).collect();
        NumericRaster::new(spec, vals).unwrap()
    };
    for (name, n) in [("x", 100), ("y", 1000)] {
        let tiff = GeoTiff::from_numeric(&raster(n), SampleType::F32, None).unwrap();
        write_geotiff(dir.join(format!("{name}.tif")), &tiff, &WriteOptions::default()).unwrap();
    }
    let region = AdminRegion {
        country_code: "HTX".into(),
        region_id: "HTX.1".into(),
        name: "whole".into(),
        polygon: Polygon::rect(20.0, spec.south_lat(), spec.east_lon(), 1.0).into(),
    };
    write_regions_geojson(dir.join("regions.geojson"), &[region]).unwrap();
    let cfg = dir.join("pipeline.toml");
    std::fs::write(
        &cfg,
        "[[datasets]]\nname = \"x\"\nkind = \"population_raster\"\n\
         [[datasets]]\nname = \"y\"\nkind = \"population_raster\"\n\
         [[countries]]\ncode = \"HTX\"\nregions = \"regions.geojson\"\ndatasets = { x = \"x.tif\", y = \"y.tif\" }\n",
    )
    .unwrap();
    cfg
}

#[test]
fn upper_limit_of_a_hundred_against_a_thousand() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = hundred_vs_thousand(dir.path());
    settle_ok(&["harmonize", "--config", path_str(&cfg)]);
    settle_ok(&["overlap", "--config", path_str(&cfg), "--factors", "1"]);
    let report = read_json(&dir.path().join("out").join("overlap").join("HTX.json"));
    let r = &report["reports"][0];
    assert_eq!(r["counts"]["x"].as_u64(), Some(100));
    assert_eq!(r["counts"]["y"].as_u64(), Some(1000));
    assert_eq!(r["pairwise"][0]["theta_upper"].as_f64(), Some(0.1));
    assert_eq!(r["pairwise"][0]["theta"].as_f64(), Some(0.1));
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    settle_ok(&["synth", "--out", path_str(&a), "--seed", "9"]);
    settle_ok(&["synth", "--out", path_str(&b), "--seed", "9", "--threads", "3"]);
    for cc in ["SYA", "SYF"] {
        for f in ["footprints.csv", "extents.geojson", "population_1s.tif", "ghsl.tif", "hdi.csv"] {
            assert_eq!(std::fs::read(a.join(cc).join(f)).unwrap(), std::fs::read(b.join(cc).join(f)).unwrap(), "{cc}/{f}");
        }
    }
}
