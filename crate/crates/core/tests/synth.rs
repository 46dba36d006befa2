//! Synthetic countries survive the trip through their on-disk formats.

use settle_core::agreement::jaccard;
use settle_core::geio::{read_geotiff, read_hdi_csv, read_regions_geojson};
use settle_core::harmonize::{ingest_dataset, mask_to_country, DatasetKind, IngestOptions};
use settle_core::synth::{bundle_configs, generate_bundle, generate_country, SynthConfig};

fn kinds() -> [DatasetKind; 3] {
    [DatasetKind::Footprints, DatasetKind::Extents, DatasetKind::PopulationRaster]
}

#[test]
fn ingesting_written_files_reproduces_the_rasters() {
    let dir = tempfile::tempdir().unwrap();
    for country in generate_bundle(&bundle_configs(11)[..2]).unwrap() {
        let out = dir.path().join(&country.config.country_code);
        let files = country.write(&out).unwrap();
        let spec = country.config.spec().unwrap();
        let paths = [&files.footprints, &files.extents, &files.population];
        for ((kind, path), want) in kinds().into_iter().zip(paths).zip(&country.expected) {
            let got = ingest_dataset(kind, path, &spec, &IngestOptions::default()).unwrap();
            assert_eq!(&got.raster, want, "{kind:?}");
            if kind != DatasetKind::PopulationRaster {
                assert_eq!(got.filtered, 25, "{kind:?} decoys");
            }
        }
        let regions = read_regions_geojson(&files.regions).unwrap();
        assert_eq!(regions, country.regions);
        let (masked, mask) = mask_to_country(&country.expected[0], &regions).unwrap();
        assert_eq!(masked, country.expected[0]);
        assert_eq!(mask.mask.count_settled(), spec.len() as u64);
        assert_eq!(read_hdi_csv(&files.hdi).unwrap(), country.hdi);
        let ghsl = read_geotiff(&files.ghsl).unwrap();
        assert_eq!(ghsl.to_categorical(&settle_core::featurize::GHSL_CODES).unwrap().codes(), country.features.ghsl.codes());
    }
}

#[test]
fn zero_noise_agrees_perfectly_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig { seed: 5, width: 64, height: 48, ..SynthConfig::default() };
    let country = generate_country(&cfg).unwrap();
    let files = country.write(dir.path()).unwrap();
    let spec = cfg.spec().unwrap();
    let paths = [&files.footprints, &files.extents, &files.population];
    let rasters: Vec<_> = kinds()
        .into_iter()
        .zip(paths)
        .map(|(k, p)| ingest_dataset(k, p, &spec, &IngestOptions::default()).unwrap().raster)
        .collect();
    for r in &rasters {
        assert_eq!(r, &country.truth);
    }
    assert_eq!(jaccard(&rasters[0], &rasters[2]).unwrap(), 1.0);
}

#[test]
fn written_bytes_repeat() {
    let cfg = &bundle_configs(3)[4];
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate_country(cfg).unwrap().write(a.path()).unwrap();
    generate_country(cfg).unwrap().write(b.path()).unwrap();
    let mut names: Vec<_> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 9);
    for n in names {
        assert_eq!(std::fs::read(a.path().join(&n)).unwrap(), std::fs::read(b.path().join(&n)).unwrap(), "{n:?}");
    }
}
