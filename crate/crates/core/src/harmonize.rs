//! Binarization, block-OR aggregation and country masking.

use rayon::prelude::*;

use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geio::{read_extents_geojson, read_footprints_csv, read_geotiff, AdminRegion};
use crate::grid::{copy_bits, or_bits, read_bits, word_count, BinaryRaster, GridSpec, NumericRaster, NANO_PER_ARCSEC};
use crate::rasterize::{rasterize_centers, rasterize_extents, rasterize_footprints, RasterizePolicy};

/// Aggregation factors of the downsampling pyramid; 30 × 3″ ≈ 2.8 km.
pub const DEFAULT_PYRAMID_FACTORS: [usize; 6] = [1, 2, 4, 8, 16, 30];

/// Population threshold for settlement; any positive estimate counts.
pub const DEFAULT_POPULATION_THRESHOLD: f64 = 0.0;

/// Footprints are kept at confidence of at least this value.
pub const DEFAULT_MIN_CONFIDENCE: f64 = 0.7;

/// Extents are kept at false-positive probability strictly below this value.
pub const DEFAULT_MAX_FALSE_POSITIVE: f64 = 0.4;

/// Settled iff the value is present and strictly above `threshold`.
pub fn binarize(r: &NumericRaster, threshold: f64) -> BinaryRaster {
    let spec = *r.spec();
    let vals = r.values();
    let mut words = vec![0u64; word_count(spec.len())];
    words.par_iter_mut().enumerate().for_each(|(wi, word)| {
        let start = wi * 64;
        let end = (start + 64).min(vals.len());
        for (bit, &v) in vals[start..end].iter().enumerate() {
            // NaN compares false, so no-data never settles.
            if (v as f64) > threshold {
                *word |= 1 << bit;
            }
        }
    });
    BinaryRaster::from_words(spec, words).expect("word count matches spec")
}

/// OR-aggregates `factor × factor` blocks onto the global lattice that is
/// `factor` times coarser. Edge blocks may be partial.
pub fn block_or_downscale(r: &BinaryRaster, factor: usize) -> Result<BinaryRaster> {
    if factor == 0 {
        return Err(Error::invalid("aggregation factor must be >= 1"));
    }
    if factor == 1 {
        return Ok(r.clone());
    }
    let src = r.spec();
    let out_spec = src.coarsened(factor)?;
    let f = factor as u64;
    let (sw, ow) = (src.width(), out_spec.width());
    // Global source row/col of local index 0, relative to the output origin.
    let row_off = (src.row0() - out_spec.row0() * f) as usize;
    let col_off = (src.col0() - out_spec.col0() * f) as usize;
    let words = r.words();

    let rows: Vec<Vec<u64>> = (0..out_spec.height())
        .into_par_iter()
        .map(|orow| {
            let mut acc = vec![0u64; word_count(ow)];
            let first = (orow * factor).saturating_sub(row_off);
            let last = ((orow + 1) * factor - row_off).min(src.height());
            for srow in first..last {
                let base = srow * sw;
                let mut pos = 0;
                while pos < sw {
                    let n = (sw - pos).min(64);
                    let mut v = read_bits(words, base + pos, n);
                    while v != 0 {
                        let c = pos + v.trailing_zeros() as usize;
                        v &= v - 1;
                        let oc = (c + col_off) / factor;
                        acc[oc / 64] |= 1 << (oc % 64);
                    }
                    pos += n;
                }
            }
            acc
        })
        .collect();

    let mut out = vec![0u64; word_count(out_spec.len())];
    for (orow, acc) in rows.iter().enumerate() {
        let mut done = 0;
        for &w in acc {
            let n = (ow - done).min(64);
            or_bits(&mut out, orow * ow + done, n, w);
            done += n;
        }
    }
    BinaryRaster::from_words(out_spec, out)
}

/// Aggregates a 1″ raster onto the global 3″ lattice.
pub fn upscale_1s_to_3s(r: &BinaryRaster) -> Result<BinaryRaster> {
    if r.spec().resolution_nano() != NANO_PER_ARCSEC {
        return Err(Error::alignment(format!(
            "expected a 1\" raster, got {}\"",
            r.spec().resolution_arcsec()
        )));
    }
    block_or_downscale(r, 3)
}

/// Copies `r` onto `target` (same lattice); cells outside `r` are unsettled.
pub fn reanchor(r: &BinaryRaster, target: &GridSpec) -> Result<BinaryRaster> {
    let src = r.spec();
    if !src.same_lattice(target) {
        return Err(Error::alignment("reanchor needs grids of equal resolution"));
    }
    let mut out = vec![0u64; word_count(target.len())];
    let c0 = src.col0().max(target.col0());
    let c1 = (src.col0() + src.width() as u64).min(target.col0() + target.width() as u64);
    let r0 = src.row0().max(target.row0());
    let r1 = (src.row0() + src.height() as u64).min(target.row0() + target.height() as u64);
    if c0 < c1 && r0 < r1 {
        let len = (c1 - c0) as usize;
        for gr in r0..r1 {
            let s = (gr - src.row0()) as usize * src.width() + (c0 - src.col0()) as usize;
            let d = (gr - target.row0()) as usize * target.width() + (c0 - target.col0()) as usize;
            copy_bits(r.words(), s, &mut out, d, len);
        }
    }
    BinaryRaster::from_words(*target, out)
}

#[derive(Clone, Debug)]
pub struct CountryMask {
    pub spec: GridSpec,
    /// 1 = cell centre inside the country.
    pub mask: BinaryRaster,
    pub country_code: String,
    pub area_km2: f64,
}

impl CountryMask {
    pub fn from_regions(spec: &GridSpec, regions: &[AdminRegion]) -> Result<Self> {
        let first = regions
            .first()
            .ok_or_else(|| Error::invalid("country mask needs at least one region"))?;
        let mask = rasterize_centers(regions.iter().map(|r| &r.polygon), spec);
        Ok(Self {
            spec: *spec,
            area_km2: masked_area_km2(&mask),
            mask,
            country_code: first.country_code.clone(),
        })
    }
}

/// Total area of the settled cells of `mask`.
pub fn masked_area_km2(mask: &BinaryRaster) -> f64 {
    let spec = mask.spec();
    (0..spec.height())
        .map(|row| mask.count_row(row) as f64 * spec.cell_area_km2_unchecked(row))
        .sum()
}

/// Keeps settled cells whose centre lies inside the union of `regions`.
pub fn mask_to_country(r: &BinaryRaster, regions: &[AdminRegion]) -> Result<(BinaryRaster, CountryMask)> {
    let mask = CountryMask::from_regions(r.spec(), regions)?;
    Ok((r.and(&mask.mask)?, mask))
}

/// Applies a prebuilt mask.
pub fn apply_mask(r: &BinaryRaster, mask: &CountryMask) -> Result<BinaryRaster> {
    r.and(&mask.mask)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetKind {
    /// Building outlines in CSV with WKT geometry and a confidence column.
    Footprints,
    /// Settlement-extent polygons in GeoJSON with a false-positive property.
    Extents,
    /// Gridded population counts in a GeoTIFF at 1″ or 3″.
    PopulationRaster,
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "footprints" => Ok(Self::Footprints),
            "extents" => Ok(Self::Extents),
            "population_raster" => Ok(Self::PopulationRaster),
            _ => Err(Error::invalid(format!(
                "unknown dataset kind {s:?} (expected footprints, extents or population_raster)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IngestOptions {
    pub min_confidence: f64,
    pub max_false_positive: f64,
    pub population_threshold: f64,
    pub policy: RasterizePolicy,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            min_confidence: DEFAULT_MIN_CONFIDENCE,
            max_false_positive: DEFAULT_MAX_FALSE_POSITIVE,
            population_threshold: DEFAULT_POPULATION_THRESHOLD,
            policy: RasterizePolicy::Centroid,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Ingested {
    pub raster: BinaryRaster,
    /// Vector records rasterized, or raster cells read.
    pub records: u64,
    /// Records rejected by the threshold.
    pub filtered: u64,
    /// Malformed records skipped.
    pub skipped: u64,
}

/// Reads one dataset and brings it onto `target` (unmasked).
pub fn ingest_dataset(kind: DatasetKind, path: &Path, target: &GridSpec, opts: &IngestOptions) -> Result<Ingested> {
    match kind {
        DatasetKind::Footprints => {
            let mut reader = read_footprints_csv(path, opts.min_confidence)?;
            let r = rasterize_footprints(reader.by_ref(), target, opts.policy)?;
            Ok(Ingested {
                raster: r.raster,
                records: r.stats.records,
                filtered: reader.filtered(),
                skipped: reader.skipped(),
            })
        }
        DatasetKind::Extents => {
            let mut reader = read_extents_geojson(path, opts.max_false_positive)?;
            let r = rasterize_extents(reader.by_ref(), target)?;
            Ok(Ingested {
                raster: r.raster,
                records: r.stats.records,
                filtered: reader.filtered(),
                skipped: reader.skipped(),
            })
        }
        DatasetKind::PopulationRaster => {
            let tiff = read_geotiff(path)?;
            let values = tiff.to_numeric()?;
            let settled = binarize(&values, opts.population_threshold);
            let src = settled.spec();
            let (fine, coarse) = (src.resolution_nano(), target.resolution_nano());
            let aligned = if coarse % fine == 0 {
                block_or_downscale(&settled, (coarse / fine) as usize)?
            } else {
                return Err(Error::alignment(format!(
                    "{}: population raster at {}\" cannot be brought to {}\"",
                    path.display(),
                    src.resolution_arcsec(),
                    target.resolution_arcsec()
                )));
            };
            Ok(Ingested {
                raster: reanchor(&aligned, target)?,
                records: src.len() as u64,
                filtered: 0,
                skipped: 0,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Polygon;

    fn spec(res: f64, w: usize, h: usize) -> GridSpec {
        GridSpec::new(20.0, 0.0, res, w, h).unwrap()
    }

    #[test]
    fn binarize_is_strict_and_skips_nodata() {
        let r = NumericRaster::new(spec(3.0, 4, 1), vec![0.0, 0.5, 3.0, f32::NAN]).unwrap();
        let b = binarize(&r, 0.0);
        assert_eq!((0..4).map(|c| b.get(0, c)).collect::<Vec<_>>(), [false, true, true, false]);
        assert!(binarize(&r, 3.0).is_empty());
    }

    #[test]
    fn one_settled_cell_settles_its_block() {
        let mut r = BinaryRaster::zeros(spec(3.0, 2, 2));
        r.set(1, 0, true);
        let out = block_or_downscale(&r, 2).unwrap();
        assert_eq!(out.spec().width(), 1);
        assert_eq!(out.count_settled(), 1);
        assert_eq!(block_or_downscale(&r, 1).unwrap(), r);
    }

    #[test]
    fn downscale_follows_global_lattice() {
        // Grid starting one 3" cell east of a 6" boundary.
        let s = GridSpec::new(20.0 + 3.0 / 3600.0, 0.0, 3.0, 3, 1).unwrap();
        let mut r = BinaryRaster::zeros(s);
        r.set(0, 0, true);
        let out = block_or_downscale(&r, 2).unwrap();
        assert_eq!(out.spec().width(), 2);
        assert!(out.get(0, 0) && !out.get(0, 1));
        assert_eq!(out.spec().origin_lon(), 20.0);
    }

    #[test]
    fn upscale_requires_one_arcsecond() {
        let mut r = BinaryRaster::zeros(spec(1.0, 6, 6));
        r.set(4, 4, true);
        let out = upscale_1s_to_3s(&r).unwrap();
        assert_eq!(out.spec().resolution_arcsec(), 3.0);
        assert_eq!(out.iter_settled().collect::<Vec<_>>(), vec![(1, 1)]);
        assert!(upscale_1s_to_3s(&BinaryRaster::zeros(spec(3.0, 3, 3))).is_err());
    }

    fn region(poly: Polygon) -> AdminRegion {
        AdminRegion {
            country_code: "AAA".into(),
            region_id: "AAAr1".into(),
            name: "r1".into(),
            polygon: poly.into(),
        }
    }

    #[test]
    fn mask_left_half() {
        let s = spec(3.0, 4, 2);
        let r = BinaryRaster::ones(s);
        let d = 3.0 / 3600.0;
        let left = region(Polygon::rect(20.0, -2.0 * d, 20.0 + 2.0 * d, 0.0));
        let (m, mask) = mask_to_country(&r, &[left]).unwrap();
        assert_eq!(m.iter_settled().collect::<Vec<_>>(), vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
        let expect: f64 = (0..2).map(|row| 2.0 * s.cell_area_km2(row).unwrap()).sum();
        assert!((mask.area_km2 - expect).abs() < 1e-12);
        assert_eq!(mask.country_code, "AAA");
        assert!(mask_to_country(&r, &[]).is_err());
    }

    #[test]
    fn reanchor_pads_and_crops() {
        let s = spec(3.0, 4, 4);
        let r = BinaryRaster::ones(s);
        let t = GridSpec::from_lattice(s.resolution_nano(), s.col0() + 2, s.row0() - 1, 4, 2).unwrap();
        let out = reanchor(&r, &t).unwrap();
        assert_eq!(out.iter_settled().collect::<Vec<_>>(), vec![(1, 0), (1, 1)]);
    }
}
