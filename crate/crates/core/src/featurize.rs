//! Per-cell design table: agreement label, covariates sampled from coarse
//! layers, GHSL class and country grouping.
//!
//! Binary cache layout (little-endian): magic `SFTB`, version byte 1, u16
//! country count, each country as u16 byte length + UTF-8, u64 row count,
//! then the columns `global_row` u32, `global_col` u32, `country` u16,
//! `label` u8, `class` u8 (GHSL code), `rwi` f64, `rwi_error` f64,
//! `nightlight` f64, each `n` entries long.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geio::report::{csv_row, fmt_g6, num, object, Report};
use crate::grid::{BinaryRaster, CategoricalRaster, GridSpec, NumericRaster};
use crate::rng::SplitMix64;

/// GHSL degree-of-urbanisation classes with their SMOD codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum SettlementClass {
    UrbanCentre = 30,
    DenseUrbanCluster = 23,
    SemiDenseUrbanCluster = 22,
    Suburban = 21,
    RuralCluster = 13,
    LowDensityRural = 12,
    VeryLowDensityRural = 11,
    Water = 10,
}

/// Every valid GHSL code.
pub const GHSL_CODES: [u8; 8] = [10, 11, 12, 13, 21, 22, 23, 30];

/// Indicator columns; suburban is the omitted reference.
pub const INDICATOR_CLASSES: [SettlementClass; 6] = [
    SettlementClass::UrbanCentre,
    SettlementClass::DenseUrbanCluster,
    SettlementClass::SemiDenseUrbanCluster,
    SettlementClass::RuralCluster,
    SettlementClass::LowDensityRural,
    SettlementClass::VeryLowDensityRural,
];

pub const NUMERIC_FEATURES: [&str; 3] = ["rwi", "rwi_error", "nightlight"];

impl SettlementClass {
    pub fn from_code(code: u8) -> Option<Self> {
        use SettlementClass::*;
        Some(match code {
            30 => UrbanCentre,
            23 => DenseUrbanCluster,
            22 => SemiDenseUrbanCluster,
            21 => Suburban,
            13 => RuralCluster,
            12 => LowDensityRural,
            11 => VeryLowDensityRural,
            10 => Water,
            _ => return None,
        })
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        use SettlementClass::*;
        match self {
            UrbanCentre => "urban_centre",
            DenseUrbanCluster => "dense_urban_cluster",
            SemiDenseUrbanCluster => "semi_dense_urban_cluster",
            Suburban => "suburban",
            RuralCluster => "rural_cluster",
            LowDensityRural => "low_density_rural",
            VeryLowDensityRural => "very_low_density_rural",
            Water => "water",
        }
    }

    /// Water cells are modelled as very low density rural.
    pub fn effective(self) -> Self {
        match self {
            SettlementClass::Water => SettlementClass::VeryLowDensityRural,
            c => c,
        }
    }

    /// Rural cluster and denser.
    pub fn is_high_density(self) -> bool {
        self.code() >= SettlementClass::RuralCluster.code()
    }

    pub fn one_hot(self) -> [f64; 6] {
        let mut v = [0.0; 6];
        if let Some(i) = INDICATOR_CLASSES.iter().position(|&c| c == self.effective()) {
            v[i] = 1.0;
        }
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct CellId {
    pub row: usize,
    pub col: usize,
}

/// Every cell settled in at least one raster, labelled 1 when settled in all.
pub fn label_cells(x: &BinaryRaster, y: &BinaryRaster, z: &BinaryRaster) -> Result<Vec<(CellId, u8)>> {
    x.spec().check_same(y.spec())?;
    x.spec().check_same(z.spec())?;
    let width = x.spec().width();
    let (xw, yw, zw) = (x.words(), y.words(), z.words());
    Ok((0..xw.len())
        .flat_map(|i| {
            let (any, all) = (xw[i] | yw[i] | zw[i], xw[i] & yw[i] & zw[i]);
            let mut w = any;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let bit = w.trailing_zeros();
                w &= w - 1;
                let idx = i * 64 + bit as usize;
                Some((
                    CellId {
                        row: idx / width,
                        col: idx % width,
                    },
                    (all >> bit & 1) as u8,
                ))
            })
        })
        .collect())
}

#[derive(Clone, Debug)]
pub enum FeatureLayer {
    Numeric(NumericRaster),
    Categorical(CategoricalRaster),
}

impl FeatureLayer {
    fn spec(&self) -> &GridSpec {
        match self {
            FeatureLayer::Numeric(r) => r.spec(),
            FeatureLayer::Categorical(r) => r.spec(),
        }
    }
}

/// Nearest-neighbour sample: the layer cell containing the centre of
/// `cell` on `spec`. Missing when outside the layer or no-data.
pub fn sample_feature(layer: &FeatureLayer, spec: &GridSpec, cell: CellId) -> Option<f64> {
    let (lon, lat) = spec.cell_center(cell.row, cell.col);
    let (r, c) = layer.spec().cell_of(lon, lat)?;
    match layer {
        FeatureLayer::Numeric(n) => n.get(r, c).map(f64::from),
        FeatureLayer::Categorical(k) => k.get(r, c).map(f64::from),
    }
}

#[derive(Clone, Debug)]
pub struct FeatureLayers {
    pub rwi: NumericRaster,
    pub rwi_error: NumericRaster,
    pub nightlight: NumericRaster,
    pub ghsl: CategoricalRaster,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BuildStats {
    /// Cells settled in at least one dataset.
    pub candidates: u64,
    /// Rows dropped for a missing or invalid covariate.
    pub dropped: u64,
    /// Water cells folded into very low density rural.
    pub water_remapped: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureTable {
    pub countries: Vec<String>,
    pub global_row: Vec<u32>,
    pub global_col: Vec<u32>,
    pub country: Vec<u16>,
    pub label: Vec<u8>,
    /// Effective GHSL class (water already remapped).
    pub class: Vec<SettlementClass>,
    pub rwi: Vec<f64>,
    pub rwi_error: Vec<f64>,
    pub nightlight: Vec<f64>,
    pub stats: BuildStats,
}

#[derive(Default)]
struct Band {
    rows: Vec<(u32, u32, u8, SettlementClass, f64, f64, f64)>,
    stats: BuildStats,
}

/// Rows settled in `x ∪ y ∪ z`, labelled, with covariates; rows with any
/// missing covariate are dropped and counted. Row order follows the cells.
pub fn build_table(
    country_code: &str,
    rasters: [&BinaryRaster; 3],
    layers: &FeatureLayers,
) -> Result<FeatureTable> {
    let [x, y, z] = rasters;
    let labels = label_cells(x, y, z)?;
    let spec = *x.spec();
    let rwi = FeatureLayer::Numeric(layers.rwi.clone());
    let err = FeatureLayer::Numeric(layers.rwi_error.clone());
    let nl = FeatureLayer::Numeric(layers.nightlight.clone());
    let ghsl = FeatureLayer::Categorical(layers.ghsl.clone());

    let bands: Vec<Band> = labels
        .par_chunks(4096)
        .map(|chunk| {
            let mut band = Band::default();
            for &(cell, label) in chunk {
                band.stats.candidates += 1;
                let sample = |l: &FeatureLayer| sample_feature(l, &spec, cell);
                let class = sample(&ghsl).and_then(|c| SettlementClass::from_code(c as u8));
                let vals = (sample(&rwi), sample(&err), sample(&nl), class);
                let (Some(a), Some(b), Some(n), Some(class)) = vals else {
                    band.stats.dropped += 1;
                    continue;
                };
                if n < 0.0 {
                    band.stats.dropped += 1;
                    continue;
                }
                if class == SettlementClass::Water {
                    band.stats.water_remapped += 1;
                }
                band.rows.push((
                    (spec.row0() as usize + cell.row) as u32,
                    (spec.col0() as usize + cell.col) as u32,
                    label,
                    class.effective(),
                    a,
                    b,
                    n,
                ));
            }
            band
        })
        .collect();

    let mut t = FeatureTable {
        countries: vec![country_code.to_string()],
        ..Default::default()
    };
    for band in bands {
        t.stats.candidates += band.stats.candidates;
        t.stats.dropped += band.stats.dropped;
        t.stats.water_remapped += band.stats.water_remapped;
        for (r, c, label, class, a, b, n) in band.rows {
            t.global_row.push(r);
            t.global_col.push(c);
            t.country.push(0);
            t.label.push(label);
            t.class.push(class);
            t.rwi.push(a);
            t.rwi_error.push(b);
            t.nightlight.push(n);
        }
    }
    if t.stats.dropped > 0 {
        log::info!("{country_code}: dropped {} rows with missing covariates", t.stats.dropped);
    }
    Ok(t)
}

impl FeatureTable {
    pub fn len(&self) -> usize {
        self.label.len()
    }

    pub fn is_empty(&self) -> bool {
        self.label.is_empty()
    }

    /// Appends `other`, remapping its country indices.
    pub fn append(&mut self, other: &FeatureTable) {
        let remap: Vec<u16> = other
            .countries
            .iter()
            .map(|c| match self.countries.iter().position(|x| x == c) {
                Some(i) => i as u16,
                None => {
                    self.countries.push(c.clone());
                    (self.countries.len() - 1) as u16
                }
            })
            .collect();
        self.global_row.extend(&other.global_row);
        self.global_col.extend(&other.global_col);
        self.country.extend(other.country.iter().map(|&c| remap[c as usize]));
        self.label.extend(&other.label);
        self.class.extend(&other.class);
        self.rwi.extend(&other.rwi);
        self.rwi_error.extend(&other.rwi_error);
        self.nightlight.extend(&other.nightlight);
        self.stats.candidates += other.stats.candidates;
        self.stats.dropped += other.stats.dropped;
        self.stats.water_remapped += other.stats.water_remapped;
    }

    /// Keeps the listed rows, in the given order.
    pub fn select(&self, idx: &[usize]) -> FeatureTable {
        FeatureTable {
            countries: self.countries.clone(),
            global_row: idx.iter().map(|&i| self.global_row[i]).collect(),
            global_col: idx.iter().map(|&i| self.global_col[i]).collect(),
            country: idx.iter().map(|&i| self.country[i]).collect(),
            label: idx.iter().map(|&i| self.label[i]).collect(),
            class: idx.iter().map(|&i| self.class[i]).collect(),
            rwi: idx.iter().map(|&i| self.rwi[i]).collect(),
            rwi_error: idx.iter().map(|&i| self.rwi_error[i]).collect(),
            nightlight: idx.iter().map(|&i| self.nightlight[i]).collect(),
            stats: self.stats,
        }
    }

    /// Uniform Bernoulli row subsample with a fixed seed.
    pub fn subsample(&self, fraction: f64, seed: u64) -> Result<FeatureTable> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::invalid(format!("subsample fraction {fraction} outside (0, 1]")));
        }
        if fraction == 1.0 {
            return Ok(self.clone());
        }
        let mut rng = SplitMix64::derive(seed, 0x5AB5);
        let idx: Vec<usize> = (0..self.len()).filter(|_| rng.next_f64() < fraction).collect();
        Ok(self.select(&idx))
    }

    pub fn numeric(&self, i: usize) -> [f64; 3] {
        [self.rwi[i], self.rwi_error[i], self.nightlight[i]]
    }

    pub fn positive_share(&self) -> f64 {
        self.label.iter().map(|&l| l as f64).sum::<f64>() / self.len() as f64
    }

    pub fn encode(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(b"SFTB")?;
        w.write_all(&[1])?;
        w.write_all(&(self.countries.len() as u16).to_le_bytes())?;
        for c in &self.countries {
            w.write_all(&(c.len() as u16).to_le_bytes())?;
            w.write_all(c.as_bytes())?;
        }
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for v in &self.global_row {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &self.global_col {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &self.country {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.label)?;
        let codes: Vec<u8> = self.class.iter().map(|c| c.code()).collect();
        w.write_all(&codes)?;
        for col in [&self.rwi, &self.rwi_error, &self.nightlight] {
            for v in col {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn decode(mut r: impl Read) -> Result<FeatureTable> {
        let bad = |e: std::io::Error| Error::format("feature-table", format!("truncated table: {e}"));
        let mut take = |n: usize| -> Result<Vec<u8>> {
            let mut b = vec![0u8; n];
            r.read_exact(&mut b).map_err(bad)?;
            Ok(b)
        };
        if take(4)? != b"SFTB" {
            return Err(Error::format("feature-table", "bad magic"));
        }
        let version = take(1)?[0];
        if version != 1 {
            return Err(Error::format("feature-table", format!("unsupported version {version}")));
        }
        let u16_at = |b: &[u8]| u16::from_le_bytes([b[0], b[1]]);
        let nc = u16_at(&take(2)?) as usize;
        let mut countries = Vec::with_capacity(nc);
        for _ in 0..nc {
            let len = u16_at(&take(2)?) as usize;
            countries.push(
                String::from_utf8(take(len)?).map_err(|_| Error::format("feature-table", "country code not UTF-8"))?,
            );
        }
        let n = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let u32s = |b: Vec<u8>| b.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
        let f64s = |b: Vec<u8>| b.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let global_row = u32s(take(4 * n)?);
        let global_col = u32s(take(4 * n)?);
        let country: Vec<u16> = take(2 * n)?.chunks_exact(2).map(u16_at).collect();
        if country.iter().any(|&c| c as usize >= nc) {
            return Err(Error::format("feature-table", "country index out of range"));
        }
        let label = take(n)?;
        let class = take(n)?
            .into_iter()
            .map(|c| SettlementClass::from_code(c).ok_or_else(|| Error::format("feature-table", format!("bad class code {c}"))))
            .collect::<Result<_>>()?;
        Ok(FeatureTable {
            countries,
            global_row,
            global_col,
            country,
            label,
            class,
            rwi: f64s(take(8 * n)?),
            rwi_error: f64s(take(8 * n)?),
            nightlight: f64s(take(8 * n)?),
            stats: BuildStats::default(),
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))?;
        self.encode(&mut f).and_then(|_| f.flush()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<FeatureTable> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        FeatureTable::decode(BufReader::new(f))
    }

    /// Full-precision CSV export including the indicator columns.
    pub fn write_csv(&self, w: &mut dyn Write) -> Result<()> {
        let mut header: Vec<String> = ["global_row", "global_col", "country_code", "label", "rwi", "rwi_error", "nightlight", "class"]
            .map(String::from)
            .to_vec();
        header.extend(INDICATOR_CLASSES.iter().map(|c| format!("is_{}", c.name())));
        csv_row(w, &header)?;
        for i in 0..self.len() {
            let mut rec = vec![
                self.global_row[i].to_string(),
                self.global_col[i].to_string(),
                self.countries[self.country[i] as usize].clone(),
                self.label[i].to_string(),
                self.rwi[i].to_string(),
                self.rwi_error[i].to_string(),
                self.nightlight[i].to_string(),
                self.class[i].name().to_string(),
            ];
            rec.extend(self.class[i].one_hot().iter().map(|&v| (v as u8).to_string()));
            csv_row(w, &rec)?;
        }
        Ok(())
    }
}

/// `P(label = 1 | rural cluster or denser) / P(label = 1 | sparser)`.
pub fn density_split_ratio(table: &FeatureTable) -> Result<f64> {
    let (mut hn, mut hp, mut ln, mut lp) = (0u64, 0u64, 0u64, 0u64);
    for (c, &l) in table.class.iter().zip(&table.label) {
        if c.effective().is_high_density() {
            hn += 1;
            hp += l as u64;
        } else {
            ln += 1;
            lp += l as u64;
        }
    }
    if hn == 0 || ln == 0 {
        return Err(Error::invalid("density split needs rows in both strata"));
    }
    if lp == 0 {
        return Err(Error::invalid("no agreement in the low-density stratum; ratio undefined"));
    }
    // Cross-multiplied to keep exact ratios exact.
    Ok((hp * ln) as f64 / (lp * hn) as f64)
}

/// Per-country summary of a built table.
pub struct FeatureSummary {
    pub rows: Vec<(String, u64, u64, u64, f64, Option<f64>)>,
}

impl FeatureSummary {
    /// Rows: country, candidates, dropped, kept, positive share, density ratio.
    pub fn from_tables(tables: &[FeatureTable]) -> Self {
        Self {
            rows: tables
                .iter()
                .map(|t| {
                    (
                        t.countries.first().cloned().unwrap_or_default(),
                        t.stats.candidates,
                        t.stats.dropped,
                        t.len() as u64,
                        if t.is_empty() { f64::NAN } else { t.positive_share() },
                        density_split_ratio(t).ok(),
                    )
                })
                .collect(),
        }
    }
}

impl Report for FeatureSummary {
    fn to_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|(c, cand, drop, kept, share, ratio)| {
                    object([
                        ("country_code", Value::from(c.clone())),
                        ("candidates", Value::from(*cand)),
                        ("dropped", Value::from(*drop)),
                        ("rows", Value::from(*kept)),
                        ("positive_share", num(*share)),
                        ("density_split_ratio", ratio.map_or(Value::Null, num)),
                    ])
                })
                .collect(),
        )
    }

    fn write_csv(&self, w: &mut dyn Write) -> Result<()> {
        csv_row(
            w,
            &["country_code", "candidates", "dropped", "rows", "positive_share", "density_split_ratio"].map(String::from),
        )?;
        for (c, cand, drop, kept, share, ratio) in &self.rows {
            csv_row(
                w,
                &[
                    c.clone(),
                    cand.to_string(),
                    drop.to_string(),
                    kept.to_string(),
                    if share.is_finite() { fmt_g6(*share) } else { String::new() },
                    ratio.map(fmt_g6).unwrap_or_default(),
                ],
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec3() -> GridSpec {
        GridSpec::new(30.0, 0.0, 3.0, 20, 10).unwrap()
    }

    /// 30″ layers covering `spec3` (2 × 1 cells).
    fn spec30() -> GridSpec {
        GridSpec::new(30.0, 0.0, 30.0, 2, 1).unwrap()
    }

    fn layers(ghsl: [u8; 2]) -> FeatureLayers {
        FeatureLayers {
            rwi: NumericRaster::new(spec30(), vec![0.5, -0.5]).unwrap(),
            rwi_error: NumericRaster::filled(spec30(), 0.1),
            nightlight: NumericRaster::new(spec30(), vec![3.0, 0.0]).unwrap(),
            ghsl: CategoricalRaster::new(spec30(), ghsl.to_vec(), &GHSL_CODES).unwrap(),
        }
    }

    #[test]
    fn labels_follow_set_algebra() {
        let s = GridSpec::new(0.0, 0.0, 3.0, 3, 1).unwrap();
        let x = BinaryRaster::from_fn(s, |_, c| c <= 1);
        let y = BinaryRaster::from_fn(s, |_, c| c == 1);
        let z = BinaryRaster::from_fn(s, |_, c| c >= 1);
        let l = label_cells(&x, &y, &z).unwrap();
        let flat: Vec<(usize, u8)> = l.iter().map(|(c, v)| (c.col, *v)).collect();
        assert_eq!(flat, vec![(0, 0), (1, 1), (2, 0)]);
    }

    #[test]
    fn sampling_flips_at_layer_boundary() {
        let layer = FeatureLayer::Numeric(layers([21, 21]).rwi);
        // Ten 3″ columns per 30″ cell: column 9 is west of the boundary, 10 east.
        assert_eq!(sample_feature(&layer, &spec3(), CellId { row: 0, col: 9 }), Some(0.5));
        assert_eq!(sample_feature(&layer, &spec3(), CellId { row: 0, col: 10 }), Some(-0.5));
        let outside = GridSpec::new(29.0, 0.0, 3.0, 2, 2).unwrap();
        assert_eq!(sample_feature(&layer, &outside, CellId { row: 0, col: 0 }), None);
        let nd = FeatureLayer::Numeric(NumericRaster::new(spec30(), vec![f32::NAN, 1.0]).unwrap());
        assert_eq!(sample_feature(&nd, &spec3(), CellId { row: 0, col: 0 }), None);
    }

    #[test]
    fn table_counts_drops_and_water() {
        let x = BinaryRaster::from_fn(spec3(), |r, c| r == 0 && (c == 0 || c == 15));
        let t = build_table("AAA", [&x, &x, &x], &layers([10, 30])).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.class, vec![SettlementClass::VeryLowDensityRural, SettlementClass::UrbanCentre]);
        assert_eq!(t.stats.water_remapped, 1);
        let mut l = layers([21, 21]);
        l.rwi = NumericRaster::new(spec30(), vec![f32::NAN, 1.0]).unwrap();
        let t = build_table("AAA", [&x, &x, &x], &l).unwrap();
        assert_eq!((t.len(), t.stats.dropped), (1, 1));
    }

    #[test]
    fn one_hot_rows() {
        assert_eq!(SettlementClass::Suburban.one_hot(), [0.0; 6]);
        assert_eq!(SettlementClass::Water.one_hot(), [0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(SettlementClass::UrbanCentre.one_hot()[0], 1.0);
    }

    fn strata(high: (usize, usize), low: (usize, usize)) -> FeatureTable {
        let mut t = FeatureTable {
            countries: vec!["AAA".into()],
            ..Default::default()
        };
        let mut push = |class, label| {
            t.class.push(class);
            t.label.push(label);
        };
        for i in 0..high.1 {
            push(SettlementClass::RuralCluster, (i < high.0) as u8);
        }
        for i in 0..low.1 {
            push(SettlementClass::LowDensityRural, (i < low.0) as u8);
        }
        t
    }

    #[test]
    fn density_ratio_cases() {
        assert_eq!(density_split_ratio(&strata((3, 5), (1, 5))).unwrap(), 3.0);
        assert_eq!(density_split_ratio(&strata((4, 4), (2, 4))).unwrap(), 2.0);
        assert_eq!(density_split_ratio(&strata((1, 4), (2, 8))).unwrap(), 1.0);
        assert!(density_split_ratio(&strata((1, 4), (0, 0))).is_err());
    }

    #[test]
    fn binary_round_trip() {
        let x = BinaryRaster::from_fn(spec3(), |r, c| (r + c) % 7 == 0);
        let t = build_table("AAA", [&x, &x, &x], &layers([13, 22])).unwrap();
        let mut buf = Vec::new();
        t.encode(&mut buf).unwrap();
        let back = FeatureTable::decode(buf.as_slice()).unwrap();
        assert_eq!(back.label, t.label);
        assert_eq!(back.rwi, t.rwi);
        assert_eq!(back.class, t.class);
        assert!(FeatureTable::decode(&buf[..buf.len() - 3]).is_err());
    }
}
