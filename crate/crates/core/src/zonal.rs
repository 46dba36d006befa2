//! Per-region overlap, HDI join and the HDI–overlap association.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde_json::Value;

use crate::agreement::{pearson, Correlation};
use crate::error::{Error, Result};
use crate::geio::report::{csv_row, fmt_g6, num, object, opt_cell, opt_num, Report};
use crate::geio::{AdminRegion, HdiTable};
use crate::grid::BinaryRaster;
use crate::harmonize::masked_area_km2;
use crate::rasterize::rasterize_centers;

#[derive(Clone, Debug, PartialEq)]
pub struct ZonalRow {
    pub country_code: String,
    pub region_id: String,
    pub region_name: String,
    pub area_km2: f64,
    /// Mean pairwise θ; `None` when every dataset is empty in the region.
    pub theta_avg: Option<f64>,
    /// θ per dataset pair in (0,1), (0,2), …, (1,2), … order.
    pub pairwise: Vec<Option<f64>>,
    pub counts: Vec<u64>,
    pub hdi: Option<f64>,
    /// Region polygon reaches past the raster extent.
    pub outside_extent: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ZonalTable {
    pub dataset_names: Vec<String>,
    pub rows: Vec<ZonalRow>,
    /// Settled cells per dataset outside every region.
    pub remainder: Vec<u64>,
}

fn pair_indices(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

/// Region assignment by cell centre; a cell claimed by an earlier region is
/// not given to a later one.
pub fn region_masks(spec: &crate::grid::GridSpec, regions: &[AdminRegion]) -> Vec<BinaryRaster> {
    let raw: Vec<BinaryRaster> = regions
        .par_iter()
        .map(|r| rasterize_centers([&r.polygon], spec))
        .collect();
    let mut claimed = BinaryRaster::zeros(*spec);
    let mut out = Vec::with_capacity(raw.len());
    for (region, m) in regions.iter().zip(raw) {
        let own = m.and_not(&claimed).expect("same spec");
        if own.count_settled() != m.count_settled() {
            log::warn!("region {} overlaps an earlier region; shared cells stay with the first", region.region_id);
        }
        claimed.or_assign(&own).expect("same spec");
        out.push(own);
    }
    out
}

pub fn zonal_overlap(names: &[String], rasters: &[BinaryRaster], regions: &[AdminRegion]) -> Result<ZonalTable> {
    if rasters.len() < 2 || names.len() != rasters.len() {
        return Err(Error::invalid("zonal overlap needs at least two named rasters"));
    }
    let spec = *rasters[0].spec();
    for r in &rasters[1..] {
        spec.check_same(r.spec())?;
    }
    let masks = region_masks(&spec, regions);
    let pairs = pair_indices(rasters.len());
    let (west, east, north, south) = (spec.origin_lon(), spec.east_lon(), spec.origin_lat(), spec.south_lat());

    let mut rows: Vec<ZonalRow> = regions
        .par_iter()
        .zip(&masks)
        .map(|(region, mask)| -> Result<ZonalRow> {
            let masked = rasters.iter().map(|r| r.and(mask)).collect::<Result<Vec<_>>>()?;
            let counts: Vec<u64> = masked.iter().map(BinaryRaster::count_settled).collect();
            let all_empty = counts.iter().all(|&c| c == 0);
            let pairwise: Vec<Option<f64>> = pairs
                .iter()
                .map(|&(i, j)| -> Result<Option<f64>> {
                    if all_empty {
                        return Ok(None);
                    }
                    let (inter, union) = masked[i].intersection_union(&masked[j])?;
                    Ok(Some(if union == 0 { 1.0 } else { inter as f64 / union as f64 }))
                })
                .collect::<Result<_>>()?;
            let theta_avg = (!all_empty).then(|| pairwise.iter().flatten().sum::<f64>() / pairs.len() as f64);
            let outside_extent = match region.polygon.bbox() {
                Some((lo, hi)) => lo[0] < west || hi[0] > east || lo[1] < south || hi[1] > north,
                None => true,
            };
            if outside_extent {
                log::warn!("region {} extends beyond the raster extent", region.region_id);
            }
            Ok(ZonalRow {
                country_code: region.country_code.clone(),
                region_id: region.region_id.clone(),
                region_name: region.name.clone(),
                area_km2: masked_area_km2(mask),
                theta_avg,
                pairwise,
                counts,
                hdi: None,
                outside_extent,
            })
        })
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| (&a.country_code, &a.region_id).cmp(&(&b.country_code, &b.region_id)));

    let remainder = rasters
        .iter()
        .enumerate()
        .map(|(d, r)| r.count_settled() - rows.iter().map(|row| row.counts[d]).sum::<u64>())
        .collect();
    Ok(ZonalTable {
        dataset_names: names.to_vec(),
        rows,
        remainder,
    })
}

/// Left join on `region_id`. Returns the joined table and the number of rows
/// left without an HDI value.
pub fn join_hdi(table: &ZonalTable, hdi: &HdiTable) -> Result<(ZonalTable, usize)> {
    let mut lookup = HashMap::new();
    for (id, v) in hdi.rows() {
        if lookup.insert(id.as_str(), *v).is_some() {
            return Err(Error::invalid(format!("duplicate region_id {id} in HDI table")));
        }
    }
    let mut out = table.clone();
    let mut unmatched = 0;
    for row in &mut out.rows {
        row.hdi = lookup.get(row.region_id.as_str()).copied();
        if row.hdi.is_none() {
            unmatched += 1;
        }
    }
    if unmatched > 0 {
        log::info!("{unmatched} regions have no HDI value");
    }
    Ok((out, unmatched))
}

/// Pearson correlation of (hdi, θ) over rows where both are present.
pub fn hdi_association(table: &ZonalTable) -> Result<Correlation> {
    let (hdi, theta): (Vec<f64>, Vec<f64>) = table
        .rows
        .iter()
        .filter_map(|r| Some((r.hdi?, r.theta_avg?)))
        .unzip();
    if hdi.len() < 3 {
        return Err(Error::invalid(format!(
            "HDI association needs 3 complete rows, found {}",
            hdi.len()
        )));
    }
    pearson(&hdi, &theta)
}

impl ZonalTable {
    /// Appends another country's rows; dataset names must match.
    pub fn merge(&mut self, other: ZonalTable) -> Result<()> {
        if self.dataset_names.is_empty() && self.rows.is_empty() {
            *self = other;
            return Ok(());
        }
        if self.dataset_names != other.dataset_names {
            return Err(Error::invalid("zonal tables list different datasets"));
        }
        self.rows.extend(other.rows);
        self.rows
            .sort_by(|a, b| (&a.country_code, &a.region_id).cmp(&(&b.country_code, &b.region_id)));
        for (a, b) in self.remainder.iter_mut().zip(other.remainder) {
            *a += b;
        }
        Ok(())
    }

    fn pair_names(&self) -> Vec<String> {
        pair_indices(self.dataset_names.len())
            .into_iter()
            .map(|(i, j)| format!("{}_{}", self.dataset_names[i], self.dataset_names[j]))
            .collect()
    }
}

impl Report for ZonalTable {
    fn to_json(&self) -> Value {
        let pair_names = self.pair_names();
        let rows = self
            .rows
            .iter()
            .map(|r| {
                object([
                    ("country_code", Value::from(r.country_code.clone())),
                    ("region_id", Value::from(r.region_id.clone())),
                    ("region_name", Value::from(r.region_name.clone())),
                    ("area_km2", num(r.area_km2)),
                    ("theta_avg", opt_num(r.theta_avg)),
                    (
                        "theta",
                        object(pair_names.iter().cloned().zip(r.pairwise.iter().map(|&t| opt_num(t)))),
                    ),
                    (
                        "counts",
                        object(self.dataset_names.iter().cloned().zip(r.counts.iter().map(|&c| Value::from(c)))),
                    ),
                    ("hdi", opt_num(r.hdi)),
                    ("outside_extent", Value::from(r.outside_extent)),
                ])
            })
            .collect();
        object([
            ("schema_version", Value::from(1)),
            ("datasets", Value::from(self.dataset_names.clone())),
            ("rows", Value::Array(rows)),
            (
                "remainder",
                object(self.dataset_names.iter().cloned().zip(self.remainder.iter().map(|&c| Value::from(c)))),
            ),
        ])
    }

    fn write_csv(&self, w: &mut dyn Write) -> Result<()> {
        let mut header: Vec<String> = ["country_code", "region_id", "region_name", "area_km2", "n_datasets", "theta_avg"]
            .map(String::from)
            .to_vec();
        header.extend(self.pair_names().into_iter().map(|p| format!("theta_{p}")));
        header.extend(self.dataset_names.iter().map(|d| format!("count_{d}")));
        header.push("hdi".into());
        csv_row(w, &header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.country_code.clone(),
                r.region_id.clone(),
                r.region_name.clone(),
                fmt_g6(r.area_km2),
                self.dataset_names.len().to_string(),
                opt_cell(r.theta_avg),
            ];
            rec.extend(r.pairwise.iter().map(|&t| opt_cell(t)));
            rec.extend(r.counts.iter().map(u64::to_string));
            rec.push(opt_cell(r.hdi));
            csv_row(w, &rec)?;
        }
        Ok(())
    }
}

/// HDI association summary written next to the zonal table.
pub struct AssociationReport {
    pub correlation: Option<Correlation>,
    pub complete_rows: usize,
    pub unmatched_hdi: usize,
}

impl Report for AssociationReport {
    fn to_json(&self) -> Value {
        object([
            ("schema_version", Value::from(1)),
            ("pearson_r", opt_num(self.correlation.map(|c| c.r))),
            ("p_value", opt_num(self.correlation.map(|c| c.p))),
            ("complete_rows", Value::from(self.complete_rows)),
            ("unmatched_hdi", Value::from(self.unmatched_hdi)),
        ])
    }

    fn write_csv(&self, w: &mut dyn Write) -> Result<()> {
        csv_row(w, &["pearson_r", "p_value", "complete_rows", "unmatched_hdi"].map(String::from))?;
        csv_row(
            w,
            &[
                opt_cell(self.correlation.map(|c| c.r)),
                opt_cell(self.correlation.map(|c| c.p)),
                self.complete_rows.to_string(),
                self.unmatched_hdi.to_string(),
            ],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agreement::average_overlap;
    use crate::geom::Polygon;
    use crate::grid::GridSpec;

    const D: f64 = 3.0 / 3600.0;

    fn spec() -> GridSpec {
        GridSpec::new(5.0, 0.0, 3.0, 8, 4).unwrap()
    }

    fn region(id: &str, x0: f64, x1: f64) -> AdminRegion {
        AdminRegion {
            country_code: "AAA".into(),
            region_id: id.into(),
            name: id.to_lowercase(),
            polygon: Polygon::rect(5.0 + x0 * D, -4.0 * D, 5.0 + x1 * D, 0.0).into(),
        }
    }

    fn rasters() -> Vec<BinaryRaster> {
        vec![
            BinaryRaster::from_fn(spec(), |r, c| (r * 3 + c) % 4 == 0),
            BinaryRaster::from_fn(spec(), |r, c| (r + c) % 3 == 0),
            BinaryRaster::from_fn(spec(), |r, c| c < 3 && r > 0),
        ]
    }

    fn names() -> Vec<String> {
        ["a", "b", "c"].map(String::from).to_vec()
    }

    #[test]
    fn single_region_matches_national() {
        let t = zonal_overlap(&names(), &rasters(), &[region("R1", 0.0, 8.0)]).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0].theta_avg.unwrap(), average_overlap(&rasters()).unwrap());
        assert!(t.remainder.iter().all(|&c| c == 0));
    }

    #[test]
    fn halves_match_windows_and_conserve_counts() {
        let t = zonal_overlap(&names(), &rasters(), &[region("R2", 4.0, 8.0), region("R1", 0.0, 4.0)]).unwrap();
        assert_eq!(t.rows[0].region_id, "R1");
        let left = GridSpec::new(5.0, 0.0, 3.0, 4, 4).unwrap();
        let win: Vec<_> = rasters().iter().map(|r| r.window(&left).unwrap()).collect();
        assert_eq!(t.rows[0].theta_avg.unwrap(), average_overlap(&win).unwrap());
        for d in 0..3 {
            let sum: u64 = t.rows.iter().map(|r| r.counts[d]).sum();
            assert_eq!(sum + t.remainder[d], rasters()[d].count_settled());
        }
    }

    #[test]
    fn empty_region_has_missing_theta() {
        let zeros = vec![BinaryRaster::zeros(spec()); 3];
        let t = zonal_overlap(&names(), &zeros, &[region("R1", 0.0, 8.0)]).unwrap();
        assert_eq!(t.rows[0].theta_avg, None);
        assert_eq!(t.rows[0].counts, vec![0, 0, 0]);
        let csv = crate::geio::report::csv_string(&t).unwrap();
        assert!(csv.lines().nth(1).unwrap().starts_with("AAA,R1,r1,"));
        assert!(csv.lines().nth(1).unwrap().contains(",3,,,,,0,0,0,"));
    }

    #[test]
    fn empty_table_is_header_only() {
        let t = ZonalTable {
            dataset_names: names(),
            ..Default::default()
        };
        let csv = crate::geio::report::csv_string(&t).unwrap();
        assert_eq!(
            csv,
            "country_code,region_id,region_name,area_km2,n_datasets,theta_avg,theta_a_b,theta_a_c,theta_b_c,count_a,count_b,count_c,hdi\n"
        );
    }

    #[test]
    fn hdi_join_and_association() {
        let t = zonal_overlap(&names(), &rasters(), &[region("R1", 0.0, 3.0), region("R2", 3.0, 5.0), region("R3", 5.0, 8.0)]).unwrap();
        let hdi = HdiTable::new(vec![("R1".into(), 0.5), ("R2".into(), 0.6)]).unwrap();
        let (j, unmatched) = join_hdi(&t, &hdi).unwrap();
        assert_eq!(unmatched, 1);
        assert_eq!(j.rows[2].hdi, None);
        assert!(hdi_association(&j).is_err());
        let dup = HdiTable::new(vec![("R1".into(), 0.5), ("R1".into(), 0.6)]).unwrap();
        assert!(join_hdi(&t, &dup).is_err());
        let (none, n) = join_hdi(&t, &HdiTable::default()).unwrap();
        assert_eq!(n, 3);
        assert!(none.rows.iter().all(|r| r.hdi.is_none()));
    }

    #[test]
    fn association_identity() {
        let mut t = ZonalTable {
            dataset_names: names(),
            ..Default::default()
        };
        for (i, v) in [0.2, 0.5, 0.9, 0.4].into_iter().enumerate() {
            t.rows.push(ZonalRow {
                country_code: "AAA".into(),
                region_id: format!("R{i}"),
                region_name: String::new(),
                area_km2: 1.0,
                theta_avg: Some(v),
                pairwise: vec![],
                counts: vec![],
                hdi: Some(v),
                outside_extent: false,
            });
        }
        assert!((hdi_association(&t).unwrap().r - 1.0).abs() < 1e-12);
        for r in &mut t.rows {
            r.theta_avg = Some(0.3);
        }
        assert!(hdi_association(&t).is_err());
    }
}
