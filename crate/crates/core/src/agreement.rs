//! Overlap metrics: Jaccard, average and upper-limit overlap, densities,
//! Pearson correlation and the downsampling pyramid.

use std::io::Write;

use serde_json::Value;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::geio::report::{csv_row, fmt_g6, num, object, opt_cell, opt_num, Report};
use crate::grid::BinaryRaster;
use crate::harmonize::{block_or_downscale, CountryMask};

/// `|X∩Y| / |X∪Y|`; two empty rasters count as full agreement.
pub fn jaccard(x: &BinaryRaster, y: &BinaryRaster) -> Result<f64> {
    let (inter, union) = x.intersection_union(y)?;
    if union == 0 {
        log::warn!("jaccard of two empty rasters taken as 1");
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Mean Jaccard over all unordered pairs.
pub fn average_overlap(rasters: &[BinaryRaster]) -> Result<f64> {
    let thetas = pairwise(rasters, jaccard)?;
    Ok(thetas.iter().map(|p| p.2).sum::<f64>() / thetas.len() as f64)
}

fn pairwise<T>(
    rasters: &[BinaryRaster],
    f: impl Fn(&BinaryRaster, &BinaryRaster) -> Result<T>,
) -> Result<Vec<(usize, usize, T)>> {
    if rasters.len() < 2 {
        return Err(Error::invalid("overlap needs at least two rasters"));
    }
    let mut out = Vec::new();
    for i in 0..rasters.len() {
        for j in i + 1..rasters.len() {
            out.push((i, j, f(&rasters[i], &rasters[j])?));
        }
    }
    Ok(out)
}

/// `min(|X|,|Y|) / max(|X|,|Y|)`, the best Jaccard the two counts allow.
pub fn upper_limit(x: &BinaryRaster, y: &BinaryRaster) -> Result<f64> {
    x.spec().check_same(y.spec())?;
    upper_limit_counts(x.count_settled(), y.count_settled())
}

pub fn upper_limit_counts(a: u64, b: u64) -> Result<f64> {
    if a == 0 && b == 0 {
        return Err(Error::invalid("upper limit is undefined for two empty rasters"));
    }
    Ok(a.min(b) as f64 / a.max(b) as f64)
}

/// Settled cells per km² of country area.
pub fn density(r: &BinaryRaster, mask: &CountryMask) -> Result<f64> {
    if !(mask.area_km2 > 0.0) {
        return Err(Error::invalid("country mask has zero area"));
    }
    Ok(r.count_settled() as f64 / mask.area_km2)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correlation {
    pub r: f64,
    /// Two-sided p-value of the t statistic with n − 2 degrees of freedom.
    pub p: f64,
    pub n: usize,
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<Correlation> {
    if xs.len() != ys.len() {
        return Err(Error::invalid(format!("length mismatch: {} vs {}", xs.len(), ys.len())));
    }
    let n = xs.len();
    if n < 3 {
        return Err(Error::invalid("correlation needs at least 3 pairs"));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite value in correlation input"));
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::invalid("zero variance in correlation input"));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p = if r.abs() == 1.0 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
        (2.0 * dist.sf(t.abs())).min(1.0)
    };
    Ok(Correlation { r, p, n })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairOverlap {
    pub x: String,
    pub y: String,
    pub theta: f64,
    /// `None` when both rasters are empty.
    pub theta_upper: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OverlapReport {
    pub dataset_names: Vec<String>,
    pub pairwise: Vec<PairOverlap>,
    pub average_theta: f64,
    pub average_theta_upper: Option<f64>,
    pub counts: Vec<u64>,
    /// Present when a country mask was supplied.
    pub density_per_km2: Option<Vec<f64>>,
    pub scale_factor: usize,
}

impl OverlapReport {
    pub fn compute(names: &[String], rasters: &[BinaryRaster], mask: Option<&CountryMask>, scale_factor: usize) -> Result<Self> {
        if names.len() != rasters.len() {
            return Err(Error::invalid("one name per raster required"));
        }
        let counts: Vec<u64> = rasters.iter().map(BinaryRaster::count_settled).collect();
        let pairs = pairwise(rasters, |x, y| x.intersection_union(y))?;
        let pairwise: Vec<PairOverlap> = pairs
            .iter()
            .map(|&(i, j, (inter, union))| PairOverlap {
                x: names[i].clone(),
                y: names[j].clone(),
                theta: if union == 0 { 1.0 } else { inter as f64 / union as f64 },
                theta_upper: upper_limit_counts(counts[i], counts[j]).ok(),
            })
            .collect();
        if pairs.iter().any(|p| p.2 .1 == 0) {
            log::warn!("empty raster pair at factor {scale_factor}; jaccard taken as 1");
        }
        let k = pairwise.len() as f64;
        let average_theta = pairwise.iter().map(|p| p.theta).sum::<f64>() / k;
        let uppers: Option<Vec<f64>> = pairwise.iter().map(|p| p.theta_upper).collect();
        let average_theta_upper = uppers.map(|u| u.iter().sum::<f64>() / k);
        let density_per_km2 = match mask {
            Some(m) if m.area_km2 > 0.0 => Some(counts.iter().map(|&c| c as f64 / m.area_km2).collect()),
            Some(_) => return Err(Error::invalid("country mask has zero area")),
            None => None,
        };
        Ok(Self {
            dataset_names: names.to_vec(),
            pairwise,
            average_theta,
            average_theta_upper,
            counts,
            density_per_km2,
            scale_factor,
        })
    }

    fn json(&self) -> Value {
        let by_name = |vals: Vec<Value>| object(self.dataset_names.iter().cloned().zip(vals));
        object([
            ("scale_factor", Value::from(self.scale_factor)),
            ("datasets", Value::from(self.dataset_names.clone())),
            ("counts", by_name(self.counts.iter().map(|&c| Value::from(c)).collect())),
            (
                "density_per_km2",
                self.density_per_km2
                    .as_ref()
                    .map_or(Value::Null, |d| by_name(d.iter().map(|&v| num(v)).collect())),
            ),
            (
                "pairwise",
                Value::Array(
                    self.pairwise
                        .iter()
                        .map(|p| {
                            object([
                                ("x", Value::from(p.x.clone())),
                                ("y", Value::from(p.y.clone())),
                                ("theta", num(p.theta)),
                                ("theta_upper", opt_num(p.theta_upper)),
                            ])
                        })
                        .collect(),
                ),
            ),
            ("average_theta", num(self.average_theta)),
            ("average_theta_upper", opt_num(self.average_theta_upper)),
        ])
    }

    fn csv_rows(&self, w: &mut dyn Write) -> Result<()> {
        for p in &self.pairwise {
            csv_row(
                w,
                &[
                    self.scale_factor.to_string(),
                    p.x.clone(),
                    p.y.clone(),
                    fmt_g6(p.theta),
                    opt_cell(p.theta_upper),
                ],
            )?;
        }
        csv_row(
            w,
            &[
                self.scale_factor.to_string(),
                "average".into(),
                String::new(),
                fmt_g6(self.average_theta),
                opt_cell(self.average_theta_upper),
            ],
        )
    }
}

const OVERLAP_HEADER: [&str; 5] = ["scale_factor", "dataset_x", "dataset_y", "theta", "theta_upper"];

impl Report for OverlapReport {
    fn to_json(&self) -> Value {
        self.json()
    }

    fn write_csv(&self, w: &mut dyn Write) -> Result<()> {
        csv_row(w, &OVERLAP_HEADER.map(String::from))?;
        self.csv_rows(w)
    }
}

/// A pyramid of reports, serialized together.
#[derive(Clone, Debug, PartialEq)]
pub struct OverlapReports(pub Vec<OverlapReport>);

impl Report for OverlapReports {
    fn to_json(&self) -> Value {
        object([
            ("schema_version", Value::from(1)),
            ("reports", Value::Array(self.0.iter().map(OverlapReport::json).collect())),
        ])
    }

    fn write_csv(&self, w: &mut dyn Write) -> Result<()> {
        csv_row(w, &OVERLAP_HEADER.map(String::from))?;
        self.0.iter().try_for_each(|r| r.csv_rows(w))
    }
}

/// One report per aggregation factor. Factors must ascend from 1.
pub fn overlap_pyramid(
    names: &[String],
    rasters: &[BinaryRaster],
    factors: &[usize],
    mask: Option<&CountryMask>,
) -> Result<Vec<OverlapReport>> {
    if factors.first() != Some(&1) || factors.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("pyramid factors must be strictly ascending and start at 1"));
    }
    if let Some(first) = rasters.first() {
        for r in &rasters[1..] {
            first.spec().check_same(r.spec())?;
        }
    }
    factors
        .iter()
        .map(|&f| {
            let coarse = rasters
                .iter()
                .map(|r| block_or_downscale(r, f))
                .collect::<Result<Vec<_>>>()?;
            OverlapReport::compute(names, &coarse, mask, f)
        })
        .collect()
}
