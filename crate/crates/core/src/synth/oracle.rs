//! Naive reference implementations of the agreement metrics, block-OR and
//! rasterization. They share no code with the production paths beyond
//! reading rasters cell by cell, and refuse instances above a size cap.

use crate::error::{Error, Result};
use crate::geom::{MultiPolygon, Point, Polygon};
use crate::grid::{BinaryRaster, GridSpec};
use crate::rasterize::RasterizePolicy;
use crate::rng::SplitMix64;

pub const MAX_CELLS: usize = 64 * 64;
pub const MAX_POLYGONS: usize = 10_000;
/// Sample points per cell side for rasterization.
pub const SUPERSAMPLE: usize = 16;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoolGrid {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<bool>,
}

impl BoolGrid {
    pub fn new(width: usize, height: usize, cells: Vec<bool>) -> Result<Self> {
        if width * height > MAX_CELLS {
            return Err(Error::invalid(format!("oracle instance {width}x{height} exceeds 64x64")));
        }
        if cells.len() != width * height {
            return Err(Error::invalid("cell count does not match the size"));
        }
        Ok(Self { width, height, cells })
    }

    pub fn from_raster(r: &BinaryRaster) -> Result<Self> {
        let (w, h) = (r.spec().width(), r.spec().height());
        let mut cells = Vec::with_capacity(w * h);
        for row in 0..h {
            for col in 0..w {
                cells.push(r.get(row, col));
            }
        }
        Self::new(w, h, cells)
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.cells[row * self.width + col]
    }
}

fn same_size(a: &BoolGrid, b: &BoolGrid) -> Result<()> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::invalid("oracle grids differ in size"));
    }
    Ok(())
}

pub fn oracle_counts(g: &BoolGrid) -> Result<u64> {
    let mut n = 0;
    for row in 0..g.height {
        for col in 0..g.width {
            if g.get(row, col) {
                n += 1;
            }
        }
    }
    Ok(n)
}

/// |A∩B| / |A∪B|, with 1 for two empty grids.
pub fn oracle_jaccard(a: &BoolGrid, b: &BoolGrid) -> Result<f64> {
    same_size(a, b)?;
    let (mut inter, mut union) = (0u64, 0u64);
    for row in 0..a.height {
        for col in 0..a.width {
            let (x, y) = (a.get(row, col), b.get(row, col));
            if x && y {
                inter += 1;
            }
            if x || y {
                union += 1;
            }
        }
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

pub fn oracle_upper_limit(a: &BoolGrid, b: &BoolGrid) -> Result<f64> {
    same_size(a, b)?;
    let (x, y) = (oracle_counts(a)?, oracle_counts(b)?);
    if x == 0 && y == 0 {
        return Err(Error::invalid("upper limit of two empty grids"));
    }
    Ok(x.min(y) as f64 / x.max(y) as f64)
}

/// Mean Jaccard over unordered pairs.
pub fn oracle_average_overlap(grids: &[BoolGrid]) -> Result<f64> {
    if grids.len() < 2 {
        return Err(Error::invalid("average overlap needs two grids"));
    }
    let mut sum = 0.0;
    let mut pairs = 0;
    for i in 0..grids.len() {
        for j in i + 1..grids.len() {
            sum += oracle_jaccard(&grids[i], &grids[j])?;
            pairs += 1;
        }
    }
    Ok(sum / pairs as f64)
}

/// Block-OR onto the global lattice `factor` times coarser. `col0`/`row0`
/// are the global lattice offsets of the input; returns the output offsets
/// and grid.
pub fn oracle_blockor(g: &BoolGrid, col0: u64, row0: u64, factor: usize) -> Result<(u64, u64, BoolGrid)> {
    if factor == 0 {
        return Err(Error::invalid("factor 0"));
    }
    let f = factor as u64;
    let (oc0, or0) = (col0 / f, row0 / f);
    let ow = ((col0 + g.width as u64).div_ceil(f) - oc0) as usize;
    let oh = ((row0 + g.height as u64).div_ceil(f) - or0) as usize;
    let mut out = vec![false; ow * oh];
    for orow in 0..oh {
        for ocol in 0..ow {
            let mut any = false;
            for row in 0..g.height {
                for col in 0..g.width {
                    let gr = (row0 + row as u64) / f - or0;
                    let gc = (col0 + col as u64) / f - oc0;
                    if gr == orow as u64 && gc == ocol as u64 && g.get(row, col) {
                        any = true;
                    }
                }
            }
            out[orow * ow + ocol] = any;
        }
    }
    Ok((oc0, or0, BoolGrid { width: ow, height: oh, cells: out }))
}

fn on_segment(p: Point, a: Point, b: Point) -> bool {
    let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    cross == 0.0
        && p[0] >= a[0].min(b[0])
        && p[0] <= a[0].max(b[0])
        && p[1] >= a[1].min(b[1])
        && p[1] <= a[1].max(b[1])
}

/// Closed even-odd test for one polygon given as rings.
fn in_closed_polygon(p: Point, rings: &[Vec<Point>]) -> bool {
    let mut inside = false;
    for ring in rings {
        let n = ring.len();
        for i in 0..n {
            let (a, b) = (ring[i], ring[(i + 1) % n]);
            if on_segment(p, a, b) {
                return true;
            }
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
                if p[0] < x {
                    inside = !inside;
                }
            }
        }
    }
    inside
}

/// Area and area-weighted centroid of one ring by fan triangulation.
fn fan_moments(ring: &[Point]) -> (f64, f64, f64) {
    let (mut a, mut mx, mut my) = (0.0, 0.0, 0.0);
    let o = ring[0];
    for i in 1..ring.len().saturating_sub(1) {
        let (p, q) = (ring[i], ring[i + 1]);
        let t = 0.5 * ((p[0] - o[0]) * (q[1] - o[1]) - (q[0] - o[0]) * (p[1] - o[1]));
        a += t;
        mx += t * (o[0] + p[0] + q[0]) / 3.0;
        my += t * (o[1] + p[1] + q[1]) / 3.0;
    }
    (a, mx, my)
}

/// Supersampled rasterization in cell units.
///
/// Any-intersection: a cell is set when one of its 16×16 sample points lies
/// in the closed polygon. This agrees exactly with the open-cell coverage
/// rule when vertices sit on the 1/16-cell lattice and edges are axis
/// parallel or diagonal; for arbitrary shapes it can only miss cells, never
/// add them. Centroid: the cell holding the fan-triangulated area centroid;
/// a centroid within 1e-9 of a grid line is reported as an error because
/// the owning cell is then a matter of rounding.
pub fn oracle_rasterize(polygons: &[MultiPolygon], spec: &GridSpec, policy: RasterizePolicy) -> Result<BoolGrid> {
    let (w, h) = (spec.width(), spec.height());
    if w * h > MAX_CELLS || polygons.len() > MAX_POLYGONS {
        return Err(Error::invalid("oracle rasterization instance too large"));
    }
    let res = spec.resolution_deg();
    let (west, north) = (spec.origin_lon(), spec.origin_lat());
    let mut out = vec![false; w * h];
    let mut mark = |x: f64, y: f64| {
        let (c, r) = (x.floor(), y.floor());
        if c >= 0.0 && r >= 0.0 && (c as usize) < w && (r as usize) < h {
            out[r as usize * w + c as usize] = true;
        }
    };
    for mp in polygons {
        let polys: Vec<Vec<Vec<Point>>> = mp
            .polygons()
            .iter()
            .map(|p| p.rings().map(|ring| ring.iter().map(|q| [(q[0] - west) / res, (north - q[1]) / res]).collect()).collect())
            .collect();
        let (mut area, mut mx, mut my) = (0.0, 0.0, 0.0);
        let mut extent = 0.0f64;
        for p in &polys {
            for (k, ring) in p.iter().enumerate() {
                let (a, x, y) = fan_moments(ring);
                let s = if k == 0 { 1.0 } else { -1.0 } * a.signum();
                area += s * a;
                mx += s * x;
                my += s * y;
                for q in ring {
                    extent = extent.max(q[0].abs()).max(q[1].abs());
                }
            }
        }
        let degenerate = area.abs() <= 1e-12;
        let first = polys.iter().flatten().flatten().next().copied();
        if degenerate || policy == RasterizePolicy::Centroid {
            let pt = if degenerate { first } else { Some([mx / area, my / area]) };
            if let Some([x, y]) = pt {
                let near = |v: f64| (v - v.round()).abs() < 1e-9;
                if !degenerate && (near(x) || near(y)) {
                    return Err(Error::invalid("centroid on a grid line"));
                }
                mark(x, y);
            }
            continue;
        }
        for p in &polys {
            let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
            for q in p.iter().flatten() {
                lo = [lo[0].min(q[0]), lo[1].min(q[1])];
                hi = [hi[0].max(q[0]), hi[1].max(q[1])];
            }
            let c0 = lo[0].floor().max(0.0) as usize;
            let r0 = lo[1].floor().max(0.0) as usize;
            let c1 = (hi[0].ceil().max(0.0) as usize).min(w);
            let r1 = (hi[1].ceil().max(0.0) as usize).min(h);
            for r in r0..r1 {
                for c in c0..c1 {
                    let hit = (0..SUPERSAMPLE * SUPERSAMPLE).any(|s| {
                        let x = c as f64 + ((s % SUPERSAMPLE) as f64 + 0.5) / SUPERSAMPLE as f64;
                        let y = r as f64 + ((s / SUPERSAMPLE) as f64 + 0.5) / SUPERSAMPLE as f64;
                        in_closed_polygon([x, y], p)
                    });
                    if hit {
                        mark(c as f64 + 0.5, r as f64 + 0.5);
                    }
                }
            }
        }
    }
    BoolGrid::new(w, h, out)
}

// Random instances for the oracle comparisons.

/// Up to 64×64 cells of 3″ at a random lattice offset.
pub fn random_spec(rng: &mut SplitMix64) -> GridSpec {
    let w = 1 + rng.below(64) as usize;
    let h = 1 + rng.below(64) as usize;
    GridSpec::from_lattice(3_000_000_000, rng.below(5000), rng.below(5000), w, h).expect("small lattice grid")
}

pub fn random_raster(rng: &mut SplitMix64, spec: GridSpec) -> BinaryRaster {
    let p = rng.next_f64();
    let mut r = BinaryRaster::zeros(spec);
    for row in 0..spec.height() {
        for col in 0..spec.width() {
            if rng.bernoulli(p) {
                r.set(row, col, true);
            }
        }
    }
    r
}

/// 1/16° cells at integer-degree origins: lattice coordinates convert to
/// degrees without rounding.
pub fn exact_spec(rng: &mut SplitMix64) -> GridSpec {
    let w = 4 + rng.below(61) as usize;
    let h = 4 + rng.below(61) as usize;
    GridSpec::new(rng.below(40) as f64, rng.below(40) as f64, 225.0, w, h).expect("whole-degree origin")
}

/// A rectangle with 45° chamfered corners and an optional rectangular hole,
/// vertices on the 1/16-cell lattice.
pub fn lattice_polygon(rng: &mut SplitMix64, spec: &GridSpec) -> MultiPolygon {
    let sub = |n: usize| (n * 16) as i64;
    let x0 = rng.below(sub(spec.width()) as u64 + 32) as i64 - 16;
    let y0 = rng.below(sub(spec.height()) as u64 + 32) as i64 - 16;
    let x1 = x0 + 1 + rng.below(200) as i64;
    let y1 = y0 + 1 + rng.below(200) as i64;
    let kmax = ((x1 - x0).min(y1 - y0) / 2) as u64;
    let mut k = [0i64; 4];
    for v in k.iter_mut() {
        *v = if rng.bernoulli(0.6) { rng.below(kmax + 1) as i64 } else { 0 };
    }
    let raw = [
        (x0 + k[0], y0),
        (x1 - k[1], y0),
        (x1, y0 + k[1]),
        (x1, y1 - k[2]),
        (x1 - k[2], y1),
        (x0 + k[3], y1),
        (x0, y1 - k[3]),
        (x0, y0 + k[0]),
    ];
    let mut ring: Vec<(i64, i64)> = Vec::new();
    for p in raw {
        if ring.last() != Some(&p) && ring.first() != Some(&p) {
            ring.push(p);
        }
    }
    if rng.bernoulli(0.5) {
        ring.reverse();
    }
    let (west, north) = (spec.origin_lon(), spec.origin_lat());
    let deg = |(x, y): (i64, i64)| [west + x as f64 / 256.0, north - y as f64 / 256.0];
    let mut holes = Vec::new();
    let m = *k.iter().max().unwrap() + 1;
    if x1 - x0 > 2 * m + 2 && y1 - y0 > 2 * m + 2 && rng.bernoulli(0.4) {
        let hx0 = x0 + m + rng.below((x1 - x0 - 2 * m - 1) as u64) as i64;
        let hy0 = y0 + m + rng.below((y1 - y0 - 2 * m - 1) as u64) as i64;
        let hx1 = hx0 + 1 + rng.below((x1 - m - hx0) as u64) as i64;
        let hy1 = hy0 + 1 + rng.below((y1 - m - hy0) as u64) as i64;
        holes.push(vec![deg((hx0, hy0)), deg((hx1, hy0)), deg((hx1, hy1)), deg((hx0, hy1))]);
    }
    Polygon::new(ring.into_iter().map(deg).collect(), holes).into()
}

/// Random simple star-shaped polygon around a point inside the grid.
pub fn star_polygon(rng: &mut SplitMix64, spec: &GridSpec) -> MultiPolygon {
    let res = spec.resolution_deg();
    let cx = spec.origin_lon() + rng.uniform(0.0, spec.width() as f64) * res;
    let cy = spec.origin_lat() - rng.uniform(0.0, spec.height() as f64) * res;
    let k = 3 + rng.below(6) as usize;
    let mut angles: Vec<f64> = (0..k).map(|_| rng.uniform(0.0, std::f64::consts::TAU)).collect();
    angles.sort_by(f64::total_cmp);
    let ring = angles
        .iter()
        .map(|a| {
            let r = rng.uniform(0.05, 3.0) * res;
            [cx + r * a.cos(), cy + r * a.sin()]
        })
        .collect();
    Polygon::new(ring, Vec::new()).into()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blockor_factor_one_is_identity() {
        let g = BoolGrid::new(3, 2, vec![true, false, true, false, false, true]).unwrap();
        let (c, r, out) = oracle_blockor(&g, 7, 4, 1).unwrap();
        assert_eq!((c, r), (7, 4));
        assert_eq!(out, g);
    }

    #[test]
    fn five_by_five_rectangle() {
        // 1/16° cells at an integer-degree origin keep the arithmetic exact.
        let spec = GridSpec::new(10.0, 5.0, 225.0, 8, 8).unwrap();
        let res = spec.resolution_deg();
        let poly: MultiPolygon = Polygon::rect(10.0 + res, 5.0 - 6.0 * res, 10.0 + 6.0 * res, 5.0 - res).into();
        let g = oracle_rasterize(&[poly], &spec, RasterizePolicy::AnyIntersection).unwrap();
        assert_eq!(oracle_counts(&g).unwrap(), 25);
    }

    #[test]
    fn size_cap() {
        assert!(BoolGrid::new(65, 64, vec![false; 65 * 64]).is_err());
        let spec = GridSpec::new(0.0, 0.0, 3.0, 100, 100).unwrap();
        assert!(oracle_rasterize(&[], &spec, RasterizePolicy::Centroid).is_err());
    }
}
