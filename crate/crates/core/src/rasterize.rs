//! Polygon → BinaryRaster conversion.
//!
//! Coverage semantics: a cell is set when its open rectangle meets the
//! polygon, i.e. its centre is inside (even-odd, holes respected) or some
//! ring edge passes through the open rectangle. An edge lying exactly on a
//! grid line touches no cell, so a rectangle drawn on cell boundaries covers
//! exactly the cells inside it.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geio::{ExtentRecord, FootprintRecord};
use crate::geom::{MultiPolygon, Point};
use crate::grid::{BinaryRaster, GridSpec, NANO_PER_ARCSEC};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum RasterizePolicy {
    /// One cell per polygon: the one holding its area centroid.
    #[default]
    Centroid,
    /// Every cell whose rectangle intersects the polygon.
    AnyIntersection,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RasterizeStats {
    pub records: u64,
    /// Records contributing no cell inside the grid.
    pub outside: u64,
    /// Zero-area polygons.
    pub degenerate: u64,
    /// Rings with crossing edges, filled by the even-odd rule.
    pub self_intersecting: u64,
}

impl RasterizeStats {
    fn merge(mut self, o: RasterizeStats) -> Self {
        self.records += o.records;
        self.outside += o.outside;
        self.degenerate += o.degenerate;
        self.self_intersecting += o.self_intersecting;
        self
    }
}

#[derive(Clone, Debug)]
pub struct Rasterized {
    pub raster: BinaryRaster,
    pub stats: RasterizeStats,
}

/// Polygons handled per parallel batch; bounds memory on long streams.
const BATCH: usize = 1 << 15;

/// `(row, col_start, col_end)` with `col_end` exclusive.
type Span = (usize, usize, usize);

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Centroid,
    /// Footprint coverage: zero-area polygons fall back to the first vertex.
    Footprint,
    /// Extent coverage: zero-area polygons keep their boundary cells.
    Extent,
}

pub fn rasterize_footprints<I>(records: I, spec: &GridSpec, policy: RasterizePolicy) -> Result<Rasterized>
where
    I: IntoIterator<Item = Result<FootprintRecord>>,
{
    let mode = match policy {
        RasterizePolicy::Centroid => Mode::Centroid,
        RasterizePolicy::AnyIntersection => Mode::Footprint,
    };
    run(records.into_iter().map(|r| r.map(|f| f.polygon)), spec, mode)
}

pub fn rasterize_extents<I>(records: I, spec: &GridSpec) -> Result<Rasterized>
where
    I: IntoIterator<Item = Result<ExtentRecord>>,
{
    run(records.into_iter().map(|r| r.map(|e| e.polygon)), spec, Mode::Extent)
}

/// Rasterizes bare polygons given in lon/lat.
pub fn rasterize_polygons<I>(polygons: I, spec: &GridSpec, policy: RasterizePolicy) -> Result<Rasterized>
where
    I: IntoIterator<Item = MultiPolygon>,
{
    rasterize_footprints(
        polygons.into_iter().map(|p| {
            Ok(FootprintRecord {
                polygon: p,
                confidence: 1.0,
                id: String::new(),
            })
        }),
        spec,
        policy,
    )
}

/// Coverage rasterization of lon/lat polygons with extent semantics.
pub fn rasterize_coverage<I>(polygons: I, spec: &GridSpec) -> Result<Rasterized>
where
    I: IntoIterator<Item = MultiPolygon>,
{
    run(polygons.into_iter().map(Ok), spec, Mode::Extent)
}

fn run(polygons: impl Iterator<Item = Result<MultiPolygon>>, spec: &GridSpec, mode: Mode) -> Result<Rasterized> {
    if spec.resolution_nano() < NANO_PER_ARCSEC {
        return Err(Error::invalid("rasterization needs a resolution of at least 1 arc-second"));
    }
    let mut raster = BinaryRaster::zeros(*spec);
    let mut stats = RasterizeStats::default();
    let mut batch = Vec::with_capacity(BATCH);
    let flush = |batch: &mut Vec<MultiPolygon>, raster: &mut BinaryRaster, stats: &mut RasterizeStats| {
        let (spans, s) = batch
            .par_iter()
            .map(|mp| polygon_spans(mp, spec, mode))
            .fold(
                || (Vec::new(), RasterizeStats::default()),
                |(mut acc, st), (spans, s)| {
                    acc.extend(spans);
                    (acc, st.merge(s))
                },
            )
            .reduce(
                || (Vec::new(), RasterizeStats::default()),
                |(mut a, sa), (b, sb)| {
                    a.extend(b);
                    (a, sa.merge(sb))
                },
            );
        for (row, c0, c1) in spans {
            raster.set_span(row, c0, c1);
        }
        *stats = stats.merge(s);
        batch.clear();
    };
    for p in polygons {
        batch.push(p?);
        if batch.len() == BATCH {
            flush(&mut batch, &mut raster, &mut stats);
        }
    }
    flush(&mut batch, &mut raster, &mut stats);
    if stats.outside > 0 {
        log::debug!("{} polygons fell outside the grid and were dropped", stats.outside);
    }
    Ok(Rasterized { raster, stats })
}

fn polygon_spans(mp: &MultiPolygon, spec: &GridSpec, mode: Mode) -> (Vec<Span>, RasterizeStats) {
    let mut stats = RasterizeStats {
        records: 1,
        ..Default::default()
    };
    let g = mp.map_coords(|[lon, lat]| {
        let (x, y) = spec.to_grid(lon, lat);
        [x, y]
    });
    let (w, h) = (spec.width(), spec.height());
    let cell_at = |p: Point| -> Option<Span> {
        let (c, r) = (p[0].floor(), p[1].floor());
        (c >= 0.0 && r >= 0.0 && (c as usize) < w && (r as usize) < h).then(|| (r as usize, c as usize, c as usize + 1))
    };
    let centroid = g.centroid();
    if centroid.is_none() {
        stats.degenerate = 1;
    }
    let spans = match mode {
        Mode::Centroid => centroid.or_else(|| g.first_vertex()).and_then(cell_at).into_iter().collect(),
        Mode::Footprint if centroid.is_none() => g.first_vertex().and_then(cell_at).into_iter().collect(),
        _ => {
            if g.rings().any(ring_self_intersects) {
                stats.self_intersecting = 1;
            }
            coverage_spans(&g, w, h)
        }
    };
    if spans.is_empty() {
        stats.outside = 1;
    }
    (spans, stats)
}

/// Snaps values within 1e-9 of an integer onto it.
fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r
    } else {
        v
    }
}

/// Cells of one row whose open x-interval meets `(lo, hi)`, or the point `lo`
/// when the interval is degenerate.
fn open_interval_cells(row: usize, lo: f64, hi: f64, w: usize, out: &mut Vec<Span>) {
    let (lo, hi) = (snap(lo), snap(hi));
    let (c0, c1) = if lo < hi {
        (lo.floor(), hi.ceil())
    } else if lo.fract() != 0.0 {
        (lo.floor(), lo.floor() + 1.0)
    } else {
        return;
    };
    let c0 = c0.max(0.0);
    let c1 = c1.min(w as f64);
    if c0 < c1 {
        out.push((row, c0 as usize, c1 as usize));
    }
}

/// Coverage spans of a polygon already in grid coordinates.
fn coverage_spans(g: &MultiPolygon, w: usize, h: usize) -> Vec<Span> {
    let mut out = Vec::new();
    let Some((lo, hi)) = g.bbox() else { return out };
    if hi[0] <= 0.0 || hi[1] <= 0.0 || lo[0] >= w as f64 || lo[1] >= h as f64 {
        return out;
    }

    // Boundary clause: every cell whose open rectangle an edge passes through.
    for (a, b) in g.edges() {
        let (ya, yb) = (snap(a[1]), snap(b[1]));
        if a == b {
            continue;
        }
        if ya == yb {
            if ya.fract() != 0.0 && ya > 0.0 && ya < h as f64 {
                open_interval_cells(ya.floor() as usize, a[0].min(b[0]), a[0].max(b[0]), w, &mut out);
            }
            continue;
        }
        let (ymin, ymax) = (ya.min(yb), ya.max(yb));
        let r0 = ymin.floor().max(0.0) as usize;
        let r1 = (ymax.ceil().min(h as f64)) as usize;
        let x_at = |y: f64| a[0] + (y - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
        for r in r0..r1 {
            let y0 = (r as f64).max(ymin);
            let y1 = (r as f64 + 1.0).min(ymax);
            if y0 >= y1 {
                continue;
            }
            let (x0, x1) = (x_at(y0), x_at(y1));
            open_interval_cells(r, x0.min(x1), x0.max(x1), w, &mut out);
        }
    }
    // Isolated vertices strictly inside a cell (point-like rings).
    for p in g.rings().flatten() {
        let (x, y) = (snap(p[0]), snap(p[1]));
        if x.fract() != 0.0 && y.fract() != 0.0 && x > 0.0 && y > 0.0 && x < w as f64 && y < h as f64 {
            let c = x.floor() as usize;
            out.push((y.floor() as usize, c, c + 1));
        }
    }

    center_spans(g, w, h, &mut out);
    out
}

/// Cells whose centre lies inside `g` (even-odd): active-edge scanline at
/// each row centre, filling centres in `[x_in, x_out)`.
fn center_spans(g: &MultiPolygon, w: usize, h: usize, out: &mut Vec<Span>) {
    let Some((lo, hi)) = g.bbox() else { return };
    let mut edges: Vec<(Point, Point)> = g
        .edges()
        .filter(|(a, b)| a[1] != b[1])
        .map(|(a, b)| if a[1] < b[1] { (a, b) } else { (b, a) })
        .collect();
    edges.sort_by(|p, q| p.0[1].total_cmp(&q.0[1]));
    let r0 = (lo[1] - 0.5).ceil().max(0.0) as usize;
    let r1 = ((hi[1] - 0.5).ceil().max(0.0) as usize).min(h);
    let mut next = 0;
    let mut active: Vec<(Point, Point)> = Vec::new();
    let mut xs = Vec::new();
    for r in r0..r1 {
        let y = r as f64 + 0.5;
        while next < edges.len() && edges[next].0[1] <= y {
            active.push(edges[next]);
            next += 1;
        }
        // Half-open in y: an edge counts when lo.y <= y < hi.y.
        active.retain(|(_, b)| b[1] > y);
        xs.clear();
        xs.extend(
            active
                .iter()
                .map(|(a, b)| a[0] + (y - a[1]) * (b[0] - a[0]) / (b[1] - a[1])),
        );
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            let c0 = (pair[0] - 0.5).ceil().max(0.0);
            let c1 = (pair[1] - 0.5).ceil().min(w as f64);
            if c0 < c1 {
                out.push((r, c0 as usize, c1 as usize));
            }
        }
    }
}

/// Cells whose centre lies inside any of `polygons` (lon/lat). Each polygon
/// is filled even-odd on its own rings and the results are unioned.
pub fn rasterize_centers<'a>(polygons: impl IntoIterator<Item = &'a MultiPolygon>, spec: &GridSpec) -> BinaryRaster {
    let polys: Vec<&MultiPolygon> = polygons.into_iter().collect();
    let (w, h) = (spec.width(), spec.height());
    let spans: Vec<Span> = polys
        .par_iter()
        .flat_map_iter(|mp| {
            mp.polygons()
                .iter()
                .flat_map(|p| {
                    let g = MultiPolygon::from(p.clone()).map_coords(|[lon, lat]| {
                        let (x, y) = spec.to_grid(lon, lat);
                        [x, y]
                    });
                    let mut out = Vec::new();
                    center_spans(&g, w, h, &mut out);
                    out
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let mut r = BinaryRaster::zeros(*spec);
    for (row, c0, c1) in spans {
        r.set_span(row, c0, c1);
    }
    r
}

fn segments_cross(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let orient = |a: Point, b: Point, c: Point| (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// Proper crossings between non-adjacent edges of a closed ring.
fn ring_self_intersects(ring: &[Point]) -> bool {
    let n = ring.len().saturating_sub(1);
    if n < 4 {
        return false;
    }
    for i in 0..n {
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_cross(ring[i], ring[i + 1], ring[j], ring[j + 1]) {
                return true;
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Polygon;

    /// 8×8 cells of 3″ with (0,0) at (10°E, 1°N).
    fn spec() -> GridSpec {
        GridSpec::new(10.0, 1.0, 3.0, 8, 8).unwrap()
    }

    /// Lon/lat rectangle from grid coordinates.
    fn grid_rect(x0: f64, y0: f64, x1: f64, y1: f64) -> MultiPolygon {
        let d = 3.0 / 3600.0;
        Polygon::rect(10.0 + x0 * d, 1.0 - y1 * d, 10.0 + x1 * d, 1.0 - y0 * d).into()
    }

    fn cells(r: &BinaryRaster) -> Vec<(usize, usize)> {
        r.iter_settled().collect()
    }

    #[test]
    fn building_inside_one_cell() {
        for policy in [RasterizePolicy::Centroid, RasterizePolicy::AnyIntersection] {
            let out = rasterize_polygons([grid_rect(2.2, 3.3, 2.6, 3.9)], &spec(), policy).unwrap();
            assert_eq!(cells(&out.raster), vec![(3, 2)]);
        }
    }

    #[test]
    fn building_over_a_corner() {
        let b = grid_rect(2.6, 2.6, 3.2, 3.3);
        let any = rasterize_polygons([b.clone()], &spec(), RasterizePolicy::AnyIntersection).unwrap();
        assert_eq!(cells(&any.raster), vec![(2, 2), (2, 3), (3, 2), (3, 3)]);
        let cen = rasterize_polygons([b], &spec(), RasterizePolicy::Centroid).unwrap();
        assert_eq!(cells(&cen.raster), vec![(2, 2)]);
    }

    #[test]
    fn aligned_rectangle_covers_exact_cells() {
        let out = rasterize_coverage([grid_rect(1.0, 2.0, 6.0, 7.0)], &spec()).unwrap();
        assert_eq!(out.raster.count_settled(), 25);
        assert!(out.raster.get(2, 1) && out.raster.get(6, 5) && !out.raster.get(7, 5));
    }

    #[test]
    fn hole_clears_its_cell() {
        let d = 3.0 / 3600.0;
        let ll = |x: f64, y: f64| [10.0 + x * d, 1.0 - y * d];
        let p = Polygon::new(
            vec![ll(0.5, 0.5), ll(5.5, 0.5), ll(5.5, 5.5), ll(0.5, 5.5)],
            vec![vec![ll(1.8, 1.8), ll(3.2, 1.8), ll(3.2, 3.2), ll(1.8, 3.2)]],
        );
        let out = rasterize_coverage([p.into()], &spec()).unwrap();
        assert!(!out.raster.get(2, 2));
        // Cells crossed by the hole ring stay set.
        assert!(out.raster.get(2, 3) && out.raster.get(1, 1) && out.raster.get(0, 0));
        assert_eq!(out.raster.count_settled(), 35);
    }

    #[test]
    fn zero_area_keeps_boundary_cells() {
        let d = 3.0 / 3600.0;
        let ll = |x: f64, y: f64| [10.0 + x * d, 1.0 - y * d];
        let line = Polygon::new(vec![ll(0.5, 0.5), ll(2.5, 0.5)], vec![]);
        let out = rasterize_coverage([line.clone().into()], &spec()).unwrap();
        assert_eq!(cells(&out.raster), vec![(0, 0), (0, 1), (0, 2)]);
        assert_eq!(out.stats.degenerate, 1);
        let fp = rasterize_polygons([line.into()], &spec(), RasterizePolicy::AnyIntersection).unwrap();
        assert_eq!(cells(&fp.raster), vec![(0, 0)]);
    }

    #[test]
    fn empty_and_outside() {
        let out = rasterize_polygons(Vec::<MultiPolygon>::new(), &spec(), RasterizePolicy::Centroid).unwrap();
        assert!(out.raster.is_empty());
        let out = rasterize_coverage([grid_rect(20.0, 20.0, 21.0, 21.0)], &spec()).unwrap();
        assert!(out.raster.is_empty());
        assert_eq!(out.stats.outside, 1);
    }

    #[test]
    fn bowtie_is_flagged() {
        let d = 3.0 / 3600.0;
        let ll = |x: f64, y: f64| [10.0 + x * d, 1.0 - y * d];
        let bow = Polygon::new(vec![ll(0.0, 0.0), ll(4.0, 4.0), ll(4.0, 0.0), ll(0.0, 4.0)], vec![]);
        let out = rasterize_coverage([bow.into()], &spec()).unwrap();
        assert_eq!(out.stats.self_intersecting, 1);
    }

    #[test]
    fn sub_arcsecond_grid_rejected() {
        let s = GridSpec::new(10.0, 1.0, 0.5, 4, 4).unwrap();
        assert!(rasterize_coverage(Vec::new(), &s).is_err());
    }
}
