//! Minimal planar polygon model used by the vector readers and rasterizer.
//!
//! Coordinates are `[x, y]`; in lon/lat space x is longitude.

pub type Point = [f64; 2];

#[derive(Clone, Debug, PartialEq)]
pub struct Polygon {
    pub exterior: Vec<Point>,
    pub interiors: Vec<Vec<Point>>,
}

impl Polygon {
    pub fn new(exterior: Vec<Point>, interiors: Vec<Vec<Point>>) -> Self {
        Self {
            exterior: close_ring(exterior),
            interiors: interiors.into_iter().map(close_ring).collect(),
        }
    }

    /// Axis-aligned rectangle, counter-clockwise in a y-up frame.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self::new(vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]], Vec::new())
    }

    pub fn rings(&self) -> impl Iterator<Item = &[Point]> {
        std::iter::once(self.exterior.as_slice()).chain(self.interiors.iter().map(Vec::as_slice))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MultiPolygon(pub Vec<Polygon>);

impl From<Polygon> for MultiPolygon {
    fn from(p: Polygon) -> Self {
        MultiPolygon(vec![p])
    }
}

impl MultiPolygon {
    pub fn polygons(&self) -> &[Polygon] {
        &self.0
    }

    pub fn rings(&self) -> impl Iterator<Item = &[Point]> {
        self.0.iter().flat_map(Polygon::rings)
    }

    /// Every ring edge as a `(from, to)` pair.
    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        self.rings().flat_map(|ring| ring.windows(2).map(|w| (w[0], w[1])))
    }

    pub fn first_vertex(&self) -> Option<Point> {
        self.rings().find_map(|r| r.first().copied())
    }

    pub fn map_coords(&self, f: impl Fn(Point) -> Point + Copy) -> MultiPolygon {
        MultiPolygon(
            self.0
                .iter()
                .map(|p| Polygon {
                    exterior: p.exterior.iter().map(|&c| f(c)).collect(),
                    interiors: p
                        .interiors
                        .iter()
                        .map(|r| r.iter().map(|&c| f(c)).collect())
                        .collect(),
                })
                .collect(),
        )
    }

    pub fn bbox(&self) -> Option<(Point, Point)> {
        let mut it = self.rings().flatten();
        let first = *it.next()?;
        Some(it.fold((first, first), |(lo, hi), p| {
            ([lo[0].min(p[0]), lo[1].min(p[1])], [hi[0].max(p[0]), hi[1].max(p[1])])
        }))
    }

    /// Area with exteriors counted positive and holes negative.
    pub fn area(&self) -> f64 {
        self.0
            .iter()
            .map(|p| {
                ring_signed_area(&p.exterior).abs()
                    - p.interiors.iter().map(|r| ring_signed_area(r).abs()).sum::<f64>()
            })
            .sum()
    }

    /// Area centroid from the signed-area formula; `None` for zero area.
    pub fn centroid(&self) -> Option<Point> {
        let (mut a, mut cx, mut cy) = (0.0, 0.0, 0.0);
        for p in &self.0 {
            for (i, ring) in p.rings().enumerate() {
                let sa = ring_signed_area(ring);
                if sa == 0.0 {
                    continue;
                }
                // Exteriors count positive and holes negative, whatever their winding.
                let sign = if i == 0 { 1.0 } else { -1.0 };
                let (rx, ry) = ring_moment(ring);
                a += sign * sa.abs();
                cx += sign * sa.signum() * rx;
                cy += sign * sa.signum() * ry;
            }
        }
        let (lo, hi) = self.bbox()?;
        let scale = (hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2);
        if !a.is_finite() || a.abs() <= 1e-12 * scale {
            return None;
        }
        Some([cx / a, cy / a])
    }

    /// Even-odd containment over all rings.
    pub fn contains(&self, pt: Point) -> bool {
        self.rings().fold(false, |inside, ring| inside ^ ring_crossings_odd(ring, pt))
    }
}

/// Appends the first vertex if the ring is open.
pub fn close_ring(mut ring: Vec<Point>) -> Vec<Point> {
    if let (Some(&first), Some(&last)) = (ring.first(), ring.last()) {
        if first != last {
            ring.push(first);
        }
    }
    ring
}

/// Shoelace area; positive for counter-clockwise rings in a y-up frame.
pub fn ring_signed_area(ring: &[Point]) -> f64 {
    ring.windows(2)
        .map(|w| w[0][0] * w[1][1] - w[1][0] * w[0][1])
        .sum::<f64>()
        / 2.0
}

/// First moments Σ(xi + xi+1)(xi yi+1 − xi+1 yi)/6 and the y counterpart.
fn ring_moment(ring: &[Point]) -> (f64, f64) {
    ring.windows(2).fold((0.0, 0.0), |(mx, my), w| {
        let cross = w[0][0] * w[1][1] - w[1][0] * w[0][1];
        (mx + (w[0][0] + w[1][0]) * cross / 6.0, my + (w[0][1] + w[1][1]) * cross / 6.0)
    })
}

fn ring_crossings_odd(ring: &[Point], pt: Point) -> bool {
    let mut odd = false;
    for w in ring.windows(2) {
        let (a, b) = (w[0], w[1]);
        if (a[1] <= pt[1]) != (b[1] <= pt[1]) {
            let x = a[0] + (pt[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if x > pt[0] {
                odd = !odd;
            }
        }
    }
    odd
}

/// Clips a convex-or-not ring against a half-plane `a*x + b*y <= c`
/// (Sutherland-Hodgman step).
pub fn clip_ring_halfplane(ring: &[Point], a: f64, b: f64, c: f64) -> Vec<Point> {
    let inside = |p: Point| a * p[0] + b * p[1] <= c;
    let mut out = Vec::new();
    for w in ring.windows(2) {
        let (p, q) = (w[0], w[1]);
        let (pi, qi) = (inside(p), inside(q));
        if pi {
            out.push(p);
        }
        if pi != qi {
            let dp = a * p[0] + b * p[1] - c;
            let dq = a * q[0] + b * q[1] - c;
            let t = dp / (dp - dq);
            out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
    }
    close_ring(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_area_and_centroid() {
        let mp = MultiPolygon::from(Polygon::rect(0.0, 0.0, 2.0, 2.0));
        assert_eq!(mp.area(), 4.0);
        assert_eq!(mp.centroid(), Some([1.0, 1.0]));
    }

    #[test]
    fn hole_shifts_centroid_regardless_of_orientation() {
        // Hole ring given counter-clockwise (same as exterior) on purpose.
        let p = Polygon::new(
            vec![[0.0, 0.0], [4.0, 0.0], [4.0, 2.0], [0.0, 2.0]],
            vec![vec![[2.0, 0.0], [4.0, 0.0], [4.0, 2.0], [2.0, 2.0]]],
        );
        let mp = MultiPolygon::from(p);
        assert!((mp.area() - 4.0).abs() < 1e-12);
        let c = mp.centroid().unwrap();
        assert!((c[0] - 1.0).abs() < 1e-12 && (c[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn even_odd_respects_holes() {
        let p = Polygon::new(
            vec![[0.0, 0.0], [3.0, 0.0], [3.0, 3.0], [0.0, 3.0]],
            vec![vec![[1.0, 1.0], [2.0, 1.0], [2.0, 2.0], [1.0, 2.0]]],
        );
        let mp = MultiPolygon::from(p);
        assert!(mp.contains([0.5, 0.5]));
        assert!(!mp.contains([1.5, 1.5]));
        assert!(!mp.contains([3.5, 1.5]));
    }

    #[test]
    fn degenerate_has_no_centroid() {
        let mp = MultiPolygon::from(Polygon::new(vec![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]], vec![]));
        assert_eq!(mp.centroid(), None);
        assert_eq!(mp.first_vertex(), Some([0.0, 0.0]));
    }

    #[test]
    fn clip_keeps_left_half() {
        let ring = close_ring(vec![[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]]);
        let left = clip_ring_halfplane(&ring, 1.0, 0.0, 1.0);
        assert!((ring_signed_area(&left) - 2.0).abs() < 1e-12);
    }
}
