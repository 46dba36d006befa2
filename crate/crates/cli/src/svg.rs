//! Plain SVG charts. Fixed 640×480 viewport, coordinates with two decimals,
//! no timestamps or ids, so identical data gives identical bytes.

use std::fmt::Write;

use settle_core::geio::fmt_g6;

pub const WIDTH: f64 = 640.0;
pub const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 48.0;
const BOTTOM: f64 = 64.0;

/// θ colour ramp end points: θ = 0 and θ = 1, linear in RGB between.
pub const RAMP_LOW: [u8; 3] = [0xf7, 0xfb, 0xff];
pub const RAMP_HIGH: [u8; 3] = [0x08, 0x30, 0x6b];
pub const MISSING_FILL: &str = "#cccccc";

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn f2(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn open(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#,
        w = WIDTH,
        h = HEIGHT
    );
    let _ = writeln!(out, r##"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>"##);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="28" text-anchor="middle" font-size="15">{}</text>"#,
        f2(WIDTH / 2.0),
        escape(title)
    );
}

fn close(out: &mut String) {
    out.push_str("</svg>\n");
}

/// θ in [0, 1] to a hex colour; out-of-range values are clamped.
pub fn ramp(theta: f64) -> String {
    let t = theta.clamp(0.0, 1.0);
    let c: Vec<u8> = (0..3)
        .map(|i| (RAMP_LOW[i] as f64 + t * (RAMP_HIGH[i] as f64 - RAMP_LOW[i] as f64)).round() as u8)
        .collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Linear map from data to pixels.
#[derive(Clone, Copy, Debug)]
struct Linear {
    d0: f64,
    d1: f64,
    p0: f64,
    p1: f64,
}

impl Linear {
    fn at(&self, v: f64) -> f64 {
        self.p0 + (v - self.d0) / (self.d1 - self.d0) * (self.p1 - self.p0)
    }
}

/// Scatter of one value per point on both axes, sharing a range so the
/// identity line is the diagonal.
pub fn scatter(title: &str, x_label: &str, y_label: &str, points: &[(String, f64, f64)]) -> String {
    let max = points
        .iter()
        .flat_map(|p| [p.1, p.2])
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max);
    let top = if max > 0.0 { max * 1.05 } else { 1.0 };
    let x = Linear { d0: 0.0, d1: top, p0: LEFT, p1: WIDTH - RIGHT };
    let y = Linear { d0: 0.0, d1: top, p0: HEIGHT - BOTTOM, p1: TOP };
    let mut out = String::new();
    open(&mut out, title);
    let (xl, xr, yb, yt) = (x.at(0.0), x.at(top), y.at(0.0), y.at(top));
    let _ = writeln!(
        out,
        r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#000000"/>"##,
        f2(xl),
        f2(yt),
        f2(xr - xl),
        f2(yb - yt)
    );
    for i in 0..=4 {
        let v = top * i as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            f2(x.at(v)),
            f2(yb + 18.0),
            fmt_g6(v)
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            f2(xl - 6.0),
            f2(y.at(v) + 4.0),
            fmt_g6(v)
        );
    }
    let _ = writeln!(
        out,
        r##"<line class="identity" x1="{}" y1="{}" x2="{}" y2="{}" stroke="#888888" stroke-dasharray="6 4"/>"##,
        f2(xl),
        f2(yb),
        f2(xr),
        f2(yt)
    );
    for (label, px, py) in points {
        if !(px.is_finite() && py.is_finite()) {
            continue;
        }
        let _ = writeln!(
            out,
            r##"<circle cx="{}" cy="{}" r="4" fill="#08306b"><title>{}</title></circle>"##,
            f2(x.at(*px)),
            f2(y.at(*py)),
            escape(label)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        f2((xl + xr) / 2.0),
        f2(HEIGHT - 18.0),
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        f2((yb + yt) / 2.0),
        f2((yb + yt) / 2.0),
        escape(y_label)
    );
    close(&mut out);
    out
}

pub struct ChoroRegion {
    pub label: String,
    /// Rings in (lon, lat); holes filled even-odd.
    pub rings: Vec<Vec<[f64; 2]>>,
    pub theta: Option<f64>,
}

/// Equirectangular choropleth, one `<path>` per region.
pub fn choropleth(title: &str, regions: &[ChoroRegion]) -> String {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in regions.iter().flat_map(|r| r.rings.iter().flatten()) {
        lo = [lo[0].min(p[0]), lo[1].min(p[1])];
        hi = [hi[0].max(p[0]), hi[1].max(p[1])];
    }
    if !lo[0].is_finite() {
        lo = [0.0, 0.0];
        hi = [1.0, 1.0];
    }
    // Legend strip on the right.
    let map_w = WIDTH - LEFT - RIGHT - 100.0;
    let map_h = HEIGHT - TOP - BOTTOM;
    let span = [(hi[0] - lo[0]).max(1e-12), (hi[1] - lo[1]).max(1e-12)];
    let scale = (map_w / span[0]).min(map_h / span[1]);
    let ox = LEFT + (map_w - span[0] * scale) / 2.0;
    let oy = TOP + (map_h - span[1] * scale) / 2.0;
    let project = |p: &[f64; 2]| (ox + (p[0] - lo[0]) * scale, oy + (hi[1] - p[1]) * scale);

    let mut out = String::new();
    open(&mut out, title);
    for r in regions {
        let mut d = String::new();
        for ring in &r.rings {
            for (i, p) in ring.iter().enumerate() {
                let (x, y) = project(p);
                let _ = write!(d, "{}{} {} ", if i == 0 { "M" } else { "L" }, f2(x), f2(y));
            }
            d.push_str("Z ");
        }
        let fill = r.theta.map_or_else(|| MISSING_FILL.to_string(), ramp);
        let _ = writeln!(
            out,
            r##"<path d="{}" fill="{fill}" fill-rule="evenodd" stroke="#333333" stroke-width="0.5"><title>{}</title></path>"##,
            d.trim_end(),
            escape(&format!(
                "{}: {}",
                r.label,
                r.theta.map_or_else(|| "no data".to_string(), fmt_g6)
            ))
        );
    }
    let lx = WIDTH - RIGHT - 80.0;
    let _ = writeln!(out, r#"<text x="{}" y="{}">θ</text>"#, f2(lx), f2(TOP + 10.0));
    for i in 0..=4 {
        let t = 1.0 - i as f64 / 4.0;
        let y = TOP + 20.0 + i as f64 * 24.0;
        let _ = writeln!(
            out,
            r##"<rect x="{}" y="{}" width="18" height="18" fill="{}" stroke="#333333" stroke-width="0.5"/>"##,
            f2(lx),
            f2(y),
            ramp(t)
        );
        let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, f2(lx + 24.0), f2(y + 13.0), fmt_g6(t));
    }
    let y = TOP + 20.0 + 5.0 * 24.0 + 8.0;
    let _ = writeln!(
        out,
        r##"<rect x="{}" y="{}" width="18" height="18" fill="{MISSING_FILL}" stroke="#333333" stroke-width="0.5"/>"##,
        f2(lx),
        f2(y)
    );
    let _ = writeln!(out, r#"<text x="{}" y="{}">no data</text>"#, f2(lx + 24.0), f2(y + 13.0));
    close(&mut out);
    out
}

#[derive(Clone, Debug)]
pub struct OddsRow {
    pub feature: String,
    pub odds_ratio: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Log-scaled horizontal axis of the odds-ratio chart.
#[derive(Clone, Copy, Debug)]
pub struct LogAxis {
    lo: f64,
    hi: f64,
}

impl LogAxis {
    /// Covers every finite value and 1, padded by a tenth of the log span.
    pub fn for_rows<'a>(rows: impl IntoIterator<Item = &'a OddsRow>) -> Self {
        let (mut lo, mut hi) = (1.0f64, 1.0f64);
        for r in rows {
            for v in [r.odds_ratio, r.lo, r.hi] {
                if v.is_finite() && v > 0.0 {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
        }
        let (a, b) = (lo.ln(), hi.ln());
        let pad = ((b - a) * 0.1).max(0.05);
        Self { lo: a - pad, hi: b + pad }
    }

    pub fn x(&self, v: f64) -> f64 {
        LEFT + 100.0 + (v.ln() - self.lo) / (self.hi - self.lo) * (WIDTH - RIGHT - LEFT - 100.0)
    }
}

/// Bars from OR = 1 to each point estimate with CI whiskers, log scale.
pub fn odds_ratio_chart(title: &str, rows: &[OddsRow]) -> String {
    let rows: Vec<&OddsRow> = rows
        .iter()
        .filter(|r| [r.odds_ratio, r.lo, r.hi].iter().all(|v| v.is_finite() && *v > 0.0))
        .collect();
    let axis = LogAxis::for_rows(rows.iter().copied());
    let band = (HEIGHT - TOP - BOTTOM) / rows.len().max(1) as f64;
    let mut out = String::new();
    open(&mut out, title);
    let bottom = HEIGHT - BOTTOM;
    for (i, r) in rows.iter().enumerate() {
        let yc = TOP + band * (i as f64 + 0.5);
        let (x1, xo) = (axis.x(1.0), axis.x(r.odds_ratio));
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            f2(LEFT + 92.0),
            f2(yc + 4.0),
            escape(&r.feature)
        );
        let _ = writeln!(
            out,
            r##"<rect class="bar" x="{}" y="{}" width="{}" height="{}" fill="#9ecae1"/>"##,
            f2(x1.min(xo)),
            f2(yc - band * 0.3),
            f2((xo - x1).abs()),
            f2(band * 0.6)
        );
        let _ = writeln!(
            out,
            r##"<line class="whisker" x1="{}" y1="{}" x2="{}" y2="{}" stroke="#000000"/>"##,
            f2(axis.x(r.lo)),
            f2(yc),
            f2(axis.x(r.hi)),
            f2(yc)
        );
        for v in [r.lo, r.hi] {
            let _ = writeln!(
                out,
                r##"<line x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="#000000"/>"##,
                f2(yc - 4.0),
                f2(yc + 4.0),
                x = f2(axis.x(v))
            );
        }
        let _ = writeln!(
            out,
            r##"<circle cx="{}" cy="{}" r="3.5" fill="#08306b"><title>{}</title></circle>"##,
            f2(xo),
            f2(yc),
            escape(&format!("{} [{}; {}]", fmt_g6(r.odds_ratio), fmt_g6(r.lo), fmt_g6(r.hi)))
        );
    }
    let x1 = axis.x(1.0);
    let _ = writeln!(
        out,
        r##"<line class="reference" x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="#cb181d" stroke-dasharray="4 3"/>"##,
        f2(TOP),
        f2(bottom),
        x = f2(x1)
    );
    let _ = writeln!(
        out,
        r##"<line x1="{}" y1="{b}" x2="{}" y2="{b}" stroke="#000000"/>"##,
        f2(axis.x(axis.lo.exp())),
        f2(axis.x(axis.hi.exp())),
        b = f2(bottom)
    );
    // Ticks at powers of two inside the range.
    let (k0, k1) = ((axis.lo / 2f64.ln()).ceil() as i32, (axis.hi / 2f64.ln()).floor() as i32);
    for k in k0..=k1 {
        let v = 2f64.powi(k);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            f2(axis.x(v)),
            f2(bottom + 18.0),
            fmt_g6(v)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">odds ratio (log scale)</text>"#,
        f2((axis.x(axis.lo.exp()) + axis.x(axis.hi.exp())) / 2.0),
        f2(HEIGHT - 18.0)
    );
    close(&mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attr<'a>(tag: &'a str, name: &str) -> &'a str {
        let key = format!(" {name}=\"");
        let start = tag.find(&key).unwrap() + key.len();
        &tag[start..start + tag[start..].find('"').unwrap()]
    }

    #[test]
    fn ramp_end_points() {
        assert_eq!(ramp(0.0), "#f7fbff");
        assert_eq!(ramp(1.0), "#08306b");
        assert_eq!(ramp(7.0), "#08306b");
    }

    #[test]
    fn single_region_is_one_path() {
        let r = ChoroRegion {
            label: "R1".into(),
            rings: vec![vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]],
            theta: Some(0.5),
        };
        let svg = choropleth("t", &[r]);
        assert_eq!(svg.matches("<path").count(), 1);
        assert!(svg.contains(&format!("fill=\"{}\"", ramp(0.5))));
    }

    #[test]
    fn whiskers_sit_at_the_interval_ends() {
        let rows = vec![
            OddsRow { feature: "nightlight".into(), odds_ratio: 1.57, lo: 1.49, hi: 1.62 },
            OddsRow { feature: "rwi".into(), odds_ratio: 0.8, lo: 0.7, hi: 0.9 },
        ];
        let svg = odds_ratio_chart("odds", &rows);
        let axis = LogAxis::for_rows(&rows);
        let whisker = svg.lines().find(|l| l.contains("class=\"whisker\"")).unwrap();
        assert_eq!(attr(whisker, "x1"), f2(axis.x(1.49)));
        assert_eq!(attr(whisker, "x2"), f2(axis.x(1.62)));
        assert!(axis.x(1.49) < axis.x(1.57) && axis.x(1.57) < axis.x(1.62));
        let reference = svg.lines().find(|l| l.contains("class=\"reference\"")).unwrap();
        assert_eq!(attr(reference, "x1"), f2(axis.x(1.0)));
    }

    #[test]
    fn identical_input_identical_bytes() {
        let pts = vec![("A".to_string(), 3.0, 4.0), ("B".to_string(), 10.0, 2.5)];
        assert_eq!(scatter("s", "x", "y", &pts), scatter("s", "x", "y", &pts));
        let svg = scatter("s", "x", "y", &pts);
        assert_eq!(svg.matches("class=\"identity\"").count(), 1);
        assert_eq!(svg.matches("<circle").count(), 2);
    }
}
