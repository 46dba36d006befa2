//! Vector inputs: building footprints (CSV + WKT), settlement extents
//! (GeoJSON), admin regions (GeoJSON) and HDI tables (CSV).

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use geojson::{Feature, FeatureReader, JsonObject, Value};
use log::warn;
use serde_json::json;

use crate::error::{Error, Result};
use crate::geom::{MultiPolygon, Point, Polygon};

/// One building outline with its detection confidence.
#[derive(Clone, Debug, PartialEq)]
pub struct FootprintRecord {
    pub polygon: MultiPolygon,
    pub confidence: f64,
    pub id: String,
}

/// One settlement-extent polygon with its false-positive probability.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtentRecord {
    pub polygon: MultiPolygon,
    pub false_positive_probability: f64,
}

/// First-level administrative unit.
#[derive(Clone, Debug, PartialEq)]
pub struct AdminRegion {
    pub country_code: String,
    pub region_id: String,
    pub name: String,
    pub polygon: MultiPolygon,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct HdiTable {
    rows: Vec<(String, f64)>,
}

impl HdiTable {
    pub fn new(rows: Vec<(String, f64)>) -> Result<Self> {
        for (id, hdi) in &rows {
            if id.is_empty() {
                return Err(Error::invalid("HDI row with empty region_id"));
            }
            if !(0.0..=1.0).contains(hdi) {
                return Err(Error::invalid(format!("HDI {hdi} for {id} outside [0, 1]")));
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[(String, f64)] {
        &self.rows
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Footprints

#[derive(Clone, Debug)]
pub struct FootprintCsvOptions {
    pub geometry_column: String,
    pub confidence_column: String,
    /// Identifier column; rows are numbered when absent from the header.
    pub id_column: String,
}

impl Default for FootprintCsvOptions {
    fn default() -> Self {
        Self {
            geometry_column: "geometry".into(),
            confidence_column: "confidence".into(),
            id_column: "full_plus_code".into(),
        }
    }
}

/// Streaming reader over a footprint CSV. Memory use is bounded by the
/// largest row; rows with unparseable geometry or confidence are skipped
/// and counted.
pub struct FootprintReader<R: Read> {
    reader: csv::Reader<R>,
    record: csv::StringRecord,
    geometry_idx: usize,
    confidence_idx: usize,
    id_idx: Option<usize>,
    min_confidence: f64,
    row: u64,
    skipped: u64,
    filtered: u64,
}

/// Opens `path` with the default column names.
pub fn read_footprints_csv(path: impl AsRef<Path>, min_confidence: f64) -> Result<FootprintReader<File>> {
    read_footprints_csv_with(path, min_confidence, &FootprintCsvOptions::default())
}

pub fn read_footprints_csv_with(
    path: impl AsRef<Path>,
    min_confidence: f64,
    options: &FootprintCsvOptions,
) -> Result<FootprintReader<File>> {
    FootprintReader::new(open(path.as_ref())?, min_confidence, options)
}

impl<R: Read> FootprintReader<R> {
    pub fn new(input: R, min_confidence: f64, options: &FootprintCsvOptions) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let headers = reader.headers()?.clone();
        let find = |name: &str| headers.iter().position(|h| h.trim() == name);
        let geometry_idx = find(&options.geometry_column).ok_or_else(|| {
            Error::format(&options.geometry_column, "geometry column missing from CSV header")
        })?;
        let confidence_idx = find(&options.confidence_column).ok_or_else(|| {
            Error::format(&options.confidence_column, "confidence column missing from CSV header")
        })?;
        Ok(Self {
            reader,
            record: csv::StringRecord::new(),
            geometry_idx,
            confidence_idx,
            id_idx: find(&options.id_column),
            min_confidence,
            row: 0,
            skipped: 0,
            filtered: 0,
        })
    }

    /// Rows dropped because geometry or confidence could not be parsed.
    pub fn skipped(&self) -> u64 {
        self.skipped
    }

    /// Rows dropped by the confidence filter.
    pub fn filtered(&self) -> u64 {
        self.filtered
    }

    fn parse_current(&self) -> std::result::Result<FootprintRecord, String> {
        let conf_text = self.record.get(self.confidence_idx).unwrap_or("");
        let confidence: f64 = conf_text
            .trim()
            .parse()
            .map_err(|_| format!("bad confidence {conf_text:?}"))?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(format!("confidence {confidence} outside [0, 1]"));
        }
        let wkt_text = self.record.get(self.geometry_idx).unwrap_or("");
        let polygon = parse_wkt_polygonal(wkt_text)?;
        let id = match self.id_idx.and_then(|i| self.record.get(i)) {
            Some(s) => s.to_string(),
            None => self.row.to_string(),
        };
        Ok(FootprintRecord {
            polygon,
            confidence,
            id,
        })
    }
}

impl<R: Read> Iterator for FootprintReader<R> {
    type Item = Result<FootprintRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            match self.reader.read_record(&mut self.record) {
                Ok(false) => return None,
                Ok(true) => {}
                Err(e) => return Some(Err(e.into())),
            }
            self.row += 1;
            match self.parse_current() {
                Ok(rec) if rec.confidence >= self.min_confidence => return Some(Ok(rec)),
                Ok(_) => self.filtered += 1,
                Err(msg) => {
                    warn!("footprint row {}: {msg}; skipped", self.row);
                    self.skipped += 1;
                }
            }
        }
    }
}

/// Parses a WKT POLYGON or MULTIPOLYGON.
pub fn parse_wkt_polygonal(text: &str) -> std::result::Result<MultiPolygon, String> {
    let geom: wkt::Wkt<f64> = text.trim().parse().map_err(|e| format!("bad WKT: {e}"))?;
    let ring = |ls: &wkt::types::LineString<f64>| -> Vec<Point> {
        ls.coords().iter().map(|c| [c.x, c.y]).collect()
    };
    let poly = |p: &wkt::types::Polygon<f64>| -> std::result::Result<Polygon, String> {
        let mut rings = p.rings().iter();
        let ext = rings.next().ok_or("empty polygon")?;
        Ok(Polygon::new(ring(ext), rings.map(ring).collect()))
    };
    let mp = match &geom {
        wkt::Wkt::Polygon(p) => MultiPolygon(vec![poly(p)?]),
        wkt::Wkt::MultiPolygon(mp) => {
            MultiPolygon(mp.polygons().iter().map(poly).collect::<std::result::Result<_, _>>()?)
        }
        _ => return Err("geometry is not polygonal".into()),
    };
    if mp.0.is_empty() || mp.rings().any(|r| r.len() < 2) {
        return Err("empty geometry".into());
    }
    Ok(mp)
}

fn wkt_ring(ring: &[Point], out: &mut String) {
    out.push('(');
    for (i, p) in ring.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&format!("{} {}", p[0], p[1]));
    }
    out.push(')');
}

fn wkt_polygon_body(p: &Polygon, out: &mut String) {
    out.push('(');
    for (i, r) in p.rings().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        wkt_ring(r, out);
    }
    out.push(')');
}

/// WKT text with shortest round-trip coordinates.
pub fn to_wkt(mp: &MultiPolygon) -> String {
    let mut s = String::new();
    if mp.0.len() == 1 {
        s.push_str("POLYGON ");
        wkt_polygon_body(&mp.0[0], &mut s);
    } else {
        s.push_str("MULTIPOLYGON (");
        for (i, p) in mp.0.iter().enumerate() {
            if i > 0 {
                s.push_str(", ");
            }
            wkt_polygon_body(p, &mut s);
        }
        s.push(')');
    }
    s
}

pub fn write_footprints_csv<'a>(
    path: impl AsRef<Path>,
    records: impl IntoIterator<Item = &'a FootprintRecord>,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["full_plus_code", "confidence", "geometry"])?;
    for r in records {
        w.write_record([r.id.as_str(), &r.confidence.to_string(), &to_wkt(&r.polygon)])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// GeoJSON

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MissingProperty {
    #[default]
    Skip,
    Error,
}

#[derive(Clone, Debug)]
pub struct ExtentOptions {
    pub property: String,
    pub on_missing: MissingProperty,
}

impl Default for ExtentOptions {
    fn default() -> Self {
        Self {
            property: "prob_false_positive".into(),
            on_missing: MissingProperty::Skip,
        }
    }
}

fn geojson_ring(coords: &[Vec<f64>]) -> std::result::Result<Vec<Point>, String> {
    coords
        .iter()
        .map(|c| match c.as_slice() {
            [x, y, ..] => Ok([*x, *y]),
            _ => Err("position with fewer than two coordinates".to_string()),
        })
        .collect()
}

fn geojson_polygon(rings: &[Vec<Vec<f64>>]) -> std::result::Result<Polygon, String> {
    let (ext, holes) = rings.split_first().ok_or("polygon without rings")?;
    Ok(Polygon::new(
        geojson_ring(ext)?,
        holes.iter().map(|h| geojson_ring(h)).collect::<std::result::Result<_, _>>()?,
    ))
}

/// Polygon or MultiPolygon geometry of a feature.
pub fn feature_polygonal(feature: &Feature) -> std::result::Result<MultiPolygon, String> {
    match feature.geometry.as_ref().map(|g| &g.value) {
        Some(Value::Polygon(rings)) => Ok(MultiPolygon(vec![geojson_polygon(rings)?])),
        Some(Value::MultiPolygon(polys)) => Ok(MultiPolygon(
            polys
                .iter()
                .map(|p| geojson_polygon(p))
                .collect::<std::result::Result<_, _>>()?,
        )),
        Some(_) => Err("geometry is not Polygon or MultiPolygon".into()),
        None => Err("feature without geometry".into()),
    }
}

fn number_property(feature: &Feature, name: &str) -> Option<f64> {
    feature.property(name).and_then(|v| v.as_f64())
}

fn string_property(feature: &Feature, name: &str) -> Option<String> {
    feature.property(name).and_then(|v| match v {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        _ => None,
    })
}

/// Streaming reader over an extent FeatureCollection.
pub struct ExtentReader {
    features: Box<dyn Iterator<Item = geojson::Result<Feature>>>,
    options: ExtentOptions,
    max_false_positive: f64,
    index: u64,
    skipped: u64,
    filtered: u64,
}

pub fn read_extents_geojson(path: impl AsRef<Path>, max_false_positive: f64) -> Result<ExtentReader> {
    read_extents_geojson_with(path, max_false_positive, &ExtentOptions::default())
}

pub fn read_extents_geojson_with(
    path: impl AsRef<Path>,
    max_false_positive: f64,
    options: &ExtentOptions,
) -> Result<ExtentReader> {
    Ok(ExtentReader::new(
        BufReader::new(open(path.as_ref())?),
        max_false_positive,
        options,
    ))
}

impl ExtentReader {
    pub fn new<R: Read + 'static>(input: R, max_false_positive: f64, options: &ExtentOptions) -> Self {
        Self {
            features: Box::new(FeatureReader::from_reader(input).features()),
            options: options.clone(),
            max_false_positive,
            index: 0,
            skipped: 0,
            filtered: 0,
        }
    }

    pub fn skipped(&self) -> u64 {
        self.skipped
    }

    pub fn filtered(&self) -> u64 {
        self.filtered
    }
}

impl Iterator for ExtentReader {
    type Item = Result<ExtentRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let feature = match self.features.next()? {
                Ok(f) => f,
                Err(e) => return Some(Err(Error::format("geojson", e.to_string()))),
            };
            self.index += 1;
            let prob = match number_property(&feature, &self.options.property) {
                Some(p) => p,
                None if self.options.on_missing == MissingProperty::Error => {
                    return Some(Err(Error::format(
                        &self.options.property,
                        format!("feature {} lacks the property", self.index),
                    )))
                }
                None => {
                    warn!("extent feature {} lacks {:?}; skipped", self.index, self.options.property);
                    self.skipped += 1;
                    continue;
                }
            };
            if !(0.0..=1.0).contains(&prob) {
                warn!("extent feature {}: probability {prob} outside [0, 1]; skipped", self.index);
                self.skipped += 1;
                continue;
            }
            if prob >= self.max_false_positive {
                self.filtered += 1;
                continue;
            }
            match feature_polygonal(&feature) {
                Ok(polygon) => {
                    return Some(Ok(ExtentRecord {
                        polygon,
                        false_positive_probability: prob,
                    }))
                }
                Err(msg) => {
                    warn!("extent feature {}: {msg}; skipped", self.index);
                    self.skipped += 1;
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct RegionOptions {
    pub country_property: String,
    pub id_property: String,
    pub name_property: String,
}

impl Default for RegionOptions {
    fn default() -> Self {
        Self {
            country_property: "country_code".into(),
            id_property: "region_id".into(),
            name_property: "name".into(),
        }
    }
}

pub fn read_regions_geojson(path: impl AsRef<Path>) -> Result<Vec<AdminRegion>> {
    read_regions_geojson_with(path, &RegionOptions::default())
}

pub fn read_regions_geojson_with(path: impl AsRef<Path>, options: &RegionOptions) -> Result<Vec<AdminRegion>> {
    let path = path.as_ref();
    let reader = FeatureReader::from_reader(BufReader::new(open(path)?));
    let mut seen = HashSet::new();
    let mut regions = Vec::new();
    for (i, feature) in reader.features().enumerate() {
        let feature = feature.map_err(|e| Error::format("geojson", e.to_string()))?;
        let get = |name: &str| {
            string_property(&feature, name)
                .ok_or_else(|| Error::format(name, format!("region feature {i} lacks the property")))
        };
        let country_code = get(&options.country_property)?;
        let region_id = get(&options.id_property)?;
        let name = string_property(&feature, &options.name_property).unwrap_or_else(|| region_id.clone());
        let polygon = feature_polygonal(&feature).map_err(|m| Error::format("geometry", m))?;
        if !seen.insert((country_code.clone(), region_id.clone())) {
            return Err(Error::invalid(format!(
                "duplicate region_id {region_id} for {country_code} in {}",
                path.display()
            )));
        }
        regions.push(AdminRegion {
            country_code,
            region_id,
            name,
            polygon,
        });
    }
    Ok(regions)
}

fn geojson_coords(mp: &MultiPolygon) -> serde_json::Value {
    let ring = |r: &[Point]| r.iter().map(|p| json!([p[0], p[1]])).collect::<Vec<_>>();
    let poly = |p: &Polygon| p.rings().map(ring).collect::<Vec<_>>();
    if mp.0.len() == 1 {
        json!({"type": "Polygon", "coordinates": poly(&mp.0[0])})
    } else {
        json!({"type": "MultiPolygon", "coordinates": mp.0.iter().map(poly).collect::<Vec<_>>()})
    }
}

fn write_feature_collection(
    path: &Path,
    features: impl Iterator<Item = (serde_json::Value, JsonObject)>,
) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    w.write_all(b"{\"type\":\"FeatureCollection\",\"features\":[\n").map_err(io)?;
    for (i, (geometry, props)) in features.enumerate() {
        if i > 0 {
            w.write_all(b",\n").map_err(io)?;
        }
        let f = json!({"type": "Feature", "properties": props, "geometry": geometry});
        serde_json::to_writer(&mut w, &f)?;
    }
    w.write_all(b"\n]}\n").map_err(io)?;
    w.flush().map_err(io)
}

pub fn write_extents_geojson<'a>(
    path: impl AsRef<Path>,
    records: impl IntoIterator<Item = &'a ExtentRecord>,
    property: &str,
) -> Result<()> {
    write_feature_collection(
        path.as_ref(),
        records.into_iter().map(|r| {
            let mut props = JsonObject::new();
            props.insert(property.to_string(), json!(r.false_positive_probability));
            (geojson_coords(&r.polygon), props)
        }),
    )
}

pub fn write_regions_geojson<'a>(
    path: impl AsRef<Path>,
    regions: impl IntoIterator<Item = &'a AdminRegion>,
) -> Result<()> {
    write_feature_collection(
        path.as_ref(),
        regions.into_iter().map(|r| {
            let mut props = JsonObject::new();
            props.insert("country_code".into(), json!(r.country_code));
            props.insert("region_id".into(), json!(r.region_id));
            props.insert("name".into(), json!(r.name));
            (geojson_coords(&r.polygon), props)
        }),
    )
}

pub fn read_hdi_csv(path: impl AsRef<Path>) -> Result<HdiTable> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_reader(open(path)?);
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::format(name, format!("column missing from {}", path.display())))
    };
    let (id_idx, hdi_idx) = (find("region_id")?, find("hdi")?);
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let id = rec.get(id_idx).unwrap_or("").trim().to_string();
        let text = rec.get(hdi_idx).unwrap_or("").trim();
        let hdi = text
            .parse()
            .map_err(|_| Error::format("hdi", format!("bad value {text:?} for {id}")))?;
        rows.push((id, hdi));
    }
    HdiTable::new(rows)
}

pub fn write_hdi_csv(path: impl AsRef<Path>, table: &HdiTable) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["region_id", "hdi"])?;
    for (id, hdi) in table.rows() {
        w.write_record([id.as_str(), &hdi.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQUARE: &str = "POLYGON ((0 0, 1 0, 1 1, 0 1, 0 0))";

    fn footprints(rows: &[(&str, &str)], min: f64) -> (Vec<FootprintRecord>, u64) {
        let mut csv = String::from("confidence,geometry\n");
        for (c, g) in rows {
            csv.push_str(&format!("{c},\"{g}\"\n"));
        }
        let mut reader = FootprintReader::new(std::io::Cursor::new(csv.into_bytes()), min, &Default::default()).unwrap();
        let recs: Vec<_> = reader.by_ref().map(|r| r.unwrap()).collect();
        (recs, reader.skipped())
    }

    #[test]
    fn confidence_filter_is_inclusive() {
        let (recs, _) = footprints(&[("0.65", SQUARE), ("0.70", SQUARE), ("0.90", SQUARE)], 0.7);
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].confidence, 0.7);
        let (all, _) = footprints(&[("0.65", SQUARE), ("0.70", SQUARE), ("0.90", SQUARE)], 0.0);
        assert_eq!(all.len(), 3);
    }

    #[test]
    fn malformed_wkt_is_skipped_and_counted() {
        let mut rows = vec![("0.9", SQUARE); 10];
        rows[4] = ("0.9", "POLYGON ((0 0, 1 0, 1");
        let (recs, skipped) = footprints(&rows, 0.7);
        assert_eq!(recs.len(), 9);
        assert_eq!(skipped, 1);
    }

    #[test]
    fn missing_column_is_format_error() {
        let csv = b"conf,geometry\n0.9,\"POLYGON ((0 0, 1 0, 1 1, 0 0))\"\n";
        let err = FootprintReader::new(&csv[..], 0.7, &Default::default()).err().unwrap();
        assert!(matches!(err, Error::Format { ref tag, .. } if tag == "confidence"));
    }

    #[test]
    fn wkt_round_trip() {
        let mp = parse_wkt_polygonal("MULTIPOLYGON (((0 0, 2 0, 2 2, 0 0)), ((5 5, 6 5, 6 6, 5 5), (5.1 5.1, 5.2 5.1, 5.2 5.2, 5.1 5.1)))").unwrap();
        assert_eq!(mp.0.len(), 2);
        assert_eq!(mp.0[1].interiors.len(), 1);
        assert_eq!(parse_wkt_polygonal(&to_wkt(&mp)).unwrap(), mp);
    }

    fn extent_collection(probs: &[Option<f64>]) -> String {
        let feats: Vec<String> = probs
            .iter()
            .map(|p| {
                let props = match p {
                    Some(v) => format!("{{\"prob_false_positive\": {v}}}"),
                    None => "{}".into(),
                };
                format!("{{\"type\":\"Feature\",\"properties\":{props},\"geometry\":{{\"type\":\"Polygon\",\"coordinates\":[[[0,0],[1,0],[1,1],[0,0]]]}}}}")
            })
            .collect();
        format!("{{\"type\":\"FeatureCollection\",\"features\":[{}]}}", feats.join(","))
    }

    fn extents(text: String, max: f64, on_missing: MissingProperty) -> Vec<Result<ExtentRecord>> {
        let opts = ExtentOptions {
            on_missing,
            ..Default::default()
        };
        ExtentReader::new(std::io::Cursor::new(text.into_bytes()), max, &opts).collect()
    }

    #[test]
    fn false_positive_filter_is_strict() {
        let recs = extents(extent_collection(&[Some(0.1), Some(0.4), Some(0.5)]), 0.4, MissingProperty::Skip);
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].as_ref().unwrap().false_positive_probability, 0.1);
        let all = extents(extent_collection(&[Some(0.1), Some(0.4), Some(0.5)]), 1.0, MissingProperty::Skip);
        assert_eq!(all.len(), 3);
    }

    #[test]
    fn missing_property_policy() {
        let text = extent_collection(&[Some(0.1), None]);
        let skip = extents(text.clone(), 1.0, MissingProperty::Skip);
        assert_eq!(skip.len(), 1);
        let strict = extents(text, 1.0, MissingProperty::Error);
        assert!(strict[1].is_err());
    }

    #[test]
    fn multipolygon_feature_is_one_record() {
        let text = r#"{"type":"FeatureCollection","features":[{"type":"Feature","properties":{"prob_false_positive":0.2},
            "geometry":{"type":"MultiPolygon","coordinates":[[[[0,0],[1,0],[1,1],[0,0]]],[[[3,3],[4,3],[4,4],[3,3]]]]}}]}"#;
        let recs = extents(text.to_string(), 0.4, MissingProperty::Skip);
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].as_ref().unwrap().polygon.0.len(), 2);
    }

    #[test]
    fn hdi_validation() {
        assert!(HdiTable::new(vec![("A".into(), 1.2)]).is_err());
        assert!(HdiTable::new(vec![("".into(), 0.5)]).is_err());
        assert!(HdiTable::new(vec![("A".into(), 0.5)]).is_ok());
    }
}
